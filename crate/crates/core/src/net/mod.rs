//! Multi-resolution message-passing classifier with hand-written gradients.

mod model;
mod params;
mod train;

pub use model::{
    cross_entropy, encode, forward, forward_batch, global_mean_pool, loss_and_grad, message_layer,
    propagate_level, BatchResult, LevelState,
};
pub use params::{Checkpoint, Linear, MessageLayer, ModelConfig, ModelParams};
pub use train::{
    evaluate, metrics_csv, train, EpochMetrics, Evaluation, Optimizer, Split, TrainConfig,
    TrainOutcome, METRICS_HEADER,
};

#[cfg(test)]
mod tests {
    use nalgebra::{dmatrix, DMatrix, DVector};

    use super::*;
    use crate::graph::Graph;
    use crate::hierarchy::{build_hierarchy, AggMode, PartitionMatrix};

    fn config(f_v: usize, f_e: usize, o: usize) -> ModelConfig {
        ModelConfig {
            node_features: f_v,
            edge_features: f_e,
            hidden: o,
            classes: 2,
            layers_per_level: vec![1],
            linear_per_layer: 1,
            mlp_layers: 0,
        }
    }

    fn identity_layer(o: usize) -> MessageLayer {
        MessageLayer {
            maps: vec![Linear {
                weight: DMatrix::identity(o, o),
                bias: DVector::zeros(o),
            }],
        }
    }

    #[test]
    fn encode_cases() {
        let g = Graph::new(&[(0, 1)], dmatrix![1.0, 2.0; 3.0, 4.0], None, None).unwrap();
        let mut p = ModelParams::zeros(config(2, 0, 2)).unwrap();
        let s = encode(&g, &p).unwrap();
        assert_eq!(s.node_embeddings, DMatrix::zeros(2, 2));
        assert_eq!(s.edge_embeddings, DMatrix::zeros(1, 2));
        p.node_encoder.weight = DMatrix::identity(2, 2);
        assert_eq!(encode(&g, &p).unwrap().node_embeddings, *g.node_features());
        let wrong = ModelParams::zeros(config(3, 0, 2)).unwrap();
        assert!(encode(&g, &wrong).is_err());
    }

    #[test]
    fn message_layer_cases() {
        let g = Graph::new(
            &[(0, 1)],
            DMatrix::zeros(3, 1),
            Some(DMatrix::zeros(1, 1)),
            None,
        )
        .unwrap();
        let state = LevelState {
            level_index: 0,
            node_embeddings: dmatrix![1.0; 2.0; 5.0],
            edge_embeddings: DMatrix::zeros(1, 1),
        };
        let out = message_layer(&g, &state, &identity_layer(1)).unwrap();
        // Node 2 is isolated.
        assert_eq!(out.node_embeddings, dmatrix![3.0; 3.0; 5.0]);
        let zero = MessageLayer {
            maps: vec![Linear::zeros(1, 1)],
        };
        assert_eq!(
            message_layer(&g, &state, &zero).unwrap().node_embeddings,
            DMatrix::zeros(3, 1)
        );
    }

    #[test]
    fn propagate_cases() {
        let next = Graph::from_edges(1, &[]).unwrap();
        let p = ModelParams::zeros(config(1, 0, 1)).unwrap();
        let state = LevelState {
            level_index: 0,
            node_embeddings: dmatrix![2.0; 4.0; 9.0],
            edge_embeddings: DMatrix::zeros(0, 1),
        };
        let step = PartitionMatrix::from_rows(3, vec![vec![(0, 0.5), (1, 0.5)]]).unwrap();
        let out = propagate_level(&step, &state, &next, &p).unwrap();
        assert_eq!(out.node_embeddings, dmatrix![3.0]);
        assert_eq!(out.level_index, 1);
        let bad = Graph::from_edges(2, &[]).unwrap();
        assert!(propagate_level(&step, &state, &bad, &p).is_err());
    }

    #[test]
    fn pool_identical_rows() {
        let h = dmatrix![0.1, -3.7; 0.1, -3.7; 0.1, -3.7];
        assert_eq!(global_mean_pool(&h).as_slice(), &[0.1, -3.7]);
    }

    #[test]
    fn zero_params_give_final_bias() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let h = build_hierarchy(&g, &[f64::INFINITY], AggMode::Mean, 1).unwrap();
        let mut p = ModelParams::zeros(ModelConfig {
            mlp_layers: 2,
            ..config(1, 0, 4)
        })
        .unwrap();
        p.readout[1].bias = DVector::from_vec(vec![0.3, -0.2]);
        assert_eq!(forward(&h, &p).unwrap().as_slice(), &[0.3, -0.2]);

        let res = loss_and_grad(&[(&h, 0)], &p).unwrap();
        let z = (0.3f64).exp() + (-0.2f64).exp();
        assert!((res.loss - (z.ln() - 0.3)).abs() < 1e-12);
        assert!(loss_and_grad(&[(&h, 2)], &p).is_err());
    }

    #[test]
    fn uniform_logits_loss() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let h = build_hierarchy(&g, &[f64::INFINITY], AggMode::Mean, 1).unwrap();
        let p = ModelParams::zeros(config(1, 0, 2)).unwrap();
        let res = loss_and_grad(&[(&h, 0), (&h, 1)], &p).unwrap();
        assert!((res.loss - 2f64.ln()).abs() < 1e-15);
        // mean(softmax - onehot) = (0.5 - 1 + 0.5) / 2 = 0 per class.
        assert_eq!(res.grads.readout[0].bias.as_slice(), &[0.0, 0.0]);
        let res = loss_and_grad(&[(&h, 0)], &p).unwrap();
        assert_eq!(res.grads.readout[0].bias.as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn level_count_mismatch() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let h = build_hierarchy(&g, &[f64::INFINITY, 1.0], AggMode::Mean, 1).unwrap();
        let p = ModelParams::zeros(config(1, 0, 2)).unwrap();
        assert!(forward(&h, &p).is_err());
    }

    #[test]
    fn flat_round_trip_and_checkpoint() {
        let cfg = ModelConfig {
            layers_per_level: vec![2, 1],
            linear_per_layer: 2,
            mlp_layers: 2,
            ..config(3, 2, 4)
        };
        let p = ModelParams::init(cfg, 7).unwrap();
        let mut q = p.zeros_like();
        q.load_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        let json = serde_json::to_string(&Checkpoint::from(&p)).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_params().unwrap(), p);
        assert!(q.load_flat(&[0.0]).is_err());
    }

    #[test]
    fn split_fractions() {
        let s = Split::random(10, 0.6, 0.2, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (6, 2, 2));
        let mut all: Vec<_> = s
            .train
            .iter()
            .chain(&s.val)
            .chain(&s.test)
            .copied()
            .collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(Split::random(2, 0.5, 0.49, 0).is_err());
    }

    #[test]
    fn metrics_header() {
        let csv = metrics_csv(&[]);
        assert_eq!(
            csv,
            "epoch,train_loss,train_acc,val_loss,val_acc,wall_seconds\n"
        );
    }
}
