#![allow(dead_code)]

use kfh::net::{loss_and_grad, ModelConfig, ModelParams};
use kfh::rng::seeded;
use kfh::{build_hierarchy, AggMode, Graph, Hierarchy};
use nalgebra::DMatrix;
use rand::Rng;

/// Erdős–Rényi graph with uniform random features in [-1, 1].
pub fn random_graph(n: usize, p: f64, f_v: usize, f_e: usize, seed: u64) -> Graph {
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let x = DMatrix::from_fn(n, f_v, |_, _| rng.random_range(-1.0..1.0));
    let xe =
        (f_e > 0).then(|| DMatrix::from_fn(edges.len(), f_e, |_, _| rng.random_range(-1.0..1.0)));
    Graph::new(&edges, x, xe, None).unwrap()
}

/// Ring plus chords, so every graph is connected and has cycles.
pub fn ring_with_chords(n: usize, chords: usize, f_v: usize, f_e: usize, seed: u64) -> Graph {
    let mut rng = seeded(seed);
    let mut edges: Vec<(usize, usize)> = (0..n)
        .map(|i| (i.min((i + 1) % n), i.max((i + 1) % n)))
        .collect();
    while edges.len() < n + chords {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        let e = (a.min(b), a.max(b));
        if a != b && !edges.contains(&e) {
            edges.push(e);
        }
    }
    let x = DMatrix::from_fn(n, f_v, |_, _| rng.random_range(-1.0..1.0));
    let xe =
        (f_e > 0).then(|| DMatrix::from_fn(edges.len(), f_e, |_, _| rng.random_range(-1.0..1.0)));
    Graph::new(&edges, x, xe, None).unwrap()
}

fn affine(x: &DMatrix<f64>, w: &DMatrix<f64>, b: &nalgebra::DVector<f64>) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(x.nrows(), w.ncols());
    for i in 0..x.nrows() {
        for j in 0..w.ncols() {
            let mut s = b[j];
            for k in 0..x.ncols() {
                s += x[(i, k)] * w[(k, j)];
            }
            y[(i, j)] = s;
        }
    }
    y
}

/// Dense single-level network: `A` and the incidence matrix `S` built
/// explicitly, no batching, no tapes.
pub fn flat_reference_logits(g: &Graph, p: &ModelParams) -> Vec<f64> {
    let (n, m) = (g.n(), g.m());
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut s = DMatrix::<f64>::zeros(n, m);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        a[(i, j)] = 1.0;
        a[(j, i)] = 1.0;
        s[(i, e)] = 1.0;
        s[(j, e)] = 1.0;
    }
    let mut h = affine(
        g.node_features(),
        &p.node_encoder.weight,
        &p.node_encoder.bias,
    );
    let he = match &p.edge_encoder {
        Some(enc) => affine(g.edge_features(), &enc.weight, &enc.bias),
        None => DMatrix::zeros(m, p.config.hidden),
    };
    for layer in &p.levels[0] {
        let mut x = &h + &a * &h + &s * &he;
        for (k, map) in layer.maps.iter().enumerate() {
            x = affine(&x, &map.weight, &map.bias);
            if k + 1 < layer.maps.len() {
                x.apply(|v| *v = v.max(0.0));
            }
        }
        h = x;
    }
    let mut y = DMatrix::from_fn(1, h.ncols(), |_, j| h.column(j).sum() / n as f64);
    for (k, map) in p.readout.iter().enumerate() {
        y = affine(&y, &map.weight, &map.bias);
        if k + 1 < p.readout.len() {
            y.apply(|v| *v = v.max(0.0));
        }
    }
    y.iter().copied().collect()
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter, for a two-graph batch of two-level hierarchies.
pub fn gradient_check(edge_features: bool, m: usize, mlp: usize, seed: u64) -> f64 {
    let f_e = if edge_features { 2 } else { 0 };
    let graphs = [
        ring_with_chords(9, 4, 3, f_e, seed),
        ring_with_chords(7, 3, 3, f_e, seed + 1),
    ];
    let hs: Vec<Hierarchy> = graphs
        .iter()
        .enumerate()
        .map(|(i, g)| {
            build_hierarchy(g, &[f64::INFINITY, 0.5], AggMode::Mean, seed + i as u64).unwrap()
        })
        .collect();
    let batch = [(&hs[0], 0usize), (&hs[1], 2usize)];
    let cfg = ModelConfig {
        node_features: 3,
        edge_features: f_e,
        hidden: 5,
        classes: 3,
        layers_per_level: vec![2, 1],
        linear_per_layer: m,
        mlp_layers: mlp,
    };
    let p = ModelParams::init(cfg, seed).unwrap();
    let analytic = loss_and_grad(&batch, &p).unwrap().grads.to_flat();
    let theta = p.to_flat();
    let eps = 1e-5;
    let mut probe = p.clone();
    let mut loss_at = |t: &[f64]| {
        probe.load_flat(t).unwrap();
        loss_and_grad(&batch, &probe).unwrap().loss
    };
    let mut worst: f64 = 0.0;
    let mut t = theta.clone();
    for i in 0..theta.len() {
        t[i] = theta[i] + eps;
        let up = loss_at(&t);
        t[i] = theta[i] - eps;
        let down = loss_at(&t);
        t[i] = theta[i];
        let fd = (up - down) / (2.0 * eps);
        let scale = fd.abs().max(analytic[i].abs());
        // Gradients below 1e-8 in both forms are compared absolutely.
        let err = if scale < 1e-8 {
            (fd - analytic[i]).abs()
        } else {
            (fd - analytic[i]).abs() / scale
        };
        worst = worst.max(err);
    }
    worst
}
