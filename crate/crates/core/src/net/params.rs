use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

/// Affine map `y = x W + b` applied to row vectors. `weight` is `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Linear {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: DMatrix::zeros(fan_in, fan_out),
            bias: DVector::zeros(fan_out),
        }
    }

    fn uniform(fan_in: usize, fan_out: usize, rng: &mut crate::rng::Rng) -> Self {
        let bound = if fan_in == 0 {
            1.0
        } else {
            1.0 / (fan_in as f64).sqrt()
        };
        let mut draw = || rng.random_range(-bound..=bound);
        let weight = DMatrix::from_fn(fan_in, fan_out, |_, _| draw());
        let bias = DVector::from_fn(fan_out, |_, _| draw());
        Linear { weight, bias }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    /// `X W + 1 bᵀ`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.weight;
        let rows = y.nrows();
        if rows > 0 {
            for (col, &b) in y
                .as_mut_slice()
                .chunks_exact_mut(rows)
                .zip(self.bias.iter())
            {
                col.iter_mut().for_each(|v| *v += b);
            }
        }
        y
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// One message-passing layer: `M` stacked `o → o` maps.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageLayer {
    pub maps: Vec<Linear>,
}

/// Architecture of a sequential multi-resolution model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub node_features: usize,
    /// 0 disables the edge encoder; edge embeddings are then zero.
    pub edge_features: usize,
    pub hidden: usize,
    pub classes: usize,
    /// Message-passing layers at each resolution level.
    pub layers_per_level: Vec<usize>,
    /// Linear maps inside each message-passing layer.
    pub linear_per_layer: usize,
    /// Readout depth; 0 and 1 both mean a single `hidden → classes` map.
    pub mlp_layers: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.classes == 0 {
            return Err(Error::InvalidArgument(
                "hidden width and class count must be positive".into(),
            ));
        }
        if self.layers_per_level.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one resolution level is required".into(),
            ));
        }
        if self.linear_per_layer == 0 && self.layers_per_level.iter().any(|&l| l > 0) {
            return Err(Error::InvalidArgument(
                "message layers need at least one linear map".into(),
            ));
        }
        Ok(())
    }

    pub fn readout_maps(&self) -> usize {
        self.mlp_layers.max(1)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub node_encoder: Linear,
    pub edge_encoder: Option<Linear>,
    pub levels: Vec<Vec<MessageLayer>>,
    pub readout: Vec<Linear>,
}

impl ModelParams {
    fn build(config: ModelConfig, mut make: impl FnMut(usize, usize) -> Linear) -> Result<Self> {
        config.validate()?;
        let o = config.hidden;
        let node_encoder = make(config.node_features, o);
        let edge_encoder = (config.edge_features > 0).then(|| make(config.edge_features, o));
        let levels = config
            .layers_per_level
            .iter()
            .map(|&layers| {
                (0..layers)
                    .map(|_| MessageLayer {
                        maps: (0..config.linear_per_layer).map(|_| make(o, o)).collect(),
                    })
                    .collect()
            })
            .collect();
        let depth = config.readout_maps();
        let readout = (0..depth)
            .map(|k| make(o, if k + 1 == depth { config.classes } else { o }))
            .collect();
        Ok(ModelParams {
            config,
            node_encoder,
            edge_encoder,
            levels,
            readout,
        })
    }

    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization of every weight and bias.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        Self::build(config, |i, o| Linear::uniform(i, o, &mut rng))
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::build(config, Linear::zeros)
    }

    pub fn zeros_like(&self) -> Self {
        Self::build(self.config.clone(), Linear::zeros).expect("config already validated")
    }

    /// Named linear maps in a fixed order (also the checkpoint order).
    pub fn named_linears(&self) -> Vec<(String, &Linear)> {
        let mut out = vec![("node_encoder".to_string(), &self.node_encoder)];
        if let Some(e) = &self.edge_encoder {
            out.push(("edge_encoder".to_string(), e));
        }
        for (l, layers) in self.levels.iter().enumerate() {
            for (i, layer) in layers.iter().enumerate() {
                for (k, map) in layer.maps.iter().enumerate() {
                    out.push((format!("level{l}.layer{i}.linear{k}"), map));
                }
            }
        }
        for (k, map) in self.readout.iter().enumerate() {
            out.push((format!("readout{k}"), map));
        }
        out
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut out = vec![&mut self.node_encoder];
        if let Some(e) = &mut self.edge_encoder {
            out.push(e);
        }
        for layers in &mut self.levels {
            for layer in layers {
                out.extend(layer.maps.iter_mut());
            }
        }
        out.extend(self.readout.iter_mut());
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_linears()
            .iter()
            .map(|(_, l)| l.num_params())
            .sum()
    }

    /// All parameters, each weight row-major followed by its bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, l) in self.named_linears() {
            for r in 0..l.fan_in() {
                out.extend(l.weight.row(r).iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::dim(
                "parameter vector",
                format!("expected {}, got {}", self.num_params(), flat.len()),
            ));
        }
        let mut it = flat.iter().copied();
        for l in self.linears_mut() {
            for r in 0..l.fan_in() {
                for c in 0..l.fan_out() {
                    l.weight[(r, c)] = it.next().unwrap();
                }
            }
            for b in l.bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// JSON checkpoint: the model config plus one record per tensor. Weights are
/// named `<linear>.weight` with shape `[fan_in, fan_out]` stored row-major;
/// biases are `<linear>.bias` with shape `[fan_out]`.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    config: ModelConfig,
    tensors: Vec<TensorRecord>,
}

impl From<&ModelParams> for Checkpoint {
    fn from(p: &ModelParams) -> Self {
        let mut tensors = Vec::new();
        for (name, l) in p.named_linears() {
            let mut data = Vec::with_capacity(l.weight.len());
            for r in 0..l.fan_in() {
                data.extend(l.weight.row(r).iter());
            }
            tensors.push(TensorRecord {
                name: format!("{name}.weight"),
                shape: vec![l.fan_in(), l.fan_out()],
                data,
            });
            tensors.push(TensorRecord {
                name: format!("{name}.bias"),
                shape: vec![l.fan_out()],
                data: l.bias.iter().copied().collect(),
            });
        }
        Checkpoint {
            config: p.config.clone(),
            tensors,
        }
    }
}

impl Checkpoint {
    pub fn into_params(self) -> Result<ModelParams> {
        let mut params = ModelParams::zeros(self.config)?;
        let expected: Vec<(String, Vec<usize>)> = params
            .named_linears()
            .into_iter()
            .flat_map(|(name, l)| {
                [
                    (format!("{name}.weight"), vec![l.fan_in(), l.fan_out()]),
                    (format!("{name}.bias"), vec![l.fan_out()]),
                ]
            })
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} tensors, config needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        let mut flat = Vec::with_capacity(params.num_params());
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if &t.name != name
                || &t.shape != shape
                || t.data.len() != shape.iter().product::<usize>()
            {
                return Err(Error::Parse(format!(
                    "checkpoint tensor {} does not match {name}",
                    t.name
                )));
            }
            flat.extend(&t.data);
        }
        params.load_flat(&flat)?;
        Ok(params)
    }
}
