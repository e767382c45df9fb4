use rand_distr::{Distribution, StandardNormal};

use super::{ModelConfig, Real};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// One named tensor inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }

    /// Linear maps are stored `[fan_in, fan_out]`; vectors are 1-D.
    fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub wq: usize,
    pub bq: usize,
    pub wk: usize,
    pub bk: usize,
    pub wv: usize,
    pub bv: usize,
    pub wo: usize,
    pub bo: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// Tensor table of a configuration, in checkpoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
    pub embed_w: usize,
    pub embed_b: usize,
    pub role_pair: usize,
    pub layers: Vec<LayerOffsets>,
    pub final_g: usize,
    pub final_b: usize,
    pub head_w: usize,
    pub head_b: usize,
    pub total: usize,
}

struct Builder {
    tensors: Vec<TensorSpec>,
    total: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.total;
        let spec = TensorSpec {
            name,
            shape,
            offset,
        };
        self.total += spec.len();
        self.tensors.push(spec);
        offset
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, da, ff) = (cfg.d_model, cfg.d_attn, cfg.d_ff);
        let mut b = Builder {
            tensors: Vec::new(),
            total: 0,
        };
        let embed_w = b.push("embed.w".into(), vec![cfg.d_in(), d]);
        let embed_b = b.push("embed.b".into(), vec![d]);
        let role_pair = b.push("embed.role_pair".into(), vec![3 * cfg.max_pairs, d]);
        let layers = (0..cfg.layers)
            .map(|l| {
                let mut p =
                    |name: &str, shape: Vec<usize>| b.push(format!("layers.{l}.{name}"), shape);
                LayerOffsets {
                    ln1_g: p("ln1.g", vec![d]),
                    ln1_b: p("ln1.b", vec![d]),
                    wq: p("attn.wq", vec![d, da]),
                    bq: p("attn.bq", vec![da]),
                    wk: p("attn.wk", vec![d, da]),
                    bk: p("attn.bk", vec![da]),
                    wv: p("attn.wv", vec![d, da]),
                    bv: p("attn.bv", vec![da]),
                    wo: p("attn.wo", vec![da, d]),
                    bo: p("attn.bo", vec![d]),
                    ln2_g: p("ln2.g", vec![d]),
                    ln2_b: p("ln2.b", vec![d]),
                    w1: p("ff.w1", vec![d, ff]),
                    b1: p("ff.b1", vec![ff]),
                    w2: p("ff.w2", vec![ff, d]),
                    b2: p("ff.b2", vec![d]),
                }
            })
            .collect();
        let final_g = b.push("final_ln.g".into(), vec![d]);
        let final_b = b.push("final_ln.b".into(), vec![d]);
        let head_w = b.push("head.w".into(), vec![d, 1]);
        let head_b = b.push("head.b".into(), vec![1]);
        Layout {
            tensors: b.tensors,
            embed_w,
            embed_b,
            role_pair,
            layers,
            final_g,
            final_b,
            head_w,
            head_b,
            total: b.total,
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// Flat parameter vector together with its configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub layout: Layout,
    pub data: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn from_data(config: ModelConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if data.len() != layout.total {
            return Err(Error::Shape {
                expected: layout.total,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                index,
                context: "model parameter".into(),
            });
        }
        Ok(ModelParams {
            config,
            layout,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.tensor(name).map(|t| &self.data[t.range()])
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            layout: self.layout.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Gaussian weights scaled by `1/sqrt(fan_in)`, zero biases, unit norm gains.
pub fn init_params<T: Real>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let layout = Layout::new(config);
    let mut rng = rng_from(seed);
    let mut data = vec![T::zero(); layout.total];
    for spec in &layout.tensors {
        if spec.is_matrix() {
            let scale = 1.0 / (spec.shape[0] as f64).sqrt();
            for v in &mut data[spec.range()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = T::from_f64(z * scale);
            }
        } else if spec.name.ends_with(".g") {
            data[spec.range()].fill(T::one());
        }
    }
    Ok(ModelParams {
        config: config.clone(),
        layout,
        data,
    })
}
