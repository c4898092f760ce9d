//! Feed-forward softmax classifiers.
//!
//! A classifier is a stack of affine layers with ReLU between them and a
//! softmax on the last one. Weights are stored `[fan_in, fan_out]` so a batch
//! `[n, d]` flows through as `x W + b`.
//!
//! Binary model container (little-endian throughout):
//!
//! | field          | type                     |
//! |----------------|--------------------------|
//! | magic          | `b"DBAT"`                |
//! | version        | `u16` (= 1)              |
//! | activation     | `u8` (0 = relu)          |
//! | input dim      | `u32`                    |
//! | hidden count   | `u32`, then one `u32` per hidden layer |
//! | num classes    | `u32`                    |
//! | init seed      | `u64`                    |
//! | parameters     | `f64` blobs: W1, b1, W2, b2, ... |

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{shape_err, Error, Result};
use crate::rng::seeded;

pub const MODEL_MAGIC: &[u8; 4] = b"DBAT";
pub const MODEL_FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl ClassifierSpec {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(String::from("layer dimensions must be positive")));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.num_classes);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Forward pass of this architecture over externally held parameter
    /// nodes (`W1, b1, W2, b2, ...`).
    pub fn forward(&self, graph: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let shape = graph.value(x).shape();
        if shape.len() != 2 || shape[1] != self.input_dim {
            return Err(shape_err("predict", &[shape, &[self.input_dim]]));
        }
        let layers = params.len() / 2;
        let mut h = x;
        for l in 0..layers {
            h = graph.matmul(h, params[2 * l])?;
            h = graph.add(h, params[2 * l + 1])?;
            if l + 1 < layers {
                h = match self.activation {
                    Activation::Relu => graph.relu(h)?,
                };
            }
        }
        graph.softmax(h, 1)
    }

    fn parameter_shapes(&self) -> Vec<Vec<usize>> {
        self.layers()
            .into_iter()
            .flat_map(|(i, o)| [vec![i, o], vec![o]])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ClassifierSpec,
    params: Vec<Tensor>,
    seed: u64,
}

impl Classifier {
    /// Glorot-uniform weights, zero biases; deterministic in `seed`.
    pub fn init(spec: ClassifierSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded(seed);
        let mut params = Vec::new();
        for (fan_in, fan_out) in spec.layers() {
            let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
            params.push(Tensor::new(vec![fan_in, fan_out], w)?);
            params.push(Tensor::zeros(&[fan_out])?);
        }
        Ok(Self { spec, params, seed })
    }

    pub fn from_parts(spec: ClassifierSpec, params: Vec<Tensor>, seed: u64) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.parameter_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(Error::InvalidConfig(String::from(
                "parameter shapes do not match the classifier spec",
            )));
        }
        Ok(Self { spec, params, seed })
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Registers the parameters as trainable leaves of `graph`.
    pub fn attach(&self, graph: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| graph.param(p.clone())).collect()
    }

    /// Registers the parameters as constants of `graph`.
    pub fn attach_frozen(&self, graph: &mut Graph) -> Vec<Var> {
        self.params.iter().map(|p| graph.constant(p.clone())).collect()
    }

    /// Class probabilities `[n, k]` for the batch `x` using the parameter
    /// nodes `params` (as returned by [`attach`](Self::attach)).
    pub fn forward(&self, graph: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        self.spec.forward(graph, params, x)
    }

    /// Class probabilities for a `[n, d]` batch, outside of any training graph.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        let mut graph = Graph::new();
        let params = self.attach_frozen(&mut graph);
        let x = graph.constant(batch.clone());
        let probs = self.forward(&mut graph, &params, x)?;
        Ok(graph.value(probs).clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * self.spec.parameter_count());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.push(match self.spec.activation {
            Activation::Relu => 0,
        });
        out.extend_from_slice(&(self.spec.input_dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.spec.hidden_dims.len() as u32).to_le_bytes());
        for &h in &self.spec.hidden_dims {
            out.extend_from_slice(&(h as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.spec.num_classes as u32).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for p in &self.params {
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"DBAT\""),
            });
        }
        let version = u16::from_le_bytes(r.array("format version")?);
        if version != MODEL_FORMAT_VERSION {
            return Err(r.fail(2, format!("unsupported format version {version}")));
        }
        let activation = match r.take(1, "activation")?[0] {
            0 => Activation::Relu,
            other => return Err(r.fail(1, format!("unknown activation tag {other}"))),
        };
        let input_dim = r.u32("input dim")? as usize;
        let hidden_count = r.u32("hidden layer count")? as usize;
        if hidden_count > 1024 {
            return Err(r.fail(4, format!("implausible hidden layer count {hidden_count}")));
        }
        let mut hidden_dims = Vec::with_capacity(hidden_count);
        for _ in 0..hidden_count {
            hidden_dims.push(r.u32("hidden dim")? as usize);
        }
        let num_classes = r.u32("num classes")? as usize;
        let seed = u64::from_le_bytes(r.array("seed")?);
        let spec = ClassifierSpec {
            input_dim,
            hidden_dims,
            num_classes,
            activation,
        };
        spec.validate().map_err(|e| r.fail(0, format!("{e}")))?;
        let mut params = Vec::new();
        for shape in spec.parameter_shapes() {
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.array("parameter")?));
            }
            params.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(r.fail(0, format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { spec, params, seed })
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("truncated while reading {what}"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let s = self.take(N, what)?;
        let mut a = [0u8; N];
        a.copy_from_slice(s);
        Ok(a)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    // error located at the start of the field just read
    fn fail(&self, width: usize, message: String) -> Error {
        Error::Parse {
            offset: self.pos - width,
            message,
        }
    }
}
