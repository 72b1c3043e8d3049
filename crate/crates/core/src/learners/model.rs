use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seed;

/// Layer sizes: `input -> hidden[0] -> ... -> classes`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub input: usize,
    #[serde(default)]
    pub hidden: Vec<usize>,
    pub classes: usize,
}

impl Arch {
    pub fn logistic(input: usize, classes: usize) -> Self {
        Arch {
            input,
            hidden: Vec::new(),
            classes,
        }
    }

    pub fn mlp(input: usize, hidden: usize, classes: usize) -> Self {
        Arch {
            input,
            hidden: vec![hidden],
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.classes < 2 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "architecture needs input > 0, classes >= 2 and non-empty hidden layers, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `(rows, cols)` of each weight matrix, input layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(self.input);
        sizes.extend_from_slice(&self.hidden);
        sizes.push(self.classes);
        sizes.windows(2).map(|w| (w[1], w[0])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.dim() != self.input {
            return Err(Error::Dimension {
                expected: self.input,
                found: data.dim(),
                context: "dataset features vs model input",
            });
        }
        if data.num_classes() > self.classes {
            return Err(Error::Dimension {
                expected: self.classes,
                found: data.num_classes(),
                context: "dataset classes vs model outputs",
            });
        }
        Ok(())
    }
}

/// Feed-forward softmax classifier with ReLU hidden layers. Parameters are
/// stored flat, layer by layer: the row-major weight matrix followed by the
/// bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Arch,
    params: Vec<f64>,
}

impl Model {
    pub fn zeros(arch: Arch) -> Result<Self> {
        arch.validate()?;
        let params = vec![0.0; arch.num_params()];
        Ok(Model { arch, params })
    }

    /// Zeros for logistic regression, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for
    /// networks with hidden layers.
    pub fn init(arch: Arch, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        if model.arch.hidden.is_empty() {
            return Ok(model);
        }
        let mut rng = seed::rng(seed);
        let mut offset = 0;
        for (rows, cols) in model.arch.layer_shapes() {
            let bound = 1.0 / (cols as f64).sqrt();
            for p in &mut model.params[offset..offset + rows * cols + rows] {
                *p = rng.random_range(-bound..=bound);
            }
            offset += rows * cols + rows;
        }
        Ok(model)
    }

    pub fn from_params(arch: Arch, params: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.num_params() {
            return Err(Error::Dimension {
                expected: arch.num_params(),
                found: params.len(),
                context: "parameter vector",
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "model parameters".into(),
            });
        }
        Ok(Model { arch, params })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input {
            return Err(Error::Dimension {
                expected: self.arch.input,
                found: x.len(),
                context: "input features",
            });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.arch.classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                self.arch.classes
            )));
        }
        Ok(())
    }

    /// Forward pass keeping every layer's activations (input included) and the
    /// hidden pre-activations needed for backprop.
    fn forward(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let shapes = self.arch.layer_shapes();
        let last = shapes.len() - 1;
        let mut acts = Vec::with_capacity(shapes.len());
        acts.push(x.to_vec());
        let mut offset = 0;
        let mut logits = Vec::new();
        for (l, &(rows, cols)) in shapes.iter().enumerate() {
            let w = &self.params[offset..offset + rows * cols];
            let b = &self.params[offset + rows * cols..offset + rows * cols + rows];
            let input = &acts[l];
            let mut z: Vec<f64> = b.to_vec();
            for (r, zr) in z.iter_mut().enumerate() {
                *zr += dot(&w[r * cols..(r + 1) * cols], input);
            }
            offset += rows * cols + rows;
            if l == last {
                logits = z;
            } else {
                for v in &mut z {
                    *v = v.max(0.0);
                }
                acts.push(z);
            }
        }
        (acts, logits)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.forward(x).1)
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Cross-entropy `-log p_y(x)`, computed as `logsumexp(z) - z_y`.
    pub fn loss(&self, x: &[f64], y: usize) -> Result<f64> {
        self.check_label(y)?;
        let z = self.logits(x)?;
        Ok(cross_entropy(&z, y))
    }

    /// Add the cross-entropy gradient at `(x, y)` into `grad`, returning the loss.
    pub fn accumulate_grad(&self, x: &[f64], y: usize, grad: &mut [f64]) -> Result<f64> {
        self.check_input(x)?;
        self.check_label(y)?;
        debug_assert_eq!(grad.len(), self.params.len());
        let (acts, logits) = self.forward(x);
        let loss = cross_entropy(&logits, y);
        let mut delta = softmax(&logits);
        delta[y] -= 1.0;

        let shapes = self.arch.layer_shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for &(rows, cols) in &shapes {
            offsets.push(off);
            off += rows * cols + rows;
        }
        for l in (0..shapes.len()).rev() {
            let (rows, cols) = shapes[l];
            let o = offsets[l];
            let input = &acts[l];
            for r in 0..rows {
                let d = delta[r];
                if d != 0.0 {
                    for (g, &a) in grad[o + r * cols..o + (r + 1) * cols].iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                grad[o + rows * cols + r] += d;
            }
            if l > 0 {
                let w = &self.params[o..o + rows * cols];
                let mut prev = vec![0.0; cols];
                for r in 0..rows {
                    let d = delta[r];
                    for (p, &wv) in prev.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                        *p += d * wv;
                    }
                }
                // acts[l] is the ReLU output of layer l-1: positive iff the
                // pre-activation was positive.
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(loss)
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        self.arch.check_data(data)?;
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut hits = 0usize;
        for (x, y) in data.iter() {
            hits += usize::from(self.predict(x)? == y);
        }
        Ok(hits as f64 / data.len() as f64)
    }

    pub fn mean_loss(&self, data: &Dataset) -> Result<f64> {
        self.arch.check_data(data)?;
        if data.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        let mut total = 0.0;
        for (x, y) in data.iter() {
            total += self.loss(x, y)?;
        }
        Ok(total / data.len() as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut layers = Vec::new();
        let mut offset = 0;
        for (rows, cols) in self.arch.layer_shapes() {
            layers.push(CheckpointLayer {
                rows,
                cols,
                weights: self.params[offset..offset + rows * cols].to_vec(),
                bias: self.params[offset + rows * cols..offset + rows * cols + rows].to_vec(),
            });
            offset += rows * cols + rows;
        }
        Checkpoint {
            arch: self.arch.clone(),
            layers,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let shapes = ck.arch.layer_shapes();
        if shapes.len() != ck.layers.len() {
            return Err(Error::Dimension {
                expected: shapes.len(),
                found: ck.layers.len(),
                context: "checkpoint layer count",
            });
        }
        let mut params = Vec::with_capacity(ck.arch.num_params());
        for (&(rows, cols), layer) in shapes.iter().zip(&ck.layers) {
            if (layer.rows, layer.cols) != (rows, cols)
                || layer.weights.len() != rows * cols
                || layer.bias.len() != rows
            {
                return Err(Error::InvalidInput(format!(
                    "checkpoint layer shape ({}, {}) does not match architecture ({rows}, {cols})",
                    layer.rows, layer.cols
                )));
            }
            params.extend_from_slice(&layer.weights);
            params.extend_from_slice(&layer.bias);
        }
        Model::from_params(ck.arch.clone(), params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.to_checkpoint())?;
        std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Model::from_checkpoint(&serde_json::from_slice(&bytes)?)
    }
}

/// JSON checkpoint: layer shapes plus row-major weights and biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub arch: Arch,
    pub layers: Vec<CheckpointLayer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn predict_proba(model: &Model, x: &[f64]) -> Result<Vec<f64>> {
    model.predict_proba(x)
}

pub fn loss(model: &Model, x: &[f64], y: usize) -> Result<f64> {
    model.loss(x, y)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn logsumexp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn cross_entropy(z: &[f64], y: usize) -> f64 {
    (logsumexp(z) - z[y]).max(0.0)
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
