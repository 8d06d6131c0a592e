//! Fully connected ReLU networks.

use ldrld_core::tensor::{kernels, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    #[serde(default)]
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "layer widths must be >= 1 (input {}, hidden {:?})",
                self.input_dim, self.hidden_dims
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec(format!("need at least 2 classes, got {}", self.num_classes)));
        }
        Ok(())
    }

    /// `(in, out)` for every affine layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let widths: Vec<usize> = std::iter::once(self.input_dim)
            .chain(self.hidden_dims.iter().copied())
            .chain(std::iter::once(self.num_classes))
            .collect();
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|&(i, o)| i * o + o).sum()
    }
}

/// Affine map `x·W + b` with `W` stored row-major as `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Model {
    /// Fan-in scaled uniform initialization, `U(−1/√in, 1/√in)` for weights
    /// and biases alike, drawn from the spec's seed.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_dims()
            .into_iter()
            .map(|(in_dim, out_dim)| {
                let bound = 1.0 / (in_dim as f64).sqrt();
                let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-bound..bound)).collect::<Vec<f64>>();
                let weights = draw(in_dim * out_dim);
                let bias = draw(out_dim);
                Layer { in_dim, out_dim, weights, bias }
            })
            .collect();
        Ok(Self { spec: spec.clone(), layers })
    }

    /// Rebuilds a model from explicit parameters; shapes must match `spec`.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        let dims = spec.layer_dims();
        if dims.len() != layers.len() {
            return Err(Error::DimensionMismatch { what: "layer count", expected: dims.len(), got: layers.len() });
        }
        for (&(i, o), l) in dims.iter().zip(&layers) {
            if (l.in_dim, l.out_dim) != (i, o) || l.weights.len() != i * o || l.bias.len() != o {
                return Err(Error::InvalidSpec(format!(
                    "layer {}x{} with {} weights and {} biases does not match {i}x{o}",
                    l.in_dim,
                    l.out_dim,
                    l.weights.len(),
                    l.bias.len()
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("parameters must be finite".into()));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    /// Parameter buffers in layer order, weights before bias.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<f64>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights, &mut l.bias]).collect()
    }

    /// Records the forward pass of a `rows × input_dim` batch. Returns the
    /// logits and the parameter leaves in [`params`](Self::params) order.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Vec<f64>, rows: usize) -> Result<(Tensor<'t>, Vec<Tensor<'t>>)> {
        self.check_batch(&x, rows)?;
        let mut h = tape.matrix(rows, self.spec.input_dim, x, false)?;
        let mut leaves = Vec::with_capacity(2 * self.layers.len());
        for (k, l) in self.layers.iter().enumerate() {
            let w = tape.matrix(l.in_dim, l.out_dim, l.weights.clone(), true)?;
            let b = tape.vector(l.bias.clone(), true)?;
            h = h.matmul(w)?.add_row(b)?;
            if k + 1 < self.layers.len() {
                h = h.relu()?;
            }
            leaves.push(w);
            leaves.push(b);
        }
        Ok((h, leaves))
    }

    /// Gradient-free forward pass; the same arithmetic as [`forward`](Self::forward).
    pub fn logits(&self, x: &[f64], rows: usize) -> Result<Vec<f64>> {
        self.check_batch(x, rows)?;
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            h = kernels::matmul(&h, &l.weights, rows, l.in_dim, l.out_dim);
            for row in h.chunks_mut(l.out_dim) {
                for (v, b) in row.iter_mut().zip(&l.bias) {
                    *v += b;
                }
            }
            if k + 1 < self.layers.len() {
                for v in &mut h {
                    *v = v.max(0.0);
                }
            }
        }
        Ok(h)
    }

    /// Arg-max class per row; the lowest index wins ties.
    pub fn predict(&self, x: &[f64], rows: usize) -> Result<Vec<usize>> {
        let logits = self.logits(x, rows)?;
        Ok(logits.chunks(self.spec.num_classes).map(argmax).collect())
    }

    pub fn accuracy(&self, ds: &crate::data::Dataset) -> Result<f64> {
        if ds.num_classes() != self.spec.num_classes {
            return Err(Error::DimensionMismatch {
                what: "class count",
                expected: self.spec.num_classes,
                got: ds.num_classes(),
            });
        }
        let pred = self.predict(ds.features(), ds.len())?;
        let hits = pred.iter().zip(ds.labels()).filter(|(p, y)| p == y).count();
        Ok(hits as f64 / ds.len() as f64)
    }

    fn check_batch(&self, x: &[f64], rows: usize) -> Result<()> {
        if x.len() != rows * self.spec.input_dim {
            return Err(Error::DimensionMismatch {
                what: "input batch length",
                expected: rows * self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
