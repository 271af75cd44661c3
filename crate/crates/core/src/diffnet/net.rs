use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayoutEntry {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Flat parameters plus the description of how they map onto layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<LayoutEntry>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Vec<LayoutEntry>) -> Result<Self> {
        let expected: usize = layout.iter().map(LayoutEntry::numel).sum();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "parameter layout",
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter values"));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same layout, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values, self.layout.clone())
    }
}

/// Fully-connected embedding network `f_θ: R^input_dim -> R^d`.
///
/// Hidden layers apply `activation`; the output layer is linear, optionally
/// followed by affine-free layer normalization across the `d` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNet {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    pub norm_eps: f64,
}

impl Default for EmbeddingNet {
    fn default() -> Self {
        EmbeddingNet {
            input_dim: 16,
            hidden_dims: vec![32],
            output_dim: 8,
            activation: Activation::Tanh,
            layer_norm: true,
            norm_eps: 1e-5,
        }
    }
}

impl EmbeddingNet {
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_dims.len() + 2);
        w.push(self.input_dim);
        w.extend(&self.hidden_dims);
        w.push(self.output_dim);
        w
    }

    pub fn layout(&self) -> Vec<LayoutEntry> {
        let w = self.widths();
        let mut out = Vec::new();
        for (l, pair) in w.windows(2).enumerate() {
            out.push(LayoutEntry {
                name: format!("layer{l}.weight"),
                shape: vec![pair[1], pair[0]],
            });
            out.push(LayoutEntry {
                name: format!("layer{l}.bias"),
                shape: vec![pair[1]],
            });
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(LayoutEntry::numel).sum()
    }

    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(self.num_params());
        for pair in self.widths().windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            for _ in 0..pair[0] * pair[1] {
                values.push(rng.random_range(-bound..bound));
            }
            values.extend(std::iter::repeat_n(0.0, pair[1]));
        }
        ParamVector {
            values,
            layout: self.layout(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::invalid("net", "layer widths must be positive"));
        }
        if self.layer_norm && !(self.norm_eps > 0.0) {
            return Err(Error::invalid("net.norm_eps", "must be > 0"));
        }
        Ok(())
    }

    /// Forward pass `z = f_θ(x)`.
    pub fn embed<S: Scalar>(&self, params: &[S], x: &[f64]) -> Result<Vec<S>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "embed input",
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let n = self.num_params();
        if params.len() != n {
            return Err(Error::DimensionMismatch {
                context: "embed params",
                expected: n,
                got: params.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embed input"));
        }
        let widths = self.widths();
        let layers = widths.len() - 1;
        let mut offset = 0;

        // First layer reads f64 inputs directly.
        let (fan_in, fan_out) = (widths[0], widths[1]);
        let mut h: Vec<S> = (0..fan_out)
            .map(|j| {
                let row = &params[offset + j * fan_in..offset + (j + 1) * fan_in];
                S::dot_f64(row, x) + params[offset + fan_in * fan_out + j]
            })
            .collect();
        offset += fan_in * fan_out + fan_out;

        for l in 1..layers {
            h = h.into_iter().map(|v| self.activation.apply(v)).collect();
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            h = (0..fan_out)
                .map(|j| {
                    let row = &params[offset + j * fan_in..offset + (j + 1) * fan_in];
                    S::dot(row, &h) + params[offset + fan_in * fan_out + j]
                })
                .collect();
            offset += fan_in * fan_out + fan_out;
        }

        if self.layer_norm {
            h = layer_norm(&h, self.norm_eps);
        }
        if h.iter().any(|v| !v.primal().is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(h)
    }

    pub fn embed_all<S: Scalar>(&self, params: &[S], xs: &[Vec<f64>]) -> Result<Vec<Vec<S>>> {
        xs.iter().map(|x| self.embed(params, x)).collect()
    }
}

/// `(h − mean) / sqrt(var + eps)` with the population variance.
pub fn layer_norm<S: Scalar>(h: &[S], eps: f64) -> Vec<S> {
    let d = h.len() as f64;
    let mean = S::sum(h) / d;
    let centered: Vec<S> = h.iter().map(|&v| v - mean).collect();
    let var = S::dot(&centered, &centered) / d;
    let denom = (var + eps).sqrt();
    centered.into_iter().map(|c| c / denom).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts_match_default_architecture() {
        let net = EmbeddingNet::default();
        assert_eq!(net.num_params(), 16 * 32 + 32 + 32 * 8 + 8);
        let p = net.init_params(42);
        assert_eq!(p.len(), net.num_params());
        // Biases start at zero.
        assert!(p.values[16 * 32..16 * 32 + 32].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_network_maps_to_zero_vector() {
        let net = EmbeddingNet::default();
        let zeros = vec![0.0; net.num_params()];
        let z = net.embed(&zeros, &[0.3; 16]).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let net = EmbeddingNet {
            input_dim: 3,
            hidden_dims: vec![],
            output_dim: 3,
            activation: Activation::Identity,
            layer_norm: false,
            norm_eps: 1e-5,
        };
        let mut p = vec![0.0; net.num_params()];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let x = [0.5, -2.0, 7.25];
        assert_eq!(net.embed(&p, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let net = EmbeddingNet::default();
        let p = net.init_params(7);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let z = net.embed(&p.values, &x).unwrap();
        let mean = z.iter().sum::<f64>() / 8.0;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-12);
        // Unit variance up to the eps in the denominator.
        assert!((var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let net = EmbeddingNet::default();
        let p = net.init_params(3);
        let x = vec![0.1; 16];
        let a = net.embed(&p.values, &x).unwrap();
        let b = net.embed(&p.values, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_wrong_input_dimension() {
        let net = EmbeddingNet::default();
        let p = net.init_params(3);
        assert!(matches!(
            net.embed(&p.values, &[0.0; 4]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn param_vector_checks_layout() {
        let net = EmbeddingNet::default();
        assert!(ParamVector::new(vec![0.0; 3], net.layout()).is_err());
    }
}
