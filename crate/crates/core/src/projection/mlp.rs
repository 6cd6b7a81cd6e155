//! Fully connected ReLU network R^6 -> R^6 with built-in standardization.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Pose6;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-dimension standardization of network inputs and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub in_mean: [f64; 6],
    pub in_std: [f64; 6],
    pub out_mean: [f64; 6],
    pub out_std: [f64; 6],
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            in_mean: [0.0; 6],
            in_std: [1.0; 6],
            out_mean: [0.0; 6],
            out_std: [1.0; 6],
        }
    }
}

fn mean_std(rows: &[[f64; 6]]) -> ([f64; 6], [f64; 6]) {
    let n = rows.len().max(1) as f64;
    let mut mean = [0.0; 6];
    for r in rows {
        for k in 0..6 {
            mean[k] += r[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; 6];
    for r in rows {
        for k in 0..6 {
            var[k] += (r[k] - mean[k]).powi(2);
        }
    }
    // Constant columns keep unit scale.
    let std = var.map(|v| {
        let s = (v / n).sqrt();
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    (mean, std)
}

impl Normalization {
    pub fn fit(inputs: &[[f64; 6]], targets: &[[f64; 6]]) -> Self {
        let (in_mean, in_std) = mean_std(inputs);
        let (out_mean, out_std) = mean_std(targets);
        Normalization {
            in_mean,
            in_std,
            out_mean,
            out_std,
        }
    }

    pub fn normalize_input(&self, x: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| (x[k] - self.in_mean[k]) / self.in_std[k])
    }

    pub fn denormalize_input(&self, x: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| x[k] * self.in_std[k] + self.in_mean[k])
    }

    pub fn normalize_output(&self, y: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| (y[k] - self.out_mean[k]) / self.out_std[k])
    }

    pub fn denormalize_output(&self, y: &[f64; 6]) -> [f64; 6] {
        std::array::from_fn(|k| y[k] * self.out_std[k] + self.out_mean[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `(out, in)`.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Learned projection model.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub norm: Normalization,
}

/// Activations kept from a forward pass for backpropagation.
pub struct Tape {
    /// Layer inputs; `inputs[0]` is the normalized batch.
    pub inputs: Vec<Array2<f64>>,
    /// Pre-activations of every layer.
    pub pre: Vec<Array2<f64>>,
}

/// Parameter gradients, same shapes as the layers.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weight: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl MlpModel {
    /// He-uniform weights, zero biases, identity normalization.
    pub fn new(layer_dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                Layer {
                    weight: Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-bound..bound)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpModel {
            layers,
            norm: Normalization::default(),
        })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| Layer {
                weight: Array2::zeros((w[1], w[0])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(MlpModel {
            layers,
            norm: Normalization::default(),
        })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].weight.ncols()];
        dims.extend(self.layers.iter().map(|l| l.weight.nrows()));
        dims
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Forward pass in normalized space. `x` is `(batch, 6)`.
    pub fn forward_normalized(&self, x: ArrayView2<f64>) -> (Array2<f64>, Tape) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            let next = if i < last { z.mapv(|v| v.max(0.0)) } else { z.clone() };
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        (a, Tape { inputs, pre })
    }

    /// Backpropagates `grad_out = dL/d(output)` (normalized space) through
    /// the tape. Returns parameter gradients and `dL/d(normalized input)`.
    pub fn backward(&self, tape: &Tape, grad_out: &Array2<f64>, want_params: bool) -> (Option<Gradients>, Array2<f64>) {
        let last = self.layers.len() - 1;
        let mut g = grad_out.clone();
        let mut gw = Vec::new();
        let mut gb = Vec::new();
        for i in (0..self.layers.len()).rev() {
            if i < last {
                g.zip_mut_with(&tape.pre[i], |gv, z| {
                    if *z <= 0.0 {
                        *gv = 0.0;
                    }
                });
            }
            if want_params {
                gw.push(g.t().dot(&tape.inputs[i]));
                gb.push(g.sum_axis(Axis(0)));
            }
            g = g.dot(&self.layers[i].weight);
        }
        let grads = want_params.then(|| {
            gw.reverse();
            gb.reverse();
            Gradients { weight: gw, bias: gb }
        });
        (grads, g)
    }

    fn normalize_batch(&self, x: &[[f64; 6]]) -> Array2<f64> {
        let mut a = Array2::zeros((x.len(), 6));
        for (i, row) in x.iter().enumerate() {
            let n = self.norm.normalize_input(row);
            for k in 0..6 {
                a[(i, k)] = n[k];
            }
        }
        a
    }

    /// Physical-units forward pass over a batch.
    pub fn forward_batch(&self, x: &[[f64; 6]]) -> Vec<[f64; 6]> {
        let (y, _) = self.forward_normalized(self.normalize_batch(x).view());
        y.outer_iter()
            .map(|r| self.norm.denormalize_output(&[r[0], r[1], r[2], r[3], r[4], r[5]]))
            .collect()
    }

    pub fn forward(&self, p: &Pose6) -> Pose6 {
        Pose6::from_array(self.forward_batch(&[p.to_array()])[0])
    }

    /// Outputs and vector-Jacobian products `J^T g_i` for a batch, all in
    /// physical units.
    pub fn forward_vjp(&self, x: &[[f64; 6]], g: &[[f64; 6]]) -> (Vec<[f64; 6]>, Vec<[f64; 6]>) {
        self.forward_vjp_with(x, |_| g.to_vec())
    }

    /// Like [`forward_vjp`](Self::forward_vjp), but the cotangents are
    /// computed from the outputs by `cotangent`.
    pub fn forward_vjp_with<F>(&self, x: &[[f64; 6]], cotangent: F) -> (Vec<[f64; 6]>, Vec<[f64; 6]>)
    where
        F: FnOnce(&[[f64; 6]]) -> Vec<[f64; 6]>,
    {
        let (y, tape) = self.forward_normalized(self.normalize_batch(x).view());
        let outs: Vec<[f64; 6]> = y
            .outer_iter()
            .map(|r| self.norm.denormalize_output(&[r[0], r[1], r[2], r[3], r[4], r[5]]))
            .collect();
        let g = cotangent(&outs);
        let mut gy = Array2::zeros((g.len(), 6));
        for (i, row) in g.iter().enumerate() {
            for k in 0..6 {
                gy[(i, k)] = row[k] * self.norm.out_std[k];
            }
        }
        let (_, gx) = self.backward(&tape, &gy, false);
        let vjps = gx
            .outer_iter()
            .map(|r| std::array::from_fn(|k| r[k] / self.norm.in_std[k]))
            .collect();
        (outs, vjps)
    }

    /// Output and the 6x6 input Jacobian `d output / d input` (physical units),
    /// row-major `jac[out][in]`.
    pub fn forward_with_jacobian(&self, p: &Pose6) -> (Pose6, [[f64; 6]; 6]) {
        let x = [p.to_array()];
        let mut jac = [[0.0; 6]; 6];
        let mut out = Pose6::IDENTITY;
        for (k, row) in jac.iter_mut().enumerate() {
            let mut g = [0.0; 6];
            g[k] = 1.0;
            let (y, vjp) = self.forward_vjp(&x, &[g]);
            out = Pose6::from_array(y[0]);
            *row = vjp[0];
        }
        (out, jac)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            layer_dims: self.layer_dims(),
            weights: self.layers.iter().map(|l| l.weight.iter().copied().collect()).collect(),
            biases: self.layers.iter().map(|l| l.bias.to_vec()).collect(),
            normalization: self.norm.clone(),
            config_hash: None,
            seed: None,
        }
    }

    pub fn from_file(f: ModelFile) -> Result<Self> {
        if f.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported model format {}", f.format_version)));
        }
        validate_dims(&f.layer_dims)?;
        let n = f.layer_dims.len() - 1;
        if f.weights.len() != n || f.biases.len() != n {
            return Err(Error::Parse("layer count does not match layer_dims".into()));
        }
        let mut layers = Vec::with_capacity(n);
        for (i, (w, b)) in f.weights.into_iter().zip(f.biases).enumerate() {
            let (fan_in, fan_out) = (f.layer_dims[i], f.layer_dims[i + 1]);
            let weight = Array2::from_shape_vec((fan_out, fan_in), w)
                .map_err(|e| Error::Parse(format!("layer {} weights: {}", i, e)))?;
            if b.len() != fan_out {
                return Err(Error::Parse(format!("layer {} bias has {} entries", i, b.len())));
            }
            layers.push(Layer {
                weight,
                bias: Array1::from_vec(b),
            });
        }
        let model = MlpModel {
            layers,
            norm: f.normalization,
        };
        if !model.is_finite() {
            return Err(Error::Validation("model has non-finite parameters".into()));
        }
        Ok(model)
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims[0] != 6 || *dims.last().unwrap() != 6 || dims.contains(&0) {
        return Err(Error::Validation(format!(
            "layer dims must start and end with 6 and be positive, got {:?}",
            dims
        )));
    }
    Ok(())
}

/// On-disk model: JSON with row-major `(out, in)` weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_model_outputs_target_mean() {
        let mut m = MlpModel::zeros(&[6, 8, 6]).unwrap();
        m.norm.out_mean = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        m.norm.out_std = [9.0; 6];
        let y = m.forward(&Pose6::new(3.0, -1.0, 2.0, 0.0, 7.0, 1.0));
        assert_eq!(y.to_array(), [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn single_identity_layer_reproduces_input() {
        let mut m = MlpModel::zeros(&[6, 6]).unwrap();
        m.layers[0].weight = Array2::eye(6);
        let p = Pose6::new(1.0, -2.0, 3.0, -4.0, 5.0, -6.0);
        assert_eq!(m.forward(&p), p);
    }

    #[test]
    fn hand_computed_two_two_two() {
        // 6 -> 2 -> 2 -> 6 where only the first two coordinates matter.
        let mut m = MlpModel::zeros(&[6, 2, 2, 6]).unwrap();
        m.layers[0].weight.slice_mut(ndarray::s![.., 0..2]).assign(&array![[1.0, -1.0], [0.5, 2.0]]);
        m.layers[0].bias = array![0.5, -3.0];
        m.layers[1].weight = array![[2.0, 1.0], [-1.0, 1.0]];
        m.layers[1].bias = array![0.0, 1.0];
        m.layers[2].weight[(0, 0)] = 1.0;
        m.layers[2].weight[(1, 1)] = 1.0;
        // x = (1, 1): h1 = relu(1 - 1 + 0.5, 0.5 + 2 - 3) = (0.5, 0)
        // h2 = relu(2*0.5 + 0, -0.5 + 0 + 1) = (1, 0.5)
        let y = m.forward(&Pose6::new(1.0, 1.0, 0.0, 0.0, 0.0, 0.0));
        assert_eq!(y.to_array(), [1.0, 0.5, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rows: Vec<[f64; 6]> = (0..100).map(|_| [0; 6].map(|_: i32| rng.gen_range(-50.0..50.0))).collect();
        let n = Normalization::fit(&rows, &rows);
        for r in &rows {
            let back = n.denormalize_input(&n.normalize_input(r));
            let back2 = n.denormalize_output(&n.normalize_output(r));
            for k in 0..6 {
                assert!((back[k] - r[k]).abs() <= 1e-12 * r[k].abs().max(1.0));
                assert!((back2[k] - r[k]).abs() <= 1e-12 * r[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn file_round_trip_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MlpModel::new(&[6, 5, 6], &mut rng).unwrap();
        let json = serde_json::to_string(&m.to_file()).unwrap();
        let back = MlpModel::from_file(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, m);
        assert!(MlpModel::new(&[5, 6], &mut rng).is_err());
        let mut f = m.to_file();
        f.weights[0].pop();
        assert!(MlpModel::from_file(f).is_err());
    }
}
