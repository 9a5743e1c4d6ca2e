//! Fully connected network: rectifier hidden layers, one logistic output unit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;

/// One dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let dot: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(dot + self.biases[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dense>", into = "Vec<Dense>")]
pub struct MlpModel {
    layers: Vec<Dense>,
}

impl TryFrom<Vec<Dense>> for MlpModel {
    type Error = ClassifierError;

    fn try_from(layers: Vec<Dense>) -> Result<Self, Self::Error> {
        MlpModel::from_layers(layers)
    }
}

impl From<MlpModel> for Vec<Dense> {
    fn from(m: MlpModel) -> Self {
        m.layers
    }
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a logit against a {0,1} target, without forming the probability.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - y * z + (-z.abs()).exp().ln_1p()
}

impl MlpModel {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, ClassifierError> {
        let Some(last) = layers.last() else {
            return Err(ClassifierError::Shape("model has no layers".into()));
        };
        if last.outputs != 1 {
            return Err(ClassifierError::Shape(format!("output dimension {} != 1", last.outputs)));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(ClassifierError::Shape(format!("layer {i} has a zero dimension")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(ClassifierError::Shape(format!("layer {i} parameter arrays do not match its dims")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(ClassifierError::Shape(format!(
                    "layer {i} expects {} inputs but layer {} emits {}",
                    l.inputs,
                    i - 1,
                    layers[i - 1].outputs
                )));
            }
            if !l.weights.iter().chain(&l.biases).all(|v| v.is_finite()) {
                return Err(ClassifierError::NonFinite);
            }
        }
        Ok(MlpModel { layers })
    }

    /// He-uniform weights, zero biases. `dims` runs from input to the single output.
    pub fn init<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self, ClassifierError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(ClassifierError::Shape(format!("invalid layer dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                d.weights.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                d
            })
            .collect();
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Output pre-activation. Caller guarantees the input length.
    pub fn logit(&self, v: &[f64]) -> f64 {
        let mut a = Vec::with_capacity(32);
        let mut b = Vec::with_capacity(32);
        let last = self.layers.len() - 1;
        self.layers[0].apply(v, &mut a);
        for layer in &self.layers[1..] {
            a.iter_mut().for_each(|x| *x = x.max(0.0));
            layer.apply(&a, &mut b);
            std::mem::swap(&mut a, &mut b);
        }
        debug_assert!(last == 0 || a.len() == 1);
        a[0]
    }

    /// Approval probability, strictly inside (0, 1).
    pub fn forward(&self, v: &[f64]) -> Result<f64, ClassifierError> {
        if v.len() != self.input_dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim(),
                got: v.len(),
            });
        }
        Ok(self.probability(v))
    }

    pub(crate) fn probability(&self, v: &[f64]) -> f64 {
        logistic(self.logit(v)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
    }

    /// Mean binary cross-entropy over `batch`.
    pub fn loss(&self, batch: &[(&[f64], f64)]) -> f64 {
        let total: f64 = batch.iter().map(|(x, y)| bce_from_logit(self.logit(x), *y)).sum();
        total / batch.len() as f64
    }

    /// Exact gradient of [`MlpModel::loss`] by backpropagation.
    pub fn gradient(&self, batch: &[(&[f64], f64)]) -> Gradient {
        let mut grad = Gradient {
            layers: self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        };
        if batch.is_empty() {
            return grad;
        }
        let scale = 1.0 / batch.len() as f64;
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (x, y) in batch {
            activations.clear();
            activations.push(x.to_vec());
            for (i, layer) in self.layers.iter().enumerate() {
                let mut out = Vec::with_capacity(layer.outputs);
                layer.apply(activations.last().expect("input pushed"), &mut out);
                if i + 1 < self.layers.len() {
                    out.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                activations.push(out);
            }
            let z = activations[self.layers.len()][0];
            let mut delta = vec![(logistic(z) - y) * scale];
            for i in (0..self.layers.len()).rev() {
                let layer = &self.layers[i];
                let input = &activations[i];
                let g = &mut grad.layers[i];
                for o in 0..layer.outputs {
                    g.biases[o] += delta[o];
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gw, a) in row.iter_mut().zip(input) {
                        *gw += delta[o] * a;
                    }
                }
                if i > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for o in 0..layer.outputs {
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += delta[o] * w;
                        }
                    }
                    // rectifier derivative; the activation is zero exactly when inactive
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        grad
    }

    /// In-place `params -= learning_rate * grad`.
    pub fn step(&mut self, grad: &Gradient, learning_rate: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= learning_rate * d);
            l.biases.iter_mut().zip(&g.biases).for_each(|(b, d)| *b -= learning_rate * d);
        }
    }

    /// All parameters, layer by layer: weights (row-major) then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
    }
}

/// Parameter-shaped gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Dense>,
}

impl Gradient {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn norm(&self) -> f64 {
        self.flat().iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_layer(w: f64, b: f64) -> MlpModel {
        MlpModel::from_layers(vec![Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![w],
            biases: vec![b],
        }])
        .unwrap()
    }

    #[test]
    fn zero_model_outputs_one_half() {
        let m = MlpModel::from_layers(vec![Dense::zeros(3, 4), Dense::zeros(4, 1)]).unwrap();
        assert_eq!(m.forward(&[0.3, 0.9, 0.1]).unwrap(), 0.5);
        assert_eq!(single_layer(1.0, 0.0).forward(&[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn forward_checks_dimension() {
        let m = single_layer(1.0, 0.0);
        assert_eq!(
            m.forward(&[0.0, 1.0]),
            Err(ClassifierError::DimensionMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn forward_stays_inside_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::init(&[6, 16, 8, 1], &mut rng).unwrap();
        for _ in 0..1000 {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            let p = m.forward(&v).unwrap();
            assert!(p.is_finite() && p > 0.0 && p < 1.0);
        }
        let saturated = single_layer(1.0, 1e4);
        let p = saturated.forward(&[0.0]).unwrap();
        assert!(p < 1.0 && p > 0.5);
    }

    #[test]
    fn shape_chain_is_validated() {
        let bad = MlpModel::from_layers(vec![Dense::zeros(3, 4), Dense::zeros(5, 1)]);
        assert!(matches!(bad, Err(ClassifierError::Shape(_))));
        let two_out = MlpModel::from_layers(vec![Dense::zeros(3, 2)]);
        assert!(matches!(two_out, Err(ClassifierError::Shape(_))));
        let mut nan = Dense::zeros(1, 1);
        nan.biases[0] = f64::NAN;
        assert_eq!(MlpModel::from_layers(vec![nan]), Err(ClassifierError::NonFinite));
    }

    #[test]
    fn saturated_correct_prediction_has_tiny_gradient() {
        let m = single_layer(0.0, 30.0);
        let x = [0.7];
        let g = m.gradient(&[(&x, 1.0)]);
        assert!(g.norm() < 1e-3, "norm {}", g.norm());
    }

    #[test]
    fn duplicated_rows_do_not_change_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = MlpModel::init(&[4, 5, 1], &mut rng).unwrap();
        let x = [0.2, 0.4, 0.9, 0.1];
        let single = m.gradient(&[(&x, 1.0)]);
        let doubled = m.gradient(&[(&x, 1.0), (&x, 1.0)]);
        assert_eq!(single, doubled);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let mut m = MlpModel::init(&[4, 6, 5, 1], &mut rng).unwrap();
            let params: Vec<f64> = m.flat_params().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
            m.set_flat_params(&params);
            let xs: Vec<Vec<f64>> = (0..6).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let batch: Vec<(&[f64], f64)> = xs.iter().enumerate().map(|(i, x)| (x.as_slice(), (i % 2) as f64)).collect();
            let analytic = m.gradient(&batch).flat();
            let h = 1e-5;
            let mut probe = m.clone();
            let mut err = 0.0f64;
            for i in 0..params.len() {
                let mut p = params.clone();
                p[i] += h;
                probe.set_flat_params(&p);
                let up = probe.loss(&batch);
                p[i] -= 2.0 * h;
                probe.set_flat_params(&p);
                let down = probe.loss(&batch);
                err = err.max((analytic[i] - (up - down) / (2.0 * h)).abs());
            }
            let scale = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(err / scale < 1e-6, "error {err} at gradient norm {scale}");
        }
    }

    #[test]
    fn flat_params_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = MlpModel::init(&[3, 4, 1], &mut rng).unwrap();
        let mut n = MlpModel::from_layers(vec![Dense::zeros(3, 4), Dense::zeros(4, 1)]).unwrap();
        n.set_flat_params(&m.flat_params());
        assert_eq!(m, n);
        assert_eq!(m.layer_dims(), vec![3, 4, 1]);
    }
}
