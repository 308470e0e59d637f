//! Fully connected value network with ReLU hidden layers and a linear head.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// in × out
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((inputs, outputs)),
            b: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.w.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
}

/// Same shapes as the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `widths` lists every layer size, input first and output last.
    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            layers: widths
                .windows(2)
                .map(|w| Dense::zeros(w[0], w[1]))
                .collect(),
        }
    }

    /// He-normal weights (fan-in scaling, gain 2 for hidden layers, 1 for the
    /// head) and zero biases.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        let n = net.layers.len();
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i + 1 == n { 1.0 } else { 2.0 };
            let std = (gain / layer.inputs() as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            layer.w.mapv_inplace(|_| dist.sample(rng));
        }
        net
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(|l| l.outputs()));
        w
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn check(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Batch forward pass: rows are observations.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(&x)?;
        let n = self.layers.len();
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            h = h.dot(&l.w) + &l.b;
            if i + 1 < n {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::WidthMismatch {
            expected: self.input_width(),
            got: x.len(),
        })?;
        Ok(self.forward(view)?.row(0).to_vec())
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Cache)> {
        self.check(&x)?;
        let n = self.layers.len();
        let mut cache = Cache {
            inputs: Vec::with_capacity(n),
            pre: Vec::with_capacity(n.saturating_sub(1)),
        };
        let mut h = x.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = h.dot(&l.w) + &l.b;
            cache.inputs.push(h);
            if i + 1 < n {
                h = z.mapv(|v| v.max(0.0));
                cache.pre.push(z);
            } else {
                h = z;
            }
        }
        Ok((h, cache))
    }

    /// Gradient of a scalar loss given dL/d(output) for the cached batch.
    pub fn backward(&self, cache: &Cache, d_out: Array2<f64>) -> Grads {
        let n = self.layers.len();
        let mut grads: Vec<Dense> = Vec::with_capacity(n);
        let mut delta = d_out;
        for i in (0..n).rev() {
            let input = &cache.inputs[i];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w.t());
                back.zip_mut_with(&cache.pre[i - 1], |d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Dense { w: gw, b: gb });
        }
        grads.reverse();
        Grads { layers: grads }
    }

    /// θ⁻ ← μθ + (1−μ)θ⁻, applied to `self` as the target.
    pub fn soft_update_from(&mut self, online: &Mlp, mu: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_mut_with(&o.w, |a, &b| *a = mu * b + (1.0 - mu) * *a);
            t.b.zip_mut_with(&o.b, |a, &b| *a = mu * b + (1.0 - mu) * *a);
        }
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::WidthMismatch {
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|x| *x = it.next().unwrap_or(0.0));
            l.b.iter_mut().for_each(|x| *x = it.next().unwrap_or(0.0));
        }
        Ok(())
    }
}

impl Grads {
    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.w.iter());
            v.extend(l.b.iter());
        }
        v
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|x| x.is_finite()))
    }
}

/// Index of the largest unmasked value, lowest index on ties.
pub fn masked_argmax(values: &[f64], mask: &[bool]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Largest unmasked value, or None when everything is masked.
pub fn masked_max(values: &[f64], mask: &[bool]) -> Option<f64> {
    masked_argmax(values, mask).map(|i| values[i])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]);
        let y = net.forward(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_computed_toy() {
        // 1-2-1: h = relu([2x+1, -x]), y = 3h0 + 4h1 + 0.5
        let mut net = Mlp::zeros(&[1, 2, 1]);
        net.layers[0].w = array![[2.0, -1.0]];
        net.layers[0].b = array![1.0, 0.0];
        net.layers[1].w = array![[3.0], [4.0]];
        net.layers[1].b = array![0.5];
        // x = 1: h = (3, 0), y = 9.5
        assert_eq!(net.forward_one(&[1.0]).unwrap(), vec![9.5]);
        // x = -2: h = (0, 2), y = 8.5
        assert_eq!(net.forward_one(&[-2.0]).unwrap(), vec![8.5]);
    }

    #[test]
    fn width_mismatch_rejected() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(matches!(
            net.forward_one(&[1.0]),
            Err(Error::WidthMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn argmax_respects_mask_and_ties() {
        assert_eq!(masked_argmax(&[5.0, 1.0, 5.0], &[false, true, true]), Some(2));
        assert_eq!(masked_argmax(&[2.0, 2.0], &[true, true]), Some(0));
        assert_eq!(masked_argmax(&[2.0], &[false]), None);
    }

    #[test]
    fn soft_update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let online = Mlp::init(&[2, 3, 1], &mut rng);
        let mut t = Mlp::zeros(&[2, 3, 1]);
        t.soft_update_from(&online, 1.0);
        assert_eq!(t, online);
        let before = t.clone();
        t.soft_update_from(&Mlp::zeros(&[2, 3, 1]), 0.0);
        assert_eq!(t, before);

        let mut a = Mlp::zeros(&[1, 1]);
        a.layers[0].w[[0, 0]] = 1.0;
        let mut b = Mlp::zeros(&[1, 1]);
        b.soft_update_from(&a, 0.01);
        assert!((b.layers[0].w[[0, 0]] - 0.01).abs() < 1e-15);
    }
}
