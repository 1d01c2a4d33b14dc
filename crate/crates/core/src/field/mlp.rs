use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dynamics, ParamVec, VectorField};
use crate::error::{Error, Result};

/// Time-dependent tanh MLP, `f(z, t, θ) = MLP([z, t])`.
///
/// `widths[0] = dim_state + 1` (time is appended to the input) and the last
/// width equals `dim_state`. Hidden layers use `tanh`; the output layer is
/// affine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpField {
    widths: Vec<usize>,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

impl MlpField {
    /// A field on `dim_state` variables with the given hidden widths.
    pub fn new(dim_state: usize, hidden: &[usize]) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim_state + 1);
        widths.extend_from_slice(hidden);
        widths.push(dim_state);
        Self::from_widths(widths)
    }

    pub fn from_widths(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "an MLP needs at least two widths".into(),
            ));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidConfig("MLP widths must be positive".into()));
        }
        let dim = *widths.last().unwrap();
        if widths[0] != dim + 1 {
            return Err(Error::InvalidConfig(format!(
                "input width {} must equal state dimension {} plus one (time)",
                widths[0], dim
            )));
        }
        Ok(MlpField { widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    fn layers(&self) -> impl Iterator<Item = Layer> + '_ {
        let mut offset = 0;
        self.widths.windows(2).map(move |w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = offset;
            let bias = weights + fan_in * fan_out;
            offset = bias + fan_out;
            Layer {
                fan_in,
                fan_out,
                weights,
                bias,
            }
        })
    }

    /// Deterministic initialisation: every entry uniform in
    /// `[-1/√fan_in, 1/√fan_in]`, drawn in flat-layout order.
    pub fn init_params(&self, seed: u64) -> ParamVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(self.dim_params());
        for layer in self.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for _ in 0..(layer.fan_in + 1) * layer.fan_out {
                theta.push(rng.gen_range(-bound..bound));
            }
        }
        ParamVec::new(theta)
    }

    /// Forward pass recording every layer's input; the last entry is the
    /// network output.
    fn forward(&self, z: &[f64], t: f64, theta: &[f64]) -> Vec<Vec<f64>> {
        let mut x = Vec::with_capacity(z.len() + 1);
        x.extend_from_slice(z);
        x.push(t);
        let n_layers = self.widths.len() - 1;
        let mut tape = Vec::with_capacity(n_layers + 1);
        for (l, layer) in self.layers().enumerate() {
            let w = &theta[layer.weights..layer.bias];
            let b = &theta[layer.bias..layer.bias + layer.fan_out];
            let mut y: Vec<f64> = w
                .chunks_exact(layer.fan_in)
                .zip(b)
                .map(|(row, bi)| row.iter().zip(&x).map(|(wij, xj)| wij * xj).sum::<f64>() + bi)
                .collect();
            if l + 1 < n_layers {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            tape.push(std::mem::replace(&mut x, y));
        }
        tape.push(x);
        tape
    }
}

impl Dynamics for MlpField {
    fn dim_state(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn dim_params(&self) -> usize {
        self.widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn eval_units(&self) -> usize {
        self.widths.len() - 1
    }

    fn eval_into(&self, z: &[f64], t: f64, theta: &[f64], out: &mut [f64]) {
        let mut tape = self.forward(z, t, theta);
        out.copy_from_slice(&tape.pop().unwrap());
    }
}

impl VectorField for MlpField {
    fn vjp_into(
        &self,
        z: &[f64],
        t: f64,
        theta: &[f64],
        a: &[f64],
        grad_z: &mut [f64],
        grad_theta: &mut [f64],
    ) {
        let tape = self.forward(z, t, theta);
        let layers: Vec<Layer> = self.layers().collect();
        let mut g = a.to_vec();
        for (l, layer) in layers.iter().enumerate().rev() {
            // g is the cotangent of this layer's output; fold tanh' for hidden layers
            if l + 1 < layers.len() {
                for (gi, yi) in g.iter_mut().zip(&tape[l + 1]) {
                    *gi *= 1.0 - yi * yi;
                }
            }
            let input = &tape[l];
            let w = &theta[layer.weights..layer.bias];
            let mut g_in = vec![0.0; layer.fan_in];
            for (i, gi) in g.iter().enumerate() {
                let row = i * layer.fan_in;
                for (j, xj) in input.iter().enumerate() {
                    grad_theta[layer.weights + row + j] = gi * xj;
                    g_in[j] += w[row + j] * gi;
                }
                grad_theta[layer.bias + i] = *gi;
            }
            g = g_in;
        }
        // drop the time component
        grad_z.copy_from_slice(&g[..grad_z.len()]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{eval, vjp, EvalCounter};

    fn central_fd(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], a: &[f64]) -> Vec<f64> {
        // ⟨a, ∂f/∂x_i⟩ by central differences, h = 1e-5 (1 + |x_i|)
        let mut xp = x.to_vec();
        (0..x.len())
            .map(|i| {
                let h = 1e-5 * (1.0 + x[i].abs());
                xp[i] = x[i] + h;
                let fp = f(&xp);
                xp[i] = x[i] - h;
                let fm = f(&xp);
                xp[i] = x[i];
                a.iter()
                    .zip(fp.iter().zip(&fm))
                    .map(|(ak, (p, m))| ak * (p - m) / (2.0 * h))
                    .sum()
            })
            .collect()
    }

    fn rel_err(x: &[f64], y: &[f64]) -> f64 {
        let num = x
            .iter()
            .zip(y)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let den = y.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-300);
        num / den
    }

    #[test]
    fn layout_and_sizes() {
        let f = MlpField::new(2, &[8]).unwrap();
        assert_eq!(f.widths(), &[3, 8, 2]);
        assert_eq!(f.dim_params(), 3 * 8 + 8 + 8 * 2 + 2);
        assert_eq!(f.eval_units(), 2);
        assert_eq!(f.init_params(7).len(), f.dim_params());
        assert!(MlpField::from_widths(vec![2, 4, 2]).is_err());
        assert!(MlpField::from_widths(vec![3]).is_err());
    }

    #[test]
    fn golden_output_seed_42() {
        let f = MlpField::new(2, &[16]).unwrap();
        let theta = f.init_params(42);
        let mut c = EvalCounter::default();
        let out = eval(&f, &[1.0, 0.0], 0.5, &theta, &mut c).unwrap();
        // frozen regression anchor, computed once by this implementation
        let golden = [GOLDEN_0, GOLDEN_1];
        for (o, g) in out.iter().zip(golden) {
            assert_eq!(*o, g, "golden drift: {out:?}");
        }
    }

    const GOLDEN_0: f64 = 0.49883265629133716;
    const GOLDEN_1: f64 = 0.3628366992517944;

    #[test]
    fn vjps_match_finite_differences() {
        let f = MlpField::new(2, &[8, 6]).unwrap();
        let theta = f.init_params(3);
        let z = [0.4, -1.2];
        let t = 0.3;
        let a = [0.7, -0.2];
        let mut c = EvalCounter::default();
        let (gz, gth) = vjp(&f, &z, t, &theta, &a, &mut c).unwrap();

        let fd_z = central_fd(|x| f.forward(x, t, &theta).pop().unwrap(), &z, &a);
        assert!(rel_err(&gz, &fd_z) <= 1e-5, "{gz:?} vs {fd_z:?}");

        let fd_th = central_fd(|th| f.forward(&z, t, th).pop().unwrap(), &theta, &a);
        assert!(rel_err(&gth, &fd_th) <= 1e-5);
    }
}
