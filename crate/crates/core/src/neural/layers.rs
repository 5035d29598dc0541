//! Dense layers and the gated recurrent cell, each with a forward pass and
//! its reverse-mode adjoint.

use rand::Rng;

use super::tensor::{affine, affine_transpose_acc, outer_acc, sigmoid, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            weight: Tensor::glorot(outputs, inputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        affine(self.weight.data(), self.bias.data(), x, y);
    }

    /// `y = tanh(W x + b)`.
    pub fn forward_tanh(&self, x: &[f64], y: &mut [f64]) {
        self.forward(x, y);
        for v in y.iter_mut() {
            *v = v.tanh();
        }
    }

    /// Accumulates parameter gradients for upstream `dy` (w.r.t. the
    /// pre-activation) and, when requested, adds `Wᵀ dy` into `dx`.
    pub fn backward(&self, grad: &mut Dense, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        outer_acc(grad.weight.data_mut(), grad.bias.data_mut(), dy, x);
        if let Some(dx) = dx {
            affine_transpose_acc(self.weight.data(), dy, dx);
        }
    }

    pub fn tensors(&self) -> [&Tensor; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Converts `dy` w.r.t. `tanh` outputs `y` into the pre-activation gradient.
pub fn tanh_backward(y: &[f64], dy: &mut [f64]) {
    for (g, v) in dy.iter_mut().zip(y) {
        *g *= 1.0 - v * v;
    }
}

/// Gated recurrent unit with reset gate `r`, update gate `z` and candidate
/// `n`:
///
/// ```text
/// r  = σ(W_r x + b_r + U_r h + c_r)
/// z  = σ(W_z x + b_z + U_z h + c_z)
/// n  = tanh(W_n x + b_n + r ⊙ (U_n h + c_n))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
///
/// Input weights are stacked `[r; z; n]` into one `[3H, I]` matrix, recurrent
/// weights into `[3H, H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub b_input: Tensor,
    pub b_hidden: Tensor,
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct GruCache {
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub n: Vec<f64>,
    /// `U_n h + c_n`, before the reset gate is applied.
    pub hn: Vec<f64>,
}

impl GruCell {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            w_input: Tensor::zeros(&[3 * hidden, inputs]),
            w_hidden: Tensor::zeros(&[3 * hidden, hidden]),
            b_input: Tensor::zeros(&[3 * hidden]),
            b_hidden: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn init<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let mut w_input = Tensor::zeros(&[3 * hidden, inputs]);
        let mut w_hidden = Tensor::zeros(&[3 * hidden, hidden]);
        for gate in 0..3 {
            let wi = Tensor::glorot(hidden, inputs, rng);
            let wh = Tensor::glorot(hidden, hidden, rng);
            w_input.data_mut()[gate * hidden * inputs..(gate + 1) * hidden * inputs]
                .copy_from_slice(wi.data());
            w_hidden.data_mut()[gate * hidden * hidden..(gate + 1) * hidden * hidden]
                .copy_from_slice(wh.data());
        }
        Self {
            w_input,
            w_hidden,
            b_input: Tensor::zeros(&[3 * hidden]),
            b_hidden: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[1]
    }

    pub fn inputs(&self) -> usize {
        self.w_input.shape()[1]
    }

    /// Writes the new state into `out` and, when given, fills `cache`.
    pub fn step(&self, x: &[f64], h: &[f64], out: &mut [f64], cache: Option<&mut GruCache>) {
        let hs = self.hidden();
        debug_assert_eq!(x.len(), self.inputs(), "GRU input size");
        debug_assert_eq!(h.len(), hs, "GRU state size");
        let mut gi = vec![0.0; 3 * hs];
        let mut gh = vec![0.0; 3 * hs];
        affine(self.w_input.data(), self.b_input.data(), x, &mut gi);
        affine(self.w_hidden.data(), self.b_hidden.data(), h, &mut gh);
        let mut r = vec![0.0; hs];
        let mut z = vec![0.0; hs];
        let mut n = vec![0.0; hs];
        for j in 0..hs {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[hs + j] + gh[hs + j]);
            n[j] = (gi[2 * hs + j] + r[j] * gh[2 * hs + j]).tanh();
            out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
        }
        if let Some(c) = cache {
            c.r = r;
            c.z = z;
            c.n = n;
            c.hn = gh[2 * hs..].to_vec();
        }
    }

    /// Given `dout = ∂L/∂h'`, accumulates weight gradients into `grad` and
    /// adds `∂L/∂x` into `dx` and `∂L/∂h` into `dh`.
    pub fn backward(
        &self,
        grad: &mut GruCell,
        cache: &GruCache,
        x: &[f64],
        h: &[f64],
        dout: &[f64],
        dx: Option<&mut [f64]>,
        dh: &mut [f64],
    ) {
        let hs = self.hidden();
        let mut d_gi = vec![0.0; 3 * hs];
        let mut d_gh = vec![0.0; 3 * hs];
        for j in 0..hs {
            let (r, z, n, hn) = (cache.r[j], cache.z[j], cache.n[j], cache.hn[j]);
            let g = dout[j];
            let dn = g * (1.0 - z);
            let dz = g * (h[j] - n);
            dh[j] += g * z;
            let dn_pre = dn * (1.0 - n * n);
            let dr = dn_pre * hn;
            let dr_pre = dr * r * (1.0 - r);
            let dz_pre = dz * z * (1.0 - z);
            d_gi[j] = dr_pre;
            d_gi[hs + j] = dz_pre;
            d_gi[2 * hs + j] = dn_pre;
            d_gh[j] = dr_pre;
            d_gh[hs + j] = dz_pre;
            d_gh[2 * hs + j] = dn_pre * r;
        }
        outer_acc(grad.w_input.data_mut(), grad.b_input.data_mut(), &d_gi, x);
        outer_acc(grad.w_hidden.data_mut(), grad.b_hidden.data_mut(), &d_gh, h);
        if let Some(dx) = dx {
            affine_transpose_acc(self.w_input.data(), &d_gi, dx);
        }
        affine_transpose_acc(self.w_hidden.data(), &d_gh, dh);
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w_input, &self.w_hidden, &self.b_input, &self.b_hidden]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.w_input,
            &mut self.w_hidden,
            &mut self.b_input,
            &mut self.b_hidden,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_keeps_zero_state() {
        let cell = GruCell::zeros(3, 4);
        let mut out = vec![1.0; 4];
        cell.step(&[0.3, -2.0, 7.0], &[0.0; 4], &mut out, None);
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn state_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cell = GruCell::init(3, 5, &mut rng);
        for v in cell.w_input.data_mut() {
            *v *= 20.0;
        }
        let mut h = vec![0.9, -0.9, 0.0, 0.5, -0.999];
        let mut out = vec![0.0; 5];
        for i in 0..50 {
            let x = [i as f64, -(i as f64) * 3.0, 100.0];
            cell.step(&x, &h, &mut out, None);
            assert!(out.iter().all(|v| v.abs() <= 1.0));
            h.copy_from_slice(&out);
        }
    }

    /// Step-by-step evaluation of the update equations for a 1-input,
    /// 2-unit cell with hand-picked weights.
    #[test]
    fn matches_manual_evaluation() {
        let cell = GruCell {
            // rows: r0 r1 z0 z1 n0 n1
            w_input: Tensor::from_vec(&[6, 1], vec![0.5, -0.25, 0.1, 0.3, 1.0, -1.0]),
            w_hidden: Tensor::from_vec(
                &[6, 2],
                vec![0.2, 0.0, 0.0, 0.4, -0.3, 0.1, 0.0, 0.0, 0.5, 0.5, 0.25, -0.75],
            ),
            b_input: Tensor::from_vec(&[6], vec![0.0, 0.1, 0.0, 0.0, 0.2, 0.0]),
            b_hidden: Tensor::from_vec(&[6], vec![0.0, 0.0, 0.05, 0.0, 0.0, 0.1]),
        };
        let x = [2.0];
        let h = [0.5, -0.5];
        let mut out = [0.0; 2];
        cell.step(&x, &h, &mut out, None);

        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let r0 = s(0.5 * 2.0 + 0.2 * 0.5);
        let r1 = s(-0.25 * 2.0 + 0.1 + 0.4 * -0.5);
        let z0 = s(0.1 * 2.0 + (-0.3 * 0.5 + 0.1 * -0.5) + 0.05);
        let z1 = s(0.3 * 2.0);
        let n0 = (1.0 * 2.0 + 0.2 + r0 * (0.5 * 0.5 + 0.5 * -0.5)).tanh();
        let n1 = (-1.0 * 2.0 + r1 * (0.25 * 0.5 + -0.75 * -0.5 + 0.1)).tanh();
        let expect = [(1.0 - z0) * n0 + z0 * 0.5, (1.0 - z1) * n1 + z1 * -0.5];
        for j in 0..2 {
            assert!((out[j] - expect[j]).abs() < 1e-14, "{j}: {} vs {}", out[j], expect[j]);
        }
    }

    #[test]
    fn gru_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cell = GruCell::init(3, 4, &mut rng);
        let mut cell = cell;
        for v in cell.b_input.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect();
        let weights: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |c: &GruCell, x: &[f64], h: &[f64]| {
            let mut out = [0.0; 4];
            c.step(x, h, &mut out, None);
            out.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut cache = GruCache::default();
        let mut out = [0.0; 4];
        cell.step(&x, &h, &mut out, Some(&mut cache));
        let mut grad = GruCell::zeros(3, 4);
        let mut dx = vec![0.0; 3];
        let mut dh = vec![0.0; 4];
        cell.backward(&mut grad, &cache, &x, &h, &weights, Some(&mut dx), &mut dh);

        let eps = 1e-6;
        for i in 0..3 {
            let mut xp = x.clone();
            xp[i] += eps;
            let mut xm = x.clone();
            xm[i] -= eps;
            let fd = (loss(&cell, &xp, &h) - loss(&cell, &xm, &h)) / (2.0 * eps);
            assert!((fd - dx[i]).abs() < 1e-8);
        }
        for i in 0..4 {
            let mut hp = h.clone();
            hp[i] += eps;
            let mut hm = h.clone();
            hm[i] -= eps;
            let fd = (loss(&cell, &x, &hp) - loss(&cell, &x, &hm)) / (2.0 * eps);
            assert!((fd - dh[i]).abs() < 1e-8);
        }
        for t in 0..4 {
            for i in 0..cell.tensors()[t].len() {
                let mut p = cell.clone();
                p.tensors_mut()[t].data_mut()[i] += eps;
                let mut m = cell.clone();
                m.tensors_mut()[t].data_mut()[i] -= eps;
                let fd = (loss(&p, &x, &h) - loss(&m, &x, &h)) / (2.0 * eps);
                let an = grad.tensors()[t].data()[i];
                assert!((fd - an).abs() < 1e-8, "tensor {t} idx {i}: {fd} vs {an}");
            }
        }
    }
}
