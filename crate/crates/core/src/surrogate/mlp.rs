//! Dense tanh network with hand-written reverse-mode differentiation.
//!
//! All parameters live in one flat vector; layer `l` owns a row-major
//! `out x in` weight block followed by its `out` biases. Hidden layers use
//! tanh, the output layer is affine.
//!
//! Two backward paths exist. The batched path (matrix products, used for
//! training) accumulates parameter gradients. The single-sample path
//! (plain loops) propagates a cotangent on the outputs back to the inputs
//! and is what kernels and Jacobians are built from.

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations of a batch, row-major `batch x width`.
#[derive(Debug, Clone, Default)]
pub struct BatchTape {
    batch: usize,
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl BatchTape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), beta: f64, c: &mut [f64], rsc: isize) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: strides describe in-bounds views of the given slices; `c` is
    // row-major `m x n` with row stride `rsc` and does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(m, k, n, 1.0, a.0.as_ptr(), a.1, a.2, b.0.as_ptr(), b.1, b.2, beta, c.as_mut_ptr(), rsc, 1);
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "bad layer sizes {sizes:?}");
        let count = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self { sizes: sizes.to_vec(), params: vec![0.0; count] }
    }

    /// Gaussian initialization with standard deviation `gain / sqrt(fan_in)`;
    /// gain 5/3 for tanh layers and 1 for the output layer. Biases start at zero.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut mlp = Self::zeros(sizes);
        let layers = mlp.num_layers();
        for l in 0..layers {
            let (n_in, _) = mlp.layer_dims(l);
            let gain = if l + 1 < layers { 5.0 / 3.0 } else { 1.0 };
            let dist = Normal::new(0.0, gain / (n_in as f64).sqrt()).expect("positive sd");
            let (w, _) = mlp.layer_range(l);
            for p in &mut mlp.params[w] {
                *p = dist.sample(rng);
            }
        }
        mlp
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        let expect = Self::zeros(&sizes).params.len();
        (params.len() == expect).then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        (self.sizes[l], self.sizes[l + 1])
    }

    /// Parameter ranges `(weights, biases)` of layer `l`.
    pub fn layer_range(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let start: usize = self.sizes.windows(2).take(l).map(|w| w[0] * w[1] + w[1]).sum();
        let (n_in, n_out) = self.layer_dims(l);
        let w_end = start + n_in * n_out;
        (start..w_end, w_end..w_end + n_out)
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).0]
    }

    pub fn biases(&self, l: usize) -> &[f64] {
        &self.params[self.layer_range(l).1]
    }

    fn is_hidden(&self, l: usize) -> bool {
        l + 1 < self.num_layers()
    }

    /// Single-sample forward pass returning every layer's activation.
    pub fn forward_tape(&self, x: &[f64]) -> Vec<Vec<f64>> {
        assert_eq!(x.len(), self.input_dim());
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(x.to_vec());
        for l in 0..self.num_layers() {
            let (n_in, n_out) = self.layer_dims(l);
            let w = self.weights(l);
            let b = self.biases(l);
            let input = &acts[l];
            let mut out = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &w[j * n_in..(j + 1) * n_in];
                let z = row.iter().zip(input).fold(b[j], |s, (wi, xi)| s + wi * xi);
                out.push(if self.is_hidden(l) { z.tanh() } else { z });
            }
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_tape(x).pop().expect("at least one layer")
    }

    /// Vector-Jacobian product: `cotangent^T d(output)/d(input)` at the point
    /// recorded in `tape`.
    pub fn vjp(&self, tape: &[Vec<f64>], cotangent: &[f64]) -> Vec<f64> {
        assert_eq!(cotangent.len(), self.output_dim());
        let mut delta = cotangent.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = self.layer_dims(l);
            if self.is_hidden(l) {
                for (d, a) in delta.iter_mut().zip(&tape[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let w = self.weights(l);
            let mut prev = vec![0.0; n_in];
            for (j, &d) in delta.iter().enumerate().take(n_out) {
                if d == 0.0 {
                    continue;
                }
                let row = &w[j * n_in..(j + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            delta = prev;
        }
        delta
    }

    /// Batched forward pass over row-major `batch x input_dim` inputs.
    pub fn forward_batch(&self, x: &[f64], batch: usize, tape: &mut BatchTape) {
        assert_eq!(x.len(), batch * self.input_dim());
        tape.batch = batch;
        tape.acts.resize(self.sizes.len(), Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(x);
        for l in 0..self.num_layers() {
            let (n_in, n_out) = self.layer_dims(l);
            let (wr, br) = self.layer_range(l);
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.reserve(batch * n_out);
            for _ in 0..batch {
                out.extend_from_slice(&self.params[br.clone()]);
            }
            // out (batch x n_out) += input (batch x n_in) * W^T (n_in x n_out)
            gemm(
                batch,
                n_in,
                n_out,
                (input, n_in as isize, 1),
                (&self.params[wr], 1, n_in as isize),
                1.0,
                out,
                n_out as isize,
            );
            if self.is_hidden(l) {
                for v in out.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
    }

    /// Accumulates parameter gradients of a loss whose gradient with respect
    /// to the batch outputs is `d_out` (row-major `batch x output_dim`) into
    /// `grad` (same layout as the parameters; overwritten).
    pub fn backward_batch(&self, tape: &BatchTape, d_out: &[f64], grad: &mut [f64]) {
        let batch = tape.batch;
        assert_eq!(d_out.len(), batch * self.output_dim());
        assert_eq!(grad.len(), self.params.len());
        let mut delta = d_out.to_vec();
        let mut prev = Vec::new();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = self.layer_dims(l);
            let (wr, br) = self.layer_range(l);
            if self.is_hidden(l) {
                for (d, a) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            // dW (n_out x n_in) = delta^T (n_out x batch) * A (batch x n_in)
            gemm(
                n_out,
                batch,
                n_in,
                (&delta, 1, n_out as isize),
                (&tape.acts[l], n_in as isize, 1),
                0.0,
                &mut grad[wr.clone()],
                n_in as isize,
            );
            let gb = &mut grad[br];
            gb.fill(0.0);
            for row in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                // prev (batch x n_in) = delta (batch x n_out) * W (n_out x n_in)
                prev.clear();
                prev.resize(batch * n_in, 0.0);
                gemm(
                    batch,
                    n_out,
                    n_in,
                    (&delta, n_out as isize, 1),
                    (&self.params[wr], n_in as isize, 1),
                    0.0,
                    &mut prev,
                    n_in as isize,
                );
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn small() -> Mlp {
        Mlp::init(&[5, 7, 6, 3], &mut rng::stream(11, rng::purpose::INIT, 0))
    }

    #[test]
    fn batch_forward_matches_single() {
        let mlp = small();
        let xs: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut tape = BatchTape::default();
        mlp.forward_batch(&xs, 4, &mut tape);
        for (row, x) in tape.output().chunks(3).zip(xs.chunks(5)) {
            let single = mlp.forward(x);
            for (a, b) in row.iter().zip(&single) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        let mut mlp = small();
        let xs: Vec<f64> = (0..15).map(|i| (i as f64 * 0.91).cos()).collect();
        let target: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let loss = |m: &Mlp| {
            let mut tape = BatchTape::default();
            m.forward_batch(&xs, 3, &mut tape);
            tape.output().iter().zip(&target).map(|(p, t)| 0.5 * (p - t) * (p - t)).sum::<f64>()
        };
        let mut tape = BatchTape::default();
        mlp.forward_batch(&xs, 3, &mut tape);
        let d_out: Vec<f64> = tape.output().iter().zip(&target).map(|(p, t)| p - t).collect();
        let mut grad = vec![0.0; mlp.params().len()];
        mlp.backward_batch(&tape, &d_out, &mut grad);
        let h = 1e-6;
        for i in (0..grad.len()).step_by(7) {
            let orig = mlp.params()[i];
            mlp.params_mut()[i] = orig + h;
            let up = loss(&mlp);
            mlp.params_mut()[i] = orig - h;
            let down = loss(&mlp);
            mlp.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", grad[i]);
        }
    }

    #[test]
    fn vjp_of_linear_layer_is_weight_row() {
        let mlp = Mlp::init(&[4, 3], &mut rng::stream(1, rng::purpose::INIT, 0));
        let tape = mlp.forward_tape(&[0.1, 0.2, 0.3, 0.4]);
        let g = mlp.vjp(&tape, &[0.0, 1.0, 0.0]);
        assert_eq!(g, mlp.weights(0)[4..8].to_vec());
    }
}
