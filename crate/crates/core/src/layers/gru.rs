//! Two-layer bidirectional GRU with per-clip valid lengths.
//!
//! Gate rows are stacked as reset, update, candidate:
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```
//!
//! Frames at or beyond a clip's length leave the hidden state untouched and
//! emit zeros, so the reverse direction of a padded clip starts at its last
//! valid frame.

use rand::{Rng, RngCore};

use super::{activation::sigmoid_scalar, glorot_uniform, join, Layer, Mode};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{gemm, Param, Real, Tensor};

#[derive(Clone, Debug)]
pub struct GruDirection<T = f32> {
    /// `[3H, D]`
    pub w_ih: Param<T>,
    /// `[3H, H]`
    pub w_hh: Param<T>,
    pub b_ih: Param<T>,
    pub b_hh: Param<T>,
    reverse: bool,
    cache: Option<DirCache<T>>,
}

#[derive(Clone, Debug)]
struct DirCache<T> {
    input: Tensor<T>,
    lengths: Vec<usize>,
    // All `[T, B, H]`, indexed by time step.
    h_prev: Vec<T>,
    r: Vec<T>,
    z: Vec<T>,
    n: Vec<T>,
    hn: Vec<T>,
}

impl<T: Real> GruDirection<T> {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: usize, reverse: bool, rng: &mut R) -> Self {
        Self::from_params(
            glorot_uniform(&[3 * hidden, input], input, 3 * hidden, rng),
            glorot_uniform(&[3 * hidden, hidden], hidden, 3 * hidden, rng),
            Tensor::zeros(&[3 * hidden]),
            Tensor::zeros(&[3 * hidden]),
            reverse,
        )
    }

    pub fn from_params(
        w_ih: Tensor<T>,
        w_hh: Tensor<T>,
        b_ih: Tensor<T>,
        b_hh: Tensor<T>,
        reverse: bool,
    ) -> Self {
        Self {
            w_ih: Param::new(w_ih),
            w_hh: Param::new(w_hh),
            b_ih: Param::new(b_ih),
            b_hh: Param::new(b_hh),
            reverse,
            cache: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.value.dim(1)
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.dim(1)
    }

    fn step_time(&self, s: usize, t: usize) -> usize {
        if self.reverse {
            t - 1 - s
        } else {
            s
        }
    }

    /// `[B,T,D] -> [B,T,H]`
    pub fn forward(&mut self, x: &Tensor<T>, lengths: &[usize]) -> Result<Tensor<T>> {
        let (b, t, d) = (x.dim(0), x.dim(1), x.dim(2));
        let h = self.hidden();
        if d != self.input_dim() {
            return Err(shape_err!(
                "gru expects input dim {}, got {d}",
                self.input_dim()
            ));
        }
        let g = 3 * h;
        let mut xproj = vec![T::zero(); b * t * g];
        for row in xproj.chunks_mut(g) {
            row.copy_from_slice(self.b_ih.value.data());
        }
        gemm(
            false,
            true,
            b * t,
            g,
            d,
            T::one(),
            x.data(),
            self.w_ih.value.data(),
            T::one(),
            &mut xproj,
        );

        let mut out = Tensor::zeros(&[b, t, h]);
        let mut state = vec![T::zero(); b * h];
        let mut hproj = vec![T::zero(); b * g];
        let mut cache = DirCache {
            input: x.clone(),
            lengths: lengths.to_vec(),
            h_prev: vec![T::zero(); t * b * h],
            r: vec![T::zero(); t * b * h],
            z: vec![T::zero(); t * b * h],
            n: vec![T::zero(); t * b * h],
            hn: vec![T::zero(); t * b * h],
        };
        for s in 0..t {
            let ti = self.step_time(s, t);
            for row in hproj.chunks_mut(g) {
                row.copy_from_slice(self.b_hh.value.data());
            }
            gemm(
                false,
                true,
                b,
                g,
                h,
                T::one(),
                &state,
                self.w_hh.value.data(),
                T::one(),
                &mut hproj,
            );
            let base = ti * b * h;
            cache.h_prev[base..base + b * h].copy_from_slice(&state);
            for bi in 0..b {
                if ti >= lengths[bi] {
                    continue;
                }
                let xp = &xproj[(bi * t + ti) * g..][..g];
                let hp = &hproj[bi * g..][..g];
                for j in 0..h {
                    let r = sigmoid_scalar(xp[j] + hp[j]);
                    let z = sigmoid_scalar(xp[h + j] + hp[h + j]);
                    let hn = hp[2 * h + j];
                    let n = (xp[2 * h + j] + r * hn).tanh();
                    let k = base + bi * h + j;
                    cache.r[k] = r;
                    cache.z[k] = z;
                    cache.n[k] = n;
                    cache.hn[k] = hn;
                    let hv = &mut state[bi * h + j];
                    *hv = (T::one() - z) * n + z * *hv;
                    out.data_mut()[(bi * t + ti) * h + j] = *hv;
                }
            }
        }
        self.cache = Some(cache);
        Ok(out)
    }

    /// Returns the gradient with respect to the `[B,T,D]` input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::BackwardBeforeForward("gru"))?;
        let x = &cache.input;
        let (b, t, d) = (x.dim(0), x.dim(1), x.dim(2));
        let h = self.hidden();
        let g = 3 * h;
        grad_out.expect_shape(&[b, t, h])?;

        let mut dxproj = vec![T::zero(); b * t * g];
        let mut dh = vec![T::zero(); b * h];
        let mut dhproj = vec![T::zero(); b * g];
        let mut dh_prev = vec![T::zero(); b * h];
        for s in (0..t).rev() {
            let ti = self.step_time(s, t);
            let base = ti * b * h;
            dhproj.fill(T::zero());
            for bi in 0..b {
                let valid = ti < cache.lengths[bi];
                for j in 0..h {
                    let k = base + bi * h + j;
                    if !valid {
                        dh_prev[bi * h + j] = dh[bi * h + j];
                        continue;
                    }
                    let dht = dh[bi * h + j] + grad_out.data()[(bi * t + ti) * h + j];
                    let (r, z, n, hn) = (cache.r[k], cache.z[k], cache.n[k], cache.hn[k]);
                    let hp = cache.h_prev[k];
                    let dn = dht * (T::one() - z);
                    let dz = dht * (hp - n);
                    dh_prev[bi * h + j] = dht * z;
                    let dan = dn * (T::one() - n * n);
                    let dr = dan * hn;
                    let daz = dz * z * (T::one() - z);
                    let dar = dr * r * (T::one() - r);
                    let dx = &mut dxproj[(bi * t + ti) * g..][..g];
                    dx[j] = dar;
                    dx[h + j] = daz;
                    dx[2 * h + j] = dan;
                    let dhp = &mut dhproj[bi * g..][..g];
                    dhp[j] = dar;
                    dhp[h + j] = daz;
                    dhp[2 * h + j] = dan * r;
                }
            }
            let h_prev = &cache.h_prev[base..base + b * h];
            gemm(
                true,
                false,
                g,
                h,
                b,
                T::one(),
                &dhproj,
                h_prev,
                T::one(),
                self.w_hh.grad.data_mut(),
            );
            for row in dhproj.chunks(g) {
                for (acc, &v) in self.b_hh.grad.data_mut().iter_mut().zip(row) {
                    *acc += v;
                }
            }
            gemm(
                false,
                false,
                b,
                h,
                g,
                T::one(),
                &dhproj,
                self.w_hh.value.data(),
                T::one(),
                &mut dh_prev,
            );
            std::mem::swap(&mut dh, &mut dh_prev);
        }

        gemm(
            true,
            false,
            g,
            d,
            b * t,
            T::one(),
            &dxproj,
            x.data(),
            T::one(),
            self.w_ih.grad.data_mut(),
        );
        for row in dxproj.chunks(g) {
            for (acc, &v) in self.b_ih.grad.data_mut().iter_mut().zip(row) {
                *acc += v;
            }
        }
        let mut grad_in = Tensor::zeros(&[b, t, d]);
        gemm(
            false,
            false,
            b * t,
            d,
            g,
            T::one(),
            &dxproj,
            self.w_ih.value.data(),
            T::zero(),
            grad_in.data_mut(),
        );
        Ok(grad_in)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        out.push((join(prefix, "w_ih"), &self.w_ih));
        out.push((join(prefix, "w_hh"), &self.w_hh));
        out.push((join(prefix, "b_ih"), &self.b_ih));
        out.push((join(prefix, "b_hh"), &self.b_hh));
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        out.push((join(prefix, "w_ih"), &mut self.w_ih));
        out.push((join(prefix, "w_hh"), &mut self.w_hh));
        out.push((join(prefix, "b_ih"), &mut self.b_ih));
        out.push((join(prefix, "b_hh"), &mut self.b_hh));
    }
}

/// Stacked bidirectional GRU; every layer outputs `[B,T,2H]` (forward half first).
#[derive(Clone, Debug)]
pub struct BiGru<T = f32> {
    pub layers: Vec<[GruDirection<T>; 2]>,
    lengths: Option<Vec<usize>>,
}

impl<T: Real> BiGru<T> {
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        num_layers: usize,
        rng: &mut R,
    ) -> Self {
        let layers = (0..num_layers)
            .map(|l| {
                let d = if l == 0 { input } else { 2 * hidden };
                [
                    GruDirection::new(d, hidden, false, rng),
                    GruDirection::new(d, hidden, true, rng),
                ]
            })
            .collect();
        Self {
            layers,
            lengths: None,
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0][0].hidden()
    }

    pub fn output_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn forward_masked(&mut self, x: &Tensor<T>, lengths: &[usize]) -> Result<Tensor<T>> {
        if x.ndim() != 3 {
            return Err(shape_err!(
                "bigru input must be [B,T,D], got {:?}",
                x.shape()
            ));
        }
        let (b, t) = (x.dim(0), x.dim(1));
        if t == 0 {
            return Err(shape_err!("bigru needs at least one time step"));
        }
        if lengths.len() != b || lengths.iter().any(|&l| l > t) {
            return Err(shape_err!(
                "bigru lengths {:?} inconsistent with input {:?}",
                lengths,
                x.shape()
            ));
        }
        let h = self.hidden();
        let mut cur = x.clone();
        for layer in &mut self.layers {
            let fwd = layer[0].forward(&cur, lengths)?;
            let bwd = layer[1].forward(&cur, lengths)?;
            let mut out = Tensor::zeros(&[b, t, 2 * h]);
            for ((o, f), r) in out
                .data_mut()
                .chunks_mut(2 * h)
                .zip(fwd.data().chunks(h))
                .zip(bwd.data().chunks(h))
            {
                o[..h].copy_from_slice(f);
                o[h..].copy_from_slice(r);
            }
            cur = out;
        }
        self.lengths = Some(lengths.to_vec());
        Ok(cur)
    }

    pub fn backward_masked(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if self.lengths.is_none() {
            return Err(Error::BackwardBeforeForward("bigru"));
        }
        let h = self.hidden();
        let mut grad = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            let (b, t) = (grad.dim(0), grad.dim(1));
            let mut gf = Tensor::zeros(&[b, t, h]);
            let mut gr = Tensor::zeros(&[b, t, h]);
            for ((g, f), r) in grad
                .data()
                .chunks(2 * h)
                .zip(gf.data_mut().chunks_mut(h))
                .zip(gr.data_mut().chunks_mut(h))
            {
                f.copy_from_slice(&g[..h]);
                r.copy_from_slice(&g[h..]);
            }
            let mut gin = layer[0].backward(&gf)?;
            gin.add_assign(&layer[1].backward(&gr)?)?;
            grad = gin;
        }
        Ok(grad)
    }
}

impl<T: Real> Layer<T> for BiGru<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode, _rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        if x.ndim() != 3 {
            return Err(shape_err!(
                "bigru input must be [B,T,D], got {:?}",
                x.shape()
            ));
        }
        let lengths = vec![x.dim(1); x.dim(0)];
        self.forward_masked(x, &lengths)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_masked(grad_out)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        for (l, layer) in self.layers.iter().enumerate() {
            layer[0].params(&join(prefix, &format!("l{l}.fwd")), out);
            layer[1].params(&join(prefix, &format!("l{l}.bwd")), out);
        }
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let [f, r] = layer;
            f.params_mut(&join(prefix, &format!("l{l}.fwd")), out);
            r.params_mut(&join(prefix, &format!("l{l}.bwd")), out);
        }
    }
}
