//! Convolutional regressor for 6×48 spectral feature maps, written out by
//! hand: 3×3 same-padded convolutions with ReLU, ceil-mode 2×2 max pooling,
//! a ReLU dense layer, dropout and a sigmoid output unit.
//!
//! Activations are stored channel-major as `[C, B, H, W]` so every
//! convolution tap is a single GEMM over the whole batch.
//!
//! Shape chain for the default architecture (input 1×6×48):
//!
//! | layer            | output        |
//! |------------------|---------------|
//! | conv 64 + relu   | 64 × 6 × 48   |
//! | maxpool 2×2      | 64 × 3 × 24   |
//! | conv 128 + relu  | 128 × 3 × 24  |
//! | maxpool 2×2      | 128 × 2 × 12  |
//! | conv 256 + relu  | 256 × 2 × 12  |
//! | maxpool 2×2      | 256 × 1 × 6   |
//! | conv 512 + relu  | 512 × 1 × 6   |
//! | conv 512 + relu  | 512 × 1 × 6   |
//! | flatten          | 3072          |
//! | dense 64 + relu  | 64            |
//! | dropout 0.2      | 64            |
//! | dense 1 sigmoid  | 1             |

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::par;

/// Floating-point element usable by the network.
pub trait Real: Float + Send + Sync + std::fmt::Debug + 'static {
    /// `c = alpha·a·b + beta·c` with arbitrary strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: Self,
        a: *const Self, rsa: isize, csa: isize,
        b: *const Self, rsb: isize, csb: isize,
        beta: Self,
        c: *mut Self, rsc: isize, csc: isize,
    );

    fn from_f64(v: f64) -> Self;
}

impl Real for f32 {
    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: f32,
        a: *const f32, rsa: isize, csa: isize,
        b: *const f32, rsb: isize, csb: isize,
        beta: f32,
        c: *mut f32, rsc: isize, csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

impl Real for f64 {
    unsafe fn gemm_raw(
        m: usize, k: usize, n: usize, alpha: f64,
        a: *const f64, rsa: isize, csa: isize,
        b: *const f64, rsb: isize, csb: isize,
        beta: f64,
        c: *mut f64, rsc: isize, csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f64(v: f64) -> Self {
        v
    }
}

/// Strided view of a matrix inside a slice.
#[derive(Clone, Copy)]
struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T> Mat<'a, T> {
    fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Mat { data, rows, cols, rs: cols, cs: 1 }
    }

    fn strided(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        Mat { data, rows, cols, rs, cs }
    }

    fn t(self) -> Self {
        Mat { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn max_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
        }
    }
}

/// `c[m×n] (row stride rsc, col stride csc) = a·b + beta·c`.
fn gemm<T: Real>(a: Mat<T>, b: Mat<T>, beta: T, c: &mut [T], rsc: usize, csc: usize) {
    assert_eq!(a.cols, b.rows);
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.max_index() < a.data.len() || k == 0);
    assert!(b.max_index() < b.data.len() || k == 0);
    assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    let contiguous = csc == 1 && rsc == n;
    if contiguous && par::is_parallel() && m >= 32 && m * n * k >= 1 << 20 {
        // split output rows; each chunk is an independent GEMM
        let rows_per = m.div_ceil(8).max(16);
        par::for_each_chunk_mut(&mut c[..m * n], rows_per * n, |ci, chunk| {
            let r0 = ci * rows_per;
            let rows = chunk.len() / n;
            // SAFETY: bounds asserted above; chunk covers rows r0..r0+rows.
            unsafe {
                T::gemm_raw(
                    rows, k, n, T::one(),
                    a.data.as_ptr().add(r0 * a.rs), a.rs as isize, a.cs as isize,
                    b.data.as_ptr(), b.rs as isize, b.cs as isize,
                    beta, chunk.as_mut_ptr(), n as isize, 1,
                );
            }
        });
        return;
    }
    // SAFETY: all accessed indices were bounds-checked above.
    unsafe {
        T::gemm_raw(
            m, k, n, T::one(),
            a.data.as_ptr(), a.rs as isize, a.cs as isize,
            b.data.as_ptr(), b.rs as isize, b.cs as isize,
            beta, c.as_mut_ptr(), rsc as isize, csc as isize,
        );
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    pub input_h: usize,
    pub input_w: usize,
    pub filters: Vec<usize>,
    /// Whether a 2×2 max pool follows each convolution.
    pub pool_after: Vec<bool>,
    pub dense_units: usize,
    pub dropout: f64,
}

impl Default for CnnArch {
    fn default() -> Self {
        CnnArch {
            input_h: 6,
            input_w: 48,
            filters: vec![64, 128, 256, 512, 512],
            pool_after: vec![true, true, true, false, false],
            dense_units: 64,
            dropout: 0.2,
        }
    }
}

impl CnnArch {
    /// Same layout with every layer narrowed, for gradient checks and tests.
    pub fn tiny(filters: usize, dense_units: usize) -> Self {
        CnnArch {
            filters: vec![filters; 5],
            dense_units,
            ..CnnArch::default()
        }
    }

    /// `(channels, height, width)` after each convolution block.
    pub fn shapes(&self) -> Vec<(usize, usize, usize)> {
        let (mut h, mut w) = (self.input_h, self.input_w);
        self.filters
            .iter()
            .zip(&self.pool_after)
            .map(|(&f, &pool)| {
                if pool {
                    h = h.div_ceil(2);
                    w = w.div_ceil(2);
                }
                (f, h, w)
            })
            .collect()
    }

    pub fn flat_features(&self) -> usize {
        let (c, h, w) = *self.shapes().last().expect("at least one conv layer");
        c * h * w
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    in_c: usize,
    out_c: usize,
    h: usize,
    w: usize,
    pool: bool,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone)]
struct DenseLayer {
    in_f: usize,
    out_f: usize,
    w_off: usize,
    b_off: usize,
}

/// Network topology plus one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Cnn<T: Real> {
    pub arch: CnnArch,
    convs: Vec<ConvLayer>,
    hidden: DenseLayer,
    out: DenseLayer,
    pub params: Vec<T>,
}

/// Activations saved by the forward pass.
pub struct ForwardCache<T> {
    batch: usize,
    /// Input to each conv layer, `[in_c, B, h, w]`.
    conv_in: Vec<Vec<T>>,
    /// Post-ReLU conv outputs (pre-pool).
    conv_out: Vec<Vec<T>>,
    /// Argmax positions for pooled layers.
    pool_idx: Vec<Vec<u32>>,
    flat: Vec<T>,
    hidden: Vec<T>,
    dropout_mask: Option<Vec<T>>,
    dropped: Vec<T>,
    pub output: Vec<T>,
}

const TAPS: [(isize, isize); 9] = [
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 0), (0, 1),
    (1, -1), (1, 0), (1, 1),
];

/// Copies `src[C, B, H, W]` shifted by `(dy, dx)` into `dst`, zero filled.
fn shift_into<T: Real>(src: &[T], dst: &mut [T], cb: usize, h: usize, w: usize, dy: isize, dx: isize) {
    for plane in 0..cb {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            let sy = y as isize + dy;
            let drow = &mut d[y * w..(y + 1) * w];
            if sy < 0 || sy >= h as isize {
                drow.fill(T::zero());
                continue;
            }
            let srow = &s[sy as usize * w..(sy as usize + 1) * w];
            for x in 0..w {
                let sx = x as isize + dx;
                drow[x] = if sx < 0 || sx >= w as isize { T::zero() } else { srow[sx as usize] };
            }
        }
    }
}

/// Adds `grad` (aligned with a shifted copy) back onto the unshifted layout.
fn unshift_add<T: Real>(grad: &[T], dst: &mut [T], cb: usize, h: usize, w: usize, dy: isize, dx: isize) {
    for plane in 0..cb {
        let g = &grad[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            let sy = y as isize + dy;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = x as isize + dx;
                if sx >= 0 && sx < w as isize {
                    d[sy as usize * w + sx as usize] = d[sy as usize * w + sx as usize] + g[y * w + x];
                }
            }
        }
    }
}

fn tap_active(h: usize, w: usize, dy: isize, dx: isize) -> bool {
    (dy.unsigned_abs() < h) && (dx.unsigned_abs() < w)
}

impl<T: Real> Cnn<T> {
    pub fn new(arch: CnnArch, seed: u64) -> Self {
        assert_eq!(arch.filters.len(), arch.pool_after.len());
        let mut convs = Vec::new();
        let mut off = 0;
        let (mut in_c, mut h, mut w) = (1usize, arch.input_h, arch.input_w);
        for (&f, &pool) in arch.filters.iter().zip(&arch.pool_after) {
            let w_off = off;
            off += f * in_c * 9;
            let b_off = off;
            off += f;
            convs.push(ConvLayer { in_c, out_c: f, h, w, pool, w_off, b_off });
            in_c = f;
            if pool {
                h = h.div_ceil(2);
                w = w.div_ceil(2);
            }
        }
        let flat = in_c * h * w;
        let hidden = DenseLayer { in_f: flat, out_f: arch.dense_units, w_off: off, b_off: off + flat * arch.dense_units };
        off = hidden.b_off + arch.dense_units;
        let out = DenseLayer { in_f: arch.dense_units, out_f: 1, w_off: off, b_off: off + arch.dense_units };
        off = out.b_off + 1;

        let mut params = vec![T::zero(); off];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |params: &mut [T], start: usize, len: usize, limit: f64| {
            for p in &mut params[start..start + len] {
                *p = T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * limit);
            }
        };
        for c in &convs {
            let fan_in = (c.in_c * 9) as f64;
            fill(&mut params, c.w_off, c.out_c * c.in_c * 9, (6.0 / fan_in).sqrt());
        }
        fill(&mut params, hidden.w_off, hidden.in_f * hidden.out_f, (6.0 / hidden.in_f as f64).sqrt());
        fill(&mut params, out.w_off, out.in_f, (6.0 / (out.in_f + 1) as f64).sqrt());
        Cnn { arch, convs, hidden, out, params }
    }

    /// Named parameter tensors as `(name, shape, range into params)`.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, std::ops::Range<usize>)> {
        let mut out = Vec::new();
        for (i, c) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c.out_c, c.in_c, 3, 3], c.w_off..c.w_off + c.out_c * c.in_c * 9));
            out.push((format!("conv{i}.bias"), vec![c.out_c], c.b_off..c.b_off + c.out_c));
        }
        for (name, d) in [("dense", &self.hidden), ("output", &self.out)] {
            out.push((format!("{name}.weight"), vec![d.out_f, d.in_f], d.w_off..d.w_off + d.out_f * d.in_f));
            out.push((format!("{name}.bias"), vec![d.out_f], d.b_off..d.b_off + d.out_f));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_h * self.arch.input_w
    }

    /// Forward pass over `batch` maps laid out `[B, H, W]`. With `dropout_rng`
    /// set, dropout is applied (training mode).
    pub fn forward(&self, input: &[T], batch: usize, dropout_rng: Option<&mut ChaCha8Rng>) -> ForwardCache<T> {
        assert_eq!(input.len(), batch * self.input_len());
        let p = &self.params;
        let mut x = input.to_vec(); // [1, B, H, W] == [B, H, W]
        let mut conv_in = Vec::with_capacity(self.convs.len());
        let mut conv_out = Vec::with_capacity(self.convs.len());
        let mut pool_idx = Vec::with_capacity(self.convs.len());
        for c in &self.convs {
            let hw = c.h * c.w;
            let n = batch * hw;
            let mut y = vec![T::zero(); c.out_c * n];
            for o in 0..c.out_c {
                let b = p[c.b_off + o];
                y[o * n..(o + 1) * n].iter_mut().for_each(|v| *v = b);
            }
            let mut shifted = vec![T::zero(); c.in_c * n];
            for (t, &(dy, dx)) in TAPS.iter().enumerate() {
                if !tap_active(c.h, c.w, dy, dx) {
                    continue;
                }
                shift_into(&x, &mut shifted, c.in_c * batch, c.h, c.w, dy, dx);
                let wt = Mat::strided(&p[c.w_off + t..], c.out_c, c.in_c, c.in_c * 9, 9);
                gemm(wt, Mat::new(&shifted, c.in_c, n), T::one(), &mut y, n, 1);
            }
            y.iter_mut().for_each(|v| *v = v.max(T::zero()));
            conv_in.push(std::mem::take(&mut x));
            if c.pool {
                let (ph, pw) = (c.h.div_ceil(2), c.w.div_ceil(2));
                let mut pooled = vec![T::zero(); c.out_c * batch * ph * pw];
                let mut idx = vec![0u32; pooled.len()];
                for plane in 0..c.out_c * batch {
                    let src = &y[plane * hw..(plane + 1) * hw];
                    for py in 0..ph {
                        for px in 0..pw {
                            let mut best = T::neg_infinity();
                            let mut bi = 0;
                            for yy in 2 * py..(2 * py + 2).min(c.h) {
                                for xx in 2 * px..(2 * px + 2).min(c.w) {
                                    let v = src[yy * c.w + xx];
                                    if v > best {
                                        best = v;
                                        bi = yy * c.w + xx;
                                    }
                                }
                            }
                            let o = plane * ph * pw + py * pw + px;
                            pooled[o] = best;
                            idx[o] = bi as u32;
                        }
                    }
                }
                conv_out.push(y);
                pool_idx.push(idx);
                x = pooled;
            } else {
                conv_out.push(y.clone());
                pool_idx.push(Vec::new());
                x = y;
            }
        }
        // flatten [C, B, h, w] -> [B, C*h*w]
        let last = self.convs.last().unwrap();
        let (lh, lw) = if last.pool { (last.h.div_ceil(2), last.w.div_ceil(2)) } else { (last.h, last.w) };
        let lhw = lh * lw;
        let feat = last.out_c * lhw;
        let mut flat = vec![T::zero(); batch * feat];
        for ch in 0..last.out_c {
            for b in 0..batch {
                let src = &x[(ch * batch + b) * lhw..(ch * batch + b + 1) * lhw];
                flat[b * feat + ch * lhw..b * feat + (ch + 1) * lhw].copy_from_slice(src);
            }
        }
        let hd = &self.hidden;
        let mut hidden = vec![T::zero(); batch * hd.out_f];
        for b in 0..batch {
            hidden[b * hd.out_f..(b + 1) * hd.out_f].copy_from_slice(&p[hd.b_off..hd.b_off + hd.out_f]);
        }
        let wh = Mat::new(&p[hd.w_off..hd.w_off + hd.in_f * hd.out_f], hd.out_f, hd.in_f);
        gemm(Mat::new(&flat, batch, feat), wh.t(), T::one(), &mut hidden, hd.out_f, 1);
        hidden.iter_mut().for_each(|v| *v = v.max(T::zero()));

        let (dropout_mask, dropped) = match dropout_rng {
            Some(rng) if self.arch.dropout > 0.0 => {
                let keep = 1.0 - self.arch.dropout;
                let scale = T::from_f64(1.0 / keep);
                let mask: Vec<T> = (0..hidden.len())
                    .map(|_| if rng.random::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                let dropped = hidden.iter().zip(&mask).map(|(&h, &m)| h * m).collect();
                (Some(mask), dropped)
            }
            _ => (None, hidden.clone()),
        };

        let od = &self.out;
        let mut output = vec![p[od.b_off]; batch];
        for b in 0..batch {
            let row = &dropped[b * od.in_f..(b + 1) * od.in_f];
            let z = row
                .iter()
                .zip(&p[od.w_off..od.w_off + od.in_f])
                .fold(output[b], |acc, (&h, &w)| acc + h * w);
            output[b] = T::one() / (T::one() + (-z).exp());
        }
        ForwardCache { batch, conv_in, conv_out, pool_idx, flat, hidden, dropout_mask, dropped, output }
    }

    /// Gradient of the loss w.r.t. every parameter given `d_output`
    /// (dLoss/dSigmoidOutput, one value per batch item).
    pub fn backward(&self, cache: &ForwardCache<T>, d_output: &[T]) -> Vec<T> {
        let batch = cache.batch;
        assert_eq!(d_output.len(), batch);
        let p = &self.params;
        let mut g = vec![T::zero(); p.len()];

        // output unit
        let od = &self.out;
        let dz: Vec<T> = d_output
            .iter()
            .zip(&cache.output)
            .map(|(&d, &y)| d * y * (T::one() - y))
            .collect();
        let mut d_dropped = vec![T::zero(); batch * od.in_f];
        for b in 0..batch {
            g[od.b_off] = g[od.b_off] + dz[b];
            for j in 0..od.in_f {
                g[od.w_off + j] = g[od.w_off + j] + dz[b] * cache.dropped[b * od.in_f + j];
                d_dropped[b * od.in_f + j] = dz[b] * p[od.w_off + j];
            }
        }
        // dropout + relu
        let mut d_hidden = d_dropped;
        if let Some(mask) = &cache.dropout_mask {
            d_hidden.iter_mut().zip(mask).for_each(|(d, &m)| *d = *d * m);
        }
        d_hidden
            .iter_mut()
            .zip(&cache.hidden)
            .for_each(|(d, &h)| if h <= T::zero() { *d = T::zero() });

        // hidden dense
        let hd = &self.hidden;
        let feat = hd.in_f;
        for b in 0..batch {
            for j in 0..hd.out_f {
                g[hd.b_off + j] = g[hd.b_off + j] + d_hidden[b * hd.out_f + j];
            }
        }
        {
            // dW[out, in] = d_hidden^T[out, B] · flat[B, in]
            let dh = Mat::new(&d_hidden, batch, hd.out_f);
            let fl = Mat::new(&cache.flat, batch, feat);
            gemm(dh.t(), fl, T::one(), &mut g[hd.w_off..hd.w_off + hd.out_f * feat], feat, 1);
        }
        let mut d_flat = vec![T::zero(); batch * feat];
        {
            let wh = Mat::new(&p[hd.w_off..hd.w_off + hd.in_f * hd.out_f], hd.out_f, hd.in_f);
            gemm(Mat::new(&d_hidden, batch, hd.out_f), wh, T::zero(), &mut d_flat, feat, 1);
        }

        // unflatten into [C, B, h, w]
        let last = self.convs.last().unwrap();
        let (lh, lw) = if last.pool { (last.h.div_ceil(2), last.w.div_ceil(2)) } else { (last.h, last.w) };
        let lhw = lh * lw;
        let mut dx = vec![T::zero(); last.out_c * batch * lhw];
        for ch in 0..last.out_c {
            for b in 0..batch {
                dx[(ch * batch + b) * lhw..(ch * batch + b + 1) * lhw]
                    .copy_from_slice(&d_flat[b * feat + ch * lhw..b * feat + (ch + 1) * lhw]);
            }
        }

        for (li, c) in self.convs.iter().enumerate().rev() {
            let hw = c.h * c.w;
            let n = batch * hw;
            // undo pooling
            let mut dy = if c.pool {
                let (ph, pw) = (c.h.div_ceil(2), c.w.div_ceil(2));
                let mut full = vec![T::zero(); c.out_c * n];
                let idx = &cache.pool_idx[li];
                for plane in 0..c.out_c * batch {
                    for k in 0..ph * pw {
                        let o = plane * ph * pw + k;
                        let t = plane * hw + idx[o] as usize;
                        full[t] = full[t] + dx[o];
                    }
                }
                full
            } else {
                dx
            };
            // relu
            let out = &cache.conv_out[li];
            dy.iter_mut().zip(out).for_each(|(d, &y)| if y <= T::zero() { *d = T::zero() });
            for o in 0..c.out_c {
                let s = dy[o * n..(o + 1) * n].iter().fold(T::zero(), |a, &v| a + v);
                g[c.b_off + o] = g[c.b_off + o] + s;
            }
            let input = &cache.conv_in[li];
            let mut d_in = vec![T::zero(); c.in_c * n];
            let mut shifted = vec![T::zero(); c.in_c * n];
            let mut d_shift = vec![T::zero(); c.in_c * n];
            let need_input_grad = li > 0;
            for (t, &(ty, tx)) in TAPS.iter().enumerate() {
                if !tap_active(c.h, c.w, ty, tx) {
                    continue;
                }
                shift_into(input, &mut shifted, c.in_c * batch, c.h, c.w, ty, tx);
                // dW_tap[o, i] += dy[o, n] · shifted[i, n]^T
                let dym = Mat::new(&dy, c.out_c, n);
                gemm(
                    dym,
                    Mat::new(&shifted, c.in_c, n).t(),
                    T::one(),
                    &mut g[c.w_off + t..],
                    c.in_c * 9,
                    9,
                );
                if need_input_grad {
                    let wt = Mat::strided(&p[c.w_off + t..], c.out_c, c.in_c, c.in_c * 9, 9);
                    gemm(wt.t(), dym, T::zero(), &mut d_shift, n, 1);
                    unshift_add(&d_shift, &mut d_in, c.in_c * batch, c.h, c.w, ty, tx);
                }
            }
            dx = d_in;
        }
        g
    }

    /// Sigmoid outputs in inference mode.
    pub fn predict_unit(&self, input: &[T], batch: usize) -> Vec<T> {
        self.forward(input, batch, None).output
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_chain() {
        let arch = CnnArch::default();
        assert_eq!(
            arch.shapes(),
            vec![(64, 3, 24), (128, 2, 12), (256, 1, 6), (512, 1, 6), (512, 1, 6)]
        );
        assert_eq!(arch.flat_features(), 3072);
    }

    #[test]
    fn output_in_unit_interval() {
        let net: Cnn<f32> = Cnn::new(CnnArch::tiny(4, 8), 3);
        let x: Vec<f32> = (0..2 * 288).map(|i| ((i * 31) % 17) as f32 / 17.0).collect();
        let y = net.predict_unit(&x, 2);
        assert!(y.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn batch_items_are_independent() {
        let net: Cnn<f64> = Cnn::new(CnnArch::tiny(3, 5), 9);
        let a: Vec<f64> = (0..288).map(|i| (i as f64 * 0.37).sin().abs()).collect();
        let b: Vec<f64> = (0..288).map(|i| (i as f64 * 0.11).cos().abs()).collect();
        let both: Vec<f64> = a.iter().chain(&b).copied().collect();
        let y = net.predict_unit(&both, 2);
        assert!((y[0] - net.predict_unit(&a, 1)[0]).abs() < 1e-12);
        assert!((y[1] - net.predict_unit(&b, 1)[0]).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_central_differences() {
        let net: Cnn<f64> = Cnn::new(CnnArch::tiny(2, 4), 11);
        let batch = 2;
        let x: Vec<f64> = (0..batch * 288)
            .map(|i| 0.5 + 0.5 * ((i as f64) * 0.173).sin())
            .collect();
        let target = [0.3, 0.8];
        let loss = |n: &Cnn<f64>| -> f64 {
            let y = n.predict_unit(&x, batch);
            y.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / batch as f64
        };
        let cache = net.forward(&x, batch, None);
        let d: Vec<f64> = cache
            .output
            .iter()
            .zip(&target)
            .map(|(y, t)| 2.0 * (y - t) / batch as f64)
            .collect();
        let g = net.backward(&cache, &d);
        let mut worst: f64 = 0.0;
        let h = 1e-6;
        for i in (0..net.n_params()).step_by(7) {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = fd.abs().max(g[i].abs()).max(1e-7);
            worst = worst.max((fd - g[i]).abs() / denom);
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
