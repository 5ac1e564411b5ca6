//! Dense kernels behind the layers. Activations of convolutional layers are
//! stored channel-major, `[channels, samples * 81]`, so a 3x3 convolution
//! over a whole batch is one matrix product.

use crate::types::{GRID, TAXELS};

/// `C = alpha * op(A) * op(B) + beta * C` with row-major storage; `op(A)` is
/// `m x k`, `op(B)` is `k x n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    ta: bool,
    tb: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: f64,
    a: &[f64],
    b: &[f64],
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Deliberate defects that the gradient checker must catch.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Input gradients of every convolution are scattered one column off.
    ConvBackwardOffByOne,
}

/// Unfolds 3x3 neighbourhoods (zero padded) into `[cin * 9, n * 81]`.
pub(crate) fn im2col(input: &[f64], cin: usize, n: usize) -> Vec<f64> {
    let width = n * TAXELS;
    let mut cols = vec![0.0; cin * 9 * width];
    for ci in 0..cin {
        let src = &input[ci * width..(ci + 1) * width];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * width..][..width];
                for s in 0..n {
                    for y in 0..GRID {
                        let yy = y + ky;
                        if !(1..=GRID).contains(&yy) {
                            continue;
                        }
                        for x in 0..GRID {
                            let xx = x + kx;
                            if !(1..=GRID).contains(&xx) {
                                continue;
                            }
                            row[s * TAXELS + y * GRID + x] =
                                src[s * TAXELS + (yy - 1) * GRID + (xx - 1)];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates column gradients back onto the input.
pub(crate) fn col2im(dcols: &[f64], cin: usize, n: usize, fault: Option<Fault>) -> Vec<f64> {
    let width = n * TAXELS;
    let shift = usize::from(fault == Some(Fault::ConvBackwardOffByOne));
    let mut dinput = vec![0.0; cin * width];
    for ci in 0..cin {
        let dst = &mut dinput[ci * width..(ci + 1) * width];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &dcols[(ci * 9 + ky * 3 + kx) * width..][..width];
                for s in 0..n {
                    for y in 0..GRID {
                        let yy = y + ky;
                        if !(1..=GRID).contains(&yy) {
                            continue;
                        }
                        for x in 0..GRID {
                            let xx = x + kx + shift;
                            if !(1..=GRID).contains(&xx) {
                                continue;
                            }
                            dst[s * TAXELS + (yy - 1) * GRID + (xx - 1)] +=
                                row[s * TAXELS + y * GRID + x];
                        }
                    }
                }
            }
        }
    }
    dinput
}

pub(crate) fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

/// Cached state of one convolution for the backward pass.
pub(crate) struct ConvCache {
    pub cols: Vec<f64>,
    /// Post-activation output, `[cout, n * 81]`.
    pub out: Vec<f64>,
}

/// 3x3 convolution with zero padding 1, bias and (leaky) ReLU.
pub(crate) fn conv_forward(
    w: &[f64],
    b: &[f64],
    input: &[f64],
    cin: usize,
    cout: usize,
    n: usize,
    slope: f64,
) -> ConvCache {
    let width = n * TAXELS;
    let cols = im2col(input, cin, n);
    let mut out = vec![0.0; cout * width];
    for (co, row) in out.chunks_mut(width.max(1)).enumerate().take(cout) {
        row.iter_mut().for_each(|v| *v = b[co]);
    }
    gemm(false, false, cout, width, cin * 9, 1.0, w, &cols, 1.0, &mut out);
    out.iter_mut().for_each(|v| *v = leaky(*v, slope));
    ConvCache { cols, out }
}

/// Backward through activation and convolution. Accumulates into `dw` and
/// `db`; returns the input gradient when `need_input` is set.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    w: &[f64],
    cache: &ConvCache,
    mut dout: Vec<f64>,
    cin: usize,
    cout: usize,
    n: usize,
    slope: f64,
    dw: &mut [f64],
    db: &mut [f64],
    need_input: bool,
    fault: Option<Fault>,
) -> Option<Vec<f64>> {
    let width = n * TAXELS;
    for (d, o) in dout.iter_mut().zip(&cache.out) {
        if *o <= 0.0 {
            *d *= slope;
        }
    }
    for (co, row) in dout.chunks(width.max(1)).enumerate().take(cout) {
        db[co] += row.iter().sum::<f64>();
    }
    gemm(false, true, cout, cin * 9, width, 1.0, &dout, &cache.cols, 1.0, dw);
    if !need_input {
        return None;
    }
    let mut dcols = vec![0.0; cin * 9 * width];
    gemm(true, false, cin * 9, width, cout, 1.0, w, &dout, 0.0, &mut dcols);
    Some(col2im(&dcols, cin, n, fault))
}

/// Side length after 2x2 max pooling of the 9x9 grid (the last row and
/// column are dropped).
pub(crate) const POOLED: usize = GRID / 2;
pub(crate) const POOLED_CELLS: usize = POOLED * POOLED;

/// 2x2 max pooling; returns `[c, n * 16]` and the winning input index of
/// every output.
pub(crate) fn maxpool_forward(input: &[f64], c: usize, n: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![0.0; c * n * POOLED_CELLS];
    let mut arg = vec![0usize; out.len()];
    for ci in 0..c {
        for s in 0..n {
            let base = ci * n * TAXELS + s * TAXELS;
            for py in 0..POOLED {
                for px in 0..POOLED {
                    let mut best = base + (2 * py) * GRID + 2 * px;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * py + dy) * GRID + 2 * px + dx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                    let o = ci * n * POOLED_CELLS + s * POOLED_CELLS + py * POOLED + px;
                    out[o] = input[best];
                    arg[o] = best;
                }
            }
        }
    }
    (out, arg)
}

pub(crate) fn maxpool_backward(dout: &[f64], arg: &[usize], input_len: usize) -> Vec<f64> {
    let mut dinput = vec![0.0; input_len];
    for (d, a) in dout.iter().zip(arg) {
        dinput[*a] += d;
    }
    dinput
}

/// `[c, n * p]` (channel-major) to `[n, c * p]` (one row per sample).
pub(crate) fn to_rows(act: &[f64], c: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; act.len()];
    for ci in 0..c {
        for s in 0..n {
            out[s * c * p + ci * p..][..p].copy_from_slice(&act[ci * n * p + s * p..][..p]);
        }
    }
    out
}

/// Inverse of [`to_rows`].
pub(crate) fn from_rows(rows: &[f64], c: usize, n: usize, p: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows.len()];
    for ci in 0..c {
        for s in 0..n {
            out[ci * n * p + s * p..][..p].copy_from_slice(&rows[s * c * p + ci * p..][..p]);
        }
    }
    out
}

/// `y = x W^T + b` for `x: [n, inp]`, `W: [out, inp]`.
pub(crate) fn dense_forward(w: &[f64], b: &[f64], x: &[f64], n: usize, inp: usize, out: usize) -> Vec<f64> {
    let mut y = vec![0.0; n * out];
    for row in y.chunks_mut(out.max(1)) {
        row.copy_from_slice(b);
    }
    gemm(false, true, n, out, inp, 1.0, x, w, 1.0, &mut y);
    y
}

/// Accumulates `dW`, `db` and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    w: &[f64],
    x: &[f64],
    dy: &[f64],
    n: usize,
    inp: usize,
    out: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    gemm(true, false, out, inp, n, 1.0, dy, x, 1.0, dw);
    for row in dy.chunks(out.max(1)) {
        for (g, d) in db.iter_mut().zip(row) {
            *g += d;
        }
    }
    let mut dx = vec![0.0; n * inp];
    gemm(false, false, n, inp, out, 1.0, dy, w, 0.0, &mut dx);
    dx
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows(z: &mut [f64], width: usize) {
    for row in z.chunks_mut(width) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Variable-length batch in packed, time-major order. Samples are sorted by
/// decreasing length, so the samples still running at step `t` are always
/// the first `active[t]`.
pub(crate) struct Packing {
    /// Sample lengths in sorted order.
    pub lengths: Vec<usize>,
    /// First packed row of each step.
    pub offset: Vec<usize>,
    pub active: Vec<usize>,
}

impl Packing {
    pub fn new(sorted_lengths: Vec<usize>) -> Self {
        let steps = sorted_lengths.first().copied().unwrap_or(0);
        let mut offset = Vec::with_capacity(steps);
        let mut active = Vec::with_capacity(steps);
        let mut total = 0;
        for t in 0..steps {
            let a = sorted_lengths.iter().take_while(|l| **l > t).count();
            offset.push(total);
            active.push(a);
            total += a;
        }
        Packing {
            lengths: sorted_lengths,
            offset,
            active,
        }
    }

    pub fn total(&self) -> usize {
        self.offset.last().map_or(0, |o| o + self.active.last().copied().unwrap_or(0))
    }

    /// Packed row of sample `j` at step `t`.
    pub fn row(&self, t: usize, j: usize) -> usize {
        self.offset[t] + j
    }
}

pub(crate) struct LstmCache {
    /// Activated gates `[i, f, g, o]` per packed row, `[total, 4h]`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Runs an LSTM over packed inputs `x: [total, d]`; returns the hidden state
/// at each sample's last step (`[batch, h]`, sorted order) and the cache.
pub(crate) fn lstm_forward(
    wx: &[f64],
    wh: &[f64],
    b: &[f64],
    x: &[f64],
    pack: &Packing,
    d: usize,
    h: usize,
) -> (Vec<f64>, LstmCache) {
    let total = pack.total();
    let g4 = 4 * h;
    let mut z = vec![0.0; total * g4];
    for row in z.chunks_mut(g4) {
        row.copy_from_slice(b);
    }
    gemm(false, true, total, g4, d, 1.0, x, wx, 1.0, &mut z);
    let mut cs = vec![0.0; total * h];
    let mut hs = vec![0.0; total * h];
    for t in 0..pack.active.len() {
        let nb = pack.active[t];
        let r0 = pack.offset[t];
        let zt = &mut z[r0 * g4..(r0 + nb) * g4];
        if t > 0 {
            let p0 = pack.offset[t - 1];
            gemm(false, true, nb, g4, h, 1.0, &hs[p0 * h..(p0 + nb) * h], wh, 1.0, zt);
        }
        for j in 0..nb {
            let gz = &mut zt[j * g4..(j + 1) * g4];
            for k in 0..h {
                gz[k] = sigmoid(gz[k]);
                gz[h + k] = sigmoid(gz[h + k]);
                gz[2 * h + k] = gz[2 * h + k].tanh();
                gz[3 * h + k] = sigmoid(gz[3 * h + k]);
            }
            let row = r0 + j;
            for k in 0..h {
                let c_prev = if t > 0 { cs[pack.row(t - 1, j) * h + k] } else { 0.0 };
                let c = gz[h + k] * c_prev + gz[k] * gz[2 * h + k];
                cs[row * h + k] = c;
                hs[row * h + k] = gz[3 * h + k] * c.tanh();
            }
        }
    }
    let mut last = vec![0.0; pack.lengths.len() * h];
    for (j, len) in pack.lengths.iter().enumerate() {
        let row = pack.row(len - 1, j);
        last[j * h..(j + 1) * h].copy_from_slice(&hs[row * h..(row + 1) * h]);
    }
    (last, LstmCache { gates: z, c: cs, h: hs })
}

/// Backpropagation through time. `dlast` is the gradient at each sample's
/// final hidden state. Accumulates weight gradients and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward(
    wx: &[f64],
    wh: &[f64],
    x: &[f64],
    cache: &LstmCache,
    pack: &Packing,
    dlast: &[f64],
    d: usize,
    h: usize,
    dwx: &mut [f64],
    dwh: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let total = pack.total();
    let g4 = 4 * h;
    let batch = pack.lengths.len();
    let mut dz = vec![0.0; total * g4];
    let mut dh = vec![0.0; batch * h];
    let mut dc = vec![0.0; batch * h];
    for t in (0..pack.active.len()).rev() {
        let nb = pack.active[t];
        for j in 0..nb {
            if pack.lengths[j] == t + 1 {
                for k in 0..h {
                    dh[j * h + k] += dlast[j * h + k];
                }
            }
        }
        let r0 = pack.offset[t];
        for j in 0..nb {
            let row = r0 + j;
            let g = &cache.gates[row * g4..(row + 1) * g4];
            let dzr = &mut dz[row * g4..(row + 1) * g4];
            for k in 0..h {
                let (i, f, gg, o) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let c = cache.c[row * h + k];
                let tc = c.tanh();
                let c_prev = if t > 0 { cache.c[pack.row(t - 1, j) * h + k] } else { 0.0 };
                let dhk = dh[j * h + k];
                let dck = dc[j * h + k] + dhk * o * (1.0 - tc * tc);
                dzr[k] = dck * gg * i * (1.0 - i);
                dzr[h + k] = dck * c_prev * f * (1.0 - f);
                dzr[2 * h + k] = dck * i * (1.0 - gg * gg);
                dzr[3 * h + k] = dhk * tc * o * (1.0 - o);
                dc[j * h + k] = dck * f;
            }
        }
        let dzt = &dz[r0 * g4..(r0 + nb) * g4];
        if t > 0 {
            let p0 = pack.offset[t - 1];
            gemm(true, false, g4, h, nb, 1.0, dzt, &cache.h[p0 * h..(p0 + nb) * h], 1.0, dwh);
            gemm(false, false, nb, h, g4, 1.0, dzt, wh, 0.0, &mut dh[..nb * h]);
        } else {
            dh[..nb * h].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    gemm(true, false, g4, d, total, 1.0, &dz, x, 1.0, dwx);
    for row in dz.chunks(g4) {
        for (g, v) in db.iter_mut().zip(row) {
            *g += v;
        }
    }
    let mut dx = vec![0.0; total * d];
    gemm(false, false, total, d, g4, 1.0, &dz, wx, 0.0, &mut dx);
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // A = [[1,2,3],[4,5,6]], B = [[1,0],[0,1],[1,1]]
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0; 4];
        gemm(false, false, 2, 2, 3, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        // A^T A
        let mut c = [0.0; 9];
        gemm(true, false, 3, 3, 2, 1.0, &a, &a, 0.0, &mut c);
        assert_eq!(c, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
        // A A^T
        let mut c = [0.0; 4];
        gemm(false, true, 2, 2, 3, 1.0, &a, &a, 0.0, &mut c);
        assert_eq!(c, [14.0, 32.0, 32.0, 77.0]);
    }

    #[test]
    fn im2col_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let n = 2;
        let cin = 2;
        let x: Vec<f64> = (0..cin * n * TAXELS).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..cin * 9 * n * TAXELS).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = im2col(&x, cin, n).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, cin, n, None)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn pool_drops_last_row_and_column() {
        let x: Vec<f64> = (0..TAXELS).map(|i| i as f64).collect();
        let (out, _) = maxpool_forward(&x, 1, 1);
        // each window's max is its bottom-right cell
        assert_eq!(out[0], 10.0);
        assert_eq!(out[15], (7 * 9 + 7) as f64);
    }

    #[test]
    fn rows_round_trip() {
        let a: Vec<f64> = (0..3 * 2 * 5).map(|i| i as f64).collect();
        assert_eq!(from_rows(&to_rows(&a, 3, 2, 5), 3, 2, 5), a);
    }

    #[test]
    fn packing_layout() {
        let p = Packing::new(vec![3, 2, 2, 1]);
        assert_eq!(p.active, vec![4, 3, 1]);
        assert_eq!(p.offset, vec![0, 4, 7]);
        assert_eq!(p.total(), 8);
    }
}
