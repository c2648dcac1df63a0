//! Raw forward/backward kernels on flat slices.
//!
//! Both the recording [`Graph`](super::Graph) and the tape-free inference
//! path in `nca` call into these, so the two produce bitwise identical
//! forward values.

/// `c = alpha * op(a) * op(b) + beta * c` with explicit strides.
///
/// `a` is logically `[m, k]`, `b` is `[k, n]` and `c` is `[m, n]`, each
/// addressed as `base[row * rs + col * cs]`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(m.saturating_sub(1) * rsa + k.saturating_sub(1) * csa < a.len().max(1));
    assert!(k.saturating_sub(1) * rsb + n.saturating_sub(1) * csb < b.len().max(1));
    assert_eq!(c.len(), m * n);
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out[r, :] = weight · input[r, :] + bias` for every row.
///
/// `input` is `[rows, cin]`, `weight` is `[cout, cin]`.
pub fn affine_forward(
    input: &[f32],
    rows: usize,
    cin: usize,
    weight: &[f32],
    bias: Option<&[f32]>,
    cout: usize,
) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cout];
    if let Some(b) = bias {
        for row in out.chunks_exact_mut(cout) {
            row.copy_from_slice(b);
        }
    }
    let beta = if bias.is_some() { 1.0 } else { 0.0 };
    // weight^T viewed as [cin, cout]: element (i, o) = weight[o * cin + i]
    gemm(
        rows,
        cin,
        cout,
        input,
        (cin, 1),
        weight,
        (1, cin),
        beta,
        &mut out,
    );
    out
}

/// Input gradient of [`affine_forward`]: `d_in = d_out · weight`.
pub fn affine_backward_input(
    d_out: &[f32],
    rows: usize,
    cout: usize,
    weight: &[f32],
    cin: usize,
    d_in: &mut [f32],
) {
    gemm(
        rows,
        cout,
        cin,
        d_out,
        (cout, 1),
        weight,
        (cin, 1),
        1.0,
        d_in,
    );
}

/// Weight gradient of [`affine_forward`]: `d_weight += d_out^T · input`.
pub fn affine_backward_weight(
    d_out: &[f32],
    rows: usize,
    cout: usize,
    input: &[f32],
    cin: usize,
    d_weight: &mut [f32],
) {
    gemm(
        cout,
        rows,
        cin,
        d_out,
        (1, cout),
        input,
        (cin, 1),
        1.0,
        d_weight,
    );
}

pub fn affine_backward_bias(d_out: &[f32], cout: usize, d_bias: &mut [f32]) {
    for row in d_out.chunks_exact(cout) {
        for (g, v) in d_bias.iter_mut().zip(row) {
            *g += v;
        }
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Depthwise 3×3 correlation with replicate padding.
///
/// `input` is `[h, w, c]`, `kernels` holds `k` row-major 3×3 filters.
/// Output channel `ch * k + j` is filter `j` applied to input channel `ch`.
pub fn conv3x3_forward(input: &[f32], h: usize, w: usize, c: usize, kernels: &[f32]) -> Vec<f32> {
    conv3x3_forward_cells(input, h, w, c, kernels, 0..h * w)
}

/// [`conv3x3_forward`] evaluated only at the listed flat cell indices,
/// giving `[cells.len(), c * k]`.
pub fn conv3x3_forward_at(
    input: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f32],
    cells: &[usize],
) -> Vec<f32> {
    conv3x3_forward_cells(input, h, w, c, kernels, cells.iter().copied())
}

fn conv3x3_forward_cells(
    input: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f32],
    cells: impl ExactSizeIterator<Item = usize>,
) -> Vec<f32> {
    let k = kernels.len() / 9;
    let ck = c * k;
    let mut out = vec![0.0f32; cells.len() * ck];
    let mut acc = vec![0.0f32; c];
    for (o, cell) in out.chunks_exact_mut(ck).zip(cells) {
        let (y, x) = (cell / w, cell % w);
        for j in 0..k {
            acc.fill(0.0);
            for tap in 0..9 {
                let wt = kernels[j * 9 + tap];
                if wt == 0.0 {
                    continue;
                }
                let sy = clamp_index(y as isize + (tap / 3) as isize - 1, h);
                let sx = clamp_index(x as isize + (tap % 3) as isize - 1, w);
                let src = &input[(sy * w + sx) * c..(sy * w + sx + 1) * c];
                for (a, v) in acc.iter_mut().zip(src) {
                    *a += wt * v;
                }
            }
            for (ch, a) in acc.iter().enumerate() {
                o[ch * k + j] = *a;
            }
        }
    }
    out
}

/// Accumulates the input gradient of [`conv3x3_forward`] into `d_in`.
pub fn conv3x3_backward(
    d_out: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f32],
    d_in: &mut [f32],
) {
    conv3x3_backward_cells(d_out, h, w, c, kernels, 0..h * w, d_in)
}

/// Input gradient of [`conv3x3_forward_at`]; `d_out` is `[cells.len(), c * k]`.
pub fn conv3x3_backward_at(
    d_out: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f32],
    cells: &[usize],
    d_in: &mut [f32],
) {
    conv3x3_backward_cells(d_out, h, w, c, kernels, cells.iter().copied(), d_in)
}

fn conv3x3_backward_cells(
    d_out: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kernels: &[f32],
    cells: impl Iterator<Item = usize>,
    d_in: &mut [f32],
) {
    let k = kernels.len() / 9;
    let ck = c * k;
    // per-filter gradient slices, de-interleaved so the tap loop is contiguous
    let mut split = vec![0.0f32; ck];
    for (g, cell) in d_out.chunks_exact(ck).zip(cells) {
        let (y, x) = (cell / w, cell % w);
        for ch in 0..c {
            for j in 0..k {
                split[j * c + ch] = g[ch * k + j];
            }
        }
        for tap in 0..9 {
            let sy = clamp_index(y as isize + (tap / 3) as isize - 1, h);
            let sx = clamp_index(x as isize + (tap % 3) as isize - 1, w);
            let dst = &mut d_in[(sy * w + sx) * c..(sy * w + sx + 1) * c];
            for j in 0..k {
                let wt = kernels[j * 9 + tap];
                if wt == 0.0 {
                    continue;
                }
                for (d, v) in dst.iter_mut().zip(&split[j * c..(j + 1) * c]) {
                    *d += wt * v;
                }
            }
        }
    }
}

pub fn relu_forward(input: &[f32]) -> Vec<f32> {
    input.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

/// Softmax along the last axis of a `[rows, c]` buffer, max-subtracted.
pub fn softmax_forward(input: &[f32], c: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; input.len()];
    for (src, dst) in input.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        let max = src.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut sum = 0.0f32;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            sum += *d;
        }
        for d in dst.iter_mut() {
            *d /= sum;
        }
    }
    out
}

/// Accumulates the softmax input gradient: `d_x = p ⊙ (g − Σ g·p)`.
pub fn softmax_backward(probs: &[f32], d_out: &[f32], c: usize, d_in: &mut [f32]) {
    for ((p, g), d) in probs
        .chunks_exact(c)
        .zip(d_out.chunks_exact(c))
        .zip(d_in.chunks_exact_mut(c))
    {
        let dot: f32 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for i in 0..c {
            d[i] += p[i] * (g[i] - dot);
        }
    }
}

/// Lower bound applied to probabilities inside the cross-entropy log.
pub const LOG_EPS: f32 = 1e-8;

/// Mean over rows of `−ln max(p[target], LOG_EPS)`.
pub fn cross_entropy_forward(probs: &[f32], c: usize, target: &[u8]) -> f32 {
    let rows = target.len();
    let mut total = 0.0f32;
    for (p, &t) in probs.chunks_exact(c).zip(target) {
        total -= p[t as usize].max(LOG_EPS).ln();
    }
    total / rows as f32
}
