//! Forward kernels over [`Tensor`] values.
//!
//! Everything here is pure: inputs are borrowed, outputs are fresh tensors.
//! The gradient tape in [`crate::tape`] reuses these kernels for both passes.

use crate::element::Element;
use crate::error::{contract, dim_err, Result};
use crate::tensor::Tensor;

/// `out[m,n] (+)= a[m,k] · b[k,n]`.
pub(crate) fn gemm<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

/// `out[m,n] (+)= a[m,k] · b[n,k]ᵀ`.
pub(crate) fn gemm_bt<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(brow) {
                acc = acc + x * y;
            }
            out[i * n + j] = out[i * n + j] + acc;
        }
    }
}

/// `out[k,n] (+)= a[m,k]ᵀ · b[m,n]`.
pub(crate) fn gemm_at<T: Element>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
}

pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(dim_err("matmul", sa, sb));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut out = vec![T::zero(); m * n];
    gemm(a.data(), b.data(), &mut out, m, k, n);
    Ok(Tensor::new_unchecked(vec![m, n], out))
}

/// Batched product of `a[B,m,k]` with `b[B,k,n]`, or with `b[B,n,k]ᵀ` when
/// `transpose_b` is set.
pub fn batched_matmul<T: Element>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    transpose_b: bool,
) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
        return Err(dim_err("batched_matmul", sa, sb));
    }
    let (batch, m, k) = (sa[0], sa[1], sa[2]);
    let n = if transpose_b { sb[1] } else { sb[2] };
    let kb = if transpose_b { sb[2] } else { sb[1] };
    if kb != k {
        return Err(dim_err("batched_matmul", sa, sb));
    }
    let mut out = vec![T::zero(); batch * m * n];
    for i in 0..batch {
        let ab = &a.data()[i * m * k..(i + 1) * m * k];
        let bb = &b.data()[i * k * n..(i + 1) * k * n];
        let ob = &mut out[i * m * n..(i + 1) * m * n];
        if transpose_b {
            gemm_bt(ab, bb, ob, m, k, n);
        } else {
            gemm(ab, bb, ob, m, k, n);
        }
    }
    Ok(Tensor::new_unchecked(vec![batch, m, n], out))
}

/// Affine map over the last axis: `x · w + b`.
pub fn linear<T: Element>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let ws = w.shape();
    if ws.len() != 2 || x.rank() == 0 || x.last_dim() != ws[0] {
        return Err(dim_err("linear", x.shape(), ws));
    }
    let (cin, cout) = (ws[0], ws[1]);
    if let Some(b) = b {
        if b.shape() != [cout] {
            return Err(dim_err("linear", ws, b.shape()));
        }
    }
    let rows = x.len() / cin;
    let mut out = match b {
        Some(b) => {
            let mut o = Vec::with_capacity(rows * cout);
            for _ in 0..rows {
                o.extend_from_slice(b.data());
            }
            o
        }
        None => vec![T::zero(); rows * cout],
    };
    gemm(x.data(), w.data(), &mut out, rows, cin, cout);
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = cout;
    Ok(Tensor::new_unchecked(shape, out))
}

pub fn softmax_lastdim<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let n = x.last_dim();
    let mut out = x.data().to_vec();
    for row in out.chunks_mut(n) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            s = s + *v;
        }
        for v in row.iter_mut() {
            *v = *v / s;
        }
    }
    Tensor::new_unchecked(x.shape().to_vec(), out)
}

/// Normalized activations and reciprocal standard deviation per row.
pub(crate) fn layer_norm_stats<T: Element>(x: &Tensor<T>, eps: T) -> (Vec<T>, Vec<T>) {
    let c = x.last_dim();
    let cf = T::from_f64(c as f64);
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(x.len() / c);
    for row in x.data().chunks(c) {
        let mean = row.iter().copied().sum::<T>() / cf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
        let r = T::one() / (var + eps).sqrt();
        rstd.push(r);
        xhat.extend(row.iter().map(|&v| (v - mean) * r));
    }
    (xhat, rstd)
}

pub fn layer_norm<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    let c = x.last_dim();
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(dim_err("layer_norm", x.shape(), gamma.shape()));
    }
    let (mut xhat, _) = layer_norm_stats(x, eps);
    for row in xhat.chunks_mut(c) {
        for ((v, &g), &b) in row.iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = *v * g + b;
        }
    }
    Ok(Tensor::new_unchecked(x.shape().to_vec(), xhat))
}

pub(crate) fn gelu_scalar<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    half * x * (T::one() + (x / T::from_f64(std::f64::consts::SQRT_2)).erf())
}

pub(crate) fn gelu_grad_scalar<T: Element>(x: T) -> T {
    let half = T::from_f64(0.5);
    let cdf = half * (T::one() + (x / T::from_f64(std::f64::consts::SQRT_2)).erf());
    let pdf = (-(x * x) * half).exp() / T::from_f64((2.0 * std::f64::consts::PI).sqrt());
    cdf + x * pdf
}

/// Exact (erf-based) GELU.
pub fn gelu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(gelu_scalar)
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

fn zip_with<T: Element>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(dim_err(op, a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::new_unchecked(a.shape().to_vec(), data))
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("mul", a, b, |x, y| x * y)
}

pub fn scale<T: Element>(a: &Tensor<T>, s: T) -> Tensor<T> {
    a.map(|v| v * s)
}

/// Adds `b` repeated cyclically over `a`; `b.len()` must divide `a.len()`.
/// With row-major layout this broadcasts `b` over the leading axes of `a`
/// whenever `b`'s shape is a suffix of `a`'s.
pub fn add_cyclic<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if b.is_empty() || !a.len().is_multiple_of(b.len()) {
        return Err(dim_err("add_cyclic", a.shape(), b.shape()));
    }
    let bd = b.data();
    let data = a
        .data()
        .chunks(bd.len())
        .flat_map(|chunk| chunk.iter().zip(bd).map(|(&x, &y)| x + y))
        .collect();
    Ok(Tensor::new_unchecked(a.shape().to_vec(), data))
}

/// Concatenates tensors of equal leading shape along the last axis.
pub fn concat_lastdim<T: Element>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| contract("concat_lastdim", "no inputs"))?;
    let lead = &first.shape()[..first.rank().saturating_sub(1)];
    for p in parts {
        if p.rank() != first.rank() || &p.shape()[..p.rank() - 1] != lead {
            return Err(dim_err("concat_lastdim", first.shape(), p.shape()));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.last_dim()).collect();
    let total: usize = widths.iter().sum();
    let rows = first.len() / widths[0];
    let mut out = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[r * w..(r + 1) * w]);
        }
    }
    let mut shape = first.shape().to_vec();
    *shape.last_mut().unwrap() = total;
    Ok(Tensor::new_unchecked(shape, out))
}

/// `out[i] = x[index[i]]`, reshaped to `shape`.
pub fn gather<T: Element>(x: &Tensor<T>, shape: &[usize], index: &[usize]) -> Result<Tensor<T>> {
    if shape.iter().product::<usize>() != index.len() {
        return Err(contract(
            "gather",
            format!("index of length {} does not fill {shape:?}", index.len()),
        ));
    }
    if let Some(&bad) = index.iter().find(|&&i| i >= x.len()) {
        return Err(contract(
            "gather",
            format!("index {bad} out of range for {} elements", x.len()),
        ));
    }
    let src = x.data();
    Tensor::from_vec(shape, index.iter().map(|&i| src[i]).collect())
}

/// Adjoint of [`gather`]: accumulates `g[i]` into `out[index[i]]`.
pub(crate) fn scatter_add<T: Element>(g: &[T], index: &[usize], out: &mut [T]) {
    for (&v, &i) in g.iter().zip(index) {
        out[i] = out[i] + v;
    }
}

fn conv_shapes<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: &Tensor<T>,
    depthwise: bool,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (sx, sk) = (x.shape(), k.shape());
    if sx.len() != 4 || sk.len() != 4 || sk[0] != 3 || sk[1] != 3 || sk[2] != sx[3] {
        return Err(dim_err("conv2d_3x3", sx, sk));
    }
    let cout = if depthwise {
        if sk[3] != 1 {
            return Err(contract(
                "conv2d_3x3",
                format!("depthwise kernel must be [3,3,C,1], got {sk:?}"),
            ));
        }
        sx[3]
    } else {
        sk[3]
    };
    if b.shape() != [cout] {
        return Err(dim_err("conv2d_3x3", sk, b.shape()));
    }
    Ok((sx[0], sx[1], sx[2], sx[3], cout))
}

/// 3×3 cross-correlation with one pixel of zero padding over `[N,H,W,C]`.
///
/// The kernel is `[3,3,Cin,Cout]`, or `[3,3,C,1]` applied per channel when
/// `depthwise` is set.
pub fn conv2d_3x3<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    b: &Tensor<T>,
    depthwise: bool,
) -> Result<Tensor<T>> {
    let (n, h, w, cin, cout) = conv_shapes(x, k, b, depthwise)?;
    let xd = x.data();
    let kd = k.data();
    let mut out = Vec::with_capacity(n * h * w * cout);
    for _ in 0..n * h * w {
        out.extend_from_slice(b.data());
    }
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let o = ((ni * h + y) * w + xx) * cout;
                let orow = &mut out[o..o + cout];
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = ((ni * h + sy as usize) * w + sx as usize) * cin;
                        let xin = &xd[src..src + cin];
                        let tap = (ky * 3 + kx) * cin;
                        if depthwise {
                            for c in 0..cin {
                                orow[c] = orow[c] + xin[c] * kd[tap + c];
                            }
                        } else {
                            for (ci, &xv) in xin.iter().enumerate() {
                                if xv == T::zero() {
                                    continue;
                                }
                                let kr = &kd[(tap + ci) * cout..(tap + ci + 1) * cout];
                                for (ov, &kv) in orow.iter_mut().zip(kr) {
                                    *ov = *ov + xv * kv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(Tensor::new_unchecked(vec![n, h, w, cout], out))
}

/// Gradients of [`conv2d_3x3`] with respect to input, kernel and bias.
pub(crate) fn conv2d_3x3_backward<T: Element>(
    x: &Tensor<T>,
    k: &Tensor<T>,
    g: &Tensor<T>,
    depthwise: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let s = x.shape();
    let (n, h, w, cin) = (s[0], s[1], s[2], s[3]);
    let cout = g.last_dim();
    let (xd, kd, gd) = (x.data(), k.data(), g.data());
    let mut dx = vec![T::zero(); x.len()];
    let mut dk = vec![T::zero(); k.len()];
    let mut db = vec![T::zero(); cout];
    for ni in 0..n {
        for y in 0..h {
            for xx in 0..w {
                let o = ((ni * h + y) * w + xx) * cout;
                let grow = &gd[o..o + cout];
                for (d, &gv) in db.iter_mut().zip(grow) {
                    *d = *d + gv;
                }
                for ky in 0..3 {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let src = ((ni * h + sy as usize) * w + sx as usize) * cin;
                        let tap = (ky * 3 + kx) * cin;
                        if depthwise {
                            for c in 0..cin {
                                dx[src + c] = dx[src + c] + grow[c] * kd[tap + c];
                                dk[tap + c] = dk[tap + c] + grow[c] * xd[src + c];
                            }
                        } else {
                            for ci in 0..cin {
                                let kr = (tap + ci) * cout;
                                let xv = xd[src + ci];
                                let mut acc = T::zero();
                                for co in 0..cout {
                                    acc = acc + grow[co] * kd[kr + co];
                                    dk[kr + co] = dk[kr + co] + xv * grow[co];
                                }
                                dx[src + ci] = dx[src + ci] + acc;
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dk, db)
}

/// Flat source index, for every output element of a pixel shuffle, into the
/// `[N,H,W,C·r²]` input.
pub fn pixel_shuffle_index(shape: &[usize], r: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if shape.len() != 4 || r == 0 || !shape[3].is_multiple_of(r * r) {
        return Err(contract(
            "pixel_shuffle",
            format!("channels of {shape:?} not divisible by r²={}", r * r),
        ));
    }
    let (n, h, w, cr) = (shape[0], shape[1], shape[2], shape[3]);
    let c = cr / (r * r);
    let out_shape = vec![n, h * r, w * r, c];
    let mut index = Vec::with_capacity(n * h * w * cr);
    for ni in 0..n {
        for oy in 0..h * r {
            for ox in 0..w * r {
                let (y, dy, x, dx) = (oy / r, oy % r, ox / r, ox % r);
                for ci in 0..c {
                    index.push(((ni * h + y) * w + x) * cr + ci * r * r + dy * r + dx);
                }
            }
        }
    }
    Ok((out_shape, index))
}

/// Rearranges `[N,H,W,C·r²]` into `[N,rH,rW,C]`; channel `c·r²+dy·r+dx` of
/// pixel `(h,w)` lands at `(h·r+dy, w·r+dx)`.
pub fn pixel_shuffle<T: Element>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (shape, index) = pixel_shuffle_index(x.shape(), r)?;
    gather(x, &shape, &index)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Element>(x: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() != 4 || r == 0 || !s[1].is_multiple_of(r) || !s[2].is_multiple_of(r) {
        return Err(contract(
            "pixel_unshuffle",
            format!("spatial extents of {s:?} not divisible by {r}"),
        ));
    }
    let in_shape = [s[0], s[1] / r, s[2] / r, s[3] * r * r];
    let (_, index) = pixel_shuffle_index(&in_shape, r)?;
    let mut out = vec![T::zero(); x.len()];
    for (&v, &i) in x.data().iter().zip(&index) {
        out[i] = v;
    }
    Tensor::from_vec(&in_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let i2 = Tensor::<f64>::eye(2).unwrap();
        assert_eq!(matmul(&i2, &i2).unwrap(), i2);
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 1], &[0., 1.]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[2., 4.]);
    }

    #[test]
    fn matmul_dimension_error_names_shapes() {
        let a = Tensor::<f32>::zeros(&[3, 5]).unwrap();
        let b = Tensor::<f32>::zeros(&[4, 2]).unwrap();
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[3, 5]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn batched_matmul_transpose_matches_plain() {
        let a = t(&[2, 2, 3], &[1., 2., 3., 4., 5., 6., -1., 0., 2., 1., 1., 1.]);
        let b = t(&[2, 2, 3], &[1., 0., 1., 0., 1., 0., 2., 2., 2., 1., -1., 0.]);
        let c = batched_matmul(&a, &b, true).unwrap();
        assert_eq!(c.shape(), &[2, 2, 2]);
        assert_eq!(c.data(), &[4., 2., 10., 5., 2., -1., 6., 0.]);
    }

    #[test]
    fn softmax_examples() {
        let s = softmax_lastdim(&t(&[2], &[0., 0.]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax_lastdim(&t(&[2], &[0., 3f64.ln()]));
        assert_abs_diff_eq!(s.data()[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.data()[1], 0.75, epsilon = 1e-12);
        let s = softmax_lastdim(&Tensor::<f32>::from_f64(&[2], &[0., -1e9]).unwrap());
        assert!((s.data()[0] - 1.0).abs() < 1e-6);
        assert!(s.data()[1] < 1e-9);
    }

    #[test]
    fn layer_norm_examples() {
        let one = t(&[2], &[1., 1.]);
        let zero = t(&[2], &[0., 0.]);
        let c = layer_norm(&t(&[1, 2], &[3., 3.]), &one, &zero, 1e-5).unwrap();
        assert_eq!(c.data(), &[0., 0.]);
        let y = layer_norm(&t(&[2], &[1., 3.]), &one, &zero, 1e-12).unwrap();
        assert_abs_diff_eq!(y.data()[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(y.data()[1], 1.0, epsilon = 1e-9);
        let y = layer_norm(&t(&[2], &[7., -2.]), &zero, &t(&[2], &[5., 5.]), 1e-5).unwrap();
        assert_eq!(y.data(), &[5., 5.]);
        assert!(layer_norm(&t(&[3], &[1., 2., 3.]), &one, &zero, 1e-5).is_err());
    }

    #[test]
    fn gelu_examples() {
        let g = gelu(&t(&[3], &[0., 1., -10.]));
        assert_eq!(g.data()[0], 0.0);
        assert_abs_diff_eq!(g.data()[1], 0.841345, epsilon = 1e-5);
        assert!(g.data()[2].abs() < 1e-6);
    }

    #[test]
    fn linear_examples() {
        let x = t(&[1, 2], &[1., 1.]);
        let y = linear(&x, &t(&[2, 1], &[1., 2.]), Some(&t(&[1], &[3.]))).unwrap();
        assert_eq!(y.data(), &[6.]);
        let x = t(&[2, 2], &[4., -1., 0.5, 2.]);
        assert_eq!(linear(&x, &Tensor::eye(2).unwrap(), None).unwrap(), x);
        let y = linear(&x, &Tensor::zeros(&[2, 3]).unwrap(), Some(&t(&[3], &[1., 2., 3.]))).unwrap();
        assert_eq!(y.data(), &[1., 2., 3., 1., 2., 3.]);
        assert!(linear(&x, &Tensor::zeros(&[3, 3]).unwrap(), None).is_err());
    }

    #[test]
    fn conv_examples() {
        let v = 2.5;
        let x = t(&[1, 1, 1, 1], &[v]);
        let k = Tensor::<f64>::ones(&[3, 3, 1, 1]).unwrap();
        let y = conv2d_3x3(&x, &k, &t(&[1], &[0.]), true).unwrap();
        assert_eq!(y.data(), &[v]);

        let x = t(&[1, 2, 3, 2], &[1., 2., 3., 4., 5., 6., 7., 8., 9., 10., 11., 12.]);
        let y = conv2d_3x3(&x, &Tensor::zeros(&[3, 3, 2, 3]).unwrap(), &t(&[3], &[1., 2., 3.]), false)
            .unwrap();
        assert_eq!(y.shape(), &[1, 2, 3, 3]);
        assert!(y.data().chunks(3).all(|c| c == [1., 2., 3.]));

        assert!(conv2d_3x3(&x, &Tensor::zeros(&[3, 3, 2, 2]).unwrap(), &t(&[2], &[0., 0.]), true).is_err());
    }

    #[test]
    fn identity_kernel_is_exact_everywhere() {
        let mut k = vec![0.0; 9 * 4];
        k[(4 * 2) * 2] = 1.0;
        k[(4 * 2 + 1) * 2 + 1] = 1.0;
        let k = t(&[3, 3, 2, 2], &k);
        let x = t(&[1, 3, 2, 2], &[1., -2., 3., 4., 0.5, 6., 7., 8., 9., 1., 2., 3.]);
        let y = conv2d_3x3(&x, &k, &t(&[2], &[0., 0.]), false).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pixel_shuffle_examples() {
        let x = t(&[1, 1, 1, 4], &[1., 2., 3., 4.]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 2, 2, 1]);
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
        let x = Tensor::<f32>::zeros(&[1, 4, 4, 8]).unwrap();
        assert_eq!(pixel_shuffle(&x, 2).unwrap().shape(), &[1, 8, 8, 2]);
        let x = t(&[1, 2, 1, 3], &[1., 2., 3., 4., 5., 6.]);
        assert_eq!(pixel_shuffle(&x, 1).unwrap(), x);
        assert!(pixel_shuffle(&x, 2).is_err());
    }

    #[test]
    fn gather_rejects_out_of_range() {
        let x = t(&[2], &[1., 2.]);
        assert!(gather(&x, &[1], &[2]).is_err());
        assert_eq!(gather(&x, &[3], &[1, 0, 1]).unwrap().data(), &[2., 1., 2.]);
    }
}
