//! Slow, loop-level reference computations used to verify the windowed
//! attention. Everything here runs in `f64` on plain vectors and shares no
//! index maps with the fast path.

use cat_tensor::{Element, Tensor, Var};

use crate::attention::AttentionParams;
use crate::window::{Orientation, WindowGeometry, WindowStrategy};

fn vals<T: Element>(v: &Var<T>) -> Vec<f64> {
    v.value().data().iter().map(|&x| Element::to_f64(x)).collect()
}

/// Mirror `i` back into `0..n` by bouncing off both edges.
fn bounce(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let last = n as isize - 1;
    let mut i = i;
    while i < 0 || i > last {
        i = if i < 0 { -i } else { 2 * last - i };
    }
    i as usize
}

fn project(x: &[f64], w: &[f64], b: &[f64], cin: usize, cout: usize) -> Vec<f64> {
    x.chunks(cin)
        .flat_map(|px| {
            (0..cout).map(move |o| b[o] + (0..cin).map(|i| px[i] * w[i * cout + o]).sum::<f64>())
        })
        .collect()
}

/// Dense copy of the position-bias network.
pub struct BiasNet {
    layers: Vec<(Vec<f64>, Vec<f64>, usize, usize)>,
}

impl BiasNet {
    pub fn new<T: Element>(p: &AttentionParams<T>) -> Self {
        let net = &p.pos;
        let layers = [(&net.w1, &net.b1), (&net.w2, &net.b2), (&net.w3, &net.b3)]
            .into_iter()
            .map(|(w, b)| (vals(w), vals(b), w.shape()[0], w.shape()[1]))
            .collect();
        Self { layers }
    }

    /// Bias of `head` for key offset `(dy, dx)` inside an `sh×sw` window.
    pub fn eval(&self, head: usize, dy: isize, dx: isize, sh: usize, sw: usize) -> f64 {
        let norm = |d: isize, n: usize| if n > 1 { d as f64 / (n as f64 - 1.0) } else { 0.0 };
        let mut h = vec![norm(dy, sh), norm(dx, sw)];
        for (k, (w, b, cin, cout)) in self.layers.iter().enumerate() {
            let mut next = b.clone();
            for (o, out) in next.iter_mut().enumerate() {
                for i in 0..*cin {
                    *out += h[i] * w[i * cout + o];
                }
            }
            if k + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = next;
        }
        h[head]
    }
}

/// Unshifted attention computed as dense attention over the whole
/// (reflect-padded) image, with `−1e9` added to every pair that falls in
/// different windows.
pub fn full_masked_attention<T: Element>(
    x: &Tensor<T>,
    p: &AttentionParams<T>,
    spec: &dyn WindowStrategy,
    lcm: bool,
) -> Tensor<f64> {
    let [n, h, w, c] = <[usize; 4]>::try_from(x.shape()).expect("rank-4 input");
    let m = p.heads;
    let d = c / m;
    let xd: Vec<f64> = x.data().iter().map(|&v| Element::to_f64(v)).collect();
    let q = project(&xd, &vals(&p.wq), &vals(&p.bq), c, c);
    let k = project(&xd, &vals(&p.wk), &vals(&p.bk), c, c);
    let v = project(&xd, &vals(&p.wv), &vals(&p.bv), c, c);
    let net = BiasNet::new(p);
    let mut cat = vec![0.0; n * h * w * c];

    for head in 0..m {
        let orientation = if head < m / 2 {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        };
        let (eh, ew) = spec.extents(orientation);
        let sh = eh.unwrap_or(h);
        let sw = ew.unwrap_or(w);
        let hp = h.div_ceil(sh) * sh;
        let wp = w.div_ceil(sw) * sw;
        let src = |b: usize, y: usize, xx: usize| (b * h + bounce(y as isize, h)) * w + bounce(xx as isize, w);
        for b in 0..n {
            for qy in 0..h {
                for qx in 0..w {
                    let qi = (b * h + qy) * w + qx;
                    let qv = &q[qi * c + head * d..qi * c + head * d + d];
                    let mut scores = Vec::with_capacity(hp * wp);
                    for ky in 0..hp {
                        for kx in 0..wp {
                            let ki = src(b, ky, kx);
                            let kv = &k[ki * c + head * d..ki * c + head * d + d];
                            let dot: f64 = qv.iter().zip(kv).map(|(a, b)| a * b).sum();
                            let same = qy / sh == ky / sh && qx / sw == kx / sw;
                            let bias = net.eval(
                                head,
                                (qy % sh) as isize - (ky % sh) as isize,
                                (qx % sw) as isize - (kx % sw) as isize,
                                sh,
                                sw,
                            );
                            let mask = if same { 0.0 } else { -1e9 };
                            scores.push(dot / (d as f64).sqrt() + bias + mask);
                        }
                    }
                    let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
                    let z: f64 = e.iter().sum();
                    for j in 0..d {
                        let mut acc = 0.0;
                        for ky in 0..hp {
                            for kx in 0..wp {
                                let ki = src(b, ky, kx);
                                acc += e[ky * wp + kx] / z * v[ki * c + head * d + j];
                            }
                        }
                        cat[qi * c + head * d + j] = acc;
                    }
                }
            }
        }
    }

    if lcm {
        let (kern, bias) = p.lcm.as_ref().expect("kernel present");
        let (kern, bias) = (vals(kern), vals(bias));
        for b in 0..n {
            for y in 0..h {
                for xx in 0..w {
                    let o = ((b * h + y) * w + xx) * c;
                    for ch in 0..c {
                        let mut acc = bias[ch];
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let (sy, sx) = (y as isize + ky - 1, xx as isize + kx - 1);
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    let s = ((b * h + sy as usize) * w + sx as usize) * c;
                                    acc += kern[((ky * 3 + kx) as usize) * c + ch] * v[s + ch];
                                }
                            }
                        }
                        cat[o + ch] += acc;
                    }
                }
            }
        }
    }
    let out = project(&cat, &vals(&p.wp), &vals(&p.bp), c, c);
    Tensor::from_vec(x.shape(), out).expect("shape preserved")
}

/// Region of a pixel of the shifted, padded map, named by where it came
/// from: bit 1 set for rows that wrapped from the bottom, bit 0 for columns
/// that wrapped from the left edge.
pub fn origin_region(g: &WindowGeometry, y: usize, x: usize) -> u8 {
    let hp = g.padded_height();
    let wp = g.padded_width();
    let oy = (y + hp - g.dy) % hp;
    let ox = (x + g.dx) % wp;
    let row_wrapped = g.dy > 0 && oy >= hp - g.dy;
    let col_wrapped = g.dx > 0 && ox < g.dx;
    (row_wrapped as u8) << 1 | col_wrapped as u8
}

/// Pre-shift `(row, col)` of window `win`, slot `i` of a shifted geometry.
pub fn window_origin(g: &WindowGeometry, win: usize, i: usize) -> (usize, usize) {
    let cols = g.padded_width() / g.sw;
    let y = (win / cols) * g.sh + i / g.sw;
    let x = (win % cols) * g.sw + i % g.sw;
    (
        (y + g.padded_height() - g.dy) % g.padded_height(),
        (x + g.dx) % g.padded_width(),
    )
}

/// Attention weights of `head` for an `sh×sw` window whose top-left pixel
/// sits at `(y0, x0)` of the unpadded, unshifted image `b`; `[n·n]`.
pub fn direct_window_weights<T: Element>(
    x: &Tensor<T>,
    p: &AttentionParams<T>,
    head: usize,
    b: usize,
    (y0, x0): (usize, usize),
    (sh, sw): (usize, usize),
) -> Vec<f64> {
    let [_, h, w, c] = <[usize; 4]>::try_from(x.shape()).expect("rank-4 input");
    let d = c / p.heads;
    let xd: Vec<f64> = x.data().iter().map(|&v| Element::to_f64(v)).collect();
    let pixel = |i: usize| {
        let (y, xx) = (y0 + i / sw, x0 + i % sw);
        assert!(y < h && xx < w, "window leaves the image");
        let o = ((b * h + y) * w + xx) * c;
        &xd[o..o + c]
    };
    let head_proj = |px: &[f64], wt: &Var<T>, bs: &Var<T>| -> Vec<f64> {
        let (wv, bv) = (vals(wt), vals(bs));
        (head * d..head * d + d)
            .map(|o| bv[o] + (0..c).map(|i| px[i] * wv[i * c + o]).sum::<f64>())
            .collect()
    };
    let net = BiasNet::new(p);
    let n = sh * sw;
    let qs: Vec<Vec<f64>> = (0..n).map(|i| head_proj(pixel(i), &p.wq, &p.bq)).collect();
    let ks: Vec<Vec<f64>> = (0..n).map(|i| head_proj(pixel(i), &p.wk, &p.bk)).collect();
    let mut out = Vec::with_capacity(n * n);
    for (i, q) in qs.iter().enumerate() {
        let s: Vec<f64> = (0..n)
            .map(|j| {
                let dot: f64 = q.iter().zip(&ks[j]).map(|(a, b)| a * b).sum();
                let dy = (i / sw) as isize - (j / sw) as isize;
                let dx = (i % sw) as isize - (j % sw) as isize;
                dot / (d as f64).sqrt() + net.eval(head, dy, dx, sh, sw)
            })
            .collect();
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounce_matches_mirror() {
        let got: Vec<usize> = (0..9).map(|i| bounce(i, 4)).collect();
        assert_eq!(got, [0, 1, 2, 3, 2, 1, 0, 1, 2]);
        assert_eq!(bounce(5, 1), 0);
    }

    #[test]
    fn origin_regions_of_a_shifted_map() {
        let g = WindowGeometry::new(Orientation::Horizontal, Some(2), Some(2), 4, 4, true);
        assert_eq!(origin_region(&g, 0, 0), 2);
        assert_eq!(origin_region(&g, 1, 3), 1);
        assert_eq!(origin_region(&g, 0, 3), 3);
        assert_eq!(origin_region(&g, 2, 1), 0);
    }
}
