//! Rectangle-window self-attention.
//!
//! Heads are split in two halves: the first half attends inside horizontal
//! windows, the second inside vertical ones. Each head adds a relative
//! position bias produced by a small network evaluated on normalized window
//! offsets, so the bias adapts to any window shape (axial windows grow with
//! the image). An optional depthwise 3×3 convolution of the unpartitioned
//! value map ("locality complement") is added before the output projection.

use std::sync::{Arc, OnceLock};

use cat_tensor::{Element, Tape, Tensor, Var};

use crate::error::{config, Result};
use crate::params::BoundParams;
use crate::window::{head_index, shift_mask, HeadLayout, Memo, Orientation, WindowGeometry, WindowStrategy};

/// Three affine layers `2 → hidden → hidden → heads` with ReLU between them.
#[derive(Debug, Clone)]
pub struct PositionBiasNet<T> {
    pub w1: Var<T>,
    pub b1: Var<T>,
    pub w2: Var<T>,
    pub b2: Var<T>,
    pub w3: Var<T>,
    pub b3: Var<T>,
}

impl<T: Element> PositionBiasNet<T> {
    pub fn from_bound(p: &BoundParams<T>, prefix: &str) -> Result<Self> {
        let get = |n: &str| p.get(&format!("{prefix}.{n}")).cloned();
        Ok(Self {
            w1: get("w1")?,
            b1: get("b1")?,
            w2: get("w2")?,
            b2: get("b2")?,
            w3: get("w3")?,
            b3: get("b3")?,
        })
    }

    pub fn heads(&self) -> usize {
        self.w3.shape().get(1).copied().unwrap_or(0)
    }

    pub fn hidden(&self) -> usize {
        self.w1.shape().get(1).copied().unwrap_or(0)
    }

    /// Evaluates the net on `[rows, 2]` offsets, giving `[rows, heads]`.
    pub fn forward(&self, tape: &Tape<T>, offsets: &Var<T>) -> Result<Var<T>> {
        let h = tape.linear(offsets, &self.w1, Some(&self.b1))?;
        let h = tape.relu(&h);
        let h = tape.linear(&h, &self.w2, Some(&self.b2))?;
        let h = tape.relu(&h);
        Ok(tape.linear(&h, &self.w3, Some(&self.b3))?)
    }
}

/// Distinct relative offsets of an `sh×sw` window and, for every pixel pair,
/// the row of its offset.
pub struct OffsetTable {
    /// `[(2sh−1)(2sw−1), 2]`, `(Δy, Δx)` each scaled into `[−1, 1]`.
    pub coords: Tensor<f64>,
    /// `pair_row[i·n + j]` is the row for `pos(i) − pos(j)`.
    pub pair_row: Vec<usize>,
}

pub fn offset_table(sh: usize, sw: usize) -> Arc<OffsetTable> {
    static CACHE: OnceLock<Memo<(usize, usize), OffsetTable>> = OnceLock::new();
    CACHE
        .get_or_init(Memo::default)
        .get_or_insert_with(&(sh, sw), || build_offset_table(sh, sw))
}

/// Offset `d` along an axis of extent `n`, scaled into `[−1, 1]`.
pub fn normalize_offset(d: isize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        d as f64 / (n - 1) as f64
    }
}

fn build_offset_table(sh: usize, sw: usize) -> OffsetTable {
    let (rows, cols) = (2 * sh - 1, 2 * sw - 1);
    let mut coords = Vec::with_capacity(rows * cols * 2);
    for r in 0..rows {
        for c in 0..cols {
            coords.push(normalize_offset(r as isize - (sh as isize - 1), sh));
            coords.push(normalize_offset(c as isize - (sw as isize - 1), sw));
        }
    }
    let n = sh * sw;
    let mut pair_row = Vec::with_capacity(n * n);
    for i in 0..n {
        let (yi, xi) = (i / sw, i % sw);
        for j in 0..n {
            let (yj, xj) = (j / sw, j % sw);
            let r = yi + sh - 1 - yj;
            let c = xi + sw - 1 - xj;
            pair_row.push(r * cols + c);
        }
    }
    OffsetTable {
        coords: Tensor::from_vec(&[rows * cols, 2], coords).expect("nonempty table"),
        pair_row,
    }
}

/// Per-head bias for every pixel pair of a window: `[heads, n, n]`.
pub fn relative_position_bias<T: Element>(
    tape: &Tape<T>,
    g: &WindowGeometry,
    net: &PositionBiasNet<T>,
) -> Result<Var<T>> {
    let table = offset_table(g.sh, g.sw);
    let out = net.forward(tape, &tape.constant(table.coords.cast()))?;
    let m = net.heads();
    let n = g.window_len();
    let index: Vec<usize> = (0..m)
        .flat_map(|h| table.pair_row.iter().map(move |&r| r * m + h))
        .collect();
    Ok(tape.gather(&out, &[m, n, n], index.into())?)
}

/// Parameters of one attention layer. Q/K/V are full `[C, C]` maps whose
/// column blocks of width `C/M` belong to the individual heads.
#[derive(Debug, Clone)]
pub struct AttentionParams<T> {
    pub wq: Var<T>,
    pub bq: Var<T>,
    pub wk: Var<T>,
    pub bk: Var<T>,
    pub wv: Var<T>,
    pub bv: Var<T>,
    pub wp: Var<T>,
    pub bp: Var<T>,
    /// Depthwise `[3,3,C,1]` kernel and bias of the locality complement.
    pub lcm: Option<(Var<T>, Var<T>)>,
    pub pos: PositionBiasNet<T>,
    pub heads: usize,
}

impl<T: Element> AttentionParams<T> {
    pub fn from_bound(p: &BoundParams<T>, prefix: &str, heads: usize) -> Result<Self> {
        let get = |n: &str| p.get(&format!("{prefix}.{n}")).cloned();
        let lcm = if p.contains(&format!("{prefix}.lcm.weight")) {
            Some((get("lcm.weight")?, get("lcm.bias")?))
        } else {
            None
        };
        Ok(Self {
            wq: get("wq")?,
            bq: get("bq")?,
            wk: get("wk")?,
            bk: get("bk")?,
            wv: get("wv")?,
            bv: get("bv")?,
            wp: get("wp")?,
            bp: get("bp")?,
            lcm,
            pos: PositionBiasNet::from_bound(p, &format!("{prefix}.pos"))?,
            heads,
        })
    }

    pub fn channels(&self) -> usize {
        self.wq.shape()[0]
    }

    pub fn head_dim(&self) -> usize {
        self.channels() / self.heads.max(1)
    }

    fn validate(&self, c: usize) -> Result<()> {
        let m = self.heads;
        if m == 0 || !m.is_multiple_of(2) {
            return Err(config(format!("head count {m} must be even and positive")));
        }
        if !c.is_multiple_of(m) {
            return Err(config(format!("{c} channels do not split into {m} heads")));
        }
        if self.channels() != c {
            return Err(config(format!(
                "input has {c} channels, projections expect {}",
                self.channels()
            )));
        }
        if self.pos.heads() != m {
            return Err(config(format!(
                "position-bias net emits {} heads, expected {m}",
                self.pos.heads()
            )));
        }
        Ok(())
    }
}

/// Softmax weights of one head, kept for inspection.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    pub head: usize,
    pub geometry: WindowGeometry,
    /// `[N·nw, n, n]`.
    pub weights: Tensor<T>,
}

/// Horizontal and vertical geometries used by the two head halves.
pub fn head_geometries(
    spec: &dyn WindowStrategy,
    height: usize,
    width: usize,
    shifted: bool,
) -> [WindowGeometry; 2] {
    [
        spec.resolve(Orientation::Horizontal, height, width, shifted),
        spec.resolve(Orientation::Vertical, height, width, shifted),
    ]
}

/// Rectangle-window self-attention over `x: [N,H,W,C]`.
pub fn rwin_self_attention<T: Element>(
    tape: &Tape<T>,
    x: &Var<T>,
    p: &AttentionParams<T>,
    spec: &dyn WindowStrategy,
    shifted: bool,
    lcm: bool,
) -> Result<Var<T>> {
    attention_impl(tape, x, p, spec, shifted, lcm, None)
}

/// [`rwin_self_attention`] that also returns every head's attention weights.
pub fn rwin_self_attention_traced<T: Element>(
    tape: &Tape<T>,
    x: &Var<T>,
    p: &AttentionParams<T>,
    spec: &dyn WindowStrategy,
    shifted: bool,
    lcm: bool,
) -> Result<(Var<T>, Vec<HeadTrace<T>>)> {
    let mut traces = Vec::new();
    let out = attention_impl(tape, x, p, spec, shifted, lcm, Some(&mut traces))?;
    Ok((out, traces))
}

/// Depthwise 3×3 convolution of the value map.
pub fn locality_complement<T: Element>(tape: &Tape<T>, v: &Var<T>, p: &AttentionParams<T>) -> Result<Var<T>> {
    let (k, b) = p
        .lcm
        .as_ref()
        .ok_or_else(|| config("locality complement requested but no kernel is present"))?;
    let c = v.shape().last().copied().unwrap_or(0);
    if k.shape() != [3, 3, c, 1] {
        return Err(config(format!(
            "locality kernel {:?} does not match {c} channels",
            k.shape()
        )));
    }
    Ok(tape.conv2d_3x3(v, k, b, true)?)
}

fn attention_impl<T: Element>(
    tape: &Tape<T>,
    x: &Var<T>,
    p: &AttentionParams<T>,
    spec: &dyn WindowStrategy,
    shifted: bool,
    lcm: bool,
    mut trace: Option<&mut Vec<HeadTrace<T>>>,
) -> Result<Var<T>> {
    let (n, h, w, c) = match *x.shape() {
        [n, h, w, c] => (n, h, w, c),
        _ => return Err(config(format!("attention input must be [N,H,W,C], got {:?}", x.shape()))),
    };
    p.validate(c)?;
    let m = p.heads;
    let d = c / m;
    let scale = T::from_f64(1.0 / (d as f64).sqrt());

    let q = tape.linear(x, &p.wq, Some(&p.bq))?;
    let k = tape.linear(x, &p.wk, Some(&p.bk))?;
    let v = tape.linear(x, &p.wv, Some(&p.bv))?;

    let mut heads_out = Vec::with_capacity(m);
    for (half, g) in head_geometries(spec, h, w, shifted).into_iter().enumerate() {
        let table = offset_table(g.sh, g.sw);
        let bias_table = p.pos.forward(tape, &tape.constant(table.coords.cast()))?;
        let mask = g
            .is_shifted()
            .then(|| tape.constant(shift_mask(&g).values.cast()));
        let nw = g.num_windows();
        let len = g.window_len();
        for head in half * m / 2..(half + 1) * m / 2 {
            let idx = head_index(&HeadLayout {
                geometry: g,
                batch: n,
                channels: c,
                offset: head * d,
                width: d,
            });
            let win_shape = [n * nw, len, d];
            let qw = tape.gather(&q, &win_shape, Arc::clone(&idx.to_windows))?;
            let kw = tape.gather(&k, &win_shape, Arc::clone(&idx.to_windows))?;
            let vw = tape.gather(&v, &win_shape, Arc::clone(&idx.to_windows))?;

            let scores = tape.batched_matmul(&qw, &kw, true)?;
            let scores = tape.scale(&scores, scale);
            let bias_index: Vec<usize> = table.pair_row.iter().map(|&r| r * m + head).collect();
            let bias = tape.gather(&bias_table, &[len, len], bias_index.into())?;
            let mut scores = tape.add_cyclic(&scores, &bias)?;
            if let Some(mask) = &mask {
                scores = tape.add_cyclic(&scores, mask)?;
            }
            let attn = tape.softmax_lastdim(&scores);
            if let Some(t) = trace.as_deref_mut() {
                t.push(HeadTrace {
                    head,
                    geometry: g,
                    weights: attn.value().clone(),
                });
            }
            let out = tape.batched_matmul(&attn, &vw, false)?;
            heads_out.push(tape.gather(&out, &[n, h, w, d], Arc::clone(&idx.from_windows))?);
        }
    }
    let refs: Vec<&Var<T>> = heads_out.iter().collect();
    let mut y = tape.concat_lastdim(&refs)?;
    if lcm {
        let local = locality_complement(tape, &v, p)?;
        y = tape.add(&y, &local)?;
    }
    Ok(tape.linear(&y, &p.wp, Some(&p.bp))?)
}
