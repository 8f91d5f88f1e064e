//! Rectangle and axial window geometry.
//!
//! A feature map `[N,H,W,C]` is reflect-padded on the bottom/right to a
//! multiple of the window extents, cyclically shifted for the shifted blocks,
//! split into `sh×sw` windows, and put back in the reverse order afterwards.
//! The shifted layout wraps pixels from opposite borders into the same
//! window; [`build_shift_mask`] keeps those pairs from attending to each
//! other.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::sync::{Arc, OnceLock, RwLock};

use cat_tensor::{Element, Tensor, MASK_VALUE};

use crate::error::{config, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// `sh ≤ sw`, used by the first half of the heads.
    Horizontal,
    /// `sh ≥ sw`, used by the second half.
    Vertical,
}

/// Window layout for one attention invocation over an `H×W` map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowGeometry {
    pub orientation: Orientation,
    pub sh: usize,
    pub sw: usize,
    /// Rows rolled down.
    pub dy: usize,
    /// Columns rolled left.
    pub dx: usize,
    /// Bottom padding.
    pub ph: usize,
    /// Right padding.
    pub pw: usize,
    pub height: usize,
    pub width: usize,
}

impl WindowGeometry {
    /// Resolves window extents against an `h×w` map. `None` spans the whole
    /// axis. Shift offsets are half a window, except along full-span axes.
    pub fn new(
        orientation: Orientation,
        win_h: Option<usize>,
        win_w: Option<usize>,
        height: usize,
        width: usize,
        shifted: bool,
    ) -> Self {
        let pad = |win: usize, n: usize| (win - n % win) % win;
        let sh = win_h.unwrap_or(height).max(1);
        let sw = win_w.unwrap_or(width).max(1);
        let ph = pad(sh, height);
        let pw = pad(sw, width);
        let dy = if shifted && sh < height + ph { sh / 2 } else { 0 };
        let dx = if shifted && sw < width + pw { sw / 2 } else { 0 };
        Self {
            orientation,
            sh,
            sw,
            dy,
            dx,
            ph,
            pw,
            height,
            width,
        }
    }

    pub fn padded_height(&self) -> usize {
        self.height + self.ph
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pw
    }

    /// Pixels per window.
    pub fn window_len(&self) -> usize {
        self.sh * self.sw
    }

    pub fn num_windows(&self) -> usize {
        (self.padded_height() / self.sh) * (self.padded_width() / self.sw)
    }

    pub fn is_shifted(&self) -> bool {
        self.dy != 0 || self.dx != 0
    }
}

/// A window shape family: resolves per-orientation geometry and reports its
/// attention cost.
pub trait WindowStrategy: Send + Sync + fmt::Debug {
    /// Registry name.
    fn kind(&self) -> &'static str;

    /// Config-file value, e.g. `regular 4x16`.
    fn config_value(&self) -> String;

    /// Window extents `(rows, cols)` for an orientation; `None` spans the
    /// full axis.
    fn extents(&self, orientation: Orientation) -> (Option<usize>, Option<usize>);

    fn resolve(&self, orientation: Orientation, height: usize, width: usize, shifted: bool) -> WindowGeometry {
        let (wh, ww) = self.extents(orientation);
        WindowGeometry::new(orientation, wh, ww, height, width, shifted)
    }

    /// Multiply-accumulates of one attention layer (QKV and output
    /// projections plus the two attention products) at `h×w` with `c`
    /// channels.
    fn attention_flops(&self, c: u64, h: u64, w: u64) -> u64;
}

/// Fixed `sh×sw` rectangle; vertical heads use the transpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegularWindow {
    short: usize,
    long: usize,
}

impl RegularWindow {
    pub fn new(sh: usize, sw: usize) -> Result<Self> {
        if sh == 0 || sw == 0 {
            return Err(config(format!("regular window {sh}x{sw} must be at least 1x1")));
        }
        Ok(Self {
            short: sh.min(sw),
            long: sh.max(sw),
        })
    }

    /// Extents of the horizontal window.
    pub fn size(&self) -> (usize, usize) {
        (self.short, self.long)
    }

    pub fn parse(args: &str) -> Result<Arc<dyn WindowStrategy>> {
        let bad = || config(format!("regular window expects `<sh>x<sw>`, got `{args}`"));
        let (a, b) = args.trim().split_once(['x', 'X', ',']).ok_or_else(bad)?;
        let sh = a.trim().parse().map_err(|_| bad())?;
        let sw = b.trim().parse().map_err(|_| bad())?;
        Ok(Arc::new(Self::new(sh, sw)?))
    }
}

impl WindowStrategy for RegularWindow {
    fn kind(&self) -> &'static str {
        "regular"
    }

    fn config_value(&self) -> String {
        format!("regular {}x{}", self.short, self.long)
    }

    fn extents(&self, orientation: Orientation) -> (Option<usize>, Option<usize>) {
        match orientation {
            Orientation::Horizontal => (Some(self.short), Some(self.long)),
            Orientation::Vertical => (Some(self.long), Some(self.short)),
        }
    }

    fn attention_flops(&self, c: u64, h: u64, w: u64) -> u64 {
        let area = (self.short * self.long) as u64;
        h * w * c * (4 * c + 2 * area)
    }
}

/// Stripe spanning the full width (horizontal heads) or height (vertical
/// heads), `sl` pixels across.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxialWindow {
    pub sl: usize,
}

impl AxialWindow {
    pub fn new(sl: usize) -> Result<Self> {
        if sl == 0 {
            return Err(config("axial window side length must be at least 1"));
        }
        Ok(Self { sl })
    }

    pub fn parse(args: &str) -> Result<Arc<dyn WindowStrategy>> {
        let sl = args
            .trim()
            .parse()
            .map_err(|_| config(format!("axial window expects `<sl>`, got `{args}`")))?;
        Ok(Arc::new(Self::new(sl)?))
    }
}

impl WindowStrategy for AxialWindow {
    fn kind(&self) -> &'static str {
        "axial"
    }

    fn config_value(&self) -> String {
        format!("axial {}", self.sl)
    }

    fn extents(&self, orientation: Orientation) -> (Option<usize>, Option<usize>) {
        match orientation {
            Orientation::Horizontal => (Some(self.sl), None),
            Orientation::Vertical => (None, Some(self.sl)),
        }
    }

    fn attention_flops(&self, c: u64, h: u64, w: u64) -> u64 {
        let sl = self.sl as u64;
        h * w * c * (4 * c + sl * h + sl * w)
    }
}

/// Symmetric reflection of `i` into `0..n` (edge sample not repeated).
pub fn reflect_index(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

fn image_dims(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match shape {
        [n, h, w, c] => Ok((*n, *h, *w, *c)),
        _ => Err(config(format!("expected an [N,H,W,C] tensor, got {shape:?}"))),
    }
}

/// Rolls rows down by `dy` and columns left by `dx`: output `(h, w)` is
/// sourced from `((h − dy) mod H, (w + dx) mod W)`. Negative offsets roll the
/// other way.
pub fn cyclic_shift<T: Element>(x: &Tensor<T>, dy: isize, dx: isize) -> Result<Tensor<T>> {
    let (n, h, w, c) = image_dims(x.shape())?;
    let mut index = Vec::with_capacity(x.len());
    for ni in 0..n {
        for y in 0..h {
            let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
            for xx in 0..w {
                let sx = (xx as isize + dx).rem_euclid(w as isize) as usize;
                let base = ((ni * h + sy) * w + sx) * c;
                index.extend(base..base + c);
            }
        }
    }
    Ok(cat_tensor::ops::gather(x, x.shape(), &index)?)
}

/// Flat index of every element of the windowed `[N·nw, sh·sw, C]` layout
/// into an `[N,H,W,C]` map whose extents divide by the window.
pub fn partition_index(shape: &[usize], sh: usize, sw: usize) -> Result<Vec<usize>> {
    let (n, h, w, c) = image_dims(shape)?;
    if sh == 0 || sw == 0 || h % sh != 0 || w % sw != 0 {
        return Err(config(format!(
            "partition: {h}x{w} is not divisible into {sh}x{sw} windows"
        )));
    }
    let mut index = Vec::with_capacity(n * h * w * c);
    for ni in 0..n {
        for wy in 0..h / sh {
            for wx in 0..w / sw {
                for py in 0..sh {
                    for px in 0..sw {
                        let base = ((ni * h + wy * sh + py) * w + wx * sw + px) * c;
                        index.extend(base..base + c);
                    }
                }
            }
        }
    }
    Ok(index)
}

/// Splits `[N,H,W,C]` into `[N·nw, sh·sw, C]`; windows and the pixels within
/// them are both enumerated row-major.
pub fn partition<T: Element>(x: &Tensor<T>, g: &WindowGeometry) -> Result<Tensor<T>> {
    let (n, h, w, c) = image_dims(x.shape())?;
    let index = partition_index(x.shape(), g.sh, g.sw)?;
    let nw = (h / g.sh) * (w / g.sw);
    Ok(cat_tensor::ops::gather(x, &[n * nw, g.window_len(), c], &index)?)
}

/// Inverse of [`partition`].
pub fn merge<T: Element>(
    windows: &Tensor<T>,
    g: &WindowGeometry,
    n: usize,
    h: usize,
    w: usize,
) -> Result<Tensor<T>> {
    let s = windows.shape();
    let consistent = s.len() == 3
        && g.sh > 0
        && g.sw > 0
        && h.is_multiple_of(g.sh)
        && w.is_multiple_of(g.sw)
        && s[1] == g.window_len()
        && s[0] == n * (h / g.sh) * (w / g.sw);
    if !consistent {
        return Err(config(format!(
            "merge: windows {s:?} do not tile [{n},{h},{w},_] with {}x{} windows",
            g.sh, g.sw
        )));
    }
    let c = s[2];
    let forward = partition_index(&[n, h, w, c], g.sh, g.sw)?;
    let mut out = vec![T::zero(); windows.len()];
    for (&v, &i) in windows.data().iter().zip(&forward) {
        out[i] = v;
    }
    Ok(Tensor::from_vec(&[n, h, w, c], out)?)
}

/// Region id of each pixel of the padded, shifted map (row-major): bit 1 set
/// for rows that wrapped from the bottom, bit 0 for columns that wrapped from
/// the left edge.
pub fn region_ids(g: &WindowGeometry) -> Vec<u8> {
    let (hp, wp) = (g.padded_height(), g.padded_width());
    let mut ids = Vec::with_capacity(hp * wp);
    for y in 0..hp {
        let row_wrapped = y < g.dy;
        for x in 0..wp {
            let col_wrapped = x >= wp - g.dx;
            ids.push(((row_wrapped as u8) << 1) | col_wrapped as u8);
        }
    }
    ids
}

/// Additive mask `[nw, n, n]` with entries in `{0, MASK_VALUE}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMask {
    pub num_windows: usize,
    pub window_len: usize,
    pub values: Tensor<f64>,
}

impl AttentionMask {
    pub fn is_zero(&self) -> bool {
        self.values.data().iter().all(|&v| v == 0.0)
    }

    pub fn get(&self, window: usize, i: usize, j: usize) -> f64 {
        let n = self.window_len;
        self.values.data()[(window * n + i) * n + j]
    }
}

/// Masks pixel pairs whose members come from different pre-shift regions.
pub fn build_shift_mask(g: &WindowGeometry) -> AttentionMask {
    let n = g.window_len();
    let nw = g.num_windows();
    let mut data = vec![0.0; nw * n * n];
    if g.is_shifted() {
        let ids = region_ids(g);
        let wp = g.padded_width();
        let cols = wp / g.sw;
        for win in 0..nw {
            let (wy, wx) = (win / cols, win % cols);
            let id = |p: usize| ids[(wy * g.sh + p / g.sw) * wp + wx * g.sw + p % g.sw];
            for i in 0..n {
                for j in 0..n {
                    if id(i) != id(j) {
                        data[(win * n + i) * n + j] = MASK_VALUE;
                    }
                }
            }
        }
    }
    AttentionMask {
        num_windows: nw,
        window_len: n,
        values: Tensor::from_vec(&[nw, n, n], data).expect("mask extents are positive"),
    }
}

/// Read-mostly memo table: many concurrent readers, one writer at a time.
pub struct Memo<K, V> {
    map: RwLock<HashMap<K, Arc<V>>>,
}

impl<K: Eq + Hash + Clone, V> Default for Memo<K, V> {
    fn default() -> Self {
        Self {
            map: RwLock::new(HashMap::new()),
        }
    }
}

impl<K: Eq + Hash + Clone, V> Memo<K, V> {
    pub fn get_or_insert_with(&self, key: &K, make: impl FnOnce() -> V) -> Arc<V> {
        if let Some(v) = self.map.read().expect("memo lock poisoned").get(key) {
            return Arc::clone(v);
        }
        let value = Arc::new(make());
        let mut map = self.map.write().expect("memo lock poisoned");
        Arc::clone(map.entry(key.clone()).or_insert(value))
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("memo lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cached shift mask for a geometry.
pub fn shift_mask(g: &WindowGeometry) -> Arc<AttentionMask> {
    static CACHE: OnceLock<Memo<WindowGeometry, AttentionMask>> = OnceLock::new();
    CACHE
        .get_or_init(Memo::default)
        .get_or_insert_with(g, || build_shift_mask(g))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) struct HeadLayout {
    pub geometry: WindowGeometry,
    pub batch: usize,
    pub channels: usize,
    pub offset: usize,
    pub width: usize,
}

/// Index pair taking channels `offset..offset+width` of an `[N,H,W,C]` map to
/// the padded, shifted, windowed `[N·nw, n, width]` layout and back.
pub(crate) struct HeadIndex {
    pub to_windows: Arc<[usize]>,
    pub from_windows: Arc<[usize]>,
}

pub(crate) fn head_index(layout: &HeadLayout) -> Arc<HeadIndex> {
    static CACHE: OnceLock<Memo<HeadLayout, HeadIndex>> = OnceLock::new();
    CACHE
        .get_or_init(Memo::default)
        .get_or_insert_with(layout, || build_head_index(layout))
}

fn build_head_index(l: &HeadLayout) -> HeadIndex {
    let g = &l.geometry;
    let (h, w) = (g.height, g.width);
    let (hp, wp) = (g.padded_height(), g.padded_width());
    let (rows, cols) = (hp / g.sh, wp / g.sw);
    let n = g.window_len();
    let d = l.width;

    let mut to_windows = Vec::with_capacity(l.batch * hp * wp * d);
    for b in 0..l.batch {
        for wy in 0..rows {
            for wx in 0..cols {
                for p in 0..n {
                    let ys = wy * g.sh + p / g.sw;
                    let xs = wx * g.sw + p % g.sw;
                    let yp = (ys + hp - g.dy) % hp;
                    let xpad = (xs + g.dx) % wp;
                    let y = reflect_index(yp, h);
                    let x = reflect_index(xpad, w);
                    let base = ((b * h + y) * w + x) * l.channels + l.offset;
                    to_windows.extend(base..base + d);
                }
            }
        }
    }

    let mut from_windows = Vec::with_capacity(l.batch * h * w * d);
    for b in 0..l.batch {
        for y in 0..h {
            let ys = (y + g.dy) % hp;
            for x in 0..w {
                let xs = (x + wp - g.dx) % wp;
                let win = (ys / g.sh) * cols + xs / g.sw;
                let p = (ys % g.sh) * g.sw + xs % g.sw;
                let base = ((b * rows * cols + win) * n + p) * d;
                from_windows.extend(base..base + d);
            }
        }
    }
    HeadIndex {
        to_windows: to_windows.into(),
        from_windows: from_windows.into(),
    }
}
