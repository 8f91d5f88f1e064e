//! Analytic parameter and FLOP accounting.
//!
//! One multiply-accumulate counts as one FLOP; bias adds, normalization and
//! softmax are not counted.

use std::fmt::Write as _;

use crate::attention::head_geometries;
use crate::config::{ModelConfig, Task};
use crate::window::WindowStrategy;

pub const CONVENTION: &str = "MAC=1; biases, normalization and softmax not counted";

/// Multiply-accumulates of one attention layer on an `h×w` map.
pub fn attention_flops(spec: &dyn WindowStrategy, c: usize, h: usize, w: usize) -> u64 {
    spec.attention_flops(c as u64, h as u64, w as u64)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostRow {
    pub name: String,
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub params: u64,
    pub flops: u64,
    /// Low-quality input `(height, width)`.
    pub resolution: (usize, usize),
    pub convention: &'static str,
}

impl CostReport {
    fn new(resolution: (usize, usize), rows: Vec<CostRow>) -> Self {
        Self {
            params: rows.iter().map(|r| r.params).sum(),
            flops: rows.iter().map(|r| r.flops).sum(),
            rows,
            resolution,
            convention: CONVENTION,
        }
    }

    pub fn row(&self, name: &str) -> Option<&CostRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

fn conv3(cin: usize, cout: usize) -> (u64, u64) {
    let macs = 9 * cin as u64 * cout as u64;
    (macs + cout as u64, macs)
}

/// Per-layer costs of `cfg` at `height×width` input.
pub fn model_flops(cfg: &ModelConfig, height: usize, width: usize) -> CostReport {
    let c = cfg.channels;
    let pixels = (height * width) as u64;
    let cu = c as u64;
    let mut rows = Vec::new();
    let mut row = |name: String, params: u64, flops: u64| rows.push(CostRow { name, params, flops });

    let (p, f) = conv3(cfg.in_channels, c);
    row("shallow".into(), p, f * pixels);

    let hid = cfg.pos_hidden as u64;
    let heads = cfg.heads as u64;
    let mlp = cfg.mlp_hidden() as u64;
    let n2 = cfg.blocks as u64;
    for g in 0..cfg.groups {
        let spec = cfg.window_for_group(g);
        let per_offset = 2 * hid + hid * hid + hid * heads;
        let table_rows: u64 = head_geometries(spec, height, width, false)
            .iter()
            .map(|geo| ((2 * geo.sh - 1) * (2 * geo.sw - 1)) as u64)
            .sum();
        row(
            format!("group.{g}.attn"),
            n2 * 4 * (cu * cu + cu),
            n2 * attention_flops(spec, c, height, width),
        );
        if cfg.lcm {
            row(format!("group.{g}.lcm"), n2 * 10 * cu, n2 * 9 * cu * pixels);
        }
        row(
            format!("group.{g}.pos_bias"),
            n2 * (3 * hid + hid * hid + hid + hid * heads + heads),
            n2 * table_rows * per_offset,
        );
        row(format!("group.{g}.norm"), n2 * 4 * cu, 0);
        row(format!("group.{g}.mlp"), n2 * (2 * cu * mlp + mlp + cu), n2 * 2 * cu * mlp * pixels);
        let (p, f) = conv3(c, c);
        row(format!("group.{g}.conv"), p, f * pixels);
    }

    let (p, f) = conv3(c, c);
    row("body_conv".into(), p, f * pixels);

    match cfg.task {
        Task::Sr { .. } => {
            let hw = cfg.head_width;
            let (p, f) = conv3(c, hw);
            row("head.before".into(), p, f * pixels);
            let mut area = pixels;
            for (i, r) in cfg.task.upsample_stages().into_iter().enumerate() {
                let (p, f) = conv3(hw, r * r * hw);
                row(format!("head.up.{i}"), p, f * area);
                area *= (r * r) as u64;
            }
            let (p, f) = conv3(hw, cfg.out_channels);
            row("head.last".into(), p, f * area);
        }
        Task::Car => {
            let (p, f) = conv3(c, cfg.out_channels);
            row("head.last".into(), p, f * pixels);
        }
    }
    CostReport::new((height, width), rows)
}

/// Closed-form parameter count.
pub fn count_params(cfg: &ModelConfig) -> u64 {
    let c = cfg.channels as u64;
    let h = cfg.pos_hidden as u64;
    let m = cfg.heads as u64;
    let f = cfg.mlp_hidden() as u64;
    let conv = |i: u64, o: u64| 9 * i * o + o;
    // Two norms, four C×C projections, bias net, two-layer MLP.
    let block = 4 * c + 4 * c * (c + 1) + (h * h + 4 * h + h * m + m) + (2 * c * f + f + c)
        + if cfg.lcm { 10 * c } else { 0 };
    let group = cfg.blocks as u64 * block + conv(c, c);
    let body = conv(cfg.in_channels as u64, c) + cfg.groups as u64 * group + conv(c, c);
    let out = cfg.out_channels as u64;
    let head = match cfg.task {
        Task::Sr { .. } => {
            let w = cfg.head_width as u64;
            let up: u64 = cfg
                .task
                .upsample_stages()
                .iter()
                .map(|&r| conv(w, (r * r) as u64 * w))
                .sum();
            conv(c, w) + up + conv(w, out)
        }
        Task::Car => conv(c, out),
    };
    body + head
}

/// `1234567` → `1.23M`, `2500853760` → `2.50G`.
pub fn human(n: u64) -> String {
    let v = n as f64;
    if v >= 1e9 {
        format!("{:.2}G", v / 1e9)
    } else if v >= 1e6 {
        format!("{:.2}M", v / 1e6)
    } else if v >= 1e3 {
        format!("{:.2}K", v / 1e3)
    } else {
        n.to_string()
    }
}

pub fn report_render(r: &CostReport) -> String {
    let header = ["layer", "params", "", "flops", ""];
    let mut cells: Vec<[String; 5]> = r
        .rows
        .iter()
        .map(|row| {
            [
                row.name.clone(),
                row.params.to_string(),
                human(row.params),
                row.flops.to_string(),
                human(row.flops),
            ]
        })
        .collect();
    cells.push([
        "total".into(),
        r.params.to_string(),
        human(r.params),
        r.flops.to_string(),
        human(r.flops),
    ]);
    let mut width = header.map(str::len);
    for row in &cells {
        for (w, cell) in width.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let _ = writeln!(out, "input {}x{} ({})", r.resolution.0, r.resolution.1, r.convention);
    let line = |out: &mut String, row: &[String]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
            row[0],
            row[1],
            row[2],
            row[3],
            row[4],
            w0 = width[0],
            w1 = width[1],
            w2 = width[2],
            w3 = width[3],
            w4 = width[4]
        );
    };
    line(&mut out, &header.map(String::from));
    let rule = "-".repeat(width.iter().sum::<usize>() + 8);
    let _ = writeln!(out, "{rule}");
    let (total, body) = cells.split_last().expect("total row present");
    for row in body {
        line(&mut out, row);
    }
    let _ = writeln!(out, "{rule}");
    line(&mut out, total);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::window::{AxialWindow, RegularWindow};

    #[test]
    fn attention_cost_examples() {
        let r = RegularWindow::new(4, 16).unwrap();
        assert_eq!(attention_flops(&r, 180, 128, 128), 128 * 128 * 180 * 848);
        assert_eq!(attention_flops(&r, 180, 128, 128), 2_500_853_760);
        assert_eq!(attention_flops(&AxialWindow::new(4).unwrap(), 32, 64, 64), 83_886_080);
        assert_eq!(attention_flops(&RegularWindow::new(1, 1).unwrap(), 1, 1, 1), 6);
    }

    #[test]
    fn human_units() {
        assert_eq!(human(2_500_853_760), "2.50G");
        assert_eq!(human(16_600_000), "16.60M");
        assert_eq!(human(12), "12");
    }

    #[test]
    fn zero_groups_keep_outer_rows() {
        let mut cfg = ModelConfig::tiny(Task::Car);
        cfg.groups = 0;
        let r = model_flops(&cfg, 8, 8);
        let names: Vec<_> = r.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["shallow", "body_conv", "head.last"]);
        assert_eq!(r.params, count_params(&cfg));
    }

    #[test]
    fn render_has_totals() {
        let cfg = ModelConfig::tiny(Task::Sr { scale: 2 });
        let r = model_flops(&cfg, 16, 16);
        let text = report_render(&r);
        let last = text.lines().last().unwrap();
        assert!(last.starts_with("total"));
        assert!(last.contains(&r.flops.to_string()));
        assert_eq!(r.flops, r.rows.iter().map(|x| x.flops).sum::<u64>());
    }
}
