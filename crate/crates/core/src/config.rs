//! Model configuration and its `key = value` text form.
//!
//! ```text
//! # CAT-A, x4 super-resolution
//! groups = 6
//! blocks = 6
//! channels = 180
//! heads = 6
//! mlp_ratio = 4
//! window = axial 2,2,2,4,4,4
//! task = sr
//! scale = 4
//! ```
//!
//! `window` names a registered strategy followed by its arguments; a
//! comma-separated argument list gives one window per residual group.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{config, CatError, Result};
use crate::registry::windows;
use crate::window::{AxialWindow, RegularWindow, WindowStrategy};

/// Restoration task and its reconstruction head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Super-resolution by an integer factor in `{2, 3, 4}`.
    Sr { scale: usize },
    /// Compression artifact reduction; the input image is added back.
    Car,
}

impl Task {
    pub fn scale(&self) -> usize {
        match self {
            Task::Sr { scale } => *scale,
            Task::Car => 1,
        }
    }

    /// Pixel shuffle factors of the SR upsampler.
    pub fn upsample_stages(&self) -> Vec<usize> {
        match self {
            Task::Sr { scale: 3 } => vec![3],
            Task::Sr { scale } => {
                let mut stages = Vec::new();
                let mut s = *scale;
                while s > 1 && s % 2 == 0 {
                    stages.push(2);
                    s /= 2;
                }
                stages
            }
            Task::Car => Vec::new(),
        }
    }
}

/// Window strategy per residual group.
#[derive(Debug, Clone)]
pub enum WindowSchedule {
    Uniform(Arc<dyn WindowStrategy>),
    PerGroup(Vec<Arc<dyn WindowStrategy>>),
}

impl WindowSchedule {
    pub fn for_group(&self, g: usize) -> &dyn WindowStrategy {
        match self {
            WindowSchedule::Uniform(s) => s.as_ref(),
            WindowSchedule::PerGroup(v) => v[g.min(v.len().saturating_sub(1))].as_ref(),
        }
    }

    /// Parses `<kind> <args>` or `<kind> <args>,<args>,...`.
    pub fn parse(value: &str) -> Result<Self> {
        let value = value.trim();
        let (kind, args) = value
            .split_once(char::is_whitespace)
            .ok_or_else(|| config(format!("window `{value}` needs a kind and arguments")))?;
        let registry = windows();
        let parts: Vec<&str> = args.split(',').map(str::trim).collect();
        // `regular 4,16` is a single window, not a two-group list.
        if parts.len() > 1 {
            if let Ok(single) = registry.build(kind, args) {
                return Ok(WindowSchedule::Uniform(single));
            }
        }
        let built = parts
            .iter()
            .map(|p| registry.build(kind, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(if built.len() == 1 {
            WindowSchedule::Uniform(built.into_iter().next().expect("one entry"))
        } else {
            WindowSchedule::PerGroup(built)
        })
    }

    pub fn config_value(&self) -> String {
        match self {
            WindowSchedule::Uniform(s) => s.config_value(),
            WindowSchedule::PerGroup(v) => {
                let kind = v.first().map(|s| s.kind()).unwrap_or("");
                let args: Vec<String> = v
                    .iter()
                    .map(|s| {
                        let text = s.config_value();
                        text.split_once(' ').map(|(_, a)| a.to_string()).unwrap_or(text)
                    })
                    .collect();
                format!("{kind} {}", args.join(","))
            }
        }
    }
}

impl PartialEq for WindowSchedule {
    fn eq(&self, other: &Self) -> bool {
        self.config_value() == other.config_value()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Residual groups.
    pub groups: usize,
    /// Transformer blocks per group.
    pub blocks: usize,
    pub channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub window: WindowSchedule,
    pub task: Task,
    /// Intermediate width of the SR reconstruction head.
    pub head_width: usize,
    /// Depthwise convolution on the value map inside attention.
    pub lcm: bool,
    /// Hidden width of the position-bias network.
    pub pos_hidden: usize,
}

pub fn default_pos_hidden(channels: usize) -> usize {
    (channels / 4).max(8)
}

impl ModelConfig {
    fn base(task: Task, window: WindowSchedule) -> Self {
        let ch = if task == Task::Car { 1 } else { 3 };
        Self {
            groups: 6,
            blocks: 6,
            channels: 180,
            in_channels: ch,
            out_channels: ch,
            heads: 6,
            mlp_ratio: 4.0,
            window,
            task,
            head_width: 64,
            lcm: true,
            pos_hidden: default_pos_hidden(180),
        }
    }

    /// Regular 4×16 rectangle windows in every block.
    pub fn cat_r(task: Task) -> Self {
        Self::base(task, WindowSchedule::Uniform(Arc::new(RegularWindow::new(4, 16).expect("valid"))))
    }

    /// Axial stripes, widths 2,2,2,4,4,4 across the six groups.
    pub fn cat_a(task: Task) -> Self {
        let schedule = [2, 2, 2, 4, 4, 4]
            .iter()
            .map(|&sl| Arc::new(AxialWindow::new(sl).expect("valid")) as Arc<dyn WindowStrategy>)
            .collect();
        Self::base(task, WindowSchedule::PerGroup(schedule))
    }

    /// One group with one block, 16 channels and 2×4 windows; small enough to
    /// train in seconds.
    pub fn tiny(task: Task) -> Self {
        Self {
            groups: 1,
            blocks: 1,
            channels: 16,
            heads: 2,
            head_width: 16,
            pos_hidden: default_pos_hidden(16),
            ..Self::base(task, WindowSchedule::Uniform(Arc::new(RegularWindow::new(2, 4).expect("valid"))))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads.max(1)
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.channels as f64).round() as usize
    }

    pub fn window_for_group(&self, g: usize) -> &dyn WindowStrategy {
        self.window.for_group(g)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(config(m));
        if self.groups == 0 || self.blocks == 0 {
            return fail("groups and blocks must be at least 1".into());
        }
        if self.heads == 0 || !self.heads.is_multiple_of(2) {
            return fail(format!("heads must be even and positive, got {}", self.heads));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return fail(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            ));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return fail("image channel counts must be positive".into());
        }
        if self.mlp_ratio.is_nan() || self.mlp_ratio <= 0.0 || self.mlp_hidden() == 0 {
            return fail(format!("mlp_ratio {} gives no hidden units", self.mlp_ratio));
        }
        if self.head_width == 0 || self.pos_hidden == 0 {
            return fail("head_width and pos_hidden must be positive".into());
        }
        if let WindowSchedule::PerGroup(v) = &self.window {
            if v.len() != self.groups {
                return fail(format!(
                    "window schedule has {} entries for {} groups",
                    v.len(),
                    self.groups
                ));
            }
        }
        match self.task {
            Task::Sr { scale } if !(2..=4).contains(&scale) => {
                fail(format!("scale must be 2, 3 or 4, got {scale}"))
            }
            Task::Car if self.in_channels != self.out_channels => fail(format!(
                "artifact reduction adds the input back, so in_channels {} must equal out_channels {}",
                self.in_channels, self.out_channels
            )),
            _ => Ok(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim().to_string();
            if kv.iter().any(|(_, seen, _)| *seen == k) {
                return Err(config(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            kv.push((i + 1, k, v.trim().to_string()));
        }
        let find = |key: &str| kv.iter().find(|(_, k, _)| k == key).map(|(l, _, v)| (*l, v.as_str()));
        let need = |key: &str| find(key).ok_or_else(|| config(format!("missing key `{key}`")));
        fn num<F: std::str::FromStr>((line, v): (usize, &str), key: &str) -> Result<F> {
            v.parse()
                .map_err(|_| config(format!("line {line}: `{key}` has invalid value `{v}`")))
        }

        const KEYS: &[&str] = &[
            "groups", "blocks", "channels", "in_channels", "out_channels", "heads", "mlp_ratio",
            "window", "task", "scale", "head_width", "lcm", "pos_hidden",
        ];
        if let Some((line, k, _)) = kv.iter().find(|(_, k, _)| !KEYS.contains(&k.as_str())) {
            return Err(config(format!("line {line}: unknown key `{k}`")));
        }

        let task = match need("task")?.1 {
            "sr" => Task::Sr {
                scale: num(need("scale")?, "scale")?,
            },
            "car" => {
                if let Some((line, _)) = find("scale") {
                    return Err(config(format!("line {line}: `scale` only applies to task sr")));
                }
                Task::Car
            }
            other => return Err(config(format!("unknown task `{other}` (expected sr or car)"))),
        };
        let img = if task == Task::Car { 1 } else { 3 };
        let channels: usize = num(need("channels")?, "channels")?;
        let opt = |key: &str, default: usize| -> Result<usize> {
            find(key).map(|kv| num(kv, key)).unwrap_or(Ok(default))
        };
        let lcm = match find("lcm") {
            None => true,
            Some((_, "true" | "on" | "1")) => true,
            Some((_, "false" | "off" | "0")) => false,
            Some((line, v)) => return Err(config(format!("line {line}: `lcm` must be true or false, got `{v}`"))),
        };
        let cfg = Self {
            groups: num(need("groups")?, "groups")?,
            blocks: num(need("blocks")?, "blocks")?,
            channels,
            in_channels: opt("in_channels", img)?,
            out_channels: opt("out_channels", img)?,
            heads: num(need("heads")?, "heads")?,
            mlp_ratio: find("mlp_ratio").map(|kv| num(kv, "mlp_ratio")).unwrap_or(Ok(4.0))?,
            window: WindowSchedule::parse(need("window")?.1)?,
            task,
            head_width: opt("head_width", 64)?,
            lcm,
            pos_hidden: opt("pos_hidden", default_pos_hidden(channels))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            CatError::Config(m) => CatError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "groups = {}", self.groups)?;
        writeln!(f, "blocks = {}", self.blocks)?;
        writeln!(f, "channels = {}", self.channels)?;
        writeln!(f, "in_channels = {}", self.in_channels)?;
        writeln!(f, "out_channels = {}", self.out_channels)?;
        writeln!(f, "heads = {}", self.heads)?;
        writeln!(f, "mlp_ratio = {}", self.mlp_ratio)?;
        writeln!(f, "window = {}", self.window.config_value())?;
        match self.task {
            Task::Sr { scale } => writeln!(f, "task = sr\nscale = {scale}")?,
            Task::Car => writeln!(f, "task = car")?,
        }
        writeln!(f, "head_width = {}", self.head_width)?;
        writeln!(f, "lcm = {}", self.lcm)?;
        writeln!(f, "pos_hidden = {}", self.pos_hidden)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_roundtrip() {
        for cfg in [
            ModelConfig::cat_r(Task::Sr { scale: 4 }),
            ModelConfig::cat_a(Task::Sr { scale: 2 }),
            ModelConfig::cat_a(Task::Car),
            ModelConfig::tiny(Task::Sr { scale: 3 }),
        ] {
            cfg.validate().unwrap();
            assert_eq!(ModelConfig::parse(&cfg.to_string()).unwrap(), cfg);
        }
    }

    #[test]
    fn parses_minimal_file() {
        let cfg = ModelConfig::parse(
            "# comment\ngroups = 2\nblocks = 1\nchannels = 8\nheads = 2\nwindow = axial 1,2 # per group\ntask = car\n",
        )
        .unwrap();
        assert_eq!(cfg.in_channels, 1);
        assert_eq!(cfg.mlp_ratio, 4.0);
        assert_eq!(cfg.pos_hidden, 8);
        assert_eq!(cfg.window.config_value(), "axial 1,2");
        assert_eq!(cfg.window_for_group(1).config_value(), "axial 2");
    }

    #[test]
    fn rejects_bad_files() {
        let ok = "groups = 1\nblocks = 1\nchannels = 8\nheads = 2\nwindow = regular 2x4\ntask = sr\nscale = 2\n";
        assert!(ModelConfig::parse(ok).is_ok());
        for bad in [
            format!("{ok}colour = red\n"),
            format!("{ok}groups = 2\n"),
            ok.replace("scale = 2", "scale = 5"),
            ok.replace("heads = 2", "heads = 3"),
            ok.replace("regular 2x4", "hexagon 3"),
            ok.replace("window = regular 2x4", "window = axial 1,2"),
            ok.replace("channels = 8", "channels = eight"),
        ] {
            let err = ModelConfig::parse(&bad).unwrap_err();
            assert!(matches!(err, CatError::Config(_)), "{bad}");
        }
        let unknown = ModelConfig::parse(&format!("{ok}colour = red\n")).unwrap_err();
        assert!(unknown.to_string().contains("colour"));
    }

    #[test]
    fn regular_comma_form_is_one_window() {
        let s = WindowSchedule::parse("regular 4,16").unwrap();
        assert_eq!(s.config_value(), "regular 4x16");
    }

    #[test]
    fn upsample_stages() {
        assert_eq!(Task::Sr { scale: 4 }.upsample_stages(), vec![2, 2]);
        assert_eq!(Task::Sr { scale: 3 }.upsample_stages(), vec![3]);
        assert_eq!(Task::Sr { scale: 2 }.upsample_stages(), vec![2]);
        assert!(Task::Car.upsample_stages().is_empty());
    }
}
