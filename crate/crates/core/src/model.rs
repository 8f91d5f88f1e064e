//! Transformer blocks, residual groups and the full restoration network.
//!
//! Parameter names:
//!
//! ```text
//! shallow.{weight,bias}
//! group.{g}.block.{b}.norm1.{gamma,beta}
//! group.{g}.block.{b}.attn.{wq,bq,wk,bk,wv,bv,wp,bp}
//! group.{g}.block.{b}.attn.lcm.{weight,bias}
//! group.{g}.block.{b}.attn.pos.{w1,b1,w2,b2,w3,b3}
//! group.{g}.block.{b}.norm2.{gamma,beta}
//! group.{g}.block.{b}.mlp.{fc1,fc2}.{weight,bias}
//! group.{g}.conv.{weight,bias}
//! body_conv.{weight,bias}
//! head.before, head.up.{i}, head.last   (SR, each .{weight,bias})
//! head.last                             (artifact reduction)
//! ```
//!
//! Convolution kernels are `[3, 3, in, out]`, linear maps `[in, out]`.

use cat_tensor::{Element, Tape, Tensor, Var};

use crate::attention::{head_geometries, rwin_self_attention, AttentionParams};
use crate::config::{ModelConfig, Task};
use crate::error::{config, CatError, Result};
use crate::params::{init_tensor, BoundParams, Init, ParamStore};
use crate::window::{WindowGeometry, WindowStrategy};

pub const LN_EPS: f64 = 1e-5;

/// One entry of the parameter layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

fn push(out: &mut Vec<ParamSpec>, name: String, shape: &[usize], init: Init) {
    out.push(ParamSpec {
        name,
        shape: shape.to_vec(),
        init,
    });
}

fn push_affine(out: &mut Vec<ParamSpec>, prefix: &str, wshape: &[usize]) {
    let cout = *wshape.last().expect("weight has a rank");
    push(out, format!("{prefix}.weight"), wshape, Init::TruncNormal);
    push(out, format!("{prefix}.bias"), &[cout], Init::Zeros);
}

/// Every parameter of the network with its shape and initializer.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let c = cfg.channels;
    let hid = cfg.pos_hidden;
    let mut out = Vec::new();
    push_affine(&mut out, "shallow", &[3, 3, cfg.in_channels, c]);
    for g in 0..cfg.groups {
        for b in 0..cfg.blocks {
            let p = format!("group.{g}.block.{b}");
            for norm in ["norm1", "norm2"] {
                push(&mut out, format!("{p}.{norm}.gamma"), &[c], Init::Ones);
                push(&mut out, format!("{p}.{norm}.beta"), &[c], Init::Zeros);
            }
            for (w, bias) in [("wq", "bq"), ("wk", "bk"), ("wv", "bv"), ("wp", "bp")] {
                push(&mut out, format!("{p}.attn.{w}"), &[c, c], Init::TruncNormal);
                push(&mut out, format!("{p}.attn.{bias}"), &[c], Init::Zeros);
            }
            if cfg.lcm {
                push(&mut out, format!("{p}.attn.lcm.weight"), &[3, 3, c, 1], Init::TruncNormal);
                push(&mut out, format!("{p}.attn.lcm.bias"), &[c], Init::Zeros);
            }
            for (i, (fan_in, fan_out)) in [(2, hid), (hid, hid), (hid, cfg.heads)].into_iter().enumerate() {
                push(&mut out, format!("{p}.attn.pos.w{}", i + 1), &[fan_in, fan_out], Init::TruncNormal);
                push(&mut out, format!("{p}.attn.pos.b{}", i + 1), &[fan_out], Init::Zeros);
            }
            push_affine(&mut out, &format!("{p}.mlp.fc1"), &[c, cfg.mlp_hidden()]);
            push_affine(&mut out, &format!("{p}.mlp.fc2"), &[cfg.mlp_hidden(), c]);
        }
        push_affine(&mut out, &format!("group.{g}.conv"), &[3, 3, c, c]);
    }
    push_affine(&mut out, "body_conv", &[3, 3, c, c]);
    match cfg.task {
        Task::Sr { .. } => {
            let hw = cfg.head_width;
            push_affine(&mut out, "head.before", &[3, 3, c, hw]);
            for (i, r) in cfg.task.upsample_stages().into_iter().enumerate() {
                push_affine(&mut out, &format!("head.up.{i}"), &[3, 3, hw, r * r * hw]);
            }
            push_affine(&mut out, "head.last", &[3, 3, hw, cfg.out_channels]);
        }
        Task::Car => push_affine(&mut out, "head.last", &[3, 3, c, cfg.out_channels]),
    }
    out
}

/// Deterministic initial parameters: truncated-normal weights, zero biases,
/// unit LayerNorm scales.
pub fn init_params<T: Element>(cfg: &ModelConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for spec in param_layout(cfg) {
        let t = init_tensor(seed, &spec.name, &spec.shape, spec.init)?;
        store.insert(spec.name, t)?;
    }
    Ok(store)
}

/// Rejects stores with missing, unexpected or misshapen entries.
pub fn check_params<T: Element>(cfg: &ModelConfig, store: &ParamStore<T>) -> Result<()> {
    let layout = param_layout(cfg);
    for spec in &layout {
        let t = store.get(&spec.name).ok_or_else(|| CatError::Entry {
            name: spec.name.clone(),
            reason: "missing from weights".into(),
        })?;
        if t.shape() != spec.shape.as_slice() {
            return Err(CatError::Entry {
                name: spec.name.clone(),
                reason: format!("shape {:?}, config expects {:?}", t.shape(), spec.shape),
            });
        }
    }
    if store.len() != layout.len() {
        let extra = store
            .names()
            .find(|n| !layout.iter().any(|s| s.name == *n))
            .unwrap_or_default()
            .to_string();
        return Err(CatError::Entry {
            name: extra,
            reason: "not part of this configuration".into(),
        });
    }
    Ok(())
}

/// Loads a weight file and checks it against `cfg`.
pub fn load_for_config<T: Element>(cfg: &ModelConfig, path: impl AsRef<std::path::Path>) -> Result<ParamStore<T>> {
    let store = crate::params::load_weights(path)?;
    check_params(cfg, &store)?;
    Ok(store)
}

/// Weight and bias of one layer.
#[derive(Debug, Clone)]
pub struct Affine<T> {
    pub weight: Var<T>,
    pub bias: Var<T>,
}

impl<T: Element> Affine<T> {
    fn bind(p: &BoundParams<T>, prefix: &str) -> Result<Self> {
        Ok(Self {
            weight: p.get(&format!("{prefix}.weight"))?.clone(),
            bias: p.get(&format!("{prefix}.bias"))?.clone(),
        })
    }

    fn conv(&self, tape: &Tape<T>, x: &Var<T>) -> Result<Var<T>> {
        Ok(tape.conv2d_3x3(x, &self.weight, &self.bias, false)?)
    }

    fn linear(&self, tape: &Tape<T>, x: &Var<T>) -> Result<Var<T>> {
        Ok(tape.linear(x, &self.weight, Some(&self.bias))?)
    }
}

#[derive(Debug, Clone)]
pub struct Norm<T> {
    pub gamma: Var<T>,
    pub beta: Var<T>,
}

impl<T: Element> Norm<T> {
    fn bind(p: &BoundParams<T>, prefix: &str) -> Result<Self> {
        Ok(Self {
            gamma: p.get(&format!("{prefix}.gamma"))?.clone(),
            beta: p.get(&format!("{prefix}.beta"))?.clone(),
        })
    }

    fn apply(&self, tape: &Tape<T>, x: &Var<T>) -> Result<Var<T>> {
        Ok(tape.layer_norm(x, &self.gamma, &self.beta, T::from_f64(LN_EPS))?)
    }
}

#[derive(Debug, Clone)]
pub struct BlockParams<T> {
    pub norm1: Norm<T>,
    pub attn: AttentionParams<T>,
    pub norm2: Norm<T>,
    pub fc1: Affine<T>,
    pub fc2: Affine<T>,
}

impl<T: Element> BlockParams<T> {
    pub fn bind(p: &BoundParams<T>, prefix: &str, heads: usize) -> Result<Self> {
        Ok(Self {
            norm1: Norm::bind(p, &format!("{prefix}.norm1"))?,
            attn: AttentionParams::from_bound(p, &format!("{prefix}.attn"), heads)?,
            norm2: Norm::bind(p, &format!("{prefix}.norm2"))?,
            fc1: Affine::bind(p, &format!("{prefix}.mlp.fc1"))?,
            fc2: Affine::bind(p, &format!("{prefix}.mlp.fc2"))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GroupParams<T> {
    pub blocks: Vec<BlockParams<T>>,
    pub conv: Affine<T>,
}

impl<T: Element> GroupParams<T> {
    pub fn bind(p: &BoundParams<T>, cfg: &ModelConfig, g: usize) -> Result<Self> {
        let blocks = (0..cfg.blocks)
            .map(|b| BlockParams::bind(p, &format!("group.{g}.block.{b}"), cfg.heads))
            .collect::<Result<_>>()?;
        Ok(Self {
            blocks,
            conv: Affine::bind(p, &format!("group.{g}.conv"))?,
        })
    }
}

/// Blocks at odd positions within a group run on the shifted grid.
pub fn block_shifted(index: usize) -> bool {
    index % 2 == 1
}

/// Horizontal and vertical geometries of block `b` in group `g`.
pub fn block_geometries(cfg: &ModelConfig, g: usize, b: usize, height: usize, width: usize) -> [WindowGeometry; 2] {
    head_geometries(cfg.window_for_group(g), height, width, block_shifted(b))
}

/// `X' = Attn(LN(X)) + X`, then `MLP(LN(X')) + X'`.
pub fn catb_forward<T: Element>(
    tape: &Tape<T>,
    x: &Var<T>,
    p: &BlockParams<T>,
    spec: &dyn WindowStrategy,
    shifted: bool,
) -> Result<Var<T>> {
    let c = x.shape().last().copied().unwrap_or(0);
    if p.norm1.gamma.shape() != [c] {
        return Err(config(format!(
            "block expects {} channels, input has {c}",
            p.norm1.gamma.shape().first().copied().unwrap_or(0)
        )));
    }
    let lcm = p.attn.lcm.is_some();
    let h = p.norm1.apply(tape, x)?;
    let h = rwin_self_attention(tape, &h, &p.attn, spec, shifted, lcm)?;
    let x = tape.add(&h, x)?;
    let h = p.norm2.apply(tape, &x)?;
    let h = p.fc1.linear(tape, &h)?;
    let h = tape.gelu(&h);
    let h = p.fc2.linear(tape, &h)?;
    Ok(tape.add(&h, &x)?)
}

pub fn residual_group_forward<T: Element>(
    tape: &Tape<T>,
    x: &Var<T>,
    p: &GroupParams<T>,
    spec: &dyn WindowStrategy,
) -> Result<Var<T>> {
    let mut h = x.clone();
    for (i, block) in p.blocks.iter().enumerate() {
        h = catb_forward(tape, &h, block, spec, block_shifted(i))?;
    }
    let h = p.conv.conv(tape, &h)?;
    Ok(tape.add(&h, x)?)
}

/// Full network on `img: [N,H,W,C_in]`.
pub fn cat_forward<T: Element>(
    tape: &Tape<T>,
    img: &Var<T>,
    p: &BoundParams<T>,
    cfg: &ModelConfig,
) -> Result<Var<T>> {
    cfg.validate()?;
    match *img.shape() {
        [_, h, w, c] if h > 0 && w > 0 && c == cfg.in_channels => {}
        _ => {
            return Err(config(format!(
                "input {:?} does not match [N,H,W,{}]",
                img.shape(),
                cfg.in_channels
            )))
        }
    }
    let f0 = Affine::bind(p, "shallow")?.conv(tape, img)?;
    let mut h = f0.clone();
    for g in 0..cfg.groups {
        let group = GroupParams::bind(p, cfg, g)?;
        h = residual_group_forward(tape, &h, &group, cfg.window_for_group(g))?;
    }
    let h = Affine::bind(p, "body_conv")?.conv(tape, &h)?;
    let deep = tape.add(&h, &f0)?;
    match cfg.task {
        Task::Sr { .. } => {
            let mut h = Affine::bind(p, "head.before")?.conv(tape, &deep)?;
            for (i, r) in cfg.task.upsample_stages().into_iter().enumerate() {
                h = Affine::bind(p, &format!("head.up.{i}"))?.conv(tape, &h)?;
                h = tape.pixel_shuffle(&h, r)?;
            }
            Affine::bind(p, "head.last")?.conv(tape, &h)
        }
        Task::Car => {
            let h = Affine::bind(p, "head.last")?.conv(tape, &deep)?;
            Ok(tape.add(&h, img)?)
        }
    }
}

/// Inference without recording gradients.
pub fn infer<T: Element>(store: &ParamStore<T>, cfg: &ModelConfig, img: &Tensor<T>) -> Result<Tensor<T>> {
    let tape = Tape::inference();
    let bound = store.bind(&tape);
    let out = cat_forward(&tape, &tape.constant(img.clone()), &bound, cfg)?;
    Ok(out.into_value())
}
