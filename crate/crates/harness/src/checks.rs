//! Verification checks shared by `cat selftest` and the acceptance tests.
//! Each returns a [`Check`] with a one-line summary of what was measured.

use std::sync::Arc;
use std::time::{Duration, Instant};

use cat_core::attention::{rwin_self_attention, rwin_self_attention_traced, AttentionParams, PositionBiasNet};
use cat_core::complexity::{count_params, model_flops};
use cat_core::model::{catb_forward, BlockParams};
use cat_core::params::{load_weights, save_weights, ParamStore};
use cat_core::reference::{direct_window_weights, full_masked_attention, origin_region, window_origin};
use cat_core::window::{merge, partition, Orientation, WindowGeometry};
use cat_core::{infer, init_params, AxialWindow, ModelConfig, RegularWindow, Task, WindowSchedule, WindowStrategy};
use cat_tensor::gradcheck::{compare_with_floor, numeric_gradient};
use cat_tensor::{ops, Element, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImageU8;
use crate::metrics::{psnr, ssim, ChannelMode};
use crate::train::{overfit, OverfitOptions};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<String, String>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    Check {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(actual: f64, expected: f64) -> f64 {
    (actual - expected) / expected
}

/// Parameter totals of the x4 models, within ±2% of 16.60M.
pub fn parameter_accounting() -> Check {
    timed("parameter accounting", || {
        let mut parts = Vec::new();
        for (label, cfg) in [
            ("CAT-R x4", ModelConfig::cat_r(Task::Sr { scale: 4 })),
            ("CAT-A x4", ModelConfig::cat_a(Task::Sr { scale: 4 })),
        ] {
            let analytic = count_params(&cfg);
            let m = analytic as f64 / 1e6;
            ensure(rel(m, 16.60).abs() <= 0.02, || format!("{label}: {m:.3}M vs 16.60M"))?;
            let stored = init_params::<f32>(&cfg, 0).map_err(|e| e.to_string())?.total_elements() as u64;
            ensure(stored == analytic, || format!("{label}: store holds {stored}, analytic {analytic}"))?;
            parts.push(format!("{label} {m:.3}M ({:+.2}%)", 100.0 * rel(m, 16.60)));
        }
        Ok(parts.join(", ") + "; analytic == materialized")
    })
}

fn giga(cfg: &ModelConfig) -> f64 {
    model_flops(cfg, 128, 128).flops as f64 / 1e9
}

/// FLOPs at 128×128 input against the reference totals.
pub fn flop_accounting() -> Check {
    timed("FLOP accounting", || {
        let r4 = giga(&ModelConfig::cat_r(Task::Sr { scale: 4 }));
        let a4 = giga(&ModelConfig::cat_a(Task::Sr { scale: 4 }));
        let lcm = giga(&ModelConfig::cat_r(Task::Sr { scale: 2 }));
        let plain = giga(&ModelConfig {
            lcm: false,
            ..ModelConfig::cat_r(Task::Sr { scale: 2 })
        });
        for (label, got, want) in [("CAT-R x4", r4, 292.7), ("CAT-A x4", a4, 360.7), ("x2 LCM", lcm, 282.7), ("x2 no LCM", plain, 281.8)] {
            ensure(rel(got, want).abs() <= 0.02, || format!("{label}: {got:.1}G vs {want}G"))?;
        }
        let delta = (lcm - plain) / plain;
        ensure((0.0026..=0.0035).contains(&delta), || format!("LCM delta {:.3}%", 100.0 * delta))?;
        Ok(format!(
            "CAT-R x4 {r4:.1}G, CAT-A x4 {a4:.1}G, x2 {plain:.1}G -> {lcm:.1}G with LCM (+{:.3}%)",
            100.0 * delta
        ))
    })
}

/// Axial stripe-width schedules at ×2.
pub fn window_sweep() -> Check {
    timed("window-size sweep", || {
        let mut parts = Vec::new();
        for (sl, want) in [(2, 2, 323.5), (2, 4, 350.7), (4, 4, 377.9)].map(|(a, b, g)| ([a, a, a, b, b, b], g)) {
            let schedule = sl
                .iter()
                .map(|&s| Arc::new(AxialWindow::new(s).expect("positive")) as Arc<dyn WindowStrategy>)
                .collect();
            let cfg = ModelConfig {
                window: WindowSchedule::PerGroup(schedule),
                ..ModelConfig::cat_a(Task::Sr { scale: 2 })
            };
            let got = giga(&cfg);
            ensure(rel(got, want).abs() <= 0.02, || format!("{sl:?}: {got:.1}G vs {want}G"))?;
            parts.push(format!("{got:.1}G"));
        }
        Ok(parts.join(" / "))
    })
}

fn random_tensor<T: Element>(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_f64(shape, &data).expect("positive extents")
}

fn random_params<T: Element>(rng: &mut ChaCha8Rng, c: usize, heads: usize, hidden: usize) -> AttentionParams<T> {
    let s = 0.5;
    let mut v = |shape: &[usize]| Var::constant(random_tensor(rng, shape, s));
    AttentionParams {
        wq: v(&[c, c]),
        bq: v(&[c]),
        wk: v(&[c, c]),
        bk: v(&[c]),
        wv: v(&[c, c]),
        bv: v(&[c]),
        wp: v(&[c, c]),
        bp: v(&[c]),
        lcm: Some((v(&[3, 3, c, 1]), v(&[c]))),
        pos: PositionBiasNet {
            w1: v(&[2, hidden]),
            b1: v(&[hidden]),
            w2: v(&[hidden, hidden]),
            b2: v(&[hidden]),
            w3: v(&[hidden, heads]),
            b3: v(&[heads]),
        },
        heads,
    }
}

fn random_spec(rng: &mut ChaCha8Rng) -> Arc<dyn WindowStrategy> {
    if rng.gen_bool(0.5) {
        let a = rng.gen_range(1..=4);
        let b = rng.gen_range(a..=6);
        Arc::new(RegularWindow::new(a, b).expect("positive"))
    } else {
        Arc::new(AxialWindow::new(rng.gen_range(1..=3)).expect("positive"))
    }
}

/// Unshifted single-precision attention against dense masked attention.
pub fn attention_oracle(cases: usize, seed: u64) -> Check {
    timed("attention oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        let (mut regular, mut axial) = (0, 0);
        for case in 0..cases {
            let spec = random_spec(&mut rng);
            match spec.kind() {
                "regular" => regular += 1,
                _ => axial += 1,
            }
            let (h, w) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
            let (c, m) = [(2, 2), (4, 2), (4, 4), (6, 2), (8, 2), (8, 4)][rng.gen_range(0..6)];
            let lcm = rng.gen_bool(0.5);
            let p = random_params::<f32>(&mut rng, c, m, 8);
            let x = random_tensor::<f32>(&mut rng, &[1, h, w, c], 1.0);
            let tape = Tape::inference();
            let y = rwin_self_attention(&tape, &tape.constant(x.clone()), &p, spec.as_ref(), false, lcm)
                .map_err(|e| format!("case {case}: {e}"))?;
            let want = full_masked_attention(&x, &p, spec.as_ref(), lcm);
            let err = y
                .value()
                .data()
                .iter()
                .zip(want.data())
                .map(|(&a, &b)| (a as f64 - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(err);
            ensure(err <= 1e-5, || format!("case {case} ({spec:?}, {h}x{w}, C={c}, M={m}): max |diff| {err:.2e}"))?;
        }
        Ok(format!("{cases} cases ({regular} regular, {axial} axial), max |diff| {worst:.2e}"))
    })
}

/// Shifted attention: masked pairs get no weight and interior windows equal
/// plain attention on the translated grid.
pub fn shift_mask_oracle(cases: usize, seed: u64) -> Check {
    timed("shift-mask oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut masked_max, mut interior_max): (f64, f64) = (0.0, 0.0);
        let (mut masked_pairs, mut interior) = (0usize, 0usize);
        for case in 0..cases {
            let spec = random_spec(&mut rng);
            let (h, w) = (rng.gen_range(2..=12), rng.gen_range(2..=12));
            let p = random_params::<f32>(&mut rng, 4, 2, 8);
            let x = random_tensor::<f32>(&mut rng, &[1, h, w, 4], 1.0);
            let tape = Tape::inference();
            let (_, traces) =
                rwin_self_attention_traced(&tape, &tape.constant(x.clone()), &p, spec.as_ref(), true, false)
                    .map_err(|e| format!("case {case}: {e}"))?;
            for t in traces {
                let g = t.geometry;
                let (n, nw) = (g.window_len(), g.num_windows());
                let cols = g.padded_width() / g.sw;
                let weights = t.weights.data();
                for win in 0..nw {
                    let base = win * n * n;
                    let region = |i: usize| origin_region(&g, (win / cols) * g.sh + i / g.sw, (win % cols) * g.sw + i % g.sw);
                    for i in 0..n {
                        for j in 0..n {
                            if region(i) != region(j) {
                                let a = weights[base + i * n + j] as f64;
                                masked_pairs += 1;
                                masked_max = masked_max.max(a);
                                ensure(a < 1e-9, || format!("case {case}: masked weight {a:.2e}"))?;
                            }
                        }
                    }
                    let origins: Vec<_> = (0..n).map(|i| window_origin(&g, win, i)).collect();
                    let (y0, x0) = origins[0];
                    let contiguous = origins
                        .iter()
                        .enumerate()
                        .all(|(i, &(y, xx))| y == y0 + i / g.sw && xx == x0 + i % g.sw && y < h && xx < w);
                    if contiguous {
                        interior += 1;
                        let want = direct_window_weights(&x, &p, t.head, 0, (y0, x0), (g.sh, g.sw));
                        for (a, b) in weights[base..base + n * n].iter().zip(&want) {
                            let d = (*a as f64 - b).abs();
                            interior_max = interior_max.max(d);
                            ensure(d <= 1e-5, || format!("case {case}: interior window differs by {d:.2e}"))?;
                        }
                    }
                }
            }
        }
        ensure(masked_pairs > 0 && interior > 0, || "no masked pairs or interior windows exercised".into())?;
        Ok(format!(
            "{cases} cases: {masked_pairs} masked pairs (max weight {masked_max:.1e}), {interior} interior windows (max |diff| {interior_max:.2e})"
        ))
    })
}

/// Normalizer floor for gradient comparison: six orders above the
/// differencing noise of an O(10) loss at step 1e-4. Only tensors whose
/// gradient vanishes identically fall below it.
pub const GRAD_FLOOR: f64 = 1e-5;

/// One full block in double precision against central differences.
pub fn block_gradients(seed: u64) -> Check {
    timed("block gradients", || {
        let cfg = ModelConfig {
            channels: 4,
            heads: 2,
            pos_hidden: 4,
            ..ModelConfig::tiny(Task::Car)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = init_params::<f64>(&cfg, seed).map_err(|e| e.to_string())?.map(|name, t| {
            let noise: Tensor<f64> = random_tensor(&mut rng, t.shape(), 0.5);
            if name.ends_with("gamma") {
                noise.map(|v| v + 1.0)
            } else if name.ends_with("pos.b1") || name.ends_with("pos.b2") {
                // Keeps every hidden unit of the bias net active.
                noise.map(|v| v.abs() + 0.5)
            } else {
                noise
            }
        });
        let x = random_tensor::<f64>(&mut rng, &[1, 6, 8, 4], 1.0);
        let probe = random_tensor::<f64>(&mut rng, &[1, 6, 8, 4], 1.0);
        let spec = RegularWindow::new(2, 4).expect("positive");
        let loss = |s: &ParamStore<f64>, tape: &Tape<f64>, shifted: bool| -> Result<Var<f64>, String> {
            let bound = s.bind(tape);
            let p = BlockParams::bind(&bound, "group.0.block.0", 2).map_err(|e| e.to_string())?;
            let y = catb_forward(tape, &tape.constant(x.clone()), &p, &spec, shifted).map_err(|e| e.to_string())?;
            let prod = tape.mul(&y, &tape.constant(probe.clone())).map_err(|e| e.to_string())?;
            Ok(tape.sum(&prod))
        };
        let names: Vec<String> = store.names().filter(|n| n.starts_with("group.0.block.0.")).map(String::from).collect();
        let mut worst = (0.0, String::new());
        for shifted in [false, true] {
            let tape = Tape::new();
            let l = loss(&store, &tape, shifted)?;
            let grads = tape.backward(&l).map_err(|e| e.to_string())?;
            for name in &names {
                let value = store.get(name).expect("listed").clone();
                let numeric = numeric_gradient(&value, 1e-4, |t| {
                    let mut s = store.clone();
                    *s.get_mut(name).expect("listed") = t.clone();
                    loss(&s, &Tape::inference(), shifted).map(|v| v.value().data()[0]).unwrap_or(f64::NAN)
                });
                let analytic = grads.by_name(name).ok_or_else(|| format!("no gradient for {name}"))?;
                let check = compare_with_floor(name, analytic, &numeric, GRAD_FLOOR);
                ensure(check.rel_err <= 1e-3, || format!("{name} (shifted={shifted}): rel err {:.2e}", check.rel_err))?;
                if check.rel_err > worst.0 {
                    worst = (check.rel_err, name.clone());
                }
            }
        }
        Ok(format!(
            "{} tensors x 2 shift states, worst rel err {:.2e} ({})",
            names.len(),
            worst.0,
            worst.1
        ))
    })
}

/// Window partition, pixel shuffle and the zero-weight artifact model.
pub fn structural_identities(seed: u64) -> Check {
    timed("structural identities", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let (sh, sw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
            let (h, w) = (sh * rng.gen_range(1..=4), sw * rng.gen_range(1..=4));
            let (n, c) = (rng.gen_range(1..=2), rng.gen_range(1..=4));
            let x = random_tensor::<f32>(&mut rng, &[n, h, w, c], 1.0);
            let g = WindowGeometry::new(Orientation::Horizontal, Some(sh), Some(sw), h, w, false);
            let back = partition(&x, &g).and_then(|p| merge(&p, &g, n, h, w)).map_err(|e| e.to_string())?;
            ensure(back.bit_eq(&x), || format!("partition/merge changed a {h}x{w} map with {sh}x{sw} windows"))?;

            let r = rng.gen_range(2..=4);
            let shape = [n, rng.gen_range(1..=4), rng.gen_range(1..=4), r * r * c];
            let y = random_tensor::<f32>(&mut rng, &shape, 1.0);
            let (_, index) = ops::pixel_shuffle_index(y.shape(), r).map_err(|e| e.to_string())?;
            let mut seen = vec![false; y.len()];
            index.iter().for_each(|&i| seen[i] = true);
            ensure(index.len() == y.len() && seen.iter().all(|&s| s), || "pixel shuffle index is not a permutation".into())?;
            let round = ops::pixel_shuffle(&y, r)
                .and_then(|s| ops::pixel_unshuffle(&s, r))
                .map_err(|e| e.to_string())?;
            ensure(round.bit_eq(&y), || "pixel unshuffle did not invert pixel shuffle".into())?;
        }
        let cfg = ModelConfig::tiny(Task::Car);
        let zero = init_params::<f32>(&cfg, seed)
            .map_err(|e| e.to_string())?
            .map(|_, t| Tensor::zeros(t.shape()).expect("positive extents"));
        let img = random_tensor::<f32>(&mut rng, &[1, 13, 10, 1], 1.0).map(|v| v.abs());
        let out = infer(&zero, &cfg, &img).map_err(|e| e.to_string())?;
        ensure(out.bit_eq(&img), || "zero-weight artifact model is not the identity".into())?;
        Ok("50 partition/merge and pixel-shuffle roundtrips exact; zero-weight CAR model is the identity".into())
    })
}

/// Toy training run, repeated to confirm determinism.
pub fn toy_overfit(opts: &OverfitOptions) -> Check {
    timed("toy overfit", || {
        let run = || overfit(opts, |_, _| {}).map_err(|e| e.to_string());
        let (first, store_a) = run()?;
        let (second, store_b) = run()?;
        ensure(first.losses == second.losses && store_a.bit_eq(&store_b), || "two runs with one seed diverged".into())?;
        ensure(first.reduction() >= opts.target_reduction, || {
            format!(
                "loss {:.4} -> {:.4} ({:.1}% reduction) after {} steps",
                first.initial,
                first.best,
                100.0 * first.reduction(),
                first.losses.len()
            )
        })?;
        Ok(format!(
            "L1 {:.4} -> {:.4} ({:.1}% reduction) in {} steps, deterministic",
            first.initial,
            first.best,
            100.0 * first.reduction(),
            first.losses.len()
        ))
    })
}

/// Closed-form PSNR, SSIM self-similarity and weight-file roundtrip.
pub fn metric_identities(seed: u64) -> Check {
    timed("metrics and weight file", || {
        let a = ImageU8::new(32, 32, 3, vec![100; 32 * 32 * 3]).expect("valid");
        let b = ImageU8::new(32, 32, 3, vec![101; 32 * 32 * 3]).expect("valid");
        let p = psnr(&a, &b, ChannelMode::Rgb, 0).map_err(|e| e.to_string())?;
        ensure((p - 48.1308).abs() <= 1e-3, || format!("PSNR {p:.4} for a unit offset"))?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = ImageU8::new(24, 20, 3, (0..24 * 20 * 3).map(|_| rng.gen()).collect()).expect("valid");
        for mode in [ChannelMode::Rgb, ChannelMode::Y] {
            let s = ssim(&noisy, &noisy, mode, 0).map_err(|e| e.to_string())?;
            ensure(s == 1.0, || format!("SSIM(x, x) = {s} in {mode} mode"))?;
        }

        let cfg = ModelConfig::tiny(Task::Sr { scale: 2 });
        let store = init_params::<f32>(&cfg, seed).map_err(|e| e.to_string())?;
        let dir = std::env::temp_dir().join(format!("cat-check-{}-{seed}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        let path = dir.join("weights.bin");
        save_weights(&store, &path).map_err(|e| e.to_string())?;
        let back = load_weights::<f32>(&path).map_err(|e| e.to_string());
        let _ = std::fs::remove_dir_all(&dir);
        ensure(back?.bit_eq(&store), || "weight file roundtrip changed the store".into())?;
        Ok(format!("PSNR {p:.4} dB, SSIM(x,x) = 1 exactly, {} tensors roundtrip bit-exact", store.len()))
    })
}
