use std::sync::Arc;

use cat_core::complexity::{attention_flops, count_params, model_flops};
use cat_core::{AxialWindow, ModelConfig, RegularWindow, Task, WindowSchedule, WindowStrategy};
use proptest::prelude::*;

fn within(actual: f64, expected: f64, tol: f64) -> bool {
    ((actual - expected) / expected).abs() <= tol
}

fn giga(cfg: &ModelConfig) -> f64 {
    model_flops(cfg, 128, 128).flops as f64 / 1e9
}

fn axial_schedule(sl: [usize; 6]) -> WindowSchedule {
    WindowSchedule::PerGroup(
        sl.iter()
            .map(|&s| Arc::new(AxialWindow::new(s).unwrap()) as Arc<dyn WindowStrategy>)
            .collect(),
    )
}

#[test]
fn reference_parameter_counts() {
    for cfg in [ModelConfig::cat_r(Task::Sr { scale: 4 }), ModelConfig::cat_a(Task::Sr { scale: 4 })] {
        let m = count_params(&cfg) as f64 / 1e6;
        assert!(within(m, 16.60, 0.02), "{m}");
        assert_eq!(model_flops(&cfg, 128, 128).params, count_params(&cfg));
    }
}

#[test]
fn reference_flops() {
    let r4 = giga(&ModelConfig::cat_r(Task::Sr { scale: 4 }));
    let a4 = giga(&ModelConfig::cat_a(Task::Sr { scale: 4 }));
    assert!(within(r4, 292.7, 0.02), "{r4}");
    assert!(within(a4, 360.7, 0.02), "{a4}");

    let with = ModelConfig::cat_r(Task::Sr { scale: 2 });
    let without = ModelConfig { lcm: false, ..with.clone() };
    let (g1, g0) = (giga(&with), giga(&without));
    assert!(within(g1, 282.7, 0.02), "{g1}");
    assert!(within(g0, 281.8, 0.02), "{g0}");
    let delta = (g1 - g0) / g0;
    assert!((0.0026..=0.0035).contains(&delta), "{delta}");
}

#[test]
fn axial_width_sweep() {
    for (sl, want) in [
        ([2, 2, 2, 2, 2, 2], 323.5),
        ([2, 2, 2, 4, 4, 4], 350.7),
        ([4, 4, 4, 4, 4, 4], 377.9),
    ] {
        let cfg = ModelConfig {
            window: axial_schedule(sl),
            ..ModelConfig::cat_a(Task::Sr { scale: 2 })
        };
        let g = giga(&cfg);
        assert!(within(g, want, 0.02), "{sl:?}: {g}");
    }
}

#[test]
fn body_scales_with_area() {
    let cfg = ModelConfig::cat_r(Task::Sr { scale: 4 });
    let small = model_flops(&cfg, 32, 48);
    let big = model_flops(&cfg, 64, 96);
    for (a, b) in small.rows.iter().zip(&big.rows) {
        if a.name.ends_with("pos_bias") {
            // Evaluated once per window shape, independent of image size.
            assert_eq!(a.flops, b.flops);
        } else {
            assert_eq!(4 * a.flops, b.flops, "{}", a.name);
        }
    }
}

proptest! {
    #[test]
    fn axial_costs_more_when_stripes_outgrow_windows(
        c in 1usize..64, h in 1usize..128, w in 1usize..128, sl in 1usize..8, sh in 1usize..8, sw in 1usize..16,
    ) {
        let axial = attention_flops(&AxialWindow::new(sl).unwrap(), c, h, w);
        let regular = attention_flops(&RegularWindow::new(sh, sw).unwrap(), c, h, w);
        if sl * (h + w) > 2 * sh * sw {
            prop_assert!(axial > regular);
        }
    }

    #[test]
    fn report_totals_are_row_sums(groups in 0usize..3, blocks in 1usize..3, h in 1usize..40, w in 1usize..40, scale in 2usize..=4) {
        let cfg = ModelConfig { groups, blocks, ..ModelConfig::tiny(Task::Sr { scale }) };
        let r = model_flops(&cfg, h, w);
        prop_assert_eq!(r.flops, r.rows.iter().map(|x| x.flops).sum::<u64>());
        prop_assert_eq!(r.params, count_params(&cfg));
    }
}
