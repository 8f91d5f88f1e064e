//! Named groups of checks for `cat selftest`.

use crate::checks::{self, Check};
use crate::train::OverfitOptions;

pub struct Suite {
    pub name: &'static str,
    pub about: &'static str,
    run: fn() -> Vec<Check>,
}

impl Suite {
    pub fn run(&self) -> Vec<Check> {
        (self.run)()
    }
}

pub const SUITES: &[Suite] = &[
    Suite {
        name: "accounting",
        about: "parameter and FLOP totals of the standard configurations",
        run: || vec![checks::parameter_accounting(), checks::flop_accounting(), checks::window_sweep()],
    },
    Suite {
        name: "attention",
        about: "window attention against dense and shifted-window oracles",
        run: || vec![checks::attention_oracle(120, 1), checks::shift_mask_oracle(40, 2)],
    },
    Suite {
        name: "gradients",
        about: "block gradients against central differences",
        run: || vec![checks::block_gradients(3)],
    },
    Suite {
        name: "identities",
        about: "partition, pixel shuffle and zero-weight identities",
        run: || vec![checks::structural_identities(4)],
    },
    Suite {
        name: "overfit",
        about: "small network fits one patch",
        run: || vec![checks::toy_overfit(&OverfitOptions::default())],
    },
    Suite {
        name: "metrics",
        about: "PSNR, SSIM and weight-file identities",
        run: || vec![checks::metric_identities(5)],
    },
];

/// Suites whose name contains `filter`, or all of them.
pub fn select(filter: Option<&str>) -> Vec<&'static Suite> {
    SUITES
        .iter()
        .filter(|s| filter.is_none_or(|f| s.name.contains(f)))
        .collect()
}
