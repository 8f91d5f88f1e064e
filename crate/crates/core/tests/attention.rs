mod common;

use std::sync::Arc;

use cat_core::attention::{head_geometries, rwin_self_attention, rwin_self_attention_traced};
use cat_core::reference::{direct_window_weights, full_masked_attention, origin_region, window_origin};
use cat_core::{AxialWindow, RegularWindow, WindowStrategy};
use cat_tensor::gradcheck::{compare, numeric_gradient};
use cat_tensor::{Tape, Tensor, Var};
use common::{attention_params, max_diff, random, rng};
use rand::Rng;

fn specs() -> Vec<Arc<dyn WindowStrategy>> {
    vec![
        Arc::new(RegularWindow::new(1, 2).unwrap()),
        Arc::new(RegularWindow::new(2, 4).unwrap()),
        Arc::new(RegularWindow::new(3, 5).unwrap()),
        Arc::new(AxialWindow::new(1).unwrap()),
        Arc::new(AxialWindow::new(2).unwrap()),
    ]
}

#[test]
fn unshifted_matches_dense_masked_attention() {
    let mut r = rng(1);
    for case in 0..40 {
        let spec = &specs()[case % 5];
        let (h, w) = (r.gen_range(1..=8), r.gen_range(1..=12));
        let (c, m) = [(2, 2), (4, 2), (8, 4), (8, 2)][r.gen_range(0..4)];
        let lcm = r.gen_bool(0.5);
        let p = attention_params::<f64>(&mut r, c, m, 6);
        let x = random::<f64>(&mut r, &[2, h, w, c], 1.0);
        let tape = Tape::inference();
        let y = rwin_self_attention(&tape, &tape.constant(x.clone()), &p, spec.as_ref(), false, lcm).unwrap();
        let want = full_masked_attention(&x, &p, spec.as_ref(), lcm);
        let err = max_diff(y.value(), &want);
        assert!(err < 1e-9, "case {case}: {spec:?} {h}x{w} c={c} m={m} lcm={lcm}: {err}");
    }
}

#[test]
fn unshifted_matches_dense_in_single_precision() {
    let mut r = rng(2);
    for case in 0..10 {
        let spec = &specs()[case % 5];
        let p = attention_params::<f32>(&mut r, 4, 2, 6);
        let x = random::<f32>(&mut r, &[1, 6, 9, 4], 1.0);
        let tape = Tape::inference();
        let y = rwin_self_attention(&tape, &tape.constant(x.clone()), &p, spec.as_ref(), false, true).unwrap();
        let err = max_diff(y.value(), &full_masked_attention(&x, &p, spec.as_ref(), true));
        assert!(err < 1e-5, "case {case}: {err}");
    }
}

#[test]
fn shifted_weights_respect_regions_and_match_interior_windows() {
    let mut r = rng(3);
    let mut interior_windows = 0;
    for case in 0..12 {
        let spec = &specs()[case % 5];
        let (h, w) = (r.gen_range(4..=9), r.gen_range(4..=12));
        let p = attention_params::<f64>(&mut r, 4, 2, 6);
        let x = random::<f64>(&mut r, &[2, h, w, 4], 1.0);
        let tape = Tape::inference();
        let (_, traces) =
            rwin_self_attention_traced(&tape, &tape.constant(x.clone()), &p, spec.as_ref(), true, false).unwrap();
        assert_eq!(traces.len(), 2);
        for t in &traces {
            let g = t.geometry;
            let n = g.window_len();
            let nw = g.num_windows();
            let weights = t.weights.data();
            for b in 0..2 {
                for win in 0..nw {
                    let base = (b * nw + win) * n * n;
                    let region = |i: usize| {
                        let cols = g.padded_width() / g.sw;
                        let y = (win / cols) * g.sh + i / g.sw;
                        let xx = (win % cols) * g.sw + i % g.sw;
                        origin_region(&g, y, xx)
                    };
                    for i in 0..n {
                        let row = &weights[base + i * n..base + (i + 1) * n];
                        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                        for (j, &a) in row.iter().enumerate() {
                            assert!(a >= 0.0);
                            if region(i) != region(j) {
                                assert!(a < 1e-9, "case {case} head {} win {win} ({i},{j}) = {a}", t.head);
                            }
                        }
                    }
                    let origins: Vec<_> = (0..n).map(|i| window_origin(&g, win, i)).collect();
                    let (y0, x0) = origins[0];
                    let interior = origins
                        .iter()
                        .enumerate()
                        .all(|(i, &(y, xx))| y == y0 + i / g.sw && xx == x0 + i % g.sw && y < h && xx < w);
                    if interior {
                        interior_windows += 1;
                        let want = direct_window_weights(&x, &p, t.head, b, (y0, x0), (g.sh, g.sw));
                        for (a, e) in weights[base..base + n * n].iter().zip(&want) {
                            assert!((a - e).abs() < 1e-9, "case {case} interior window {win}");
                        }
                    }
                }
            }
        }
    }
    assert!(interior_windows > 50, "{interior_windows}");
}

#[test]
fn permuting_windows_permutes_outputs() {
    let mut r = rng(4);
    let spec = RegularWindow::new(2, 2).unwrap();
    let mut p = attention_params::<f64>(&mut r, 4, 2, 6);
    p.lcm = None;
    let x = random::<f64>(&mut r, &[1, 4, 4, 4], 1.0);
    // Swap the top-left and bottom-right 2x2 windows.
    let swap = |t: &Tensor<f64>| {
        let mut out = t.clone();
        let d = out.data_mut();
        for y in 0..2 {
            for xx in 0..2 {
                for ch in 0..4 {
                    let a = (y * 4 + xx) * 4 + ch;
                    let b = ((y + 2) * 4 + xx + 2) * 4 + ch;
                    d.swap(a, b);
                }
            }
        }
        out
    };
    let tape = Tape::inference();
    let run = |t: &Tensor<f64>| {
        rwin_self_attention(&tape, &tape.constant(t.clone()), &p, &spec, false, false)
            .unwrap()
            .into_value()
    };
    assert!(swap(&run(&x)).max_abs_diff(&run(&swap(&x))).unwrap() < 1e-12);
}

#[test]
fn head_split_law() {
    for (a, b) in [(1, 2), (2, 4), (4, 16), (3, 3)] {
        let [h, v] = head_geometries(&RegularWindow::new(b, a).unwrap(), 32, 32, false);
        assert_eq!((h.sh, h.sw), (a, b));
        assert_eq!((v.sh, v.sw), (b, a));
    }
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(5);
    let base = attention_params::<f64>(&mut r, 4, 2, 4);
    let x0 = random::<f64>(&mut r, &[1, 5, 6, 4], 1.0);
    let probe = random::<f64>(&mut r, &[1, 5, 6, 4], 1.0);
    let spec = RegularWindow::new(2, 4).unwrap();

    let names = ["x", "wq", "wk", "wv", "wp", "lcm", "w1", "w3"];
    let run = |tape: &Tape<f64>, vals: &[Tensor<f64>]| {
        let vars: Vec<Var<f64>> = names.iter().zip(vals).map(|(n, t)| tape.watch(*n, t.clone())).collect();
        let mut p = base.clone();
        p.wq = vars[1].clone();
        p.wk = vars[2].clone();
        p.wv = vars[3].clone();
        p.wp = vars[4].clone();
        p.lcm = Some((vars[5].clone(), base.lcm.as_ref().unwrap().1.clone()));
        p.pos.w1 = vars[6].clone();
        p.pos.w3 = vars[7].clone();
        let y = rwin_self_attention(tape, &vars[0], &p, &spec, true, true).unwrap();
        let w = tape.constant(probe.clone());
        tape.sum(&tape.mul(&y, &w).unwrap())
    };
    let vals = vec![
        x0.clone(),
        base.wq.value().clone(),
        base.wk.value().clone(),
        base.wv.value().clone(),
        base.wp.value().clone(),
        base.lcm.as_ref().unwrap().0.value().clone(),
        base.pos.w1.value().clone(),
        base.pos.w3.value().clone(),
    ];
    let tape = Tape::new();
    let loss = run(&tape, &vals);
    let grads = tape.backward(&loss).unwrap();
    for (i, name) in names.iter().enumerate() {
        let numeric = numeric_gradient(&vals[i], 1e-4, |t| {
            let mut v = vals.clone();
            v[i] = t.clone();
            run(&Tape::inference(), &v).value().data()[0]
        });
        let check = compare(name, grads.by_name(name).unwrap(), &numeric);
        assert!(check.rel_err < 1e-3, "{check:?}");
    }
}
