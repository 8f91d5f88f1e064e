use cat_tensor::ops::{conv2d_3x3, pixel_shuffle, pixel_unshuffle, softmax_lastdim};
use cat_tensor::{Tape, Tensor};
use proptest::prelude::*;

fn tensor(shape: Vec<usize>, lo: f64, hi: f64) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(lo..hi, n).prop_map(move |v| Tensor::from_vec(&shape, v).unwrap())
}

fn image() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..3, 1usize..6, 1usize..6, 1usize..4)
        .prop_flat_map(|(n, h, w, c)| tensor(vec![n, h, w, c], -2.0, 2.0))
}

fn identity_kernel(c: usize) -> Tensor<f64> {
    let mut k = vec![0.0; 9 * c * c];
    for ch in 0..c {
        k[(4 * c + ch) * c + ch] = 1.0;
    }
    Tensor::from_vec(&[3, 3, c, c], k).unwrap()
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(x in (1usize..5, 1usize..9).prop_flat_map(|(r, c)| tensor(vec![r, c], -50.0, 50.0))) {
        let y = softmax_lastdim(&x.cast::<f32>());
        for row in y.data().chunks(x.last_dim()) {
            let s: f64 = row.iter().map(|&v| v as f64).sum();
            prop_assert!((s - 1.0).abs() <= 1e-6);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn pixel_shuffle_round_trips(
        x in (1usize..3, 1usize..4, 1usize..4, 1usize..3, 1usize..4)
            .prop_flat_map(|(n, h, w, c, r)| (tensor(vec![n, h, w, c * r * r], -1.0, 1.0), Just(r)))
    ) {
        let (x, r) = x;
        let y = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(pixel_unshuffle(&y, r).unwrap(), x);
    }

    #[test]
    fn identity_conv_preserves_interior(x in image()) {
        let s = x.shape().to_vec();
        let c = s[3];
        let y = conv2d_3x3(&x, &identity_kernel(c), &Tensor::zeros(&[c]).unwrap(), false).unwrap();
        // Center tap only: exact everywhere, border included.
        prop_assert_eq!(&y, &x);
        let dw = Tensor::from_vec(&[3, 3, c, 1], (0..9 * c).map(|i| if i / c == 4 { 1.0 } else { 0.0 }).collect()).unwrap();
        let y = conv2d_3x3(&x, &dw, &Tensor::zeros(&[c]).unwrap(), true).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn forward_is_deterministic(x in image()) {
        let run = || {
            let tape = Tape::inference();
            let v = tape.constant(x.clone());
            let g = tape.gelu(&v);
            tape.softmax_lastdim(&g).into_value()
        };
        prop_assert!(run().bit_eq(&run()));
    }
}

#[test]
fn outputs_do_not_alias_inputs() {
    let mut x = Tensor::<f64>::from_f64(&[1, 2], &[1.0, 2.0]).unwrap();
    let y = x.reshape(&[2]).unwrap();
    x.data_mut()[0] = 10.0;
    assert_eq!(y.data(), &[1.0, 2.0]);
}
