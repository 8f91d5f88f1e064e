use cat_core::params::ParamStore;
use cat_core::window::{cyclic_shift, merge, partition, shift_mask, Orientation, WindowGeometry};
use cat_tensor::Tensor;
use proptest::prelude::*;

fn ramp(shape: &[usize]) -> Tensor<f32> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|i| i as f32).collect()).unwrap()
}

proptest! {
    #[test]
    fn partition_merge_roundtrip(n in 1usize..3, rows in 1usize..4, cols in 1usize..4, sh in 1usize..5, sw in 1usize..5, c in 1usize..4) {
        let (h, w) = (rows * sh, cols * sw);
        let x = ramp(&[n, h, w, c]);
        let g = WindowGeometry::new(Orientation::Horizontal, Some(sh), Some(sw), h, w, false);
        let windows = partition(&x, &g).unwrap();
        prop_assert_eq!(windows.shape(), &[n * rows * cols, sh * sw, c]);
        prop_assert!(merge(&windows, &g, n, h, w).unwrap().bit_eq(&x));
    }

    #[test]
    fn shift_then_unshift_is_identity(h in 1usize..9, w in 1usize..9, dy in -9isize..9, dx in -9isize..9) {
        let x = ramp(&[1, h, w, 2]);
        let back = cyclic_shift(&cyclic_shift(&x, dy, dx).unwrap(), -dy, -dx).unwrap();
        prop_assert!(back.bit_eq(&x));
    }

    #[test]
    fn mask_is_symmetric_with_zero_diagonal(h in 2usize..12, w in 2usize..12, sh in 1usize..5, sw in 1usize..6) {
        let g = WindowGeometry::new(Orientation::Horizontal, Some(sh), Some(sw), h, w, true);
        let m = shift_mask(&g);
        for win in 0..m.num_windows {
            for i in 0..m.window_len {
                prop_assert_eq!(m.get(win, i, i), 0.0);
                for j in 0..m.window_len {
                    prop_assert_eq!(m.get(win, i, j), m.get(win, j, i));
                }
            }
        }
    }

    #[test]
    fn weight_bytes_roundtrip(entries in proptest::collection::vec((1usize..4, 1usize..5, any::<u32>()), 1..6)) {
        let mut store = ParamStore::<f32>::new();
        for (i, (a, b, seed)) in entries.iter().enumerate() {
            let data = (0..a * b).map(|k| f32::from_bits(seed.wrapping_add(k as u32 * 7919) & 0x7f7f_ffff)).collect();
            store.insert(format!("layer.{i}.weight"), Tensor::from_vec(&[*a, *b], data).unwrap()).unwrap();
        }
        let back = ParamStore::<f32>::from_bytes(&store.to_bytes().unwrap()).unwrap();
        prop_assert!(back.bit_eq(&store));
    }
}
