//! Test-time averaging over the eight symmetries of the square.

use cat_tensor::{ops, Element, Tensor};

use crate::error::{HarnessError, Result};

/// Horizontal flip (applied first) followed by `rot` quarter turns
/// counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub rot: u8,
    pub flip: bool,
}

impl Dihedral {
    pub const IDENTITY: Self = Self { rot: 0, flip: false };

    pub fn all() -> [Self; 8] {
        let mut out = [Self::IDENTITY; 8];
        for (i, d) in out.iter_mut().enumerate() {
            *d = Self {
                rot: (i % 4) as u8,
                flip: i >= 4,
            };
        }
        out
    }

    pub fn apply<T: Element>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut t = if self.flip { flip(x)? } else { x.clone() };
        for _ in 0..self.rot % 4 {
            t = rotate(&t)?;
        }
        Ok(t)
    }

    pub fn invert<T: Element>(self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut t = x.clone();
        for _ in 0..(4 - self.rot % 4) % 4 {
            t = rotate(&t)?;
        }
        if self.flip {
            t = flip(&t)?;
        }
        Ok(t)
    }
}

fn dims<T: Element>(x: &Tensor<T>) -> Result<[usize; 4]> {
    <[usize; 4]>::try_from(x.shape())
        .map_err(|_| HarnessError::Shape(format!("expected [N,H,W,C], got {:?}", x.shape())))
}

fn remap<T: Element>(x: &Tensor<T>, out: [usize; 4], src: impl Fn(usize, usize) -> (usize, usize)) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims(x)?;
    let [_, oh, ow, _] = out;
    let mut index = Vec::with_capacity(n * oh * ow * c);
    for b in 0..n {
        for y in 0..oh {
            for xx in 0..ow {
                let (sy, sx) = src(y, xx);
                let base = ((b * h + sy) * w + sx) * c;
                index.extend(base..base + c);
            }
        }
    }
    Ok(ops::gather(x, &out, &index)?)
}

fn flip<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims(x)?;
    remap(x, [n, h, w, c], |y, xx| (y, w - 1 - xx))
}

/// Quarter turn counter-clockwise: `H×W → W×H`.
fn rotate<T: Element>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, h, w, c] = dims(x)?;
    remap(x, [n, w, h, c], |y, xx| (xx, w - 1 - y))
}

/// Runs `f` on every dihedral view of `x`, maps each result back and
/// averages in double precision.
pub fn self_ensemble<T: Element>(
    x: &Tensor<T>,
    mut f: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut acc: Option<(Vec<usize>, Vec<f64>)> = None;
    for d in Dihedral::all() {
        let y = d.invert(&f(&d.apply(x)?)?)?;
        match &mut acc {
            None => acc = Some((y.shape().to_vec(), y.data().iter().map(|&v| Element::to_f64(v)).collect())),
            Some((shape, sum)) => {
                if shape.as_slice() != y.shape() {
                    return Err(HarnessError::Shape(format!(
                        "ensemble outputs disagree: {shape:?} vs {:?}",
                        y.shape()
                    )));
                }
                sum.iter_mut().zip(y.data()).for_each(|(s, v)| *s += Element::to_f64(*v));
            }
        }
    }
    let (shape, sum) = acc.expect("eight views");
    let mean: Vec<f64> = sum.iter().map(|s| s / 8.0).collect();
    Ok(Tensor::from_f64(&shape, &mean)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor<f64> {
        Tensor::from_vec(&[1, h, w, 2], (0..h * w * 2).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn each_view_inverts() {
        let x = ramp(3, 5);
        for d in Dihedral::all() {
            assert!(d.invert(&d.apply(&x).unwrap()).unwrap().bit_eq(&x), "{d:?}");
        }
    }

    #[test]
    fn views_are_distinct() {
        let x = ramp(3, 3);
        let views: Vec<_> = Dihedral::all().iter().map(|d| d.apply(&x).unwrap()).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert!(!views[i].bit_eq(&views[j]));
            }
        }
    }

    #[test]
    fn quarter_turn_layout() {
        let x = Tensor::<f64>::from_f64(&[1, 2, 3, 1], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let r = rotate(&x).unwrap();
        assert_eq!(r.shape(), &[1, 3, 2, 1]);
        assert_eq!(r.data(), &[3., 6., 2., 5., 1., 4.]);
    }

    #[test]
    fn identity_model_is_unchanged() {
        let x = ramp(4, 6);
        let y = self_ensemble(&x, |t| Ok(t.clone())).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
    }
}
