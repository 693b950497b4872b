//! Patch unrolling so convolutions become matrix products, and its adjoint
//! for the backward pass.

use ndarray::{Array2, Array4, ArrayView4};

use crate::error::{Error, Result};

/// Output spatial size of a convolution.
pub fn conv_out_hw(
    h: usize,
    w: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> (usize, usize) {
    (
        (h + 2 * pad - kernel) / stride + 1,
        (w + 2 * pad - kernel) / stride + 1,
    )
}

/// Unroll `(B, C, H, W)` into `(B * OH * OW, C * K * K)`: row `b * OH*OW +
/// oh * OW + ow` holds the receptive field of output position `(oh, ow)`
/// flattened channel-major, kernel row-major. Out-of-bounds taps read zero.
pub fn im2col(input: &ArrayView4<f32>, kernel: usize, stride: usize, pad: usize) -> Array2<f32> {
    let (b, c, h, w) = input.dim();
    let (oh, ow) = conv_out_hw(h, w, kernel, stride, pad);
    let patches = oh * ow;
    let fan_in = c * kernel * kernel;
    let mut out = Array2::<f32>::zeros((b * patches, fan_in));
    for bi in 0..b {
        for p_oh in 0..oh {
            for p_ow in 0..ow {
                let row = bi * patches + p_oh * ow + p_ow;
                let ih0 = (p_oh * stride) as isize - pad as isize;
                let iw0 = (p_ow * stride) as isize - pad as isize;
                let mut dst = 0usize;
                for ch in 0..c {
                    for kh in 0..kernel {
                        let ih = ih0 + kh as isize;
                        if ih < 0 || ih >= h as isize {
                            dst += kernel;
                            continue;
                        }
                        for kw in 0..kernel {
                            let iw = iw0 + kw as isize;
                            if iw >= 0 && iw < w as isize {
                                out[(row, dst)] = input[(bi, ch, ih as usize, iw as usize)];
                            }
                            dst += 1;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatter-add patch-space gradients back onto the
/// input tensor.
pub fn col2im(
    cols: &Array2<f32>,
    dims: (usize, usize, usize, usize),
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<Array4<f32>> {
    let (b, c, h, w) = dims;
    let (oh, ow) = conv_out_hw(h, w, kernel, stride, pad);
    let patches = oh * ow;
    if cols.dim() != (b * patches, c * kernel * kernel) {
        return Err(Error::Shape(format!(
            "col2im: got {:?}, expected ({}, {})",
            cols.dim(),
            b * patches,
            c * kernel * kernel
        )));
    }
    let mut out = Array4::<f32>::zeros((b, c, h, w));
    for bi in 0..b {
        for p_oh in 0..oh {
            for p_ow in 0..ow {
                let row = bi * patches + p_oh * ow + p_ow;
                let ih0 = (p_oh * stride) as isize - pad as isize;
                let iw0 = (p_ow * stride) as isize - pad as isize;
                let mut src = 0usize;
                for ch in 0..c {
                    for kh in 0..kernel {
                        let ih = ih0 + kh as isize;
                        if ih < 0 || ih >= h as isize {
                            src += kernel;
                            continue;
                        }
                        for kw in 0..kernel {
                            let iw = iw0 + kw as isize;
                            if iw >= 0 && iw < w as isize {
                                out[(bi, ch, ih as usize, iw as usize)] += cols[(row, src)];
                            }
                            src += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn one_by_one_kernel_is_a_reshape() {
        let input = Array4::from_shape_fn((2, 3, 4, 4), |(b, c, i, j)| {
            (b * 100 + c * 10 + i * 4 + j) as f32
        });
        let cols = im2col(&input.view(), 1, 1, 0);
        assert_eq!(cols.dim(), (2 * 16, 3));
        for b in 0..2 {
            for i in 0..4 {
                for j in 0..4 {
                    for c in 0..3 {
                        assert_eq!(cols[(b * 16 + i * 4 + j, c)], input[(b, c, i, j)]);
                    }
                }
            }
        }
    }

    #[test]
    fn padded_3x3_on_5x5_counts() {
        let input = Array4::<f32>::ones((1, 1, 5, 5));
        let cols = im2col(&input.view(), 3, 1, 1);
        // 5x5 output positions, 9 taps each
        assert_eq!(cols.dim(), (25, 9));
        // corner patch sees 4 in-bounds ones
        let corner: f32 = cols.row(0).sum();
        assert_eq!(corner, 4.0);
        // center patch sees all 9
        let center: f32 = cols.row(12).sum();
        assert_eq!(center, 9.0);
    }

    #[test]
    fn matches_naive_convolution() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (b, c, h, w) = (2, 3, 7, 6);
        let (oc, k, s, p) = (4, 3, 2, 1);
        let input = Array4::from_shape_fn((b, c, h, w), |_| rng.gen_range(-1.0f32..1.0));
        let weight =
            Array2::from_shape_fn((c * k * k, oc), |_| rng.gen_range(-1.0f32..1.0));
        let cols = im2col(&input.view(), k, s, p);
        let y = cols.dot(&weight);
        let (oh, ow) = conv_out_hw(h, w, k, s, p);

        // independent naive nested-loop convolution
        for bi in 0..b {
            for o in 0..oc {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = 0.0f64;
                        for ch in 0..c {
                            for kh in 0..k {
                                for kw in 0..k {
                                    let ih = (i * s + kh) as isize - p as isize;
                                    let iw = (j * s + kw) as isize - p as isize;
                                    if ih >= 0 && iw >= 0 && ih < h as isize && iw < w as isize
                                    {
                                        let xv =
                                            input[(bi, ch, ih as usize, iw as usize)] as f64;
                                        let wv =
                                            weight[(ch * k * k + kh * k + kw, o)] as f64;
                                        acc += xv * wv;
                                    }
                                }
                            }
                        }
                        let got = y[(bi * oh * ow + i * ow + j, o)] as f64;
                        assert!(
                            (got - acc).abs() < 1e-5,
                            "mismatch at b={bi} o={o} ({i},{j}): {got} vs {acc}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn col2im_is_the_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dims = (2, 2, 5, 5);
        let (k, s, p) = (3, 2, 1);
        let x = Array4::from_shape_fn(dims, |_| rng.gen_range(-1.0f32..1.0));
        let cols = im2col(&x.view(), k, s, p);
        let y = Array2::from_shape_fn(cols.dim(), |_| rng.gen_range(-1.0f32..1.0));
        let lhs: f64 = cols
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        let back = col2im(&y, dims, k, s, p).unwrap();
        let rhs: f64 = x
            .iter()
            .zip(back.iter())
            .map(|(a, b)| (*a as f64) * (*b as f64))
            .sum();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }
}
