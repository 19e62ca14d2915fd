//! Forward kernels shared by the autodiff tape and plain inference.
//!
//! Images are NHWC. Convolution kernels are `[k, k, c_in, c_out]`; a
//! transposed convolution reuses the kernel of the convolution it is the
//! adjoint of, so a deconv mapping `a` channels to `b` channels takes a
//! `[k, k, b, a]` kernel.

use super::{Result, Tensor, TensorError};

/// `c = op(a) * op(b) + beta * c` on row-major buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements checked by the debug assertions.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a strided, zero-padded square-kernel convolution.
///
/// `in_*` always refers to the image the kernel slides over and `out_*` to
/// the feature map it produces, whichever direction the data flows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn conv_out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> usize {
        (extent + 2 * padding - kernel) / stride + 1
    }

    pub fn deconv_out_extent(extent: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
        ((extent - 1) * stride + kernel).checked_sub(2 * padding)
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    fn rows(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }

    /// Geometry for `conv2d(input, kernel)`.
    pub fn for_conv(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (batch, h, w, c) = split_image_shape(input)?;
        let (k, kc_in, kc_out) = split_kernel_shape(kernel)?;
        if kc_in != c {
            return Err(TensorError::Dimension(format!(
                "input has {c} channels but kernel expects {kc_in}"
            )));
        }
        check_stride(stride)?;
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(TensorError::Dimension(format!(
                "kernel {k} larger than padded input {h}x{w} (padding {padding})"
            )));
        }
        Ok(Self {
            batch,
            in_h: h,
            in_w: w,
            in_c: c,
            out_h: Self::conv_out_extent(h, k, stride, padding),
            out_w: Self::conv_out_extent(w, k, stride, padding),
            out_c: kc_out,
            kernel: k,
            stride,
            padding,
        })
    }

    /// Geometry for `deconv2d(input, kernel)`: the deconv output plays the
    /// role of the convolution's image.
    pub fn for_deconv(input: &[usize], kernel: &[usize], stride: usize, padding: usize) -> Result<Self> {
        let (batch, h, w, c) = split_image_shape(input)?;
        let (k, kc_img, kc_feat) = split_kernel_shape(kernel)?;
        if kc_feat != c {
            return Err(TensorError::Dimension(format!(
                "input has {c} channels but transposed kernel expects {kc_feat}"
            )));
        }
        check_stride(stride)?;
        let too_small = || {
            TensorError::Dimension(format!(
                "transposed convolution of {h}x{w} with kernel {k}, padding {padding} is empty"
            ))
        };
        let out_h = Self::deconv_out_extent(h, k, stride, padding).filter(|&v| v > 0).ok_or_else(too_small)?;
        let out_w = Self::deconv_out_extent(w, k, stride, padding).filter(|&v| v > 0).ok_or_else(too_small)?;
        if k > out_h + 2 * padding {
            return Err(too_small());
        }
        Ok(Self {
            batch,
            in_h: out_h,
            in_w: out_w,
            in_c: kc_img,
            out_h: h,
            out_w: w,
            out_c: c,
            kernel: k,
            stride,
            padding,
        })
    }

    pub fn image_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.in_h, self.in_w, self.in_c]
        } else {
            vec![self.in_h, self.in_w, self.in_c]
        }
    }

    pub fn feature_shape(&self, batched: bool) -> Vec<usize> {
        if batched {
            vec![self.batch, self.out_h, self.out_w, self.out_c]
        } else {
            vec![self.out_h, self.out_w, self.out_c]
        }
    }
}

fn check_stride(stride: usize) -> Result<()> {
    if stride == 0 {
        return Err(TensorError::Dimension("stride must be at least 1".into()));
    }
    Ok(())
}

fn split_image_shape(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c)),
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => Err(TensorError::Dimension(format!(
            "expected an HWC or NHWC image, got shape {shape:?}"
        ))),
    }
}

fn split_kernel_shape(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [k, k2, a, b] if k == k2 => Ok((k, a, b)),
        _ => Err(TensorError::Dimension(format!(
            "expected a square [k, k, c_in, c_out] kernel, got {shape:?}"
        ))),
    }
}

/// Unfolds image patches into rows: `[batch*out_h*out_w, k*k*in_c]`.
pub(crate) fn im2col(image: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let patch = g.patch_len();
    let mut cols = vec![0.0; g.rows() * patch];
    let c = g.in_c;
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (n * g.out_h + oy) * g.out_w + ox;
                let dst = &mut cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kernel {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kernel {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let src = ((n * g.in_h + iy as usize) * g.in_w + ix as usize) * c;
                        let off = (ky * g.kernel + kx) * c;
                        dst[off..off + c].copy_from_slice(&image[src..src + c]);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters and sums patch rows back into an image.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let patch = g.patch_len();
    let c = g.in_c;
    let mut image = vec![0.0; g.batch * g.in_h * g.in_w * c];
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = (n * g.out_h + oy) * g.out_w + ox;
                let src = &cols[row * patch..(row + 1) * patch];
                for ky in 0..g.kernel {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    for kx in 0..g.kernel {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let dst = ((n * g.in_h + iy as usize) * g.in_w + ix as usize) * c;
                        let off = (ky * g.kernel + kx) * c;
                        for (d, s) in image[dst..dst + c].iter_mut().zip(&src[off..off + c]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    image
}

/// Cross-correlation with zero padding. Returns the output and the unfolded
/// patches (kept by the tape for the kernel gradient).
pub(crate) fn conv2d_with_cols(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Vec<f64>, ConvGeometry)> {
    let g = ConvGeometry::for_conv(input.shape(), kernel.shape(), stride, padding)?;
    let cols = im2col(input.data(), &g);
    let mut out = vec![0.0; g.rows() * g.out_c];
    gemm(g.rows(), g.patch_len(), g.out_c, &cols, false, kernel.data(), false, &mut out, 0.0);
    let shape = g.feature_shape(input.rank() == 4);
    Ok((Tensor::from_parts(shape, out), cols, g))
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    conv2d_with_cols(input, kernel, stride, padding).map(|(t, _, _)| t)
}

pub(crate) fn deconv2d_with_geometry(
    input: &Tensor,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, ConvGeometry)> {
    let g = ConvGeometry::for_deconv(input.shape(), kernel.shape(), stride, padding)?;
    let mut cols = vec![0.0; g.rows() * g.patch_len()];
    gemm(g.rows(), g.out_c, g.patch_len(), input.data(), false, kernel.data(), true, &mut cols, 0.0);
    let image = col2im(&cols, &g);
    let shape = g.image_shape(input.rank() == 4);
    Ok((Tensor::from_parts(shape, image), g))
}

/// Transposed convolution: the gradient of [`conv2d`] with respect to its
/// input, for the same kernel, stride and padding.
pub fn deconv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    deconv2d_with_geometry(input, kernel, stride, padding).map(|(t, _)| t)
}

/// Affine map `input · weights + bias` for `[n]` or `[batch, n]` inputs.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (rows, n) = dense_rows(input)?;
    let m = match *weights.shape() {
        [wn, m] if wn == n => m,
        _ => {
            return Err(TensorError::Dimension(format!(
                "dense input width {n} incompatible with weights {:?}",
                weights.shape()
            )))
        }
    };
    bias.expect_shape(&[m])?;
    let mut out = Vec::with_capacity(rows * m);
    for _ in 0..rows {
        out.extend_from_slice(bias.data());
    }
    gemm(rows, n, m, input.data(), false, weights.data(), false, &mut out, 1.0);
    let shape = if input.rank() == 1 { vec![m] } else { vec![rows, m] };
    Ok(Tensor::from_parts(shape, out))
}

pub(crate) fn dense_rows(input: &Tensor) -> Result<(usize, usize)> {
    match *input.shape() {
        [n] => Ok((1, n)),
        [rows, n] => Ok((rows, n)),
        _ => Err(TensorError::Dimension(format!(
            "dense expects [n] or [batch, n], got {:?}",
            input.shape()
        ))),
    }
}

pub fn relu(t: &Tensor) -> Tensor {
    map(t, |v| v.max(0.0))
}

pub fn sigmoid(t: &Tensor) -> Tensor {
    map(t, logistic)
}

pub(crate) fn logistic(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Mean of squared differences over every element.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    pred.expect_shape(target.shape())?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.numel() as f64)
}

pub(crate) fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct quadruple-loop cross-correlation.
    fn conv_naive(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Tensor {
        let [n, h, w, ci] = *x.shape() else { panic!() };
        let [ks, _, _, co] = *k.shape() else { panic!() };
        let ho = (h + 2 * pad - ks) / stride + 1;
        let wo = (w + 2 * pad - ks) / stride + 1;
        let mut out = Tensor::zeros(&[n, ho, wo, co]);
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    for o in 0..co {
                        let mut acc = 0.0;
                        for ky in 0..ks {
                            for kx in 0..ks {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                for c in 0..ci {
                                    acc += x.data()[((b * h + iy as usize) * w + ix as usize) * ci + c]
                                        * k.data()[((ky * ks + kx) * ci + c) * co + o];
                                }
                            }
                        }
                        out.data_mut()[((b * ho + oy) * wo + ox) * co + o] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn paper_encoder_halves_spatial_size() {
        let mut extent = 64;
        let mut sizes = Vec::new();
        for _ in 0..4 {
            extent = ConvGeometry::conv_out_extent(extent, 4, 2, 1);
            sizes.push(extent);
        }
        assert_eq!(sizes, [32, 16, 8, 4]);
        let x = Tensor::zeros(&[64, 64, 3]);
        let k = Tensor::zeros(&[4, 4, 3, 64]);
        assert_eq!(conv2d(&x, &k, 2, 1).unwrap().shape(), &[32, 32, 64]);
    }

    #[test]
    fn one_by_one_conv_is_product() {
        let x = Tensor::new(vec![1, 1, 1], vec![3.0]).unwrap();
        let k = Tensor::new(vec![1, 1, 1, 1], vec![-2.0]).unwrap();
        assert_eq!(conv2d(&x, &k, 1, 0).unwrap().data(), &[-6.0]);
        assert_eq!(deconv2d(&x, &k, 1, 0).unwrap().data(), &[-6.0]);
    }

    #[test]
    fn ones_conv_sums_window() {
        let x = Tensor::full(&[3, 3, 1], 1.0);
        let k = Tensor::full(&[2, 2, 1, 1], 1.0);
        let y = conv2d(&x, &k, 1, 0).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let x = Tensor::zeros(&[4, 4, 3]);
        let k = Tensor::zeros(&[2, 2, 2, 1]);
        assert!(matches!(conv2d(&x, &k, 1, 0), Err(TensorError::Dimension(_))));
        assert!(matches!(deconv2d(&x, &k, 1, 0), Err(TensorError::Dimension(_))));
    }

    #[test]
    fn oversized_kernel_rejected() {
        let x = Tensor::zeros(&[2, 2, 1]);
        let k = Tensor::zeros(&[5, 5, 1, 1]);
        assert!(conv2d(&x, &k, 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[2, 2, 1, 1]), 0, 0).is_err());
    }

    #[test]
    fn deconv_doubles_four_to_eight() {
        let x = Tensor::zeros(&[4, 4, 8]);
        let k = Tensor::zeros(&[4, 4, 3, 8]);
        assert_eq!(deconv2d(&x, &k, 2, 1).unwrap().shape(), &[8, 8, 3]);
    }

    #[test]
    fn im2col_conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(h, w, ci, co, k, s, p) in &[(5, 6, 2, 3, 3, 1, 1), (8, 8, 3, 4, 4, 2, 1), (7, 5, 1, 2, 2, 3, 0)] {
            let x = random(&[2, h, w, ci], &mut rng);
            let kern = random(&[k, k, ci, co], &mut rng);
            let fast = conv2d(&x, &kern, s, p).unwrap();
            let slow = conv_naive(&x, &kern, s, p);
            assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_deconv_adjoint() {
        // <conv(a, K), b> == <a, deconv(b, K)>, with the right-hand side
        // evaluated through the explicit loop oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(h, ci, co, k, s, p) in &[(8, 2, 3, 4, 2, 1), (6, 1, 2, 3, 1, 1), (9, 3, 2, 3, 2, 0)] {
            let a = random(&[1, h, h, ci], &mut rng);
            let kern = random(&[k, k, ci, co], &mut rng);
            let ca = conv_naive(&a, &kern, s, p);
            let b = random(ca.shape(), &mut rng);
            let lhs = ca.dot(&b).unwrap();
            let db = deconv2d(&b, &kern, s, p).unwrap();
            assert_eq!(db.shape(), a.shape());
            let rhs = a.dot(&db).unwrap();
            assert!((lhs - rhs).abs() <= 1e-10, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn dense_identity_and_bias() {
        let x = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(dense(&x, &eye, &Tensor::zeros(&[3])).unwrap(), x);
        let w = Tensor::new(vec![3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let y = dense(&x, &w, &Tensor::from_vec(vec![0.5])).unwrap();
        assert_eq!(y.data(), &[2.5]);
        assert!(dense(&x, &Tensor::zeros(&[2, 2]), &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn relu_and_mse_examples() {
        let r = relu(&Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        assert_eq!(r.data(), &[0.0, 0.0, 2.0]);
        let loss = mse(&Tensor::from_vec(vec![1.0, 1.0]), &Tensor::from_vec(vec![0.0, 0.0])).unwrap();
        assert_eq!(loss, 1.0);
        assert!(mse(&Tensor::from_vec(vec![1.0]), &Tensor::from_vec(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
        assert!((logistic(0.0) - 0.5).abs() < 1e-15);
    }
}
