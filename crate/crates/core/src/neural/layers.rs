use num_complex::Complex64;

use super::{Activation, NeuralError, Tensor4};
use crate::field::{fft2, ifft2_real};

fn wrap(i: isize, n: usize) -> usize {
    i.rem_euclid(n as isize) as usize
}

/// Geometry of one periodic, "same"-padded convolution tap.
#[derive(Clone, Copy)]
struct Tap {
    dy: usize,
    dx: usize,
    pad: usize,
    stride: usize,
    /// Fine (input) plane size.
    h: usize,
    w: usize,
    /// Coarse (output) plane size.
    ho: usize,
    wo: usize,
}

impl Tap {
    fn src_row(&self, y: usize) -> usize {
        wrap((self.stride * y + self.dy) as isize - self.pad as isize, self.h)
    }

    fn src_col(&self, x: usize) -> usize {
        wrap((self.stride * x + self.dx) as isize - self.pad as isize, self.w)
    }
}

/// `out[y, x] += wv · inp[s·y + dy − p, s·x + dx − p]`.
fn tap_forward(out: &mut [f64], inp: &[f64], wv: f64, t: Tap) {
    if t.stride == 1 {
        let w = t.w;
        let sx = wrap(t.dx as isize - t.pad as isize, w);
        for y in 0..t.ho {
            let src = &inp[t.src_row(y) * w..][..w];
            let dst = &mut out[y * w..][..w];
            for (o, i) in dst[..w - sx].iter_mut().zip(&src[sx..]) {
                *o += wv * i;
            }
            for (o, i) in dst[w - sx..].iter_mut().zip(&src[..sx]) {
                *o += wv * i;
            }
        }
    } else {
        for y in 0..t.ho {
            let r = t.src_row(y) * t.w;
            for x in 0..t.wo {
                out[y * t.wo + x] += wv * inp[r + t.src_col(x)];
            }
        }
    }
}

/// Adjoint of [`tap_forward`] with respect to `inp`.
fn tap_adjoint(gin: &mut [f64], g: &[f64], wv: f64, t: Tap) {
    if t.stride == 1 {
        let w = t.w;
        let sx = wrap(t.dx as isize - t.pad as isize, w);
        for y in 0..t.ho {
            let r = t.src_row(y);
            let src = &g[y * w..][..w];
            let dst = &mut gin[r * w..][..w];
            for (o, i) in dst[sx..].iter_mut().zip(&src[..w - sx]) {
                *o += wv * i;
            }
            for (o, i) in dst[..sx].iter_mut().zip(&src[w - sx..]) {
                *o += wv * i;
            }
        }
    } else {
        for y in 0..t.ho {
            let r = t.src_row(y) * t.w;
            for x in 0..t.wo {
                gin[r + t.src_col(x)] += wv * g[y * t.wo + x];
            }
        }
    }
}

/// `Σ g[y, x] · inp[s·y + dy − p, s·x + dx − p]`.
fn tap_dot(inp: &[f64], g: &[f64], t: Tap) -> f64 {
    let mut acc = 0.0;
    if t.stride == 1 {
        let w = t.w;
        let sx = wrap(t.dx as isize - t.pad as isize, w);
        for y in 0..t.ho {
            let src = &inp[t.src_row(y) * w..][..w];
            let gg = &g[y * w..][..w];
            acc += gg[..w - sx].iter().zip(&src[sx..]).map(|(a, b)| a * b).sum::<f64>();
            acc += gg[w - sx..].iter().zip(&src[..sx]).map(|(a, b)| a * b).sum::<f64>();
        }
    } else {
        for y in 0..t.ho {
            let r = t.src_row(y) * t.w;
            for x in 0..t.wo {
                acc += g[y * t.wo + x] * inp[r + t.src_col(x)];
            }
        }
    }
    acc
}

fn check_kernel(wdims: [usize; 4], stride: usize) -> Result<(), NeuralError> {
    let k = wdims[2];
    if k % 2 == 0 || wdims[3] != k {
        return Err(NeuralError::Shape(format!("kernel {}x{} must be square and odd", wdims[2], wdims[3])));
    }
    if stride == 0 {
        return Err(NeuralError::Shape("stride must be at least 1".into()));
    }
    Ok(())
}

/// Gradients of a convolution-type layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Circular convolution (cross-correlation) with "same" padding `k/2`.
/// `weight` has dims `[out, in, k, k]`; output planes are `input/stride`.
pub fn conv2d_periodic(
    x: &Tensor4,
    weight: &[f64],
    wdims: [usize; 4],
    bias: Option<&[f64]>,
    stride: usize,
) -> Result<Tensor4, NeuralError> {
    check_kernel(wdims, stride)?;
    let [b, ci, h, w] = x.dims();
    let [co, wi, k, _] = wdims;
    if wi != ci || weight.len() != co * ci * k * k {
        return Err(NeuralError::Shape(format!("weight {wdims:?} vs input channels {ci}")));
    }
    if h % stride != 0 || w % stride != 0 {
        return Err(NeuralError::Shape(format!("stride {stride} does not divide {h}x{w}")));
    }
    if let Some(bv) = bias {
        if bv.len() != co {
            return Err(NeuralError::Shape(format!("bias length {} vs {co} outputs", bv.len())));
        }
    }
    let (ho, wo) = (h / stride, w / stride);
    let mut out = Tensor4::zeros([b, co, ho, wo]);
    for s in 0..b {
        for o in 0..co {
            let plane = out.plane_mut(s, o);
            if let Some(bv) = bias {
                plane.iter_mut().for_each(|v| *v = bv[o]);
            }
            for i in 0..ci {
                let inp = x.plane(s, i);
                for dy in 0..k {
                    for dx in 0..k {
                        let wv = weight[((o * ci + i) * k + dy) * k + dx];
                        if wv != 0.0 {
                            tap_forward(plane, inp, wv, Tap { dy, dx, pad: k / 2, stride, h, w, ho, wo });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reverse rule of [`conv2d_periodic`] for the output cotangent `g`.
pub fn conv2d_periodic_backward(
    x: &Tensor4,
    weight: &[f64],
    wdims: [usize; 4],
    stride: usize,
    g: &Tensor4,
) -> Result<ConvGrads, NeuralError> {
    check_kernel(wdims, stride)?;
    let [b, ci, h, w] = x.dims();
    let [co, _, k, _] = wdims;
    let (ho, wo) = (h / stride, w / stride);
    if g.dims() != [b, co, ho, wo] {
        return Err(NeuralError::Shape(format!("cotangent {:?} vs output {:?}", g.dims(), [b, co, ho, wo])));
    }
    let mut gin = Tensor4::zeros(x.dims());
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; co];
    for s in 0..b {
        for o in 0..co {
            let gp = g.plane(s, o);
            gb[o] += gp.iter().sum::<f64>();
            for i in 0..ci {
                let inp = x.plane(s, i);
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = ((o * ci + i) * k + dy) * k + dx;
                        let t = Tap { dy, dx, pad: k / 2, stride, h, w, ho, wo };
                        gw[idx] += tap_dot(inp, gp, t);
                        let wv = weight[idx];
                        if wv != 0.0 {
                            tap_adjoint(gin.plane_mut(s, i), gp, wv, t);
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: gin, weight: gw, bias: gb })
}

/// Transposed periodic convolution, the input-adjoint of a strided
/// [`conv2d_periodic`]. `weight` has dims `[in, out, k, k]`; output planes are
/// `input·stride`.
pub fn conv_transpose2d_periodic(
    x: &Tensor4,
    weight: &[f64],
    wdims: [usize; 4],
    bias: Option<&[f64]>,
    stride: usize,
) -> Result<Tensor4, NeuralError> {
    check_kernel(wdims, stride)?;
    let [b, ci, hc, wc] = x.dims();
    let [wi, co, k, _] = wdims;
    if wi != ci || weight.len() != ci * co * k * k {
        return Err(NeuralError::Shape(format!("weight {wdims:?} vs input channels {ci}")));
    }
    let (h, w) = (hc * stride, wc * stride);
    let mut out = Tensor4::zeros([b, co, h, w]);
    for s in 0..b {
        for o in 0..co {
            if let Some(bv) = bias {
                out.plane_mut(s, o).iter_mut().for_each(|v| *v = bv[o]);
            }
            for i in 0..ci {
                let inp = x.plane(s, i);
                for dy in 0..k {
                    for dx in 0..k {
                        let wv = weight[((i * co + o) * k + dy) * k + dx];
                        if wv != 0.0 {
                            let t = Tap { dy, dx, pad: k / 2, stride, h, w, ho: hc, wo: wc };
                            tap_adjoint(out.plane_mut(s, o), inp, wv, t);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Reverse rule of [`conv_transpose2d_periodic`].
pub fn conv_transpose2d_periodic_backward(
    x: &Tensor4,
    weight: &[f64],
    wdims: [usize; 4],
    stride: usize,
    g: &Tensor4,
) -> Result<ConvGrads, NeuralError> {
    check_kernel(wdims, stride)?;
    let [b, ci, hc, wc] = x.dims();
    let [_, co, k, _] = wdims;
    let (h, w) = (hc * stride, wc * stride);
    if g.dims() != [b, co, h, w] {
        return Err(NeuralError::Shape(format!("cotangent {:?} vs output {:?}", g.dims(), [b, co, h, w])));
    }
    let mut gin = Tensor4::zeros(x.dims());
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; co];
    for s in 0..b {
        for o in 0..co {
            let gp = g.plane(s, o);
            gb[o] += gp.iter().sum::<f64>();
            for i in 0..ci {
                let inp = x.plane(s, i);
                for dy in 0..k {
                    for dx in 0..k {
                        let idx = ((i * co + o) * k + dy) * k + dx;
                        let t = Tap { dy, dx, pad: k / 2, stride, h, w, ho: hc, wo: wc };
                        gw[idx] += tap_dot(gp, inp, t);
                        let wv = weight[idx];
                        if wv != 0.0 {
                            tap_forward(gin.plane_mut(s, i), gp, wv, t);
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: gin, weight: gw, bias: gb })
}

/// Gradients of a spectral convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrads {
    pub input: Tensor4,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// Retained frequencies: rows `[0, m) ∪ [n−m, n)` (corner 0 and 1) and
/// columns `[0, m)`. Yields `(corner, ky index, kx, flat index, weight c)`
/// where `c` doubles the columns whose conjugate partners are implied.
fn modes_iter(n: usize, m: usize) -> impl Iterator<Item = (usize, usize, usize, usize, f64)> {
    (0..2).flat_map(move |corner| {
        (0..m).flat_map(move |ky| {
            let row = if corner == 0 { ky } else { n - m + ky };
            (0..m).map(move |kx| (corner, ky, kx, row * n + kx, if kx == 0 { 1.0 } else { 2.0 }))
        })
    })
}

fn check_spectral(x: &Tensor4, len: usize, ci: usize, co: usize, modes: usize) -> Result<(), NeuralError> {
    let [_, c, h, w] = x.dims();
    if h != w {
        return Err(NeuralError::Shape(format!("spectral layer needs square planes, got {h}x{w}")));
    }
    if modes == 0 || 2 * modes > h {
        return Err(NeuralError::Shape(format!("modes = {modes} must be in [1, n/2] for n = {h}")));
    }
    if c != ci || len != ci * co * 2 * modes * modes {
        return Err(NeuralError::Shape(format!("spectral weights do not match {ci}->{co} with {modes} modes")));
    }
    Ok(())
}

/// Per-mode complex channel mixing on the lowest `modes` frequencies.
/// Weights `re`, `im` have dims `[in, out, 2, modes, modes]`.
pub fn spectral_conv(
    x: &Tensor4,
    re: &[f64],
    im: &[f64],
    in_ch: usize,
    out_ch: usize,
    modes: usize,
) -> Result<Tensor4, NeuralError> {
    check_spectral(x, re.len(), in_ch, out_ch, modes)?;
    let [b, _, n, _] = x.dims();
    let widx = |i: usize, o: usize, corner: usize, ky: usize, kx: usize| {
        (((i * out_ch + o) * 2 + corner) * modes + ky) * modes + kx
    };
    let mut out = Tensor4::zeros([b, out_ch, n, n]);
    for s in 0..b {
        let hats: Vec<Vec<Complex64>> = (0..in_ch).map(|i| fft2(x.plane(s, i), n)).collect();
        for o in 0..out_ch {
            let mut z = vec![Complex64::new(0.0, 0.0); n * n];
            for (corner, ky, kx, idx, c) in modes_iter(n, modes) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, hat) in hats.iter().enumerate() {
                    let wi = widx(i, o, corner, ky, kx);
                    acc += Complex64::new(re[wi], im[wi]) * hat[idx];
                }
                z[idx] = acc * c;
            }
            out.plane_mut(s, o).copy_from_slice(&ifft2_real(z, n));
        }
    }
    Ok(out)
}

/// Reverse rule of [`spectral_conv`].
pub fn spectral_conv_backward(
    x: &Tensor4,
    re: &[f64],
    im: &[f64],
    in_ch: usize,
    out_ch: usize,
    modes: usize,
    g: &Tensor4,
) -> Result<SpectralGrads, NeuralError> {
    check_spectral(x, re.len(), in_ch, out_ch, modes)?;
    let [b, _, n, _] = x.dims();
    if g.dims() != [b, out_ch, n, n] {
        return Err(NeuralError::Shape(format!("cotangent {:?} does not match output", g.dims())));
    }
    let widx = |i: usize, o: usize, corner: usize, ky: usize, kx: usize| {
        (((i * out_ch + o) * 2 + corner) * modes + ky) * modes + kx
    };
    let inv = 1.0 / (n * n) as f64;
    let mut gin = Tensor4::zeros(x.dims());
    let mut gre = vec![0.0; re.len()];
    let mut gim = vec![0.0; im.len()];
    for s in 0..b {
        let xh: Vec<Vec<Complex64>> = (0..in_ch).map(|i| fft2(x.plane(s, i), n)).collect();
        let gh: Vec<Vec<Complex64>> = (0..out_ch).map(|o| fft2(g.plane(s, o), n)).collect();
        for i in 0..in_ch {
            let mut z = vec![Complex64::new(0.0, 0.0); n * n];
            for (corner, ky, kx, idx, c) in modes_iter(n, modes) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (o, ghat) in gh.iter().enumerate() {
                    let wi = widx(i, o, corner, ky, kx);
                    let prod = xh[i][idx] * ghat[idx].conj();
                    gre[wi] += c * inv * prod.re;
                    gim[wi] -= c * inv * prod.im;
                    acc += Complex64::new(re[wi], -im[wi]) * ghat[idx];
                }
                z[idx] = acc * c;
            }
            gin.plane_mut(s, i).copy_from_slice(&ifft2_real(z, n));
        }
    }
    Ok(SpectralGrads { input: gin, re: gre, im: gim })
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn activation_forward(x: &Tensor4, act: Activation) -> Tensor4 {
    let f = |v: f64| match act {
        Activation::Identity => v,
        Activation::Tanh => v.tanh(),
        Activation::Relu => v.max(0.0),
        Activation::Gelu => v * std_normal_cdf(v),
    };
    let data = x.data().iter().map(|&v| f(v)).collect();
    Tensor4::from_vec(x.dims(), data).expect("same dims")
}

/// Reverse rule given the layer input `x` and output cotangent `g`.
pub fn activation_backward(x: &Tensor4, act: Activation, g: &Tensor4) -> Tensor4 {
    let d = |v: f64| match act {
        Activation::Identity => 1.0,
        Activation::Tanh => {
            let t = v.tanh();
            1.0 - t * t
        }
        Activation::Relu => {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Gelu => std_normal_cdf(v) + v * std_normal_pdf(v),
    };
    let data = x.data().iter().zip(g.data()).map(|(&v, &gv)| d(v) * gv).collect();
    Tensor4::from_vec(x.dims(), data).expect("same dims")
}
