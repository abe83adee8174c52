use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{Field2D, FieldError, Grid2D};

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(n: usize) -> Arc<Plans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Plans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plans { forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) })
        })
        .clone()
}

fn transpose(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

fn fft2_inplace(buf: &mut [Complex64], n: usize, inverse: bool) {
    let p = plans(n);
    let fft = if inverse { &p.inverse } else { &p.forward };
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, n);
}

/// Unnormalized forward 2-D DFT of a row-major `n × n` real array.
pub fn fft2(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2_inplace(&mut buf, n, false);
    buf
}

/// Inverse 2-D DFT (normalized by `1/n²`), keeping the real part.
pub fn ifft2_real(mut buf: Vec<Complex64>, n: usize) -> Vec<f64> {
    fft2_inplace(&mut buf, n, true);
    let scale = 1.0 / (n * n) as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Signed integer frequency of DFT index `k` on `n` points, with the Nyquist
/// index (even `n`, `k = n/2`) mapped to zero.
pub fn wavenumber(k: usize, n: usize) -> f64 {
    if 2 * k == n {
        0.0
    } else if 2 * k < n {
        k as f64
    } else {
        k as f64 - n as f64
    }
}

fn apply_diagonal(f: &Field2D, coeff: impl Fn(usize, usize) -> Complex64) -> Field2D {
    let n = f.n();
    let mut hat = fft2(f.values(), n);
    for r in 0..n {
        for c in 0..n {
            hat[r * n + c] *= coeff(r, c);
        }
    }
    Field2D::from_raw(*f.grid(), ifft2_real(hat, n))
}

/// Returns `(∂x f, ∂y f)` by Fourier differentiation.
pub fn spectral_gradient(f: &Field2D) -> (Field2D, Field2D) {
    let g = f.grid();
    let n = g.n();
    let w = 2.0 * PI / g.length();
    let hat = fft2(f.values(), n);
    let mut hx = hat.clone();
    let mut hy = hat;
    for r in 0..n {
        let ky = w * wavenumber(r, n);
        for c in 0..n {
            let kx = w * wavenumber(c, n);
            hx[r * n + c] *= Complex64::new(0.0, kx);
            hy[r * n + c] *= Complex64::new(0.0, ky);
        }
    }
    (Field2D::from_raw(*g, ifft2_real(hx, n)), Field2D::from_raw(*g, ifft2_real(hy, n)))
}

/// Spectral divergence `∂x fx + ∂y fy`, the adjoint partner of [`spectral_gradient`].
pub fn spectral_divergence(fx: &Field2D, fy: &Field2D) -> Field2D {
    let g = fx.grid();
    let n = g.n();
    let w = 2.0 * PI / g.length();
    let ax = fft2(fx.values(), n);
    let ay = fft2(fy.values(), n);
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for r in 0..n {
        let ky = w * wavenumber(r, n);
        for c in 0..n {
            let kx = w * wavenumber(c, n);
            let i = r * n + c;
            out[i] = ax[i] * Complex64::new(0.0, kx) + ay[i] * Complex64::new(0.0, ky);
        }
    }
    Field2D::from_raw(*g, ifft2_real(out, n))
}

pub fn spectral_laplacian(f: &Field2D) -> Field2D {
    SpectralMultiplier::laplacian(*f.grid()).apply(f)
}

/// Rectangle-rule quadrature `h² Σ f`.
pub fn integrate(f: &Field2D) -> f64 {
    let h = f.grid().spacing();
    h * h * f.values().iter().sum::<f64>()
}

/// Applies `(I − dt(c1 Δ − c0))⁻¹`.
pub fn helmholtz_inverse_apply(f: &Field2D, c0: f64, c1: f64, dt: f64) -> Result<Field2D, FieldError> {
    Ok(SpectralMultiplier::helmholtz_inverse(*f.grid(), c0, c1, dt)?.apply(f))
}

/// Diagonal Fourier-space operator with one real coefficient per frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMultiplier {
    grid: Grid2D,
    coefficients: Vec<f64>,
}

impl SpectralMultiplier {
    pub fn from_fn(grid: Grid2D, f: impl Fn(f64, f64) -> f64) -> Self {
        let n = grid.n();
        let mut coefficients = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                coefficients.push(f(wavenumber(c, n), wavenumber(r, n)));
            }
        }
        Self { grid, coefficients }
    }

    /// `−4π²|ξ|²/length²`.
    pub fn laplacian(grid: Grid2D) -> Self {
        let w = 2.0 * PI / grid.length();
        Self::from_fn(grid, |kx, ky| -w * w * (kx * kx + ky * ky))
    }

    /// `1/(1 + dt(c1·4π²|ξ|²/length² + c0))`.
    pub fn helmholtz_inverse(grid: Grid2D, c0: f64, c1: f64, dt: f64) -> Result<Self, FieldError> {
        if !(dt > 0.0) {
            return Err(FieldError::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if !(c1 > 0.0) {
            return Err(FieldError::InvalidParameter(format!("c1 = {c1} must be positive")));
        }
        if !(c0 >= 0.0) {
            return Err(FieldError::InvalidParameter(format!("c0 = {c0} must be non-negative")));
        }
        let w = 2.0 * PI / grid.length();
        let n = grid.n();
        let full = |k: usize| if 2 * k == n { (n / 2) as f64 } else { wavenumber(k, n) };
        let mut coefficients = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (kx, ky) = (full(c), full(r));
                coefficients.push(1.0 / (1.0 + dt * (c1 * w * w * (kx * kx + ky * ky) + c0)));
            }
        }
        Ok(Self { grid, coefficients })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn apply(&self, f: &Field2D) -> Field2D {
        assert_eq!(*f.grid(), self.grid, "multiplier applied on a different grid");
        let n = self.grid.n();
        apply_diagonal(f, |r, c| Complex64::new(self.coefficients[r * n + c], 0.0))
    }
}
