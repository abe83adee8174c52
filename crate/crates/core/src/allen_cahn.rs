//! Allen-Cahn energy, the convex-concave splitting step, the diffuse
//! perimeter and initial-condition generators.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use thiserror::Error;

use crate::field::{helmholtz_inverse_apply, integrate, spectral_gradient, spectral_laplacian};
use crate::{Field2D, FieldError, Grid2D};

#[derive(Debug, Error)]
pub enum AcError {
    #[error("invalid Allen-Cahn parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Slack on `‖u‖∞ ≤ 1` before the split step logs a warning.
pub const MAX_PRINCIPLE_SLACK: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcParams {
    pub eps: f64,
    pub beta: f64,
    pub dt: f64,
}

impl AcParams {
    /// β = 2.001, dt = 2.44e-4, ε = 1/64.
    pub fn reference() -> Self {
        Self { eps: 1.0 / 64.0, beta: 2.001, dt: 2.44e-4 }
    }

    pub fn validate(&self, grid: &Grid2D) -> Result<(), AcError> {
        if !(self.beta > 2.0) {
            return Err(AcError::InvalidParams(format!("beta = {} must exceed 2", self.beta)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(AcError::InvalidParams(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.eps >= 2.0 * grid.spacing() * (1.0 - 1e-12)) {
            return Err(AcError::InvalidParams(format!(
                "eps = {} under-resolves the interface on spacing {}",
                self.eps,
                grid.spacing()
            )));
        }
        Ok(())
    }
}

/// `W(s) = (s²−1)²/4` and `W'(s) = s³ − s`.
pub fn double_well(s: f64) -> (f64, f64) {
    let q = s * s - 1.0;
    (0.25 * q * q, s * q)
}

fn grad_sq(u: &Field2D) -> Field2D {
    let (gx, gy) = spectral_gradient(u);
    gx.zip_map(&gy, |a, b| a * a + b * b)
}

/// `∫ |∇u|²/2 + W(u)/ε²`.
pub fn ac_energy(u: &Field2D, eps: f64) -> f64 {
    let g2 = grad_sq(u);
    let e2 = eps * eps;
    let density = g2.zip_map(u, |g, s| 0.5 * g + double_well(s).0 / e2);
    integrate(&density)
}

/// Convex part `E1(u) = ∫ |∇u|²/2 + βu²/2ε²`.
pub fn ac_e1(u: &Field2D, p: &AcParams) -> f64 {
    let g2 = grad_sq(u);
    let c = p.beta / (2.0 * p.eps * p.eps);
    integrate(&g2.zip_map(u, |g, s| 0.5 * g + c * s * s))
}

/// Concave part `E2(u) = ∫ W(u)/ε² − βu²/2ε²`.
pub fn ac_e2(u: &Field2D, p: &AcParams) -> f64 {
    let e2 = p.eps * p.eps;
    integrate(&u.map(|s| (double_well(s).0 - 0.5 * p.beta * s * s) / e2))
}

/// `∇E1(u) = −Δu + (β/ε²)u`.
pub fn ac_grad_e1(u: &Field2D, p: &AcParams) -> Field2D {
    let c = p.beta / (p.eps * p.eps);
    spectral_laplacian(u).zip_map(u, |l, s| -l + c * s)
}

/// `∇E2(u) = (W'(u) − βu)/ε²`.
pub fn ac_grad_e2(u: &Field2D, p: &AcParams) -> Field2D {
    let e2 = p.eps * p.eps;
    u.map(|s| (double_well(s).1 - p.beta * s) / e2)
}

/// `ρ_β(s) = s − (dt/ε²)(W'(s) − βs)`.
pub fn reaction(s: f64, p: &AcParams) -> f64 {
    s - p.dt / (p.eps * p.eps) * (double_well(s).1 - p.beta * s)
}

/// One Eyre splitting step: `(I − dt(Δ − β/ε²))⁻¹ ρ_β(u)`.
pub fn ac_split_step(u: &Field2D, p: &AcParams) -> Result<Field2D, AcError> {
    let m = u.max_abs();
    if m > 1.0 + MAX_PRINCIPLE_SLACK {
        log::warn!("split step input outside the maximum-principle range: |u|max = {m}");
    }
    let rho = u.map(|s| reaction(s, p));
    Ok(helmholtz_inverse_apply(&rho, p.beta / (p.eps * p.eps), 1.0, p.dt)?)
}

/// The functional minimized by one split step:
/// `(1/2dt)‖v − u‖² + E1(v) + E2(u) + ⟨∇E2(u), v − u⟩`.
pub fn split_functional(v: &Field2D, u: &Field2D, p: &AcParams) -> f64 {
    let d = v.sub(u);
    d.norm2() / (2.0 * p.dt) + ac_e1(v, p) + ac_e2(u, p) + ac_grad_e2(u, p).dot(&d)
}

/// Modica-Mortola perimeter `∫ ε|∇u|²/2 + W(u)/ε`.
pub fn perimeter_epsilon(u: &Field2D, eps: f64) -> f64 {
    let g2 = grad_sq(u);
    integrate(&g2.zip_map(u, |g, s| 0.5 * eps * g + double_well(s).0 / eps))
}

/// Interface length carried by one unit of [`perimeter_epsilon`] for a tanh profile.
pub const PROFILE_CONSTANT: f64 = 2.0 * SQRT_2 / 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedDiskSpec {
    pub r: f64,
    pub r_p: f64,
    /// Cosine coefficients `a_1..a_M`.
    pub a: Vec<f64>,
    /// Sine coefficients `b_1..b_M`.
    pub b: Vec<f64>,
}

impl PerturbedDiskSpec {
    pub fn disk(r: f64) -> Self {
        Self { r, r_p: 0.0, a: Vec::new(), b: Vec::new() }
    }

    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), AcError> {
        if self.a.len() != self.b.len() {
            return Err(AcError::InvalidInitialCondition("a and b lengths differ".into()));
        }
        if self.a.iter().chain(&self.b).any(|c| !(c.abs() <= 1.0)) {
            return Err(AcError::InvalidInitialCondition("coefficients must lie in [-1, 1]".into()));
        }
        let s: f64 = self.a.iter().chain(&self.b).map(|c| c * c).sum();
        if s > 1.0 + 1e-12 {
            return Err(AcError::InvalidInitialCondition(format!("sum of squared coefficients {s} exceeds 1")));
        }
        if !(self.r > 0.0) || !(self.r_p >= 0.0) {
            return Err(AcError::InvalidInitialCondition("radii must be positive".into()));
        }
        Ok(())
    }

    /// `r(θ) = r + r_p Σ (a_k cos kθ + b_k sin kθ)`.
    pub fn radius(&self, theta: f64) -> f64 {
        let pert: f64 = self
            .a
            .iter()
            .zip(&self.b)
            .enumerate()
            .map(|(k, (a, b))| {
                let kt = (k + 1) as f64 * theta;
                a * kt.cos() + b * kt.sin()
            })
            .sum();
        self.r + self.r_p * pert
    }
}

/// Sampling ranges for random perturbed disks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskRanges {
    pub modes: usize,
    pub r: (f64, f64),
    /// Perturbation radius range as fractions of `r`.
    pub r_p_frac: (f64, f64),
}

impl DiskRanges {
    pub fn training() -> Self {
        Self { modes: 5, r: (0.12, 0.3), r_p_frac: (0.1, 0.5) }
    }

    pub fn out_of_distribution() -> Self {
        Self { modes: 8, r: (0.06, 0.375), r_p_frac: (0.09, 0.55) }
    }
}

/// Draws a spec uniformly: coefficients by rejection from the unit ball.
pub fn sample_disk_spec<R: Rng + ?Sized>(rng: &mut R, ranges: &DiskRanges) -> PerturbedDiskSpec {
    let r = rng.random_range(ranges.r.0..=ranges.r.1);
    let frac = rng.random_range(ranges.r_p_frac.0..=ranges.r_p_frac.1);
    let m = ranges.modes;
    let mut coeffs = vec![0.0; 2 * m];
    loop {
        for c in coeffs.iter_mut() {
            *c = rng.random_range(-1.0..=1.0);
        }
        if coeffs.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
            break;
        }
    }
    let b = coeffs.split_off(m);
    PerturbedDiskSpec { r, r_p: frac * r, a: coeffs, b }
}

/// Minimum-image displacement on a periodic interval of side `length`.
pub fn periodic_delta(d: f64, length: f64) -> f64 {
    d - length * (d / length).round()
}

fn tanh_profile(signed: f64, eps: f64) -> f64 {
    (signed / (SQRT_2 * eps)).tanh()
}

/// `tanh((r(θ) − |x − c|)/(√2ε))` about the domain centre.
pub fn ic_perturbed_disk(grid: Grid2D, spec: &PerturbedDiskSpec, eps: f64) -> Result<Field2D, AcError> {
    spec.validate()?;
    let l = grid.length();
    let c = 0.5 * l;
    Ok(Field2D::from_fn(grid, |x, y| {
        let dx = periodic_delta(x - c, l);
        let dy = periodic_delta(y - c, l);
        let theta = dy.atan2(dx);
        tanh_profile(spec.radius(theta) - dx.hypot(dy), eps)
    }))
}

/// Pointwise maximum of tanh disk profiles, with periodic distances.
pub fn ic_multi_disk(grid: Grid2D, centers: &[(f64, f64)], radii: &[f64], eps: f64) -> Result<Field2D, AcError> {
    if centers.is_empty() {
        return Err(AcError::InvalidInitialCondition("no disks given".into()));
    }
    if centers.len() != radii.len() {
        return Err(AcError::InvalidInitialCondition("centers and radii lengths differ".into()));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(AcError::InvalidInitialCondition("radii must be positive".into()));
    }
    let l = grid.length();
    Ok(Field2D::from_fn(grid, |x, y| {
        centers
            .iter()
            .zip(radii)
            .map(|(&(cx, cy), &r)| {
                let d = periodic_delta(x - cx, l).hypot(periodic_delta(y - cy, l));
                tanh_profile(r - d, eps)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// I.i.d. uniform values in `[−1, 1]`.
pub fn ic_random_field<R: Rng + ?Sized>(rng: &mut R, grid: Grid2D) -> Field2D {
    let values = (0..grid.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Field2D::from_raw(grid, values)
}

/// Sharp-interface radius predicted by mean-curvature flow, `sqrt(r0² − 2t)`.
pub fn mean_curvature_radius(r0: f64, t: f64) -> f64 {
    (r0 * r0 - 2.0 * t).max(0.0).sqrt()
}

/// Circumference of the circle of radius `r`, times [`PROFILE_CONSTANT`].
pub fn circle_perimeter_epsilon(r: f64) -> f64 {
    PROFILE_CONSTANT * 2.0 * PI * r
}
