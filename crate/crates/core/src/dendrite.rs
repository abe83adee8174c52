//! Anisotropic phase-field model of dendritic solidification: free energy,
//! split gradients, implicit heat step and the relaxed SAV reference solver.

use std::f64::consts::SQRT_2;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::allen_cahn::{double_well, periodic_delta};
use crate::field::{helmholtz_inverse_apply, integrate, spectral_divergence, spectral_gradient, spectral_laplacian};
use crate::{Field2D, FieldError, Grid2D};

#[derive(Debug, Error)]
pub enum DendriteError {
    #[error("unsupported symmetry order m = {0} (only m = 4)")]
    UnsupportedSymmetry(u32),
    #[error("invalid dendrite parameters: {0}")]
    InvalidParams(String),
    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),
    #[error("SAV energy denominator E + c0 = {0} is not positive")]
    NonPositiveEnergy(f64),
    #[error("non-finite state after step")]
    NonFinite,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Below this value of `|∇φ|²` the anisotropy falls back to `a = 1`.
pub const GRADIENT_REGULARIZATION: f64 = 1e-12;

/// Thin-interface constant linking `λ0` to `Dτ/ε`.
pub const THIN_INTERFACE_A2: f64 = 0.6267;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DendriteParams {
    pub sigma: f64,
    pub m: u32,
    pub eps: f64,
    pub tau: f64,
    pub lambda0: f64,
    pub d: f64,
    pub k: f64,
    pub kappa: f64,
    pub beta: f64,
    pub dt: f64,
    pub alpha_sav: f64,
    pub c0_sav: f64,
}

impl DendriteParams {
    /// Benchmark constants with `λ0 = Dτ/(0.6267ε)`.
    pub fn reference(sigma: f64) -> Self {
        let eps = 1.0 / 400.0;
        let tau = 1.6e5;
        let d = 6.25e-5;
        Self {
            sigma,
            m: 4,
            eps,
            tau,
            lambda0: d * tau / (THIN_INTERFACE_A2 * eps),
            d,
            k: 0.5,
            kappa: -0.3,
            beta: 14.4,
            dt: 0.04,
            alpha_sav: (1.0 + sigma) * (1.0 + sigma),
            c0_sav: 1.0,
        }
    }

    /// Upper bound of the second derivative of the explicit part, in units of 1/ε².
    pub fn concavity_bound(&self) -> f64 {
        let s = 1.0 / 3f64.sqrt();
        let max_h2 = 4.0 * (s - s * s * s);
        2.0 + self.lambda0 * self.eps * self.kappa.abs() * max_h2 - self.beta
    }

    pub fn validate(&self) -> Result<(), DendriteError> {
        let bad = |msg: String| Err(DendriteError::InvalidParams(msg));
        if self.m != 4 {
            return Err(DendriteError::UnsupportedSymmetry(self.m));
        }
        if !(0.0..1.0 / 15.0).contains(&self.sigma) {
            return bad(format!("sigma = {} outside [0, 1/15)", self.sigma));
        }
        for (name, v) in [("eps", self.eps), ("tau", self.tau), ("D", self.d), ("K", self.k), ("dt", self.dt)] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        let lambda = self.d * self.tau / (THIN_INTERFACE_A2 * self.eps);
        if ((self.lambda0 - lambda) / lambda).abs() > 1e-3 {
            return bad(format!("lambda0 = {} inconsistent with D tau/(0.6267 eps) = {lambda}", self.lambda0));
        }
        if !(-1.0..0.0).contains(&self.kappa) {
            return bad(format!("kappa = {} outside [-1, 0)", self.kappa));
        }
        if self.concavity_bound() >= 0.0 {
            return bad(format!("beta = {} too small: concavity bound {}", self.beta, self.concavity_bound()));
        }
        if !(self.alpha_sav > 0.0) || !(self.c0_sav >= 0.0) {
            return bad("SAV constants must satisfy alpha > 0, c0 >= 0".into());
        }
        Ok(())
    }
}

/// `h(s) = s⁵/5 − 2s³/3 + s` and `h'(s) = (s²−1)²`.
pub fn interp_h(s: f64) -> (f64, f64) {
    let s2 = s * s;
    let q = s2 - 1.0;
    (s * (s2 * s2 / 5.0 - 2.0 * s2 / 3.0 + 1.0), q * q)
}

/// Minimal scalar interface so the anisotropic flux can be evaluated on
/// plain numbers and on forward-mode duals.
pub(crate) trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn val(self) -> f64 {
        self
    }
}

/// Value and directional derivative.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dual(pub f64, pub f64);

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual(self.0 + o.0, self.1 + o.1)
    }
}
impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual(self.0 - o.0, self.1 - o.1)
    }
}
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual(self.0 * o.0, self.0 * o.1 + self.1 * o.0)
    }
}
impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual(self.0 / o.0, (self.1 * o.0 - self.0 * o.1) / (o.0 * o.0))
    }
}
impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual(-self.0, -self.1)
    }
}
impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual(v, 0.0)
    }
    fn val(self) -> f64 {
        self.0
    }
}

/// `(a, σ·4·sin 4Θ)` from a gradient, in rational form.
fn aniso<T: Scalar>(gx: T, gy: T, sigma: f64) -> Option<(T, T)> {
    let q = gx * gx + gy * gy;
    if q.val() < GRADIENT_REGULARIZATION {
        return None;
    }
    let q2 = q * q;
    let c4 = T::cst(1.0) - T::cst(8.0) * gx * gx * gy * gy / q2;
    let s4 = T::cst(4.0) * gx * gy * (gx * gx - gy * gy) / q2;
    Some((T::cst(1.0) + T::cst(sigma) * c4, T::cst(4.0 * sigma) * s4))
}

/// Flux `∂ψ/∂g` of the density `ψ(g) = ½ a(g)² |g|²`.
pub(crate) fn aniso_flux<T: Scalar>(gx: T, gy: T, sigma: f64) -> (T, T) {
    match aniso(gx, gy, sigma) {
        None => (gx, gy),
        Some((a, s)) => {
            let a2 = a * a;
            (a2 * gx + a * s * gy, a2 * gy - a * s * gx)
        }
    }
}

/// Returns `a = 1 + σ cos mΘ` and `σ m sin mΘ` for the normal direction of `(gx, gy)`.
pub fn anisotropy_factor(gx: &Field2D, gy: &Field2D, sigma: f64, m: u32) -> Result<(Field2D, Field2D), DendriteError> {
    if m != 4 {
        return Err(DendriteError::UnsupportedSymmetry(m));
    }
    gx.same_grid(gy)?;
    let mut a = Vec::with_capacity(gx.values().len());
    let mut s = Vec::with_capacity(gx.values().len());
    for (&x, &y) in gx.values().iter().zip(gy.values()) {
        let (av, sv) = aniso(x, y, sigma).unwrap_or((1.0, 0.0));
        a.push(av);
        s.push(sv);
    }
    Ok((Field2D::from_raw(*gx.grid(), a), Field2D::from_raw(*gx.grid(), s)))
}

fn gradient_energy_density(phi: &Field2D, sigma: f64) -> Field2D {
    let (gx, gy) = spectral_gradient(phi);
    gx.zip_map(&gy, |x, y| {
        let a = aniso(x, y, sigma).map_or(1.0, |(a, _)| a);
        0.5 * a * a * (x * x + y * y)
    })
}

/// `E(φ, U) = ∫ ½a²|∇φ|² + (λ0/2εK)U² + W(φ)/ε² + (λ0/ε)h(φ)U`.
pub fn dendrite_energy(phi: &Field2D, u: &Field2D, p: &DendriteParams) -> f64 {
    let grad = gradient_energy_density(phi, p.sigma);
    let e2 = p.eps * p.eps;
    let cu = p.lambda0 / (2.0 * p.eps * p.k);
    let ch = p.lambda0 / p.eps;
    let local: Vec<f64> = phi
        .values()
        .iter()
        .zip(u.values())
        .map(|(&f, &t)| cu * t * t + double_well(f).0 / e2 + ch * interp_h(f).0 * t)
        .collect();
    integrate(&grad) + integrate(&Field2D::from_raw(*phi.grid(), local))
}

/// Convex part `E1(φ) = ∫ ½a²|∇φ|² + βφ²/2ε²`.
pub fn dendrite_e1(phi: &Field2D, p: &DendriteParams) -> f64 {
    let c = p.beta / (2.0 * p.eps * p.eps);
    integrate(&gradient_energy_density(phi, p.sigma)) + c * phi.norm2()
}

/// Explicit part `E2(φ, U) = E − E1`.
pub fn dendrite_e2(phi: &Field2D, u: &Field2D, p: &DendriteParams) -> f64 {
    let e2 = p.eps * p.eps;
    let cu = p.lambda0 / (2.0 * p.eps * p.k);
    let ch = p.lambda0 / p.eps;
    let local: Vec<f64> = phi
        .values()
        .iter()
        .zip(u.values())
        .map(|(&f, &t)| cu * t * t + (double_well(f).0 - 0.5 * p.beta * f * f) / e2 + ch * interp_h(f).0 * t)
        .collect();
    integrate(&Field2D::from_raw(*phi.grid(), local))
}

/// `∇φE1 = −div(a²∇φ + a·σm sin mΘ·(∂yφ, −∂xφ)) + (β/ε²)φ`.
pub fn grad_phi_e1(phi: &Field2D, p: &DendriteParams) -> Field2D {
    let (gx, gy) = spectral_gradient(phi);
    let n = gx.values().len();
    let mut fx = Vec::with_capacity(n);
    let mut fy = Vec::with_capacity(n);
    for (&x, &y) in gx.values().iter().zip(gy.values()) {
        let (a, b) = aniso_flux(x, y, p.sigma);
        fx.push(a);
        fy.push(b);
    }
    let g = *phi.grid();
    let div = spectral_divergence(&Field2D::from_raw(g, fx), &Field2D::from_raw(g, fy));
    let c = p.beta / (p.eps * p.eps);
    div.zip_map(phi, |d, f| -d + c * f)
}

/// Hessian of `E1` at `φ` applied to `v`.
pub fn hess_e1_apply(phi: &Field2D, v: &Field2D, p: &DendriteParams) -> Field2D {
    let (gx, gy) = spectral_gradient(phi);
    let (vx, vy) = spectral_gradient(v);
    let n = gx.values().len();
    let mut fx = Vec::with_capacity(n);
    let mut fy = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = aniso_flux(
            Dual(gx.values()[i], vx.values()[i]),
            Dual(gy.values()[i], vy.values()[i]),
            p.sigma,
        );
        fx.push(a.1);
        fy.push(b.1);
    }
    let g = *phi.grid();
    let div = spectral_divergence(&Field2D::from_raw(g, fx), &Field2D::from_raw(g, fy));
    let c = p.beta / (p.eps * p.eps);
    div.zip_map(v, |d, f| -d + c * f)
}

/// `∇φE2 = W'(φ)/ε² + (λ0/ε)h'(φ)U − (β/ε²)φ`.
pub fn grad_phi_e2(phi: &Field2D, u: &Field2D, p: &DendriteParams) -> Field2D {
    let e2 = p.eps * p.eps;
    let ch = p.lambda0 / p.eps;
    phi.zip_map(u, |f, t| (double_well(f).1 - p.beta * f) / e2 + ch * interp_h(f).1 * t)
}

/// Full phase gradient `∇φE = ∇φE1 + ∇φE2`.
pub fn grad_phi_energy(phi: &Field2D, u: &Field2D, p: &DendriteParams) -> Field2D {
    grad_phi_e1(phi, p).add(&grad_phi_e2(phi, u, p))
}

/// Implicit heat step `U⁺ = (I − dtDΔ)⁻¹(U + K h'(φ⁺)(φ⁺ − φ))`.
pub fn heat_step_implicit(
    u: &Field2D,
    phi_new: &Field2D,
    phi_old: &Field2D,
    p: &DendriteParams,
) -> Result<Field2D, DendriteError> {
    u.same_grid(phi_new)?;
    u.same_grid(phi_old)?;
    let src: Vec<f64> = u
        .values()
        .iter()
        .zip(phi_new.values())
        .zip(phi_old.values())
        .map(|((&t, &fn_), &fo)| t + p.k * interp_h(fn_).1 * (fn_ - fo))
        .collect();
    Ok(helmholtz_inverse_apply(&Field2D::from_raw(*u.grid(), src), 0.0, p.d, p.dt)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavState {
    pub phi: Field2D,
    pub u: Field2D,
    pub q: f64,
}

impl SavState {
    /// Starts the auxiliary variable at `E(φ, U) + c0`.
    pub fn new(phi: Field2D, u: Field2D, p: &DendriteParams) -> Result<Self, DendriteError> {
        phi.same_grid(&u)?;
        let q = dendrite_energy(&phi, &u, p) + p.c0_sav;
        if !(q > 0.0) {
            return Err(DendriteError::NonPositiveEnergy(q));
        }
        Ok(Self { phi, u, q })
    }
}

/// Scalars produced by one SAV step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SavDiagnostics {
    pub energy_prev: f64,
    pub energy_pred: f64,
    pub energy: f64,
    pub q_bar: f64,
    pub xi: f64,
    pub eta: f64,
    pub zeta: f64,
}

/// Largest `ζ ∈ [0, 1]` with `ζ q̄ + (1 − ζ) e ≤ bound`. When no `ζ` is
/// feasible the one giving the smaller auxiliary value is returned.
pub fn relaxation_zeta(q_bar: f64, e: f64, bound: f64) -> f64 {
    if q_bar <= bound {
        1.0
    } else if e <= bound {
        ((bound - e) / (q_bar - e)).clamp(0.0, 1.0)
    } else if q_bar > e {
        0.0
    } else {
        1.0
    }
}

/// Linear predictor: implicit `αΔ − β/ε²`, everything else explicit.
fn sav_predictor(phi: &Field2D, u: &Field2D, p: &DendriteParams) -> Result<Field2D, DendriteError> {
    let c = p.beta / (p.eps * p.eps);
    let lap = spectral_laplacian(phi);
    let full = grad_phi_energy(phi, u, p);
    let explicit: Vec<f64> = full
        .values()
        .iter()
        .zip(lap.values())
        .zip(phi.values())
        .map(|((&g, &l), &f)| g + p.alpha_sav * l - c * f)
        .collect();
    let s = p.dt / p.tau;
    let rhs = phi.zip_map(&Field2D::from_raw(*phi.grid(), explicit), |f, g| f - s * g);
    Ok(helmholtz_inverse_apply(&rhs, c, p.alpha_sav, s)?)
}

/// One relaxed SAV step.
pub fn sav_step(state: &SavState, p: &DendriteParams) -> Result<(SavState, SavDiagnostics), DendriteError> {
    let c0 = p.c0_sav;
    let energy_prev = dendrite_energy(&state.phi, &state.u, p);
    let phi_bar = sav_predictor(&state.phi, &state.u, p)?;
    let u_bar = heat_step_implicit(&state.u, &phi_bar, &state.phi, p)?;
    let energy_pred = dendrite_energy(&phi_bar, &u_bar, p);
    if !(energy_pred + c0 > 0.0) {
        return Err(DendriteError::NonPositiveEnergy(energy_pred + c0));
    }
    let de_t = (energy_pred - energy_prev) / p.dt;
    let denom = 1.0 - p.dt * de_t / (energy_pred + c0);
    if !(denom > 0.0) {
        return Err(DendriteError::NonPositiveEnergy(energy_prev + c0));
    }
    let q_bar = state.q / denom;
    let xi = q_bar / (energy_pred + c0);
    let eta = 1.0 - (1.0 - xi) * (1.0 - xi);
    let phi = phi_bar.scale(eta);
    let u = u_bar.scale(eta);
    let energy = dendrite_energy(&phi, &u, p);
    let e_shift = energy + c0;
    let zeta = relaxation_zeta(q_bar, e_shift, q_bar - p.dt * xi * de_t);
    let q = zeta * q_bar + (1.0 - zeta) * e_shift;
    if !q.is_finite() || !phi.is_finite() || !u.is_finite() {
        return Err(DendriteError::NonFinite);
    }
    let diag = SavDiagnostics { energy_prev, energy_pred, energy, q_bar, xi, eta, zeta };
    Ok((SavState { phi, u, q }, diag))
}

/// Seed radius of every grain, in units of ε.
pub const SEED_RADIUS_EPS: f64 = 5.0;

/// Grains of radius 5ε at `centers` in a liquid undercooled to κ.
pub fn ic_dendrite(grid: Grid2D, centers: &[(f64, f64)], p: &DendriteParams) -> Result<(Field2D, Field2D), DendriteError> {
    if centers.is_empty() {
        return Err(DendriteError::InvalidInitialCondition("no grain centres".into()));
    }
    let l = grid.length();
    let r = SEED_RADIUS_EPS * p.eps;
    let phi = Field2D::from_fn(grid, |x, y| {
        centers
            .iter()
            .map(|&(cx, cy)| {
                let d = periodic_delta(x - cx, l).hypot(periodic_delta(y - cy, l));
                ((r - d) / (SQRT_2 * p.eps)).tanh()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let u = phi.map(|f| if f > 0.0 { 0.0 } else { p.kappa });
    Ok((phi, u))
}

/// `∫ (1 + φ)/2` divided by the domain area.
pub fn solid_fraction(phi: &Field2D) -> f64 {
    let l = phi.grid().length();
    integrate(&phi.map(|f| 0.5 * (1.0 + f))) / (l * l)
}
