use crate::allen_cahn::{ac_e1, ac_e2, ac_grad_e1, ac_grad_e2, AcParams};
use crate::dendrite::{dendrite_e1, dendrite_e2, grad_phi_e1, grad_phi_e2, hess_e1_apply, DendriteParams};
use crate::Field2D;

fn cell(f: &Field2D) -> f64 {
    let h = f.grid().spacing();
    h * h
}

/// `(1/2dt)‖v − u‖² + E1(v) + E2(u) + ⟨∇E2(u), v − u⟩`.
pub fn loss_deepritz_ac(pred: &Field2D, u_n: &Field2D, p: &AcParams) -> f64 {
    let d = pred.sub(u_n);
    d.norm2() / (2.0 * p.dt) + ac_e1(pred, p) + ac_e2(u_n, p) + ac_grad_e2(u_n, p).dot(&d)
}

/// Derivative of [`loss_deepritz_ac`] with respect to the nodal values of `pred`.
pub fn loss_deepritz_ac_grad(pred: &Field2D, u_n: &Field2D, p: &AcParams) -> Field2D {
    let w = cell(pred);
    let g1 = ac_grad_e1(pred, p);
    let g2 = ac_grad_e2(u_n, p);
    let mut out = pred.sub(u_n).scale(1.0 / p.dt).add(&g1).add(&g2);
    out.values_mut().iter_mut().for_each(|v| *v *= w);
    out
}

/// `(τ/2dt)‖v − φ‖² + E1(v) + E2(φ, U) + ⟨∇φE2(φ, U), v − φ⟩`.
pub fn loss_deepritz_dendrite(pred: &Field2D, phi_n: &Field2D, u_n: &Field2D, p: &DendriteParams) -> f64 {
    let d = pred.sub(phi_n);
    p.tau * d.norm2() / (2.0 * p.dt) + dendrite_e1(pred, p) + dendrite_e2(phi_n, u_n, p)
        + grad_phi_e2(phi_n, u_n, p).dot(&d)
}

pub fn loss_deepritz_dendrite_grad(pred: &Field2D, phi_n: &Field2D, u_n: &Field2D, p: &DendriteParams) -> Field2D {
    let w = cell(pred);
    let mut out = scheme_residual(pred, phi_n, u_n, p);
    out.values_mut().iter_mut().for_each(|v| *v *= w);
    out
}

/// Mean squared difference over grid points.
pub fn loss_data(pred: &Field2D, target: &Field2D) -> f64 {
    let n = pred.values().len() as f64;
    pred.values().iter().zip(target.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n
}

pub fn loss_data_grad(pred: &Field2D, target: &Field2D) -> Field2D {
    let n = pred.values().len() as f64;
    pred.zip_map(target, |a, b| 2.0 * (a - b) / n)
}

/// `τ(v − φ)/dt + ∇φE1(v) + ∇φE2(φ, U)`.
pub fn scheme_residual(pred: &Field2D, phi_n: &Field2D, u_n: &Field2D, p: &DendriteParams) -> Field2D {
    let c = p.tau / p.dt;
    pred.sub(phi_n).scale(c).add(&grad_phi_e1(pred, p)).add(&grad_phi_e2(phi_n, u_n, p))
}

/// `‖τ(v − φ)/dt + ∇φE1(v) + ∇φE2(φ, U)‖²`.
pub fn loss_scheme_residual(pred: &Field2D, phi_n: &Field2D, u_n: &Field2D, p: &DendriteParams) -> f64 {
    scheme_residual(pred, phi_n, u_n, p).norm2()
}

pub fn loss_scheme_residual_grad(pred: &Field2D, phi_n: &Field2D, u_n: &Field2D, p: &DendriteParams) -> Field2D {
    let r = scheme_residual(pred, phi_n, u_n, p);
    let hr = hess_e1_apply(pred, &r, p);
    let w = 2.0 * cell(pred);
    let c = p.tau / p.dt;
    r.zip_map(&hr, |a, b| w * (c * a + b))
}
