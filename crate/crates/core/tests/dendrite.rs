use std::f64::consts::{PI, SQRT_2};

use pfno_core::allen_cahn::double_well;
use pfno_core::dendrite::*;
use pfno_core::field::integrate;
use pfno_core::{Field2D, Grid2D};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(sigma: f64) -> DendriteParams {
    DendriteParams::reference(sigma)
}

fn smooth_field(grid: Grid2D, seed: u64) -> Field2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = grid.length();
    let modes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(1..4) as f64,
                rng.random_range(0..4) as f64,
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    Field2D::from_fn(grid, |x, y| {
        modes.iter().map(|&(kx, ky, ph, a)| a * (2.0 * PI * (kx * x + ky * y) / l + ph).sin()).sum::<f64>()
    })
}

/// Small-domain parameters: ε = L/16 so that interfaces resolve on 16² grids.
fn coarse_params(sigma: f64) -> (Grid2D, DendriteParams) {
    let grid = Grid2D::new(16, 1.0).unwrap();
    let mut p = params(sigma);
    p.eps = 1.0 / 16.0;
    p.lambda0 = p.d * p.tau / (THIN_INTERFACE_A2 * p.eps);
    (grid, p)
}

#[test]
fn interp_h_values() {
    assert_eq!(interp_h(0.0), (0.0, 1.0));
    let (h, d) = interp_h(1.0);
    assert!((h - 8.0 / 15.0).abs() < 1e-15 && d == 0.0);
    let (h, d) = interp_h(-1.0);
    assert!((h + 8.0 / 15.0).abs() < 1e-15 && d == 0.0);
}

#[test]
fn benchmark_constants() {
    let p = params(0.05);
    assert!((p.lambda0 - 6.25e-5 * 1.6e5 / (0.6267 / 400.0)).abs() < 1e-9);
    assert!((p.alpha_sav - 1.1025).abs() < 1e-15);
    assert!(p.validate().is_ok());
    assert!(p.concavity_bound() < 0.0);
}

#[test]
fn params_validation() {
    let mut p = params(0.05);
    p.m = 6;
    assert!(matches!(p.validate(), Err(DendriteError::UnsupportedSymmetry(6))));
    let mut p = params(0.05);
    p.sigma = 0.1;
    assert!(p.validate().is_err());
    let mut p = params(0.05);
    p.beta = 1.0;
    assert!(p.validate().is_err());
    let mut p = params(0.05);
    p.kappa = 0.2;
    assert!(p.validate().is_err());
    let mut p = params(0.05);
    p.lambda0 = 638.3;
    assert!(p.validate().is_err());
    let mut p = params(0.05);
    p.dt = 0.0;
    assert!(p.validate().is_err());
}

#[test]
fn anisotropy_examples() {
    let g = Grid2D::unit(4).unwrap();
    let c = |v| Field2D::constant(g, v);
    let (a, _) = anisotropy_factor(&c(1.0), &c(0.0), 0.05, 4).unwrap();
    assert!((a.values()[0] - 1.05).abs() < 1e-15);
    let r = 1.0 / SQRT_2;
    let (a, _) = anisotropy_factor(&c(r), &c(r), 0.05, 4).unwrap();
    assert!((a.values()[0] - 0.95).abs() < 1e-14);
    assert!(matches!(anisotropy_factor(&c(1.0), &c(0.0), 0.05, 6), Err(DendriteError::UnsupportedSymmetry(6))));
    let (a, s) = anisotropy_factor(&c(0.0), &c(0.0), 0.05, 4).unwrap();
    assert_eq!((a.values()[0], s.values()[0]), (1.0, 0.0));
}

#[test]
fn anisotropy_matches_angle_form() {
    let g = Grid2D::unit(16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gx = Field2D::from_values(g, (0..256).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let gy = Field2D::from_values(g, (0..256).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let sigma = 0.05;
    let (a, s) = anisotropy_factor(&gx, &gy, sigma, 4).unwrap();
    for i in 0..256 {
        let th = gy.values()[i].atan2(gx.values()[i]);
        assert!((a.values()[i] - (1.0 + sigma * (4.0 * th).cos())).abs() < 1e-12);
        assert!((s.values()[i] - sigma * 4.0 * (4.0 * th).sin()).abs() < 1e-12);
    }
}

#[test]
fn energy_of_constants() {
    let p = params(0.05);
    let g = Grid2D::new(32, 2.0).unwrap();
    let e = dendrite_energy(&Field2D::constant(g, 1.0), &Field2D::zeros(g), &p);
    assert_eq!(e, 0.0);
    let k = p.kappa;
    let expected = 4.0 * (p.lambda0 / (2.0 * p.eps * p.k) * k * k - p.lambda0 / p.eps * (8.0 / 15.0) * k);
    let e = dendrite_energy(&Field2D::constant(g, -1.0), &Field2D::constant(g, k), &p);
    assert!((e - expected).abs() < 1e-10 * expected.abs(), "{e} vs {expected}");
}

#[test]
fn energy_of_disk_matches_fine_quadrature() {
    let mut p = params(0.05);
    p.eps = 1.0 / 64.0;
    p.lambda0 = p.d * p.tau / (THIN_INTERFACE_A2 * p.eps);
    let r = 0.25;
    let profile = |x: f64, y: f64| (((r - (x - 0.5).hypot(y - 0.5)) / (SQRT_2 * p.eps)).tanh(), x - 0.5, y - 0.5);
    let g = Grid2D::unit(128).unwrap();
    let phi = Field2D::from_fn(g, |x, y| profile(x, y).0);
    let u = Field2D::constant(g, p.kappa);
    let e = dendrite_energy(&phi, &u, &p);
    let fine = Grid2D::unit(1024).unwrap();
    let density = Field2D::from_fn(fine, |x, y| {
        let (f, dx, dy) = profile(x, y);
        let d = dx.hypot(dy).max(1e-300);
        let du = -(1.0 - f * f) / (SQRT_2 * p.eps);
        let (gx, gy) = (du * dx / d, du * dy / d);
        let a = 1.0 + p.sigma * (4.0 * gy.atan2(gx)).cos();
        0.5 * a * a * (gx * gx + gy * gy)
            + p.lambda0 / (2.0 * p.eps * p.k) * p.kappa * p.kappa
            + double_well(f).0 / (p.eps * p.eps)
            + p.lambda0 / p.eps * interp_h(f).0 * p.kappa
    });
    let oracle = integrate(&density);
    assert!((e - oracle).abs() / oracle.abs() < 5e-3, "{e} vs {oracle}");
}

#[test]
fn split_energy_sums() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 1);
    let u = smooth_field(g, 2).scale(0.1);
    let e = dendrite_energy(&phi, &u, &p);
    let split = dendrite_e1(&phi, &p) + dendrite_e2(&phi, &u, &p);
    assert!((e - split).abs() < 1e-10 * e.abs().max(1.0));
}

#[test]
fn grad_e2_examples() {
    let p = params(0.05);
    let g = Grid2D::unit(8).unwrap();
    let out = grad_phi_e2(&Field2D::constant(g, 1.0), &Field2D::zeros(g), &p);
    let want = -p.beta / (p.eps * p.eps);
    assert!(out.values().iter().all(|&v| (v - want).abs() < 1e-9 * want.abs()));
    let out = grad_phi_e2(&Field2D::zeros(g), &Field2D::constant(g, p.kappa), &p);
    let want = p.lambda0 / p.eps * p.kappa;
    assert!(out.values().iter().all(|&v| (v - want).abs() < 1e-9 * want.abs()));
}

/// Central difference of a discrete functional in the direction of nodal value `i`,
/// divided by the quadrature weight.
fn nodal_fd(phi: &Field2D, i: usize, step: f64, e: impl Fn(&Field2D) -> f64) -> f64 {
    let h2 = phi.grid().spacing().powi(2);
    let mut plus = phi.clone();
    plus.values_mut()[i] += step;
    let mut minus = phi.clone();
    minus.values_mut()[i] -= step;
    (e(&plus) - e(&minus)) / (2.0 * step * h2)
}

#[test]
fn grad_e2_matches_finite_differences() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 4);
    let u = smooth_field(g, 5).scale(0.2);
    let grad = grad_phi_e2(&phi, &u, &p);
    for i in [0, 17, 100, 255] {
        let fd = nodal_fd(&phi, i, 1e-5, |f| dendrite_e2(f, &u, &p));
        let a = grad.values()[i];
        assert!((a - fd).abs() <= 1e-6 * a.abs().max(1.0), "node {i}: {a} vs {fd}");
    }
}

#[test]
fn grad_e1_examples() {
    let p = params(0.0);
    let g = Grid2D::unit(32).unwrap();
    let out = grad_phi_e1(&Field2D::constant(g, 0.7), &p);
    let want = p.beta * 0.7 / (p.eps * p.eps);
    assert!(out.values().iter().all(|&v| (v - want).abs() < 1e-9 * want));
    let phi = Field2D::from_fn(g, |x, _| (2.0 * PI * x).sin());
    let out = grad_phi_e1(&phi, &p);
    let c = 4.0 * PI * PI + p.beta / (p.eps * p.eps);
    let want = phi.scale(c);
    assert!(out.sub(&want).max_abs() < 1e-9 * c);
}

#[test]
fn grad_e1_matches_finite_differences() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 6);
    let grad = grad_phi_e1(&phi, &p);
    let scale = grad.max_abs();
    for i in [0, 3, 77, 130, 254] {
        let fd = nodal_fd(&phi, i, 1e-5, |f| dendrite_e1(f, &p));
        let a = grad.values()[i];
        assert!((a - fd).abs() <= 1e-5 * scale, "node {i}: {a} vs {fd}");
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 7);
    let v = smooth_field(g, 8);
    let hv = hess_e1_apply(&phi, &v, &p);
    let t = 1e-6;
    let fd = grad_phi_e1(&phi.add(&v.scale(t)), &p).sub(&grad_phi_e1(&phi.sub(&v.scale(t)), &p)).scale(0.5 / t);
    assert!(hv.sub(&fd).max_abs() < 1e-5 * hv.max_abs());
}

#[test]
fn full_gradient_is_sum() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 9);
    let u = smooth_field(g, 10);
    let full = grad_phi_energy(&phi, &u, &p);
    let sum = grad_phi_e1(&phi, &p).add(&grad_phi_e2(&phi, &u, &p));
    assert!(full.sub(&sum).max_abs() == 0.0);
}

#[test]
fn heat_step_examples() {
    let p = params(0.05);
    let g = Grid2D::unit(16).unwrap();
    let phi = smooth_field(g, 11);
    let out = heat_step_implicit(&Field2D::constant(g, -0.3), &phi, &phi, &p).unwrap();
    assert!(out.values().iter().all(|&v| (v + 0.3).abs() < 1e-14));
    let (old, new) = (Field2D::constant(g, 0.2), Field2D::constant(g, 0.5));
    let out = heat_step_implicit(&Field2D::zeros(g), &new, &old, &p).unwrap();
    let want = p.k * interp_h(0.5).1 * 0.3;
    assert!(out.values().iter().all(|&v| (v - want).abs() < 1e-14));
}

/// Real dense Laplacian matrix with the full symbol, built from cosine sums.
fn dense_laplacian(n: usize, l: f64) -> Vec<f64> {
    let signed = |k: usize| if 2 * k <= n { k as f64 } else { k as f64 - n as f64 };
    let mut m = vec![0.0; n.pow(4)];
    for r in 0..n {
        for c in 0..n {
            for r2 in 0..n {
                for c2 in 0..n {
                    let mut acc = 0.0;
                    for ky in 0..n {
                        for kx in 0..n {
                            let xi2 = (2.0 * PI / l).powi(2) * (signed(kx).powi(2) + signed(ky).powi(2));
                            let ph = 2.0 * PI * (ky as f64 * (r as f64 - r2 as f64) + kx as f64 * (c as f64 - c2 as f64))
                                / n as f64;
                            acc -= xi2 * ph.cos();
                        }
                    }
                    m[(r * n + c) * n * n + r2 * n + c2] = acc / (n * n) as f64;
                }
            }
        }
    }
    m
}

fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs())).unwrap();
        for k in 0..n {
            a.swap(col * n + k, piv * n + k);
        }
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x
}

#[test]
fn heat_step_matches_dense_solve() {
    let mut p = params(0.05);
    p.dt = 5.0;
    p.d = 1e-3;
    let g = Grid2D::new(8, 0.5).unwrap();
    let u = smooth_field(g, 12).scale(0.3);
    let old = smooth_field(g, 13);
    let new = smooth_field(g, 14);
    let out = heat_step_implicit(&u, &new, &old, &p).unwrap();
    let lap = dense_laplacian(8, 0.5);
    let mut a: Vec<f64> = lap.iter().map(|v| -p.dt * p.d * v).collect();
    for i in 0..64 {
        a[i * 64 + i] += 1.0;
    }
    let rhs: Vec<f64> = (0..64)
        .map(|i| u.values()[i] + p.k * interp_h(new.values()[i]).1 * (new.values()[i] - old.values()[i]))
        .collect();
    let x = gauss_solve(a, rhs);
    for i in 0..64 {
        assert!((x[i] - out.values()[i]).abs() < 1e-12, "{i}: {} vs {}", x[i], out.values()[i]);
    }
}

#[test]
fn heat_step_conserves_mean_without_latent_heat() {
    let mut p = params(0.05);
    p.k = 0.0;
    let g = Grid2D::unit(32).unwrap();
    let u = smooth_field(g, 15).map(|v| v + 0.1);
    let out = heat_step_implicit(&u, &smooth_field(g, 16), &smooth_field(g, 17), &p).unwrap();
    assert!((out.mean() - u.mean()).abs() < 1e-14);
}

#[test]
fn sav_keeps_equilibrium() {
    let p = params(0.05);
    let g = Grid2D::new(32, 0.08).unwrap();
    let state = SavState::new(Field2D::constant(g, 1.0), Field2D::zeros(g), &p).unwrap();
    let (next, diag) = sav_step(&state, &p).unwrap();
    assert!(next.phi.sub(&state.phi).max_abs() < 1e-10);
    assert!(next.u.max_abs() < 1e-10);
    assert!((diag.xi - 1.0).abs() < 1e-10);
}

#[test]
fn sav_auxiliary_algebra() {
    let p = params(0.05);
    let g = Grid2D::new(64, 0.16).unwrap();
    let (phi, u) = ic_dendrite(g, &[(0.08, 0.08)], &p).unwrap();
    let state = SavState::new(phi, u, &p).unwrap();
    let (next, d) = sav_step(&state, &p).unwrap();
    let de_t = (d.energy_pred - d.energy_prev) / p.dt;
    let q_bar = state.q / (1.0 - p.dt * de_t / (d.energy_pred + p.c0_sav));
    assert!((d.q_bar - q_bar).abs() < 1e-12 * q_bar.abs());
    assert!((d.xi - q_bar / (d.energy_pred + p.c0_sav)).abs() < 1e-12);
    assert!((d.eta - (1.0 - (1.0 - d.xi).powi(2))).abs() < 1e-14);
    assert!((0.0..=1.0).contains(&d.zeta));
    let q = d.zeta * d.q_bar + (1.0 - d.zeta) * (d.energy + p.c0_sav);
    assert!((next.q - q).abs() < 1e-12 * q.abs());
}

#[test]
fn relaxation_zeta_cases() {
    assert_eq!(relaxation_zeta(1.0, 2.0, 1.5), 1.0);
    assert!((relaxation_zeta(3.0, 1.0, 2.0) - 0.5).abs() < 1e-15);
    assert_eq!(relaxation_zeta(3.0, 2.5, 2.0), 0.0);
}

#[test]
fn sav_grows_a_seed_with_nonincreasing_auxiliary() {
    let p = params(0.05);
    let g = Grid2D::new(200, 0.5).unwrap();
    let (phi, u) = ic_dendrite(g, &[(0.25, 0.25)], &p).unwrap();
    let mut state = SavState::new(phi, u, &p).unwrap();
    let f0 = solid_fraction(&state.phi);
    for _ in 0..100 {
        let (next, _) = sav_step(&state, &p).unwrap();
        assert!(next.q <= state.q * (1.0 + 1e-12), "{} > {}", next.q, state.q);
        state = next;
    }
    assert!(solid_fraction(&state.phi) > f0);
}

#[test]
fn ic_dendrite_examples() {
    let p = params(0.05);
    let g = Grid2D::new(100, 0.25).unwrap();
    let (phi, u) = ic_dendrite(g, &[(0.125, 0.125)], &p).unwrap();
    let r = SEED_RADIUS_EPS * p.eps;
    for row in 0..100 {
        for col in 0..100 {
            let (x, y) = (g.coord(col), g.coord(row));
            let d = (x - 0.125).hypot(y - 0.125);
            let f = phi.get(row, col);
            if d < r - 1e-12 {
                assert!(f > 0.0);
                assert_eq!(u.get(row, col), 0.0);
            } else if d > r + 1e-12 {
                assert!(f < 0.0);
                assert_eq!(u.get(row, col), p.kappa);
            }
        }
    }
    assert!(ic_dendrite(g, &[], &p).is_err());
}

#[test]
fn ic_dendrite_lattice() {
    let p = params(0.05);
    let g = Grid2D::new(200, 0.5).unwrap();
    let centers: Vec<(f64, f64)> =
        (0..16).map(|i| (0.0625 + 0.125 * (i % 4) as f64, 0.0625 + 0.125 * (i / 4) as f64)).collect();
    let (phi, _) = ic_dendrite(g, &centers, &p).unwrap();
    for &(cx, cy) in &centers {
        let col = (cx / g.spacing()).round() as usize;
        let row = (cy / g.spacing()).round() as usize;
        assert!(phi.get(row, col) > 0.9);
    }
    // Area of a tanh profile: πr² plus the π³ε²/6 curvature correction.
    let r = SEED_RADIUS_EPS * p.eps;
    let f = solid_fraction(&phi);
    let want = 16.0 * (PI * r * r + PI.powi(3) * p.eps * p.eps / 6.0) / 0.25;
    assert!((f - want).abs() < 0.01 * want, "{f} vs {want}");
}

#[test]
fn solid_fraction_examples() {
    let g = Grid2D::new(64, 2.0).unwrap();
    assert_eq!(solid_fraction(&Field2D::constant(g, 1.0)), 1.0);
    assert_eq!(solid_fraction(&Field2D::constant(g, -1.0)), 0.0);
    let g = Grid2D::unit(256).unwrap();
    let r = 0.3;
    let disk = Field2D::from_fn(g, |x, y| if (x - 0.5).hypot(y - 0.5) < r { 1.0 } else { -1.0 });
    let want = PI * r * r;
    assert!((solid_fraction(&disk) - want).abs() < 0.01 * want);
}

#[test]
fn energy_is_invariant_under_quarter_turns() {
    let (g, p) = coarse_params(0.05);
    let phi = smooth_field(g, 20);
    let u = smooth_field(g, 21).scale(0.1);
    let e = dendrite_energy(&phi, &u, &p);
    let er = dendrite_energy(&phi.rotate90(), &u.rotate90(), &p);
    assert!((e - er).abs() < 1e-8 * e.abs());
    let gr = grad_phi_energy(&phi.rotate90(), &u.rotate90(), &p);
    let rg = grad_phi_energy(&phi, &u, &p).rotate90();
    assert!(gr.sub(&rg).max_abs() < 1e-8 * rg.max_abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn anisotropy_bounds(x in -5.0f64..5.0, y in -5.0f64..5.0, sigma in 0.0f64..0.066) {
        prop_assume!(x * x + y * y > 1e-6);
        let g = Grid2D::unit(4).unwrap();
        let (a, _) = anisotropy_factor(&Field2D::constant(g, x), &Field2D::constant(g, y), sigma, 4).unwrap();
        let v = a.values()[0];
        prop_assert!(v >= 1.0 - sigma - 1e-12 && v <= 1.0 + sigma + 1e-12);
    }

    #[test]
    fn e1_is_convex_along_lines(seed in any::<u64>(), t in 0.0f64..1.0) {
        let (g, p) = coarse_params(0.05);
        let a = smooth_field(g, seed);
        let b = smooth_field(g, seed.wrapping_add(1));
        let mid = a.scale(1.0 - t).add(&b.scale(t));
        let lhs = dendrite_e1(&mid, &p);
        let rhs = (1.0 - t) * dendrite_e1(&a, &p) + t * dendrite_e1(&b, &p);
        prop_assert!(lhs <= rhs + 1e-9 * rhs.abs());
    }

    #[test]
    fn heat_step_is_a_contraction(seed in any::<u64>()) {
        let mut p = params(0.05);
        p.k = 0.0;
        let g = Grid2D::new(16, 0.1).unwrap();
        let u = smooth_field(g, seed);
        let phi = smooth_field(g, seed ^ 1);
        let out = heat_step_implicit(&u, &phi, &phi, &p).unwrap();
        prop_assert!(out.norm2() <= u.norm2() * (1.0 + 1e-12));
    }
}
