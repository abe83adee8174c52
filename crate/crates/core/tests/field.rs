use std::f64::consts::PI;

use num_complex::Complex64;
use pfno_core::field::{
    helmholtz_inverse_apply, integrate, make_grid, snapshot_read, snapshot_write, spectral_divergence,
    spectral_gradient, spectral_laplacian, wavenumber, write_meta,
};
use pfno_core::{Field2D, FieldError, Grid2D};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_field(seed: u64, n: usize) -> Field2D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = Grid2D::unit(n).unwrap();
    Field2D::from_values(grid, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Dense `Σ_k m(k) f̂(k) e^{ikx} / n²` with an explicit double sum.
fn dense_multiplier(f: &Field2D, m: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let n = f.n();
    let l = f.grid().length();
    let v = f.values();
    let mut hat = vec![Complex64::new(0.0, 0.0); n * n];
    for ky in 0..n {
        for kx in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let ph = -2.0 * PI * ((ky * r + kx * c) as f64) / n as f64;
                    acc += v[r * n + c] * Complex64::from_polar(1.0, ph);
                }
            }
            let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let (fx, fy) = (2.0 * PI * signed(kx) / l, 2.0 * PI * signed(ky) / l);
            hat[ky * n + kx] = acc * m(fx, fy);
        }
    }
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for ky in 0..n {
                for kx in 0..n {
                    let ph = 2.0 * PI * ((ky * r + kx * c) as f64) / n as f64;
                    acc += hat[ky * n + kx] * Complex64::from_polar(1.0, ph);
                }
            }
            out[r * n + c] = acc.re / (n * n) as f64;
        }
    }
    out
}

#[test]
fn grid_spacing() {
    assert_eq!(make_grid(128, 1.0).unwrap().spacing(), 1.0 / 128.0);
    assert_eq!(make_grid(400, 1.0).unwrap().spacing(), 1.0 / 400.0);
    assert_eq!(make_grid(4, 2.0).unwrap().spacing(), 0.5);
}

#[test]
fn grid_rejects_bad_input() {
    assert!(matches!(make_grid(3, 1.0), Err(FieldError::InvalidGrid(_))));
    assert!(make_grid(8, 0.0).is_err());
    assert!(make_grid(8, -1.0).is_err());
    assert!(make_grid(8, f64::NAN).is_err());
}

#[test]
fn field_rejects_non_finite() {
    let g = Grid2D::unit(4).unwrap();
    let mut v = vec![0.0; 16];
    v[3] = f64::NAN;
    assert!(Field2D::from_values(g, v).is_err());
    assert!(Field2D::from_values(g, vec![0.0; 15]).is_err());
}

#[test]
fn gradient_of_constant_is_zero() {
    let f = Field2D::constant(Grid2D::unit(16).unwrap(), 2.5);
    let (gx, gy) = spectral_gradient(&f);
    assert!(gx.max_abs() < 1e-14 && gy.max_abs() < 1e-14);
}

#[test]
fn gradient_of_sine() {
    let g = Grid2D::unit(64).unwrap();
    let f = Field2D::from_fn(g, |x, _| (2.0 * PI * x).sin());
    let (gx, gy) = spectral_gradient(&f);
    let exact = Field2D::from_fn(g, |x, _| 2.0 * PI * (2.0 * PI * x).cos());
    assert!(gx.sub(&exact).max_abs() < 1e-10);
    assert!(gy.max_abs() < 1e-12);
    let f = Field2D::from_fn(g, |_, y| (2.0 * PI * y).sin());
    let (gx, _) = spectral_gradient(&f);
    assert_eq!(gx.max_abs(), 0.0);
}

#[test]
fn gradient_scales_with_length() {
    let g = Grid2D::new(32, 2.0).unwrap();
    let f = Field2D::from_fn(g, |x, _| (PI * x).sin());
    let (gx, _) = spectral_gradient(&f);
    let exact = Field2D::from_fn(g, |x, _| PI * (PI * x).cos());
    assert!(gx.sub(&exact).max_abs() < 1e-11);
}

#[test]
fn laplacian_closed_forms() {
    let g = Grid2D::unit(64).unwrap();
    assert!(spectral_laplacian(&Field2D::constant(g, 1.0)).max_abs() < 1e-12);
    let f = Field2D::from_fn(g, |x, _| (2.0 * PI * x).sin());
    let err = spectral_laplacian(&f).sub(&f.scale(-4.0 * PI * PI)).max_abs();
    assert!(err < 1e-9, "{err}");
    let f = Field2D::from_fn(g, |x, y| (2.0 * PI * x).sin() + (2.0 * PI * y).sin());
    let err = spectral_laplacian(&f).sub(&f.scale(-4.0 * PI * PI)).max_abs();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn nyquist_mode_has_no_derivative() {
    assert_eq!(wavenumber(4, 8), 0.0);
    assert_eq!(wavenumber(3, 8), 3.0);
    assert_eq!(wavenumber(5, 8), -3.0);
    let g = Grid2D::unit(8).unwrap();
    let f = Field2D::from_fn(g, |x, _| (8.0 * PI * x).cos());
    let (gx, _) = spectral_gradient(&f);
    assert!(gx.max_abs() < 1e-12);
}

#[test]
fn integrate_examples() {
    let g = Grid2D::unit(32).unwrap();
    assert!((integrate(&Field2D::constant(g, 3.0)) - 3.0).abs() < 1e-14);
    assert!(integrate(&Field2D::from_fn(g, |x, _| (2.0 * PI * x).sin())).abs() < 1e-14);
    let g = Grid2D::unit(256).unwrap();
    let eps = 1.0 / 64.0;
    let disk = Field2D::from_fn(g, |x, y| {
        let d = (x - 0.5).hypot(y - 0.5);
        0.5 * (1.0 + ((0.25 - d) / (2f64.sqrt() * eps)).tanh())
    });
    let area = PI * 0.25 * 0.25;
    assert!((integrate(&disk) - area).abs() / area < 0.01);
}

#[test]
fn helmholtz_examples() {
    let g = Grid2D::unit(16).unwrap();
    let (beta, eps, dt) = (2.001, 1.0 / 64.0, 2.44e-4);
    let c0 = beta / (eps * eps);
    let out = helmholtz_inverse_apply(&Field2D::constant(g, 1.0), c0, 1.0, dt).unwrap();
    let expect = 1.0 / (1.0 + dt * c0);
    assert!(out.values().iter().all(|v| (v - expect).abs() < 1e-15));
    let zero = helmholtz_inverse_apply(&Field2D::zeros(g), c0, 1.0, dt).unwrap();
    assert_eq!(zero.max_abs(), 0.0);
    assert!(helmholtz_inverse_apply(&zero, c0, 1.0, 0.0).is_err());
    assert!(helmholtz_inverse_apply(&zero, c0, 0.0, dt).is_err());
}

#[test]
fn helmholtz_matches_dense_dft() {
    let f = random_field(3, 8);
    let (c0, c1, dt) = (5.0, 0.7, 0.01);
    let out = helmholtz_inverse_apply(&f, c0, c1, dt).unwrap();
    let dense = dense_multiplier(&f, |kx, ky| 1.0 / (1.0 + dt * (c1 * (kx * kx + ky * ky) + c0)));
    for (a, b) in out.values().iter().zip(&dense) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn snapshot_round_trip_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    let f = random_field(5, 16);
    snapshot_write(std::slice::from_ref(&f), &path).unwrap();
    let back = snapshot_read(&path).unwrap();
    assert_eq!(back.len(), 1);
    assert!(back[0].values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));

    let u = random_field(6, 16);
    snapshot_write(&[f.clone(), u], &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[0..8], b"PFNOSNAP");
    assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
    assert_eq!(bytes.len(), 24 + 2 * 16 * 16 * 8);
}

#[test]
fn snapshot_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    snapshot_write(&[random_field(1, 8)], &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(snapshot_read(&path), Err(FieldError::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(snapshot_read(&path), Err(FieldError::Format(_))));
    let mut bad = bytes;
    bad[8] = 2;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(snapshot_read(&path), Err(FieldError::Format(_))));
}

#[test]
fn snapshot_length_from_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.bin");
    let f = Field2D::zeros(Grid2D::new(8, 0.5).unwrap());
    snapshot_write(&[f], &path).unwrap();
    write_meta(&path, &[("length", "0.5".into())]).unwrap();
    assert_eq!(snapshot_read(&path).unwrap()[0].grid().length(), 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval(seed in any::<u64>(), k in 2usize..5) {
        let n = 1 << k;
        let f = random_field(seed, n);
        let hat = pfno_core::field::fft2(f.values(), n);
        let h = f.grid().spacing();
        let power = hat.iter().map(|c| c.norm_sqr()).sum::<f64>() * h * h / (n * n) as f64;
        let direct = integrate(&f.map(|v| v * v));
        prop_assert!((power - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn laplacian_is_div_grad(seed in any::<u64>(), k in 2usize..6) {
        let f = random_field(seed, 1 << k);
        let (gx, gy) = spectral_gradient(&f);
        let a = spectral_divergence(&gx, &gy);
        let b = spectral_laplacian(&f);
        prop_assert!(a.sub(&b).max_abs() <= 1e-10 * b.max_abs());
    }

    #[test]
    fn helmholtz_inverts_its_operator(seed in any::<u64>(), c0 in 0.0f64..100.0, c1 in 0.01f64..2.0, dt in 1e-4f64..1.0) {
        let f = random_field(seed, 8);
        let x = helmholtz_inverse_apply(&f, c0, c1, dt).unwrap();
        let lap = dense_multiplier(&x, |kx, ky| -(kx * kx + ky * ky));
        let back = Field2D::from_values(*x.grid(), x.values().iter().zip(&lap).map(|(&v, &l)| v - dt * (c1 * l - c0 * v)).collect()).unwrap();
        prop_assert!(back.sub(&f).max_abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn snapshot_bitwise(values in proptest::collection::vec(-1e300f64..1e300, 16)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let f = Field2D::from_values(Grid2D::unit(4).unwrap(), values).unwrap();
        snapshot_write(std::slice::from_ref(&f), &path).unwrap();
        let back = snapshot_read(&path).unwrap();
        prop_assert!(back[0].values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
