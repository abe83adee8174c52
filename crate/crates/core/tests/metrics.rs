use std::f64::consts::{PI, SQRT_2};

use pfno_core::allen_cahn::{perimeter_epsilon, AcParams};
use pfno_core::metrics::*;
use pfno_core::{Field2D, Grid2D};
use proptest::prelude::*;

fn disk(n: usize, center: (f64, f64), r: f64, eps: f64) -> Field2D {
    let g = Grid2D::unit(n).unwrap();
    let wrap = |d: f64| (d + 0.5).rem_euclid(1.0) - 0.5;
    Field2D::from_fn(g, |x, y| ((r - wrap(x - center.0).hypot(wrap(y - center.1))) / (SQRT_2 * eps)).tanh())
}

#[test]
fn circle_contour_length() {
    let f = disk(128, (0.5, 0.5), 0.25, 1.0 / 64.0);
    let c = zero_level_set(&f);
    assert_eq!(c.polylines.len(), 1);
    assert!(c.polylines[0].closed);
    let want = 2.0 * PI * 0.25;
    assert!((c.length() - want).abs() < 0.01 * want, "{} vs {want}", c.length());
    let r = c.mean_radius((0.5, 0.5)).unwrap();
    assert!((r - 0.25).abs() < 1e-3);
}

#[test]
fn constant_field_has_no_contour() {
    let g = Grid2D::unit(32).unwrap();
    assert!(zero_level_set(&Field2D::constant(g, 1.0)).is_empty());
    assert!(zero_level_set(&Field2D::constant(g, -1.0)).is_empty());
    assert_eq!(zero_level_set(&Field2D::constant(g, 1.0)).length(), 0.0);
}

#[test]
fn sign_flip_keeps_length() {
    let f = disk(96, (0.4, 0.55), 0.2, 1.0 / 48.0);
    let a = zero_level_set(&f).length();
    let b = zero_level_set(&f.scale(-1.0)).length();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn contour_converges_under_refinement() {
    let r = 0.3;
    let want = 2.0 * PI * r;
    let err: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let g = Grid2D::unit(n).unwrap();
            let f = Field2D::from_fn(g, |x, y| r - (x - 0.5).hypot(y - 0.5));
            (zero_level_set(&f).length() - want).abs()
        })
        .collect();
    assert!(err[0] / err[1] > 1.8 && err[1] / err[2] > 1.8, "{err:?}");
}

#[test]
fn contour_across_the_seam() {
    let f = disk(64, (0.02, 0.98), 0.2, 1.0 / 32.0);
    let c = zero_level_set(&f);
    assert_eq!(c.polylines.len(), 1);
    let want = 2.0 * PI * 0.2;
    assert!((c.length() - want).abs() < 0.01 * want);
}

#[test]
fn band_gives_two_open_lines() {
    let g = Grid2D::unit(64).unwrap();
    let f = Field2D::from_fn(g, |_, y| (2.0 * PI * y).cos());
    let c = zero_level_set(&f);
    assert_eq!(c.polylines.len(), 2);
    assert!((c.length() - 2.0).abs() < 1e-12);
}

#[test]
fn tip_of_a_disk() {
    let eps = 1.0 / 128.0;
    let f = disk(256, (0.5, 0.5), 0.2, eps);
    for dir in Direction::ALL {
        let (d, flag) = tip_position(&f, (0.5, 0.5), dir).unwrap();
        assert!(!flag);
        assert!((d - 0.2).abs() < 1e-3, "{dir:?}: {d}");
    }
    let g = Grid2D::unit(32).unwrap();
    let (d, flag) = tip_position(&Field2D::constant(g, 1.0), (0.5, 0.5), Direction::PlusX).unwrap();
    assert!(flag && (d - 0.5).abs() < 1e-12);
    assert!(tip_position(&Field2D::constant(g, -1.0), (0.5, 0.5), Direction::PlusX).is_none());
}

#[test]
fn tip_velocity_of_a_translating_front() {
    let v = 0.01;
    let r0 = 0.1;
    let eps = 1.0 / 128.0;
    let fields: Vec<(f64, Field2D)> = (0..9)
        .map(|i| {
            let t = i as f64;
            (t, disk(256, (0.5, 0.5), r0 + v * t, eps))
        })
        .collect();
    let frames: Vec<(f64, &Field2D)> = fields.iter().map(|(t, f)| (*t, f)).collect();
    let recs = tip_track(&frames, (0.5, 0.5), Direction::PlusY, Some(1.0)).unwrap();
    for r in &recs {
        assert!((r.velocity - v).abs() < 0.02 * v, "t = {}: {}", r.time, r.velocity);
        assert!((r.distance - (r0 + v * r.time)).abs() < 1e-3);
        let rho = r.rho.unwrap();
        assert!((r.peclet.unwrap() - rho * r.velocity / 2.0).abs() < 1e-15);
    }
    let s = steady_state(&recs, 4.0, 3).unwrap();
    assert!((s.velocity - v).abs() < 0.02 * v);
    assert!(steady_state(&[], 1.0, 3).is_none());
}

#[test]
fn parabola_tip_radius() {
    let rho = 0.03;
    let g = Grid2D::unit(256).unwrap();
    let f = Field2D::from_fn(g, |x, y| 0.6 - x - (y - 0.5).powi(2) / (2.0 * rho));
    let pts: Vec<(f64, f64)> = zero_level_set(&f).points().collect();
    let fit = tip_radius(&pts, (0.6, 0.5), Direction::PlusX, 12.0 * g.spacing(), 1.0).unwrap();
    assert!((fit - rho).abs() < 0.02 * rho, "{fit}");
}

#[test]
fn exact_parabola_points() {
    let rho = 0.01;
    let pts: Vec<(f64, f64)> = (-40..=40)
        .map(|i| {
            let t = i as f64 * 5e-4;
            (0.3 - t * t / (2.0 * rho), 0.6 + t)
        })
        .collect();
    let fit = tip_radius(&pts, (0.3, 0.6), Direction::PlusX, 0.04, 1.0).unwrap();
    assert!((fit - rho).abs() < 1e-10, "{fit}");
    let pts: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (y, 1.3 - x)).collect();
    let fit = tip_radius(&pts, (0.6, 1.0), Direction::MinusY, 0.04, 1.0).unwrap();
    assert!((fit - rho).abs() < 1e-10, "{fit}");
    assert!(tip_radius(&pts[..5], (0.6, 1.0), Direction::MinusY, 0.04, 1.0).is_none());
}

#[test]
fn exact_circle_points() {
    let r = 0.2;
    let pts: Vec<(f64, f64)> =
        (0..4000).map(|i| 2.0 * PI * i as f64 / 4000.0).map(|a| (0.5 + r * a.cos(), 0.5 + r * a.sin())).collect();
    let mut prev = f64::INFINITY;
    for window in [0.2, 0.1, 0.05] {
        let fit = tip_radius(&pts, (0.7, 0.5), Direction::PlusX, window, 1.0).unwrap();
        let err = (fit - r).abs() / r;
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 0.01, "{prev}");
}

#[test]
fn erfc_values() {
    assert_eq!(erfc(0.0), 1.0);
    assert!((erfc(1.0) - 0.157_299_207_050_285_13).abs() < 1e-14);
    assert!((erfc(-1.0) - 1.842_700_792_949_714_9).abs() < 1e-14);
}

#[test]
fn ivantsov_reference_value() {
    let pe = ivantsov_peclet(-0.3).unwrap();
    assert!((pe - 4.48e-2).abs() < 0.01 * 4.48e-2, "{pe}");
    assert!((ivantsov_lhs(pe) - 0.3).abs() < 1e-12);
}

#[test]
fn ivantsov_scan() {
    let mut prev = 0.0;
    for i in 1..=50 {
        let kappa = -0.5 * i as f64 / 50.0;
        let pe = ivantsov_peclet(kappa).unwrap();
        assert!(pe > prev);
        assert!((ivantsov_lhs(pe) + kappa).abs() < 1e-12);
        prev = pe;
    }
    // Brute-force bracket for κ = −0.5 on a 1e-6 grid.
    let pe = ivantsov_peclet(-0.5).unwrap();
    let k = (1..2_000_000).find(|&k| ivantsov_lhs(k as f64 * 1e-6) >= 0.5).unwrap();
    assert!(pe > (k - 1) as f64 * 1e-6 && pe <= k as f64 * 1e-6);
    assert!(ivantsov_peclet(0.1).is_err());
    assert!(ivantsov_peclet(-1.0).is_err());
}

fn ac_record(seed_shift: f64) -> TrajectoryRecord {
    let p = AcParams::reference();
    let frames = (0..3)
        .map(|i| Frame {
            step: i,
            time: i as f64 * p.dt,
            phase: disk(64, (0.5, 0.5), 0.25 - 0.02 * i as f64 + seed_shift, p.eps),
            temperature: None,
        })
        .collect();
    TrajectoryRecord { physics: Physics::AllenCahn(p), frames }
}

#[test]
fn error_metrics_of_identical_trajectories() {
    let rec = ac_record(0.0);
    let rep = error_metrics(&rec, &rec).unwrap();
    assert_eq!(rep.rows.len(), 3);
    for r in &rep.rows {
        assert_eq!((r.rel_err_perimeter, r.rel_err_energy, r.rel_err_solid_fraction, r.max_abs_err_field), (0.0, 0.0, 0.0, 0.0));
    }
    assert_eq!(rep.mean_rel_err_perimeter(), 0.0);
}

#[test]
fn error_metrics_signs_and_mismatch() {
    let reference = ac_record(0.0);
    let pred = ac_record(0.01);
    let rep = error_metrics(&pred, &reference).unwrap();
    assert!(rep.rows.iter().all(|r| r.rel_err_perimeter > 0.0 && r.rel_err_solid_fraction > 0.0));
    let mut short = pred.clone();
    short.frames.pop();
    assert!(matches!(error_metrics(&short, &reference), Err(MetricsError::Mismatch(_))));
}

#[test]
fn frame_metrics_uses_scaled_perimeter() {
    let rec = ac_record(0.0);
    let p = AcParams::reference();
    let row = frame_metrics(&rec.frames[0], &rec.physics);
    assert_eq!(row.perimeter, perimeter_epsilon(&rec.frames[0].phase, p.eps));
    assert!(row.tip_x.is_none());
}

#[test]
fn csv_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let rec = ac_record(0.0);
    let rows: Vec<MetricsRow> = rec.frames.iter().map(|f| frame_metrics(f, &rec.physics)).collect();
    let path = dir.path().join("m.csv");
    write_metrics_csv(&path, &rows).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("step,time,energy,perimeter,solid_fraction,u_min,u_max,tip_x,tip_v,tip_rho,peclet"));
    assert_eq!(text.lines().count(), 4);
    let rep = error_metrics(&rec, &rec).unwrap();
    let path = dir.path().join("r.csv");
    rep.write_csv(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn translated_circle_length(cx in 0.0f64..1.0, cy in 0.0f64..1.0, r in 0.1f64..0.3) {
        let g = Grid2D::unit(128).unwrap();
        let f = Field2D::from_fn(g, |x, y| {
            let dx = (x - cx + 0.5).rem_euclid(1.0) - 0.5;
            let dy = (y - cy + 0.5).rem_euclid(1.0) - 0.5;
            r - dx.hypot(dy)
        });
        let want = 2.0 * PI * r;
        prop_assert!((zero_level_set(&f).length() - want).abs() < 0.01 * want);
    }

    #[test]
    fn ivantsov_lhs_is_increasing(a in 1e-4f64..10.0, b in 1e-4f64..10.0) {
        prop_assume!(a < b);
        prop_assert!(ivantsov_lhs(a) < ivantsov_lhs(b));
    }
}
