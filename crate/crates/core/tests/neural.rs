use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use pfno_core::dendrite::{grad_phi_e2, DendriteParams};
use pfno_core::neural::*;
use pfno_core::{Field2D, Grid2D};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(dims: [usize; 4], seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    Tensor4::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_vec(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn idx(dims: [usize; 4], b: usize, c: usize, r: usize, col: usize) -> usize {
    ((b * dims[1] + c) * dims[2] + r) * dims[3] + col
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Shifts every plane by `(dr, dc)` with wrap-around.
fn roll(x: &Tensor4, dr: usize, dc: usize) -> Tensor4 {
    let d = x.dims();
    let mut out = Tensor4::zeros(d);
    for b in 0..d[0] {
        for c in 0..d[1] {
            for r in 0..d[2] {
                for col in 0..d[3] {
                    out.data_mut()[idx(d, b, c, (r + dr) % d[2], (col + dc) % d[3])] = x.data()[idx(d, b, c, r, col)];
                }
            }
        }
    }
    out
}

#[test]
fn one_by_one_identity() {
    let x = random_tensor([2, 1, 8, 8], 1);
    let y = conv2d_periodic(&x, &[1.0], [1, 1, 1, 1], None, 1).unwrap();
    assert_eq!(x, y);
}

#[test]
fn all_ones_kernel_on_constants() {
    let c = 0.37;
    let x = Tensor4::from_vec([1, 2, 6, 6], vec![c; 72]).unwrap();
    let y = conv2d_periodic(&x, &[1.0; 18], [1, 2, 3, 3], None, 1).unwrap();
    assert!(y.data().iter().all(|&v| (v - 18.0 * c).abs() < 1e-14));
    let x = Tensor4::from_vec([1, 1, 6, 6], vec![c; 36]).unwrap();
    let y = conv2d_periodic(&x, &[1.0; 9], [1, 1, 3, 3], Some(&[0.5]), 1).unwrap();
    assert!(y.data().iter().all(|&v| (v - 9.0 * c - 0.5).abs() < 1e-14));
}

/// `y[o, r, c] = b[o] + Σ w[o, i, a, e] x[i, s·r + a − k/2, s·c + e − k/2]`.
fn naive_conv(x: &Tensor4, w: &[f64], wd: [usize; 4], bias: &[f64], stride: usize) -> Tensor4 {
    let [bn, ci, n, _] = x.dims();
    let [co, _, k, _] = wd;
    let m = n / stride;
    let od = [bn, co, m, m];
    let mut out = Tensor4::zeros(od);
    let p = (k / 2) as i64;
    for b in 0..bn {
        for o in 0..co {
            for r in 0..m {
                for c in 0..m {
                    let mut acc = bias[o];
                    for i in 0..ci {
                        for a in 0..k {
                            for e in 0..k {
                                let rr = ((stride * r) as i64 + a as i64 - p).rem_euclid(n as i64) as usize;
                                let cc = ((stride * c) as i64 + e as i64 - p).rem_euclid(n as i64) as usize;
                                acc += w[((o * ci + i) * k + a) * k + e] * x.data()[idx(x.dims(), b, i, rr, cc)];
                            }
                        }
                    }
                    out.data_mut()[idx(od, b, o, r, c)] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_matches_naive_loops() {
    for stride in [1, 2] {
        let x = random_tensor([2, 3, 8, 8], 2);
        let wd = [2, 3, 5, 5];
        let w = random_vec(150, 3);
        let b = [0.1, -0.2];
        let y = conv2d_periodic(&x, &w, wd, Some(&b), stride).unwrap();
        let want = naive_conv(&x, &w, wd, &b, stride);
        assert_eq!(y.dims(), want.dims());
        for (a, e) in y.data().iter().zip(want.data()) {
            assert!((a - e).abs() < 1e-13);
        }
    }
}

#[test]
fn conv_is_translation_equivariant() {
    let x = random_tensor([1, 2, 8, 8], 4);
    let w = random_vec(2 * 2 * 9, 5);
    let y = conv2d_periodic(&roll(&x, 3, 5), &w, [2, 2, 3, 3], None, 1).unwrap();
    let ry = roll(&conv2d_periodic(&x, &w, [2, 2, 3, 3], None, 1).unwrap(), 3, 5);
    for (a, b) in y.data().iter().zip(ry.data()) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn transposed_conv_is_the_adjoint() {
    let x = random_tensor([1, 3, 8, 8], 6);
    let y = random_tensor([1, 2, 4, 4], 7);
    let w = random_vec(2 * 3 * 9, 8);
    let cx = conv2d_periodic(&x, &w, [2, 3, 3, 3], None, 2).unwrap();
    let ty = conv_transpose2d_periodic(&y, &w, [2, 3, 3, 3], None, 2).unwrap();
    assert_eq!(ty.dims(), [1, 3, 8, 8]);
    let lhs = dot(cx.data(), y.data());
    let rhs = dot(x.data(), ty.data());
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn conv_backward_matches_adjoint_identity() {
    let x = random_tensor([2, 2, 8, 8], 9);
    let w = random_vec(3 * 2 * 9, 10);
    let g = random_tensor([2, 3, 8, 8], 11);
    let grads = conv2d_periodic_backward(&x, &w, [3, 2, 3, 3], 1, &g).unwrap();
    let y = conv2d_periodic(&x, &w, [3, 2, 3, 3], None, 1).unwrap();
    // Linear in x and in w: ⟨g, y⟩ = ⟨∂x, x⟩ = ⟨∂w, w⟩.
    let gy = dot(g.data(), y.data());
    assert!((gy - dot(grads.input.data(), x.data())).abs() < 1e-11);
    assert!((gy - dot(&grads.weight, &w)).abs() < 1e-11);
    let gsum: Vec<f64> = (0..3).map(|o| (0..2).map(|b| g.plane(b, o).iter().sum::<f64>()).sum()).collect();
    for o in 0..3 {
        assert!((grads.bias[o] - gsum[o]).abs() < 1e-12);
    }
}

#[test]
fn conv_rejects_bad_shapes() {
    let x = random_tensor([1, 2, 8, 8], 12);
    assert!(conv2d_periodic(&x, &[1.0; 9], [1, 1, 3, 3], None, 1).is_err());
    assert!(conv2d_periodic(&x, &[1.0; 8], [1, 2, 2, 2], None, 1).is_err());
    assert!(conv2d_periodic(&random_tensor([1, 1, 7, 7], 0), &[1.0; 9], [1, 1, 3, 3], None, 2).is_err());
}

fn spectral_identity(ch: usize, modes: usize) -> (Vec<f64>, Vec<f64>) {
    let len = ch * ch * 2 * modes * modes;
    let mut re = vec![0.0; len];
    for i in 0..ch {
        for corner in 0..2 {
            for ky in 0..modes {
                for kx in 0..modes {
                    re[(((i * ch + i) * 2 + corner) * modes + ky) * modes + kx] = 1.0;
                }
            }
        }
    }
    (re, vec![0.0; len])
}

fn plane_tensor(n: usize, f: impl Fn(f64, f64) -> f64) -> Tensor4 {
    let g = Grid2D::unit(n).unwrap();
    Tensor4::from_fields(&[&Field2D::from_fn(g, f)]).unwrap()
}

#[test]
fn spectral_identity_on_band_limited_input() {
    let x = plane_tensor(16, |x, y| (2.0 * PI * x).sin() + 0.5 * (2.0 * PI * (2.0 * x - 3.0 * y)).cos() + 0.2);
    let (re, im) = spectral_identity(1, 4);
    let y = spectral_conv(&x, &re, &im, 1, 1, 4).unwrap();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-13);
    }
}

#[test]
fn spectral_truncates_high_modes() {
    let x = plane_tensor(16, |x, y| (2.0 * PI * 6.0 * x).sin() * (2.0 * PI * 5.0 * y).cos());
    let (re, im) = spectral_identity(1, 4);
    let y = spectral_conv(&x, &re, &im, 1, 1, 4).unwrap();
    assert!(y.data().iter().all(|v| v.abs() < 1e-13));
}

#[test]
fn spectral_matches_dense_dft() {
    let n = 8;
    let m = 3;
    let x = random_tensor([1, 1, n, n], 13);
    let re = random_vec(2 * m * m, 14);
    let im = random_vec(2 * m * m, 15);
    let y = spectral_conv(&x, &re, &im, 1, 1, m).unwrap();
    let v = x.data();
    let hat = |ky: usize, kx: usize| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                acc += v[r * n + c] * Complex64::from_polar(1.0, -2.0 * PI * ((ky * r + kx * c) as f64) / n as f64);
            }
        }
        acc
    };
    let mut modes = Vec::new();
    for (corner, rows) in [(0, 0..m), (1, n - m..n)] {
        for ky in rows {
            for kx in 0..m {
                let j = (corner * m + (ky - if corner == 0 { 0 } else { n - m })) * m + kx;
                let weight = Complex64::new(re[j], im[j]);
                modes.push((ky, kx, weight * hat(ky, kx)));
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for &(ky, kx, z) in &modes {
                let mult = if kx == 0 { 1.0 } else { 2.0 };
                acc += mult * (z * Complex64::from_polar(1.0, 2.0 * PI * ((ky * r + kx * c) as f64) / n as f64)).re;
            }
            let want = acc / (n * n) as f64;
            assert!((y.data()[r * n + c] - want).abs() < 1e-13, "({r},{c}) {} vs {want}", y.data()[r * n + c]);
        }
    }
}

#[test]
fn spectral_backward_is_the_adjoint() {
    let x = random_tensor([2, 2, 8, 8], 16);
    let re = random_vec(2 * 3 * 2 * 9, 17);
    let im = random_vec(2 * 3 * 2 * 9, 18);
    let g = random_tensor([2, 3, 8, 8], 19);
    let y = spectral_conv(&x, &re, &im, 2, 3, 3).unwrap();
    let grads = spectral_conv_backward(&x, &re, &im, 2, 3, 3, &g).unwrap();
    let gy = dot(g.data(), y.data());
    assert!((gy - dot(grads.input.data(), x.data())).abs() < 1e-11);
    assert!((gy - dot(&grads.re, &re) - dot(&grads.im, &im)).abs() < 1e-11);
}

#[test]
fn activation_values() {
    let x = Tensor4::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 1.0]).unwrap();
    let gelu = activation_forward(&x, Activation::Gelu);
    assert!((gelu.data()[2] - 0.841_344_746_068_542_9).abs() < 1e-15);
    assert!((gelu.data()[0] + 0.158_655_253_931_457_05).abs() < 1e-15);
    assert_eq!(activation_forward(&x, Activation::Relu).data(), &[0.0, 0.0, 1.0]);
    assert_eq!(activation_forward(&x, Activation::Identity).data(), x.data());
    let t = activation_forward(&x, Activation::Tanh);
    assert_eq!(t.data()[2], 1f64.tanh());
    let ones = Tensor4::from_vec([1, 1, 1, 3], vec![1.0; 3]).unwrap();
    let d = activation_backward(&x, Activation::Tanh, &ones);
    assert!((d.data()[2] - (1.0 - 1f64.tanh().powi(2))).abs() < 1e-15);
}

fn set(w: &mut ModelWeights, name: &str, f: impl Fn(usize) -> f64) {
    let t = w.get_mut(name).unwrap();
    for (i, v) in t.data.iter_mut().enumerate() {
        *v = f(i);
    }
}

fn zeroed(spec: &ArchitectureSpec) -> ModelWeights {
    let mut w = init_weights(spec, &mut ChaCha8Rng::seed_from_u64(0));
    for (_, t) in w.iter_mut() {
        t.data.iter_mut().for_each(|v| *v = 0.0);
    }
    w
}

#[test]
fn rdno_zero_and_identity() {
    let spec = ArchitectureSpec::rdno_allen_cahn();
    let x = random_tensor([1, 1, 16, 16], 20);
    let mut w = zeroed(&spec);
    let y = forward_rdno(&x, &w, &spec).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    set(&mut w, "lift.w", |i| if i == 0 { 1.0 } else { 0.0 });
    set(&mut w, "project.w", |i| if i == 0 { 1.0 } else { 0.0 });
    set(&mut w, "diffusion.w", |i| if i == 17 * 8 + 8 { 1.0 } else { 0.0 });
    let y = forward_rdno(&x, &w, &spec).unwrap();
    for (a, b) in y.data().iter().zip(x.data()) {
        assert!((a - b).abs() < 1e-15);
    }
}

fn dendrite_params() -> DendriteParams {
    DendriteParams::reference(0.05)
}

#[test]
fn prescribed_reaction_matches_gradient() {
    let p = dendrite_params();
    let g = Grid2D::new(16, 0.04).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let phi = Field2D::from_values(g, (0..256).map(|_| rng.random_range(-1.1..1.1)).collect()).unwrap();
    let u = Field2D::from_values(g, (0..256).map(|_| rng.random_range(-0.3..0.0)).collect()).unwrap();
    let out = prescribed_reaction(&Tensor4::from_fields(&[&phi]).unwrap(), &Tensor4::from_fields(&[&u]).unwrap(), &p)
        .unwrap();
    let want = phi.sub(&grad_phi_e2(&phi, &u, &p).scale(p.dt / p.tau));
    for (a, b) in out.data().iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn unet_with_zero_weights_outputs_the_bias() {
    let spec = ArchitectureSpec::Unet(UnetSpec::allen_cahn());
    let mut w = zeroed(&spec);
    set(&mut w, "project.b", |_| 0.3);
    let y = forward_unet(&random_tensor([2, 1, 32, 32], 22), &w, &spec).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.3));
}

#[test]
fn unet_shapes() {
    let spec = ArchitectureSpec::Unet(UnetSpec::allen_cahn());
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(1));
    let y = forward_unet(&random_tensor([1, 1, 64, 64], 23), &w, &spec).unwrap();
    assert_eq!(y.dims(), [1, 1, 64, 64]);
    assert!(spec.check_grid(16).is_ok());
    assert!(spec.check_grid(40).is_err());
    assert!(forward_unet(&random_tensor([1, 1, 24, 24], 23), &w, &spec).is_err());
    assert_eq!(w.get("down3.1.w").unwrap().shape, vec![32, 32, 3, 3]);
    assert_eq!(w.get("up0.unpool.w").unwrap().shape, vec![4, 2, 3, 3]);
}

#[test]
fn fno_resolution_invariance() {
    let f = |x: f64, y: f64| 0.3 * (2.0 * PI * x).sin() + 0.2 * (2.0 * PI * (x + 2.0 * y)).cos();
    for (act, tol) in [(Activation::Identity, 1e-12), (Activation::Gelu, 1e-6)] {
        let spec = ArchitectureSpec::Fno { layers: 2, modes: 4, width: 4, act };
        let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(2));
        let coarse = forward_fno(&plane_tensor(64, f), &w, &spec).unwrap();
        let fine = forward_fno(&plane_tensor(128, f), &w, &spec).unwrap();
        for r in 0..64 {
            for c in 0..64 {
                let d = (coarse.data()[r * 64 + c] - fine.data()[2 * r * 128 + 2 * c]).abs();
                assert!(d < tol, "{act}: {d}");
            }
        }
    }
}

#[test]
fn fno_with_zero_weights_outputs_the_bias() {
    let spec = ArchitectureSpec::fno_allen_cahn();
    let mut w = zeroed(&spec);
    set(&mut w, "project.b", |_| -0.4);
    let y = forward_fno(&random_tensor([1, 1, 64, 64], 24), &w, &spec).unwrap();
    assert!(y.data().iter().all(|&v| v == -0.4));
}

#[test]
fn forward_is_deterministic() {
    let spec = ArchitectureSpec::Unet(UnetSpec::allen_cahn());
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(8));
    let x = random_tensor([1, 1, 32, 32], 25);
    let a = forward_unet(&x, &w, &spec).unwrap();
    let b = forward_unet(&x, &w, &spec).unwrap();
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn fno_rejects_too_many_modes() {
    let spec = ArchitectureSpec::fno_allen_cahn();
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(forward_fno(&random_tensor([1, 1, 32, 32], 0), &w, &spec).is_err());
}

fn small_specs() -> Vec<ArchitectureSpec> {
    let unet = UnetSpec { levels: 2, hidden: 2, multiplier: 2, kernel: 3, act: Activation::Tanh };
    vec![
        ArchitectureSpec::Rdno { width: 3, depth: 2, kernel: 3, diffusion: 5, act: Activation::Tanh },
        ArchitectureSpec::Unet(unet),
        ArchitectureSpec::Fno { layers: 2, modes: 2, width: 3, act: Activation::Gelu },
        ArchitectureSpec::PrescribedRdno { unet, params: dendrite_params() },
    ]
}

#[test]
fn gradients_match_finite_differences() {
    for spec in small_specs() {
        let model = Model::new(spec.clone()).unwrap();
        let mut w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(3));
        // Non-zero biases so their paths are exercised.
        for (name, t) in w.iter_mut() {
            if name.ends_with(".b") {
                t.data.iter_mut().enumerate().for_each(|(i, v)| *v = 0.05 * (i as f64 + 1.0));
            }
        }
        let inputs: Vec<Tensor4> = (0..spec.input_count()).map(|i| random_tensor([2, 1, 8, 8], 30 + i as u64)).collect();
        let inputs = if let ArchitectureSpec::PrescribedRdno { .. } = spec {
            vec![inputs[0].clone(), Tensor4::from_vec([2, 1, 8, 8], inputs[1].data().iter().map(|v| 0.1 * v - 0.2).collect()).unwrap()]
        } else {
            inputs
        };
        let rep = grad_check(&model, &w, &inputs, 4, 6).unwrap();
        assert!(rep.checked > 0);
        assert!(rep.max_rel_error() < 1e-5, "{}: {rep:?}", spec.kind());
    }
}

#[test]
fn linear_model_gradients_are_exact() {
    let spec = ArchitectureSpec::Rdno { width: 2, depth: 1, kernel: 3, diffusion: 3, act: Activation::Identity };
    let model = Model::new(spec.clone()).unwrap();
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(5));
    // Small inputs keep the probe, and with it the difference roundoff, small.
    let x = random_tensor([1, 1, 8, 8], 6);
    let x = Tensor4::from_vec(x.dims(), x.data().iter().map(|v| 1e-2 * v).collect()).unwrap();
    let rep = grad_check(&model, &w, &[x], 7, 100).unwrap();
    assert!(rep.max_rel_error() < 1e-9, "{rep:?}");
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(1.0, 1.0, 1.0), 0.0);
    assert!((relative_error(1.0, 2.0, 1.0) - 0.5).abs() < 1e-15);
    assert!((relative_error(0.0, 1e-9, 1.0) - 1e-6).abs() < 1e-18);
    assert_eq!(relative_error(0.0, 0.0, 0.0), 0.0);
}

#[test]
fn parameter_counts() {
    let conv = |co: usize, ci: usize, k: usize| co * ci * k * k + co;
    let unet = |u: &UnetSpec| {
        let k = u.kernel;
        let mut total = conv(u.hidden, 1, k) + conv(u.hidden, u.hidden, k) + conv(1, u.hidden, 1);
        for i in 0..u.levels {
            let c = u.hidden * u.multiplier.pow(i as u32);
            let c2 = c * u.multiplier;
            total += conv(c, c, k) + conv(c2, c, k) + conv(c2, c2, k);
            total += c2 * c * k * k + c + conv(c, 2 * c, k) + conv(c, c, k);
        }
        total
    };
    assert_eq!(ArchitectureSpec::Unet(UnetSpec::allen_cahn()).parameter_count(), 37021);
    assert_eq!(unet(&UnetSpec::allen_cahn()), 37021);
    let d = ArchitectureSpec::PrescribedRdno { unet: UnetSpec::dendrite(), params: dendrite_params() };
    assert_eq!(d.parameter_count(), unet(&UnetSpec::dendrite()));
    let rdno = conv(10, 1, 1) + 2 * conv(10, 10, 3) + conv(1, 10, 1) + conv(1, 1, 17);
    assert_eq!(ArchitectureSpec::rdno_allen_cahn().parameter_count(), rdno);
    assert_eq!(rdno, 2141);
    let fno = conv(16, 1, 1) + 4 * (2 * 16 * 16 * 2 * 20 * 20 + conv(16, 16, 1)) + conv(1, 16, 1);
    assert_eq!(ArchitectureSpec::fno_allen_cahn().parameter_count(), fno);
    assert_eq!(fno, 1_639_537);
}

#[test]
fn spec_text_round_trip() {
    let mut specs = small_specs();
    specs.push(ArchitectureSpec::rdno_allen_cahn());
    specs.push(ArchitectureSpec::fno_allen_cahn());
    for s in specs {
        let text = s.to_text();
        let back = ArchitectureSpec::parse(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(), text);
        assert_eq!(back.digest(), s.digest());
    }
    assert_eq!(
        ArchitectureSpec::rdno_allen_cahn().to_text(),
        "rdno width=10 depth=2 kernel=3 diffusion=17 act=tanh"
    );
    assert!(ArchitectureSpec::parse("rdno width=10").is_err());
    assert!(ArchitectureSpec::parse("mlp width=3").is_err());
    assert!(ArchitectureSpec::parse("rdno width=10 depth=2 kernel=4 diffusion=17 act=tanh").is_err());
}

#[test]
fn weights_validation() {
    let spec = ArchitectureSpec::rdno_allen_cahn();
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(w.check(&spec).is_ok());
    assert!(w.check(&ArchitectureSpec::fno_allen_cahn()).is_err());
    let mut tensors: BTreeMap<String, ParamTensor> = w.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
    tensors.get_mut("lift.w").unwrap().data[0] = f64::NAN;
    assert!(ModelWeights::new(&spec, tensors).is_err());
    let bound = (1.0f64 / 90.0).sqrt();
    assert!(w.get("reaction0.w").unwrap().data.iter().all(|v| v.abs() <= bound));
    assert!(w.get("reaction0.b").unwrap().data.iter().all(|&v| v == 0.0));
    let other = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(0));
    assert_eq!(w, other);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for spec in small_specs() {
        let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(9));
        let path = dir.path().join(format!("{}.ckpt", spec.kind()));
        write_checkpoint(&path, &w).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.spec_text(), w.spec_text());
        for ((na, a), (nb, b)) in w.iter().zip(back.iter()) {
            assert_eq!(na, nb);
            assert_eq!(a.shape, b.shape);
            assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let meta = std::fs::read_to_string(format!("{}.meta", path.display())).unwrap();
        assert!(meta.contains(&format!("arch={}", spec.to_text())));
    }
}

#[test]
fn checkpoint_corruption_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ArchitectureSpec::rdno_allen_cahn();
    let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(9));
    let path = dir.path().join("w.ckpt");
    write_checkpoint(&path, &w).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let len = bytes.len();
    bytes[len - 1] ^= 0xff;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(read_checkpoint(&path), Err(NeuralError::Format(_))));
    std::fs::write(&path, b"nonsense").unwrap();
    assert!(read_checkpoint(&path).is_err());
    assert!(read_checkpoint(dir.path().join("missing")).is_err());
}

#[test]
fn model_rejects_foreign_weights() {
    let spec = ArchitectureSpec::rdno_allen_cahn();
    let other = ArchitectureSpec::Rdno { width: 10, depth: 2, kernel: 3, diffusion: 17, act: Activation::Relu };
    let w = init_weights(&other, &mut ChaCha8Rng::seed_from_u64(0));
    let model = Model::new(spec).unwrap();
    assert!(matches!(model.forward(&w, &[random_tensor([1, 1, 8, 8], 0)]), Err(NeuralError::WeightMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rdno_is_translation_equivariant(seed in any::<u64>(), dr in 0usize..16, dc in 0usize..16) {
        let spec = ArchitectureSpec::rdno_allen_cahn();
        let w = init_weights(&spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let x = random_tensor([1, 1, 16, 16], seed ^ 7);
        let a = forward_rdno(&roll(&x, dr, dc), &w, &spec).unwrap();
        let b = roll(&forward_rdno(&x, &w, &spec).unwrap(), dr, dc);
        for (p, q) in a.data().iter().zip(b.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_layer_is_linear(seed in any::<u64>(), s in -3.0f64..3.0) {
        let x = random_tensor([1, 2, 8, 8], seed);
        let z = random_tensor([1, 2, 8, 8], seed ^ 1);
        let re = random_vec(2 * 2 * 2 * 4, seed ^ 2);
        let im = random_vec(2 * 2 * 2 * 4, seed ^ 3);
        let combo = Tensor4::from_vec(x.dims(), x.data().iter().zip(z.data()).map(|(a, b)| a + s * b).collect()).unwrap();
        let y = spectral_conv(&combo, &re, &im, 2, 2, 2).unwrap();
        let yx = spectral_conv(&x, &re, &im, 2, 2, 2).unwrap();
        let yz = spectral_conv(&z, &re, &im, 2, 2, 2).unwrap();
        for i in 0..y.data().len() {
            prop_assert!((y.data()[i] - yx.data()[i] - s * yz.data()[i]).abs() < 1e-12);
        }
    }
}
