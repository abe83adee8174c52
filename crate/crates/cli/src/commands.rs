//! Subcommand implementations. Each one resolves and validates everything it
//! reads before the output directory is created.

use std::path::{Path, PathBuf};

use log::{info, warn};
use pfno_core::allen_cahn::{ac_split_step, ic_perturbed_disk, AcParams, PerturbedDiskSpec};
use pfno_core::dendrite::{ic_dendrite, sav_step, DendriteError, DendriteParams, SavState};
use pfno_core::metrics::{
    error_metrics, frame_metrics, ivantsov_peclet, tip_track, write_metrics_csv, Direction, Frame, MetricsRow, Physics,
    TrajectoryRecord,
};
use pfno_core::neural::{
    activation_backward, activation_forward, conv2d_periodic, conv2d_periodic_backward, conv_transpose2d_periodic,
    conv_transpose2d_periodic_backward, grad_check, init_weights, read_checkpoint, spectral_conv,
    spectral_conv_backward, write_checkpoint, Activation, ArchitectureSpec, Model, ModelWeights, NeuralError, Tensor4,
    UnetSpec,
};
use pfno_core::training::{
    gen_ac_dataset, gen_dendrite_dataset, loss_data, loss_data_grad, loss_deepritz_ac, loss_deepritz_ac_grad,
    loss_deepritz_dendrite, loss_deepritz_dendrite_grad, loss_scheme_residual, loss_scheme_residual_grad,
    reference_ac, reference_dendrite, rollout_ac, rollout_dendrite, sample_ac_ic, sample_grain_centers, train,
    write_history_csv, AcDatasetSpec, Dataset, DendriteDatasetSpec, TrainError,
};
use pfno_core::{Field2D, Grid2D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ModelKind, RunConfig};
use crate::output::{file_digest, write_frame, write_trajectory, OutDir};
use crate::{plot, CliError, Invocation};

/// Gradient-check tolerance.
pub const GRADCHECK_TOL: f64 = 1e-5;

pub fn dispatch(inv: &Invocation) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(&inv.raw, inv.forced)?;
    match inv.name {
        "simulate-ac" => simulate_ac(inv, &cfg),
        "simulate-dendrite" => simulate_dendrite(inv, &cfg),
        "gen-data" => gen_data(inv, &cfg),
        "train" => train_cmd(inv, &cfg),
        "rollout" => rollout_cmd(inv, &cfg),
        "evaluate" => evaluate(inv, &cfg),
        "ivantsov" => ivantsov(inv, &cfg),
        "gradcheck" => gradcheck(inv, &cfg),
        other => Err(CliError::Usage(format!("unknown subcommand {other}"))),
    }
}

fn required_out(inv: &Invocation) -> Result<&Path, CliError> {
    inv.common.out.as_deref().ok_or_else(|| CliError::Usage(format!("{} requires --out DIR", inv.name)))
}

/// Writes the manifest whatever `result` is, then passes `result` on.
fn finish(
    inv: &Invocation,
    cfg: &RunConfig,
    out: &OutDir,
    inputs: &[(String, String)],
    result: Result<(), CliError>,
) -> Result<(), CliError> {
    out.write_manifest(inv.name, &cfg.entries(), inputs)?;
    info!("outputs written to {}", out.root().display());
    result
}

fn grid(cfg: &RunConfig) -> Result<Grid2D, CliError> {
    Ok(Grid2D::new(cfg.n, cfg.length)?)
}

fn ac_initial_condition(cfg: &RunConfig, grid: Grid2D) -> Result<Field2D, CliError> {
    match cfg.ic.family() {
        None => Ok(ic_perturbed_disk(grid, &PerturbedDiskSpec::disk(cfg.radius), cfg.ac.eps)?),
        Some(family) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(sample_ac_ic(&mut rng, grid, &family, cfg.ac.eps)?)
        }
    }
}

/// A single grain sits at the centre; more grains are placed at random.
fn grain_centers(cfg: &RunConfig, grid: Grid2D, p: &DendriteParams) -> Vec<(f64, f64)> {
    if cfg.grains == 1 {
        let c = 0.5 * grid.length();
        vec![(c, c)]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        sample_grain_centers(&mut rng, grid, cfg.grains, p)
    }
}

fn keep(step: usize, steps: usize, stride: usize) -> bool {
    step % stride == 0 || step == steps
}

fn plot_frames(out: &OutDir, prefix: &str, frames: &[Frame], rows: &[MetricsRow]) -> Result<(), CliError> {
    let dir = out.dir("plots")?;
    for f in frames {
        plot::field_png(&f.phase, &dir.join(format!("{prefix}phase_{:07}.png", f.step)))?;
        if let Some(u) = &f.temperature {
            plot::field_png(u, &dir.join(format!("{prefix}temperature_{:07}.png", f.step)))?;
        }
    }
    let energy: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    plot::curve_png(&energy, &dir.join(format!("{prefix}energy.png")))
}

fn simulate_ac(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let grid = grid(cfg)?;
    let p = cfg.ac;
    p.validate(&grid)?;
    let ic = ac_initial_condition(cfg, grid)?;

    let out = OutDir::create(out_path)?;
    let snaps = out.dir("snapshots")?;
    let physics = Physics::AllenCahn(p);
    let record = TrajectoryRecord { physics, frames: Vec::new() };
    let mut frame = Frame { step: 0, time: 0.0, phase: ic, temperature: None };
    let mut rows = vec![frame_metrics(&frame, &physics)];
    let mut kept = vec![frame.clone()];
    write_frame(&snaps, &frame, &record)?;
    let mut result = Ok(());
    for step in 1..=cfg.steps {
        let next = ac_split_step(&frame.phase, &p)?;
        if !next.is_finite() {
            result = Err(CliError::Numerical(format!("non-finite field at step {step}")));
            break;
        }
        frame = Frame { step, time: step as f64 * p.dt, phase: next, temperature: None };
        rows.push(frame_metrics(&frame, &physics));
        if keep(step, cfg.steps, cfg.stride) {
            write_frame(&snaps, &frame, &record)?;
            kept.push(frame.clone());
        }
    }
    write_metrics_csv(out.file("metrics.csv"), &rows)?;
    if cfg.plots {
        plot_frames(&out, "", &kept, &rows)?;
    }
    finish(inv, cfg, &out, &[], result)
}

/// Fills the tip columns of the rows belonging to `frames`.
fn add_tip_metrics(rows: &mut [MetricsRow], frames: &[Frame], center: (f64, f64), p: &DendriteParams) {
    let fields: Vec<(f64, &Field2D)> = frames.iter().map(|f| (f.time, &f.phase)).collect();
    match tip_track(&fields, center, Direction::PlusX, Some(p.d)) {
        Ok(tips) => {
            for (f, t) in frames.iter().zip(tips) {
                if let Some(r) = rows.iter_mut().find(|r| r.step == f.step) {
                    r.tip_x = Some(t.position.0);
                    r.tip_v = Some(t.velocity);
                    r.tip_rho = t.rho;
                    r.peclet = t.peclet;
                }
            }
        }
        Err(e) => warn!("tip tracking skipped: {e}"),
    }
}

fn simulate_dendrite(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let grid = grid(cfg)?;
    let p = cfg.dendrite;
    p.validate()?;
    let centers = grain_centers(cfg, grid, &p);
    let (phi, u) = ic_dendrite(grid, &centers, &p)?;
    let mut state = SavState::new(phi, u, &p)?;

    let out = OutDir::create(out_path)?;
    let snaps = out.dir("snapshots")?;
    let physics = Physics::Dendrite(p);
    let record = TrajectoryRecord { physics, frames: Vec::new() };
    let frame_of = |step: usize, s: &SavState| Frame {
        step,
        time: step as f64 * p.dt,
        phase: s.phi.clone(),
        temperature: Some(s.u.clone()),
    };
    let first = frame_of(0, &state);
    let mut rows = vec![frame_metrics(&first, &physics)];
    write_frame(&snaps, &first, &record)?;
    let mut kept = vec![first];
    let mut sav = String::from("step,time,q,energy,energy_pred,xi,eta,zeta\n");
    let mut result = Ok(());
    for step in 1..=cfg.steps {
        let (next, d) = match sav_step(&state, &p) {
            Ok(v) => v,
            Err(e) => {
                result = Err(CliError::Dendrite(e));
                break;
            }
        };
        if !(next.phi.is_finite() && next.u.is_finite()) {
            result = Err(CliError::Dendrite(DendriteError::NonFinite));
            break;
        }
        state = next;
        let time = step as f64 * p.dt;
        sav.push_str(&format!(
            "{step},{time:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            state.q, d.energy, d.energy_pred, d.xi, d.eta, d.zeta
        ));
        let frame = frame_of(step, &state);
        rows.push(frame_metrics(&frame, &physics));
        if keep(step, cfg.steps, cfg.stride) {
            write_frame(&snaps, &frame, &record)?;
            kept.push(frame);
        }
        if step % 100 == 0 {
            info!("step {step}: q = {:e}, energy = {:e}", state.q, d.energy);
        }
    }
    std::fs::write(out.file("sav.csv"), sav)?;
    add_tip_metrics(&mut rows, &kept, centers[0], &p);
    write_metrics_csv(out.file("metrics.csv"), &rows)?;
    if cfg.plots {
        plot_frames(&out, "", &kept, &rows)?;
    }
    finish(inv, cfg, &out, &[], result)
}

fn gen_data(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let grid = grid(cfg)?;
    let ds = match cfg.model {
        ModelKind::Ac => {
            let family = cfg
                .data
                .family
                .family()
                .ok_or_else(|| CliError::Config(format!("data.family = {} is not a random family", cfg.data.family)))?;
            gen_ac_dataset(&AcDatasetSpec {
                count: cfg.data.count,
                seed: cfg.seed,
                grid,
                family,
                params: cfg.ac,
                targets: cfg.data.targets,
            })?
        }
        ModelKind::Dendrite => gen_dendrite_dataset(
            &DendriteDatasetSpec {
                grid,
                grain_counts: cfg.data.grain_counts.0.clone(),
                arrangements: cfg.data.arrangements,
                states: cfg.data.states,
                stride: cfg.data.stride,
                seed: cfg.seed,
                targets: cfg.data.targets,
            },
            &cfg.dendrite,
        )?,
    };
    let out = OutDir::create(out_path)?;
    ds.write_dir(out.file("dataset"))?;
    println!("{} samples, digest {}", ds.samples.len(), ds.digest());
    finish(inv, cfg, &out, &[], Ok(()))
}

/// Named architectures use the standard configurations; anything else is
/// parsed as architecture text.
pub fn resolve_arch(name: &str, physics: &Physics) -> Result<ArchitectureSpec, CliError> {
    let spec = match (name, physics) {
        ("rdno", _) => ArchitectureSpec::rdno_allen_cahn(),
        ("unet", _) => ArchitectureSpec::Unet(UnetSpec::allen_cahn()),
        ("fno", _) => ArchitectureSpec::fno_allen_cahn(),
        ("prescribed_rdno", Physics::Dendrite(p)) => {
            ArchitectureSpec::PrescribedRdno { unet: UnetSpec::dendrite(), params: *p }
        }
        ("prescribed_rdno", Physics::AllenCahn(_)) => {
            return Err(CliError::Config("prescribed_rdno needs a dendrite dataset".into()))
        }
        (text, _) => ArchitectureSpec::parse(text)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn check_arch_physics(spec: &ArchitectureSpec, physics: &Physics) -> Result<(), CliError> {
    let dendrite = matches!(physics, Physics::Dendrite(_));
    if dendrite != (spec.input_count() == 2) {
        return Err(CliError::Config(format!("architecture {} does not match the {} model", spec.kind(), if dendrite { "dendrite" } else { "ac" })));
    }
    if let (ArchitectureSpec::PrescribedRdno { params, .. }, Physics::Dendrite(p)) = (spec, physics) {
        if params != p {
            return Err(CliError::Config("architecture parameters differ from the dataset's".into()));
        }
    }
    Ok(())
}

fn read_dataset(path: &Option<PathBuf>) -> Result<Dataset, CliError> {
    let path = path.as_ref().ok_or_else(|| CliError::Config("a dataset is required (--dataset DIR)".into()))?;
    if !path.is_dir() {
        return Err(CliError::Config(format!("dataset directory {} does not exist", path.display())));
    }
    Ok(Dataset::read_dir(path)?)
}

fn read_weights(path: &Path) -> Result<ModelWeights, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(read_checkpoint(path)?)
}

fn train_cmd(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let ds = read_dataset(&cfg.paths.dataset)?;
    // Model-dependent defaults follow the dataset.
    let model = match ds.physics {
        Physics::AllenCahn(_) => ModelKind::Ac,
        Physics::Dendrite(_) => ModelKind::Dendrite,
    };
    let resolved;
    let cfg = if model == cfg.model {
        cfg
    } else if inv.raw.contains("model") {
        return Err(CliError::Config(format!("model = {} but the dataset holds {model} samples", cfg.model)));
    } else {
        resolved = RunConfig::resolve(&inv.raw, Some(model))?;
        &resolved
    };
    let mut inputs = vec![("dataset".to_string(), ds.digest())];
    let (spec, init) = match &cfg.paths.ckpt {
        Some(path) => {
            let w = read_weights(path)?;
            inputs.push(("ckpt".to_string(), file_digest(path)?));
            let spec = w.spec()?;
            if inv.raw.contains("train.arch") && resolve_arch(&cfg.arch, &ds.physics)? != spec {
                return Err(CliError::Config("train.arch differs from the warm-start checkpoint".into()));
            }
            (spec, Some(w))
        }
        None => (resolve_arch(&cfg.arch, &ds.physics)?, None),
    };
    check_arch_physics(&spec, &ds.physics)?;
    if let Some(g) = ds.grid() {
        spec.check_grid(g.n())?;
    }
    cfg.train.validate()?;
    info!("training {} ({} parameters) on {} samples", spec.kind(), spec.parameter_count(), ds.samples.len());

    let outcome = train(&spec, init, &ds, &cfg.train);
    let mut echo = cfg.clone();
    echo.arch = spec.to_text();
    match outcome {
        Ok(o) => {
            let out = OutDir::create(out_path)?;
            write_checkpoint(out.file("model.ckpt"), &o.weights)?;
            write_history_csv(out.file("history.csv"), &o.history)?;
            if cfg.plots {
                let loss: Vec<f64> = o.history.iter().map(|h| h.train_loss).collect();
                plot::curve_png(&loss, &out.dir("plots")?.join("loss.png"))?;
            }
            let last = o.history.last().map(|h| h.train_loss).unwrap_or(f64::NAN);
            println!("{} epochs, final loss {last:e}{}", o.history.len(), if o.stopped_early { " (early stop)" } else { "" });
            finish(inv, &echo, &out, &inputs, Ok(()))
        }
        Err(TrainError::NonFiniteLoss { epoch, weights }) => {
            let out = OutDir::create(out_path)?;
            write_checkpoint(out.file("diagnostic.ckpt"), &weights)?;
            finish(inv, &echo, &out, &inputs, Err(CliError::Numerical(format!("non-finite loss at epoch {epoch}"))))
        }
        Err(e) => Err(e.into()),
    }
}

fn rows_of(record: &TrajectoryRecord) -> Vec<MetricsRow> {
    record.frames.iter().map(|f| frame_metrics(f, &record.physics)).collect()
}

fn rollout_cmd(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let ckpt = cfg.paths.ckpt.as_ref().ok_or_else(|| CliError::Config("rollout requires --ckpt PATH".into()))?;
    let w = read_weights(ckpt)?;
    let inputs = vec![("ckpt".to_string(), file_digest(ckpt)?)];
    let spec = w.spec()?;
    spec.check_grid(cfg.n)?;
    let model = Model::new(spec.clone())?;
    let grid = grid(cfg)?;
    let (pred, reference, center) = match &spec {
        ArchitectureSpec::PrescribedRdno { params, .. } => {
            params.validate()?;
            let centers = grain_centers(cfg, grid, params);
            let (phi, u) = ic_dendrite(grid, &centers, params)?;
            let pred = rollout_dendrite(&model, &w, &phi, &u, cfg.steps, cfg.stride, params)?;
            let reference = reference_dendrite(&phi, &u, cfg.steps, cfg.stride, params)?;
            (pred, reference, Some((centers[0], *params)))
        }
        _ => {
            cfg.ac.validate(&grid)?;
            let ic = ac_initial_condition(cfg, grid)?;
            let pred = rollout_ac(&model, &w, &ic, cfg.steps, cfg.stride, &cfg.ac)?;
            let reference = reference_ac(&ic, cfg.steps, cfg.stride, &cfg.ac)?;
            (pred, reference, None)
        }
    };

    let out = OutDir::create(out_path)?;
    write_trajectory(&out.file("prediction"), &pred.record)?;
    write_trajectory(&out.file("reference"), &reference)?;
    let mut pred_rows = rows_of(&pred.record);
    let mut ref_rows = rows_of(&reference);
    if let Some((c, p)) = center {
        add_tip_metrics(&mut pred_rows, &pred.record.frames, c, &p);
        add_tip_metrics(&mut ref_rows, &reference.frames, c, &p);
    }
    write_metrics_csv(out.file("metrics.csv"), &pred_rows)?;
    write_metrics_csv(out.file("reference_metrics.csv"), &ref_rows)?;
    if cfg.plots {
        plot_frames(&out, "pred_", &pred.record.frames, &pred_rows)?;
        plot_frames(&out, "ref_", &reference.frames, &ref_rows)?;
    }
    let result = match pred.blow_up_step {
        Some(step) => Err(CliError::Numerical(format!("rollout blew up at step {step}"))),
        None => {
            let report = error_metrics(&pred.record, &reference)?;
            report.write_csv(out.file("report.csv"))?;
            println!("mean relative perimeter error {:e}", report.mean_rel_err_perimeter());
            Ok(())
        }
    };
    finish(inv, cfg, &out, &inputs, result)
}

fn evaluate(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = required_out(inv)?;
    let need = |p: &Option<PathBuf>, flag: &str| {
        p.clone().ok_or_else(|| CliError::Config(format!("evaluate requires {flag} DIR")))
    };
    let ref_dir = need(&cfg.paths.reference, "--ref")?;
    let pred_dir = need(&cfg.paths.prediction, "--pred")?;
    let reference = crate::output::read_trajectory(&ref_dir)?;
    let pred = crate::output::read_trajectory(&pred_dir)?;
    let report = error_metrics(&pred, &reference)?;
    let out = OutDir::create(out_path)?;
    report.write_csv(out.file("report.csv"))?;
    println!(
        "mean relative errors: perimeter {:e}, energy {:e}, solid fraction {:e}",
        report.mean_rel_err_perimeter(),
        report.mean_rel_err_energy(),
        report.mean_rel_err_solid_fraction()
    );
    finish(inv, cfg, &out, &[], Ok(()))
}

fn ivantsov(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let pe = ivantsov_peclet(cfg.kappa)?;
    println!("{pe:e}");
    if let Some(path) = &inv.common.out {
        let out = OutDir::create(path)?;
        std::fs::write(out.file("ivantsov.txt"), format!("kappa={}\npeclet={pe}\n", cfg.kappa))?;
        finish(inv, cfg, &out, &[], Ok(()))?;
    }
    Ok(())
}

/// One line of the gradient-check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub error: f64,
}

fn random_field(grid: Grid2D, rng: &mut ChaCha8Rng, amp: f64) -> Field2D {
    Field2D::from_values(grid, (0..grid.len()).map(|_| rng.random_range(-amp..amp)).collect()).expect("matching length")
}

fn smooth_field(grid: Grid2D, rng: &mut ChaCha8Rng) -> Field2D {
    let l = grid.length();
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0..3) as f64,
                rng.random_range(1..3) as f64,
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    Field2D::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, ph, a)| a * (std::f64::consts::TAU * (kx * x + ky * y) / l + ph).sin())
            .sum::<f64>()
    })
}

/// Central difference of `loss` along `dir` against the nodal gradient.
fn directional(loss: impl Fn(&Field2D) -> f64, grad: &Field2D, at: &Field2D, dir: &Field2D) -> f64 {
    let t = 1e-5;
    let fd = (loss(&at.add(&dir.scale(t))) - loss(&at.sub(&dir.scale(t)))) / (2.0 * t);
    let an: f64 = grad.values().iter().zip(dir.values()).map(|(a, b)| a * b).sum();
    let denom = an.abs().max(fd.abs());
    if denom == 0.0 {
        0.0
    } else {
        (an - fd).abs() / denom
    }
}

/// Dendrite constants with ε equal to the spacing of a 16-point unit cell.
pub fn coarse_dendrite_params() -> DendriteParams {
    let mut p = DendriteParams::reference(0.05);
    p.eps = 1.0 / 16.0;
    p.lambda0 = p.d * p.tau / (pfno_core::dendrite::THIN_INTERFACE_A2 * p.eps);
    p
}

/// Small instances of every architecture.
pub fn small_specs() -> Vec<ArchitectureSpec> {
    let unet = UnetSpec { levels: 2, hidden: 2, multiplier: 2, kernel: 3, act: Activation::Tanh };
    vec![
        ArchitectureSpec::Rdno { width: 3, depth: 2, kernel: 3, diffusion: 5, act: Activation::Tanh },
        ArchitectureSpec::Unet(unet),
        ArchitectureSpec::Fno { layers: 2, modes: 2, width: 3, act: Activation::Gelu },
        ArchitectureSpec::PrescribedRdno { unet, params: coarse_dendrite_params() },
    ]
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_vec(dims, random_vec(rng, dims.iter().product())).expect("matching length")
}

type LayerFwd<'a> = dyn Fn(&Tensor4, &[f64]) -> Result<Tensor4, NeuralError> + 'a;
type LayerBwd<'a> = dyn Fn(&Tensor4, &[f64], &Tensor4) -> Result<(Tensor4, Vec<f64>), NeuralError> + 'a;

/// Directional check of a layer `y = f(x, θ)` through `⟨c, y⟩` with a random
/// cotangent `c` and a joint random direction in `(x, θ)`.
fn layer_error(
    rng: &mut ChaCha8Rng,
    x: &Tensor4,
    theta: &[f64],
    fwd: &LayerFwd,
    bwd: &LayerBwd,
) -> Result<f64, NeuralError> {
    let y = fwd(x, theta)?;
    let c = random_tensor(rng, y.dims());
    let (gx, gt) = bwd(x, theta, &c)?;
    let dx = random_vec(rng, x.data().len());
    let dt = random_vec(rng, theta.len());
    let h = 1e-5;
    let probe = |s: f64| -> Result<f64, NeuralError> {
        let xs = Tensor4::from_vec(x.dims(), x.data().iter().zip(&dx).map(|(a, b)| a + s * b).collect())?;
        let ts: Vec<f64> = theta.iter().zip(&dt).map(|(a, b)| a + s * b).collect();
        Ok(fwd(&xs, &ts)?.data().iter().zip(c.data()).map(|(a, b)| a * b).sum())
    };
    let fd = (probe(h)? - probe(-h)?) / (2.0 * h);
    let an: f64 = gx.data().iter().zip(&dx).map(|(a, b)| a * b).sum::<f64>()
        + gt.iter().zip(&dt).map(|(a, b)| a * b).sum::<f64>();
    let denom = an.abs().max(fd.abs());
    Ok(if denom == 0.0 { 0.0 } else { (an - fd).abs() / denom })
}

/// Layer-level checks: convolutions, transposed convolution, spectral
/// convolution and the activations.
fn layer_suite(rng: &mut ChaCha8Rng) -> Result<Vec<CheckLine>, CliError> {
    let mut lines = Vec::new();
    for stride in [1, 2] {
        let wd = [3, 2, 3, 3];
        let nw = 3 * 2 * 9;
        let x = random_tensor(rng, [2, 2, 8, 8]);
        let theta = random_vec(rng, nw + 3);
        let fwd = move |x: &Tensor4, t: &[f64]| conv2d_periodic(x, &t[..nw], wd, Some(&t[nw..]), stride);
        let bwd = move |x: &Tensor4, t: &[f64], g: &Tensor4| {
            let r = conv2d_periodic_backward(x, &t[..nw], wd, stride, g)?;
            Ok((r.input, [r.weight, r.bias].concat()))
        };
        let e = layer_error(rng, &x, &theta, &fwd, &bwd)?;
        lines.push(CheckLine { name: format!("layer conv2d stride {stride}"), error: e });
    }
    {
        let wd = [2, 3, 3, 3];
        let nw = 2 * 3 * 9;
        let x = random_tensor(rng, [2, 2, 4, 4]);
        let theta = random_vec(rng, nw + 3);
        let fwd = move |x: &Tensor4, t: &[f64]| conv_transpose2d_periodic(x, &t[..nw], wd, Some(&t[nw..]), 2);
        let bwd = move |x: &Tensor4, t: &[f64], g: &Tensor4| {
            let r = conv_transpose2d_periodic_backward(x, &t[..nw], wd, 2, g)?;
            Ok((r.input, [r.weight, r.bias].concat()))
        };
        let e = layer_error(rng, &x, &theta, &fwd, &bwd)?;
        lines.push(CheckLine { name: "layer conv_transpose2d".into(), error: e });
    }
    {
        let (ci, co, m) = (2, 3, 2);
        let nw = ci * co * 2 * m * m;
        let x = random_tensor(rng, [2, ci, 8, 8]);
        let theta = random_vec(rng, 2 * nw);
        let fwd = move |x: &Tensor4, t: &[f64]| spectral_conv(x, &t[..nw], &t[nw..], ci, co, m);
        let bwd = move |x: &Tensor4, t: &[f64], g: &Tensor4| {
            let r = spectral_conv_backward(x, &t[..nw], &t[nw..], ci, co, m, g)?;
            Ok((r.input, [r.re, r.im].concat()))
        };
        let e = layer_error(rng, &x, &theta, &fwd, &bwd)?;
        lines.push(CheckLine { name: "layer spectral_conv".into(), error: e });
    }
    for act in [Activation::Tanh, Activation::Relu, Activation::Gelu] {
        let x = random_tensor(rng, [2, 2, 8, 8]);
        let fwd = move |x: &Tensor4, _: &[f64]| Ok(activation_forward(x, act));
        let bwd = move |x: &Tensor4, _: &[f64], g: &Tensor4| Ok((activation_backward(x, act, g), Vec::new()));
        let e = layer_error(rng, &x, &[], &fwd, &bwd)?;
        lines.push(CheckLine { name: format!("layer {act}"), error: e });
    }
    Ok(lines)
}

/// Gradient checks of every layer, every architecture on 8² inputs and the
/// four losses.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = layer_suite(&mut rng)?;
    for spec in small_specs() {
        let model = Model::new(spec.clone())?;
        let mut w = init_weights(&spec, &mut rng);
        for (name, t) in w.iter_mut() {
            if name.ends_with(".b") {
                t.data.iter_mut().for_each(|v| *v = rng.random_range(-0.1..0.1));
            }
        }
        let mut inputs = vec![Tensor4::from_vec([2, 1, 8, 8], (0..128).map(|_| rng.random_range(-1.0..1.0)).collect())?];
        if spec.input_count() == 2 {
            inputs.push(Tensor4::from_vec([2, 1, 8, 8], (0..128).map(|_| rng.random_range(-0.3..-0.1)).collect())?);
        }
        let report = grad_check(&model, &w, &inputs, seed, 8)?;
        lines.push(CheckLine { name: format!("arch {}", spec.kind()), error: report.max_rel_error() });
    }

    let g = Grid2D::new(8, 1.0)?;
    let ac = AcParams { eps: 1.0 / 8.0, ..AcParams::reference() };
    let u = smooth_field(g, &mut rng);
    let pred = smooth_field(g, &mut rng);
    let target = smooth_field(g, &mut rng);
    let dir = random_field(g, &mut rng, 1.0);
    lines.push(CheckLine {
        name: "loss deepritz_ac".into(),
        error: directional(|v| loss_deepritz_ac(v, &u, &ac), &loss_deepritz_ac_grad(&pred, &u, &ac), &pred, &dir),
    });
    lines.push(CheckLine {
        name: "loss data".into(),
        error: directional(|v| loss_data(v, &target), &loss_data_grad(&pred, &target), &pred, &dir),
    });

    let p = coarse_dendrite_params();
    let g = Grid2D::new(8, 0.5)?;
    let phi = smooth_field(g, &mut rng);
    let temp = smooth_field(g, &mut rng).scale(0.2);
    let pred = phi.add(&smooth_field(g, &mut rng).scale(1e-3));
    let dir = random_field(g, &mut rng, 1e-3);
    lines.push(CheckLine {
        name: "loss deepritz_dendrite".into(),
        error: directional(
            |v| loss_deepritz_dendrite(v, &phi, &temp, &p),
            &loss_deepritz_dendrite_grad(&pred, &phi, &temp, &p),
            &pred,
            &dir,
        ),
    });
    lines.push(CheckLine {
        name: "loss residual".into(),
        error: directional(
            |v| loss_scheme_residual(v, &phi, &temp, &p),
            &loss_scheme_residual_grad(&pred, &phi, &temp, &p),
            &pred,
            &dir,
        ),
    });
    Ok(lines)
}

fn gradcheck(inv: &Invocation, cfg: &RunConfig) -> Result<(), CliError> {
    let lines = gradient_suite(cfg.seed)?;
    let mut failed = Vec::new();
    for l in &lines {
        let ok = l.error < GRADCHECK_TOL;
        println!("{:<24} {:.3e} {}", l.name, l.error, if ok { "ok" } else { "FAILED" });
        if !ok {
            failed.push(l.name.clone());
        }
    }
    let result = if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("gradient check failed for {failed:?}")))
    };
    match &inv.common.out {
        Some(path) => {
            let out = OutDir::create(path)?;
            let mut text = String::from("check,max_rel_error\n");
            for l in &lines {
                text.push_str(&format!("{},{:e}\n", l.name, l.error));
            }
            std::fs::write(out.file("gradcheck.csv"), text)?;
            finish(inv, cfg, &out, &[], result)
        }
        None => result,
    }
}
