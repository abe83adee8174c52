use super::TrainError;
use crate::allen_cahn::{ac_split_step, AcParams};
use crate::dendrite::{heat_step_implicit, sav_step, DendriteParams, SavState};
use crate::metrics::{Frame, Physics, TrajectoryRecord};
use crate::neural::{Model, ModelWeights, Tensor4};
use crate::Field2D;

/// A rollout trajectory; on blow-up it holds the frames up to the last finite state.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub record: TrajectoryRecord,
    pub blow_up_step: Option<usize>,
}

fn keep(step: usize, steps: usize, stride: usize) -> bool {
    step % stride == 0 || step == steps
}

fn check_stride(stride: usize) -> Result<(), TrainError> {
    if stride == 0 {
        return Err(TrainError::InvalidConfig("sampling stride must be positive".into()));
    }
    Ok(())
}

/// One network step. `None` when the prediction is not finite.
fn predict(model: &Model, w: &ModelWeights, inputs: &[&Field2D]) -> Result<Option<Field2D>, TrainError> {
    let tensors: Vec<Tensor4> = inputs.iter().map(|f| Tensor4::from_fields(&[f])).collect::<Result<_, _>>()?;
    let out = model.forward(w, &tensors[..model.spec().input_count()])?;
    Ok(out.to_field(0, 0, *inputs[0].grid()).ok())
}

/// Iterates the network from `ic`.
pub fn rollout_ac(
    model: &Model,
    w: &ModelWeights,
    ic: &Field2D,
    steps: usize,
    stride: usize,
    p: &AcParams,
) -> Result<Rollout, TrainError> {
    check_stride(stride)?;
    if model.spec().input_count() != 1 {
        return Err(TrainError::InvalidConfig(format!("{} is not an Allen-Cahn operator", model.spec().kind())));
    }
    let mut frames = vec![Frame { step: 0, time: 0.0, phase: ic.clone(), temperature: None }];
    let mut u = ic.clone();
    let mut blow_up_step = None;
    for step in 1..=steps {
        match predict(model, w, &[&u])? {
            Some(next) => u = next,
            None => {
                blow_up_step = Some(step);
                break;
            }
        }
        if keep(step, steps, stride) {
            frames.push(Frame { step, time: step as f64 * p.dt, phase: u.clone(), temperature: None });
        }
    }
    Ok(Rollout { record: TrajectoryRecord { physics: Physics::AllenCahn(*p), frames }, blow_up_step })
}

/// `φ⁺ = NN(φ, U)` followed by the implicit heat step.
pub fn rollout_dendrite(
    model: &Model,
    w: &ModelWeights,
    phi0: &Field2D,
    u0: &Field2D,
    steps: usize,
    stride: usize,
    p: &DendriteParams,
) -> Result<Rollout, TrainError> {
    check_stride(stride)?;
    phi0.same_grid(u0)?;
    let mut phi = phi0.clone();
    let mut u = u0.clone();
    let mut frames = vec![Frame { step: 0, time: 0.0, phase: phi.clone(), temperature: Some(u.clone()) }];
    let mut blow_up_step = None;
    for step in 1..=steps {
        let Some(next) = predict(model, w, &[&phi, &u])? else {
            blow_up_step = Some(step);
            break;
        };
        let u_next = heat_step_implicit(&u, &next, &phi, p)?;
        if !u_next.is_finite() {
            blow_up_step = Some(step);
            break;
        }
        phi = next;
        u = u_next;
        if keep(step, steps, stride) {
            frames.push(Frame { step, time: step as f64 * p.dt, phase: phi.clone(), temperature: Some(u.clone()) });
        }
    }
    Ok(Rollout { record: TrajectoryRecord { physics: Physics::Dendrite(*p), frames }, blow_up_step })
}

/// Splitting-scheme trajectory sampled like [`rollout_ac`].
pub fn reference_ac(ic: &Field2D, steps: usize, stride: usize, p: &AcParams) -> Result<TrajectoryRecord, TrainError> {
    check_stride(stride)?;
    let mut frames = vec![Frame { step: 0, time: 0.0, phase: ic.clone(), temperature: None }];
    let mut u = ic.clone();
    for step in 1..=steps {
        u = ac_split_step(&u, p)?;
        if keep(step, steps, stride) {
            frames.push(Frame { step, time: step as f64 * p.dt, phase: u.clone(), temperature: None });
        }
    }
    Ok(TrajectoryRecord { physics: Physics::AllenCahn(*p), frames })
}

/// SAV trajectory sampled like [`rollout_dendrite`].
pub fn reference_dendrite(
    phi0: &Field2D,
    u0: &Field2D,
    steps: usize,
    stride: usize,
    p: &DendriteParams,
) -> Result<TrajectoryRecord, TrainError> {
    check_stride(stride)?;
    let mut state = SavState::new(phi0.clone(), u0.clone(), p)?;
    let mut frames = vec![Frame { step: 0, time: 0.0, phase: phi0.clone(), temperature: Some(u0.clone()) }];
    for step in 1..=steps {
        state = sav_step(&state, p)?.0;
        if keep(step, steps, stride) {
            frames.push(Frame {
                step,
                time: step as f64 * p.dt,
                phase: state.phi.clone(),
                temperature: Some(state.u.clone()),
            });
        }
    }
    Ok(TrajectoryRecord { physics: Physics::Dendrite(*p), frames })
}
