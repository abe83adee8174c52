use std::path::Path;

use crate::allen_cahn::{ac_energy, perimeter_epsilon, AcParams};
use crate::dendrite::{dendrite_energy, solid_fraction, DendriteParams};
use crate::Field2D;

use super::MetricsError;

/// Model a trajectory belongs to, with the constants its metrics need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Physics {
    AllenCahn(AcParams),
    Dendrite(DendriteParams),
}

impl Physics {
    pub fn eps(&self) -> f64 {
        match self {
            Physics::AllenCahn(p) => p.eps,
            Physics::Dendrite(p) => p.eps,
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            Physics::AllenCahn(p) => p.dt,
            Physics::Dendrite(p) => p.dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub step: usize,
    pub time: f64,
    /// Phase field (`u` for Allen-Cahn, `φ` for the dendrite model).
    pub phase: Field2D,
    /// Temperature `U`, dendrite model only.
    pub temperature: Option<Field2D>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub physics: Physics,
    pub frames: Vec<Frame>,
}

/// One row of the per-step metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub perimeter: f64,
    pub solid_fraction: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub tip_x: Option<f64>,
    pub tip_v: Option<f64>,
    pub tip_rho: Option<f64>,
    pub peclet: Option<f64>,
}

pub fn frame_metrics(frame: &Frame, physics: &Physics) -> MetricsRow {
    let phase = &frame.phase;
    let energy = match (physics, &frame.temperature) {
        (Physics::AllenCahn(p), _) => ac_energy(phase, p.eps),
        (Physics::Dendrite(p), Some(u)) => dendrite_energy(phase, u, p),
        (Physics::Dendrite(p), None) => dendrite_energy(phase, &Field2D::zeros(*phase.grid()), p),
    };
    let (u_min, u_max) = match &frame.temperature {
        Some(u) => (u.min(), u.max()),
        None => (phase.min(), phase.max()),
    };
    MetricsRow {
        step: frame.step,
        time: frame.time,
        energy,
        perimeter: perimeter_epsilon(phase, physics.eps()),
        solid_fraction: solid_fraction(phase),
        u_min,
        u_max,
        ..MetricsRow::default()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "step",
        "time",
        "energy",
        "perimeter",
        "solid_fraction",
        "u_min",
        "u_max",
        "tip_x",
        "tip_v",
        "tip_rho",
        "peclet",
    ])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:e}", r.time),
            format!("{:e}", r.energy),
            format!("{:e}", r.perimeter),
            format!("{:e}", r.solid_fraction),
            format!("{:e}", r.u_min),
            format!("{:e}", r.u_max),
            opt(r.tip_x),
            opt(r.tip_v),
            opt(r.tip_rho),
            opt(r.peclet),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Signed relative errors `(pred − ref)/ref` at one sampling time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub time: f64,
    pub rel_err_perimeter: f64,
    pub rel_err_energy: f64,
    pub rel_err_solid_fraction: f64,
    pub max_abs_err_field: f64,
    pub max_u: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    fn mean_abs(&self, f: impl Fn(&ReportRow) -> f64) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| f(r).abs()).sum::<f64>() / self.rows.len() as f64
    }

    pub fn mean_rel_err_perimeter(&self) -> f64 {
        self.mean_abs(|r| r.rel_err_perimeter)
    }

    pub fn mean_rel_err_energy(&self) -> f64 {
        self.mean_abs(|r| r.rel_err_energy)
    }

    pub fn mean_rel_err_solid_fraction(&self) -> f64 {
        self.mean_abs(|r| r.rel_err_solid_fraction)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "time",
            "rel_err_perimeter",
            "rel_err_energy",
            "rel_err_solid_fraction",
            "max_abs_err_field",
            "max_U",
        ])?;
        for r in &self.rows {
            w.write_record([
                format!("{:e}", r.time),
                format!("{:e}", r.rel_err_perimeter),
                format!("{:e}", r.rel_err_energy),
                format!("{:e}", r.rel_err_solid_fraction),
                format!("{:e}", r.max_abs_err_field),
                opt(r.max_u),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rel(pred: f64, reference: f64) -> f64 {
    if pred == reference {
        0.0
    } else {
        (pred - reference) / reference
    }
}

/// Per-time relative errors of a predicted trajectory against a reference.
pub fn error_metrics(pred: &TrajectoryRecord, reference: &TrajectoryRecord) -> Result<MetricsReport, MetricsError> {
    if pred.frames.len() != reference.frames.len() {
        return Err(MetricsError::Mismatch(format!(
            "{} predicted frames vs {} reference frames",
            pred.frames.len(),
            reference.frames.len()
        )));
    }
    let mut rows = Vec::with_capacity(pred.frames.len());
    for (p, r) in pred.frames.iter().zip(&reference.frames) {
        if (p.time - r.time).abs() > 1e-9 * r.time.abs().max(1.0) {
            return Err(MetricsError::Mismatch(format!("time {} vs {}", p.time, r.time)));
        }
        if p.phase.grid() != r.phase.grid() {
            return Err(MetricsError::Mismatch("grids differ".into()));
        }
        let mp = frame_metrics(p, &reference.physics);
        let mr = frame_metrics(r, &reference.physics);
        let max_abs_err_field = p.phase.sub(&r.phase).max_abs();
        rows.push(ReportRow {
            time: r.time,
            rel_err_perimeter: rel(mp.perimeter, mr.perimeter),
            rel_err_energy: rel(mp.energy, mr.energy),
            rel_err_solid_fraction: rel(mp.solid_fraction, mr.solid_fraction),
            max_abs_err_field,
            max_u: p.temperature.as_ref().map(|u| u.max()),
        });
    }
    Ok(MetricsReport { rows })
}
