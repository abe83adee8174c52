use crate::allen_cahn::periodic_delta;
use crate::Field2D;

use super::contour::zero_level_set;
use super::MetricsError;

/// Growth axis along which a tip is tracked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl Direction {
    pub fn unit(self) -> (f64, f64) {
        match self {
            Direction::PlusX => (1.0, 0.0),
            Direction::MinusX => (-1.0, 0.0),
            Direction::PlusY => (0.0, 1.0),
            Direction::MinusY => (0.0, -1.0),
        }
    }

    pub const ALL: [Direction; 4] = [Direction::PlusX, Direction::PlusY, Direction::MinusX, Direction::MinusY];
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipRecord {
    pub time: f64,
    pub position: (f64, f64),
    /// Distance of the tip from the grain centre along the growth axis.
    pub distance: f64,
    pub velocity: f64,
    pub rho: Option<f64>,
    pub peclet: Option<f64>,
    /// The tip has reached half the domain and feels its periodic image.
    pub boundary_flag: bool,
}

/// Farthest zero crossing (from positive to non-positive) along the grid line
/// through `center` in `dir`, as the distance from `center` and a flag raised
/// when the scan hits half the domain.
pub fn tip_position(phi: &Field2D, center: (f64, f64), dir: Direction) -> Option<(f64, bool)> {
    let n = phi.n();
    let h = phi.grid().spacing();
    let (ux, uy) = dir.unit();
    let ci = (center.1 / h).round() as i64;
    let cj = (center.0 / h).round() as i64;
    let offset = ux * (cj as f64 * h - center.0) + uy * (ci as f64 * h - center.1);
    let sample = |k: i64| {
        let r = (ci + k * uy as i64).rem_euclid(n as i64) as usize;
        let c = (cj + k * ux as i64).rem_euclid(n as i64) as usize;
        phi.get(r, c)
    };
    let half = (n / 2) as i64;
    let mut best = None;
    for k in 0..half {
        let a = sample(k);
        let b = sample(k + 1);
        if a > 0.0 && b <= 0.0 {
            best = Some(((k as f64 + a / (a - b)) * h + offset, false));
        }
    }
    if sample(half) > 0.0 {
        return Some((half as f64 * h + offset, true));
    }
    best
}

/// Parabola fit `s = s_tip − w²/(2ρ)` in tip-aligned coordinates using the
/// contour points within `window/2` of the axis; refit once on `6ρ`, capped at `window`.
pub fn tip_radius(points: &[(f64, f64)], tip: (f64, f64), dir: Direction, window: f64, domain: f64) -> Option<f64> {
    let (ux, uy) = dir.unit();
    let local: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| {
            let dx = periodic_delta(x - tip.0, domain);
            let dy = periodic_delta(y - tip.1, domain);
            (dx * ux + dy * uy, -dx * uy + dy * ux)
        })
        .collect();
    let fit = |w: f64| -> Option<f64> {
        let pts: Vec<(f64, f64)> =
            local.iter().copied().filter(|&(s, t)| t.abs() <= 0.5 * w && s.abs() <= w).collect();
        if pts.len() < 7 {
            return None;
        }
        // Least squares for s = s0 − c t².
        let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for &(s, t) in &pts {
            let x = t * t;
            sx += x;
            sxx += x * x;
            sy += s;
            sxy += x * s;
        }
        let m = pts.len() as f64;
        let det = m * sxx - sx * sx;
        if det.abs() < f64::MIN_POSITIVE {
            return None;
        }
        let slope = (m * sxy - sx * sy) / det;
        let c = -slope;
        (c > 0.0).then(|| 1.0 / (2.0 * c))
    };
    let rho = fit(window)?;
    fit((6.0 * rho).min(window)).or(Some(rho))
}

/// Tracks one tip along `dir`. Velocities use a centred difference over a
/// five-sample window, shrunk at the ends of the series.
pub fn tip_track(
    frames: &[(f64, &Field2D)],
    center: (f64, f64),
    dir: Direction,
    diffusivity: Option<f64>,
) -> Result<Vec<TipRecord>, MetricsError> {
    let mut raw = Vec::with_capacity(frames.len());
    for &(t, phi) in frames {
        let (d, flag) = tip_position(phi, center, dir)
            .ok_or_else(|| MetricsError::InvalidArgument(format!("no tip found at t = {t}")))?;
        raw.push((t, d, flag));
    }
    let len = raw.len();
    let mut out = Vec::with_capacity(len);
    for (i, &(t, d, flag)) in raw.iter().enumerate() {
        let k = 2.min(i).min(len - 1 - i);
        let (lo, hi) = if k > 0 {
            (i - k, i + k)
        } else if len > 1 {
            if i == 0 {
                (0, 1)
            } else {
                (len - 2, len - 1)
            }
        } else {
            (i, i)
        };
        let velocity = if hi > lo { (raw[hi].1 - raw[lo].1) / (raw[hi].0 - raw[lo].0) } else { 0.0 };
        let (ux, uy) = dir.unit();
        let position = (center.0 + d * ux, center.1 + d * uy);
        let phi = frames[i].1;
        let contour = zero_level_set(phi);
        let pts: Vec<(f64, f64)> = contour.points().collect();
        let h = phi.grid().spacing();
        let rho = tip_radius(&pts, position, dir, 12.0 * h, phi.grid().length());
        let peclet = match (rho, diffusivity) {
            (Some(r), Some(dd)) => Some(r * velocity / (2.0 * dd)),
            _ => None,
        };
        out.push(TipRecord { time: t, position, distance: d, velocity, rho, peclet, boundary_flag: flag });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyTip {
    pub velocity: f64,
    pub rho: Option<f64>,
    pub peclet: Option<f64>,
}

/// Mean over the `count` records closest in time to `time`.
pub fn steady_state(records: &[TipRecord], time: f64, count: usize) -> Option<SteadyTip> {
    if records.is_empty() || count == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| {
        (records[a].time - time).abs().total_cmp(&(records[b].time - time).abs()).then(a.cmp(&b))
    });
    idx.truncate(count);
    let m = idx.len() as f64;
    let velocity = idx.iter().map(|&i| records[i].velocity).sum::<f64>() / m;
    let mean_opt = |f: &dyn Fn(&TipRecord) -> Option<f64>| -> Option<f64> {
        let vals: Vec<f64> = idx.iter().filter_map(|&i| f(&records[i])).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Some(SteadyTip { velocity, rho: mean_opt(&|r| r.rho), peclet: mean_opt(&|r| r.peclet) })
}
