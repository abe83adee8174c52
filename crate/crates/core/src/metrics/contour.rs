use std::collections::HashMap;

use crate::allen_cahn::periodic_delta;
use crate::Field2D;

/// Ordered contour points; consecutive points are joined by segments.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl Polyline {
    pub fn length(&self) -> f64 {
        let mut total: f64 = self.points.windows(2).map(|w| dist(w[0], w[1])).sum();
        if self.closed && self.points.len() > 1 {
            total += dist(self.points[self.points.len() - 1], self.points[0]);
        }
        total
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Zero level set as closed polylines. Coordinates are continuous along each
/// polyline and may leave `[0, length)` where a curve crosses the periodic seam.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelSetContour {
    pub polylines: Vec<Polyline>,
    length: f64,
    domain: f64,
}

impl LevelSetContour {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    /// Total length of all polylines.
    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.polylines.iter().flat_map(|p| p.points.iter().copied())
    }

    /// Mean distance of the contour points from `center`, with periodic wrap.
    pub fn mean_radius(&self, center: (f64, f64)) -> Option<f64> {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (x, y) in self.points() {
            sum += periodic_delta(x - center.0, self.domain).hypot(periodic_delta(y - center.1, self.domain));
            count += 1;
        }
        (count > 0).then(|| sum / count as f64)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Edge {
    /// Between `(row, col)` and `(row, col + 1)`.
    H(usize, usize),
    /// Between `(row, col)` and `(row + 1, col)`.
    V(usize, usize),
}

/// Marching squares with linear edge interpolation on the periodic grid.
/// Saddle cells are resolved by the sign of the cell average.
pub fn zero_level_set(f: &Field2D) -> LevelSetContour {
    let n = f.n();
    let h = f.grid().spacing();
    let v = |r: usize, c: usize| f.get(r % n, c % n);
    let pos = |x: f64| x > 0.0;
    // Crossing point of an edge in the frame of the cell at (row, col).
    let crossing = |e: Edge, r0: usize, c0: usize| -> (f64, f64) {
        let (r, c, dr, dc) = match e {
            Edge::H(r, c) => (r, c, 0usize, 1usize),
            Edge::V(r, c) => (r, c, 1, 0),
        };
        let a = v(r, c);
        let b = v(r + dr, c + dc);
        let t = a / (a - b);
        // Unwrapped indices relative to the cell origin.
        let rr = r0 as f64 + if r < r0 { (r + n) as f64 - r0 as f64 } else { (r - r0) as f64 };
        let cc = c0 as f64 + if c < c0 { (c + n) as f64 - c0 as f64 } else { (c - c0) as f64 };
        ((cc + t * dc as f64) * h, (rr + t * dr as f64) * h)
    };
    let mut segments: Vec<[(Edge, (f64, f64)); 2]> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            let f00 = v(r, c);
            let f01 = v(r, c + 1);
            let f11 = v(r + 1, c + 1);
            let f10 = v(r + 1, c);
            let bottom = Edge::H(r, c);
            let top = Edge::H((r + 1) % n, c);
            let left = Edge::V(r, c);
            let right = Edge::V(r, (c + 1) % n);
            let mut crossed = Vec::with_capacity(4);
            if pos(f00) != pos(f01) {
                crossed.push(bottom);
            }
            if pos(f01) != pos(f11) {
                crossed.push(right);
            }
            if pos(f11) != pos(f10) {
                crossed.push(top);
            }
            if pos(f10) != pos(f00) {
                crossed.push(left);
            }
            let mut push = |a: Edge, b: Edge| segments.push([(a, crossing(a, r, c)), (b, crossing(b, r, c))]);
            match crossed.len() {
                2 => push(crossed[0], crossed[1]),
                4 => {
                    let center = 0.25 * (f00 + f01 + f11 + f10);
                    if pos(center) == pos(f00) {
                        push(bottom, right);
                        push(top, left);
                    } else {
                        push(bottom, left);
                        push(top, right);
                    }
                }
                _ => {}
            }
        }
    }
    assemble(segments, f.grid().length())
}

fn assemble(segments: Vec<[(Edge, (f64, f64)); 2]>, domain: f64) -> LevelSetContour {
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (i, s) in segments.iter().enumerate() {
        by_edge.entry(s[0].0).or_default().push(i);
        by_edge.entry(s[1].0).or_default().push(i);
    }
    let length = segments.iter().map(|s| dist(s[0].1, s[1].1)).sum();
    let mut used = vec![false; segments.len()];
    let mut polylines = Vec::new();
    let shift = |p: (f64, f64), near: (f64, f64)| {
        (near.0 + periodic_delta(p.0 - near.0, domain), near.1 + periodic_delta(p.1 - near.1, domain))
    };
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        used[start] = true;
        let [(_, p0), (mut edge, p1)] = segments[start];
        let mut points = vec![p0, p1];
        let closed;
        loop {
            let next = by_edge.get(&edge).and_then(|ids| ids.iter().copied().find(|&i| !used[i]));
            let Some(i) = next else {
                closed = by_edge.get(&edge).is_some_and(|ids| ids.contains(&start));
                break;
            };
            used[i] = true;
            let s = segments[i];
            let (other_edge, other) = if s[0].0 == edge { s[1] } else { s[0] };
            let last = *points.last().expect("non-empty polyline");
            let anchor = if s[0].0 == edge { s[0].1 } else { s[1].1 };
            // Translate the segment so its shared endpoint meets the polyline.
            let offset = shift(anchor, last);
            let (dx, dy) = (offset.0 - anchor.0, offset.1 - anchor.1);
            points.push((other.0 + dx, other.1 + dy));
            edge = other_edge;
        }
        if closed && points.len() > 2 {
            points.pop();
        }
        polylines.push(Polyline { points, closed });
    }
    LevelSetContour { polylines, length, domain }
}
