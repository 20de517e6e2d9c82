//! Geometry for the pathway waterfall: beeswarm dot placement within state
//! lanes and force-directed bundling of per-subject trajectories.
//!
//! Coordinates are in data units: x in months, y in the same units as the
//! dot radius. Scaling to pixels is left to the renderer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::Scope;
use crate::hmm::Decoding;

#[derive(Debug, Error, PartialEq)]
pub enum LayoutError {
    #[error("polyline {0} has fewer than two points")]
    TooFewPoints(usize),
    #[error("invalid layout parameter: {0}")]
    InvalidParameter(String),
}

impl LayoutError {
    pub fn category(&self) -> &'static str {
        match self {
            LayoutError::TooFewPoints(_) => "DegeneratePolyline",
            LayoutError::InvalidParameter(_) => "InvalidParameter",
        }
    }
}

pub type Point = [f64; 2];

/// Vertical offsets for `(x, lane)` points so that no two dots in the same
/// lane overlap.
///
/// Points are placed in ascending x (stable on ties). Each takes the first
/// offset on the ladder `0, +r, -r, +2r, -2r, ...` whose center lies at
/// least `2r` from every dot already placed in its lane.
pub fn beeswarm(points: &[(f64, usize)], radius: f64) -> Result<Vec<f64>, LayoutError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LayoutError::InvalidParameter(format!("radius {radius}")));
    }
    if points.iter().any(|(x, _)| !x.is_finite()) {
        return Err(LayoutError::InvalidParameter("non-finite x".into()));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].1.cmp(&points[b].1).then(points[a].0.total_cmp(&points[b].0)));

    let diameter = 2.0 * radius;
    let mut ys = vec![0.0; points.len()];
    // Placed dots of the current lane still within reach of the sweep, as (x, y).
    let mut active: std::collections::VecDeque<Point> = Default::default();
    let mut lane = None;
    for &i in &order {
        let (x, l) = points[i];
        if lane != Some(l) {
            lane = Some(l);
            active.clear();
        }
        while active.front().is_some_and(|p| x - p[0] >= diameter) {
            active.pop_front();
        }
        let y = (0u64..)
            .map(|rung| {
                let step = rung.div_ceil(2) as f64 * radius;
                if rung % 2 == 1 {
                    step
                } else {
                    -step
                }
            })
            .find(|&y| active.iter().all(|p| (x - p[0]).hypot(y - p[1]) >= diameter))
            .expect("the ladder is unbounded");
        // -0.0 from the first rung would not round-trip as 0 in JSON.
        let y = if y == 0.0 { 0.0 } else { y };
        ys[i] = y;
        active.push_back([x, y]);
    }
    Ok(ys)
}

/// Force-directed edge bundling parameters. The subdivision count doubles and
/// the step size halves after every cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BundleParams {
    pub cycles: usize,
    pub initial_subdivisions: usize,
    pub iterations: usize,
    pub step: f64,
    pub compatibility_threshold: f64,
    /// Global spring constant.
    pub spring: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            cycles: 6,
            initial_subdivisions: 1,
            iterations: 50,
            step: 0.04,
            compatibility_threshold: 0.6,
            spring: 0.1,
        }
    }
}

impl BundleParams {
    fn validate(&self) -> Result<(), LayoutError> {
        let ok = self.initial_subdivisions >= 1
            && self.step.is_finite()
            && self.step >= 0.0
            && self.spring.is_finite()
            && (0.0..=1.0).contains(&self.compatibility_threshold);
        if ok {
            Ok(())
        } else {
            Err(LayoutError::InvalidParameter(format!("{self:?}")))
        }
    }
}

struct Segment {
    polyline: usize,
    a: Point,
    b: Point,
    /// Compatible segments of other polylines, with whether they run the
    /// opposite way.
    partners: Vec<(usize, bool)>,
    /// Current y of the interior control points; their x never changes.
    ys: Vec<f64>,
    xs: Vec<f64>,
}

impl Segment {
    fn length(&self) -> f64 {
        (self.b[0] - self.a[0]).hypot(self.b[1] - self.a[1])
    }

    fn midpoint(&self) -> Point {
        [(self.a[0] + self.b[0]) / 2.0, (self.a[1] + self.b[1]) / 2.0]
    }

    /// Resamples the control points to `n` points equally spaced in x,
    /// interpolating the current polyline.
    fn subdivide(&mut self, n: usize) {
        let xs: Vec<f64> = (1..=n)
            .map(|j| self.a[0] + (self.b[0] - self.a[0]) * j as f64 / (n + 1) as f64)
            .collect();
        let mut px = vec![self.a[0]];
        px.extend(&self.xs);
        px.push(self.b[0]);
        let mut py = vec![self.a[1]];
        py.extend(&self.ys);
        py.push(self.b[1]);
        let ys = xs.iter().map(|&x| interpolate(&px, &py, x)).collect();
        self.xs = xs;
        self.ys = ys;
    }
}

/// Linear interpolation along a polyline whose x runs monotonically.
fn interpolate(px: &[f64], py: &[f64], x: f64) -> f64 {
    let rising = px[px.len() - 1] > px[0];
    let k = px
        .windows(2)
        .position(|w| if rising { x <= w[1] } else { x >= w[1] })
        .unwrap_or(px.len() - 2);
    let (x0, x1) = (px[k], px[k + 1]);
    if x1 == x0 {
        return py[k];
    }
    let t = (x - x0) / (x1 - x0);
    py[k] + t * (py[k + 1] - py[k])
}

fn dot(u: Point, v: Point) -> f64 {
    u[0] * v[0] + u[1] * v[1]
}

fn sub(u: Point, v: Point) -> Point {
    [u[0] - v[0], u[1] - v[1]]
}

fn norm(u: Point) -> f64 {
    u[0].hypot(u[1])
}

/// Visibility of `q` from `p`: how centrally `q` projects onto `p`'s line.
fn visibility(p: &Segment, q: &Segment) -> f64 {
    let d = sub(p.b, p.a);
    let len2 = dot(d, d);
    let project = |x: Point| {
        let t = dot(sub(x, p.a), d) / len2;
        [p.a[0] + t * d[0], p.a[1] + t * d[1]]
    };
    let (i0, i1) = (project(q.a), project(q.b));
    let im = [(i0[0] + i1[0]) / 2.0, (i0[1] + i1[1]) / 2.0];
    let span = norm(sub(i0, i1));
    if span == 0.0 {
        return 0.0;
    }
    (1.0 - 2.0 * norm(sub(p.midpoint(), im)) / span).max(0.0)
}

/// Product of angle, scale, position and visibility compatibility.
fn compatibility(p: &Segment, q: &Segment) -> f64 {
    let (lp, lq) = (p.length(), q.length());
    let dp = sub(p.b, p.a);
    let dq = sub(q.b, q.a);
    let angle = (dot(dp, dq) / (lp * lq)).abs();
    let lavg = (lp + lq) / 2.0;
    let scale = 2.0 / (lavg / lp.min(lq) + lp.max(lq) / lavg);
    let position = lavg / (lavg + norm(sub(p.midpoint(), q.midpoint())));
    let cheap = angle * scale * position;
    if cheap == 0.0 {
        return 0.0;
    }
    cheap * visibility(p, q).min(visibility(q, p))
}

/// Bundles polylines by pulling control points of compatible segments from
/// different polylines towards each other, moving y only.
///
/// Every input vertex is kept bitwise; control points are inserted between
/// the vertices of segments that have at least one compatible partner. Other
/// segments, including those of zero length or zero horizontal extent, are
/// passed through unchanged.
pub fn bundle(polylines: &[Vec<Point>], params: &BundleParams) -> Result<Vec<Vec<Point>>, LayoutError> {
    params.validate()?;
    if let Some(i) = polylines.iter().position(|p| p.len() < 2) {
        return Err(LayoutError::TooFewPoints(i));
    }
    let mut segments: Vec<Segment> = polylines
        .iter()
        .enumerate()
        .flat_map(|(i, line)| {
            line.windows(2).map(move |w| Segment {
                polyline: i,
                a: w[0],
                b: w[1],
                partners: Vec::new(),
                ys: Vec::new(),
                xs: Vec::new(),
            })
        })
        .collect();

    let movable: Vec<bool> = segments.iter().map(|s| s.a[0] != s.b[0] && s.length() > 0.0).collect();
    for i in 0..segments.len() {
        for j in i + 1..segments.len() {
            if !movable[i] || !movable[j] || segments[i].polyline == segments[j].polyline {
                continue;
            }
            if compatibility(&segments[i], &segments[j]) >= params.compatibility_threshold {
                let reversed = dot(sub(segments[i].b, segments[i].a), sub(segments[j].b, segments[j].a)) < 0.0;
                segments[i].partners.push((j, reversed));
                segments[j].partners.push((i, reversed));
            }
        }
    }
    let active: Vec<usize> = (0..segments.len()).filter(|&i| !segments[i].partners.is_empty()).collect();

    let mut n = params.initial_subdivisions;
    let mut step = params.step;
    for _ in 0..params.cycles {
        for &i in &active {
            segments[i].subdivide(n);
        }
        for _ in 0..params.iterations {
            let next: Vec<Vec<f64>> = active.iter().map(|&i| forces(&segments, i, params.spring, step)).collect();
            for (&i, ys) in active.iter().zip(next) {
                segments[i].ys = ys;
            }
        }
        n *= 2;
        step /= 2.0;
    }

    let mut out: Vec<Vec<Point>> = polylines.iter().map(|p| vec![p[0]]).collect();
    for s in &segments {
        let line = &mut out[s.polyline];
        line.extend(s.xs.iter().zip(&s.ys).map(|(&x, &y)| [x, y]));
        line.push(s.b);
    }
    Ok(out)
}

/// One relaxation step for the control points of segment `i`.
fn forces(segments: &[Segment], i: usize, spring: f64, step: f64) -> Vec<f64> {
    let s = &segments[i];
    let n = s.ys.len();
    let kp = spring / (s.length() * (n + 1) as f64);
    (0..n)
        .map(|k| {
            let y = s.ys[k];
            let prev = if k == 0 { s.a[1] } else { s.ys[k - 1] };
            let next = if k + 1 == n { s.b[1] } else { s.ys[k + 1] };
            let mut force = kp * ((prev - y) + (next - y));
            for &(j, reversed) in &s.partners {
                let q = &segments[j];
                let m = if reversed { n - 1 - k } else { k };
                let (dx, dy) = (q.xs[m] - s.xs[k], q.ys[m] - y);
                let dist = dx.hypot(dy);
                if dist > 1e-12 {
                    force += dy / dist;
                }
            }
            y + step * force
        })
        .collect()
}

/// Waterfall geometry settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterfallParams {
    /// Dot radius, in months.
    pub radius: f64,
    /// Empty space between neighbouring lanes.
    pub lane_gap: f64,
    pub bundle: BundleParams,
}

impl Default for WaterfallParams {
    fn default() -> Self {
        WaterfallParams {
            radius: 1.0,
            lane_gap: 4.0,
            bundle: BundleParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallDot {
    pub subject_id: String,
    pub visit: usize,
    /// Visit age in months.
    pub x: f64,
    /// Offset from the lane center.
    pub y: f64,
    /// State lane.
    pub lane: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub subject_id: String,
    /// Absolute coordinates; passes through every dot center of the subject.
    pub points: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallLayout {
    pub radius: f64,
    /// Absolute y of each state lane's center; lanes stack downward from state 0.
    pub lane_centers: Vec<f64>,
    pub dots: Vec<WaterfallDot>,
    pub trajectories: Vec<Trajectory>,
}

/// Lays out every scoped visit as a dot in its state lane and connects each
/// subject's dots with a bundled trajectory.
pub fn waterfall(decoding: &Decoding, scope: &Scope, params: &WaterfallParams) -> Result<WaterfallLayout, LayoutError> {
    if !(params.lane_gap >= 0.0 && params.lane_gap.is_finite()) {
        return Err(LayoutError::InvalidParameter(format!("lane gap {}", params.lane_gap)));
    }
    let subjects: Vec<_> = decoding
        .subjects
        .iter()
        .filter(|d| scope.contains(&d.subject_id) && !d.visits.is_empty())
        .collect();
    let mut dots: Vec<WaterfallDot> = subjects
        .iter()
        .flat_map(|d| {
            d.visits.iter().enumerate().map(|(i, v)| WaterfallDot {
                subject_id: d.subject_id.clone(),
                visit: i,
                x: v.age,
                y: 0.0,
                lane: v.state,
            })
        })
        .collect();
    let input: Vec<(f64, usize)> = dots.iter().map(|d| (d.x, d.lane)).collect();
    for (dot, y) in dots.iter_mut().zip(beeswarm(&input, params.radius)?) {
        dot.y = y;
    }

    let k = decoding.n_states;
    let mut extent = vec![(0.0f64, 0.0f64); k];
    for d in &dots {
        let e = &mut extent[d.lane];
        e.0 = e.0.min(d.y);
        e.1 = e.1.max(d.y);
    }
    let mut lane_centers = Vec::with_capacity(k);
    let mut edge = 0.0;
    for &(lo, hi) in &extent {
        let center = edge + params.radius - lo;
        lane_centers.push(center);
        edge = center + hi + params.radius + params.lane_gap;
    }

    let mut lines: Vec<Vec<Point>> = Vec::new();
    let mut owners: Vec<&str> = Vec::new();
    let mut offset = 0;
    for d in &subjects {
        let pts: Vec<Point> = dots[offset..offset + d.visits.len()]
            .iter()
            .map(|dot| [dot.x, lane_centers[dot.lane] + dot.y])
            .collect();
        offset += d.visits.len();
        lines.push(pts);
        owners.push(&d.subject_id);
    }
    // Single-visit subjects have nothing to bundle.
    let multi: Vec<Vec<Point>> = lines.iter().filter(|l| l.len() >= 2).cloned().collect();
    let mut bundled = bundle(&multi, &params.bundle)?.into_iter();
    let trajectories = lines
        .into_iter()
        .zip(owners)
        .map(|(line, id)| Trajectory {
            subject_id: id.to_string(),
            points: if line.len() >= 2 { bundled.next().expect("one per polyline") } else { line },
        })
        .collect();
    Ok(WaterfallLayout {
        radius: params.radius,
        lane_centers,
        dots,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn overlaps(points: &[(f64, usize)], ys: &[f64], r: f64) -> bool {
        (0..points.len()).any(|i| {
            (i + 1..points.len()).any(|j| {
                points[i].1 == points[j].1 && (points[i].0 - points[j].0).hypot(ys[i] - ys[j]) < 2.0 * r
            })
        })
    }

    #[test]
    fn beeswarm_ladder() {
        let pts = [(10.0, 0), (10.0, 0), (10.0, 0)];
        let ys = beeswarm(&pts, 1.0).unwrap();
        assert_eq!(ys, vec![0.0, 2.0, -2.0]);

        let pts = [(0.0, 0), (2.0, 0), (0.0, 1)];
        assert_eq!(beeswarm(&pts, 1.0).unwrap(), vec![0.0, 0.0, 0.0]);
        assert!(beeswarm(&pts, 0.0).is_err());
    }

    #[test]
    fn beeswarm_is_stable_and_non_overlapping() {
        let pts: Vec<(f64, usize)> = (0..300).map(|i| (((i * 37) % 50) as f64 * 0.3, i % 3)).collect();
        let ys = beeswarm(&pts, 0.5).unwrap();
        assert!(!overlaps(&pts, &ys, 0.5));
        assert_eq!(ys, beeswarm(&pts, 0.5).unwrap());
    }

    #[test]
    fn single_polyline_is_unchanged() {
        let line = vec![[0.0, 0.0], [5.0, 3.0], [9.0, 1.0]];
        let out = bundle(std::slice::from_ref(&line), &BundleParams::default()).unwrap();
        assert_eq!(out, vec![line]);
    }

    #[test]
    fn parallel_lines_attract() {
        let lines = vec![vec![[0.0, 0.0], [10.0, 0.0]], vec![[0.0, 1.0], [10.0, 1.0]]];
        let out = bundle(&lines, &BundleParams::default()).unwrap();
        for (o, l) in out.iter().zip(&lines) {
            assert_eq!(o[0], l[0]);
            assert_eq!(o[o.len() - 1], l[1]);
            assert_eq!(o.len(), 2 + 32);
        }
        let mid = 17;
        assert_eq!(out[0][mid][0], out[1][mid][0]);
        assert!((out[0][mid][1] - out[1][mid][1]).abs() < 1.0);
    }

    #[test]
    fn identical_lines_stay_identical() {
        let line = vec![[0.0, 0.0], [4.0, 2.0], [10.0, 2.5]];
        let other = vec![[1.0, 0.5], [5.0, 2.2], [9.0, 2.0]];
        let out = bundle(&[line.clone(), line.clone(), other], &BundleParams::default()).unwrap();
        assert_eq!(out[0], out[1]);
    }

    #[test]
    fn degenerate_input() {
        assert_eq!(
            bundle(&[vec![[0.0, 0.0]]], &BundleParams::default()),
            Err(LayoutError::TooFewPoints(0))
        );
        let lines = vec![vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.0]], vec![[0.0, 0.1], [1.0, 0.1]]];
        let out = bundle(&lines, &BundleParams::default()).unwrap();
        assert_eq!(out[0][..2], [[0.0, 0.0], [0.0, 0.0]]);
    }
}
