use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Scope};
use crate::data::{Dataset, VariableRole};

/// Default number of grid intervals; the curve has `steps + 1` points.
pub const DEFAULT_KDE_STEPS: usize = 512;

/// Uniform evaluation grid over `[lo, hi]` split into `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl KdeGrid {
    /// Grid spanning five bandwidths beyond the data on each side.
    pub fn around(ages: &[f64], bandwidth: f64, steps: usize) -> Self {
        let lo = ages.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        KdeGrid {
            lo: lo - 5.0 * bandwidth,
            hi: hi + 5.0 * bandwidth,
            steps,
        }
    }

    fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let width = (self.hi - self.lo) / self.steps as f64;
        (0..=self.steps).map(move |i| if i == self.steps { self.hi } else { self.lo + width * i as f64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    /// `[age in months, density]` pairs.
    pub points: Vec<[f64; 2]>,
    pub mean: f64,
    pub bandwidth: f64,
    pub n: usize,
}

impl KdeCurve {
    /// Trapezoidal integral of the density over the grid.
    pub fn integral(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| 0.5 * (w[1][0] - w[0][0]) * (w[0][1] + w[1][1]))
            .sum()
    }
}

/// Population curve plus the curve of the scoped subjects, if any have the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualKde {
    pub event: String,
    pub population: KdeCurve,
    pub subgroup: Option<KdeCurve>,
}

/// Linear-interpolation quantile (R type 7) of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`. When one spread estimate is zero the
/// other is used; when both are, the bandwidth is one month.
pub fn silverman_bandwidth(ages: &[f64]) -> f64 {
    let n = ages.len();
    if n < 2 {
        return 1.0;
    }
    let mean = ages.iter().sum::<f64>() / n as f64;
    let sd = (ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let mut sorted = ages.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = (quantile(&sorted, 0.75) - quantile(&sorted, 0.25)) / 1.34;
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => 0.0,
    };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    if h > 0.0 && h.is_finite() {
        h
    } else {
        1.0
    }
}

/// Gaussian kernel density with Silverman bandwidth.
pub fn kde(ages: &[f64], grid: Option<KdeGrid>) -> Result<KdeCurve, AnalyticsError> {
    if ages.is_empty() {
        return Err(AnalyticsError::EmptyAges);
    }
    if ages.iter().any(|a| !a.is_finite()) {
        return Err(AnalyticsError::InvalidParameter("non-finite age".into()));
    }
    let h = silverman_bandwidth(ages);
    let grid = grid.unwrap_or_else(|| KdeGrid::around(ages, h, DEFAULT_KDE_STEPS));
    if grid.steps == 0 || !(grid.hi > grid.lo) {
        return Err(AnalyticsError::InvalidParameter(format!(
            "grid [{}, {}] with {} steps",
            grid.lo, grid.hi, grid.steps
        )));
    }
    let norm = 1.0 / (ages.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let points = grid
        .points()
        .map(|x| {
            let density = ages.iter().map(|a| (-0.5 * ((x - a) / h).powi(2)).exp()).sum::<f64>() * norm;
            [x, density]
        })
        .collect();
    Ok(KdeCurve {
        points,
        mean: ages.iter().sum::<f64>() / ages.len() as f64,
        bandwidth: h,
        n: ages.len(),
    })
}

/// Event-age densities for every subject and for the subjects in `scope`.
/// Each curve gets its own grid spanning five bandwidths past its data.
pub fn event_kde(ds: &Dataset, scope: &Scope, event: &str, steps: usize) -> Result<DualKde, AnalyticsError> {
    match ds.variable(event) {
        Some(v) if v.role == VariableRole::OutcomeEvent => {}
        _ => return Err(AnalyticsError::UnknownEvent(event.to_string())),
    }
    let ages = |in_scope: &dyn Fn(&str) -> bool| -> Vec<f64> {
        ds.subjects
            .iter()
            .filter(|s| in_scope(&s.id))
            .filter_map(|s| s.events.get(event).copied())
            .collect()
    };
    let curve = |ages: &[f64]| {
        let h = silverman_bandwidth(ages);
        kde(ages, Some(KdeGrid::around(ages, h, steps)))
    };
    let population = curve(&ages(&|_| true))?;
    let sub_ages = ages(&|id| scope.contains(id));
    let subgroup = if sub_ages.is_empty() { None } else { Some(curve(&sub_ages)?) };
    Ok(DualKde {
        event: event.to_string(),
        population,
        subgroup,
    })
}
