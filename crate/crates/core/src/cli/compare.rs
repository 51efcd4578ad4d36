//! Comparison statistics between two time series.

use crate::error::{param, Error, Result};
use crate::propagate::TimeSeries;

/// Extremum location refined by a parabola through the sample and its two
/// neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extremum {
    pub t: f64,
    pub value: f64,
}

fn refine(times: &[f64], values: &[f64], i: usize) -> Extremum {
    if i == 0 || i + 1 >= times.len() {
        return Extremum {
            t: times[i],
            value: values[i],
        };
    }
    let (y0, y1, y2) = (values[i - 1], values[i], values[i + 1]);
    let (ta, tb) = (times[i] - times[i - 1], times[i + 1] - times[i]);
    // uniform spacing is assumed for the vertex; fall back otherwise
    if (ta - tb).abs() > 1e-9 * ta.abs().max(tb.abs()) {
        return Extremum {
            t: times[i],
            value: y1,
        };
    }
    let denom = y0 - 2.0 * y1 + y2;
    if denom == 0.0 {
        return Extremum {
            t: times[i],
            value: y1,
        };
    }
    let x = 0.5 * (y0 - y2) / denom;
    Extremum {
        t: times[i] + x * ta,
        value: y1 - 0.25 * (y0 - y2) * x,
    }
}

fn in_window(t: f64, window: (f64, f64)) -> bool {
    t >= window.0 - 1e-12 && t <= window.1 + 1e-12
}

/// Strict interior local maxima inside `window`.
pub fn local_maxima(times: &[f64], values: &[f64], window: (f64, f64)) -> Vec<Extremum> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| in_window(times[i], window))
        .filter(|&i| values[i] > values[i - 1] && values[i] >= values[i + 1])
        .map(|i| refine(times, values, i))
        .collect()
}

/// Strict interior local minima inside `window`.
pub fn local_minima(times: &[f64], values: &[f64], window: (f64, f64)) -> Vec<Extremum> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    local_maxima(times, &neg, window)
        .into_iter()
        .map(|e| Extremum {
            t: e.t,
            value: -e.value,
        })
        .collect()
}

/// Global minimum inside `window`, refined when it is an interior sample.
pub fn dip(times: &[f64], values: &[f64], window: (f64, f64)) -> Option<Extremum> {
    let i = (0..times.len())
        .filter(|&i| in_window(times[i], window))
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))?;
    Some(refine(times, values, i))
}

/// Least-squares slope of peak time against peak number.
pub fn fit_period(peaks: &[Extremum]) -> Option<f64> {
    if peaks.len() < 2 {
        return None;
    }
    let n = peaks.len() as f64;
    let mean_k = (n - 1.0) / 2.0;
    let mean_t = peaks.iter().map(|p| p.t).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, p) in peaks.iter().enumerate() {
        let dk = k as f64 - mean_k;
        sxy += dk * (p.t - mean_t);
        sxx += dk * dk;
    }
    Some(sxy / sxx)
}

/// Linear interpolation of the real part at `t`; `None` outside the grid.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let (first, last) = (*times.first()?, *times.last()?);
    let tol = 1e-9 * (1.0 + t.abs());
    if t < first - tol || t > last + tol {
        return None;
    }
    let k = times.partition_point(|&x| x < t);
    if k < times.len() && (times[k] - t).abs() <= tol {
        return Some(values[k]);
    }
    if k == 0 {
        return Some(values[0]);
    }
    if k == times.len() {
        return Some(values[k - 1]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    Some(values[k - 1] * (1.0 - w) + values[k] * w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareStats {
    /// Overlap of both grids with the requested window.
    pub window: (f64, f64),
    pub points: usize,
    pub max_abs_diff: f64,
    pub t_at_max: f64,
    pub rms: f64,
    pub dip_a: Option<Extremum>,
    pub dip_b: Option<Extremum>,
    pub peaks_a: Vec<Extremum>,
    pub peaks_b: Vec<Extremum>,
    pub period_a: Option<f64>,
    pub period_b: Option<f64>,
    /// First time `|ΔRe S|` exceeds the threshold, when one was given.
    pub threshold_time: Option<f64>,
}

/// Compares `Re S` of two series over `window` on the coarser of the two
/// grids, interpolating the finer one linearly.
pub fn compare(
    a: &TimeSeries,
    b: &TimeSeries,
    window: (f64, f64),
    threshold: Option<f64>,
) -> Result<CompareStats> {
    if a.is_empty() || b.is_empty() {
        return Err(param("input", "empty time series"));
    }
    if window.1 < window.0 {
        return Err(param("window", "upper bound below lower bound"));
    }
    let lo = window.0.max(a.times[0]).max(b.times[0]);
    let hi = window.1.min(*a.times.last().unwrap()).min(*b.times.last().unwrap());
    if hi < lo - 1e-12 {
        return Err(Error::Numeric(format!(
            "time grids do not overlap within [{}, {}]",
            window.0, window.1
        )));
    }
    let (ra, rb) = (a.real(), b.real());
    let count = |s: &TimeSeries| s.times.iter().filter(|&&t| in_window(t, (lo, hi))).count();
    let (grid, grid_vals, other, other_vals) = if count(a) <= count(b) {
        (&a.times, &ra, &b.times, &rb)
    } else {
        (&b.times, &rb, &a.times, &ra)
    };

    let mut points = 0;
    let mut max_abs = 0.0f64;
    let mut t_at_max = lo;
    let mut sum2 = 0.0;
    let mut threshold_time = None;
    for (i, &t) in grid.iter().enumerate() {
        if !in_window(t, (lo, hi)) {
            continue;
        }
        let Some(o) = interpolate(other, other_vals, t) else {
            continue;
        };
        let d = (grid_vals[i] - o).abs();
        points += 1;
        sum2 += d * d;
        if d > max_abs {
            max_abs = d;
            t_at_max = t;
        }
        if threshold.is_some_and(|eps| d > eps) && threshold_time.is_none() {
            threshold_time = Some(t);
        }
    }
    if points == 0 {
        return Err(Error::Numeric("no common sample points".into()));
    }
    let peaks_a = local_maxima(&a.times, &ra, (lo, hi));
    let peaks_b = local_maxima(&b.times, &rb, (lo, hi));
    Ok(CompareStats {
        window: (lo, hi),
        points,
        max_abs_diff: max_abs,
        t_at_max,
        rms: (sum2 / points as f64).sqrt(),
        dip_a: dip(&a.times, &ra, (lo, hi)),
        dip_b: dip(&b.times, &rb, (lo, hi)),
        period_a: fit_period(&peaks_a),
        period_b: fit_period(&peaks_b),
        peaks_a,
        peaks_b,
        threshold_time,
    })
}

impl CompareStats {
    /// `key=value` report lines.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        let opt = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.10e}"));
        let ext = |e: &Option<Extremum>| {
            e.map_or("none".to_string(), |e| format!("{:.10e},{:.10e}", e.t, e.value))
        };
        let list = |p: &[Extremum]| {
            p.iter()
                .map(|e| format!("{:.10e}", e.t))
                .collect::<Vec<_>>()
                .join(",")
        };
        push("window", format!("{},{}", self.window.0, self.window.1));
        push("points", self.points.to_string());
        push("max_abs_diff", format!("{:.10e}", self.max_abs_diff));
        push("t_at_max", format!("{:.10e}", self.t_at_max));
        push("rms", format!("{:.10e}", self.rms));
        push("dip_a", ext(&self.dip_a));
        push("dip_b", ext(&self.dip_b));
        push("peaks_a", list(&self.peaks_a));
        push("peaks_b", list(&self.peaks_b));
        push("period_a", opt(self.period_a));
        push("period_b", opt(self.period_b));
        push("threshold_time", opt(self.threshold_time));
        out
    }
}
