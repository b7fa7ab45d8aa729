//! Observables along trajectories and measurement of their decay.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Configuration, Kernel, Trajectory};
use crate::error::{Error, Result};
use crate::graphs::{dirichlet_energy, ensure_balanced, BALANCE_TOL};

/// Observables below this value count as consensus; strictness is not asserted there.
pub const CONSENSUS_LEVEL: f64 = 1e-10;

/// A window factor counts as strict when it is below `1 - STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-12;

/// Relative tolerance when matching window endpoints to sample times.
const SAMPLE_MATCH_TOL: f64 = 1e-9;

/// Maximum pairwise Euclidean distance (0 for a single agent).
pub fn diameter(x: &Configuration) -> f64 {
    let mut best = 0.0_f64;
    for i in 0..x.n() {
        for j in (i + 1)..x.n() {
            best = best.max(x.dist2(i, j));
        }
    }
    best.sqrt()
}

pub fn mean(x: &Configuration) -> Vec<f64> {
    let mut m = vec![0.0; x.d()];
    for p in x.points() {
        for (acc, v) in m.iter_mut().zip(p) {
            *acc += v;
        }
    }
    let inv = 1.0 / x.n() as f64;
    m.iter_mut().for_each(|v| *v *= inv);
    m
}

/// `(1/N) Σ_i |x_i - mean(x)|²`.
pub fn variance(x: &Configuration) -> f64 {
    let m = mean(x);
    let s: f64 = x
        .points()
        .map(|p| p.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    s / x.n() as f64
}

/// `max_i |x_i|`.
pub fn max_norm(x: &Configuration) -> f64 {
    x.points()
        .map(|p| p.iter().map(|c| c * c).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Support function `max_i ⟨x_i, u⟩` of the agents' convex hull.
pub fn support(x: &Configuration, u: &[f64]) -> f64 {
    x.points()
        .map(|p| p.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Ordered index pairs attaining the diameter within `tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterPairSet {
    pub pairs: Vec<(usize, usize)>,
    pub value: f64,
}

pub fn diameter_pairs(x: &Configuration, tol: f64) -> DiameterPairSet {
    let value = diameter(x);
    let mut pairs = Vec::new();
    for i in 0..x.n() {
        for j in 0..x.n() {
            if i != j && x.dist2(i, j).sqrt() >= value - tol {
                pairs.push((i, j));
            }
        }
    }
    DiameterPairSet { pairs, value }
}

/// Tie tolerance used when validating maximiser pairs.
pub const PAIR_TOL: f64 = 1e-9;

/// `⟨x_i, x_i - x_j⟩ - ⟨y, x_i - x_j⟩` for an arbitrary point `y ≠ x_i`.
///
/// For any `y` in the hull of the current or any later state this is
/// positive whenever `(i, j)` realises the diameter of `x`.
pub fn maximizer_gap(x: &Configuration, pair: (usize, usize), y: &[f64]) -> Result<f64> {
    let (i, j) = pair;
    if i >= x.n() || j >= x.n() || i == j {
        return Err(Error::InvalidPair { i, j });
    }
    if y.len() != x.d() {
        return Err(Error::DimensionMismatch {
            expected: x.d(),
            found: y.len(),
        });
    }
    if x.dist2(i, j).sqrt() < diameter(x) - PAIR_TOL {
        return Err(Error::InvalidPair { i, j });
    }
    let (xi, xj) = (x.point(i), x.point(j));
    if xi == y {
        return Err(Error::InvalidInput(format!("test point coincides with agent {i}")));
    }
    Ok(xi.iter().zip(xj).zip(y).map(|((a, b), c)| (a - c) * (a - b)).sum())
}

/// [`maximizer_gap`] with `y` taken as agent `y_index` of `x` itself.
pub fn check_maximizer_geometry(x: &Configuration, pair: (usize, usize), y_index: usize) -> Result<f64> {
    if y_index >= x.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            found: y_index,
        });
    }
    if y_index == pair.0 {
        return Err(Error::InvalidInput(
            "test agent must differ from the first pair index".into(),
        ));
    }
    maximizer_gap(x, pair, x.point(y_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    Diameter,
    Variance,
}

impl Observable {
    pub fn eval(self, x: &Configuration) -> f64 {
        match self {
            Observable::Diameter => diameter(x),
            Observable::Variance => variance(x),
        }
    }
}

/// Per-window ratios `O(t + τ) / O(t)` of an observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub kind: Observable,
    pub tau: f64,
    pub starts: Vec<f64>,
    pub factors: Vec<f64>,
    pub kappa_hat: f64,
    pub all_strict: bool,
    /// First sample time at which the observable fell to the consensus level, if any.
    pub consensus_at: Option<f64>,
}

fn find_sample(times: &[f64], t: f64) -> Option<usize> {
    let tol = SAMPLE_MATCH_TOL * t.abs().max(1.0);
    let k = times.partition_point(|&s| s < t - tol);
    (k < times.len() && (times[k] - t).abs() <= tol).then_some(k)
}

/// Window contraction factors at every sample `t` for which `t + τ` is also a sample.
///
/// Windows starting once the observable is at the consensus level are not
/// reported; `all_strict` holds when every reported factor is below `1 - 1e-12`.
pub fn window_contraction(traj: &Trajectory, tau: f64, observable: Observable) -> Result<ContractionReport> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be > 0, got {tau}")));
    }
    let span = traj.span();
    if span < tau * (1.0 - SAMPLE_MATCH_TOL) {
        return Err(Error::SpanTooShort { span, tau });
    }
    let values: Vec<f64> = traj.states.iter().map(|s| observable.eval(s)).collect();
    let consensus_at = values.iter().position(|&v| v <= CONSENSUS_LEVEL).map(|k| traj.times[k]);

    let mut starts = Vec::new();
    let mut factors = Vec::new();
    let mut aligned = 0usize;
    for (k, &t) in traj.times.iter().enumerate() {
        let Some(m) = find_sample(&traj.times, t + tau) else {
            continue;
        };
        aligned += 1;
        if values[k] <= CONSENSUS_LEVEL {
            continue;
        }
        starts.push(t);
        factors.push(values[m] / values[k]);
    }
    if aligned == 0 {
        return Err(Error::UnalignedWindows { tau });
    }
    let kappa_hat = factors.iter().copied().fold(0.0, f64::max);
    let all_strict = factors.iter().all(|&f| f < 1.0 - STRICT_MARGIN);
    Ok(ContractionReport {
        kind: observable,
        tau,
        starts,
        factors,
        kappa_hat,
        all_strict,
        consensus_at,
    })
}

/// Per-window log slopes `(ln O(t + τ) - ln O(t)) / τ` at every aligned start
/// whose observable exceeds `floor`.
pub fn window_log_slopes(traj: &Trajectory, tau: f64, observable: Observable, floor: f64) -> Result<Vec<(f64, f64)>> {
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!("tau must be > 0, got {tau}")));
    }
    let span = traj.span();
    if span < tau * (1.0 - SAMPLE_MATCH_TOL) {
        return Err(Error::SpanTooShort { span, tau });
    }
    let values: Vec<f64> = traj.states.iter().map(|s| observable.eval(s)).collect();
    let mut out = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        if values[k] <= floor {
            continue;
        }
        if let Some(m) = find_sample(&traj.times, t + tau) {
            out.push((t, (values[m].ln() - values[k].ln()) / tau));
        }
    }
    Ok(out)
}

/// Exponential envelope `alpha · value(0) · exp(-gamma t)` fitted in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub alpha: f64,
    pub gamma: f64,
    pub rms_log_residual: f64,
    pub t_range: (f64, f64),
}

impl DecayFit {
    /// Envelope constants `α = 1/κ^τ`, `γ = -log(κ)/τ` implied by a uniform window factor `κ`.
    pub fn from_window_factor(kappa: f64, tau: f64) -> (f64, f64) {
        (1.0 / kappa.powf(tau), -kappa.ln() / tau)
    }
}

/// Ordinary least squares of `log(values / values[0])` against time.
pub fn fit_exponential(times: &[f64], values: &[f64]) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "exponential fit needs at least 3 samples, got {}",
            times.len()
        )));
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, &v)| !(v > 0.0)) {
        return Err(Error::NonPositiveValue { index, value });
    }
    let v0 = values[0];
    let ys: Vec<f64> = values.iter().map(|v| (v / v0).ln()).collect();
    let n = times.len() as f64;
    let tm = times.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, y) in times.iter().zip(&ys) {
        sxy += (t - tm) * (y - ym);
        sxx += (t - tm) * (t - tm);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidInput("exponential fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let rss: f64 = times
        .iter()
        .zip(&ys)
        .map(|(t, y)| {
            let r = y - (intercept + slope * t);
            r * r
        })
        .sum();
    Ok(DecayFit {
        alpha: intercept.exp(),
        gamma: -slope,
        rms_log_residual: (rss / n).sqrt(),
        t_range: (times[0], *times.last().unwrap()),
    })
}

/// Index of the first sample whose value drops below `rel · values[0]`, or
/// `values.len()`; fits should use the prefix before it.
pub fn fit_cutoff(values: &[f64], rel: f64) -> usize {
    let floor = values.first().map_or(0.0, |v| v * rel);
    values
        .iter()
        .position(|&v| !(v >= floor) || v <= 0.0)
        .unwrap_or(values.len())
}

/// Largest deviation between the numerical derivative of `V` and `-2 c E_A(x)`
/// along a linear (`Constant(c)`) trajectory under a balanced signal.
///
/// The derivative at each sample comes from the Lagrange interpolant through
/// up to five neighbouring samples of the same smooth piece. A(t) is
/// right-continuous, so a sample sitting on a switch belongs to the piece that
/// starts there; the final sample belongs to the piece it closes. Pieces
/// holding fewer than three samples are skipped.
pub fn variance_dissipation_residual(traj: &Trajectory) -> Result<f64> {
    let c = match traj.kernel {
        Kernel::Constant { c } => c,
        other => {
            return Err(Error::InvalidInput(format!(
                "dissipation identity needs a constant kernel, got {other:?}"
            )))
        }
    };
    let sig = &traj.signal;
    for p in sig.pieces() {
        ensure_balanced(p, BALANCE_TOL)?;
    }
    let ts = &traj.times;
    let vs: Vec<f64> = traj.states.iter().map(variance).collect();
    let m = ts.len();
    if m < 3 {
        return Ok(0.0);
    }
    let scale = ts[m - 1].abs().max(1.0);
    let switches = sig.switch_times(ts[0], ts[m - 1]);
    let tol = 1e-12 * scale;
    let mut cuts: Vec<usize> = (1..m - 1)
        .filter(|&k| switches.iter().any(|&s| (s - ts[k]).abs() <= tol))
        .collect();
    cuts.insert(0, 0);
    cuts.push(m - 1);

    let mut worst = 0.0_f64;
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let width = (hi - lo + 1).min(5);
        if width < 3 {
            continue;
        }
        // the last sample of a segment is the first of the next one
        let last = if hi == m - 1 { hi } else { hi - 1 };
        let a = sig.evaluate(0.5 * (ts[lo] + ts[hi]));
        for k in lo..=last {
            let first = k.saturating_sub(width / 2).clamp(lo, hi + 1 - width);
            let deriv = lagrange_derivative(&ts[first..first + width], &vs[first..first + width], k - first);
            let energy = dirichlet_energy(a, &traj.states[k])?;
            worst = worst.max((deriv + 2.0 * c * energy).abs());
        }
    }
    Ok(worst)
}

/// Derivative at `t[at]` of the polynomial interpolating `(t, v)`.
fn lagrange_derivative(t: &[f64], v: &[f64], at: usize) -> f64 {
    let x = t[at];
    let p = t.len();
    let mut total = 0.0;
    for j in 0..p {
        let denom: f64 = (0..p).filter(|&l| l != j).map(|l| t[j] - t[l]).product();
        let mut numer = 0.0;
        for q in (0..p).filter(|&q| q != j) {
            numer += (0..p).filter(|&l| l != j && l != q).map(|l| x - t[l]).product::<f64>();
        }
        total += v[j] * numer / denom;
    }
    total
}

/// Serialized analysis output for one observable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub kind: Observable,
    pub kappa_hat: f64,
    pub factors: Vec<f64>,
    pub fit: Option<DecayFit>,
}
