//! Piecewise-constant time-varying interaction topologies and exact
//! certification of the windowed persistence conditions.
//!
//! The window average `(1/τ)∫_t^{t+τ} A(s) ds` of a piecewise-constant signal
//! is piecewise affine in `t`, with kinks only where `t` or `t + τ` crosses a
//! breakpoint. Both the scrambling coefficient and the algebraic connectivity
//! are concave in the matrix (infima of affine functionals), so their
//! composition with the window average is concave on every affine piece and
//! attains its minimum at a kink. Certification therefore evaluates a finite
//! set of critical starts and is exact up to roundoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{algebraic_connectivity, ensure_balanced, scrambling, AdjacencyMatrix, BALANCE_TOL};

/// Relative slack when comparing times (breakpoint coverage, deduplication).
const TIME_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalMode {
    /// The signal repeats with period equal to its last breakpoint.
    Periodic,
    /// The last piece extends to +∞.
    Clamped,
}

/// Signal `A(t)` with piece `k` active on `[breakpoints[k], breakpoints[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRepr", into = "SignalRepr")]
pub struct PiecewiseConstantSignal {
    n: usize,
    mode: SignalMode,
    breakpoints: Vec<f64>,
    pieces: Vec<AdjacencyMatrix>,
}

#[derive(Serialize, Deserialize)]
struct SignalRepr {
    n: usize,
    mode: SignalMode,
    breakpoints: Vec<f64>,
    pieces: Vec<AdjacencyMatrix>,
}

impl TryFrom<SignalRepr> for PiecewiseConstantSignal {
    type Error = Error;

    fn try_from(r: SignalRepr) -> Result<Self> {
        let sig = PiecewiseConstantSignal::new(r.mode, r.breakpoints, r.pieces)?;
        if sig.n != r.n {
            return Err(Error::InvalidSignal(format!(
                "declared n = {} but pieces have n = {}",
                r.n, sig.n
            )));
        }
        Ok(sig)
    }
}

impl From<PiecewiseConstantSignal> for SignalRepr {
    fn from(s: PiecewiseConstantSignal) -> Self {
        SignalRepr {
            n: s.n,
            mode: s.mode,
            breakpoints: s.breakpoints,
            pieces: s.pieces,
        }
    }
}

impl PiecewiseConstantSignal {
    pub fn new(mode: SignalMode, breakpoints: Vec<f64>, pieces: Vec<AdjacencyMatrix>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidSignal("at least one piece is required".into()));
        }
        if breakpoints.len() != pieces.len() + 1 {
            return Err(Error::InvalidSignal(format!(
                "{} pieces need {} breakpoints, found {}",
                pieces.len(),
                pieces.len() + 1,
                breakpoints.len()
            )));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::InvalidSignal("first breakpoint must be 0".into()));
        }
        if let Some(w) = breakpoints.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidSignal(format!(
                "breakpoints must be finite and strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let n = pieces[0].n();
        if let Some(k) = pieces.iter().position(|p| p.n() != n) {
            return Err(Error::InvalidSignal(format!(
                "piece {k} has n = {}, expected {n}",
                pieces[k].n()
            )));
        }
        Ok(PiecewiseConstantSignal {
            n,
            mode,
            breakpoints,
            pieces,
        })
    }

    /// A single piece on `[0, 1)`, periodic, i.e. constant for all time.
    pub fn constant(a: AdjacencyMatrix) -> Self {
        PiecewiseConstantSignal {
            n: a.n(),
            mode: SignalMode::Periodic,
            breakpoints: vec![0.0, 1.0],
            pieces: vec![a],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> SignalMode {
        self.mode
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[AdjacencyMatrix] {
        &self.pieces
    }

    /// Last breakpoint; the period in periodic mode.
    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    fn piece_index_in_base(&self, s: f64) -> usize {
        // Right-continuous: piece k is active on [b_k, b_{k+1}).
        let k = self.breakpoints.partition_point(|&b| b <= s);
        k.saturating_sub(1).min(self.pieces.len() - 1)
    }

    /// Index of the piece active at `t ≥ 0`.
    pub fn piece_index(&self, t: f64) -> usize {
        match self.mode {
            SignalMode::Periodic => self.piece_index_in_base(t.rem_euclid(self.end())),
            SignalMode::Clamped => self.piece_index_in_base(t),
        }
    }

    pub fn evaluate(&self, t: f64) -> &AdjacencyMatrix {
        &self.pieces[self.piece_index(t)]
    }

    /// Every switching time in the open interval `(from, to)`, ascending.
    /// In periodic mode the breakpoints are repeated over all periods.
    pub fn switch_times(&self, from: f64, to: f64) -> Vec<f64> {
        let mut out = Vec::new();
        match self.mode {
            SignalMode::Clamped => {
                out.extend(self.breakpoints.iter().copied().filter(|&b| b > from && b < to));
            }
            SignalMode::Periodic => {
                let p = self.end();
                let mut cycle = (from / p).floor().max(0.0);
                loop {
                    let base = cycle * p;
                    if base >= to {
                        break;
                    }
                    for &b in &self.breakpoints[..self.pieces.len()] {
                        let s = base + b;
                        if s > from && s < to {
                            out.push(s);
                        }
                    }
                    cycle += 1.0;
                }
            }
        }
        out
    }

    /// Integral weights `(duration, piece)` of `A` over `[t, t + tau]`.
    fn window_weights(&self, t: f64, tau: f64) -> Vec<(f64, usize)> {
        let m = self.pieces.len();
        let mut acc = vec![0.0; m];
        match self.mode {
            SignalMode::Clamped => {
                Self::accumulate_span(&self.breakpoints, t, t + tau, &mut acc, true);
            }
            SignalMode::Periodic => {
                let p = self.end();
                let full = (tau / p).floor();
                if full > 0.0 {
                    for (k, a) in acc.iter_mut().enumerate() {
                        *a += full * (self.breakpoints[k + 1] - self.breakpoints[k]);
                    }
                }
                let rest = tau - full * p;
                if rest > 0.0 {
                    let start = t.rem_euclid(p);
                    let stop = start + rest;
                    if stop <= p {
                        Self::accumulate_span(&self.breakpoints, start, stop, &mut acc, false);
                    } else {
                        Self::accumulate_span(&self.breakpoints, start, p, &mut acc, false);
                        Self::accumulate_span(&self.breakpoints, 0.0, stop - p, &mut acc, false);
                    }
                }
            }
        }
        acc.into_iter()
            .enumerate()
            .filter(|&(_, w)| w > 0.0)
            .map(|(k, w)| (w, k))
            .collect()
    }

    /// Adds the overlap of `[lo, hi]` with every piece to `acc`. With `extend_last`,
    /// the final piece also covers everything beyond the last breakpoint.
    fn accumulate_span(bps: &[f64], lo: f64, hi: f64, acc: &mut [f64], extend_last: bool) {
        let m = acc.len();
        for k in 0..m {
            let a = bps[k];
            let b = if extend_last && k == m - 1 {
                f64::INFINITY
            } else {
                bps[k + 1]
            };
            let overlap = hi.min(b) - lo.max(a);
            if overlap > 0.0 {
                acc[k] += overlap;
            }
        }
    }

    /// Exact `(1/τ) ∫_t^{t+τ} A(s) ds`.
    pub fn window_average(&self, t: f64, tau: f64) -> Result<AdjacencyMatrix> {
        if !(t >= 0.0) || !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!(
                "window average needs t >= 0 and tau > 0 (t = {t}, tau = {tau})"
            )));
        }
        let w = self.window_weights(t, tau);
        Ok(AdjacencyMatrix::convex_combination(
            self.n,
            w.iter().map(|&(d, k)| (d, &self.pieces[k])),
        ))
    }
}

/// Window length `tau > 0` and threshold `mu ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub tau: f64,
    pub mu: f64,
}

impl Window {
    pub fn new(tau: f64, mu: f64) -> Result<Self> {
        let w = Window { tau, mu };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidInput(format!("window tau must be > 0, got {}", self.tau)));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "window mu must lie in (0, 1], got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PersistenceKind {
    Scrambling,
    Connectivity,
}

impl PersistenceKind {
    fn metric(self, a: &AdjacencyMatrix) -> Result<f64> {
        match self {
            PersistenceKind::Scrambling => Ok(scrambling(a)),
            PersistenceKind::Connectivity => algebraic_connectivity(a, BALANCE_TOL),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub kind: PersistenceKind,
    pub window: Window,
    pub infimum_value: f64,
    pub worst_start: f64,
    pub passes: bool,
    pub checked_starts: usize,
}

/// Windowed metric at a single start time.
pub fn windowed_metric(sig: &PiecewiseConstantSignal, kind: PersistenceKind, t: f64, tau: f64) -> Result<f64> {
    kind.metric(&sig.window_average(t, tau)?)
}

/// Critical window starts in `[start, stop]` for the given `tau`.
fn critical_starts(sig: &PiecewiseConstantSignal, tau: f64, start: f64, stop: f64) -> Vec<f64> {
    let mut c = vec![start, stop];
    match sig.mode {
        SignalMode::Periodic => {
            let p = sig.end();
            let first_cycle = (start / p).floor() - 1.0;
            let last_cycle = (stop / p).ceil() + 1.0;
            for &b in &sig.breakpoints {
                let shifted = (b - tau).rem_euclid(p);
                let mut cycle = first_cycle;
                while cycle <= last_cycle {
                    for base in [b, shifted] {
                        let s = cycle * p + base;
                        if s >= start && s <= stop {
                            c.push(s);
                        }
                    }
                    cycle += 1.0;
                }
            }
        }
        SignalMode::Clamped => {
            for &b in &sig.breakpoints {
                for s in [b, b - tau] {
                    if s >= start && s <= stop {
                        c.push(s);
                    }
                }
            }
        }
    }
    c.sort_by(f64::total_cmp);
    let scale = stop.abs().max(1.0);
    c.dedup_by(|a, b| (*a - *b).abs() <= TIME_EPS * scale);
    c
}

/// Exact infimum of the windowed metric over starts in `[start, stop]`.
///
/// Used directly for shifted certification intervals; [`certify_eta`] and
/// [`certify_lambda2`] call it with `start = 0`.
pub fn certify_on(
    sig: &PiecewiseConstantSignal,
    kind: PersistenceKind,
    window: Window,
    start: f64,
    stop: f64,
) -> Result<PersistenceReport> {
    window.validate()?;
    if !(start >= 0.0) || !(stop >= start) || !stop.is_finite() {
        return Err(Error::InvalidInput(format!(
            "certification interval [{start}, {stop}] is invalid"
        )));
    }
    if sig.mode == SignalMode::Clamped {
        let required = stop + window.tau;
        if sig.end() < required * (1.0 - TIME_EPS) {
            return Err(Error::HorizonUncovered {
                signal_end: sig.end(),
                required,
            });
        }
    }
    if kind == PersistenceKind::Connectivity {
        for p in &sig.pieces {
            ensure_balanced(p, BALANCE_TOL)?;
        }
    }
    let starts = critical_starts(sig, window.tau, start, stop);
    let mut infimum = f64::INFINITY;
    let mut worst = start;
    for &s in &starts {
        let v = windowed_metric(sig, kind, s, window.tau)?;
        if v < infimum {
            infimum = v;
            worst = s;
        }
    }
    Ok(PersistenceReport {
        kind,
        window,
        infimum_value: infimum,
        worst_start: worst,
        passes: infimum >= window.mu,
        checked_starts: starts.len(),
    })
}

fn certification_stop(sig: &PiecewiseConstantSignal, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput(format!("horizon must be > 0, got {horizon}")));
    }
    Ok(match sig.mode {
        SignalMode::Periodic => sig.end(),
        SignalMode::Clamped => horizon,
    })
}

/// Certifies `η(window average) ≥ μ` for every start in `[0, horizon]`
/// (one period in periodic mode).
pub fn certify_eta(sig: &PiecewiseConstantSignal, window: Window, horizon: f64) -> Result<PersistenceReport> {
    let stop = certification_stop(sig, horizon)?;
    certify_on(sig, PersistenceKind::Scrambling, window, 0.0, stop)
}

/// Certifies `λ₂(window average) ≥ μ`; every piece must be balanced.
pub fn certify_lambda2(sig: &PiecewiseConstantSignal, window: Window, horizon: f64) -> Result<PersistenceReport> {
    let stop = certification_stop(sig, horizon)?;
    certify_on(sig, PersistenceKind::Connectivity, window, 0.0, stop)
}

/// Periodic signal whose piece `k` is the symmetric star centred at agent `k`.
///
/// The schedule is fixed; `_seed` is accepted so every generator shares one
/// signature.
pub fn gen_rotating_star(n: usize, dwell: f64, _seed: u64) -> Result<PiecewiseConstantSignal> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("rotating star needs n >= 2, got {n}")));
    }
    check_dwell(dwell)?;
    let pieces: Vec<_> = (0..n).map(|k| AdjacencyMatrix::star(n, k)).collect();
    let breakpoints = (0..=n).map(|k| k as f64 * dwell).collect();
    PiecewiseConstantSignal::new(SignalMode::Periodic, breakpoints, pieces)
}

/// Round-robin perfect matchings of `n` (even) agents, circle method:
/// agent `n-1` stays fixed while the others rotate.
pub fn round_robin_matchings(n: usize) -> Vec<Vec<(usize, usize)>> {
    let m = n - 1;
    (0..m)
        .map(|r| {
            let mut pairs = vec![(r, n - 1)];
            for k in 1..n / 2 {
                let a = (r + k) % m;
                let b = (r + m - k) % m;
                pairs.push((a.min(b), a.max(b)));
            }
            pairs.sort_unstable();
            pairs
        })
        .collect()
}

/// Periodic signal cycling through round-robin matchings. During each dwell
/// the matching is on for `duty · dwell`, then the graph is the identity.
///
/// The schedule is fixed; `_seed` is accepted so every generator shares one
/// signature.
pub fn gen_blinking_pairs(n: usize, dwell: f64, duty: f64, _seed: u64) -> Result<PiecewiseConstantSignal> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "blinking pairs needs an even n >= 2, got {n}"
        )));
    }
    check_dwell(dwell)?;
    if !(duty > 0.0 && duty <= 1.0) {
        return Err(Error::InvalidInput(format!("duty must lie in (0, 1], got {duty}")));
    }
    let mut breakpoints = vec![0.0];
    let mut pieces = Vec::new();
    for (r, matching) in round_robin_matchings(n).iter().enumerate() {
        let base = r as f64 * dwell;
        pieces.push(AdjacencyMatrix::from_pairs(n, matching));
        if duty < 1.0 {
            breakpoints.push(base + duty * dwell);
            pieces.push(AdjacencyMatrix::identity(n));
        }
        breakpoints.push((r + 1) as f64 * dwell);
    }
    PiecewiseConstantSignal::new(SignalMode::Periodic, breakpoints, pieces)
}

fn check_dwell(dwell: f64) -> Result<()> {
    if dwell > 0.0 && dwell.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("dwell must be > 0, got {dwell}")))
    }
}

/// Shape of a seeded random signal.
#[derive(Debug, Clone, Copy)]
pub struct RandomSignalSpec {
    pub n: usize,
    pub pieces: usize,
    pub mode: SignalMode,
    /// Probability that an off-diagonal entry is nonzero.
    pub density: f64,
    /// Symmetric pieces (hence balanced).
    pub symmetric: bool,
    /// Breakpoints are drawn from multiples of `grid` when set.
    pub grid: Option<f64>,
    /// Nominal mean piece length.
    pub mean_dwell: f64,
}

/// Seeded random piecewise-constant signal.
///
/// Every `(seed, stream)` pair selects an independent ChaCha stream, so
/// callers can split one seed across many signals.
pub fn gen_random(spec: &RandomSignalSpec, seed: u64, stream: u64) -> Result<PiecewiseConstantSignal> {
    if spec.n == 0 || spec.pieces == 0 {
        return Err(Error::InvalidInput("random signal needs n >= 1 and pieces >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = spec.n;
    let mut breakpoints = vec![0.0];
    let mut t = 0.0;
    for _ in 0..spec.pieces {
        let len = match spec.grid {
            Some(g) => {
                let max_units = ((2.0 * spec.mean_dwell / g).round() as u64).max(1);
                rng.gen_range(1..=max_units) as f64 * g
            }
            None => spec.mean_dwell * rng.gen_range(0.2..1.8),
        };
        t += len;
        breakpoints.push(t);
    }
    if let Some(g) = spec.grid {
        // Recompute on the grid to avoid accumulated roundoff.
        for b in breakpoints.iter_mut() {
            *b = (*b / g).round() * g;
        }
    }
    let pieces = (0..spec.pieces)
        .map(|_| {
            let mut e = vec![0.0; n * n];
            for i in 0..n {
                e[i * n + i] = 1.0;
                let lo = if spec.symmetric { i + 1 } else { 0 };
                for j in lo..n {
                    if i == j {
                        continue;
                    }
                    let w = if rng.gen_bool(spec.density) {
                        match rng.gen_range(0..3) {
                            0 => 0.5,
                            1 => 1.0,
                            _ => rng.gen_range(0.0..1.0),
                        }
                    } else {
                        0.0
                    };
                    e[i * n + j] = w;
                    if spec.symmetric {
                        e[j * n + i] = w;
                    }
                }
            }
            AdjacencyMatrix::new(n, e)
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseConstantSignal::new(spec.mode, breakpoints, pieces)
}
