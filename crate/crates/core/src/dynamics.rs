//! First-order cooperative dynamics
//! `ẋ_i = (1/N) Σ_j a_ij(t) φ(|x_i - x_j|) (x_j - x_i)`
//! integrated with fixed-step RK4 under a piecewise-constant signal.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::AdjacencyMatrix;
use crate::signals::PiecewiseConstantSignal;

/// Positions of `n` agents in `d`-dimensional space, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Configuration {
    n: usize,
    d: usize,
    positions: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Configuration {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Configuration::from_rows(&rows)
    }
}

impl From<Configuration> for Vec<Vec<f64>> {
    fn from(c: Configuration) -> Self {
        c.points().map(<[f64]>::to_vec).collect()
    }
}

impl Configuration {
    pub fn new(n: usize, d: usize, positions: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "configuration needs n >= 1 and d >= 1 (n = {n}, d = {d})"
            )));
        }
        if positions.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                found: positions.len(),
            });
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("configuration has non-finite coordinates".into()));
        }
        Ok(Configuration { n, d, positions })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: r.len(),
            });
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks(self.d)
    }

    /// Squared Euclidean distance between agents `i` and `j`.
    pub fn dist2(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// Applies `f` to every point.
    pub fn map_points(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> Configuration {
        let mut positions = vec![0.0; self.positions.len()];
        for (src, dst) in self.positions.chunks(self.d).zip(positions.chunks_mut(self.d)) {
            f(src, dst);
        }
        Configuration {
            n: self.n,
            d: self.d,
            positions,
        }
    }

    fn same_shape(&self, other: &Configuration) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: other.d,
            });
        }
        Ok(())
    }
}

/// Interaction kernel `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Constant {
        c: f64,
    },
    /// `φ(r) = k / (1 + r²)^β`.
    CuckerSmale {
        k: f64,
        beta: f64,
    },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Kernel::Constant { c } => c > 0.0 && c.is_finite(),
            Kernel::CuckerSmale { k, beta } => k > 0.0 && k.is_finite() && beta >= 0.0 && beta.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid kernel parameters {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Kernel::Constant { c } => c,
            Kernel::CuckerSmale { k, beta } => {
                if beta == 0.0 {
                    k
                } else {
                    k / (1.0 + r * r).powf(beta)
                }
            }
        }
    }

    #[inline]
    fn eval_sq(&self, r2: f64) -> f64 {
        match *self {
            Kernel::Constant { c } => c,
            Kernel::CuckerSmale { k, beta } => {
                if beta == 0.0 {
                    k
                } else if beta == 1.0 {
                    k / (1.0 + r2)
                } else {
                    k / (1.0 + r2).powf(beta)
                }
            }
        }
    }
}

/// `(c_φ, C_φ)`: infimum and supremum of `φ` on `[0, diam_max]`.
pub fn kernel_bounds(k: &Kernel, diam_max: f64) -> Result<(f64, f64)> {
    if !(diam_max >= 0.0) {
        return Err(Error::InvalidInput(format!("diam_max must be >= 0, got {diam_max}")));
    }
    Ok(match *k {
        Kernel::Constant { c } => (c, c),
        Kernel::CuckerSmale { k: kk, .. } => (k.eval(diam_max), kk),
    })
}

/// Velocity field of the cooperative dynamics at `x` under adjacency `a`.
pub fn rhs(x: &Configuration, a: &AdjacencyMatrix, k: &Kernel) -> Result<Configuration> {
    if a.n() != x.n {
        return Err(Error::DimensionMismatch {
            expected: x.n,
            found: a.n(),
        });
    }
    let mut v = vec![0.0; x.positions.len()];
    rhs_into(&x.positions, x.n, x.d, a, k, &mut v);
    Ok(Configuration {
        n: x.n,
        d: x.d,
        positions: v,
    })
}

fn rhs_into(x: &[f64], n: usize, d: usize, a: &AdjacencyMatrix, k: &Kernel, out: &mut [f64]) {
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let vi = &mut out[i * d..(i + 1) * d];
        vi.iter_mut().for_each(|c| *c = 0.0);
        for j in 0..n {
            let w = a.get(i, j);
            if j == i || w == 0.0 {
                continue;
            }
            let xj = &x[j * d..(j + 1) * d];
            let r2: f64 = xi.iter().zip(xj).map(|(p, q)| (q - p) * (q - p)).sum();
            let coef = w * k.eval_sq(r2) * inv_n;
            for c in 0..d {
                vi[c] += coef * (xj[c] - xi[c]);
            }
        }
    }
}

/// Time-stamped states of one integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Configuration>,
    pub signal: PiecewiseConstantSignal,
    pub kernel: Kernel,
}

impl Trajectory {
    pub fn span(&self) -> f64 {
        *self.times.last().unwrap() - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with header `t,x_1_1,...,x_N_d`, one row per sample, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let x0 = &self.states[0];
        let mut header = String::from("t");
        for i in 1..=x0.n {
            for c in 1..=x0.d {
                header.push_str(&format!(",x_{i}_{c}"));
            }
        }
        writeln!(w, "{header}")?;
        for (t, s) in self.times.iter().zip(&self.states) {
            write!(w, "{t:.16e}")?;
            for v in &s.positions {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Integrates from `x0` over `[0, t_end]` with RK4.
///
/// Steps never straddle a signal switch: each smooth segment is split into
/// `ceil(len / dt)` equal steps. The state after every `sample_every`-th step
/// is recorded, together with the final state.
pub fn integrate(
    x0: &Configuration,
    sig: &PiecewiseConstantSignal,
    k: &Kernel,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    integrate_with_stops(x0, sig, k, t_end, dt, sample_every, &[])
}

/// Like [`integrate`], with extra times that are forced to be step
/// boundaries and are always recorded. Signal switches are always recorded too.
pub fn integrate_with_stops(
    x0: &Configuration,
    sig: &PiecewiseConstantSignal,
    k: &Kernel,
    t_end: f64,
    dt: f64,
    sample_every: usize,
    stops: &[f64],
) -> Result<Trajectory> {
    if sig.n() != x0.n {
        return Err(Error::DimensionMismatch {
            expected: x0.n,
            found: sig.n(),
        });
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidInput(format!("t_end must be > 0, got {t_end}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if sample_every == 0 {
        return Err(Error::InvalidInput("sample_every must be >= 1".into()));
    }
    k.validate()?;

    let mut boundaries = sig.switch_times(0.0, t_end);
    boundaries.extend(stops.iter().copied().filter(|&s| s > 0.0 && s < t_end));
    boundaries.push(0.0);
    boundaries.push(t_end);
    boundaries.sort_by(f64::total_cmp);
    let min_gap = 1e-12 * t_end.max(1.0);
    boundaries.dedup_by(|a, b| (*a - *b).abs() <= min_gap);
    *boundaries.last_mut().unwrap() = t_end;

    let (n, d) = (x0.n, x0.d);
    let len = n * d;
    let mut x = x0.positions.clone();
    let mut k1 = vec![0.0; len];
    let mut k2 = vec![0.0; len];
    let mut k3 = vec![0.0; len];
    let mut k4 = vec![0.0; len];
    let mut tmp = vec![0.0; len];

    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    let mut step_count = 0usize;

    for seg in boundaries.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let adj = sig.evaluate(0.5 * (a + b));
        let steps = ((b - a) / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        for s in 1..=steps {
            rhs_into(&x, n, d, adj, k, &mut k1);
            for c in 0..len {
                tmp[c] = x[c] + 0.5 * h * k1[c];
            }
            rhs_into(&tmp, n, d, adj, k, &mut k2);
            for c in 0..len {
                tmp[c] = x[c] + 0.5 * h * k2[c];
            }
            rhs_into(&tmp, n, d, adj, k, &mut k3);
            for c in 0..len {
                tmp[c] = x[c] + h * k3[c];
            }
            rhs_into(&tmp, n, d, adj, k, &mut k4);
            for c in 0..len {
                x[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
            step_count += 1;
            let t = if s == steps { b } else { a + s as f64 * h };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState { time: t });
            }
            if step_count.is_multiple_of(sample_every) || s == steps {
                times.push(t);
                states.push(Configuration {
                    n,
                    d,
                    positions: x.clone(),
                });
            }
        }
    }

    Ok(Trajectory {
        times,
        states,
        signal: sig.clone(),
        kernel: *k,
    })
}

/// `(x - mean(x0)) / D(x0)`: the recentred, rescaled initial state has
/// diameter 1 and lies in the unit max-norm ball.
pub fn dilate(x0: &Configuration) -> Result<Configuration> {
    dilate_with(x0, x0)
}

fn dilate_with(x: &Configuration, reference: &Configuration) -> Result<Configuration> {
    x.same_shape(reference)?;
    let diam = crate::analysis::diameter(reference);
    if diam == 0.0 {
        return Err(Error::DegenerateDiameter);
    }
    let center = crate::analysis::mean(reference);
    Ok(x.map_points(|p, out| {
        for c in 0..p.len() {
            out[c] = (p[c] - center[c]) / diam;
        }
    }))
}

/// Maps every state of `traj` by `x ↦ (x - mean(x0)) / D(x0)`.
pub fn rescale_dilation(x0: &Configuration, traj: &Trajectory) -> Result<Trajectory> {
    let states = traj
        .states
        .iter()
        .map(|s| dilate_with(s, x0))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        times: traj.times.clone(),
        states,
        signal: traj.signal.clone(),
        kernel: traj.kernel,
    })
}

/// Default step: `min(1e-2, dwell / 20, tau / 100)`.
pub fn default_dt(min_dwell: f64, tau: f64) -> f64 {
    1e-2_f64.min(min_dwell / 20.0).min(tau / 100.0)
}
