//! Static graph quantities: scrambling coefficient, degrees, balance,
//! normalised Laplacian, algebraic connectivity and Dirichlet energy.

use serde::{Deserialize, Serialize};

use crate::dynamics::Configuration;
use crate::eigen::{constant_deflator, jacobi_eigen, matmul};
use crate::error::{Error, Result};

/// Default tolerance on `|in_degree - out_degree|` for the balance test.
pub const BALANCE_TOL: f64 = 1e-9;

/// Interaction weights of `n` agents. Entry `(i, j)` is the influence of
/// agent `j` on agent `i`; every entry lies in `[0, 1]` and the diagonal is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AdjacencyRepr", into = "AdjacencyRepr")]
pub struct AdjacencyMatrix {
    n: usize,
    entries: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct AdjacencyRepr {
    n: usize,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<AdjacencyRepr> for AdjacencyMatrix {
    type Error = Error;

    fn try_from(r: AdjacencyRepr) -> Result<Self> {
        if r.entries.len() != r.n {
            return Err(Error::InvalidAdjacency(format!(
                "n = {} but {} rows given",
                r.n,
                r.entries.len()
            )));
        }
        AdjacencyMatrix::from_rows(&r.entries)
    }
}

impl From<AdjacencyMatrix> for AdjacencyRepr {
    fn from(a: AdjacencyMatrix) -> Self {
        AdjacencyRepr {
            n: a.n,
            entries: a.rows().map(<[f64]>::to_vec).collect(),
        }
    }
}

impl AdjacencyMatrix {
    /// Builds a matrix from row-major storage, checking both invariants.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidAdjacency("agent count must be at least 1".into()));
        }
        if entries.len() != n * n {
            return Err(Error::InvalidAdjacency(format!(
                "expected {} entries, found {}",
                n * n,
                entries.len()
            )));
        }
        for (idx, &w) in entries.iter().enumerate() {
            let (i, j) = (idx / n, idx % n);
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidAdjacency(format!(
                    "entry ({i}, {j}) = {w} is outside [0, 1]"
                )));
            }
            if i == j && w != 1.0 {
                return Err(Error::InvalidAdjacency(format!(
                    "diagonal entry ({i}, {i}) = {w} must equal 1"
                )));
            }
        }
        Ok(AdjacencyMatrix { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::InvalidAdjacency(format!(
                "row {i} has {} entries, expected {n}",
                r.len()
            )));
        }
        Self::new(n, rows.concat())
    }

    /// Convex combination of matrices sharing the same `n`; weights are
    /// normalised by their sum. The diagonal is pinned to 1 and entries are
    /// clamped to `[0, 1]` to absorb roundoff.
    pub(crate) fn convex_combination<'a>(
        n: usize,
        terms: impl IntoIterator<Item = (f64, &'a AdjacencyMatrix)>,
    ) -> Self {
        let mut entries = vec![0.0; n * n];
        let mut total = 0.0;
        for (w, a) in terms {
            total += w;
            for (e, &x) in entries.iter_mut().zip(&a.entries) {
                *e += w * x;
            }
        }
        for (idx, e) in entries.iter_mut().enumerate() {
            *e = if idx / n == idx % n {
                1.0
            } else {
                (*e / total).clamp(0.0, 1.0)
            };
        }
        AdjacencyMatrix { n, entries }
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        AdjacencyMatrix { n, entries }
    }

    pub fn complete(n: usize) -> Self {
        AdjacencyMatrix {
            n,
            entries: vec![1.0; n * n],
        }
    }

    /// Symmetric star centred at `center`: row and column `center` are 1.
    pub fn star(n: usize, center: usize) -> Self {
        let mut a = Self::identity(n);
        for k in 0..n {
            a.entries[center * n + k] = 1.0;
            a.entries[k * n + center] = 1.0;
        }
        a
    }

    /// Graph whose only off-diagonal edges are the given unordered pairs, with unit weight.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut a = Self::identity(n);
        for &(i, j) in pairs {
            a.entries[i * n + j] = 1.0;
            a.entries[j * n + i] = 1.0;
        }
        a
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.n;
        (0..n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Normalised Laplacian `(D - A) / N` with `D` the diagonal of out-degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    pub n: usize,
    pub entries: Vec<f64>,
    pub degrees: Vec<f64>,
}

impl LaplacianMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `(L + Lᵀ) / 2`, row-major.
    pub fn symmetric_part(&self) -> Vec<f64> {
        let n = self.n;
        (0..n * n)
            .map(|idx| {
                let (i, j) = (idx / n, idx % n);
                0.5 * (self.entries[i * n + j] + self.entries[j * n + i])
            })
            .collect()
    }
}

/// Scrambling coefficient: the minimum over all ordered pairs `(i, j)`,
/// including `i = j`, of `(1/N) Σ_k min(a_ik, a_jk)`.
pub fn scrambling(a: &AdjacencyMatrix) -> f64 {
    let n = a.n;
    let mut best = f64::INFINITY;
    for i in 0..n {
        let ri = &a.entries[i * n..(i + 1) * n];
        // The (i, j) and (j, i) sums coincide, so scanning j >= i is enough.
        for j in i..n {
            let rj = &a.entries[j * n..(j + 1) * n];
            let shared: f64 = ri.iter().zip(rj).map(|(x, y)| x.min(*y)).sum();
            best = best.min(shared / n as f64);
        }
    }
    best
}

/// Returns `(in_degrees, out_degrees)`, both including the diagonal.
pub fn degrees(a: &AdjacencyMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let out: Vec<f64> = a.rows().map(|r| r.iter().sum()).collect();
    let inn: Vec<f64> = (0..n).map(|j| (0..n).map(|i| a.get(i, j)).sum()).collect();
    (inn, out)
}

fn balance_violation(a: &AdjacencyMatrix, tol: f64) -> Option<(usize, f64)> {
    let (inn, out) = degrees(a);
    inn.iter()
        .zip(&out)
        .map(|(x, y)| (x - y).abs())
        .enumerate()
        .find(|&(_, gap)| gap > tol)
}

pub fn is_balanced(a: &AdjacencyMatrix, tol: f64) -> bool {
    balance_violation(a, tol).is_none()
}

pub(crate) fn ensure_balanced(a: &AdjacencyMatrix, tol: f64) -> Result<()> {
    match balance_violation(a, tol) {
        None => Ok(()),
        Some((agent, gap)) => Err(Error::UnbalancedGraph { agent, gap, tol }),
    }
}

pub fn laplacian(a: &AdjacencyMatrix) -> LaplacianMatrix {
    let n = a.n;
    let (_, out) = degrees(a);
    let scale = 1.0 / n as f64;
    let entries = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            let d = if i == j { out[i] } else { 0.0 };
            (d - a.entries[idx]) * scale
        })
        .collect();
    LaplacianMatrix {
        n,
        entries,
        degrees: out,
    }
}

/// Algebraic connectivity together with a unit minimising direction
/// orthogonal to the constant vector.
#[derive(Debug, Clone)]
pub struct FiedlerPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Smallest eigenvalue of the symmetric part of the Laplacian restricted to
/// the complement of the constants, with its eigenvector.
///
/// The constants are deflated by a Householder reflection; the remaining
/// `(n-1)`-dimensional block is diagonalised with Jacobi rotations. Values in
/// `[-tol, 0)` are clamped to zero. For `n = 1` the complement is empty and
/// the result is 0 with an empty vector.
pub fn fiedler_pair(a: &AdjacencyMatrix, tol: f64) -> Result<FiedlerPair> {
    ensure_balanced(a, tol)?;
    let n = a.n;
    if n == 1 {
        return Ok(FiedlerPair {
            value: 0.0,
            vector: Vec::new(),
        });
    }
    let sym = laplacian(a).symmetric_part();
    let h = constant_deflator(n);
    let rotated = matmul(&matmul(&h, &sym, n), &h, n);
    let m = n - 1;
    let block: Vec<f64> = (0..m * m).map(|idx| rotated[(idx / m + 1) * n + idx % m + 1]).collect();
    let eig = jacobi_eigen(&block, m);
    let reduced = eig.vector(0);
    // Back to the original basis: x = H [0; reduced].
    let vector: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|k| h[i * n + k + 1] * reduced[k]).sum())
        .collect();
    let raw = eig.values[0];
    if raw < -tol {
        return Err(Error::InvalidInput(format!(
            "symmetric Laplacian part has eigenvalue {raw:e} below -{tol:e}"
        )));
    }
    Ok(FiedlerPair {
        value: raw.max(0.0),
        vector,
    })
}

/// Algebraic connectivity of a balanced graph.
pub fn algebraic_connectivity(a: &AdjacencyMatrix, tol: f64) -> Result<f64> {
    fiedler_pair(a, tol).map(|p| p.value)
}

/// `(1 / 2N²) Σ_{i,j} a_ij |x_i - x_j|²`.
pub fn dirichlet_energy(a: &AdjacencyMatrix, x: &Configuration) -> Result<f64> {
    let n = a.n;
    if x.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.n(),
        });
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let w = a.get(i, j);
            if w != 0.0 && i != j {
                s += w * x.dist2(i, j);
            }
        }
    }
    Ok(s / (2.0 * (n * n) as f64))
}
