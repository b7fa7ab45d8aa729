//! Independent reference computations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use consensus_lab::AdjacencyMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Scrambling coefficient by literal evaluation over all ordered pairs.
pub fn scrambling_direct(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                s += a[i][k].min(a[j][k]);
            }
            best = best.min(s / n as f64);
        }
    }
    best
}

pub fn rows(a: &AdjacencyMatrix) -> Vec<Vec<f64>> {
    a.rows().map(|r| r.to_vec()).collect()
}

/// `(D_out - A) / N` built from scratch.
pub fn laplacian_direct(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        let out: f64 = a[i].iter().sum();
        for j in 0..n {
            l[i][j] = (if i == j { out } else { 0.0 } - a[i][j]) / n as f64;
        }
    }
    l
}

pub fn is_balanced_direct(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    (0..n).all(|i| {
        let out: f64 = a[i].iter().sum();
        let inn: f64 = (0..n).map(|k| a[k][i]).sum();
        (out - inn).abs() <= 1e-9
    })
}

/// Orthonormal basis of the complement of the constants (Gram-Schmidt on
/// `e_1 - e_0, e_2 - e_0, ...`).
fn complement_basis(n: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 1..n {
        let mut v = vec![0.0; n];
        v[k] = 1.0;
        v[0] = -1.0;
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= p * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

/// Point on the unit sphere `S^{m-1}` from `m - 1` hyperspherical angles.
fn sphere_point(angles: &[f64]) -> Vec<f64> {
    let m = angles.len() + 1;
    let mut p = vec![1.0; m];
    for (k, &a) in angles.iter().enumerate() {
        for slot in p.iter_mut().take(k + 1).skip(k) {
            *slot *= a.cos();
        }
        for slot in p.iter_mut().skip(k + 1) {
            *slot *= a.sin();
        }
    }
    p
}

fn rayleigh(l: &[Vec<f64>], basis: &[Vec<f64>], angles: &[f64]) -> f64 {
    let c = sphere_point(angles);
    let n = l.len();
    let mut v = vec![0.0; n];
    for (ck, b) in c.iter().zip(basis) {
        for (x, y) in v.iter_mut().zip(b) {
            *x += ck * y;
        }
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            q += v[i] * l[i][j] * v[j];
        }
    }
    q
}

/// Minimum of `vᵀ L v` over unit `v` orthogonal to the constants, by a
/// coarse angular grid followed by pattern-search refinement from the best
/// few grid points.
pub fn lambda2_grid(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    if n == 1 {
        return 0.0;
    }
    let l = laplacian_direct(a);
    let basis = complement_basis(n);
    let m = n - 1;
    if m == 1 {
        return rayleigh(&l, &basis, &[]).max(0.0);
    }
    let dims = m - 1;
    let per_axis = match dims {
        1 => 64,
        2 => 32,
        _ => 14,
    };
    let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut idx = vec![0usize; dims];
    loop {
        let angles: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| {
                let range = if k + 1 == dims {
                    2.0 * std::f64::consts::PI
                } else {
                    std::f64::consts::PI
                };
                (i as f64 + 0.5) * range / per_axis as f64
            })
            .collect();
        seeds.push((rayleigh(&l, &basis, &angles), angles));
        let mut k = 0;
        loop {
            if k == dims {
                break;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == dims {
            break;
        }
    }
    seeds.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = f64::INFINITY;
    for (mut val, mut angles) in seeds.into_iter().take(4) {
        let mut step = std::f64::consts::PI / per_axis as f64;
        while step > 1e-9 {
            let mut improved = false;
            for k in 0..dims {
                for sign in [-1.0, 1.0] {
                    let mut trial = angles.clone();
                    trial[k] += sign * step;
                    let v = rayleigh(&l, &basis, &trial);
                    if v < val {
                        val = v;
                        angles = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        best = best.min(val);
    }
    best.max(0.0)
}

/// All `n × n` matrices with unit diagonal and off-diagonal entries in `{0, 1/2, 1}`.
pub fn all_grid_matrices(n: usize) -> Vec<Vec<Vec<f64>>> {
    let off = n * (n - 1);
    let total = 3usize.pow(off as u32);
    let vals = [0.0, 0.5, 1.0];
    (0..total)
        .map(|mut code| {
            let mut a = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        a[i][j] = 1.0;
                    } else {
                        a[i][j] = vals[code % 3];
                        code /= 3;
                    }
                }
            }
            a
        })
        .collect()
}

/// Random grid matrix; `style` 0 is unstructured, 1 symmetric, 2 an average of
/// two permutation matrices (balanced but typically directed).
pub fn random_grid_matrix(r: &mut ChaCha8Rng, n: usize, style: u32) -> Vec<Vec<f64>> {
    let vals = [0.0, 0.5, 1.0];
    let mut a = vec![vec![0.0; n]; n];
    match style {
        0 => {
            for row in a.iter_mut() {
                for x in row.iter_mut() {
                    *x = vals[r.gen_range(0..3)];
                }
            }
        }
        1 => {
            for i in 0..n {
                for j in i + 1..n {
                    let v = vals[r.gen_range(0..3)];
                    a[i][j] = v;
                    a[j][i] = v;
                }
            }
        }
        _ => {
            for _ in 0..2 {
                let mut perm: Vec<usize> = (0..n).collect();
                for k in (1..n).rev() {
                    perm.swap(k, r.gen_range(0..=k));
                }
                for (i, &p) in perm.iter().enumerate() {
                    a[i][p] += 0.5;
                }
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn to_matrix(a: &[Vec<f64>]) -> AdjacencyMatrix {
    AdjacencyMatrix::from_rows(a).unwrap()
}

/// Reference variance `(1/N) Σ |x_i - mean|²`.
pub fn variance_direct(x: &[Vec<f64>]) -> f64 {
    let n = x.len() as f64;
    let d = x[0].len();
    let mean: Vec<f64> = (0..d).map(|c| x.iter().map(|p| p[c]).sum::<f64>() / n).collect();
    x.iter()
        .map(|p| p.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / n
}

/// Reference Dirichlet energy `(1/2N²) Σ a_ij |x_i - x_j|²`.
pub fn dirichlet_direct(a: &[Vec<f64>], x: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d2: f64 = x[i].iter().zip(&x[j]).map(|(p, q)| (p - q) * (p - q)).sum();
            s += a[i][j] * d2;
        }
    }
    s / (2.0 * (n * n) as f64)
}

/// Two agents at `∓1` under the all-ones graph and `Constant(1)`: the
/// separation obeys `Δ' = -Δ`, so `D(t) = 2 e^{-t}`.
pub fn two_agent_diameter(t: f64) -> f64 {
    2.0 * (-t).exp()
}

pub fn random_points(r: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| r.gen_range(-scale..scale)).collect())
        .collect()
}

/// 64 seeded unit directions in `R^d`.
pub fn directions(d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..64)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| r.gen_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-3 && norm <= 1.0 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// Random balanced signal whose breakpoints and window length are integer
/// multiples of `grid = span / 100`, where `span` is the certified range.
///
/// Periodic signals have period `span`; clamped ones end at `span + tau` so
/// the range `[0, span]` is covered. Returns the signal, `tau` and `span`.
pub fn aligned_signal(r: &mut ChaCha8Rng, periodic: bool) -> (consensus_lab::PiecewiseConstantSignal, f64, f64) {
    use consensus_lab::{PiecewiseConstantSignal, SignalMode};
    let n = r.gen_range(2..=5);
    let pieces = r.gen_range(1..=6);
    let span = [1.0, 2.0, 3.0][r.gen_range(0..3)];
    let grid = span / 100.0;
    let tau_units: usize = if periodic {
        r.gen_range(1..=250)
    } else {
        r.gen_range(1..=100)
    };
    let total: usize = if periodic { 100 } else { 100 + tau_units };
    // random composition of `total` into `pieces` positive parts
    let mut cuts: Vec<usize> = Vec::new();
    while cuts.len() + 1 < pieces {
        let c = r.gen_range(1..total);
        if !cuts.contains(&c) {
            cuts.push(c);
        }
    }
    cuts.sort_unstable();
    let mut units = vec![0];
    units.extend(cuts);
    units.push(total);
    let breakpoints: Vec<f64> = units.iter().map(|&u| u as f64 * span / 100.0).collect();
    let mats = (0..pieces)
        .map(|_| {
            let style = r.gen_range(1..=2);
            let mut a = random_grid_matrix(r, n, style);
            if style == 1 {
                // continuous symmetric weights
                for i in 0..n {
                    for j in i + 1..n {
                        if a[i][j] > 0.0 {
                            let w = r.gen_range(0.05..1.0);
                            a[i][j] = w;
                            a[j][i] = w;
                        }
                    }
                }
            }
            to_matrix(&a)
        })
        .collect();
    let mode = if periodic {
        SignalMode::Periodic
    } else {
        SignalMode::Clamped
    };
    let sig = PiecewiseConstantSignal::new(mode, breakpoints, mats).unwrap();
    (sig, tau_units as f64 * grid, span)
}

/// Midpoint Riemann sum of the window average with `steps` cells.
pub fn window_average_riemann(
    sig: &consensus_lab::PiecewiseConstantSignal,
    t: f64,
    tau: f64,
    steps: usize,
) -> Vec<Vec<f64>> {
    let n = sig.n();
    let mut acc = vec![vec![0.0; n]; n];
    let h = tau / steps as f64;
    for k in 0..steps {
        let a = sig.evaluate(t + (k as f64 + 0.5) * h);
        for (i, row) in acc.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x += a.get(i, j) / steps as f64;
            }
        }
    }
    acc
}
