//! Independent reference computations for integration and acceptance tests.
//!
//! Everything here works on plain `Vec<Vec<f64>>` (row-major, one row per
//! sample) with textbook algorithms: normal equations, Gaussian elimination
//! with partial pivoting, cofactor-free determinants. None of it shares code
//! with the library's QR and Cholesky paths.

#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use shmx_core::lattice::{LatticeSpec, Node, Spring};
use shmx_core::signal::{parse_label_list, TimeSeries};

pub type Rows = Vec<Vec<f64>>;

pub fn transpose(a: &Rows) -> Rows {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &Rows, b: &Rows) -> Rows {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|ra| {
            (0..cols)
                .map(|j| (0..inner).map(|k| ra[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

/// Solves `a · x = b` for every column of `b`.
pub fn gauss_solve(a: &Rows, b: &Rows) -> Rows {
    let n = a.len();
    let m = b[0].len();
    let mut aug: Rows = a.iter().zip(b).map(|(ra, rb)| ra.iter().chain(rb).copied().collect()).collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let d = aug[col][col];
        assert!(d != 0.0, "singular system");
        for row in 0..n {
            if row != col {
                let f = aug[row][col] / d;
                if f != 0.0 {
                    for k in col..n + m {
                        aug[row][k] -= f * aug[col][k];
                    }
                }
            }
        }
    }
    (0..n).map(|i| (0..m).map(|j| aug[i][n + j] / aug[i][i]).collect()).collect()
}

/// Determinant by elimination with partial pivoting.
pub fn det(a: &Rows) -> f64 {
    let n = a.len();
    let mut m = a.clone();
    let mut d = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap();
        if m[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            m.swap(col, pivot);
            d = -d;
        }
        d *= m[col][col];
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for k in col..n {
                m[row][k] -= f * m[col][k];
            }
        }
    }
    d
}

pub fn column_means(data: &Rows) -> Vec<f64> {
    let n = data.len() as f64;
    transpose(data).iter().map(|c| c.iter().sum::<f64>() / n).collect()
}

pub fn centered(data: &Rows) -> Rows {
    let mu = column_means(data);
    data.iter().map(|r| r.iter().zip(&mu).map(|(v, m)| v - m).collect()).collect()
}

/// OLS via the normal equations; returns `(coef, residuals)`.
pub fn ols(x: &Rows, y: &Rows) -> (Rows, Rows) {
    let xt = transpose(x);
    let coef = gauss_solve(&matmul(&xt, x), &matmul(&xt, y));
    let fitted = matmul(x, &coef);
    let resid = y
        .iter()
        .zip(&fitted)
        .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u - v).collect())
        .collect();
    (coef, resid)
}

/// `εᵀε / rows`.
pub fn covariance(resid: &Rows) -> Rows {
    let n = resid.len() as f64;
    let mut c = matmul(&transpose(resid), resid);
    c.iter_mut().flatten().for_each(|v| *v /= n);
    c
}

/// Lagged regressors `[u(k-1) .. u(k-p)]` over all columns, rows `k = start .. N-1`.
pub fn lag_matrix(u: &Rows, p: usize, start: usize) -> Rows {
    (start..u.len())
        .map(|k| (1..=p).flat_map(|i| u[k - i].iter().copied()).collect())
        .collect()
}

pub fn select_cols(u: &Rows, cols: &[usize]) -> Rows {
    u.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

/// Conditional causality from columns `y` to columns `x` given `z`: both
/// VAR(p) models centred and fitted from row `p`, `ln(det Σ'_xx / det Σ_xx)`.
pub fn gc_oracle(u: &Rows, x: &[usize], y: &[usize], z: &[usize], p: usize) -> f64 {
    let full_cols: Vec<usize> = x.iter().chain(y).chain(z).copied().collect();
    let reduced_cols: Vec<usize> = x.iter().chain(z).copied().collect();
    let block = |cols: &[usize]| {
        let data = centered(&select_cols(u, cols));
        let targets: Rows = data[p..].iter().map(|r| r[..x.len()].to_vec()).collect();
        let (_, resid) = ols(&lag_matrix(&data, p, p), &targets);
        det(&covariance(&resid))
    };
    (block(&reduced_cols) / block(&full_cols)).ln()
}

/// `y(k) = Σ_i A_i y(k-i) + Σ_j B_j x(k-j) + std·e(k)` from rest, with
/// `x` given; returns `y`.
pub fn simulate_varx(a: &[Rows], b: &[Rows], x: &Rows, n: usize, std: f64, seed: u64) -> Rows {
    let dim = a.first().or(b.first()).map(Vec::len).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut y = vec![vec![0.0; dim]; n];
    for k in 0..n {
        for r in 0..dim {
            let mut v = 0.0;
            for (i, ai) in a.iter().enumerate() {
                if k > i {
                    v += (0..dim).map(|c| ai[r][c] * y[k - i - 1][c]).sum::<f64>();
                }
            }
            for (j, bj) in b.iter().enumerate() {
                if k > j {
                    v += (0..bj[r].len()).map(|c| bj[r][c] * x[k - j - 1][c]).sum::<f64>();
                }
            }
            y[k][r] = v;
        }
        if std > 0.0 {
            for r in 0..dim {
                let e: f64 = StandardNormal.sample(&mut rng);
                y[k][r] += std * e;
            }
        }
    }
    y
}

pub fn white(n: usize, cols: usize, std: f64, seed: u64) -> Rows {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    std * e
                })
                .collect()
        })
        .collect()
}

pub fn series(fs: f64, labels: &str, rows: &Rows) -> TimeSeries {
    let labels = parse_label_list(labels).unwrap();
    let cols = labels.len();
    let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    TimeSeries::new(fs, labels, nalgebra::DMatrix::from_row_slice(rows.len(), cols, &flat)).unwrap()
}

/// Three two-channel groups with known coupling: `driver` feeds `target`
/// through a 0.9 lag-1 term; the third group is independent.
pub fn three_group_process(n: usize, seed: u64) -> Rows {
    let e = white(n, 6, 1.0, seed);
    let mut u = vec![vec![0.0; 6]; n];
    for k in 1..n {
        // target: columns 0, 1; driver: 2, 3; independent: 4, 5
        u[k][0] = 0.3 * u[k - 1][0] + 0.9 * u[k - 1][2] + e[k][0];
        u[k][1] = -0.2 * u[k - 1][1] + 0.9 * u[k - 1][3] + e[k][1];
        u[k][2] = 0.5 * u[k - 1][2] + e[k][2];
        u[k][3] = 0.4 * u[k - 1][3] - 0.1 * u[k - 1][2] + e[k][3];
        u[k][4] = -0.4 * u[k - 1][4] + e[k][4];
        u[k][5] = 0.2 * u[k - 1][5] + 0.1 * u[k - 1][4] + e[k][5];
    }
    u
}

pub const THREE_GROUP_LABELS: &str = "z1x,z1y,z2x,z2y,z3x,z3y";
pub const THREE_GROUPS: &str = "1:z1x,z1y;2:z2x,z2y;3:z3x,z3y";

/// Stable VARX(2,1) with two outputs and one input.
pub fn reference_varx() -> (Vec<Rows>, Vec<Rows>) {
    let a1 = vec![vec![0.5, 0.1], vec![-0.2, 0.4]];
    let a2 = vec![vec![-0.3, 0.05], vec![0.1, -0.2]];
    let b1 = vec![vec![1.0], vec![-0.5]];
    (vec![a1, a2], vec![b1])
}

/// Four channels in three groups with adjustable cross-coupling.
pub fn coupled_process(seed: u64, n: usize, coupling: f64) -> Rows {
    let e = white(n, 4, 1.0, seed);
    let mut u = vec![vec![0.0; 4]; n];
    for k in 1..n {
        u[k][0] = 0.5 * u[k - 1][0] + coupling * u[k - 1][3] + e[k][0];
        u[k][1] = -0.3 * u[k - 1][1] + coupling * u[k - 1][0] + e[k][1];
        u[k][2] = 0.2 * u[k - 1][2] + e[k][2] + 0.5 * e[k][0];
        u[k][3] = 0.6 * u[k - 1][3] - coupling * u[k - 1][2] + e[k][3];
    }
    u
}

pub const COUPLED_LABELS: &str = "z1x,z2x,z2y,z3x";
pub const COUPLED_GROUPS: &str = "1:z1x;2:z2x,z2y;3:z3x";

/// Three outputs, two inputs, spectral radius well inside the unit circle.
pub fn estimation_generator() -> (Vec<Rows>, Vec<Rows>) {
    let a1 = vec![vec![0.6, 0.2, 0.0], vec![-0.1, 0.5, 0.2], vec![0.0, 0.3, 0.4]];
    let a2 = vec![vec![-0.2, 0.0, 0.05], vec![0.0, -0.15, 0.0], vec![0.1, 0.0, -0.1]];
    let b1 = vec![vec![1.0, 0.0], vec![0.0, 0.5], vec![0.3, -0.4]];
    (vec![a1, a2], vec![b1])
}

pub const ESTIMATION_ENDOG: &str = "z1x,z1y,z2x";
pub const ESTIMATION_EXOG: &str = "z3x,z3y";
pub const ESTIMATION_ALL: &str = "z1x,z1y,z2x,z3x,z3y";

/// Noise-free output of [`estimation_generator`] followed by its inputs,
/// starting mid-motion so a suppressed channel's initial history is wrong.
pub fn noiseless_record(seed: u64) -> Rows {
    let (a, b) = estimation_generator();
    let warm = 300;
    let n = 1_500;
    let x = white(warm + n, 2, 1.0, seed);
    let y = simulate_varx(&a, &b, &x, warm + n, 0.0, 0);
    (warm..warm + n)
        .map(|k| y[k].iter().chain(&x[k]).copied().collect())
        .collect()
}

pub fn to_matrix(rows: &Rows) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.iter().flatten().copied().collect::<Vec<_>>())
}

/// Free node 2 held by one grounded spring per axis.
pub fn single_mass(k: f64, m: f64) -> LatticeSpec {
    LatticeSpec {
        nodes: vec![
            Node { id: 1, x: -1.0, y: 0.0 },
            Node { id: 2, x: 0.0, y: 0.0 },
            Node { id: 3, x: 0.0, y: -1.0 },
        ],
        fixed_nodes: vec![1, 3],
        springs: vec![Spring::new(1, 2, k).unwrap(), Spring::new(2, 3, k).unwrap()],
        nodal_mass: m,
        rayleigh_alpha: 0.5,
        rayleigh_beta: 1e-5,
    }
}

/// Welch-averaged power spectrum with a Hann window; returns the peak bin.
/// The first segment is skipped to drop the start-from-rest transient.
pub fn peak_bin(signal: &[f64], seg: usize) -> usize {
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let window: Vec<f64> = (0..seg)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / seg as f64).cos())
        .collect();
    let mut power = vec![0.0; seg / 2];
    for chunk in signal.chunks_exact(seg).skip(1) {
        let mean = chunk.iter().sum::<f64>() / seg as f64;
        let mut buf: Vec<Complex<f64>> = chunk
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex::new((v - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p += c.norm_sqr();
        }
    }
    (1..power.len()).max_by(|&a, &b| power[a].total_cmp(&power[b])).unwrap()
}
