//! VAR / VARX identification by multivariate least squares.
//!
//! Model (channels centered by their sample means):
//!
//! ```text
//! y(k) = Σ_{i=1..p} A_i y(k-i) + Σ_{j=1..q} B_j x(k-j) + ε(k)
//! ```
//!
//! Every equation shares the same regressor matrix, so the whole system is
//! one least-squares problem with a matrix right-hand side. It is solved by
//! Householder QR on the column-equilibrated regressors; the normal
//! equations are never formed.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{DofLabel, TimeSeries};

/// Regressor matrices whose equilibrated condition number exceeds this are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    /// Rows in the regression, `N - max(p, q)`.
    pub n_eff: usize,
    /// Samples in the input record.
    pub n_samples: usize,
    pub fs: f64,
    /// 2-norm condition estimate of the column-equilibrated regressor matrix.
    pub condition: f64,
}

/// Fitted (or hand-specified) VARX model.
#[derive(Debug, Clone, PartialEq)]
pub struct VarxModel {
    endog_labels: Vec<DofLabel>,
    exog_labels: Vec<DofLabel>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    residual_cov: DMatrix<f64>,
    endog_means: DVector<f64>,
    exog_means: DVector<f64>,
    meta: Option<FitMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    /// `N_eff × n`, row `r` is the residual at sample `max(p,q) + r`.
    pub residuals: DMatrix<f64>,
    /// `εᵀε / N_eff`.
    pub covariance: DMatrix<f64>,
}

impl ResidualStats {
    pub fn from_residuals(residuals: DMatrix<f64>) -> Self {
        let n_eff = residuals.nrows().max(1) as f64;
        let covariance = symmetrize(residuals.tr_mul(&residuals) / n_eff);
        ResidualStats { residuals, covariance }
    }
}

#[derive(Debug, Clone)]
pub struct VarxFit {
    pub model: VarxModel,
    pub residuals: ResidualStats,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

impl VarxModel {
    /// Builds a model from explicit coefficients, zero means and a zero
    /// residual covariance.
    pub fn from_coefficients(
        endog_labels: Vec<DofLabel>,
        exog_labels: Vec<DofLabel>,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = endog_labels.len();
        let m = exog_labels.len();
        Self::check_shapes(n, m, &a, &b)?;
        let mut all = endog_labels.clone();
        all.extend(&exog_labels);
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        if dedup.len() != all.len() {
            return Err(Error::InvalidArgument("endogenous and exogenous labels must be distinct".into()));
        }
        Ok(VarxModel {
            endog_labels,
            exog_labels,
            a,
            b,
            residual_cov: DMatrix::zeros(n, n),
            endog_means: DVector::zeros(n),
            exog_means: DVector::zeros(m),
            meta: None,
        })
    }

    fn check_shapes(n: usize, m: usize, a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("model needs at least one endogenous channel".into()));
        }
        if a.is_empty() {
            return Err(Error::InvalidArgument("endogenous order p must be at least 1".into()));
        }
        if (m == 0) != b.is_empty() {
            return Err(Error::InvalidArgument(
                "exogenous channels and exogenous order q > 0 must be given together".into(),
            ));
        }
        if let Some(bad) = a.iter().find(|ai| ai.shape() != (n, n)) {
            return Err(Error::InvalidArgument(format!("A matrix is {:?}, expected {n}×{n}", bad.shape())));
        }
        if let Some(bad) = b.iter().find(|bj| bj.shape() != (n, m)) {
            return Err(Error::InvalidArgument(format!("B matrix is {:?}, expected {n}×{m}", bad.shape())));
        }
        Ok(())
    }

    pub fn endog_labels(&self) -> &[DofLabel] {
        &self.endog_labels
    }

    pub fn exog_labels(&self) -> &[DofLabel] {
        &self.exog_labels
    }

    pub fn p(&self) -> usize {
        self.a.len()
    }

    pub fn q(&self) -> usize {
        self.b.len()
    }

    /// First sample index (0-based) whose lags are all inside the record.
    pub fn max_lag(&self) -> usize {
        self.p().max(self.q())
    }

    pub fn n_endog(&self) -> usize {
        self.endog_labels.len()
    }

    pub fn n_exog(&self) -> usize {
        self.exog_labels.len()
    }

    /// `A_1..A_p`.
    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    /// `B_1..B_q`.
    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn residual_cov(&self) -> &DMatrix<f64> {
        &self.residual_cov
    }

    pub fn endog_means(&self) -> &DVector<f64> {
        &self.endog_means
    }

    pub fn exog_means(&self) -> &DVector<f64> {
        &self.exog_means
    }

    pub fn meta(&self) -> Option<&FitMeta> {
        self.meta.as_ref()
    }

    /// Spectral radius of the `np × np` companion matrix of `A_1..A_p`.
    pub fn companion_spectral_radius(&self) -> f64 {
        let n = self.n_endog();
        let p = self.p();
        let mut c = DMatrix::zeros(n * p, n * p);
        for (i, ai) in self.a.iter().enumerate() {
            c.view_mut((0, i * n), (n, n)).copy_from(ai);
        }
        for i in 0..n * (p - 1) {
            c[(n + i, i)] = 1.0;
        }
        c.complex_eigenvalues().iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// Stacks `[y(k-1) .. y(k-p), x(k-1) .. x(k-q)]` for `k = max(p,q) .. N-1`.
pub fn build_regressors(endog: &DMatrix<f64>, exog: Option<&DMatrix<f64>>, p: usize, q: usize) -> DMatrix<f64> {
    let n = endog.ncols();
    let m = exog.map_or(0, |x| x.ncols());
    let start = p.max(q);
    let rows = endog.nrows().saturating_sub(start);
    let mut reg = DMatrix::zeros(rows, n * p + m * q);
    for r in 0..rows {
        let k = start + r;
        for i in 0..p {
            reg.view_mut((r, i * n), (1, n)).copy_from(&endog.row(k - i - 1));
        }
        if let Some(x) = exog {
            for j in 0..q {
                reg.view_mut((r, n * p + j * m), (1, m)).copy_from(&x.row(k - j - 1));
            }
        }
    }
    reg
}

/// Least-squares solution of `regressors · coef ≈ targets`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub coef: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub condition: f64,
}

pub fn least_squares(regressors: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<LeastSquares> {
    let (rows, cols) = regressors.shape();
    if rows <= cols {
        return Err(Error::InsufficientSamples {
            available: rows,
            required: cols + 1,
        });
    }
    let norms: Vec<f64> = regressors.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::IllConditioned {
            condition: f64::INFINITY,
        });
    }
    let mut scaled = regressors.clone();
    for (mut col, s) in scaled.column_iter_mut().zip(&norms) {
        col /= *s;
    }
    let qr = scaled.qr();
    let r = qr.r();
    let sv = r.singular_values();
    let (smax, smin) = sv
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), v| (hi.max(*v), lo.min(*v)));
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let mut qty = targets.clone();
    qr.q_tr_mul(&mut qty);
    let top = qty.rows(0, cols).into_owned();
    let mut coef = r.solve_upper_triangular(&top).ok_or(Error::IllConditioned { condition })?;
    for (mut row, s) in coef.row_iter_mut().zip(&norms) {
        row /= *s;
    }
    let residuals = targets - regressors * &coef;
    Ok(LeastSquares {
        coef,
        residuals,
        condition,
    })
}

fn centered(data: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let rows = data.nrows() as f64;
    let means = DVector::from_iterator(data.ncols(), data.column_iter().map(|c| c.sum() / rows));
    let mut out = data.clone();
    for (mut col, mu) in out.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-mu);
    }
    (out, means)
}

/// Fits a VARX(p, q). `exog` must be `None` exactly when `q == 0`.
pub fn fit_varx(endog: &TimeSeries, exog: Option<&TimeSeries>, p: usize, q: usize) -> Result<VarxFit> {
    if p == 0 {
        return Err(Error::InvalidArgument("endogenous order p must be at least 1".into()));
    }
    let exog = exog.filter(|x| x.n_channels() > 0);
    match (exog, q) {
        (Some(_), 0) => {
            return Err(Error::InvalidArgument("exogenous channels supplied with q = 0".into()));
        }
        (None, q) if q > 0 => {
            return Err(Error::InvalidArgument(format!("q = {q} but no exogenous channels supplied")));
        }
        _ => {}
    }
    if let Some(x) = exog {
        if !endog.same_sampling(x) {
            return Err(Error::InvalidArgument(
                "endogenous and exogenous series must share sampling rate and length".into(),
            ));
        }
        if let Some(l) = x.channels().iter().find(|l| endog.index_of(l).is_some()) {
            return Err(Error::DuplicateLabel(l.to_string()));
        }
    }
    let n = endog.n_channels();
    let m = exog.map_or(0, |x| x.n_channels());
    let start = p.max(q);
    let n_samples = endog.n_samples();
    let available = n_samples.saturating_sub(start);
    let required = n * p + m * q;
    if available <= required {
        return Err(Error::InsufficientSamples { available, required });
    }

    let (y, endog_means) = centered(endog.data());
    let (x, exog_means) = match exog {
        Some(x) => {
            let (c, mu) = centered(x.data());
            (Some(c), mu)
        }
        None => (None, DVector::zeros(0)),
    };
    let regressors = build_regressors(&y, x.as_ref(), p, q);
    let targets = y.rows(start, available).into_owned();
    let ls = least_squares(&regressors, &targets)?;

    // coef is (np + mq) × n; block i holds A_iᵀ.
    let a = (0..p)
        .map(|i| ls.coef.view((i * n, 0), (n, n)).transpose())
        .collect();
    let b = (0..q)
        .map(|j| ls.coef.view((n * p + j * m, 0), (m, n)).transpose())
        .collect();
    let stats = ResidualStats::from_residuals(ls.residuals);
    let model = VarxModel {
        endog_labels: endog.channels().to_vec(),
        exog_labels: exog.map(|x| x.channels().to_vec()).unwrap_or_default(),
        a,
        b,
        residual_cov: stats.covariance.clone(),
        endog_means,
        exog_means,
        meta: Some(FitMeta {
            n_eff: available,
            n_samples,
            fs: endog.fs(),
            condition: ls.condition,
        }),
    };
    Ok(VarxFit {
        model,
        residuals: stats,
    })
}

pub fn fit_var(data: &TimeSeries, p: usize) -> Result<VarxFit> {
    fit_varx(data, None, p, 0)
}

/// `ŷ(k) = Σ A_i y(k-i) + Σ B_j x(k-j)`.
///
/// Histories hold `p` (resp. `q`) rows, oldest first, in the model's channel
/// order and in the same (centered) coordinates the model was fitted in.
pub fn one_step_predict(
    model: &VarxModel,
    endog_history: &DMatrix<f64>,
    exog_history: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let (n, m, p, q) = (model.n_endog(), model.n_exog(), model.p(), model.q());
    if endog_history.shape() != (p, n) {
        return Err(Error::InvalidArgument(format!(
            "endogenous history is {:?}, expected {p}×{n}",
            endog_history.shape()
        )));
    }
    if q > 0 && exog_history.shape() != (q, m) {
        return Err(Error::InvalidArgument(format!(
            "exogenous history is {:?}, expected {q}×{m}",
            exog_history.shape()
        )));
    }
    let mut out = DVector::zeros(n);
    for (i, ai) in model.a.iter().enumerate() {
        out.gemv(1.0, ai, &endog_history.row(p - 1 - i).transpose(), 1.0);
    }
    for (j, bj) in model.b.iter().enumerate() {
        out.gemv(1.0, bj, &exog_history.row(q - 1 - j).transpose(), 1.0);
    }
    Ok(out)
}

/// Akaike order selection over `1..=p_max`:
/// `AIC(p) = ln det Σ(p) + 2 p n² / N_eff(p)`, ties to the smaller order.
pub fn select_order_aic(data: &TimeSeries, p_max: usize) -> Result<usize> {
    Ok(aic_curve(data, p_max)?
        .into_iter()
        .fold((0, f64::INFINITY), |best, (p, aic)| if aic < best.1 { (p, aic) } else { best })
        .0)
}

/// `(p, AIC(p))` for each candidate order.
///
/// Orders are tried upward; the curve ends before the first order whose
/// regression is ill-conditioned or whose residual covariance is singular
/// (noiseless data saturate well below a generous `p_max`). Order 1 must
/// succeed.
pub fn aic_curve(data: &TimeSeries, p_max: usize) -> Result<Vec<(usize, f64)>> {
    if p_max == 0 {
        return Err(Error::InvalidArgument("p_max must be at least 1".into()));
    }
    let n = data.n_channels() as f64;
    let mut curve = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let point = fit_var(data, p).and_then(|fit| {
            let n_eff = fit.model.meta.as_ref().map_or(1, |m| m.n_eff) as f64;
            Ok(log_det_spd(&fit.residuals.covariance)? + 2.0 * p as f64 * n * n / n_eff)
        });
        match point {
            Ok(aic) => curve.push((p, aic)),
            Err(Error::IllConditioned { .. } | Error::DegenerateCovariance { .. }) if p > 1 => break,
            Err(e) => return Err(e),
        }
    }
    Ok(curve)
}

/// `ln det` of a symmetric positive-definite matrix via Cholesky.
pub fn log_det_spd(m: &DMatrix<f64>) -> Result<f64> {
    match m.clone().cholesky() {
        Some(ch) => Ok(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>()),
        None => Err(Error::DegenerateCovariance { det: m.determinant() }),
    }
}

// Persistence ---------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    endog_labels: Vec<DofLabel>,
    exog_labels: Vec<DofLabel>,
    p: usize,
    q: usize,
    /// Row-major `A_1..A_p`.
    a: Vec<Vec<Vec<f64>>>,
    /// Row-major `B_1..B_q`.
    b: Vec<Vec<Vec<f64>>>,
    residual_cov: Vec<Vec<f64>>,
    endog_means: Vec<f64>,
    exog_means: Vec<f64>,
    fit: Option<FitMeta>,
}

const MODEL_FORMAT: &str = "shmx-varx/1";

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::parse("model file", format!("`{what}` is not {}×{}", shape.0, shape.1)));
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |r, c| rows[r][c]))
}

impl VarxModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            endog_labels: self.endog_labels.clone(),
            exog_labels: self.exog_labels.clone(),
            p: self.p(),
            q: self.q(),
            a: self.a.iter().map(rows_of).collect(),
            b: self.b.iter().map(rows_of).collect(),
            residual_cov: rows_of(&self.residual_cov),
            endog_means: self.endog_means.iter().copied().collect(),
            exog_means: self.exog_means.iter().copied().collect(),
            fit: self.meta.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text).map_err(|e| {
            Error::parse(format!("model file, line {} column {}", e.line(), e.column()), e)
        })?;
        if f.format != MODEL_FORMAT {
            return Err(Error::parse("model file", format!("unsupported format `{}`", f.format)));
        }
        let (n, m) = (f.endog_labels.len(), f.exog_labels.len());
        if f.a.len() != f.p || f.b.len() != f.q {
            return Err(Error::parse("model file", "coefficient count does not match p/q"));
        }
        let a = f.a.iter().map(|r| from_rows(r, (n, n), "a")).collect::<Result<Vec<_>>>()?;
        let b = f.b.iter().map(|r| from_rows(r, (n, m), "b")).collect::<Result<Vec<_>>>()?;
        let mut model = VarxModel::from_coefficients(f.endog_labels, f.exog_labels, a, b)
            .map_err(|e| Error::parse("model file", e))?;
        model.residual_cov = from_rows(&f.residual_cov, (n, n), "residual_cov")?;
        if f.endog_means.len() != n || f.exog_means.len() != m {
            return Err(Error::parse("model file", "channel means do not match labels"));
        }
        model.endog_means = DVector::from_vec(f.endog_means);
        model.exog_means = DVector::from_vec(f.exog_means);
        model.meta = f.fit;
        Ok(model)
    }
}
