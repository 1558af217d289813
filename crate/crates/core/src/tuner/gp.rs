use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Diagonal jitter added to the training kernel matrix.
pub const JITTER: f64 = 1e-6;
/// Candidate length scales, shared by every input dimension.
pub const LENGTH_SCALES: [f64; 5] = [0.1, 0.2, 0.5, 1.0, 2.0];
/// Candidate signal standard deviations.
pub const SIGNAL_SDS: [f64; 3] = [0.5, 1.0, 2.0];

const STD_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GpError {
    #[error("degenerate training data: {0}")]
    DegenerateInputs(String),
}

/// Squared-exponential kernel `σ_f²·exp(−|a−b|²/(2ℓ²))`.
pub fn se_kernel(a: &[f64], b: &[f64], length_scale: f64, signal_sd: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    signal_sd * signal_sd * (-d2 / (2.0 * length_scale * length_scale)).exp()
}

/// Covariance between a training input and a query point: the SE kernel
/// plus the jitter nugget when the two coincide, so that predicting at a
/// training input reproduces a row of the training matrix.
fn cross_cov(train: &[f64], x: &[f64], length_scale: f64, signal_sd: f64) -> f64 {
    se_kernel(train, x, length_scale, signal_sd) + if train == x { JITTER } else { 0.0 }
}

/// Gaussian-process regression on standardized targets with hyperparameters
/// chosen from a fixed grid by log marginal likelihood.
#[derive(Debug, Clone)]
pub struct GpSurrogate {
    x: Vec<Vec<f64>>,
    y_mean: f64,
    y_std: f64,
    length_scale: f64,
    signal_sd: f64,
    log_marginal_likelihood: f64,
    k: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpSurrogate {
    pub fn fit(x: &[Vec<f64>], y: &[f64]) -> Result<Self, GpError> {
        let (y_mean, y_std) = check_and_standardize(x, y)?;
        let mut best: Option<Self> = None;
        for &l in &LENGTH_SCALES {
            for &s in &SIGNAL_SDS {
                let Some(candidate) = Self::build(x, y, y_mean, y_std, l, s) else { continue };
                if best
                    .as_ref()
                    .is_none_or(|b| candidate.log_marginal_likelihood > b.log_marginal_likelihood)
                {
                    best = Some(candidate);
                }
            }
        }
        best.ok_or_else(|| GpError::DegenerateInputs("no grid point gave a positive definite kernel".into()))
    }

    /// Fits with fixed hyperparameters.
    pub fn fit_with(x: &[Vec<f64>], y: &[f64], length_scale: f64, signal_sd: f64) -> Result<Self, GpError> {
        let (y_mean, y_std) = check_and_standardize(x, y)?;
        Self::build(x, y, y_mean, y_std, length_scale, signal_sd)
            .ok_or_else(|| GpError::DegenerateInputs("kernel matrix is not positive definite".into()))
    }

    fn build(x: &[Vec<f64>], y: &[f64], y_mean: f64, y_std: f64, l: f64, s: f64) -> Option<Self> {
        let n = x.len();
        let k = DMatrix::from_fn(n, n, |i, j| se_kernel(&x[i], &x[j], l, s) + if i == j { JITTER } else { 0.0 });
        let chol = k.clone().cholesky()?;
        let z = DVector::from_iterator(n, y.iter().map(|v| (v - y_mean) / y_std));
        let alpha = refined_solve(&k, &chol, &z);
        let log_det_half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        let lml = -0.5 * z.dot(&alpha) - log_det_half - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Some(Self {
            x: x.to_vec(),
            y_mean,
            y_std,
            length_scale: l,
            signal_sd: s,
            log_marginal_likelihood: lml,
            k,
            chol,
            alpha,
        })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn signal_sd(&self) -> f64 {
        self.signal_sd
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_std(&self) -> f64 {
        self.y_std
    }

    /// Posterior mean and variance in standardized units.
    pub fn predict_standardized(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|xi| cross_cov(xi, x, self.length_scale, self.signal_sd)),
        );
        let mean = dot2(ks.iter().copied(), self.alpha.iter().copied(), 0.0);
        let w = refined_solve(&self.k, &self.chol, &ks);
        let prior = self.signal_sd * self.signal_sd + JITTER;
        let var = (-dot2(ks.iter().copied(), w.iter().copied(), prior)).max(0.0);
        (mean, var)
    }

    /// Posterior mean and variance in the units of the training targets.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict_standardized(x);
        (self.y_mean + self.y_std * m, self.y_std * self.y_std * v)
    }
}

/// `Σ aᵢbᵢ − c` in twice the working precision (compensated dot product).
fn dot2(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>, c: f64) -> f64 {
    let (mut s, mut err) = (-c, 0.0);
    for (x, y) in a.zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        err += (s - (t - z)) + (p - z) + pe;
        s = t;
    }
    s + err
}

/// Cholesky solve with two steps of iterative refinement whose residuals
/// are accumulated in extended precision, so that near-duplicate inputs do
/// not cost accuracy.
fn refined_solve(k: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = chol.solve(b);
    for _ in 0..2 {
        let residual = DVector::from_fn(b.len(), |i, _| -dot2(k.row(i).iter().copied(), x.iter().copied(), b[i]));
        x += chol.solve(&residual);
    }
    x
}

fn check_and_standardize(x: &[Vec<f64>], y: &[f64]) -> Result<(f64, f64), GpError> {
    if x.is_empty() {
        return Err(GpError::DegenerateInputs("no observations".into()));
    }
    if x.len() != y.len() {
        return Err(GpError::DegenerateInputs(format!("{} inputs for {} targets", x.len(), y.len())));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(GpError::DegenerateInputs("inputs must be finite rows of equal length".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GpError::DegenerateInputs("targets must be finite".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let std = (y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    Ok((mean, std.max(STD_FLOOR)))
}
