//! Thin SVD of the design and application of spectral multipliers.
//!
//! Filters are evaluated on the eigenvalues of `XᵀX / n`, and the estimator is
//! `β = (1/n) V g(Λ²/n) Λ Uᵀ Y`.

use nalgebra::{DMatrix, DVector};

use crate::error::{input, Error, Result};

/// Default relative cutoff for the numerical rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-12;

/// Design matrix, response and an optional known noise scale.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    noise_scale: Option<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return input("design matrix must have at least one row and one column");
        }
        if y.len() != x.nrows() {
            return input(format!(
                "response has length {} but design has {} rows",
                y.len(),
                x.nrows()
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return input("non-finite entry in design or response");
        }
        Ok(Self {
            x,
            y,
            noise_scale: None,
        })
    }

    /// Attach σ; the discrepancy bound then defaults to `√n·σ`.
    pub fn with_noise_scale(mut self, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return input("noise scale must be finite and nonnegative");
        }
        self.noise_scale = Some(sigma);
        Ok(self)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn noise_scale(&self) -> Option<f64> {
        self.noise_scale
    }

    /// Same design, different response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        let mut out = Self::new(self.x.clone(), y)?;
        out.noise_scale = self.noise_scale;
        Ok(out)
    }
}

/// `X = U diag(σ) Vᵀ` restricted to the retained singular values.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl SpectralDecomposition {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.nrows()
    }

    /// Eigenvalues λ_k = σ_k² of XᵀX.
    pub fn eigenvalues(&self) -> impl Iterator<Item = f64> + '_ {
        self.singular_values.iter().map(|s| s * s)
    }

    /// Eigenvalues of XᵀX/n, where filters are evaluated.
    pub fn scaled_eigenvalues(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.eigenvalues().map(|l| l / n).collect()
    }

    /// `V diag(m) Uᵀ y`.
    pub fn apply_multiplier(&self, m: &[f64], y: &DVector<f64>) -> Result<DVector<f64>> {
        if m.len() != self.rank() {
            return input("multiplier length differs from rank");
        }
        if y.len() != self.n() {
            return input(format!(
                "vector has length {} but decomposition has {} rows",
                y.len(),
                self.n()
            ));
        }
        let mut coef = self.u.tr_mul(y);
        for (c, mk) in coef.iter_mut().zip(m) {
            *c *= mk;
        }
        Ok(&self.v * coef)
    }

    /// `V diag(m) Vᵀ b + (b − V Vᵀ b)·null_value` for a coefficient-space vector `b`.
    pub fn apply_in_coefficient_space(
        &self,
        m: &[f64],
        b: &DVector<f64>,
        null_value: f64,
    ) -> Result<DVector<f64>> {
        if m.len() != self.rank() || b.len() != self.p() {
            return input("dimension mismatch in coefficient-space multiplier");
        }
        let proj = self.v.tr_mul(b);
        let mut scaled = proj.clone();
        for (c, mk) in scaled.iter_mut().zip(m) {
            *c *= mk;
        }
        let mut out = &self.v * scaled;
        if null_value != 0.0 {
            let null = b - &self.v * proj;
            out.axpy(null_value, &null, 1.0);
        }
        Ok(out)
    }
}

/// Thin SVD with singular values sorted descending; values `≤ rank_tol·σ_max` are dropped.
pub fn thin_svd(x: &DMatrix<f64>, rank_tol: f64) -> Result<SpectralDecomposition> {
    if !(rank_tol >= 0.0 && rank_tol.is_finite()) {
        return input("rank_tol must be finite and nonnegative");
    }
    if x.iter().any(|v| !v.is_finite()) {
        return input("non-finite entry in design matrix");
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::RankZero);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = svd.singular_values;

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let smax = sv[order[0]];
    if smax <= 0.0 {
        return Err(Error::RankZero);
    }
    let cutoff = rank_tol * smax;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sv[i] > cutoff && sv[i] > 0.0)
        .collect();

    let s = kept.len();
    let mut uo = DMatrix::zeros(x.nrows(), s);
    let mut vo = DMatrix::zeros(x.ncols(), s);
    let mut so = DVector::zeros(s);
    for (j, &i) in kept.iter().enumerate() {
        uo.set_column(j, &u.column(i));
        vo.set_column(j, &v_t.row(i).transpose());
        so[j] = sv[i];
    }
    Ok(SpectralDecomposition {
        u: uo,
        singular_values: so,
        v: vo,
    })
}

/// Convenience wrapper over [`thin_svd`] for a problem.
pub fn decompose(problem: &RegressionProblem) -> Result<SpectralDecomposition> {
    thin_svd(problem.x(), DEFAULT_RANK_TOL)
}

/// `(1/n) V g(Λ²/n) Λ Uᵀ Y` for an arbitrary filter `g`.
pub fn apply_spectral_filter<F>(
    dec: &SpectralDecomposition,
    g_at: F,
    y: &DVector<f64>,
    n: usize,
) -> Result<DVector<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    if n == 0 {
        return input("n must be positive");
    }
    let nf = n as f64;
    let m = dec
        .singular_values
        .iter()
        .map(|&s| {
            let g = g_at(s * s / nf)?;
            if !g.is_finite() {
                return input(format!("filter returned non-finite value at {}", s * s / nf));
            }
            Ok(g * s / nf)
        })
        .collect::<Result<Vec<_>>>()?;
    dec.apply_multiplier(&m, y)
}

/// σ_max / σ_min over retained singular values.
pub fn condition_number(dec: &SpectralDecomposition) -> Result<f64> {
    let s = dec.rank();
    if s == 0 {
        return Err(Error::RankZero);
    }
    Ok(dec.singular_values[0] / dec.singular_values[s - 1])
}
