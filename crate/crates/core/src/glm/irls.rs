// IRLS for log-link count models.
//
// Each iteration solves the weighted least-squares problem
//
//     (X'WX) b = X'W z,   z = eta + (y - mu) / mu
//
// with w = mu (Poisson) or w = mu / (1 + alpha mu) (NB2). A step that raises
// the deviance is halved up to 20 times. NB2 wraps this in an outer loop that
// re-estimates alpha from the Pearson moment condition
//
//     sum (y - mu)^2 / (mu (1 + alpha mu)) = n - p.

use statrs::function::gamma::ln_gamma;

use super::covariance::cluster_robust_cov_parts;
use super::{Estimator, EstimatorOptions, FitResult};
use crate::design::DesignMatrix;
use crate::error::{GravityError, Result};
use crate::linalg::{is_positive_definite, scale_rows, weighted_gram, PivotedQr, RANK_TOL};

const MAX_HALVINGS: usize = 20;
const ETA_MAX: f64 = 700.0;
const ALPHA_MIN: f64 = 1e-8;
const ALPHA_MAX: f64 = 1e4;
const ALPHA_REL_TOL: f64 = 1e-6;
const MAX_OUTER: usize = 100;
/// Pivot floor for the Hessian check on the unit-diagonal scaled matrix.
const HESSIAN_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Poisson,
    /// NB2 with `Var = mu + alpha mu^2`.
    NegBin { alpha: f64 },
}

impl Family {
    fn irls_weight(self, mu: f64) -> f64 {
        match self {
            Family::Poisson => mu,
            Family::NegBin { alpha } => mu / (1.0 + alpha * mu),
        }
    }

    /// Unit deviance contribution.
    pub fn unit_deviance(self, y: f64, mu: f64) -> f64 {
        let ylogy = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
        match self {
            Family::Poisson => 2.0 * (ylogy - (y - mu)),
            Family::NegBin { alpha } => {
                let theta = 1.0 / alpha;
                2.0 * (ylogy - (y + theta) * ((alpha * y).ln_1p() - (alpha * mu).ln_1p()))
            }
        }
    }

    pub fn unit_loglik(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::Poisson => {
                let ylogmu = if y > 0.0 { y * mu.ln() } else { 0.0 };
                ylogmu - mu - ln_gamma(y + 1.0)
            }
            Family::NegBin { alpha } => {
                let theta = 1.0 / alpha;
                let ylog = if y > 0.0 { y * (alpha * mu / (1.0 + alpha * mu)).ln() } else { 0.0 };
                ln_gamma(y + theta) - ln_gamma(theta) - ln_gamma(y + 1.0)
                    - theta * (alpha * mu).ln_1p()
                    + ylog
            }
        }
    }
}

fn means(design: &DesignMatrix, beta: &[f64]) -> Vec<f64> {
    design
        .linear_predictor(beta)
        .into_iter()
        .map(|e| e.min(ETA_MAX).exp())
        .collect()
}

fn deviance(design: &DesignMatrix, family: Family, mu: &[f64]) -> f64 {
    design
        .y
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(i, (&y, &m))| design.weight(i) * family.unit_deviance(y, m))
        .sum()
}

fn check_response(design: &DesignMatrix) -> Result<()> {
    if let Some(i) = design.y.iter().position(|&y| !(y >= 0.0)) {
        return Err(GravityError::NegativeResponse(i));
    }
    if design.y.iter().all(|&y| y == 0.0) {
        return Err(GravityError::AllZeroResponse);
    }
    let separated = separated_columns(design);
    if !separated.is_empty() {
        return Err(GravityError::Separated { columns: separated });
    }
    Ok(())
}

/// Non-negative, non-constant columns whose non-zero rows all have `y = 0`.
/// The likelihood then keeps rising as that coefficient goes to minus infinity.
pub(crate) fn separated_columns(design: &DesignMatrix) -> Vec<String> {
    let n = design.nrows();
    let mut out = Vec::new();
    for (j, col) in design.x.as_slice().chunks(n).enumerate() {
        if col.iter().any(|&v| v < 0.0) || col.iter().all(|&v| v == col[0]) {
            continue;
        }
        let hit = (0..n).any(|i| col[i] > 0.0 && design.y[i] > 0.0);
        if !hit {
            out.push(design.names[j].clone());
        }
    }
    out
}

fn weighted_mean_y(design: &DesignMatrix) -> f64 {
    let (num, den) = design
        .y
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(n, d), (i, &y)| (n + design.weight(i) * y, d + design.weight(i)));
    num / den
}

/// Solves the weighted LS step; escalates a ridge on X'WX only if the QR is singular.
fn weighted_step(design: &DesignMatrix, w: &[f64], z: &[f64], jitter: f64) -> Result<Vec<f64>> {
    let xs = scale_rows(&design.x, w);
    let qr = PivotedQr::new(&xs, RANK_TOL);
    if qr.is_full_rank() {
        let zs: Vec<f64> = z.iter().zip(w).map(|(zi, wi)| zi * wi.sqrt()).collect();
        return Ok(qr.solve(&zs));
    }
    if jitter > 0.0 {
        let mut gram = weighted_gram(&design.x, w);
        let p = gram.nrows();
        let scale = (0..p).map(|i| gram[(i, i)]).fold(0.0, f64::max);
        for i in 0..p {
            gram[(i, i)] += jitter * scale.max(1.0);
        }
        let rhs: Vec<f64> = (0..p)
            .map(|j| (0..design.nrows()).map(|i| design.x[(i, j)] * w[i] * z[i]).sum())
            .collect();
        if let Some(chol) = gram.cholesky() {
            let sol = chol.solve(&nalgebra::DVector::from_vec(rhs));
            return Ok(sol.iter().copied().collect());
        }
    }
    Err(GravityError::RankDeficient {
        columns: qr
            .dependent_columns()
            .into_iter()
            .map(|j| design.names[j].clone())
            .collect(),
    })
}

struct IrlsState {
    beta: Vec<f64>,
    mu: Vec<f64>,
    deviance: f64,
    iterations: usize,
    converged: bool,
}

/// Starting values: the least-squares fit of `log(mean y)` on X, which is exactly
/// `intercept = log(mean y)`, all else zero, when an intercept column exists.
fn initial_beta(design: &DesignMatrix) -> Result<Vec<f64>> {
    let level = (weighted_mean_y(design) + 1e-12).ln();
    let qr = PivotedQr::new(&design.x, RANK_TOL);
    if !qr.is_full_rank() {
        return Err(GravityError::RankDeficient {
            columns: qr
                .dependent_columns()
                .into_iter()
                .map(|j| design.names[j].clone())
                .collect(),
        });
    }
    if let Some(k) = design.column_index(crate::design::INTERCEPT) {
        let mut b = vec![0.0; design.ncols()];
        b[k] = level;
        return Ok(b);
    }
    Ok(qr.solve(&vec![level; design.nrows()]))
}

fn run_irls(
    design: &DesignMatrix,
    family: Family,
    options: &EstimatorOptions,
    start: Vec<f64>,
) -> Result<IrlsState> {
    let n = design.nrows();
    let mut beta = start;
    let mut mu = means(design, &beta);
    let mut dev = deviance(design, family, &mu);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let eta = design.linear_predictor(&beta);
        let mut w = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let m = mu[i];
            w.push(design.weight(i) * family.irls_weight(m));
            z.push(eta[i] + (design.y[i] - m) / m);
        }
        let mut candidate = weighted_step(design, &w, &z, options.ridge_jitter)?;
        let mut cand_mu = means(design, &candidate);
        let mut cand_dev = deviance(design, family, &cand_mu);

        let mut halvings = 0;
        while !(cand_dev.is_finite() && cand_dev <= dev * (1.0 + 1e-12) + 1e-12)
            && halvings < MAX_HALVINGS
        {
            for (c, b) in candidate.iter_mut().zip(&beta) {
                *c = 0.5 * (*c + b);
            }
            cand_mu = means(design, &candidate);
            cand_dev = deviance(design, family, &cand_mu);
            halvings += 1;
        }

        let dev_change = (cand_dev - dev).abs() / (cand_dev.abs() + 0.1);
        let coef_change = candidate
            .iter()
            .zip(&beta)
            .map(|(c, b)| (c - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);

        beta = candidate;
        mu = cand_mu;
        dev = cand_dev;

        if dev_change < options.deviance_rel_tol && coef_change < options.coef_rel_tol {
            converged = true;
            break;
        }
    }

    Ok(IrlsState {
        beta,
        mu,
        deviance: dev,
        iterations,
        converged,
    })
}

fn pearson_excess(design: &DesignMatrix, mu: &[f64], alpha: f64) -> f64 {
    let dof = design.nrows() as f64 - design.ncols() as f64;
    let chi2: f64 = design
        .y
        .iter()
        .zip(mu)
        .enumerate()
        .map(|(i, (&y, &m))| design.weight(i) * (y - m).powi(2) / (m * (1.0 + alpha * m)))
        .sum();
    chi2 - dof
}

/// Moment estimate of alpha given fitted means, clamped to `[ALPHA_MIN, ALPHA_MAX]`.
fn moment_alpha(design: &DesignMatrix, mu: &[f64]) -> f64 {
    if pearson_excess(design, mu, ALPHA_MIN) <= 0.0 {
        return ALPHA_MIN;
    }
    if pearson_excess(design, mu, ALPHA_MAX) >= 0.0 {
        return ALPHA_MAX;
    }
    // bisection in log alpha; the excess is decreasing in alpha
    let (mut lo, mut hi) = (ALPHA_MIN.ln(), ALPHA_MAX.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pearson_excess(design, mu, mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn finish(
    design: &DesignMatrix,
    estimator: Estimator,
    family: Family,
    state: IrlsState,
    converged: bool,
    iterations: usize,
) -> Result<FitResult> {
    let n = design.nrows();
    let p = design.ncols();
    let null_mu = weighted_mean_y(design);
    let null_deviance = if design.has_constant {
        design
            .y
            .iter()
            .enumerate()
            .map(|(i, &y)| design.weight(i) * family.unit_deviance(y, null_mu))
            .sum()
    } else {
        f64::NAN
    };
    let loglik = design
        .y
        .iter()
        .zip(&state.mu)
        .enumerate()
        .map(|(i, (&y, &m))| design.weight(i) * family.unit_loglik(y, m))
        .sum();

    let w: Vec<f64> = (0..n)
        .map(|i| design.weight(i) * family.irls_weight(state.mu[i]))
        .collect();
    let hessian = weighted_gram(&design.x, &w);
    let scaled = {
        let d: Vec<f64> = (0..p).map(|i| hessian[(i, i)].sqrt()).collect();
        let mut s = hessian.clone();
        for i in 0..p {
            for j in 0..p {
                s[(i, j)] /= d[i] * d[j];
            }
        }
        s
    };
    let hessian_pd = is_positive_definite(&scaled, HESSIAN_REL_TOL);

    let mut fit = FitResult {
        estimator,
        names: design.names.clone(),
        coefficients: state.beta.clone(),
        covariance_model: None,
        covariance_robust: None,
        small_sample_factor: f64::NAN,
        n_clusters: 0,
        loglik,
        deviance: state.deviance,
        null_deviance,
        pseudo_r2: None,
        r2: None,
        r2_adjusted: None,
        dispersion: match family {
            Family::NegBin { alpha } => Some(alpha),
            Family::Poisson => None,
        },
        n_obs: n,
        n_dropped_zeros: design.n_dropped_zeros,
        converged,
        iterations,
        hessian_positive_definite: hessian_pd,
        has_constant: design.has_constant,
        fitted: state.mu.clone(),
        fixed_effect_reference: design.fixed_effect_reference.clone(),
        spec_echo: design.spec_echo.clone(),
    };
    fit.pseudo_r2 = super::pseudo_r2(&fit);

    let withhold = estimator == Estimator::Nbpml && !hessian_pd;
    if !withhold {
        let xs = scale_rows(&design.x, &w);
        let qr = PivotedQr::new(&xs, RANK_TOL);
        if !qr.is_full_rank() {
            return Err(GravityError::SingularBread);
        }
        fit.covariance_model = Some(qr.inverse_gram());
        match cluster_robust_cov_parts(design, &fit) {
            Ok(robust) => {
                fit.small_sample_factor = robust.small_sample_factor;
                fit.n_clusters = robust.n_clusters;
                fit.covariance_robust = Some(robust.matrix);
            }
            // a single cluster leaves the sandwich undefined
            Err(GravityError::InsufficientData(_)) => fit.n_clusters = 1,
            Err(e) => return Err(e),
        }
    }

    if withhold {
        return Err(GravityError::HessianNotPositiveDefinite { fit: Box::new(fit) });
    }
    if !converged {
        return Err(GravityError::NotConverged { fit: Box::new(fit) });
    }
    Ok(fit)
}

/// Poisson pseudo-maximum-likelihood with a log link.
///
/// Non-convergence is reported as [`GravityError::NotConverged`] carrying the
/// last iterate.
pub fn fit_ppml(design: &DesignMatrix, options: &EstimatorOptions) -> Result<FitResult> {
    options.validate()?;
    check_response(design)?;
    let start = initial_beta(design)?;
    let state = run_irls(design, Family::Poisson, options, start)?;
    let (converged, iterations) = (state.converged, state.iterations);
    finish(design, Estimator::Ppml, Family::Poisson, state, converged, iterations)
}

/// Negative-binomial (NB2) pseudo-maximum-likelihood with a log link.
///
/// Alpha comes from an outer moment-matching loop seeded by the Poisson fit.
/// When the scaled Hessian fails the Cholesky test the coefficients are
/// returned inside [`GravityError::HessianNotPositiveDefinite`] with both
/// covariances withheld.
pub fn fit_nbpml(design: &DesignMatrix, options: &EstimatorOptions) -> Result<FitResult> {
    options.validate()?;
    check_response(design)?;
    let start = initial_beta(design)?;
    let mut state = run_irls(design, Family::Poisson, options, start)?;
    let mut inner_ok = state.converged;
    let mut total_iterations = state.iterations;
    let mut alpha = moment_alpha(design, &state.mu);
    let mut outer_converged = false;

    for _ in 0..MAX_OUTER {
        state = run_irls(design, Family::NegBin { alpha }, options, state.beta.clone())?;
        total_iterations += state.iterations;
        inner_ok = state.converged;
        let next = moment_alpha(design, &state.mu);
        let rel = (next - alpha).abs() / alpha;
        alpha = next;
        if rel < ALPHA_REL_TOL {
            outer_converged = true;
            break;
        }
    }

    // final inner solve at the settled alpha
    state = run_irls(design, Family::NegBin { alpha }, options, state.beta.clone())?;
    total_iterations += state.iterations;
    inner_ok = inner_ok && state.converged;

    let converged = inner_ok && outer_converged;
    finish(
        design,
        Estimator::Nbpml,
        Family::NegBin { alpha },
        state,
        converged,
        total_iterations,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn design(y: Vec<f64>, cols: &[&[f64]], names: &[&str]) -> DesignMatrix {
        let n = y.len();
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let clusters = (0..n).map(|i| format!("c{i}")).collect();
        DesignMatrix::from_parts(y, x, names.iter().map(|s| s.to_string()).collect(), clusters).unwrap()
    }

    #[test]
    fn intercept_only_is_log_mean() {
        let d = design(vec![1.0, 2.0, 3.0], &[&[1.0, 1.0, 1.0]], &["intercept"]);
        let fit = fit_ppml(&d, &EstimatorOptions::default()).unwrap();
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-12);
        assert!(fit.converged);
        assert!(fit.pseudo_r2.unwrap().abs() < 1e-12);
    }

    #[test]
    fn saturated_two_groups() {
        let d = design(
            vec![1.0, 3.0, 5.0, 7.0],
            &[&[1.0; 4], &[0.0, 0.0, 1.0, 1.0]],
            &["intercept", "g"],
        );
        let fit = fit_ppml(&d, &EstimatorOptions::default()).unwrap();
        assert!((fit.coefficients[0] - 2f64.ln()).abs() < 1e-10);
        assert!((fit.coefficients[1] - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn all_zero_and_negative_response() {
        let d = design(vec![0.0, 0.0], &[&[1.0, 1.0]], &["intercept"]);
        assert!(matches!(fit_ppml(&d, &EstimatorOptions::default()), Err(GravityError::AllZeroResponse)));
        let d = design(vec![1.0, -1.0], &[&[1.0, 1.0]], &["intercept"]);
        assert!(matches!(fit_ppml(&d, &EstimatorOptions::default()), Err(GravityError::NegativeResponse(1))));
    }

    #[test]
    fn separated_indicator_named() {
        let d = design(
            vec![2.0, 3.0, 0.0, 0.0, 4.0],
            &[&[1.0; 5], &[0.0, 0.0, 1.0, 1.0, 0.0], &[0.1, 0.5, 0.2, 0.9, 0.3]],
            &["intercept", "gb", "x"],
        );
        match fit_ppml(&d, &EstimatorOptions::default()) {
            Err(GravityError::Separated { columns }) => assert_eq!(columns, vec!["gb".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let d = design(
            vec![1.0, 3.0, 5.0, 20.0],
            &[&[1.0; 4], &[0.0, 1.0, 2.0, 3.0]],
            &["intercept", "x"],
        );
        let opts = EstimatorOptions {
            max_iterations: 1,
            ..Default::default()
        };
        match fit_ppml(&d, &opts) {
            Err(GravityError::NotConverged { fit }) => {
                assert!(!fit.converged);
                assert_eq!(fit.iterations, 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nb_intercept_only_preserves_mean() {
        let d = design(vec![1.0, 2.0, 3.0], &[&[1.0, 1.0, 1.0]], &["intercept"]);
        let fit = fit_nbpml(&d, &EstimatorOptions::default()).unwrap();
        assert!((fit.coefficients[0].exp() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn deviance_zero_at_saturation() {
        for fam in [Family::Poisson, Family::NegBin { alpha: 0.5 }] {
            assert!(fam.unit_deviance(3.0, 3.0).abs() < 1e-14);
            assert!(fam.unit_deviance(0.0, 1.0) > 0.0);
        }
    }

    #[test]
    fn nb_loglik_approaches_poisson() {
        let p = Family::Poisson.unit_loglik(4.0, 3.0);
        let nb = Family::NegBin { alpha: 1e-7 }.unit_loglik(4.0, 3.0);
        assert!((p - nb).abs() < 1e-5);
    }
}
