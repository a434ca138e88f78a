//! Hand-rolled (mu/mu_w, lambda)-CMA-ES for low-dimensional
//! hyperparameter search. Positive hyperparameters are expected to be
//! passed in log-space by the caller.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};

/// One evaluated candidate in a search trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchStep {
    pub candidate: Vec<f64>,
    pub score: f64,
}

/// Default population size `4 + floor(3 ln d)`.
pub fn default_population(dim: usize) -> usize {
    4 + (3.0 * (dim as f64).ln()).floor() as usize
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Minimize `objective` starting from `x0` with initial step size
/// `sigma0` and an evaluation budget. Returns the best-ever candidate and
/// a per-generation trace of the best-ever score (monotone non-increasing).
pub fn cma_es<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    sigma0: f64,
    budget: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<SearchStep>)> {
    let d = x0.len();
    if d == 0 {
        return Err(EltoError::InvalidArgument("empty search space".into()));
    }
    if !(sigma0 > 0.0) || !sigma0.is_finite() {
        return Err(EltoError::InvalidArgument(format!("sigma0 must be positive, got {sigma0}")));
    }
    let lambda = default_population(d);
    if budget < lambda {
        return Err(EltoError::InvalidArgument(format!(
            "budget {budget} below population size {lambda}"
        )));
    }

    let mu = lambda / 2;
    let mut weights: Vec<f64> =
        (1..=mu).map(|i| ((mu as f64) + 0.5).ln() - (i as f64).ln()).collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let df = d as f64;

    let c_sigma = (mu_eff + 2.0) / (df + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (df + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / df) / (df + 4.0 + 2.0 * mu_eff / df);
    let c_1 = 2.0 / ((df + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1)
        .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((df + 2.0).powi(2) + mu_eff));
    let chi_n = df.sqrt() * (1.0 - 1.0 / (4.0 * df) + 1.0 / (21.0 * df * df));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mean = Array1::from_iter(x0.iter().cloned());
    let mut sigma = sigma0;
    let mut cov: Array2<f64> = Array2::eye(d);
    let mut p_sigma = Array1::<f64>::zeros(d);
    let mut p_c = Array1::<f64>::zeros(d);

    let mut best_x = x0.to_vec();
    let mut best_f = sanitize(objective(x0));
    let mut trace = Vec::new();
    let mut evals = 1usize;
    let mut gen = 0usize;

    while evals + lambda <= budget {
        gen += 1;
        // eigendecomposition C = B diag(d2) B^T for sampling and whitening
        let (eigvals, b) = cov.eigh(UPLO::Lower)?;
        let d_diag: Array1<f64> = eigvals.mapv(|v| v.max(1e-300).sqrt());

        let mut xs: Vec<Array1<f64>> = Vec::with_capacity(lambda);
        let mut ys: Vec<Array1<f64>> = Vec::with_capacity(lambda);
        let mut fs: Vec<f64> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let z = Array1::from_iter((0..d).map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v
            }));
            let y = b.dot(&(&d_diag * &z));
            let x = &mean + &(sigma * &y);
            let f = sanitize(objective(x.as_slice().unwrap()));
            if f < best_f {
                best_f = f;
                best_x = x.to_vec();
            }
            xs.push(x);
            ys.push(y);
            fs.push(f);
        }
        evals += lambda;

        let mut order: Vec<usize> = (0..lambda).collect();
        order.sort_by(|&a, &bb| fs[a].partial_cmp(&fs[bb]).unwrap());

        let mut y_w = Array1::<f64>::zeros(d);
        for (i, &k) in order.iter().take(mu).enumerate() {
            y_w = y_w + weights[i] * &ys[k];
        }
        mean = &mean + &(sigma * &y_w);

        // step-size path uses C^{-1/2} y_w = B D^{-1} B^T y_w
        let whitened = b.dot(&(&b.t().dot(&y_w) / &d_diag));
        p_sigma = (1.0 - c_sigma) * &p_sigma
            + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * &whitened;
        let ps_norm = p_sigma.dot(&p_sigma).sqrt();
        let h_sigma = ps_norm
            / (1.0 - (1.0 - c_sigma).powi(2 * gen as i32)).sqrt()
            < (1.4 + 2.0 / (df + 1.0)) * chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };

        p_c = (1.0 - c_c) * &p_c + h * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &y_w;

        let delta_h = (1.0 - h) * c_c * (2.0 - c_c);
        let pc_col = p_c.view().insert_axis(ndarray::Axis(1));
        let mut rank_mu = Array2::<f64>::zeros((d, d));
        for (i, &k) in order.iter().take(mu).enumerate() {
            let yc = ys[k].view().insert_axis(ndarray::Axis(1));
            rank_mu = rank_mu + weights[i] * yc.dot(&yc.t());
        }
        cov = (1.0 - c_1 - c_mu) * &cov
            + c_1 * (pc_col.dot(&pc_col.t()) + delta_h * &cov)
            + c_mu * rank_mu;
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (cov[[i, j]] + cov[[j, i]]);
                cov[[i, j]] = v;
                cov[[j, i]] = v;
            }
        }

        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        if !sigma.is_finite() || sigma <= 0.0 {
            sigma = 1e-12;
        }

        trace.push(SearchStep { candidate: best_x.clone(), score: best_f });
    }

    Ok((best_x, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_converges() {
        let obj = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let (best, trace) = cma_es(obj, &[2.0, -1.5], 0.5, 600, 7).unwrap();
        let val: f64 = best.iter().map(|v| v * v).sum();
        assert!(val < 1e-8, "sphere best {val:.3e}");
        assert!(!trace.is_empty());
    }

    #[test]
    fn best_ever_monotone() {
        let obj = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2);
        let (_, trace) = cma_es(obj, &[0.0, 0.0], 0.5, 300, 11).unwrap();
        for w in trace.windows(2) {
            assert!(w[1].score <= w[0].score);
        }
    }

    #[test]
    fn budget_below_population_errors() {
        let obj = |x: &[f64]| x[0] * x[0];
        assert!(cma_es(obj, &[1.0, 1.0], 0.5, 5, 0).is_err());
    }

    #[test]
    fn fixed_seed_repeats() {
        let obj = |x: &[f64]| x.iter().map(|v| (v - 0.5).powi(2)).sum::<f64>();
        let (a, ta) = cma_es(obj, &[1.0, 1.0, 1.0], 0.5, 200, 42).unwrap();
        let (b, tb) = cma_es(obj, &[1.0, 1.0, 1.0], 0.5, 200, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta.len(), tb.len());
        for (x, y) in ta.iter().zip(tb.iter()) {
            assert_eq!(x.candidate, y.candidate);
            assert_eq!(x.score, y.score);
        }
    }

    #[test]
    fn non_finite_objective_treated_as_worst() {
        let obj = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::NAN
            } else {
                (x[0] - 1.0).powi(2)
            }
        };
        let (best, _) = cma_es(obj, &[2.0], 0.5, 200, 3).unwrap();
        assert!((best[0] - 1.0).abs() < 1e-3);
    }
}
