//! Sequential state estimation with the fitted coordinate operators:
//! belief initialization, prediction and innovation updates, and the
//! preimage projection back into observation space.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{EltoError, Result};
use crate::kernels::section;
use crate::linalg::{rough_condition, solve_regularized, symmetrize};
use crate::operators::EltoFilterModel;
use crate::systems::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prior,
    Posterior,
}

/// Belief over the latent state, held as weights over the full N-sample
/// state feature basis.
#[derive(Debug, Clone)]
pub struct BeliefState {
    pub m: Array1<f64>,
    pub s: Array2<f64>,
    pub stage: Stage,
    pub t: usize,
    /// Set when an innovation system was solved with condition > 1e14.
    pub ill_conditioned: bool,
}

impl BeliefState {
    fn check_finite(&self, context: &str) -> Result<()> {
        if self.m.iter().any(|v| !v.is_finite()) || self.s.iter().any(|v| !v.is_finite()) {
            return Err(EltoError::NonFinite(format!("belief after {context} at t={}", self.t)));
        }
        Ok(())
    }
}

/// One-step filter output in observation space.
#[derive(Debug, Clone)]
pub struct FilterOutput {
    pub t: usize,
    /// Predicted observation mean, length q.
    pub eta: Array1<f64>,
    /// Predicted observation covariance, q x q.
    pub sigma: Array2<f64>,
    /// Norm of the innovation residual consumed at this step (zero when
    /// the observation was missing).
    pub innovation_norm: f64,
}

pub(crate) fn belief_from_columns(c0: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let j = c0.ncols();
    if j < 2 {
        return Err(EltoError::InvalidArgument(format!(
            "initialization needs J >= 2 columns, got {j}"
        )));
    }
    let m = c0.sum_axis(ndarray::Axis(1)) / j as f64;
    let mut s = Array2::zeros((c0.nrows(), c0.nrows()));
    for col in c0.columns() {
        let d = &col.to_owned() - &m;
        let dcol = d.view().insert_axis(ndarray::Axis(1));
        s = s + dcol.dot(&dcol.t());
    }
    s /= (j - 1) as f64;
    symmetrize(&mut s);
    Ok((m, s))
}

/// Build the initial belief from J random state-space points embedded
/// through the regularized projection onto the training basis.
pub fn init_belief(model: &EltoFilterModel, j: usize, seed: u64) -> Result<BeliefState> {
    if j < 2 {
        return Err(EltoError::InvalidArgument(format!(
            "initialization needs J >= 2 samples, got {j}"
        )));
    }
    let n = model.n_samples();
    let r = model.state_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k0 = Array2::zeros((n, j));
    let xs = model.x.t().to_owned();
    for col in 0..j {
        let u = Array1::from_iter((0..r).map(|_| rng.random_range(0.0..1.0)));
        let sec = section(&model.kernel_x, xs.view(), u.view())?;
        k0.column_mut(col).assign(&sec);
    }
    let c0 = solve_regularized(model.g_x.view(), model.eps_o, k0.view())?;
    let (m, s) = belief_from_columns(&c0)?;
    let belief = BeliefState { m, s, stage: Stage::Posterior, t: 0, ill_conditioned: false };
    belief.check_finite("init")?;
    Ok(belief)
}

/// Prediction update: propagate mean and covariance one step and add the
/// process-noise surrogate.
pub fn predict(model: &EltoFilterModel, belief: &BeliefState) -> Result<BeliefState> {
    if belief.stage != Stage::Prior && belief.stage != Stage::Posterior {
        unreachable!();
    }
    if belief.stage != Stage::Posterior {
        return Err(EltoError::StageMismatch(format!(
            "predict requires a posterior belief, got prior at t={}",
            belief.t
        )));
    }
    let m = model.t_full.dot(&belief.m);
    let mut s = model.t_full.dot(&belief.s).dot(&model.t_full.t()) + &model.noise_cov;
    symmetrize(&mut s);
    let out = BeliefState {
        m,
        s,
        stage: Stage::Prior,
        t: belief.t + 1,
        ill_conditioned: belief.ill_conditioned,
    };
    out.check_finite("predict")?;
    Ok(out)
}

/// Innovation update with an incoming observation.
pub fn innovate(
    model: &EltoFilterModel,
    belief: &BeliefState,
    y: ndarray::ArrayView1<f64>,
) -> Result<(BeliefState, f64)> {
    if belief.stage != Stage::Prior {
        return Err(EltoError::StageMismatch(format!(
            "innovate requires a prior belief, got posterior at t={}",
            belief.t
        )));
    }
    if y.len() != model.obs_dim() {
        return Err(EltoError::InvalidArgument(format!(
            "observation dimension {} does not match model q={}",
            y.len(),
            model.obs_dim()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(EltoError::InvalidArgument(format!(
            "non-finite observation at t={}",
            belief.t
        )));
    }

    let ys = model.y_train.t().to_owned();
    let k = section(&model.kernel_y, ys.view(), y)?;

    let a = model.g_y.dot(&model.o_coord); // G_y O
    let s_ot = belief.s.dot(&model.o_coord.t()); // S^- O^T
    let inno_sys = a.dot(&s_ot); // G_y O S^- O^T
    let ill = rough_condition(inno_sys.view()) > 1e14 || belief.ill_conditioned;
    // Q = S^- O^T (inno_sys + eps_q I)^{-1}, via the transposed solve
    let qt = solve_regularized(inno_sys.t().to_owned().view(), model.eps_q, s_ot.t().to_owned().view())?;
    let q = qt.t().to_owned();

    let resid = &k - &a.dot(&belief.m);
    let m = &belief.m + &q.dot(&resid);
    let mut s = &belief.s - &q.dot(&a).dot(&belief.s);
    symmetrize(&mut s);
    let inno_norm = resid.dot(&resid).sqrt();
    let out = BeliefState { m, s, stage: Stage::Posterior, t: belief.t, ill_conditioned: ill };
    out.check_finite("innovate")?;
    Ok((out, inno_norm))
}

/// Project a belief back into observation space.
pub fn preimage(model: &EltoFilterModel, belief: &BeliefState) -> Result<FilterOutput> {
    let d = model.y_train.dot(&model.o_coord); // q x N decode map
    let eta = d.dot(&belief.m);
    let mut sigma = d.dot(&belief.s).dot(&d.t());
    symmetrize(&mut sigma);
    if eta.iter().any(|v| !v.is_finite()) || sigma.iter().any(|v| !v.is_finite()) {
        return Err(EltoError::NonFinite(format!("preimage at t={}", belief.t)));
    }
    Ok(FilterOutput { t: belief.t, eta, sigma, innovation_norm: 0.0 })
}

/// Run the filter over an observation sequence. The emitted output at
/// step t is the preimage of the prior (pre-innovation) belief, i.e. the
/// one-step-ahead prediction; `missing_mask[t] == false` skips the
/// innovation at that step.
pub fn run_filter(
    model: &EltoFilterModel,
    observations: &TimeSeries,
    missing_mask: Option<&[bool]>,
    init_j: Option<usize>,
    seed: u64,
) -> Result<Vec<FilterOutput>> {
    let steps = observations.len();
    if steps == 0 {
        return Ok(Vec::new());
    }
    if observations.dim() != model.obs_dim() {
        return Err(EltoError::InvalidArgument(format!(
            "observation dimension {} does not match model q={}",
            observations.dim(),
            model.obs_dim()
        )));
    }
    if let Some(mask) = missing_mask {
        if mask.len() != steps {
            return Err(EltoError::InvalidArgument(format!(
                "mask length {} does not match observation count {steps}",
                mask.len()
            )));
        }
    }
    let j = init_j.unwrap_or(model.n_samples()).max(2);
    let mut belief = init_belief(model, j, seed)?;
    let mut outputs = Vec::with_capacity(steps);
    for t in 0..steps {
        belief = predict(model, &belief)
            .map_err(|e| EltoError::Internal(format!("step {t}: {e}")))?;
        let mut out = preimage(model, &belief)
            .map_err(|e| EltoError::Internal(format!("step {t}: {e}")))?;
        let available = missing_mask.map(|m| m[t]).unwrap_or(true);
        if available {
            let (post, inno) = innovate(model, &belief, observations.data.row(t))
                .map_err(|e| EltoError::Internal(format!("step {t}: {e}")))?;
            belief = post;
            out.innovation_norm = inno;
        } else {
            // keep the prior as the working belief; stamp it posterior so
            // the next predict is well-formed
            belief = BeliefState { stage: Stage::Posterior, ..belief };
        }
        outputs.push(out);
    }
    Ok(outputs)
}

/// Write a filter trace as CSV: t, eta_1..q, innovation_norm, diag(Sigma)_1..q.
pub fn export_trace(outputs: &[FilterOutput], path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| EltoError::Io(e.to_string()))?;
    let q = outputs.first().map(|o| o.eta.len()).unwrap_or(0);
    let mut header = vec!["t".to_string()];
    header.extend((1..=q).map(|i| format!("eta_{i}")));
    header.push("innovation_norm".to_string());
    header.extend((1..=q).map(|i| format!("sigma_{i}")));
    wtr.write_record(&header).map_err(|e| EltoError::Io(e.to_string()))?;
    for o in outputs {
        let mut rec = vec![o.t.to_string()];
        rec.extend(o.eta.iter().map(|v| format!("{v:.17e}")));
        rec.push(format!("{:.17e}", o.innovation_norm));
        rec.extend(o.sigma.diag().iter().map(|v| format!("{v:.17e}")));
        wtr.write_record(&rec).map_err(|e| EltoError::Io(e.to_string()))?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::operators::fit_operators;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Axis};
    use ndarray_linalg::OperationNorm;
    use rand_distr::{Distribution, Normal};

    fn toy_model() -> EltoFilterModel {
        let x = array![[0.1, 0.5, -0.3, 0.8, -0.6, 0.2, 0.9, -0.1]];
        let y = array![[0.2, 0.6, -0.2, 0.9, -0.5, 0.3, 1.0, 0.0]];
        let k = KernelSpec::rbf(1.0).unwrap();
        fit_operators(x.view(), y.view(), &k, &k, 1e-4, 1e-4, 1e-4).unwrap()
    }

    #[test]
    fn identical_columns_give_zero_covariance() {
        let col = array![1.0, -2.0, 0.5];
        let mut c0 = Array2::zeros((3, 4));
        for mut c in c0.columns_mut() {
            c.assign(&col);
        }
        let (m, s) = belief_from_columns(&c0).unwrap();
        for (a, b) in m.iter().zip(col.iter()) {
            assert_abs_diff_eq!(a, b);
        }
        for v in s.iter() {
            assert_abs_diff_eq!(*v, 0.0);
        }
    }

    #[test]
    fn antisymmetric_columns_give_outer_product() {
        let c = array![0.7, -0.4];
        let mut c0 = Array2::zeros((2, 2));
        c0.column_mut(0).assign(&c);
        c0.column_mut(1).assign(&(-&c));
        let (m, s) = belief_from_columns(&c0).unwrap();
        for v in m.iter() {
            assert_abs_diff_eq!(*v, 0.0);
        }
        // with the 1/(J-1) convention, S = 2 c c^T for J = 2... check directly
        let want = {
            let cc = c.view().insert_axis(Axis(1));
            cc.dot(&cc.t()) * 2.0
        };
        for (a, b) in s.iter().zip(want.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn init_is_deterministic_and_validates_j() {
        let model = toy_model();
        let b1 = init_belief(&model, 6, 42).unwrap();
        let b2 = init_belief(&model, 6, 42).unwrap();
        assert_eq!(b1.m, b2.m);
        assert_eq!(b1.s, b2.s);
        assert_eq!(b1.stage, Stage::Posterior);
        assert_eq!(b1.t, 0);
        assert!(init_belief(&model, 1, 42).is_err());
        let b3 = init_belief(&model, 6, 43).unwrap();
        assert_ne!(b1.m, b3.m);
    }

    #[test]
    fn predict_of_zero_belief_is_pure_noise() {
        let model = toy_model();
        let n = model.n_samples();
        let belief = BeliefState {
            m: Array1::zeros(n),
            s: Array2::zeros((n, n)),
            stage: Stage::Posterior,
            t: 0,
            ill_conditioned: false,
        };
        let prior = predict(&model, &belief).unwrap();
        assert_eq!(prior.stage, Stage::Prior);
        assert_eq!(prior.t, 1);
        for v in prior.m.iter() {
            assert_abs_diff_eq!(*v, 0.0);
        }
        for (a, b) in prior.s.iter().zip(model.noise_cov.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(predict(&model, &prior).is_err());
    }

    #[test]
    fn tiny_eps_t_shrinks_noise_term() {
        let x = array![[0.1, 0.5, -0.3, 0.8, -0.6, 0.2]];
        let k = KernelSpec::rbf(1.0).unwrap();
        let loose = fit_operators(x.view(), x.view(), &k, &k, 1e-2, 1e-4, 1e-4).unwrap();
        let tight = fit_operators(x.view(), x.view(), &k, &k, 1e-12, 1e-4, 1e-4).unwrap();
        let n_loose = loose.noise_cov.opnorm_fro().unwrap();
        let n_tight = tight.noise_cov.opnorm_fro().unwrap();
        assert!(n_tight < 1e-6 * n_loose.max(1e-30) || n_tight < 1e-12);
    }

    #[test]
    fn predict_mean_is_linear() {
        let model = toy_model();
        let n = model.n_samples();
        let mk = |m: Array1<f64>| BeliefState {
            m,
            s: Array2::zeros((n, n)),
            stage: Stage::Posterior,
            t: 0,
            ill_conditioned: false,
        };
        let m1 = Array1::from_iter((0..n).map(|i| (i as f64 * 0.3).sin()));
        let m2 = Array1::from_iter((0..n).map(|i| (i as f64 * 0.7).cos()));
        let (a, b) = (0.6, -1.3);
        let combo = predict(&model, &mk(&m1 * a + &m2 * b)).unwrap();
        let p1 = predict(&model, &mk(m1)).unwrap();
        let p2 = predict(&model, &mk(m2)).unwrap();
        for i in 0..n {
            assert_abs_diff_eq!(combo.m[i], a * p1.m[i] + b * p2.m[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn certain_prior_ignores_observation() {
        let model = toy_model();
        let n = model.n_samples();
        let prior = BeliefState {
            m: Array1::from_elem(n, 0.1),
            s: Array2::zeros((n, n)),
            stage: Stage::Prior,
            t: 1,
            ill_conditioned: false,
        };
        let (post, _) = innovate(&model, &prior, array![0.5].view()).unwrap();
        for (a, b) in post.m.iter().zip(prior.m.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        for v in post.s.iter() {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_eps_q_freezes_belief() {
        let model = {
            let x = array![[0.1, 0.5, -0.3, 0.8, -0.6, 0.2, 0.9, -0.1]];
            let k = KernelSpec::rbf(1.0).unwrap();
            fit_operators(x.view(), x.view(), &k, &k, 1e-4, 1e-4, 1e12).unwrap()
        };
        let belief = init_belief(&model, 8, 0).unwrap();
        let prior = predict(&model, &belief).unwrap();
        let (post, _) = innovate(&model, &prior, array![0.4].view()).unwrap();
        for (a, b) in post.m.iter().zip(prior.m.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn innovate_rejects_bad_inputs() {
        let model = toy_model();
        let belief = init_belief(&model, 4, 0).unwrap();
        // posterior belief cannot innovate
        assert!(innovate(&model, &belief, array![0.1].view()).is_err());
        let prior = predict(&model, &belief).unwrap();
        assert!(innovate(&model, &prior, array![f64::NAN].view()).is_err());
        assert!(innovate(&model, &prior, array![0.1, 0.2].view()).is_err());
    }

    #[test]
    fn preimage_of_zero_covariance_has_zero_sigma() {
        let model = toy_model();
        let n = model.n_samples();
        let belief = BeliefState {
            m: Array1::from_elem(n, 0.2),
            s: Array2::zeros((n, n)),
            stage: Stage::Posterior,
            t: 3,
            ill_conditioned: false,
        };
        let out = preimage(&model, &belief).unwrap();
        for v in out.sigma.iter() {
            assert_abs_diff_eq!(*v, 0.0);
        }
        assert_eq!(out.t, 3);
    }

    #[test]
    fn one_hot_preimage_recovers_training_observation() {
        let model = {
            let x = array![[0.1, 0.5, -0.3, 0.8, -0.6, 0.2]];
            let y = array![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]];
            let k = KernelSpec::rbf(1.0).unwrap();
            fit_operators(x.view(), y.view(), &k, &k, 1e-4, 1e-12, 1e-4).unwrap()
        };
        let n = model.n_samples();
        for kidx in 0..n {
            let mut m = Array1::zeros(n);
            m[kidx] = 1.0;
            let belief = BeliefState {
                m,
                s: Array2::zeros((n, n)),
                stage: Stage::Posterior,
                t: 0,
                ill_conditioned: false,
            };
            let out = preimage(&model, &belief).unwrap();
            assert_abs_diff_eq!(out.eta[0], model.y_train[[0, kidx]], epsilon = 1e-5);
        }
    }

    #[test]
    fn empty_observations_give_empty_output() {
        let model = toy_model();
        let obs = TimeSeries::new(Array2::zeros((0, 1)), 1.0, 0, "empty");
        // an empty series is rejected at construction, so emulate via len 0 check
        assert!(obs.is_err() || run_filter(&model, &obs.unwrap(), None, None, 0).unwrap().is_empty());
    }

    #[test]
    fn fully_masked_run_equals_prediction_rollout() {
        let model = toy_model();
        let obs = TimeSeries::new(
            Array2::from_shape_vec((5, 1), vec![0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(),
            1.0,
            0,
            "obs",
        )
        .unwrap();
        let mask = vec![false; 5];
        let masked = run_filter(&model, &obs, Some(&mask), Some(4), 7).unwrap();

        let mut belief = init_belief(&model, 4, 7).unwrap();
        for out in &masked {
            belief = predict(&model, &belief).unwrap();
            let want = preimage(&model, &belief).unwrap();
            for (a, b) in out.eta.iter().zip(want.eta.iter()) {
                assert_abs_diff_eq!(a, b);
            }
            assert_abs_diff_eq!(out.innovation_norm, 0.0);
            belief = BeliefState { stage: Stage::Posterior, ..belief };
        }
    }

    #[test]
    fn filter_runs_are_deterministic() {
        let model = toy_model();
        let obs = TimeSeries::new(
            Array2::from_shape_vec((6, 1), vec![0.1, 0.3, -0.2, 0.5, 0.0, 0.2]).unwrap(),
            1.0,
            0,
            "obs",
        )
        .unwrap();
        let r1 = run_filter(&model, &obs, None, Some(6), 3).unwrap();
        let r2 = run_filter(&model, &obs, None, Some(6), 3).unwrap();
        for (a, b) in r1.iter().zip(r2.iter()) {
            assert_eq!(a.eta, b.eta);
            assert_eq!(a.sigma, b.sigma);
        }
    }

    /// Scalar linear-Gaussian system: the decoded posterior mean should
    /// track the classical Kalman filter posterior mean. The reduction is
    /// exact only when the process-noise surrogate is negligible (a
    /// rank-1 linear-kernel Gram leaves no observable component in the
    /// surrogate), so the noise scales are kept small.
    #[test]
    fn linear_gaussian_matches_classical_kalman() {
        let a0 = 0.9;
        let sig_w = 1e-4;
        let sig_v = 1e-3;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let wn = Normal::new(0.0, sig_w).unwrap();
        let vn = Normal::new(0.0, sig_v).unwrap();

        let n_train = 250;
        let mut xs = vec![1.0f64];
        for _ in 1..n_train {
            xs.push(a0 * xs.last().unwrap() + wn.sample(&mut rng));
        }
        let ys: Vec<f64> = xs.iter().map(|x| x + vn.sample(&mut rng)).collect();
        let x = Array2::from_shape_vec((1, n_train), xs.clone()).unwrap();
        let y = Array2::from_shape_vec((1, n_train), ys).unwrap();
        let k = KernelSpec::linear();
        let eps = 1e-8;
        let model = fit_operators(x.view(), y.view(), &k, &k, eps, eps, eps).unwrap();

        // test rollout
        let steps = 50;
        let mut xt = 0.8f64;
        let mut obs = Vec::new();
        let mut truth = Vec::new();
        for _ in 0..steps {
            xt = a0 * xt + wn.sample(&mut rng);
            truth.push(xt);
            obs.push(xt + vn.sample(&mut rng));
        }
        let obs_ts = TimeSeries::new(
            Array2::from_shape_vec((steps, 1), obs.clone()).unwrap(),
            1.0,
            0,
            "lg-test",
        )
        .unwrap();

        // classical filter over the same observations
        let mut km = 0.0f64;
        let mut kp = 1.0f64;
        let mut classical = Vec::new();
        for &yt in &obs {
            let pm = a0 * km;
            let pp = a0 * a0 * kp + sig_w * sig_w;
            let gain = pp / (pp + sig_v * sig_v);
            km = pm + gain * (yt - pm);
            kp = (1.0 - gain) * pp;
            classical.push(km);
        }

        // embedded filter posterior means, decoded through the preimage
        let mut belief = init_belief(&model, model.n_samples(), 5).unwrap();
        let mut decoded = Vec::new();
        for t in 0..steps {
            belief = predict(&model, &belief).unwrap();
            let (post, _) = innovate(&model, &belief, obs_ts.data.row(t)).unwrap();
            belief = post;
            decoded.push(preimage(&model, &belief).unwrap().eta[0]);
        }

        let mse: f64 = decoded
            .iter()
            .zip(classical.iter())
            .map(|(d, c)| (d - c).powi(2))
            .sum::<f64>()
            / steps as f64;
        assert!(mse < 1e-4, "posterior-mean MSE vs classical filter: {mse}");
    }

    #[test]
    fn trace_export_round_trips() {
        let model = toy_model();
        let obs = TimeSeries::new(
            Array2::from_shape_vec((4, 1), vec![0.1, 0.3, -0.2, 0.5]).unwrap(),
            1.0,
            0,
            "obs",
        )
        .unwrap();
        let outputs = run_filter(&model, &obs, None, Some(4), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        export_trace(&outputs, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,eta_1,innovation_norm,sigma_1");
        assert_eq!(lines.count(), 4);
    }
}

