//! Config-driven experiment harness: simulation-to-score pipelines,
//! hyperparameter search, noise sweeps, and result emission.

pub mod cmaes;

use std::path::PathBuf;
use std::time::Instant;

use ndarray::{s, Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};
use crate::filter::{run_filter, FilterOutput};
use crate::kernels::{self_gram, KernelSpec};
use crate::modes::{
    decompose, dmd_exact, edmd, eigen_error, hankel_dmd, kernel_koopman, retained_eigs,
    subspace_dmd, EdmdDictionary, ModeDecomposition, SpectrumDomain,
};
use crate::operators::{default_eps, fit_operators, EltoFilterModel};
use crate::realization::{extract_states, optimize_w, RealizationConfig, ReferencePolicy};
use crate::systems::{
    angles_from_unit_obs, load_csv, simulate_pendulum, simulate_sl, simulate_vdp, true_eigs_sl,
    true_eigs_vdp, PendulumConfig, SlConfig, TimeSeries, VdpConfig, SL_KAPPA, SL_OMEGA,
};

pub use cmaes::{cma_es, SearchStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PendulumFilter,
    VdpModes,
    SlModes,
    CsvFilter,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::PendulumFilter => "pendulum_filter",
            ExperimentKind::VdpModes => "vdp_modes",
            ExperimentKind::SlModes => "sl_modes",
            ExperimentKind::CsvFilter => "csv_filter",
        }
    }

    pub fn is_filter(&self) -> bool {
        matches!(self, ExperimentKind::PendulumFilter | ExperimentKind::CsvFilter)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Elto,
    Dmd,
    HankelDmd,
    Edmd,
    SubspaceDmd,
    Locf,
}

impl MethodName {
    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Elto => "elto",
            MethodName::Dmd => "dmd",
            MethodName::HankelDmd => "hankel_dmd",
            MethodName::Edmd => "edmd",
            MethodName::SubspaceDmd => "subspace_dmd",
            MethodName::Locf => "locf",
        }
    }
}

/// Model hyperparameters shared by the filter and mode pipelines.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub h: usize,
    /// Retained state rank; `None` applies the 5% correlation rule.
    pub r: Option<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    /// RBF bandwidth for the observation kernel; `None` uses the median
    /// heuristic on the training samples.
    pub gamma_y: Option<f64>,
    /// RBF bandwidth for the state kernel; `None` uses the median
    /// heuristic on the extracted states.
    pub gamma_x: Option<f64>,
    pub eps_t: Option<f64>,
    pub eps_o: Option<f64>,
    pub eps_q: Option<f64>,
    /// Reference set: trailing k training samples, or all when `None`.
    pub reference_last_k: Option<usize>,
    pub n_modes: usize,
    /// Hankel-DMD delay depth.
    pub delay_d: usize,
    /// Extended-DMD exponential-dictionary order.
    pub edmd_max_order: i32,
    /// Number of scored harmonic pairs of the fundamental eigenvalue.
    pub harmonics: usize,
    /// Optimizer restarts for the filter pipeline; the restart with the
    /// best held-out prediction MSE wins (the subspace loss alone does
    /// not expose degenerate observables).
    pub restarts: usize,
    /// Discrete-magnitude retention band applied before matching.
    pub band: Option<(f64, f64)>,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            h: 5,
            r: None,
            epochs: 200,
            learning_rate: 0.05,
            gamma_y: None,
            gamma_x: None,
            eps_t: None,
            eps_o: None,
            eps_q: None,
            reference_last_k: None,
            n_modes: 8,
            delay_d: 30,
            edmd_max_order: 4,
            harmonics: 4,
            restarts: 3,
            band: Some((0.2, 1.1)),
        }
    }
}

impl ModelParams {
    fn reference(&self) -> ReferencePolicy {
        match self.reference_last_k {
            Some(k) => ReferencePolicy::LastK(k),
            None => ReferencePolicy::All,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    None,
    Grid,
    Cmaes,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpec {
    pub method: SearchMethod,
    pub budget: usize,
    pub seed: u64,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec { method: SearchMethod::None, budget: 40, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub pendulum: Option<PendulumConfig>,
    #[serde(default)]
    pub vdp: Option<VdpConfig>,
    #[serde(default)]
    pub sl: Option<SlConfig>,
    #[serde(default)]
    pub input_path: Option<PathBuf>,
    #[serde(default = "default_input_dt")]
    pub input_dt: f64,
    #[serde(default)]
    pub input_has_header: bool,
    #[serde(default)]
    pub input_center: bool,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub search: SearchSpec,
    /// Methods to run; empty selects the per-experiment defaults.
    #[serde(default)]
    pub methods: Vec<MethodName>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Training samples for the filter experiments.
    #[serde(default = "default_train_len")]
    pub train_len: usize,
    /// Held-out evaluation samples for the filter experiments.
    #[serde(default = "default_val_len")]
    pub val_len: usize,
    /// Evaluation steps skipped while the filter converges from its
    /// random initialization.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    /// Explicit noise axis for sweeps; empty selects the per-experiment
    /// defaults.
    #[serde(default)]
    pub sweep_values: Vec<f64>,
}

fn default_input_dt() -> f64 {
    1.0
}
fn default_trials() -> usize {
    1
}
fn default_train_len() -> usize {
    300
}
fn default_val_len() -> usize {
    100
}
fn default_burn_in() -> usize {
    10
}

/// Trial seeds are spaced by a prime stride for reproducible independence.
pub const TRIAL_SEED_STRIDE: u64 = 10_007;

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(EltoError::InvalidArgument("trials must be >= 1".into()));
        }
        if self.search.budget == 0 {
            return Err(EltoError::InvalidArgument("search budget must be >= 1".into()));
        }
        if self.model.h < 3 {
            return Err(EltoError::InvalidArgument(format!(
                "window size h must be >= 3, got {}",
                self.model.h
            )));
        }
        if self.model.n_modes == 0 || self.model.delay_d == 0 || self.model.harmonics == 0 {
            return Err(EltoError::InvalidArgument(
                "n_modes, delay_d, and harmonics must be >= 1".into(),
            ));
        }
        if self.model.edmd_max_order < 1 {
            return Err(EltoError::InvalidArgument("edmd_max_order must be >= 1".into()));
        }
        if !(self.model.learning_rate >= 0.0) {
            return Err(EltoError::InvalidArgument("learning_rate must be >= 0".into()));
        }
        if self.experiment.is_filter() {
            if self.val_len == 0 || self.burn_in >= self.val_len {
                return Err(EltoError::InvalidArgument(format!(
                    "burn_in {} must be below val_len {}",
                    self.burn_in, self.val_len
                )));
            }
            if self.train_len < 2 * self.model.h + 2 {
                return Err(EltoError::InvalidArgument(format!(
                    "train_len {} too short for h={}",
                    self.train_len, self.model.h
                )));
            }
        }
        if self.experiment == ExperimentKind::CsvFilter && self.input_path.is_none() {
            return Err(EltoError::InvalidArgument("csv_filter needs input_path".into()));
        }
        for m in &self.methods {
            self.check_method(*m)?;
        }
        Ok(())
    }

    fn check_method(&self, method: MethodName) -> Result<()> {
        let ok = if self.experiment.is_filter() {
            matches!(method, MethodName::Elto | MethodName::Locf)
        } else {
            method != MethodName::Locf
        };
        if ok {
            Ok(())
        } else {
            Err(EltoError::InvalidArgument(format!(
                "method {} is not applicable to {}",
                method.as_str(),
                self.experiment.as_str()
            )))
        }
    }

    pub fn effective_methods(&self) -> Vec<MethodName> {
        if !self.methods.is_empty() {
            return self.methods.clone();
        }
        match self.experiment {
            ExperimentKind::PendulumFilter | ExperimentKind::CsvFilter => {
                vec![MethodName::Elto, MethodName::Locf]
            }
            ExperimentKind::VdpModes => vec![
                MethodName::Elto,
                MethodName::Dmd,
                MethodName::HankelDmd,
                MethodName::SubspaceDmd,
            ],
            ExperimentKind::SlModes => {
                vec![MethodName::Elto, MethodName::Edmd, MethodName::SubspaceDmd]
            }
        }
    }

    /// The noise level this experiment varies, used for the sweep axis
    /// and the results table.
    pub fn noise_level(&self) -> f64 {
        match self.experiment {
            ExperimentKind::PendulumFilter => {
                self.pendulum.clone().unwrap_or_default().n_p
            }
            ExperimentKind::VdpModes => self.vdp.clone().unwrap_or_default().obs_noise_std,
            ExperimentKind::SlModes => self.sl.clone().unwrap_or_default().eps_process,
            ExperimentKind::CsvFilter => 0.0,
        }
    }

    pub fn set_noise(&mut self, value: f64) -> Result<()> {
        if !(value >= 0.0) {
            return Err(EltoError::InvalidArgument(format!("noise must be >= 0, got {value}")));
        }
        match self.experiment {
            ExperimentKind::PendulumFilter => {
                self.pendulum.get_or_insert_with(Default::default).n_p = value;
            }
            ExperimentKind::VdpModes => {
                self.vdp.get_or_insert_with(Default::default).obs_noise_std = value;
            }
            ExperimentKind::SlModes => {
                self.sl.get_or_insert_with(Default::default).eps_process = value;
            }
            ExperimentKind::CsvFilter => {
                return Err(EltoError::InvalidArgument(
                    "csv_filter has no noise axis to sweep".into(),
                ));
            }
        }
        Ok(())
    }

    fn metric_name(&self) -> &'static str {
        if self.experiment.is_filter() {
            "mse"
        } else {
            "eigen_error"
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    pub value: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub method: String,
    pub metric: String,
    pub noise: f64,
    pub config_echo: serde_json::Value,
    pub trials: Vec<TrialOutcome>,
    pub mean: f64,
    pub std_dev: f64,
    pub wall_seconds: f64,
    pub search_trace: Vec<SearchStep>,
}

impl ResultRecord {
    pub fn has_failures(&self) -> bool {
        self.trials.iter().any(|t| t.failure.is_some())
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn aggregate(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean over all entries of the squared differences.
pub fn mse(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(EltoError::InvalidArgument(format!(
            "shape mismatch: {:?} vs {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    let n = pred.len();
    if n == 0 {
        return Err(EltoError::InvalidArgument("empty prediction".into()));
    }
    Ok(pred
        .iter()
        .zip(truth.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n as f64)
}

/// Exhaustive minimization over an explicit candidate list; failed or
/// non-finite evaluations score +inf, ties break by first-seen order.
pub fn grid_search<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    grid: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<SearchStep>)> {
    if grid.is_empty() {
        return Err(EltoError::InvalidArgument("empty grid".into()));
    }
    let mut trace = Vec::with_capacity(grid.len());
    let mut best: Option<usize> = None;
    for (i, point) in grid.iter().enumerate() {
        let raw = objective(point);
        let score = if raw.is_finite() { raw } else { f64::INFINITY };
        trace.push(SearchStep { candidate: point.clone(), score });
        if best.map(|b| score < trace[b].score).unwrap_or(true) {
            best = Some(i);
        }
    }
    let b = best.unwrap();
    Ok((grid[b].clone(), trace))
}

/// RBF bandwidth from the median pairwise squared distance of up to 200
/// evenly spaced sample rows.
pub fn median_gamma(samples: ArrayView2<f64>) -> f64 {
    let n = samples.nrows();
    if n < 2 {
        return 1.0;
    }
    let take = n.min(200);
    let idx: Vec<usize> = (0..take).map(|i| i * n / take).collect();
    let mut d2 = Vec::with_capacity(take * (take - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in idx.iter().skip(a + 1) {
            let d: f64 = samples
                .row(i)
                .iter()
                .zip(samples.row(j).iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            if d > 0.0 {
                d2.push(d);
            }
        }
    }
    if d2.is_empty() {
        return 1.0;
    }
    d2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = d2[d2.len() / 2];
    1.0 / med
}

fn kernel_from(gamma: Option<f64>, samples: ArrayView2<f64>) -> Result<KernelSpec> {
    match gamma {
        Some(g) => KernelSpec::rbf(g),
        None => KernelSpec::rbf(median_gamma(samples)),
    }
}

/// Observations aligned to the extracted states: state column k pairs
/// with series row k + h - 1.
fn aligned_observations(series: &TimeSeries, h: usize, count: usize) -> Result<Array2<f64>> {
    let q = series.dim();
    if count + h - 1 > series.len() {
        return Err(EltoError::Internal(format!(
            "alignment overrun: {count} states, h={h}, {} rows",
            series.len()
        )));
    }
    let mut y = Array2::zeros((q, count));
    for k in 0..count {
        y.column_mut(k).assign(&series.data.row(k + h - 1));
    }
    Ok(y)
}

/// Full fit pipeline: spectral realization, state extraction, operator
/// estimation. `eps_override` replaces all three regularizers at once;
/// otherwise per-epsilon config values or scale-relative defaults apply.
pub fn fit_filter_model(
    train: &TimeSeries,
    params: &ModelParams,
    eps_override: Option<[f64; 3]>,
    seed: u64,
) -> Result<EltoFilterModel> {
    let kernel_y = kernel_from(params.gamma_y, train.data.view())?;
    let rc = RealizationConfig {
        h: params.h,
        r: params.r,
        reference: params.reference(),
        epochs: params.epochs,
        learning_rate: params.learning_rate,
    };
    let rm = optimize_w(train, &kernel_y, &rc, seed)?;
    let x = extract_states(&rm, train)?;
    let xs = x.t().to_owned();
    let kernel_x = kernel_from(params.gamma_x, xs.view())?;
    let y = aligned_observations(train, params.h, x.ncols())?;
    let [eps_t, eps_o, eps_q] = match eps_override {
        Some(e) => e,
        None => {
            let g_x = self_gram(&kernel_x, xs.view(), "states")?;
            let g_y = self_gram(&kernel_y, y.t(), "observations")?;
            let ex = default_eps(g_x.view());
            let ey = default_eps(g_y.view());
            [
                params.eps_t.unwrap_or(ex),
                params.eps_o.unwrap_or(ex),
                params.eps_q.unwrap_or(ey),
            ]
        }
    };
    fit_operators(x.view(), y.view(), &kernel_x, &kernel_y, eps_t, eps_o, eps_q)
}

const FILTER_SEED_MIX: u64 = 0x9e37_79b9_7f4a_7c15;

fn prediction_mse(
    outputs: &[FilterOutput],
    truth: ArrayView2<f64>,
    burn_in: usize,
) -> Result<f64> {
    let steps = outputs.len();
    if truth.nrows() != steps {
        return Err(EltoError::InvalidArgument(format!(
            "{} outputs vs {} truth rows",
            steps,
            truth.nrows()
        )));
    }
    if burn_in >= steps {
        return Err(EltoError::InvalidArgument(format!(
            "burn_in {burn_in} leaves no scored steps out of {steps}"
        )));
    }
    let q = truth.ncols();
    let kept = steps - burn_in;
    let mut pred = Array2::zeros((kept, q));
    for (row, out) in outputs[burn_in..].iter().enumerate() {
        pred.row_mut(row).assign(&out.eta);
    }
    mse(pred.view(), truth.slice(s![burn_in.., ..]))
}

/// Training series, held-out observation series, and scoring target for a
/// filter experiment. The pendulum target is the noiseless angle from a
/// twin simulation sharing the seed and noise stream; the CSV target is
/// the observed series itself.
fn filter_data(cfg: &ExperimentConfig, seed: u64) -> Result<(TimeSeries, TimeSeries, Array2<f64>)> {
    let total = cfg.train_len + cfg.val_len;
    match cfg.experiment {
        ExperimentKind::PendulumFilter => {
            let mut pc = cfg.pendulum.clone().unwrap_or_default();
            pc.n_samples = total;
            let noisy = simulate_pendulum(&pc, seed)?;
            let mut clean_cfg = pc.clone();
            clean_cfg.n_o = 0.0;
            let clean = simulate_pendulum(&clean_cfg, seed)?;
            let train = noisy.slice(0, cfg.train_len);
            let val = noisy.slice(cfg.train_len, total);
            let truth = clean.data.slice(s![cfg.train_len.., ..]).to_owned();
            Ok((train, val, truth))
        }
        ExperimentKind::CsvFilter => {
            let path = cfg
                .input_path
                .as_ref()
                .ok_or_else(|| EltoError::InvalidArgument("csv_filter needs input_path".into()))?;
            let ts = load_csv(path, cfg.input_dt, cfg.input_has_header, cfg.input_center)?;
            if ts.len() < total {
                return Err(EltoError::InvalidArgument(format!(
                    "input has {} rows, need {total}",
                    ts.len()
                )));
            }
            let train = ts.slice(0, cfg.train_len);
            let val = ts.slice(cfg.train_len, total);
            let truth = val.data.clone();
            Ok((train, val, truth))
        }
        _ => Err(EltoError::Internal("filter_data on a modes experiment".into())),
    }
}

const RESTART_SEED_STRIDE: u64 = 7919;

#[derive(Debug, Clone)]
struct HyperSelection {
    eps: Option<[f64; 3]>,
    realization_seed: u64,
    trace: Vec<SearchStep>,
    score: f64,
}

/// Select the realization restart and (eps_t, eps_o, eps_q) with the
/// best one-step prediction MSE on the trailing 25% of the training
/// series. Epsilons are searched in log10-space when a search method is
/// configured; restarts guard against degenerate observable optima.
fn select_hyperparameters(
    cfg: &ExperimentConfig,
    train: &TimeSeries,
    seed: u64,
) -> Result<HyperSelection> {
    let fit_len = (train.len() * 3) / 4;
    if fit_len < 2 * cfg.model.h + 2 || train.len() - fit_len <= cfg.burn_in {
        return Err(EltoError::InvalidArgument(format!(
            "training series of length {} too short to split for selection",
            train.len()
        )));
    }
    let fit = train.slice(0, fit_len);
    let tune = train.slice(fit_len, train.len());

    let params = &cfg.model;
    let rc = RealizationConfig {
        h: params.h,
        r: params.r,
        reference: params.reference(),
        epochs: params.epochs,
        learning_rate: params.learning_rate,
    };
    let kernel_y = kernel_from(params.gamma_y, fit.data.view())?;
    let filter_seed = seed ^ FILTER_SEED_MIX;
    let burn_in = cfg.burn_in;

    let mut best: Option<HyperSelection> = None;
    for j in 0..params.restarts.max(1) {
        let rs = seed.wrapping_add(j as u64 * RESTART_SEED_STRIDE);
        let rm = optimize_w(&fit, &kernel_y, &rc, rs)?;
        let x = extract_states(&rm, &fit)?;
        let xs = x.t().to_owned();
        let kernel_x = kernel_from(params.gamma_x, xs.view())?;
        let y = aligned_observations(&fit, params.h, x.ncols())?;
        let g_x = self_gram(&kernel_x, xs.view(), "states")?;
        let g_y = self_gram(&kernel_y, y.t(), "observations")?;
        let ex = default_eps(g_x.view());
        let ey = default_eps(g_y.view());
        let defaults = [
            params.eps_t.unwrap_or(ex),
            params.eps_o.unwrap_or(ex),
            params.eps_q.unwrap_or(ey),
        ];

        let objective = |p: &[f64]| -> f64 {
            let run = fit_operators(
                x.view(),
                y.view(),
                &kernel_x,
                &kernel_y,
                10f64.powf(p[0]),
                10f64.powf(p[1]),
                10f64.powf(p[2]),
            )
            .and_then(|m| run_filter(&m, &tune, None, None, filter_seed))
            .and_then(|outs| prediction_mse(&outs, tune.data.view(), burn_in));
            run.unwrap_or(f64::INFINITY)
        };

        let x0: Vec<f64> = defaults.iter().map(|v| v.log10()).collect();
        let candidate = match cfg.search.method {
            SearchMethod::None => {
                let score = objective(&x0);
                HyperSelection {
                    eps: Some(defaults),
                    realization_seed: rs,
                    trace: Vec::new(),
                    score,
                }
            }
            SearchMethod::Grid => {
                let mut grid = Vec::with_capacity(27);
                for a in [-2.0, 0.0, 2.0] {
                    for b in [-2.0, 0.0, 2.0] {
                        for c in [-2.0, 0.0, 2.0] {
                            grid.push(vec![x0[0] + a, x0[1] + b, x0[2] + c]);
                        }
                    }
                }
                let (p, trace) = grid_search(objective, &grid)?;
                let score = trace.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
                HyperSelection {
                    eps: Some([
                        10f64.powf(p[0]),
                        10f64.powf(p[1]),
                        10f64.powf(p[2]),
                    ]),
                    realization_seed: rs,
                    trace,
                    score,
                }
            }
            SearchMethod::Cmaes => {
                let (p, trace) = cma_es(objective, &x0, 0.5, cfg.search.budget, cfg.search.seed)?;
                let score = trace.last().map(|s| s.score).unwrap_or(f64::INFINITY);
                HyperSelection {
                    eps: Some([
                        10f64.powf(p[0]),
                        10f64.powf(p[1]),
                        10f64.powf(p[2]),
                    ]),
                    realization_seed: rs,
                    trace,
                    score,
                }
            }
        };
        if best.as_ref().map(|b| candidate.score < b.score).unwrap_or(true) {
            best = Some(candidate);
        }
    }
    Ok(best.unwrap())
}

fn elto_filter_trial(cfg: &ExperimentConfig, seed: u64) -> Result<(f64, Vec<SearchStep>)> {
    let (train, val, truth) = filter_data(cfg, seed)?;
    let sel = select_hyperparameters(cfg, &train, seed)?;
    let model = fit_filter_model(&train, &cfg.model, sel.eps, sel.realization_seed)?;
    let outs = run_filter(&model, &val, None, None, seed ^ FILTER_SEED_MIX)?;
    let value = prediction_mse(&outs, truth.view(), cfg.burn_in)?;
    Ok((value, sel.trace))
}

/// Last observation carried forward: predict each step with the previous
/// noisy observation.
fn locf_filter_trial(cfg: &ExperimentConfig, seed: u64) -> Result<f64> {
    let (_, val, truth) = filter_data(cfg, seed)?;
    let start = cfg.burn_in.max(1);
    let steps = val.len();
    if start >= steps {
        return Err(EltoError::InvalidArgument("no scored steps for locf".into()));
    }
    let q = val.dim();
    let mut pred = Array2::zeros((steps - start, q));
    for t in start..steps {
        pred.row_mut(t - start).assign(&val.data.row(t - 1));
    }
    mse(pred.view(), truth.slice(s![start.., ..]))
}

/// Predictive score for a full-series state trajectory: fit the filter
/// operators on the leading 75% of the state/observation pairs and
/// report the one-step prediction MSE over the trailing 25%. Degenerate
/// realization optima (near-constant observables) pass the subspace
/// loss but cannot predict held-out observations, so this score rejects
/// them.
fn states_predictive_score(
    x: &Array2<f64>,
    series: &TimeSeries,
    params: &ModelParams,
) -> Result<f64> {
    let n = x.ncols();
    let burn_in = 5;
    let n_fit = (3 * n) / 4;
    if n_fit < 3 || n - n_fit <= burn_in {
        return Err(EltoError::InvalidArgument("too few states for predictive scoring".into()));
    }
    let y = aligned_observations(series, params.h, n)?;
    let x_fit = x.slice(s![.., ..n_fit]).to_owned();
    let y_fit = y.slice(s![.., ..n_fit]).to_owned();
    let y_held = y.slice(s![.., n_fit..]).t().to_owned();

    let xs_fit = x_fit.t().to_owned();
    let kernel_x = kernel_from(params.gamma_x, xs_fit.view())?;
    let kernel_y = kernel_from(params.gamma_y, y_fit.t())?;
    let g_x = self_gram(&kernel_x, xs_fit.view(), "states")?;
    let g_y = self_gram(&kernel_y, y_fit.t(), "observations")?;
    let ex = default_eps(g_x.view());
    let model = fit_operators(
        x_fit.view(),
        y_fit.view(),
        &kernel_x,
        &kernel_y,
        params.eps_t.unwrap_or(ex),
        params.eps_o.unwrap_or(ex),
        params.eps_q.unwrap_or(default_eps(g_y.view())),
    )?;
    let held = TimeSeries::new(y_held, series.dt, series.seed, "tune")?;
    let outs = run_filter(&model, &held, None, None, series.seed ^ FILTER_SEED_MIX)?;
    prediction_mse(&outs, held.data.view(), burn_in)
}

/// ELTO mode pipeline: realization on the series (best of `restarts`
/// full-series candidates under the held-out predictive score), kernel
/// Koopman operator on the extracted states, eigendecomposition with
/// aligned observations.
pub fn elto_modes(
    series: &TimeSeries,
    params: &ModelParams,
    seed: u64,
) -> Result<ModeDecomposition> {
    let kernel_y = kernel_from(params.gamma_y, series.data.view())?;
    let rc = RealizationConfig {
        h: params.h,
        r: params.r,
        reference: params.reference(),
        epochs: params.epochs,
        learning_rate: params.learning_rate,
    };
    let mut best: Option<(f64, Array2<f64>)> = None;
    for j in 0..params.restarts.max(1) {
        let rs = seed.wrapping_add(j as u64 * RESTART_SEED_STRIDE);
        let rm = optimize_w(series, &kernel_y, &rc, rs)?;
        let x = extract_states(&rm, series)?;
        if params.restarts <= 1 {
            best = Some((0.0, x));
            break;
        }
        let score = states_predictive_score(&x, series, params).unwrap_or(f64::INFINITY);
        if best.as_ref().map(|(s, _)| score < *s).unwrap_or(true) {
            best = Some((score, x));
        }
    }
    let (_, x) = best.expect("at least one restart");
    let xs = x.t().to_owned();
    let kernel_x = kernel_from(params.gamma_x, xs.view())?;
    let eps = match params.eps_t {
        Some(e) => e,
        None => {
            let g_x = self_gram(&kernel_x, xs.view(), "states")?;
            default_eps(g_x.view())
        }
    };
    let (k, g1) = kernel_koopman(x.view(), &kernel_x, eps)?;
    let m = k.nrows();
    let y = aligned_observations(series, params.h, m)?;
    decompose(k.view(), g1.view(), y.view(), series.dt, params.n_modes.min(m))
}

/// Real-valued extended dictionary for the subspace-DMD baseline:
/// cos(m theta), sin(m theta) for m = 1..max_order.
fn extended_angle_features(series: &TimeSeries, max_order: i32) -> Result<Array2<f64>> {
    let theta = angles_from_unit_obs(series)?;
    let m = theta.len();
    let orders = max_order as usize;
    let mut f = Array2::zeros((2 * orders, m));
    for t in 0..m {
        for k in 1..=orders {
            let a = k as f64 * theta[t];
            f[[2 * (k - 1), t]] = a.cos();
            f[[2 * (k - 1) + 1, t]] = a.sin();
        }
    }
    Ok(f)
}

fn modes_trial(cfg: &ExperimentConfig, method: MethodName, seed: u64) -> Result<f64> {
    let (series, truth, domain): (TimeSeries, Vec<Complex64>, SpectrumDomain) =
        match cfg.experiment {
            ExperimentKind::VdpModes => {
                let vc = cfg.vdp.clone().unwrap_or_default();
                let ts = simulate_vdp(&vc, seed)?;
                (ts, true_eigs_vdp(cfg.model.harmonics)?, SpectrumDomain::Discrete)
            }
            ExperimentKind::SlModes => {
                let sc = cfg.sl.clone().unwrap_or_default();
                let truth =
                    true_eigs_sl(cfg.model.harmonics, sc.eps_process, SL_OMEGA, SL_KAPPA)?;
                (simulate_sl(&sc, seed)?, truth, SpectrumDomain::Continuous)
            }
            _ => return Err(EltoError::Internal("modes_trial on a filter experiment".into())),
        };
    let y = series.data.t().to_owned();
    let dec = match method {
        MethodName::Elto => elto_modes(&series, &cfg.model, seed)?,
        MethodName::Dmd => dmd_exact(y.view(), series.dt)?,
        MethodName::HankelDmd => hankel_dmd(y.view(), cfg.model.delay_d, series.dt)?,
        MethodName::Edmd => {
            let dict = if cfg.experiment == ExperimentKind::SlModes {
                EdmdDictionary::ComplexExponential { max_order: cfg.model.edmd_max_order }
            } else {
                EdmdDictionary::Identity
            };
            edmd(y.view(), &dict, series.dt)?
        }
        MethodName::SubspaceDmd => {
            if cfg.experiment == ExperimentKind::SlModes {
                let feats = extended_angle_features(&series, cfg.model.edmd_max_order)?;
                subspace_dmd(feats.view(), series.dt)?
            } else {
                subspace_dmd(y.view(), series.dt)?
            }
        }
        MethodName::Locf => {
            return Err(EltoError::InvalidArgument("locf has no spectrum".into()))
        }
    };
    let est = retained_eigs(&dec, domain, cfg.model.band);
    Ok(eigen_error(&est, &truth)?.0)
}

/// Fit the filter model for the base seed of a filter experiment,
/// honoring any configured hyperparameter search.
pub fn fit_trial_model(cfg: &ExperimentConfig) -> Result<EltoFilterModel> {
    cfg.validate()?;
    if !cfg.experiment.is_filter() {
        return Err(EltoError::InvalidArgument(format!(
            "{} is not a filter experiment",
            cfg.experiment.as_str()
        )));
    }
    let (train, _, _) = filter_data(cfg, cfg.seed)?;
    let sel = select_hyperparameters(cfg, &train, cfg.seed)?;
    fit_filter_model(&train, &cfg.model, sel.eps, sel.realization_seed)
}

/// Run the fitted filter over the held-out split of the base seed and
/// return the per-step outputs.
pub fn filter_trace(cfg: &ExperimentConfig) -> Result<Vec<FilterOutput>> {
    cfg.validate()?;
    if !cfg.experiment.is_filter() {
        return Err(EltoError::InvalidArgument(format!(
            "{} is not a filter experiment",
            cfg.experiment.as_str()
        )));
    }
    let (train, val, _) = filter_data(cfg, cfg.seed)?;
    let sel = select_hyperparameters(cfg, &train, cfg.seed)?;
    let model = fit_filter_model(&train, &cfg.model, sel.eps, sel.realization_seed)?;
    run_filter(&model, &val, None, None, cfg.seed ^ FILTER_SEED_MIX)
}

/// ELTO mode decomposition for the base seed of a modes experiment.
pub fn elto_modes_from_config(cfg: &ExperimentConfig) -> Result<ModeDecomposition> {
    cfg.validate()?;
    let series = match cfg.experiment {
        ExperimentKind::VdpModes => simulate_vdp(&cfg.vdp.clone().unwrap_or_default(), cfg.seed)?,
        ExperimentKind::SlModes => simulate_sl(&cfg.sl.clone().unwrap_or_default(), cfg.seed)?,
        _ => {
            return Err(EltoError::InvalidArgument(format!(
                "{} is not a modes experiment",
                cfg.experiment.as_str()
            )))
        }
    };
    elto_modes(&series, &cfg.model, cfg.seed)
}

fn run_trial(
    cfg: &ExperimentConfig,
    method: MethodName,
    seed: u64,
) -> Result<(f64, Vec<SearchStep>)> {
    if cfg.experiment.is_filter() {
        match method {
            MethodName::Elto => elto_filter_trial(cfg, seed),
            MethodName::Locf => locf_filter_trial(cfg, seed).map(|v| (v, Vec::new())),
            other => Err(EltoError::InvalidArgument(format!(
                "method {} is not applicable to {}",
                other.as_str(),
                cfg.experiment.as_str()
            ))),
        }
    } else {
        modes_trial(cfg, method, seed).map(|v| (v, Vec::new()))
    }
}

/// Worker pool sized by `ELTO_THREADS` when set, rayon default otherwise.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ELTO_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                builder = builder.num_threads(n);
            }
        }
    }
    builder.build().map_err(|e| EltoError::Internal(e.to_string()))
}

/// Run every configured method over `trials` seeds; per-trial errors are
/// recorded as failure annotations rather than aborting the batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let pool = worker_pool()?;
    let echo = serde_json::to_value(cfg).map_err(|e| EltoError::Internal(e.to_string()))?;
    let methods = cfg.effective_methods();
    let mut records = Vec::with_capacity(methods.len());
    for method in methods {
        let start = Instant::now();
        let outcomes: Vec<(TrialOutcome, Vec<SearchStep>)> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|i| {
                    let seed = cfg.seed.wrapping_add(i as u64 * TRIAL_SEED_STRIDE);
                    match run_trial(cfg, method, seed) {
                        Ok((value, trace)) => {
                            (TrialOutcome { trial: i, seed, value, failure: None }, trace)
                        }
                        Err(e) => (
                            TrialOutcome {
                                trial: i,
                                seed,
                                value: f64::NAN,
                                failure: Some(e.to_string()),
                            },
                            Vec::new(),
                        ),
                    }
                })
                .collect()
        });
        let search_trace = outcomes.first().map(|o| o.1.clone()).unwrap_or_default();
        let trials: Vec<TrialOutcome> = outcomes.into_iter().map(|o| o.0).collect();
        let good: Vec<f64> =
            trials.iter().filter(|t| t.failure.is_none()).map(|t| t.value).collect();
        let (mean, std_dev) = aggregate(&good);
        records.push(ResultRecord {
            experiment: cfg.experiment.as_str().to_string(),
            method: method.as_str().to_string(),
            metric: cfg.metric_name().to_string(),
            noise: cfg.noise_level(),
            config_echo: echo.clone(),
            trials,
            mean,
            std_dev,
            wall_seconds: start.elapsed().as_secs_f64(),
            search_trace,
        });
    }
    Ok(records)
}

/// Cross-product of noise levels and methods, each cell a full
/// `run_experiment` over the configured trials.
pub fn noise_sweep(
    cfg: &ExperimentConfig,
    noise_values: &[f64],
    methods: &[MethodName],
) -> Result<Vec<ResultRecord>> {
    if noise_values.is_empty() || methods.is_empty() {
        return Err(EltoError::InvalidArgument("empty sweep axis".into()));
    }
    let mut out = Vec::with_capacity(noise_values.len() * methods.len());
    for &nv in noise_values {
        let mut c = cfg.clone();
        c.methods = methods.to_vec();
        c.set_noise(nv)?;
        out.extend(run_experiment(&c)?);
    }
    Ok(out)
}

/// Default sweep axis per experiment: VDP observation-noise std 0.01..0.2
/// step 0.01, SL process-noise 0.01..0.09 step 0.01, pendulum process
/// noise {0.1, 0.2}.
pub fn default_sweep_values(kind: ExperimentKind) -> Result<Vec<f64>> {
    match kind {
        ExperimentKind::VdpModes => Ok((1..=20).map(|i| i as f64 * 0.01).collect()),
        ExperimentKind::SlModes => Ok((1..=9).map(|i| i as f64 * 0.01).collect()),
        ExperimentKind::PendulumFilter => Ok(vec![0.1, 0.2]),
        ExperimentKind::CsvFilter => {
            Err(EltoError::InvalidArgument("csv_filter has no noise axis to sweep".into()))
        }
    }
}

fn check_aggregates(records: &[ResultRecord]) -> Result<()> {
    for r in records {
        let good: Vec<f64> =
            r.trials.iter().filter(|t| t.failure.is_none()).map(|t| t.value).collect();
        let (mean, std_dev) = aggregate(&good);
        let same = |a: f64, b: f64| (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12;
        if !same(mean, r.mean) || !same(std_dev, r.std_dev) {
            return Err(EltoError::Internal(format!(
                "aggregate mismatch for {}/{}",
                r.experiment, r.method
            )));
        }
    }
    Ok(())
}

/// Long-format CSV: experiment, method, noise, trial, metric, value.
/// Timing is deliberately excluded so reruns are byte-identical.
pub fn write_results_csv(records: &[ResultRecord], path: &std::path::Path) -> Result<()> {
    check_aggregates(records)?;
    let mut wtr = csv::Writer::from_path(path).map_err(|e| EltoError::Io(e.to_string()))?;
    wtr.write_record(["experiment", "method", "noise", "trial", "metric", "value"])
        .map_err(|e| EltoError::Io(e.to_string()))?;
    for r in records {
        for t in &r.trials {
            wtr.write_record([
                r.experiment.as_str(),
                r.method.as_str(),
                &format!("{}", r.noise),
                &format!("{}", t.trial),
                r.metric.as_str(),
                &format!("{:.17e}", t.value),
            ])
            .map_err(|e| EltoError::Io(e.to_string()))?;
        }
    }
    wtr.flush().map_err(|e| EltoError::Io(e.to_string()))?;
    Ok(())
}

/// Full result records as pretty-printed JSON (includes wall-clock time).
pub fn write_results_json(records: &[ResultRecord], path: &std::path::Path) -> Result<()> {
    check_aggregates(records)?;
    let text = serde_json::to_string_pretty(records)
        .map_err(|e| EltoError::Internal(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| EltoError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_trivial_cases() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mse(a.view(), a.view()).unwrap(), 0.0);
        let b = &a + 2.0;
        assert_eq!(mse(b.view(), a.view()).unwrap(), 4.0);
        let c = array![[1.0]];
        assert!(mse(a.view(), c.view()).is_err());
    }

    #[test]
    fn mse_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Array2<f64> = Array2::from_shape_fn((7, 3), |_| rng.random_range(-2.0..2.0));
        let b: Array2<f64> = Array2::from_shape_fn((7, 3), |_| rng.random_range(-2.0..2.0));
        let mut acc = 0.0;
        for i in 0..7 {
            for j in 0..3 {
                acc += (a[[i, j]] - b[[i, j]]).powi(2);
            }
        }
        assert_abs_diff_eq!(mse(a.view(), b.view()).unwrap(), acc / 21.0, epsilon = 1e-14);
    }

    #[test]
    fn grid_search_trivial() {
        let (best, trace) = grid_search(|_| 1.0, &[vec![3.0, 4.0]]).unwrap();
        assert_eq!(best, vec![3.0, 4.0]);
        assert_eq!(trace.len(), 1);

        let target = [1.0, -2.0];
        let grid: Vec<Vec<f64>> = vec![vec![0.0, 0.0], vec![1.0, -2.0], vec![5.0, 5.0]];
        let (best, _) = grid_search(
            |p| p.iter().zip(target.iter()).map(|(a, b)| (a - b).powi(2)).sum(),
            &grid,
        )
        .unwrap();
        assert_eq!(best, vec![1.0, -2.0]);
    }

    #[test]
    fn grid_search_matches_exhaustive_oracle() {
        let vals = [-1.0, 0.0, 1.0];
        let mut grid = Vec::new();
        for &a in &vals {
            for &b in &vals {
                grid.push(vec![a, b]);
            }
        }
        let obj = |p: &[f64]| (p[0] - 0.7).powi(2) + (p[1] + 0.9).powi(2);
        let (best, trace) = grid_search(obj, &grid).unwrap();
        let oracle = grid
            .iter()
            .min_by(|x, y| obj(x).partial_cmp(&obj(y)).unwrap())
            .unwrap();
        assert_eq!(&best, oracle);
        assert_eq!(trace.len(), 9);
        let best_score = trace.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
        assert_eq!(obj(&best), best_score);
    }

    #[test]
    fn aggregate_recomputable() {
        let vals = [0.3, 0.7, 1.1, 0.2];
        let (mean, std) = aggregate(&vals);
        let m: f64 = vals.iter().sum::<f64>() / 4.0;
        let v: f64 = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(mean, m, epsilon = 1e-15);
        assert_abs_diff_eq!(std, v.sqrt(), epsilon = 1e-15);
        assert_eq!(aggregate(&[2.0]), (2.0, 0.0));
        assert!(aggregate(&[]).0.is_nan());
    }

    fn tiny_vdp_config() -> ExperimentConfig {
        ExperimentConfig {
            experiment: ExperimentKind::VdpModes,
            pendulum: None,
            vdp: Some(VdpConfig { n_samples: 150, obs_noise_std: 0.0, ..Default::default() }),
            sl: None,
            input_path: None,
            input_dt: 1.0,
            input_has_header: false,
            input_center: false,
            model: ModelParams { harmonics: 1, ..Default::default() },
            search: SearchSpec::default(),
            methods: vec![MethodName::Dmd],
            trials: 1,
            seed: 9,
            train_len: 300,
            val_len: 100,
            burn_in: 10,
            sweep_values: Vec::new(),
        }
    }

    #[test]
    fn run_experiment_deterministic() {
        let cfg = tiny_vdp_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.len(), 1);
        assert!(a[0].trials[0].failure.is_none());
        assert!(a[0].trials[0].value.is_finite());
        assert_eq!(a[0].trials[0].value, b[0].trials[0].value);
        assert_eq!(a[0].mean, b[0].mean);
    }

    #[test]
    fn noise_sweep_row_count() {
        let cfg = tiny_vdp_config();
        let recs = noise_sweep(
            &cfg,
            &[0.0, 0.05],
            &[MethodName::Dmd, MethodName::HankelDmd],
        )
        .unwrap();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].noise, 0.0);
        assert_eq!(recs[3].noise, 0.05);
    }

    #[test]
    fn hankel_dmd_error_grows_with_noise() {
        let mut cfg = tiny_vdp_config();
        cfg.vdp = Some(VdpConfig { n_samples: 400, ..Default::default() });
        cfg.trials = 10;
        cfg.methods = vec![MethodName::HankelDmd];
        let recs = noise_sweep(&cfg, &[0.01, 0.2], &[MethodName::HankelDmd]).unwrap();
        assert!(!recs[0].has_failures() && !recs[1].has_failures());
        assert!(
            recs[1].mean >= recs[0].mean,
            "expected error growth: {:.3e} -> {:.3e}",
            recs[0].mean,
            recs[1].mean
        );
    }

    #[test]
    fn pendulum_filter_smoke() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::PendulumFilter,
            pendulum: None,
            vdp: None,
            sl: None,
            input_path: None,
            input_dt: 1.0,
            input_has_header: false,
            input_center: false,
            model: ModelParams { h: 4, epochs: 3, ..Default::default() },
            search: SearchSpec::default(),
            methods: vec![MethodName::Elto, MethodName::Locf],
            trials: 1,
            seed: 3,
            train_len: 60,
            val_len: 20,
            burn_in: 5,
            sweep_values: Vec::new(),
        };
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(!r.has_failures(), "{:?}", r.trials[0].failure);
            assert!(r.trials[0].value.is_finite());
        }
    }

    #[test]
    fn results_csv_deterministic_and_excludes_timing() {
        let cfg = tiny_vdp_config();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.csv");
        let p2 = dir.path().join("b.csv");
        let mut r1 = run_experiment(&cfg).unwrap();
        let mut r2 = run_experiment(&cfg).unwrap();
        // perturb timing to prove it does not reach the CSV
        r1[0].wall_seconds = 1.0;
        r2[0].wall_seconds = 2.0;
        write_results_csv(&r1, &p1).unwrap();
        write_results_csv(&r2, &p2).unwrap();
        let b1 = std::fs::read(&p1).unwrap();
        let b2 = std::fs::read(&p2).unwrap();
        assert_eq!(b1, b2);
        let text = String::from_utf8(b1).unwrap();
        assert!(text.starts_with("experiment,method,noise,trial,metric,value"));
    }

    #[test]
    fn aggregate_cross_check_on_emit() {
        let cfg = tiny_vdp_config();
        let mut recs = run_experiment(&cfg).unwrap();
        recs[0].mean += 0.5;
        let dir = tempfile::tempdir().unwrap();
        assert!(write_results_json(&recs, &dir.path().join("r.json")).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = tiny_vdp_config();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_vdp_config();
        cfg.methods = vec![MethodName::Locf];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_vdp_config();
        cfg.model.h = 2;
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::CsvFilter,
            input_path: None,
            ..tiny_vdp_config()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_parses_from_json_and_toml() {
        let json = r#"{"experiment":"vdp_modes","trials":2,"seed":7}"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::VdpModes);
        assert_eq!(cfg.trials, 2);
        assert_eq!(cfg.model.h, 5);

        let toml_text = "experiment = \"pendulum_filter\"\nseed = 3\n[model]\nh = 6\n";
        let cfg: ExperimentConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.experiment, ExperimentKind::PendulumFilter);
        assert_eq!(cfg.model.h, 6);
        assert_eq!(cfg.trials, 1);
    }
}
