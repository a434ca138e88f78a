//! Finite-coordinate estimation of the embedded latent transfer operator
//! and the embedded observable operator, plus model persistence.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};
use crate::kernels::{self_gram, KernelSpec};
use crate::linalg::{all_finite, solve_regularized, symmetrize};

/// Fitted coordinate operators over `N` aligned state/observation samples.
///
/// States are the columns of `x` (r x N); observations the columns of
/// `y_train` (q x N), with state `x_n` paired to the observation arriving
/// at the same step.
#[derive(Debug, Clone)]
pub struct EltoFilterModel {
    pub x: Array2<f64>,
    pub y_train: Array2<f64>,
    pub kernel_x: KernelSpec,
    pub kernel_y: KernelSpec,
    pub eps_t: f64,
    pub eps_o: f64,
    pub eps_q: f64,
    /// State Gram, N x N.
    pub g_x: Array2<f64>,
    /// Gram of x_1..x_{N-1}, (N-1) x (N-1).
    pub g1: Array2<f64>,
    /// Cross Gram k(x_i, x_{j+1}), (N-1) x (N-1).
    pub g12: Array2<f64>,
    /// Observation Gram, N x N.
    pub g_y: Array2<f64>,
    /// Prediction matrix (G1 + eps_t I)^{-1} G12, (N-1) x (N-1).
    pub t_coord: Array2<f64>,
    /// Observation matrix (G_x + eps_o I)^{-1} G_x, N x N.
    pub o_coord: Array2<f64>,
    /// Prediction matrix re-indexed against the full N-sample basis:
    /// row 0 is zero (coordinate x_1 is unreachable after a step) and rows
    /// 1..N hold (G1 + eps_t I)^{-1} G_x[0..N-1, 0..N].
    pub t_full: Array2<f64>,
    /// Process-noise surrogate (1/N)(P - I)(P - I)^T with
    /// P = (G1 + eps_t I)^{-1} G1, zero-padded into the top-left block.
    pub noise_cov: Array2<f64>,
}

impl EltoFilterModel {
    pub fn n_samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn state_dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.y_train.nrows()
    }
}

/// Scale-relative default regularization, `1e-3 * tr(G) / N`.
pub fn default_eps(g: ArrayView2<f64>) -> f64 {
    let n = g.nrows().max(1) as f64;
    1e-3 * g.diag().sum() / n
}

pub fn fit_operators(
    x: ArrayView2<f64>,
    y_train: ArrayView2<f64>,
    kernel_x: &KernelSpec,
    kernel_y: &KernelSpec,
    eps_t: f64,
    eps_o: f64,
    eps_q: f64,
) -> Result<EltoFilterModel> {
    let n = x.ncols();
    if n < 3 {
        return Err(EltoError::InvalidArgument(format!("need N >= 3 samples, got {n}")));
    }
    if y_train.ncols() != n {
        return Err(EltoError::InvalidArgument(format!(
            "state/observation misalignment: {} states vs {} observations",
            n,
            y_train.ncols()
        )));
    }
    for (name, eps) in [("eps_t", eps_t), ("eps_o", eps_o), ("eps_q", eps_q)] {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(EltoError::InvalidArgument(format!(
                "{name} must be positive and finite, got {eps}"
            )));
        }
    }
    if !all_finite(x) {
        return Err(EltoError::InvalidArgument("non-finite state sample".into()));
    }
    if !all_finite(y_train) {
        return Err(EltoError::InvalidArgument("non-finite training observation".into()));
    }

    let xs = x.t().to_owned(); // samples as rows
    let ys = y_train.t().to_owned();
    let g_x = self_gram(kernel_x, xs.view(), "states")?;
    let g_y = self_gram(kernel_y, ys.view(), "observations")?;

    let g1 = g_x.slice(s![..n - 1, ..n - 1]).to_owned();
    let g12 = g_x.slice(s![..n - 1, 1..]).to_owned();

    let t_coord = solve_regularized(g1.view(), eps_t, g12.view())?;
    let o_coord = solve_regularized(g_x.view(), eps_o, g_x.view())?;

    // full-basis re-indexing of the prediction map
    let g_rect = g_x.slice(s![..n - 1, ..]);
    let shifted = solve_regularized(g1.view(), eps_t, g_rect)?;
    let mut t_full = Array2::zeros((n, n));
    t_full.slice_mut(s![1.., ..]).assign(&shifted);

    let p = solve_regularized(g1.view(), eps_t, g1.view())?;
    let pm1 = &p - &Array2::<f64>::eye(n - 1);
    let mut noise_small = pm1.dot(&pm1.t()) / n as f64;
    symmetrize(&mut noise_small);
    let mut noise_cov = Array2::zeros((n, n));
    noise_cov.slice_mut(s![..n - 1, ..n - 1]).assign(&noise_small);

    Ok(EltoFilterModel {
        x: x.to_owned(),
        y_train: y_train.to_owned(),
        kernel_x: *kernel_x,
        kernel_y: *kernel_y,
        eps_t,
        eps_o,
        eps_q,
        g_x,
        g1,
        g12,
        g_y,
        t_coord,
        o_coord,
        t_full,
        noise_cov,
    })
}

/// Propagate a weight vector one step. Both the input and the output are
/// expressed over the shifted basis `{phi_x(x_2..x_N)}`: slot `k` embeds
/// the state sample with 0-based index `k + 1`, which is what makes the
/// map iterable.
pub fn propagate_embedding(model: &EltoFilterModel, m: &Array1<f64>) -> Result<Array1<f64>> {
    let n = model.n_samples();
    if m.len() != n - 1 {
        return Err(EltoError::InvalidArgument(format!(
            "propagation weight length {} does not match N-1 = {}",
            m.len(),
            n - 1
        )));
    }
    Ok(model.t_coord.dot(m))
}

/// Map a state-basis weight vector into observation-basis weights.
pub fn observe_embedding(model: &EltoFilterModel, m: &Array1<f64>) -> Result<Array1<f64>> {
    let n = model.n_samples();
    if m.len() != n {
        return Err(EltoError::InvalidArgument(format!(
            "observation weight length {} does not match N = {}",
            m.len(),
            n
        )));
    }
    Ok(model.o_coord.dot(m))
}

const SPOT_CHECKS: usize = 5;
const SPOT_SEED: u64 = 0x5e1f_c4ec;

#[derive(Debug, Serialize, Deserialize)]
struct SpotCheck {
    matrix: String,
    i: usize,
    j: usize,
    value: f64,
}

/// Self-describing persisted form; Grams and operators are recomputed on
/// load and verified against stored spot-check entries.
#[derive(Debug, Serialize, Deserialize)]
struct PersistedModel {
    x: Array2<f64>,
    y_train: Array2<f64>,
    kernel_x: KernelSpec,
    kernel_y: KernelSpec,
    eps_t: f64,
    eps_o: f64,
    eps_q: f64,
    spot_checks: Vec<SpotCheck>,
}

fn spot_checks(model: &EltoFilterModel) -> Vec<SpotCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(SPOT_SEED);
    let n = model.n_samples();
    let mut out = Vec::with_capacity(SPOT_CHECKS);
    for k in 0..SPOT_CHECKS {
        let (name, mat): (&str, &Array2<f64>) =
            if k % 2 == 0 { ("g_x", &model.g_x) } else { ("g_y", &model.g_y) };
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        out.push(SpotCheck { matrix: name.to_string(), i, j, value: mat[[i, j]] });
    }
    out
}

pub fn save_model(model: &EltoFilterModel, path: &Path) -> Result<()> {
    let doc = PersistedModel {
        x: model.x.clone(),
        y_train: model.y_train.clone(),
        kernel_x: model.kernel_x,
        kernel_y: model.kernel_y,
        eps_t: model.eps_t,
        eps_o: model.eps_o,
        eps_q: model.eps_q,
        spot_checks: spot_checks(model),
    };
    let json = serde_json::to_string(&doc)
        .map_err(|e| EltoError::Io(format!("model serialization: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<EltoFilterModel> {
    let text = std::fs::read_to_string(path)?;
    let doc: PersistedModel = serde_json::from_str(&text)
        .map_err(|e| EltoError::Io(format!("model parse ({}): {e}", path.display())))?;
    let model = fit_operators(
        doc.x.view(),
        doc.y_train.view(),
        &doc.kernel_x,
        &doc.kernel_y,
        doc.eps_t,
        doc.eps_o,
        doc.eps_q,
    )?;
    for c in &doc.spot_checks {
        let mat = match c.matrix.as_str() {
            "g_x" => &model.g_x,
            "g_y" => &model.g_y,
            other => {
                return Err(EltoError::Io(format!("unknown spot-check matrix tag {other:?}")))
            }
        };
        let got = mat[[c.i, c.j]];
        if (got - c.value).abs() > 1e-12 * c.value.abs().max(1.0) {
            return Err(EltoError::Io(format!(
                "spot check failed on {}[{}][{}]: stored {} vs recomputed {got}",
                c.matrix, c.i, c.j, c.value
            )));
        }
    }
    Ok(model)
}
