//! Spectral learning of the latent state process: windowing, covariance
//! estimation between past and future feature processes, whitened SVD
//! (canonical correlation analysis), observable-weight optimization, and
//! state extraction.

use ndarray::{s, Array1, Array2, ArrayView2};
use ndarray_linalg::{LeastSquaresSvd, Norm, SVD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};
use crate::kernels::{self_gram, KernelSpec};
use crate::linalg::{sym_inv_sqrt, symmetrize};
use crate::systems::TimeSeries;

/// Index bookkeeping for past/future windows over a series `y_0..y_T`.
///
/// Window pair `n` (1-based, `n = 1..=N`) has past samples at indices
/// `n-1 ..= n+h-2` and future samples at `h+n-1 ..= 2h-2+n`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindowedData {
    /// Last sample index `T` (the series holds `T + 1` samples).
    pub t_last: usize,
    /// Window size.
    pub h: usize,
    /// Number of window pairs, `N = T + 2 - 2h`.
    pub n_pairs: usize,
}

impl WindowedData {
    /// Column offset for past lag `i` in `1..=h`: `h - i - 1`.
    pub fn past_offset(&self, i: usize) -> isize {
        self.h as isize - i as isize - 1
    }

    /// Column offset for future lag `j` in `1..=h`: `h + j - 2`.
    pub fn future_offset(&self, j: usize) -> isize {
        self.h as isize + j as isize - 2
    }

    /// Data indices of the past window of pair `n` (newest first).
    pub fn past_indices(&self, n: usize) -> Vec<usize> {
        (1..=self.h)
            .map(|i| (n as isize + self.past_offset(i)) as usize)
            .collect()
    }

    /// Data indices of the future window of pair `n` (oldest first).
    pub fn future_indices(&self, n: usize) -> Vec<usize> {
        (1..=self.h)
            .map(|j| (n as isize + self.future_offset(j)) as usize)
            .collect()
    }
}

/// Validate the window size against the series length and build the
/// offset bookkeeping.
pub fn build_windows(series: &TimeSeries, h: usize) -> Result<WindowedData> {
    if series.is_empty() {
        return Err(EltoError::InvalidArgument("empty series".into()));
    }
    let t = series.len() - 1;
    build_windows_for_t(t, h)
}

pub(crate) fn build_windows_for_t(t: usize, h: usize) -> Result<WindowedData> {
    // need 2 < h and h < (T+1)/2 so that N = T + 2 - 2h >= 1
    if h <= 2 || 2 * h >= t + 1 {
        return Err(EltoError::InvalidArgument(format!(
            "window size h={h} outside admissible interval 2 < h < (T+1)/2 with T={t}"
        )));
    }
    Ok(WindowedData { t_last: t, h, n_pairs: t + 2 - 2 * h })
}

/// Raw (uncentered) past/future feature matrices, `N x h` each.
/// Column `i-1` of the past block holds `f_i[n] = sum_e w_e G[e, n + (h-i-1)]`.
fn feature_matrices(
    g: ArrayView2<f64>,
    w: &Array1<f64>,
    s_idx: &[usize],
    win: &WindowedData,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = win.n_pairs;
    let h = win.h;
    if w.len() != s_idx.len() {
        return Err(EltoError::InvalidArgument(format!(
            "weight length {} does not match reference-set size {}",
            w.len(),
            s_idx.len()
        )));
    }
    let total = g.nrows();
    if win.t_last + 1 > total {
        return Err(EltoError::Internal(format!(
            "Gram matrix covers {total} samples but windows reference up to {}",
            win.t_last
        )));
    }
    for &e in s_idx {
        if e >= total {
            return Err(EltoError::Internal(format!("reference index {e} out of Gram range {total}")));
        }
    }
    // gs[e_row, :] = G[S[e_row], :]
    let mut gs = Array2::zeros((s_idx.len(), total));
    for (row, &e) in s_idx.iter().enumerate() {
        gs.row_mut(row).assign(&g.row(e));
    }
    let kw = gs.t().dot(w); // length `total`, kw[t] = sum_e w_e k(y_e, y_t)

    let mut fp = Array2::zeros((n, h));
    let mut ff = Array2::zeros((n, h));
    for a in 0..h {
        let po = win.past_offset(a + 1);
        let fo = win.future_offset(a + 1);
        for nn in 0..n {
            fp[[nn, a]] = kw[((nn + 1) as isize + po) as usize];
            ff[[nn, a]] = kw[((nn + 1) as isize + fo) as usize];
        }
    }
    Ok((fp, ff))
}

fn center_cols(mut m: Array2<f64>) -> Array2<f64> {
    let n = m.nrows() as f64;
    for mut col in m.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
    m
}

/// Empirical self- and cross-covariance matrices of the past and future
/// feature processes, each `h x h`, carrying a `1/N` factor.
pub fn empirical_covariances(
    g: ArrayView2<f64>,
    w: &Array1<f64>,
    s_idx: &[usize],
    win: &WindowedData,
) -> Result<(Array2<f64>, Array2<f64>, Array2<f64>)> {
    let (fp, ff) = feature_matrices(g, w, s_idx, win)?;
    let fpc = center_cols(fp);
    let ffc = center_cols(ff);
    let n = win.n_pairs as f64;
    let mut cpp = fpc.t().dot(&fpc) / n;
    let mut cff = ffc.t().dot(&ffc) / n;
    let cfp = ffc.t().dot(&fpc) / n;
    symmetrize(&mut cpp);
    symmetrize(&mut cff);
    Ok((cpp, cff, cfp))
}

/// Result of the whitened SVD between past and future covariances.
#[derive(Debug, Clone)]
pub struct WhitenedCca {
    /// Left singular vectors, `h x r`.
    pub u: Array2<f64>,
    /// Canonical correlations, descending, length `r`.
    pub correlations: Array1<f64>,
    /// Right singular vectors, `h x r`.
    pub v: Array2<f64>,
    /// State-construction matrix `B = S^{1/2} V^T M^{-1}`, `r x h`.
    pub b: Array2<f64>,
    /// Rank actually achievable; equals the requested `r` unless the
    /// problem was numerically rank-deficient.
    pub achieved_rank: usize,
    pub rank_deficient: bool,
}

const SQRT_TRUNC_TOL: f64 = 1e-10;

/// Whiten `Cfp` by symmetric square roots of `Cff` and `Cpp` (eigenvalues
/// below a relative tolerance are zeroed and pseudo-inverted) and take the
/// truncated SVD of the whitened operator.
pub fn whiten_and_svd(
    cpp: ArrayView2<f64>,
    cff: ArrayView2<f64>,
    cfp: ArrayView2<f64>,
    r: usize,
) -> Result<WhitenedCca> {
    let h = cpp.nrows();
    if r == 0 || r > h {
        return Err(EltoError::InvalidArgument(format!("rank r={r} outside 1..={h}")));
    }
    let l = sym_inv_sqrt(cff, SQRT_TRUNC_TOL)?;
    let m = sym_inv_sqrt(cpp, SQRT_TRUNC_TOL)?;
    let wmat = l.inv_sqrt.dot(&cfp).dot(&m.inv_sqrt);
    let (u_opt, sv, vt_opt) = wmat.svd(true, true)?;
    let u_full = u_opt.ok_or_else(|| EltoError::Linalg("SVD returned no U".into()))?;
    let vt_full = vt_opt.ok_or_else(|| EltoError::Linalg("SVD returned no V^T".into()))?;

    let numerical_rank = sv.iter().filter(|&&s| s > 1e-12).count();
    let take = r.min(h);
    let rank_deficient = take > numerical_rank;

    let u = u_full.slice(s![.., ..take]).to_owned();
    let v = vt_full.slice(s![..take, ..]).t().to_owned();
    let correlations = sv.slice(s![..take]).to_owned();
    // B = S^{1/2} V^T M^{-1}
    let sqrt_s = correlations.mapv(f64::sqrt);
    let mut vt_scaled = vt_full.slice(s![..take, ..]).to_owned();
    for (mut row, sc) in vt_scaled.rows_mut().into_iter().zip(sqrt_s.iter()) {
        row.mapv_inplace(|x| x * sc);
    }
    let b = vt_scaled.dot(&m.inv_sqrt);

    Ok(WhitenedCca {
        u,
        correlations,
        v,
        b,
        achieved_rank: take.min(numerical_rank.max(1)).min(take),
        rank_deficient,
    })
}

/// Loss and gradient of `L(w) = -(sum of top-r canonical correlations)`.
#[derive(Debug, Clone)]
pub struct CcaGradient {
    pub loss: f64,
    pub grad: Array1<f64>,
    /// Covariances were numerically zero (e.g. a constant series).
    pub degenerate: bool,
}

/// Divided-difference matrix for `f(x) = x^{-1/2}` over an eigenvalue
/// list with truncation below `cut` (truncated values map to 0).
fn inv_sqrt_divided_differences(eigs: &Array1<f64>, cut: f64) -> Array2<f64> {
    let f = |d: f64| if d > cut { 1.0 / d.sqrt() } else { 0.0 };
    let fprime = |d: f64| if d > cut { -0.5 / (d * d.sqrt()) } else { 0.0 };
    let n = eigs.len();
    let mut dd = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            let (da, db) = (eigs[a], eigs[b]);
            dd[[a, b]] = if (da - db).abs() > 1e-12 * da.abs().max(db.abs()).max(1e-300) {
                (f(da) - f(db)) / (da - db)
            } else {
                fprime(0.5 * (da + db))
            };
        }
    }
    dd
}

pub fn cca_loss_and_gradient(
    g: ArrayView2<f64>,
    w: &Array1<f64>,
    s_idx: &[usize],
    win: &WindowedData,
    r: usize,
) -> Result<CcaGradient> {
    let h = win.h;
    if r == 0 || r > h {
        return Err(EltoError::InvalidArgument(format!("rank r={r} outside 1..={h}")));
    }
    let (fp, ff) = feature_matrices(g, w, s_idx, win)?;
    let fpc = center_cols(fp);
    let ffc = center_cols(ff);
    let nf = win.n_pairs as f64;
    let mut cpp = fpc.t().dot(&fpc) / nf;
    let mut cff = ffc.t().dot(&ffc) / nf;
    let cfp = ffc.t().dot(&fpc) / nf;
    symmetrize(&mut cpp);
    symmetrize(&mut cff);

    let scale = cpp
        .iter()
        .chain(cff.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if scale < 1e-30 {
        return Ok(CcaGradient {
            loss: 0.0,
            grad: Array1::zeros(w.len()),
            degenerate: true,
        });
    }

    let lfac = sym_inv_sqrt(cff.view(), SQRT_TRUNC_TOL)?;
    let mfac = sym_inv_sqrt(cpp.view(), SQRT_TRUNC_TOL)?;
    let wmat = lfac.inv_sqrt.dot(&cfp).dot(&mfac.inv_sqrt);
    let (u_opt, sv, vt_opt) = wmat.svd(true, true)?;
    let u = u_opt.unwrap();
    let vt = vt_opt.unwrap();
    let loss = -sv.iter().take(r).sum::<f64>();

    // gamma = sum_{i<r} u_i v_i^T; sensitivity of sum-of-top-r singular values
    let gamma = u.slice(s![.., ..r]).dot(&vt.slice(s![..r, ..]));

    // d(sum sigma)/dCfp = L^{-1} Gamma M^{-1}
    let sens_fp = lfac.inv_sqrt.dot(&gamma).dot(&mfac.inv_sqrt);

    // d(sum sigma)/dCff via the matrix-function chain rule for x^{-1/2}
    let max_ff = lfac.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut_ff = SQRT_TRUNC_TOL * max_ff.max(f64::MIN_POSITIVE);
    let dd_ff = inv_sqrt_divided_differences(&lfac.eigenvalues, cut_ff);
    let b_ff = gamma.dot(&mfac.inv_sqrt).dot(&cfp.t());
    let inner_ff = lfac.vectors.t().dot(&b_ff).dot(&lfac.vectors);
    let mut sens_ff = lfac.vectors.dot(&(&dd_ff * &inner_ff)).dot(&lfac.vectors.t());
    symmetrize(&mut sens_ff);

    // d(sum sigma)/dCpp, same construction on the past side
    let max_pp = mfac.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let cut_pp = SQRT_TRUNC_TOL * max_pp.max(f64::MIN_POSITIVE);
    let dd_pp = inv_sqrt_divided_differences(&mfac.eigenvalues, cut_pp);
    let b_pp = cfp.t().dot(&lfac.inv_sqrt).dot(&gamma);
    let inner_pp = mfac.vectors.t().dot(&b_pp).dot(&mfac.vectors);
    let mut sens_pp = mfac.vectors.dot(&(&dd_pp * &inner_pp)).dot(&mfac.vectors.t());
    symmetrize(&mut sens_pp);

    // loss = -sum sigma, so flip signs
    let gm_fp = -sens_fp;
    let gm_ff = -sens_ff;
    let gm_pp = -sens_pp;

    // chain into w through C_ab = (1/N) f_a^T Q f_b
    let total = g.nrows();
    let mut gs = Array2::zeros((s_idx.len(), total));
    for (row, &e) in s_idx.iter().enumerate() {
        gs.row_mut(row).assign(&g.row(e));
    }
    let n_pairs = win.n_pairs;
    let sub = |offset: isize| -> ArrayView2<f64> {
        let start = (1 + offset) as usize;
        gs.slice(s![.., start..start + n_pairs])
    };

    let mut grad = Array1::zeros(w.len());
    for a in 0..h {
        // symmetric blocks: (2/N) U_a (sum_b Gm[a,b] fbar_b)
        let c_pp = fpc.dot(&gm_pp.row(a));
        grad = grad + sub(win.past_offset(a + 1)).dot(&c_pp) * (2.0 / nf);
        let c_ff = ffc.dot(&gm_ff.row(a));
        grad = grad + sub(win.future_offset(a + 1)).dot(&c_ff) * (2.0 / nf);
        // cross block: rows index the future side, columns the past side
        let d_f = fpc.dot(&gm_fp.row(a));
        grad = grad + sub(win.future_offset(a + 1)).dot(&d_f) * (1.0 / nf);
        let e_p = ffc.dot(&gm_fp.column(a));
        grad = grad + sub(win.past_offset(a + 1)).dot(&e_p) * (1.0 / nf);
    }

    Ok(CcaGradient { loss, grad, degenerate: false })
}

/// Which training indices form the reference set `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferencePolicy {
    All,
    /// The trailing `k` samples of the training series.
    LastK(usize),
}

impl ReferencePolicy {
    pub fn indices(&self, len: usize) -> Vec<usize> {
        match *self {
            ReferencePolicy::All => (0..len).collect(),
            ReferencePolicy::LastK(k) => {
                let k = k.min(len);
                (len - k..len).collect()
            }
        }
    }
}

/// Fitted spectral-learning artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationModel {
    pub kernel_y: KernelSpec,
    /// Observable weights over the reference set.
    pub w: Array1<f64>,
    /// Reference-sample indices into the training series.
    pub s_indices: Vec<usize>,
    /// Reference sample values, `|S| x q`.
    pub s_samples: Array2<f64>,
    /// State-construction matrix, `r x h`.
    pub b: Array2<f64>,
    /// Canonical correlations, descending, length `r`.
    pub correlations: Vec<f64>,
    pub h: usize,
    pub r: usize,
    pub train_series_id: String,
    /// Per-epoch loss values recorded during optimization.
    pub loss_trace: Vec<f64>,
    /// Optimization aborted on a non-finite loss; the model holds the
    /// last finite iterate.
    pub aborted_non_finite: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RealizationConfig {
    pub h: usize,
    /// Retained rank; `None` keeps correlations above 5% of the largest.
    pub r: Option<usize>,
    pub reference: ReferencePolicy,
    pub epochs: usize,
    pub learning_rate: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// First-order optimization of `w` with adaptive-moment updates, then a
/// final decomposition to populate the model.
pub fn optimize_w(
    series: &TimeSeries,
    kernel_y: &KernelSpec,
    cfg: &RealizationConfig,
    seed: u64,
) -> Result<RealizationModel> {
    let win = build_windows(series, cfg.h)?;
    let s_idx = cfg.reference.indices(series.len());
    if s_idx.is_empty() {
        return Err(EltoError::InvalidArgument("empty reference set".into()));
    }
    let loss_rank = cfg.r.unwrap_or(cfg.h);
    if loss_rank == 0 || loss_rank > cfg.h {
        return Err(EltoError::InvalidArgument(format!(
            "rank {loss_rank} outside 1..={}",
            cfg.h
        )));
    }

    let g = self_gram(kernel_y, series.data.view(), &series.system_tag)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w: Array1<f64> =
        Array1::from_iter((0..s_idx.len()).map(|_| StandardNormal.sample(&mut rng)));
    let norm = w.norm_l2();
    if norm > 0.0 {
        w.mapv_inplace(|v| v / norm);
    }

    let mut m1 = Array1::<f64>::zeros(w.len());
    let mut m2 = Array1::<f64>::zeros(w.len());
    let mut loss_trace = Vec::with_capacity(cfg.epochs);
    let mut aborted = false;
    for epoch in 0..cfg.epochs {
        let out = cca_loss_and_gradient(g.view(), &w, &s_idx, &win, loss_rank)?;
        if !out.loss.is_finite() || out.grad.iter().any(|v| !v.is_finite()) {
            aborted = true;
            break;
        }
        loss_trace.push(out.loss);
        if cfg.learning_rate == 0.0 || out.degenerate {
            continue;
        }
        let t = (epoch + 1) as f64;
        for i in 0..w.len() {
            let gi = out.grad[i];
            m1[i] = ADAM_BETA1 * m1[i] + (1.0 - ADAM_BETA1) * gi;
            m2[i] = ADAM_BETA2 * m2[i] + (1.0 - ADAM_BETA2) * gi * gi;
            let mhat = m1[i] / (1.0 - ADAM_BETA1.powf(t));
            let vhat = m2[i] / (1.0 - ADAM_BETA2.powf(t));
            w[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }

    // final decomposition at the optimized w
    let (cpp, cff, cfp) = empirical_covariances(g.view(), &w, &s_idx, &win)?;
    let full = whiten_and_svd(cpp.view(), cff.view(), cfp.view(), cfg.h)?;
    let r = match cfg.r {
        Some(r) => r,
        None => {
            let top = full.correlations.first().cloned().unwrap_or(0.0);
            full.correlations
                .iter()
                .filter(|&&c| c > 0.05 * top)
                .count()
                .max(1)
        }
    };
    let cca = whiten_and_svd(cpp.view(), cff.view(), cfp.view(), r)?;

    let mut s_samples = Array2::zeros((s_idx.len(), series.dim()));
    for (row, &e) in s_idx.iter().enumerate() {
        s_samples.row_mut(row).assign(&series.data.row(e));
    }

    Ok(RealizationModel {
        kernel_y: *kernel_y,
        w,
        s_indices: s_idx,
        s_samples,
        b: cca.b,
        correlations: cca.correlations.to_vec(),
        h: cfg.h,
        r,
        train_series_id: series.system_tag.clone(),
        loss_trace,
        aborted_non_finite: aborted,
    })
}

/// Evaluate the latent state samples `x_n = B Phi_{p,n}^T Phi_S w` for
/// every window pair of `series`, returned as an `r x N` matrix.
pub fn extract_states(model: &RealizationModel, series: &TimeSeries) -> Result<Array2<f64>> {
    if series.len() < 2 * model.h {
        return Err(EltoError::InvalidArgument(format!(
            "series of length {} too short for window size {} (need at least {})",
            series.len(),
            model.h,
            2 * model.h
        )));
    }
    let win = build_windows(series, model.h)?;
    // kw[t] = sum_e w_e k(y_t, y_e)
    let k = crate::kernels::gram(
        &model.kernel_y,
        series.data.view(),
        model.s_samples.view(),
        "series",
        "reference",
    )?;
    let kw = k.values.dot(&model.w);
    let h = model.h;
    let n = win.n_pairs;
    let mut v = Array2::zeros((h, n));
    for nn in 1..=n {
        for i in 1..=h {
            v[[i - 1, nn - 1]] = kw[nn + h - 1 - i];
        }
    }
    Ok(model.b.dot(&v))
}

/// Least-squares one-step transition `A = argmin ||X_{2:N} - A X_{1:N-1}||_F`
/// together with the relative Frobenius residual.
pub fn linear_state_transition(x: ArrayView2<f64>) -> Result<(Array2<f64>, f64)> {
    let r = x.nrows();
    let n = x.ncols();
    if n < r + 1 {
        return Err(EltoError::InvalidArgument(format!(
            "need at least r+1 = {} state samples, got {n}",
            r + 1
        )));
    }
    let x1 = x.slice(s![.., ..n - 1]);
    let x2 = x.slice(s![.., 1..]);
    // solve X1^T A^T = X2^T in the least-squares sense
    let sol = x1.t().to_owned().least_squares(&x2.t().to_owned())?;
    let a = sol.solution.t().to_owned();
    let pred = a.dot(&x1);
    let resid = (&x2.to_owned() - &pred).norm_l2();
    let denom = x2.to_owned().norm_l2().max(f64::MIN_POSITIVE);
    Ok((a, resid / denom))
}
