//! Seeded simulators for the benchmark systems, ground-truth eigenvalue
//! oracles, and CSV time-series ingestion/export.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{EltoError, Result};

/// A uniformly sampled multivariate observation sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeSeries {
    /// `(T+1) x q` samples, time-ordered rows.
    pub data: Array2<f64>,
    /// Sampling step in seconds.
    pub dt: f64,
    pub seed: u64,
    pub system_tag: String,
    /// Noise parameters used at generation time, `(name, value)` pairs.
    pub noise_meta: Vec<(String, f64)>,
}

impl TimeSeries {
    pub fn new(data: Array2<f64>, dt: f64, seed: u64, tag: &str) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(EltoError::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EltoError::NonFinite("time series contains non-finite samples".into()));
        }
        Ok(TimeSeries { data, dt, seed, system_tag: tag.to_string(), noise_meta: Vec::new() })
    }

    /// Number of samples (`T + 1`).
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Observation dimension `q`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// A contiguous sub-sequence `[start, end)` sharing dt and metadata.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            data: self.data.slice(ndarray::s![start..end, ..]).to_owned(),
            dt: self.dt,
            seed: self.seed,
            system_tag: self.system_tag.clone(),
            noise_meta: self.noise_meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PendulumConfig {
    pub g: f64,
    pub length: f64,
    pub sim_hz: f64,
    pub obs_hz: f64,
    /// Process noise standard deviation (per unit time by default).
    pub n_p: f64,
    /// Observation noise standard deviation.
    pub n_o: f64,
    /// Number of observation samples to emit.
    pub n_samples: usize,
    /// Interpret `n_p` as a per-simulation-step std instead of per unit time.
    pub per_step_noise: bool,
    /// Fixed initial `(angle, velocity)`; random if absent.
    pub init: Option<(f64, f64)>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            g: 9.81,
            length: 1.0,
            sim_hz: 10_000.0,
            obs_hz: 10.0,
            n_p: 0.1,
            n_o: 0.01,
            n_samples: 400,
            per_step_noise: false,
            init: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct VdpConfig {
    pub mu: f64,
    pub dt: f64,
    pub x0: (f64, f64),
    pub obs_noise_std: f64,
    pub n_samples: usize,
}

impl Default for VdpConfig {
    fn default() -> Self {
        VdpConfig { mu: 2.0, dt: 0.1, x0: (2.0, 0.0), obs_noise_std: 0.0, n_samples: 1000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SlConfig {
    pub mu: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Process noise variance epsilon.
    pub eps_process: f64,
    pub dt: f64,
    pub r0: f64,
    pub theta0: f64,
    /// Observation noise variance on (cos theta, sin theta).
    pub obs_noise_var: f64,
    pub n_samples: usize,
}

impl Default for SlConfig {
    fn default() -> Self {
        SlConfig {
            mu: 1.0,
            gamma: 0.9,
            beta: 0.3,
            eps_process: 0.0,
            dt: 0.1,
            r0: 0.1,
            theta0: 0.0,
            obs_noise_var: 0.0,
            n_samples: 1000,
        }
    }
}

fn validate_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(EltoError::InvalidArgument(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

fn validate_nonneg(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(EltoError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
    }
    Ok(())
}

/// Euler-integrated damped-free pendulum `q'' = -(g/L) sin q` with Gaussian
/// process noise on the velocity, angle observations subsampled at
/// `obs_hz` with additive `N(0, n_o^2)` noise.
pub fn simulate_pendulum(cfg: &PendulumConfig, seed: u64) -> Result<TimeSeries> {
    validate_positive("g", cfg.g)?;
    validate_positive("length", cfg.length)?;
    validate_positive("sim_hz", cfg.sim_hz)?;
    validate_positive("obs_hz", cfg.obs_hz)?;
    validate_nonneg("n_p", cfg.n_p)?;
    validate_nonneg("n_o", cfg.n_o)?;
    if cfg.obs_hz > cfg.sim_hz {
        return Err(EltoError::InvalidArgument(format!(
            "obs_hz {} exceeds sim_hz {}",
            cfg.obs_hz, cfg.sim_hz
        )));
    }
    if cfg.n_samples == 0 {
        return Err(EltoError::InvalidArgument("n_samples must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut q, mut qdot) = match cfg.init {
        Some(iv) => iv,
        None => {
            let qa = Uniform::new(0.1 * std::f64::consts::PI, 0.4 * std::f64::consts::PI)
                .map_err(|e| EltoError::Internal(e.to_string()))?;
            let qv = Uniform::new(-0.25 * std::f64::consts::PI, 0.25 * std::f64::consts::PI)
                .map_err(|e| EltoError::Internal(e.to_string()))?;
            (qa.sample(&mut rng), qv.sample(&mut rng))
        }
    };

    let dt_sim = 1.0 / cfg.sim_hz;
    let step_noise_std = if cfg.per_step_noise { cfg.n_p } else { cfg.n_p * dt_sim.sqrt() };
    let steps_per_obs = (cfg.sim_hz / cfg.obs_hz).round() as usize;
    let normal = Normal::new(0.0, 1.0).map_err(|e| EltoError::Internal(e.to_string()))?;

    let mut obs = Array2::zeros((cfg.n_samples, 1));
    for s in 0..cfg.n_samples {
        let noisy = q + cfg.n_o * normal.sample(&mut rng);
        obs[[s, 0]] = noisy;
        if s + 1 == cfg.n_samples {
            break;
        }
        for _ in 0..steps_per_obs {
            let acc = -(cfg.g / cfg.length) * q.sin();
            qdot += acc * dt_sim;
            if step_noise_std > 0.0 {
                qdot += step_noise_std * normal.sample(&mut rng);
            }
            q += qdot * dt_sim;
        }
    }

    let mut ts = TimeSeries::new(obs, 1.0 / cfg.obs_hz, seed, "pendulum")?;
    ts.noise_meta = vec![("n_p".into(), cfg.n_p), ("n_o".into(), cfg.n_o)];
    Ok(ts)
}

fn rk4_step<F: Fn(&[f64; 2]) -> [f64; 2]>(f: &F, x: &[f64; 2], dt: f64) -> [f64; 2] {
    let k1 = f(x);
    let k2 = f(&[x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]]);
    let k3 = f(&[x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]]);
    let k4 = f(&[x[0] + dt * k3[0], x[1] + dt * k3[1]]);
    [
        x[0] + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        x[1] + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// RK4-integrated Van der Pol oscillator with i.i.d. Gaussian observation
/// noise added to both coordinates after integration.
pub fn simulate_vdp(cfg: &VdpConfig, seed: u64) -> Result<TimeSeries> {
    validate_positive("dt", cfg.dt)?;
    validate_nonneg("obs_noise_std", cfg.obs_noise_std)?;
    if cfg.n_samples == 0 {
        return Err(EltoError::InvalidArgument("n_samples must be >= 1".into()));
    }
    let mu = cfg.mu;
    let f = move |x: &[f64; 2]| [x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]];

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| EltoError::Internal(e.to_string()))?;
    let mut state = [cfg.x0.0, cfg.x0.1];
    let mut data = Array2::zeros((cfg.n_samples, 2));
    for s in 0..cfg.n_samples {
        data[[s, 0]] = state[0] + cfg.obs_noise_std * normal.sample(&mut rng);
        data[[s, 1]] = state[1] + cfg.obs_noise_std * normal.sample(&mut rng);
        state = rk4_step(&f, &state, cfg.dt);
    }
    let mut ts = TimeSeries::new(data, cfg.dt, seed, "vdp")?;
    ts.noise_meta = vec![("obs_noise_std".into(), cfg.obs_noise_std)];
    Ok(ts)
}

/// Stuart-Landau oscillator: RK4 drift per step plus an Euler-Maruyama
/// noise increment `sqrt(eps dt) N(0,1)` on each Cartesian coordinate.
/// Observation is `(cos theta, sin theta)` with additive Gaussian noise of
/// variance `obs_noise_var`.
pub fn simulate_sl(cfg: &SlConfig, seed: u64) -> Result<TimeSeries> {
    validate_positive("dt", cfg.dt)?;
    validate_nonneg("eps_process", cfg.eps_process)?;
    validate_nonneg("obs_noise_var", cfg.obs_noise_var)?;
    if cfg.n_samples == 0 {
        return Err(EltoError::InvalidArgument("n_samples must be >= 1".into()));
    }
    let (mu, gamma, beta) = (cfg.mu, cfg.gamma, cfg.beta);
    // dz/dt = (mu + i gamma) z - (1 + i beta) |z|^2 z in Cartesian form
    let f = move |x: &[f64; 2]| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        [
            mu * x[0] - gamma * x[1] - r2 * (x[0] - beta * x[1]),
            gamma * x[0] + mu * x[1] - r2 * (beta * x[0] + x[1]),
        ]
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).map_err(|e| EltoError::Internal(e.to_string()))?;
    let noise_scale = (cfg.eps_process * cfg.dt).sqrt();
    let obs_std = cfg.obs_noise_var.sqrt();

    let mut state = [cfg.r0 * cfg.theta0.cos(), cfg.r0 * cfg.theta0.sin()];
    let mut data = Array2::zeros((cfg.n_samples, 2));
    for s in 0..cfg.n_samples {
        let theta = state[1].atan2(state[0]);
        data[[s, 0]] = theta.cos() + obs_std * normal.sample(&mut rng);
        data[[s, 1]] = theta.sin() + obs_std * normal.sample(&mut rng);
        state = rk4_step(&f, &state, cfg.dt);
        if noise_scale > 0.0 {
            state[0] += noise_scale * normal.sample(&mut rng);
            state[1] += noise_scale * normal.sample(&mut rng);
        }
    }
    let mut ts = TimeSeries::new(data, cfg.dt, seed, "stuart-landau")?;
    ts.noise_meta = vec![
        ("eps_process".into(), cfg.eps_process),
        ("obs_noise_var".into(), cfg.obs_noise_var),
    ];
    Ok(ts)
}

/// Unwrap angles `atan2(sin, cos)` from a unit-circle observation series.
pub fn angles_from_unit_obs(series: &TimeSeries) -> Result<Array1<f64>> {
    if series.dim() != 2 {
        return Err(EltoError::InvalidArgument(format!(
            "angle extraction requires a 2-d (cos, sin) series, got dim {}",
            series.dim()
        )));
    }
    Ok(Array1::from_iter(
        series.data.rows().into_iter().map(|r| r[1].atan2(r[0])),
    ))
}

/// Complex-exponential observables `e^{-i m theta}` for `m = -max_order..=max_order`.
pub fn exponential_observables(theta: &Array1<f64>, max_order: i32) -> Array2<Complex64> {
    let orders: Vec<i32> = (-max_order..=max_order).collect();
    let mut out = Array2::zeros((orders.len(), theta.len()));
    for (row, &m) in orders.iter().enumerate() {
        for (col, &th) in theta.iter().enumerate() {
            out[[row, col]] = Complex64::new(0.0, -(m as f64) * th).exp();
        }
    }
    out
}

pub const VDP_FUNDAMENTAL_OMEGA: f64 = 0.823498;
pub const VDP_DT: f64 = 0.1;
pub const SL_OMEGA: f64 = 0.6;
pub const SL_KAPPA: f64 = 3.0;

/// Discrete-domain reference eigenvalues `e^{+-i m omega dt}` for the Van
/// der Pol limit cycle, `m = 1..=harmonics`.
pub fn true_eigs_vdp(harmonics: usize) -> Result<Vec<Complex64>> {
    if harmonics == 0 {
        return Err(EltoError::InvalidArgument("harmonics must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(2 * harmonics);
    for m in 1..=harmonics {
        let phase = m as f64 * VDP_FUNDAMENTAL_OMEGA * VDP_DT;
        out.push(Complex64::new(0.0, phase).exp());
        out.push(Complex64::new(0.0, -phase).exp());
    }
    Ok(out)
}

/// Continuous-domain reference eigenvalues
/// `s_m = i m omega - (eps/2) kappa m^2 omega^2` and conjugates.
pub fn true_eigs_sl(harmonics: usize, eps: f64, omega: f64, kappa: f64) -> Result<Vec<Complex64>> {
    if harmonics == 0 {
        return Err(EltoError::InvalidArgument("harmonics must be >= 1".into()));
    }
    validate_nonneg("eps", eps)?;
    let mut out = Vec::with_capacity(2 * harmonics);
    for m in 1..=harmonics {
        let mf = m as f64;
        let re = -(eps / 2.0) * kappa * mf * mf * omega * omega;
        out.push(Complex64::new(re, mf * omega));
        out.push(Complex64::new(re, -mf * omega));
    }
    Ok(out)
}

/// Parse a rectangular numeric CSV into a time series.
pub fn load_csv(path: &Path, dt: f64, has_header: bool, center: bool) -> Result<TimeSeries> {
    let file = std::fs::File::open(path)
        .map_err(|e| EltoError::Io(format!("{}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if has_header && rows.is_empty() && width.is_none() && lineno == 0 {
            continue;
        }
        let mut row = Vec::new();
        for cell in trimmed.split(',') {
            let v: f64 = cell.trim().parse().map_err(|_| {
                EltoError::Io(format!("line {}: non-numeric cell '{}'", lineno + 1, cell.trim()))
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(EltoError::Io(format!(
                    "line {}: ragged row, expected {} cells, got {}",
                    lineno + 1,
                    w,
                    row.len()
                )));
            }
            _ => {}
        }
        rows.push(row);
    }
    let w = width.ok_or_else(|| EltoError::Io("empty CSV file".into()))?;
    let mut data = Array2::zeros((rows.len(), w));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            data[[i, j]] = *v;
        }
    }
    if center {
        for mut col in data.columns_mut() {
            let mean = col.sum() / col.len() as f64;
            col.mapv_inplace(|v| v - mean);
        }
    }
    TimeSeries::new(data, dt, 0, "csv")
}

/// Write a time series as CSV with a one-line metadata comment prefix.
pub fn save_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)
        .map_err(|e| EltoError::Io(format!("{}: {e}", path.display())))?;
    writeln!(
        file,
        "# system={} dt={} seed={}",
        series.system_tag, series.dt, series.seed
    )?;
    for row in series.data.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Estimate the fundamental angular frequency of a scalar oscillation via
/// linearly interpolated upward zero crossings of its mean-removed signal.
pub fn fundamental_frequency(signal: &Array1<f64>, dt: f64) -> Option<f64> {
    let mean = signal.sum() / signal.len() as f64;
    let mut crossings = Vec::new();
    for i in 1..signal.len() {
        let a = signal[i - 1] - mean;
        let b = signal[i] - mean;
        if a < 0.0 && b >= 0.0 {
            let frac = a / (a - b);
            crossings.push((i - 1) as f64 + frac);
        }
    }
    if crossings.len() < 2 {
        return None;
    }
    let total = crossings.last().unwrap() - crossings.first().unwrap();
    let period = total / (crossings.len() - 1) as f64 * dt;
    Some(2.0 * std::f64::consts::PI / period)
}
