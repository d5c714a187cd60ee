//! Spectral analysis: Voigt profiles through the scaled complex error
//! function, single/double-Voigt fits with residual-bootstrap confidence
//! intervals, sideband-dip fits, count normalization, and the calibration
//! fits (Gaussian slice centers + linear regression).

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lm::{minimize, minimize_with_jacobian, LmOptions};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Default bootstrap resample count for separation confidence intervals.
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 2000;

// ---------------------------------------------------------------------------
// Faddeeva function and the Voigt profile
// ---------------------------------------------------------------------------

/// Scaled complex error function w(z) = exp(-z^2) erfc(-i z) for Im(z) >= 0.
///
/// Midpoint trapezoid representation with pole correction (accurate to
/// ~1e-12 relative over the fitting range), switching to a continued
/// fraction for large |z|.
pub fn faddeeva_w(z: Complex64) -> Complex64 {
    debug_assert!(z.im >= 0.0);
    let r2 = z.norm_sqr();
    if r2 > 144.0 {
        // Laplace continued fraction, downward.
        let mut w = Complex64::new(0.0, 0.0);
        for k in (1..=12).rev() {
            w = (k as f64 * 0.5) / (z - w);
        }
        return Complex64::new(0.0, INV_SQRT_PI) / (z - w);
    }
    // Midpoint rule with h chosen for ~1e-13 discretization error.
    let h = 0.4;
    let n_terms = ((12.0 + 7.0) / h) as usize + 1;
    let mut sum = Complex64::new(0.0, 0.0);
    let z2 = z * z;
    for n in 0..n_terms {
        let t = (n as f64 + 0.5) * h;
        let e = (-t * t).exp();
        // 1/(z-t) + 1/(z+t) = 2z/(z^2 - t^2)
        sum += e * 2.0 * z / (z2 - t * t);
    }
    let mut w = Complex64::new(0.0, h / std::f64::consts::PI) * sum;
    // Pole correction for Im z below the first rule line at pi/h.
    let arg = Complex64::new(0.0, -2.0 * std::f64::consts::PI / h) * z;
    if arg.re < 700.0 {
        w += 2.0 * (-z2).exp() / (1.0 + arg.exp());
    }
    w
}

/// Area-normalized Voigt profile times `amplitude`, plus `offset`.
///
/// The underlying shape integrates to one over x; `gaussian_sigma = 0`
/// degenerates to a Lorentzian and `lorentz_gamma = 0` to a Gaussian.
/// Both widths zero is a domain error.
pub fn voigt(
    x: f64,
    center: f64,
    gaussian_sigma: f64,
    lorentz_gamma: f64,
    amplitude: f64,
    offset: f64,
) -> Result<f64> {
    if gaussian_sigma < 0.0 || lorentz_gamma < 0.0 {
        return Err(Error::domain("voigt widths must be >= 0"));
    }
    if gaussian_sigma == 0.0 && lorentz_gamma == 0.0 {
        return Err(Error::domain("voigt needs at least one positive width"));
    }
    Ok(amplitude * voigt_shape(x - center, gaussian_sigma, lorentz_gamma) + offset)
}

/// Unit-area Voigt shape at displacement dx from the center.
fn voigt_shape(dx: f64, sigma: f64, gamma: f64) -> f64 {
    if sigma == 0.0 {
        return gamma / std::f64::consts::PI / (dx * dx + gamma * gamma);
    }
    if gamma == 0.0 {
        let u = dx / sigma;
        return (-0.5 * u * u).exp() / (sigma * SQRT_2PI);
    }
    let z = Complex64::new(dx, gamma) / (sigma * SQRT_2);
    faddeeva_w(z).re / (sigma * SQRT_2PI)
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanLocation {
    Far,
    Close,
}

/// A spectroscopy scan: photon counts (or optical depths) versus detuning.
#[derive(Debug, Clone)]
pub struct SpectrumDataset {
    /// (detuning in Hz, counts), strictly increasing in detuning.
    pub points: Vec<(f64, f64)>,
    pub label: String,
    pub location: Option<ScanLocation>,
    pub exposure: Option<String>,
}

impl SpectrumDataset {
    pub fn new(mut points: Vec<(f64, f64)>, label: impl Into<String>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ds = SpectrumDataset {
            points,
            label: label.into(),
            location: None,
            exposure: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 8 {
            return Err(Error::config(format!(
                "spectrum {}: need at least 8 points",
                self.label
            )));
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::config(format!(
                    "spectrum {}: detunings must be strictly increasing",
                    self.label
                )));
            }
        }
        if self.points.iter().any(|p| p.1 < 0.0 || !p.1.is_finite()) {
            return Err(Error::config(format!(
                "spectrum {}: counts must be finite and >= 0",
                self.label
            )));
        }
        Ok(())
    }

    /// Load a delimiter-separated file with header `detuning_hz, counts` and
    /// optional `# key: value` metadata comments (label, location, exposure).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut points = Vec::new();
        let mut label = path.to_string();
        let mut location = None;
        let mut exposure = None;
        let mut header_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.split_once(':') {
                    match k.trim().to_ascii_lowercase().as_str() {
                        "label" => label = v.trim().to_string(),
                        "location" => {
                            location = match v.trim().to_ascii_lowercase().as_str() {
                                "far" => Some(ScanLocation::Far),
                                "close" => Some(ScanLocation::Close),
                                _ => None,
                            }
                        }
                        "exposure" => exposure = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(|c| c == ',' || c == '\t').map(str::trim).collect();
            if !header_seen {
                header_seen = true;
                // Header row: names, not numbers.
                if fields[0].parse::<f64>().is_err() {
                    continue;
                }
            }
            if fields.len() < 2 {
                return Err(Error::Parse {
                    path: path.to_string(),
                    line: Some(lineno + 1),
                    msg: "expected detuning and counts columns".into(),
                });
            }
            let x = fields[0].parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_string(),
                line: Some(lineno + 1),
                msg: format!("bad detuning {:?}", fields[0]),
            })?;
            let y = fields[1].parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_string(),
                line: Some(lineno + 1),
                msg: format!("bad counts {:?}", fields[1]),
            })?;
            points.push((x, y));
        }
        let mut ds = Self::new(points, label)?;
        ds.location = location;
        ds.exposure = exposure;
        Ok(ds)
    }
}

/// Affine map of the counts onto [0, 1] (max -> 1, min -> 0).
pub fn normalize_counts(data: &SpectrumDataset) -> Result<SpectrumDataset> {
    data.validate()?;
    let max = data.points.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let min = data.points.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    if !(max > min) {
        return Err(Error::DegenerateData(format!(
            "spectrum {}: constant counts cannot be normalized",
            data.label
        )));
    }
    let mut out = data.clone();
    for p in &mut out.points {
        p.1 = (p.1 - min) / (max - min);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Fit models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    SingleVoigt,
    DoubleVoigt,
    /// Double Voigt with negative amplitudes (sideband dips on normalized data).
    DoubleVoigtDips,
    Gaussian,
    Linear,
}

impl FitModel {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "single_voigt" | "single" => Ok(FitModel::SingleVoigt),
            "double_voigt" | "double" => Ok(FitModel::DoubleVoigt),
            "double_voigt_dips" | "dips" | "sideband" => Ok(FitModel::DoubleVoigtDips),
            "gaussian" => Ok(FitModel::Gaussian),
            "linear" => Ok(FitModel::Linear),
            other => Err(Error::config(format!("unknown fit model {other:?}"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FitModel::SingleVoigt => "single_voigt",
            FitModel::DoubleVoigt => "double_voigt",
            FitModel::DoubleVoigtDips => "double_voigt_dips",
            FitModel::Gaussian => "gaussian",
            FitModel::Linear => "linear",
        }
    }
}

/// Separation of the secondary peak from the principal one with an
/// asymmetric bootstrap confidence interval (16th/84th percentiles).
#[derive(Debug, Clone, Copy)]
pub struct PeakSeparation {
    pub value_hz: f64,
    pub ci_lower_hz: f64,
    pub ci_upper_hz: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FitModel,
    pub parameter_names: Vec<&'static str>,
    pub parameters: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub residual_norm: f64,
    pub converged: bool,
    /// Costs after each accepted optimizer step (monotone non-increasing).
    pub cost_history: Vec<f64>,
    pub peak_separation: Option<PeakSeparation>,
    /// Secondary amplitude consistent with zero (within two standard errors).
    pub secondary_peak_absent: bool,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<f64> {
        self.parameter_names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.parameters[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.parameter_names
            .iter()
            .position(|n| *n == name)
            .map(|i| self.std_errors[i])
    }
}

fn model_value(model: FitModel, p: &[f64], x: f64) -> f64 {
    match model {
        FitModel::SingleVoigt => {
            // offset, amplitude, center, sigma, gamma
            p[0] + p[1] * voigt_shape(x - p[2], p[3], p[4])
        }
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => {
            // offset, a1, c1, sigma, gamma, a2, sep
            p[0] + p[1] * voigt_shape(x - p[2], p[3], p[4])
                + p[5] * voigt_shape(x - (p[2] + p[6]), p[3], p[4])
        }
        FitModel::Gaussian => {
            // offset, amplitude, center, sigma
            let u = (x - p[2]) / p[3];
            p[0] + p[1] * (-0.5 * u * u).exp()
        }
        FitModel::Linear => p[0] + p[1] * x,
    }
}

fn params_valid(model: FitModel, p: &[f64]) -> bool {
    match model {
        FitModel::SingleVoigt => p[3] > 0.0 && p[4] >= 0.0,
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => p[3] > 0.0 && p[4] >= 0.0,
        FitModel::Gaussian => p[3] > 0.0,
        FitModel::Linear => true,
    }
}

fn parameter_names(model: FitModel) -> Vec<&'static str> {
    match model {
        FitModel::SingleVoigt => vec!["offset", "amplitude", "center_hz", "sigma_hz", "gamma_hz"],
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => vec![
            "offset",
            "amplitude_1",
            "center_1_hz",
            "sigma_hz",
            "gamma_hz",
            "amplitude_2",
            "separation_hz",
        ],
        FitModel::Gaussian => vec!["offset", "amplitude", "center", "sigma"],
        FitModel::Linear => vec!["intercept", "slope"],
    }
}

/// Crude width of the feature around index `i0` at half prominence.
fn half_width_estimate(xs: &[f64], ys: &[f64], i0: usize, baseline: f64) -> f64 {
    let peak = ys[i0];
    let half = 0.5 * (peak + baseline);
    let rising = peak > baseline;
    let crossed = |y: f64| if rising { y < half } else { y > half };
    let mut right = xs[xs.len() - 1];
    for i in i0..ys.len() {
        if crossed(ys[i]) {
            right = xs[i];
            break;
        }
    }
    let mut left = xs[0];
    for i in (0..=i0).rev() {
        if crossed(ys[i]) {
            left = xs[i];
            break;
        }
    }
    let w = (right - left).abs();
    let span = xs[xs.len() - 1] - xs[0];
    if w > 0.0 {
        w
    } else {
        span / 10.0
    }
}

/// Principal-feature starting values: feature at the global extremum
/// (maximum for peaks, minimum for dips), crude widths from the
/// half-prominence crossing.
fn single_feature_init(xs: &[f64], ys: &[f64], dips: bool) -> (Vec<f64>, f64) {
    let ymax = ys.iter().cloned().fold(f64::MIN, f64::max);
    let ymin = ys.iter().cloned().fold(f64::MAX, f64::min);
    let (baseline, extremum_idx) = if dips {
        let i = ys
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        (ymax, i)
    } else {
        let i = ys
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        (ymin, i)
    };
    let height = ys[extremum_idx] - baseline;
    let w = half_width_estimate(xs, ys, extremum_idx, baseline);
    let sigma0 = (w / 3.0).max(1e-12 * (xs[xs.len() - 1] - xs[0]).abs().max(1.0));
    let gamma0 = w / 4.0;
    let shape_peak = voigt_shape(0.0, sigma0, gamma0);
    let amp0 = height / shape_peak;
    (
        vec![baseline, amp0, xs[extremum_idx], sigma0, gamma0],
        height,
    )
}

/// Initial parameters per the standard policy: principal peak at the global
/// extremum; two-peak models get their secondary from the multi-start
/// seeding below.
fn initial_params(model: FitModel, xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    match model {
        FitModel::SingleVoigt => Ok(single_feature_init(xs, ys, false).0),
        FitModel::Gaussian => {
            let (p, height) = single_feature_init(xs, ys, false);
            Ok(vec![p[0], height, p[2], p[3] * 1.5 / 2.355 * 3.0 / 1.5])
        }
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => {
            Err(Error::config("double models use seeded starts"))
        }
        FitModel::Linear => Err(Error::config(
            "linear model is fitted by the calibration routine",
        )),
    }
}

/// Candidate starting points for a two-peak model: a single-peak pre-fit,
/// then one start per prominent residual extremum in the peak direction
/// (largest first). Returns (p0 candidates).
fn double_peak_starts(
    model: FitModel,
    xs: &[f64],
    ys: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let dips = matches!(model, FitModel::DoubleVoigtDips);
    let pre_model = FitModel::SingleVoigt;
    let (p_single, _) = single_feature_init(xs, ys, dips);
    let pre = fit_once(pre_model, xs, ys, &p_single, &LmOptions::default())?;
    let pp = &pre.params;
    let shape_peak = voigt_shape(0.0, pp[3], pp[4]);
    // Signed residuals in the peak direction.
    let resid: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - model_value(pre_model, pp, x);
            if dips {
                -r
            } else {
                r
            }
        })
        .collect();
    // Local maxima of the signed residual, best first, separated by at
    // least a linewidth.
    let mut candidates: Vec<(usize, f64)> = (1..xs.len() - 1)
        .filter(|&i| resid[i] > resid[i - 1] && resid[i] >= resid[i + 1] && resid[i] > 0.0)
        .map(|i| (i, resid[i]))
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    let min_space = 2.0 * pp[3].abs().max(pp[4]);
    let mut picked: Vec<usize> = Vec::new();
    for (i, _) in candidates {
        if picked.iter().all(|&j| (xs[i] - xs[j]).abs() > min_space) {
            picked.push(i);
        }
        if picked.len() >= 4 {
            break;
        }
    }
    if picked.is_empty() {
        picked.push(if xs.len() > 2 { xs.len() / 3 } else { 0 });
    }
    let starts = picked
        .into_iter()
        .map(|i| {
            let sep0 = xs[i] - pp[2];
            let sign = if dips { -1.0 } else { 1.0 };
            let a2 = sign * resid[i].max(1e-6) / shape_peak;
            vec![pp[0], pp[1], pp[2], pp[3], pp[4], a2, sep0]
        })
        .collect();
    Ok(starts)
}

/// Make the larger-amplitude peak the principal one.
fn canonicalize_double(p: &mut [f64]) {
    if p[5].abs() > p[1].abs() {
        let c2 = p[2] + p[6];
        p.swap(1, 5);
        p[2] = c2;
        p[6] = -p[6];
    }
}

/// Unit-area Voigt shape and its partial derivatives with respect to the
/// displacement dx, sigma and gamma, using w'(z) = -2 z w(z) + 2i/sqrt(pi).
struct VoigtPoint {
    value: f64,
    d_dx: f64,
    d_sigma: f64,
    d_gamma: f64,
}

fn voigt_shape_grad(dx: f64, sigma: f64, gamma: f64) -> VoigtPoint {
    let g = gamma.max(1e-12 * sigma);
    let s2 = sigma * SQRT_2;
    let zeta = Complex64::new(dx, g) / s2;
    let w = faddeeva_w(zeta);
    let wp = -2.0 * zeta * w + Complex64::new(0.0, 2.0 * INV_SQRT_PI);
    let norm = 1.0 / (sigma * SQRT_2PI);
    VoigtPoint {
        value: w.re * norm,
        d_dx: wp.re * norm / s2,
        d_sigma: -norm / sigma * (w.re + (wp * zeta).re),
        d_gamma: -wp.im * norm / s2,
    }
}

fn fit_once(
    model: FitModel,
    xs: &[f64],
    ys: &[f64],
    p0: &[f64],
    opts: &LmOptions,
) -> Result<crate::lm::LmResult> {
    let residuals = |p: &[f64], out: &mut [f64]| {
        if !params_valid(model, p) {
            return false;
        }
        for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
            out[i] = model_value(model, p, x) - y;
        }
        true
    };
    let mut res = match model {
        FitModel::SingleVoigt => minimize_with_jacobian(
            residuals,
            |p: &[f64], jac: &mut [Vec<f64>]| {
                // offset, amplitude, center, sigma, gamma
                for (i, &x) in xs.iter().enumerate() {
                    let v = voigt_shape_grad(x - p[2], p[3], p[4]);
                    jac[i][0] = 1.0;
                    jac[i][1] = v.value;
                    jac[i][2] = -p[1] * v.d_dx;
                    jac[i][3] = p[1] * v.d_sigma;
                    jac[i][4] = p[1] * v.d_gamma;
                }
            },
            p0,
            xs.len(),
            opts,
        )?,
        FitModel::DoubleVoigt | FitModel::DoubleVoigtDips => minimize_with_jacobian(
            residuals,
            |p: &[f64], jac: &mut [Vec<f64>]| {
                // offset, a1, c1, sigma, gamma, a2, sep
                for (i, &x) in xs.iter().enumerate() {
                    let v1 = voigt_shape_grad(x - p[2], p[3], p[4]);
                    let v2 = voigt_shape_grad(x - (p[2] + p[6]), p[3], p[4]);
                    jac[i][0] = 1.0;
                    jac[i][1] = v1.value;
                    jac[i][2] = -p[1] * v1.d_dx - p[5] * v2.d_dx;
                    jac[i][3] = p[1] * v1.d_sigma + p[5] * v2.d_sigma;
                    jac[i][4] = p[1] * v1.d_gamma + p[5] * v2.d_gamma;
                    jac[i][5] = v2.value;
                    jac[i][6] = -p[5] * v2.d_dx;
                }
            },
            p0,
            xs.len(),
            opts,
        )?,
        _ => minimize(residuals, p0, xs.len(), opts)?,
    };
    if matches!(model, FitModel::DoubleVoigt | FitModel::DoubleVoigtDips) {
        canonicalize_double(&mut res.params);
    }
    Ok(res)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let i = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[i.min(sorted.len() - 1)]
}

/// Fit a spectrum with the requested model. Deterministic for a given
/// dataset and seed. For two-peak models the separation gets an asymmetric
/// confidence interval from `resamples` residual-bootstrap refits
/// (16th/84th percentiles, per-resample seeds derived from `seed`).
pub fn fit_spectrum(
    data: &SpectrumDataset,
    model: FitModel,
    seed: u64,
    resamples: usize,
) -> Result<FitResult> {
    data.validate()?;
    let names = parameter_names(model);
    if data.points.len() < 2 * names.len() {
        return Err(Error::config(format!(
            "spectrum {}: need at least {} points for {} parameters",
            data.label,
            2 * names.len(),
            names.len()
        )));
    }
    let xs: Vec<f64> = data.points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = data.points.iter().map(|p| p.1).collect();
    let two_peak = matches!(model, FitModel::DoubleVoigt | FitModel::DoubleVoigtDips);
    let fit = if two_peak {
        // Multi-start over residual extrema; lowest-cost fit wins.
        let starts = double_peak_starts(model, &xs, &ys)?;
        let mut best: Option<crate::lm::LmResult> = None;
        for p0 in &starts {
            if let Ok(res) = fit_once(model, &xs, &ys, p0, &LmOptions::default()) {
                if best.as_ref().map_or(true, |b| res.cost < b.cost) {
                    best = Some(res);
                }
            }
        }
        best.ok_or_else(|| Error::config("no two-peak start converged"))?
    } else {
        let p0 = initial_params(model, &xs, &ys)?;
        fit_once(model, &xs, &ys, &p0, &LmOptions::default())?
    };

    let mut separation = None;
    let mut secondary_absent = false;
    if two_peak {
        let sep = fit.params[6];
        let a2 = fit.params[5];
        let a2_err = fit.std_errors[5];
        secondary_absent = a2.abs() < 2.0 * a2_err;
        // Residual bootstrap around the fitted model.
        let fitted: Vec<f64> = xs.iter().map(|&x| model_value(model, &fit.params, x)).collect();
        let residuals: Vec<f64> = ys.iter().zip(&fitted).map(|(y, m)| y - m).collect();
        let n = xs.len();
        let refit_opts = LmOptions {
            covariance: false,
            cost_tol: 1e-10,
            step_tol: 1e-10,
            max_iter: 60,
            ..LmOptions::default()
        };
        let mut seps: Vec<f64> = (0..resamples)
            .into_par_iter()
            .map(|k| {
                let mut rng =
                    Pcg64::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let y_star: Vec<f64> = (0..n)
                    .map(|i| fitted[i] + residuals[rng.gen_range(0..n)])
                    .collect();
                fit_once(model, &xs, &y_star, &fit.params, &refit_opts)
                    .map(|r| r.params[6])
                    .unwrap_or(f64::NAN)
            })
            .collect();
        seps.retain(|v| v.is_finite());
        if seps.len() > resamples / 2 {
            seps.sort_by(|a, b| a.total_cmp(b));
            separation = Some(PeakSeparation {
                value_hz: sep,
                ci_lower_hz: percentile(&seps, 0.16),
                ci_upper_hz: percentile(&seps, 0.84),
            });
        } else {
            separation = Some(PeakSeparation {
                value_hz: sep,
                ci_lower_hz: f64::NAN,
                ci_upper_hz: f64::NAN,
            });
        }
    }

    Ok(FitResult {
        model,
        parameter_names: names,
        parameters: fit.params.clone(),
        std_errors: fit.std_errors.clone(),
        covariance: fit.covariance.clone(),
        residual_norm: fit.cost.sqrt(),
        converged: fit.converged,
        cost_history: fit.cost_history.clone(),
        peak_separation: separation,
        secondary_peak_absent: secondary_absent,
    })
}

/// Least-squares Gaussian fit of an optical-depth slice; returns the fit
/// with parameters (offset, amplitude, center, sigma).
pub fn fit_gaussian_center(slice: &[(f64, f64)]) -> Result<FitResult> {
    if slice.len() < 5 {
        return Err(Error::config("gaussian slice fit needs at least 5 points"));
    }
    let mut pts = slice.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let p0 = initial_params(FitModel::Gaussian, &xs, &ys)?;
    let fit = fit_once(FitModel::Gaussian, &xs, &ys, &p0, &LmOptions::default())?;
    let center = fit.params[2];
    if center < xs[0] || center > xs[xs.len() - 1] {
        return Err(Error::Convergence {
            context: "gaussian center outside data range".into(),
            estimate: center,
            error_bound: fit.std_errors[2],
        });
    }
    Ok(FitResult {
        model: FitModel::Gaussian,
        parameter_names: parameter_names(FitModel::Gaussian),
        parameters: fit.params.clone(),
        std_errors: fit.std_errors.clone(),
        covariance: fit.covariance.clone(),
        residual_norm: fit.cost.sqrt(),
        converged: fit.converged,
        cost_history: fit.cost_history.clone(),
        peak_separation: None,
        secondary_peak_absent: false,
    })
}

/// Ordinary least-squares line through (bias field, center pixel) points,
/// with the slope converted to meters per gauss through the pixel size.
#[derive(Debug, Clone, Copy)]
pub struct RampCalibration {
    pub slope_px_per_g: f64,
    pub slope_m_per_g: f64,
    pub intercept_px: f64,
    pub slope_std_error_m_per_g: f64,
    pub intercept_std_error_px: f64,
}

pub fn fit_ramp_calibration(
    points: &[(f64, f64)],
    pixel_size_m: f64,
) -> Result<RampCalibration> {
    if points.len() < 3 {
        return Err(Error::config(
            "ramp calibration needs at least 3 (field, center) points",
        ));
    }
    if !(pixel_size_m > 0.0) {
        return Err(Error::config("pixel size must be positive"));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let xbar = sx / n;
    let ybar = sy / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.0 - xbar)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData(
            "ramp calibration needs varying bias fields".into(),
        ));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ssr: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let dof = (pts.len() as f64 - 2.0).max(1.0);
    let s2 = ssr / dof;
    let slope_var = s2 / sxx;
    let intercept_var = s2 * (1.0 / n + xbar * xbar / sxx);
    Ok(RampCalibration {
        slope_px_per_g: slope,
        slope_m_per_g: slope * pixel_size_m,
        intercept_px: intercept,
        slope_std_error_m_per_g: slope_var.sqrt() * pixel_size_m,
        intercept_std_error_px: intercept_var.sqrt(),
    })
}
