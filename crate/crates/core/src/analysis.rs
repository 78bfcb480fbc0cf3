//! Post-processing of gradient curves: flattening-time fit, effective T1,
//! T1 percentiles, a finite-difference gradient probe and eigenvalue
//! spectrum diagnostics.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densmat::DensityMatrix;
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed};

pub const DEFAULT_P_THRESHOLD: f64 = 0.75;
const MIN_FIT_POINTS: usize = 5;
const FALLBACK_PLATEAU_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub t_cir_us: f64,
    pub gradient: f64,
    pub err: f64,
    pub layers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCurve {
    pub points: Vec<CurvePoint>,
    pub n_qubits: usize,
    pub noise_tag: String,
    pub platform: String,
}

impl GradientCurve {
    pub fn new(points: Vec<CurvePoint>, n_qubits: usize, noise_tag: &str, platform: &str) -> Result<Self> {
        let c = Self {
            points,
            n_qubits,
            noise_tag: noise_tag.to_string(),
            platform: platform.to_string(),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.windows(2).any(|w| w[1].t_cir_us <= w[0].t_cir_us) {
            return Err(Error::InvalidArgument(
                "curve times must be strictly increasing".into(),
            ));
        }
        if self.points.iter().any(|p| !(p.gradient >= 0.0) || !p.t_cir_us.is_finite()) {
            return Err(Error::InvalidArgument(
                "curve gradients must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t_cir_us).collect()
    }

    pub fn gradients(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.gradient).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Plateau,
    NoPlateau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    LeastSquares,
    Fallback,
}

/// `g(t) = sqrt((A·e^{−(t−t₀)/τ})² + g_inf²)` with `t₀` the first curve time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatteningFit {
    pub t_flat: f64,
    pub t_flat_err: f64,
    pub g_inf: f64,
    pub g_inf_err: f64,
    pub amplitude: f64,
    pub tau: f64,
    pub t_origin: f64,
    /// Root-mean-square residual of `ln g`.
    pub residual: f64,
    pub verdict: Verdict,
    pub method: FitMethod,
}

impl FlatteningFit {
    pub fn model(&self, t: f64) -> f64 {
        ((self.amplitude * (-(t - self.t_origin) / self.tau).exp()).powi(2) + self.g_inf.powi(2)).sqrt()
    }
}

fn log_add_exp(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    m + ((x - m).exp() + (y - m).exp()).ln()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct LogModel<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl LogModel<'_> {
    // parameters (ln A, ln τ, ln g_inf)
    fn eval(&self, p: &Vector3<f64>, xi: f64) -> (f64, Vector3<f64>) {
        let tau = p[1].exp();
        let zd = 2.0 * p[0] - 2.0 * xi / tau;
        let zp = 2.0 * p[2];
        let f = 0.5 * log_add_exp(zd, zp);
        let wu = sigmoid(zd - zp);
        (f, Vector3::new(wu, xi / tau * wu, 1.0 - wu))
    }

    fn ssr(&self, p: &Vector3<f64>) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .map(|(&xi, &yi)| (self.eval(p, xi).0 - yi).powi(2))
            .sum()
    }

    fn normal_equations(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for (&xi, &yi) in self.x.iter().zip(self.y) {
            let (f, j) = self.eval(p, xi);
            jtj += j * j.transpose();
            jtr += j * (f - yi);
        }
        (jtj, jtr)
    }
}

struct Bounds {
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Bounds {
    fn clamp(&self, p: Vector3<f64>) -> Vector3<f64> {
        p.zip_zip_map(&self.lo, &self.hi, |v, l, h| v.clamp(l, h))
    }
}

fn levenberg_marquardt(model: &LogModel, start: Vector3<f64>, bounds: &Bounds) -> Option<(Vector3<f64>, f64)> {
    let mut p = bounds.clamp(start);
    let mut ssr = model.ssr(&p);
    let mut lambda = 1e-3;
    for _ in 0..2000 {
        let (jtj, jtr) = model.normal_equations(&p);
        let mut a = jtj;
        for k in 0..3 {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
        }
        let Some(step) = a.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = bounds.clamp(p + step);
        let trial_ssr = model.ssr(&trial);
        if trial_ssr.is_finite() && trial_ssr <= ssr {
            let moved = (trial - p).abs().max();
            let gain = ssr - trial_ssr;
            p = trial;
            ssr = trial_ssr;
            lambda = (lambda / 3.0).max(1e-15);
            if moved < 1e-12 || gain <= 1e-15 * ssr || ssr < 1e-30 {
                return Some((p, ssr));
            }
        } else {
            lambda *= 4.0;
            if lambda > 1e14 {
                return Some((p, ssr));
            }
        }
    }
    ssr.is_finite().then_some((p, ssr))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn fallback_fit(curve: &GradientCurve) -> FlatteningFit {
    let g = curve.gradients();
    let t = curve.times();
    let plateau = median(&mut g[g.len() - 3..].to_vec());
    let idx = g
        .iter()
        .position(|&gi| gi * FALLBACK_PLATEAU_FRACTION <= plateau)
        .unwrap_or(g.len() - 1);
    FlatteningFit {
        t_flat: t[idx],
        t_flat_err: if idx > 0 { t[idx] - t[idx - 1] } else { 0.0 },
        g_inf: plateau,
        g_inf_err: f64::NAN,
        amplitude: g[0],
        tau: f64::NAN,
        t_origin: t[0],
        residual: f64::NAN,
        verdict: Verdict::Plateau,
        method: FitMethod::Fallback,
    }
}

/// Fits the decay-plus-plateau model to `ln g` and returns the crossover
/// time where the decaying part equals the plateau.
pub fn fit_flattening(curve: &GradientCurve) -> Result<FlatteningFit> {
    curve.validate()?;
    let n = curve.points.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InvalidArgument(format!(
            "flattening fit needs at least {MIN_FIT_POINTS} points, got {n}"
        )));
    }
    let t = curve.times();
    let g = curve.gradients();
    if g.iter().any(|&v| v <= 0.0) {
        return Ok(fallback_fit(curve));
    }
    let t0 = t[0];
    let x: Vec<f64> = t.iter().map(|ti| ti - t0).collect();
    let y: Vec<f64> = g.iter().map(|v| v.ln()).collect();
    let span = x[n - 1];
    let (ymin, ymax) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let bounds = Bounds {
        lo: Vector3::new(ymax - 40.0, (span * 1e-3).ln(), ymin - 30.0),
        hi: Vector3::new(ymax + 10.0, (span * 1e3).ln(), ymax + 1.0),
    };
    let model = LogModel { x: &x, y: &y };
    let tail = median(&mut y[n - 3..].to_vec());
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for c in [ymin, ymin - 10f64.ln(), tail, ymin - 5.0] {
        for frac in [0.05, 0.15, 0.4, 1.0] {
            let start = Vector3::new(y[0], (span * frac).ln(), c);
            if let Some((p, s)) = levenberg_marquardt(&model, start, &bounds) {
                if best.as_ref().is_none_or(|(_, bs)| s < *bs) {
                    best = Some((p, s));
                }
            }
        }
    }
    let Some((p, ssr)) = best else {
        return Ok(fallback_fit(curve));
    };

    let dof = (n - 3) as f64;
    let s2 = ssr / dof;
    let (jtj, _) = model.normal_equations(&p);
    let cov = jtj
        .try_inverse()
        .or_else(|| jtj.pseudo_inverse(1e-14).ok())
        .unwrap_or_else(|| Matrix3::from_element(f64::INFINITY))
        * s2;

    let (ln_a, tau, ln_g) = (p[0], p[1].exp(), p[2]);
    let raw_t_flat = t0 + tau * (ln_a - ln_g);
    let grad = Vector3::new(tau, tau * (ln_a - ln_g), -tau);
    let t_flat_var = (grad.transpose() * cov * grad)[(0, 0)];
    let t_flat = raw_t_flat.clamp(t0, t[n - 1]);
    let g_inf = ln_g.exp();
    let g_inf_err = g_inf * cov[(2, 2)].max(0.0).sqrt();
    let residual = s2.sqrt();

    let pure_decay_continues = (n - 2..n).all(|i| {
        let pure = ln_a - x[i] / tau;
        let tol = 2.0 * (curve.points[i].err / g[i]).max(residual).max(1e-9);
        (y[i] - pure).abs() <= tol
    });
    let verdict = if g_inf < 2.0 * g_inf_err || pure_decay_continues || raw_t_flat > t[n - 1] {
        Verdict::NoPlateau
    } else {
        Verdict::Plateau
    };
    Ok(FlatteningFit {
        t_flat,
        t_flat_err: t_flat_var.max(0.0).sqrt(),
        g_inf,
        g_inf_err,
        amplitude: ln_a.exp(),
        tau,
        t_origin: t0,
        residual,
        verdict,
        method: FitMethod::LeastSquares,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveT1 {
    pub t1_eff: f64,
    pub t1_eff_err: f64,
    pub p_threshold: f64,
}

/// `T1_eff = −t_flat / ln(1 − p)`: the time after which amplitude damping
/// has moved a fraction `p` of the excited population.
pub fn effective_t1(t_flat: f64, t_flat_err: f64, p_threshold: f64) -> Result<EffectiveT1> {
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return Err(Error::ProbabilityOutOfRange(p_threshold));
    }
    if !(t_flat > 0.0) {
        return Err(Error::InvalidArgument(format!("t_flat must be positive, got {t_flat}")));
    }
    let factor = -1.0 / (1.0 - p_threshold).ln();
    Ok(EffectiveT1 {
        t1_eff: t_flat * factor,
        t1_eff_err: t_flat_err.abs() * factor,
        p_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Percentile {
    pub percentile: f64,
    pub mean: f64,
    pub std: f64,
    /// `(T1, F(T1))` steps of the empirical CDF.
    pub cdf: Vec<(f64, f64)>,
}

pub fn t1_percentile(t1s: &[f64], t1_eff: f64) -> Result<T1Percentile> {
    if t1s.is_empty() {
        return Err(Error::InvalidArgument("empty T1 list".into()));
    }
    let mut sorted = t1s.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let std = if sorted.len() > 1 {
        (sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let below = sorted.iter().filter(|&&v| v <= t1_eff).count();
    Ok(T1Percentile {
        percentile: below as f64 / n,
        mean,
        std,
        cdf: sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, (i + 1) as f64 / n))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveT1Report {
    pub t_flat: f64,
    pub t_flat_err: f64,
    pub g_inf: f64,
    pub t1_eff: f64,
    pub t1_eff_err: f64,
    pub p_threshold: f64,
    pub percentile: Option<f64>,
    pub mean_t1: Option<f64>,
    pub verdict: Verdict,
    pub method: FitMethod,
}

impl EffectiveT1Report {
    pub fn build(fit: &FlatteningFit, p_threshold: f64, t1s: Option<&[f64]>) -> Result<Self> {
        let eff = effective_t1(fit.t_flat, fit.t_flat_err, p_threshold)?;
        let pct = t1s.map(|v| t1_percentile(v, eff.t1_eff)).transpose()?;
        Ok(Self {
            t_flat: fit.t_flat,
            t_flat_err: fit.t_flat_err,
            g_inf: fit.g_inf,
            t1_eff: eff.t1_eff,
            t1_eff_err: eff.t1_eff_err,
            p_threshold,
            percentile: pct.as_ref().map(|p| p.percentile),
            mean_t1: pct.as_ref().map(|p| p.mean),
            verdict: fit.verdict,
            method: fit.method,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdStats {
    pub mean_norm: f64,
    /// Sample variance of `∂_k C` pooled over components and points.
    pub variance: f64,
    pub mean_abs: f64,
    /// Sample variance of `|∂_k C|`.
    pub abs_variance: f64,
    pub n_points: usize,
}

/// Central differences along every coordinate at `n_points` uniform points.
pub fn finite_difference_gradient_stats<F>(cost_fn: F, m: usize, n_points: usize, step: f64, seed: u64) -> Result<FdStats>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(step > 0.0) || m == 0 || n_points == 0 {
        return Err(Error::InvalidArgument(
            "finite differences need step > 0, m >= 1 and n_points >= 1".into(),
        ));
    }
    let mut rng = rng_from_seed(derive_seed(seed, "fd-points", &[]));
    let points: Vec<Vec<f64>> = (0..n_points)
        .map(|_| (0..m).map(|_| rng.random_range(0.0..TAU)).collect())
        .collect();
    let grads = points
        .par_iter()
        .map(|p| central_gradient(&cost_fn, p, step))
        .collect::<Result<Vec<Vec<f64>>>>()?;

    let norms: Vec<f64> = grads.iter().map(|g| g.iter().map(|d| d * d).sum::<f64>().sqrt()).collect();
    let all: Vec<f64> = grads.into_iter().flatten().collect();
    let count = all.len() as f64;
    let mean = all.iter().sum::<f64>() / count;
    let mean_abs = all.iter().map(|d| d.abs()).sum::<f64>() / count;
    let denom = (count - 1.0).max(1.0);
    Ok(FdStats {
        mean_norm: norms.iter().sum::<f64>() / n_points as f64,
        variance: all.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / denom,
        mean_abs,
        abs_variance: all.iter().map(|d| (d.abs() - mean_abs).powi(2)).sum::<f64>() / denom,
        n_points,
    })
}

pub fn central_gradient<F>(cost_fn: &F, theta: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            work[k] = theta[k] + step;
            let plus = cost_fn(&work)?;
            work[k] = theta[k] - step;
            let minus = cost_fn(&work)?;
            work[k] = theta[k];
            Ok((plus - minus) / (2.0 * step))
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Eigenvalues `p^k (1−p)^{n−k}` with multiplicity `C(n, k)`, `k = 0..n`.
pub fn analytic_decay_spectrum(n: usize, p: f64) -> Result<Vec<(f64, u64)>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok((0..=n)
        .map(|k| (p.powi(k as i32) * (1.0 - p).powi((n - k) as i32), binomial(n, k)))
        .collect())
}

/// Expands `(eigenvalue, multiplicity)` pairs into a descending list.
pub fn expand_spectrum(levels: &[(f64, u64)]) -> Vec<f64> {
    let mut out: Vec<f64> = levels
        .iter()
        .flat_map(|&(v, m)| std::iter::repeat_n(v, m as usize))
        .collect();
    out.sort_by(|a, b| b.total_cmp(a));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub eigenvalues: Vec<f64>,
    pub bins: Vec<SpectralBin>,
    /// Eigenvalues below the histogram floor.
    pub zero_count: usize,
    pub max_eigenvalue: f64,
    pub effective_rank: f64,
}

const SPECTRUM_FLOOR: f64 = 1e-14;

pub fn spectral_profile(rho: &DensityMatrix, bins: usize) -> Result<SpectralProfile> {
    Ok(profile_from_eigenvalues(rho.eigen_spectrum()?, bins))
}

/// Log-binned histogram of the eigenvalues above `1e-14`; `exp(S_vN)` as
/// effective rank.
pub fn profile_from_eigenvalues(mut eigenvalues: Vec<f64>, bins: usize) -> SpectralProfile {
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let entropy: f64 = eigenvalues
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum();
    let kept: Vec<f64> = eigenvalues.iter().cloned().filter(|&l| l > SPECTRUM_FLOOR).collect();
    let zero_count = eigenvalues.len() - kept.len();
    let max_eigenvalue = eigenvalues.first().copied().unwrap_or(0.0);
    let mut hist = Vec::new();
    if let (Some(&hi), Some(&lo)) = (kept.first(), kept.last()) {
        if hi / lo < 1.0 + 1e-9 || bins <= 1 {
            hist.push(SpectralBin {
                lo,
                hi,
                count: kept.len(),
            });
        } else {
            let (llo, lhi) = (lo.ln(), hi.ln());
            let width = (lhi - llo) / bins as f64;
            hist = (0..bins)
                .map(|k| SpectralBin {
                    lo: (llo + k as f64 * width).exp(),
                    hi: (llo + (k + 1) as f64 * width).exp(),
                    count: 0,
                })
                .collect();
            for &l in &kept {
                let k = (((l.ln() - llo) / width) as usize).min(bins - 1);
                hist[k].count += 1;
            }
        }
    }
    SpectralProfile {
        eigenvalues,
        bins: hist,
        zero_count,
        max_eigenvalue,
        effective_rank: entropy.exp(),
    }
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::LengthMismatch {
            expected: a.len().max(2),
            got: b.len(),
        });
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}
