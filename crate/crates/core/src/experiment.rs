//! Configured experiment runs: gradient sweeps over circuit depth, file-based
//! ICLA, curve analysis, density-matrix spectra and the shot-noise floor.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    analytic_decay_spectrum, fit_flattening, CurvePoint, EffectiveT1Report, FlatteningFit, GradientCurve,
    SpectralProfile,
};
use crate::ansatz::{
    build_circuit, circuit_runtime, random_parameters, IsingHamiltonian, ParameterVector,
    Platform, TimingModel,
};
use crate::densmat::DensityMatrix;
use crate::error::{Error, Result};
use crate::icla::{landscape_size, run_icla, sample_landscape, IcResult, Landscape};
use crate::io;
use crate::noise::{
    apply_schedule, sample_coherences, CoherenceSample, NoiseKind, NoiseModel, Schedule, DEFAULT_T1_MEAN_US, DEFAULT_T1_STD_US,
    DEFAULT_T2_MEAN_US, DEFAULT_T2_STD_US,
};
use crate::sampler::{estimate_cost_from_populations, shot_noise_floor_with, CostEstimate, NoiseFloor};
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindSpec {
    #[default]
    None,
    Depolarizing,
    AmplitudeDamping,
    AdDephasing,
    DampingProbability,
}

/// Noise block of a config file. Coherence times are either listed per
/// qubit or drawn from normal distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKindSpec,
    #[serde(default)]
    pub schedule: Schedule,
    pub terminal_idle: Option<bool>,
    pub p: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(default = "default_t1_mean")]
    pub t1_mean: f64,
    #[serde(default = "default_t1_std")]
    pub t1_std: f64,
    #[serde(default = "default_t2_mean")]
    pub t2_mean: f64,
    #[serde(default = "default_t2_std")]
    pub t2_std: f64,
    pub t1: Option<Vec<f64>>,
    pub t2: Option<Vec<f64>>,
    pub coherence_seed: Option<u64>,
}

fn default_t1_mean() -> f64 {
    DEFAULT_T1_MEAN_US
}
fn default_t1_std() -> f64 {
    DEFAULT_T1_STD_US
}
fn default_t2_mean() -> f64 {
    DEFAULT_T2_MEAN_US
}
fn default_t2_std() -> f64 {
    DEFAULT_T2_STD_US
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            kind: NoiseKindSpec::None,
            schedule: Schedule::PerLayer,
            terminal_idle: None,
            p: None,
            gamma: None,
            t1_mean: DEFAULT_T1_MEAN_US,
            t1_std: DEFAULT_T1_STD_US,
            t2_mean: DEFAULT_T2_MEAN_US,
            t2_std: DEFAULT_T2_STD_US,
            t1: None,
            t2: None,
            coherence_seed: None,
        }
    }
}

impl NoiseSpec {
    fn coherences(&self, n: usize, master_seed: u64) -> Result<CoherenceSample> {
        match (&self.t1, &self.t2) {
            (Some(t1), t2) => {
                let t2 = t2.clone().unwrap_or_else(|| t1.iter().map(|v| 2.0 * v).collect());
                if t1.len() != n || t2.len() != n {
                    return Err(Error::Config(format!(
                        "noise.t1/noise.t2 must list {n} values, got {} and {}",
                        t1.len(),
                        t2.len()
                    )));
                }
                CoherenceSample::new(t1.clone(), t2)
            }
            (None, Some(_)) => Err(Error::Config("noise.t2 given without noise.t1".into())),
            (None, None) => sample_coherences(
                n,
                self.t1_mean,
                self.t1_std,
                self.t2_mean,
                self.t2_std,
                self.coherence_seed
                    .unwrap_or_else(|| derive_seed(master_seed, "coherences", &[n as u64])),
            ),
        }
    }

    pub fn to_model(&self, n: usize, master_seed: u64) -> Result<NoiseModel> {
        let need = |v: Option<f64>, key: &str| {
            v.ok_or_else(|| Error::Config(format!("noise.{key} is required for this noise kind")))
        };
        let mut model = match self.kind {
            NoiseKindSpec::None => NoiseModel::none(),
            NoiseKindSpec::Depolarizing => NoiseModel::depolarizing(need(self.p, "p")?, self.schedule),
            NoiseKindSpec::DampingProbability => {
                NoiseModel::damping_probability(need(self.gamma, "gamma")?, self.schedule)
            }
            NoiseKindSpec::AmplitudeDamping => {
                NoiseModel::amplitude_damping(self.coherences(n, master_seed)?, self.schedule)
            }
            NoiseKindSpec::AdDephasing => NoiseModel::ad_dephasing(self.coherences(n, master_seed)?, self.schedule),
        };
        if let Some(idle) = self.terminal_idle {
            model.terminal_idle = idle;
        }
        model.validate(n)?;
        Ok(model)
    }
}

fn default_platform() -> String {
    Platform::FalconLadder.as_str().into()
}
fn default_shots() -> usize {
    16384
}
fn default_cap() -> usize {
    200
}
fn default_factor() -> usize {
    10
}
fn default_walks() -> usize {
    crate::icla::DEFAULT_N_WALKS
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_param_sets() -> usize {
    1
}
fn default_landscapes() -> usize {
    crate::sampler::DEFAULT_FLOOR_LANDSCAPES
}
fn default_bins() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_qubits: usize,
    pub layers: Vec<usize>,
    #[serde(default = "default_platform")]
    pub platform: String,
    #[serde(default = "default_shots")]
    pub shots: usize,
    /// Use `Tr(H_C ρ)` instead of shot estimates.
    #[serde(default)]
    pub exact_cost: bool,
    #[serde(default = "default_cap")]
    pub landscape_cap: usize,
    #[serde(default = "default_factor")]
    pub landscape_factor: usize,
    #[serde(default = "default_walks")]
    pub n_walks: usize,
    pub seed: u64,
    pub hamiltonian_seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub tag: Option<String>,
    /// Random parameter vectors per depth for `spectrum`.
    #[serde(default = "default_param_sets")]
    pub param_sets: usize,
    /// Landscapes averaged by `noise-floor`.
    #[serde(default = "default_landscapes")]
    pub floor_landscapes: usize,
    #[serde(default = "default_bins")]
    pub spectrum_bins: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl ExperimentConfig {
    /// Defaults for everything except the required keys.
    pub fn new(n_qubits: usize, layers: Vec<usize>, seed: u64) -> Self {
        Self {
            n_qubits,
            layers,
            platform: default_platform(),
            shots: default_shots(),
            exact_cost: false,
            landscape_cap: default_cap(),
            landscape_factor: default_factor(),
            n_walks: default_walks(),
            seed,
            hamiltonian_seed: None,
            output_dir: default_output(),
            tag: None,
            param_sets: default_param_sets(),
            floor_landscapes: default_landscapes(),
            spectrum_bins: default_bins(),
            noise: NoiseSpec::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads an optional TOML file and applies `key = value` overrides, where
    /// keys may be dotted (`noise.p`) and values are TOML literals (bare
    /// words are taken as strings).
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse()
                    .map_err(|e: toml::de::Error| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            let value = parse_literal(raw);
            let mut parts: Vec<&str> = key.split('.').collect();
            let last = parts.pop().ok_or_else(|| Error::Config("empty override key".into()))?;
            let mut node = &mut table;
            for part in parts {
                node = node
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("'{part}' is not a table")))?;
            }
            node.insert(last.to_string(), value);
        }
        if !table.contains_key("seed") {
            return Err(Error::Config("a master seed is required (seed = <integer>)".into()));
        }
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(Error::Config("n_qubits must be at least 2".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config("layers must not be empty".into()));
        }
        if self.layers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("layers must be strictly increasing".into()));
        }
        if !self.exact_cost && self.shots == 0 {
            return Err(Error::Config("shots must be positive unless exact_cost is set".into()));
        }
        if self.n_walks == 0 || self.landscape_factor == 0 || self.landscape_cap < 3 {
            return Err(Error::Config(
                "n_walks and landscape_factor must be positive, landscape_cap at least 3".into(),
            ));
        }
        self.timing()?;
        Ok(())
    }

    pub fn timing(&self) -> Result<TimingModel> {
        TimingModel::from_tag(&self.platform).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn hamiltonian(&self) -> Result<IsingHamiltonian> {
        let seed = self
            .hamiltonian_seed
            .unwrap_or_else(|| derive_seed(self.seed, "hamiltonian", &[self.n_qubits as u64]));
        IsingHamiltonian::sample(self.n_qubits, seed)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        self.noise.to_model(self.n_qubits, self.seed)
    }

    pub fn run_tag(&self) -> Result<String> {
        Ok(match &self.tag {
            Some(t) => t.clone(),
            None => format!("{}_n{}", self.noise_model()?.tag(), self.n_qubits),
        })
    }

    pub fn landscape_points(&self, layers: usize) -> usize {
        landscape_size(2 * layers, self.landscape_cap, self.landscape_factor)
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Everything needed to evaluate the cost at a parameter vector.
pub struct CostContext {
    pub hamiltonian: IsingHamiltonian,
    pub energies: Vec<f64>,
    pub noise: NoiseModel,
    pub timing: TimingModel,
    pub shots: Option<usize>,
}

impl CostContext {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let hamiltonian = cfg.hamiltonian()?;
        Ok(Self {
            energies: hamiltonian.energy_table(),
            noise: cfg.noise_model()?,
            timing: cfg.timing()?,
            shots: (!cfg.exact_cost).then_some(cfg.shots),
            hamiltonian,
        })
    }

    pub fn final_state(&self, theta: &ParameterVector) -> Result<DensityMatrix> {
        let mut rho = DensityMatrix::plus_state(self.hamiltonian.n_qubits)?;
        let circuit = build_circuit(&self.hamiltonian, theta);
        apply_schedule(&mut rho, &circuit, &self.noise, &self.timing)?;
        Ok(rho)
    }

    /// Cost at `theta`; `shot_seed` keys the measurement stream.
    pub fn evaluate(&self, theta: &ParameterVector, shot_seed: u64) -> Result<CostEstimate> {
        let populations = self.populations(theta)?;
        match self.shots {
            Some(r) => estimate_cost_from_populations(
                self.hamiltonian.n_qubits,
                populations,
                &self.energies,
                r,
                shot_seed,
            ),
            None => Ok(CostEstimate::exact(
                populations.iter().zip(&self.energies).map(|(p, e)| p * e).sum(),
            )),
        }
    }

    /// Final measurement populations. Noiseless circuits stay pure, so they
    /// run on the state vector.
    pub fn populations(&self, theta: &ParameterVector) -> Result<Vec<f64>> {
        if matches!(self.noise.kind, NoiseKind::None) {
            build_circuit(&self.hamiltonian, theta).noiseless_populations()
        } else {
            Ok(self.final_state(theta)?.diagonal())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub layers: usize,
    pub parameters: usize,
    pub landscape_points: usize,
    pub t_cir_us: f64,
    pub gradient: f64,
    pub bootstrap_std: f64,
    pub epsilon_max: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub curve: GradientCurve,
    pub landscapes: Vec<Landscape>,
    pub results: Vec<IcResult>,
    pub hamiltonian: IsingHamiltonian,
    pub noise: NoiseModel,
}

impl SweepOutcome {
    pub fn reports(&self) -> Vec<LayerReport> {
        self.curve
            .points
            .iter()
            .zip(&self.results)
            .zip(&self.landscapes)
            .map(|((p, r), ls)| LayerReport {
                layers: p.layers,
                parameters: ls.m,
                landscape_points: ls.len(),
                t_cir_us: p.t_cir_us,
                gradient: r.gradient_norm,
                bootstrap_std: r.bootstrap_std,
                epsilon_max: r.epsilon_max,
            })
            .collect()
    }
}

/// Landscape at depth `layers` under the configured noise.
pub fn layer_landscape(cfg: &ExperimentConfig, ctx: &CostContext, layers: usize) -> Result<Landscape> {
    let l = layers as u64;
    let landscape_seed = derive_seed(cfg.seed, "landscape", &[l]);
    let mut ls = sample_landscape(
        |i, theta| {
            let theta = ParameterVector::new(theta.to_vec())?;
            ctx.evaluate(&theta, derive_seed(cfg.seed, "shots", &[l, i as u64]))
        },
        2 * layers,
        cfg.landscape_points(layers),
        landscape_seed,
    )
    .map_err(|e| Error::Sweep {
        layers,
        source: Box::new(e),
    })?;
    ls.meta.n_qubits = Some(cfg.n_qubits);
    ls.meta.layers = Some(layers);
    ls.meta.noise = Some(ctx.noise.tag());
    ls.meta.shots = ctx.shots;
    ls.meta.c0 = Some(ctx.hamiltonian.c0);
    Ok(ls)
}

pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    if cfg.layers.contains(&0) {
        return Err(Error::Config("a sweep needs L >= 1 at every point".into()));
    }
    let ctx = CostContext::from_config(cfg)?;
    let mut points = Vec::with_capacity(cfg.layers.len());
    let mut landscapes = Vec::with_capacity(cfg.layers.len());
    let mut results = Vec::with_capacity(cfg.layers.len());
    for &layers in &cfg.layers {
        let ls = layer_landscape(cfg, &ctx, layers)?;
        let res = run_icla(&ls, cfg.n_walks, derive_seed(cfg.seed, "walks", &[layers as u64])).map_err(|e| {
            Error::Sweep {
                layers,
                source: Box::new(e),
            }
        })?;
        points.push(CurvePoint {
            t_cir_us: circuit_runtime(cfg.n_qubits, layers, &ctx.timing),
            gradient: res.gradient_norm,
            err: res.bootstrap_std,
            layers,
        });
        landscapes.push(ls);
        results.push(res);
    }
    let curve = GradientCurve::new(points, cfg.n_qubits, &ctx.noise.tag(), ctx.timing.platform.as_str())?;
    Ok(SweepOutcome {
        curve,
        landscapes,
        results,
        hamiltonian: ctx.hamiltonian,
        noise: ctx.noise,
    })
}

#[derive(Serialize)]
struct SweepReport<'a> {
    config: &'a ExperimentConfig,
    noise_tag: String,
    c0: f64,
    layers: Vec<LayerReport>,
}

/// Runs the sweep and writes `sweep_<tag>/{curve.csv, hamiltonian.json,
/// report.json, landscapes/L<k>.csv}`. Returns the sweep directory.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(PathBuf, SweepOutcome)> {
    let out = run_sweep(cfg)?;
    let dir = cfg.output_dir.join(format!("sweep_{}", cfg.run_tag()?));
    io::write_curve(&dir.join("curve.csv"), &out.curve)?;
    io::write_json(&dir.join("hamiltonian.json"), &out.hamiltonian)?;
    for ls in &out.landscapes {
        let l = ls.meta.layers.unwrap_or(ls.m / 2);
        io::write_landscape(&dir.join("landscapes").join(format!("L{l}.csv")), ls)?;
    }
    io::write_json(
        &dir.join("report.json"),
        &SweepReport {
            config: cfg,
            noise_tag: out.noise.tag(),
            c0: out.hamiltonian.c0,
            layers: out.reports(),
        },
    )?;
    Ok((dir, out))
}

/// ICLA on a landscape file, optionally truncated to its first `max_points`.
pub fn cmd_icla(path: &Path, n_walks: usize, seed: u64, max_points: Option<usize>) -> Result<IcResult> {
    let mut ls = io::read_landscape(path)?;
    if let Some(k) = max_points {
        if k < 3 {
            return Err(Error::Config("max_points must be at least 3".into()));
        }
        let k = k.min(ls.len());
        ls.points.truncate(k);
        ls.costs.truncate(k);
        ls.cost_errors.truncate(k);
    }
    run_icla(&ls, n_walks, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutput {
    pub report: EffectiveT1Report,
    pub fit: FlatteningFit,
}

pub fn cmd_analyze(curve_path: &Path, p_threshold: f64, t1_path: Option<&Path>) -> Result<AnalysisOutput> {
    let curve = io::read_curve(curve_path)?;
    let fit = fit_flattening(&curve)?;
    let t1s = t1_path.map(io::read_t1_list).transpose()?;
    let report = EffectiveT1Report::build(&fit, p_threshold, t1s.as_deref())?;
    Ok(AnalysisOutput { report, fit })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEntry {
    pub layers: usize,
    pub set: usize,
    pub max_eigenvalue: f64,
    pub effective_rank: f64,
    pub zero_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub noise_tag: String,
    pub reference_p: Option<f64>,
    pub entries: Vec<SpectrumEntry>,
    #[serde(skip)]
    pub profiles: Vec<SpectralProfile>,
}

/// Final-state eigenvalue spectra for each configured depth. Parameter
/// vectors come from `theta_file` (rows whose length matches `2L`) or are
/// drawn uniformly, `param_sets` per depth.
pub fn run_spectrum(cfg: &ExperimentConfig, theta_file: Option<&Path>) -> Result<SpectrumSummary> {
    cfg.validate()?;
    let ctx = CostContext::from_config(cfg)?;
    let supplied = theta_file.map(io::read_parameter_sets).transpose()?;
    let mut entries = Vec::new();
    let mut profiles = Vec::new();
    for &layers in &cfg.layers {
        let sets: Vec<ParameterVector> = match &supplied {
            Some(rows) => rows
                .iter()
                .filter(|r| r.len() == 2 * layers)
                .map(|r| ParameterVector::new(r.clone()))
                .collect::<Result<_>>()?,
            None => {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, "spectrum-theta", &[layers as u64]));
                (0..cfg.param_sets).map(|_| random_parameters(&mut rng, layers)).collect()
            }
        };
        for (k, theta) in sets.iter().enumerate() {
            let rho = ctx.final_state(theta)?;
            let profile = crate::analysis::spectral_profile(&rho, cfg.spectrum_bins)?;
            entries.push(SpectrumEntry {
                layers,
                set: k,
                max_eigenvalue: profile.max_eigenvalue,
                effective_rank: profile.effective_rank,
                zero_count: profile.zero_count,
            });
            profiles.push(profile);
        }
    }
    let reference_p = match cfg.noise.kind {
        NoiseKindSpec::DampingProbability => cfg.noise.gamma,
        _ => None,
    };
    Ok(SpectrumSummary {
        noise_tag: ctx.noise.tag(),
        reference_p,
        entries,
        profiles,
    })
}

pub fn cmd_spectrum(cfg: &ExperimentConfig, theta_file: Option<&Path>) -> Result<(PathBuf, SpectrumSummary)> {
    let summary = run_spectrum(cfg, theta_file)?;
    let dir = cfg.output_dir.join(format!("spectrum_{}", cfg.run_tag()?));
    for (e, p) in summary.entries.iter().zip(&summary.profiles) {
        let stem = format!("L{}_s{}", e.layers, e.set);
        io::write_spectrum(&dir.join(format!("{stem}_eigen.csv")), &p.eigenvalues)?;
        io::write_spectral_histogram(&dir.join(format!("{stem}_hist.csv")), &p.bins)?;
    }
    if let Some(p) = summary.reference_p {
        io::write_analytic_spectrum(&dir.join("analytic.csv"), &analytic_decay_spectrum(cfg.n_qubits, p)?)?;
    }
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok((dir, summary))
}

#[derive(Debug, Clone, Serialize)]
pub struct FloorEntry {
    pub layers: usize,
    pub floor: NoiseFloor,
    pub gradient: Option<f64>,
    /// Floor below half the gradient.
    pub separated: Option<bool>,
}

/// Shot-noise floor at every configured depth, compared against a curve
/// when one is given.
pub fn run_noise_floor(cfg: &ExperimentConfig, curve: Option<&GradientCurve>) -> Result<Vec<FloorEntry>> {
    cfg.validate()?;
    if cfg.exact_cost {
        return Err(Error::Config("the shot-noise floor needs a finite shot count".into()));
    }
    let h = cfg.hamiltonian()?;
    cfg.layers
        .iter()
        .map(|&layers| {
            let floor = shot_noise_floor_with(
                &h,
                2 * layers,
                cfg.landscape_points(layers),
                cfg.shots,
                cfg.floor_landscapes,
                cfg.n_walks,
                derive_seed(cfg.seed, "floor", &[layers as u64]),
            )?;
            let gradient = curve.and_then(|c| c.points.iter().find(|p| p.layers == layers).map(|p| p.gradient));
            Ok(FloorEntry {
                layers,
                separated: gradient.map(|g| floor.mean < g / 2.0),
                floor,
                gradient,
            })
        })
        .collect()
}

pub fn cmd_noise_floor(cfg: &ExperimentConfig, curve_path: Option<&Path>) -> Result<(PathBuf, Vec<FloorEntry>)> {
    let curve = curve_path.map(io::read_curve).transpose()?;
    let entries = run_noise_floor(cfg, curve.as_ref())?;
    let path = cfg
        .output_dir
        .join(format!("noise_floor_{}_R{}.json", cfg.run_tag()?, cfg.shots));
    io::write_json(&path, &entries)?;
    Ok((path, entries))
}
