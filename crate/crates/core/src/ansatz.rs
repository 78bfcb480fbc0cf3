//! Ising-chain cost Hamiltonian, the QAOA circuit built from it, and the
//! hardware depth/runtime/gate-count models used to put simulated circuits
//! on a time axis.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::densmat::{DensityMatrix, QubitUnitary};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const COUPLING_VALUES: [f64; 8] = [2.0, -2.0, 1.2, -1.2, 0.8, -0.8, 0.4, -0.4];
pub const FIELD_VALUES: [f64; 8] = [0.8, 0.4, -0.4, 0.24, -0.24, 0.16, -0.16, -0.08];

/// `H_C = Σ (J_i/2) Z_i Z_{i+1} + Σ (h_i/2) Z_i` on an open chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsingHamiltonian {
    #[serde(rename = "n")]
    pub n_qubits: usize,
    #[serde(rename = "J")]
    pub couplings: Vec<f64>,
    #[serde(rename = "h")]
    pub fields: Vec<f64>,
    pub c0: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl IsingHamiltonian {
    pub fn new(couplings: Vec<f64>, fields: Vec<f64>) -> Result<Self> {
        let n = fields.len();
        if n < 2 {
            return Err(Error::InvalidArgument("Ising chain needs at least 2 sites".into()));
        }
        if couplings.len() != n - 1 {
            return Err(Error::LengthMismatch {
                expected: n - 1,
                got: couplings.len(),
            });
        }
        let c0 = normalization(&couplings, &fields);
        if c0 <= 0.0 {
            return Err(Error::InvalidArgument("all-zero Hamiltonian".into()));
        }
        Ok(Self {
            n_qubits: n,
            couplings,
            fields,
            c0,
            seed: None,
        })
    }

    /// Draws couplings and fields uniformly from the fixed value sets.
    pub fn sample(n_qubits: usize, seed: u64) -> Result<Self> {
        if n_qubits < 2 {
            return Err(Error::InvalidArgument("Ising chain needs at least 2 sites".into()));
        }
        let mut rng = rng_from_seed(seed);
        let couplings = (0..n_qubits - 1)
            .map(|_| COUPLING_VALUES[rng.random_range(0..COUPLING_VALUES.len())])
            .collect();
        let fields = (0..n_qubits)
            .map(|_| FIELD_VALUES[rng.random_range(0..FIELD_VALUES.len())])
            .collect();
        let mut h = Self::new(couplings, fields)?;
        h.seed = Some(seed);
        Ok(h)
    }

    /// Energy of computational-basis state `index` (bit i ↔ qubit i), with
    /// spin `s_i = 2 z_i - 1`.
    pub fn energy_of_index(&self, index: usize) -> f64 {
        let s = |i: usize| if index >> i & 1 == 1 { 1.0 } else { -1.0 };
        let zz: f64 = self
            .couplings
            .iter()
            .enumerate()
            .map(|(i, j)| 0.5 * j * s(i) * s(i + 1))
            .sum();
        let z: f64 = self.fields.iter().enumerate().map(|(i, h)| 0.5 * h * s(i)).sum();
        zz + z
    }

    /// Diagonal of `H_C` in the computational basis.
    pub fn energy_table(&self) -> Vec<f64> {
        (0..1usize << self.n_qubits).map(|i| self.energy_of_index(i)).collect()
    }

    /// `Σ|J|/2 + Σ|h|/2`, an upper bound on `|Tr(H_C ρ)|`.
    pub fn energy_bound(&self) -> f64 {
        0.5 * (self.couplings.iter().map(|x| x.abs()).sum::<f64>()
            + self.fields.iter().map(|x| x.abs()).sum::<f64>())
    }
}

/// `C0 = sqrt(Σ J² + Σ h²)`.
pub fn normalization(couplings: &[f64], fields: &[f64]) -> f64 {
    (couplings.iter().map(|x| x * x).sum::<f64>() + fields.iter().map(|x| x * x).sum::<f64>())
        .sqrt()
}

/// QAOA angles ordered `(θ_1^(1), θ_1^(2), …, θ_L^(1), θ_L^(2))`: mixing
/// angle first, then phase angle, per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "parameter vector length {} is not 2L",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..TAU).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "angle {bad} outside [0, 2π)"
            )));
        }
        Ok(Self { values })
    }

    /// Like [`ParameterVector::new`] but wraps angles into `[0, 2π)`.
    pub fn wrapped(values: Vec<f64>) -> Self {
        let values = values
            .into_iter()
            .map(|v| {
                let w = v.rem_euclid(TAU);
                if w >= TAU { 0.0 } else { w }
            })
            .collect();
        Self { values }
    }

    pub fn layers(&self) -> usize {
        self.values.len() / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mixing(&self, layer: usize) -> f64 {
        self.values[2 * layer]
    }

    pub fn phase(&self, layer: usize) -> f64 {
        self.values[2 * layer + 1]
    }
}

/// A gate list with uniform layer structure.
#[derive(Debug, Clone)]
pub struct Circuit {
    n_qubits: usize,
    layers: usize,
    gates: Vec<QubitUnitary>,
}

impl Circuit {
    /// `gates.len()` must split evenly into `layers` layers.
    pub fn from_layers(n_qubits: usize, gates: Vec<QubitUnitary>, layers: usize) -> Result<Self> {
        if layers == 0 && !gates.is_empty() || layers > 0 && gates.len() % layers != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} gates do not split into {layers} layers",
                gates.len()
            )));
        }
        Ok(Self {
            n_qubits,
            layers,
            gates,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn gates(&self) -> &[QubitUnitary] {
        &self.gates
    }

    pub fn layer_gates(&self) -> impl Iterator<Item = &[QubitUnitary]> {
        let per = if self.layers == 0 { 1 } else { self.gates.len() / self.layers };
        self.gates.chunks(per.max(1))
    }

    pub fn apply_noiseless(&self, rho: &mut DensityMatrix) -> Result<()> {
        for g in &self.gates {
            rho.apply_unitary(g)?;
        }
        Ok(())
    }

    /// Measurement populations of the noiseless circuit on `|+⟩^{⊗n}`,
    /// simulated on the state vector.
    pub fn noiseless_populations(&self) -> Result<Vec<f64>> {
        let d = 1usize << self.n_qubits;
        let mut psi = vec![Complex64::new((d as f64).sqrt().recip(), 0.0); d];
        for g in &self.gates {
            g.apply_to_amplitudes(self.n_qubits, &mut psi)?;
        }
        Ok(psi.iter().map(|a| a.norm_sqr()).collect())
    }
}

/// Per layer: `exp(−iθ^(2) J_i/2 · Z_i Z_{i+1})` along the ladder,
/// `exp(−iθ^(2) h_i/2 · s_i)` on every site, then `RX(θ^(1))` on every site.
///
/// The field term uses the measured spin `s_i = 2z_i − 1`, which is `−Z_i`,
/// so the circuit evolves under exactly the operator whose energy is sampled.
pub fn build_circuit(h: &IsingHamiltonian, theta: &ParameterVector) -> Circuit {
    let n = h.n_qubits;
    let mut gates = Vec::with_capacity(theta.layers() * (3 * n - 1));
    for l in 0..theta.layers() {
        let phase = theta.phase(l);
        for (i, j) in h.couplings.iter().enumerate() {
            gates.push(QubitUnitary::rzz(i, i + 1, 0.5 * j * phase));
        }
        for (i, f) in h.fields.iter().enumerate() {
            gates.push(QubitUnitary::rz(i, -0.5 * f * phase));
        }
        for i in 0..n {
            gates.push(QubitUnitary::rx(i, theta.mixing(l)));
        }
    }
    Circuit {
        n_qubits: n,
        layers: theta.layers(),
        gates,
    }
}

/// `Tr(H_C ρ)` from the diagonal of ρ.
pub fn exact_cost(rho: &DensityMatrix, h: &IsingHamiltonian) -> Result<f64> {
    if rho.n_qubits() != h.n_qubits {
        return Err(Error::LengthMismatch {
            expected: h.n_qubits,
            got: rho.n_qubits(),
        });
    }
    Ok(exact_cost_with_table(rho, &h.energy_table()))
}

pub fn exact_cost_with_table(rho: &DensityMatrix, energies: &[f64]) -> f64 {
    rho.diagonal().iter().zip(energies).map(|(p, e)| p * e).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    FalconLadder,
    FalconShort,
    Heron,
}

impl Platform {
    pub fn as_str(self) -> &'static str {
        match self {
            Platform::FalconLadder => "falcon_ladder",
            Platform::FalconShort => "falcon_short",
            Platform::Heron => "heron",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "falcon_ladder" | "falcon" => Ok(Platform::FalconLadder),
            "falcon_short" => Ok(Platform::FalconShort),
            "heron" | "fez" => Ok(Platform::Heron),
            other => Err(Error::UnknownPlatform(other.to_string())),
        }
    }
}

/// Linear depth and runtime models of a transpiled circuit.
///
/// `depth = a·N + b·L + c`; `runtime = per_qubit·N + per_layer·L + offset`
/// in microseconds (gates plus readout, without the inter-shot reset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub platform: Platform,
    pub depth_a: f64,
    pub depth_b: f64,
    pub depth_c: f64,
    pub runtime_per_qubit_us: f64,
    pub runtime_per_layer_us: f64,
    pub runtime_offset_us: f64,
    pub t_1q_us: f64,
    pub t_2q_us: f64,
    /// Native two-qubit gates per logical RZZ.
    pub two_qubit_per_rzz: usize,
}

impl TimingModel {
    pub fn for_platform(platform: Platform) -> Self {
        let (depth, runtime) = match platform {
            Platform::FalconLadder => ((11.1, 24.0, -29.6), (1.8, 3.3, 45.0)),
            Platform::FalconShort => ((0.0, 24.0, -6.0), (0.0, 2.8, 61.0)),
            Platform::Heron => ((7.3, 18.5, 1.0), (0.24, 0.61, 130.0)),
        };
        Self {
            platform,
            depth_a: depth.0,
            depth_b: depth.1,
            depth_c: depth.2,
            runtime_per_qubit_us: runtime.0,
            runtime_per_layer_us: runtime.1,
            runtime_offset_us: runtime.2,
            t_1q_us: 0.060,
            t_2q_us: 0.660,
            two_qubit_per_rzz: 2,
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Ok(Self::for_platform(tag.parse()?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_1q_us <= 0.0 || self.t_2q_us <= 0.0 || self.runtime_per_layer_us <= 0.0 {
            return Err(Error::Config(format!(
                "timing model for {} has non-positive durations",
                self.platform
            )));
        }
        Ok(())
    }

    /// Wall time attributed to one QAOA layer.
    pub fn layer_duration_us(&self) -> f64 {
        self.runtime_per_layer_us
    }
}

pub fn circuit_depth(n: usize, layers: usize, timing: &TimingModel) -> f64 {
    (timing.depth_a * n as f64 + timing.depth_b * layers as f64 + timing.depth_c).max(0.0)
}

pub fn circuit_runtime(n: usize, layers: usize, timing: &TimingModel) -> f64 {
    timing.runtime_per_qubit_us * n as f64
        + timing.runtime_per_layer_us * layers as f64
        + timing.runtime_offset_us
}

/// `(2(n-1)L, 13.5·n·L)`: native two-qubit gates exactly, single-qubit
/// gates approximately.
pub fn gate_counts(n: usize, layers: usize) -> (usize, f64) {
    (2 * n.saturating_sub(1) * layers, 13.5 * (n * layers) as f64)
}

/// Uniform random angles in `[0, 2π)`.
pub fn random_parameters<R: Rng + ?Sized>(rng: &mut R, layers: usize) -> ParameterVector {
    ParameterVector {
        values: (0..2 * layers).map(|_| rng.random_range(0.0..TAU)).collect(),
    }
}
