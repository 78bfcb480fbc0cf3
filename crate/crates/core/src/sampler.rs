//! Shot-based measurement: bitstring sampling from the diagonal of ρ, per-shot
//! Ising energies, cost estimates, and the shot-noise floor of the
//! gradient estimator.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::IsingHamiltonian;
use crate::densmat::DensityMatrix;
use crate::error::{Error, Result};
use crate::icla::{landscape_size, run_icla, sample_landscape, DEFAULT_N_WALKS};
use crate::seed::{derive_seed, rng_from_seed};

const NEGATIVE_POPULATION_TOL: f64 = 1e-9;
const DRIFT_TOL: f64 = 1e-12;

pub const DEFAULT_FLOOR_LANDSCAPES: usize = 20;
pub const SPECTRUM_RANGE_C0: f64 = 3.0;

/// Measurement outcomes stored as basis indices (bit i ↔ qubit i).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotBatch {
    pub n_qubits: usize,
    pub outcomes: Vec<usize>,
    pub seed: u64,
}

impl ShotBatch {
    pub fn shots(&self) -> usize {
        self.outcomes.len()
    }

    /// Bit vector of shot `r`, qubit 0 first.
    pub fn bits(&self, r: usize) -> Vec<u8> {
        let z = self.outcomes[r];
        (0..self.n_qubits).map(|i| (z >> i & 1) as u8).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub shots: usize,
}

impl CostEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            mean: value,
            std_error: 0.0,
            shots: 0,
        }
    }

    fn from_samples(values: impl Iterator<Item = f64>) -> Self {
        // Welford
        let (mut n, mut mean, mut m2) = (0usize, 0.0f64, 0.0f64);
        for x in values {
            n += 1;
            let delta = x - mean;
            mean += delta / n as f64;
            m2 += delta * (x - mean);
        }
        let std_error = if n > 1 {
            (m2 / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            shots: n,
        }
    }
}

/// Outcome probabilities from the diagonal, with tiny negative values
/// clamped and drift renormalized.
pub fn outcome_probabilities(rho: &DensityMatrix) -> Result<Vec<f64>> {
    normalize_populations(rho.diagonal())
}

/// Rejects negative or non-finite populations beyond round-off, clamps the
/// rest and renormalizes if the total drifted.
pub fn normalize_populations(mut p: Vec<f64>) -> Result<Vec<f64>> {
    if let Some((i, &v)) = p
        .iter()
        .enumerate()
        .find(|(_, &v)| v < -NEGATIVE_POPULATION_TOL || !v.is_finite())
    {
        return Err(Error::StateCorruption(format!(
            "population of outcome {i} is {v:.3e}"
        )));
    }
    p.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > DRIFT_TOL {
        p.iter_mut().for_each(|v| *v /= total);
    }
    Ok(p)
}

pub fn sample_bitstrings(rho: &DensityMatrix, shots: usize, seed: u64) -> Result<ShotBatch> {
    sample_from_populations(rho.n_qubits(), rho.diagonal(), shots, seed)
}

/// Draws `shots` outcomes from computational-basis populations.
pub fn sample_from_populations(
    n_qubits: usize,
    populations: Vec<f64>,
    shots: usize,
    seed: u64,
) -> Result<ShotBatch> {
    if shots == 0 {
        return Err(Error::InvalidArgument("need at least one shot".into()));
    }
    if populations.len() != 1usize << n_qubits {
        return Err(Error::LengthMismatch {
            expected: 1usize << n_qubits,
            got: populations.len(),
        });
    }
    let p = normalize_populations(populations)?;
    let dist = WeightedIndex::new(&p)
        .map_err(|e| Error::StateCorruption(format!("cannot sample populations: {e}")))?;
    let mut rng = rng_from_seed(seed);
    Ok(ShotBatch {
        n_qubits,
        outcomes: (0..shots).map(|_| dist.sample(&mut rng)).collect(),
        seed,
    })
}

/// `Σ (J/2) s_i s_{i+1} + Σ (h/2) s_i` with `s_i = 2 z_i - 1`.
pub fn shot_energy(z: &[u8], h: &IsingHamiltonian) -> Result<f64> {
    if z.len() != h.n_qubits {
        return Err(Error::LengthMismatch {
            expected: h.n_qubits,
            got: z.len(),
        });
    }
    let s: Vec<f64> = z.iter().map(|&b| 2.0 * f64::from(b) - 1.0).collect();
    let zz: f64 = h
        .couplings
        .iter()
        .enumerate()
        .map(|(i, j)| 0.5 * j * s[i] * s[i + 1])
        .sum();
    let z1: f64 = h.fields.iter().zip(&s).map(|(f, si)| 0.5 * f * si).sum();
    Ok(zz + z1)
}

pub fn estimate_cost(rho: &DensityMatrix, h: &IsingHamiltonian, shots: usize, seed: u64) -> Result<CostEstimate> {
    if rho.n_qubits() != h.n_qubits {
        return Err(Error::LengthMismatch {
            expected: h.n_qubits,
            got: rho.n_qubits(),
        });
    }
    estimate_cost_with_table(rho, &h.energy_table(), shots, seed)
}

/// Same as [`estimate_cost`] with a precomputed energy per basis index.
pub fn estimate_cost_with_table(
    rho: &DensityMatrix,
    energies: &[f64],
    shots: usize,
    seed: u64,
) -> Result<CostEstimate> {
    estimate_cost_from_populations(rho.n_qubits(), rho.diagonal(), energies, shots, seed)
}

pub fn estimate_cost_from_populations(
    n_qubits: usize,
    populations: Vec<f64>,
    energies: &[f64],
    shots: usize,
    seed: u64,
) -> Result<CostEstimate> {
    let batch = sample_from_populations(n_qubits, populations, shots, seed)?;
    Ok(CostEstimate::from_samples(
        batch.outcomes.iter().map(|&z| energies[z]),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
    /// Samples outside `[lo, hi]`.
    pub outside: usize,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let mut counts = vec![0usize; bins];
        let mut outside = 0;
        let width = (hi - lo) / bins as f64;
        for &v in values {
            if v < lo || v > hi || !v.is_finite() {
                outside += 1;
                continue;
            }
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self {
            lo,
            hi,
            counts,
            outside,
        }
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        let width = (self.hi - self.lo) / self.counts.len() as f64;
        self.lo + (k as f64 + 0.5) * width
    }

    pub fn occupied_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSpectrum {
    pub sorted: Vec<f64>,
    pub histogram: Histogram,
}

/// Sorted per-shot energies and a fixed-bin histogram over `[-3·C0, 3·C0]`.
pub fn cost_spectrum(batch: &ShotBatch, h: &IsingHamiltonian, bins: usize) -> Result<CostSpectrum> {
    if batch.outcomes.is_empty() {
        return Err(Error::InvalidArgument("empty shot batch".into()));
    }
    if batch.n_qubits != h.n_qubits {
        return Err(Error::LengthMismatch {
            expected: h.n_qubits,
            got: batch.n_qubits,
        });
    }
    let mut sorted: Vec<f64> = batch.outcomes.iter().map(|&z| h.energy_of_index(z)).collect();
    sorted.sort_by(f64::total_cmp);
    let span = SPECTRUM_RANGE_C0 * h.c0;
    let histogram = Histogram::build(&sorted, -span, span, bins);
    Ok(CostSpectrum { sorted, histogram })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFloor {
    /// Mean C0-normalized gradient estimate over the synthetic landscapes.
    pub mean: f64,
    pub std: f64,
    pub per_landscape: Vec<f64>,
    pub m: usize,
    pub landscape_points: usize,
    pub shots: usize,
}

/// Gradient estimate produced by pure shot noise: every landscape point's
/// cost is the mean of `shots` energies of uniformly random bitstrings,
/// i.e. a measurement of the maximally mixed state.
pub fn shot_noise_floor(
    h: &IsingHamiltonian,
    m: usize,
    shots: usize,
    n_landscapes: usize,
    seed: u64,
) -> Result<NoiseFloor> {
    shot_noise_floor_with(h, m, landscape_size(m, 200, 10), shots, n_landscapes, DEFAULT_N_WALKS, seed)
}

pub fn shot_noise_floor_with(
    h: &IsingHamiltonian,
    m: usize,
    landscape_points: usize,
    shots: usize,
    n_landscapes: usize,
    n_walks: usize,
    seed: u64,
) -> Result<NoiseFloor> {
    if m < 2 || shots == 0 || n_landscapes == 0 {
        return Err(Error::InvalidArgument(
            "noise floor needs m >= 2, shots >= 1 and at least one landscape".into(),
        ));
    }
    let energies = h.energy_table();
    let mask = (1usize << h.n_qubits) - 1;
    let per_landscape = (0..n_landscapes)
        .map(|k| {
            let ls_seed = derive_seed(seed, "floor-landscape", &[k as u64]);
            let mut ls = sample_landscape(
                |i, _theta| {
                    let mut rng = rng_from_seed(derive_seed(ls_seed, "floor-point", &[i as u64]));
                    Ok(CostEstimate::from_samples(
                        (0..shots).map(|_| energies[rng.next_u64() as usize & mask]),
                    ))
                },
                m,
                landscape_points,
                ls_seed,
            )?;
            ls.meta.c0 = Some(h.c0);
            let res = run_icla(&ls, n_walks, derive_seed(ls_seed, "floor-walks", &[]))?;
            Ok(res.gradient_norm)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = per_landscape.len() as f64;
    let mean = per_landscape.iter().sum::<f64>() / n;
    let std = if per_landscape.len() > 1 {
        (per_landscape.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(NoiseFloor {
        mean,
        std,
        per_landscape,
        m,
        landscape_points,
        shots,
    })
}

/// Parallel cost estimates for many states, ordered like the input.
pub fn estimate_many(
    states: &[DensityMatrix],
    h: &IsingHamiltonian,
    shots: usize,
    master_seed: u64,
) -> Result<Vec<CostEstimate>> {
    let table = h.energy_table();
    states
        .par_iter()
        .enumerate()
        .map(|(i, rho)| {
            estimate_cost_with_table(rho, &table, shots, derive_seed(master_seed, "shots", &[i as u64]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_circuit, exact_cost, random_parameters};

    fn chain() -> IsingHamiltonian {
        IsingHamiltonian::new(vec![2.0], vec![0.8, -0.4]).unwrap()
    }

    #[test]
    fn basis_state_always_yields_its_bits() {
        // |01⟩ with qubit 0 = 1, qubit 1 = 0 → index 1
        let rho = DensityMatrix::basis_state(2, 1).unwrap();
        let batch = sample_bitstrings(&rho, 200, 4).unwrap();
        assert!((0..batch.shots()).all(|r| batch.bits(r) == vec![1, 0]));
    }

    #[test]
    fn plus_state_is_fair() {
        let rho = DensityMatrix::plus_state(1).unwrap();
        let batch = sample_bitstrings(&rho, 100_000, 12).unwrap();
        let p0 = batch.outcomes.iter().filter(|&&z| z == 0).count() as f64 / 1e5;
        assert!((p0 - 0.5).abs() <= 0.005, "{p0}");
    }

    #[test]
    fn mixed_three_qubits_binomial_bounds() {
        let r = 80_000usize;
        let rho = DensityMatrix::maximally_mixed(3).unwrap();
        let batch = sample_bitstrings(&rho, r, 5).unwrap();
        let tol = 3.0 * (0.125f64 * 0.875 / r as f64).sqrt();
        for k in 0..8 {
            let f = batch.outcomes.iter().filter(|&&z| z == k).count() as f64 / r as f64;
            assert!((f - 0.125).abs() <= tol, "outcome {k}: {f}");
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let h = IsingHamiltonian::sample(3, 2).unwrap();
        let mut rho = DensityMatrix::plus_state(3).unwrap();
        let mut rng = rng_from_seed(1);
        build_circuit(&h, &random_parameters(&mut rng, 2))
            .apply_noiseless(&mut rho)
            .unwrap();
        assert_eq!(
            sample_bitstrings(&rho, 500, 77).unwrap(),
            sample_bitstrings(&rho, 500, 77).unwrap()
        );
        assert!(sample_bitstrings(&rho, 0, 1).is_err());
    }

    #[test]
    fn shot_energy_examples() {
        let h = chain();
        assert!((shot_energy(&[0, 0], &h).unwrap() - 0.8).abs() < 1e-15);
        assert!((shot_energy(&[1, 0], &h).unwrap() + 0.4).abs() < 1e-15);
        let big = IsingHamiltonian::sample(5, 3).unwrap();
        let want = (big.couplings.iter().sum::<f64>() - big.fields.iter().sum::<f64>()) / 2.0;
        assert!((shot_energy(&[0; 5], &big).unwrap() - want).abs() < 1e-12);
        assert!(shot_energy(&[0, 1, 0], &h).is_err());
        for idx in 0..4 {
            let bits: Vec<u8> = (0..2).map(|i| (idx >> i & 1) as u8).collect();
            assert_eq!(shot_energy(&bits, &h).unwrap(), h.energy_of_index(idx));
        }
    }

    #[test]
    fn basis_state_estimate_is_exact() {
        let h = chain();
        let rho = DensityMatrix::basis_state(2, 2).unwrap();
        let est = estimate_cost(&rho, &h, 1000, 3).unwrap();
        assert_eq!(est.mean, h.energy_of_index(2));
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn plus_state_estimate_is_centered() {
        let h = IsingHamiltonian::sample(4, 8).unwrap();
        let rho = DensityMatrix::plus_state(4).unwrap();
        for seed in 0..5 {
            let est = estimate_cost(&rho, &h, 4096, seed).unwrap();
            assert!(est.mean.abs() <= 4.0 * est.std_error);
        }
    }

    #[test]
    fn estimate_matches_exact_cost() {
        let h = IsingHamiltonian::sample(3, 14).unwrap();
        let mut rho = DensityMatrix::plus_state(3).unwrap();
        let mut rng = rng_from_seed(2);
        build_circuit(&h, &random_parameters(&mut rng, 1))
            .apply_noiseless(&mut rho)
            .unwrap();
        let exact = exact_cost(&rho, &h).unwrap();
        let est = estimate_cost(&rho, &h, 1 << 20, 99).unwrap();
        assert!((est.mean - exact).abs() <= 4.0 * est.std_error);
    }

    #[test]
    fn energies_bracketed_by_brute_force_extremes() {
        let h = IsingHamiltonian::sample(6, 4).unwrap();
        let table = h.energy_table();
        let lo = table.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = table.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rho = DensityMatrix::plus_state(6).unwrap();
        let batch = sample_bitstrings(&rho, 2000, 1).unwrap();
        for r in 0..batch.shots() {
            let e = shot_energy(&batch.bits(r), &h).unwrap();
            assert!(e >= lo && e <= hi);
        }
    }

    #[test]
    fn cost_spectrum_shapes() {
        let h = IsingHamiltonian::sample(4, 5).unwrap();
        let single = ShotBatch {
            n_qubits: 4,
            outcomes: vec![3],
            seed: 0,
        };
        assert_eq!(cost_spectrum(&single, &h, 30).unwrap().sorted.len(), 1);

        let basis = sample_bitstrings(&DensityMatrix::basis_state(4, 6).unwrap(), 300, 1).unwrap();
        assert_eq!(cost_spectrum(&basis, &h, 30).unwrap().histogram.occupied_bins(), 1);

        let mixed = sample_bitstrings(&DensityMatrix::maximally_mixed(4).unwrap(), 50_000, 2).unwrap();
        let spec = cost_spectrum(&mixed, &h, 30).unwrap();
        let mean = spec.sorted.iter().sum::<f64>() / spec.sorted.len() as f64;
        let var = spec.sorted.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / spec.sorted.len() as f64;
        assert!(mean.abs() < 0.05 * h.c0);
        // uniform spins: Var = Σ J²/4 + Σ h²/4 = C0²/4
        assert!((var.sqrt() - h.c0 / 2.0).abs() < 0.02 * h.c0);
        assert!(spec.sorted.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(spec.histogram.outside, 0);
    }

    #[test]
    fn floor_vanishes_for_huge_shot_counts() {
        let h = IsingHamiltonian::sample(4, 1).unwrap();
        let small = shot_noise_floor_with(&h, 4, 40, 256, 4, 20, 3).unwrap();
        let huge = shot_noise_floor_with(&h, 4, 40, 1 << 22, 4, 20, 3).unwrap();
        assert!(small.mean > 0.0);
        assert!(huge.mean < small.mean / 50.0, "{} vs {}", huge.mean, small.mean);
    }

    #[test]
    fn floor_shrinks_by_sqrt_two_when_shots_double() {
        let h = IsingHamiltonian::sample(6, 2).unwrap();
        let a = shot_noise_floor_with(&h, 8, 80, 2048, 12, 30, 5).unwrap();
        let b = shot_noise_floor_with(&h, 8, 80, 4096, 12, 30, 5).unwrap();
        let ratio = a.mean / b.mean;
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}
