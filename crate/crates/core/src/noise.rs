//! Single-qubit noise channels and their attachment to a circuit.
//!
//! Channels are applied as direct maps on the 2×2 blocks of the target
//! qubit rather than as Kraus sums. All of them share the same shape:
//! populations mix linearly and coherences are scaled by one factor.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ansatz::{circuit_runtime, Circuit, TimingModel};
use crate::densmat::{diagonal_phases, DensityMatrix, QubitUnitary};
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;
use num_complex::Complex64;

pub const DEFAULT_T1_MEAN_US: f64 = 244.0;
pub const DEFAULT_T1_STD_US: f64 = 74.0;
pub const DEFAULT_T2_MEAN_US: f64 = 159.0;
pub const DEFAULT_T2_STD_US: f64 = 93.0;

const MIN_COHERENCE_US: f64 = 1.0;
const REDRAW_BUDGET: usize = 1000;

/// `[[p00→p00, p11→p00], [p00→p11, p11→p11]]` population transfer plus a
/// coherence factor, applied to qubit `q`.
fn apply_block_map(rho: &mut DensityMatrix, q: usize, pop: [[f64; 2]; 2], coherence: f64) -> Result<()> {
    let n = rho.n_qubits();
    if q >= n {
        return Err(Error::InvalidTargets {
            targets: vec![q],
            n_qubits: n,
        });
    }
    let d = rho.dim();
    let bit = 1usize << q;
    let data = rho.data_mut();
    let [[p00, p01], [p10, p11]] = pop;
    for i0 in (0..d).step_by(2 * bit).flat_map(|b| b..b + bit) {
        let (lo, hi) = data.split_at_mut((i0 | bit) * d);
        let r0 = &mut lo[i0 * d..i0 * d + d];
        let r1 = &mut hi[..d];
        for (c0, c1) in r0.chunks_exact_mut(2 * bit).zip(r1.chunks_exact_mut(2 * bit)) {
            let (a, coh0) = c0.split_at_mut(bit);
            let (coh1, dd) = c1.split_at_mut(bit);
            for (x, y) in a.iter_mut().zip(dd.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u * p00 + v * p01;
                *y = u * p10 + v * p11;
            }
            coh0.iter_mut().chain(coh1.iter_mut()).for_each(|z| *z *= coherence);
        }
    }
    rho.debug_check();
    Ok(())
}

fn check_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(())
}

/// `(1-p)ρ + (p/3)(XρX + YρY + ZρZ)` on qubit `q`.
pub fn apply_depolarizing(rho: &mut DensityMatrix, q: usize, p: f64) -> Result<()> {
    check_probability(p)?;
    let stay = 1.0 - 2.0 * p / 3.0;
    let flip = 2.0 * p / 3.0;
    apply_block_map(rho, q, [[stay, flip], [flip, stay]], 1.0 - 4.0 * p / 3.0)
}

/// Amplitude damping with decay probability `gamma`: `ρ11 → (1-γ)ρ11`,
/// `ρ00 → ρ00 + γρ11`, coherences scaled by `sqrt(1-γ)`.
pub fn apply_damping_probability(rho: &mut DensityMatrix, q: usize, gamma: f64) -> Result<()> {
    check_probability(gamma)?;
    apply_block_map(rho, q, [[1.0, gamma], [0.0, 1.0 - gamma]], (1.0 - gamma).sqrt())
}

/// Amplitude damping for elapsed time `t` with relaxation time `t1`.
pub fn apply_amplitude_damping(rho: &mut DensityMatrix, q: usize, t: f64, t1: f64) -> Result<()> {
    check_time(t, t1)?;
    let keep = (-t / t1).exp();
    apply_block_map(rho, q, [[1.0, 1.0 - keep], [0.0, keep]], (-t / (2.0 * t1)).exp())
}

/// Amplitude damping plus dephasing: populations relax with `t1`,
/// coherences decay with `t2 ≤ 2·t1`.
pub fn apply_ad_dephasing(rho: &mut DensityMatrix, q: usize, t: f64, t1: f64, t2: f64) -> Result<()> {
    check_time(t, t1)?;
    check_t2(t1, t2)?;
    let keep = (-t / t1).exp();
    apply_block_map(rho, q, [[1.0, 1.0 - keep], [0.0, keep]], (-t / t2).exp())
}

fn check_time(t: f64, t1: f64) -> Result<()> {
    if !(t >= 0.0) || !(t1 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t >= 0 and T1 > 0 (got t={t}, T1={t1})"
        )));
    }
    Ok(())
}

fn check_t2(t1: f64, t2: f64) -> Result<()> {
    if !(t2 > 0.0) {
        return Err(Error::InvalidArgument(format!("T2 must be positive, got {t2}")));
    }
    // relative slack so that T2 = 2·T1 computed in floating point passes
    if t2 > 2.0 * t1 * (1.0 + 1e-12) {
        return Err(Error::Unphysical { t1, t2 });
    }
    Ok(())
}

/// Per-qubit coherence times in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSample {
    pub t1: Vec<f64>,
    pub t2: Vec<f64>,
}

impl CoherenceSample {
    pub fn new(t1: Vec<f64>, t2: Vec<f64>) -> Result<Self> {
        let s = Self { t1, t2 };
        s.validate()?;
        Ok(s)
    }

    pub fn uniform(n: usize, t1: f64, t2: f64) -> Result<Self> {
        Self::new(vec![t1; n], vec![t2; n])
    }

    pub fn len(&self) -> usize {
        self.t1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t1.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t1.len() != self.t2.len() {
            return Err(Error::LengthMismatch {
                expected: self.t1.len(),
                got: self.t2.len(),
            });
        }
        for (&t1, &t2) in self.t1.iter().zip(&self.t2) {
            if !(t1 > 0.0) {
                return Err(Error::InvalidArgument(format!("T1 must be positive, got {t1}")));
            }
            check_t2(t1, t2)?;
        }
        Ok(())
    }
}

/// Independent normal draws per qubit, redrawing each `(T1, T2)` pair until
/// `T1 ≥ 1 µs` and `1 µs ≤ T2 ≤ 2·T1`.
pub fn sample_coherences(
    n: usize,
    mu1: f64,
    sigma1: f64,
    mu2: f64,
    sigma2: f64,
    seed: u64,
) -> Result<CoherenceSample> {
    if !(mu1 > 0.0 && mu2 > 0.0) {
        return Err(Error::InvalidArgument("coherence means must be positive".into()));
    }
    let bad = |e: rand_distr::NormalError| Error::InvalidArgument(format!("normal: {e}"));
    let d1 = Normal::new(mu1, sigma1).map_err(bad)?;
    let d2 = Normal::new(mu2, sigma2).map_err(bad)?;
    let mut rng = rng_from_seed(seed);
    let mut t1 = Vec::with_capacity(n);
    let mut t2 = Vec::with_capacity(n);
    for _ in 0..n {
        let mut accepted = None;
        for _ in 0..REDRAW_BUDGET {
            let a = d1.sample(&mut rng);
            let b = d2.sample(&mut rng);
            if a >= MIN_COHERENCE_US && b >= MIN_COHERENCE_US && b <= 2.0 * a {
                accepted = Some((a, b));
                break;
            }
        }
        let (a, b) = accepted.ok_or(Error::RejectionBudget {
            attempts: REDRAW_BUDGET,
            mu1,
            sigma1,
            mu2,
            sigma2,
        })?;
        t1.push(a);
        t2.push(b);
    }
    Ok(CoherenceSample { t1, t2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    /// Probability per qubit per attachment slot.
    Depolarizing { p: f64 },
    /// Time-based damping; only T1 is used, coherences decay with 2·T1.
    AmplitudeDamping { coherences: CoherenceSample },
    /// Time-based damping with T2 dephasing.
    AdDephasing { coherences: CoherenceSample },
    /// Damping with a fixed decay probability per attachment slot.
    DampingProbability { gamma: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Channel on every qubit after each QAOA layer, then a terminal idle.
    #[default]
    PerLayer,
    /// Channel on the participating qubits after every gate.
    PerGate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub schedule: Schedule,
    /// Idle for `t_cir(N, L) - L·τ_layer` after the last layer (time-based
    /// kinds only).
    pub terminal_idle: bool,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            schedule: Schedule::PerLayer,
            terminal_idle: false,
        }
    }

    pub fn depolarizing(p: f64, schedule: Schedule) -> Self {
        Self {
            kind: NoiseKind::Depolarizing { p },
            schedule,
            terminal_idle: false,
        }
    }

    pub fn amplitude_damping(coherences: CoherenceSample, schedule: Schedule) -> Self {
        Self {
            kind: NoiseKind::AmplitudeDamping { coherences },
            schedule,
            terminal_idle: true,
        }
    }

    pub fn ad_dephasing(coherences: CoherenceSample, schedule: Schedule) -> Self {
        Self {
            kind: NoiseKind::AdDephasing { coherences },
            schedule,
            terminal_idle: true,
        }
    }

    pub fn damping_probability(gamma: f64, schedule: Schedule) -> Self {
        Self {
            kind: NoiseKind::DampingProbability { gamma },
            schedule,
            terminal_idle: false,
        }
    }

    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        match &self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Depolarizing { p } => check_probability(*p),
            NoiseKind::DampingProbability { gamma } => check_probability(*gamma),
            NoiseKind::AmplitudeDamping { coherences } | NoiseKind::AdDephasing { coherences } => {
                if coherences.len() != n_qubits {
                    return Err(Error::LengthMismatch {
                        expected: n_qubits,
                        got: coherences.len(),
                    });
                }
                match &self.kind {
                    NoiseKind::AdDephasing { .. } => coherences.validate(),
                    _ => coherences.t1.iter().try_for_each(|&t1| {
                        if t1 > 0.0 {
                            Ok(())
                        } else {
                            Err(Error::InvalidArgument(format!("T1 must be positive, got {t1}")))
                        }
                    }),
                }
            }
        }
    }

    /// Short label for file names and metadata.
    pub fn tag(&self) -> String {
        match &self.kind {
            NoiseKind::None => "none".into(),
            NoiseKind::Depolarizing { p } => format!("dep_p{p}"),
            NoiseKind::AmplitudeDamping { .. } => "ad".into(),
            NoiseKind::AdDephasing { .. } => "ad_dephasing".into(),
            NoiseKind::DampingProbability { gamma } => format!("damp_g{gamma}"),
        }
    }

    fn is_time_based(&self) -> bool {
        matches!(
            self.kind,
            NoiseKind::AmplitudeDamping { .. } | NoiseKind::AdDephasing { .. }
        )
    }

    /// Channel on qubit `q` for one attachment slot lasting `duration` µs.
    fn apply_slot(&self, rho: &mut DensityMatrix, q: usize, duration: f64) -> Result<()> {
        match &self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::Depolarizing { p } => apply_depolarizing(rho, q, *p),
            NoiseKind::DampingProbability { gamma } => apply_damping_probability(rho, q, *gamma),
            NoiseKind::AmplitudeDamping { coherences } => {
                apply_amplitude_damping(rho, q, duration, coherences.t1[q])
            }
            NoiseKind::AdDephasing { coherences } => {
                apply_ad_dephasing(rho, q, duration, coherences.t1[q], coherences.t2[q])
            }
        }
    }
}

/// Accumulates consecutive diagonal gates into one register-wide phase pass.
struct DiagonalBuffer {
    n_qubits: usize,
    phases: Option<Vec<Complex64>>,
}

impl DiagonalBuffer {
    fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            phases: None,
        }
    }

    fn apply(&mut self, rho: &mut DensityMatrix, gate: &QubitUnitary) -> Result<()> {
        match gate.diagonal() {
            Some(local) if gate.targets().iter().all(|&t| t < self.n_qubits) => {
                let full = diagonal_phases(self.n_qubits, gate.targets(), local);
                match &mut self.phases {
                    Some(acc) => acc.iter_mut().zip(full).for_each(|(a, f)| *a *= f),
                    None => self.phases = Some(full),
                }
                Ok(())
            }
            _ => {
                self.flush(rho);
                rho.apply_unitary(gate)
            }
        }
    }

    fn flush(&mut self, rho: &mut DensityMatrix) {
        if let Some(phases) = self.phases.take() {
            rho.apply_diagonal(&phases);
            rho.debug_check();
        }
    }
}

/// Runs `circuit` on `rho` with `model`'s channels interleaved.
pub fn apply_schedule(
    rho: &mut DensityMatrix,
    circuit: &Circuit,
    model: &NoiseModel,
    timing: &TimingModel,
) -> Result<()> {
    let n = rho.n_qubits();
    if circuit.n_qubits() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            got: circuit.n_qubits(),
        });
    }
    model.validate(n)?;
    let mut buffer = DiagonalBuffer::new(n);

    if matches!(model.kind, NoiseKind::None) {
        for g in circuit.gates() {
            buffer.apply(rho, g)?;
        }
        buffer.flush(rho);
        return Ok(());
    }

    let tau = timing.layer_duration_us();
    match model.schedule {
        Schedule::PerLayer => {
            for layer in circuit.layer_gates() {
                for g in layer {
                    buffer.apply(rho, g)?;
                }
                buffer.flush(rho);
                for q in 0..n {
                    model.apply_slot(rho, q, tau)?;
                }
            }
        }
        Schedule::PerGate => {
            for g in circuit.gates() {
                rho.apply_unitary(g)?;
                let duration = if g.arity() == 2 {
                    timing.t_2q_us * timing.two_qubit_per_rzz as f64
                } else {
                    timing.t_1q_us
                };
                for &q in g.targets() {
                    model.apply_slot(rho, q, duration)?;
                }
            }
        }
    }

    if model.terminal_idle && model.is_time_based() {
        let layers = circuit.layers();
        let idle = circuit_runtime(n, layers, timing) - layers as f64 * tau;
        if idle > 0.0 {
            for q in 0..n {
                model.apply_slot(rho, q, idle)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::{build_circuit, IsingHamiltonian, ParameterVector, Platform};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn random_state(n: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1usize << n;
        let mut acc = vec![c(0.0); d * d];
        let rank = 1 + (seed as usize % 3);
        for _ in 0..rank {
            let psi: Vec<Complex64> = (0..d)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let p = DensityMatrix::from_pure(n, &psi).unwrap();
            for (a, b) in acc.iter_mut().zip(p.as_slice()) {
                *a += b / rank as f64;
            }
        }
        DensityMatrix::from_row_major(n, acc).unwrap()
    }

    fn max_diff(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    // Kraus-sum oracle on the full register
    fn kraus_apply(rho: &DensityMatrix, q: usize, kraus: &[[Complex64; 4]]) -> DMatrix<Complex64> {
        let n = rho.n_qubits();
        let d = rho.dim();
        let dense = DMatrix::from_fn(d, d, |i, j| rho.get(i, j));
        let mut out = DMatrix::zeros(d, d);
        for k in kraus {
            let big = DMatrix::from_fn(d, d, |i, j| {
                if (i ^ j) & !(1 << q) != 0 {
                    c(0.0)
                } else {
                    k[(i >> q & 1) * 2 + (j >> q & 1)]
                }
            });
            out += &big * &dense * big.adjoint();
        }
        let _ = n;
        out
    }

    fn dense_diff(a: &DensityMatrix, b: &DMatrix<Complex64>) -> f64 {
        let d = a.dim();
        let mut w = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                w = w.max((a.get(i, j) - b[(i, j)]).norm());
            }
        }
        w
    }

    #[test]
    fn depolarizing_examples() {
        let rho = random_state(2, 3);
        let mut same = rho.clone();
        apply_depolarizing(&mut same, 1, 0.0).unwrap();
        assert!(max_diff(&same, &rho) < 1e-15);

        let mut zero = DensityMatrix::basis_state(1, 0).unwrap();
        apply_depolarizing(&mut zero, 0, 0.75).unwrap();
        assert!(max_diff(&zero, &DensityMatrix::maximally_mixed(1).unwrap()) < 1e-15);

        let mut plus = DensityMatrix::plus_state(1).unwrap();
        apply_depolarizing(&mut plus, 0, 0.025).unwrap();
        assert!((plus.get(0, 1).re - 0.5 * (1.0 - 4.0 * 0.025 / 3.0)).abs() < 1e-15);
        assert!((plus.get(0, 1).re - 0.483333).abs() < 1e-6);

        assert!(matches!(
            apply_depolarizing(&mut plus, 0, 1.5),
            Err(Error::ProbabilityOutOfRange(_))
        ));
    }

    #[test]
    fn amplitude_damping_examples() {
        let mut one = DensityMatrix::basis_state(1, 1).unwrap();
        apply_amplitude_damping(&mut one, 0, 100.0, 100.0).unwrap();
        assert!((one.get(0, 0).re - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((one.get(1, 1).re - 0.3679).abs() < 1e-4);

        let mut one = DensityMatrix::basis_state(1, 1).unwrap();
        apply_amplitude_damping(&mut one, 0, 244.0 * 4f64.ln(), 244.0).unwrap();
        assert!((one.get(0, 0).re - 0.75).abs() < 1e-12);

        let rho = random_state(2, 5);
        let mut same = rho.clone();
        apply_amplitude_damping(&mut same, 0, 0.0, 50.0).unwrap();
        assert!(max_diff(&same, &rho) < 1e-15);
    }

    #[test]
    fn half_decay_gives_flat_spectrum() {
        let mut one = DensityMatrix::basis_state(1, 1).unwrap();
        apply_amplitude_damping(&mut one, 0, 80.0 * 2f64.ln(), 80.0).unwrap();
        let ev = one.eigen_spectrum().unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ad_dephasing_examples() {
        let rho = random_state(2, 8);
        let mut a = rho.clone();
        let mut b = rho.clone();
        apply_ad_dephasing(&mut a, 1, 17.0, 120.0, 240.0).unwrap();
        apply_amplitude_damping(&mut b, 1, 17.0, 120.0).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);

        let mut plus = DensityMatrix::plus_state(1).unwrap();
        apply_ad_dephasing(&mut plus, 0, 90.0, 200.0, 90.0).unwrap();
        assert!((plus.get(0, 1).re - 0.5 * (-1.0f64).exp()).abs() < 1e-15);

        let mut long = random_state(1, 4);
        apply_ad_dephasing(&mut long, 0, 50.0 * 30.0, 30.0, 20.0).unwrap();
        assert!(long.get(0, 1).norm() < 1e-10);
        assert!(long.get(1, 1).re < 1e-10);

        assert!(matches!(
            apply_ad_dephasing(&mut plus, 0, 1.0, 10.0, 25.0),
            Err(Error::Unphysical { .. })
        ));
    }

    #[test]
    fn matrix_element_maps_equal_kraus_sums() {
        let rho = random_state(3, 21);
        let q = 1;

        let gamma: f64 = 0.3;
        let s = (1.0 - gamma).sqrt();
        let ad = [
            [c(1.0), c(0.0), c(0.0), c(s)],
            [c(0.0), c(gamma.sqrt()), c(0.0), c(0.0)],
        ];
        let mut fast = rho.clone();
        apply_damping_probability(&mut fast, q, gamma).unwrap();
        assert!(dense_diff(&fast, &kraus_apply(&rho, q, &ad)) < 1e-12);

        let p: f64 = 0.2;
        let w = (p / 3.0).sqrt();
        let i = Complex64::new(0.0, 1.0);
        let dep = [
            [c((1.0 - p).sqrt()), c(0.0), c(0.0), c((1.0 - p).sqrt())],
            [c(0.0), c(w), c(w), c(0.0)],
            [c(0.0), -i * w, i * w, c(0.0)],
            [c(w), c(0.0), c(0.0), c(-w)],
        ];
        let mut fast = rho.clone();
        apply_depolarizing(&mut fast, q, p).unwrap();
        assert!(dense_diff(&fast, &kraus_apply(&rho, q, &dep)) < 1e-12);

        // AD followed by pure dephasing with the extra coherence loss
        let (t, t1, t2): (f64, f64, f64) = (13.0, 40.0, 30.0);
        let g = 1.0 - (-t / t1).exp();
        let extra = (-t / t2).exp() / (-t / (2.0 * t1)).exp();
        // phase flip with probability pf scales coherences by 1 - 2pf
        let pf = (1.0 - extra) / 2.0;
        let s = (1.0 - g).sqrt();
        let ad = [
            [c(1.0), c(0.0), c(0.0), c(s)],
            [c(0.0), c(g.sqrt()), c(0.0), c(0.0)],
        ];
        let after_ad = kraus_apply(&rho, q, &ad);
        let tmp = DensityMatrix::from_row_major(
            3,
            (0..64).map(|k| after_ad[(k / 8, k % 8)]).collect(),
        )
        .unwrap();
        let phase = [
            [c((1.0 - pf).sqrt()), c(0.0), c(0.0), c((1.0 - pf).sqrt())],
            [c(pf.sqrt()), c(0.0), c(0.0), c(-pf.sqrt())],
        ];
        let want = kraus_apply(&tmp, q, &phase);
        let mut fast = rho.clone();
        apply_ad_dephasing(&mut fast, q, t, t1, t2).unwrap();
        assert!(dense_diff(&fast, &want) < 1e-12);
    }

    #[test]
    fn coherence_sampling() {
        let s = sample_coherences(
            127,
            DEFAULT_T1_MEAN_US,
            DEFAULT_T1_STD_US,
            DEFAULT_T2_MEAN_US,
            DEFAULT_T2_STD_US,
            3,
        )
        .unwrap();
        s.validate().unwrap();
        assert!(s.t1.iter().all(|&t| t >= 1.0));
        assert!(s.t1.iter().zip(&s.t2).all(|(&a, &b)| b >= 1.0 && b <= 2.0 * a));

        let exact = sample_coherences(4, 100.0, 0.0, 150.0, 0.0, 9).unwrap();
        assert!(exact.t1.iter().all(|&t| t == 100.0));
        assert!(exact.t2.iter().all(|&t| t == 150.0));

        assert_eq!(
            sample_coherences(8, 244.0, 74.0, 159.0, 93.0, 11).unwrap(),
            sample_coherences(8, 244.0, 74.0, 159.0, 93.0, 11).unwrap()
        );
        assert!(matches!(
            sample_coherences(2, 10.0, 0.0, 30.0, 0.0, 0),
            Err(Error::RejectionBudget { .. })
        ));
    }

    #[test]
    fn schedule_without_noise_is_plain_application() {
        let h = IsingHamiltonian::sample(3, 2).unwrap();
        let theta = ParameterVector::new(vec![0.3, 1.1, 2.0, 4.4]).unwrap();
        let circuit = build_circuit(&h, &theta);
        let timing = TimingModel::for_platform(Platform::FalconLadder);
        let mut plain = DensityMatrix::plus_state(3).unwrap();
        circuit.apply_noiseless(&mut plain).unwrap();
        let mut sched = DensityMatrix::plus_state(3).unwrap();
        apply_schedule(&mut sched, &circuit, &NoiseModel::none(), &timing).unwrap();
        assert!(max_diff(&plain, &sched) < 1e-12);
    }

    #[test]
    fn identity_gates_still_carry_depolarizing_noise() {
        let gates = vec![QubitUnitary::identity(0), QubitUnitary::identity(1)];
        let circuit = Circuit::from_layers(2, gates, 1).unwrap();
        let timing = TimingModel::for_platform(Platform::FalconLadder);
        let mut rho = DensityMatrix::plus_state(2).unwrap();
        apply_schedule(
            &mut rho,
            &circuit,
            &NoiseModel::depolarizing(0.1, Schedule::PerGate),
            &timing,
        )
        .unwrap();
        assert!(rho.purity() < 1.0 - 1e-3);
    }

    #[test]
    fn per_layer_damping_matches_hand_composition() {
        let h = IsingHamiltonian::new(vec![1.2], vec![0.4, -0.24]).unwrap();
        let theta = ParameterVector::new(vec![0.9, 2.3]).unwrap();
        let timing = TimingModel::for_platform(Platform::FalconLadder);
        let co = CoherenceSample::uniform(2, 244.0, 488.0).unwrap();
        let model = NoiseModel::amplitude_damping(co, Schedule::PerLayer);
        let mut got = DensityMatrix::plus_state(2).unwrap();
        apply_schedule(&mut got, &build_circuit(&h, &theta), &model, &timing).unwrap();

        // explicit 4x4 composition: U, then K-sum per qubit for 3.3 µs, then
        // the terminal idle of 1.8·2 + 45 µs
        let d = 4;
        let zero = c(0.0);
        let mut u = DMatrix::<Complex64>::identity(d, d);
        let diag = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                Complex64::from_polar(1.0, -2.3 * h.energy_of_index(i))
            } else {
                zero
            }
        });
        let (s, co) = 0.9f64.sin_cos();
        let rx = DMatrix::from_row_slice(2, 2, &[c(co), Complex64::new(0.0, -s), Complex64::new(0.0, -s), c(co)]);
        let mix = rx.kronecker(&rx);
        u = mix * diag * u;
        let mut rho = DMatrix::from_element(d, d, c(0.25));
        rho = &u * rho * u.adjoint();
        let damp = |rho: DMatrix<Complex64>, t: f64| -> DMatrix<Complex64> {
            let g = 1.0 - (-t / 244.0).exp();
            let k0 = DMatrix::from_row_slice(2, 2, &[c(1.0), zero, zero, c((1.0 - g).sqrt())]);
            let k1 = DMatrix::from_row_slice(2, 2, &[zero, c(g.sqrt()), zero, zero]);
            let id = DMatrix::<Complex64>::identity(2, 2);
            let mut out = rho.clone();
            for q in 0..2 {
                let mut acc = DMatrix::zeros(d, d);
                for k in [&k0, &k1] {
                    // qubit 0 is the least significant bit: kron(q1, q0)
                    let big = if q == 0 { id.kronecker(k) } else { k.kronecker(&id) };
                    acc += &big * &out * big.adjoint();
                }
                out = acc;
            }
            out
        };
        rho = damp(rho, 3.3);
        rho = damp(rho, 1.8 * 2.0 + 45.0);
        for i in 0..d {
            assert!((got.get(i, i).re - rho[(i, i)].re).abs() < 1e-10);
        }
    }

    #[test]
    fn noise_model_validation() {
        let co = CoherenceSample::uniform(3, 100.0, 150.0).unwrap();
        assert!(NoiseModel::ad_dephasing(co.clone(), Schedule::PerLayer)
            .validate(4)
            .is_err());
        assert!(NoiseModel::ad_dephasing(co, Schedule::PerLayer).validate(3).is_ok());
        assert!(NoiseModel::depolarizing(-0.1, Schedule::PerGate).validate(2).is_err());
        assert!(CoherenceSample::uniform(2, 100.0, 250.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn channels_preserve_trace_and_positivity(
                n in 1usize..=4,
                seed in 0u64..10_000,
                p in 0.0f64..=1.0,
                t in 0.0f64..500.0,
                t1 in 5.0f64..400.0,
                frac in 0.01f64..=1.0,
            ) {
                let rho = random_state(n, seed);
                let q = (seed as usize) % n;
                let t2 = 2.0 * t1 * frac;
                let mut states = vec![rho.clone(), rho.clone(), rho.clone()];
                apply_depolarizing(&mut states[0], q, p).unwrap();
                apply_amplitude_damping(&mut states[1], q, t, t1).unwrap();
                apply_ad_dephasing(&mut states[2], q, t, t1, t2).unwrap();
                for s in &states {
                    prop_assert!((s.trace().re - 1.0).abs() < 1e-10);
                    let ev = s.eigen_spectrum().unwrap();
                    prop_assert!(ev.iter().all(|&x| x >= -1e-9));
                }
            }

            #[test]
            fn damping_is_a_semigroup(
                seed in 0u64..10_000,
                ta in 0.0f64..200.0,
                tb in 0.0f64..200.0,
                t1 in 10.0f64..300.0,
            ) {
                let rho = random_state(2, seed);
                let mut split = rho.clone();
                apply_amplitude_damping(&mut split, 1, ta, t1).unwrap();
                apply_amplitude_damping(&mut split, 1, tb, t1).unwrap();
                let mut whole = rho.clone();
                apply_amplitude_damping(&mut whole, 1, ta + tb, t1).unwrap();
                prop_assert!(max_diff(&split, &whole) < 1e-12);
            }
        }
    }
}
