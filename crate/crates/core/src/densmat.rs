//! Dense density-matrix state engine.
//!
//! Basis indices are computational-basis bitstrings with qubit 0 as the
//! least significant bit. Matrices are stored row-major in a flat
//! `Vec<Complex64>` of length `4^n`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_QUBITS: usize = 12;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    dim: usize,
    data: Vec<Complex64>,
}

impl DensityMatrix {
    fn alloc(n_qubits: usize, max_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::InvalidArgument("n_qubits must be at least 1".into()));
        }
        if n_qubits > max_qubits || n_qubits > 30 {
            return Err(Error::DimensionOverflow { n_qubits, max_qubits });
        }
        let dim = 1usize << n_qubits;
        Ok(Self {
            n_qubits,
            dim,
            data: vec![ZERO; dim * dim],
        })
    }

    /// `|+…+⟩⟨+…+|`: every entry equals `1/2^n`.
    pub fn plus_state(n_qubits: usize) -> Result<Self> {
        Self::plus_state_capped(n_qubits, DEFAULT_MAX_QUBITS)
    }

    pub fn plus_state_capped(n_qubits: usize, max_qubits: usize) -> Result<Self> {
        let mut rho = Self::alloc(n_qubits, max_qubits)?;
        let v = Complex64::new(1.0 / rho.dim as f64, 0.0);
        rho.data.iter_mut().for_each(|x| *x = v);
        Ok(rho)
    }

    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        let mut rho = Self::alloc(n_qubits, DEFAULT_MAX_QUBITS)?;
        if index >= rho.dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        rho.data[index * rho.dim + index] = ONE;
        Ok(rho)
    }

    pub fn maximally_mixed(n_qubits: usize) -> Result<Self> {
        let mut rho = Self::alloc(n_qubits, DEFAULT_MAX_QUBITS)?;
        let v = Complex64::new(1.0 / rho.dim as f64, 0.0);
        for i in 0..rho.dim {
            rho.data[i * rho.dim + i] = v;
        }
        Ok(rho)
    }

    /// Pure state `|ψ⟩⟨ψ|` from a (not necessarily normalized) amplitude vector.
    pub fn from_pure(n_qubits: usize, amplitudes: &[Complex64]) -> Result<Self> {
        let mut rho = Self::alloc(n_qubits, DEFAULT_MAX_QUBITS)?;
        if amplitudes.len() != rho.dim {
            return Err(Error::LengthMismatch {
                expected: rho.dim,
                got: amplitudes.len(),
            });
        }
        let norm2: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if norm2 <= 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let d = rho.dim;
        for i in 0..d {
            for j in 0..d {
                rho.data[i * d + j] = amplitudes[i] * amplitudes[j].conj() / norm2;
            }
        }
        Ok(rho)
    }

    /// Wraps a row-major matrix and checks the density-matrix invariants.
    pub fn from_row_major(n_qubits: usize, data: Vec<Complex64>) -> Result<Self> {
        let mut rho = Self::alloc(n_qubits, DEFAULT_MAX_QUBITS)?;
        if data.len() != rho.dim * rho.dim {
            return Err(Error::LengthMismatch {
                expected: rho.dim * rho.dim,
                got: data.len(),
            });
        }
        rho.data = data;
        rho.validate()?;
        Ok(rho)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Raw mutable access for channel implementations in this crate.
    pub(crate) fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Real parts of the diagonal: the computational-basis populations.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i].re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                let e = (self.data[i * d + j] - self.data[j * d + i].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    /// `Tr(ρ²)`; for Hermitian ρ this is the squared Frobenius norm.
    pub fn purity(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum()
    }

    /// Checks Hermiticity, unit trace and positivity.
    pub fn validate(&self) -> Result<()> {
        self.check_cheap()?;
        let spectrum = self.raw_eigenvalues()?;
        let min = spectrum.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::StateCorruption(format!(
                "negative eigenvalue {min:.3e}"
            )));
        }
        Ok(())
    }

    fn check_cheap(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(Error::StateCorruption(format!(
                "not Hermitian (deviation {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::StateCorruption(format!("trace {tr} != 1")));
        }
        Ok(())
    }

    /// O(d) per-operation sanity check for debug builds. The full
    /// Hermiticity scan costs as much as a gate, so it lives in `validate`.
    #[inline]
    pub(crate) fn debug_check(&self) {
        #[cfg(debug_assertions)]
        {
            let tr = self.trace();
            assert!(
                (tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL,
                "density-matrix invariant violated: trace {tr} != 1"
            );
            let d = self.dim;
            let worst = (0..d).map(|i| self.data[i * d + i].im.abs()).fold(0.0, f64::max);
            assert!(
                worst <= HERMITIAN_TOL,
                "density-matrix invariant violated: complex diagonal ({worst:.3e})"
            );
        }
    }

    fn raw_eigenvalues(&self) -> Result<Vec<f64>> {
        let d = self.dim;
        let m = DMatrix::from_fn(d, d, |i, j| self.data[i * d + j]);
        let eig = m
            .try_symmetric_eigen(f64::EPSILON, 10_000 * d)
            .ok_or_else(|| {
                Error::Eigensolver(format!(
                    "no convergence for {d}x{d} matrix (hermiticity error {:.3e}, purity {:.6})",
                    self.hermiticity_error(),
                    self.purity()
                ))
            })?;
        Ok(eig.eigenvalues.iter().copied().collect())
    }

    /// Eigenvalues in descending order, clamped to `[0, 1]` after checking
    /// that none fall below `-PSD_TOL`.
    pub fn eigen_spectrum(&self) -> Result<Vec<f64>> {
        let mut ev = self.raw_eigenvalues()?;
        if let Some(&min) = ev.iter().min_by(|a, b| a.total_cmp(b)) {
            if min < -PSD_TOL {
                return Err(Error::StateCorruption(format!(
                    "negative eigenvalue {min:.3e}"
                )));
            }
        }
        ev.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
        ev.sort_by(|a, b| b.total_cmp(a));
        Ok(ev)
    }

    pub fn apply_unitary(&mut self, u: &QubitUnitary) -> Result<()> {
        u.check_targets(self.n_qubits)?;
        if let Some(diag) = u.diagonal() {
            let phases = diagonal_phases(self.n_qubits, u.targets(), diag);
            self.apply_diagonal(&phases);
        } else {
            match u.arity() {
                1 => self.apply_single(u.targets()[0], u.matrix()),
                _ => self.apply_general(u.targets(), u.matrix()),
            }
        }
        self.debug_check();
        Ok(())
    }

    /// `ρ_ij ← f_i ρ_ij conj(f_j)` for a diagonal unitary `diag(f)` on the
    /// full register.
    pub fn apply_diagonal(&mut self, phases: &[Complex64]) {
        assert_eq!(phases.len(), self.dim, "phase vector length");
        let d = self.dim;
        let conj: Vec<Complex64> = phases.iter().map(|p| p.conj()).collect();
        for (i, row) in self.data.chunks_exact_mut(d).enumerate() {
            let fi = phases[i];
            for (x, cj) in row.iter_mut().zip(&conj) {
                *x *= fi * cj;
            }
        }
    }

    fn apply_single(&mut self, q: usize, m: &[Complex64]) {
        let d = self.dim;
        let bit = 1usize << q;
        let (u00, u01, u10, u11) = (m[0], m[1], m[2], m[3]);

        // left: rows i0 = i (bit clear) and i1 = i | bit
        for i0 in (0..d).step_by(2 * bit).flat_map(|b| b..b + bit) {
            let i1 = i0 | bit;
            let (lo, hi) = self.data.split_at_mut(i1 * d);
            let r0 = &mut lo[i0 * d..i0 * d + d];
            let r1 = &mut hi[..d];
            for (a, b) in r0.iter_mut().zip(r1.iter_mut()) {
                let (x, y) = (*a, *b);
                *a = u00 * x + u01 * y;
                *b = u10 * x + u11 * y;
            }
        }

        // right: (ρU†)_{ij} = Σ_k ρ_ik conj(U_jk)
        let (c00, c01, c10, c11) = (u00.conj(), u01.conj(), u10.conj(), u11.conj());
        for block in self.data.chunks_exact_mut(2 * bit) {
            let (b0, b1) = block.split_at_mut(bit);
            for (x0, x1) in b0.iter_mut().zip(b1.iter_mut()) {
                let (x, y) = (*x0, *x1);
                *x0 = x * c00 + y * c01;
                *x1 = x * c10 + y * c11;
            }
        }
    }

    fn apply_general(&mut self, targets: &[usize], m: &[Complex64]) {
        let d = self.dim;
        let k = 1usize << targets.len();
        let offsets = target_offsets(targets);
        let mask: usize = targets.iter().map(|&t| 1usize << t).sum();
        let bases: Vec<usize> = (0..d).filter(|i| i & mask == 0).collect();

        let mut v = vec![ZERO; k];
        // left multiply on row groups
        for &base in &bases {
            for c in 0..d {
                for (slot, off) in v.iter_mut().zip(&offsets) {
                    *slot = self.data[(base + off) * d + c];
                }
                for (r, off) in offsets.iter().enumerate() {
                    let mut acc = ZERO;
                    for (l, x) in v.iter().enumerate() {
                        acc += m[r * k + l] * x;
                    }
                    self.data[(base + off) * d + c] = acc;
                }
            }
        }
        // right multiply by U† on column groups
        for row in self.data.chunks_exact_mut(d) {
            for &base in &bases {
                for (slot, off) in v.iter_mut().zip(&offsets) {
                    *slot = row[base + off];
                }
                for (c, off) in offsets.iter().enumerate() {
                    let mut acc = ZERO;
                    for (l, x) in v.iter().enumerate() {
                        acc += x * m[c * k + l].conj();
                    }
                    row[base + off] = acc;
                }
            }
        }
    }
}

/// Offset of local basis state `k` (target `t` ↔ bit `t` of `k`) inside the
/// full register.
fn target_offsets(targets: &[usize]) -> Vec<usize> {
    (0..1usize << targets.len())
        .map(|k| {
            targets
                .iter()
                .enumerate()
                .filter(|(t, _)| k >> t & 1 == 1)
                .map(|(_, &q)| 1usize << q)
                .sum()
        })
        .collect()
}

/// Expands a local diagonal on `targets` to a full-register phase vector.
pub fn diagonal_phases(n_qubits: usize, targets: &[usize], local: &[Complex64]) -> Vec<Complex64> {
    (0..1usize << n_qubits)
        .map(|i| {
            let k = targets
                .iter()
                .enumerate()
                .fold(0usize, |acc, (t, &q)| acc | ((i >> q & 1) << t));
            local[k]
        })
        .collect()
}

/// A one- or two-qubit unitary with its target list.
///
/// The local basis index of the matrix uses `targets[0]` as the least
/// significant bit, matching the register convention.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitUnitary {
    targets: Vec<usize>,
    matrix: Vec<Complex64>,
    diagonal: Option<Vec<Complex64>>,
}

impl QubitUnitary {
    pub fn new(targets: Vec<usize>, matrix: Vec<Complex64>) -> Result<Self> {
        let arity = targets.len();
        if !(1..=2).contains(&arity) {
            return Err(Error::InvalidArgument(format!(
                "unitary arity must be 1 or 2, got {arity}"
            )));
        }
        if arity == 2 && targets[0] == targets[1] {
            return Err(Error::InvalidTargets {
                targets,
                n_qubits: 0,
            });
        }
        let k = 1usize << arity;
        if matrix.len() != k * k {
            return Err(Error::LengthMismatch {
                expected: k * k,
                got: matrix.len(),
            });
        }
        let deviation = unitarity_deviation(&matrix, k);
        if deviation > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation });
        }
        let is_diag = (0..k).all(|r| (0..k).all(|c| r == c || matrix[r * k + c] == ZERO));
        let diagonal = is_diag.then(|| (0..k).map(|r| matrix[r * k + r]).collect());
        Ok(Self {
            targets,
            matrix,
            diagonal,
        })
    }

    pub fn identity(q: usize) -> Self {
        Self::new(vec![q], vec![ONE, ZERO, ZERO, ONE]).expect("identity is unitary")
    }

    pub fn pauli_x(q: usize) -> Self {
        Self::new(vec![q], vec![ZERO, ONE, ONE, ZERO]).expect("X is unitary")
    }

    /// `exp(-i·angle·X)`.
    pub fn rx(q: usize, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let c = Complex64::new(c, 0.0);
        let ms = Complex64::new(0.0, -s);
        Self::new(vec![q], vec![c, ms, ms, c]).expect("RX is unitary")
    }

    /// `exp(-i·angle·Z)`.
    pub fn rz(q: usize, angle: f64) -> Self {
        let p = Complex64::from_polar(1.0, -angle);
        Self::new(vec![q], vec![p, ZERO, ZERO, p.conj()]).expect("RZ is unitary")
    }

    /// `exp(-i·angle·Z_a Z_b)`.
    pub fn rzz(a: usize, b: usize, angle: f64) -> Self {
        let p = Complex64::from_polar(1.0, -angle);
        let pc = p.conj();
        let mut m = vec![ZERO; 16];
        // local index k = bit_a + 2 bit_b; ZZ = +1 on k ∈ {0, 3}
        m[0] = p;
        m[5] = pc;
        m[10] = pc;
        m[15] = p;
        Self::new(vec![a, b], m).expect("RZZ is unitary")
    }

    pub fn arity(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn matrix(&self) -> &[Complex64] {
        &self.matrix
    }

    /// Diagonal entries when the matrix is diagonal.
    pub fn diagonal(&self) -> Option<&[Complex64]> {
        self.diagonal.as_deref()
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        let k = 1usize << self.arity();
        (0..k).all(|r| {
            (0..k).all(|c| {
                let want = if r == c { ONE } else { ZERO };
                (self.matrix[r * k + c] - want).norm() <= tol
            })
        })
    }

    /// `ψ ← Uψ` on a pure-state amplitude vector over `n_qubits`.
    pub fn apply_to_amplitudes(&self, n_qubits: usize, psi: &mut [Complex64]) -> Result<()> {
        self.check_targets(n_qubits)?;
        let d = 1usize << n_qubits;
        if psi.len() != d {
            return Err(Error::LengthMismatch {
                expected: d,
                got: psi.len(),
            });
        }
        if let Some(diag) = self.diagonal() {
            let phases = diagonal_phases(n_qubits, &self.targets, diag);
            psi.iter_mut().zip(&phases).for_each(|(a, f)| *a *= f);
            return Ok(());
        }
        let k = 1usize << self.targets.len();
        let offsets = target_offsets(&self.targets);
        let mask: usize = self.targets.iter().map(|&t| 1usize << t).sum();
        let m = &self.matrix;
        let mut v = vec![ZERO; k];
        for base in (0..d).filter(|i| i & mask == 0) {
            for (slot, off) in v.iter_mut().zip(&offsets) {
                *slot = psi[base + off];
            }
            for (r, off) in offsets.iter().enumerate() {
                psi[base + off] = v.iter().enumerate().map(|(l, x)| m[r * k + l] * x).sum();
            }
        }
        Ok(())
    }

    fn check_targets(&self, n_qubits: usize) -> Result<()> {
        if self.targets.iter().any(|&t| t >= n_qubits) {
            return Err(Error::InvalidTargets {
                targets: self.targets.clone(),
                n_qubits,
            });
        }
        Ok(())
    }
}

fn unitarity_deviation(m: &[Complex64], k: usize) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..k {
        for c in 0..k {
            let mut acc = ZERO;
            for l in 0..k {
                acc += m[r * k + l] * m[c * k + l].conj();
            }
            let want = if r == c { ONE } else { ZERO };
            worst = worst.max((acc - want).norm());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn haar_like(k: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(k, k, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let q = a.qr().q();
        (0..k * k).map(|i| q[(i / k, i % k)]).collect()
    }

    #[test]
    fn amplitude_update_matches_density_update() {
        let n = 3;
        let d = 1usize << n;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut psi: Vec<Complex64> = (0..d).map(|_| c(rng.random(), rng.random())).collect();
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        psi.iter_mut().for_each(|a| *a /= norm);
        let gates = [
            QubitUnitary::rx(1, 0.7),
            QubitUnitary::rzz(0, 2, 0.3),
            QubitUnitary::new(vec![2, 0], haar_like(4, 5)).unwrap(),
        ];
        let mut rho = DensityMatrix::from_pure(n, &psi).unwrap();
        for g in &gates {
            g.apply_to_amplitudes(n, &mut psi).unwrap();
            rho.apply_unitary(g).unwrap();
        }
        let expect = DensityMatrix::from_pure(n, &psi).unwrap();
        for (a, b) in rho.as_slice().iter().zip(expect.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    pub(crate) fn random_state(n: usize, rank: usize, seed: u64) -> DensityMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1usize << n;
        let mut acc = vec![ZERO; d * d];
        let mut weights: Vec<f64> = (0..rank).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        for w in weights {
            let psi: Vec<Complex64> = (0..d)
                .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            let pure = DensityMatrix::from_pure(n, &psi).unwrap();
            for (a, b) in acc.iter_mut().zip(pure.as_slice()) {
                *a += b * w;
            }
        }
        DensityMatrix::from_row_major(n, acc).unwrap()
    }

    // dense oracle: embed U on targets and compute U ρ U† by matrix products
    fn dense_embed(n: usize, u: &QubitUnitary) -> DMatrix<Complex64> {
        let d = 1usize << n;
        let k = 1usize << u.arity();
        let t = u.targets();
        let local = |i: usize| -> usize {
            t.iter().enumerate().fold(0, |acc, (b, &q)| acc | ((i >> q & 1) << b))
        };
        let mask: usize = t.iter().map(|&q| 1 << q).sum();
        DMatrix::from_fn(d, d, |i, j| {
            if i & !mask != j & !mask {
                ZERO
            } else {
                u.matrix()[local(i) * k + local(j)]
            }
        })
    }

    fn to_dense(rho: &DensityMatrix) -> DMatrix<Complex64> {
        let d = rho.dim();
        DMatrix::from_fn(d, d, |i, j| rho.get(i, j))
    }

    fn max_diff(a: &DensityMatrix, b: &DMatrix<Complex64>) -> f64 {
        let d = a.dim();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                worst = worst.max((a.get(i, j) - b[(i, j)]).norm());
            }
        }
        worst
    }

    #[test]
    fn plus_state_entries() {
        let r1 = DensityMatrix::plus_state(1).unwrap();
        assert!(r1.as_slice().iter().all(|x| (*x - c(0.5, 0.0)).norm() < 1e-15));
        let r2 = DensityMatrix::plus_state(2).unwrap();
        assert!(r2.as_slice().iter().all(|x| (*x - c(0.25, 0.0)).norm() < 1e-15));
        let r8 = DensityMatrix::plus_state(8).unwrap();
        assert!((r8.trace().re - 1.0).abs() < 1e-12);
        assert!((r8.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plus_state_rejects_oversize() {
        assert!(matches!(
            DensityMatrix::plus_state(13),
            Err(Error::DimensionOverflow { .. })
        ));
        assert!(DensityMatrix::plus_state_capped(3, 2).is_err());
        assert!(DensityMatrix::plus_state(0).is_err());
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let rho = random_state(3, 3, 1);
        let mut out = rho.clone();
        out.apply_unitary(&QubitUnitary::identity(1)).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn x_flips_ground_state() {
        let mut rho = DensityMatrix::basis_state(1, 0).unwrap();
        rho.apply_unitary(&QubitUnitary::pauli_x(0)).unwrap();
        assert!((rho.get(1, 1) - ONE).norm() < 1e-15);
        assert!(rho.get(0, 0).norm() < 1e-15);
    }

    #[test]
    fn rx_pair_matches_precomputed_kron() {
        let a = PI / 4.0; // exp(-i a X) = RX(π/2) in the half-angle convention
        let rx = QubitUnitary::rx(0, a);
        let m = rx.matrix();
        // 4x4 = RX ⊗ RX with local index bit0 = target 0
        let mut kron = vec![ZERO; 16];
        for r in 0..4 {
            for col in 0..4 {
                kron[r * 4 + col] = m[(r >> 1) * 2 + (col >> 1)] * m[(r & 1) * 2 + (col & 1)];
            }
        }
        let both = QubitUnitary::new(vec![0, 2], kron).unwrap();
        let rho = random_state(3, 2, 9);
        let mut one_by_one = rho.clone();
        one_by_one.apply_unitary(&QubitUnitary::rx(0, a)).unwrap();
        one_by_one.apply_unitary(&QubitUnitary::rx(2, a)).unwrap();
        let mut fused = rho.clone();
        fused.apply_unitary(&both).unwrap();
        let worst = one_by_one
            .as_slice()
            .iter()
            .zip(fused.as_slice())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn apply_matches_dense_oracle_for_every_gate_kind() {
        let n = 3;
        let rho = random_state(n, 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gates = vec![
            QubitUnitary::rx(1, 0.7),
            QubitUnitary::rz(2, -1.3),
            QubitUnitary::rzz(0, 2, 0.4),
            QubitUnitary::rzz(2, 1, 2.2),
        ];
        // a generic non-diagonal two-qubit unitary: product of RX ⊗ RZ and RZZ
        let mut general = vec![ZERO; 16];
        let g: f64 = rng.random();
        let (s, co) = g.sin_cos();
        general[0] = c(co, 0.0);
        general[3] = c(0.0, -s);
        general[12] = c(0.0, -s);
        general[15] = c(co, 0.0);
        general[5] = c(0.0, 1.0);
        general[10] = c(0.0, -1.0);
        let gen = QubitUnitary::new(vec![2, 0], general).unwrap();
        for u in gates.iter().chain(std::iter::once(&gen)) {
            let mut fast = rho.clone();
            fast.apply_unitary(u).unwrap();
            let big = dense_embed(n, u);
            let want = &big * to_dense(&rho) * big.adjoint();
            assert!(max_diff(&fast, &want) < 1e-12, "{u:?}");
        }
    }

    #[test]
    fn rejects_bad_unitaries_and_targets() {
        assert!(matches!(
            QubitUnitary::new(vec![0], vec![ONE, ONE, ZERO, ONE]),
            Err(Error::NotUnitary { .. })
        ));
        assert!(QubitUnitary::new(vec![1, 1], vec![ZERO; 16]).is_err());
        let mut rho = DensityMatrix::plus_state(2).unwrap();
        assert!(matches!(
            rho.apply_unitary(&QubitUnitary::rx(2, 0.1)),
            Err(Error::InvalidTargets { .. })
        ));
    }

    #[test]
    fn spectrum_examples() {
        let mixed = DensityMatrix::maximally_mixed(2).unwrap();
        let ev = mixed.eigen_spectrum().unwrap();
        assert!(ev.iter().all(|x| (x - 0.25).abs() < 1e-12));

        let pure = random_state(3, 1, 11);
        let ev = pure.eigen_spectrum().unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-10);
        assert!(ev[1..].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn purity_examples() {
        assert!((random_state(2, 1, 4).purity() - 1.0).abs() < 1e-12);
        assert!((DensityMatrix::maximally_mixed(3).unwrap().purity() - 0.125).abs() < 1e-15);
        let diag = DensityMatrix::from_row_major(
            1,
            vec![c(0.75, 0.0), ZERO, ZERO, c(0.25, 0.0)],
        )
        .unwrap();
        assert!((diag.purity() - 0.625).abs() < 1e-15);
    }

    #[test]
    fn purity_equals_sum_of_squared_eigenvalues() {
        for seed in 0..5 {
            let rho = random_state(3, 1 + seed as usize, seed);
            let ev = rho.eigen_spectrum().unwrap();
            let s: f64 = ev.iter().map(|x| x * x).sum();
            assert!((s - rho.purity()).abs() < 1e-10);
            assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn from_row_major_rejects_non_states() {
        // trace 2
        assert!(DensityMatrix::from_row_major(1, vec![ONE, ZERO, ZERO, ONE]).is_err());
        // negative eigenvalue
        assert!(DensityMatrix::from_row_major(
            1,
            vec![c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]
        )
        .is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn unitaries_preserve_spectrum(
                seed in 0u64..1000,
                q0 in 0usize..3,
                q1 in 0usize..3,
                a in -4.0f64..4.0,
                b in -4.0f64..4.0,
            ) {
                prop_assume!(q0 != q1);
                let rho = random_state(3, 3, seed);
                let before = rho.eigen_spectrum().unwrap();
                let mut out = rho.clone();
                out.apply_unitary(&QubitUnitary::rx(q0, a)).unwrap();
                out.apply_unitary(&QubitUnitary::rzz(q0, q1, b)).unwrap();
                out.apply_unitary(&QubitUnitary::rz(q1, a * b)).unwrap();
                out.validate().unwrap();
                let after = out.eigen_spectrum().unwrap();
                for (x, y) in before.iter().zip(&after) {
                    prop_assert!((x - y).abs() < 1e-10);
                }
            }
        }
    }
}
