//! Exact statevector simulation.
//!
//! Qubit 0 is the most significant bit of a basis index, so the basis state
//! `|i⟩` of the Bellman system with `i = s·|A| + a` reads left to right as
//! qubits `0, 1, …, n−1`.

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::numerics::ComplexMatrix;

pub type Gate = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩`.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[0] = ONE;
        Self { num_qubits, amps }
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << num_qubits];
        amps[index] = ONE;
        Self { num_qubits, amps }
    }

    /// Wraps amplitudes; the length must be a power of two and the norm 1.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(invalid(format!("state length {dim} is not a power of two")));
        }
        let state = Self {
            num_qubits: dim.trailing_zeros() as usize,
            amps,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("state norm {norm} is not 1")));
        }
        Ok(state)
    }

    pub(crate) fn from_amplitudes_unchecked(amps: Vec<Complex64>) -> Self {
        Self {
            num_qubits: amps.len().trailing_zeros() as usize,
            amps,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        inner(&self.amps, &other.amps)
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(Error::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    fn stride(&self, qubit: usize) -> usize {
        1 << (self.num_qubits - 1 - qubit)
    }

    pub fn apply_gate(&mut self, qubit: usize, gate: &Gate) -> Result<()> {
        self.check_qubit(qubit)?;
        self.apply_gate_unchecked(qubit, gate);
        Ok(())
    }

    pub(crate) fn apply_gate_unchecked(&mut self, qubit: usize, g: &Gate) {
        let stride = self.stride(qubit);
        for block in self.amps.chunks_exact_mut(2 * stride) {
            let (lo, hi) = block.split_at_mut(stride);
            for (a0, a1) in lo.iter_mut().zip(hi.iter_mut()) {
                let (x, y) = (*a0, *a1);
                *a0 = g[0][0] * x + g[0][1] * y;
                *a1 = g[1][0] * x + g[1][1] * y;
            }
        }
    }

    pub fn apply_u3(&mut self, qubit: usize, theta: f64, phi: f64, lambda: f64) -> Result<()> {
        self.apply_gate(qubit, &u3_matrix(theta, phi, lambda))
    }

    pub fn apply_cx(&mut self, control: usize, target: usize) -> Result<()> {
        self.check_qubit(control)?;
        self.check_qubit(target)?;
        if control == target {
            return Err(invalid("CX control and target coincide"));
        }
        self.apply_cx_unchecked(control, target);
        Ok(())
    }

    pub(crate) fn apply_cx_unchecked(&mut self, control: usize, target: usize) {
        let cmask = self.stride(control);
        let tmask = self.stride(target);
        for i in 0..self.amps.len() {
            if i & cmask != 0 && i & tmask == 0 {
                self.amps.swap(i, i | tmask);
            }
        }
    }

    /// `CX_{0,1} ⋯ CX_{n−2,n−1} CX_{n−1,0}` as an operator product, i.e.
    /// `CX(n−1→0)` acts first and `CX(0→1)` last.
    pub fn apply_cx_ring(&mut self) -> Result<()> {
        if self.num_qubits < 2 {
            return Err(invalid("the CX ring needs at least two qubits"));
        }
        self.apply_cx_ring_unchecked();
        Ok(())
    }

    pub(crate) fn apply_cx_ring_unchecked(&mut self) {
        let n = self.num_qubits;
        self.apply_cx_unchecked(n - 1, 0);
        for q in (0..n - 1).rev() {
            self.apply_cx_unchecked(q, q + 1);
        }
    }

    /// Inverse of [`apply_cx_ring`](Self::apply_cx_ring).
    pub(crate) fn apply_cx_ring_inverse(&mut self) {
        let n = self.num_qubits;
        for q in 0..n - 1 {
            self.apply_cx_unchecked(q, q + 1);
        }
        self.apply_cx_unchecked(n - 1, 0);
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `U3(θ,φ,λ) = [[cos θ/2, −e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(φ+λ)} cos θ/2]]`.
pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> Gate {
    let (s, c) = (theta / 2.0).sin_cos();
    let el = Complex64::cis(lambda);
    let ep = Complex64::cis(phi);
    let epl = Complex64::cis(phi + lambda);
    [[ONE * c, -el * s], [ep * s, epl * c]]
}

/// Partial derivatives of [`u3_matrix`] with respect to `(θ, φ, λ)`.
pub(crate) fn u3_derivatives(theta: f64, phi: f64, lambda: f64) -> [Gate; 3] {
    let (s, c) = (theta / 2.0).sin_cos();
    let el = Complex64::cis(lambda);
    let ep = Complex64::cis(phi);
    let epl = Complex64::cis(phi + lambda);
    let i = Complex64::i();
    [
        [[ONE * (-0.5 * s), -el * (0.5 * c)], [ep * (0.5 * c), epl * (-0.5 * s)]],
        [[ZERO, ZERO], [i * ep * s, i * epl * c]],
        [[ZERO, -i * el * s], [ZERO, i * epl * c]],
    ]
}

pub(crate) fn adjoint(g: &Gate) -> Gate {
    [[g[0][0].conj(), g[1][0].conj()], [g[0][1].conj(), g[1][1].conj()]]
}

pub const HADAMARD: Gate = {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [
        [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
        [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
    ]
};

pub const S_DAGGER: Gate = [[ONE, ZERO], [ZERO, Complex64::new(0.0, -1.0)]];

/// `M[r][c] = Σ conj(λ_r) φ_c` over amplitude pairs differing in `qubit`,
/// so that `⟨λ| G_qubit |φ⟩ = Σ_{r,c} G[r][c] · M[r][c]`.
pub(crate) fn pair_overlap(lambda: &StateVector, phi: &StateVector, qubit: usize) -> Gate {
    let stride = phi.stride(qubit);
    let mut m = [[ZERO; 2]; 2];
    for (lb, pb) in lambda
        .amps
        .chunks_exact(2 * stride)
        .zip(phi.amps.chunks_exact(2 * stride))
    {
        let (l0, l1) = lb.split_at(stride);
        let (p0, p1) = pb.split_at(stride);
        for k in 0..stride {
            let (a0, a1) = (l0[k].conj(), l1[k].conj());
            let (b0, b1) = (p0[k], p1[k]);
            m[0][0] += a0 * b0;
            m[0][1] += a0 * b1;
            m[1][0] += a1 * b0;
            m[1][1] += a1 * b1;
        }
    }
    m
}

/// Layered hardware-efficient circuit: layer 0 applies `U3` to every qubit,
/// each further layer applies the CX ring followed by `U3` on every qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ansatz {
    pub num_qubits: usize,
    pub depth: usize,
}

impl Ansatz {
    pub fn new(num_qubits: usize, depth: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(invalid("the ansatz needs at least one qubit"));
        }
        if depth == 0 {
            return Err(invalid("the ansatz depth must be at least 1"));
        }
        if depth > 1 && num_qubits < 2 {
            return Err(invalid("layers beyond the first need at least two qubits"));
        }
        Ok(Self { num_qubits, depth })
    }

    pub fn num_params(&self) -> usize {
        3 * self.num_qubits * self.depth
    }

    /// Offset of `(θ, φ, λ)` for `qubit` in `layer`.
    pub fn param_index(&self, layer: usize, qubit: usize) -> usize {
        (layer * self.num_qubits + qubit) * 3
    }

    pub fn prepare(&self, params: &[f64]) -> Result<StateVector> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: params.len(),
            });
        }
        Ok(self.prepare_unchecked(params))
    }

    pub(crate) fn prepare_unchecked(&self, params: &[f64]) -> StateVector {
        let mut state = StateVector::zero(self.num_qubits);
        for layer in 0..self.depth {
            if layer > 0 {
                state.apply_cx_ring_unchecked();
            }
            for q in 0..self.num_qubits {
                let o = self.param_index(layer, q);
                let g = u3_matrix(params[o], params[o + 1], params[o + 2]);
                state.apply_gate_unchecked(q, &g);
            }
        }
        state
    }

    /// Dense unitary of the circuit, column `j` being the image of `|j⟩`.
    pub fn unitary(&self, params: &[f64]) -> Result<ComplexMatrix> {
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                found: params.len(),
            });
        }
        let dim = 1 << self.num_qubits;
        let mut u = ComplexMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut state = StateVector::basis(self.num_qubits, j);
            for layer in 0..self.depth {
                if layer > 0 {
                    state.apply_cx_ring_unchecked();
                }
                for q in 0..self.num_qubits {
                    let o = self.param_index(layer, q);
                    let g = u3_matrix(params[o], params[o + 1], params[o + 2]);
                    state.apply_gate_unchecked(q, &g);
                }
            }
            for (i, a) in state.amps.iter().enumerate() {
                u[(i, j)] = *a;
            }
        }
        Ok(u)
    }
}

/// Ansatz shape together with its parameters (shape `depth × qubits × 3`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnsatzConfig {
    pub ansatz: Ansatz,
    pub params: Vec<f64>,
}

impl AnsatzConfig {
    pub fn new(num_qubits: usize, depth: usize, params: Vec<f64>) -> Result<Self> {
        let ansatz = Ansatz::new(num_qubits, depth)?;
        if params.len() != ansatz.num_params() {
            return Err(Error::DimensionMismatch {
                expected: ansatz.num_params(),
                found: params.len(),
            });
        }
        Ok(Self { ansatz, params })
    }
}

pub fn prepare_ansatz(cfg: &AnsatzConfig) -> StateVector {
    cfg.ansatz.prepare_unchecked(&cfg.params)
}

/// `M|state⟩` (generally unnormalized) and its 2-norm.
pub fn apply_matrix(state: &StateVector, m: &ComplexMatrix) -> Result<(Vec<Complex64>, f64)> {
    let dim = state.dim();
    if m.nrows() != dim || m.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: m.nrows(),
        });
    }
    let out = matvec(m, &state.amps);
    let norm = out.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Ok((out, norm))
}

pub(crate) fn matvec(m: &ComplexMatrix, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; m.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        for (o, a) in out.iter_mut().zip(m.column(j).iter()) {
            *o += a * xj;
        }
    }
    out
}

/// `v/‖v‖` zero-padded onto `num_qubits` qubits.
pub fn prepare_basis_embedding(v: &[f64], num_qubits: usize) -> Result<StateVector> {
    let dim = 1usize << num_qubits;
    if v.len() > dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(invalid("cannot embed a zero or non-finite vector"));
    }
    let mut amps = vec![ZERO; dim];
    for (a, &x) in amps.iter_mut().zip(v) {
        *a = Complex64::new(x / norm, 0.0);
    }
    Ok(StateVector::from_amplitudes_unchecked(amps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Real,
    Imag,
}

/// `Re⟨φ|U|φ⟩` or `Im⟨φ|U|φ⟩` from an exactly simulated ancilla circuit:
/// H on the ancilla, controlled-U, optional S†, H, then `⟨Z⟩` on the ancilla.
pub fn hadamard_test(u: &ComplexMatrix, state: &StateVector, part: Part) -> Result<f64> {
    let dim = state.dim();
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: u.nrows(),
        });
    }
    // ancilla is qubit 0, i.e. the upper half of the extended register
    let mut amps = vec![ZERO; 2 * dim];
    amps[..dim].copy_from_slice(&state.amps);
    let mut reg = StateVector::from_amplitudes_unchecked(amps);
    reg.apply_gate_unchecked(0, &HADAMARD);
    let controlled = matvec(u, &reg.amps[dim..]);
    reg.amps[dim..].copy_from_slice(&controlled);
    if part == Part::Imag {
        reg.apply_gate_unchecked(0, &S_DAGGER);
    }
    reg.apply_gate_unchecked(0, &HADAMARD);
    let p0: f64 = reg.amps[..dim].iter().map(|a| a.norm_sqr()).sum();
    let p1: f64 = reg.amps[dim..].iter().map(|a| a.norm_sqr()).sum();
    Ok(p0 - p1)
}

/// `shots` i.i.d. basis-state samples; returns counts per basis index.
pub fn sample_counts(state: &StateVector, shots: usize, seed: u64) -> Vec<usize> {
    let mut counts = vec![0; state.dim()];
    let dist = match WeightedIndex::new(state.probabilities()) {
        Ok(d) => d,
        Err(_) => return counts,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..shots {
        counts[dist.sample(&mut rng)] += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QubitRequirements {
    /// Register size of the ansatz, `⌈log₂N⌉`.
    pub ansatz: usize,
    /// With one ancilla for the Hadamard test.
    pub hadamard: usize,
    /// Two registers plus one ancilla for the Hadamard-overlap test.
    pub hadamard_overlap: usize,
}

pub fn qubit_requirements(system_size: usize) -> QubitRequirements {
    let n = system_size.max(1).next_power_of_two().trailing_zeros() as usize;
    QubitRequirements {
        ansatz: n,
        hadamard: n + 1,
        hadamard_overlap: 2 * n + 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
        let amps: Vec<Complex64> = (0..1 << n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        StateVector::from_amplitudes(amps.into_iter().map(|a| a / norm).collect()).unwrap()
    }

    #[test]
    fn u3_identity_and_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_state(3, &mut rng);
        let mut t = s.clone();
        t.apply_u3(1, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(s, t);

        let mut z = StateVector::zero(1);
        z.apply_u3(0, PI, 0.0, PI).unwrap();
        assert!(z.amplitudes()[0].norm() < 1e-15);
        assert!((z.amplitudes()[1] - ONE).norm() < 1e-15);
    }

    #[test]
    fn gates_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = random_state(4, &mut rng);
        for q in 0..4 {
            s.apply_u3(q, rng.random(), rng.random(), rng.random()).unwrap();
        }
        s.apply_cx_ring().unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qubit_range_checked() {
        let mut s = StateVector::zero(2);
        assert!(matches!(
            s.apply_u3(2, 0.0, 0.0, 0.0),
            Err(Error::QubitOutOfRange { .. })
        ));
        assert!(StateVector::zero(1).apply_cx_ring().is_err());
    }

    #[test]
    fn cx_ring_on_two_qubits() {
        let mut s = StateVector::zero(2);
        s.apply_cx_ring().unwrap();
        assert_eq!(s, StateVector::zero(2));
        // |10⟩: CX(1→0) leaves it, CX(0→1) flips qubit 1 → |11⟩
        let mut s = StateVector::basis(2, 0b10);
        s.apply_cx_ring().unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11));
        s.apply_cx_ring_inverse();
        assert_eq!(s, StateVector::basis(2, 0b10));
    }

    #[test]
    fn ansatz_basics() {
        let a = Ansatz::new(6, 12).unwrap();
        assert_eq!(a.num_params(), 216);
        let zero = vec![0.0; a.num_params()];
        assert_eq!(a.prepare(&zero).unwrap(), StateVector::zero(6));
        let one = Ansatz::new(1, 1).unwrap();
        let s = one.prepare(&[PI, 0.0, PI]).unwrap();
        assert!((s.amplitudes()[1] - ONE).norm() < 1e-15);
        assert!(Ansatz::new(1, 2).is_err());
        assert!(Ansatz::new(3, 0).is_err());
    }

    #[test]
    fn ansatz_unitary_matches_preparation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Ansatz::new(3, 3).unwrap();
        let params: Vec<f64> = (0..a.num_params()).map(|_| rng.random_range(0.0..6.0)).collect();
        let u = a.unitary(&params).unwrap();
        let s = a.prepare(&params).unwrap();
        for i in 0..8 {
            assert!((u[(i, 0)] - s.amplitudes()[i]).norm() < 1e-13);
        }
        let eye = ComplexMatrix::identity(8, 8);
        assert!((u.adjoint() * &u - eye).norm() < 1e-12);
    }

    #[test]
    fn matrix_application() {
        let s = StateVector::basis(2, 1);
        let (v, n) = apply_matrix(&s, &ComplexMatrix::identity(4, 4)).unwrap();
        assert_eq!(v, s.amplitudes());
        assert_eq!(n, 1.0);
        let (v, n) = apply_matrix(&s, &(ComplexMatrix::identity(4, 4) * Complex64::new(2.0, 0.0)))
            .unwrap();
        assert_eq!(v[1], Complex64::new(2.0, 0.0));
        assert_eq!(n, 2.0);
        assert!(apply_matrix(&s, &ComplexMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn basis_embedding() {
        let s = prepare_basis_embedding(&[1.0, 0.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(s, StateVector::zero(2));
        let s = prepare_basis_embedding(&[1.0, 1.0, 0.0, 0.0], 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0].re - h).abs() < 1e-15);
        assert!((s.amplitudes()[1].re - h).abs() < 1e-15);
        assert!(prepare_basis_embedding(&[0.0, 0.0], 1).is_err());
        assert!(prepare_basis_embedding(&[1.0; 5], 2).is_err());
    }

    #[test]
    fn hadamard_test_simple_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = random_state(2, &mut rng);
        let eye = ComplexMatrix::identity(4, 4);
        assert!((hadamard_test(&eye, &s, Part::Real).unwrap() - 1.0).abs() < 1e-12);
        assert!(hadamard_test(&eye, &s, Part::Imag).unwrap().abs() < 1e-12);
        let z = ComplexMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![ONE, -ONE]));
        let one = StateVector::basis(1, 1);
        assert!((hadamard_test(&z, &one, Part::Real).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn hadamard_test_matches_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let s = random_state(2, &mut rng);
            let a = Ansatz::new(2, 2).unwrap();
            let p: Vec<f64> = (0..a.num_params()).map(|_| rng.random_range(0.0..6.3)).collect();
            let u = a.unitary(&p).unwrap();
            let (us, _) = apply_matrix(&s, &u).unwrap();
            let direct = inner(s.amplitudes(), &us);
            assert!((hadamard_test(&u, &s, Part::Real).unwrap() - direct.re).abs() < 1e-12);
            assert!((hadamard_test(&u, &s, Part::Imag).unwrap() - direct.im).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling() {
        let counts = sample_counts(&StateVector::zero(3), 500, 1);
        assert_eq!(counts[0], 500);

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = StateVector::from_amplitudes(vec![
            Complex64::new(h, 0.0),
            ZERO,
            ZERO,
            Complex64::new(h, 0.0),
        ])
        .unwrap();
        let counts = sample_counts(&bell, 10_000, 3);
        assert_eq!(counts[1] + counts[2], 0);
        assert!((counts[0] as f64 - 5000.0).abs() <= 250.0);
        assert_eq!(counts, sample_counts(&bell, 10_000, 3));
    }

    #[test]
    fn qubit_counts() {
        let r = qubit_requirements(64);
        assert_eq!((r.ansatz, r.hadamard, r.hadamard_overlap), (6, 7, 13));
        let r = qubit_requirements(256);
        assert_eq!((r.ansatz, r.hadamard, r.hadamard_overlap), (8, 9, 17));
        let r = qubit_requirements(2);
        assert_eq!((r.ansatz, r.hadamard, r.hadamard_overlap), (1, 2, 3));
    }

    #[test]
    fn u3_derivatives_match_finite_differences() {
        let (t, p, l) = (0.7, -1.3, 2.1);
        let h = 1e-6;
        let d = u3_derivatives(t, p, l);
        let shifts = [(h, 0.0, 0.0), (0.0, h, 0.0), (0.0, 0.0, h)];
        for (k, (dt, dp, dl)) in shifts.iter().enumerate() {
            let plus = u3_matrix(t + dt, p + dp, l + dl);
            let minus = u3_matrix(t - dt, p - dp, l - dl);
            for r in 0..2 {
                for c in 0..2 {
                    let fd = (plus[r][c] - minus[r][c]) / (2.0 * h);
                    assert!((fd - d[k][r][c]).norm() < 1e-8);
                }
            }
        }
    }
}
