//! Variational linear-system solver.
//!
//! The global cost `C_G = 1 − |⟨b|A|x(α)⟩|² / ⟨x(α)|A†A|x(α)⟩` is evaluated
//! directly on the statevector for training; its gradient comes from a
//! reverse pass over the ansatz. `cost_global_hadamard` evaluates the same
//! quantity term by term from simulated Hadamard tests.

use std::io::{Read, Write};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::{decompose, pad_to_power_of_two, UnitaryDecomposition};
use crate::error::{invalid, Error, Result};
use crate::numerics::{ComplexMatrix, RealMatrix};
use crate::sim::{
    adjoint, hadamard_test, inner, pair_overlap, prepare_basis_embedding, u3_derivatives,
    u3_matrix, Ansatz, Part, StateVector,
};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Denominators below this are treated as `A|x⟩ = 0`.
pub const DEGENERATE_NORM: f64 = 1e-300;

#[derive(Debug, Clone)]
pub struct VlsProblem {
    matrix: RealMatrix,
    /// Non-zeros of `matrix` as `(row, col, value)`.
    entries: Vec<(usize, usize, f64)>,
    decomposition: UnitaryDecomposition,
    rhs: StateVector,
    ansatz: Ansatz,
    original_size: usize,
}

impl VlsProblem {
    /// Pads `A x = b` to the next power of two, decomposes the padded matrix
    /// and embeds `b/‖b‖`.
    pub fn new(a: &RealMatrix, b: &DVector<f64>, depth: usize) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.ncols(),
            });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if n < 2 {
            return Err(invalid("the system needs at least two unknowns"));
        }
        let (matrix, rhs) = pad_to_power_of_two(a, b);
        let num_qubits = matrix.nrows().trailing_zeros() as usize;
        let ansatz = Ansatz::new(num_qubits, depth)?;
        let rhs = prepare_basis_embedding(rhs.as_slice(), num_qubits)?;
        let decomposition = decompose(&matrix)?;
        let mut entries = Vec::new();
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                let v = matrix[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Ok(Self {
            matrix,
            entries,
            decomposition,
            rhs,
            ansatz,
            original_size: n,
        })
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn decomposition(&self) -> &UnitaryDecomposition {
        &self.decomposition
    }

    pub fn rhs_state(&self) -> &StateVector {
        &self.rhs
    }

    pub fn ansatz(&self) -> Ansatz {
        self.ansatz
    }

    pub fn num_qubits(&self) -> usize {
        self.ansatz.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Size of the system before padding.
    pub fn original_size(&self) -> usize {
        self.original_size
    }

    fn check_params(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.ansatz.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.ansatz.num_params(),
                found: alpha.len(),
            });
        }
        Ok(())
    }

    fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; x.len()];
        for &(i, j, v) in &self.entries {
            out[i] += x[j] * v;
        }
        out
    }

    fn apply_transpose(&self, y: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; y.len()];
        for &(i, j, v) in &self.entries {
            out[j] += y[i] * v;
        }
        out
    }

    /// `(C_G, ψ = A|x⟩, ⟨b|ψ⟩, ⟨ψ|ψ⟩)`.
    fn evaluate(&self, x: &StateVector) -> Result<(f64, Vec<Complex64>, Complex64, f64)> {
        let psi = self.apply(x.amplitudes());
        let g: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        if g < DEGENERATE_NORM {
            return Err(Error::DegenerateCost(g));
        }
        let overlap = inner(self.rhs.amplitudes(), &psi);
        let cost = (1.0 - overlap.norm_sqr() / g).clamp(0.0, 1.0);
        Ok((cost, psi, overlap, g))
    }

    /// Normalized `A⁻¹b` on the padded register.
    pub fn exact_solution(&self) -> Result<StateVector> {
        let b = DVector::from_iterator(self.dim(), self.rhs.amplitudes().iter().map(|a| a.re));
        let x = self
            .matrix
            .clone()
            .lu()
            .solve(&b)
            .ok_or(Error::Singular)?;
        prepare_basis_embedding(x.as_slice(), self.num_qubits())
    }
}

/// `|x(α)⟩`.
pub fn solution_state(problem: &VlsProblem, alpha: &[f64]) -> Result<StateVector> {
    problem.ansatz.prepare(alpha)
}

pub fn cost_global(problem: &VlsProblem, alpha: &[f64]) -> Result<f64> {
    let x = solution_state(problem, alpha)?;
    Ok(problem.evaluate(&x)?.0)
}

/// Unitary whose first column is `b`: a Householder reflection mapping
/// `|0⟩` to `b` after rotating the phase of `b₀` to the real axis.
pub fn state_preparation_unitary(b: &StateVector) -> ComplexMatrix {
    let dim = b.dim();
    let amps = b.amplitudes();
    let phase = if amps[0].norm() > 0.0 {
        amps[0] / amps[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let rotated: Vec<Complex64> = amps.iter().map(|a| a * phase.conj()).collect();
    let mut w: Vec<Complex64> = rotated.iter().map(|a| -a).collect();
    w[0] += 1.0;
    let wn: f64 = w.iter().map(|a| a.norm_sqr()).sum();
    let mut u = ComplexMatrix::identity(dim, dim);
    if wn > 1e-30 {
        for i in 0..dim {
            for j in 0..dim {
                u[(i, j)] -= w[i] * w[j].conj() * (2.0 / wn);
            }
        }
    }
    u * phase
}

/// `Re + i·Im` of `⟨φ|U|φ⟩` from two Hadamard tests.
fn hadamard_expectation(u: &ComplexMatrix, state: &StateVector) -> Result<Complex64> {
    Ok(Complex64::new(
        hadamard_test(u, state, Part::Real)?,
        hadamard_test(u, state, Part::Imag)?,
    ))
}

/// Term-expanded cost together with the largest imaginary residue of the
/// two double sums (which cancel analytically).
pub fn cost_global_hadamard_terms(problem: &VlsProblem, alpha: &[f64]) -> Result<(f64, f64)> {
    problem.check_params(alpha)?;
    let n = problem.num_qubits();
    let ub = state_preparation_unitary(&problem.rhs);
    let ux = problem.ansatz.unitary(alpha)?;
    let x = StateVector::from_amplitudes_unchecked(ux.column(0).iter().copied().collect());
    let zero = StateVector::zero(n);
    let terms = &problem.decomposition.terms;
    // ⟨b|A_k|x⟩ = ⟨0|U_b† A_k U_x|0⟩
    let beta: Vec<Complex64> = terms
        .iter()
        .map(|(_, a)| hadamard_expectation(&(ub.adjoint() * a * &ux), &zero))
        .collect::<Result<_>>()?;
    let mut num = ZERO;
    let mut den = ZERO;
    for (k, (ck, ak)) in terms.iter().enumerate() {
        for (l, (cl, al)) in terms.iter().enumerate() {
            let coeff = ck * cl.conj();
            num += coeff * beta[k] * beta[l].conj();
            den += coeff * hadamard_expectation(&(al.adjoint() * ak), &x)?;
        }
    }
    if den.re < DEGENERATE_NORM {
        return Err(Error::DegenerateCost(den.re));
    }
    let cost = (1.0 - num.re / den.re).clamp(0.0, 1.0);
    Ok((cost, num.im.abs().max(den.im.abs())))
}

pub fn cost_global_hadamard(problem: &VlsProblem, alpha: &[f64]) -> Result<f64> {
    Ok(cost_global_hadamard_terms(problem, alpha)?.0)
}

/// `(C_G, ∇C_G)` by one forward and one reverse sweep over the ansatz.
pub fn cost_and_gradient(problem: &VlsProblem, alpha: &[f64]) -> Result<(f64, Vec<f64>)> {
    problem.check_params(alpha)?;
    let ansatz = problem.ansatz;
    let mut phi = ansatz.prepare_unchecked(alpha);
    let (cost, psi, overlap, g) = problem.evaluate(&phi)?;
    let f = overlap.norm_sqr();
    // ∂C/∂x̄ = A†(−b⟨b|ψ⟩/g + (f/g²)ψ)
    let b = problem.rhs.amplitudes();
    let seed: Vec<Complex64> = b
        .iter()
        .zip(&psi)
        .map(|(bi, pi)| -bi * overlap / g + pi * (f / (g * g)))
        .collect();
    let mut lambda = StateVector::from_amplitudes_unchecked(problem.apply_transpose(&seed));

    let mut grad = vec![0.0; alpha.len()];
    for layer in (0..ansatz.depth).rev() {
        for q in (0..ansatz.num_qubits).rev() {
            let o = ansatz.param_index(layer, q);
            let (t, p, l) = (alpha[o], alpha[o + 1], alpha[o + 2]);
            let g_dag = adjoint(&u3_matrix(t, p, l));
            phi.apply_gate_unchecked(q, &g_dag);
            let m = pair_overlap(&lambda, &phi, q);
            for (k, d) in u3_derivatives(t, p, l).iter().enumerate() {
                let tr = d[0][0] * m[0][0] + d[0][1] * m[0][1] + d[1][0] * m[1][0] + d[1][1] * m[1][1];
                grad[o + k] = 2.0 * tr.re;
            }
            lambda.apply_gate_unchecked(q, &g_dag);
        }
        if layer > 0 {
            phi.apply_cx_ring_inverse();
            lambda.apply_cx_ring_inverse();
        }
    }
    Ok((cost, grad))
}

pub fn gradient(problem: &VlsProblem, alpha: &[f64]) -> Result<Vec<f64>> {
    Ok(cost_and_gradient(problem, alpha)?.1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// Each parameter uniform in `[0, 2π)`, drawn from the config seed.
    Random,
    WarmStart(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub loss_threshold: f64,
    pub max_steps: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub init: Init,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            loss_threshold: 1e-4,
            max_steps: 10_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            init: Init::Random,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.loss_threshold > 0.0 && self.loss_threshold < 1.0) {
            return Err(invalid(format!(
                "loss threshold {} outside (0, 1)",
                self.loss_threshold
            )));
        }
        if self.max_steps == 0 {
            return Err(invalid("max_steps must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(invalid("Adam moment decays must lie in [0, 1)"));
        }
        if !(self.adam_eps > 0.0) {
            return Err(invalid("Adam epsilon must be positive"));
        }
        Ok(())
    }
}

pub fn random_parameters(count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub final_parameters: Vec<f64>,
    /// Number of Adam updates applied.
    pub steps_taken: usize,
    /// `C_G` before the first update followed by the loss after every update.
    pub loss_trace: Vec<f64>,
    pub converged: bool,
}

impl TrainResult {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the initial loss")
    }
}

pub fn train(problem: &VlsProblem, config: &TrainConfig) -> Result<TrainResult> {
    config.validate()?;
    let count = problem.ansatz.num_params();
    let mut alpha = match &config.init {
        Init::Random => random_parameters(count, config.seed),
        Init::WarmStart(a) => {
            problem.check_params(a)?;
            a.clone()
        }
    };
    let (mut loss, mut grad) = cost_and_gradient(problem, &alpha)?;
    let mut trace = vec![loss];
    let mut m = vec![0.0; count];
    let mut v = vec![0.0; count];
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let mut steps = 0;
    while loss > config.loss_threshold && steps < config.max_steps {
        steps += 1;
        let c1 = 1.0 - b1.powi(steps as i32);
        let c2 = 1.0 - b2.powi(steps as i32);
        for i in 0..count {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            alpha[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
        (loss, grad) = cost_and_gradient(problem, &alpha)?;
        trace.push(loss);
    }
    Ok(TrainResult {
        final_parameters: alpha,
        steps_taken: steps,
        loss_trace: trace,
        converged: loss <= config.loss_threshold,
    })
}

/// `√(1 − |⟨u|v⟩|²)` for the normalized pure states `u`, `v`.
pub fn trace_distance(u: &[Complex64], v: &[Complex64]) -> f64 {
    let nu: f64 = u.iter().map(|a| a.norm_sqr()).sum();
    let nv: f64 = v.iter().map(|a| a.norm_sqr()).sum();
    let fid = inner(u, v).norm_sqr() / (nu * nv);
    (1.0 - fid).max(0.0).sqrt()
}

/// Multiplies by the phase that makes the largest-magnitude amplitude real
/// and positive.
pub fn align_global_phase(amps: &[Complex64]) -> Vec<Complex64> {
    let largest = amps
        .iter()
        .copied()
        .max_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()))
        .unwrap_or(ZERO);
    if largest.norm() == 0.0 {
        return amps.to_vec();
    }
    let phase = largest.conj() / largest.norm();
    amps.iter().map(|a| a * phase).collect()
}

#[derive(Serialize, Deserialize)]
struct LossRow {
    step: usize,
    loss: f64,
}

pub fn write_loss_trace<W: Write>(writer: W, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (step, &loss) in trace.iter().enumerate() {
        w.serialize(LossRow { step, loss })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_trace<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(reader);
    let mut trace = Vec::new();
    for (i, row) in r.deserialize::<LossRow>().enumerate() {
        let row = row?;
        if row.step != i {
            return Err(Error::Parse(format!("loss trace step {} out of order", row.step)));
        }
        trace.push(row.loss);
    }
    Ok(trace)
}
