//! Finite MDPs, the Bellman linear system of a deterministic policy, and
//! the classical policy-iteration oracle.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::numerics::RealMatrix;

pub mod frozen_lake;

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite MDP with dense `(s, a, s')` transition and reward tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    discount: f64,
}

impl Mdp {
    /// Validates stochasticity, absorbing terminals and the discount range.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        terminal: &[usize],
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(invalid("an MDP needs at least one state and one action"));
        }
        let len = num_states * num_actions * num_states;
        if transition.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: transition.len(),
            });
        }
        if reward.len() != len {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: reward.len(),
            });
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(invalid(format!("discount {discount} outside [0, 1)")));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(invalid("rewards must be finite"));
        }
        let mut is_terminal = vec![false; num_states];
        for &t in terminal {
            if t >= num_states {
                return Err(invalid(format!("terminal state {t} out of range")));
            }
            is_terminal[t] = true;
        }
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            reward,
            terminal: is_terminal,
            discount,
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                let row = mdp.transition_row(s, a);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(invalid(format!("p(.|{s},{a}) has entries outside [0, 1]")));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(invalid(format!("p(.|{s},{a}) sums to {total}")));
                }
                if mdp.terminal[s] && (row[s] != 1.0 || mdp.reward(s, a, s) != 0.0) {
                    return Err(invalid(format!("terminal state {s} is not absorbing")));
                }
            }
        }
        Ok(mdp)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Size `|S|·|A|` of the Bellman system.
    pub fn system_size(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn terminal_states(&self) -> impl Iterator<Item = usize> + '_ {
        self.terminal
            .iter()
            .enumerate()
            .filter_map(|(s, &t)| t.then_some(s))
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[self.offset(s, a) + next]
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.transition[o..o + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[self.offset(s, a) + next]
    }

    /// Same dynamics and rewards under a different discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&discount) {
            return Err(invalid(format!("discount {discount} outside [0, 1)")));
        }
        Ok(Self {
            discount,
            ..self.clone()
        })
    }

    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.num_actions + a) * self.num_states
    }
}

/// One action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicPolicy {
    action_of: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(action_of: Vec<usize>, num_actions: usize) -> Result<Self> {
        if let Some(&bad) = action_of.iter().find(|&&a| a >= num_actions) {
            return Err(invalid(format!(
                "action {bad} out of range for {num_actions} actions"
            )));
        }
        Ok(Self { action_of })
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self {
            action_of: vec![action; num_states],
        }
    }

    /// Independent uniformly random action per state.
    pub fn random(mdp: &Mdp, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            action_of: (0..mdp.num_states())
                .map(|_| rng.random_range(0..mdp.num_actions()))
                .collect(),
        }
    }

    pub fn action(&self, s: usize) -> usize {
        self.action_of[s]
    }

    pub fn actions(&self) -> &[usize] {
        &self.action_of
    }

    pub fn len(&self) -> usize {
        self.action_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_of.is_empty()
    }

    /// Equality restricted to non-terminal states.
    pub fn agrees_on_nonterminal(&self, other: &Self, mdp: &Mdp) -> bool {
        (0..mdp.num_states())
            .filter(|&s| !mdp.is_terminal(s))
            .all(|s| self.action_of[s] == other.action_of[s])
    }

    /// Actions as a compact string, e.g. `"0213"` (`.` separated when `|A| > 10`).
    pub fn to_action_string(&self) -> String {
        if self.action_of.iter().all(|&a| a < 10) {
            self.action_of.iter().map(|a| a.to_string()).collect()
        } else {
            self.action_of
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(".")
        }
    }

    pub fn parse_action_string(s: &str, num_actions: usize) -> Result<Self> {
        let parsed: Option<Vec<usize>> = if s.contains('.') {
            s.split('.').map(|t| t.parse().ok()).collect()
        } else {
            s.chars().map(|c| c.to_digit(10).map(|d| d as usize)).collect()
        };
        let actions = parsed.ok_or_else(|| Error::Parse(format!("bad policy string {s:?}")))?;
        Self::new(actions, num_actions)
    }
}

/// Bellman system `(I − γPΠ) Q = R` of a deterministic policy, with the
/// flattening `i = s·|A| + a`.
#[derive(Debug, Clone)]
pub struct BellmanLse {
    pub matrix: RealMatrix,
    pub rhs: DVector<f64>,
    num_states: usize,
    num_actions: usize,
}

impl BellmanLse {
    pub fn size(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    pub fn state_action(&self, i: usize) -> (usize, usize) {
        (i / self.num_actions, i % self.num_actions)
    }
}

pub fn assemble_lse(mdp: &Mdp, policy: &DeterministicPolicy) -> BellmanLse {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    assert_eq!(policy.len(), ns, "policy length must equal |S|");
    let n = ns * na;
    let gamma = mdp.discount();
    let mut matrix = RealMatrix::identity(n, n);
    let mut rhs = DVector::zeros(n);
    for s in 0..ns {
        for a in 0..na {
            let i = s * na + a;
            let mut r = 0.0;
            for (next, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                r += p * mdp.reward(s, a, next);
                let j = next * na + policy.action(next);
                matrix[(i, j)] -= gamma * p;
            }
            rhs[i] = r;
        }
    }
    BellmanLse {
        matrix,
        rhs,
        num_states: ns,
        num_actions: na,
    }
}

/// Direct dense solve of the Bellman system.
pub fn solve_exact(lse: &BellmanLse) -> Result<DVector<f64>> {
    let lu = lse.matrix.clone().lu();
    let q = lu.solve(&lse.rhs).ok_or(Error::Singular)?;
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(q)
}

/// `π(s) = argmax_a Q(s,a)` with ties toward the smallest action; terminal
/// states get action 0.
pub fn greedy_improvement(q: &[f64], mdp: &Mdp) -> DeterministicPolicy {
    let na = mdp.num_actions();
    assert_eq!(q.len(), mdp.system_size(), "Q must have |S|·|A| entries");
    let action_of = (0..mdp.num_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0
            } else {
                argmax_first(&q[s * na..(s + 1) * na])
            }
        })
        .collect();
    DeterministicPolicy { action_of }
}

/// Index of the first maximal entry.
pub(crate) fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub const DEFAULT_PI_CAP: usize = 100;

/// Policy iteration from `initial`; returns the fixed point and the number
/// of evaluate/improve cycles.
pub fn classical_policy_iteration(
    mdp: &Mdp,
    initial: &DeterministicPolicy,
) -> Result<(DeterministicPolicy, usize)> {
    let trace = policy_iteration_trace(mdp, initial, DEFAULT_PI_CAP)?;
    let iterations = trace.len() - 1;
    Ok((trace.into_iter().last().expect("non-empty trace"), iterations))
}

/// Every policy visited by policy iteration, starting with `initial`.
pub fn policy_iteration_trace(
    mdp: &Mdp,
    initial: &DeterministicPolicy,
    cap: usize,
) -> Result<Vec<DeterministicPolicy>> {
    let mut trace = vec![initial.clone()];
    for _ in 0..cap {
        let current = trace.last().expect("non-empty trace");
        let q = solve_exact(&assemble_lse(mdp, current))?;
        let next = greedy_improvement(q.as_slice(), mdp);
        let done = next.agrees_on_nonterminal(current, mdp);
        trace.push(next);
        if done {
            return Ok(trace);
        }
    }
    Err(Error::NoConvergence(cap))
}

/// One sampled discounted return of following `policy` from `start`.
pub fn rollout_return(
    mdp: &Mdp,
    policy: &DeterministicPolicy,
    start: usize,
    horizon: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rollout_with(mdp, policy, start, horizon, &mut rng)
}

pub(crate) fn rollout_with(
    mdp: &Mdp,
    policy: &DeterministicPolicy,
    start: usize,
    horizon: usize,
    rng: &mut impl Rng,
) -> f64 {
    let mut s = start;
    let mut ret = 0.0;
    let mut weight = 1.0;
    for _ in 0..horizon {
        if mdp.is_terminal(s) {
            break;
        }
        let a = policy.action(s);
        let u: f64 = rng.random();
        let row = mdp.transition_row(s, a);
        let mut acc = 0.0;
        let mut next = row.len() - 1;
        for (k, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = k;
                break;
            }
        }
        ret += weight * mdp.reward(s, a, next);
        weight *= mdp.discount();
        s = next;
    }
    ret
}
