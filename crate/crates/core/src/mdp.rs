//! Finite MDP model and exact dynamic-programming operators.
//!
//! Every argmax in this module breaks ties toward the lowest action index, so
//! greedy and lookahead policies are reproducible across runs and platforms.
//! `rollout_return` and `lookahead` treat a depth of zero as the identity.

use std::ops::{Deref, Index};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums of every `P[s][a][.]` must be within this distance of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default accuracy of [`Mdp::solve_optimal`].
pub const DEFAULT_OPTIMAL_TOL: f64 = 1e-10;

/// A value-function estimate, one entry per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVec(Vec<f64>);

impl ValueVec {
    pub fn new(values: Vec<f64>) -> Self {
        ValueVec(values)
    }

    pub fn zeros(len: usize) -> Self {
        ValueVec(vec![0.0; len])
    }

    pub fn constant(len: usize, value: f64) -> Self {
        ValueVec(vec![value; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `max_i |v_i|`.
    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// `max_i |v_i - w_i|`. Panics on length mismatch.
    pub fn sup_distance(&self, other: &ValueVec) -> f64 {
        assert_eq!(self.len(), other.len(), "value vectors differ in length");
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// The vector `v + c e` where `e` is the all-ones vector.
    pub fn shifted(&self, c: f64) -> ValueVec {
        ValueVec(self.0.iter().map(|v| v + c).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &ValueVec) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

impl Deref for ValueVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ValueVec {
    fn from(values: Vec<f64>) -> Self {
        ValueVec(values)
    }
}

/// A deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Policy(actions)
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Policy(vec![action; num_states])
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl Deref for Policy {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl Index<usize> for Policy {
    type Output = usize;

    fn index(&self, s: usize) -> &usize {
        &self.0[s]
    }
}

/// Whether rewards are required to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardRange {
    Unit,
    /// Any finite reward. Bound calculators that rely on the `1/(1-alpha)`
    /// reward-range constant refuse to run on such a model.
    Arbitrary,
}

/// Value iteration result polished to the exact optimum.
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub values: ValueVec,
    pub policy: Policy,
    pub sweeps: usize,
}

/// A finite discounted MDP `(S, A, P, r, alpha)`.
///
/// Transitions are stored flat, row-major as `P[s][a][s']`; rewards as `r[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    reward: Vec<f64>,
    transition: Vec<f64>,
    reward_range: RewardRange,
}

impl Mdp {
    /// Builds a validated MDP with rewards restricted to `[0, 1]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        Self::with_reward_range(
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            RewardRange::Unit,
        )
    }

    pub fn with_reward_range(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        reward_range: RewardRange,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidInput(
                "num_states and num_actions must be positive".into(),
            ));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidInput(format!(
                "discount {discount} must lie strictly inside (0, 1)"
            )));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::InvalidInput(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                num_states * num_actions
            )));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidInput(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                num_states * num_actions * num_states
            )));
        }
        for (idx, &r) in reward.iter().enumerate() {
            let ok = match reward_range {
                RewardRange::Unit => (0.0..=1.0).contains(&r),
                RewardRange::Arbitrary => r.is_finite(),
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "reward r[{}][{}] = {r} is outside the permitted range",
                    idx / num_actions,
                    idx % num_actions
                )));
            }
        }
        for (row_idx, row) in transition.chunks_exact(num_states).enumerate() {
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "transition row P[{}][{}] has invalid entry {p}",
                    row_idx / num_actions,
                    row_idx % num_actions
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidInput(format!(
                    "transition row P[{}][{}] sums to {sum}, not 1",
                    row_idx / num_actions,
                    row_idx % num_actions
                )));
            }
        }
        Ok(Mdp {
            num_states,
            num_actions,
            discount,
            reward,
            transition,
            reward_range,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn reward_range(&self) -> RewardRange {
        self.reward_range
    }

    pub fn has_unit_rewards(&self) -> bool {
        self.reward_range == RewardRange::Unit
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// The distribution `P[s][a][.]`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    fn check_values(&self, j: &ValueVec) -> Result<()> {
        if j.len() != self.num_states {
            return Err(Error::InvalidInput(format!(
                "value vector has length {}, MDP has {} states",
                j.len(),
                self.num_states
            )));
        }
        Ok(())
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.num_states {
            return Err(Error::InvalidInput(format!(
                "policy has length {}, MDP has {} states",
                policy.len(),
                self.num_states
            )));
        }
        if let Some(a) = policy.iter().find(|&&a| a >= self.num_actions) {
            return Err(Error::InvalidInput(format!(
                "policy action {a} out of range (num_actions = {})",
                self.num_actions
            )));
        }
        Ok(())
    }

    /// `r(s,a) + alpha * sum_s' P[s][a][s'] j(s')`. No dimension checks.
    #[inline]
    pub fn q_value(&self, s: usize, a: usize, j: &[f64]) -> f64 {
        let expected: f64 = self
            .transition_row(s, a)
            .iter()
            .zip(j)
            .map(|(p, v)| p * v)
            .sum();
        self.reward(s, a) + self.discount * expected
    }

    /// Greedy action and its value at state `s`, lowest index on ties.
    fn best_action(&self, s: usize, j: &[f64]) -> (usize, f64) {
        let mut best = (0, self.q_value(s, 0, j));
        for a in 1..self.num_actions {
            let q = self.q_value(s, a, j);
            if q > best.1 {
                best = (a, q);
            }
        }
        best
    }

    /// All one-step values `Q(s,a)` as a flat `|S| x |A|` row-major table.
    pub fn q_values(&self, j: &ValueVec) -> Result<Vec<f64>> {
        self.check_values(j)?;
        let mut q = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                q.push(self.q_value(s, a, j));
            }
        }
        Ok(q)
    }

    /// `T_mu J`.
    pub fn apply_policy_operator(&self, policy: &Policy, j: &ValueVec) -> Result<ValueVec> {
        self.check_values(j)?;
        self.check_policy(policy)?;
        Ok((0..self.num_states)
            .map(|s| self.q_value(s, policy[s], j))
            .collect::<Vec<_>>()
            .into())
    }

    /// The Bellman optimality operator `T J`.
    pub fn apply_bellman(&self, j: &ValueVec) -> Result<ValueVec> {
        self.check_values(j)?;
        Ok((0..self.num_states)
            .map(|s| self.best_action(s, j).1)
            .collect::<Vec<_>>()
            .into())
    }

    /// A policy with `T_mu J = T J`, ties to the lowest action index.
    pub fn greedy_policy(&self, j: &ValueVec) -> Result<Policy> {
        self.check_values(j)?;
        Ok(Policy(
            (0..self.num_states)
                .map(|s| self.best_action(s, j).0)
                .collect(),
        ))
    }

    /// The m-step return `T_mu^m J`.
    pub fn rollout_return(&self, policy: &Policy, j: &ValueVec, m: usize) -> Result<ValueVec> {
        self.check_values(j)?;
        self.check_policy(policy)?;
        let mut current = j.clone();
        for _ in 0..m {
            current = self.apply_policy_operator(policy, &current)?;
        }
        Ok(current)
    }

    /// The H-step lookahead `T^H J`.
    pub fn lookahead(&self, j: &ValueVec, h: usize) -> Result<ValueVec> {
        self.check_values(j)?;
        let mut current = j.clone();
        for _ in 0..h {
            current = self.apply_bellman(&current)?;
        }
        Ok(current)
    }

    /// `J^mu`, the solution of `(I - alpha P_mu) J = r_mu`, by dense LU.
    pub fn evaluate_policy(&self, policy: &Policy) -> Result<ValueVec> {
        self.check_policy(policy)?;
        let n = self.num_states;
        let mut system = DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for s in 0..n {
            let a = policy[s];
            rhs[s] = self.reward(s, a);
            for (t, p) in self.transition_row(s, a).iter().enumerate() {
                system[(s, t)] -= self.discount * p;
            }
        }
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "policy evaluation produced non-finite values".into(),
            ));
        }
        Ok(ValueVec(solution.iter().copied().collect()))
    }

    /// Optimal values `J*` and an optimal policy.
    ///
    /// Value iteration runs until `||TJ - J|| <= tol (1 - alpha) / (2 alpha)`, which
    /// makes the greedy policy `tol`-optimal. That policy is then evaluated exactly
    /// and improved by policy iteration until no action beats the incumbent, so the
    /// returned values are the optimum up to linear-solve roundoff.
    pub fn solve_optimal(&self, tol: f64) -> Result<OptimalSolution> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "tolerance {tol} must be positive"
            )));
        }
        let alpha = self.discount;
        let stop = tol * (1.0 - alpha) / (2.0 * alpha);
        let mut j = ValueVec::zeros(self.num_states);
        let mut sweeps = 0;
        loop {
            let next = self.apply_bellman(&j)?;
            sweeps += 1;
            let change = next.sup_distance(&j);
            j = next;
            if change <= stop {
                break;
            }
        }
        let mut policy = self.greedy_policy(&j)?;
        let mut values = self.evaluate_policy(&policy)?;
        // Policy iteration terminates in at most |A|^|S| steps; in practice 0 or 1.
        for _ in 0..self.num_states * self.num_actions + 1 {
            let mut changed = false;
            let mut improved = policy.0.clone();
            for (s, action) in improved.iter_mut().enumerate() {
                let incumbent = self.q_value(s, *action, &values);
                let (best, q) = self.best_action(s, &values);
                if q > incumbent + 1e-12 * (1.0 + incumbent.abs()) {
                    *action = best;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            policy = Policy(improved);
            values = self.evaluate_policy(&policy)?;
        }
        Ok(OptimalSolution {
            values,
            policy,
            sweeps,
        })
    }

    /// `|A|^|S|`, or `None` when it overflows `u64`.
    pub fn policy_count(&self) -> Option<u64> {
        (self.num_actions as u64).checked_pow(u32::try_from(self.num_states).ok()?)
    }

    /// Iterates every deterministic policy in mixed-radix order (state 0 fastest).
    pub fn policies(&self) -> PolicyEnumerator {
        PolicyEnumerator {
            num_actions: self.num_actions,
            next: Some(vec![0; self.num_states]),
        }
    }
}

/// Iterator over all deterministic policies of an MDP.
#[derive(Debug, Clone)]
pub struct PolicyEnumerator {
    num_actions: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for PolicyEnumerator {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let current = self.next.take()?;
        let mut successor = current.clone();
        let mut carried = true;
        for digit in successor.iter_mut() {
            *digit += 1;
            if *digit < self.num_actions {
                carried = false;
                break;
            }
            *digit = 0;
        }
        if !carried {
            self.next = Some(successor);
        }
        Some(Policy(current))
    }
}
