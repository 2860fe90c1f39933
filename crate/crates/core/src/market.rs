//! Contract values, validity and utility under the grid operator's policy.
//!
//! A coalition announces the largest constant power `P*` it can sustain with
//! under-production probability at most φ. It may enter the market when
//! `P* ≥ P_min`; its utility is `|S|^(-α) · P*/P_max` when admitted and 0
//! otherwise.

use serde::{Deserialize, Serialize};

use crate::corrgraph::CorrelationMatrix;
use crate::error::{Error, Result};
use crate::powermodel::ProductionTrace;
use crate::special::erf_inv;
use crate::stats::{mean, population_std};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPolicy {
    /// Minimum admissible contract, W.
    pub p_min: f64,
    /// Maximum admissible under-production probability.
    pub phi: f64,
    /// Utility normalizer, W.
    pub p_max: f64,
    /// Size exponent of the utility.
    pub alpha: f64,
    /// Price per watt-hour.
    pub lambda_rate: f64,
}

impl GridPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_min >= 0.0) {
            return Err(Error::Config("p_min must be >= 0".into()));
        }
        if !(self.phi > 0.0 && self.phi < 1.0) {
            return Err(Error::Config("phi must lie in (0, 1)".into()));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::Config("p_max must be > 0".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite and >= 0".into()));
        }
        if !(self.lambda_rate >= 0.0) {
            return Err(Error::Config("lambda_rate must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMode {
    /// Lower empirical φ-quantile of the aggregate series.
    #[default]
    Empirical,
    /// Normal approximation from the aggregate's mean and deviation.
    Gaussian,
}

/// A set of agents (indices into the trace store) with its aggregate series.
#[derive(Debug, Clone, PartialEq)]
pub struct Coalition {
    members: Vec<usize>,
    aggregate: Vec<f64>,
}

impl Coalition {
    pub fn new(members: impl IntoIterator<Item = usize>, traces: &[ProductionTrace]) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        let before = members.len();
        members.dedup();
        if members.is_empty() || members.len() != before {
            return Err(Error::Validation(
                "coalition members must be non-empty and unique".into(),
            ));
        }
        if let Some(&bad) = members.iter().find(|&&m| m >= traces.len()) {
            return Err(Error::Validation(format!("unknown agent index {bad}")));
        }
        let len = traces[members[0]].len();
        let mut aggregate = vec![0.0; len];
        for &m in &members {
            if traces[m].len() != len {
                return Err(Error::Validation("member traces differ in length".into()));
            }
            add_into(&mut aggregate, &traces[m].values);
        }
        Ok(Coalition { members, aggregate })
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn aggregate(&self) -> &[f64] {
        &self.aggregate
    }

    pub fn contains(&self, agent: usize) -> bool {
        self.members.binary_search(&agent).is_ok()
    }

    pub fn with_member(&self, agent: usize, traces: &[ProductionTrace]) -> Result<Coalition> {
        if self.contains(agent) {
            return Err(Error::Membership(traces[agent].agent_id.clone()));
        }
        let mut members = self.members.clone();
        let pos = members.partition_point(|&m| m < agent);
        members.insert(pos, agent);
        let mut aggregate = self.aggregate.clone();
        add_into(&mut aggregate, &traces[agent].values);
        Ok(Coalition { members, aggregate })
    }

    /// The coalition without `agent`; `None` if it would become empty.
    pub fn without_member(&self, agent: usize, traces: &[ProductionTrace]) -> Option<Coalition> {
        let pos = self.members.binary_search(&agent).ok()?;
        if self.members.len() == 1 {
            return None;
        }
        let mut members = self.members.clone();
        members.remove(pos);
        let mut aggregate = self.aggregate.clone();
        for (a, v) in aggregate.iter_mut().zip(&traces[agent].values) {
            *a -= v;
        }
        Some(Coalition { members, aggregate })
    }
}

fn add_into(acc: &mut [f64], values: &[f64]) {
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractEvaluation {
    pub mu: f64,
    pub sigma: f64,
    pub p_contract: f64,
    pub valid: bool,
    pub utility: f64,
}

/// `μ − √2·σ·erf⁻¹(1 − 2φ)`: the φ-quantile of a normal law.
pub fn contract_value_gaussian(mu: f64, sigma: f64, phi: f64) -> f64 {
    mu - std::f64::consts::SQRT_2 * sigma * erf_inv(1.0 - 2.0 * phi)
}

/// 1-based rank of the lower empirical φ-quantile among `len` samples,
/// `⌈φ·len⌉` (a relative slack absorbs products such as 0.1·30 landing just
/// above an integer).
pub fn quantile_rank(len: usize, phi: f64) -> usize {
    let target = phi * len as f64;
    let rank = (target - 1e-9 * target.max(1.0)).ceil() as usize;
    rank.clamp(1, len.max(1))
}

/// Lower empirical φ-quantile: the `⌈φ·T⌉`-th smallest sample, so at most a
/// fraction φ of the samples lies strictly below it.
pub fn contract_value_empirical(aggregate: &[f64], phi: f64) -> Result<f64> {
    let mut scratch = aggregate.to_vec();
    empirical_quantile_in_place(&mut scratch, phi)
}

fn empirical_quantile_in_place(values: &mut [f64], phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::Validation("phi must lie in (0, 1)".into()));
    }
    let len = values.len();
    if (len as f64) * phi < 1.0 - 1e-12 {
        return Err(Error::InsufficientData(format!(
            "{len} samples cannot resolve the {phi} quantile (need at least {})",
            (1.0 / phi).ceil()
        )));
    }
    let rank = quantile_rank(len, phi);
    let (_, value, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*value)
}

pub fn is_valid(eval: &ContractEvaluation, policy: &GridPolicy) -> bool {
    eval.p_contract >= policy.p_min
}

/// Revenue of honoring the contract for `hours` at the policy's constant rate.
/// Admission is decided separately by [`is_valid`].
pub fn gain(eval: &ContractEvaluation, policy: &GridPolicy, hours: f64) -> f64 {
    eval.p_contract * policy.lambda_rate * hours
}

/// Full evaluation of an aggregate series for a coalition of `size` agents.
pub fn evaluate_aggregate(
    aggregate: &[f64],
    size: usize,
    policy: &GridPolicy,
    mode: QuantileMode,
) -> Result<ContractEvaluation> {
    let mu = mean(aggregate);
    let sigma = population_std(aggregate);
    let p_contract = match mode {
        QuantileMode::Empirical => contract_value_empirical(aggregate, policy.phi)?,
        QuantileMode::Gaussian => contract_value_gaussian(mu, sigma, policy.phi),
    };
    Ok(finish(mu, sigma, p_contract, size, policy))
}

fn finish(mu: f64, sigma: f64, p_contract: f64, size: usize, policy: &GridPolicy) -> ContractEvaluation {
    let mut eval = ContractEvaluation {
        mu,
        sigma,
        p_contract,
        valid: false,
        utility: 0.0,
    };
    eval.valid = is_valid(&eval, policy);
    if eval.valid && p_contract > 0.0 {
        eval.utility = (size as f64).powf(-policy.alpha) * p_contract / policy.p_max;
    }
    eval
}

pub fn utility(coalition: &Coalition, policy: &GridPolicy, mode: QuantileMode) -> Result<ContractEvaluation> {
    evaluate_aggregate(&coalition.aggregate, coalition.size(), policy, mode)
}

/// `U(S + {i}) − U(S)`.
pub fn marginal_contribution(
    coalition: &Coalition,
    agent: usize,
    policy: &GridPolicy,
    mode: QuantileMode,
    traces: &[ProductionTrace],
) -> Result<f64> {
    let extended = coalition.with_member(agent, traces)?;
    Ok(utility(&extended, policy, mode)?.utility - utility(coalition, policy, mode)?.utility)
}

/// Evaluates member sets against a fixed trace store and policy, reusing one
/// scratch buffer for the quantile selection.
#[derive(Debug)]
pub struct Evaluator<'a> {
    traces: &'a [ProductionTrace],
    policy: GridPolicy,
    mode: QuantileMode,
    scratch: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(traces: &'a [ProductionTrace], policy: GridPolicy, mode: QuantileMode) -> Self {
        let len = traces.first().map_or(0, |t| t.len());
        Evaluator {
            traces,
            policy,
            mode,
            scratch: Vec::with_capacity(len),
        }
    }

    pub fn traces(&self) -> &'a [ProductionTrace] {
        self.traces
    }

    pub fn policy(&self) -> &GridPolicy {
        &self.policy
    }

    pub fn mode(&self) -> QuantileMode {
        self.mode
    }

    /// Evaluates `base + Σ extra` for a coalition of `size` agents without
    /// allocating a new aggregate.
    pub fn evaluate_sum(
        &mut self,
        base: &[f64],
        plus: Option<usize>,
        minus: Option<usize>,
        size: usize,
    ) -> Result<ContractEvaluation> {
        self.scratch.clear();
        self.scratch.extend_from_slice(base);
        if let Some(i) = plus {
            add_into(&mut self.scratch, &self.traces[i].values);
        }
        if let Some(j) = minus {
            for (a, v) in self.scratch.iter_mut().zip(&self.traces[j].values) {
                *a -= v;
            }
        }
        if size == 0 {
            return Ok(ContractEvaluation {
                mu: 0.0,
                sigma: 0.0,
                p_contract: 0.0,
                valid: false,
                utility: 0.0,
            });
        }
        let mu = mean(&self.scratch);
        let sigma = population_std(&self.scratch);
        let p_contract = match self.mode {
            QuantileMode::Empirical => empirical_quantile_in_place(&mut self.scratch, self.policy.phi)?,
            QuantileMode::Gaussian => contract_value_gaussian(mu, sigma, self.policy.phi),
        };
        Ok(finish(mu, sigma, p_contract, size, &self.policy))
    }

    pub fn evaluate(&mut self, coalition: &Coalition) -> Result<ContractEvaluation> {
        self.evaluate_sum(&coalition.aggregate, None, None, coalition.size())
    }

    pub fn evaluate_members(&mut self, members: &[usize]) -> Result<ContractEvaluation> {
        let coalition = Coalition::new(members.iter().copied(), self.traces)?;
        self.evaluate(&coalition)
    }

    /// `U(S + {i}) − U(S)` given the current utility of `S`.
    pub fn gain_of_adding(&mut self, coalition: &Coalition, current: f64, agent: usize) -> Result<f64> {
        if coalition.contains(agent) {
            return Err(Error::Membership(self.traces[agent].agent_id.clone()));
        }
        let eval = self.evaluate_sum(&coalition.aggregate, Some(agent), None, coalition.size() + 1)?;
        Ok(eval.utility - current)
    }

    /// `U(S) − U(S − {j})`: the contribution of member `j` to `S`.
    pub fn contribution_of_member(&mut self, coalition: &Coalition, current: f64, member: usize) -> Result<f64> {
        if !coalition.contains(member) {
            return Err(Error::Validation(format!(
                "agent {} is not a member",
                self.traces[member].agent_id
            )));
        }
        let eval = self.evaluate_sum(&coalition.aggregate, None, Some(member), coalition.size() - 1)?;
        Ok(current - eval.utility)
    }
}

// ---------------------------------------------------------------------------
// Mean-field approximation
// ---------------------------------------------------------------------------

/// Population means of per-agent μᵢ, σᵢ and of off-diagonal ρᵢⱼ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanField {
    pub mu_bar: f64,
    pub sigma_bar: f64,
    pub rho_bar: f64,
}

impl MeanField {
    pub fn from_population(traces: &[ProductionTrace], matrix: &CorrelationMatrix) -> Self {
        let mus: Vec<f64> = traces.iter().map(|t| mean(&t.values)).collect();
        let sigmas: Vec<f64> = traces.iter().map(|t| population_std(&t.values)).collect();
        MeanField {
            mu_bar: mean(&mus),
            sigma_bar: mean(&sigmas),
            rho_bar: matrix.mean_off_diagonal(),
        }
    }
}

/// Closed-form size calibration for a target mean coalition size `n_bar`:
///
/// `0.7·σ̄(ρ̄−1)·erf⁻¹(2φ−1) / [μ̄·√(N̄(ρ̄N̄−ρ̄+1)) + 1.4·σ̄·erf⁻¹(2φ−1)·(ρ̄N̄−ρ̄+1)]`
///
/// with the constants as published. The value is the excess over one of the
/// size exponent that makes the homogeneous utility stationary at `n_bar`:
/// use [`size_exponent`] to turn it into the `alpha` of a [`GridPolicy`].
pub fn alpha_star(mu_bar: f64, sigma_bar: f64, rho_bar: f64, n_bar: f64, phi: f64) -> Result<f64> {
    if !(n_bar >= 1.0) {
        return Err(Error::DegenerateParameters("n_bar must be >= 1".into()));
    }
    if !(phi > 0.0 && phi < 0.5) {
        return Err(Error::DegenerateParameters("phi must lie in (0, 0.5)".into()));
    }
    if !(sigma_bar > 0.0 && mu_bar > 0.0) {
        return Err(Error::DegenerateParameters(
            "mean production and deviation must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&rho_bar) {
        return Err(Error::DegenerateParameters("rho_bar must lie in [0, 1]".into()));
    }
    let e = erf_inv(2.0 * phi - 1.0);
    let q = rho_bar * n_bar - rho_bar + 1.0;
    let numerator = 0.7 * sigma_bar * (rho_bar - 1.0) * e;
    let denominator = mu_bar * (n_bar * q).sqrt() + 1.4 * sigma_bar * e * q;
    if denominator.abs() < 1e-12 * (mu_bar * (n_bar * q).sqrt()).abs().max(1.0) {
        return Err(Error::DegenerateParameters(
            "the calibration denominator vanishes".into(),
        ));
    }
    Ok(numerator / denominator)
}

/// Size exponent of the utility corresponding to a closed-form `alpha_star`.
pub fn size_exponent(alpha_star: f64) -> f64 {
    1.0 + alpha_star
}

/// Utility of a homogeneous coalition of `n` agents with mean μ̄, deviation
/// σ̄ and pairwise correlation ρ̄ under the Gaussian contract:
/// `n^(-α)·(n·μ̄ − √2·σ̄·√(n(1+ρ̄(n−1)))·erf⁻¹(1−2φ)) / P_max`.
pub fn mean_field_utility(n: f64, alpha: f64, mu_bar: f64, sigma_bar: f64, rho_bar: f64, phi: f64, p_max: f64) -> f64 {
    let sigma = mean_field_sigma(n, sigma_bar, rho_bar);
    n.powf(-alpha) * contract_value_gaussian(n * mu_bar, sigma, phi) / p_max
}

/// Deviation of the sum of `n` agents with deviation σ̄ and correlation ρ̄.
pub fn mean_field_sigma(n: f64, sigma_bar: f64, rho_bar: f64) -> f64 {
    sigma_bar * (n * (1.0 + rho_bar * (n - 1.0))).sqrt()
}
