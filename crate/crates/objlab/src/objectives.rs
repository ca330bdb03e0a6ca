//! Evidence and divergence objectives over a generative model and a desire
//! distribution, their latent-variable decompositions, and the KL-control
//! special case.
//!
//! The evidence objective scores an action by the expected log-desire of the
//! observations it produces; the divergence objective scores it by the KL
//! divergence from the induced observation distribution to the desire
//! distribution. For a stochastic policy the divergence objective uses
//! mixture semantics: p(o) = sum_a pi(a) p(o|a). The evidence objective is
//! linear in the policy, so mixture and per-action averaging coincide.

use crate::error::{Error, Result};
use crate::prob::{self, build_joint, CondTable, Factor, JointTable, VariableSpace, NORM_TOL};
use crate::report::{RelationReport, IDENTITY_TOL};

/// Sign of the exponent in the Boltzmann map from rewards to desires.
///
/// `Positive` makes the largest reward the most desired outcome and is the
/// default everywhere; `Negative` is exposed as a switch for fidelity
/// experiments with the opposite convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoltzmannSign {
    Positive,
    Negative,
}

impl BoltzmannSign {
    fn factor(self) -> f64 {
        match self {
            BoltzmannSign::Positive => 1.0,
            BoltzmannSign::Negative => -1.0,
        }
    }
}

/// Exogenous target distribution over observations.
#[derive(Debug, Clone)]
pub struct DesireDistribution {
    probs: Vec<f64>,
    rewards: Option<Vec<f64>>,
    beta: Option<f64>,
    /// ln Z of the Boltzmann map when built from rewards.
    log_normalizer: Option<f64>,
}

impl DesireDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for &p in &probs {
            if p < 0.0 || !p.is_finite() {
                return Err(Error::NegativeProbability(p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum, expected: 1.0, tol: NORM_TOL });
        }
        Ok(Self { probs, rewards: None, beta: None, log_normalizer: None })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
            rewards: None,
            beta: None,
            log_normalizer: None,
        }
    }

    /// Boltzmann desire with probabilities proportional to exp(+beta r).
    pub fn from_rewards(rewards: &[f64], beta: f64) -> Result<Self> {
        Self::from_rewards_signed(rewards, beta, BoltzmannSign::Positive)
    }

    pub fn from_rewards_signed(rewards: &[f64], beta: f64, sign: BoltzmannSign) -> Result<Self> {
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::InvalidParameter(format!("beta must be positive, got {beta}")));
        }
        if let Some(i) = rewards.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFiniteReward(i));
        }
        if rewards.is_empty() {
            return Err(Error::InvalidParameter("empty reward table".to_string()));
        }
        let logits: Vec<f64> = rewards.iter().map(|&r| sign.factor() * beta * r).collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z_shifted: f64 = shifted.iter().sum();
        let probs = shifted.iter().map(|&e| e / z_shifted).collect();
        Ok(Self {
            probs,
            rewards: Some(rewards.to_vec()),
            beta: Some(beta),
            log_normalizer: Some(max + z_shifted.ln()),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn rewards(&self) -> Option<&[f64]> {
        self.rewards.as_deref()
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    /// ln Z of the Boltzmann map, present only when built from rewards.
    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_normalizer
    }

    /// ln of the desire probability; negative infinity on zero-mass outcomes.
    pub fn log_prob(&self, outcome: usize) -> f64 {
        let p = self.probs[outcome];
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Packages the desire as a single-variable joint.
    pub fn as_joint(&self, name: &str) -> JointTable {
        let space = VariableSpace::scalar(name, self.probs.len()).expect("valid scalar space");
        JointTable::new(space, self.probs.clone()).expect("desire is normalized")
    }
}

/// Distribution over a model's action set.
#[derive(Debug, Clone)]
pub struct PolicySimplex {
    weights: Vec<f64>,
}

impl PolicySimplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let mut sum = 0.0;
        for &w in &weights {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeProbability(w));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { sum, expected: 1.0, tol: NORM_TOL });
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: vec![1.0 / n as f64; n] }
    }

    pub fn delta(n: usize, action: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[action] = 1.0;
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn entropy(&self) -> f64 {
        prob::entropy_slice(&self.weights)
    }
}

/// Either a single action or a stochastic policy over the action set.
#[derive(Debug, Clone, Copy)]
pub enum ActionChoice<'a> {
    Action(usize),
    Policy(&'a PolicySimplex),
}

impl From<usize> for ActionChoice<'static> {
    fn from(action: usize) -> Self {
        ActionChoice::Action(action)
    }
}

impl<'a> From<&'a PolicySimplex> for ActionChoice<'a> {
    fn from(policy: &'a PolicySimplex) -> Self {
        ActionChoice::Policy(policy)
    }
}

/// Factored model of the effect of actions on observations through a latent
/// state: p(x|a) prior rows and an action-independent likelihood p(o|x).
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    prior: CondTable,
    likelihood: CondTable,
    n_actions: usize,
    n_latents: usize,
    n_obs: usize,
}

impl GenerativeModel {
    /// `prior_rows[a]` is p(x | a); `likelihood_rows[x]` is p(o | x).
    pub fn new(prior_rows: Vec<Vec<f64>>, likelihood_rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_actions = prior_rows.len();
        if n_actions == 0 {
            return Err(Error::InvalidParameter("model needs at least one action".into()));
        }
        let n_latents = prior_rows[0].len();
        if likelihood_rows.len() != n_latents {
            return Err(Error::LengthMismatch { expected: n_latents, got: likelihood_rows.len() });
        }
        let n_obs = likelihood_rows[0].len();
        let prior = CondTable::from_rows(
            VariableSpace::scalar("x", n_latents)?,
            VariableSpace::scalar("a", n_actions)?,
            prior_rows,
        )?;
        let likelihood = CondTable::from_rows(
            VariableSpace::scalar("o", n_obs)?,
            VariableSpace::scalar("x", n_latents)?,
            likelihood_rows,
        )?;
        Ok(Self { prior, likelihood, n_actions, n_latents, n_obs })
    }

    /// Model over a fully observed state: identity likelihood, so the
    /// "observation" is the state itself.
    pub fn fully_observed(state_prior_rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = state_prior_rows
            .first()
            .map(|r| r.len())
            .ok_or_else(|| Error::InvalidParameter("model needs at least one action".into()))?;
        let identity: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(state_prior_rows, identity)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_latents(&self) -> usize {
        self.n_latents
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn prior(&self) -> &CondTable {
        &self.prior
    }

    pub fn likelihood(&self) -> &CondTable {
        &self.likelihood
    }

    fn check_action(&self, action: usize) -> Result<()> {
        if action >= self.n_actions {
            return Err(Error::InvalidParameter(format!(
                "action {action} out of range (model has {} actions)",
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Joint p(x, o | a) over the space [x, o].
    pub fn joint(&self, action: usize) -> Result<JointTable> {
        self.check_action(action)?;
        let space = VariableSpace::new(vec![("x", self.n_latents), ("o", self.n_obs)])?;
        let prior_a = JointTable::new(
            VariableSpace::scalar("x", self.n_latents)?,
            self.prior.row(action).probs.clone(),
        )?;
        build_joint(
            &space,
            &[Factor::Marginal(prior_a), Factor::Conditional(self.likelihood.clone())],
        )
    }

    /// Predicted observation distribution p(o | a).
    pub fn obs_marginal(&self, action: usize) -> Result<Vec<f64>> {
        self.check_action(action)?;
        let prior = &self.prior.row(action).probs;
        let mut out = vec![0.0; self.n_obs];
        for (x, &px) in prior.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            for (o, slot) in out.iter_mut().enumerate() {
                *slot += px * self.likelihood.prob(o, x);
            }
        }
        Ok(out)
    }

    /// Policy-mixture observation distribution p(o) = sum_a pi(a) p(o | a).
    pub fn obs_mixture(&self, policy: &PolicySimplex) -> Result<Vec<f64>> {
        if policy.len() != self.n_actions {
            return Err(Error::LengthMismatch { expected: self.n_actions, got: policy.len() });
        }
        let mut out = vec![0.0; self.n_obs];
        for (a, &w) in policy.weights().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, slot) in out.iter_mut().enumerate() {
                *slot += w * self.obs_marginal(a)?[o];
            }
        }
        Ok(out)
    }

    /// Exact posterior p(x | o, a) derived from the action's joint.
    pub fn posterior(&self, action: usize) -> Result<CondTable> {
        self.joint(action)?.condition(&["x"], &["o"])
    }

    fn check_desire(&self, desire: &DesireDistribution) -> Result<()> {
        if desire.len() != self.n_obs {
            return Err(Error::LengthMismatch { expected: self.n_obs, got: desire.len() });
        }
        Ok(())
    }
}

/// Expected log-desire of predicted observations, to be maximized over
/// actions. Returns negative infinity (an explicit sentinel, not an error)
/// when the desire assigns zero mass to a reachable observation.
pub fn evidence_objective(
    model: &GenerativeModel,
    desire: &DesireDistribution,
    choice: ActionChoice<'_>,
) -> Result<f64> {
    model.check_desire(desire)?;
    let per_action = |a: usize| -> Result<f64> {
        let p = model.obs_marginal(a)?;
        let mut acc = 0.0;
        for (o, &po) in p.iter().enumerate() {
            if po == 0.0 {
                continue;
            }
            let l = desire.log_prob(o);
            if l == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            acc += po * l;
        }
        Ok(acc)
    };
    match choice {
        ActionChoice::Action(a) => per_action(a),
        ActionChoice::Policy(policy) => {
            if policy.len() != model.n_actions {
                return Err(Error::LengthMismatch { expected: model.n_actions, got: policy.len() });
            }
            let mut acc = 0.0;
            for (a, &w) in policy.weights().iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let v = per_action(a)?;
                if v == f64::NEG_INFINITY {
                    return Ok(f64::NEG_INFINITY);
                }
                acc += w * v;
            }
            Ok(acc)
        }
    }
}

/// KL divergence from the predicted observation distribution to the desire,
/// to be minimized over actions. Policies use mixture semantics.
pub fn divergence_objective(
    model: &GenerativeModel,
    desire: &DesireDistribution,
    choice: ActionChoice<'_>,
) -> Result<f64> {
    model.check_desire(desire)?;
    let p = match choice {
        ActionChoice::Action(a) => model.obs_marginal(a)?,
        ActionChoice::Policy(policy) => model.obs_mixture(policy)?,
    };
    prob::kl_slices(&p, desire.probs())
}

/// Verifies Evidence = -Divergence - Entropy for one action: the evidence
/// objective equals the negative divergence minus the entropy of the
/// predicted future, so maximizing evidence also minimizes that entropy.
pub fn evidence_as_divergence(
    model: &GenerativeModel,
    desire: &DesireDistribution,
    action: usize,
) -> Result<RelationReport> {
    let evidence = evidence_objective(model, desire, ActionChoice::Action(action))?;
    let p = model.obs_marginal(action)?;
    let divergence = prob::kl_slices(&p, desire.probs())?;
    let entropy = prob::entropy_slice(&p);
    Ok(RelationReport::identity(
        "evidence_entropy_split",
        evidence,
        &[
            ("Divergence", -1.0, divergence),
            ("Expected Future Entropy", -1.0, entropy),
        ],
        IDENTITY_TOL,
    ))
}

/// Verifies Divergence = -Entropy - Evidence for one action: minimizing the
/// divergence maximizes evidence while also maximizing the entropy of the
/// predicted future.
pub fn divergence_as_evidence(
    model: &GenerativeModel,
    desire: &DesireDistribution,
    action: usize,
) -> Result<RelationReport> {
    let evidence = evidence_objective(model, desire, ActionChoice::Action(action))?;
    let p = model.obs_marginal(action)?;
    let divergence = prob::kl_slices(&p, desire.probs())?;
    let entropy = prob::entropy_slice(&p);
    Ok(RelationReport::identity(
        "divergence_entropy_split",
        divergence,
        &[
            ("Expected Future Entropy", -1.0, entropy),
            ("Evidence Objective", -1.0, evidence),
        ],
        IDENTITY_TOL,
    ))
}

/// Splits the divergence objective through the latent state:
/// Divergence = DesireDivergence - InformationGain. The information-gain term
/// is what rewards actions that make observations informative about latents.
pub fn divergence_latent_decomposition(
    model: &GenerativeModel,
    desire: &DesireDistribution,
    action: usize,
) -> Result<RelationReport> {
    let divergence = divergence_objective(model, desire, ActionChoice::Action(action))?;
    let prior = &model.prior().row(action).probs;
    let mut desire_div = 0.0;
    for (x, &px) in prior.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        desire_div += px * prob::kl_slices(&model.likelihood().row(x).probs, desire.probs())?;
    }
    let joint = model.joint(action)?;
    let info_gain = joint.expected_info_gain(&["x"], &["o"])?;
    Ok(RelationReport::identity(
        "divergence_latent_split",
        divergence,
        &[
            ("Desire Divergence", 1.0, desire_div),
            ("Information Gain", -1.0, info_gain),
        ],
        IDENTITY_TOL,
    ))
}

/// Splits the entropy of the predicted observations through the latent state:
/// H[p(o|a)] = LikelihoodEntropy + ExpectedInformationGain. Maximizing the
/// observation entropy therefore maximizes the information gain.
pub fn entropy_latent_identity(model: &GenerativeModel, action: usize) -> Result<RelationReport> {
    let p = model.obs_marginal(action)?;
    let marginal_entropy = prob::entropy_slice(&p);
    let prior = &model.prior().row(action).probs;
    let mut likelihood_entropy = 0.0;
    for (x, &px) in prior.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        likelihood_entropy += px * prob::entropy_slice(&model.likelihood().row(x).probs);
    }
    let joint = model.joint(action)?;
    let info_gain = joint.expected_info_gain(&["x"], &["o"])?;
    Ok(RelationReport::identity(
        "marginal_entropy_split",
        marginal_entropy,
        &[
            ("Likelihood Entropy", 1.0, likelihood_entropy),
            ("Expected Information Gain", 1.0, info_gain),
        ],
        IDENTITY_TOL,
    ))
}

/// KL-control objective over a fully observed state: KL[p(x|a) || desire].
/// Runs through the same code path as the divergence objective with the
/// state playing the role of the observation.
pub fn kl_control_objective(
    state_model: &CondTable,
    desire_x: &DesireDistribution,
    action: usize,
) -> Result<f64> {
    let rows: Vec<Vec<f64>> = state_model.rows().iter().map(|r| r.probs.clone()).collect();
    let model = GenerativeModel::fully_observed(rows)?;
    divergence_objective(&model, desire_x, ActionChoice::Action(action))
}
