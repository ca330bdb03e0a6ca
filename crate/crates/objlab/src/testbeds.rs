//! Behavioral testbeds: probability matching in bandits and directed
//! information-seeking in a two-step latent-context environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::DesireDistribution;
use crate::prob::{self, build_joint, CondTable, Factor, JointTable, VariableSpace};

/// Bandit with deterministic observations: choosing arm a yields the
/// observation o = a, and the desire over observations is the normalized
/// reward-probability vector. Under this formulation the divergence-optimal
/// policy matches the normalized probabilities exactly.
#[derive(Debug, Clone)]
pub struct MatchingBandit {
    phi: Vec<f64>,
}

impl MatchingBandit {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.is_empty() {
            return Err(Error::InvalidParameter("bandit needs at least one arm".into()));
        }
        for &p in &phi {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(Error::InvalidParameter(format!("arm probability {p} outside [0, 1]")));
            }
        }
        if phi.iter().all(|&p| p == 0.0) {
            return Err(Error::InvalidParameter("all arm probabilities are zero".into()));
        }
        Ok(Self { phi })
    }

    pub fn arms(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    /// Reward probabilities normalized into a distribution over arms.
    pub fn phi_normalized(&self) -> Vec<f64> {
        let sum: f64 = self.phi.iter().sum();
        self.phi.iter().map(|&p| p / sum).collect()
    }
}

/// Policies selected by each objective on a bandit, with how closely each
/// matches the normalized reward probabilities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingReport {
    pub policy_divergence: Vec<f64>,
    pub policy_evidence: Vec<f64>,
    pub matching_index_divergence: f64,
    pub matching_index_evidence: f64,
    pub divergence_value: f64,
    pub evidence_value: f64,
}

/// 1 - total variation distance between a policy and the normalized reward
/// probabilities; 1 means exact probability matching.
pub fn matching_index(policy: &[f64], phi_normalized: &[f64]) -> f64 {
    let tv: f64 = policy
        .iter()
        .zip(phi_normalized)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
        * 0.5;
    1.0 - tv
}

/// Closed-form policies for the deterministic-observation bandit: the
/// divergence objective is minimized exactly at the normalized reward
/// probabilities, while the evidence objective is linear in the policy and
/// puts all mass on the best arm (lowest index on ties).
pub fn matching_bandit_policies(bandit: &MatchingBandit) -> Result<MatchingReport> {
    let phi_norm = bandit.phi_normalized();
    let policy_divergence = phi_norm.clone();

    let mut best = 0usize;
    for (a, &p) in bandit.phi().iter().enumerate() {
        if p > bandit.phi()[best] {
            best = a;
        }
    }
    let mut policy_evidence = vec![0.0; bandit.arms()];
    policy_evidence[best] = 1.0;

    let divergence_value = prob::kl_slices(&policy_divergence, &phi_norm)?;
    let evidence_value = phi_norm[best].ln();
    Ok(MatchingReport {
        matching_index_divergence: matching_index(&policy_divergence, &phi_norm),
        matching_index_evidence: matching_index(&policy_evidence, &phi_norm),
        policy_divergence,
        policy_evidence,
        divergence_value,
        evidence_value,
    })
}

/// Enumerates all compositions of `resolution` into `k` parts as policies.
fn simplex_grid(k: usize, resolution: usize, mut visit: impl FnMut(&[f64])) {
    let mut counts = vec![0usize; k];
    fn recurse(
        counts: &mut Vec<usize>,
        idx: usize,
        remaining: usize,
        resolution: usize,
        visit: &mut impl FnMut(&[f64]),
    ) {
        if idx == counts.len() - 1 {
            counts[idx] = remaining;
            let policy: Vec<f64> =
                counts.iter().map(|&c| c as f64 / resolution as f64).collect();
            visit(&policy);
            return;
        }
        for c in 0..=remaining {
            counts[idx] = c;
            recurse(counts, idx + 1, remaining - c, resolution, visit);
        }
    }
    recurse(&mut counts, 0, resolution, resolution, &mut visit);
}

/// Deterministic pairwise-transfer hill climb on the simplex, with the step
/// halved whenever no transfer improves the objective.
fn refine_on_simplex(
    start: Vec<f64>,
    initial_step: f64,
    mut objective: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let k = start.len();
    let mut current = start;
    let mut value = objective(&current);
    let mut step = initial_step;
    while step > 1e-12 {
        let mut improved = false;
        for from in 0..k {
            for to in 0..k {
                if from == to || current[from] < step {
                    continue;
                }
                let mut candidate = current.clone();
                candidate[from] -= step;
                candidate[to] += step;
                let v = objective(&candidate);
                if v < value - 1e-15 {
                    current = candidate;
                    value = v;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    current
}

fn grid_search_simplex(
    k: usize,
    resolution: usize,
    mut objective: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    simplex_grid(k, resolution, |policy| {
        let v = objective(policy);
        let better = match &best {
            None => true,
            Some((_, b)) => v < *b,
        };
        if better {
            best = Some((policy.to_vec(), v));
        }
    });
    let (start, _) = best.expect("grid is never empty");
    refine_on_simplex(start, 1.0 / resolution as f64, objective)
}

/// Grid-search oracle for the deterministic-observation bandit: minimizes
/// the divergence objective over the policy simplex at the given resolution
/// (with local refinement), independently of the closed form.
pub fn divergence_policy_by_grid(bandit: &MatchingBandit, resolution: usize) -> Result<Vec<f64>> {
    if resolution < 10 {
        return Err(Error::ResolutionTooCoarse(resolution));
    }
    let phi_norm = bandit.phi_normalized();
    Ok(grid_search_simplex(bandit.arms(), resolution, |policy| {
        let mut acc = 0.0;
        for (&pi, &d) in policy.iter().zip(&phi_norm) {
            if pi <= 0.0 {
                continue;
            }
            if d <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / d).ln();
        }
        acc
    }))
}

/// Bernoulli-reward bandit over joint (arm, reward) observations, solved by
/// brute force on the policy simplex for both objectives. The desire is a
/// distribution over the 2k outcomes indexed arm * 2 + reward. With a desire
/// that keeps every arm-reward pair possible the divergence policy is
/// interior while the evidence policy sits at a vertex.
pub fn bernoulli_bandit_policies(
    theta: &[f64],
    desire: &DesireDistribution,
    resolution: usize,
) -> Result<MatchingReport> {
    let k = theta.len();
    if k == 0 {
        return Err(Error::InvalidParameter("bandit needs at least one arm".into()));
    }
    for &t in theta {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("arm probability {t} outside [0, 1]")));
        }
    }
    if desire.len() != 2 * k {
        return Err(Error::LengthMismatch { expected: 2 * k, got: desire.len() });
    }
    if resolution < 10 {
        return Err(Error::ResolutionTooCoarse(resolution));
    }

    // Induced observation distribution over (arm, reward) pairs.
    let induced = |policy: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; 2 * k];
        for (a, &w) in policy.iter().enumerate() {
            p[a * 2] = w * (1.0 - theta[a]);
            p[a * 2 + 1] = w * theta[a];
        }
        p
    };
    let divergence = |policy: &[f64]| -> f64 {
        let p = induced(policy);
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            let d = desire.probs()[i];
            if d <= 0.0 {
                return f64::INFINITY;
            }
            acc += pi * (pi / d).ln();
        }
        acc
    };
    let neg_evidence = |policy: &[f64]| -> f64 {
        let p = induced(policy);
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            let d = desire.probs()[i];
            if d <= 0.0 {
                return f64::INFINITY;
            }
            acc -= pi * d.ln();
        }
        acc
    };

    let policy_divergence = grid_search_simplex(k, resolution, divergence);
    let policy_evidence = grid_search_simplex(k, resolution, neg_evidence);

    let sum: f64 = theta.iter().sum();
    let phi_norm: Vec<f64> = if sum > 0.0 {
        theta.iter().map(|&t| t / sum).collect()
    } else {
        vec![1.0 / k as f64; k]
    };
    let divergence_value = divergence(&policy_divergence);
    let evidence_value = -neg_evidence(&policy_evidence);
    Ok(MatchingReport {
        matching_index_divergence: matching_index(&policy_divergence, &phi_norm),
        matching_index_evidence: matching_index(&policy_evidence, &phi_norm),
        policy_divergence,
        policy_evidence,
        divergence_value,
        evidence_value,
    })
}

/// Two-step environment with a hidden binary context. The environment emits
/// a context signal of accuracy `alpha` at step one regardless of the plan;
/// checking plans condition the door choice on that signal, guessing plans
/// ignore it. The terminal observation is the reward bit (door matches the
/// context), and objectives are scored over the full observation sequence
/// (signal, reward) with the agent indifferent about the signal value.
#[derive(Debug, Clone)]
pub struct TwoStepEnv {
    alpha: f64,
}

impl TwoStepEnv {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "signal accuracy {alpha} outside [0.5, 1]"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Joint over (context z, signal y, reward r) under one plan.
    fn plan_joint(&self, plan: Plan) -> Result<JointTable> {
        let space = VariableSpace::new(vec![("z", 2), ("y", 2), ("r", 2)])?;
        let p_z = JointTable::uniform(VariableSpace::scalar("z", 2)?);
        let a = self.alpha;
        let p_y_given_z = CondTable::from_rows(
            VariableSpace::scalar("y", 2)?,
            VariableSpace::scalar("z", 2)?,
            vec![vec![a, 1.0 - a], vec![1.0 - a, a]],
        )?;
        // r = door(y) == z, deterministic given (z, y); rows ordered (z, y).
        let mut reward_rows = Vec::with_capacity(4);
        for z in 0..2 {
            for y in 0..2 {
                let r = usize::from(plan.door(y) == z);
                let mut row = vec![0.0, 0.0];
                row[r] = 1.0;
                reward_rows.push(row);
            }
        }
        let p_r = CondTable::from_rows(
            VariableSpace::scalar("r", 2)?,
            VariableSpace::new(vec![("z", 2), ("y", 2)])?,
            reward_rows,
        )?;
        build_joint(
            &space,
            &[
                Factor::Marginal(p_z),
                Factor::Conditional(p_y_given_z),
                Factor::Conditional(p_r),
            ],
        )
    }
}

/// The four action plans: guess a fixed door, or check the signal and pick
/// the door it names (or the opposite).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Plan {
    GuessDoorA,
    GuessDoorB,
    CheckThenMatch,
    CheckThenOpposite,
}

impl Plan {
    pub const ALL: [Plan; 4] = [
        Plan::GuessDoorA,
        Plan::GuessDoorB,
        Plan::CheckThenMatch,
        Plan::CheckThenOpposite,
    ];

    fn door(self, signal: usize) -> usize {
        match self {
            Plan::GuessDoorA => 0,
            Plan::GuessDoorB => 1,
            Plan::CheckThenMatch => signal,
            Plan::CheckThenOpposite => 1 - signal,
        }
    }

    pub fn checks(self) -> bool {
        matches!(self, Plan::CheckThenMatch | Plan::CheckThenOpposite)
    }
}

/// Scores for one plan: both objectives over the observation sequence plus
/// the latent split of the divergence into desire divergence minus
/// information gain (about the hidden context).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanScore {
    pub plan: Plan,
    pub evidence: f64,
    pub divergence: f64,
    pub desire_divergence: f64,
    pub info_gain: f64,
    /// |divergence - (desire_divergence - info_gain)|.
    pub split_residual: f64,
}

/// Scores every plan by exact enumeration. `desire_reward` is the desire over
/// the terminal reward bit; the desire over the signal is uniform.
pub fn twostep_plan_scores(
    env: &TwoStepEnv,
    desire_reward: &DesireDistribution,
) -> Result<Vec<PlanScore>> {
    if desire_reward.len() != 2 {
        return Err(Error::LengthMismatch { expected: 2, got: desire_reward.len() });
    }
    // Desire over (y, r): uniform over the signal, desire over the reward.
    let desire_yr: Vec<f64> = (0..4)
        .map(|cell| 0.5 * desire_reward.probs()[cell % 2])
        .collect();

    let mut scores = Vec::with_capacity(Plan::ALL.len());
    for plan in Plan::ALL {
        let joint = env.plan_joint(plan)?;
        let obs = joint.marginalize(&["y", "r"])?;
        let divergence = prob::kl_slices(obs.probs(), &desire_yr)?;
        let mut evidence = 0.0;
        for (cell, &p) in obs.probs().iter().enumerate() {
            if p > 0.0 {
                evidence += p * desire_yr[cell].ln();
            }
        }
        // Desire divergence: E_p(z) KL[p(y,r | z) || desire].
        let obs_given_z = joint.condition(&["y", "r"], &["z"])?;
        let p_z = joint.marginalize(&["z"])?;
        let mut desire_divergence = 0.0;
        for (z, &w) in p_z.probs().iter().enumerate() {
            if w > 0.0 {
                desire_divergence += w * prob::kl_slices(&obs_given_z.row(z).probs, &desire_yr)?;
            }
        }
        let info_gain = joint.expected_info_gain(&["z"], &["y", "r"])?;
        let split_residual = (divergence - (desire_divergence - info_gain)).abs();
        scores.push(PlanScore {
            plan,
            evidence,
            divergence,
            desire_divergence,
            info_gain,
            split_residual,
        });
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_bandit_ninety_ten() {
        let bandit = MatchingBandit::new(vec![0.9, 0.1]).unwrap();
        let report = matching_bandit_policies(&bandit).unwrap();
        assert!((report.policy_divergence[0] - 0.9).abs() < 1e-15);
        assert!((report.policy_divergence[1] - 0.1).abs() < 1e-15);
        assert!((report.matching_index_divergence - 1.0).abs() < 1e-12);
        assert_eq!(report.policy_evidence, vec![1.0, 0.0]);
        assert!(report.matching_index_evidence < 1.0);
    }

    #[test]
    fn matching_bandit_uniform_phi_is_indifferent() {
        let bandit = MatchingBandit::new(vec![0.4, 0.4, 0.4]).unwrap();
        let report = matching_bandit_policies(&bandit).unwrap();
        for &w in &report.policy_divergence {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        // Ties break to the lowest arm index.
        assert_eq!(report.policy_evidence, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn matching_bandit_closed_form_agrees_with_grid_oracle() {
        // Oracle: simplex grid search over the divergence objective.
        let bandit = MatchingBandit::new(vec![0.5, 0.3, 0.2]).unwrap();
        let report = matching_bandit_policies(&bandit).unwrap();
        let phi_norm = bandit.phi_normalized();
        let oracle = grid_search_simplex(3, 200, |policy| {
            prob::kl_slices(policy, &phi_norm).unwrap_or(f64::INFINITY)
        });
        for (got, want) in report.policy_divergence.iter().zip(&oracle) {
            assert!((got - want).abs() < 2.0 / 200.0, "{got} vs {want}");
        }
        // Evidence vertex: grid search over the negated evidence objective.
        let ev_oracle = grid_search_simplex(3, 200, |policy| {
            -policy
                .iter()
                .zip(&phi_norm)
                .filter(|(&w, _)| w > 0.0)
                .map(|(&w, &d)| w * d.ln())
                .sum::<f64>()
        });
        assert!((ev_oracle[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn matching_bandit_rejects_bad_phi() {
        assert!(MatchingBandit::new(vec![]).is_err());
        assert!(MatchingBandit::new(vec![0.0, 0.0]).is_err());
        assert!(MatchingBandit::new(vec![1.2]).is_err());
    }

    #[test]
    fn bernoulli_bandit_interior_vs_vertex() {
        // Desire: reward bit 0.99/0.01, uniform over arms given the reward.
        let desire = DesireDistribution::from_probs(vec![0.005, 0.495, 0.005, 0.495]).unwrap();
        let report = bernoulli_bandit_policies(&[0.9, 0.1], &desire, 200).unwrap();
        // Divergence policy strictly interior.
        for &w in &report.policy_divergence {
            assert!(w > 0.0, "divergence policy {:?}", report.policy_divergence);
        }
        // Evidence policy at a vertex (the high-reward arm).
        assert!((report.policy_evidence[0] - 1.0).abs() < 1e-9);
        assert!(
            report.matching_index_divergence > report.matching_index_evidence,
            "divergence should match the arm profile more closely"
        );
    }

    #[test]
    fn bernoulli_bandit_symmetric_arms_give_uniform_divergence_policy() {
        let desire = DesireDistribution::from_probs(vec![0.05, 0.45, 0.05, 0.45]).unwrap();
        let report = bernoulli_bandit_policies(&[0.6, 0.6], &desire, 100).unwrap();
        assert!((report.policy_divergence[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn bernoulli_bandit_single_arm() {
        let desire = DesireDistribution::from_probs(vec![0.3, 0.7]).unwrap();
        let report = bernoulli_bandit_policies(&[0.7], &desire, 50).unwrap();
        assert_eq!(report.policy_divergence, vec![1.0]);
        assert_eq!(report.policy_evidence, vec![1.0]);
    }

    #[test]
    fn bernoulli_bandit_rejects_coarse_resolution() {
        let desire = DesireDistribution::uniform(4);
        assert!(matches!(
            bernoulli_bandit_policies(&[0.5, 0.5], &desire, 5),
            Err(Error::ResolutionTooCoarse(5))
        ));
    }

    fn score_for(scores: &[PlanScore], plan: Plan) -> &PlanScore {
        scores.iter().find(|s| s.plan == plan).unwrap()
    }

    #[test]
    fn twostep_perfect_signal_favors_checking() {
        let env = TwoStepEnv::new(1.0).unwrap();
        let desire = DesireDistribution::from_probs(vec![0.01, 0.99]).unwrap();
        let scores = twostep_plan_scores(&env, &desire).unwrap();
        let check = score_for(&scores, Plan::CheckThenMatch);

        // Enumeration oracle: r ~ Bernoulli(1) under the checking plan, so
        // its divergence is exactly -ln 0.99.
        assert!((check.divergence + 0.99f64.ln()).abs() < 1e-12);
        for plan in [Plan::GuessDoorA, Plan::GuessDoorB] {
            let blind = score_for(&scores, plan);
            assert!(
                check.divergence < blind.divergence - 0.01,
                "check {} vs blind {}",
                check.divergence,
                blind.divergence
            );
            // Oracle: under a perfect signal a blind plan induces two equally
            // likely (signal, reward) cells, perfectly correlated with the
            // context, so its divergence is 0.5 ln(1/0.99) + 0.5 ln(1/0.01).
            let oracle = 0.5 * (1.0f64 / 0.99).ln() + 0.5 * (1.0f64 / 0.01).ln();
            assert!((blind.divergence - oracle).abs() < 1e-12);
        }
        // Full context revelation: the checking plan's information gain about
        // the context is exactly ln 2.
        assert!((check.info_gain - 2.0f64.ln()).abs() < 1e-10);
        for s in &scores {
            assert!(s.split_residual < 1e-10, "{:?} residual {}", s.plan, s.split_residual);
        }
    }

    #[test]
    fn twostep_uninformative_signal_ties_all_plans() {
        let env = TwoStepEnv::new(0.5).unwrap();
        let desire = DesireDistribution::from_probs(vec![0.01, 0.99]).unwrap();
        let scores = twostep_plan_scores(&env, &desire).unwrap();
        for s in &scores[1..] {
            assert!((s.divergence - scores[0].divergence).abs() < 1e-10);
            assert!((s.evidence - scores[0].evidence).abs() < 1e-10);
        }
    }

    #[test]
    fn twostep_uniform_desire_ties_all_plans() {
        let env = TwoStepEnv::new(1.0).unwrap();
        let desire = DesireDistribution::uniform(2);
        let scores = twostep_plan_scores(&env, &desire).unwrap();
        for s in &scores[1..] {
            assert!((s.divergence - scores[0].divergence).abs() < 1e-10);
            assert!((s.evidence - scores[0].evidence).abs() < 1e-10);
        }
    }

    #[test]
    fn twostep_check_preference_grows_with_signal_accuracy() {
        let desire = DesireDistribution::from_probs(vec![0.01, 0.99]).unwrap();
        let mut last_margin = -1e-9;
        for step in 0..=5 {
            let alpha = 0.5 + 0.1 * step as f64;
            let env = TwoStepEnv::new(alpha).unwrap();
            let scores = twostep_plan_scores(&env, &desire).unwrap();
            let check = score_for(&scores, Plan::CheckThenMatch).divergence;
            let blind = score_for(&scores, Plan::GuessDoorA).divergence;
            let margin = blind - check;
            assert!(
                margin > last_margin,
                "margin {margin} did not grow at alpha {alpha}"
            );
            last_margin = margin;
        }
    }

    #[test]
    fn twostep_rejects_bad_alpha() {
        assert!(TwoStepEnv::new(0.3).is_err());
        assert!(TwoStepEnv::new(1.1).is_err());
    }
}
