//! Decomposition of the full past/future sequence divergence into future
//! divergence, generalized empowerment, latent filtering information, and
//! past divergence, plus the classic empowerment functional.
//!
//! A sequence model factors a joint over six variables
//! (o_past, x_past, a_past, x_future, a_future, o_future) as
//! p(o<) p(x<,a<|o<) p(x>,a>|x<,a<) p(o>|x>). The expectation measure for the
//! empowerment and filtering terms is the full assembled joint; under that
//! choice the four-term sum exceeds the marginal sequence divergence by
//! exactly the conditional mutual information I(x>,a> ; o< | o>), which
//! vanishes when the past observation is a point mass.

use crate::error::{Error, Result};
use crate::prob::{self, build_joint, CondTable, Factor, JointTable, VariableSpace};
use crate::report::{RelationReport, BOUND_TOL, IDENTITY_TOL};

/// Cardinalities of the six sequence variables.
#[derive(Debug, Clone, Copy)]
pub struct SequenceCards {
    pub obs_past: usize,
    pub latent_past: usize,
    pub action_past: usize,
    pub latent_future: usize,
    pub action_future: usize,
    pub obs_future: usize,
}

/// Factored model of a past/future observation sequence.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    cards: SequenceCards,
    joint: JointTable,
}

impl SequenceModel {
    /// Builds the model from raw factor rows:
    /// * `obs_past`: p(o<) over `obs_past` values
    /// * `latent_past_rows[o<]`: p(x<,a< | o<), row-major over (x<, a<)
    /// * `latent_future_rows[(x<,a<)]`: p(x>,a> | x<,a<), row-major over (x>, a>)
    /// * `obs_future_rows[x>]`: p(o> | x>)
    pub fn new(
        cards: SequenceCards,
        obs_past: Vec<f64>,
        latent_past_rows: Vec<Vec<f64>>,
        latent_future_rows: Vec<Vec<f64>>,
        obs_future_rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let space = VariableSpace::new(vec![
            ("op", cards.obs_past),
            ("xp", cards.latent_past),
            ("ap", cards.action_past),
            ("xf", cards.latent_future),
            ("af", cards.action_future),
            ("of", cards.obs_future),
        ])?;
        let p_op = JointTable::new(VariableSpace::scalar("op", cards.obs_past)?, obs_past)?;
        let lat_past = CondTable::from_rows(
            VariableSpace::new(vec![("xp", cards.latent_past), ("ap", cards.action_past)])?,
            VariableSpace::scalar("op", cards.obs_past)?,
            latent_past_rows,
        )?;
        let lat_future = CondTable::from_rows(
            VariableSpace::new(vec![("xf", cards.latent_future), ("af", cards.action_future)])?,
            VariableSpace::new(vec![("xp", cards.latent_past), ("ap", cards.action_past)])?,
            latent_future_rows,
        )?;
        let obs_future = CondTable::from_rows(
            VariableSpace::scalar("of", cards.obs_future)?,
            VariableSpace::scalar("xf", cards.latent_future)?,
            obs_future_rows,
        )?;
        let joint = build_joint(
            &space,
            &[
                Factor::Marginal(p_op),
                Factor::Conditional(lat_past),
                Factor::Conditional(lat_future),
                Factor::Conditional(obs_future),
            ],
        )?;
        Ok(Self { cards, joint })
    }

    pub fn cards(&self) -> SequenceCards {
        self.cards
    }

    /// The assembled joint over (op, xp, ap, xf, af, of).
    pub fn joint(&self) -> &JointTable {
        &self.joint
    }

    /// True when p(o<) is a point mass.
    pub fn past_is_delta(&self) -> Result<bool> {
        let p_op = self.joint.marginalize(&["op"])?;
        Ok(p_op.probs().iter().any(|&p| (p - 1.0).abs() <= prob::NORM_TOL))
    }
}

/// Factored desire over past and future observations.
#[derive(Debug, Clone)]
pub struct SequenceDesire {
    desire_past: Vec<f64>,
    desire_future: Vec<f64>,
}

impl SequenceDesire {
    pub fn new(desire_past: Vec<f64>, desire_future: Vec<f64>) -> Result<Self> {
        for probs in [&desire_past, &desire_future] {
            let mut sum = 0.0;
            for &p in probs.iter() {
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::NegativeProbability(p));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > prob::NORM_TOL {
                return Err(Error::NotNormalized { sum, expected: 1.0, tol: prob::NORM_TOL });
            }
        }
        Ok(Self { desire_past, desire_future })
    }

    pub fn desire_past(&self) -> &[f64] {
        &self.desire_past
    }

    pub fn desire_future(&self) -> &[f64] {
        &self.desire_future
    }

    /// Product desire over (op, of), laid out to match a marginal of the
    /// sequence joint.
    fn product_table(&self) -> Result<JointTable> {
        let space = VariableSpace::new(vec![
            ("op", self.desire_past.len()),
            ("of", self.desire_future.len()),
        ])?;
        let mut probs = Vec::with_capacity(self.desire_past.len() * self.desire_future.len());
        for &pp in &self.desire_past {
            for &pf in &self.desire_future {
                probs.push(pp * pf);
            }
        }
        JointTable::new(space, probs)
    }
}

/// Classic empowerment: I(x_future ; a_future | x_past, a_past), computed by
/// its own enumeration over the assembled joint (independent of
/// [`prob::JointTable::mutual_information`], which tests compare against).
pub fn empowerment_mi(seq: &SequenceModel) -> Result<f64> {
    let joint = seq.joint();
    let m4 = joint.marginalize(&["xp", "ap", "xf", "af"])?;
    let past = joint.marginalize(&["xp", "ap"])?;
    let with_xf = joint.marginalize(&["xp", "ap", "xf"])?;
    let with_af = joint.marginalize(&["xp", "ap", "af"])?;

    let space = m4.space();
    let idx_past = space.resolve(&["xp", "ap"])?;
    let idx_xf = space.resolve(&["xp", "ap", "xf"])?;
    let idx_af = space.resolve(&["xp", "ap", "af"])?;
    let mut mi = 0.0;
    for (cell, &p) in m4.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let config = space.decode(cell);
        let p_past = past.probs()[space.sub_index(&config, &idx_past)];
        let p_xf = with_xf.probs()[space.sub_index(&config, &idx_xf)];
        let p_af = with_af.probs()[space.sub_index(&config, &idx_af)];
        mi += p * ((p * p_past) / (p_xf * p_af)).ln();
    }
    Ok(mi.max(0.0))
}

/// Four-term decomposition of the sequence divergence. The report verifies
///
///   Future - Empowerment - Filtering + Past
///     = KL[p(o<,o>) || pt(o<) pt(o>)] + I(x>,a> ; o< | o>)
///
/// exactly, with the conditional mutual information computed independently.
/// The flags record whether the past observation is a point mass (the regime
/// in which the overcount vanishes and the four terms recover the sequence
/// divergence alone) and that the decomposition never under-counts.
pub fn sequence_divergence_decomposition(
    seq: &SequenceModel,
    desire: &SequenceDesire,
) -> Result<RelationReport> {
    let joint = seq.joint();
    let cards = seq.cards();
    if desire.desire_past.len() != cards.obs_past || desire.desire_future.len() != cards.obs_future
    {
        return Err(Error::SpaceMismatch);
    }

    // Future divergence: E_p(x>) KL[p(o>|x>) || pt(o>)].
    let p_xf = joint.marginalize(&["xf"])?;
    let of_given_xf = joint.condition(&["of"], &["xf"])?;
    let mut future_div = 0.0;
    for (xf, &w) in p_xf.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        future_div += w * prob::kl_slices(&of_given_xf.row(xf).probs, &desire.desire_future)?;
    }

    // Past divergence: KL[p(o<) || pt(o<)].
    let p_op = joint.marginalize(&["op"])?;
    let past_div = prob::kl_slices(p_op.probs(), &desire.desire_past)?;

    // Empowerment and filtering terms: full-joint expectations of the
    // log-ratios between the respective conditionals.
    let fut_given_of = joint.condition(&["xf", "af"], &["of"])?;
    let fut_given_past = joint.condition(&["xf", "af"], &["xp", "ap"])?;
    let past_given_all = joint.condition(&["xp", "ap"], &["op", "xf", "af"])?;
    let past_given_op = joint.condition(&["xp", "ap"], &["op"])?;

    let space = joint.space();
    let idx_fut = space.resolve(&["xf", "af"])?;
    let idx_of = space.resolve(&["of"])?;
    let idx_past_lat = space.resolve(&["xp", "ap"])?;
    let idx_op_fut = space.resolve(&["op", "xf", "af"])?;
    let idx_op = space.resolve(&["op"])?;

    let mut empowerment = 0.0;
    let mut filtering = 0.0;
    for (cell, &w) in joint.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let config = space.decode(cell);
        let fut = space.sub_index(&config, &idx_fut);
        let past_lat = space.sub_index(&config, &idx_past_lat);
        let p_fut_of = fut_given_of.row(space.sub_index(&config, &idx_of)).probs[fut];
        let p_fut_past = fut_given_past.row(past_lat).probs[fut];
        empowerment += w * (p_fut_of / p_fut_past).ln();
        let p_past_all = past_given_all.row(space.sub_index(&config, &idx_op_fut)).probs[past_lat];
        let p_past_op = past_given_op.row(space.sub_index(&config, &idx_op)).probs[past_lat];
        filtering += w * (p_past_all / p_past_op).ln();
    }

    // Ground truth: the marginal sequence divergence plus the independently
    // computed conditional mutual information overcount.
    let p_obs = joint.marginalize(&["op", "of"])?;
    let desire_product = desire.product_table()?;
    let sequence_div = prob::kl(&p_obs, &desire_product)?;
    let overcount = joint.mutual_information(&["xf", "af"], &["op"], Some(&["of"]))?;

    let report = RelationReport::identity(
        "sequence_divergence_decomposition",
        sequence_div + overcount,
        &[
            ("Future Divergence", 1.0, future_div),
            ("Generalized Empowerment", -1.0, empowerment),
            ("Latent Filtering Information", -1.0, filtering),
            ("Past Divergence", 1.0, past_div),
        ],
        IDENTITY_TOL,
    )
    .with_term("Sequence Divergence", sequence_div)
    .with_term("Conditional Mutual Information", overcount);

    let never_undercounts = report.signed_sum - sequence_div >= -BOUND_TOL;
    let past_is_delta = seq.past_is_delta()?;
    Ok(report
        .with_flag("past_is_delta", past_is_delta)
        .with_flag("never_undercounts", never_undercounts)
        .require(never_undercounts))
}

/// With a point-mass past observation the past divergence collapses to
/// -ln pt(o_hat): a constant in the actions, which is the precise sense in
/// which it drops out of optimization. The report carries that constant and
/// flags the delta regime.
pub fn past_divergence_delta_check(
    seq: &SequenceModel,
    desire: &SequenceDesire,
) -> Result<RelationReport> {
    let p_op = seq.joint().marginalize(&["op"])?;
    if desire.desire_past.len() != p_op.probs().len() {
        return Err(Error::SpaceMismatch);
    }
    let past_div = prob::kl_slices(p_op.probs(), &desire.desire_past)?;
    let delta_cell = p_op
        .probs()
        .iter()
        .position(|&p| (p - 1.0).abs() <= prob::NORM_TOL);

    match delta_cell {
        Some(o_hat) => {
            let pt = desire.desire_past[o_hat];
            if pt <= 0.0 {
                return Err(Error::AbsoluteContinuity { cell: o_hat, p: 1.0 });
            }
            Ok(RelationReport::identity(
                "past_divergence_delta_check",
                past_div,
                &[("Negative Log Desire At Realized Past", 1.0, -pt.ln())],
                IDENTITY_TOL,
            )
            .with_flag("past_is_delta", true)
            .with_flag("action_independent", true))
        }
        None => Ok(RelationReport::probe(
            "past_divergence_delta_check",
            past_div,
            &[("Past Divergence", 1.0, past_div)],
        )
        .with_flag("past_is_delta", false)
        .with_flag("action_independent", false)),
    }
}

/// Convenience constructors used by tests and scenario code.
impl SequenceModel {
    /// Uniform two-valued model whose future state copies the future action
    /// exactly and whose future observation reveals the future state. Actions
    /// uniform over `k`; a clean ln k empowerment case.
    pub fn invertible_action_map(k: usize) -> Result<Self> {
        let cards = SequenceCards {
            obs_past: 1,
            latent_past: 1,
            action_past: 1,
            latent_future: k,
            action_future: k,
            obs_future: k,
        };
        let identity = |n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect()
        };
        // p(x>,a> | x<,a<): single row, x> = a>, actions uniform.
        let mut fut_row = vec![0.0; k * k];
        for a in 0..k {
            fut_row[a * k + a] = 1.0 / k as f64;
        }
        SequenceModel::new(
            cards,
            vec![1.0],
            vec![vec![1.0]],
            vec![fut_row],
            identity(k),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small hand-built model: binary everything, delta past observation.
    fn delta_past_model() -> SequenceModel {
        let cards = SequenceCards {
            obs_past: 2,
            latent_past: 2,
            action_past: 2,
            latent_future: 2,
            action_future: 2,
            obs_future: 2,
        };
        SequenceModel::new(
            cards,
            vec![1.0, 0.0],
            vec![
                vec![0.4, 0.1, 0.3, 0.2],
                vec![0.25, 0.25, 0.25, 0.25],
            ],
            vec![
                vec![0.5, 0.2, 0.2, 0.1],
                vec![0.1, 0.4, 0.4, 0.1],
                vec![0.25, 0.25, 0.3, 0.2],
                vec![0.3, 0.3, 0.2, 0.2],
            ],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        )
        .unwrap()
    }

    fn general_past_model() -> SequenceModel {
        let cards = SequenceCards {
            obs_past: 2,
            latent_past: 2,
            action_past: 2,
            latent_future: 2,
            action_future: 2,
            obs_future: 2,
        };
        SequenceModel::new(
            cards,
            vec![0.6, 0.4],
            vec![
                vec![0.4, 0.1, 0.3, 0.2],
                vec![0.1, 0.5, 0.2, 0.2],
            ],
            vec![
                vec![0.5, 0.2, 0.2, 0.1],
                vec![0.1, 0.4, 0.4, 0.1],
                vec![0.25, 0.25, 0.3, 0.2],
                vec![0.3, 0.3, 0.2, 0.2],
            ],
            vec![vec![0.8, 0.2], vec![0.3, 0.7]],
        )
        .unwrap()
    }

    #[test]
    fn factorization_implies_future_obs_conditional_independence() {
        let seq = general_past_model();
        let cmi = seq
            .joint()
            .mutual_information(&["of"], &["op", "xp", "ap"], Some(&["xf"]))
            .unwrap();
        assert!(cmi < 1e-10, "cmi {cmi}");
    }

    #[test]
    fn empowerment_zero_when_future_ignores_actions() {
        let cards = SequenceCards {
            obs_past: 1,
            latent_past: 1,
            action_past: 1,
            latent_future: 2,
            action_future: 2,
            obs_future: 2,
        };
        // p(x>,a>) independent: x> Bernoulli(0.3), a> uniform.
        let fut_row = vec![0.3 * 0.5, 0.3 * 0.5, 0.7 * 0.5, 0.7 * 0.5];
        let seq = SequenceModel::new(
            cards,
            vec![1.0],
            vec![vec![1.0]],
            vec![fut_row],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap();
        assert!(empowerment_mi(&seq).unwrap() < 1e-13);
    }

    #[test]
    fn empowerment_invertible_map_is_ln_k() {
        for k in [2usize, 3, 4] {
            let seq = SequenceModel::invertible_action_map(k).unwrap();
            let mi = empowerment_mi(&seq).unwrap();
            assert!((mi - (k as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn empowerment_matches_general_mutual_information() {
        let seq = general_past_model();
        let own = empowerment_mi(&seq).unwrap();
        let general = seq
            .joint()
            .mutual_information(&["xf"], &["af"], Some(&["xp", "ap"]))
            .unwrap();
        assert!((own - general).abs() < 1e-12);
    }

    #[test]
    fn empowerment_invariant_under_index_relabeling() {
        // Swap the two future-state labels everywhere they appear.
        let cards = SequenceCards {
            obs_past: 1,
            latent_past: 1,
            action_past: 1,
            latent_future: 2,
            action_future: 2,
            obs_future: 2,
        };
        let base_fut = vec![0.4, 0.2, 0.1, 0.3];
        let base_obs = vec![vec![0.8, 0.2], vec![0.3, 0.7]];
        let seq = SequenceModel::new(
            cards,
            vec![1.0],
            vec![vec![1.0]],
            vec![base_fut.clone()],
            base_obs.clone(),
        )
        .unwrap();
        // Relabeled: x> index flipped (swap rows of the x> axis).
        let swapped_fut = vec![base_fut[2], base_fut[3], base_fut[0], base_fut[1]];
        let swapped_obs = vec![base_obs[1].clone(), base_obs[0].clone()];
        let relabeled = SequenceModel::new(
            cards,
            vec![1.0],
            vec![vec![1.0]],
            vec![swapped_fut],
            swapped_obs,
        )
        .unwrap();
        let a = empowerment_mi(&seq).unwrap();
        let b = empowerment_mi(&relabeled).unwrap();
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn decomposition_delta_past_model_marginal_desire() {
        // Desire equal to the model's own observation marginals: the sequence
        // divergence vanishes and the empowerment and filtering terms cancel
        // the future divergence.
        let seq = delta_past_model();
        let p_op = seq.joint().marginalize(&["op"]).unwrap();
        let p_of = seq.joint().marginalize(&["of"]).unwrap();
        let desire =
            SequenceDesire::new(p_op.probs().to_vec(), p_of.probs().to_vec()).unwrap();
        let report = sequence_divergence_decomposition(&seq, &desire).unwrap();
        assert!(report.pass, "residual {}", report.residual);
        assert!(report.term("Sequence Divergence").abs() < 1e-12);
        assert!(report.term("Conditional Mutual Information").abs() < 1e-12);
        assert!(report.term("Past Divergence").abs() < 1e-12);
        assert!(report.flag("past_is_delta"));
    }

    #[test]
    fn decomposition_independent_future_reduces_to_marginal_divergences() {
        let cards = SequenceCards {
            obs_past: 2,
            latent_past: 2,
            action_past: 1,
            latent_future: 2,
            action_future: 2,
            obs_future: 2,
        };
        // Future latents ignore the past; future observation ignores the state.
        let fut_row = vec![0.3 * 0.5, 0.3 * 0.5, 0.7 * 0.5, 0.7 * 0.5];
        let seq = SequenceModel::new(
            cards,
            vec![0.7, 0.3],
            vec![vec![0.5, 0.5], vec![0.2, 0.8]],
            vec![fut_row.clone(), fut_row],
            vec![vec![0.6, 0.4], vec![0.6, 0.4]],
        )
        .unwrap();
        let desire = SequenceDesire::new(vec![0.5, 0.5], vec![0.4, 0.6]).unwrap();
        let report = sequence_divergence_decomposition(&seq, &desire).unwrap();
        assert!(report.pass, "residual {}", report.residual);
        assert!(report.term("Generalized Empowerment").abs() < 1e-12);
        assert!(report.term("Latent Filtering Information").abs() < 1e-12);
        let sum = report.term("Future Divergence") + report.term("Past Divergence");
        assert!((sum - report.term("Sequence Divergence")).abs() < 1e-10);
    }

    #[test]
    fn decomposition_delta_past_matches_divergence_exactly() {
        let seq = delta_past_model();
        let desire = SequenceDesire::new(vec![0.8, 0.2], vec![0.3, 0.7]).unwrap();
        let report = sequence_divergence_decomposition(&seq, &desire).unwrap();
        assert!(report.pass, "residual {}", report.residual);
        assert!(report.term("Conditional Mutual Information") < 1e-12);
        assert!(
            (report.signed_sum - report.term("Sequence Divergence")).abs() < 1e-10,
            "four-term sum should equal the sequence divergence under a delta past"
        );
    }

    #[test]
    fn decomposition_general_past_overcounts_by_conditional_mi() {
        let seq = general_past_model();
        let desire = SequenceDesire::new(vec![0.5, 0.5], vec![0.45, 0.55]).unwrap();
        let report = sequence_divergence_decomposition(&seq, &desire).unwrap();
        assert!(report.pass, "residual {}", report.residual);
        assert!(!report.flag("past_is_delta"));
        assert!(report.flag("never_undercounts"));
        let overcount = report.signed_sum - report.term("Sequence Divergence");
        let cmi = report.term("Conditional Mutual Information");
        assert!((overcount - cmi).abs() < 1e-10);
        assert!(overcount >= -1e-12);
    }

    #[test]
    fn past_divergence_delta_values() {
        let seq = delta_past_model();

        // Uniform desire over two past observations: ln 2.
        let desire = SequenceDesire::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let report = past_divergence_delta_check(&seq, &desire).unwrap();
        assert!(report.pass);
        assert!(report.flag("past_is_delta"));
        assert!(report.flag("action_independent"));
        assert!((report.lhs - 2.0f64.ln()).abs() < 1e-12);

        // Full desire mass on the realized past: zero.
        let desire = SequenceDesire::new(vec![1.0, 0.0], vec![0.5, 0.5]).unwrap();
        let report = past_divergence_delta_check(&seq, &desire).unwrap();
        assert!(report.lhs.abs() < 1e-12);

        // Desire 0.25 on the realized past: ln 4, by direct evaluation.
        let desire = SequenceDesire::new(vec![0.25, 0.75], vec![0.5, 0.5]).unwrap();
        let report = past_divergence_delta_check(&seq, &desire).unwrap();
        assert!((report.lhs - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn past_divergence_non_delta_is_probe_only() {
        let seq = general_past_model();
        let desire = SequenceDesire::new(vec![0.5, 0.5], vec![0.5, 0.5]).unwrap();
        let report = past_divergence_delta_check(&seq, &desire).unwrap();
        assert!(report.pass);
        assert!(!report.flag("past_is_delta"));
    }
}
