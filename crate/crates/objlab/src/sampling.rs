//! Seeded random model generation for the verification sweeps. Streams are
//! counter-based: the rng for trial t of a run is derived from (seed, t), so
//! serial and parallel execution produce identical models.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::empowerment::{SequenceCards, SequenceDesire, SequenceModel};
use crate::objectives::{DesireDistribution, GenerativeModel, PolicySimplex};
use crate::prob::{CondTable, JointTable, VariableSpace};
use crate::relations::VariationalBelief;

/// Entries are floored here before renormalization, keeping every sampled
/// table strictly positive so support conditions hold by construction.
const PROB_FLOOR: f64 = 1e-9;

/// Independent rng stream for one trial of a seeded run.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Flat-Dirichlet sample: normalized unit exponentials, floored away from
/// zero.
pub fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1).max(PROB_FLOOR)).collect();
    let sum: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= sum);
    v
}

pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| random_simplex(rng, cols)).collect()
}

/// Everything one verification trial needs: a model, a desire, beliefs, a
/// policy pair, rewards, a target posterior, a data marginal, and one action
/// under study.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: GenerativeModel,
    pub desire: DesireDistribution,
    pub desire_x: DesireDistribution,
    pub rewards: Vec<f64>,
    pub action: usize,
    pub q_a: PolicySimplex,
    pub prior_a: PolicySimplex,
    pub belief: VariationalBelief,
    pub target_posterior: CondTable,
    pub data_marginal: JointTable,
}

pub fn random_bundle(rng: &mut ChaCha8Rng, card_min: usize, card_max: usize) -> ModelBundle {
    let card = |rng: &mut ChaCha8Rng| rng.gen_range(card_min..=card_max);
    let n_obs = card(rng);
    let n_lat = card(rng);
    let n_act = card(rng);

    let model = GenerativeModel::new(
        random_rows(rng, n_act, n_lat),
        random_rows(rng, n_lat, n_obs),
    )
    .expect("sampled rows are valid");
    let desire = DesireDistribution::from_probs(random_simplex(rng, n_obs))
        .expect("sampled simplex is normalized");
    let desire_x = DesireDistribution::from_probs(random_simplex(rng, n_lat))
        .expect("sampled simplex is normalized");
    let rewards: Vec<f64> = (0..n_obs).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let action = rng.gen_range(0..n_act);
    let q_a = PolicySimplex::new(random_simplex(rng, n_act)).expect("normalized");
    let prior_a = PolicySimplex::new(random_simplex(rng, n_act)).expect("normalized");

    let q_x = random_simplex(rng, n_lat);
    let q_xo = CondTable::from_rows(
        VariableSpace::scalar("x", n_lat).expect("valid space"),
        VariableSpace::scalar("o", n_obs).expect("valid space"),
        random_rows(rng, n_obs, n_lat),
    )
    .expect("sampled rows are normalized");
    let belief = VariationalBelief::new(q_x, q_xo).expect("valid belief");

    let target_posterior = CondTable::from_rows(
        VariableSpace::scalar("x", n_lat).expect("valid space"),
        VariableSpace::scalar("o", n_obs).expect("valid space"),
        random_rows(rng, n_obs, n_lat),
    )
    .expect("sampled rows are normalized");
    let data_marginal = JointTable::new(
        VariableSpace::scalar("o", n_obs).expect("valid space"),
        random_simplex(rng, n_obs),
    )
    .expect("sampled simplex is normalized");

    ModelBundle {
        model,
        desire,
        desire_x,
        rewards,
        action,
        q_a,
        prior_a,
        belief,
        target_posterior,
        data_marginal,
    }
}

/// Random pair of joints over the same two-variable space, for chain-rule
/// checks.
pub fn random_joint_pair(
    rng: &mut ChaCha8Rng,
    card_min: usize,
    card_max: usize,
) -> (JointTable, JointTable) {
    let n_lat = rng.gen_range(card_min..=card_max);
    let n_obs = rng.gen_range(card_min..=card_max);
    let space = VariableSpace::new(vec![("x", n_lat), ("o", n_obs)]).expect("valid space");
    let p = JointTable::new(space.clone(), random_simplex(rng, n_lat * n_obs)).expect("normalized");
    let t = JointTable::new(space, random_simplex(rng, n_lat * n_obs)).expect("normalized");
    (p, t)
}

/// Random sequence model with per-variable cardinalities in the given range,
/// optionally with a point-mass past observation.
pub fn random_sequence_model(
    rng: &mut ChaCha8Rng,
    card_min: usize,
    card_max: usize,
    delta_past: bool,
) -> (SequenceModel, SequenceDesire) {
    let card = |rng: &mut ChaCha8Rng| rng.gen_range(card_min..=card_max);
    let cards = SequenceCards {
        obs_past: card(rng),
        latent_past: card(rng),
        action_past: card(rng),
        latent_future: card(rng),
        action_future: card(rng),
        obs_future: card(rng),
    };
    let obs_past = if delta_past {
        let mut p = vec![0.0; cards.obs_past];
        p[rng.gen_range(0..cards.obs_past)] = 1.0;
        p
    } else {
        random_simplex(rng, cards.obs_past)
    };
    let past_lat = cards.latent_past * cards.action_past;
    let fut_lat = cards.latent_future * cards.action_future;
    let model = SequenceModel::new(
        cards,
        obs_past,
        random_rows(rng, cards.obs_past, past_lat),
        random_rows(rng, past_lat, fut_lat),
        random_rows(rng, cards.latent_future, cards.obs_future),
    )
    .expect("sampled factors are valid");
    let desire = SequenceDesire::new(
        random_simplex(rng, cards.obs_past),
        random_simplex(rng, cards.obs_future),
    )
    .expect("sampled simplices are normalized");
    (model, desire)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_streams_are_independent_and_reproducible() {
        let a: Vec<f64> = {
            let mut rng = trial_rng(7, 3);
            random_simplex(&mut rng, 4)
        };
        let b: Vec<f64> = {
            let mut rng = trial_rng(7, 3);
            random_simplex(&mut rng, 4)
        };
        let c: Vec<f64> = {
            let mut rng = trial_rng(7, 4);
            random_simplex(&mut rng, 4)
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_simplices_are_strictly_positive() {
        let mut rng = trial_rng(0, 0);
        for _ in 0..100 {
            let s = random_simplex(&mut rng, 5);
            assert!(s.iter().all(|&v| v > 0.0));
            assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bundles_build_for_all_cardinalities() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..20 {
            let bundle = random_bundle(&mut rng, 2, 5);
            assert!(bundle.action < bundle.model.n_actions());
            assert_eq!(bundle.desire.len(), bundle.model.n_obs());
        }
    }

    #[test]
    fn sequence_models_respect_delta_flag() {
        let mut rng = trial_rng(2, 0);
        let (delta, _) = random_sequence_model(&mut rng, 2, 3, true);
        assert!(delta.past_is_delta().unwrap());
        let (general, _) = random_sequence_model(&mut rng, 2, 3, false);
        assert!(!general.past_is_delta().unwrap());
    }
}
