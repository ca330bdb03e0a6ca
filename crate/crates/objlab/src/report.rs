//! Relation reports: one verified identity or bound, with every named term,
//! the signed recombination, the residual, and condition flags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Residual threshold below which an identity is considered exact.
pub const IDENTITY_TOL: f64 = 1e-10;

/// Slack floor for inequality checks (absorbs floating-point round-off).
pub const BOUND_TOL: f64 = 1e-12;

/// Outcome of checking a single relation on a single model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationReport {
    pub relation_id: String,
    /// Named term values in nats, keyed by the label each term carries in the
    /// decomposition it came from.
    pub terms: BTreeMap<String, f64>,
    /// Left-hand side of the relation.
    pub lhs: f64,
    /// Signed combination of the right-hand terms.
    pub signed_sum: f64,
    /// |lhs - signed_sum|.
    pub residual: f64,
    pub condition_flags: BTreeMap<String, bool>,
    pub pass: bool,
}

impl RelationReport {
    /// Report for an exact identity: pass iff |lhs - signed_sum| < `tol`.
    /// `signed_terms` are (label, sign, value) triples; the signed sum is
    /// recomputed from exactly the stored values.
    pub fn identity(
        relation_id: impl Into<String>,
        lhs: f64,
        signed_terms: &[(&str, f64, f64)],
        tol: f64,
    ) -> Self {
        let mut terms = BTreeMap::new();
        let mut signed_sum = 0.0;
        for (label, sign, value) in signed_terms {
            terms.insert((*label).to_string(), *value);
            signed_sum += sign * value;
        }
        let residual = (lhs - signed_sum).abs();
        RelationReport {
            relation_id: relation_id.into(),
            terms,
            lhs,
            signed_sum,
            residual,
            condition_flags: BTreeMap::new(),
            pass: residual < tol,
        }
    }

    /// Report for a one-sided bound `lhs >= signed_sum`: pass iff
    /// slack = lhs - signed_sum >= -tol. The slack is stored as a term.
    pub fn bound(
        relation_id: impl Into<String>,
        lhs: f64,
        signed_terms: &[(&str, f64, f64)],
        tol: f64,
    ) -> Self {
        let mut report = Self::identity(relation_id, lhs, signed_terms, f64::INFINITY);
        let slack = report.lhs - report.signed_sum;
        report.terms.insert("slack".to_string(), slack);
        report.residual = slack.abs();
        report.pass = slack >= -tol;
        report
    }

    /// Report that only measures; it never fails.
    pub fn probe(relation_id: impl Into<String>, lhs: f64, signed_terms: &[(&str, f64, f64)]) -> Self {
        let mut report = Self::identity(relation_id, lhs, signed_terms, f64::INFINITY);
        report.pass = true;
        report
    }

    pub fn with_flag(mut self, label: impl Into<String>, value: bool) -> Self {
        self.condition_flags.insert(label.into(), value);
        self
    }

    pub fn with_term(mut self, label: impl Into<String>, value: f64) -> Self {
        self.terms.insert(label.into(), value);
        self
    }

    /// Marks the report failed unless `ok`.
    pub fn require(mut self, ok: bool) -> Self {
        self.pass = self.pass && ok;
        self
    }

    pub fn term(&self, label: &str) -> f64 {
        self.terms[label]
    }

    pub fn flag(&self, label: &str) -> bool {
        self.condition_flags[label]
    }
}
