//! Exact discrete probability engine: joints over named finite variables,
//! marginalization, conditioning, and the information functionals the rest
//! of the crate is built on.
//!
//! Tables are dense, row-major over the declared variable order, and tiny by
//! design; every operation enumerates cells exactly. All information
//! quantities are in nats.

use crate::error::{Error, Result};

/// Guard against accidentally enormous joints.
const MAX_CELLS: u128 = 10_000_000;

/// Absolute tolerance for normalization checks.
pub const NORM_TOL: f64 = 1e-12;

/// An ordered set of named finite variables.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpace {
    vars: Vec<(String, usize)>,
}

impl VariableSpace {
    pub fn new<S: Into<String>>(vars: Vec<(S, usize)>) -> Result<Self> {
        let vars: Vec<(String, usize)> = vars.into_iter().map(|(n, c)| (n.into(), c)).collect();
        let mut cells: u128 = 1;
        for (i, (name, card)) in vars.iter().enumerate() {
            if *card == 0 {
                return Err(Error::EmptyVariable(name.clone()));
            }
            if vars[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::DuplicateVariable(name.clone()));
            }
            cells = cells.saturating_mul(*card as u128);
        }
        if cells > MAX_CELLS {
            return Err(Error::SizeGuardExceeded { cells, limit: MAX_CELLS });
        }
        Ok(Self { vars })
    }

    /// Single-variable space, the common case for observation/latent axes.
    pub fn scalar<S: Into<String>>(name: S, cardinality: usize) -> Result<Self> {
        Self::new(vec![(name, cardinality)])
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(n, _)| n.as_str())
    }

    pub fn cardinalities(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars.iter().map(|(_, c)| *c)
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.vars[var].1
    }

    pub fn name(&self, var: usize) -> &str {
        &self.vars[var].0
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.vars
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    /// Resolves names to variable indices, sorted into this space's order.
    /// Rejects unknown names and repeats.
    pub fn resolve(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut idxs = Vec::with_capacity(names.len());
        for name in names {
            let i = self.index_of(name)?;
            if idxs.contains(&i) {
                return Err(Error::OverlappingSubsets(name.to_string()));
            }
            idxs.push(i);
        }
        idxs.sort_unstable();
        Ok(idxs)
    }

    /// Number of cells in the full joint.
    pub fn total_cells(&self) -> usize {
        self.vars.iter().map(|(_, c)| *c).product()
    }

    /// Sub-space over the given variable indices, preserving this space's order.
    pub fn subspace(&self, idxs: &[usize]) -> VariableSpace {
        VariableSpace {
            vars: idxs.iter().map(|&i| self.vars[i].clone()).collect(),
        }
    }

    /// Decodes a flat cell index into one value per variable.
    pub fn decode(&self, mut cell: usize) -> Vec<usize> {
        let mut config = vec![0usize; self.vars.len()];
        for i in (0..self.vars.len()).rev() {
            config[i] = cell % self.vars[i].1;
            cell /= self.vars[i].1;
        }
        config
    }

    /// Flat cell index of a full configuration.
    pub fn encode(&self, config: &[usize]) -> usize {
        debug_assert_eq!(config.len(), self.vars.len());
        let mut cell = 0usize;
        for (i, &v) in config.iter().enumerate() {
            debug_assert!(v < self.vars[i].1);
            cell = cell * self.vars[i].1 + v;
        }
        cell
    }

    /// Flat index of `config`'s restriction to the sub-space `idxs` (in `idxs` order).
    pub fn sub_index(&self, config: &[usize], idxs: &[usize]) -> usize {
        let mut cell = 0usize;
        for &i in idxs {
            cell = cell * self.vars[i].1 + config[i];
        }
        cell
    }

    pub fn same_shape(&self, other: &VariableSpace) -> bool {
        self.vars.len() == other.vars.len()
            && self
                .vars
                .iter()
                .zip(&other.vars)
                .all(|(a, b)| a.0 == b.0 && a.1 == b.1)
    }
}

/// A normalized joint distribution over a [`VariableSpace`].
#[derive(Debug, Clone)]
pub struct JointTable {
    space: VariableSpace,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(space: VariableSpace, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != space.total_cells() {
            return Err(Error::LengthMismatch { expected: space.total_cells(), got: probs.len() });
        }
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
        Ok(Self { space, probs })
    }

    /// Builds from non-negative weights, dividing by their sum.
    pub fn from_weights(space: VariableSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.total_cells() {
            return Err(Error::LengthMismatch { expected: space.total_cells(), got: weights.len() });
        }
        let mut sum = 0.0;
        for &w in &weights {
            if w < 0.0 || !w.is_finite() {
                return Err(Error::NegativeProbability(w));
            }
            sum += w;
        }
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum, expected: 1.0, tol: NORM_TOL });
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        Ok(Self { space, probs })
    }

    pub fn uniform(space: VariableSpace) -> Self {
        let n = space.total_cells();
        Self { space, probs: vec![1.0 / n as f64; n] }
    }

    /// Point mass on one configuration.
    pub fn delta(space: VariableSpace, config: &[usize]) -> Self {
        let mut probs = vec![0.0; space.total_cells()];
        probs[space.encode(config)] = 1.0;
        Self { space, probs }
    }

    pub fn space(&self) -> &VariableSpace {
        &self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, config: &[usize]) -> f64 {
        self.probs[self.space.encode(config)]
    }

    /// Sums out every variable not in `keep`. The kept variables preserve
    /// this joint's order regardless of the order of `keep`.
    pub fn marginalize(&self, keep: &[&str]) -> Result<JointTable> {
        let keep_idx = self.space.resolve(keep)?;
        let out_space = self.space.subspace(&keep_idx);
        let mut out = vec![0.0; out_space.total_cells()];
        for cell in 0..self.probs.len() {
            let config = self.space.decode(cell);
            out[self.space.sub_index(&config, &keep_idx)] += self.probs[cell];
        }
        Ok(JointTable { space: out_space, probs: out })
    }

    /// Conditional distribution of `target` given `given`; other variables are
    /// summed out. Rows whose conditioning configuration has zero probability
    /// are flagged undefined rather than fabricated.
    pub fn condition(&self, target: &[&str], given: &[&str]) -> Result<CondTable> {
        let t_idx = self.space.resolve(target)?;
        let g_idx = self.space.resolve(given)?;
        for i in &t_idx {
            if g_idx.contains(i) {
                return Err(Error::OverlappingSubsets(self.space.name(*i).to_string()));
            }
        }
        let t_space = self.space.subspace(&t_idx);
        let g_space = self.space.subspace(&g_idx);
        let mut rows = vec![vec![0.0; t_space.total_cells()]; g_space.total_cells()];
        for cell in 0..self.probs.len() {
            let config = self.space.decode(cell);
            let r = self.space.sub_index(&config, &g_idx);
            let t = self.space.sub_index(&config, &t_idx);
            rows[r][t] += self.probs[cell];
        }
        let rows = rows
            .into_iter()
            .map(|mut row| {
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    for p in &mut row {
                        *p /= mass;
                    }
                    CondRow { probs: row, defined: true }
                } else {
                    CondRow { probs: row, defined: false }
                }
            })
            .collect();
        Ok(CondTable { target: t_space, given: g_space, rows })
    }

    /// Shannon entropy, -sum p ln p with 0 ln 0 = 0.
    pub fn entropy(&self) -> f64 {
        entropy_slice(&self.probs)
    }

    /// Conditional mutual information I(A; B | given) by exact enumeration.
    /// `given = None` gives the plain mutual information.
    pub fn mutual_information(
        &self,
        a: &[&str],
        b: &[&str],
        given: Option<&[&str]>,
    ) -> Result<f64> {
        let g: Vec<&str> = given.map(|g| g.to_vec()).unwrap_or_default();
        let mut all = a.to_vec();
        all.extend_from_slice(b);
        all.extend_from_slice(&g);
        let abc = self.marginalize(&all)?;
        let mut ac_names = a.to_vec();
        ac_names.extend_from_slice(&g);
        let mut bc_names = b.to_vec();
        bc_names.extend_from_slice(&g);
        let ac = self.marginalize(&ac_names)?;
        let bc = self.marginalize(&bc_names)?;
        let c = self.marginalize(&g)?;

        let ac_idx = abc.space.resolve(&ac.space.names().collect::<Vec<_>>())?;
        let bc_idx = abc.space.resolve(&bc.space.names().collect::<Vec<_>>())?;
        let c_idx = abc.space.resolve(&c.space.names().collect::<Vec<_>>())?;

        let mut mi = 0.0;
        for cell in 0..abc.probs.len() {
            let p_abc = abc.probs[cell];
            if p_abc <= 0.0 {
                continue;
            }
            let config = abc.space.decode(cell);
            let p_ac = ac.probs[abc.space.sub_index(&config, &ac_idx)];
            let p_bc = bc.probs[abc.space.sub_index(&config, &bc_idx)];
            let p_c = c.probs[abc.space.sub_index(&config, &c_idx)];
            mi += p_abc * ((p_abc * p_c) / (p_ac * p_bc)).ln();
        }
        Ok(mi.max(0.0))
    }

    /// Expected information gain about `latent` from observing `obs`:
    /// E over p(obs) of KL[p(latent | obs) || p(latent)]. Zero-probability
    /// observation rows carry weight zero.
    pub fn expected_info_gain(&self, latent: &[&str], obs: &[&str]) -> Result<f64> {
        let posterior = self.condition(latent, obs)?;
        let prior = self.marginalize(latent)?;
        let obs_marginal = self.marginalize(obs)?;
        let mut ig = 0.0;
        for (row, weight) in posterior.rows.iter().zip(obs_marginal.probs()) {
            if *weight <= 0.0 || !row.defined {
                continue;
            }
            ig += weight * kl_slices(&row.probs, prior.probs())?;
        }
        Ok(ig)
    }
}

/// A conditional probability table: one normalized row over `target` for each
/// configuration of `given`.
#[derive(Debug, Clone)]
pub struct CondTable {
    target: VariableSpace,
    given: VariableSpace,
    rows: Vec<CondRow>,
}

#[derive(Debug, Clone)]
pub struct CondRow {
    pub probs: Vec<f64>,
    /// False when the conditioning configuration had zero probability.
    pub defined: bool,
}

impl CondTable {
    pub fn from_rows(target: VariableSpace, given: VariableSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        for name in target.names() {
            if given.index_of(name).is_ok() {
                return Err(Error::OverlappingSubsets(name.to_string()));
            }
        }
        if rows.len() != given.total_cells() {
            return Err(Error::LengthMismatch { expected: given.total_cells(), got: rows.len() });
        }
        let mut out = Vec::with_capacity(rows.len());
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != target.total_cells() {
                return Err(Error::LengthMismatch { expected: target.total_cells(), got: row.len() });
            }
            let mut sum = 0.0;
            for &p in &row {
                if p < 0.0 || !p.is_finite() {
                    return Err(Error::NegativeProbability(p));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > NORM_TOL {
                return Err(Error::RowNotNormalized { row: r, sum });
            }
            out.push(CondRow { probs: row, defined: true });
        }
        Ok(Self { target, given, rows: out })
    }

    /// Marginal packaged as a conditional with an empty `given` set.
    pub fn from_marginal(target: VariableSpace, probs: Vec<f64>) -> Result<Self> {
        Self::from_rows(target, VariableSpace::new::<String>(vec![])?, vec![probs])
    }

    pub fn target_space(&self) -> &VariableSpace {
        &self.target
    }

    pub fn given_space(&self) -> &VariableSpace {
        &self.given
    }

    pub fn rows(&self) -> &[CondRow] {
        &self.rows
    }

    pub fn row(&self, given_cell: usize) -> &CondRow {
        &self.rows[given_cell]
    }

    pub fn prob(&self, target_cell: usize, given_cell: usize) -> f64 {
        self.rows[given_cell].probs[target_cell]
    }
}

/// A factor in a joint factorization.
#[derive(Debug, Clone)]
pub enum Factor {
    Marginal(JointTable),
    Conditional(CondTable),
}

impl Factor {
    fn target_names(&self) -> Vec<&str> {
        match self {
            Factor::Marginal(t) => t.space().names().collect(),
            Factor::Conditional(c) => c.target.names().collect(),
        }
    }

    fn given_names(&self) -> Vec<&str> {
        match self {
            Factor::Marginal(_) => vec![],
            Factor::Conditional(c) => c.given.names().collect(),
        }
    }
}

/// Multiplies factors into a joint over `space`. Every variable of `space`
/// must be targeted by exactly one factor and each factor may only condition
/// on variables targeted by an earlier factor.
pub fn build_joint(space: &VariableSpace, factors: &[Factor]) -> Result<JointTable> {
    let mut targeted: Vec<bool> = vec![false; space.len()];
    for factor in factors {
        for name in factor.given_names() {
            let i = space.index_of(name)?;
            if !targeted[i] {
                return Err(Error::InvalidFactorization(format!(
                    "factor conditions on `{name}` before it is targeted (cyclic or misordered)"
                )));
            }
        }
        for name in factor.target_names() {
            let i = space.index_of(name)?;
            if targeted[i] {
                return Err(Error::InvalidFactorization(format!(
                    "variable `{name}` targeted twice"
                )));
            }
            targeted[i] = true;
        }
    }
    if let Some(i) = targeted.iter().position(|t| !t) {
        return Err(Error::InvalidFactorization(format!(
            "variable `{}` is never targeted",
            space.name(i)
        )));
    }

    // Pre-resolve each factor's variable positions in the full space.
    struct Resolved<'a> {
        factor: &'a Factor,
        t_idx: Vec<usize>,
        g_idx: Vec<usize>,
    }
    let resolved: Vec<Resolved> = factors
        .iter()
        .map(|factor| {
            let t_idx: Vec<usize> = factor
                .target_names()
                .iter()
                .map(|n| space.index_of(n).expect("validated above"))
                .collect();
            let g_idx: Vec<usize> = factor
                .given_names()
                .iter()
                .map(|n| space.index_of(n).expect("validated above"))
                .collect();
            Resolved { factor, t_idx, g_idx }
        })
        .collect();

    let mut probs = vec![0.0; space.total_cells()];
    let mut sum = 0.0;
    for (cell, slot) in probs.iter_mut().enumerate() {
        let config = space.decode(cell);
        let mut p = 1.0;
        for r in &resolved {
            let t = space.sub_index(&config, &r.t_idx);
            p *= match r.factor {
                Factor::Marginal(m) => m.probs()[t],
                Factor::Conditional(c) => {
                    let row = c.row(space.sub_index(&config, &r.g_idx));
                    if row.defined {
                        row.probs[t]
                    } else {
                        0.0
                    }
                }
            };
            if p == 0.0 {
                break;
            }
        }
        *slot = p;
        sum += p;
    }
    if (sum - 1.0).abs() > NORM_TOL {
        return Err(Error::InvalidFactorization(format!(
            "factor product sums to {sum}; probability mass reaches an undefined row or factors are inconsistent"
        )));
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(JointTable { space: space.clone(), probs })
}

/// Entropy of a probability slice, -sum p ln p with 0 ln 0 = 0.
pub fn entropy_slice(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    h.max(0.0)
}

/// KL divergence between two aligned probability slices, sum p ln(p/q) with
/// p = 0 terms skipped. Errors where p > 0 meets q = 0.
pub fn kl_slices(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { expected: p.len(), got: q.len() });
    }
    let mut acc = 0.0;
    for (cell, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::AbsoluteContinuity { cell, p: pi });
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc)
}

/// KL divergence between joints over the same space.
pub fn kl(p: &JointTable, q: &JointTable) -> Result<f64> {
    if !p.space.same_shape(&q.space) {
        return Err(Error::SpaceMismatch);
    }
    kl_slices(&p.probs, &q.probs)
}

/// KL divergence against an unnormalized non-negative target table, needed by
/// objectives whose target is only defined up to scale.
pub fn kl_unnormalized(p: &JointTable, target: &[f64]) -> Result<f64> {
    if target.len() != p.probs.len() {
        return Err(Error::LengthMismatch { expected: p.probs.len(), got: target.len() });
    }
    if let Some(&bad) = target.iter().find(|&&t| t < 0.0 || !t.is_finite()) {
        return Err(Error::NegativeProbability(bad));
    }
    kl_slices(&p.probs, target)
}

/// Expectation of a per-cell function under the joint.
pub fn expectation(p: &JointTable, f: impl Fn(usize) -> f64) -> f64 {
    p.probs
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(cell, &w)| w * f(cell))
        .sum()
}
