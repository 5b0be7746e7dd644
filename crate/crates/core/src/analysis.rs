//! Synthetic subgroup model, subgroup identification and error metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::UnionFind;
use crate::linalg::{dist_sq, norm, sqrt, FactorPair, Matrix};
use crate::observed::{Entry, ObservedMatrix};

/// Parameters of a synthetic instance whose latent rows form subgroups.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubgroupSpec {
    pub n: usize,
    pub m: usize,
    pub rank: usize,
    pub k_x: usize,
    pub k_y: usize,
    /// Noise standard deviation on observed entries.
    pub sigma: f64,
    /// Fraction of entries observed.
    pub rho: f64,
    /// Frobenius norm the clean matrix is scaled to.
    pub target_fro: f64,
    pub seed: u64,
}

impl Default for SubgroupSpec {
    fn default() -> Self {
        Self {
            n: 200,
            m: 200,
            rank: 5,
            k_x: 20,
            k_y: 20,
            sigma: 100.0,
            rho: 0.3,
            target_fro: 1e6,
            seed: 0,
        }
    }
}

impl SubgroupSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.rank == 0 {
            return Err(Error::Argument("n, m and rank must be positive".into()));
        }
        if self.k_x == 0 || self.k_x > self.n || self.k_y == 0 || self.k_y > self.m {
            return Err(Error::Argument(format!(
                "group counts ({}, {}) must lie in 1..=n and 1..=m",
                self.k_x, self.k_y
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Argument(format!("sample rate {} not in (0, 1]", self.rho)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Argument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        if !(self.target_fro > 0.0 && self.target_fro.is_finite()) {
            return Err(Error::Argument("target Frobenius norm must be positive".into()));
        }
        Ok(())
    }

    pub fn n_observed(&self) -> usize {
        libm::round(self.rho * (self.n * self.m) as f64) as usize
    }
}

/// Partition of nodes into groups; labels are canonical (numbered by first
/// appearance) so two equal partitions compare equal.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GroupMembership {
    assignment: Vec<usize>,
    n_groups: usize,
}

impl GroupMembership {
    pub fn from_assignment(labels: &[usize]) -> Self {
        let mut remap: alloc::collections::BTreeMap<usize, usize> = Default::default();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Self {
            assignment,
            n_groups: remap.len(),
        }
    }

    /// `k` groups of near-equal size over `n` nodes in index order; the
    /// first `n mod k` groups take one extra node.
    pub fn even(n: usize, k: usize) -> Self {
        let (base, extra) = (n / k, n % k);
        let mut labels = Vec::with_capacity(n);
        for g in 0..k {
            let size = base + usize::from(g < extra);
            labels.extend(core::iter::repeat_n(g, size));
        }
        Self {
            assignment: labels,
            n_groups: k,
        }
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn group_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    #[inline]
    pub fn same_group(&self, u: usize, v: usize) -> bool {
        self.assignment[u] == self.assignment[v]
    }

    /// The same-group indicator as a dense row-major boolean matrix.
    pub fn pair_matrix(&self) -> Vec<bool> {
        let n = self.len();
        let mut out = vec![false; n * n];
        for u in 0..n {
            for v in 0..n {
                out[u * n + v] = self.same_group(u, v);
            }
        }
        out
    }
}

/// A generated instance with its ground truth.
#[derive(Clone, Debug)]
pub struct SubgroupInstance {
    /// Clean matrix `M* = X* Y*^T`.
    pub truth: Matrix,
    pub truth_factors: FactorPair,
    /// Noisy observed entries.
    pub observed: ObservedMatrix,
    pub groups_x: GroupMembership,
    pub groups_y: GroupMembership,
}

fn representatives(rng: &mut ChaCha8Rng, k: usize, d: usize) -> Vec<Vec<f64>> {
    let mut reps = Vec::with_capacity(k);
    let mut current: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
    reps.push(current.clone());
    for _ in 1..k {
        for c in current.iter_mut() {
            *c += rng.random_range(0.0..10.0);
        }
        reps.push(current.clone());
    }
    reps
}

/// Draws group representatives (`U_1 ~ U[0,1]^d`, increments `~ U[0,10]^d`),
/// spreads them evenly over rows and columns, rescales `M*` to the target
/// Frobenius norm, samples `round(rho n m)` entries without replacement and
/// adds `N(0, sigma^2)` noise to them.
pub fn generate_subgroup_instance(spec: &SubgroupSpec) -> Result<SubgroupInstance> {
    spec.validate()?;
    let n_obs = spec.n_observed();
    if n_obs < 1 {
        return Err(Error::Argument(format!(
            "rho * n * m = {} gives no observed entries",
            spec.rho * (spec.n * spec.m) as f64
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let reps_x = representatives(&mut rng, spec.k_x, spec.rank);
    let reps_y = representatives(&mut rng, spec.k_y, spec.rank);
    let groups_x = GroupMembership::even(spec.n, spec.k_x);
    let groups_y = GroupMembership::even(spec.m, spec.k_y);
    let mut x = Matrix::from_fn(spec.n, spec.rank, |i, c| reps_x[groups_x.group_of(i)][c]);
    let mut y = Matrix::from_fn(spec.m, spec.rank, |j, c| reps_y[groups_y.group_of(j)][c]);

    let raw = x.mul_transpose(&y)?.frobenius_norm();
    if raw == 0.0 {
        return Err(Error::Data("generated matrix is zero".into()));
    }
    let s = sqrt(spec.target_fro / raw);
    x.scale(s);
    y.scale(s);
    let truth_factors = FactorPair::new(x, y)?;
    let truth = truth_factors.to_dense();

    let noise = Normal::new(0.0, spec.sigma).map_err(|e| Error::Argument(format!("{e}")))?;
    let mut picks: Vec<usize> = index::sample(&mut rng, spec.n * spec.m, n_obs).into_vec();
    picks.sort_unstable();
    let entries: Vec<Entry> = picks
        .into_iter()
        .map(|flat| {
            let (i, j) = (flat / spec.m, flat % spec.m);
            let eps = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            Entry::new(i, j, truth.get(i, j) + eps)
        })
        .collect();
    let observed = ObservedMatrix::new(spec.n, spec.m, entries)?;
    Ok(SubgroupInstance {
        truth,
        truth_factors,
        observed,
        groups_x,
        groups_y,
    })
}

/// Raw pairwise indicator: `S_uv` holds when `u == v`, the rows coincide, or
/// `||f_u - f_v|| < tau min(||f_u||, ||f_v||)`. Row-major `n x n`.
pub fn similarity_matrix(rows: &Matrix, tau: f64) -> Vec<bool> {
    let n = rows.rows();
    let norms: Vec<f64> = (0..n).map(|i| norm(rows.row(i))).collect();
    let mut s = vec![false; n * n];
    for u in 0..n {
        s[u * n + u] = true;
        for v in u + 1..n {
            let gap = sqrt(dist_sq(rows.row(u), rows.row(v)));
            let same = gap == 0.0 || gap < tau * norms[u].min(norms[v]);
            s[u * n + v] = same;
            s[v * n + u] = same;
        }
    }
    s
}

/// Groups are the connected components of [`similarity_matrix`], which makes
/// the (non-transitive) pairwise rule into a partition.
pub fn identify_subgroups(rows: &Matrix, tau: f64) -> GroupMembership {
    let n = rows.rows();
    let s = similarity_matrix(rows, tau);
    let mut uf = UnionFind::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if s[u * n + v] {
                uf.union(u, v);
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|u| uf.find(u)).collect();
    GroupMembership::from_assignment(&roots)
}

/// Fraction of unordered node pairs on which both partitions agree about
/// same versus different group. One when there are no pairs.
pub fn pairwise_agreement(pred: &GroupMembership, truth: &GroupMembership) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "partitions over {} and {} nodes",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut agree = 0usize;
    for u in 0..n {
        for v in u + 1..n {
            if pred.same_group(u, v) == truth.same_group(u, v) {
                agree += 1;
            }
        }
    }
    Ok(agree as f64 / (n * (n - 1) / 2) as f64)
}

pub fn rmse(predictions: &[f64], truth: &[f64]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} ratings",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Argument("rmse of an empty set".into()));
    }
    Ok(sqrt(dist_sq(predictions, truth) / predictions.len() as f64))
}

/// RMSE of factor predictions on the entries of `test`.
pub fn rmse_on(factors: &FactorPair, test: &ObservedMatrix) -> Result<f64> {
    if test.n_rows() > factors.x.rows() || test.n_cols() > factors.y.rows() {
        return Err(Error::Dimension("test matrix larger than the factors".into()));
    }
    let (pred, obs): (Vec<f64>, Vec<f64>) = test
        .entries()
        .iter()
        .map(|e| (factors.predict(e.row, e.col), e.value))
        .unzip();
    rmse(&pred, &obs)
}

/// `||M_hat - M*||_F / ||M*||_F`.
pub fn relative_error(estimate: &Matrix, truth: &Matrix) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(Error::Dimension(format!(
            "estimate {:?} vs truth {:?}",
            estimate.shape(),
            truth.shape()
        )));
    }
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::Argument("relative error against a zero matrix".into()));
    }
    Ok(estimate.distance(truth) / denom)
}

/// [`relative_error`] for a factored estimate.
pub fn relative_error_factored(estimate: &FactorPair, truth: &Matrix) -> Result<f64> {
    relative_error(&estimate.to_dense(), truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn metrics_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), libm::sqrt(12.5));
        assert_eq!(rmse(&[2.0], &[3.0]).unwrap(), 1.0);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[]).is_err());

        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(relative_error(&m, &m).unwrap(), 0.0);
        assert_eq!(relative_error(&Matrix::zeros(2, 2), &m).unwrap(), 1.0);
        let mut twice = m.clone();
        twice.scale(2.0);
        assert_relative_eq!(relative_error(&twice, &m).unwrap(), 1.0);
        assert!(relative_error(&m, &Matrix::zeros(2, 2)).is_err());
        assert!(relative_error(&m, &Matrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn agreement_examples() {
        let truth = GroupMembership::from_assignment(&[0, 0, 0]);
        let singles = GroupMembership::from_assignment(&[0, 1, 2]);
        assert_eq!(pairwise_agreement(&truth, &truth).unwrap(), 1.0);
        assert_eq!(pairwise_agreement(&singles, &truth).unwrap(), 0.0);
        let other = GroupMembership::from_assignment(&[4, 4, 9]);
        assert_relative_eq!(pairwise_agreement(&other, &truth).unwrap(), 1.0 / 3.0);
        assert!(pairwise_agreement(&truth, &GroupMembership::from_assignment(&[0])).is_err());
    }

    #[test]
    fn identification_examples() {
        let same = Matrix::from_rows(&vec![vec![1.0, 1.0]; 4]).unwrap();
        assert_eq!(identify_subgroups(&same, 0.01).n_groups(), 1);

        let two = Matrix::from_rows(&[vec![1.0, 0.0], vec![5.0, 5.0], vec![1.0, 0.0], vec![5.0, 5.0]]).unwrap();
        let g = identify_subgroups(&two, 0.01);
        assert_eq!(g.n_groups(), 2);
        assert!(g.same_group(0, 2) && g.same_group(1, 3) && !g.same_group(0, 1));

        let close = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.005, 0.0]]).unwrap();
        assert_eq!(identify_subgroups(&close, 0.01).n_groups(), 1);
        assert_eq!(identify_subgroups(&close, 0.0).n_groups(), 2);
    }

    #[test]
    fn even_groups_put_remainder_first() {
        let g = GroupMembership::even(7, 3);
        assert_eq!(g.assignment(), &[0, 0, 0, 1, 1, 2, 2]);
        assert_eq!(g.n_groups(), 3);
    }

    #[test]
    fn generator_examples() {
        let spec = SubgroupSpec {
            n: 20,
            m: 12,
            rank: 3,
            k_x: 4,
            k_y: 3,
            sigma: 0.0,
            rho: 1.0,
            ..SubgroupSpec::default()
        };
        let inst = generate_subgroup_instance(&spec).unwrap();
        assert_eq!(inst.observed.nnz(), 240);
        assert_relative_eq!(inst.truth.frobenius_norm(), 1e6, max_relative = 1e-9);
        for e in inst.observed.entries() {
            assert_eq!(e.value, inst.truth.get(e.row, e.col));
        }
        let singletons = SubgroupSpec {
            k_x: 20,
            k_y: 12,
            ..spec.clone()
        };
        let inst = generate_subgroup_instance(&singletons).unwrap();
        assert_eq!(inst.groups_x.n_groups(), 20);

        let big = SubgroupSpec {
            n: 200,
            m: 200,
            rank: 5,
            k_x: 20,
            k_y: 20,
            sigma: 100.0,
            rho: 0.3,
            ..SubgroupSpec::default()
        };
        assert_eq!(generate_subgroup_instance(&big).unwrap().observed.nnz(), 12000);
    }

    #[test]
    fn generator_rejects_bad_specs() {
        let tiny = SubgroupSpec {
            n: 2,
            m: 2,
            k_x: 1,
            k_y: 1,
            rho: 0.1,
            ..SubgroupSpec::default()
        };
        assert!(generate_subgroup_instance(&tiny).is_err());
        let bad = SubgroupSpec {
            k_x: 0,
            ..SubgroupSpec::default()
        };
        assert!(generate_subgroup_instance(&bad).is_err());
    }
}
