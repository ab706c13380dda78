//! Multi-index sets and Legendre coupling matrices for the parametric
//! discretisation.
//!
//! The parametric basis consists of tensor products of univariate Legendre
//! polynomials, orthonormal with respect to the uniform probability measure
//! on [-1,1]. The coupling matrices G_k with entries
//! `[G_k]_{a,b} = int y_k psi_a psi_b dpi` are bidiagonal per parameter:
//! nonzero only when b = a +- t^(k), with value `c_i = i / sqrt(4 i^2 - 1)`
//! taken at `i = max(a_k, b_k)`.

use std::collections::HashMap;
use std::fmt;

use crate::Error;

/// Finitely supported multi-index: polynomial degree per parameter.
///
/// Stored sparsely as (parameter, degree) pairs sorted by parameter number
/// (1-based) with no zero degrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<(u32, u32)>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self { entries: Vec::new() }
    }

    /// The Kronecker index t^(n): degree 1 in parameter n.
    pub fn unit(n: u32) -> Self {
        assert!(n >= 1);
        Self { entries: vec![(n, 1)] }
    }

    /// Build from (parameter, degree) pairs; zero degrees are dropped.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Self {
        let mut entries: Vec<(u32, u32)> =
            pairs.iter().copied().filter(|&(_, d)| d > 0).collect();
        entries.sort_unstable();
        for w in entries.windows(2) {
            assert_ne!(w[0].0, w[1].0, "duplicate parameter in multi-index");
        }
        assert!(entries.iter().all(|&(n, _)| n >= 1));
        Self { entries }
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn degree(&self, n: u32) -> u32 {
        self.entries
            .iter()
            .find(|&&(p, _)| p == n)
            .map_or(0, |&(_, d)| d)
    }

    pub fn total_degree(&self) -> u32 {
        self.entries.iter().map(|&(_, d)| d).sum()
    }

    /// Largest active parameter number; 0 for the zero index.
    pub fn max_active_param(&self) -> u32 {
        self.entries.last().map_or(0, |&(n, _)| n)
    }

    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(n, _)| n)
    }

    /// The index shifted by +-1 in parameter n; None when the result would
    /// have a negative entry.
    pub fn shifted(&self, n: u32, up: bool) -> Option<MultiIndex> {
        let cur = self.degree(n);
        let new = if up {
            cur + 1
        } else {
            cur.checked_sub(1)?
        };
        let mut entries: Vec<(u32, u32)> = self
            .entries
            .iter()
            .copied()
            .filter(|&(p, _)| p != n)
            .collect();
        if new > 0 {
            entries.push((n, new));
            entries.sort_unstable();
        }
        Some(MultiIndex { entries })
    }

    /// L1 distance between two multi-indices.
    pub fn distance(&self, other: &MultiIndex) -> u32 {
        let mut dist = 0u32;
        let mut params: Vec<u32> = self.support().chain(other.support()).collect();
        params.sort_unstable();
        params.dedup();
        for n in params {
            dist += self.degree(n).abs_diff(other.degree(n));
        }
        dist
    }
}

/// Canonical order: lexicographic on the degree sequence (alpha_1, alpha_2, ...).
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let last = self.max_active_param().max(other.max_active_param());
        for n in 1..=last {
            match self.degree(n).cmp(&other.degree(n)) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Serialises as a sorted "(n:deg,...)" string; the zero index prints "()".
impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, (n, d)) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}:{d}")?;
        }
        write!(f, ")")
    }
}

/// Ordered set of distinct multi-indices; the order fixes the block layout
/// of all chaos-indexed vectors and operators.
#[derive(Debug, Clone)]
pub struct IndexSet {
    list: Vec<MultiIndex>,
    pos: HashMap<MultiIndex, usize>,
}

impl IndexSet {
    /// Solution index set containing only the mean index.
    pub fn mean_only() -> Self {
        Self::from_indices(vec![MultiIndex::zero()])
    }

    /// Build from a list, keeping the given order; duplicates are dropped.
    pub fn from_indices(indices: Vec<MultiIndex>) -> Self {
        let mut list = Vec::with_capacity(indices.len());
        let mut pos = HashMap::new();
        for idx in indices {
            if !pos.contains_key(&idx) {
                pos.insert(idx.clone(), list.len());
                list.push(idx);
            }
        }
        Self { list, pos }
    }

    /// Degree-k set for a single parameter: {0, t, 2t, ..., k t} for t = t^(param).
    pub fn single_parameter_degree(param: u32, k: u32) -> Self {
        let mut list = vec![MultiIndex::zero()];
        for d in 1..=k {
            list.push(MultiIndex::from_pairs(&[(param, d)]));
        }
        Self::from_indices(list)
    }

    pub fn len(&self) -> usize {
        self.list.len()
    }

    pub fn is_empty(&self) -> bool {
        self.list.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.list.iter()
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.list[i]
    }

    pub fn contains(&self, idx: &MultiIndex) -> bool {
        self.pos.contains_key(idx)
    }

    pub fn position(&self, idx: &MultiIndex) -> Option<usize> {
        self.pos.get(idx).copied()
    }

    /// Number of active parameters M_Lambda: 0 when the set is {0}, else
    /// the largest parameter active in any nonzero index.
    pub fn max_active_param(&self) -> u32 {
        self.list
            .iter()
            .map(|idx| idx.max_active_param())
            .max()
            .unwrap_or(0)
    }

    /// Appends new indices (canonical order among themselves), keeping
    /// existing positions stable. Indices already present are ignored.
    pub fn extended_with(&self, new_indices: &[MultiIndex]) -> Self {
        let mut added: Vec<MultiIndex> = new_indices
            .iter()
            .filter(|idx| !self.contains(idx))
            .cloned()
            .collect();
        added.sort();
        added.dedup();
        let mut list = self.list.clone();
        list.extend(added);
        Self::from_indices(list)
    }
}

/// Legendre recurrence coefficient `c_i = i / sqrt(4 i^2 - 1)`; `c_0 = 0`.
pub fn recurrence_coeff(i: u32) -> f64 {
    if i == 0 {
        return 0.0;
    }
    let i = i as f64;
    i / (4.0 * i * i - 1.0).sqrt()
}

/// Evaluate the orthonormal Legendre polynomial of the given degree at y,
/// normalised against the uniform probability measure on [-1,1].
pub fn legendre_orthonormal(degree: u32, y: f64) -> f64 {
    // y * psi_n = c_{n+1} psi_{n+1} + c_n psi_{n-1}
    let mut prev = 0.0;
    let mut cur = 1.0;
    for n in 0..degree {
        let next = (y * cur - recurrence_coeff(n) * prev) / recurrence_coeff(n + 1);
        prev = cur;
        cur = next;
    }
    cur
}

/// Evaluate the tensor-product basis function psi_alpha at a point of the
/// parameter domain given as a slice (y_1, y_2, ...); parameters beyond the
/// slice are irrelevant only if alpha has no support there.
pub fn tensor_basis(alpha: &MultiIndex, y: &[f64]) -> f64 {
    let mut v = 1.0;
    for (n, d) in alpha.entries.iter() {
        v *= legendre_orthonormal(*d, y[(*n - 1) as usize]);
    }
    v
}

/// Sparse coupling matrix for one parameter between two index sets.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub param: u32,
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl CouplingMatrix {
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.triplets {
            m[(r, c)] += v;
        }
        m
    }
}

/// Assembles `[G_k]_{a,b} = int y_k psi_a psi_b dpi` for a in `rows`,
/// b in `cols`. For k = 0 this is the inclusion/identity pattern coming
/// from orthonormality.
pub fn coupling_matrix(k: u32, rows: &IndexSet, cols: &IndexSet) -> CouplingMatrix {
    let mut triplets = Vec::new();
    if k == 0 {
        for (r, alpha) in rows.iter().enumerate() {
            if let Some(c) = cols.position(alpha) {
                triplets.push((r, c, 1.0));
            }
        }
    } else {
        for (r, alpha) in rows.iter().enumerate() {
            let deg = alpha.degree(k);
            if let Some(up) = alpha.shifted(k, true) {
                if let Some(c) = cols.position(&up) {
                    triplets.push((r, c, recurrence_coeff(deg + 1)));
                }
            }
            if let Some(down) = alpha.shifted(k, false) {
                if let Some(c) = cols.position(&down) {
                    triplets.push((r, c, recurrence_coeff(deg)));
                }
            }
        }
    }
    CouplingMatrix { param: k, nrows: rows.len(), ncols: cols.len(), triplets }
}

/// The finite detail index set: indices one step away from Lambda in any of
/// the first `M_Lambda + 1` parameters, excluding Lambda itself and any
/// index with a negative entry. Returned in canonical order.
pub fn detail_index_set(lambda: &IndexSet) -> IndexSet {
    assert!(!lambda.is_empty(), "solution index set must be nonempty");
    let m = lambda.max_active_param();
    let mut found: Vec<MultiIndex> = Vec::new();
    for tau in lambda.iter() {
        for n in 1..=(m + 1) {
            for up in [true, false] {
                if let Some(alpha) = tau.shifted(n, up) {
                    if !lambda.contains(&alpha) && !found.contains(&alpha) {
                        found.push(alpha);
                    }
                }
            }
        }
    }
    found.sort();
    IndexSet::from_indices(found)
}

/// Whether `alpha` lies on the boundary of Lambda, i.e. within distance one
/// of some member in a single coordinate (any parameter number).
pub fn boundary_membership(alpha: &MultiIndex, lambda: &IndexSet) -> Result<bool, Error> {
    if lambda.contains(alpha) {
        return Err(Error::IndexInSolutionSet(alpha.to_string()));
    }
    Ok(lambda.iter().any(|tau| tau.distance(alpha) == 1))
}
