//! Marginals and conditional probability tables over encoded attribute codes.
//!
//! Every table covers the null code as an ordinary value, so a column of
//! dictionary size `n` yields distributions of length `n + 1`.

use serde::{Deserialize, Serialize};

use crate::catalog::EncodedColumn;
use crate::{Error, Result};

/// Tables with more cells than this are stored sparsely.
pub const DENSE_CELL_LIMIT: usize = 4096 * 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Marginal {
    pub probs: Vec<f64>,
}

impl Marginal {
    pub fn new(probs: Vec<f64>) -> Marginal {
        Marginal { probs }
    }

    pub fn uniform(n: usize) -> Marginal {
        Marginal {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn from_codes(codes: &[u32], cardinality: usize) -> Result<Marginal> {
        if codes.is_empty() {
            return Err(Error::Empty("column has no rows"));
        }
        let mut counts = vec![0u64; cardinality];
        for &c in codes {
            counts[c as usize] += 1;
        }
        let n = codes.len() as f64;
        Ok(Marginal {
            probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Total probability of a set of codes.
    pub fn mass(&self, codes: &[u32]) -> f64 {
        codes
            .iter()
            .filter_map(|&c| self.probs.get(c as usize))
            .sum()
    }
}

pub fn marginal_from_counts(col: &EncodedColumn) -> Result<Marginal> {
    Marginal::from_codes(&col.codes, col.cardinality())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "lowercase")]
pub enum Storage {
    /// Row-major `[parent][child]`.
    Dense { data: Vec<f64> },
    /// Nonzero `(child, prob)` pairs per parent row, sorted by child.
    Sparse { rows: Vec<Vec<(u32, f64)>> },
}

/// `P(child | parent)`, indexed `[parent code][child code]`. Rows of parent
/// values never observed are all zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub parent_card: usize,
    pub child_card: usize,
    #[serde(flatten)]
    pub storage: Storage,
}

impl ConditionalTable {
    /// Dense table from explicit rows, no normalization applied.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<ConditionalTable> {
        let parent_card = rows.len();
        let child_card = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(parent_card * child_card);
        for row in rows {
            if row.len() != child_card {
                return Err(Error::DimensionMismatch {
                    expected: child_card,
                    actual: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(ConditionalTable {
            parent_card,
            child_card,
            storage: Storage::Dense { data },
        })
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, Storage::Sparse { .. })
    }

    pub fn get(&self, parent: u32, child: u32) -> f64 {
        match &self.storage {
            Storage::Dense { data } => data[parent as usize * self.child_card + child as usize],
            Storage::Sparse { rows } => {
                let row = &rows[parent as usize];
                row.binary_search_by_key(&child, |&(c, _)| c)
                    .map_or(0.0, |i| row[i].1)
            }
        }
    }

    /// Nonzero entries of one parent row.
    pub fn row(&self, parent: u32) -> Vec<(u32, f64)> {
        match &self.storage {
            Storage::Dense { data } => {
                let start = parent as usize * self.child_card;
                data[start..start + self.child_card]
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p != 0.0)
                    .map(|(c, &p)| (c as u32, p))
                    .collect()
            }
            Storage::Sparse { rows } => rows[parent as usize].clone(),
        }
    }

    pub fn row_sum(&self, parent: u32) -> f64 {
        self.row(parent).iter().map(|&(_, p)| p).sum()
    }

    /// Dense `[parent][child]` copy.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense { data } => data.clone(),
            Storage::Sparse { rows } => {
                let mut out = vec![0.0; self.parent_card * self.child_card];
                for (p, row) in rows.iter().enumerate() {
                    for &(c, v) in row {
                        out[p * self.child_card + c as usize] = v;
                    }
                }
                out
            }
        }
    }

    /// Flips the conditioning direction: returns `P(parent | child)` and
    /// `P(child)` given `P(parent)`.
    pub fn reverse(&self, parent_marginal: &Marginal) -> Result<(ConditionalTable, Marginal)> {
        if parent_marginal.len() != self.parent_card {
            return Err(Error::DimensionMismatch {
                expected: self.parent_card,
                actual: parent_marginal.len(),
            });
        }
        let child_marginal = marginalize(self, parent_marginal)?;
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); self.child_card];
        for p in 0..self.parent_card {
            let pp = parent_marginal.probs[p];
            if pp == 0.0 {
                continue;
            }
            for (c, v) in self.row(p as u32) {
                let pc = child_marginal.probs[c as usize];
                if pc > 0.0 {
                    rows[c as usize].push((p as u32, v * pp / pc));
                }
            }
        }
        Ok((
            build_table(self.child_card, self.parent_card, rows),
            child_marginal,
        ))
    }
}

fn build_table(parent_card: usize, child_card: usize, rows: Vec<Vec<(u32, f64)>>) -> ConditionalTable {
    let storage = if parent_card.saturating_mul(child_card) > DENSE_CELL_LIMIT {
        Storage::Sparse { rows }
    } else {
        let mut data = vec![0.0; parent_card * child_card];
        for (p, row) in rows.into_iter().enumerate() {
            for (c, v) in row {
                data[p * child_card + c as usize] = v;
            }
        }
        Storage::Dense { data }
    };
    ConditionalTable {
        parent_card,
        child_card,
        storage,
    }
}

pub fn cpt_from_counts(child: &EncodedColumn, parent: &EncodedColumn) -> Result<ConditionalTable> {
    cpt_from_codes(
        &child.codes,
        child.cardinality(),
        &parent.codes,
        parent.cardinality(),
    )
}

pub fn cpt_from_codes(
    child: &[u32],
    child_card: usize,
    parent: &[u32],
    parent_card: usize,
) -> Result<ConditionalTable> {
    if child.len() != parent.len() {
        return Err(Error::DimensionMismatch {
            expected: parent.len(),
            actual: child.len(),
        });
    }
    if child.is_empty() {
        return Err(Error::Empty("column has no rows"));
    }
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); parent_card];
    if parent_card.saturating_mul(child_card) <= crate::structure::DENSE_COUNT_LIMIT {
        let mut counts = vec![0u64; parent_card * child_card];
        let mut totals = vec![0u64; parent_card];
        for (&p, &c) in parent.iter().zip(child) {
            counts[p as usize * child_card + c as usize] += 1;
            totals[p as usize] += 1;
        }
        for (p, row) in rows.iter_mut().enumerate() {
            if totals[p] == 0 {
                continue;
            }
            let total = totals[p] as f64;
            for c in 0..child_card {
                let count = counts[p * child_card + c];
                if count > 0 {
                    row.push((c as u32, count as f64 / total));
                }
            }
        }
        return Ok(build_table(parent_card, child_card, rows));
    }
    let mut pairs: Vec<(u32, u32)> = parent.iter().copied().zip(child.iter().copied()).collect();
    pairs.sort_unstable();
    let mut i = 0;
    while i < pairs.len() {
        let p = pairs[i].0;
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == p {
            j += 1;
        }
        let total = (j - i) as f64;
        let row = &mut rows[p as usize];
        let mut k = i;
        while k < j {
            let c = pairs[k].1;
            let mut m = k;
            while m < j && pairs[m].1 == c {
                m += 1;
            }
            row.push((c, (m - k) as f64 / total));
            k = m;
        }
        i = j;
    }
    Ok(build_table(parent_card, child_card, rows))
}

/// `out[c] = Σ_p cpt[p][c] · parent[p]`.
pub fn marginalize(cpt: &ConditionalTable, parent_marginal: &Marginal) -> Result<Marginal> {
    if parent_marginal.len() != cpt.parent_card {
        return Err(Error::DimensionMismatch {
            expected: cpt.parent_card,
            actual: parent_marginal.len(),
        });
    }
    let mut out = vec![0.0; cpt.child_card];
    for (p, &pp) in parent_marginal.probs.iter().enumerate() {
        if pp == 0.0 {
            continue;
        }
        for (c, v) in cpt.row(p as u32) {
            out[c as usize] += v * pp;
        }
    }
    Ok(Marginal { probs: out })
}

/// Product of probability terms; the empty product is 1.
pub fn point_product(terms: &[f64]) -> f64 {
    terms.iter().product()
}

/// Lower bound applied to final selectivities so that q-errors stay finite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClampPolicy {
    pub enabled: bool,
}

impl Default for ClampPolicy {
    fn default() -> Self {
        ClampPolicy { enabled: true }
    }
}

impl ClampPolicy {
    pub fn floor(join_size: f64) -> f64 {
        1.0 / (2.0 * join_size.max(1.0))
    }

    /// Returns the clamped selectivity and whether the floor was applied.
    pub fn apply(&self, selectivity: f64, join_size: f64) -> (f64, bool) {
        let s = selectivity.clamp(0.0, 1.0);
        let floor = Self::floor(join_size);
        if self.enabled && s < floor {
            (floor, true)
        } else {
            (s, false)
        }
    }
}
