//! Integer simplicial homology: boundary matrices, Smith normal form, Betti
//! numbers and torsion coefficients.
//!
//! Boundary matrices of the complexes this pipeline meets are huge but very
//! sparse with entries in {-1, +1}. Elimination therefore runs in two
//! phases: a sparse pass over unit pivots (unimodular row/column operations
//! in i64, each contributing an invariant factor 1), then an exact dense
//! Smith normal form with arbitrary-precision integers on whatever residue
//! is left. Intermediate entries can grow without bound in general, so the
//! sparse pass falls back to the exact phase on any i64 overflow.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, Zero};

use crate::complex::SimplicialComplex;

/// Betti numbers and torsion invariant factors per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomologySummary {
    pub betti: Vec<usize>,
    pub torsion: Vec<Vec<BigInt>>,
}

impl HomologySummary {
    pub fn max_dim(&self) -> usize {
        self.betti.len().saturating_sub(1)
    }

    pub fn has_torsion(&self) -> bool {
        self.torsion.iter().any(|t| !t.is_empty())
    }
}

/// Sparse integer matrix in column-major form.
#[derive(Debug, Clone, Default)]
pub struct SparseIntMatrix {
    pub nrows: usize,
    pub ncols: usize,
    /// Per column, (row, value) sorted by row with no zero values.
    pub cols: Vec<Vec<(u32, i64)>>,
}

impl SparseIntMatrix {
    pub fn zero(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            cols: vec![Vec::new(); ncols],
        }
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// Matrix-vector style check of `self * other = 0`, used by tests for
    /// the boundary-squared identity.
    pub fn compose_is_zero(&self, other: &SparseIntMatrix) -> bool {
        debug_assert_eq!(self.ncols, other.nrows);
        let mut acc: Vec<i64> = vec![0; self.nrows];
        for col in &other.cols {
            for v in acc.iter_mut() {
                *v = 0;
            }
            for &(mid, w) in col {
                for &(r, u) in &self.cols[mid as usize] {
                    acc[r as usize] += u * w;
                }
            }
            if acc.iter().any(|&v| v != 0) {
                return false;
            }
        }
        true
    }
}

/// Boundary operator from k-simplices to (k-1)-simplices: the column of a
/// simplex has entry `(-1)^i` at the face omitting its i-th vertex.
pub fn boundary_matrix(complex: &SimplicialComplex, k: usize) -> SparseIntMatrix {
    assert!(k >= 1, "boundary starts at dimension 1");
    let (Some(lower), Some(upper)) = (complex.simplices(k - 1), complex.simplices(k)) else {
        let nrows = complex.num_simplices(k - 1);
        return SparseIntMatrix::zero(nrows, 0);
    };
    let mut mat = SparseIntMatrix::zero(lower.len(), upper.len());
    let mut face = vec![0u32; k];
    for (c, simplex) in upper.iter().enumerate() {
        let col = &mut mat.cols[c];
        for omit in 0..=k {
            let mut at = 0;
            for (i, &v) in simplex.iter().enumerate() {
                if i != omit {
                    face[at] = v;
                    at += 1;
                }
            }
            let row = lower
                .position(&face)
                .expect("complex is downward closed") as u32;
            let sign = if omit % 2 == 0 { 1 } else { -1 };
            col.push((row, sign));
        }
        col.sort_unstable_by_key(|&(r, _)| r);
    }
    mat
}

/// Rank and invariant factors `d_1 | d_2 | ... | d_rank` (units included).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmithNormalForm {
    pub rank: usize,
    pub factors: Vec<BigInt>,
}

impl SmithNormalForm {
    pub fn torsion(&self) -> Vec<BigInt> {
        self.factors
            .iter()
            .filter(|d| d.abs() > BigInt::from(1))
            .map(BigInt::abs)
            .collect()
    }
}

/// Smith normal form by sparse unit-pivot elimination plus an exact dense
/// residue pass.
pub fn smith_normal_form(matrix: &SparseIntMatrix) -> SmithNormalForm {
    let mut elim = SparseElimination::new(matrix.clone());
    let unit_rank = elim.run();
    let residue = elim.residue();
    let mut factors: Vec<BigInt> = vec![BigInt::from(1); unit_rank];
    let residual = dense_snf(residue);
    factors.extend(residual);
    SmithNormalForm {
        rank: factors.len(),
        factors,
    }
}

/// Sparse elimination state. Rows are tracked lazily: `rows[r]` lists the
/// columns that at some point carried an entry in row r; stale ids are
/// filtered on use.
struct SparseElimination {
    cols: Vec<Vec<(u32, i64)>>,
    rows: Vec<Vec<u32>>,
    col_alive: Vec<bool>,
    row_alive: Vec<bool>,
    overflow: bool,
}

impl SparseElimination {
    fn new(matrix: SparseIntMatrix) -> Self {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); matrix.nrows];
        for (c, col) in matrix.cols.iter().enumerate() {
            for &(r, _) in col {
                rows[r as usize].push(c as u32);
            }
        }
        Self {
            col_alive: vec![true; matrix.ncols],
            row_alive: vec![true; matrix.nrows],
            cols: matrix.cols,
            rows,
            overflow: false,
        }
    }

    fn col_entry(&self, c: usize, r: u32) -> Option<i64> {
        self.cols[c]
            .binary_search_by_key(&r, |&(row, _)| row)
            .ok()
            .map(|i| self.cols[c][i].1)
    }

    /// Eliminates unit pivots until none are left or an i64 overflow forces
    /// the exact phase. Returns the number of pivots taken.
    fn run(&mut self) -> usize {
        let ncols = self.cols.len();
        let mut rank = 0usize;
        // Columns queued by current size; small columns make cheap pivots.
        let mut queue: Vec<u32> = (0..ncols as u32).collect();
        queue.sort_by_key(|&c| self.cols[c as usize].len());
        let mut pass = 0usize;
        loop {
            let mut progress = false;
            let mut next_queue: Vec<u32> = Vec::new();
            for qi in 0..queue.len() {
                let c = queue[qi] as usize;
                if !self.col_alive[c] || self.cols[c].is_empty() {
                    continue;
                }
                if self.overflow {
                    return rank;
                }
                // Unit entry with the sparsest row, if any.
                let pivot = self.cols[c]
                    .iter()
                    .filter(|&&(r, v)| {
                        (v == 1 || v == -1) && self.row_alive[r as usize]
                    })
                    .min_by_key(|&&(r, _)| self.rows[r as usize].len());
                let Some(&(prow, pval)) = pivot else {
                    next_queue.push(c as u32);
                    continue;
                };
                self.eliminate(prow, c, pval);
                rank += 1;
                progress = true;
            }
            if !progress || self.overflow {
                return rank;
            }
            queue = next_queue;
            queue.extend(
                (0..ncols as u32)
                    .filter(|&c| self.col_alive[c as usize] && !self.cols[c as usize].is_empty()),
            );
            queue.sort_unstable();
            queue.dedup();
            queue.sort_by_key(|&c| self.cols[c as usize].len());
            pass += 1;
            if pass > ncols + 4 {
                return rank;
            }
        }
    }

    fn eliminate(&mut self, prow: u32, pcol: usize, pval: i64) {
        let pivot_col = std::mem::take(&mut self.cols[pcol]);
        self.col_alive[pcol] = false;
        self.row_alive[prow as usize] = false;
        let touching = std::mem::take(&mut self.rows[prow as usize]);
        for &tc in &touching {
            let tc = tc as usize;
            if tc == pcol || !self.col_alive[tc] {
                continue;
            }
            let Some(w) = self.col_entry(tc, prow) else {
                continue;
            };
            // col_tc -= (w / pval) * pivot_col, exact since pval is a unit.
            let factor = w * pval; // w / pval for pval in {1, -1}
            if self.subtract_scaled(tc, &pivot_col, factor) {
                self.overflow = true;
                // Restore enough state for the residue to stay correct: put
                // the pivot column back and revive its row and column.
                self.cols[pcol] = pivot_col;
                self.col_alive[pcol] = true;
                self.row_alive[prow as usize] = true;
                self.rows[prow as usize] = touching;
                return;
            }
        }
    }

    /// `col_tc -= factor * pivot_col`; true on overflow.
    fn subtract_scaled(&mut self, tc: usize, pivot_col: &[(u32, i64)], factor: i64) -> bool {
        let old = &self.cols[tc];
        let mut merged: Vec<(u32, i64)> = Vec::with_capacity(old.len() + pivot_col.len());
        let mut i = 0;
        let mut j = 0;
        while i < old.len() || j < pivot_col.len() {
            let take_old = j == pivot_col.len()
                || (i < old.len() && old[i].0 < pivot_col[j].0);
            if take_old {
                merged.push(old[i]);
                i += 1;
            } else if i == old.len() || pivot_col[j].0 < old[i].0 {
                let (r, v) = pivot_col[j];
                let Some(scaled) = v.checked_mul(factor) else {
                    return true;
                };
                if scaled != 0 {
                    merged.push((r, -scaled));
                }
                j += 1;
            } else {
                let (r, a) = old[i];
                let (_, v) = pivot_col[j];
                let Some(scaled) = v.checked_mul(factor) else {
                    return true;
                };
                let Some(next) = a.checked_sub(scaled) else {
                    return true;
                };
                if next != 0 {
                    merged.push((r, next));
                }
                i += 1;
                j += 1;
            }
        }
        // Register the new fill-in rows.
        for &(r, _) in &merged {
            if self.col_entry(tc, r).is_none() {
                self.rows[r as usize].push(tc as u32);
            }
        }
        self.cols[tc] = merged;
        false
    }

    /// Remaining alive submatrix as dense arbitrary-precision entries.
    fn residue(&self) -> Vec<Vec<BigInt>> {
        let live_rows: Vec<u32> = (0..self.rows.len() as u32)
            .filter(|&r| self.row_alive[r as usize])
            .collect();
        let row_slot: std::collections::HashMap<u32, usize> = live_rows
            .iter()
            .enumerate()
            .map(|(slot, &r)| (r, slot))
            .collect();
        let mut dense: Vec<Vec<BigInt>> = Vec::new();
        for c in 0..self.cols.len() {
            if !self.col_alive[c] || self.cols[c].is_empty() {
                continue;
            }
            let mut col = vec![BigInt::zero(); live_rows.len()];
            let mut any = false;
            for &(r, v) in &self.cols[c] {
                if let Some(&slot) = row_slot.get(&r) {
                    col[slot] = BigInt::from(v);
                    any = true;
                }
            }
            if any {
                dense.push(col);
            }
        }
        dense
    }
}

/// Classical dense Smith normal form over arbitrary-precision integers;
/// `cols` is column-major. Returns the nontrivial invariant factors in
/// divisibility order.
fn dense_snf(mut cols: Vec<Vec<BigInt>>) -> Vec<BigInt> {
    let ncols = cols.len();
    if ncols == 0 {
        return Vec::new();
    }
    let nrows = cols[0].len();
    let mut factors: Vec<BigInt> = Vec::new();
    let mut top = 0usize; // rows and columns below this are settled
    loop {
        // Smallest nonzero entry in the active block.
        let mut best: Option<(usize, usize)> = None;
        for c in top..ncols {
            for r in top..nrows {
                if cols[c][r].is_zero() {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bc, br)) => cols[c][r].abs() < cols[bc][br].abs(),
                };
                if better {
                    best = Some((c, r));
                }
            }
        }
        let Some((bc, br)) = best else {
            break;
        };
        cols.swap(top, bc);
        for col in cols.iter_mut() {
            col.swap(top, br);
        }
        if cols[top][top].is_negative() {
            for r in top..nrows {
                let v = -&cols[top][r];
                cols[top][r] = v;
            }
        }
        // Reduce the pivot row and column; restart the scan whenever a
        // remainder survives (it is strictly smaller than the pivot).
        let mut dirty = false;
        for c in (top + 1)..ncols {
            if cols[c][top].is_zero() {
                continue;
            }
            let q = div_round(&cols[c][top], &cols[top][top]);
            if !q.is_zero() {
                for r in top..nrows {
                    let v = &cols[c][r] - &q * &cols[top][r];
                    cols[c][r] = v;
                }
            }
            if !cols[c][top].is_zero() {
                dirty = true;
            }
        }
        for r in (top + 1)..nrows {
            if cols[top][r].is_zero() {
                continue;
            }
            let q = div_round(&cols[top][r], &cols[top][top]);
            if !q.is_zero() {
                for c in top..ncols {
                    let v = &cols[c][r] - &q * &cols[c][top];
                    cols[c][r] = v;
                }
            }
            if !cols[top][r].is_zero() {
                dirty = true;
            }
        }
        if dirty {
            continue;
        }
        // Pivot must divide every remaining entry; if not, fold the
        // offending column into the pivot column and retry.
        let pivot = cols[top][top].clone();
        let mut fixed = true;
        'scan: for c in (top + 1)..ncols {
            for r in (top + 1)..nrows {
                if !(&cols[c][r] % &pivot).is_zero() {
                    for rr in top..nrows {
                        let v = &cols[top][rr] + &cols[c][rr];
                        cols[top][rr] = v;
                    }
                    fixed = false;
                    break 'scan;
                }
            }
        }
        if !fixed {
            continue;
        }
        factors.push(pivot);
        top += 1;
        if top == ncols.min(nrows) {
            break;
        }
    }
    factors
}

/// Quotient rounded toward the nearest integer, which keeps remainders at
/// most half the divisor in magnitude.
fn div_round(a: &BigInt, b: &BigInt) -> BigInt {
    let (q, r) = a.div_rem(b);
    let twice: BigInt = &r * 2;
    if twice.abs() > b.abs() {
        if (r.is_negative()) == (b.is_negative()) {
            q + 1
        } else {
            q - 1
        }
    } else {
        q
    }
}

/// Homology of the complex up to `max_dim`: `b_k` is the number of
/// k-simplices minus the ranks of the k-th and (k+1)-st boundary operators,
/// and the torsion of H_k collects the invariant factors of the (k+1)-st
/// boundary exceeding one.
pub fn homology_groups(complex: &SimplicialComplex, max_dim: usize) -> HomologySummary {
    let mut betti = Vec::with_capacity(max_dim + 1);
    let mut torsion = Vec::with_capacity(max_dim + 1);
    let mut snf_above: Vec<Option<SmithNormalForm>> = vec![None; max_dim + 2];
    for k in 1..=(max_dim + 1) {
        if complex.num_simplices(k) > 0 {
            snf_above[k] = Some(smith_normal_form(&boundary_matrix(complex, k)));
        }
    }
    for k in 0..=max_dim {
        let n_k = complex.num_simplices(k);
        let rank_k = if k == 0 {
            0
        } else {
            snf_above[k].as_ref().map_or(0, |s| s.rank)
        };
        let rank_k1 = snf_above[k + 1].as_ref().map_or(0, |s| s.rank);
        betti.push(n_k - rank_k - rank_k1);
        torsion.push(
            snf_above[k + 1]
                .as_ref()
                .map_or_else(Vec::new, SmithNormalForm::torsion),
        );
    }
    HomologySummary { betti, torsion }
}
