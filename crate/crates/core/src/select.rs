//! Best-subset selection by branch-and-bound.
//!
//! The search walks a drop tree: a node is a variable list `S` whose first
//! `k` entries are fixed, and child `j` (for `k <= j < |S|`) removes `S[j]`
//! while fixing `S[..j]`. Every non-empty subset appears exactly once. Each
//! node carries the triangular factor of `[X_S | y]`, so a child's residual
//! sum of squares costs one column deletion and a Givens sweep.
//!
//! The factor's R² is an upper bound on the R² of every subset below the
//! node. Subtrees whose bound falls short of the incumbent for every size
//! they contain are skipped. Candidate winners are scored with
//! [`canonical_r2`], the same function the exhaustive oracle uses, so both
//! searches agree bit for bit.

use std::cmp::Ordering;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aft::{fit_mle, FitOptions, FitResult, SurvivalData};
use crate::covariates::DesignMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_COVARIATES: usize = 30;
pub const EXHAUSTIVE_MAX_COVARIATES: usize = 15;
const HARD_MAX_COVARIATES: usize = 64;
const TOLERANCE: f64 = 1e-10;

/// Bit set of column positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subset(pub u64);

impl Subset {
    pub fn from_indices(idx: &[usize]) -> Self {
        Subset(idx.iter().fold(0, |m, &i| m | (1u64 << i)))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    /// Ascending positions.
    pub fn indices(self) -> Vec<usize> {
        (0..64).filter(|&i| self.contains(i)).collect()
    }

    /// Lexicographic order of the ascending index lists.
    pub fn lex_cmp(self, other: Subset) -> Ordering {
        self.indices().cmp(&other.indices())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeBest {
    pub size: usize,
    pub subset: Subset,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubsetSearch {
    /// Entry `i` holds the best subset of size `i + 1`.
    pub per_size: Vec<SizeBest>,
    pub nodes_evaluated: u64,
    /// Models scored per size; index 0 is size 1.
    pub evaluated_by_size: Vec<u64>,
    /// The full column set is linearly dependent.
    pub rank_deficient: bool,
}

/// Centered copies of the inputs plus the total sum of squares.
struct Centered {
    x: DMatrix<f64>,
    y: DVector<f64>,
    tss: f64,
}

impl Centered {
    fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::InvalidData("row count mismatch".into()));
        }
        if n < p + 2 {
            return Err(Error::TooFewRows { rows: n, required: p + 2 });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value".into()));
        }
        let mut xc = x.clone();
        for mut col in xc.column_iter_mut() {
            let m = col.mean();
            col.add_scalar_mut(-m);
        }
        let yc = y.add_scalar(-y.mean());
        let tss = yc.norm_squared();
        Ok(Centered { x: xc, y: yc, tss })
    }

    fn r2_from_rss(&self, rss: f64) -> f64 {
        if self.tss > 0.0 {
            1.0 - rss / self.tss
        } else {
            0.0
        }
    }

    /// Modified Gram-Schmidt over the subset's columns in ascending order,
    /// skipping columns dependent on earlier ones. Returns `(r2, rank)`.
    fn canonical(&self, s: Subset) -> (f64, usize) {
        let n = self.x.nrows();
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(s.len());
        let mut resid = self.y.clone();
        for j in s.indices() {
            let mut v: DVector<f64> = self.x.column(j).into_owned();
            let scale = v.norm();
            for q in &basis {
                let d = q.dot(&v);
                v.axpy(-d, q, 1.0);
            }
            let len = v.norm();
            if !(len > 1e-10 * scale) || scale == 0.0 {
                continue;
            }
            v /= len;
            let d = v.dot(&resid);
            resid.axpy(-d, &v, 1.0);
            basis.push(v);
        }
        debug_assert!(basis.len() <= n);
        (self.r2_from_rss(resid.norm_squared()), basis.len())
    }
}

/// Least-squares R² of `y` on an intercept plus the columns in `s`.
pub fn canonical_r2(x: &DMatrix<f64>, y: &DVector<f64>, s: Subset) -> Result<f64> {
    Ok(Centered::new(x, y)?.canonical(s).0)
}

/// R² values this close to a size's best count as tied; the
/// lexicographically smallest of the tied subsets wins. Reordering the same
/// span changes the last bits of R², so exact equality would miss ties.
const TIE: f64 = 1e-12;

struct Incumbents {
    /// Per size, the best R² seen and every subset within `TIE` of it.
    best: Vec<(f64, Vec<(f64, Subset)>)>,
    evaluated: Vec<u64>,
}

impl Incumbents {
    fn new(p: usize) -> Self {
        Incumbents {
            best: vec![(f64::NEG_INFINITY, Vec::new()); p],
            evaluated: vec![0; p],
        }
    }

    /// The R² a subset of this size must reach to matter.
    fn value(&self, size: usize) -> f64 {
        self.best[size - 1].0 - TIE
    }

    fn offer(&mut self, s: Subset, r2: f64) {
        let (top, near) = &mut self.best[s.len() - 1];
        if r2 < *top - TIE {
            return;
        }
        if r2 > *top {
            *top = r2;
            let floor = r2 - TIE;
            near.retain(|(r, _)| *r >= floor);
        }
        // a subset with a lexicographically smaller rival at least as good
        // can never win, so only the front is kept
        if near.iter().any(|&(r, t)| r >= r2 && t.lex_cmp(s) == Ordering::Less) {
            return;
        }
        near.retain(|&(r, t)| !(r <= r2 && s.lex_cmp(t) == Ordering::Less));
        near.push((r2, s));
    }

    fn finish(self, nodes: u64, rank_deficient: bool) -> SubsetSearch {
        let per_size = self
            .best
            .iter()
            .enumerate()
            .map(|(i, (_, near))| {
                let &(r2, subset) = near
                    .iter()
                    .min_by(|a, b| a.1.lex_cmp(b.1))
                    .expect("every size is reachable");
                SizeBest { size: i + 1, subset, r2 }
            })
            .collect();
        SubsetSearch {
            per_size,
            nodes_evaluated: nodes,
            evaluated_by_size: self.evaluated,
            rank_deficient,
        }
    }
}

fn check_limit(p: usize, limit: usize) -> Result<()> {
    let limit = limit.min(HARD_MAX_COVARIATES);
    if p > limit {
        return Err(Error::TooManyCovariates { p, limit });
    }
    Ok(())
}

/// Scores all `2^p - 1` subsets.
pub fn exhaustive_subsets(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<SubsetSearch> {
    let p = x.ncols();
    check_limit(p, EXHAUSTIVE_MAX_COVARIATES)?;
    let c = Centered::new(x, y)?;
    let mut inc = Incumbents::new(p);
    let mut nodes = 0;
    for bits in 1..(1u64 << p) {
        let s = Subset(bits);
        nodes += 1;
        inc.evaluated[s.len() - 1] += 1;
        inc.offer(s, c.canonical(s).0);
    }
    let full = Subset((1u64 << p) - 1);
    let rank_deficient = p > 0 && c.canonical(full).1 < p;
    Ok(inc.finish(nodes, rank_deficient))
}

/// Removes column `j` from the upper triangular `r` (variables then `y`)
/// and restores triangular form.
fn drop_column(r: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let m = r.ncols();
    let mut h = r.clone().remove_column(j);
    for c in j..m - 1 {
        let (a, b) = (h[(c, c)], h[(c + 1, c)]);
        if b == 0.0 {
            continue;
        }
        let rho = a.hypot(b);
        let (cs, sn) = (a / rho, b / rho);
        for k in c..m - 1 {
            let (u, v) = (h[(c, k)], h[(c + 1, k)]);
            h[(c, k)] = cs * u + sn * v;
            h[(c + 1, k)] = -sn * u + cs * v;
        }
        h[(c + 1, c)] = 0.0;
    }
    h.remove_row(m - 1)
}

fn rss_of(r: &DMatrix<f64>) -> f64 {
    let m = r.ncols() - 1;
    r[(m, m)] * r[(m, m)]
}

struct Search<'a> {
    c: &'a Centered,
    inc: Incumbents,
    nodes: u64,
}

impl Search<'_> {
    fn visit(&mut self, vars: &[usize], r: &DMatrix<f64>, fixed: usize) {
        let m = vars.len();
        for j in (fixed..m).rev() {
            let child_vars: Vec<usize> = vars.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, &v)| v).collect();
            if child_vars.is_empty() {
                continue;
            }
            let child_r = drop_column(r, j);
            let bound = self.c.r2_from_rss(rss_of(&child_r));
            let smallest = j.max(1);
            let hopeless = (smallest..=child_vars.len()).all(|s| bound < self.inc.value(s) - TOLERANCE);
            if hopeless {
                continue;
            }
            self.score(&child_vars, bound);
            self.visit(&child_vars, &child_r, j);
        }
    }

    fn score(&mut self, vars: &[usize], bound: f64) {
        self.nodes += 1;
        let s = Subset::from_indices(vars);
        if bound >= self.inc.value(s.len()) - TOLERANCE {
            self.inc.evaluated[s.len() - 1] += 1;
            let r2 = self.c.canonical(s).0;
            self.inc.offer(s, r2);
        }
    }
}

/// Upper triangular factor of the centered `[X_vars | y]`.
fn factor(c: &Centered, vars: &[usize]) -> DMatrix<f64> {
    let n = c.x.nrows();
    let a = DMatrix::from_fn(n, vars.len() + 1, |i, k| if k < vars.len() { c.x[(i, vars[k])] } else { c.y[i] });
    a.qr().r()
}

/// Best least-squares subset of every size, `limit` capping the column count.
pub fn best_subset_per_size(x: &DMatrix<f64>, y: &DVector<f64>, limit: usize) -> Result<SubsetSearch> {
    let p = x.ncols();
    check_limit(p, limit)?;
    let c = Centered::new(x, y)?;
    if p == 0 {
        return Ok(Incumbents::new(0).finish(0, false));
    }

    // most important variables first, so they are the ones kept fixed
    let all: Vec<usize> = (0..p).collect();
    let r = factor(&c, &all);
    let mut order: Vec<(f64, usize)> = (0..p).map(|j| (rss_of(&drop_column(&r, j)), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let vars: Vec<usize> = order.iter().map(|&(_, j)| j).collect();
    let r = factor(&c, &vars);

    let mut search = Search {
        c: &c,
        inc: Incumbents::new(p),
        nodes: 0,
    };
    search.score(&vars, c.r2_from_rss(rss_of(&r)));
    search.visit(&vars, &r, 0);
    let rank_deficient = c.canonical(Subset::from_indices(&all)).1 < p;
    let nodes = search.nodes;
    Ok(search.inc.finish(nodes, rank_deficient))
}

/// A per-size winner refitted with the censored likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub size: usize,
    /// Covariate names in column order.
    pub mask: Vec<String>,
    /// Design column indices.
    pub columns: Vec<usize>,
    /// Least-squares R² from the search.
    pub ls_r2: f64,
    #[serde(flatten)]
    pub fit: FitResult,
}

impl SubsetResult {
    pub fn adj_r2(&self) -> Option<f64> {
        self.fit.adj_r2
    }

    /// Whether design column `col` is present and significant.
    pub fn significant(&self, col: usize) -> bool {
        self.columns
            .iter()
            .position(|&c| c == col)
            .is_some_and(|k| self.fit.significant.get(k).copied().unwrap_or(false))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    /// Covariates the search ran over.
    pub covariates: Vec<String>,
    pub per_size: Vec<SubsetResult>,
    /// Size of the converged refit with the highest adjusted R².
    pub overall_best: Option<usize>,
    pub always_present: Vec<String>,
    pub nodes_evaluated: u64,
    pub rank_deficient: bool,
}

impl SelectionReport {
    pub fn best(&self) -> Option<&SubsetResult> {
        self.overall_best.map(|s| &self.per_size[s - 1])
    }
}

/// Refits each per-size winner with the censored MLE on the selected design
/// columns. `columns[i]` is the design column behind search position `i`.
pub fn finalize_selection(
    search: &SubsetSearch,
    columns: &[usize],
    design: &DesignMatrix,
    opts: FitOptions,
) -> Result<SelectionReport> {
    let mut per_size = Vec::with_capacity(search.per_size.len());
    for b in &search.per_size {
        let cols: Vec<usize> = b.subset.indices().iter().map(|&i| columns[i]).collect();
        let data = SurvivalData::from_design(design, &cols)?;
        let fit = fit_mle(&data, None, opts)?;
        per_size.push(SubsetResult {
            size: b.size,
            mask: cols.iter().map(|&c| design.names[c].clone()).collect(),
            columns: cols,
            ls_r2: b.r2,
            fit,
        });
    }

    let always_present = match per_size.first() {
        Some(first) => first
            .columns
            .iter()
            .filter(|c| per_size.iter().all(|r| r.columns.contains(c)))
            .map(|&c| design.names[c].clone())
            .collect(),
        None => Vec::new(),
    };

    Ok(SelectionReport {
        covariates: columns.iter().map(|&c| design.names[c].clone()).collect(),
        overall_best: overall_best(&per_size),
        per_size,
        always_present,
        nodes_evaluated: search.nodes_evaluated,
        rank_deficient: search.rank_deficient,
    })
}

/// Size of the converged result with the largest adjusted R². Ties go to
/// the smaller size.
pub fn overall_best(per_size: &[SubsetResult]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in per_size {
        let Some(adj) = r.adj_r2().filter(|_| r.fit.converged) else {
            continue;
        };
        if best.is_none_or(|(_, a)| adj > a) {
            best = Some((r.size, adj));
        }
    }
    best.map(|(s, _)| s)
}

/// Size-by-covariate matrix with cells `absent`, `present` or `significant`.
pub fn write_selection_matrix<W: Write>(report: &SelectionReport, names: &[String], mut w: W) -> Result<()> {
    writeln!(w, "size,{}", names.join(","))?;
    for r in &report.per_size {
        write!(w, "{}", r.size)?;
        for name in names {
            let cell = match r.mask.iter().position(|m| m == name) {
                None => "absent",
                Some(k) if r.fit.significant.get(k).copied().unwrap_or(false) => "significant",
                Some(_) => "present",
            };
            write!(w, ",{cell}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
