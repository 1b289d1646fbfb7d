//! Shared data model: views, constraint matrices, propagation fields and parameters.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

pub type Label = u32;

/// Symmetry tolerance used when validating affinity matrices.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// One view of a two-view dataset. Either raw features or a precomputed
/// affinity (kernel) matrix must be present.
#[derive(Debug, Clone, Default)]
pub struct ViewDataset {
    pub items: usize,
    pub features: Option<Array2<f64>>,
    pub affinity: Option<Array2<f64>>,
    pub labels: Option<Vec<Label>>,
}

impl ViewDataset {
    pub fn from_features(features: Array2<f64>) -> Self {
        ViewDataset { items: features.nrows(), features: Some(features), affinity: None, labels: None }
    }

    pub fn from_affinity(affinity: Array2<f64>) -> Self {
        ViewDataset { items: affinity.nrows(), features: None, affinity: Some(affinity), labels: None }
    }

    pub fn with_labels(mut self, labels: Vec<Label>) -> Self {
        self.labels = Some(labels);
        self
    }

    /// Restricts the view to the given items, in the given order.
    pub fn subset(&self, items: &[usize]) -> ViewDataset {
        ViewDataset {
            items: items.len(),
            features: self.features.as_ref().map(|f| f.select(ndarray::Axis(0), items)),
            affinity: self.affinity.as_ref().map(|a| a.select(ndarray::Axis(0), items).select(ndarray::Axis(1), items)),
            labels: self.labels.as_ref().map(|l| items.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostic {
    NoData,
    FeatureRowMismatch { rows: usize, items: usize },
    NonFiniteFeatures,
    AffinityNotSquare { rows: usize, cols: usize },
    AffinitySizeMismatch { size: usize, items: usize },
    AffinityAsymmetric { row: usize, col: usize, gap: f64 },
    AffinityNegative { row: usize, col: usize },
    AffinityNonFinite,
    LabelCountMismatch { labels: usize, items: usize },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NoData => write!(f, "neither features nor affinity present"),
            Diagnostic::FeatureRowMismatch { rows, items } => {
                write!(f, "feature row count {rows} differs from item count {items}")
            }
            Diagnostic::NonFiniteFeatures => write!(f, "features contain non-finite values"),
            Diagnostic::AffinityNotSquare { rows, cols } => {
                write!(f, "affinity not square ({rows}x{cols})")
            }
            Diagnostic::AffinitySizeMismatch { size, items } => {
                write!(f, "affinity size {size} differs from item count {items}")
            }
            Diagnostic::AffinityAsymmetric { row, col, gap } => {
                write!(f, "affinity asymmetric at ({row}, {col}) by {gap:e}")
            }
            Diagnostic::AffinityNegative { row, col } => {
                write!(f, "affinity negative at ({row}, {col})")
            }
            Diagnostic::AffinityNonFinite => write!(f, "affinity contains non-finite values"),
            Diagnostic::LabelCountMismatch { labels, items } => {
                write!(f, "label count mismatch ({labels} labels for {items} items)")
            }
        }
    }
}

/// Lists every violated dataset invariant. An empty list means the view is valid.
pub fn validate_dataset(ds: &ViewDataset) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if ds.features.is_none() && ds.affinity.is_none() {
        out.push(Diagnostic::NoData);
    }
    if let Some(features) = &ds.features {
        if features.nrows() != ds.items {
            out.push(Diagnostic::FeatureRowMismatch { rows: features.nrows(), items: ds.items });
        }
        if features.iter().any(|v| !v.is_finite()) {
            out.push(Diagnostic::NonFiniteFeatures);
        }
    }
    if let Some(aff) = &ds.affinity {
        let (rows, cols) = aff.dim();
        if rows != cols {
            out.push(Diagnostic::AffinityNotSquare { rows, cols });
        } else {
            if rows != ds.items {
                out.push(Diagnostic::AffinitySizeMismatch { size: rows, items: ds.items });
            }
            if aff.iter().any(|v| !v.is_finite()) {
                out.push(Diagnostic::AffinityNonFinite);
            } else {
                'sym: for i in 0..rows {
                    for j in (i + 1)..cols {
                        let gap = (aff[[i, j]] - aff[[j, i]]).abs();
                        if gap > SYMMETRY_TOL {
                            out.push(Diagnostic::AffinityAsymmetric { row: i, col: j, gap });
                            break 'sym;
                        }
                    }
                }
                if let Some(((row, col), _)) = aff.indexed_iter().find(|(_, &v)| v < 0.0) {
                    out.push(Diagnostic::AffinityNegative { row, col });
                }
            }
        }
    }
    if let Some(labels) = &ds.labels {
        if labels.len() != ds.items {
            out.push(Diagnostic::LabelCountMismatch { labels: labels.len(), items: ds.items });
        }
    }
    out
}

/// Must-link (+1) or cannot-link (−1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    MustLink,
    CannotLink,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::MustLink => 1.0,
            Sign::CannotLink => -1.0,
        }
    }

    pub fn from_i64(s: i64) -> Option<Sign> {
        match s {
            1 => Some(Sign::MustLink),
            -1 => Some(Sign::CannotLink),
            _ => None,
        }
    }

    pub fn negate(self) -> Sign {
        match self {
            Sign::MustLink => Sign::CannotLink,
            Sign::CannotLink => Sign::MustLink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    /// Between items of two different views (N×M).
    Inter,
    /// Between items of one view (N×N, symmetric, no self pairs).
    Intra,
}

/// Signed sparse constraint matrix. Entries are kept sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    rows: usize,
    cols: usize,
    kind: ConstraintKind,
    entries: Vec<(usize, usize, Sign)>,
    row_start: Vec<usize>,
}

impl ConstraintMatrix {
    pub fn new(rows: usize, cols: usize, kind: ConstraintKind, mut entries: Vec<(usize, usize, Sign)>) -> Result<Self> {
        entries.sort_by_key(|&(i, j, _)| (i, j));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(invalid(format!("duplicate constraint at ({}, {})", w[0].0, w[0].1)));
            }
        }
        if let Some(&(i, j, _)) = entries.iter().find(|&&(i, j, _)| i >= rows || j >= cols) {
            return Err(invalid(format!("constraint ({i}, {j}) out of range for {rows}x{cols}")));
        }
        if kind == ConstraintKind::Intra {
            if rows != cols {
                return Err(invalid(format!("intra constraints must be square, got {rows}x{cols}")));
            }
            if let Some(&(i, _, _)) = entries.iter().find(|&&(i, j, _)| i == j) {
                return Err(invalid(format!("intra constraint on self pair ({i}, {i})")));
            }
        }
        let mut row_start = vec![0usize; rows + 1];
        for &(i, _, _) in &entries {
            row_start[i + 1] += 1;
        }
        for i in 0..rows {
            row_start[i + 1] += row_start[i];
        }
        let m = ConstraintMatrix { rows, cols, kind, entries, row_start };
        if kind == ConstraintKind::Intra {
            if let Some(&(i, j, s)) = m.entries.iter().find(|&&(i, j, s)| m.get(j, i) != Some(s)) {
                return Err(invalid(format!(
                    "intra constraints not symmetric: ({i}, {j}, {:+}) has no mirror",
                    s.value()
                )));
            }
        }
        Ok(m)
    }

    pub fn empty(rows: usize, cols: usize, kind: ConstraintKind) -> Self {
        ConstraintMatrix::new(rows, cols, kind, Vec::new()).expect("empty matrix is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> ConstraintKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, usize, Sign)] {
        &self.entries
    }

    pub fn row(&self, i: usize) -> &[(usize, usize, Sign)] {
        &self.entries[self.row_start[i]..self.row_start[i + 1]]
    }

    pub fn get(&self, i: usize, j: usize) -> Option<Sign> {
        let row = self.row(i);
        row.binary_search_by_key(&j, |&(_, c, _)| c).ok().map(|k| row[k].2)
    }

    /// Value of `z_ij` in {−1, 0, +1}.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).map_or(0.0, Sign::value)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut z = Array2::zeros((self.rows, self.cols));
        for &(i, j, s) in &self.entries {
            z[[i, j]] = s.value();
        }
        z
    }

    pub fn negated(&self) -> ConstraintMatrix {
        ConstraintMatrix { entries: self.entries.iter().map(|&(i, j, s)| (i, j, s.negate())).collect(), ..self.clone() }
    }

    /// Maps a matrix defined over subsets of items into the full index space:
    /// local row `r` becomes `row_map[r]`, local col `c` becomes `col_map[c]`.
    pub fn embed(&self, row_map: &[usize], col_map: &[usize], rows: usize, cols: usize) -> Result<ConstraintMatrix> {
        if row_map.len() != self.rows || col_map.len() != self.cols {
            return Err(invalid("index maps do not match constraint dimensions"));
        }
        let entries = self.entries.iter().map(|&(i, j, s)| (row_map[i], col_map[j], s)).collect();
        ConstraintMatrix::new(rows, cols, self.kind, entries)
    }

    /// Keeps only entries whose row and column both satisfy the predicates.
    pub fn retain(&self, keep_row: impl Fn(usize) -> bool, keep_col: impl Fn(usize) -> bool) -> ConstraintMatrix {
        let entries = self.entries.iter().copied().filter(|&(i, j, _)| keep_row(i) && keep_col(j)).collect();
        ConstraintMatrix::new(self.rows, self.cols, self.kind, entries).expect("a filtered valid matrix stays valid")
    }
}

/// Inter-view constraints from class labels: `+1` where the labels agree and
/// `−1` where they differ.
///
/// With `max_per_item`, each row keeps a uniform sample of at most that many
/// entries (deterministic under `seed`); every sampled matrix is a subset of
/// the unsampled one.
pub fn constraints_from_labels<L: PartialEq>(
    labels_a: &[L],
    labels_b: &[L],
    max_per_item: Option<usize>,
    seed: u64,
) -> Result<ConstraintMatrix> {
    check_label_inputs(labels_a, labels_b, max_per_item)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for (i, la) in labels_a.iter().enumerate() {
        let cols = pick_columns(0..labels_b.len(), max_per_item, &mut rng);
        entries.extend(cols.into_iter().map(|j| (i, j, sign_for(la, &labels_b[j]))));
    }
    ConstraintMatrix::new(labels_a.len(), labels_b.len(), ConstraintKind::Inter, entries)
}

/// Intra-view constraints from the labels of a single view: symmetric and
/// without self pairs.
///
/// With `max_per_item`, each row `i` samples at most that many partners among
/// `j > i`; the mirrored entries are then added, so a row can hold more than
/// `max_per_item` entries in total.
pub fn intra_constraints_from_labels<L: PartialEq>(
    labels: &[L],
    max_per_item: Option<usize>,
    seed: u64,
) -> Result<ConstraintMatrix> {
    check_label_inputs(labels, labels, max_per_item)?;
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for i in 0..n {
        let cols = pick_columns((i + 1)..n, max_per_item, &mut rng);
        for j in cols {
            let s = sign_for(&labels[i], &labels[j]);
            entries.push((i, j, s));
            entries.push((j, i, s));
        }
    }
    ConstraintMatrix::new(n, n, ConstraintKind::Intra, entries)
}

fn check_label_inputs<L>(a: &[L], b: &[L], max_per_item: Option<usize>) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("label list is empty"));
    }
    if max_per_item == Some(0) {
        return Err(invalid("max_per_item must be at least 1"));
    }
    Ok(())
}

fn sign_for<L: PartialEq>(a: &L, b: &L) -> Sign {
    if a == b {
        Sign::MustLink
    } else {
        Sign::CannotLink
    }
}

fn pick_columns(range: std::ops::Range<usize>, max_per_item: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let len = range.len();
    match max_per_item {
        Some(cap) if cap < len => {
            let mut picked: Vec<usize> = sample(rng, len, cap).into_iter().map(|k| range.start + k).collect();
            picked.sort_unstable();
            picked
        }
        _ => range.collect(),
    }
}

/// Dense field of propagated constraint confidences (`F*`). Positive entries
/// read as must-link confidence, negative as cannot-link.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationField {
    values: Array2<f64>,
}

impl PropagationField {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("propagation field contains non-finite entries"));
        }
        Ok(PropagationField { values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        PropagationField { values: Array2::zeros((rows, cols)) }
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn transpose(&self) -> PropagationField {
        PropagationField { values: self.values.t().to_owned() }
    }
}

/// Parameters of the alternating inter-view propagation.
///
/// The smoothness weights `μ̂` and coupling weight `γ` of the underlying
/// energy functional are not stored; they follow from the iteration
/// coefficients through `μ̂ = α / (1 − α)` and `γ = β / (1 − β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub beta: f64,
    pub inner_tol: f64,
    pub outer_tol: f64,
    pub max_inner_iters: usize,
    pub max_outer_iters: usize,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            alpha_x: 0.025,
            alpha_y: 0.025,
            beta: 0.95,
            inner_tol: 1e-6,
            outer_tol: 1e-4,
            max_inner_iters: 1000,
            max_outer_iters: 200,
        }
    }
}

impl PropagationParams {
    pub fn validate(&self) -> Result<()> {
        check_unit_open("alpha_x", self.alpha_x)?;
        check_unit_open("alpha_y", self.alpha_y)?;
        check_beta(self.beta)?;
        check_iteration_controls(self.inner_tol, self.outer_tol, self.max_inner_iters, self.max_outer_iters)
    }

    pub fn mu_hat_x(&self) -> f64 {
        mu_hat(self.alpha_x)
    }

    pub fn mu_hat_y(&self) -> f64 {
        mu_hat(self.alpha_y)
    }

    pub fn gamma(&self) -> f64 {
        gamma(self.beta)
    }
}

/// `μ̂ = α / (1 − α)`.
pub fn mu_hat(alpha: f64) -> f64 {
    alpha / (1.0 - alpha)
}

/// `γ = β / (1 − β)`.
pub fn gamma(beta: f64) -> f64 {
    beta / (1.0 - beta)
}

pub(crate) fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must lie in (0, 1), got {v}")))
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if (0.0..1.0).contains(&beta) {
        Ok(())
    } else {
        Err(invalid(format!("beta must lie in [0, 1), got {beta}")))
    }
}

pub(crate) fn check_iteration_controls(
    inner_tol: f64,
    outer_tol: f64,
    max_inner: usize,
    max_outer: usize,
) -> Result<()> {
    if inner_tol.is_nan() || inner_tol <= 0.0 || outer_tol.is_nan() || outer_tol <= 0.0 {
        return Err(invalid("tolerances must be positive"));
    }
    if max_inner == 0 || max_outer == 0 {
        return Err(invalid("iteration caps must be positive"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    /// Mean distance from each point to its k-th nearest neighbor.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Gaussian(Sigma),
    Cosine,
    /// The view already carries an affinity matrix.
    Precomputed,
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Gaussian(Sigma::Auto) => write!(f, "gaussian"),
            Kernel::Gaussian(Sigma::Fixed(s)) => write!(f, "gaussian:{s}"),
            Kernel::Cosine => write!(f, "cosine"),
            Kernel::Precomputed => write!(f, "precomputed"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian" | "gaussian:auto" => Ok(Kernel::Gaussian(Sigma::Auto)),
            "cosine" => Ok(Kernel::Cosine),
            "precomputed" => Ok(Kernel::Precomputed),
            other => match other.strip_prefix("gaussian:") {
                Some(v) => {
                    let sigma: f64 = v.parse().map_err(|_| invalid(format!("bad gaussian sigma '{v}'")))?;
                    if sigma > 0.0 && sigma.is_finite() {
                        Ok(Kernel::Gaussian(Sigma::Fixed(sigma)))
                    } else {
                        Err(invalid(format!("gaussian sigma must be positive, got {sigma}")))
                    }
                }
                None => Err(invalid(format!("unknown kernel '{other}'"))),
            },
        }
    }
}

/// Graph construction method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Construction {
    /// Plain k-NN graph carrying kernel affinities.
    Knn,
    /// k-NN restricted L1-graph from sparse reconstruction.
    Sr,
    /// k-NN graph reweighted by propagated intra-view constraints.
    Cwa,
    /// L1-graph with an L1 Laplacian penalty built from intra-view constraints.
    Csr,
}

impl Construction {
    pub const ALL: [Construction; 4] = [Construction::Knn, Construction::Sr, Construction::Cwa, Construction::Csr];

    pub fn needs_intra_constraints(self) -> bool {
        matches!(self, Construction::Cwa | Construction::Csr)
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Construction::Knn => "kNN",
            Construction::Sr => "SR",
            Construction::Cwa => "CWA",
            Construction::Csr => "CSR",
        }
    }
}

impl fmt::Display for Construction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Construction::Knn => "knn",
            Construction::Sr => "sr",
            Construction::Cwa => "cwa",
            Construction::Csr => "csr",
        })
    }
}

impl FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "knn" => Ok(Construction::Knn),
            "sr" => Ok(Construction::Sr),
            "cwa" => Ok(Construction::Cwa),
            "csr" => Ok(Construction::Csr),
            other => Err(invalid(format!("unknown construction '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphSpec {
    pub k: usize,
    pub kernel: Kernel,
    pub construction: Construction,
}

impl GraphSpec {
    pub fn new(k: usize, kernel: Kernel, construction: Construction) -> Self {
        GraphSpec { k, kernel, construction }
    }

    pub fn validate(&self, items: usize) -> Result<()> {
        if self.k == 0 || self.k >= items {
            return Err(invalid(format!("k must satisfy 0 < k < items, got k = {} for {items} items", self.k)));
        }
        if let Kernel::Gaussian(Sigma::Fixed(s)) = self.kernel {
            if s.is_nan() || s <= 0.0 {
                return Err(invalid(format!("gaussian sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }
}
