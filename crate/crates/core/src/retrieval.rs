//! Cross-view retrieval on a propagated field: ranking, AP/MAP and
//! cross-validated grid search.
//!
//! View X is the text view and view Y the image view. An image query is a
//! Y item ranking X items by `F[:, j]`; a text query is an X item ranking Y
//! items by `F[i, :]`.

use std::collections::HashMap;
use std::fmt;

use log::{debug, warn};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::inter::propagate_inter;
use crate::intra::IntraParams;
use crate::model::{
    ConstraintMatrix, Construction, GraphSpec, Kernel, Label, PropagationField, PropagationParams, ViewDataset,
};
use crate::pipeline::{build_view_graph, ViewGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QueryView {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub view: QueryView,
    pub index: usize,
}

impl Query {
    pub fn x(index: usize) -> Self {
        Query { view: QueryView::X, index }
    }

    pub fn y(index: usize) -> Self {
        Query { view: QueryView::Y, index }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.view {
            QueryView::X => "x",
            QueryView::Y => "y",
        };
        write!(f, "{tag}{}", self.index)
    }
}

/// Gallery items of the opposite view, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub query: Query,
    pub results: Vec<(usize, f64)>,
}

impl RankedList {
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.results.iter().map(|&(i, _)| i)
    }
}

/// Ranks the whole opposite view for `query`.
pub fn rank_cross_view(f: &PropagationField, query: Query) -> Result<RankedList> {
    let gallery_len = match query.view {
        QueryView::X => f.cols(),
        QueryView::Y => f.rows(),
    };
    let gallery: Vec<usize> = (0..gallery_len).collect();
    rank_within(f, query, &gallery)
}

/// Ranks only the listed gallery items. Scores sort descending, ties by
/// ascending index.
pub fn rank_within(f: &PropagationField, query: Query, gallery: &[usize]) -> Result<RankedList> {
    let (query_len, gallery_len) = match query.view {
        QueryView::X => (f.rows(), f.cols()),
        QueryView::Y => (f.cols(), f.rows()),
    };
    if query.index >= query_len {
        return Err(invalid(format!("query {query} out of range for a view of {query_len} items")));
    }
    if let Some(&g) = gallery.iter().find(|&&g| g >= gallery_len) {
        return Err(invalid(format!("gallery index {g} out of range ({gallery_len} items)")));
    }
    let values = f.values();
    let mut results: Vec<(usize, f64)> = gallery
        .iter()
        .map(|&g| {
            let score = match query.view {
                QueryView::X => values[[query.index, g]],
                QueryView::Y => values[[g, query.index]],
            };
            (g, score)
        })
        .collect();
    results.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    results.dedup_by_key(|r| r.0);
    Ok(RankedList { query, results })
}

/// Uncut average precision of `ranked` for the given relevant items.
pub fn average_precision(ranked: &RankedList, relevant: &[usize]) -> Result<f64> {
    if relevant.is_empty() {
        return Err(Error::UndefinedAveragePrecision);
    }
    let listed: HashMap<usize, usize> = ranked.indices().enumerate().map(|(r, i)| (i, r)).collect();
    let mut ranks = Vec::with_capacity(relevant.len());
    for r in relevant {
        match listed.get(r) {
            Some(&rank) => ranks.push(rank),
            None => return Err(invalid(format!("relevant item {r} is not in the ranked list"))),
        }
    }
    ranks.sort_unstable();
    ranks.dedup();
    let terms = || ranks.iter().enumerate().map(|(hits, &rank)| (hits as u128 + 1, rank as u128 + 1));
    if let Some(ap) = exact_mean(terms(), ranks.len() as u128) {
        return Ok(ap);
    }
    let sum: f64 = terms().map(|(h, r)| h as f64 / r as f64).sum();
    Ok(sum / ranks.len() as f64)
}

/// `(Σ h/r) / count` in rational arithmetic, rounded once at the end. `None`
/// when the reduced fraction outgrows exact `f64` conversion.
fn exact_mean(terms: impl Iterator<Item = (u128, u128)>, count: u128) -> Option<f64> {
    const EXACT: u128 = 1 << 53;
    let (mut num, mut den) = (0u128, 1u128);
    for (h, r) in terms {
        let g = gcd(den, r);
        let lcm = (den / g).checked_mul(r)?;
        num = num.checked_mul(lcm / den)?.checked_add(h.checked_mul(lcm / r)?)?;
        den = lcm;
        let g = gcd(num, den);
        (num, den) = (num / g, den / g);
    }
    den = den.checked_mul(count)?;
    let g = gcd(num, den);
    (num, den) = (num / g, den / g);
    (num <= EXACT && den <= EXACT).then(|| num as f64 / den as f64)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Both,
    /// Y queries, X gallery.
    ImageQuery,
    /// X queries, Y gallery.
    TextQuery,
}

impl Direction {
    fn includes(self, view: QueryView) -> bool {
        match self {
            Direction::Both => true,
            Direction::ImageQuery => view == QueryView::Y,
            Direction::TextQuery => view == QueryView::X,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "both" => Ok(Direction::Both),
            "image_query" | "image" => Ok(Direction::ImageQuery),
            "text_query" | "text" => Ok(Direction::TextQuery),
            other => Err(invalid(format!("unknown retrieval direction '{other}'"))),
        }
    }
}

/// Parameter echo attached to a report.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSnapshot {
    pub params: PropagationParams,
    pub graph_x: GraphSpec,
    pub graph_y: GraphSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalReport {
    pub per_query_ap: Vec<(Query, f64)>,
    /// `None` when the direction was not requested.
    pub map_image_query: Option<f64>,
    pub map_text_query: Option<f64>,
    /// Mean of the directional MAPs that were computed.
    pub map_average: f64,
    /// Queries whose class has no member in the gallery.
    pub skipped: usize,
    pub params: Option<RunSnapshot>,
}

/// MAP with every item of both views acting as query and gallery item.
pub fn evaluate_map(
    f: &PropagationField,
    labels_x: &[Label],
    labels_y: &[Label],
    direction: Direction,
) -> Result<RetrievalReport> {
    let all_x: Vec<usize> = (0..labels_x.len()).collect();
    let all_y: Vec<usize> = (0..labels_y.len()).collect();
    evaluate_map_on(f, labels_x, labels_y, &all_x, &all_y, direction)
}

/// MAP restricted to test items: queries are the test items of one view and
/// the gallery is the test items of the other.
pub fn evaluate_map_on(
    f: &PropagationField,
    labels_x: &[Label],
    labels_y: &[Label],
    test_x: &[usize],
    test_y: &[usize],
    direction: Direction,
) -> Result<RetrievalReport> {
    if labels_x.len() != f.rows() || labels_y.len() != f.cols() {
        return Err(invalid(format!(
            "field is {}x{} but there are {} and {} labels",
            f.rows(),
            f.cols(),
            labels_x.len(),
            labels_y.len()
        )));
    }
    let mut queries = Vec::new();
    if direction.includes(QueryView::Y) {
        queries.extend(test_y.iter().map(|&j| Query::y(j)));
    }
    if direction.includes(QueryView::X) {
        queries.extend(test_x.iter().map(|&i| Query::x(i)));
    }
    let scored: Vec<Option<(Query, f64)>> = queries
        .par_iter()
        .map(|&q| {
            let (gallery, own, other) = match q.view {
                QueryView::X => (test_y, labels_x, labels_y),
                QueryView::Y => (test_x, labels_y, labels_x),
            };
            let Some(&class) = own.get(q.index) else {
                return Err(invalid(format!("query {q} out of range")));
            };
            let relevant: Vec<usize> = gallery.iter().copied().filter(|&g| other.get(g) == Some(&class)).collect();
            if relevant.is_empty() {
                return Ok(None);
            }
            let ranked = rank_within(f, q, gallery)?;
            Ok(Some((q, average_precision(&ranked, &relevant)?)))
        })
        .collect::<Result<_>>()?;
    let skipped = scored.iter().filter(|s| s.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} queries skipped: their class is absent from the gallery");
    }
    let per_query_ap: Vec<(Query, f64)> = scored.into_iter().flatten().collect();

    let mean_for = |view: QueryView| -> Result<Option<f64>> {
        if !direction.includes(view) {
            return Ok(None);
        }
        let aps: Vec<f64> = per_query_ap.iter().filter(|(q, _)| q.view == view).map(|&(_, ap)| ap).collect();
        if aps.is_empty() {
            return Err(invalid("no query could be evaluated in a requested direction"));
        }
        Ok(Some(aps.iter().sum::<f64>() / aps.len() as f64))
    };
    let map_image_query = mean_for(QueryView::Y)?;
    let map_text_query = mean_for(QueryView::X)?;
    let present: Vec<f64> = [map_image_query, map_text_query].into_iter().flatten().collect();
    let map_average = present.iter().sum::<f64>() / present.len() as f64;
    Ok(RetrievalReport { per_query_ap, map_image_query, map_text_query, map_average, skipped, params: None })
}

/// Assigns each item to one of `folds` folds, stratified by class and
/// deterministic under `seed`.
///
/// Classes smaller than `folds` cannot be present in every fold; they are
/// still spread one item per fold and a warning is logged.
pub fn stratified_folds(labels: &[Label], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(invalid(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(invalid(format!("cannot split {} items into {folds} nonempty folds", labels.len())));
    }
    let mut by_class: Vec<(Label, Vec<usize>)> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match by_class.iter_mut().find(|(c, _)| *c == l) {
            Some((_, members)) => members.push(i),
            None => by_class.push((l, vec![i])),
        }
    }
    by_class.sort_by_key(|(c, _)| *c);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for (class, members) in &mut by_class {
        if members.len() < folds {
            warn!("class {class} has {} items, fewer than {folds} folds; some folds will lack it", members.len());
        }
        members.shuffle(&mut rng);
        // continue dealing where the previous class stopped so fold sizes stay balanced
        for &i in members.iter() {
            assignment[i] = next;
            next = (next + 1) % folds;
        }
    }
    Ok(assignment)
}

/// Values to search over. `alpha_y = None` ties `α_Y` to `α_X`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxes {
    pub construction: Vec<Construction>,
    pub k: Vec<usize>,
    pub alpha_x: Vec<f64>,
    pub alpha_y: Option<Vec<f64>>,
    pub beta: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        GridAxes {
            construction: vec![Construction::Knn],
            k: vec![30, 60, 90],
            alpha_x: vec![0.01, 0.025, 0.05, 0.1],
            alpha_y: None,
            beta: vec![0.5, 0.9, 0.95, 0.99],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    pub construction: Construction,
    pub k: usize,
    pub alpha_x: f64,
    pub alpha_y: f64,
    pub beta: f64,
}

impl GridAxes {
    /// Grid order: construction, k, α_X, α_Y, β, with the last varying fastest.
    pub fn configs(&self) -> Vec<GridConfig> {
        let mut out = Vec::new();
        for &construction in &self.construction {
            for &k in &self.k {
                for &alpha_x in &self.alpha_x {
                    let ys = self.alpha_y.clone().unwrap_or_else(|| vec![alpha_x]);
                    for &alpha_y in &ys {
                        for &beta in &self.beta {
                            out.push(GridConfig { construction, k, alpha_x, alpha_y, beta });
                        }
                    }
                }
            }
        }
        out
    }
}

impl GridConfig {
    pub fn params(&self, base: &PropagationParams) -> PropagationParams {
        PropagationParams { alpha_x: self.alpha_x, alpha_y: self.alpha_y, beta: self.beta, ..*base }
    }

    pub fn graph_spec(&self, kernel: Kernel) -> GraphSpec {
        GraphSpec::new(self.k, kernel, self.construction)
    }
}

/// Training data and fixed settings for [`grid_search`]. Both views must
/// carry labels; constraint matrices index the items of `x` and `y`.
#[derive(Debug, Clone)]
pub struct GridSearchInput<'a> {
    pub x: &'a ViewDataset,
    pub y: &'a ViewDataset,
    pub z: &'a ConstraintMatrix,
    pub intra_x: Option<&'a ConstraintMatrix>,
    pub intra_y: Option<&'a ConstraintMatrix>,
    pub kernel_x: Kernel,
    pub kernel_y: Kernel,
    /// Tolerances and caps; the searched fields are overwritten per config.
    pub base_params: PropagationParams,
    pub intra_params: IntraParams,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldRow {
    pub config: usize,
    pub fold: usize,
    pub map_image_query: f64,
    pub map_text_query: f64,
    pub map_average: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub configs: Vec<GridConfig>,
    /// Mean validation MAP per config; `None` if any fold failed.
    pub scores: Vec<Option<f64>>,
    pub best: usize,
    pub folds: Vec<FoldRow>,
    /// Configs whose propagation failed, with the error message.
    pub failures: Vec<(usize, usize, String)>,
    pub fold_x: Vec<usize>,
    pub fold_y: Vec<usize>,
}

impl GridSearchResult {
    pub fn best_config(&self) -> GridConfig {
        self.configs[self.best]
    }

    pub fn best_score(&self) -> f64 {
        self.scores[self.best].expect("best config has a score")
    }
}

/// Cross-validated selection of propagation and graph parameters.
///
/// For each fold the graphs are built over all training items (transductive),
/// constraints touching the held-out items are dropped, and the held-out items
/// of the two views serve as queries and galleries. Paired views (equal label
/// vectors) share one fold assignment. Ties in mean MAP go to the earlier
/// config in grid order.
pub fn grid_search(input: &GridSearchInput<'_>, axes: &GridAxes) -> Result<GridSearchResult> {
    let configs = axes.configs();
    if configs.is_empty() {
        return Err(invalid("grid is empty"));
    }
    let labels_x = input.x.labels.as_deref().ok_or_else(|| invalid("view x has no labels"))?;
    let labels_y = input.y.labels.as_deref().ok_or_else(|| invalid("view y has no labels"))?;
    if input.z.rows() != input.x.items || input.z.cols() != input.y.items {
        return Err(invalid("inter constraints do not match the view sizes"));
    }
    let fold_x = stratified_folds(labels_x, input.folds, input.seed)?;
    let fold_y = if labels_x == labels_y {
        fold_x.clone()
    } else {
        stratified_folds(labels_y, input.folds, input.seed.wrapping_add(1))?
    };

    // graphs that do not use constraints are shared by every fold
    let mut keys: Vec<(usize, Construction, Option<usize>)> = Vec::new();
    for c in &configs {
        for fold in 0..input.folds {
            let key = (c.k, c.construction, c.construction.needs_intra_constraints().then_some(fold));
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
    }
    debug!("grid search: {} configs, {} graph builds", configs.len(), keys.len());
    let graphs: Vec<(ViewGraph, ViewGraph)> = keys
        .par_iter()
        .map(|&(k, construction, fold)| {
            let restrict = |z: Option<&ConstraintMatrix>, assign: &[usize]| {
                z.map(|z| match fold {
                    Some(f) => z.retain(|i| assign[i] != f, |j| assign[j] != f),
                    None => z.clone(),
                })
            };
            let ix = restrict(input.intra_x, &fold_x);
            let iy = restrict(input.intra_y, &fold_y);
            let gx = build_view_graph(
                input.x,
                &GraphSpec::new(k, input.kernel_x, construction),
                ix.as_ref(),
                &input.intra_params,
            )?;
            let gy = build_view_graph(
                input.y,
                &GraphSpec::new(k, input.kernel_y, construction),
                iy.as_ref(),
                &input.intra_params,
            )?;
            Ok((gx, gy))
        })
        .collect::<Result<_>>()?;
    let graph_for = |c: &GridConfig, fold: usize| {
        let key = (c.k, c.construction, c.construction.needs_intra_constraints().then_some(fold));
        &graphs[keys.iter().position(|k| *k == key).expect("graph was built")]
    };

    let cells: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..input.folds).map(move |f| (c, f))).collect();
    let outcomes: Vec<std::result::Result<FoldRow, String>> = cells
        .par_iter()
        .map(|&(ci, fold)| {
            let c = &configs[ci];
            let (gx, gy) = graph_for(c, fold);
            let z = input.z.retain(|i| fold_x[i] != fold, |j| fold_y[j] != fold);
            let test_x: Vec<usize> = (0..fold_x.len()).filter(|&i| fold_x[i] == fold).collect();
            let test_y: Vec<usize> = (0..fold_y.len()).filter(|&j| fold_y[j] == fold).collect();
            let run = propagate_inter(&gx.similarity, &gy.similarity, &z, &c.params(&input.base_params))
                .and_then(|out| evaluate_map_on(&out.field, labels_x, labels_y, &test_x, &test_y, Direction::Both));
            match run {
                Ok(r) => Ok(FoldRow {
                    config: ci,
                    fold,
                    map_image_query: r.map_image_query.unwrap_or(0.0),
                    map_text_query: r.map_text_query.unwrap_or(0.0),
                    map_average: r.map_average,
                }),
                Err(e @ Error::InvalidInput(_)) => Err(e.to_string()),
                Err(e) => {
                    warn!("config {ci} fold {fold} failed: {e}");
                    Err(e.to_string())
                }
            }
        })
        .collect();

    let mut folds = Vec::new();
    let mut failures = Vec::new();
    let mut sums = vec![Some(0.0); configs.len()];
    for ((ci, fold), outcome) in cells.into_iter().zip(outcomes) {
        match outcome {
            Ok(row) => {
                if let Some(s) = sums[ci].as_mut() {
                    *s += row.map_average;
                }
                folds.push(row);
            }
            Err(msg) => {
                sums[ci] = None;
                failures.push((ci, fold, msg));
            }
        }
    }
    let scores: Vec<Option<f64>> = sums.into_iter().map(|s| s.map(|s| s / input.folds as f64)).collect();
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = s {
            if best.is_none_or(|b| *s > scores[b].expect("scored")) {
                best = Some(i);
            }
        }
    }
    let best = best.ok_or_else(|| {
        invalid(format!(
            "every grid config failed; first failure: {}",
            failures.first().map(|f| f.2.as_str()).unwrap_or("none")
        ))
    })?;
    Ok(GridSearchResult { configs, scores, best, folds, failures, fold_x, fold_y })
}

/// MAP of an all-zero field: the ranking falls back entirely to the tie rule.
pub fn tie_baseline(
    labels_x: &[Label],
    labels_y: &[Label],
    test_x: &[usize],
    test_y: &[usize],
) -> Result<RetrievalReport> {
    let f = PropagationField::new(Array2::zeros((labels_x.len(), labels_y.len())))?;
    evaluate_map_on(&f, labels_x, labels_y, test_x, test_y, Direction::Both)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn field(a: Array2<f64>) -> PropagationField {
        PropagationField::new(a).unwrap()
    }

    #[test]
    fn ranks_a_row() {
        let f = field(array![[0.9, -0.1, 0.3]]);
        let r = rank_cross_view(&f, Query::x(0)).unwrap();
        assert_eq!(r.indices().collect::<Vec<_>>(), vec![0, 2, 1]);
    }

    #[test]
    fn equal_scores_keep_index_order() {
        let f = field(Array2::from_elem((4, 5), 0.2));
        let r = rank_cross_view(&f, Query::y(3)).unwrap();
        assert_eq!(r.indices().collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn y_query_matches_x_query_on_transpose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = field(Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0)));
        for j in 0..4 {
            let a = rank_cross_view(&f, Query::y(j)).unwrap();
            let b = rank_cross_view(&f.transpose(), Query::x(j)).unwrap();
            assert_eq!(a.results, b.results);
        }
    }

    #[test]
    fn ranking_ignores_increasing_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let raw = Array2::from_shape_fn((5, 9), |_| (rng.random_range(-4..4) as f64) / 4.0);
        let f = field(raw.clone());
        let g = field(raw.mapv(|v| 2.0 * v + 1.0));
        for i in 0..5 {
            let a: Vec<_> = rank_cross_view(&f, Query::x(i)).unwrap().indices().collect();
            let b: Vec<_> = rank_cross_view(&g, Query::x(i)).unwrap().indices().collect();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn out_of_range_query() {
        let f = field(Array2::zeros((2, 3)));
        assert!(rank_cross_view(&f, Query::x(2)).is_err());
        assert!(rank_cross_view(&f, Query::y(3)).is_err());
    }

    #[test]
    fn average_precision_examples() {
        let ranked = |n: usize| RankedList { query: Query::x(0), results: (0..n).map(|i| (i, -(i as f64))).collect() };
        assert_eq!(average_precision(&ranked(3), &[0]).unwrap(), 1.0);
        assert_eq!(average_precision(&ranked(3), &[0, 2]).unwrap(), 5.0 / 6.0);
        assert_eq!(average_precision(&ranked(7), &[6]).unwrap(), 1.0 / 7.0);
        assert!(matches!(average_precision(&ranked(3), &[]), Err(Error::UndefinedAveragePrecision)));
        assert!(average_precision(&ranked(3), &[5]).is_err());
    }

    #[test]
    fn long_lists_fall_back_to_floating_point() {
        let n = 400;
        let ranked = RankedList { query: Query::x(0), results: (0..n).map(|i| (i, 0.0)).collect() };
        let relevant: Vec<usize> = (0..n).filter(|i| i % 3 == 2).collect();
        let ap = average_precision(&ranked, &relevant).unwrap();
        let direct: f64 = relevant.iter().enumerate().map(|(h, &r)| (h + 1) as f64 / (r + 1) as f64).sum::<f64>()
            / relevant.len() as f64;
        assert!((ap - direct).abs() < 1e-12);
        assert!((ap - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn perfect_when_relevant_lead() {
        let ranked = RankedList { query: Query::x(0), results: (0..6).map(|i| (i, 0.0)).collect() };
        assert_eq!(average_precision(&ranked, &[0, 1, 2]).unwrap(), 1.0);
        assert!(average_precision(&ranked, &[0, 1, 3]).unwrap() < 1.0);
    }

    fn block_field(lx: &[Label], ly: &[Label]) -> PropagationField {
        field(Array2::from_shape_fn((lx.len(), ly.len()), |(i, j)| if lx[i] == ly[j] { 1.0 } else { -1.0 }))
    }

    #[test]
    fn block_field_is_perfect() {
        let lx = [0, 1, 2, 0, 1];
        let ly = [2, 2, 0, 1, 0, 1];
        let r = evaluate_map(&block_field(&lx, &ly), &lx, &ly, Direction::Both).unwrap();
        assert_eq!(r.map_image_query, Some(1.0));
        assert_eq!(r.map_text_query, Some(1.0));
        assert_eq!(r.map_average, 1.0);
        assert_eq!(r.per_query_ap.len(), 11);
    }

    #[test]
    fn zero_field_equals_identity_ordering() {
        let lx = [0, 1, 1, 0, 2];
        let ly = [1, 0, 0, 2];
        let r = evaluate_map(&field(Array2::zeros((5, 4))), &lx, &ly, Direction::TextQuery).unwrap();
        // text query from class 0 sees gallery classes [1, 0, 0, 2]: relevant at ranks 2, 3
        let class0 = (1.0 / 2.0 + 2.0 / 3.0) / 2.0;
        let class1 = 1.0;
        let class2 = 1.0 / 4.0;
        let expected = (class0 + class1 + class1 + class0 + class2) / 5.0;
        assert!((r.map_text_query.unwrap() - expected).abs() < 1e-15);
        assert_eq!(r.map_image_query, None);
        assert_eq!(r.map_average, r.map_text_query.unwrap());
    }

    #[test]
    fn random_field_two_balanced_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 400;
        let lx: Vec<Label> = (0..n).map(|i| (i % 2) as Label).collect();
        let ly = lx.clone();
        let f = field(Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0)));
        let r = evaluate_map(&f, &lx, &ly, Direction::Both).unwrap();
        assert!((r.map_average - 0.5).abs() < 0.05, "{}", r.map_average);
    }

    #[test]
    fn missing_class_is_skipped() {
        let lx = [0, 1];
        let ly = [0, 0];
        let r = evaluate_map(&field(Array2::zeros((2, 2))), &lx, &ly, Direction::TextQuery).unwrap();
        assert_eq!(r.skipped, 1);
        assert_eq!(r.per_query_ap.len(), 1);
    }

    #[test]
    fn gallery_permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let lx: Vec<Label> = (0..12).map(|_| rng.random_range(0..3)).collect();
        let ly: Vec<Label> = (0..10).map(|_| rng.random_range(0..3)).collect();
        // distinct scores so the tie rule never fires
        let mut vals: Vec<f64> = (0..120).map(|v| v as f64 / 120.0).collect();
        vals.shuffle(&mut rng);
        let f = Array2::from_shape_vec((12, 10), vals).unwrap();
        let mut perm: Vec<usize> = (0..10).collect();
        perm.shuffle(&mut rng);
        let fp = Array2::from_shape_fn((12, 10), |(i, j)| f[[i, perm[j]]]);
        let lyp: Vec<Label> = perm.iter().map(|&p| ly[p]).collect();
        let a = evaluate_map(&field(f), &lx, &ly, Direction::Both).unwrap();
        let b = evaluate_map(&field(fp), &lx, &lyp, Direction::Both).unwrap();
        assert!((a.map_average - b.map_average).abs() < 1e-12);
    }

    #[test]
    fn folds_are_stratified_and_reproducible() {
        let labels: Vec<Label> = (0..50).map(|i| (i % 5) as Label).collect();
        let a = stratified_folds(&labels, 5, 3).unwrap();
        assert_eq!(a, stratified_folds(&labels, 5, 3).unwrap());
        for fold in 0..5 {
            for class in 0..5 {
                let count = (0..50).filter(|&i| a[i] == fold && labels[i] == class).count();
                assert_eq!(count, 2);
            }
        }
        assert!(stratified_folds(&labels, 1, 0).is_err());
        assert!(stratified_folds(&labels[..3], 5, 0).is_err());
    }

    #[test]
    fn grid_order() {
        let axes = GridAxes {
            construction: vec![Construction::Knn],
            k: vec![3, 5],
            alpha_x: vec![0.1, 0.2],
            alpha_y: None,
            beta: vec![0.5],
        };
        let c = axes.configs();
        assert_eq!(c.len(), 4);
        assert_eq!((c[1].k, c[1].alpha_x, c[1].alpha_y), (3, 0.2, 0.2));
        assert_eq!(c[2].k, 5);
        assert_eq!(GridAxes::default().configs().len(), 48);
    }
}
