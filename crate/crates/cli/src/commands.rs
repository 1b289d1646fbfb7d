//! Subcommand implementations. Each public `cmd_*` function holds the
//! output-directory lock for its whole run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use interprop::retrieval::{grid_search, GridSearchInput, GridSearchResult};
use interprop::{
    build_view_graph, constraints_from_labels, evaluate_map_on, intra_constraints_from_labels, propagate_inter,
    ConstraintKind, ConstraintMatrix, Construction, ConvergenceLog, Error, Label, NormalizedSimilarity,
    PropagationField, RetrievalReport, ViewDataset, ViewGraph, WeightMatrix,
};
use log::{info, warn};
use ndarray::Array2;

use crate::artifacts::{Manifest, OutputLock};
use crate::config::{InputKind, RunConfig};
use crate::io;

pub const FIELD_FILE: &str = "field.ipmx";
pub const CONVERGENCE_FILE: &str = "convergence.tsv";
pub const CONSTRAINTS_FILE: &str = "constraints.txt";
pub const REPORT_FILE: &str = "report.tsv";
pub const PER_QUERY_FILE: &str = "per_query_ap.tsv";
pub const COMPARISON_FILE: &str = "comparison.tsv";
pub const BEST_PARAMS_FILE: &str = "best_params.txt";
pub const GRID_FILE: &str = "grid.tsv";
pub const FOLDS_FILE: &str = "folds.tsv";

pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("manifest_{command}.txt"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum View {
    X,
    Y,
}

impl View {
    fn tag(self) -> &'static str {
        match self {
            View::X => "x",
            View::Y => "y",
        }
    }
}

/// Everything read from the configured input files.
struct Inputs {
    x: ViewDataset,
    y: ViewDataset,
    digest_x: String,
    digest_y: String,
    train_x: Vec<usize>,
    train_y: Vec<usize>,
    test_x: Vec<usize>,
    test_y: Vec<usize>,
}

impl Inputs {
    fn view(&self, v: View) -> &ViewDataset {
        match v {
            View::X => &self.x,
            View::Y => &self.y,
        }
    }

    fn train(&self, v: View) -> &[usize] {
        match v {
            View::X => &self.train_x,
            View::Y => &self.train_y,
        }
    }

    fn labels(&self) -> Result<(&[Label], &[Label])> {
        match (self.x.labels.as_deref(), self.y.labels.as_deref()) {
            (Some(a), Some(b)) => Ok((a, b)),
            _ => bail!("labels_x and labels_y are required"),
        }
    }
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let (x, digest_x) = load_view(cfg, cfg.view_x.as_deref(), cfg.labels_x.as_deref(), "view_x")?;
    let (y, digest_y) = load_view(cfg, cfg.view_y.as_deref(), cfg.labels_y.as_deref(), "view_y")?;
    let (train_x, test_x) = split(cfg.train_x.as_deref(), cfg.test_x.as_deref(), x.items)?;
    let (train_y, test_y) = split(cfg.train_y.as_deref(), cfg.test_y.as_deref(), y.items)?;
    Ok(Inputs { x, y, digest_x, digest_y, train_x, train_y, test_x, test_y })
}

fn load_view(cfg: &RunConfig, path: Option<&Path>, labels: Option<&Path>, key: &str) -> Result<(ViewDataset, String)> {
    let path = path.ok_or_else(|| anyhow!("{key} is not set"))?;
    let m = io::read_matrix(path)?;
    ensure!(m.nrows() > 0, "{}: no items", path.display());
    let mut ds = match cfg.input_kind {
        InputKind::Features => ViewDataset::from_features(m),
        InputKind::Affinity => ViewDataset::from_affinity(m),
    };
    if let Some(lp) = labels {
        let l = io::read_labels(lp)?;
        ensure!(l.len() == ds.items, "{}: {} labels for {} items", lp.display(), l.len(), ds.items);
        ds = ds.with_labels(l);
    }
    let mut digest = io::sha256_file(path)?;
    if let Some(lp) = labels {
        digest = io::sha256_str(&format!("{digest}:{}", io::sha256_file(lp)?));
    }
    Ok((ds, digest))
}

/// Training and test items. A missing side is the complement of the other;
/// with neither given, every item is both.
fn split(train: Option<&Path>, test: Option<&Path>, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let complement = |idx: &[usize]| -> Vec<usize> {
        let mut used = vec![false; n];
        idx.iter().for_each(|&i| used[i] = true);
        (0..n).filter(|&i| !used[i]).collect()
    };
    Ok(match (train, test) {
        (Some(a), Some(b)) => (io::read_indices(a, n)?, io::read_indices(b, n)?),
        (Some(a), None) => {
            let tr = io::read_indices(a, n)?;
            let te = complement(&tr);
            (tr, te)
        }
        (None, Some(b)) => {
            let te = io::read_indices(b, n)?;
            (complement(&te), te)
        }
        (None, None) => ((0..n).collect(), (0..n).collect()),
    })
}

/// Inter-view constraints over all items: the explicit file, the
/// label-derived constraints among training items, or their union.
fn inter_constraints(cfg: &RunConfig, inp: &Inputs) -> Result<ConstraintMatrix> {
    let (n, m) = (inp.x.items, inp.y.items);
    let mut parts = Vec::new();
    if let Some(p) = &cfg.constraints {
        parts.push(io::read_constraints(p, n, m, ConstraintKind::Inter)?);
    }
    if cfg.constraints_from_labels {
        let (lx, ly) = inp.labels().context("deriving constraints from labels")?;
        let tx: Vec<Label> = inp.train_x.iter().map(|&i| lx[i]).collect();
        let ty: Vec<Label> = inp.train_y.iter().map(|&j| ly[j]).collect();
        if !tx.is_empty() && !ty.is_empty() {
            let z = constraints_from_labels(&tx, &ty, cfg.max_constraints_per_item, cfg.seed)?;
            parts.push(z.embed(&inp.train_x, &inp.train_y, n, m)?);
        }
    }
    union(parts, n, m, ConstraintKind::Inter)
}

fn intra_constraints(cfg: &RunConfig, inp: &Inputs, v: View) -> Result<Option<ConstraintMatrix>> {
    let spec = match v {
        View::X => &cfg.graph_x,
        View::Y => &cfg.graph_y,
    };
    if !spec.construction.needs_intra_constraints() {
        return Ok(None);
    }
    let n = inp.view(v).items;
    let explicit = match v {
        View::X => &cfg.intra_constraints_x,
        View::Y => &cfg.intra_constraints_y,
    };
    if let Some(p) = explicit {
        return Ok(Some(io::read_constraints(p, n, n, ConstraintKind::Intra)?));
    }
    let Some(labels) = inp.view(v).labels.as_deref() else {
        return Ok(None);
    };
    let train = inp.train(v);
    let tl: Vec<Label> = train.iter().map(|&i| labels[i]).collect();
    if tl.is_empty() {
        return Ok(None);
    }
    let salt = if v == View::X { 1 } else { 2 };
    let z = intra_constraints_from_labels(&tl, cfg.max_intra_constraints_per_item, cfg.seed.wrapping_add(salt))?;
    Ok(Some(z.embed(train, train, n, n)?))
}

fn union(parts: Vec<ConstraintMatrix>, rows: usize, cols: usize, kind: ConstraintKind) -> Result<ConstraintMatrix> {
    let mut entries: Vec<_> = parts.iter().flat_map(|z| z.entries().iter().copied()).collect();
    entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
    for w in entries.windows(2) {
        ensure!(
            (w[0].0, w[0].1) != (w[1].0, w[1].1) || w[0].2 == w[1].2,
            "constraint ({}, {}) has conflicting signs in different sources",
            w[0].0,
            w[0].1
        );
    }
    entries.dedup_by_key(|e| (e.0, e.1));
    Ok(ConstraintMatrix::new(rows, cols, kind, entries)?)
}

/// Keeps the rows and columns listed in `rows`/`cols` and reindexes them
/// to their positions in those lists.
fn restrict(z: &ConstraintMatrix, rows: &[usize], cols: &[usize]) -> Result<ConstraintMatrix> {
    let pos = |idx: &[usize], n: usize| {
        let mut p = vec![None; n];
        idx.iter().enumerate().for_each(|(k, &i)| p[i] = Some(k));
        p
    };
    let (pr, pc) = (pos(rows, z.rows()), pos(cols, z.cols()));
    let entries = z.entries().iter().filter_map(|&(i, j, s)| Some((pr[i]?, pc[j]?, s))).collect();
    Ok(ConstraintMatrix::new(rows.len(), cols.len(), z.kind(), entries)?)
}

fn constraint_digest(z: Option<&ConstraintMatrix>) -> String {
    let Some(z) = z else { return "none".into() };
    let mut s = format!("{}x{}", z.rows(), z.cols());
    for &(i, j, sign) in z.entries() {
        let _ = write!(s, ";{i},{j},{}", sign.value());
    }
    io::sha256_str(&s)
}

fn graph_files(v: View) -> [String; 3] {
    let t = v.tag();
    [format!("graph_{t}.weights.txt"), format!("graph_{t}.similarity.txt"), format!("graph_{t}.degree.txt")]
}

fn cache_file(v: View) -> String {
    format!("graph_{}.cache", v.tag())
}

/// Identity of a graph build: inputs, construction settings and, for the
/// constrained constructions, the intra constraints and their parameters.
fn graph_key(cfg: &RunConfig, inp: &Inputs, v: View, intra: Option<&ConstraintMatrix>) -> String {
    let (spec, digest) = match v {
        View::X => (&cfg.graph_x, &inp.digest_x),
        View::Y => (&cfg.graph_y, &inp.digest_y),
    };
    let mut s = format!(
        "view={digest};kind={:?};k={};kernel={};construction={}",
        cfg.input_kind, spec.k, spec.kernel, spec.construction
    );
    if spec.construction.needs_intra_constraints() {
        let _ = write!(s, ";intra={}", constraint_digest(intra));
    }
    if spec.construction == Construction::Cwa {
        let _ = write!(s, ";intra_params={:?}", cfg.intra);
    }
    io::sha256_str(&s)
}

/// Loads a persisted graph if its cache record matches `key` and every file
/// still has the recorded checksum.
fn load_cached_graph(dir: &Path, v: View, key: &str) -> Result<Option<ViewGraph>> {
    let record = dir.join(cache_file(v));
    if !record.exists() {
        return Ok(None);
    }
    let cache = Manifest::read(&record)?;
    if cache.get("key") != Some(key) {
        return Ok(None);
    }
    let files = graph_files(v);
    for f in &files {
        let p = dir.join(f);
        if !p.exists() || cache.get(f).map(str::to_string) != Some(io::sha256_file(&p)?) {
            return Ok(None);
        }
    }
    let weights = WeightMatrix::new(io::read_sparse(&dir.join(&files[0]))?)?;
    let matrix = io::read_sparse(&dir.join(&files[1]))?;
    let degree = io::read_matrix(&dir.join(&files[2]))?.into_iter().collect();
    let similarity = NormalizedSimilarity::from_parts(matrix, degree)?;
    Ok(Some(ViewGraph { weights, similarity }))
}

fn persist_graph(dir: &Path, v: View, key: &str, g: &ViewGraph) -> Result<()> {
    let files = graph_files(v);
    io::write_sparse(&dir.join(&files[0]), g.weights.matrix())?;
    io::write_sparse(&dir.join(&files[1]), g.similarity.matrix())?;
    let degree = Array2::from_shape_vec((g.similarity.len(), 1), g.similarity.degree().to_vec())?;
    io::write_text_matrix(&dir.join(&files[2]), &degree)?;
    let mut cache = Manifest::new("graph-cache");
    cache.set("key", key);
    for f in &files {
        cache.set(f.as_str(), io::sha256_file(&dir.join(f))?);
    }
    cache.write(&dir.join(cache_file(v)))
}

/// Builds (or, with `reuse`, loads) both view graphs into `dir` and records
/// them in `manifest`.
fn graphs(
    cfg: &RunConfig,
    inp: &Inputs,
    dir: &Path,
    reuse: bool,
    manifest: &mut Manifest,
) -> Result<(ViewGraph, ViewGraph)> {
    let mut out = Vec::with_capacity(2);
    for v in [View::X, View::Y] {
        let intra = intra_constraints(cfg, inp, v)?;
        let key = graph_key(cfg, inp, v, intra.as_ref());
        let spec = if v == View::X { &cfg.graph_x } else { &cfg.graph_y };
        let cached = if reuse { load_cached_graph(dir, v, &key)? } else { None };
        let g = match cached {
            Some(g) => {
                info!("view {}: reusing persisted graph (checksums match)", v.tag());
                manifest.set(format!("graph.{}.reused", v.tag()), true);
                g
            }
            None => {
                info!("view {}: building {} graph, k = {}", v.tag(), spec.construction, spec.k);
                let g = build_view_graph(inp.view(v), spec, intra.as_ref(), &cfg.intra)
                    .with_context(|| format!("building the graph of view {}", v.tag()))?;
                persist_graph(dir, v, &key, &g)?;
                manifest.set(format!("graph.{}.reused", v.tag()), false);
                g
            }
        };
        let t = v.tag();
        manifest.set(format!("graph.{t}.key"), &key);
        manifest.set(format!("graph.{t}.items"), g.weights.len());
        manifest.set(format!("graph.{t}.nnz"), g.weights.matrix().nnz());
        manifest.set(format!("graph.{t}.max_row_nnz"), g.weights.max_row_nnz());
        if let Some(z) = &intra {
            manifest.set(format!("graph.{t}.intra_constraints"), z.len());
        }
        for f in graph_files(v) {
            manifest.output(dir, &f)?;
        }
        out.push(g);
    }
    let gy = out.pop().expect("two graphs");
    let gx = out.pop().expect("two graphs");
    Ok((gx, gy))
}

fn base_manifest(command: &str, cfg: &RunConfig, inp: &Inputs) -> Manifest {
    let mut m = Manifest::new(command);
    for (k, v) in cfg.echo() {
        m.set(format!("param.{k}"), v);
    }
    m.set("input.view_x", format!("sha256:{}", inp.digest_x));
    m.set("input.view_y", format!("sha256:{}", inp.digest_y));
    m.set("input.items_x", inp.x.items);
    m.set("input.items_y", inp.y.items);
    m.set("input.train_x", inp.train_x.len());
    m.set("input.train_y", inp.train_y.len());
    m.set("input.test_x", inp.test_x.len());
    m.set("input.test_y", inp.test_y.len());
    m
}

pub fn cmd_build_graph(cfg: &RunConfig) -> Result<()> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let inp = load_inputs(cfg)?;
    let mut manifest = base_manifest("build-graph", cfg, &inp);
    graphs(cfg, &inp, &cfg.output_dir, false, &mut manifest)?;
    manifest.write(&manifest_path(&cfg.output_dir, "build-graph"))?;
    info!("graphs written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn cmd_propagate(cfg: &RunConfig) -> Result<()> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let inp = load_inputs(cfg)?;
    run_propagate(cfg, &inp, &cfg.output_dir)?;
    Ok(())
}

fn run_propagate(cfg: &RunConfig, inp: &Inputs, dir: &Path) -> Result<PropagationField> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = base_manifest("propagate", cfg, inp);
    let (gx, gy) = graphs(cfg, inp, dir, true, &mut manifest)?;
    let z = inter_constraints(cfg, inp)?;
    io::write_constraints(&dir.join(CONSTRAINTS_FILE), &z)?;
    manifest.output(dir, CONSTRAINTS_FILE)?;
    manifest.set("constraints.count", z.len());

    let (field, log) = if z.is_empty() {
        warn!("no inter-view constraints; the propagated field is all zeros");
        (PropagationField::zeros(z.rows(), z.cols()), ConvergenceLog::default())
    } else {
        match propagate_inter(&gx.similarity, &gy.similarity, &z, &cfg.params) {
            Ok(out) => (out.field, out.log),
            Err(Error::NoConvergence { iterations, residual, history }) => {
                write_convergence(&dir.join(CONVERGENCE_FILE), &history, &[])?;
                bail!(
                    "propagation did not converge after {iterations} outer iterations (last residual {residual:e}); \
                     residual history written to {}",
                    dir.join(CONVERGENCE_FILE).display()
                );
            }
            Err(e) => return Err(e.into()),
        }
    };
    io::write_binary_matrix(&dir.join(FIELD_FILE), field.values())?;
    write_convergence(&dir.join(CONVERGENCE_FILE), &log.outer_residuals, &log.inner_iterations)?;
    manifest.set("convergence.outer_iterations", log.outer_iterations());
    manifest.output(dir, FIELD_FILE)?;
    manifest.output(dir, CONVERGENCE_FILE)?;
    manifest.write(&manifest_path(dir, "propagate"))?;
    info!("field written to {} after {} outer iterations", dir.join(FIELD_FILE).display(), log.outer_iterations());
    Ok(field)
}

fn write_convergence(path: &Path, residuals: &[f64], inner: &[(usize, usize)]) -> Result<()> {
    let mut text = String::from("# outer\tresidual\tinner_x\tinner_y\n");
    for (t, r) in residuals.iter().enumerate() {
        let (a, b) = inner.get(t).map_or(("-".to_string(), "-".to_string()), |(a, b)| (a.to_string(), b.to_string()));
        let _ = writeln!(text, "{}\t{r:e}\t{a}\t{b}", t + 1);
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Reads the residual column of a convergence log.
pub fn read_convergence(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let r = l.split('\t').nth(1).ok_or_else(|| anyhow!("malformed convergence line '{l}'"))?;
            Ok(r.parse()?)
        })
        .collect()
}

pub fn method_name(c: Construction) -> String {
    format!("Inter-CP+{}", c.display_name())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

/// Tab-separated MAP table with three decimals.
pub fn format_table(rows: &[(String, &RetrievalReport)]) -> String {
    let mut s = String::from("Method\tImage Query\tText Query\tAverage\n");
    for (name, r) in rows {
        let _ = writeln!(s, "{name}\t{}\t{}\t{:.3}", cell(r.map_image_query), cell(r.map_text_query), r.map_average);
    }
    s
}

fn write_per_query(path: &Path, r: &RetrievalReport) -> Result<()> {
    let mut s = String::from("# query\tap\n");
    for (q, ap) in &r.per_query_ap {
        let _ = writeln!(s, "{q}\t{ap}");
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn evaluate_field(cfg: &RunConfig, inp: &Inputs, field: &PropagationField) -> Result<RetrievalReport> {
    let (lx, ly) = inp.labels().context("evaluation")?;
    Ok(evaluate_map_on(field, lx, ly, &inp.test_x, &inp.test_y, cfg.direction)?)
}

pub fn cmd_evaluate(cfg: &RunConfig, field: Option<&Path>, compare: bool) -> Result<()> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let inp = load_inputs(cfg)?;
    inp.labels().context("evaluation")?;
    let dir = &cfg.output_dir;
    if compare {
        ensure!(field.is_none(), "--field cannot be combined with --compare");
        ensure!(!cfg.compare.is_empty(), "compare lists no constructions");
        let mut reports = Vec::new();
        for &c in &cfg.compare {
            let mut sub = cfg.clone();
            sub.graph_x.construction = c;
            sub.graph_y.construction = c;
            let sub_dir = dir.join(c.to_string());
            info!("comparison run: {}", method_name(c));
            let f = run_propagate(&sub, &inp, &sub_dir)?;
            let r = evaluate_field(&sub, &inp, &f)?;
            write_per_query(&sub_dir.join(PER_QUERY_FILE), &r)?;
            fs::write(sub_dir.join(REPORT_FILE), format_table(&[(method_name(c), &r)]))?;
            reports.push((method_name(c), r));
        }
        let rows: Vec<(String, &RetrievalReport)> = reports.iter().map(|(n, r)| (n.clone(), r)).collect();
        let table = format_table(&rows);
        fs::write(dir.join(COMPARISON_FILE), &table)?;
        for line in table.lines() {
            info!("{line}");
        }
        let mut manifest = base_manifest("evaluate", cfg, &inp);
        manifest.set("compare", cfg.compare.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        manifest.output(dir, COMPARISON_FILE)?;
        return manifest.write(&manifest_path(dir, "evaluate"));
    }

    let path = field.map(Path::to_path_buf).unwrap_or_else(|| dir.join(FIELD_FILE));
    ensure!(path.exists(), "{} not found; run propagate first or pass --field", path.display());
    let field = PropagationField::new(io::read_matrix(&path)?)?;
    ensure!(
        field.rows() == inp.x.items && field.cols() == inp.y.items,
        "field is {}x{} but the views have {} and {} items",
        field.rows(),
        field.cols(),
        inp.x.items,
        inp.y.items
    );
    let r = evaluate_field(cfg, &inp, &field)?;
    let table = format_table(&[(method_name(cfg.graph_x.construction), &r)]);
    fs::write(dir.join(REPORT_FILE), &table)?;
    write_per_query(&dir.join(PER_QUERY_FILE), &r)?;
    for line in table.lines() {
        info!("{line}");
    }
    let mut manifest = base_manifest("evaluate", cfg, &inp);
    manifest.set("input.field", format!("sha256:{}", io::sha256_file(&path)?));
    manifest.set("report.skipped_queries", r.skipped);
    manifest.output(dir, REPORT_FILE)?;
    manifest.output(dir, PER_QUERY_FILE)?;
    manifest.write(&manifest_path(dir, "evaluate"))
}

pub fn cmd_gridsearch(cfg: &RunConfig) -> Result<()> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let inp = load_inputs(cfg)?;
    inp.labels().context("grid search")?;
    let dir = &cfg.output_dir;

    let x = inp.x.subset(&inp.train_x);
    let y = inp.y.subset(&inp.train_y);
    let z = restrict(&inter_constraints(cfg, &inp)?, &inp.train_x, &inp.train_y)?;
    // the grid may include constrained constructions even if the config does not
    let mut with_intra = cfg.clone();
    with_intra.graph_x.construction = Construction::Csr;
    with_intra.graph_y.construction = Construction::Csr;
    let needs_intra = cfg.grid.construction.iter().any(|c| c.needs_intra_constraints());
    let intra = |v: View| -> Result<Option<ConstraintMatrix>> {
        if !needs_intra {
            return Ok(None);
        }
        let train = inp.train(v);
        intra_constraints(&with_intra, &inp, v)?.map(|z| restrict(&z, train, train)).transpose()
    };
    let (intra_x, intra_y) = (intra(View::X)?, intra(View::Y)?);
    let input = GridSearchInput {
        x: &x,
        y: &y,
        z: &z,
        intra_x: intra_x.as_ref(),
        intra_y: intra_y.as_ref(),
        kernel_x: cfg.graph_x.kernel,
        kernel_y: cfg.graph_y.kernel,
        base_params: cfg.params,
        intra_params: cfg.intra,
        folds: cfg.folds,
        seed: cfg.seed,
    };
    info!("grid search over {} configs, {} folds", cfg.grid.configs().len(), cfg.folds);
    let result = grid_search(&input, &cfg.grid)?;
    for (ci, fold, msg) in &result.failures {
        warn!("config {ci} fold {fold}: {msg}");
    }
    write_grid_outputs(dir, &result)?;
    let best = result.best_config();
    info!(
        "best: construction {} k {} alpha_x {} alpha_y {} beta {} (mean MAP {:.3})",
        best.construction,
        best.k,
        best.alpha_x,
        best.alpha_y,
        best.beta,
        result.best_score()
    );
    let mut manifest = base_manifest("gridsearch", cfg, &inp);
    manifest.set("grid.configs", result.configs.len());
    manifest.set("grid.folds", cfg.folds);
    manifest.set("grid.failures", result.failures.len());
    manifest.set("grid.best", result.best);
    for f in [BEST_PARAMS_FILE, GRID_FILE, FOLDS_FILE] {
        manifest.output(dir, f)?;
    }
    manifest.write(&manifest_path(dir, "gridsearch"))
}

fn write_grid_outputs(dir: &Path, r: &GridSearchResult) -> Result<()> {
    let best = r.best_config();
    let mut s = format!(
        "# selected by {}-fold cross-validation, mean MAP {}\n",
        r.fold_x.iter().max().map_or(0, |m| m + 1),
        r.best_score()
    );
    let _ = writeln!(s, "construction = {}", best.construction);
    let _ = writeln!(s, "k = {}", best.k);
    let _ = writeln!(s, "alpha_x = {}", best.alpha_x);
    let _ = writeln!(s, "alpha_y = {}", best.alpha_y);
    let _ = writeln!(s, "beta = {}", best.beta);
    fs::write(dir.join(BEST_PARAMS_FILE), s)?;

    let mut g = String::from("# config\tconstruction\tk\talpha_x\talpha_y\tbeta\tmean_map\n");
    for (i, (c, score)) in r.configs.iter().zip(&r.scores).enumerate() {
        let score = score.map_or_else(|| "NA".to_string(), |v| v.to_string());
        let _ = writeln!(g, "{i}\t{}\t{}\t{}\t{}\t{}\t{score}", c.construction, c.k, c.alpha_x, c.alpha_y, c.beta);
    }
    fs::write(dir.join(GRID_FILE), g)?;

    let mut f = String::from("# config\tfold\timage_query\ttext_query\taverage\n");
    for row in &r.folds {
        let _ = writeln!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            row.config, row.fold, row.map_image_query, row.map_text_query, row.map_average
        );
    }
    fs::write(dir.join(FOLDS_FILE), f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use interprop::Sign;

    fn z(rows: usize, cols: usize, e: &[(usize, usize, Sign)]) -> ConstraintMatrix {
        ConstraintMatrix::new(rows, cols, ConstraintKind::Inter, e.to_vec()).unwrap()
    }

    #[test]
    fn union_merges_and_detects_conflicts() {
        let a = z(2, 2, &[(0, 0, Sign::MustLink)]);
        let b = z(2, 2, &[(0, 0, Sign::MustLink), (1, 0, Sign::CannotLink)]);
        assert_eq!(union(vec![a.clone(), b], 2, 2, ConstraintKind::Inter).unwrap().len(), 2);
        let c = z(2, 2, &[(0, 0, Sign::CannotLink)]);
        assert!(union(vec![a, c], 2, 2, ConstraintKind::Inter).is_err());
    }

    #[test]
    fn restrict_reindexes() {
        let a = z(3, 3, &[(0, 2, Sign::MustLink), (2, 1, Sign::CannotLink), (1, 1, Sign::MustLink)]);
        let r = restrict(&a, &[2, 0], &[1, 2]).unwrap();
        assert_eq!((r.rows(), r.cols(), r.len()), (2, 2, 2));
        assert_eq!(r.get(1, 1), Some(Sign::MustLink));
        assert_eq!(r.get(0, 0), Some(Sign::CannotLink));
    }

    #[test]
    fn table_has_three_decimals() {
        let r = RetrievalReport {
            per_query_ap: vec![],
            map_image_query: Some(0.34251),
            map_text_query: None,
            map_average: 0.34251,
            skipped: 0,
            params: None,
        };
        assert_eq!(format_table(&[("m".into(), &r)]), "Method\tImage Query\tText Query\tAverage\nm\t0.343\t-\t0.343\n");
    }
}
