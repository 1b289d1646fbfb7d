//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are fixed (see
//! [`KEYS`]); unknown keys are rejected so typos do not silently fall back to
//! defaults. Relative paths resolve against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use interprop::retrieval::{Direction, GridAxes};
use interprop::{Construction, GraphSpec, IntraParams, Kernel, PropagationParams};

pub const DEFAULT_SEED: u64 = 42;

/// Every accepted key with a one-line description, in documentation order.
pub const KEYS: &[(&str, &str)] = &[
    ("view_x", "matrix file for view X (text view): features or affinity"),
    ("view_y", "matrix file for view Y (image view)"),
    ("input_kind", "features | affinity (default features)"),
    ("labels_x", "label file for view X"),
    ("labels_y", "label file for view Y"),
    ("train_x", "index file of training items in view X"),
    ("train_y", "index file of training items in view Y"),
    ("test_x", "index file of test items in view X"),
    ("test_y", "index file of test items in view Y"),
    ("constraints", "inter-view constraint file (i j s)"),
    ("constraints_from_labels", "true | false: derive inter constraints from training labels"),
    ("max_constraints_per_item", "cap on label-derived constraints per item"),
    ("intra_constraints_x", "intra-view constraint file for view X"),
    ("intra_constraints_y", "intra-view constraint file for view Y"),
    ("max_intra_constraints_per_item", "cap on label-derived intra constraints per item"),
    ("construction", "knn | sr | cwa | csr"),
    ("k", "neighborhood size for both views"),
    ("k_x", "neighborhood size for view X (overrides k)"),
    ("k_y", "neighborhood size for view Y (overrides k)"),
    ("kernel", "gaussian | gaussian:<sigma> | cosine | precomputed"),
    ("kernel_x", "kernel for view X (overrides kernel)"),
    ("kernel_y", "kernel for view Y (overrides kernel)"),
    ("alpha_x", "propagation coefficient over view X"),
    ("alpha_y", "propagation coefficient over view Y"),
    ("beta", "coupling between the two views"),
    ("inner_tol", "inner relative-change tolerance"),
    ("outer_tol", "outer relative-change tolerance"),
    ("max_inner_iters", "inner iteration cap"),
    ("max_outer_iters", "outer iteration cap"),
    ("intra_alpha", "intra-view propagation coefficient (cwa)"),
    ("intra_beta", "intra-view coupling (cwa)"),
    ("intra_max_outer_iters", "intra-view outer iteration cap (cwa)"),
    ("direction", "both | image_query | text_query"),
    ("compare", "comma-separated constructions for evaluate --compare"),
    ("folds", "cross-validation folds for gridsearch"),
    ("grid_construction", "comma-separated constructions to search"),
    ("grid_k", "comma-separated k values to search"),
    ("grid_alpha_x", "comma-separated alpha_x values to search"),
    ("grid_alpha_y", "comma-separated alpha_y values; unset ties alpha_y to alpha_x"),
    ("grid_beta", "comma-separated beta values to search"),
    ("output_dir", "directory for all outputs"),
    ("seed", "seed for constraint sampling and folds (default 42)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Features,
    Affinity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub view_x: Option<PathBuf>,
    pub view_y: Option<PathBuf>,
    pub input_kind: InputKind,
    pub labels_x: Option<PathBuf>,
    pub labels_y: Option<PathBuf>,
    pub train_x: Option<PathBuf>,
    pub train_y: Option<PathBuf>,
    pub test_x: Option<PathBuf>,
    pub test_y: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub constraints_from_labels: bool,
    pub max_constraints_per_item: Option<usize>,
    pub intra_constraints_x: Option<PathBuf>,
    pub intra_constraints_y: Option<PathBuf>,
    pub max_intra_constraints_per_item: Option<usize>,
    pub graph_x: GraphSpec,
    pub graph_y: GraphSpec,
    pub params: PropagationParams,
    pub intra: IntraParams,
    pub direction: Direction,
    pub compare: Vec<Construction>,
    pub folds: usize,
    pub grid: GridAxes,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// Reads `path` (if any), then applies `overrides` (`key=value` strings)
    /// on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
        let mut raw = BTreeMap::new();
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                parse_into(&text, &mut raw).with_context(|| format!("in config {}", p.display()))?;
                p.parent().map(Path::to_path_buf).unwrap_or_default()
            }
            None => PathBuf::new(),
        };
        let mut overridden = BTreeMap::new();
        for o in overrides {
            let (k, v) = split_pair(o).ok_or_else(|| anyhow!("override '{o}' is not key=value"))?;
            check_key(k)?;
            overridden.insert(k.to_string(), v.to_string());
        }
        Self::from_map(raw, overridden, &base)
    }

    fn from_map(file: BTreeMap<String, String>, cli: BTreeMap<String, String>, base: &Path) -> Result<RunConfig> {
        let get = |k: &str| cli.get(k).or_else(|| file.get(k)).map(String::as_str);
        // command-line paths are taken as given; file paths are relative to the file
        let path = |k: &str| -> Option<PathBuf> {
            if let Some(v) = cli.get(k) {
                return Some(PathBuf::from(v));
            }
            file.get(k).map(|v| {
                let p = PathBuf::from(v);
                if p.is_relative() {
                    base.join(p)
                } else {
                    p
                }
            })
        };
        let parse = |k: &str| -> Result<Option<f64>> { get(k).map(|v| parse_num::<f64>(k, v)).transpose() };
        let parse_usize = |k: &str| -> Result<Option<usize>> { get(k).map(|v| parse_num::<usize>(k, v)).transpose() };

        let input_kind = match get("input_kind").unwrap_or("features") {
            "features" => InputKind::Features,
            "affinity" => InputKind::Affinity,
            other => bail!("input_kind must be 'features' or 'affinity', got '{other}'"),
        };
        let default_kernel = match input_kind {
            InputKind::Features => "gaussian",
            InputKind::Affinity => "precomputed",
        };
        let kernel = |k: &str| -> Result<Kernel> {
            let v = get(k).or_else(|| get("kernel")).unwrap_or(default_kernel);
            v.parse().map_err(|e| anyhow!("{k}: {e}"))
        };
        let construction: Construction = match get("construction") {
            Some(v) => v.parse().map_err(|e| anyhow!("construction: {e}"))?,
            None => Construction::Knn,
        };
        let k = parse_usize("k")?.unwrap_or(10);
        let graph_x = GraphSpec::new(parse_usize("k_x")?.unwrap_or(k), kernel("kernel_x")?, construction);
        let graph_y = GraphSpec::new(parse_usize("k_y")?.unwrap_or(k), kernel("kernel_y")?, construction);

        let d = PropagationParams::default();
        let params = PropagationParams {
            alpha_x: parse("alpha_x")?.unwrap_or(d.alpha_x),
            alpha_y: parse("alpha_y")?.unwrap_or(d.alpha_y),
            beta: parse("beta")?.unwrap_or(d.beta),
            inner_tol: parse("inner_tol")?.unwrap_or(d.inner_tol),
            outer_tol: parse("outer_tol")?.unwrap_or(d.outer_tol),
            max_inner_iters: parse_usize("max_inner_iters")?.unwrap_or(d.max_inner_iters),
            max_outer_iters: parse_usize("max_outer_iters")?.unwrap_or(d.max_outer_iters),
        };
        params.validate()?;
        let di = IntraParams::default();
        let intra = IntraParams {
            alpha: parse("intra_alpha")?.unwrap_or(di.alpha),
            beta: parse("intra_beta")?.unwrap_or(di.beta),
            max_outer_iters: parse_usize("intra_max_outer_iters")?.unwrap_or(di.max_outer_iters),
            ..di
        };
        intra.validate()?;

        let constructions = |k: &str| -> Result<Option<Vec<Construction>>> {
            get(k).map(|v| list(v).map(|s| s.parse().map_err(|e| anyhow!("{k}: {e}"))).collect()).transpose()
        };
        let floats = |k: &str| -> Result<Option<Vec<f64>>> {
            get(k).map(|v| list(v).map(|s| parse_num(k, s)).collect()).transpose()
        };
        let dg = GridAxes::default();
        let grid = GridAxes {
            construction: constructions("grid_construction")?.unwrap_or(vec![construction]),
            k: get("grid_k")
                .map(|v| list(v).map(|s| parse_num("grid_k", s)).collect::<Result<Vec<usize>>>())
                .transpose()?
                .unwrap_or(dg.k),
            alpha_x: floats("grid_alpha_x")?.unwrap_or(dg.alpha_x),
            alpha_y: floats("grid_alpha_y")?,
            beta: floats("grid_beta")?.unwrap_or(dg.beta),
        };

        let flag = |k: &str, default: bool| -> Result<bool> {
            match get(k) {
                None => Ok(default),
                Some("true" | "yes" | "1") => Ok(true),
                Some("false" | "no" | "0") => Ok(false),
                Some(other) => bail!("{k} must be true or false, got '{other}'"),
            }
        };
        let constraints = path("constraints");
        Ok(RunConfig {
            view_x: path("view_x"),
            view_y: path("view_y"),
            input_kind,
            labels_x: path("labels_x"),
            labels_y: path("labels_y"),
            train_x: path("train_x"),
            train_y: path("train_y"),
            test_x: path("test_x"),
            test_y: path("test_y"),
            constraints_from_labels: flag("constraints_from_labels", constraints.is_none())?,
            constraints,
            max_constraints_per_item: parse_usize("max_constraints_per_item")?,
            intra_constraints_x: path("intra_constraints_x"),
            intra_constraints_y: path("intra_constraints_y"),
            max_intra_constraints_per_item: parse_usize("max_intra_constraints_per_item")?,
            graph_x,
            graph_y,
            params,
            intra,
            direction: get("direction").unwrap_or("both").parse()?,
            compare: constructions("compare")?.unwrap_or(Construction::ALL.to_vec()),
            folds: parse_usize("folds")?.unwrap_or(5),
            grid,
            output_dir: path("output_dir").unwrap_or_else(|| PathBuf::from("interprop-out")),
            seed: get("seed").map(|v| parse_num("seed", v)).transpose()?.unwrap_or(DEFAULT_SEED),
        })
    }

    /// Parameter echo for manifests: every effective setting, sorted by key.
    pub fn echo(&self) -> Vec<(String, String)> {
        let p = &self.params;
        let show_path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = vec![
            ("alpha_x".to_string(), p.alpha_x.to_string()),
            ("alpha_y".into(), p.alpha_y.to_string()),
            ("beta".into(), p.beta.to_string()),
            ("construction".into(), self.graph_x.construction.to_string()),
            ("constraints".into(), show_path(&self.constraints)),
            ("constraints_from_labels".into(), self.constraints_from_labels.to_string()),
            ("inner_tol".into(), p.inner_tol.to_string()),
            ("input_kind".into(), format!("{:?}", self.input_kind).to_lowercase()),
            ("intra_alpha".into(), self.intra.alpha.to_string()),
            ("intra_beta".into(), self.intra.beta.to_string()),
            ("k_x".into(), self.graph_x.k.to_string()),
            ("k_y".into(), self.graph_y.k.to_string()),
            ("kernel_x".into(), self.graph_x.kernel.to_string()),
            ("kernel_y".into(), self.graph_y.kernel.to_string()),
            ("max_inner_iters".into(), p.max_inner_iters.to_string()),
            ("max_outer_iters".into(), p.max_outer_iters.to_string()),
            ("outer_tol".into(), p.outer_tol.to_string()),
            ("seed".into(), self.seed.to_string()),
        ];
        out.sort();
        out
    }
}

/// Parses `key = value` lines into `out`, later lines winning.
pub fn parse_into(text: &str, out: &mut BTreeMap<String, String>) -> Result<()> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = split_pair(line).ok_or_else(|| anyhow!("line {}: expected key = value", n + 1))?;
        check_key(k).with_context(|| format!("line {}", n + 1))?;
        out.insert(k.to_string(), v.to_string());
    }
    Ok(())
}

fn split_pair(s: &str) -> Option<(&str, &str)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    (!k.is_empty()).then_some((k, v.trim()))
}

fn check_key(k: &str) -> Result<()> {
    if KEYS.iter().any(|(known, _)| *known == k) {
        Ok(())
    } else {
        bail!("unknown configuration key '{k}'")
    }
}

fn list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim().parse().map_err(|e| anyhow!("{key}: cannot parse '{v}': {e}"))
}
