//! Config-driven experiment suites and their CSV reports.
//!
//! A suite is a base [`SimConfig`] crossed with a list of policy rows and user
//! models. Every (model, row) cell runs all repetitions and writes:
//!
//! * `loss_<model>_<row>.csv`: `round,mean_relative_loss,stddev`
//! * `hist_<model>_<row>.csv`: `bin,mean_papers,stddev` over the final review counts
//! * `reps_<model>_<row>.csv`: per-repetition summary numbers
//!
//! plus a suite-wide `summary.csv` (one row per cell) and `manifest.json`.
//! Numbers are written with six decimals; undefined correlations as `n/a`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::UserModel;
use crate::error::{Error, Result};
use crate::incentive::{AccuracyMap, IncentiveParams};
use crate::metrics::{
    histogram_from_counts, mean_and_stddev, relative_global_loss, RepetitionSummary, SummaryReport,
    BIN_LABELS,
};
use crate::policy::PolicyKind;
use crate::sim::{run_repetitions, SimConfig, SimTrace};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const DEFAULT_ALPHA: f64 = 1.0;

/// A choice criterion with the `α` used both for its boost estimates and for
/// settling bonuses.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub kind: PolicyKind,
    pub alpha: f64,
    /// Whether `alpha` was given explicitly (it then appears in the label).
    pub explicit_alpha: bool,
}

impl PolicyRow {
    pub fn label(&self) -> String {
        if self.explicit_alpha {
            format!("{}-{}", self.kind, self.alpha)
        } else {
            self.kind.to_string()
        }
    }

    /// Parses `kind` or `kind:alpha`.
    fn parse(entry: &str, default_alpha: f64) -> std::result::Result<Self, String> {
        let (kind, alpha) = match entry.split_once(':') {
            Some((k, a)) => {
                let alpha: f64 = a
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad alpha `{a}` in `{entry}`"))?;
                (k.trim(), Some(alpha))
            }
            None => (entry.trim(), None),
        };
        let kind: PolicyKind = kind.parse()?;
        let row = PolicyRow {
            kind,
            alpha: alpha.unwrap_or(default_alpha),
            explicit_alpha: alpha.is_some(),
        };
        if !(row.alpha > 0.0 && row.alpha.is_finite()) {
            return Err(format!("alpha must be > 0 in `{entry}`"));
        }
        Ok(row)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    pub base: SimConfig,
    pub policies: Vec<PolicyRow>,
    pub user_models: Vec<UserModel>,
    pub output_dir: Option<PathBuf>,
    /// Correlate reputation with `1/σ^t` (true) or with `σ^t` (false).
    pub competence_inverse: bool,
}

impl ExperimentSuite {
    /// One (model, row) cell as a runnable config.
    pub fn cell_config(&self, model: UserModel, row: &PolicyRow) -> Result<SimConfig> {
        let base = &self.base;
        Ok(SimConfig {
            incentive: IncentiveParams::new(
                row.alpha,
                base.incentive.max_grade(),
                base.incentive.accuracy_map(),
            )?,
            user_model: model,
            policy: row.kind,
            ..base.clone()
        })
    }

    pub fn cells(&self) -> Vec<(UserModel, PolicyRow)> {
        self.user_models
            .iter()
            .flat_map(|&m| self.policies.iter().map(move |&r| (m, r)))
            .collect()
    }

    /// Restricts the suite to a single cell.
    pub fn select(&mut self, policy: Option<&str>, model: Option<UserModel>) -> Result<()> {
        if let Some(p) = policy {
            let row = PolicyRow::parse(p, self.base.incentive.alpha())
                .map_err(|reason| config_err("policy", reason))?;
            self.policies = vec![row];
        }
        if let Some(m) = model {
            self.user_models = vec![m];
        }
        Ok(())
    }
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn default_policies(alpha: f64) -> Vec<PolicyRow> {
    let plain = |kind| PolicyRow {
        kind,
        alpha,
        explicit_alpha: false,
    };
    let selfish = |alpha| PolicyRow {
        kind: PolicyKind::Selfish,
        alpha,
        explicit_alpha: true,
    };
    vec![
        plain(PolicyKind::Random),
        plain(PolicyKind::Accuracy),
        plain(PolicyKind::Informativeness),
        plain(PolicyKind::Optimal),
        selfish(0.1),
        selfish(1.0),
    ]
}

const KNOWN_KEYS: &[&str] = &[
    "num_users",
    "num_papers",
    "papers_per_user",
    "rounds",
    "reps",
    "seed",
    "max_grade",
    "default_rating",
    "alpha",
    "accuracy_map",
    "policy",
    "user_model",
    "q_true_mean",
    "q_true_stddev",
    "mean_error",
    "typical_error_low",
    "typical_error_high",
    "paper_error_spread",
    "error_cap",
    "snapshot_every",
    "competence_inverse",
    "observation_includes_default",
    "output_dir",
];

struct Doc(toml::Table);

impl Doc {
    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Float(f)) if f.is_finite() => Ok(*f),
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(_) => Err(config_err(key, "expected a finite number")),
        }
    }

    fn count(&self, key: &str, default: u64) -> Result<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(*i as u64),
            Some(_) => Err(config_err(key, "expected a non-negative integer")),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(config_err(key, "expected true or false")),
        }
    }

    fn strings(&self, key: &str) -> Result<Option<Vec<String>>> {
        let as_str = |v: &toml::Value| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| config_err(key, "expected a string or a list of strings"))
        };
        match self.0.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(items)) if !items.is_empty() => {
                items.iter().map(as_str).collect::<Result<Vec<_>>>().map(Some)
            }
            Some(toml::Value::Array(_)) => Err(config_err(key, "list must not be empty")),
            Some(v) => Ok(Some(vec![as_str(v)?])),
        }
    }
}

/// Parses a TOML suite description; absent keys take the built-in defaults.
pub fn parse_config(text: &str) -> Result<ExperimentSuite> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| config_err("<document>", e.message().to_string()))?;
    if let Some(key) = table.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(config_err(key, "unknown key"));
    }
    let doc = Doc(table);
    let mut base = SimConfig::default();
    let pop = &mut base.population;

    pop.num_users = doc.count("num_users", pop.num_users as u64)? as usize;
    pop.num_papers = doc.count("num_papers", pop.num_papers as u64)? as usize;
    pop.papers_per_user = doc.count("papers_per_user", pop.papers_per_user as u64)? as usize;
    pop.max_grade = doc.float("max_grade", pop.max_grade)?;
    pop.default_rating = doc.float("default_rating", pop.default_rating)?;
    pop.q_true_mean = doc.float("q_true_mean", pop.q_true_mean)?;
    pop.q_true_stddev = doc.float("q_true_stddev", pop.q_true_stddev)?;
    pop.typical_error_low = doc.float("typical_error_low", pop.typical_error_low)?;
    pop.typical_error_high = doc.float("typical_error_high", pop.typical_error_high)?;
    let midpoint = 0.5 * (pop.typical_error_low + pop.typical_error_high);
    pop.mean_error = doc.float("mean_error", midpoint)?;
    pop.paper_error_spread = doc.float("paper_error_spread", pop.paper_error_spread)?;
    pop.error_cap = doc.float("error_cap", pop.error_cap)?;

    base.rounds = doc.count("rounds", base.rounds)?;
    base.repetitions = doc.count("reps", base.repetitions as u64)? as usize;
    base.seed = doc.count("seed", base.seed)?;
    base.snapshot_every = doc.count("snapshot_every", base.snapshot_every)?;
    base.observation_includes_default =
        doc.flag("observation_includes_default", base.observation_includes_default)?;

    let alpha = doc.float("alpha", DEFAULT_ALPHA)?;
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(config_err("alpha", format!("must be > 0, got {alpha}")));
    }
    let accuracy_map = match doc.strings("accuracy_map")?.as_deref() {
        None => AccuracyMap::Sigmoid,
        Some([m]) if m == "sigmoid" => AccuracyMap::Sigmoid,
        Some([m]) if m == "linear" => AccuracyMap::Linear,
        Some(_) => return Err(config_err("accuracy_map", "expected \"sigmoid\" or \"linear\"")),
    };
    base.incentive = IncentiveParams::new(alpha, base.population.max_grade, accuracy_map)
        .map_err(|e| config_err("max_grade", e.to_string()))?;

    let policies = match doc.strings("policy")? {
        None => default_policies(alpha),
        Some(entries) => entries
            .iter()
            .map(|e| PolicyRow::parse(e, alpha))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|reason| config_err("policy", reason))?,
    };
    let mut labels: Vec<String> = policies.iter().map(PolicyRow::label).collect();
    labels.sort();
    if labels.windows(2).any(|w| w[0] == w[1]) {
        return Err(config_err("policy", "duplicate policy rows"));
    }

    let user_models = match doc.strings("user_model")? {
        None => vec![UserModel::Model1, UserModel::Model2],
        Some(entries) => entries
            .iter()
            .map(|e| e.parse())
            .collect::<std::result::Result<Vec<UserModel>, _>>()
            .map_err(|reason| config_err("user_model", reason))?,
    };

    let output_dir = doc.strings("output_dir")?.map(|v| PathBuf::from(&v[0]));
    let competence_inverse = doc.flag("competence_inverse", true)?;

    base.validate().map_err(|e| match e {
        Error::InvalidParam { name, reason } => config_err(name, reason),
        other => other,
    })?;

    Ok(ExperimentSuite {
        base,
        policies,
        user_models,
        output_dir,
        competence_inverse,
    })
}

/// Formats a CSV number cell: six decimals, `n/a` when undefined.
pub fn fmt_num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "n/a".to_string(),
    }
}

fn cell_name(model: UserModel, row: &PolicyRow) -> String {
    format!("{}_{}", model.label(), row.label())
}

/// Aggregated results of one (model, row) cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub model: UserModel,
    pub row: PolicyRow,
    /// `(round, mean relative loss, stddev)` across repetitions.
    pub loss_curve: Vec<(u64, f64, f64)>,
    /// Final review-count histogram, `(mean, stddev)` per bin across repetitions.
    pub histogram: Vec<(f64, f64)>,
    pub repetitions: Vec<RepetitionSummary>,
}

impl CellResult {
    pub fn from_traces(
        model: UserModel,
        row: PolicyRow,
        traces: &[SimTrace],
        competence_inverse: bool,
    ) -> Result<Self> {
        let curves = traces
            .iter()
            .map(relative_global_loss)
            .collect::<Result<Vec<_>>>()?;
        let points = curves.first().map_or(0, Vec::len);
        let loss_curve = (0..points)
            .map(|k| {
                let values: Vec<f64> = curves.iter().map(|c| c[k].1).collect();
                let ms = mean_and_stddev(&values).expect("at least one repetition");
                (curves[0][k].0, ms.mean, ms.stddev)
            })
            .collect();

        let hists: Vec<[u32; 13]> = traces
            .iter()
            .map(|t| histogram_from_counts(&t.last().expect("initial snapshot").review_counts))
            .collect();
        let histogram = (0..BIN_LABELS.len())
            .map(|b| {
                let values: Vec<f64> = hists.iter().map(|h| h[b] as f64).collect();
                let ms = mean_and_stddev(&values).expect("at least one repetition");
                (ms.mean, ms.stddev)
            })
            .collect();

        let repetitions = traces
            .iter()
            .map(|t| RepetitionSummary::from_trace(t, competence_inverse))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            row,
            loss_curve,
            histogram,
            repetitions,
        })
    }

    pub fn summary(&self) -> SummaryReport {
        SummaryReport::from_repetitions(self.model.label(), &self.row.label(), &self.repetitions)
    }

    pub fn loss_csv(&self) -> String {
        let mut out = String::from("round,mean_relative_loss,stddev\n");
        for (round, mean, sd) in &self.loss_curve {
            let _ = writeln!(out, "{round},{},{}", fmt_num(Some(*mean)), fmt_num(Some(*sd)));
        }
        out
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin,mean_papers,stddev\n");
        for (label, (mean, sd)) in BIN_LABELS.iter().zip(&self.histogram) {
            let _ = writeln!(out, "{label},{},{}", fmt_num(Some(*mean)), fmt_num(Some(*sd)));
        }
        out
    }

    pub fn repetitions_csv(&self) -> String {
        let mut out = String::from("rep,seed,relative_loss,pearson,spearman,relative_error\n");
        for (k, r) in self.repetitions.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k},{},{},{},{},{}",
                r.seed,
                fmt_num(Some(r.relative_loss)),
                fmt_num(r.pearson),
                fmt_num(r.spearman),
                fmt_num(r.relative_error)
            );
        }
        out
    }
}

pub fn summary_csv(rows: &[SummaryReport]) -> String {
    let mut out = String::from("user_model,policy,loss,pearson,spearman,rel_error,rel_error_stddev\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.user_model,
            r.policy,
            fmt_num(Some(r.relative_loss)),
            fmt_num(r.pearson),
            fmt_num(r.spearman),
            fmt_num(r.relative_error_mean),
            fmt_num(r.relative_error_stddev)
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestCell {
    pub user_model: UserModel,
    pub policy: String,
    pub alpha: f64,
    pub seeds: Vec<u64>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub suite: ExperimentSuite,
    pub cells: Vec<ManifestCell>,
}

/// Runs all cells with the suite's repetitions.
pub fn run_cells(suite: &ExperimentSuite) -> Result<Vec<CellResult>> {
    suite
        .cells()
        .into_par_iter()
        .map(|(model, row)| {
            let config = suite.cell_config(model, &row)?;
            let traces = run_repetitions(&config)?;
            CellResult::from_traces(model, row, &traces, suite.competence_inverse)
        })
        .collect()
}

/// Runs the suite and writes every report into `out_dir`. Returns the paths written.
pub fn run_suite(suite: &ExperimentSuite, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cells = run_cells(suite)?;
    write_outputs(suite, &cells, out_dir)
}

pub fn write_outputs(suite: &ExperimentSuite, cells: &[CellResult], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut manifest_cells = Vec::new();
    for cell in cells {
        let name = cell_name(cell.model, &cell.row);
        let files = [
            (format!("loss_{name}.csv"), cell.loss_csv()),
            (format!("hist_{name}.csv"), cell.histogram_csv()),
            (format!("reps_{name}.csv"), cell.repetitions_csv()),
        ];
        for (file, body) in &files {
            let path = out_dir.join(file);
            fs::write(&path, body)?;
            written.push(path);
        }
        manifest_cells.push(ManifestCell {
            user_model: cell.model,
            policy: cell.row.label(),
            alpha: cell.row.alpha,
            seeds: cell.repetitions.iter().map(|r| r.seed).collect(),
            files: files.into_iter().map(|(f, _)| f).collect(),
        });
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        suite: suite.clone(),
        cells: manifest_cells,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n")?;
    written.push(path);

    written.push(write_report(out_dir)?);
    Ok(written)
}

fn parse_cell(path: &Path, cell: &str) -> Result<Option<f64>> {
    if cell == "n/a" {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| Error::Report {
        path: path.display().to_string(),
        reason: format!("bad number `{cell}`"),
    })
}

fn read_repetitions(path: &Path) -> Result<Vec<RepetitionSummary>> {
    let text = fs::read_to_string(path)?;
    let bad = |reason: String| Error::Report {
        path: path.display().to_string(),
        reason,
    };
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, got {}", cols.len())));
            }
            Ok(RepetitionSummary {
                seed: cols[1]
                    .parse()
                    .map_err(|_| bad(format!("bad seed `{}`", cols[1])))?,
                relative_loss: parse_cell(path, cols[2])?
                    .ok_or_else(|| bad("missing relative loss".into()))?,
                pearson: parse_cell(path, cols[3])?,
                spearman: parse_cell(path, cols[4])?,
                relative_error: parse_cell(path, cols[5])?,
            })
        })
        .collect()
}

/// Rebuilds `summary.csv` from the manifest and the per-repetition files in `out_dir`.
pub fn write_report(out_dir: &Path) -> Result<PathBuf> {
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(&manifest_path)?).map_err(|e| Error::Report {
            path: manifest_path.display().to_string(),
            reason: e.to_string(),
        })?;
    let mut rows = Vec::with_capacity(manifest.cells.len());
    for cell in &manifest.cells {
        let reps_file = cell
            .files
            .iter()
            .find(|f| f.starts_with("reps_"))
            .ok_or_else(|| Error::Report {
                path: manifest_path.display().to_string(),
                reason: format!("no repetition file for {}", cell.policy),
            })?;
        let reps = read_repetitions(&out_dir.join(reps_file))?;
        rows.push(SummaryReport::from_repetitions(
            cell.user_model.label(),
            &cell.policy,
            &reps,
        ));
    }
    let path = out_dir.join(SUMMARY_FILE);
    fs::write(&path, summary_csv(&rows))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let suite = parse_config("").unwrap();
        let pop = &suite.base.population;
        assert_eq!(
            (pop.num_users, pop.num_papers, pop.papers_per_user),
            (1000, 1000, 100)
        );
        assert_eq!(suite.base.rounds, 5000);
        assert_eq!(suite.base.repetitions, 10);
        assert_eq!(pop.max_grade, 10.0);
        assert_eq!(pop.default_rating, 0.0);
        assert_eq!(pop.mean_error, 3.0);
        assert_eq!(suite.base.snapshot_every, 100);
        assert!(suite.competence_inverse);
        assert!(suite.base.observation_includes_default);
        assert_eq!(suite.base.incentive.alpha(), 1.0);
        assert_eq!(suite.policies.len(), 6);
        assert_eq!(suite.user_models, vec![UserModel::Model1, UserModel::Model2]);
        let labels: Vec<String> = suite.policies.iter().map(PolicyRow::label).collect();
        assert_eq!(
            labels,
            [
                "random",
                "accuracy",
                "informativeness",
                "optimal",
                "selfish-0.1",
                "selfish-1"
            ]
        );
    }

    #[test]
    fn zero_rounds_accepted() {
        assert_eq!(parse_config("rounds = 0").unwrap().base.rounds, 0);
    }

    fn err_key(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(err_key("alpha = -1"), "alpha");
        assert_eq!(err_key("colour = 3"), "colour");
        assert_eq!(err_key("rounds = -5"), "rounds");
        assert_eq!(err_key("policy = \"greedy\""), "policy");
        assert_eq!(err_key("policy = \"selfish:-2\""), "policy");
        assert_eq!(err_key("user_model = [\"model7\"]"), "user_model");
        assert_eq!(err_key("papers_per_user = 5000"), "papers_per_user");
        assert_eq!(err_key("mean_error = 1.5"), "mean_error");
        assert_eq!(err_key("competence_inverse = 1"), "competence_inverse");
        assert_eq!(err_key("policy = [\"random\", \"random\"]"), "policy");
        assert_eq!(err_key("accuracy_map = \"cubic\""), "accuracy_map");
        assert_eq!(err_key("reps = 0"), "reps");
    }

    #[test]
    fn policy_rows_and_models() {
        let suite = parse_config(
            "alpha = 0.5\npolicy = [\"selfish\", \"selfish:2\", \"optimal\"]\nuser_model = \"model2\"",
        )
        .unwrap();
        let rows = &suite.policies;
        assert_eq!(rows[0].alpha, 0.5);
        assert_eq!(rows[0].label(), "selfish");
        assert_eq!(rows[1].alpha, 2.0);
        assert_eq!(rows[1].label(), "selfish-2");
        assert_eq!(suite.user_models, vec![UserModel::Model2]);
        let cfg = suite.cell_config(UserModel::Model2, &rows[1]).unwrap();
        assert_eq!(cfg.incentive.alpha(), 2.0);
        assert_eq!(cfg.policy, PolicyKind::Selfish);
    }

    #[test]
    fn mean_error_follows_range() {
        let suite = parse_config("typical_error_low = 1.0\ntypical_error_high = 2.0").unwrap();
        assert_eq!(suite.base.population.mean_error, 1.5);
        let suite = parse_config("typical_error_low = 1.0\ntypical_error_high = 3.0").unwrap();
        assert_eq!(suite.base.population.mean_error, 2.0);
    }

    #[test]
    fn number_formatting() {
        assert_eq!(fmt_num(Some(1.0)), "1.000000");
        assert_eq!(fmt_num(Some(0.1234567)), "0.123457");
        assert_eq!(fmt_num(None), "n/a");
        assert_eq!(fmt_num(Some(f64::NAN)), "n/a");
    }
}
