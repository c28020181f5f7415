//! `rashomon` — select, audit, report and replay single cells.
//!
//! Exit status: 0 clean, 2 completed with warnings, 1 failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rashomon_core::config::{Pairing, TopJMode};
use rashomon_core::report::{self, Envelope, SelectionArtifact, TableFormat};
use rashomon_core::{AuditConfig, CellStatus, Family, MasMode, PValueMethod, SubsampleMode};

const WORKERS_ENV: &str = "RASHOMON_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "rashomon", version, about = "Explanation reliability audit over a Rashomon set of classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Tune every family, rank by cross-validated kappa and write the selection table.
    Select {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run selection (or reuse one), the sample-size sweep, similarity series and correlation tests.
    Audit {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output run directory.
        #[arg(long, required_unless_present = "cell")]
        out: Option<PathBuf>,
        /// Reuse the selection.json of an earlier `select` or `audit`.
        #[arg(long)]
        selection: Option<PathBuf>,
        /// Re-run exactly one cell, e.g. `model=lr,s=64,fold=3`, and print it.
        #[arg(long)]
        cell: Option<String>,
    },
    /// Re-run one cell and print it as JSON.
    Cell {
        #[command(flatten)]
        config: ConfigArgs,
        /// Cell coordinates, e.g. `model=lr,s=64,fold=3`.
        spec: String,
        /// Take config and selection from this run directory.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Write to a file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit delimited tables and plot-data bundles from one or more run directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Tsv,
}

/// Flags mirroring the configuration file. Anything given here overrides `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Delimited data file (split into train/test unless --test-data is given).
    #[arg(long, help_heading = "Data")]
    data: Option<PathBuf>,
    #[arg(long, help_heading = "Data")]
    test_data: Option<PathBuf>,
    /// Use the planted-importance synthetic dataset.
    #[arg(long, help_heading = "Data")]
    synthetic: bool,
    #[arg(long, help_heading = "Data")]
    synthetic_n: Option<usize>,
    #[arg(long, help_heading = "Data")]
    synthetic_k: Option<usize>,
    #[arg(long, help_heading = "Data")]
    synthetic_seed: Option<u64>,
    #[arg(long, help_heading = "Data")]
    label: Option<String>,
    #[arg(long, help_heading = "Data")]
    delimiter: Option<char>,
    #[arg(long, help_heading = "Data")]
    positive_label: Option<String>,
    #[arg(long, help_heading = "Data")]
    negative_label: Option<String>,
    #[arg(long, help_heading = "Data")]
    impute_mean: bool,
    #[arg(long, help_heading = "Data")]
    one_hot: bool,
    #[arg(long, help_heading = "Data")]
    test_fraction: Option<f64>,

    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Comma-separated families, e.g. `lr,svm,dt`.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<String>>,
    /// Random-search draws per family.
    #[arg(long)]
    budget: Option<usize>,

    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', help_heading = "Grid")]
    sizes: Option<Vec<usize>>,
    /// nested | independent
    #[arg(long, help_heading = "Grid")]
    subsample: Option<String>,

    /// Background rows B.
    #[arg(long, help_heading = "Attribution")]
    background: Option<usize>,
    #[arg(long, help_heading = "Attribution")]
    mean_background: bool,
    #[arg(long, help_heading = "Attribution")]
    nsamples: Option<usize>,
    #[arg(long, help_heading = "Attribution")]
    enumeration_threshold: Option<usize>,
    #[arg(long, help_heading = "Attribution")]
    explain_rows: Option<usize>,

    /// Comma-separated j values for top-j similarity.
    #[arg(long, value_delimiter = ',', help_heading = "Similarity")]
    top_j: Option<Vec<usize>>,
    /// group | scalar
    #[arg(long, help_heading = "Similarity")]
    mas: Option<String>,
    /// fold-average | per-fold
    #[arg(long, help_heading = "Similarity")]
    pairing: Option<String>,
    /// population | per-instance
    #[arg(long, help_heading = "Similarity")]
    top_j_mode: Option<String>,

    #[arg(long, help_heading = "Statistics")]
    alpha: Option<f64>,
    /// auto | t-dist | exact
    #[arg(long, help_heading = "Statistics")]
    p_value: Option<String>,
    /// Skip the bagging ensemble.
    #[arg(long)]
    no_bagging: bool,
}

fn kebab<T: serde::de::DeserializeOwned>(flag: &str, value: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| anyhow!("--{flag}: unsupported value `{value}`"))
}

impl ConfigArgs {
    fn is_empty(&self) -> bool {
        format!("{self:?}") == format!("{:?}", ConfigArgs::default())
    }

    fn resolve(&self) -> Result<AuditConfig> {
        let mut c = match &self.config {
            Some(p) => AuditConfig::parse_file(p)?,
            None => AuditConfig::default(),
        };
        let d = &mut c.data;
        if let Some(p) = &self.data {
            d.path = Some(p.clone());
            d.synthetic = None;
        }
        if let Some(p) = &self.test_data {
            d.test_path = Some(p.clone());
        }
        let planted_flags = self.synthetic_n.is_some() || self.synthetic_k.is_some() || self.synthetic_seed.is_some();
        if self.synthetic || planted_flags {
            if self.data.is_some() {
                bail!("--data and --synthetic are mutually exclusive");
            }
            let mut spec = d.synthetic.take().unwrap_or_default();
            if let Some(n) = self.synthetic_n {
                spec.n = n;
            }
            if let Some(k) = self.synthetic_k {
                spec.k = k;
            }
            if let Some(s) = self.synthetic_seed {
                spec.seed = s;
            }
            d.synthetic = Some(spec);
            d.path = None;
            d.test_path = None;
        }
        if let Some(v) = &self.label {
            d.label_column = v.clone();
        }
        if let Some(v) = self.delimiter {
            d.delimiter = v;
        }
        if let Some(v) = &self.positive_label {
            d.positive_label = Some(v.clone());
        }
        if let Some(v) = &self.negative_label {
            d.negative_label = Some(v.clone());
        }
        d.impute_mean |= self.impute_mean;
        d.one_hot |= self.one_hot;
        if let Some(v) = self.test_fraction {
            d.test_fraction = v;
        }

        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.top_k {
            c.top_k = v;
        }
        if let Some(v) = self.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = &self.families {
            c.families = v.iter().map(|f| f.trim().parse::<Family>()).collect::<Result<_, _>>()?;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        if let Some(v) = &self.sizes {
            c.grid.sizes = Some(v.clone());
        }
        if let Some(v) = &self.subsample {
            c.grid.subsample = kebab::<SubsampleMode>("subsample", v)?;
        }
        if let Some(v) = self.background {
            c.shap.background = v;
        }
        c.shap.mean_background |= self.mean_background;
        if let Some(v) = self.nsamples {
            c.shap.nsamples = v;
        }
        if let Some(v) = self.enumeration_threshold {
            c.shap.enumeration_threshold = v;
        }
        if let Some(v) = self.explain_rows {
            c.shap.explain_rows = Some(v);
        }
        if let Some(v) = &self.top_j {
            c.similarity.top_j = v.clone();
        }
        if let Some(v) = &self.mas {
            c.similarity.mas = kebab::<MasMode>("mas", v)?;
        }
        if let Some(v) = &self.pairing {
            c.similarity.pairing = kebab::<Pairing>("pairing", v)?;
        }
        if let Some(v) = &self.top_j_mode {
            c.similarity.top_j_mode = kebab::<TopJMode>("top-j-mode", v)?;
        }
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = &self.p_value {
            c.p_value = kebab::<PValueMethod>("p-value", v)?;
        }
        if self.no_bagging {
            c.bagging = false;
        }
        c.validate()?;
        Ok(c)
    }
}

/// `model=lr,s=64,fold=3`
#[derive(Debug, PartialEq)]
struct CellSpec {
    model: String,
    size: usize,
    fold: usize,
}

fn parse_cell(text: &str) -> Result<CellSpec> {
    let (mut model, mut size, mut fold) = (None, None, None);
    for part in text.split(',') {
        let (k, v) = part.split_once('=').ok_or_else(|| anyhow!("cell spec `{text}`: expected key=value, got `{part}`"))?;
        let v = v.trim();
        match k.trim() {
            "model" => model = Some(v.to_string()),
            "s" | "size" => size = Some(v.parse().with_context(|| format!("cell size `{v}`"))?),
            "fold" => fold = Some(v.parse().with_context(|| format!("cell fold `{v}`"))?),
            other => bail!("cell spec `{text}`: unknown key `{other}`"),
        }
    }
    match (model, size, fold) {
        (Some(model), Some(size), Some(fold)) => Ok(CellSpec { model, size, fold }),
        _ => bail!("cell spec `{text}` needs model=, s= and fold="),
    }
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => bail!("{WORKERS_ENV}={v} is not a positive integer"),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load_selection(path: &Path, cfg: &AuditConfig) -> Result<SelectionArtifact> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let env: Envelope<SelectionArtifact> = report::parse_artifact(&text, &path.display().to_string(), "selection")?;
    if env.config_hash != cfg.hash() {
        log::warn!("{} was produced under a different config; reusing its selected models", path.display());
    }
    Ok(env.data)
}

fn print_warnings(warnings: &[String]) -> Status {
    for w in warnings {
        eprintln!("warning: {w}");
    }
    if warnings.is_empty() {
        Status::Clean
    } else {
        Status::Warnings
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Clean,
    Warnings,
}

fn emit_cell(cfg: &AuditConfig, selection: &SelectionArtifact, spec: &CellSpec, out: Option<&Path>) -> Result<Status> {
    let output = report::run_cell(cfg, selection, &spec.model, spec.size, spec.fold)?;
    let text = Envelope::new(&cfg.hash(), "cell", &output).to_json();
    match out {
        Some(p) => std::fs::write(p, &text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(if output.cell.status == CellStatus::Ok {
        Status::Clean
    } else {
        print_warnings(&[format!("cell status: {:?}", output.cell.status)])
    })
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Select { config, out } => {
            let cfg = config.resolve()?;
            let sel = report::run_select(&cfg, &out, workers()?)?;
            eprintln!("selected: {}", sel.top_ids().join(", "));
            let warnings: Vec<String> =
                sel.result.failures.iter().map(|f| format!("family {} failed: {}", f.family, f.reason)).collect();
            Ok(print_warnings(&warnings))
        }
        Command::Audit { config, out, selection, cell } => {
            let cfg = config.resolve()?;
            let selection = selection.map(|p| load_selection(&p, &cfg)).transpose()?;
            if let Some(c) = cell {
                let spec = parse_cell(&c)?;
                let sel = match selection {
                    Some(s) => s,
                    None => {
                        let (d, split) = report::prepare_data(&cfg)?;
                        report::build_pool(workers()?)?.install(|| report::run_selection(&cfg, &d, &split))?
                    }
                };
                return emit_cell(&cfg, &sel, &spec, out.as_deref().map(|d| d.join("cell.json")).as_deref());
            }
            let out = out.expect("clap enforces --out");
            let run = report::run_audit(&cfg, &out, workers()?, selection)?;
            eprintln!("{} cells written to {}", run.cells.len(), out.display());
            Ok(print_warnings(run.warnings()))
        }
        Command::Cell { config, spec, run_dir, out } => {
            let spec = parse_cell(&spec)?;
            let (cfg, sel) = match run_dir {
                Some(dir) => {
                    if !config.is_empty() {
                        bail!("--run-dir supplies the configuration; drop the config flags");
                    }
                    let run = report::load_run(&dir)?;
                    let sel = run
                        .selection
                        .ok_or_else(|| anyhow!("{} has no selection.json", dir.display()))?;
                    (run.config, sel)
                }
                None => {
                    let cfg = config.resolve()?;
                    let (d, split) = report::prepare_data(&cfg)?;
                    let sel = report::build_pool(workers()?)?.install(|| report::run_selection(&cfg, &d, &split))?;
                    (cfg, sel)
                }
            };
            emit_cell(&cfg, &sel, &spec, out.as_deref())
        }
        Command::Report { runs, out, format } => {
            let format = match format {
                Format::Csv => TableFormat::Csv,
                Format::Tsv => TableFormat::Tsv,
            };
            let outcome = report::write_report(&runs, &out, format)?;
            eprintln!("{} files written to {}", outcome.files.len(), out.display());
            Ok(print_warnings(&outcome.warnings))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Warnings) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_spec_parses() {
        assert_eq!(parse_cell("model=lr,s=64,fold=3").unwrap(), CellSpec { model: "lr".into(), size: 64, fold: 3 });
        assert_eq!(parse_cell("fold=0, size=16, model=bagging").unwrap().model, "bagging");
        assert!(parse_cell("model=lr,s=64").is_err());
        assert!(parse_cell("model=lr,s=x,fold=1").is_err());
        assert!(parse_cell("model=lr,s=64,fold=1,extra=2").is_err());
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "rashomon", "select", "--out", "x", "--synthetic", "--synthetic-n", "300", "--folds", "4", "--families",
            "lr,nb,dt", "--mas", "scalar", "--pairing", "per-fold", "--p-value", "t-dist", "--no-bagging",
        ])
        .unwrap();
        let Command::Select { config, .. } = cli.command else { panic!() };
        let c = config.resolve().unwrap();
        assert_eq!(c.data.synthetic.as_ref().unwrap().n, 300);
        assert_eq!(c.folds, 4);
        assert_eq!(c.families, vec![Family::Lr, Family::Nb, Family::Dt]);
        assert_eq!(c.similarity.mas, MasMode::Scalar);
        assert_eq!(c.similarity.pairing, Pairing::PerFold);
        assert_eq!(c.p_value, PValueMethod::TDist);
        assert!(!c.bagging);
    }

    #[test]
    fn bad_enum_value_is_named() {
        let args = ConfigArgs { synthetic: true, mas: Some("median".into()), ..Default::default() };
        let e = args.resolve().unwrap_err().to_string();
        assert!(e.contains("--mas") && e.contains("median"), "{e}");
    }
}
