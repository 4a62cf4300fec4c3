use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use gopctl_core::backend::{export_trace, Backend, MockBackend, MockParams, TraceBackend};
use gopctl_core::eval::{bd_rate_with, curve_from_run, gnuplot_data, write_curve_csv, BdFit, BdRateReport, CurvePoint};
use gopctl_core::search::{self, dfs_optimal_parallel, evaluate, memoized_dfs};
use gopctl_core::seed::{stream_seed, Stream};
use gopctl_core::selector::{
    select_structure, synthetic_dataset, train_selector, PreAnalysisInput, SLogit, SelectorWeights, TemperatureSchedule,
    TrainConfig, TrainItem,
};
use gopctl_core::{divgop, GopStructure, RateMetricCurve, SearchResult};

use crate::config::BackendArgs;
use crate::report::{write_json, write_text, SearchReport};
use crate::{Globals, UsageError};

const DEFAULT_GOP: usize = 10;
const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dfs,
    Brute,
    Memo,
    Greedy,
    Divgop,
    #[value(name = "all_p", alias = "all-p")]
    AllP,
    Select,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value = "dfs")]
    pub method: Method,
    /// GoP size including the I frame [default: 10]
    #[arg(long)]
    pub gop: Option<usize>,
    /// Weight of the task loss [default: 0.5]
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Pre-analysis manifest (method select)
    #[arg(long)]
    pub analysis: Option<PathBuf>,
    /// Selector weights (method select)
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Mini-GoP size for method select [default: the GoP size]
    #[arg(long)]
    pub mini: Option<usize>,
    /// Report JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-frame CSV path
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn gop_and_lambda(g: &Globals, gop: Option<usize>, lambda: Option<f64>) -> Result<(usize, f64)> {
    let gop = gop.or(g.file.gop).unwrap_or(DEFAULT_GOP);
    let lambda = lambda.or(g.file.lambda).unwrap_or(DEFAULT_LAMBDA);
    if gop < 2 {
        return Err(UsageError(format!("--gop must be at least 2, got {gop}")).into());
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(UsageError(format!("--lambda must be a finite non-negative number, got {lambda}")).into());
    }
    Ok((gop, lambda))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn run_method(
    g: &Globals,
    method: Method,
    backend: &dyn Backend,
    gop: usize,
    lambda: f64,
    selection: Option<(&PreAnalysisInput, &SelectorWeights, usize)>,
) -> Result<SearchResult> {
    let res = match method {
        Method::Dfs => dfs_optimal_parallel(backend, gop, lambda, g.jobs)?,
        Method::Brute => search::brute_force(backend, gop, lambda)?,
        Method::Memo => memoized_dfs(backend, gop, lambda)?,
        Method::Greedy => search::greedy(backend, gop, lambda)?,
        Method::Divgop => evaluate(backend, &divgop(gop)?, lambda)?,
        Method::AllP => evaluate(backend, &GopStructure::all_p(gop)?, lambda)?,
        Method::Select => {
            let (input, weights, mini) = selection.ok_or_else(|| UsageError("method select needs --analysis and --weights".into()))?;
            let (structure, _) = select_structure(input, weights, gop, mini)?;
            evaluate(backend, &structure, lambda)?
        }
    };
    Ok(res)
}

pub fn search(g: &Globals, a: SearchArgs) -> Result<()> {
    let (gop, lambda) = gop_and_lambda(g, a.gop, a.lambda)?;
    let selection = if a.method == Method::Select {
        let (Some(analysis), Some(weights)) = (&a.analysis, &a.weights) else {
            bail!(UsageError("method select needs --analysis and --weights".into()));
        };
        Some((PreAnalysisInput::load_manifest(analysis)?, SelectorWeights::read(weights)?, a.mini.unwrap_or(gop)))
    } else {
        None
    };
    let backend = a.backend.build(&g.file, g.seed, gop)?;
    let start = Instant::now();
    let result = run_method(
        g,
        a.method,
        backend.as_ref(),
        gop,
        lambda,
        selection.as_ref().map(|(i, w, m)| (i, w, *m)),
    )?;
    let report = SearchReport::new(&result, lambda, start.elapsed().as_secs_f64() * 1e3);
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    if let Some(csv) = &a.csv {
        write_text(csv, &report.csv())?;
    }
    println!("{}", report.summary());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Pre-analysis manifest covering the predicted frames
    #[arg(long)]
    pub analysis: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    /// Mini-GoP size [default: the whole GoP]
    #[arg(long)]
    pub mini: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SelectReport {
    structure: String,
    s_logits: Vec<SLogit>,
}

pub fn select(_g: &Globals, a: SelectArgs) -> Result<()> {
    let input = PreAnalysisInput::load_manifest(&a.analysis)?;
    let weights = SelectorWeights::read(&a.weights)?;
    let gop = input.frames.len() + 1;
    let (structure, s_logits) = select_structure(&input, &weights, gop, a.mini.unwrap_or(gop))?;
    let report = SelectReport {
        structure: structure.to_string(),
        s_logits,
    };
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    println!("{}", report.structure);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of synthetic training sequences (ignored with --dataset)
    #[arg(long, default_value_t = 40)]
    pub synthetic: usize,
    /// JSON list of {"analysis": manifest, "trace" | "mock": file}
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// GoP size of synthetic sequences
    #[arg(long, default_value_t = DEFAULT_GOP)]
    pub gop: usize,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_start: f64,
    #[arg(long, default_value_t = 0.3)]
    pub tau_end: f64,
    /// Output weights JSON
    #[arg(long)]
    pub out: PathBuf,
    /// Training log CSV
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetEntry {
    analysis: PathBuf,
    #[serde(default)]
    trace: Option<PathBuf>,
    #[serde(default)]
    mock: Option<PathBuf>,
}

fn load_dataset(path: &Path) -> Result<Vec<TrainItem>> {
    let entries: Vec<DatasetEntry> = read_json(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    entries
        .into_iter()
        .map(|e| {
            let input = PreAnalysisInput::load_manifest(&dir.join(&e.analysis))?;
            let backend: Box<dyn Backend> = match (e.trace, e.mock) {
                (Some(t), None) => Box::new(TraceBackend::load(&dir.join(t))?),
                (None, Some(m)) => Box::new(MockBackend::try_new(read_json::<MockParams>(&dir.join(m))?)?),
                _ => bail!("dataset entry {} needs exactly one of trace or mock", e.analysis.display()),
            };
            Ok(TrainItem { input, backend })
        })
        .collect()
}

pub fn train(g: &Globals, a: TrainArgs) -> Result<()> {
    let lambda = a.lambda.or(g.file.lambda).unwrap_or(DEFAULT_LAMBDA);
    let items = match &a.dataset {
        Some(path) => load_dataset(path)?,
        None => synthetic_dataset(a.synthetic, a.gop, stream_seed(g.seed, Stream::Data))
            .into_iter()
            .map(|s| TrainItem {
                input: s.input,
                backend: Box::new(MockBackend::new(s.params)),
            })
            .collect(),
    };
    let config = TrainConfig {
        lambda,
        temperature: TemperatureSchedule {
            start: a.tau_start,
            end: a.tau_end,
        },
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: stream_seed(g.seed, Stream::Training),
        gumbel_seed: stream_seed(g.seed, Stream::Gumbel),
    };
    let outcome = train_selector(&items, &config)?;
    write_json(&a.out, &outcome.weights)?;
    if let Some(log) = &a.log {
        write_text(log, &outcome.log_csv())?;
    }
    let first = outcome.log.first().expect("epoch 0");
    let last = outcome.log.last().expect("epoch 0");
    println!(
        "objective {:.6} -> {:.6} over {} epochs",
        first.mean_objective, last.mean_objective, last.epoch
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub gop: Option<usize>,
    /// Comma-separated λ values
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "dfs")]
    pub method: Method,
    /// Curve CSV path
    #[arg(long)]
    pub out: PathBuf,
    /// Also write gnuplot two-column data
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
}

pub fn curve(g: &Globals, a: CurveArgs) -> Result<()> {
    if a.method == Method::Select {
        bail!(UsageError("curve does not support method select".into()));
    }
    let (gop, _) = gop_and_lambda(g, a.gop, None)?;
    let lambdas = a
        .lambdas
        .clone()
        .or_else(|| g.file.lambdas.clone())
        .unwrap_or_else(|| vec![0.1, 0.3, 0.5, 1.0]);
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
        bail!(UsageError("--lambdas must be a non-empty list of non-negative numbers".into()));
    }
    let backend = a.backend.build(&g.file, g.seed, gop)?;
    let (w, h) = backend.frame_size();
    let single = Globals {
        seed: g.seed,
        jobs: 1,
        file: Default::default(),
    };
    let point = |lambda: f64| -> Result<CurvePoint> {
        let r = run_method(&single, a.method, backend.as_ref(), gop, lambda, None)?;
        Ok(curve_from_run(&r.all_frames(), w, h)?)
    };
    let results: Vec<Result<CurvePoint>> = if g.jobs > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = lambdas.iter().map(|&l| s.spawn(move || point(l))).collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        })
    } else {
        lambdas.iter().map(|&l| point(l)).collect()
    };
    let mut points = results.into_iter().collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
    write_text(&a.out, &write_curve_csv(&points))?;
    if let Some(path) = &a.gnuplot {
        write_text(path, &gnuplot_data(&points))?;
    }
    println!("{} points written to {}", points.len(), a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct BdrateArgs {
    #[arg(long)]
    pub anchor: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value = "pchip")]
    pub fit: FitArg,
    /// Report JSON path
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FitArg {
    Pchip,
    Cubic,
}

fn read_curve(path: &Path) -> Result<RateMetricCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    RateMetricCurve::from_csv(&text).with_context(|| format!("in curve {}", path.display()))
}

pub fn bdrate(a: BdrateArgs) -> Result<()> {
    let anchor = read_curve(&a.anchor)?;
    let test = read_curve(&a.test)?;
    let fit = match a.fit {
        FitArg::Pchip => BdFit::Pchip,
        FitArg::Cubic => BdFit::Cubic,
    };
    let r = bd_rate_with(&anchor, &test, fit)?;
    let report = BdRateReport {
        anchor: a.anchor.display().to_string(),
        test: a.test.display().to_string(),
        percent: r.percent,
        overlap: r.overlap,
    };
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    println!("BD-rate {:.4}%", report.percent);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TraceExportArgs {
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub gop: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn trace_export(g: &Globals, a: TraceExportArgs) -> Result<()> {
    let (gop, _) = gop_and_lambda(g, a.gop, None)?;
    let backend = a.backend.build(&g.file, g.seed, gop)?;
    let trace = export_trace(backend.as_ref(), gop)?;
    write_text(&a.out, &(trace.to_json()? + "\n"))?;
    println!("{} entries written to {}", trace.frames.len(), a.out.display());
    Ok(())
}
