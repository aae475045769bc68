//! Command-line surface.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation failure, 3 numerical
//! failure. `IRTM_OUT_DIR` sets the default output directory and
//! `IRTM_THREADS` the worker count.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::anchors::augment_with_anchors;
use crate::baselines::{fit_pca, fit_unconstrained_irt};
use crate::diagnostics::{diagnose_group, median, CoordinateDiagnostics};
use crate::error::{IrtmError, Result};
use crate::gibbs::{run_sampler, SamplerOptions};
use crate::io::{self, ItemSummary, PosteriorSummary, RawTable, RunConfig, UnitSummary};
use crate::model::{validate_identification, Hyperparameters, ParamGroup, SigmaNormalization};
use crate::rng::RngStream;
use crate::simulation::{self, Method, SimDesign};

pub const ENV_OUT_DIR: &str = "IRTM_OUT_DIR";
pub const ENV_THREADS: &str = "IRTM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "irtm", version, about = "Constrained Bayesian IRT with M-matrix priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-hot encode a raw table into a 0/1 response CSV.
    Encode {
        #[arg(long)]
        raw: PathBuf,
        /// JSON list of column schemas.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the encoded-column provenance CSV.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Write the anchor-augmented response matrix and its mask.
    Anchors {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        m: PathBuf,
        /// "all", "none" or comma-separated dimension names.
        #[arg(long, default_value = "all")]
        anchors: String,
        #[arg(long, default_value_t = 4.0)]
        anchor_d: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit IRT-M, unconstrained IRT or PCA.
    Fit(FitArgs),
    /// ESS, R-hat and Geweke for stored draws.
    Diagnose {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long, default_value = "theta")]
        param: String,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate one synthetic dataset.
    Simulate {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Share of responses to mask at random.
        #[arg(long, default_value_t = 0.0)]
        missing: f64,
        /// Share of M entries to alter in the written constraint file.
        #[arg(long, default_value_t = 0.0)]
        misspecify: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the simulation benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitMethod {
    Irtm,
    Irt,
    Pca,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// key = value run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<FitMethod>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    m: Option<PathBuf>,
    /// Latent dimensions (irt and pca; irtm takes them from the M file).
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fix Σ = I.
    #[arg(long)]
    uncorrelated: bool,
    #[arg(long)]
    anchors: Option<String>,
    #[arg(long)]
    anchor_d: Option<f64>,
    #[arg(long)]
    nu0: Option<f64>,
    #[arg(long)]
    inner_sweeps: Option<usize>,
    #[arg(long, value_parser = ["symmetric", "literal"])]
    sigma_normalization: Option<String>,
    /// Run even if the identification check fails.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Grid {
    /// N ∈ {50,100} × K ∈ {50,100} × d ∈ {2,3}.
    Desk,
    /// N ∈ {100,500,1000} × K ∈ {50,100,200} × d ∈ {2,3,5,8}, 100 replicates.
    Full,
    /// A single cell given by --n, --k, --d.
    Cell,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "desk")]
    grid: Grid,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    d: usize,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of irtm-corr, irtm-uncorr, irt, pca.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated misspecification fractions.
    #[arg(long)]
    fractions: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    missing: f64,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write timings.csv (not reproducible).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn out_dir(flag: Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.or_else(|| std::env::var_os(ENV_OUT_DIR).map(PathBuf::from))
        .unwrap_or_else(|| fallback.to_path_buf())
}

fn configure_threads() {
    if let Some(n) = std::env::var(ENV_THREADS).ok().and_then(|v| v.parse::<usize>().ok()) {
        // fails only if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

/// Run the CLI on `args` (program name first) and return the exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    configure_threads();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &IrtmError) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Encode { raw, schema, out, map } => {
            let table = RawTable::read(&raw, &schema)?;
            let (y, columns) = io::one_hot_encode(&table)?;
            io::write_responses(&out, &y)?;
            if let Some(map) = map {
                io::write_column_map(&map, &columns)?;
            }
            Ok(())
        }
        Command::Anchors {
            data,
            m,
            anchors,
            anchor_d,
            out,
        } => {
            let y = io::read_responses(&data)?;
            let c = io::load_constraints(&m, &y)?;
            let selection = io::parse_anchor_selection(&anchors, c.dimension_names())?;
            let aug = augment_with_anchors(&y, &c, anchor_d, &selection)?;
            let dir = out_dir(out, Path::new("out"));
            io::write_responses(&dir.join("augmented.csv"), &aug.data)?;
            write_mask(&dir.join("mask.csv"), &aug, c.dimension_names())?;
            let report = validate_identification(&c, !selection.is_none());
            io::write_json(&dir.join("identification.json"), &report)
        }
        Command::Fit(args) => fit(args),
        Command::Diagnose { draws, param, out } => {
            let group = ParamGroup::parse(&param)
                .ok_or_else(|| IrtmError::Validation(format!("unknown parameter group '{param}'")))?;
            let d = io::read_draws(&draws)?;
            let coords = diagnose_group(&d, group)?;
            let report = DiagnoseReport::new(group, d.n_chains(), d.n_draws(), coords);
            match out {
                Some(p) => io::write_json(&p, &report),
                None => {
                    use std::io::Write;
                    let text = serde_json::to_string_pretty(&report)? + "\n";
                    match std::io::stdout().write_all(text.as_bytes()) {
                        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(IrtmError::io("<stdout>", e)),
                        _ => Ok(()),
                    }
                }
            }
        }
        Command::Simulate {
            n,
            k,
            d,
            seed,
            missing,
            misspecify,
            out,
        } => {
            let design = SimDesign::new(n, k, d);
            let ds = simulation::generate_dataset(&design, &mut RngStream::new(seed, 0))?;
            let data = if missing > 0.0 {
                simulation::mask_at_random(&ds.data, missing, &mut RngStream::new(seed, 1))
            } else {
                ds.data.clone()
            };
            let c = simulation::misspecify(&ds.constraints, misspecify, &mut RngStream::new(seed, 2))?;
            let dir = out_dir(out, Path::new("out"));
            io::write_responses(&dir.join("responses.csv"), &data)?;
            io::write_constraints(&dir.join("constraints.csv"), &c)?;
            let dims = c.dimension_names().to_vec();
            io::write_matrix(&dir.join("truth_theta.csv"), "unit", data.unit_ids(), &dims, &ds.truth.theta)?;
            io::write_matrix(&dir.join("truth_lambda.csv"), "item", data.item_ids(), &dims, &ds.truth.lambda)?;
            io::write_matrix(&dir.join("truth_sigma.csv"), "dim", &dims, &dims, &ds.truth.sigma)?;
            let b = ds.truth.b.clone().insert_axis(ndarray::Axis(1));
            io::write_matrix(&dir.join("truth_b.csv"), "item", data.item_ids(), &["b".to_string()], &b)
        }
        Command::Bench(args) => bench(args),
    }
}

fn write_mask(path: &Path, aug: &crate::anchors::AugmentedData, dims: &[String]) -> Result<()> {
    let mut f = String::from("row,unit,synthetic");
    for d in dims {
        f.push_str(&format!(",fixed_{d}"));
    }
    f.push('\n');
    for (r, id) in aug.data.unit_ids().iter().enumerate() {
        f.push_str(&format!("{r},{id},{}", aug.mask.is_synthetic(r)));
        for v in aug.mask.fixed(r) {
            f.push(',');
            f.push_str(&v.map_or_else(|| "NA".to_string(), |x| x.to_string()));
        }
        f.push('\n');
    }
    std::fs::write(path, f).map_err(|e| IrtmError::io(path, e))
}

fn merged_config(args: &FitArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::read(p)?,
        None => {
            let mut c = RunConfig::default();
            // resolved against the model's dimension once known
            c.hyper.s0.clear();
            c.hyper.nu0 = 0.0;
            c
        }
    };
    if let Some(m) = args.method {
        c.method = match m {
            FitMethod::Irtm => "irtm",
            FitMethod::Irt => "irt",
            FitMethod::Pca => "pca",
        }
        .into();
    }
    let h = &mut c.hyper;
    macro_rules! set {
        ($field:expr, $v:expr) => {
            if let Some(v) = $v {
                $field = v;
            }
        };
    }
    set!(h.n_iterations, args.iters);
    set!(h.n_burnin, args.burnin);
    set!(h.thin, args.thin);
    set!(h.n_chains, args.chains);
    set!(h.seed, args.seed);
    set!(h.anchor_d, args.anchor_d);
    set!(h.nu0, args.nu0);
    set!(h.inner_tmvn_sweeps, args.inner_sweeps);
    if args.uncorrelated {
        h.correlated_factors = false;
    }
    if let Some(s) = &args.sigma_normalization {
        h.sigma_normalization = if s == "literal" {
            SigmaNormalization::Literal
        } else {
            SigmaNormalization::Symmetric
        };
    }
    if args.data.is_some() {
        c.data = args.data.clone();
    }
    if args.m.is_some() {
        c.constraints = args.m.clone();
    }
    if args.dims.is_some() {
        c.dims = args.dims;
    }
    if let Some(a) = &args.anchors {
        c.anchors = a.clone();
    }
    c.force |= args.force;
    c.out_dir = out_dir(args.out.clone(), &c.out_dir);
    Ok(c)
}

/// Fill S0 = I_d and ν0 = d when the config leaves them unset.
fn resolve_hyper(h: &Hyperparameters, d: usize) -> Result<Hyperparameters> {
    let mut h = h.clone();
    if h.s0.is_empty() || (h.s0.len() != d && h.s0 == Hyperparameters::for_dims(h.s0.len()).s0) {
        h.s0 = Hyperparameters::for_dims(d).s0;
    }
    if h.nu0 == 0.0 {
        h.nu0 = d as f64;
    }
    h.validate(d)?;
    Ok(h)
}

fn fit(args: FitArgs) -> Result<()> {
    let mut config = merged_config(&args)?;
    let data_path = config
        .data
        .clone()
        .ok_or_else(|| IrtmError::Validation("fit needs --data".into()))?;
    let data = io::read_responses(&data_path)?;
    let dir = config.out_dir.clone();
    let summary = match config.method.as_str() {
        "irtm" => {
            let m = config
                .constraints
                .clone()
                .ok_or_else(|| IrtmError::Validation("irtm needs --m".into()))?;
            let c = io::load_constraints(&m, &data)?;
            let hyper = resolve_hyper(&config.hyper, c.n_dims())?;
            config.hyper = hyper.clone();
            let anchors = config.anchor_selection(c.dimension_names())?;
            let report = validate_identification(&c, !anchors.is_none());
            if !report.is_ok() {
                eprintln!("{report}");
            }
            let opts = SamplerOptions {
                anchors,
                force: config.force,
            };
            let draws = run_sampler(&data, &c, &hyper, &opts)?;
            io::write_draws(&dir, &draws)?;
            io::summarize_draws("irtm", &draws, 0.95, Some(report))
        }
        "irt" => {
            let d = config
                .dims
                .ok_or_else(|| IrtmError::Validation("irt needs --dims".into()))?;
            let hyper = resolve_hyper(&config.hyper, d)?;
            config.hyper = hyper.clone();
            let draws = fit_unconstrained_irt(&data, d, &hyper)?;
            io::write_draws(&dir, &draws)?;
            io::summarize_draws("irt", &draws, 0.95, None)
        }
        "pca" => {
            let d = config
                .dims
                .ok_or_else(|| IrtmError::Validation("pca needs --dims".into()))?;
            let p = fit_pca(&data, d)?;
            PosteriorSummary {
                method: "pca".into(),
                config_digest: config.digest(),
                constraint_digest: None,
                dimensions: (1..=d).map(|j| format!("pc{j}")).collect(),
                n_chains: 0,
                n_draws: 0,
                ci_level: None,
                units: data
                    .unit_ids()
                    .iter()
                    .enumerate()
                    .map(|(i, id)| UnitSummary {
                        id: id.clone(),
                        theta_mean: p.scores.row(i).to_vec(),
                        theta_lower: None,
                        theta_upper: None,
                    })
                    .collect(),
                items: data
                    .item_ids()
                    .iter()
                    .enumerate()
                    .map(|(k, id)| ItemSummary {
                        id: id.clone(),
                        lambda_mean: p.components.row(k).to_vec(),
                        b_mean: None,
                    })
                    .collect(),
                sigma_mean: None,
                identification: None,
                eigenvalues: Some(p.eigenvalues.to_vec()),
            }
        }
        other => return Err(IrtmError::Validation(format!("unknown method '{other}'"))),
    };
    io::write_json(&dir.join("summary.json"), &summary)?;
    let conf = dir.join("run.conf");
    std::fs::write(&conf, config.to_text()).map_err(|e| IrtmError::io(&conf, e))
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    param: &'static str,
    n_chains: usize,
    n_draws: usize,
    median_rhat: f64,
    mean_ess: f64,
    coordinates: Vec<CoordinateDiagnostics>,
}

impl DiagnoseReport {
    fn new(group: ParamGroup, n_chains: usize, n_draws: usize, coordinates: Vec<CoordinateDiagnostics>) -> Self {
        let rhats: Vec<f64> = coordinates.iter().filter(|c| !c.rhat.degenerate).map(|c| c.rhat.rhat).collect();
        let mean_ess = coordinates.iter().map(|c| c.ess.ess).sum::<f64>() / coordinates.len().max(1) as f64;
        Self {
            param: group.name(),
            n_chains,
            n_draws,
            median_rhat: median(&rhats),
            mean_ess,
            coordinates,
        }
    }
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| f(x.trim()).ok_or_else(|| IrtmError::Validation(format!("cannot parse list entry '{x}'"))))
        .collect()
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut designs = match args.grid {
        Grid::Desk => simulation::desk_grid(20),
        Grid::Full => simulation::full_grid(),
        Grid::Cell => vec![SimDesign::new(args.n, args.k, args.d)],
    };
    let methods = args
        .methods
        .as_deref()
        .map(|s| parse_list(s, Method::parse))
        .transpose()?;
    let fractions = args
        .fractions
        .as_deref()
        .map(|s| parse_list(s, |x| x.parse::<f64>().ok()))
        .transpose()?;
    for d in &mut designs {
        if let Some(r) = args.reps {
            d.n_replicates = r;
        }
        if let Some(m) = &methods {
            d.methods = m.clone();
        }
        if let Some(f) = &fractions {
            d.misspecification_fractions = f.clone();
        }
        d.missing_fraction = args.missing;
        if let Some(v) = args.iters {
            d.hyper.n_iterations = v;
        }
        if let Some(v) = args.burnin {
            d.hyper.n_burnin = v;
        }
        if let Some(v) = args.chains {
            d.hyper.n_chains = v;
        }
    }
    let result = simulation::run_benchmark(&designs, args.seed)?;
    let dir = out_dir(args.out, Path::new("bench"));
    let manifest = simulation::write_benchmark(&dir, &designs, args.seed, &result, args.timings)?;
    eprintln!(
        "{} runs ({} failed) written to {}",
        manifest.n_rows,
        manifest.n_failed,
        dir.display()
    );
    Ok(())
}
