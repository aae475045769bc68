//! Synthetic data from the generative model, M-matrix misspecification and
//! the benchmark grid runner.

use std::path::Path;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchors::{AnchorMask, AnchorSelection};
use crate::baselines::{fit_pca, fit_unconstrained_irt};
use crate::diagnostics::{ci_coverage, ess_rank_normalized, geweke_z, median, mse_theta, split_rhat};
use crate::error::{IrtmError, Result};
use crate::gibbs::{normalize_sigma, run_sampler, SamplerOptions};
use crate::model::{
    loading_prior, ConstraintSet, Hyperparameters, ParamGroup, ParameterState, PosteriorDraws, Response,
    ResponseMatrix,
};
use crate::rng::RngStream;
use crate::sampling::{sample_inverse_wishart, sample_mvn, standard_normal};

/// The three code values used by the generator, in `code_distribution` order.
pub const CODE_VALUES: [f64; 3] = [1.0, -1.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "irtm-corr")]
    IrtmCorr,
    #[serde(rename = "irtm-uncorr")]
    IrtmUncorr,
    #[serde(rename = "irt")]
    Irt,
    #[serde(rename = "pca")]
    Pca,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::IrtmCorr, Method::IrtmUncorr, Method::Irt, Method::Pca];

    pub fn name(self) -> &'static str {
        match self {
            Method::IrtmCorr => "irtm-corr",
            Method::IrtmUncorr => "irtm-uncorr",
            Method::Irt => "irt",
            Method::Pca => "pca",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn uses_constraints(self) -> bool {
        matches!(self, Method::IrtmCorr | Method::IrtmUncorr)
    }

    fn index(self) -> u64 {
        Self::ALL.iter().position(|&m| m == self).expect("listed") as u64
    }
}

/// One benchmark cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub n_replicates: usize,
    /// Probabilities of +1, −1 and 0 for each true code.
    pub code_distribution: [f64; 3],
    pub misspecification_fractions: Vec<f64>,
    /// Share of responses masked at random before fitting.
    pub missing_fraction: f64,
    pub methods: Vec<Method>,
    pub hyper: Hyperparameters,
}

impl SimDesign {
    pub fn new(n: usize, k: usize, d: usize) -> Self {
        Self {
            n,
            k,
            d,
            n_replicates: 20,
            code_distribution: [0.3, 0.3, 0.4],
            misspecification_fractions: vec![0.0],
            missing_fraction: 0.0,
            methods: Method::ALL.to_vec(),
            hyper: Hyperparameters::for_dims(d),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.k == 0 || self.d == 0 {
            return Err(IrtmError::Design("N, K and d must be positive".into()));
        }
        let p = self.code_distribution;
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(IrtmError::Design(format!("code distribution {p:?} does not sum to 1")));
        }
        let f = &self.misspecification_fractions;
        if f.iter().any(|x| !(0.0..=1.0).contains(x)) || f.windows(2).any(|w| w[0] > w[1]) {
            return Err(IrtmError::Design(format!(
                "misspecification fractions {f:?} must be sorted within [0, 1]"
            )));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(IrtmError::Design(format!(
                "missing fraction {} outside [0, 1)",
                self.missing_fraction
            )));
        }
        self.hyper.validate(self.d)
    }
}

/// Default desk-scale grid: N ∈ {50, 100}, K ∈ {50, 100}, d ∈ {2, 3}.
pub fn desk_grid(n_replicates: usize) -> Vec<SimDesign> {
    grid(&[50, 100], &[50, 100], &[2, 3], n_replicates)
}

/// N ∈ {100,500,1000} × K ∈ {50,100,200} × d ∈ {2,3,5,8}, 100 replicates.
pub fn full_grid() -> Vec<SimDesign> {
    grid(&[100, 500, 1000], &[50, 100, 200], &[2, 3, 5, 8], 100)
}

fn grid(ns: &[usize], ks: &[usize], ds: &[usize], reps: usize) -> Vec<SimDesign> {
    let mut out = Vec::new();
    for &n in ns {
        for &k in ks {
            for &d in ds {
                let mut s = SimDesign::new(n, k, d);
                s.n_replicates = reps;
                out.push(s);
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SimDataset {
    pub data: ResponseMatrix,
    /// True θ, λ, b, Σ; μ holds the latent utilities λᵀθ + b + ε.
    pub truth: ParameterState,
    pub constraints: ConstraintSet,
}

fn draw_code(p: [f64; 3], rng: &mut RngStream) -> f64 {
    let u: f64 = rng.random();
    if u < p[0] {
        CODE_VALUES[0]
    } else if u < p[0] + p[1] {
        CODE_VALUES[1]
    } else {
        CODE_VALUES[2]
    }
}

/// Ensure every dimension has a signed code and at least d(d−1) zeros exist.
fn repair_codes(codes: &mut Array2<Option<f64>>, rng: &mut RngStream) -> Result<()> {
    let (k, d) = codes.dim();
    if k < d {
        return Err(IrtmError::Design(format!(
            "K = {k} items cannot carry {} zeros and a signed code on each of {d} dimensions",
            d * (d - 1)
        )));
    }
    let signed = |c: Option<f64>| c.is_some_and(|v| v != 0.0);
    for j in 0..d {
        if !(0..k).any(|r| signed(codes[[r, j]])) {
            let r = rng.random_range(0..k);
            codes[[r, j]] = Some(if rng.random::<bool>() { 1.0 } else { -1.0 });
        }
    }
    let required = d * (d - 1);
    loop {
        let zeros = codes.iter().filter(|c| **c == Some(0.0)).count();
        if zeros >= required {
            break;
        }
        let mut eligible = Vec::new();
        for j in 0..d {
            let rows: Vec<usize> = (0..k).filter(|&r| signed(codes[[r, j]])).collect();
            if rows.len() >= 2 {
                eligible.extend(rows.into_iter().map(|r| (r, j)));
            }
        }
        let (r, j) = eligible[rng.random_range(0..eligible.len())];
        codes[[r, j]] = Some(0.0);
    }
    Ok(())
}

/// Draw a dataset from the generative model.
pub fn generate_dataset(design: &SimDesign, rng: &mut RngStream) -> Result<SimDataset> {
    design.validate()?;
    generate(design, None, rng)
}

/// Like [`generate_dataset`] but with a fixed true code table and no
/// repair pass.
pub fn generate_with_codes(design: &SimDesign, codes: &Array2<Option<f64>>, rng: &mut RngStream) -> Result<SimDataset> {
    design.validate()?;
    if codes.dim() != (design.k, design.d) {
        return Err(IrtmError::Design(format!(
            "code table is {:?}, design needs ({}, {})",
            codes.dim(),
            design.k,
            design.d
        )));
    }
    generate(design, Some(codes), rng)
}

fn generate(design: &SimDesign, fixed_codes: Option<&Array2<Option<f64>>>, rng: &mut RngStream) -> Result<SimDataset> {
    let (n, k, d) = (design.n, design.k, design.d);
    let sigma = {
        let star = sample_inverse_wishart(design.hyper.nu0, &design.hyper.s0_matrix(), rng)?;
        normalize_sigma(&star, design.hyper.sigma_normalization)
    };
    let zero = Array1::zeros(d);
    let mut theta = Array2::zeros((n, d));
    for i in 0..n {
        theta.row_mut(i).assign(&sample_mvn(&zero, &sigma, rng)?);
    }
    let codes = match fixed_codes {
        Some(c) => c.clone(),
        None => {
            let mut codes = Array2::from_shape_fn((k, d), |_| Some(draw_code(design.code_distribution, rng)));
            repair_codes(&mut codes, rng)?;
            codes
        }
    };
    let mut lambda = Array2::zeros((k, d));
    for kk in 0..k {
        for j in 0..d {
            lambda[[kk, j]] = loading_prior(codes[[kk, j]])?.sample(rng);
        }
    }
    let b = Array1::from_iter((0..k).map(|_| standard_normal(rng)));
    let mut mu = Array2::zeros((n, k));
    let values = Array2::from_shape_fn((n, k), |(i, kk)| {
        let m: f64 = (0..d).map(|j| lambda[[kk, j]] * theta[[i, j]]).sum::<f64>() + b[kk];
        let u = m + standard_normal(rng);
        mu[[i, kk]] = u;
        Response::from_bool(u > 0.0)
    });
    Ok(SimDataset {
        data: ResponseMatrix::from_values(values)?,
        constraints: ConstraintSet::from_codes(codes)?,
        truth: ParameterState {
            theta,
            lambda,
            b,
            mu,
            sigma,
            anchor_mask: AnchorMask::empty(n, d),
        },
    })
}

/// Number of entries altered at a given fraction: ⌈f·K·d⌉.
pub fn misspecified_count(fraction: f64, total: usize) -> usize {
    // round away float noise such as 0.1 * 30 = 3.0000000000000004
    let x = (fraction * total as f64 * 1e9).round() / 1e9;
    (x.ceil() as usize).min(total)
}

/// Resample ⌈f·K·d⌉ uniformly chosen entries to a different value in {+1, −1, 0}.
pub fn misspecify(constraints: &ConstraintSet, fraction: f64, rng: &mut RngStream) -> Result<ConstraintSet> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(IrtmError::Contract(format!("fraction {fraction} outside [0, 1]")));
    }
    let (k, d) = constraints.codes().dim();
    let count = misspecified_count(fraction, k * d);
    let mut codes = constraints.codes().clone();
    for flat in index::sample(rng, k * d, count).into_iter() {
        let (r, j) = (flat / d, flat % d);
        let current = codes[[r, j]];
        let options: Vec<f64> = CODE_VALUES.iter().copied().filter(|&v| current != Some(v)).collect();
        codes[[r, j]] = Some(options[rng.random_range(0..options.len())]);
    }
    ConstraintSet::new(
        codes,
        constraints.item_ids().to_vec(),
        constraints.dimension_names().to_vec(),
    )
}

/// Mask exactly round(f·N·K) uniformly chosen responses.
pub fn mask_at_random(data: &ResponseMatrix, fraction: f64, rng: &mut RngStream) -> ResponseMatrix {
    let (n, k) = (data.n_units(), data.n_items());
    let count = ((fraction * (n * k) as f64).round() as usize).min(n * k);
    let mut mask = Array2::from_elem((n, k), false);
    for flat in index::sample(rng, n * k, count).into_iter() {
        mask[[flat / k, flat % k]] = true;
    }
    data.with_missing(&mask)
}

/// One (cell, method, replicate, fraction) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub method: Method,
    pub replicate: usize,
    pub misspecification: f64,
    pub missing_fraction: f64,
    /// "ok" or an error tag.
    pub status: String,
    pub mse_theta: f64,
    pub mse_lambda: f64,
    pub coverage_theta: f64,
    pub coverage_lambda: f64,
    /// Mean rank-normalized ESS over θ coordinates.
    pub ess: f64,
    /// Median split-R̂ over θ coordinates.
    pub rhat: f64,
    /// Share of θ coordinate-chains with Geweke p < 0.05.
    pub geweke_rejection_rate: f64,
    /// Stored λ draws breaking a sign or zero code of the fitted M.
    pub sign_violations: usize,
}

impl BenchmarkRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub method: Method,
    pub misspecification: f64,
    pub missing_fraction: f64,
    pub n_ok: usize,
    pub n_failed: usize,
    pub mse_theta: f64,
    pub mse_lambda: f64,
    pub coverage_theta: f64,
    pub coverage_lambda: f64,
    pub ess: f64,
    pub rhat: f64,
    pub geweke_rejection_rate: f64,
}

#[derive(Debug, Clone)]
pub struct BenchmarkResult {
    pub rows: Vec<BenchmarkRow>,
    /// Wall-clock seconds per row; not part of the reproducible output.
    pub wall_times: Vec<f64>,
}

impl BenchmarkResult {
    /// Mean over successful replicates per (cell, method, fraction).
    pub fn summarize(&self) -> Vec<CellSummary> {
        let mut keys: Vec<(usize, usize, usize, Method, u64, u64)> = Vec::new();
        for r in &self.rows {
            let key = (r.n, r.k, r.d, r.method, r.misspecification.to_bits(), r.missing_fraction.to_bits());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        keys.into_iter()
            .map(|(n, k, d, method, f, m)| {
                let group: Vec<&BenchmarkRow> = self
                    .rows
                    .iter()
                    .filter(|r| {
                        (r.n, r.k, r.d, r.method, r.misspecification.to_bits(), r.missing_fraction.to_bits())
                            == (n, k, d, method, f, m)
                    })
                    .collect();
                let ok: Vec<&&BenchmarkRow> = group.iter().filter(|r| r.is_ok()).collect();
                let avg = |f: fn(&BenchmarkRow) -> f64| {
                    if ok.is_empty() {
                        f64::NAN
                    } else {
                        ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64
                    }
                };
                CellSummary {
                    n,
                    k,
                    d,
                    method,
                    misspecification: f64::from_bits(f),
                    missing_fraction: f64::from_bits(m),
                    n_ok: ok.len(),
                    n_failed: group.len() - ok.len(),
                    mse_theta: avg(|r| r.mse_theta),
                    mse_lambda: avg(|r| r.mse_lambda),
                    coverage_theta: avg(|r| r.coverage_theta),
                    coverage_lambda: avg(|r| r.coverage_lambda),
                    ess: avg(|r| r.ess),
                    rhat: avg(|r| r.rhat),
                    geweke_rejection_rate: avg(|r| r.geweke_rejection_rate),
                }
            })
            .collect()
    }
}

const DATA_STREAM: u64 = 1;
const MISSPEC_STREAM: u64 = 2;
const FIT_STREAM: u64 = 3;
const MASK_STREAM: u64 = 4;

#[derive(Debug, Clone, Copy)]
struct Task {
    cell: usize,
    replicate: usize,
    method: Method,
    fraction_index: usize,
}

/// Per-draw pooled samples of every coordinate: `out[p]` for parameter p in
/// row-major order.
fn pooled(draws: &PosteriorDraws, group: ParamGroup) -> Vec<Vec<f64>> {
    draws
        .coordinate_chains(group)
        .into_iter()
        .map(|(_, chains)| chains.concat())
        .collect()
}

/// Count stored λ draws outside the support of their loading prior.
pub fn count_sign_violations(draws: &PosteriorDraws, constraints: &ConstraintSet) -> Result<usize> {
    let (k, d) = constraints.codes().dim();
    let mut priors = Vec::with_capacity(k * d);
    for kk in 0..k {
        for j in 0..d {
            priors.push(loading_prior(constraints.code(kk, j))?);
        }
    }
    Ok(draws
        .chains
        .iter()
        .flat_map(|c| c.lambda.outer_iter())
        .map(|draw| {
            draw.iter()
                .zip(&priors)
                .filter(|(v, p)| !p.admits(**v))
                .count()
        })
        .sum())
}

fn mcmc_metrics(
    row: &mut BenchmarkRow,
    draws: &PosteriorDraws,
    truth: &ParameterState,
    constraints: &ConstraintSet,
) -> Result<()> {
    row.sign_violations = count_sign_violations(draws, constraints)?;
    row.mse_theta = mse_theta(&draws.theta_mean(), &truth.theta)?;
    row.mse_lambda = mse_theta(&draws.lambda_mean(), &truth.lambda)?;
    row.coverage_theta = ci_coverage(&pooled(draws, ParamGroup::Theta), truth.theta.as_slice().expect("standard"), 0.95)?;
    row.coverage_lambda = ci_coverage(&pooled(draws, ParamGroup::Lambda), truth.lambda.as_slice().expect("standard"), 0.95)?;
    let coords = draws.coordinate_chains(ParamGroup::Theta);
    let mut ess = 0.0;
    let mut rhats = Vec::with_capacity(coords.len());
    let (mut rejected, mut tested) = (0usize, 0usize);
    for (_, chains) in &coords {
        ess += ess_rank_normalized(chains)?.ess;
        rhats.push(split_rhat(chains)?.rhat);
        for c in chains {
            let g = geweke_z(c, 0.1, 0.5)?;
            tested += 1;
            if g.p < 0.05 {
                rejected += 1;
            }
        }
    }
    row.ess = ess / coords.len() as f64;
    row.rhat = median(&rhats);
    row.geweke_rejection_rate = rejected as f64 / tested as f64;
    Ok(())
}

fn error_tag(e: &IrtmError) -> String {
    let kind = match e {
        IrtmError::NotPositiveDefinite { .. } | IrtmError::Sampler { .. } => "numerical",
        IrtmError::Underidentified(_) => "underidentified",
        IrtmError::AnchorUnavailable { .. } => "anchor",
        IrtmError::Design(_) => "design",
        _ => "error",
    };
    format!("{kind}: {e}").replace(['\n', '\r'], " ")
}

fn run_task(design: &SimDesign, task: Task, seed: u64) -> BenchmarkRow {
    let fraction = design.misspecification_fractions[task.fraction_index];
    let mut row = BenchmarkRow {
        n: design.n,
        k: design.k,
        d: design.d,
        method: task.method,
        replicate: task.replicate,
        misspecification: fraction,
        missing_fraction: design.missing_fraction,
        status: "ok".into(),
        mse_theta: f64::NAN,
        mse_lambda: f64::NAN,
        coverage_theta: f64::NAN,
        coverage_lambda: f64::NAN,
        ess: f64::NAN,
        rhat: f64::NAN,
        geweke_rejection_rate: f64::NAN,
        sign_violations: 0,
    };
    let (cell, rep) = (task.cell as u64, task.replicate as u64);
    let result = (|| -> Result<()> {
        let mut data_rng = RngStream::derive(seed, &[DATA_STREAM, cell, rep]);
        let ds = generate_dataset(design, &mut data_rng)?;
        let data = if design.missing_fraction > 0.0 {
            mask_at_random(&ds.data, design.missing_fraction, &mut RngStream::derive(seed, &[MASK_STREAM, cell, rep]))
        } else {
            ds.data.clone()
        };
        let mut hyper = design.hyper.clone();
        hyper.seed = RngStream::derive(seed, &[FIT_STREAM, cell, rep, task.method.index(), task.fraction_index as u64])
            .next_u64();
        match task.method {
            Method::Pca => {
                let fit = fit_pca(&data, design.d)?;
                row.mse_theta = mse_theta(&fit.scores, &ds.truth.theta)?;
            }
            Method::Irt => {
                let draws = fit_unconstrained_irt(&data, design.d, &hyper)?;
                let free = ConstraintSet::unconstrained(data.item_ids().to_vec(), design.d)?;
                mcmc_metrics(&mut row, &draws, &ds.truth, &free)?;
            }
            Method::IrtmCorr | Method::IrtmUncorr => {
                hyper.correlated_factors = task.method == Method::IrtmCorr;
                let constraints = if fraction > 0.0 {
                    let mut rng = RngStream::derive(seed, &[MISSPEC_STREAM, cell, rep, task.fraction_index as u64]);
                    misspecify(&ds.constraints, fraction, &mut rng)?
                } else {
                    ds.constraints.clone()
                };
                let opts = SamplerOptions {
                    anchors: AnchorSelection::All,
                    // altered codes need not meet the identification count
                    force: fraction > 0.0,
                };
                let draws = run_sampler(&data, &constraints, &hyper, &opts)?;
                mcmc_metrics(&mut row, &draws, &ds.truth, &constraints)?;
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        log::warn!("benchmark run failed: {e}");
        row.status = error_tag(&e);
    }
    row
}

/// Run every (cell, replicate, method, fraction) task. Rows are ordered by
/// cell, replicate, method and fraction regardless of thread count.
pub fn run_benchmark(designs: &[SimDesign], seed: u64) -> Result<BenchmarkResult> {
    for d in designs {
        d.validate()?;
    }
    let mut tasks = Vec::new();
    for (cell, design) in designs.iter().enumerate() {
        for replicate in 0..design.n_replicates {
            for &method in &design.methods {
                let fractions = if method.uses_constraints() {
                    design.misspecification_fractions.len()
                } else {
                    1
                };
                for fraction_index in 0..fractions {
                    tasks.push(Task {
                        cell,
                        replicate,
                        method,
                        fraction_index,
                    });
                }
            }
        }
    }
    let out: Vec<(BenchmarkRow, f64)> = tasks
        .par_iter()
        .map(|&t| {
            let start = Instant::now();
            let row = run_task(&designs[t.cell], t, seed);
            (row, start.elapsed().as_secs_f64())
        })
        .collect();
    let (rows, wall_times) = out.into_iter().unzip();
    Ok(BenchmarkResult { rows, wall_times })
}

/// Digest of the designs and seed, identifying a benchmark configuration.
pub fn design_digest(designs: &[SimDesign], seed: u64) -> String {
    let json = serde_json::to_string(&(designs, seed)).expect("designs serialize");
    hex::encode(Sha256::digest(json.as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub seed: u64,
    pub config_digest: String,
    pub designs: Vec<SimDesign>,
    pub n_rows: usize,
    pub n_failed: usize,
    pub results_file: String,
    pub results_sha256: String,
    pub summary_file: String,
    pub summary_sha256: String,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| IrtmError::Io {
        path: "<memory>".into(),
        source: e.into_error(),
    })
}

/// Write results.csv, summary.csv and manifest.json (and timings.csv when
/// asked). Everything but timings.csv is reproducible from (designs, seed).
pub fn write_benchmark(
    dir: &Path,
    designs: &[SimDesign],
    seed: u64,
    result: &BenchmarkResult,
    with_timings: bool,
) -> Result<BenchmarkManifest> {
    std::fs::create_dir_all(dir).map_err(|e| IrtmError::io(dir, e))?;
    let results = csv_bytes(&result.rows)?;
    let summary = csv_bytes(&result.summarize())?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| IrtmError::io(&p, e))
    };
    write("results.csv", &results)?;
    write("summary.csv", &summary)?;
    if with_timings {
        #[derive(Serialize)]
        struct Timing<'a> {
            n: usize,
            k: usize,
            d: usize,
            method: Method,
            replicate: usize,
            misspecification: f64,
            status: &'a str,
            wall_time: f64,
        }
        let rows: Vec<Timing> = result
            .rows
            .iter()
            .zip(&result.wall_times)
            .map(|(r, &t)| Timing {
                n: r.n,
                k: r.k,
                d: r.d,
                method: r.method,
                replicate: r.replicate,
                misspecification: r.misspecification,
                status: &r.status,
                wall_time: t,
            })
            .collect();
        write("timings.csv", &csv_bytes(&rows)?)?;
    }
    let manifest = BenchmarkManifest {
        seed,
        config_digest: design_digest(designs, seed),
        designs: designs.to_vec(),
        n_rows: result.rows.len(),
        n_failed: result.rows.iter().filter(|r| !r.is_ok()).count(),
        results_file: "results.csv".into(),
        results_sha256: hex::encode(Sha256::digest(&results)),
        summary_file: "summary.csv".into(),
        summary_sha256: hex::encode(Sha256::digest(&summary)),
    };
    write("manifest.json", serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}
