//! Data, constraint, hyperparameter and parameter-state types, plus the
//! mapping from M-matrix codes to loading priors and the identification
//! check.

use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anchors::AnchorMask;
use crate::error::{IrtmError, Result};
use crate::rng::RngStream;
use crate::sampling::{self, TruncationBounds};

/// One cell of the response matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Response {
    No,
    Yes,
    Missing,
}

impl Response {
    pub fn from_bool(v: bool) -> Self {
        if v {
            Response::Yes
        } else {
            Response::No
        }
    }

    pub fn is_missing(self) -> bool {
        self == Response::Missing
    }
}

/// N×K binary responses. Rows are data units, columns dichotomous choices.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrix {
    values: Array2<Response>,
    unit_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl ResponseMatrix {
    pub fn new(values: Array2<Response>, unit_ids: Vec<String>, item_ids: Vec<String>) -> Result<Self> {
        let (n, k) = values.dim();
        if n == 0 || k == 0 {
            return Err(IrtmError::Validation(format!(
                "response matrix must have at least one row and column, got {n}x{k}"
            )));
        }
        if unit_ids.len() != n || item_ids.len() != k {
            return Err(IrtmError::Validation(format!(
                "label counts ({} units, {} items) do not match a {n}x{k} matrix",
                unit_ids.len(),
                item_ids.len()
            )));
        }
        let m = Self {
            values,
            unit_ids,
            item_ids,
        };
        for k in m.all_missing_columns() {
            log::warn!("item '{}' has no observed responses", m.item_ids[k]);
        }
        Ok(m)
    }

    /// Matrix with generated labels `u1..uN`, `i1..iK`.
    pub fn from_values(values: Array2<Response>) -> Result<Self> {
        let (n, k) = values.dim();
        let units = (1..=n).map(|i| format!("u{i}")).collect();
        let items = (1..=k).map(|j| format!("i{j}")).collect();
        Self::new(values, units, items)
    }

    pub fn n_units(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_items(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<Response> {
        &self.values
    }

    pub fn get(&self, unit: usize, item: usize) -> Response {
        self.values[[unit, item]]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn all_missing_columns(&self) -> Vec<usize> {
        (0..self.n_items())
            .filter(|&k| self.values.column(k).iter().all(|r| r.is_missing()))
            .collect()
    }

    pub fn missing_fraction(&self) -> f64 {
        let miss = self.values.iter().filter(|r| r.is_missing()).count();
        miss as f64 / self.values.len() as f64
    }

    /// Append rows (used for anchors).
    pub(crate) fn with_rows(&self, rows: &[(String, Vec<Response>)]) -> Self {
        let n = self.n_units();
        let k = self.n_items();
        let mut values = Array2::from_elem((n + rows.len(), k), Response::Missing);
        values.slice_mut(ndarray::s![..n, ..]).assign(&self.values);
        let mut unit_ids = self.unit_ids.clone();
        for (r, (id, resp)) in rows.iter().enumerate() {
            for (kk, v) in resp.iter().enumerate() {
                values[[n + r, kk]] = *v;
            }
            unit_ids.push(id.clone());
        }
        Self {
            values,
            unit_ids,
            item_ids: self.item_ids.clone(),
        }
    }

    /// Copy with a subset of cells replaced by `Missing`.
    pub fn with_missing(&self, mask: &Array2<bool>) -> Self {
        let mut out = self.clone();
        ndarray::Zip::from(&mut out.values).and(mask).for_each(|v, &m| {
            if m {
                *v = Response::Missing;
            }
        });
        out
    }
}

/// The K diagonal M-matrices as a K×d table. `None` is the NA code.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    codes: Array2<Option<f64>>,
    item_ids: Vec<String>,
    dimension_names: Vec<String>,
}

impl ConstraintSet {
    pub fn new(
        codes: Array2<Option<f64>>,
        item_ids: Vec<String>,
        dimension_names: Vec<String>,
    ) -> Result<Self> {
        let (k, d) = codes.dim();
        if d == 0 {
            return Err(IrtmError::Validation("constraint set needs at least one dimension".into()));
        }
        if item_ids.len() != k || dimension_names.len() != d {
            return Err(IrtmError::Validation(format!(
                "label counts ({} items, {} dimensions) do not match a {k}x{d} code table",
                item_ids.len(),
                dimension_names.len()
            )));
        }
        for ((kk, j), c) in codes.indexed_iter() {
            if let Some(v) = c {
                if !v.is_finite() {
                    return Err(IrtmError::Validation(format!(
                        "code for item '{}' dimension '{}' is not finite: {v}",
                        item_ids[kk], dimension_names[j]
                    )));
                }
            }
        }
        Ok(Self {
            codes,
            item_ids,
            dimension_names,
        })
    }

    /// Codes with generated labels `i1..iK`, `dim1..dimd`.
    pub fn from_codes(codes: Array2<Option<f64>>) -> Result<Self> {
        let (k, d) = codes.dim();
        let items = (1..=k).map(|i| format!("i{i}")).collect();
        let dims = (1..=d).map(|j| format!("dim{j}")).collect();
        Self::new(codes, items, dims)
    }

    /// All-NA table: no prior information on any loading.
    pub fn unconstrained(item_ids: Vec<String>, d: usize) -> Result<Self> {
        let k = item_ids.len();
        let dims = (1..=d).map(|j| format!("dim{j}")).collect();
        Self::new(Array2::from_elem((k, d), None), item_ids, dims)
    }

    pub fn n_items(&self) -> usize {
        self.codes.nrows()
    }

    pub fn n_dims(&self) -> usize {
        self.codes.ncols()
    }

    pub fn code(&self, item: usize, dim: usize) -> Option<f64> {
        self.codes[[item, dim]]
    }

    pub fn codes(&self) -> &Array2<Option<f64>> {
        &self.codes
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn dimension_names(&self) -> &[String] {
        &self.dimension_names
    }

    pub fn zero_count(&self) -> usize {
        self.codes.iter().filter(|c| **c == Some(0.0)).count()
    }

    /// A dimension can be anchored iff at least one item has a signed code on it.
    pub fn is_anchorable(&self, dim: usize) -> bool {
        self.codes
            .column(dim)
            .iter()
            .any(|c| matches!(c, Some(v) if *v != 0.0))
    }

    /// Reorder rows to follow `item_ids`; every id must be present.
    pub fn aligned_to(&self, item_ids: &[String]) -> Result<Self> {
        let mut rows = Vec::with_capacity(item_ids.len());
        for id in item_ids {
            let pos = self.item_ids.iter().position(|x| x == id).ok_or_else(|| {
                IrtmError::Validation(format!("item '{id}' has no row in the constraint table"))
            })?;
            rows.push(pos);
        }
        let codes = self.codes.select(Axis(0), &rows);
        Self::new(codes, item_ids.to_vec(), self.dimension_names.clone())
    }

    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{}x{};", self.n_items(), self.n_dims()));
        for name in &self.dimension_names {
            h.update(name.as_bytes());
            h.update(b"\x1f");
        }
        for (id, row) in self.item_ids.iter().zip(self.codes.rows()) {
            h.update(id.as_bytes());
            for c in row {
                match c {
                    Some(v) => h.update(v.to_bits().to_le_bytes()),
                    None => h.update(b"NA"),
                }
            }
            h.update(b"\x1e");
        }
        hex::encode(h.finalize())
    }
}

/// Prior on a single loading implied by its M-matrix code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LoadingPrior {
    /// Code 0: the loading is exactly zero.
    PointMass,
    /// Code c > 0: N(0, c²) truncated to [0, ∞).
    Positive { sd: f64 },
    /// Code c < 0: N(0, c²) truncated to (−∞, 0].
    Negative { sd: f64 },
    /// Code NA: N(0, 1), sign unconstrained.
    Unconstrained,
}

impl LoadingPrior {
    pub fn bounds(&self) -> TruncationBounds {
        match self {
            LoadingPrior::PointMass => TruncationBounds::point(0.0),
            LoadingPrior::Positive { .. } => TruncationBounds::non_negative(),
            LoadingPrior::Negative { .. } => TruncationBounds::non_positive(),
            LoadingPrior::Unconstrained => TruncationBounds::unbounded(),
        }
    }

    /// Variance of the untruncated parent normal; `None` for the point mass.
    pub fn variance(&self) -> Option<f64> {
        match self {
            LoadingPrior::PointMass => None,
            LoadingPrior::Positive { sd } | LoadingPrior::Negative { sd } => Some(sd * sd),
            LoadingPrior::Unconstrained => Some(1.0),
        }
    }

    pub fn admits(&self, value: f64) -> bool {
        match self {
            LoadingPrior::PointMass => value == 0.0,
            _ => self.bounds().contains(value),
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self.variance() {
            None => 0.0,
            Some(v) => sampling::truncated_normal_unchecked(0.0, v.sqrt(), self.bounds(), rng),
        }
    }
}

/// Map one M-matrix code onto its loading prior.
pub fn loading_prior(code: Option<f64>) -> Result<LoadingPrior> {
    match code {
        None => Ok(LoadingPrior::Unconstrained),
        Some(c) if !c.is_finite() => Err(IrtmError::Validation(format!(
            "loading code must be finite or NA, got {c}"
        ))),
        Some(c) if c == 0.0 => Ok(LoadingPrior::PointMass),
        Some(c) if c > 0.0 => Ok(LoadingPrior::Positive { sd: c }),
        Some(c) => Ok(LoadingPrior::Negative { sd: -c }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentificationStatus {
    Ok,
    Underidentified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationReport {
    pub dimensions: usize,
    pub zero_count: usize,
    pub anchorable: Vec<bool>,
    pub use_anchors: bool,
    pub anchor_constraints: usize,
    pub total: usize,
    pub required: usize,
    pub status: IdentificationStatus,
    pub warnings: Vec<String>,
}

impl IdentificationReport {
    pub fn is_ok(&self) -> bool {
        self.status == IdentificationStatus::Ok
    }
}

impl std::fmt::Display for IdentificationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "identification: {:?} ({} constraints, {} required for d = {})",
            self.status, self.total, self.required, self.dimensions
        )?;
        writeln!(f, "  zero codes: {}", self.zero_count)?;
        writeln!(
            f,
            "  anchor constraints: {} (anchors {})",
            self.anchor_constraints,
            if self.use_anchors { "on" } else { "off" }
        )?;
        for w in &self.warnings {
            writeln!(f, "  warning: {w}")?;
        }
        Ok(())
    }
}

/// Count the rotation constraints supplied by zero codes and anchors.
///
/// Each anchorable dimension contributes two anchors when anchors are in use.
pub fn validate_identification(constraints: &ConstraintSet, use_anchors: bool) -> IdentificationReport {
    let d = constraints.n_dims();
    let zero_count = constraints.zero_count();
    let anchorable: Vec<bool> = (0..d).map(|j| constraints.is_anchorable(j)).collect();
    let anchor_constraints = if use_anchors {
        2 * anchorable.iter().filter(|a| **a).count()
    } else {
        0
    };
    let total = zero_count + anchor_constraints;
    let required = d * (d - 1);
    let mut warnings = Vec::new();
    for (j, a) in anchorable.iter().enumerate() {
        if !a {
            warnings.push(format!(
                "dimension '{}' has no signed codes; its orientation is not fixed by M",
                constraints.dimension_names()[j]
            ));
        }
    }
    for (k, row) in constraints.codes().rows().into_iter().enumerate() {
        if row.iter().all(|c| *c == Some(0.0)) {
            warnings.push(format!(
                "item '{}' is coded 0 on every dimension; only its intercept is estimated",
                constraints.item_ids()[k]
            ));
        }
    }
    IdentificationReport {
        dimensions: d,
        zero_count,
        anchorable,
        use_anchors,
        anchor_constraints,
        total,
        required,
        status: if total >= required {
            IdentificationStatus::Ok
        } else {
            IdentificationStatus::Underidentified
        },
        warnings,
    }
}

/// How the factor covariance draw is rescaled to unit diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SigmaNormalization {
    /// Σ_ij = Σ*_ij / √(Σ*_ii Σ*_jj).
    #[default]
    Symmetric,
    /// Σ_ij = Σ*_ij / Σ*_ii, then averaged with its transpose.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub nu0: f64,
    pub s0: Vec<Vec<f64>>,
    pub anchor_d: f64,
    pub n_iterations: usize,
    pub n_burnin: usize,
    pub thin: usize,
    pub n_chains: usize,
    pub correlated_factors: bool,
    pub inner_tmvn_sweeps: usize,
    pub seed: u64,
    pub sigma_normalization: SigmaNormalization,
}

impl Hyperparameters {
    /// Defaults for a d-dimensional model: ν0 = d, S0 = I_d, D = 4.
    pub fn for_dims(d: usize) -> Self {
        Self {
            nu0: d as f64,
            s0: (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
            anchor_d: 4.0,
            n_iterations: 3000,
            n_burnin: 2000,
            thin: 1,
            n_chains: 4,
            correlated_factors: true,
            inner_tmvn_sweeps: sampling::DEFAULT_INNER_SWEEPS,
            seed: 0,
            sigma_normalization: SigmaNormalization::Symmetric,
        }
    }

    pub fn dims(&self) -> usize {
        self.s0.len()
    }

    pub fn s0_matrix(&self) -> Array2<f64> {
        let d = self.dims();
        Array2::from_shape_fn((d, d), |(i, j)| self.s0[i][j])
    }

    pub fn n_stored(&self) -> usize {
        (self.n_iterations - self.n_burnin) / self.thin
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.s0.len() != d || self.s0.iter().any(|r| r.len() != d) {
            return Err(IrtmError::Validation(format!("S0 must be {d}x{d}")));
        }
        if !(self.nu0 > d as f64 - 1.0) {
            return Err(IrtmError::Validation(format!(
                "nu0 must exceed d - 1 = {}, got {}",
                d as f64 - 1.0,
                self.nu0
            )));
        }
        if self.n_burnin >= self.n_iterations {
            return Err(IrtmError::Validation(format!(
                "burn-in ({}) must be smaller than the iteration count ({})",
                self.n_burnin, self.n_iterations
            )));
        }
        if self.thin == 0 || self.n_chains == 0 || self.inner_tmvn_sweeps == 0 {
            return Err(IrtmError::Validation(
                "thin, chain count and inner sweeps must all be at least 1".into(),
            ));
        }
        if !(self.anchor_d > 0.0) || !self.anchor_d.is_finite() {
            return Err(IrtmError::Validation(format!(
                "anchor distance D must be positive, got {}",
                self.anchor_d
            )));
        }
        if self.n_stored() == 0 {
            return Err(IrtmError::Validation("no draws would be stored".into()));
        }
        crate::linalg::Cholesky::from_array(&self.s0_matrix())
            .map_err(|e| IrtmError::Validation(format!("S0 is not positive definite: {e}")))?;
        Ok(())
    }

    /// Stable digest of every field that affects the draws.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("hyperparameters serialize");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// One Gibbs iteration's parameters. Rows of `theta` and `mu` include anchors.
#[derive(Debug, Clone)]
pub struct ParameterState {
    pub theta: Array2<f64>,
    pub lambda: Array2<f64>,
    pub b: Array1<f64>,
    pub mu: Array2<f64>,
    pub sigma: Array2<f64>,
    pub anchor_mask: AnchorMask,
}

/// Stored draws of one chain, indexed draw-first.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDraws {
    /// (draw, unit, dim)
    pub theta: Array3<f64>,
    /// (draw, item, dim)
    pub lambda: Array3<f64>,
    /// (draw, item)
    pub b: Array2<f64>,
    /// (draw, dim, dim)
    pub sigma: Array3<f64>,
}

impl ChainDraws {
    pub fn n_draws(&self) -> usize {
        self.b.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub chains: Vec<ChainDraws>,
    pub unit_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub dimension_names: Vec<String>,
    pub hyper: Hyperparameters,
    pub constraint_digest: String,
    pub config_digest: String,
}

/// Parameter groups stored per draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Theta,
    Lambda,
    B,
    Sigma,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Theta => "theta",
            ParamGroup::Lambda => "lambda",
            ParamGroup::B => "b",
            ParamGroup::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "theta" => Some(ParamGroup::Theta),
            "lambda" => Some(ParamGroup::Lambda),
            "b" => Some(ParamGroup::B),
            "sigma" => Some(ParamGroup::Sigma),
            _ => None,
        }
    }
}

impl PosteriorDraws {
    pub fn n_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn n_draws(&self) -> usize {
        self.chains.first().map_or(0, |c| c.n_draws())
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_dims(&self) -> usize {
        self.dimension_names.len()
    }

    /// Posterior mean of θ pooled over chains (N×d).
    pub fn theta_mean(&self) -> Array2<f64> {
        pooled_mean3(self.chains.iter().map(|c| &c.theta))
    }

    pub fn lambda_mean(&self) -> Array2<f64> {
        pooled_mean3(self.chains.iter().map(|c| &c.lambda))
    }

    pub fn b_mean(&self) -> Array1<f64> {
        let mut acc = Array1::zeros(self.n_items());
        let mut n = 0usize;
        for c in &self.chains {
            acc += &c.b.sum_axis(Axis(0));
            n += c.n_draws();
        }
        acc / n as f64
    }

    pub fn sigma_mean(&self) -> Array2<f64> {
        pooled_mean3(self.chains.iter().map(|c| &c.sigma))
    }

    /// Per-coordinate chains for one parameter group, flattened in the
    /// group's natural order, each entry `[chain][draw]`.
    pub fn coordinate_chains(&self, group: ParamGroup) -> Vec<(Vec<usize>, Vec<Vec<f64>>)> {
        let mut out = Vec::new();
        match group {
            ParamGroup::Theta | ParamGroup::Lambda | ParamGroup::Sigma => {
                let pick = |c: &ChainDraws| -> Array3<f64> {
                    match group {
                        ParamGroup::Theta => c.theta.clone(),
                        ParamGroup::Lambda => c.lambda.clone(),
                        _ => c.sigma.clone(),
                    }
                };
                let arrays: Vec<Array3<f64>> = self.chains.iter().map(pick).collect();
                if arrays.is_empty() {
                    return out;
                }
                let (_, r, s) = arrays[0].dim();
                for i in 0..r {
                    for j in 0..s {
                        let chains = arrays
                            .iter()
                            .map(|a| a.slice(ndarray::s![.., i, j]).to_vec())
                            .collect();
                        out.push((vec![i, j], chains));
                    }
                }
            }
            ParamGroup::B => {
                for k in 0..self.n_items() {
                    let chains = self
                        .chains
                        .iter()
                        .map(|c| c.b.column(k).to_vec())
                        .collect();
                    out.push((vec![k], chains));
                }
            }
        }
        out
    }
}

fn pooled_mean3<'a>(arrays: impl Iterator<Item = &'a Array3<f64>>) -> Array2<f64> {
    let mut acc: Option<Array2<f64>> = None;
    let mut n = 0usize;
    for a in arrays {
        let s = a.sum_axis(Axis(0));
        n += a.shape()[0];
        acc = Some(match acc {
            Some(x) => x + &s,
            None => s,
        });
    }
    acc.map(|a| a / n as f64).unwrap_or_else(|| Array2::zeros((0, 0)))
}
