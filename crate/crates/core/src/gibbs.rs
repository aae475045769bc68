//! The constrained probit IRT Gibbs sampler.
//!
//! Internal convention: μ_ik ~ N(λ_kᵀθ_i + b_k, 1), b_k ~ N(0, 1), so
//! P(Y_ik = 1) = Φ(λ_kᵀθ_i + b_k). All conditional updates below are derived
//! from that single parameterization. One iteration runs, in order:
//! θ, μ, Σ, b, λ.

use ndarray::{Array1, Array2, Array3};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::anchors::{self, AnchorMask, AnchorSelection, AugmentedData};
use crate::error::{IrtmError, Result};
use crate::linalg::Cholesky;
use crate::model::{
    loading_prior, validate_identification, ChainDraws, ConstraintSet, Hyperparameters,
    LoadingPrior, ParameterState, PosteriorDraws, Response, ResponseMatrix, SigmaNormalization,
};
use crate::rng::RngStream;
use crate::sampling::{self, standard_normal, TruncationBounds};

/// Maximum number of Σ redraws when normalization does not yield a PD matrix.
pub const MAX_SIGMA_ATTEMPTS: usize = 100;

#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub chain_id: usize,
    pub rng: RngStream,
}

impl ChainConfig {
    pub fn new(seed: u64, chain_id: usize) -> Self {
        Self {
            chain_id,
            rng: RngStream::new(seed, chain_id as u64),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SamplerOptions {
    pub anchors: AnchorSelection,
    /// Run even when the identification check fails.
    pub force: bool,
}

/// Item-level prior bookkeeping for the λ update.
#[derive(Debug, Clone)]
struct ItemPrior {
    free: Vec<usize>,
    precision: Vec<f64>,
    bounds: Vec<TruncationBounds>,
    unbounded: bool,
    priors: Vec<LoadingPrior>,
}

/// Everything fixed over a run: augmented data, priors, anchor mask.
#[derive(Debug, Clone)]
pub struct GibbsModel {
    /// 1 = yes, 0 = no, -1 = missing; row-major N'×K.
    y: Vec<i8>,
    n_rows: usize,
    n_items: usize,
    d: usize,
    mask: AnchorMask,
    items: Vec<ItemPrior>,
    hyper: Hyperparameters,
    s0: Array2<f64>,
    real_rows: Vec<usize>,
}

impl GibbsModel {
    pub fn new(data: &ResponseMatrix, mask: AnchorMask, constraints: &ConstraintSet, hyper: &Hyperparameters) -> Result<Self> {
        let d = constraints.n_dims();
        hyper.validate(d)?;
        if constraints.n_items() != data.n_items() {
            return Err(IrtmError::Validation(format!(
                "constraint table has {} items but the data has {}",
                constraints.n_items(),
                data.n_items()
            )));
        }
        if mask.n_rows() != data.n_units() {
            return Err(IrtmError::Contract(format!(
                "anchor mask covers {} rows but the data has {}",
                mask.n_rows(),
                data.n_units()
            )));
        }
        let y = data
            .values()
            .iter()
            .map(|r| match r {
                Response::Yes => 1,
                Response::No => 0,
                Response::Missing => -1,
            })
            .collect();
        let mut items = Vec::with_capacity(constraints.n_items());
        for k in 0..constraints.n_items() {
            let priors: Vec<LoadingPrior> = (0..d)
                .map(|j| loading_prior(constraints.code(k, j)))
                .collect::<Result<_>>()?;
            let free: Vec<usize> = (0..d).filter(|&j| priors[j] != LoadingPrior::PointMass).collect();
            let precision = free
                .iter()
                .map(|&j| 1.0 / priors[j].variance().expect("free loading has a variance"))
                .collect();
            let bounds: Vec<TruncationBounds> = free.iter().map(|&j| priors[j].bounds()).collect();
            let unbounded = bounds.iter().all(|b| *b == TruncationBounds::unbounded());
            items.push(ItemPrior {
                free,
                precision,
                bounds,
                unbounded,
                priors,
            });
        }
        let real_rows = mask.real_rows();
        Ok(Self {
            y,
            n_rows: data.n_units(),
            n_items: data.n_items(),
            d,
            mask,
            items,
            s0: hyper.s0_matrix(),
            hyper: hyper.clone(),
            real_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dims(&self) -> usize {
        self.d
    }

    pub fn mask(&self) -> &AnchorMask {
        &self.mask
    }

    pub fn hyper(&self) -> &Hyperparameters {
        &self.hyper
    }

    fn draw_sigma_prior(&self, rng: &mut RngStream) -> Result<Array2<f64>> {
        if !self.hyper.correlated_factors {
            return Ok(Array2::eye(self.d));
        }
        let chol = Cholesky::from_array(&self.s0)?;
        draw_normalized_sigma(self.hyper.nu0, &chol, self.hyper.sigma_normalization, rng)
    }

    /// Draw every parameter once from its prior, then pin anchor coordinates.
    pub fn init_state(&self, rng: &mut RngStream) -> Result<ParameterState> {
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let sigma = self.draw_sigma_prior(rng)?;
        let mut theta = Array2::zeros((n, d));
        let zero = Array1::zeros(d);
        for i in 0..n {
            let row = sampling::sample_mvn(&zero, &sigma, rng)?;
            theta.row_mut(i).assign(&row);
            for (j, f) in self.mask.fixed(i).iter().enumerate() {
                if let Some(v) = f {
                    theta[[i, j]] = *v;
                }
            }
        }
        let mut lambda = Array2::zeros((k, d));
        for (kk, item) in self.items.iter().enumerate() {
            for j in 0..d {
                lambda[[kk, j]] = item.priors[j].sample(rng);
            }
        }
        let b = Array1::from_iter((0..k).map(|_| standard_normal(rng)));
        let mut mu = Array2::zeros((n, k));
        for i in 0..n {
            for kk in 0..k {
                let m: f64 = (0..d).map(|j| lambda[[kk, j]] * theta[[i, j]]).sum::<f64>() + b[kk];
                mu[[i, kk]] = m + standard_normal(rng);
            }
        }
        Ok(ParameterState {
            theta,
            lambda,
            b,
            mu,
            sigma,
            anchor_mask: self.mask.clone(),
        })
    }

    /// θ_i ~ N(V⁻¹ λᵀ(μ_i − b), V⁻¹) with V = λᵀλ + Σ⁻¹; pinned coordinates
    /// are conditioned out.
    pub fn update_theta(&self, state: &mut ParameterState, rng: &mut RngStream) -> Result<()> {
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let lambda = state.lambda.as_slice().expect("standard layout");
        let sigma_inv = Cholesky::from_array(&state.sigma)?.inverse();
        let mut v = sigma_inv;
        for kk in 0..k {
            let l = &lambda[kk * d..(kk + 1) * d];
            for a in 0..d {
                for c in 0..d {
                    v[a * d + c] += l[a] * l[c];
                }
            }
        }
        let chol = Cholesky::new(&v, d)?;
        let mu = state.mu.as_slice().expect("standard layout");
        let b = state.b.as_slice().expect("contiguous");
        let theta = state.theta.as_slice_mut().expect("standard layout");
        let mut h = vec![0.0; d];
        for i in 0..n {
            h.iter_mut().for_each(|x| *x = 0.0);
            let mu_i = &mu[i * k..(i + 1) * k];
            for kk in 0..k {
                let r = mu_i[kk] - b[kk];
                let l = &lambda[kk * d..(kk + 1) * d];
                for j in 0..d {
                    h[j] += l[j] * r;
                }
            }
            let row = &mut theta[i * d..(i + 1) * d];
            if self.mask.has_fixed(i) {
                draw_conditioned(&v, &h, self.mask.fixed(i), row, rng)?;
            } else {
                // x = L⁻ᵀ (L⁻¹ h + z)
                chol.solve_lower(&mut h);
                for x in h.iter_mut() {
                    *x += standard_normal(rng);
                }
                chol.solve_upper(&mut h);
                row.copy_from_slice(&h);
            }
        }
        Ok(())
    }

    /// μ_ik from N(λ_kᵀθ_i + b_k, 1), truncated by the observed response.
    pub fn update_mu(&self, state: &mut ParameterState, rng: &mut RngStream) {
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let lambda = state.lambda.as_slice().expect("standard layout");
        let theta = state.theta.as_slice().expect("standard layout");
        let b = state.b.as_slice().expect("contiguous");
        let mu = state.mu.as_slice_mut().expect("standard layout");
        for i in 0..n {
            let t = &theta[i * d..(i + 1) * d];
            for kk in 0..k {
                let l = &lambda[kk * d..(kk + 1) * d];
                let mut m = b[kk];
                for j in 0..d {
                    m += l[j] * t[j];
                }
                let idx = i * k + kk;
                mu[idx] = match self.y[idx] {
                    1 => sampling::truncated_normal_unchecked(m, 1.0, TruncationBounds::non_negative(), rng),
                    0 => sampling::truncated_normal_unchecked(m, 1.0, TruncationBounds::non_positive(), rng),
                    _ => m + standard_normal(rng),
                };
            }
        }
    }

    /// Σ* ~ IW(N + ν0, θᵀθ + S0) over real units, rescaled to unit diagonal.
    /// Skipped (Σ = I) for uncorrelated factors.
    pub fn update_sigma(&self, state: &mut ParameterState, rng: &mut RngStream) -> Result<()> {
        if !self.hyper.correlated_factors {
            return Ok(());
        }
        let d = self.d;
        let mut scale = self.s0.clone();
        for &i in &self.real_rows {
            let t = state.theta.row(i);
            for a in 0..d {
                for c in 0..d {
                    scale[[a, c]] += t[a] * t[c];
                }
            }
        }
        let df = self.real_rows.len() as f64 + self.hyper.nu0;
        let chol = Cholesky::from_array(&scale)?;
        state.sigma = draw_normalized_sigma(df, &chol, self.hyper.sigma_normalization, rng)?;
        Ok(())
    }

    /// b_k ~ N(V Σ_i (μ_ik − λ_kᵀθ_i), V), V = 1/(N' + 1).
    pub fn update_b(&self, state: &mut ParameterState, rng: &mut RngStream) {
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let mut theta_sum = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                theta_sum[j] += state.theta[[i, j]];
            }
        }
        let mu = state.mu.as_slice().expect("standard layout");
        let mut mu_sum = vec![0.0; k];
        for i in 0..n {
            for kk in 0..k {
                mu_sum[kk] += mu[i * k + kk];
            }
        }
        let var = 1.0 / (n as f64 + 1.0);
        let sd = var.sqrt();
        for kk in 0..k {
            let fitted: f64 = (0..d).map(|j| state.lambda[[kk, j]] * theta_sum[j]).sum();
            let mean = var * (mu_sum[kk] - fitted);
            state.b[kk] = mean + sd * standard_normal(rng);
        }
    }

    /// λ_k from its truncated normal conditional over the non-zero-coded
    /// dimensions: precision θᵀθ + Ω⁻¹, mean V⁻¹ θᵀ(μ_k − b_k).
    pub fn update_lambda(&self, state: &mut ParameterState, rng: &mut RngStream) -> Result<()> {
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let theta = state.theta.as_slice().expect("standard layout");
        let mu = state.mu.as_slice().expect("standard layout");
        let mut tt = vec![0.0; d * d];
        // g[j * k + kk] = Σ_i θ_ij (μ_ik − b_k)
        let mut g = vec![0.0; d * k];
        for i in 0..n {
            let t = &theta[i * d..(i + 1) * d];
            for a in 0..d {
                for c in 0..d {
                    tt[a * d + c] += t[a] * t[c];
                }
            }
            let mu_i = &mu[i * k..(i + 1) * k];
            for j in 0..d {
                let tj = t[j];
                let gj = &mut g[j * k..(j + 1) * k];
                for kk in 0..k {
                    gj[kk] += tj * (mu_i[kk] - state.b[kk]);
                }
            }
        }
        let mut v = Vec::with_capacity(d * d);
        let mut mean = Vec::with_capacity(d);
        let mut x = Vec::with_capacity(d);
        for (kk, item) in self.items.iter().enumerate() {
            let nf = item.free.len();
            if nf == 0 {
                continue;
            }
            v.clear();
            for (a, &ja) in item.free.iter().enumerate() {
                for (c, &jc) in item.free.iter().enumerate() {
                    let mut val = tt[ja * d + jc];
                    if a == c {
                        val += item.precision[a];
                    }
                    v.push(val);
                }
            }
            let chol = Cholesky::new(&v, nf).map_err(|e| {
                IrtmError::Contract(format!("lambda precision for item {kk} is singular: {e}"))
            })?;
            mean.clear();
            mean.extend(item.free.iter().map(|&j| g[j * k + kk]));
            if item.unbounded {
                chol.solve_lower(&mut mean);
                for m in mean.iter_mut() {
                    *m += standard_normal(rng);
                }
                chol.solve_upper(&mut mean);
                for (a, &j) in item.free.iter().enumerate() {
                    state.lambda[[kk, j]] = mean[a];
                }
            } else {
                chol.solve(&mut mean);
                x.clear();
                x.extend(item.free.iter().map(|&j| state.lambda[[kk, j]]));
                sampling::tmvn_gibbs_sweeps(
                    &mean,
                    &v,
                    &item.bounds,
                    &mut x,
                    self.hyper.inner_tmvn_sweeps,
                    rng,
                );
                for (a, &j) in item.free.iter().enumerate() {
                    state.lambda[[kk, j]] = x[a];
                }
            }
        }
        Ok(())
    }

    /// One full sweep in the fixed order θ, μ, Σ, b, λ.
    pub fn step(&self, state: &mut ParameterState, rng: &mut RngStream, iteration: usize) -> Result<()> {
        let wrap = |context: &str, e: IrtmError| IrtmError::Sampler {
            iteration,
            context: context.to_string(),
            source: Box::new(e),
        };
        self.update_theta(state, rng).map_err(|e| wrap("theta update", e))?;
        self.update_mu(state, rng);
        self.update_sigma(state, rng).map_err(|e| wrap("sigma update", e))?;
        self.update_b(state, rng);
        self.update_lambda(state, rng).map_err(|e| wrap("lambda update", e))?;
        debug_assert!(self.state_is_consistent(state));
        Ok(())
    }

    /// Sign compliance of λ and pinned anchor coordinates.
    pub fn state_is_consistent(&self, state: &ParameterState) -> bool {
        let lambda_ok = self.items.iter().enumerate().all(|(kk, item)| {
            (0..self.d).all(|j| item.priors[j].admits(state.lambda[[kk, j]]))
        });
        let anchors_ok = (0..self.n_rows).all(|i| {
            self.mask
                .fixed(i)
                .iter()
                .enumerate()
                .all(|(j, f)| f.is_none_or(|v| state.theta[[i, j]] == v))
        });
        lambda_ok && anchors_ok
    }

    /// Run one chain and keep the thinned post-burn-in draws (all rows,
    /// anchors included).
    pub fn run_chain(&self, config: &ChainConfig) -> Result<ChainDraws> {
        let mut rng = config.rng.clone();
        let h = &self.hyper;
        let n_store = h.n_stored();
        let (n, k, d) = (self.n_rows, self.n_items, self.d);
        let mut out = ChainDraws {
            theta: Array3::zeros((n_store, n, d)),
            lambda: Array3::zeros((n_store, k, d)),
            b: Array2::zeros((n_store, k)),
            sigma: Array3::zeros((n_store, d, d)),
        };
        let mut state = self.init_state(&mut rng)?;
        let mut slot = 0;
        for s in 0..h.n_iterations {
            self.step(&mut state, &mut rng, s)?;
            if s >= h.n_burnin && (s - h.n_burnin + 1) % h.thin == 0 && slot < n_store {
                out.theta.index_axis_mut(ndarray::Axis(0), slot).assign(&state.theta);
                out.lambda.index_axis_mut(ndarray::Axis(0), slot).assign(&state.lambda);
                out.b.row_mut(slot).assign(&state.b);
                out.sigma.index_axis_mut(ndarray::Axis(0), slot).assign(&state.sigma);
                slot += 1;
            }
        }
        Ok(out)
    }
}

/// Draw θ_i with some coordinates pinned: the free block has precision V_UU
/// and linear term h_U − V_UF θ_F.
fn draw_conditioned(
    v: &[f64],
    h: &[f64],
    fixed: &[Option<f64>],
    row: &mut [f64],
    rng: &mut RngStream,
) -> Result<()> {
    let d = fixed.len();
    let free: Vec<usize> = (0..d).filter(|&j| fixed[j].is_none()).collect();
    for (j, f) in fixed.iter().enumerate() {
        if let Some(val) = f {
            row[j] = *val;
        }
    }
    if free.is_empty() {
        return Ok(());
    }
    let nf = free.len();
    let mut vuu = vec![0.0; nf * nf];
    let mut rhs = vec![0.0; nf];
    for (a, &ja) in free.iter().enumerate() {
        for (c, &jc) in free.iter().enumerate() {
            vuu[a * nf + c] = v[ja * d + jc];
        }
        let mut s = h[ja];
        for (jf, f) in fixed.iter().enumerate() {
            if let Some(val) = f {
                s -= v[ja * d + jf] * val;
            }
        }
        rhs[a] = s;
    }
    let chol = Cholesky::new(&vuu, nf)?;
    chol.solve_lower(&mut rhs);
    for x in rhs.iter_mut() {
        *x += standard_normal(rng);
    }
    chol.solve_upper(&mut rhs);
    for (a, &j) in free.iter().enumerate() {
        row[j] = rhs[a];
    }
    Ok(())
}

/// Rescale a covariance draw to unit diagonal.
pub fn normalize_sigma(sigma_star: &Array2<f64>, mode: SigmaNormalization) -> Array2<f64> {
    let d = sigma_star.nrows();
    let mut out = Array2::eye(d);
    match mode {
        SigmaNormalization::Symmetric => {
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        out[[i, j]] = sigma_star[[i, j]] / (sigma_star[[i, i]] * sigma_star[[j, j]]).sqrt();
                    }
                }
            }
        }
        SigmaNormalization::Literal => {
            for i in 0..d {
                for j in 0..d {
                    if i != j {
                        let a = sigma_star[[i, j]] / sigma_star[[i, i]];
                        let b = sigma_star[[j, i]] / sigma_star[[j, j]];
                        out[[i, j]] = 0.5 * (a + b);
                    }
                }
            }
        }
    }
    out
}

fn draw_normalized_sigma(
    df: f64,
    scale_chol: &Cholesky,
    mode: SigmaNormalization,
    rng: &mut RngStream,
) -> Result<Array2<f64>> {
    let mut last_err = None;
    for _ in 0..MAX_SIGMA_ATTEMPTS {
        let star = sampling::inverse_wishart_from_factor(df, scale_chol, rng);
        let sigma = normalize_sigma(&star, mode);
        match Cholesky::from_array(&sigma) {
            Ok(_) => return Ok(sigma),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

/// Digest identifying a fit: hyperparameters, constraints, anchor choice and data.
pub fn config_digest(
    data: &ResponseMatrix,
    constraints: &ConstraintSet,
    hyper: &Hyperparameters,
    anchors: &AnchorSelection,
) -> String {
    let mut h = Sha256::new();
    h.update(hyper.digest().as_bytes());
    h.update(constraints.digest().as_bytes());
    h.update(serde_json::to_string(anchors).expect("selection serializes").as_bytes());
    h.update(format!("{}x{}", data.n_units(), data.n_items()).as_bytes());
    for id in data.unit_ids().iter().chain(data.item_ids()) {
        h.update(id.as_bytes());
        h.update(b"\x1f");
    }
    let cells: Vec<u8> = data
        .values()
        .iter()
        .map(|r| match r {
            Response::No => b'0',
            Response::Yes => b'1',
            Response::Missing => b'.',
        })
        .collect();
    h.update(&cells);
    hex::encode(h.finalize())
}

/// Build the sampler inputs (anchors included) without running it.
pub fn prepare(
    data: &ResponseMatrix,
    constraints: &ConstraintSet,
    hyper: &Hyperparameters,
    opts: &SamplerOptions,
) -> Result<(GibbsModel, AugmentedData)> {
    let report = validate_identification(constraints, !opts.anchors.is_none());
    if !report.is_ok() && !opts.force {
        return Err(IrtmError::Underidentified(report.to_string()));
    }
    let augmented = anchors::augment_with_anchors(data, constraints, hyper.anchor_d, &opts.anchors)?;
    let model = GibbsModel::new(&augmented.data, augmented.mask.clone(), constraints, hyper)?;
    Ok((model, augmented))
}

/// Run `n_chains` independent chains and return anchor-free draws.
pub fn run_sampler(
    data: &ResponseMatrix,
    constraints: &ConstraintSet,
    hyper: &Hyperparameters,
    opts: &SamplerOptions,
) -> Result<PosteriorDraws> {
    let (model, augmented) = prepare(data, constraints, hyper, opts)?;
    let chains: Vec<ChainDraws> = (0..hyper.n_chains)
        .into_par_iter()
        .map(|c| model.run_chain(&ChainConfig::new(hyper.seed, c)))
        .collect::<Result<_>>()?;
    let full = PosteriorDraws {
        chains,
        unit_ids: augmented.data.unit_ids().to_vec(),
        item_ids: data.item_ids().to_vec(),
        dimension_names: constraints.dimension_names().to_vec(),
        hyper: hyper.clone(),
        constraint_digest: constraints.digest(),
        config_digest: config_digest(data, constraints, hyper, &opts.anchors),
    };
    Ok(anchors::strip_anchors(&full, &augmented.mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_model(codes: Array2<Option<f64>>, values: Array2<Response>, correlated: bool) -> GibbsModel {
        let c = ConstraintSet::from_codes(codes).unwrap();
        let data = ResponseMatrix::from_values(values).unwrap();
        let mut h = Hyperparameters::for_dims(c.n_dims());
        h.correlated_factors = correlated;
        let mask = AnchorMask::empty(data.n_units(), c.n_dims());
        GibbsModel::new(&data, mask, &c, &h).unwrap()
    }

    #[test]
    fn symmetric_normalization_example() {
        let s = array![[4.0, 2.0], [2.0, 4.0]];
        let n = normalize_sigma(&s, SigmaNormalization::Symmetric);
        assert_eq!(n, array![[1.0, 0.5], [0.5, 1.0]]);
        let diag = array![[3.0, 0.0], [0.0, 7.0]];
        assert_eq!(normalize_sigma(&diag, SigmaNormalization::Symmetric), Array2::<f64>::eye(2));
    }

    #[test]
    fn literal_normalization_is_symmetrized() {
        let s = array![[4.0, 2.0], [2.0, 1.0]];
        let n = normalize_sigma(&s, SigmaNormalization::Literal);
        // 2/4 and 2/1 averaged
        assert_eq!(n[[0, 1]], 1.25);
        assert_eq!(n[[0, 1]], n[[1, 0]]);
    }

    #[test]
    fn zero_coded_item_initializes_to_zero() {
        let codes = array![[Some(0.0), Some(0.0)], [Some(1.0), Some(-1.0)], [None, Some(0.0)]];
        let values = Array2::from_elem((4, 3), Response::Yes);
        let m = tiny_model(codes, values, false);
        let mut rng = RngStream::new(1, 0);
        for _ in 0..20 {
            let s = m.init_state(&mut rng).unwrap();
            assert_eq!(s.lambda.row(0).to_vec(), vec![0.0, 0.0]);
            assert!(s.lambda[[1, 0]] >= 0.0 && s.lambda[[1, 1]] <= 0.0);
            assert_eq!(s.lambda[[2, 1]], 0.0);
            assert_eq!(s.sigma, Array2::<f64>::eye(2));
        }
    }

    #[test]
    fn correlated_init_has_unit_diagonal() {
        let codes = array![[Some(1.0), Some(0.0)], [Some(0.0), Some(1.0)]];
        let m = tiny_model(codes, Array2::from_elem((3, 2), Response::No), true);
        let s = m.init_state(&mut RngStream::new(2, 0)).unwrap();
        assert_eq!(s.sigma[[0, 0]], 1.0);
        assert_eq!(s.sigma[[1, 1]], 1.0);
        assert!(s.sigma[[0, 1]].abs() < 1.0);
    }

    #[test]
    fn theta_with_zero_loadings_follows_prior() {
        let codes = array![[Some(0.0)], [Some(0.0)]];
        let m = tiny_model(codes, Array2::from_elem((1, 2), Response::Yes), false);
        let mut rng = RngStream::new(3, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        s.mu.fill(5.0);
        let xs: Vec<f64> = (0..50_000)
            .map(|_| {
                m.update_theta(&mut s, &mut rng).unwrap();
                s.theta[[0, 0]]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn theta_conjugate_update_one_dimension() {
        // λ = 1, Σ = 1, μ + ... : with the +b convention μ_i − b = 2 gives θ ~ N(1, 1/2)
        let codes = array![[None]];
        let m = tiny_model(codes, Array2::from_elem((1, 1), Response::Yes), false);
        let mut rng = RngStream::new(4, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        s.lambda[[0, 0]] = 1.0;
        s.b[0] = 0.5;
        s.mu[[0, 0]] = 2.5;
        let xs: Vec<f64> = (0..80_000)
            .map(|_| {
                m.update_theta(&mut s, &mut rng).unwrap();
                s.theta[[0, 0]]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var - 0.5).abs() < 0.01, "var {var}");
    }

    #[test]
    fn mu_respects_responses_and_imputes_missing() {
        let codes = array![[None], [None], [None]];
        let values = array![[Response::Yes, Response::No, Response::Missing]];
        let m = tiny_model(codes, values, false);
        let mut rng = RngStream::new(5, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        s.lambda.fill(0.0);
        s.b.fill(0.0);
        let mut acc = 0.0;
        let reps = 50_000;
        for _ in 0..reps {
            m.update_mu(&mut s, &mut rng);
            assert!(s.mu[[0, 0]] >= 0.0);
            assert!(s.mu[[0, 1]] <= 0.0);
            acc += s.mu[[0, 2]];
        }
        assert!((acc / reps as f64).abs() < 0.02);
    }

    #[test]
    fn b_update_matches_conjugate_mean() {
        // λ = 0, μ column constant c: b ~ N(cN/(N+1), 1/(N+1))
        let n = 9;
        let codes = array![[Some(0.0)]];
        let m = tiny_model(codes, Array2::from_elem((n, 1), Response::Yes), false);
        let mut rng = RngStream::new(6, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        s.mu.fill(2.0);
        let xs: Vec<f64> = (0..60_000)
            .map(|_| {
                m.update_b(&mut s, &mut rng);
                s.b[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0 * 9.0 / 10.0).abs() < 0.01, "mean {mean}");
        assert!((var - 0.1).abs() < 0.005, "var {var}");
    }

    #[test]
    fn lambda_zero_codes_stay_zero_and_signs_hold() {
        let codes = array![[Some(0.0), Some(0.0)], [Some(1.0), Some(-1.0)], [None, None]];
        let m = tiny_model(codes, Array2::from_elem((6, 3), Response::Yes), false);
        let mut rng = RngStream::new(7, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        for it in 0..500 {
            m.step(&mut s, &mut rng, it).unwrap();
            assert_eq!(s.lambda.row(0).to_vec(), vec![0.0, 0.0]);
            assert!(s.lambda[[1, 0]] >= 0.0);
            assert!(s.lambda[[1, 1]] <= 0.0);
        }
    }

    #[test]
    fn lambda_deep_in_feasible_region_matches_unconstrained_mean() {
        // strong positive association: truncation at 0 is irrelevant
        let n = 400;
        let codes = array![[Some(1.0)]];
        let m = tiny_model(codes.clone(), Array2::from_elem((n, 1), Response::Yes), false);
        let free = tiny_model(array![[None]], Array2::from_elem((n, 1), Response::Yes), false);
        let mut rng = RngStream::new(8, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        for i in 0..n {
            s.theta[[i, 0]] = -2.0 + 4.0 * i as f64 / n as f64;
            s.mu[[i, 0]] = 1.5 * s.theta[[i, 0]] + 0.3;
        }
        s.b[0] = 0.3;
        let mut s2 = s.clone();
        let reps = 20_000;
        let (mut a, mut c) = (0.0, 0.0);
        for _ in 0..reps {
            m.update_lambda(&mut s, &mut rng).unwrap();
            free.update_lambda(&mut s2, &mut rng).unwrap();
            assert!(s.lambda[[0, 0]] >= 0.0);
            a += s.lambda[[0, 0]];
            c += s2.lambda[[0, 0]];
        }
        let (a, c) = (a / reps as f64, c / reps as f64);
        // closed form: Σθμ / (Σθ² + 1)
        let (mut num, mut den) = (0.0, 1.0);
        for i in 0..n {
            num += s.theta[[i, 0]] * (s.mu[[i, 0]] - 0.3);
            den += s.theta[[i, 0]].powi(2);
        }
        assert!((a - num / den).abs() < 0.01, "constrained {a} vs {}", num / den);
        assert!((c - num / den).abs() < 0.01, "free {c}");
    }

    #[test]
    fn unconstrained_lambda_takes_both_signs() {
        let codes = array![[None]];
        let m = tiny_model(codes, Array2::from_elem((2, 1), Response::Yes), false);
        let mut rng = RngStream::new(10, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        s.theta.fill(0.0);
        let mut seen = (false, false);
        for _ in 0..200 {
            m.update_lambda(&mut s, &mut rng).unwrap();
            if s.lambda[[0, 0]] > 0.0 {
                seen.0 = true;
            } else {
                seen.1 = true;
            }
        }
        assert!(seen.0 && seen.1);
    }

    #[test]
    fn uncorrelated_sigma_update_is_skipped() {
        let codes = array![[Some(1.0), Some(0.0)], [Some(0.0), Some(1.0)]];
        let m = tiny_model(codes, Array2::from_elem((5, 2), Response::Yes), false);
        let mut rng = RngStream::new(11, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        m.update_sigma(&mut s, &mut rng).unwrap();
        assert_eq!(s.sigma, Array2::<f64>::eye(2));
    }

    #[test]
    fn correlated_sigma_draws_are_correlation_matrices() {
        let codes = array![[Some(1.0), Some(0.0)], [Some(0.0), Some(1.0)]];
        let m = tiny_model(codes, Array2::from_elem((30, 2), Response::Yes), true);
        let mut rng = RngStream::new(12, 0);
        let mut s = m.init_state(&mut rng).unwrap();
        for i in 0..30 {
            s.theta[[i, 0]] = i as f64 / 10.0 - 1.5;
            s.theta[[i, 1]] = 0.8 * s.theta[[i, 0]] + 0.1 * ((i * 7) % 5) as f64;
        }
        for _ in 0..200 {
            m.update_sigma(&mut s, &mut rng).unwrap();
            assert_eq!(s.sigma[[0, 0]], 1.0);
            assert_eq!(s.sigma[[1, 1]], 1.0);
            assert_eq!(s.sigma[[0, 1]], s.sigma[[1, 0]]);
            assert!(s.sigma[[0, 1]].abs() < 1.0);
        }
    }
}
