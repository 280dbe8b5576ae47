//! Non-negative CP decomposition fitted by hierarchical alternating least
//! squares (HALS), with multi-restart selection.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::tensor::{self, mttkrp, Matrix, Tensor3};

/// Rank-R CP model `xhat = sum_r lambda_r u_r (o) v_r (o) t_r` with
/// non-negative weights and factors.
#[derive(Debug, Clone, PartialEq)]
pub struct CpModel {
    lambda: Vec<f64>,
    u: Matrix,
    v: Matrix,
    t: Matrix,
}

impl CpModel {
    pub fn from_parts(lambda: Vec<f64>, u: Matrix, v: Matrix, t: Matrix) -> Result<Self> {
        let r = lambda.len();
        if r == 0 {
            return Err(Error::invalid("model rank must be at least 1".to_string()));
        }
        for (name, m) in [("u", &u), ("v", &v), ("t", &t)] {
            if m.cols() != r {
                return Err(Error::invalid(format!(
                    "factor {name} has {} columns, expected rank {r}",
                    m.cols()
                )));
            }
            if m.rows() == 0 {
                return Err(Error::invalid(format!("factor {name} has zero rows")));
            }
            if m.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::numerical(format!(
                    "factor {name} must be finite and non-negative"
                )));
            }
        }
        if lambda.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::numerical("lambda must be finite and non-negative".to_string()));
        }
        Ok(CpModel { lambda, u, v, t })
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.rows(), self.v.rows(), self.t.rows())
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    pub fn factor(&self, mode: usize) -> Result<&Matrix> {
        match mode {
            1 => Ok(&self.u),
            2 => Ok(&self.v),
            3 => Ok(&self.t),
            _ => Err(Error::invalid(format!("mode must be 1, 2 or 3, got {mode}"))),
        }
    }

    pub fn reconstruct(&self) -> Tensor3 {
        tensor::reconstruct(self)
    }

    /// Unit-normalizes every factor column, folds the norms into lambda, and
    /// reorders components by descending lambda (stable, so ties keep their
    /// relative order). Zero columns keep weight 0 and sort last.
    pub fn normalized(mut self) -> CpModel {
        let r = self.rank();
        for c in 0..r {
            for m in [&mut self.u, &mut self.v, &mut self.t] {
                let norm = m.col_norm(c);
                if norm > 0.0 {
                    m.scale_col(c, 1.0 / norm);
                    self.lambda[c] *= norm;
                } else {
                    self.lambda[c] = 0.0;
                }
            }
        }
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| {
            self.lambda[b].partial_cmp(&self.lambda[a]).expect("lambda is finite")
        });
        if order.iter().enumerate().any(|(dst, &src)| dst != src) {
            let lambda = order.iter().map(|&c| self.lambda[c]).collect();
            let permute = |m: &Matrix| {
                let mut out = Matrix::zeros(m.rows(), r);
                for (dst, &src) in order.iter().enumerate() {
                    for row in 0..m.rows() {
                        out.set(row, dst, m.get(row, src));
                    }
                }
                out
            };
            let (u, v, t) = (permute(&self.u), permute(&self.v), permute(&self.t));
            return CpModel { lambda, u, v, t };
        }
        self
    }
}

/// Fit options. `epsilon_div` guards the HALS divisor; `tol` stops the sweep
/// loop once the per-sweep change in relative error drops below it.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub rank: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    pub tol: f64,
    pub n_restarts: usize,
    pub epsilon_div: f64,
}

impl FitConfig {
    pub fn new(rank: usize, seed: u64) -> Self {
        FitConfig {
            rank,
            seed,
            max_sweeps: 500,
            tol: 1e-8,
            n_restarts: 10,
            epsilon_div: 1e-12,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1".to_string()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::invalid("max_sweeps must be at least 1".to_string()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be non-negative".to_string()));
        }
        if self.n_restarts == 0 {
            return Err(Error::invalid("n_restarts must be at least 1".to_string()));
        }
        if !(self.epsilon_div > 0.0) {
            return Err(Error::invalid("epsilon_div must be positive".to_string()));
        }
        Ok(())
    }
}

/// A factor column that collapsed to all zeros and was re-seeded at the start
/// of the following sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReseedEvent {
    /// Sweep (1-based) whose update zeroed the column.
    pub sweep: usize,
    pub mode: usize,
    pub col: usize,
}

/// Per-fit diagnostics: the relative error after every sweep plus any
/// degenerate-column events.
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub seed: u64,
    pub rel_errors: Vec<f64>,
    pub reseeds: Vec<ReseedEvent>,
    pub converged: bool,
}

impl FitTrace {
    pub fn sweeps(&self) -> usize {
        self.rel_errors.len()
    }

    pub fn final_relative_error(&self) -> f64 {
        self.rel_errors.last().copied().unwrap_or(f64::NAN)
    }
}

/// Uniform (0,1] random model with unit weights. Draw order is fixed (u, v, t,
/// each row-major) so a seed pins the exact initialization.
pub fn init_random(dims: (usize, usize, usize), rank: usize, seed: u64) -> Result<CpModel> {
    if rank == 0 {
        return Err(Error::invalid("rank must be at least 1".to_string()));
    }
    let (i, j, k) = dims;
    if i == 0 || j == 0 || k == 0 {
        return Err(Error::invalid(format!("dims must be positive, got {i}x{j}x{k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize| -> Matrix {
        let data = (0..rows * rank).map(|_| 1.0 - rng.random::<f64>()).collect();
        Matrix::from_vec(rows, rank, data).expect("sized buffer")
    };
    let (u, v, t) = (draw(i), draw(j), draw(k));
    CpModel::from_parts(vec![1.0; rank], u, v, t)
}

/// One HALS update of a single mode's factor. Returns the columns that ended
/// the update all-zero.
fn update_mode(
    x: &Tensor3,
    u: &mut Matrix,
    v: &mut Matrix,
    t: &mut Matrix,
    mode: usize,
    eps: f64,
) -> Result<Vec<usize>> {
    let m = mttkrp(x, [u, v, t], mode)?;
    let (target, g) = match mode {
        1 => {
            let g = hadamard(&v.gram(), &t.gram());
            (u, g)
        }
        2 => {
            let g = hadamard(&u.gram(), &t.gram());
            (v, g)
        }
        _ => {
            let g = hadamard(&u.gram(), &v.gram());
            (t, g)
        }
    };
    let rank = g.rows();
    let n = target.rows();
    let mut dead = Vec::new();
    for r in 0..rank {
        let g_row = g.row(r);
        let denom = g_row[r].max(eps);
        let mut all_zero = true;
        for i in 0..n {
            let row = target.row_mut(i);
            let mut dot = 0.0;
            for (c, &gv) in g_row.iter().enumerate() {
                dot += row[c] * gv;
            }
            let next = (row[r] + (m.get(i, r) - dot) / denom).max(0.0);
            row[r] = next;
            if next != 0.0 {
                all_zero = false;
            }
        }
        if all_zero {
            dead.push(r);
        }
    }
    Ok(dead)
}

fn hadamard(a: &Matrix, b: &Matrix) -> Matrix {
    debug_assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
        *o *= bv;
    }
    out
}

/// One full HALS sweep (modes 1, 2, 3 in order) over a unit-weight model.
/// Any lambda weights are folded into the mode-1 factor first. The fit loop
/// handles degenerate columns itself; this entry point leaves them at zero.
pub fn hals_sweep(x: &Tensor3, model: &mut CpModel, eps: f64) -> Result<()> {
    check_fit_input(x, model.dims())?;
    if !(eps > 0.0) {
        return Err(Error::invalid("eps must be positive".to_string()));
    }
    for c in 0..model.rank() {
        let l = model.lambda[c];
        if l != 1.0 {
            model.u.scale_col(c, l);
            model.lambda[c] = 1.0;
        }
    }
    for mode in 1..=3 {
        update_mode(x, &mut model.u, &mut model.v, &mut model.t, mode, eps)?;
    }
    debug_assert!(model.u.data().iter().all(|&v| v >= 0.0));
    debug_assert!(model.v.data().iter().all(|&v| v >= 0.0));
    debug_assert!(model.t.data().iter().all(|&v| v >= 0.0));
    Ok(())
}

fn check_fit_input(x: &Tensor3, dims: (usize, usize, usize)) -> Result<()> {
    if x.dims() != dims {
        return Err(Error::invalid(format!(
            "tensor dims {:?} do not match model dims {:?}",
            x.dims(),
            dims
        )));
    }
    let missing = x.n_missing();
    if missing > 0 {
        return Err(Error::data(format!(
            "tensor has {missing} missing cells; impute before fitting"
        )));
    }
    if !x.all_finite() {
        return Err(Error::numerical("tensor contains non-finite values".to_string()));
    }
    Ok(())
}

const MAX_RESEEDS_PER_COL: usize = 3;

/// Single-start HALS fit. Returns the column-normalized model plus a trace
/// with the relative error recorded after every sweep.
pub fn fit(x: &Tensor3, cfg: &FitConfig) -> Result<(CpModel, FitTrace)> {
    cfg.validate()?;
    check_fit_input(x, x.dims())?;
    let norm_x = x.frobenius_norm();
    if norm_x == 0.0 {
        return Err(Error::numerical("cannot fit a zero tensor".to_string()));
    }
    let mean_x = x.values().iter().sum::<f64>() / x.len() as f64;

    let model = init_random(x.dims(), cfg.rank, cfg.seed)?;
    let CpModel { mut u, mut v, mut t, .. } = model;
    // Same stream as the init, so the whole fit is pinned by one seed.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);

    let ones = vec![1.0; cfg.rank];
    let mut trace = FitTrace { seed: cfg.seed, rel_errors: Vec::new(), reseeds: Vec::new(), converged: false };
    let mut pending: Vec<(usize, usize)> = Vec::new(); // (mode, col) to re-seed
    let mut reseed_counts = vec![[0usize; 3]; cfg.rank];
    let mut prev_err: Option<f64> = None;

    for sweep in 1..=cfg.max_sweeps {
        for &(mode, col) in &pending {
            let target = match mode {
                1 => &mut u,
                2 => &mut v,
                _ => &mut t,
            };
            let scale = 1e-3 * mean_x.max(f64::MIN_POSITIVE);
            for i in 0..target.rows() {
                target.set(i, col, (1.0 - rng.random::<f64>()) * scale);
            }
        }
        pending.clear();

        for mode in 1..=3 {
            let dead = update_mode(x, &mut u, &mut v, &mut t, mode, cfg.epsilon_div)?;
            for col in dead {
                // past the cap the column is accepted as dead and left alone
                if reseed_counts[col][mode - 1] >= MAX_RESEEDS_PER_COL {
                    continue;
                }
                reseed_counts[col][mode - 1] += 1;
                trace.reseeds.push(ReseedEvent { sweep, mode, col });
                pending.push((mode, col));
            }
        }

        let rel = tensor::residual_norm_parts(x, &ones, &u, &v, &t) / norm_x;
        if !rel.is_finite() {
            return Err(Error::numerical(format!("objective diverged at sweep {sweep}")));
        }
        trace.rel_errors.push(rel);
        if let Some(prev) = prev_err {
            if (prev - rel).abs() < cfg.tol {
                trace.converged = true;
                break;
            }
        }
        prev_err = Some(rel);
    }

    let model = CpModel::from_parts(ones, u, v, t)?.normalized();
    Ok((model, trace))
}

/// Outcome of one restart inside `fit_restarts`.
#[derive(Debug, Clone)]
pub struct RestartDiag {
    pub seed: u64,
    pub converged: bool,
    pub sweeps: usize,
    pub relative_error: f64,
    /// Absent when the rescaled model was too degenerate to score.
    pub core_consistency: Option<f64>,
    pub selected: bool,
}

/// Runs `cfg.n_restarts` independent fits with seeds `seed, seed+1, ...` and
/// keeps the one with the highest core consistency. Candidates without a
/// score rank below any scored one; remaining ties go to lower relative
/// error, then lower seed.
pub fn fit_restarts(x: &Tensor3, cfg: &FitConfig) -> Result<(CpModel, FitTrace, Vec<RestartDiag>)> {
    cfg.validate()?;
    check_fit_input(x, x.dims())?;
    let runs: Vec<Result<(CpModel, FitTrace)>> = (0..cfg.n_restarts)
        .into_par_iter()
        .map(|i| {
            let mut sub = cfg.clone();
            sub.seed = cfg.seed.wrapping_add(i as u64);
            sub.n_restarts = 1;
            fit(x, &sub)
        })
        .collect();

    let mut fits = Vec::with_capacity(runs.len());
    for run in runs {
        fits.push(run?);
    }
    let mut diags: Vec<RestartDiag> = fits
        .iter()
        .map(|(model, trace)| RestartDiag {
            seed: trace.seed,
            converged: trace.converged,
            sweeps: trace.sweeps(),
            relative_error: trace.final_relative_error(),
            core_consistency: diagnostics::corcondia(x, model).ok(),
            selected: false,
        })
        .collect();

    let best = (0..fits.len())
        .min_by(|&a, &b| {
            let ca = diags[a].core_consistency;
            let cb = diags[b].core_consistency;
            // higher score first; None sorts below any score
            match (ca, cb) {
                (Some(x), Some(y)) => y.partial_cmp(&x).expect("scores are finite"),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            }
            .then(
                diags[a]
                    .relative_error
                    .partial_cmp(&diags[b].relative_error)
                    .expect("errors are finite"),
            )
            .then(diags[a].seed.cmp(&diags[b].seed))
        })
        .expect("n_restarts >= 1");
    diags[best].selected = true;
    let (model, trace) = fits.swap_remove(best);
    Ok((model, trace, diags))
}
