//! Model-quality diagnostics: core consistency, factor match score, rank
//! scanning with an elbow rule, and a synthetic-data generator for all of the
//! above.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::decomp::{fit, CpModel, FitConfig};
use crate::error::{Error, Result};
use crate::featurize::TensorDataset;
use crate::linalg::pinv;
use crate::tensor::{reconstruct, Matrix, Tensor3};

const PINV_REL_TOL: f64 = 1e-12;

/// Core array `g = x x1 u+ x2 v+ x3 t+` of the lambda-rescaled model,
/// flattened with index `d + R*(e + R*f)`. This is the array the core
/// consistency score is computed from; exposed so alternative solvers can be
/// checked against it.
pub fn corcondia_core(x: &Tensor3, model: &CpModel) -> Result<Vec<f64>> {
    if x.dims() != model.dims() {
        return Err(Error::invalid(format!(
            "tensor dims {:?} do not match model dims {:?}",
            x.dims(),
            model.dims()
        )));
    }
    if x.n_missing() > 0 {
        return Err(Error::data("core consistency needs a fully observed tensor".to_string()));
    }
    let model = model.clone().normalized();
    let r = model.rank();
    let (i_dim, j_dim, k_dim) = x.dims();

    // spread the weights evenly over the three modes
    let mut scaled = Vec::with_capacity(3);
    for mode in 1..=3 {
        let src = model.factor(mode).expect("mode in range");
        let mut m = src.clone();
        for c in 0..r {
            m.scale_col(c, model.lambda()[c].cbrt());
        }
        let (p, rank) = pinv(&m, PINV_REL_TOL)?;
        if rank < r {
            return Err(Error::numerical(format!(
                "mode {mode} rescaled factor is rank deficient ({rank} < {r}); core consistency undefined"
            )));
        }
        scaled.push(p); // r x mode_dim
    }
    let (up, vp, tp) = (&scaled[0], &scaled[1], &scaled[2]);

    // y1[d,j,k] = sum_i up[d,i] x[i,j,k]
    let mut y1 = vec![0.0; r * j_dim * k_dim];
    for k in 0..k_dim {
        for j in 0..j_dim {
            for d in 0..r {
                let mut acc = 0.0;
                for i in 0..i_dim {
                    acc += up.get(d, i) * x.get(i, j, k);
                }
                y1[d + r * (j + j_dim * k)] = acc;
            }
        }
    }
    // y2[d,e,k] = sum_j vp[e,j] y1[d,j,k]
    let mut y2 = vec![0.0; r * r * k_dim];
    for k in 0..k_dim {
        for e in 0..r {
            for d in 0..r {
                let mut acc = 0.0;
                for j in 0..j_dim {
                    acc += vp.get(e, j) * y1[d + r * (j + j_dim * k)];
                }
                y2[d + r * (e + r * k)] = acc;
            }
        }
    }
    // g[d,e,f] = sum_k tp[f,k] y2[d,e,k]
    let mut g = vec![0.0; r * r * r];
    for f in 0..r {
        for e in 0..r {
            for d in 0..r {
                let mut acc = 0.0;
                for k in 0..k_dim {
                    acc += tp.get(f, k) * y2[d + r * (e + r * k)];
                }
                g[d + r * (e + r * f)] = acc;
            }
        }
    }
    Ok(g)
}

/// Core consistency in percent: 100 for a perfectly trilinear fit, heading
/// toward (or past) zero as the core array drifts from the superdiagonal
/// identity. Values below zero are reported as-is; scanning clamps them.
pub fn corcondia(x: &Tensor3, model: &CpModel) -> Result<f64> {
    let r = model.rank();
    let g = corcondia_core(x, model)?;
    let mut dev = 0.0;
    for f in 0..r {
        for e in 0..r {
            for d in 0..r {
                let ideal = if d == e && e == f { 1.0 } else { 0.0 };
                let diff = g[d + r * (e + r * f)] - ideal;
                dev += diff * diff;
            }
        }
    }
    Ok(100.0 * (1.0 - dev / r as f64))
}

const FMS_MAX_RANK: usize = 8;

/// Factor match score between two models of equal shape and rank: the best
/// component matching (exhaustive over permutations, hence the rank cap) of
/// the mean product of per-mode absolute cosine similarities. Weights are
/// ignored; 1.0 means identical up to permutation and scaling.
pub fn factor_match_score(a: &CpModel, b: &CpModel) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::invalid(format!(
            "model dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if a.rank() != b.rank() {
        return Err(Error::invalid(format!("model ranks differ: {} vs {}", a.rank(), b.rank())));
    }
    let r = a.rank();
    if r > FMS_MAX_RANK {
        return Err(Error::invalid(format!(
            "factor match score enumerates permutations and is capped at rank {FMS_MAX_RANK}, got {r}"
        )));
    }

    // pair_score[ra][rb] = product over modes of |cos(a_col, b_col)|
    let mut pair = vec![vec![1.0; r]; r];
    for mode in 1..=3 {
        let ma = a.factor(mode)?;
        let mb = b.factor(mode)?;
        for (ra, row) in pair.iter_mut().enumerate() {
            let na = ma.col_norm(ra);
            for (rb, slot) in row.iter_mut().enumerate() {
                let nb = mb.col_norm(rb);
                let cos = if na > 0.0 && nb > 0.0 {
                    let mut dot = 0.0;
                    for i in 0..ma.rows() {
                        dot += ma.get(i, ra) * mb.get(i, rb);
                    }
                    (dot / (na * nb)).abs()
                } else {
                    0.0
                };
                *slot *= cos;
            }
        }
    }

    fn best(pair: &[Vec<f64>], ra: usize, used: &mut [bool]) -> f64 {
        let r = pair.len();
        if ra == r {
            return 0.0;
        }
        let mut top = f64::NEG_INFINITY;
        for rb in 0..r {
            if used[rb] {
                continue;
            }
            used[rb] = true;
            let s = pair[ra][rb] + best(pair, ra + 1, used);
            used[rb] = false;
            top = top.max(s);
        }
        top
    }
    let mut used = vec![false; r];
    Ok(best(&pair, 0, &mut used) / r as f64)
}

/// Recipe for a synthetic dataset with known ground truth.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    pub seed: u64,
    /// Signal-to-noise ratio in dB; `None` leaves the tensor noiseless.
    pub noise_snr_db: Option<f64>,
    /// Fraction of cells masked as missing, in [0, 1).
    pub missing_frac: f64,
    /// Fraction of factor entries zeroed before normalization, in [0, 1).
    pub sparsity: f64,
}

impl SynthSpec {
    pub fn new(dims: (usize, usize, usize), rank: usize, seed: u64) -> Self {
        SynthSpec { dims, rank, seed, noise_snr_db: None, missing_frac: 0.0, sparsity: 0.0 }
    }

    fn validate(&self) -> Result<Vec<String>> {
        let (i, j, k) = self.dims;
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::invalid(format!("dims must be positive, got {i}x{j}x{k}")));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be at least 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.missing_frac) {
            return Err(Error::invalid(format!(
                "missing_frac must be in [0, 1), got {}",
                self.missing_frac
            )));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::invalid(format!("sparsity must be in [0, 1), got {}", self.sparsity)));
        }
        let mut warnings = Vec::new();
        if i.min(j).min(k) < self.rank {
            warnings.push(format!(
                "rank {} exceeds the smallest dimension of {i}x{j}x{k}; recovery may be ambiguous",
                self.rank
            ));
        }
        Ok(warnings)
    }
}

/// Synthetic dataset plus its generating model.
pub struct Synthetic {
    pub dataset: TensorDataset,
    pub truth: CpModel,
    pub warnings: Vec<String>,
}

/// Generates a noisy, partially observed tensor from a random non-negative
/// CP model. One seeded stream drives every draw in a fixed order (factors,
/// sparsity, weights, noise, missing cells), so outputs are reproducible
/// bit-for-bit.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<Synthetic> {
    let warnings = spec.validate()?;
    let (i_dim, j_dim, k_dim) = spec.dims;
    let r = spec.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut factors = Vec::with_capacity(3);
    for rows in [i_dim, j_dim, k_dim] {
        let data = (0..rows * r).map(|_| 1.0 - rng.random::<f64>()).collect();
        factors.push(Matrix::from_vec(rows, r, data).expect("sized buffer"));
    }
    for m in &mut factors {
        let total = m.rows() * m.cols();
        let n_zero = (spec.sparsity * total as f64).floor() as usize;
        for idx in sample_without_replacement(&mut rng, total, n_zero) {
            m.data_mut()[idx] = 0.0;
        }
        for c in 0..r {
            let norm = m.col_norm(c);
            if norm == 0.0 {
                return Err(Error::numerical(
                    "sparsity zeroed an entire factor column; lower sparsity or change the seed"
                        .to_string(),
                ));
            }
            m.scale_col(c, 1.0 / norm);
        }
    }
    let lambda: Vec<f64> = (0..r).map(|_| 1.0 + 9.0 * (1.0 - rng.random::<f64>())).collect();
    let t = factors.pop().expect("three factors");
    let v = factors.pop().expect("three factors");
    let u = factors.pop().expect("three factors");
    let truth = CpModel::from_parts(lambda, u, v, t)?.normalized();

    let mut x = reconstruct(&truth);
    if let Some(snr_db) = spec.noise_snr_db {
        if !snr_db.is_finite() {
            return Err(Error::invalid("noise SNR must be finite".to_string()));
        }
        let signal_norm = x.frobenius_norm();
        let noise: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let noise_norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
        if noise_norm > 0.0 && signal_norm > 0.0 {
            // exact SNR before clipping
            let c = signal_norm / (noise_norm * 10f64.powf(snr_db / 20.0));
            for (xv, nv) in x.values_mut().iter_mut().zip(&noise) {
                *xv = (*xv + c * nv).max(0.0);
            }
        }
    }
    let n_missing = (spec.missing_frac * x.len() as f64).floor() as usize;
    for idx in sample_without_replacement(&mut rng, x.len(), n_missing) {
        x.mask_mut()[idx] = false;
    }

    let individuals = (0..i_dim).map(|i| format!("u{i:04}")).collect();
    let variables = (0..j_dim).map(|j| format!("v{j:04}")).collect();
    let dataset = TensorDataset::new(x, individuals, variables, k_dim)?;
    Ok(Synthetic { dataset, truth, warnings })
}

/// First `k` entries of a partial Fisher-Yates shuffle of `0..n`: a uniform
/// sample without replacement, deterministic given the rng state.
fn sample_without_replacement(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    debug_assert!(k <= n);
    let mut pool: Vec<usize> = (0..n).collect();
    for step in 0..k {
        let j = step + rng.random_range(0..n - step);
        pool.swap(step, j);
    }
    pool.truncate(k);
    pool
}

/// Per-rank aggregate of repeated fits. `samples` holds the clamped
/// per-initialization scores actually aggregated; `n_init` counts them.
#[derive(Debug, Clone)]
pub struct RankScan {
    pub ranks: Vec<usize>,
    pub mean_cc: Vec<f64>,
    /// Absent where clamping zeroed every sample at that rank.
    pub std_cc: Vec<Option<f64>>,
    pub n_init: Vec<usize>,
    pub samples: Vec<Vec<f64>>,
    pub n_clamped: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Fit options for a scan; restart selection is not used (each init is its
/// own sample).
#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    pub epsilon_div: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        let base = FitConfig::new(1, 0);
        ScanOptions { max_sweeps: base.max_sweeps, tol: base.tol, epsilon_div: base.epsilon_div }
    }
}

/// Fits every rank in `ranks` with `n_init` seeds (`seed .. seed+n_init-1`,
/// the same seeds for every rank) and aggregates core consistency per rank.
/// Negative scores are clamped to zero per sample before aggregation; a fit
/// whose score is undefined (degenerate rescaled factor) counts as a clamped
/// zero sample; a fit that itself fails is excluded with a warning.
pub fn rank_scan(
    x: &Tensor3,
    ranks: &[usize],
    n_init: usize,
    seed: u64,
    opts: &ScanOptions,
) -> Result<RankScan> {
    if ranks.is_empty() {
        return Err(Error::invalid("rank list must not be empty".to_string()));
    }
    if ranks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("ranks must be strictly ascending".to_string()));
    }
    if ranks[0] == 0 {
        return Err(Error::invalid("ranks must be at least 1".to_string()));
    }
    if n_init == 0 {
        return Err(Error::invalid("n_init must be at least 1".to_string()));
    }

    let mut scan = RankScan {
        ranks: ranks.to_vec(),
        mean_cc: Vec::new(),
        std_cc: Vec::new(),
        n_init: Vec::new(),
        samples: Vec::new(),
        n_clamped: Vec::new(),
        warnings: Vec::new(),
    };
    for &rank in ranks {
        let runs: Vec<(u64, Result<(f64, bool)>)> = (0..n_init)
            .into_par_iter()
            .map(|i| {
                let init_seed = seed.wrapping_add(i as u64);
                let mut cfg = FitConfig::new(rank, init_seed);
                cfg.max_sweeps = opts.max_sweeps;
                cfg.tol = opts.tol;
                cfg.epsilon_div = opts.epsilon_div;
                cfg.n_restarts = 1;
                let out = fit(x, &cfg).map(|(model, _)| match corcondia(x, &model) {
                    Ok(score) => (score, false),
                    // degenerate fits score as clamped zeros
                    Err(_) => (f64::NEG_INFINITY, true),
                });
                (init_seed, out)
            })
            .collect();

        let mut samples = Vec::with_capacity(n_init);
        let mut clamped = 0usize;
        for (init_seed, run) in runs {
            match run {
                Ok((score, degenerate)) => {
                    if degenerate {
                        scan.warnings.push(format!(
                            "rank {rank} seed {init_seed}: core consistency undefined, counted as clamped zero"
                        ));
                    }
                    if score < 0.0 {
                        clamped += 1;
                        samples.push(0.0);
                    } else {
                        samples.push(score);
                    }
                }
                Err(e) => {
                    scan.warnings.push(format!("rank {rank} seed {init_seed}: fit failed: {e}"));
                }
            }
        }
        let n = samples.len();
        if n == 0 {
            scan.warnings.push(format!("rank {rank}: no usable fits, reporting mean 0"));
            scan.mean_cc.push(0.0);
            scan.std_cc.push(None);
        } else {
            let mean = samples.iter().sum::<f64>() / n as f64;
            scan.mean_cc.push(mean);
            if clamped == n {
                scan.std_cc.push(None);
            } else {
                let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n as f64;
                scan.std_cc.push(Some(var.sqrt()));
            }
        }
        scan.n_init.push(n);
        scan.n_clamped.push(clamped);
        scan.samples.push(samples);
    }
    Ok(scan)
}

/// Elbow rule: the interior rank minimizing the discrete second difference
/// of mean core consistency. Ties go to the smaller rank. Needs at least
/// three consecutive ranks.
pub fn select_rank(scan: &RankScan) -> Result<usize> {
    let n = scan.ranks.len();
    if n < 3 {
        return Err(Error::invalid(format!("rank selection needs at least 3 ranks, got {n}")));
    }
    if scan.ranks.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::invalid("rank selection needs consecutive ranks".to_string()));
    }
    let mut best_idx = 1;
    let mut best = f64::INFINITY;
    for m in 1..n - 1 {
        let d2 = scan.mean_cc[m + 1] - 2.0 * scan.mean_cc[m] + scan.mean_cc[m - 1];
        if d2 < best {
            best = d2;
            best_idx = m;
        }
    }
    Ok(scan.ranks[best_idx])
}
