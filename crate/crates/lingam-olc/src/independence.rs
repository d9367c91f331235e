//! Kernel independence test with permutation calibration.
//!
//! Each margin is standardized and passed through `asinh`. The map is
//! monotone, so independence is unchanged, while extreme draws stop
//! dominating the kernel. A Gaussian kernel with median-heuristic
//! bandwidth is applied per margin (product kernel for a vector block), the
//! Gram matrices are factored by pivoted incomplete Cholesky, and the HSIC
//! statistic `|Gc' Fc|_F^2 / n^2` is recomputed under shuffles of `u`.

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndependenceResult {
    pub statistic: f64,
    pub p_value: f64,
    pub independent: bool,
    pub n_permutations: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestSettings {
    pub alpha: f64,
    pub n_permutations: usize,
    /// Samples beyond this count are thinned by a seeded subsample.
    pub subsample_cap: usize,
}

impl Default for TestSettings {
    fn default() -> Self {
        TestSettings { alpha: 0.05, n_permutations: 199, subsample_cap: 2000 }
    }
}

const CHOLESKY_TOL: f64 = 1e-6;
const MAX_RANK: usize = 80;
const MEDIAN_POINTS: usize = 400;

/// Tests `u` against the block `v` (one or more series).
pub fn test_independence(u: &[f64], v: &[&[f64]], settings: &TestSettings, seed: u64) -> Result<IndependenceResult> {
    let n = u.len();
    if v.is_empty() {
        return Err(Error::Shape("empty conditioning block".into()));
    }
    if v.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("series differ in length".into()));
    }
    if n < 20 {
        return Err(Error::SampleSize { need: 20, got: n });
    }
    if !(settings.alpha > 0.0 && settings.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {} outside (0,1)", settings.alpha)));
    }
    if settings.n_permutations < 99 {
        return Err(Error::InvalidArgument("at least 99 permutations required".into()));
    }

    let (gu, gv) = factors(u, v, settings, seed);
    let m = gu.n;

    let identity: Vec<usize> = (0..m).collect();
    let observed = hsic(&gu, &gv, &identity);
    let mut perm = identity.clone();
    let mut rng = seed::stream_rng(seed, "permutations");
    let mut exceed = 0usize;
    for _ in 0..settings.n_permutations {
        perm.shuffle(&mut rng);
        if hsic(&gu, &gv, &perm) >= observed {
            exceed += 1;
        }
    }
    let p_value = (1 + exceed) as f64 / (1 + settings.n_permutations) as f64;
    Ok(IndependenceResult {
        statistic: observed,
        p_value,
        independent: p_value > settings.alpha,
        n_permutations: settings.n_permutations,
        alpha: settings.alpha,
    })
}

/// HSIC statistic alone, on the same subsample `test_independence` would use.
pub fn dependence_statistic(u: &[f64], v: &[&[f64]], settings: &TestSettings, seed: u64) -> Result<f64> {
    let n = u.len();
    if v.is_empty() || v.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("series differ in length".into()));
    }
    let (gu, gv) = factors(u, v, settings, seed);
    let identity: Vec<usize> = (0..gu.n).collect();
    Ok(hsic(&gu, &gv, &identity))
}

fn factors(u: &[f64], v: &[&[f64]], settings: &TestSettings, seed: u64) -> (Factor, Factor) {
    let n = u.len();
    let rows: Vec<usize> = if n > settings.subsample_cap.max(20) {
        let mut rng = seed::stream_rng(seed, "subsample");
        let mut idx = index::sample(&mut rng, n, settings.subsample_cap.max(20)).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..n).collect()
    };
    let take = |c: &[f64]| rows.iter().map(|&i| c[i]).collect::<Vec<f64>>();
    let ru = compress(&take(u));
    let rv: Vec<Vec<f64>> = v.iter().map(|c| compress(&take(c))).collect();
    let rv_refs: Vec<&[f64]> = rv.iter().map(|c| c.as_slice()).collect();
    (centered_factor(&[ru.as_slice()]), centered_factor(&rv_refs))
}

/// Standardizes and applies `asinh`, a monotone map that tames heavy tails.
fn compress(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    x.iter().map(|v| ((v - m) / sd).asinh()).collect()
}

fn median_distance(x: &[f64]) -> f64 {
    let n = x.len();
    let step = n.div_ceil(MEDIAN_POINTS).max(1);
    let pts: Vec<f64> = x.iter().step_by(step).copied().collect();
    let mut d = Vec::with_capacity(pts.len() * pts.len() / 2);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            d.push((pts[i] - pts[j]).abs());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, med, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    if *med > 0.0 {
        *med
    } else {
        1.0
    }
}

/// Row-major low-rank factor `G` with `K ~ G G'`, columns centered.
struct Factor {
    n: usize,
    rank: usize,
    rows: Vec<f64>,
}

fn centered_factor(cols: &[&[f64]]) -> Factor {
    let n = cols[0].len();
    let inv: Vec<f64> = cols
        .iter()
        .map(|c| {
            let s = median_distance(c);
            1.0 / (2.0 * s * s)
        })
        .collect();
    let kernel = |a: usize, b: usize| -> f64 {
        let mut e = 0.0;
        for (c, w) in cols.iter().zip(&inv) {
            let d = c[a] - c[b];
            e += d * d * w;
        }
        (-e).exp()
    };

    let mut diag = vec![1.0f64; n];
    let mut factor_cols: Vec<Vec<f64>> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    while factor_cols.len() < MAX_RANK.min(n) {
        let (j, &dj) = diag
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        if dj <= CHOLESKY_TOL {
            break;
        }
        let root = dj.sqrt();
        let mut col = vec![0.0; n];
        for i in 0..n {
            let mut k = kernel(i, j);
            for prev in &factor_cols {
                k -= prev[i] * prev[j];
            }
            col[i] = k / root;
        }
        for i in 0..n {
            diag[i] = (diag[i] - col[i] * col[i]).max(0.0);
        }
        diag[j] = 0.0;
        pivots.push(j);
        factor_cols.push(col);
    }

    let rank = factor_cols.len();
    let mut rows = vec![0.0; n * rank];
    for (c, col) in factor_cols.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            rows[i * rank + c] = col[i] - mean;
        }
    }
    Factor { n, rank, rows }
}

fn hsic(gu: &Factor, gv: &Factor, perm: &[usize]) -> f64 {
    let (r1, r2) = (gu.rank, gv.rank);
    if r1 == 0 || r2 == 0 {
        return 0.0;
    }
    let n = perm.len();
    let mut m = vec![0.0; r1 * r2];
    for (t, &pt) in perm.iter().enumerate() {
        let urow = &gu.rows[pt * r1..(pt + 1) * r1];
        let vrow = &gv.rows[t * r2..(t + 1) * r2];
        for (a, &ua) in urow.iter().enumerate() {
            let out = &mut m[a * r2..(a + 1) * r2];
            for (o, &vb) in out.iter_mut().zip(vrow) {
                *o += ua * vb;
            }
        }
    }
    m.iter().map(|x| x * x).sum::<f64>() / (n as f64 * n as f64)
}
