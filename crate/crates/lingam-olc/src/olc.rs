//! Tests of the One-Latent-Component condition.
//!
//! A pair of variable groups `(X_i, X_j)` passes when some nonzero `w`
//! annihilates the estimated loadings of `X_j` on the single component it
//! shares with `X_i`, and `w' X_j` is then independent of `X_i`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cumulants::PairMoments;
use crate::data::Dataset;
use crate::discovery::{Config, ResidualContext};
use crate::independence::{dependence_statistic, test_independence, IndependenceResult};
use crate::mixing::{combine, null_weight, pooled_loading, WeightVector};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentKind {
    LatentConfounder,
    ObservedNoise(String),
}

/// `xi_set` is always read from the raw data; members of `xj_set` use
/// `residualized_inputs` when present.
#[derive(Debug, Clone, PartialEq)]
pub struct OLCHypothesis {
    pub xi_set: Vec<String>,
    pub xj_set: Vec<String>,
    pub component_kind: ComponentKind,
    pub residualized_inputs: BTreeMap<String, Vec<f64>>,
}

impl OLCHypothesis {
    pub fn new(xi_set: Vec<String>, xj_set: Vec<String>, component_kind: ComponentKind) -> Self {
        OLCHypothesis { xi_set, xj_set, component_kind, residualized_inputs: BTreeMap::new() }
    }

    /// Stable identifier used to derive the hypothesis seed.
    pub fn key(&self) -> String {
        let kind = match &self.component_kind {
            ComponentKind::LatentConfounder => "latent".to_string(),
            ComponentKind::ObservedNoise(o) => format!("noise:{o}"),
        };
        format!("{kind}|{}|{}", self.xi_set.join(","), self.xj_set.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reason {
    Accepted,
    CumulantDegenerate,
    DependentResidual,
    NoNullSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Loading {
    pub label: String,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisResult {
    pub accepted: bool,
    pub omega: Option<WeightVector>,
    /// Reference variable first, then the members of `xj_set` in order.
    pub estimated_column: Option<Vec<Loading>>,
    pub independence: Option<IndependenceResult>,
    pub reason: Reason,
}

impl HypothesisResult {
    fn rejected(reason: Reason) -> Self {
        HypothesisResult { accepted: false, omega: None, estimated_column: None, independence: None, reason }
    }

    pub fn p_value(&self) -> f64 {
        self.independence.map(|r| r.p_value).unwrap_or(0.0)
    }
}

/// Dependence screen: any of the covariance and fourth-order cross
/// cumulants clearing the degeneracy threshold, or else a rejecting kernel test.
pub fn pair_dependent(x: &[f64], y: &[f64], cfg: &Config, seed: u64) -> bool {
    if let Ok(pm) = PairMoments::new(x, y, 4) {
        for (a, b) in [(1, 1), (1, 3), (2, 2), (3, 1)] {
            let (v, se) = pm.cumulant_with_se(a, b);
            if v.abs() > cfg.degeneracy_multiplier * se {
                return true;
            }
        }
    }
    match test_independence(x, &[y], &cfg.test_settings(), seed) {
        Ok(r) => !r.independent,
        Err(_) => false,
    }
}

/// Delete-group jackknife standard error of `cov(r, a) / cov(r, b)`.
fn ratio_se(r: &[f64], a: &[f64], b: &[f64]) -> f64 {
    const GROUPS: usize = 20;
    let n = r.len();
    let mut sums = [[0.0f64; 5]; GROUPS];
    for t in 0..n {
        let g = &mut sums[t * GROUPS / n];
        g[0] += r[t];
        g[1] += a[t];
        g[2] += b[t];
        g[3] += r[t] * a[t];
        g[4] += r[t] * b[t];
    }
    let total: Vec<f64> = (0..5).map(|k| sums.iter().map(|g| g[k]).sum()).collect();
    let ratios: Vec<f64> = (0..GROUPS)
        .map(|g| {
            let m = (n - (((g + 1) * n).div_ceil(GROUPS) - (g * n).div_ceil(GROUPS))) as f64;
            let s: Vec<f64> = (0..5).map(|k| total[k] - sums[g][k]).collect();
            (s[3] - s[0] * s[1] / m) / (s[4] - s[0] * s[2] / m)
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / GROUPS as f64;
    ((GROUPS - 1) as f64 / GROUPS as f64 * ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
}

/// Picks, within `ratio_scan` standard errors of the estimate `q`, the ratio
/// whose residual `x_1 - q x_2` is least dependent on the reference block.
fn scan_ratio(q: f64, reference: &[f64], xj: &[&[f64]], xi: &[&[f64]], cfg: &Config, seed: u64) -> f64 {
    let se = ratio_se(reference, xj[0], xj[1]);
    if !se.is_finite() || se <= 0.0 {
        return q;
    }
    let settings = cfg.test_settings();
    let mut best = (f64::INFINITY, q);
    for step in [0.0, -1.0, -0.5, 0.5, 1.0] {
        let cand = q + step * cfg.ratio_scan * se;
        if cand == 0.0 || cand.signum() != q.signum() {
            continue;
        }
        let residual = combine(&[1.0, -cand], xj[0], &xj[1..]);
        if let Ok(stat) = dependence_statistic(&residual, xi, &settings, seed) {
            if stat < best.0 {
                best = (stat, cand);
            }
        }
    }
    best.1
}

struct Prepared<'d> {
    xi: Vec<&'d [f64]>,
    column: Vec<Loading>,
    omega: WeightVector,
    residual: Vec<f64>,
}

fn prepare<'d>(hyp: &OLCHypothesis, data: &'d Dataset, cfg: &Config, screen: bool) -> Result<Prepared<'d>, Reason> {
    let master = seed::derive(cfg.seed, &hyp.key());
    let raw = |l: &str| data.by_label(l).ok();
    let xi: Option<Vec<&[f64]>> = hyp.xi_set.iter().map(|l| raw(l)).collect();
    let xj: Option<Vec<&[f64]>> = hyp
        .xj_set
        .iter()
        .map(|l| hyp.residualized_inputs.get(l).map(|v| v.as_slice()).or_else(|| raw(l)))
        .collect();
    let (Some(xi), Some(xj)) = (xi, xj) else {
        return Err(Reason::NoNullSpace);
    };
    if xi.is_empty() || xj.len() < 2 {
        return Err(Reason::NoNullSpace);
    }
    let reference = xi[0];
    if screen {
        for (idx, v) in xj.iter().enumerate() {
            if !pair_dependent(reference, v, cfg, seed::derive(master, &format!("dependence:{idx}"))) {
                return Err(Reason::CumulantDegenerate);
            }
        }
    }
    let anchor = pooled_loading(reference, &xj, &cfg.estimation_settings()).map_err(|_| Reason::CumulantDegenerate)?;
    let rel = anchor.se / anchor.value;
    let mut column = vec![Loading { label: hyp.xi_set[0].clone(), value: anchor.value, se: anchor.se }];
    for (label, v) in hyp.xj_set.iter().zip(&xj) {
        let (cov, cov_se) = PairMoments::new(reference, v, 2).map(|pm| pm.cumulant_with_se(1, 1)).unwrap_or((0.0, 0.0));
        let value = cov / anchor.value;
        let se = value.abs() * ((cov_se / cov).powi(2) + rel * rel).sqrt();
        column.push(Loading { label: label.clone(), value, se: if se.is_finite() { se } else { f64::INFINITY } });
    }

    let a_sub = nalgebra::DMatrix::from_fn(xj.len(), 1, |r, _| column[r + 1].value);
    let mut omega = null_weight(&hyp.xj_set, &a_sub, hyp.xj_set.first().map(|s| s.as_str()), cfg.rank_tol)
        .map_err(|_| Reason::NoNullSpace)?;
    if xj.len() == 2 && cfg.ratio_scan > 0.0 && omega.entries[1] != 0.0 {
        let q = scan_ratio(-omega.entries[1], reference, &xj, &xi, cfg, master);
        omega.entries[1] = -q;
        column[2].value = column[1].value / q;
    }
    let residual = combine(&omega.entries, xj[0], &xj[1..]);
    Ok(Prepared { xi, column, omega, residual })
}

/// Estimates the shared column against the first member of `xi_set`, finds
/// the annihilating weight over `xj_set` and tests `w' X_j` against `X_i`.
pub fn check_olc(hyp: &OLCHypothesis, data: &Dataset, cfg: &Config) -> HypothesisResult {
    let p = match prepare(hyp, data, cfg, true) {
        Ok(p) => p,
        Err(reason) => return HypothesisResult::rejected(reason),
    };
    let master = seed::derive(cfg.seed, &hyp.key());
    let independence = match test_independence(&p.residual, &p.xi, &cfg.test_settings(), master) {
        Ok(r) => r,
        Err(_) => return HypothesisResult::rejected(Reason::CumulantDegenerate),
    };
    let accepted = independence.independent;
    HypothesisResult {
        accepted,
        omega: Some(p.omega),
        estimated_column: Some(p.column),
        independence: Some(independence),
        reason: if accepted { Reason::Accepted } else { Reason::DependentResidual },
    }
}

/// Builds the hypothesis under rescaled latent loadings and keeps the
/// least dependent variant; the scale of each latent is only known up to its standard error.
fn check_over_scales(
    build: impl Fn(&ResidualContext) -> Result<OLCHypothesis, Reason>,
    ctx: &ResidualContext,
    data: &Dataset,
    cfg: &Config,
) -> HypothesisResult {
    let base = match build(ctx) {
        Ok(h) => h,
        Err(reason) => return HypothesisResult::rejected(reason),
    };
    if cfg.ratio_scan <= 0.0 || base.residualized_inputs.is_empty() || !ctx.has_scale_uncertainty() {
        return check_olc(&base, data, cfg);
    }
    let master = seed::derive(cfg.seed, &base.key());
    let settings = cfg.test_settings();
    let mut best: Option<(f64, OLCHypothesis)> = None;
    for step in [0.0, -1.0, -0.5, 0.5, 1.0] {
        let hyp = if step == 0.0 {
            base.clone()
        } else {
            match build(&ctx.rescaled(step * cfg.ratio_scan)) {
                Ok(h) => h,
                Err(_) => continue,
            }
        };
        let Ok(p) = prepare(&hyp, data, cfg, false) else { continue };
        if let Ok(stat) = dependence_statistic(&p.residual, &p.xi, &settings, master) {
            if best.as_ref().is_none_or(|(b, _)| stat < *b) {
                best = Some((stat, hyp));
            }
        }
    }
    check_olc(&best.map(|(_, h)| h).unwrap_or(base), data, cfg)
}

/// `(X_k, {X~_i, X~_j})` with identified components removed from `X_i` and `X_j`.
pub fn identify_confounder(
    xi: &str,
    xj: &str,
    xk: &str,
    ctx: &ResidualContext,
    data: &Dataset,
    cfg: &Config,
) -> HypothesisResult {
    let build = |ctx: &ResidualContext| {
        let mut hyp =
            OLCHypothesis::new(vec![xk.to_string()], vec![xi.to_string(), xj.to_string()], ComponentKind::LatentConfounder);
        for target in [xi, xj] {
            match ctx.residual(data, target, &[xi, xj], &[xi, xj, xk]) {
                Ok(Some(r)) => {
                    hyp.residualized_inputs.insert(target.to_string(), r);
                }
                Ok(None) => {}
                Err(_) => return Err(Reason::NoNullSpace),
            }
        }
        Ok(hyp)
    };
    check_over_scales(build, ctx, data, cfg)
}

/// `(X_i, {X~_i, X~_j})`: acceptance means `xi` is causally earlier than `xj`.
pub fn determine_order(xi: &str, xj: &str, ctx: &ResidualContext, data: &Dataset, cfg: &Config) -> HypothesisResult {
    let build = |ctx: &ResidualContext| {
        let mut hyp = OLCHypothesis::new(
            vec![xi.to_string()],
            vec![xi.to_string(), xj.to_string()],
            ComponentKind::ObservedNoise(xi.to_string()),
        );
        for (target, keep) in [(xi, vec![xi]), (xj, vec![xi, xj])] {
            match ctx.residual(data, target, &keep, &[xi, xj]) {
                Ok(Some(r)) => {
                    hyp.residualized_inputs.insert(target.to_string(), r);
                }
                Ok(None) => {}
                Err(_) => return Err(Reason::NoNullSpace),
            }
        }
        Ok(hyp)
    };
    check_over_scales(build, ctx, data, cfg)
}
