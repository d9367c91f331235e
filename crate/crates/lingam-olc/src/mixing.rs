//! Closed-form mixing coefficients, null-space weights and surrogate residuals.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cumulants::PairMoments;
use crate::error::{Error, Result};

/// Identity of a mixing-matrix column.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name")]
pub enum Component {
    LatentConfounder(String),
    ObservedNoise(String),
}

impl Component {
    pub fn name(&self) -> &str {
        match self {
            Component::LatentConfounder(s) | Component::ObservedNoise(s) => s,
        }
    }
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Component::LatentConfounder(s) => write!(f, "{s}"),
            Component::ObservedNoise(s) => write!(f, "e_{s}"),
        }
    }
}

/// Observed variables by components, with a mask of estimated entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMatrix {
    pub rows: Vec<String>,
    pub columns: Vec<Component>,
    pub entries: Vec<Vec<f64>>,
    pub estimated_mask: Vec<Vec<bool>>,
}

impl MixingMatrix {
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), self.columns.len(), |r, c| self.entries[r][c])
    }

    pub fn row_index(&self, label: &str) -> Option<usize> {
        self.rows.iter().position(|r| r == label)
    }

    pub fn column_index(&self, comp: &Component) -> Option<usize> {
        self.columns.iter().position(|c| c == comp)
    }

    pub fn latent_ids(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter_map(|c| match c {
                Component::LatentConfounder(id) => Some(id.clone()),
                Component::ObservedNoise(_) => None,
            })
            .collect()
    }
}

/// Recovers `B` and `Lambda` from `A = [(I-B)^-1 Lambda | (I-B)^-1]`.
///
/// Observed variables without a noise column are treated as having no
/// observed descendants.
pub fn recover_matrices(mixing: &MixingMatrix) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let p = mixing.rows.len();
    let latents = mixing.latent_ids();
    let mut noise = DMatrix::<f64>::identity(p, p);
    for (c, comp) in mixing.columns.iter().enumerate() {
        if let Component::ObservedNoise(owner) = comp {
            let j = mixing
                .row_index(owner)
                .ok_or_else(|| Error::LabelMismatch(format!("noise owner {owner} is not a row")))?;
            for r in 0..p {
                noise[(r, j)] = mixing.entries[r][c];
            }
        }
    }
    let inv = noise.clone().try_inverse().ok_or(Error::SingularNoiseBlock)?;
    if !inv.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularNoiseBlock);
    }
    let b = DMatrix::<f64>::identity(p, p) - &inv;
    let mut lat = DMatrix::<f64>::zeros(p, latents.len());
    for (k, id) in latents.iter().enumerate() {
        let c = mixing.column_index(&Component::LatentConfounder(id.clone())).expect("listed latent");
        for r in 0..p {
            lat[(r, k)] = mixing.entries[r][c];
        }
    }
    let lambda = &inv * lat;
    Ok((b, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationSettings {
    /// A cumulant is usable when its magnitude exceeds this many standard errors.
    pub degeneracy_multiplier: f64,
    pub rank_tol: f64,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings { degeneracy_multiplier: 3.0, rank_tol: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CumulantStat {
    pub a: usize,
    pub b: usize,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDiagnostics {
    pub numerator: CumulantStat,
    pub denominator: CumulantStat,
    pub se_alpha_i: f64,
    pub se_alpha_j: f64,
}

/// Loadings of two series on the single component they share.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCoefficients {
    pub alpha_i: f64,
    pub alpha_j: f64,
    pub order_used: (usize, usize),
    pub cum11: f64,
    pub diagnostics: PairDiagnostics,
}

fn check_inputs(xi: &[f64], xj: &[f64]) -> Result<()> {
    if xi.len() != xj.len() {
        return Err(Error::Shape("series differ in length".into()));
    }
    if xi.len() < 100 {
        return Err(Error::SampleSize { need: 100, got: xi.len() });
    }
    Ok(())
}

fn usable(stat: &CumulantStat, settings: &EstimationSettings) -> bool {
    stat.value.abs() > settings.degeneracy_multiplier * stat.se
}

fn stat(pm: &PairMoments, a: usize, b: usize) -> CumulantStat {
    let (value, se) = pm.cumulant_with_se(a, b);
    CumulantStat { a, b, value, se }
}

/// `alpha_i = sqrt(C_{n+1,m} / C_{n,m+1} * C_{1,1})`, `alpha_j = C_{1,1} / alpha_i`.
fn from_moments(
    pm: &PairMoments,
    n: usize,
    m: usize,
    settings: &EstimationSettings,
    check_numerator: bool,
) -> Result<PairCoefficients> {
    let denominator = stat(pm, n, m + 1);
    if !usable(&denominator, settings) {
        return Err(Error::Degenerate { which: format!("C[{},{}]", n, m + 1) });
    }
    let numerator = stat(pm, n + 1, m);
    if check_numerator && !usable(&numerator, settings) {
        return Err(Error::Degenerate { which: format!("C[{},{}]", n + 1, m) });
    }
    let cum11 = pm.cumulant(1, 1);
    let arg = numerator.value / denominator.value * cum11;
    if arg.is_nan() || arg <= 0.0 {
        let (_, se) = pm.jackknife(|s| s.cumulant(n + 1, m) / s.cumulant(n, m + 1) * s.cumulant(1, 1));
        let detail = if arg > -2.0 * se {
            "argument of the square root is within two standard errors below zero"
        } else {
            "argument of the square root is negative"
        };
        return Err(Error::NonEstimable(format!("{detail} ({arg:.3e})")));
    }
    let alpha_i = arg.sqrt();
    let alpha_j = cum11 / alpha_i;
    let ai = |s: &crate::cumulants::PairSums| {
        (s.cumulant(n + 1, m) / s.cumulant(n, m + 1) * s.cumulant(1, 1)).max(0.0).sqrt()
    };
    let (_, se_alpha_i) = pm.jackknife(ai);
    let (_, se_alpha_j) = pm.jackknife(|s| {
        let a = ai(s);
        if a > 0.0 {
            s.cumulant(1, 1) / a
        } else {
            0.0
        }
    });
    Ok(PairCoefficients {
        alpha_i,
        alpha_j,
        order_used: (n, m),
        cum11,
        diagnostics: PairDiagnostics { numerator, denominator, se_alpha_i, se_alpha_j },
    })
}

/// Fourth-order estimate from `cum(i,i,j,j)`, `cum(i,j,j,j)` and the covariance.
pub fn estimate_pair(xi: &[f64], xj: &[f64], settings: &EstimationSettings) -> Result<PairCoefficients> {
    check_inputs(xi, xj)?;
    let pm = PairMoments::new(xi, xj, 4)?;
    from_moments(&pm, 1, 2, settings, false)
}

/// Estimate built from `C_{n+1,m}` and `C_{n,m+1}`; `(1, 2)` is the fourth-order case.
pub fn estimate_pair_general(
    xi: &[f64],
    xj: &[f64],
    n: usize,
    m: usize,
    settings: &EstimationSettings,
) -> Result<PairCoefficients> {
    check_inputs(xi, xj)?;
    if n < 1 || m < 1 || n + m + 1 > 6 {
        return Err(Error::UnsupportedOrder(n + m + 1));
    }
    let pm = PairMoments::new(xi, xj, n + m + 1)?;
    from_moments(&pm, n, m, settings, true)
}

/// Candidate `(n, m)` pairs, lowest total order first.
pub const ORDER_CANDIDATES: [(usize, usize); 9] =
    [(1, 2), (2, 1), (1, 3), (3, 1), (2, 2), (1, 4), (4, 1), (2, 3), (3, 2)];

fn select_from(pm: &PairMoments, settings: &EstimationSettings) -> Result<(usize, usize)> {
    for &(n, m) in &ORDER_CANDIDATES {
        if n + m + 1 > pm.max_order() {
            break;
        }
        if usable(&stat(pm, n, m + 1), settings) && usable(&stat(pm, n + 1, m), settings) {
            return Ok((n, m));
        }
    }
    Err(Error::NonEstimable("no cumulant order up to 6 is distinguishable from zero".into()))
}

/// Lowest-order `(n, m)` whose two cumulants both clear the degeneracy threshold.
pub fn select_order(xi: &[f64], xj: &[f64], settings: &EstimationSettings) -> Result<(usize, usize)> {
    check_inputs(xi, xj)?;
    let pm = PairMoments::new(xi, xj, 6)?;
    select_from(&pm, settings)
}

/// True when the standardized `C_{1,3}` is within the threshold of its spread
/// under a Gaussian pair, `sqrt(24 / n)`.
fn gaussian_like(pm: &PairMoments, n: usize, settings: &EstimationSettings) -> bool {
    let (vi, vj) = (pm.cumulant(2, 0), pm.cumulant(0, 2));
    if vi <= 0.0 || vj <= 0.0 {
        return true;
    }
    let standardized = pm.cumulant(1, 3) / (vi.sqrt() * vj.powf(1.5));
    standardized.abs() <= settings.degeneracy_multiplier * (24.0 / n as f64).sqrt()
}

/// Fourth-order estimate, switching to the lowest admissible higher order
/// when the fourth-order denominator is degenerate. When no order clears the
/// threshold the ungated fourth-order estimate is returned unless the pair
/// looks Gaussian at fourth order.
pub fn estimate_pair_auto(xi: &[f64], xj: &[f64], settings: &EstimationSettings) -> Result<PairCoefficients> {
    match estimate_pair(xi, xj, settings) {
        Err(Error::Degenerate { .. }) => {
            let pm = PairMoments::new(xi, xj, 6)?;
            match select_from(&pm, settings) {
                Ok((n, m)) => from_moments(&pm, n, m, settings, true),
                Err(e) if gaussian_like(&pm, xi.len(), settings) => Err(e),
                Err(_) => {
                    let ungated = EstimationSettings { degeneracy_multiplier: 0.0, ..*settings };
                    from_moments(&pm, 1, 2, &ungated, false)
                }
            }
        }
        other => other,
    }
}

/// Loading of a reference series on the one component it shares with each partner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedLoading {
    pub value: f64,
    /// Scaled median absolute deviation of the pooled candidates.
    pub se: f64,
    pub candidates: usize,
}

/// Median of the fourth-order forms `C22/C13`, `C31/C22` and `sqrt(C31/C13)`,
/// each scaled by `C11`, over every partner; heavy tails make any single form unreliable.
pub fn pooled_loading(reference: &[f64], partners: &[&[f64]], settings: &EstimationSettings) -> Result<SharedLoading> {
    let mut squares = Vec::new();
    let mut informative = false;
    for v in partners {
        check_inputs(reference, v)?;
        let pm = PairMoments::new(reference, v, 4)?;
        if gaussian_like(&pm, reference.len(), settings) {
            continue;
        }
        informative = true;
        let c = |a, b| pm.cumulant(a, b);
        let c11 = c(1, 1);
        squares.push(c(2, 2) / c(1, 3) * c11);
        squares.push(c(3, 1) / c(2, 2) * c11);
        squares.push((c(3, 1) / c(1, 3)).sqrt() * c11.abs());
    }
    if !informative {
        return Err(Error::Degenerate { which: "C[1,3]".into() });
    }
    let mut roots: Vec<f64> = squares.into_iter().filter(|q| q.is_finite() && *q > 0.0).map(f64::sqrt).collect();
    if roots.is_empty() {
        return Err(Error::NonEstimable("no positive fourth-order ratio".into()));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.total_cmp(b));
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };
    let value = median(&mut roots);
    let mut dev: Vec<f64> = roots.iter().map(|r| (r - value).abs()).collect();
    let se = 1.4826 * median(&mut dev);
    Ok(SharedLoading { value, se, candidates: roots.len() })
}

/// Weights over observed variables, optionally normalized at one label.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub labels: Vec<String>,
    pub entries: Vec<f64>,
    pub anchor: Option<String>,
}

fn left_null_basis(a: &DMatrix<f64>, rank_tol: f64) -> Vec<Vec<f64>> {
    let (r, c) = a.shape();
    let square = if c < r {
        let mut m = DMatrix::<f64>::zeros(r, r);
        m.view_mut((0, 0), (r, c)).copy_from(a);
        m
    } else {
        a.clone()
    };
    let svd = square.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= rank_tol * smax || smax == 0.0 {
            basis.push(u.column(i).iter().copied().collect::<Vec<f64>>());
        }
    }
    basis
}

/// Nonzero `w` with `w' A = 0`; rows of `a_sub` are aligned with `labels`.
pub fn null_weight(labels: &[String], a_sub: &DMatrix<f64>, anchor: Option<&str>, rank_tol: f64) -> Result<WeightVector> {
    if labels.len() != a_sub.nrows() {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), a_sub.nrows())));
    }
    let basis = left_null_basis(a_sub, rank_tol);
    if basis.is_empty() {
        return Err(Error::NoNullSpace);
    }
    if let Some(name) = anchor {
        let a = labels
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::LabelMismatch(format!("anchor {name} not among rows")))?;
        let coef: Vec<f64> = basis.iter().map(|v| v[a]).collect();
        let norm2: f64 = coef.iter().map(|x| x * x).sum();
        if norm2 > 1e-24 {
            let mut w = vec![0.0; labels.len()];
            for (v, k) in basis.iter().zip(&coef) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi += vi * k / norm2;
                }
            }
            w[a] = 1.0;
            return Ok(WeightVector { labels: labels.to_vec(), entries: w, anchor: Some(name.to_string()) });
        }
    }
    let mut w = basis[0].clone();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let lead = w.iter().find(|x| x.abs() > 1e-12).copied().unwrap_or(1.0);
    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
    for x in w.iter_mut() {
        *x *= sign / norm;
    }
    Ok(WeightVector { labels: labels.to_vec(), entries: w, anchor: None })
}

/// Anchored weights `[1, w]` minimizing `|A_0 + w' A_rest|` over the remaining rows.
pub fn anchored_least_squares(a_sub: &DMatrix<f64>) -> Vec<f64> {
    let r = a_sub.nrows();
    let mut out = vec![1.0];
    if r == 1 {
        return out;
    }
    let target = a_sub.row(0).transpose();
    let rest = a_sub.rows(1, r - 1).transpose();
    let pinv = rest.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| DMatrix::zeros(r - 1, a_sub.ncols()));
    let w = -(pinv * target);
    out.extend(w.iter());
    out
}

/// Applies weights samplewise to `[first, rest...]`.
pub fn combine(weights: &[f64], first: &[f64], rest: &[&[f64]]) -> Vec<f64> {
    let mut out: Vec<f64> = first.iter().map(|v| v * weights[0]).collect();
    for (w, col) in weights[1..].iter().zip(rest) {
        if *w != 0.0 {
            for (o, v) in out.iter_mut().zip(col.iter()) {
                *o += w * v;
            }
        }
    }
    out
}

/// `w' [xj, xk...]` with `w` annihilating the columns of `a_sub` and `w_xj = 1`.
pub fn surrogate_residual(xj: &[f64], xk: &[&[f64]], a_sub: &DMatrix<f64>, rank_tol: f64) -> Result<Vec<f64>> {
    if a_sub.nrows() != xk.len() + 1 {
        return Err(Error::Shape(format!("{} rows for {} series", a_sub.nrows(), xk.len() + 1)));
    }
    if xk.iter().any(|c| c.len() != xj.len()) {
        return Err(Error::Shape("series differ in length".into()));
    }
    let labels: Vec<String> = (0..a_sub.nrows()).map(|i| i.to_string()).collect();
    let w = null_weight(&labels, a_sub, Some("0"), rank_tol)?;
    Ok(combine(&w.entries, xj, xk))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::center_values;
    use crate::independence::{test_independence, TestSettings};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn cubed(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * z * z / 15f64.sqrt()
            })
            .collect()
    }

    fn mix(l: &[f64], a: f64, s: &[f64]) -> Vec<f64> {
        center_values(&l.iter().zip(s).map(|(x, e)| a * x + e).collect::<Vec<_>>())
    }

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("X{i}")).collect()
    }

    #[test]
    fn population_identities_give_two_three() {
        // cum22 = ai^2 aj^2 k, cum13 = ai aj^3 k, cum11 = ai aj with (2, 3, 5)
        let (cum22, cum13, cum11) = (180.0f64, 270.0f64, 6.0f64);
        let ai = (cum22 / cum13 * cum11).sqrt();
        assert!((ai - 2.0).abs() < 1e-12);
        assert!((cum11 / ai - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_series_give_unit_loadings() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let l = center_values(&cubed(&mut rng, 5000));
        let n = l.len() as f64;
        let sd = (l.iter().map(|x| x * x).sum::<f64>() / (n - 1.0)).sqrt();
        let l: Vec<f64> = l.iter().map(|x| x / sd).collect();
        let est = estimate_pair(&l, &l, &EstimationSettings::default()).unwrap();
        assert!((est.alpha_i - 1.0).abs() < 1e-9);
        assert!((est.alpha_j - 1.0).abs() < 1e-9);
        assert_eq!(est.order_used, (1, 2));
    }

    #[test]
    fn large_sample_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let l = cubed(&mut rng, n);
        let x1 = mix(&l, 0.5, &cubed(&mut rng, n));
        let x2 = mix(&l, 0.7, &cubed(&mut rng, n));
        let est = estimate_pair(&x1, &x2, &EstimationSettings::default()).unwrap();
        assert!((est.alpha_i - 0.5).abs() < 0.05, "{est:?}");
        assert!((est.alpha_j - 0.7).abs() < 0.05, "{est:?}");
        assert_eq!(est.alpha_i * est.alpha_j, est.alpha_i * (est.cum11 / est.alpha_i));
        assert!((est.alpha_i * est.alpha_j - est.cum11).abs() <= 1e-15 * est.cum11.abs());
    }

    #[test]
    fn general_estimator_specializes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let l = cubed(&mut rng, n);
        let x1 = mix(&l, 0.6, &cubed(&mut rng, n));
        let x2 = mix(&l, 0.4, &cubed(&mut rng, n));
        let s = EstimationSettings { degeneracy_multiplier: 0.0, ..Default::default() };
        let a = estimate_pair(&x1, &x2, &s).unwrap();
        let b = estimate_pair_general(&x1, &x2, 1, 2, &s).unwrap();
        assert_eq!(a.alpha_i, b.alpha_i);
        assert_eq!(a.alpha_j, b.alpha_j);
    }

    #[test]
    fn general_estimator_index_convention() {
        // With C_{a,b} = ai^a aj^b k, the (n, m) estimator returns ai for
        // every order; checked on a noiseless pair (ai, aj) = (1, 2).
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 50_000;
        let l = center_values(&cubed(&mut rng, n));
        let x2: Vec<f64> = l.iter().map(|x| 2.0 * x).collect();
        let s = EstimationSettings { degeneracy_multiplier: 0.0, ..Default::default() };
        let var = l.iter().map(|x| x * x).sum::<f64>() / (n as f64 - 1.0);
        for &(a, b) in &ORDER_CANDIDATES {
            let est = estimate_pair_general(&l, &x2, a, b, &s).unwrap();
            assert!((est.alpha_i - var.sqrt()).abs() < 1e-6, "{a},{b}: {est:?}");
            assert!((est.alpha_j - 2.0 * var.sqrt()).abs() < 1e-6, "{a},{b}: {est:?}");
        }
    }

    #[test]
    fn general_estimator_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 400_000;
        let l = cubed(&mut rng, n);
        let x1 = mix(&l, 0.3, &cubed(&mut rng, n));
        let x2 = mix(&l, 0.8, &cubed(&mut rng, n));
        let s = EstimationSettings::default();
        for (a, b) in [(1, 2), (2, 1)] {
            let est = estimate_pair_general(&x1, &x2, a, b, &s).unwrap();
            assert!((est.alpha_i - 0.3).abs() < 0.1, "{a},{b}: {est:?}");
            assert!((est.alpha_j - 0.8).abs() < 0.15, "{a},{b}: {est:?}");
        }
    }

    #[test]
    fn order_selection() {
        let s = EstimationSettings::default();
        // Heavy tails make the jackknife error large at n = 2000, so only a
        // share of samples admit any order; when one is admitted it is the
        // fourth-order one.
        let mut admitted = 0;
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = center_values(&cubed(&mut rng, 2000));
            let x2: Vec<f64> = l.iter().map(|v| 2.0 * v).collect();
            if let Ok(order) = select_order(&l, &x2, &s) {
                assert_eq!(order, (1, 2));
                admitted += 1;
            }
        }
        assert!(admitted >= 5, "{admitted}");
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 2000;

        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y1 = mix(&g, 0.8, &(0..n).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>());
        let y2 = mix(&g, 0.8, &(0..n).map(|_| rng.sample(StandardNormal)).collect::<Vec<f64>>());
        assert!(matches!(select_order(&y1, &y2, &s), Err(Error::NonEstimable(_))));
    }

    #[test]
    fn zero_kurtosis_latent_uses_sixth_order() {
        // symmetric mixture of +-c (weight 1/2) and N(0,1) tuned so that the
        // fourth cumulant vanishes: c^4 + 6 c^2 - 3 = 0
        let c = (12f64.sqrt() - 3.0).sqrt();
        let m2 = 0.5 * c * c + 0.5;
        let m4 = 0.5 * c.powi(4) + 1.5;
        let m6 = 0.5 * c.powi(6) + 7.5;
        assert!((m4 - 3.0 * m2 * m2).abs() < 1e-12);
        let kappa6 = m6 - 15.0 * m4 * m2 + 30.0 * m2.powi(3);
        assert!(kappa6 / m2.powi(3) > 4.0);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let n = 400_000;
        let l: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<bool>() {
                    if rng.random::<bool>() { c } else { -c }
                } else {
                    rng.sample::<f64, _>(StandardNormal)
                }
            })
            .collect();
        let x1 = center_values(&l);
        let x2: Vec<f64> = x1.iter().map(|v| 1.5 * v).collect();
        let (a, b) = select_order(&x1, &x2, &EstimationSettings::default()).unwrap();
        assert_eq!(a + b + 1, 6);
    }

    #[test]
    fn degenerate_and_negative_cases() {
        let s = EstimationSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5000;
        let x1 = center_values(&cubed(&mut rng, n));
        let x2 = center_values(&cubed(&mut rng, n));
        assert!(matches!(estimate_pair(&x1, &x2, &s), Err(Error::Degenerate { .. })));
        // the fallback chain ends in the ungated fourth-order estimate
        match estimate_pair_auto(&x1, &x2, &s) {
            Ok(est) => assert_eq!(est.order_used, (1, 2)),
            Err(e) => assert!(matches!(e, Error::NonEstimable(_))),
        }
        let neg: Vec<f64> = x1.iter().map(|v| -v).collect();
        // cum22 > 0, cum13 < 0, cum11 < 0: positive argument, negative alpha_j
        let est = estimate_pair(&x1, &neg, &s).unwrap();
        assert!(est.alpha_i > 0.0 && est.alpha_j < 0.0);
        assert!(matches!(estimate_pair(&x1[..50], &x2[..50], &s), Err(Error::SampleSize { .. })));
    }

    #[test]
    fn null_weight_examples() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let w = null_weight(&labels(2), &a, None, 1e-8).unwrap();
        assert!((w.entries[0] / w.entries[1] + 2.0).abs() < 1e-12);
        let a = DMatrix::from_column_slice(2, 1, &[0.5, 0.7]);
        let w = null_weight(&labels(2), &a, Some("X0"), 1e-8).unwrap();
        assert_eq!(w.entries[0], 1.0);
        assert!((w.entries[1] + 5.0 / 7.0).abs() < 1e-12);
        let sq = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(null_weight(&labels(2), &sq, None, 1e-8), Err(Error::NoNullSpace));
    }

    #[test]
    fn anchor_with_zero_coefficient_falls_back() {
        // null space is spanned by e_0, so an anchor on row 1 is impossible
        let a = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let w = null_weight(&labels(2), &a, Some("X1"), 1e-8).unwrap();
        assert_eq!(w.anchor, None);
        assert!((w.entries[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn surrogate_residual_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let l = cubed(&mut rng, 300);
        let s = cubed(&mut rng, 300);
        let xj: Vec<f64> = l.iter().zip(&s).map(|(a, b)| a + b).collect();
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let r = surrogate_residual(&xj, &[&l], &a, 1e-8).unwrap();
        for (x, y) in r.iter().zip(&s) {
            assert!((x - y).abs() < 1e-12);
        }
        let lone = DMatrix::from_column_slice(1, 1, &[1.0]);
        assert_eq!(surrogate_residual(&xj, &[], &lone, 1e-8), Err(Error::NoNullSpace));
    }

    #[test]
    fn residual_removes_shared_latent() {
        // X1 = a1 L1 + g1 S, X2 = a2 L1 + L2 + e2; removing L1 from X2 via X1
        // leaves -(a2/a1) g1 S + L2 + e2, which no longer involves L1.
        let settings = TestSettings::default();
        let mut passes = 0;
        for t in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
            let n = 1000;
            let l1 = cubed(&mut rng, n);
            let l2 = cubed(&mut rng, n);
            let s = cubed(&mut rng, n);
            let e2 = cubed(&mut rng, n);
            let x1: Vec<f64> = (0..n).map(|i| 0.6 * l1[i] + 0.5 * s[i]).collect();
            let x2: Vec<f64> = (0..n).map(|i| 0.7 * l1[i] + 0.8 * l2[i] + e2[i]).collect();
            let a = DMatrix::from_column_slice(2, 1, &[0.7, 0.6]);
            let r = surrogate_residual(&x2, &[&x1], &a, 1e-8).unwrap();
            if test_independence(&r, &[&l1], &settings, t).unwrap().independent {
                passes += 1;
            }
        }
        assert!(passes >= 45, "{passes}/50");
    }

    #[test]
    fn recover_identity_blocks() {
        let mixing = MixingMatrix {
            rows: labels(2),
            columns: vec![
                Component::LatentConfounder("L1".into()),
                Component::ObservedNoise("X0".into()),
                Component::ObservedNoise("X1".into()),
            ],
            entries: vec![vec![0.4, 1.0, 0.0], vec![0.9, 0.5, 1.0]],
            estimated_mask: vec![vec![true; 3]; 2],
        };
        let (b, lambda) = recover_matrices(&mixing).unwrap();
        assert!((b[(1, 0)] - 0.5).abs() < 1e-12);
        assert!(b[(0, 1)].abs() < 1e-12);
        assert!((lambda[(1, 0)] - (0.9 - 0.5 * 0.4)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn anchored_weight_is_scale_invariant(
            vals in proptest::collection::vec(-2.0f64..2.0, 6),
            c in 0.01f64..100.0,
        ) {
            let a = DMatrix::from_row_slice(3, 2, &vals);
            prop_assume!(a.clone().svd(false, false).singular_values.iter().all(|s| *s > 1e-3));
            if let Ok(w1) = null_weight(&labels(3), &a, Some("X0"), 1e-8) {
                let w2 = null_weight(&labels(3), &(a.clone() * c), Some("X0"), 1e-8).unwrap();
                for (x, y) in w1.entries.iter().zip(&w2.entries) {
                    prop_assert!((x - y).abs() < 1e-8 * x.abs().max(1.0));
                }
                let wt = DMatrix::from_row_slice(1, 3, &w1.entries);
                let resid = (wt * &a).norm();
                prop_assert!(resid <= 1e-8 * a.norm().max(1.0));
            }
        }
    }
}
