//! Joint cumulant estimation.
//!
//! Orders 2 to 4 use multivariate k-statistics written as a sum over set
//! partitions of the index tuple, each block contributing a power sum. The
//! two-variable cumulants of order 5 and 6 needed by the higher-order pair
//! estimator use the plug-in moment expansion instead.

use std::sync::OnceLock;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Number of leave-one-group-out replicates used for jackknife errors.
pub const JACKKNIFE_GROUPS: usize = 20;

/// Indices into a dataset naming the variables of a joint cumulant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CumulantIndex {
    pub variables: Vec<usize>,
}

impl CumulantIndex {
    pub fn new(variables: Vec<usize>) -> Result<Self> {
        if !(2..=8).contains(&variables.len()) {
            return Err(Error::UnsupportedOrder(variables.len()));
        }
        Ok(CumulantIndex { variables })
    }

    pub fn from_labels<S: AsRef<str>>(data: &Dataset, labels: &[S]) -> Result<Self> {
        let vars = labels
            .iter()
            .map(|l| {
                data.index_of(l.as_ref())
                    .ok_or_else(|| Error::LabelMismatch(format!("no column named {}", l.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        CumulantIndex::new(vars)
    }

    pub fn order(&self) -> usize {
        self.variables.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CumulantEstimate {
    pub value: f64,
    pub order: usize,
    /// Only filled for the single-variable fourth cumulant.
    pub variance_estimate: Option<f64>,
    pub sample_size: usize,
}

/// Set partitions of `{0..k}` with blocks stored as bitmasks.
pub fn set_partitions(k: usize) -> &'static [Vec<u8>] {
    static TABLE: OnceLock<Vec<Vec<Vec<u8>>>> = OnceLock::new();
    let table = TABLE.get_or_init(|| (0..=8).map(build_partitions).collect());
    &table[k]
}

fn build_partitions(k: usize) -> Vec<Vec<u8>> {
    fn rec(i: usize, k: usize, blocks: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if i == k {
            out.push(blocks.clone());
            return;
        }
        for b in 0..blocks.len() {
            blocks[b] |= 1 << i;
            rec(i + 1, k, blocks, out);
            blocks[b] &= !(1 << i);
        }
        blocks.push(1 << i);
        rec(i + 1, k, blocks, out);
        blocks.pop();
    }
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

fn kstat_weight(k: usize, blocks: &[u8], n: f64) -> f64 {
    let mut sizes: Vec<u32> = blocks.iter().map(|b| b.count_ones()).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    match (k, sizes.as_slice()) {
        (2, [2]) => n,
        (2, [1, 1]) => -1.0,
        (3, [3]) => n * n,
        (3, [2, 1]) => -n,
        (3, [1, 1, 1]) => 2.0,
        (4, [4]) => n * n * (n + 1.0),
        (4, [3, 1]) => -n * (n + 1.0),
        (4, [2, 2]) => -n * (n - 1.0),
        (4, [2, 1, 1]) => 2.0 * n,
        (4, [1, 1, 1, 1]) => -6.0,
        _ => unreachable!("k-statistic weights exist for orders 2 to 4"),
    }
}

fn kstat_denominator(k: usize, n: f64) -> f64 {
    (0..k).map(|i| n - i as f64).product()
}

/// k-statistic of order `k` given a power-sum lookup per block mask.
pub fn kstat_from_sums(k: usize, n: f64, block_sum: impl Fn(u8) -> f64) -> f64 {
    let mut total = 0.0;
    for blocks in set_partitions(k) {
        let prod: f64 = blocks.iter().map(|&b| block_sum(b)).product();
        total += kstat_weight(k, blocks, n) * prod;
    }
    total / kstat_denominator(k, n)
}

/// Plug-in joint cumulant from raw moments, for any order up to 8.
pub fn plugin_from_moments(k: usize, moment: impl Fn(u8) -> f64) -> f64 {
    let mut total = 0.0;
    for blocks in set_partitions(k) {
        let h = blocks.len();
        let sign = if h % 2 == 1 { 1.0 } else { -1.0 };
        let fact: f64 = (1..h).map(|i| i as f64).product();
        let prod: f64 = blocks.iter().map(|&b| moment(b)).product();
        total += sign * fact * prod;
    }
    total
}

/// Subtracts the sample mean with a second correction pass.
pub fn center_values(x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len() as f64;
    let mut mean = x.iter().sum::<f64>() / n;
    mean += x.iter().map(|v| v - mean).sum::<f64>() / n;
    x.iter().map(|v| v - mean).collect()
}

pub fn center(data: &Dataset) -> Result<Dataset> {
    if data.n_vars() > 0 && data.n_samples() == 0 {
        return Err(Error::Shape("empty column".into()));
    }
    let cols = data.columns().iter().map(|c| center_values(c)).collect();
    Dataset::new(data.labels().to_vec(), cols)
}

/// Power sums of products over every subset of up to four columns.
#[derive(Debug, Clone, Copy)]
struct TupleSums {
    n: f64,
    s: [f64; 16],
}

impl TupleSums {
    fn zero() -> Self {
        TupleSums { n: 0.0, s: [0.0; 16] }
    }

    fn add_row(&mut self, vals: &[f64]) {
        let k = vals.len();
        self.n += 1.0;
        for mask in 1u8..(1 << k) {
            let mut p = 1.0;
            for (i, v) in vals.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    p *= v;
                }
            }
            self.s[mask as usize] += p;
        }
    }

    fn minus(&self, other: &TupleSums) -> TupleSums {
        let mut out = *self;
        out.n -= other.n;
        for (o, v) in out.s.iter_mut().zip(other.s.iter()) {
            *o -= v;
        }
        out
    }

    fn kstat(&self, k: usize) -> f64 {
        kstat_from_sums(k, self.n, |m| self.s[m as usize])
    }
}

fn check_tuple(cols: &[&[f64]]) -> Result<usize> {
    let k = cols.len();
    if !(2..=4).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    let n = cols[0].len();
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Shape("columns differ in length".into()));
    }
    if n <= k {
        return Err(Error::SampleSize { need: k + 1, got: n });
    }
    Ok(n)
}

/// Unbiased k-statistic for the joint cumulant of the given columns.
pub fn kstat(cols: &[&[f64]]) -> Result<f64> {
    let n = check_tuple(cols)?;
    let k = cols.len();
    let mut sums = TupleSums::zero();
    let mut row = vec![0.0; k];
    for t in 0..n {
        for (r, c) in row.iter_mut().zip(cols) {
            *r = c[t];
        }
        sums.add_row(&row);
    }
    Ok(sums.kstat(k))
}

/// k-statistic together with its delete-group jackknife standard error.
pub fn kstat_with_se(cols: &[&[f64]]) -> Result<(f64, f64)> {
    let n = check_tuple(cols)?;
    let k = cols.len();
    let bounds = group_bounds(n, JACKKNIFE_GROUPS);
    let mut groups = vec![TupleSums::zero(); bounds.len()];
    let mut row = vec![0.0; k];
    for (g, &(lo, hi)) in bounds.iter().enumerate() {
        for t in lo..hi {
            for (r, c) in row.iter_mut().zip(cols) {
                *r = c[t];
            }
            groups[g].add_row(&row);
        }
    }
    let mut total = TupleSums::zero();
    for g in &groups {
        total.n += g.n;
        for (a, b) in total.s.iter_mut().zip(g.s.iter()) {
            *a += b;
        }
    }
    let value = total.kstat(k);
    let reps: Vec<f64> = groups
        .iter()
        .filter(|g| total.n - g.n > k as f64)
        .map(|g| total.minus(g).kstat(k))
        .collect();
    Ok((value, jackknife_se(&reps)))
}

pub(crate) fn group_bounds(n: usize, groups: usize) -> Vec<(usize, usize)> {
    let g = groups.min(n).max(1);
    (0..g).map(|i| (i * n / g, (i + 1) * n / g)).collect()
}

pub(crate) fn jackknife_se(reps: &[f64]) -> f64 {
    let g = reps.len() as f64;
    if reps.len() < 2 {
        return f64::INFINITY;
    }
    let mean = reps.iter().sum::<f64>() / g;
    let ss: f64 = reps.iter().map(|r| (r - mean).powi(2)).sum();
    ((g - 1.0) / g * ss).sqrt()
}

/// Joint cumulant of order 2 to 4 over dataset columns.
pub fn joint_cumulant(data: &Dataset, idx: &CumulantIndex) -> Result<CumulantEstimate> {
    let k = idx.order();
    if !(2..=4).contains(&k) {
        return Err(Error::UnsupportedOrder(k));
    }
    if let Some(&bad) = idx.variables.iter().find(|&&v| v >= data.n_vars()) {
        return Err(Error::Shape(format!("column index {bad} out of range")));
    }
    let cols: Vec<&[f64]> = idx.variables.iter().map(|&v| data.column(v)).collect();
    let value = kstat(&cols)?;
    let single = idx.variables.iter().all(|&v| v == idx.variables[0]);
    let variance_estimate = if k == 4 && single && data.n_samples() > 8 {
        Some(cumulant4_variance(cols[0])?)
    } else {
        None
    };
    Ok(CumulantEstimate { value, order: k, variance_estimate, sample_size: data.n_samples() })
}

/// Power sums `sum x^a y^b` for `a + b <= max_order`.
#[derive(Debug, Clone, Copy)]
pub struct PairSums {
    pub n: f64,
    pub s: [[f64; 7]; 7],
}

impl PairSums {
    fn zero() -> Self {
        PairSums { n: 0.0, s: [[0.0; 7]; 7] }
    }

    fn minus(&self, other: &PairSums) -> PairSums {
        let mut out = *self;
        out.n -= other.n;
        for a in 0..7 {
            for b in 0..7 {
                out.s[a][b] -= other.s[a][b];
            }
        }
        out
    }

    /// Estimate of `C_{a,b}`: k-statistic up to order 4, plug-in above.
    pub fn cumulant(&self, a: usize, b: usize) -> f64 {
        let k = a + b;
        let xmask: u8 = (1u8 << a) - 1;
        let counts = |m: u8| ((m & xmask).count_ones() as usize, (m & !xmask).count_ones() as usize);
        if k <= 4 {
            kstat_from_sums(k, self.n, |m| {
                let (ca, cb) = counts(m);
                self.s[ca][cb]
            })
        } else {
            plugin_from_moments(k, |m| {
                let (ca, cb) = counts(m);
                self.s[ca][cb] / self.n
            })
        }
    }
}

/// Pair power sums over the full sample and over jackknife groups.
#[derive(Debug, Clone)]
pub struct PairMoments {
    pub total: PairSums,
    groups: Vec<PairSums>,
    max_order: usize,
}

impl PairMoments {
    pub fn new(x: &[f64], y: &[f64], max_order: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape("series differ in length".into()));
        }
        if max_order > 6 {
            return Err(Error::UnsupportedOrder(max_order));
        }
        let n = x.len();
        if n <= max_order {
            return Err(Error::SampleSize { need: max_order + 1, got: n });
        }
        let bounds = group_bounds(n, JACKKNIFE_GROUPS);
        let mut groups = vec![PairSums::zero(); bounds.len()];
        let mut xp = [1.0f64; 7];
        let mut yp = [1.0f64; 7];
        for (g, &(lo, hi)) in bounds.iter().enumerate() {
            let sums = &mut groups[g];
            for t in lo..hi {
                for e in 1..=max_order {
                    xp[e] = xp[e - 1] * x[t];
                    yp[e] = yp[e - 1] * y[t];
                }
                for a in 0..=max_order {
                    for b in 0..=(max_order - a) {
                        sums.s[a][b] += xp[a] * yp[b];
                    }
                }
            }
            sums.n = (hi - lo) as f64;
        }
        let mut total = PairSums::zero();
        for g in &groups {
            total.n += g.n;
            for a in 0..7 {
                for b in 0..7 {
                    total.s[a][b] += g.s[a][b];
                }
            }
        }
        Ok(PairMoments { total, groups, max_order })
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Value of `f` on the full sample and its jackknife standard error.
    pub fn jackknife(&self, f: impl Fn(&PairSums) -> f64) -> (f64, f64) {
        let value = f(&self.total);
        let reps: Vec<f64> = self.groups.iter().map(|g| f(&self.total.minus(g))).collect();
        (value, jackknife_se(&reps))
    }

    pub fn cumulant(&self, a: usize, b: usize) -> f64 {
        self.total.cumulant(a, b)
    }

    pub fn cumulant_with_se(&self, a: usize, b: usize) -> (f64, f64) {
        self.jackknife(|s| s.cumulant(a, b))
    }
}

/// Two-variable cumulant with `xi` repeated `a` times and `xj` repeated `b` times.
pub fn cum_ab(xi: &[f64], xj: &[f64], a: usize, b: usize) -> Result<CumulantEstimate> {
    if a < 1 || b < 1 {
        return Err(Error::InvalidArgument("a and b must be at least 1".into()));
    }
    if a + b > 6 {
        return Err(Error::UnsupportedOrder(a + b));
    }
    let pm = PairMoments::new(xi, xj, a + b)?;
    Ok(CumulantEstimate {
        value: pm.cumulant(a, b),
        order: a + b,
        variance_estimate: None,
        sample_size: xi.len(),
    })
}

/// Sampling-variance diagnostic for the fourth cumulant, evaluated with
/// sample central moments as `(m8 - 12 m6 m2 - 8 m5 m3 - m4^2 + 48 m4 m2^2
/// + 64 m3^2 - m2 - 36 m2^4) / n`.
pub fn cumulant4_variance(x: &[f64]) -> Result<f64> {
    let n = x.len();
    if n <= 8 {
        return Err(Error::SampleSize { need: 9, got: n });
    }
    let xc = center_values(x);
    let mut m = [0.0f64; 9];
    for v in &xc {
        let mut p = 1.0;
        for slot in m.iter_mut() {
            *slot += p;
            p *= v;
        }
    }
    let nf = n as f64;
    let mu = |k: usize| m[k] / nf;
    let expr = mu(8) - 12.0 * mu(6) * mu(2) - 8.0 * mu(5) * mu(3) - mu(4).powi(2)
        + 48.0 * mu(4) * mu(2).powi(2)
        + 64.0 * mu(3).powi(2)
        - mu(2)
        - 36.0 * mu(2).powi(4);
    Ok(expr / nf)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    // k-statistics through central sample moments, coded independently of
    // the power-sum route.
    fn central_oracle(cols: &[&[f64]]) -> f64 {
        let n = cols[0].len();
        let nf = n as f64;
        let centered: Vec<Vec<f64>> = cols
            .iter()
            .map(|c| {
                let mean = c.iter().sum::<f64>() / nf;
                c.iter().map(|v| v - mean).collect()
            })
            .collect();
        let m = |idx: &[usize]| -> f64 {
            (0..n).map(|t| idx.iter().map(|&i| centered[i][t]).product::<f64>()).sum::<f64>() / nf
        };
        match cols.len() {
            2 => nf * m(&[0, 1]) / (nf - 1.0),
            3 => nf * nf * m(&[0, 1, 2]) / ((nf - 1.0) * (nf - 2.0)),
            4 => {
                let pairs = m(&[0, 1]) * m(&[2, 3]) + m(&[0, 2]) * m(&[1, 3]) + m(&[0, 3]) * m(&[1, 2]);
                nf * nf * ((nf + 1.0) * m(&[0, 1, 2, 3]) - (nf - 1.0) * pairs)
                    / ((nf - 1.0) * (nf - 2.0) * (nf - 3.0))
            }
            _ => unreachable!(),
        }
    }

    fn gaussian_even_moment(k: u32) -> f64 {
        (1..=k).map(|i| (2 * i - 1) as f64).product()
    }

    fn cubed_kappa4() -> f64 {
        // E[Z^12] = 11!! and E[Z^6]^2 = 225 for the standardized cube.
        (gaussian_even_moment(6) - 3.0 * 225.0) / 225.0
    }

    #[test]
    fn partitions_have_bell_counts() {
        let bell = [0, 1, 2, 5, 15, 52, 203];
        for k in 1..=6 {
            assert_eq!(set_partitions(k).len(), bell[k]);
        }
    }

    #[test]
    fn center_examples() {
        assert_eq!(center_values(&[1.0, 2.0, 3.0]), vec![-1.0, 0.0, 1.0]);
        assert_eq!(center_values(&[-1.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(center_values(&[5.0, 5.0, 5.0]), vec![0.0, 0.0, 0.0]);
        let ds = Dataset::new(vec!["a".into()], vec![vec![]]).unwrap();
        assert!(center(&ds).is_err());
    }

    #[test]
    fn order_two_is_unbiased_covariance() {
        let x = [1.0, -2.0, 0.5, 3.0, -2.5];
        let y = [0.3, 0.1, -1.0, 2.0, -1.4];
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
        assert!((kstat(&[&x, &y]).unwrap() - cov).abs() < 1e-14);
    }

    #[test]
    fn unit_variance_example() {
        let x = center_values(&[1.0, -1.0, 1.0, -1.0]);
        let v = kstat(&[&x, &x]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-15);
        let ds = Dataset::new(vec!["X".into()], vec![x.iter().map(|v| v * (0.75f64).sqrt()).collect()]).unwrap();
        let est = joint_cumulant(&ds, &CumulantIndex::new(vec![0, 0]).unwrap()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_orders_and_sizes() {
        let ds = Dataset::new(vec!["a".into()], vec![vec![1.0, 2.0, 3.0]]).unwrap();
        let idx5 = CumulantIndex::new(vec![0; 5]).unwrap();
        assert_eq!(joint_cumulant(&ds, &idx5), Err(Error::UnsupportedOrder(5)));
        let idx4 = CumulantIndex::new(vec![0; 4]).unwrap();
        assert!(matches!(joint_cumulant(&ds, &idx4), Err(Error::SampleSize { .. })));
        assert!(matches!(cum_ab(&[0.0; 10], &[0.0; 10], 4, 3), Err(Error::UnsupportedOrder(7))));
    }

    #[test]
    fn small_sample_oracle_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(6..=30);
            let k = rng.random_range(2..=4);
            let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
            let cols: Vec<&[f64]> = raw.iter().map(|c| c.as_slice()).collect();
            let got = kstat(&cols).unwrap();
            let want = central_oracle(&cols);
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-3), "{got} vs {want}");
        }
    }

    #[test]
    fn gaussian_fourth_cumulant_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let x = center_values(&x);
        let k4 = kstat(&[&x, &x, &x, &x]).unwrap();
        assert!(k4.abs() < 4.0 * (24.0 / n as f64).sqrt());
        let k3 = kstat(&[&x, &x, &x]).unwrap();
        assert!(k3.abs() < 4.0 * (6.0 / n as f64).sqrt());
    }

    #[test]
    fn population_mixing_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 400_000;
        let l = center_values(&cubed(&mut rng, n));
        let x1: Vec<f64> = l.iter().map(|v| 2.0 * v).collect();
        let x2: Vec<f64> = l.iter().map(|v| 3.0 * v).collect();
        let k4 = kstat(&[&l, &l, &l, &l]).unwrap();
        let c31 = cum_ab(&x1, &x2, 3, 1).unwrap().value;
        assert!((c31 - 24.0 * k4).abs() < 1e-9 * c31.abs());
        let c22 = kstat(&[&x1, &x1, &x2, &x2]).unwrap();
        assert!((c22 - 36.0 * k4).abs() < 1e-9 * c22.abs());
        // the sample value sits near the closed-form cumulant
        assert!((k4 - cubed_kappa4()).abs() < 0.3 * cubed_kappa4());
    }

    #[test]
    fn cubed_gaussian_kappa4_value() {
        assert!((cubed_kappa4() - 43.2).abs() < 1e-12);
    }

    #[test]
    fn cum_ab_matches_joint_cumulant() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = center_values(&cubed(&mut rng, 500));
        let y = center_values(&cubed(&mut rng, 500));
        let ds = Dataset::new(vec!["x".into(), "y".into()], vec![x.clone(), y.clone()]).unwrap();
        let c11 = cum_ab(&x, &y, 1, 1).unwrap().value;
        let cov = joint_cumulant(&ds, &CumulantIndex::new(vec![0, 1]).unwrap()).unwrap().value;
        assert!((c11 - cov).abs() < 1e-12);
        let c22 = cum_ab(&x, &y, 2, 2).unwrap().value;
        let j22 = joint_cumulant(&ds, &CumulantIndex::new(vec![0, 0, 1, 1]).unwrap()).unwrap().value;
        assert!((c22 - j22).abs() < 1e-9 * j22.abs().max(1.0));
    }

    #[test]
    fn higher_order_plugin_matches_univariate_formula() {
        // plug-in sixth cumulant for x = y equals the moment expansion
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = center_values(&cubed(&mut rng, 2000));
        let n = x.len() as f64;
        let m = |k: i32| x.iter().map(|v| v.powi(k)).sum::<f64>() / n;
        let k6 = m(6) - 15.0 * m(4) * m(2) - 10.0 * m(3).powi(2) + 30.0 * m(2).powi(3);
        let got = cum_ab(&x, &x, 3, 3).unwrap().value;
        assert!((got - k6).abs() < 1e-8 * k6.abs());
        let k5 = m(5) - 10.0 * m(3) * m(2);
        let got5 = cum_ab(&x, &x, 2, 3).unwrap().value;
        assert!((got5 - k5).abs() < 1e-8 * k5.abs().max(1.0));
    }

    #[test]
    fn variance_formula_as_printed() {
        // Gaussian population moments 1, 0, 3, 0, 15, 0, 105 give 23/n.
        let (m2, m3, m4, m5, m6, m8): (f64, f64, f64, f64, f64, f64) = (1.0, 0.0, 3.0, 0.0, 15.0, 105.0);
        let expr: f64 = m8 - 12.0 * m6 * m2 - 8.0 * m5 * m3 - m4 * m4 + 48.0 * m4 * m2 * m2 + 64.0 * m3 * m3
            - m2
            - 36.0 * m2.powi(4);
        assert_eq!(expr, 23.0);
        assert_eq!(cumulant4_variance(&[4.0; 20]).unwrap(), 0.0);
        let x: Vec<f64> = (0..50).map(|i| ((i * 7919) % 31) as f64 - 15.0).collect();
        let doubled: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let v1 = cumulant4_variance(&x).unwrap();
        let v2 = cumulant4_variance(&doubled).unwrap();
        assert!((v2 - v1 / 2.0).abs() < 1e-12 * v1.abs());
        assert!(cumulant4_variance(&[1.0; 8]).is_err());
    }

    #[test]
    fn gaussian_variance_diagnostic_near_23_over_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400_000;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let v = cumulant4_variance(&x).unwrap() * n as f64;
        assert!((v - 23.0).abs() < 3.0, "{v}");
    }

    #[test]
    fn independent_blocks_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 50_000;
        let x = center_values(&cubed(&mut rng, n));
        let y = center_values(&cubed(&mut rng, n));
        let (v, se) = kstat_with_se(&[&x, &x, &y, &y]).unwrap();
        assert!(v.abs() < 4.0 * se, "{v} {se}");
        let (v, se) = kstat_with_se(&[&x, &y, &y, &y]).unwrap();
        assert!(v.abs() < 4.0 * se, "{v} {se}");
    }

    #[test]
    fn multilinearity_at_large_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 200_000;
        let l = cubed(&mut rng, n);
        let x: Vec<f64> = l.iter().zip(cubed(&mut rng, n)).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = l.iter().zip(cubed(&mut rng, n)).map(|(a, b)| 0.5 * a + b).collect();
        let z: Vec<f64> = l.iter().zip(cubed(&mut rng, n)).map(|(a, b)| 0.7 * a + b).collect();
        let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (lhs, se) = kstat_with_se(&[&combo, &z, &z, &z]).unwrap();
        let rhs = 2.0 * kstat(&[&x, &z, &z, &z]).unwrap() - 3.0 * kstat(&[&y, &z, &z, &z]).unwrap();
        // k-statistics are exactly multilinear in the data
        assert!((lhs - rhs).abs() < 1e-8 * lhs.abs().max(1.0));
        let population = (2.0 - 1.5) * 0.7f64.powi(3) * 43.2;
        assert!((lhs - population).abs() < 5.0 * se, "{lhs} vs {population} (se {se})");
    }

    proptest! {
        #[test]
        fn permutation_symmetry(seed in 0u64..1000, n in 6usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
            let base = kstat(&[&cols[0], &cols[1], &cols[2], &cols[3]]).unwrap();
            let perms = [[1, 0, 2, 3], [3, 2, 1, 0], [2, 0, 3, 1], [0, 3, 1, 2], [1, 2, 3, 0]];
            for p in perms {
                let v = kstat(&[&cols[p[0]], &cols[p[1]], &cols[p[2]], &cols[p[3]]]).unwrap();
                prop_assert!((v - base).abs() <= 1e-10 * base.abs().max(1e-6));
            }
        }

        #[test]
        fn oracle_equivalence(seed in 0u64..10_000, n in 5usize..=30, k in 2usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let cols: Vec<&[f64]> = raw.iter().map(|c| c.as_slice()).collect();
            let got = kstat(&cols).unwrap();
            let want = central_oracle(&cols);
            prop_assert!((got - want).abs() <= 1e-10 * want.abs().max(1e-4));
        }
    }
}
