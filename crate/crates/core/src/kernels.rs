//! Exact simple-random-walk primitives: the heat kernel `p(x, t)`, its
//! discrete gradient `Delta(x, t) = p(x+1, t) - p(x-1, t)`, power sums of
//! `Delta`, and dynamic programs for exponential moments of local times.
//!
//! Kernel tables up to [`EXACT_HORIZON`] are also available in rational
//! arithmetic; beyond that everything is double precision.

use std::sync::OnceLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::noise::ln_binomial;

/// Largest horizon for which rational kernel tables are built.
pub const EXACT_HORIZON: u64 = 64;

/// The local-time sweeps drop sites farther than this many `sqrt(t)` from
/// the evaluation window. A walk started there reaches the origin with
/// probability below `2 exp(-32)`.
pub const TRUNCATION_SIGMAS: f64 = 8.0;

/// `C(t, k) / 2^t` for `k = 0..=t`.
pub fn binomial_row(t: u64) -> Vec<f64> {
    let len = t as usize + 1;
    let mut row = vec![0.0; len];
    if t <= EXACT_HORIZON {
        let denom = 2f64.powi(t as i32);
        let mut c: u128 = 1;
        for k in 0..len {
            row[k] = c as f64 / denom;
            c = c * (t as u128 - k as u128) / (k as u128 + 1);
        }
        return row;
    }
    let mode = (t / 2) as usize;
    row[mode] = (ln_binomial(t, mode as u64) - t as f64 * std::f64::consts::LN_2).exp();
    for k in mode..len - 1 {
        row[k + 1] = row[k] * (t as f64 - k as f64) / (k as f64 + 1.0);
    }
    for k in (1..=mode).rev() {
        row[k - 1] = row[k] * k as f64 / (t as f64 - k as f64 + 1.0);
    }
    // The ratios are accurate to a few ulps; the anchor from ln_gamma is not.
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= total);
    row
}

/// Probability that a simple symmetric walk from 0 sits at `x` at time `t`.
pub fn heat_kernel(x: i64, t: u64) -> f64 {
    let ax = x.unsigned_abs();
    if ax > t || (ax + t) % 2 == 1 {
        return 0.0;
    }
    let k = (t + ax) / 2;
    if t <= EXACT_HORIZON {
        let c = (0..k.min(t - k)).fold(1u128, |acc, i| acc * (t - i) as u128 / (i as u128 + 1));
        return c as f64 / 2f64.powi(t as i32);
    }
    (ln_binomial(t, k) - t as f64 * std::f64::consts::LN_2).exp()
}

/// `Delta(x, t) = p(x + 1, t) - p(x - 1, t)`.
pub fn delta_kernel(x: i64, t: u64) -> f64 {
    heat_kernel(x + 1, t) - heat_kernel(x - 1, t)
}

/// `p(x, t)` as an exact rational, `t <= EXACT_HORIZON`.
pub fn heat_kernel_exact(x: i64, t: u64) -> Result<BigRational> {
    if t > EXACT_HORIZON {
        return Err(LabError::Unsupported(format!(
            "exact kernels are tabulated up to t = {EXACT_HORIZON}, got {t}"
        )));
    }
    let ax = x.unsigned_abs();
    if ax > t || (ax + t) % 2 == 1 {
        return Ok(BigRational::zero());
    }
    let k = (t + ax) / 2;
    let mut c = BigInt::one();
    for i in 0..k {
        c = c * BigInt::from(t - i) / BigInt::from(i + 1);
    }
    Ok(BigRational::new(c, BigInt::one() << t as usize))
}

pub fn delta_kernel_exact(x: i64, t: u64) -> Result<BigRational> {
    Ok(heat_kernel_exact(x + 1, t)? - heat_kernel_exact(x - 1, t)?)
}

/// Rows of `p(., t)` for `t <= horizon`, built by the one-step recursion.
#[derive(Debug, Clone)]
pub struct KernelTable {
    horizon: u64,
    // rows[t][x + t] = p(x, t), x in [-t, t]
    rows: Vec<Vec<f64>>,
}

impl KernelTable {
    pub fn new(horizon: u64) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(horizon as usize + 1);
        rows.push(vec![1.0]);
        for t in 1..=horizon as usize {
            let prev = &rows[t - 1];
            let mut row = vec![0.0; 2 * t + 1];
            for (i, &v) in prev.iter().enumerate() {
                row[i] += 0.5 * v;
                row[i + 2] += 0.5 * v;
            }
            rows.push(row);
        }
        KernelTable { horizon, rows }
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn p(&self, x: i64, t: u64) -> f64 {
        let t_i = t as i64;
        if t > self.horizon || x.abs() > t_i {
            return 0.0;
        }
        self.rows[t as usize][(x + t_i) as usize]
    }

    pub fn delta(&self, x: i64, t: u64) -> f64 {
        self.p(x + 1, t) - self.p(x - 1, t)
    }

    /// The nonzero entries `(d, Delta(d, r))`, `|d| <= r + 1`.
    pub fn delta_support(&self, r: u64) -> Vec<(i64, f64)> {
        let reach = r as i64 + 1;
        (-reach..=reach)
            .map(|d| (d, self.delta(d, r)))
            .filter(|&(_, w)| w != 0.0)
            .collect()
    }
}

/// Rational kernel rows for `t <= EXACT_HORIZON`.
#[derive(Debug, Clone)]
pub struct ExactKernelTable {
    rows: Vec<Vec<BigRational>>,
}

impl ExactKernelTable {
    pub fn new(horizon: u64) -> Result<Self> {
        if horizon > EXACT_HORIZON {
            return Err(LabError::Unsupported(format!(
                "exact tables stop at t = {EXACT_HORIZON}"
            )));
        }
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let mut rows = vec![vec![BigRational::one()]];
        for t in 1..=horizon as usize {
            let prev = &rows[t - 1];
            let mut row = vec![BigRational::zero(); 2 * t + 1];
            for (i, v) in prev.iter().enumerate() {
                let h = v * &half;
                row[i] += &h;
                row[i + 2] += h;
            }
            rows.push(row);
        }
        Ok(ExactKernelTable { rows })
    }

    pub fn p(&self, x: i64, t: u64) -> BigRational {
        let t_i = t as i64;
        match self.rows.get(t as usize) {
            Some(row) if x.abs() <= t_i => row[(x + t_i) as usize].clone(),
            _ => BigRational::zero(),
        }
    }

    pub fn delta(&self, x: i64, t: u64) -> BigRational {
        self.p(x + 1, t) - self.p(x - 1, t)
    }

    pub fn row(&self, t: u64) -> &[BigRational] {
        &self.rows[t as usize]
    }
}

fn check_power(k: u32) -> Result<()> {
    if k == 2 || k == 4 {
        Ok(())
    } else {
        Err(LabError::Unsupported(format!(
            "power sums of Delta are provided for k in {{2, 4}}, got {k}"
        )))
    }
}

/// `sum_x Delta(x, t)^k` from a kernel row.
fn power_sum_from_row(row: &[f64], t: u64, k: u32) -> f64 {
    // row[j] = p(2j - t, t); Delta(x, t) is nonzero on the sites x with
    // x + t odd, |x| <= t + 1.
    let p = |x: i64| -> f64 {
        let s = x + t as i64;
        if s < 0 || s % 2 != 0 || s > 2 * t as i64 {
            0.0
        } else {
            row[(s / 2) as usize]
        }
    };
    let reach = t as i64 + 1;
    (-reach..=reach)
        .map(|x| (p(x + 1) - p(x - 1)).powi(k as i32))
        .sum()
}

/// `S_k(t) = sum_x Delta(x, t)^k` for `k in {2, 4}`.
pub fn delta_power_sum(k: u32, t: u64) -> Result<f64> {
    check_power(k)?;
    Ok(power_sum_from_row(&binomial_row(t), t, k))
}

/// `S_k(t)` for every `t <= horizon`.
pub fn delta_power_sums(k: u32, horizon: u64) -> Result<Vec<f64>> {
    check_power(k)?;
    Ok((0..=horizon)
        .map(|t| power_sum_from_row(&binomial_row(t), t, k))
        .collect())
}

/// Decay exponent of the envelope used for tail bounds.
fn envelope_exponent(k: u32) -> f64 {
    if k == 2 {
        1.5
    } else {
        3.0
    }
}

const FIT_RANGE: (u64, u64) = (64, 512);

/// Doubled envelope constant `C_k = 2 max_{t in [64, 512]} S_k(t) t^alpha`.
pub fn envelope_constant(k: u32) -> Result<f64> {
    check_power(k)?;
    static CONSTANTS: OnceLock<(f64, f64)> = OnceLock::new();
    let (c2, c4) = *CONSTANTS.get_or_init(|| {
        let fit = |k: u32| {
            let alpha = envelope_exponent(k);
            (FIT_RANGE.0..=FIT_RANGE.1)
                .map(|t| {
                    power_sum_from_row(&binomial_row(t), t, k) * (t as f64).powf(alpha)
                })
                .fold(0.0f64, f64::max)
                * 2.0
        };
        (fit(2), fit(4))
    });
    Ok(if k == 2 { c2 } else { c4 })
}

/// Upper bound on `sum_{t > T} S_k(t)` from the fitted envelope
/// `C_k t^{-alpha}` (`alpha = 3/2` for `k = 2`, `3` for `k = 4`).
pub fn tail_sum(k: u32, horizon: u64) -> Result<f64> {
    if horizon < 1 {
        return Err(LabError::Parameter("tail sums need T >= 1".into()));
    }
    let c = envelope_constant(k)?;
    let alpha = envelope_exponent(k);
    Ok(c * (horizon as f64).powf(1.0 - alpha) / (alpha - 1.0))
}

/// Asymptotic estimate (not a bound) of `sum_{t > T} S_k(t)`.
///
/// Fits `S_k(t) ~ a t^{-alpha} (1 + b / t)` through `t = T` and `t = T/2`
/// (`alpha = 3/2` for `k = 2`, `7/2` for `k = 4`) and sums the fit with
/// Hurwitz zeta values.
pub fn tail_estimate(k: u32, horizon: u64) -> Result<f64> {
    check_power(k)?;
    if horizon < 16 {
        return Err(LabError::Parameter(format!(
            "tail estimates need T >= 16, got {horizon}"
        )));
    }
    let alpha = if k == 2 { 1.5 } else { 3.5 };
    let t1 = horizon as f64;
    let t2 = (horizon / 2) as f64;
    let g1 = delta_power_sum(k, horizon)? * t1.powf(alpha);
    let g2 = delta_power_sum(k, horizon / 2)? * t2.powf(alpha);
    // g(t) = a + c / t with c = a b.
    let c = (g1 - g2) / (1.0 / t1 - 1.0 / t2);
    let a = g1 - c / t1;
    let q = t1 + 1.0;
    Ok(a * hurwitz_zeta(alpha, q) + c * hurwitz_zeta(alpha + 1.0, q))
}

/// `zeta(s, q) = sum_{n >= 0} (q + n)^{-s}` for `s > 1`, `q >= 1`, by
/// Euler-Maclaurin summation.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const SHIFT: usize = 10;
    // B_2, B_4, B_6, B_8, B_10 over (2j)!
    const COEFFS: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30240.0,
        -1.0 / 1209600.0,
        1.0 / 47900160.0,
    ];
    let head: f64 = (0..SHIFT).map(|n| (q + n as f64).powf(-s)).sum();
    let w = q + SHIFT as f64;
    let mut sum = head + w.powf(1.0 - s) / (s - 1.0) + 0.5 * w.powf(-s);
    // rising factorial s (s+1) ... (s + 2j - 2)
    let mut rising = s;
    let mut power = w.powf(-s - 1.0);
    for (j, c) in COEFFS.iter().enumerate() {
        sum += c * rising * power;
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        power /= w * w;
    }
    sum
}

/// `2^{-t} sum_{q in RW(x, t)} gamma^{d(q)}` where `RW(x, t)` holds every
/// nearest-neighbour path ending at `x` at time `t` (any starting point)
/// and `d(q)` counts the times `1 <= i <= t` with `q(i) = 0`.
///
/// Equivalently `E_x[gamma^{#visits to 0 at times 0..t-1}]` for a walk
/// started at `x`, i.e. the mean partition function with flat data and no
/// bulk noise. Exact light-cone DP, `O(t (x + t))`.
pub fn free_start_local_time_dp(gamma: f64, x: u64, t: u64) -> f64 {
    let width = (x + t) as usize;
    let mut cur = vec![1.0; width + 2];
    let mut next = vec![0.0; width + 2];
    for s in 1..=t as usize {
        let w = width - s;
        next[0] = gamma * cur[1];
        for z in 1..=w {
            next[z] = 0.5 * (cur[z - 1] + cur[z + 1]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[x as usize]
}

/// `2^{-t} sum_q gamma^{d(q)}` over the paths `q` from `0` to `x` in `t`
/// steps, `d(q) = #{1 <= i <= t : q(i) = 0}`. At `gamma = 1` this is the heat
/// kernel `p(x, t)`; [`free_start_local_time_dp`] drops the pinned start.
pub fn local_time_mgf_dp(gamma: f64, x: i64, t: u64) -> f64 {
    let t_i = t as i64;
    if x.abs() > t_i {
        return 0.0;
    }
    let offset = t_i as usize;
    let len = 2 * offset + 3;
    let mut cur = vec![0.0; len];
    let mut next = vec![0.0; len];
    cur[offset + 1] = 1.0;
    for _ in 1..=t {
        for i in 1..len - 1 {
            let z = i as i64 - 1 - t_i;
            let w = if z == 0 { gamma } else { 1.0 };
            next[i] = w * 0.5 * (cur[i - 1] + cur[i + 1]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[(x + t_i) as usize + 1]
}

/// Mean number of visits to 0 at times `0..t-1` of a walk from `x`.
pub fn expected_local_time(x: u64, t: u64) -> f64 {
    let width = (x + t) as usize;
    let mut cur = vec![0.0; width + 2];
    let mut next = vec![0.0; width + 2];
    for s in 1..=t as usize {
        let w = width - s;
        next[0] = 1.0 + cur[1];
        for z in 1..=w {
            next[z] = 0.5 * (cur[z - 1] + cur[z + 1]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[x as usize]
}

/// `E[mu^{2 N_t}]` where `N_t` counts the hits of 0 during `(0, t]` by a
/// lazy walk (`+-1` with probability 1/4 each, hold with probability 1/2)
/// started at `k`.
pub fn lazy_hit_mgf_dp(mu: f64, k: u64, t: u64) -> Result<f64> {
    if !(mu >= 1.0) || !mu.is_finite() {
        return Err(LabError::Parameter(format!("mu must be >= 1, got {mu}")));
    }
    let hit = mu * mu;
    let width = (k + t) as usize;
    let mut cur = vec![1.0; width + 2];
    let mut next = vec![0.0; width + 2];
    let weight = |z: usize| if z == 0 { hit } else { 1.0 };
    for n in 1..=t as usize {
        let w = width - n;
        next[0] = 0.5 * hit * cur[0] + 0.5 * cur[1];
        for z in 1..=w {
            next[z] = 0.5 * cur[z]
                + 0.25 * weight(z - 1) * cur[z - 1]
                + 0.25 * cur[z + 1];
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(cur[k as usize])
}

/// `E_x[gamma^{2 |q(t)|}] = 2^{-t} sum_k C(t, k) gamma^{2 |x + 2k - t|}`.
pub fn endpoint_factor(gamma: f64, x: u64, t: u64) -> f64 {
    endpoint_factor_with_row(gamma, x, t, &binomial_row(t))
}

fn endpoint_factor_with_row(gamma: f64, x: u64, t: u64, row: &[f64]) -> f64 {
    let ln_g2 = 2.0 * gamma.ln();
    row.iter()
        .enumerate()
        .filter(|(_, &w)| w > 0.0)
        .map(|(k, &w)| {
            let end = (x as i64 + 2 * k as i64 - t as i64).abs() as f64;
            w * (ln_g2 * end).exp()
        })
        .sum()
}

/// `E_x[gamma^{-2 sum_s sgn(q(s-1)) (q(s) - q(s-1))}]` by exact DP.
pub fn martingale_factor(gamma: f64, x: u64, t: u64) -> f64 {
    let (up, down) = (gamma.powi(-2), gamma.powi(2));
    let width = (x + t) as usize;
    let mut cur = vec![1.0; width + 2];
    let mut next = vec![0.0; width + 2];
    for s in 1..=t as usize {
        let w = width - s;
        next[0] = cur[1];
        for z in 1..=w {
            next[z] = 0.5 * (up * cur[z + 1] + down * cur[z - 1]);
        }
        std::mem::swap(&mut cur, &mut next);
    }
    cur[x as usize]
}

/// One evaluation point of the local-time bound chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChainRow {
    #[serde(rename = "N")]
    pub n: u64,
    #[serde(rename = "A")]
    pub boundary: f64,
    pub x: u64,
    pub t: u64,
    pub dp_value: f64,
    /// `gamma^{E[d~]}`.
    pub jensen_lb: f64,
    /// `gamma^{-x} sqrt(E gamma^{2|q(t)|}) sqrt(E gamma^{-2 sum sgn dq})`.
    pub cs_ub: f64,
    /// `E[d~]`.
    pub mean_local_time: f64,
}

/// Evenly spaced integers in `[0, max]`, at most `count` of them.
pub fn subsample_grid(max: u64, count: usize) -> Vec<u64> {
    if count <= 1 || max == 0 {
        return vec![max];
    }
    let mut grid: Vec<u64> = (0..count)
        .map(|i| ((i as f64 * max as f64) / (count - 1) as f64).round() as u64)
        .collect();
    grid.dedup();
    grid
}

/// Evaluates the local-time moment, its Jensen lower bound and the
/// Cauchy-Schwarz upper bound on `xs x ts` with `gamma = 1 - A / sqrt(N)`.
///
/// A single sweep in time covers all points. Sites farther than
/// [`TRUNCATION_SIGMAS`] `sqrt(t_max)` beyond `max(xs)` are replaced by the
/// values of a walk that never reaches the origin.
pub fn local_time_bound_chain(
    n: u64,
    boundary: f64,
    xs: &[u64],
    ts: &[u64],
) -> Result<Vec<BoundChainRow>> {
    let gamma = 1.0 - boundary / (n as f64).sqrt();
    if !(gamma > 0.0) {
        return Err(LabError::Parameter(format!(
            "gamma = {gamma} must be positive"
        )));
    }
    let x_max = *xs.iter().max().unwrap_or(&0);
    let t_max = *ts.iter().max().unwrap_or(&0);
    let reach = (TRUNCATION_SIGMAS * (t_max as f64).sqrt()).ceil() as u64 + 2;
    let z_max = (x_max + t_max.min(reach)) as usize;

    let (up, down) = (gamma.powi(-2), gamma.powi(2));
    let rho = 0.5 * (up + down);
    // index z_max + 1 is the edge cell
    let len = z_max + 2;
    let mut h = vec![1.0; len];
    let mut d = vec![0.0; len];
    let mut m = vec![1.0; len];
    let (mut h2, mut d2, mut m2) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut edge_m = 1.0;

    let mut want: Vec<u64> = ts.to_vec();
    want.sort_unstable();
    want.dedup();
    let mut rows = Vec::with_capacity(xs.len() * want.len());
    let mut next_want = 0;

    let record = |t: u64, h: &[f64], d: &[f64], m: &[f64], rows: &mut Vec<BoundChainRow>| {
        let binom = binomial_row(t);
        for &x in xs {
            let xi = x as usize;
            let f1 = endpoint_factor_with_row(gamma, x, t, &binom);
            rows.push(BoundChainRow {
                n,
                boundary,
                x,
                t,
                dp_value: h[xi],
                jensen_lb: gamma.powf(d[xi]),
                cs_ub: gamma.powf(-(x as f64)) * f1.sqrt() * m[xi].sqrt(),
                mean_local_time: d[xi],
            });
        }
    };

    while next_want < want.len() && want[next_want] == 0 {
        record(0, &h, &d, &m, &mut rows);
        next_want += 1;
    }
    for t in 1..=t_max {
        h[z_max + 1] = 1.0;
        d[z_max + 1] = 0.0;
        m[z_max + 1] = edge_m;

        h2[0] = gamma * h[1];
        d2[0] = 1.0 + d[1];
        m2[0] = m[1];
        for z in 1..=z_max {
            h2[z] = 0.5 * (h[z - 1] + h[z + 1]);
            d2[z] = 0.5 * (d[z - 1] + d[z + 1]);
            m2[z] = 0.5 * (up * m[z + 1] + down * m[z - 1]);
        }
        std::mem::swap(&mut h, &mut h2);
        std::mem::swap(&mut d, &mut d2);
        std::mem::swap(&mut m, &mut m2);
        edge_m *= rho;

        while next_want < want.len() && want[next_want] == t {
            record(t, &h, &d, &m, &mut rows);
            next_want += 1;
        }
    }
    Ok(rows)
}
