//! Half-space directed polymer: the partition function `Z`, its two-term
//! chaos decomposition, the windowed gradient field `K`, the renormalization
//! field `Y`, the constant `V`, and the comparison `delta = f - f_poly - Y`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::growth::{GrowthFunction, InitialProfile, InterfaceField};
use crate::kernels::{delta_power_sums, tail_estimate, tail_sum, KernelTable};
use crate::noise::{ModelParams, NoiseSource, NoiseSpec, Weights};

/// Largest horizon accepted by [`partition_bruteforce`].
pub const BRUTEFORCE_MAX_T: u64 = 14;

/// `Z(x, t)` for `t <= horizon`. Row `t` holds `x in [0, len_t)`, either the
/// whole light cone of the evaluation window or just the window itself.
#[derive(Debug, Clone)]
pub struct PartitionField {
    params: ModelParams,
    profile: InitialProfile,
    x_eval: u64,
    horizon: u64,
    noise_tag: u64,
    rows: Vec<Vec<f64>>,
    nonpositive: usize,
}

fn check_gamma(params: &ModelParams) -> Result<()> {
    let g = params.gamma();
    if g > 0.0 {
        Ok(())
    } else {
        Err(LabError::Parameter(format!("gamma = {g} must be positive")))
    }
}

fn cone_width(x_eval: u64, horizon: u64, width: Option<u64>) -> Result<u64> {
    let min = x_eval + horizon;
    match width {
        None => Ok(min),
        Some(w) if w >= min => Ok(w),
        Some(w) => Err(LabError::Contract(format!(
            "slab width {w} is below the light-cone width {min}"
        ))),
    }
}

/// One step of `Z(x, t) = (1 + xi~(x, t)) (Z(x-1, t-1) + Z(x+1, t-1)) / 2`
/// on `[0, w]`, reflecting at the origin.
#[inline]
fn partition_step<S: NoiseSource + ?Sized>(
    weights: &Weights<'_, S>,
    t: u64,
    prev: &[f64],
    next: &mut [f64],
    w: usize,
) {
    next[0] = weights.one_plus_xi_tilde(0, t) * prev[1];
    for x in 1..=w {
        next[x] = weights.one_plus_xi(x as u64, t) * 0.5 * (prev[x - 1] + prev[x + 1]);
    }
}

fn evolve_partition_impl<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    horizon: u64,
    x_eval: u64,
    width: Option<u64>,
    keep_cone: bool,
) -> Result<PartitionField> {
    profile.validate()?;
    check_gamma(params)?;
    let width = cone_width(x_eval, horizon, width)?;
    let weights = Weights::new(noise, params)?;
    let n = params.n();
    let keep = |t: u64| -> usize {
        if keep_cone {
            (width - t) as usize + 1
        } else {
            x_eval as usize + 1
        }
    };

    let mut cur: Vec<f64> = (0..=width).map(|x| profile.value(x, n)).collect();
    let mut next = vec![0.0; cur.len()];
    let mut rows = Vec::with_capacity(horizon as usize + 1);
    rows.push(cur[..keep(0)].to_vec());
    let mut nonpositive = 0;
    for t in 1..=horizon {
        let w = (width - t) as usize;
        partition_step(&weights, t, &cur, &mut next, w);
        if let Some(x) = next[..=w].iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!("Z({x}, {t})")));
        }
        nonpositive += next[..=w].iter().filter(|&&v| v <= 0.0).count();
        std::mem::swap(&mut cur, &mut next);
        rows.push(cur[..keep(t)].to_vec());
    }
    Ok(PartitionField {
        params: *params,
        profile: profile.clone(),
        x_eval,
        horizon,
        noise_tag: noise.tag(),
        rows,
        nonpositive,
    })
}

/// Evolves `Z` and keeps the whole light cone of `[0, x_eval] x [0,
/// horizon]`, which the chaos and `Gamma` queries need.
pub fn evolve_partition<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    horizon: u64,
    x_eval: u64,
    width: Option<u64>,
) -> Result<PartitionField> {
    evolve_partition_impl(noise, params, profile, horizon, x_eval, width, true)
}

/// Like [`evolve_partition`] but stores only `x <= x_eval`.
pub fn evolve_partition_window<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    horizon: u64,
    x_eval: u64,
) -> Result<PartitionField> {
    evolve_partition_impl(noise, params, profile, horizon, x_eval, None, false)
}

impl PartitionField {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn profile(&self) -> &InitialProfile {
        &self.profile
    }

    pub fn x_eval(&self) -> u64 {
        self.x_eval
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn noise_tag(&self) -> u64 {
        self.noise_tag
    }

    /// Cells with `Z <= 0`; nonzero only for pathological noise.
    pub fn nonpositive_cells(&self) -> usize {
        self.nonpositive
    }

    /// `Z(x, t)` with `Z(-x, t) = Z(x, t)`.
    pub fn z(&self, x: i64, t: u64) -> Result<f64> {
        let ax = x.unsigned_abs() as usize;
        self.rows
            .get(t as usize)
            .and_then(|row| row.get(ax))
            .copied()
            .ok_or_else(|| LabError::Range(format!("Z({x}, {t}) is outside the stored region")))
    }

    /// `f_poly = beta^{-1} log Z`.
    pub fn f_poly(&self, x: i64, t: u64) -> Result<f64> {
        Ok(self.z(x, t)?.ln() / self.params.beta())
    }

    /// `Gamma(x, t) = (Z(|x+1|, t-1) + Z(|x-1|, t-1)) / 2`, so `Gamma(0, t) =
    /// Z(1, t-1)`.
    pub fn gamma_field(&self, x: i64, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(LabError::Range("Gamma needs t >= 1".into()));
        }
        Ok(0.5 * (self.z(x + 1, t - 1)? + self.z(x - 1, t - 1)?))
    }

    /// `exp(beta f~_poly(x, t))` at rescaled coordinates, interpolating
    /// `f_poly` bilinearly.
    pub fn rescaled_exp_beta(&self, x: f64, t: f64) -> Result<f64> {
        let p = &self.params;
        let (lx, lt) = (x * p.sqrt_n(), t * p.n() as f64);
        if !(lx >= 0.0 && lt >= 0.0) {
            return Err(LabError::Range(format!("negative coordinate ({x}, {t})")));
        }
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (lx, lt) = (snap(lx), snap(lt));
        let (x0, t0) = (lx.floor() as i64, lt.floor() as u64);
        let (fx, ft) = (lx - x0 as f64, lt - t0 as f64);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let t1 = if ft > 0.0 { t0 + 1 } else { t0 };
        let f = |x: i64, t: u64| self.f_poly(x, t);
        let v = (1.0 - ft) * ((1.0 - fx) * f(x0, t0)? + fx * f(x1, t0)?)
            + ft * ((1.0 - fx) * f(x0, t1)? + fx * f(x1, t1)?);
        Ok((p.beta() * v).exp())
    }
}

/// `2^{-t} sum_{q in RW(x, t)} Lambda(|q(0)|) gamma^{d(q)} prod_i exp(theta
/// y(|q(i)|, i)) / m(theta)` by enumerating all `2^t` paths.
pub fn partition_bruteforce<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    x: u64,
    t: u64,
) -> Result<f64> {
    if t > BRUTEFORCE_MAX_T {
        return Err(LabError::Refused(format!(
            "path enumeration needs 2^{t} terms; the limit is t = {BRUTEFORCE_MAX_T}"
        )));
    }
    check_gamma(params)?;
    let theta = params.theta();
    let log_m = noise.log_mgf(theta)?;
    let gamma = params.gamma();
    let n = params.n();
    let mut total = 0.0;
    let mut path = vec![0i64; t as usize + 1];
    for steps in 0..(1u64 << t) {
        path[t as usize] = x as i64;
        for i in (0..t as usize).rev() {
            let up = (steps >> i) & 1 == 1;
            path[i] = path[i + 1] + if up { 1 } else { -1 };
        }
        let mut log_w = 0.0;
        let mut visits = 0;
        for i in 1..=t as usize {
            let site = path[i].unsigned_abs();
            if site == 0 {
                visits += 1;
            }
            log_w += theta * noise.value(site, i as u64) - log_m;
        }
        total += profile.value(path[0].unsigned_abs(), n) * gamma.powi(visits) * log_w.exp();
    }
    Ok(total / (1u64 << t) as f64)
}

/// The two terms of `Z(x, t) = sum_z Lambda(|z|) p(x-z, t) + sum_z sum_s
/// p(x-z, t-s) xi~(|z|, s) Gamma(|z|, s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosTerms {
    pub kernel_term: f64,
    pub noise_term: f64,
    pub residual: f64,
}

fn check_realization<S: NoiseSource + ?Sized>(tag: u64, noise: &S) -> Result<()> {
    if tag == noise.tag() {
        Ok(())
    } else {
        Err(LabError::Contract(format!(
            "noise tag {} differs from the field's tag {tag}",
            noise.tag()
        )))
    }
}

pub fn chaos_decomposition<S: NoiseSource + ?Sized>(
    field: &PartitionField,
    noise: &S,
    x: u64,
    t: u64,
) -> Result<ChaosTerms> {
    check_realization(field.noise_tag, noise)?;
    if t > field.horizon || field.rows[t as usize].len() as u64 <= x {
        return Err(LabError::Contract(format!("({x}, {t}) has no complete light cone")));
    }
    // Gamma(|z|, s) reads Z(|z| + 1, s - 1) with |z| <= x + t - s.
    if (field.rows[0].len() as u64) < x + t + 1 {
        return Err(LabError::Contract(format!("({x}, {t}) needs the stored light cone")));
    }
    let weights = Weights::new(noise, &field.params)?;
    let table = KernelTable::new(t);
    let n = field.params.n();
    let (xi, ti) = (x as i64, t as i64);

    let kernel_term: f64 = (xi - ti..=xi + ti)
        .map(|z| field.profile.value(z.unsigned_abs(), n) * table.p(xi - z, t))
        .sum();
    let mut noise_term = 0.0;
    for s in 1..=t {
        let r = (t - s) as i64;
        for z in xi - r..=xi + r {
            let p = table.p(xi - z, t - s);
            if p == 0.0 {
                continue;
            }
            let site = z.unsigned_abs();
            noise_term += p * weights.xi_tilde(site, s) * field.gamma_field(site as i64, s)?;
        }
    }
    let z = field.z(xi, t)?;
    Ok(ChaosTerms {
        kernel_term,
        noise_term,
        residual: z - kernel_term - noise_term,
    })
}

/// `M(x, t) = sum_z sum_{s=1}^t Delta(x-z, t-s) xi~(|z|, s) Gamma(|z|, s)`,
/// so that `Z(x+1, t) - Z(x-1, t) = sum_z Delta(x-z, t) Lambda(|z|) + M(x, t)`.
pub fn m_field<S: NoiseSource + ?Sized>(
    field: &PartitionField,
    noise: &S,
    x: u64,
    t: u64,
) -> Result<f64> {
    check_realization(field.noise_tag, noise)?;
    if (field.rows[0].len() as u64) < x + t + 2 {
        return Err(LabError::Contract(format!("M({x}, {t}) needs the stored light cone")));
    }
    let weights = Weights::new(noise, &field.params)?;
    let table = KernelTable::new(t);
    let xi = x as i64;
    let mut total = 0.0;
    for s in 1..=t {
        let r = (t - s) as i64;
        for z in xi - r - 1..=xi + r + 1 {
            let d = table.delta(xi - z, t - s);
            if d == 0.0 {
                continue;
            }
            let site = z.unsigned_abs();
            total += d * weights.xi_tilde(site, s) * field.gamma_field(site as i64, s)?;
        }
    }
    Ok(total)
}

/// Length of the `K` window, `ceil(N^eps)`.
pub fn window_length(n: u64, epsilon: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(LabError::Parameter(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    Ok(((n as f64).powf(epsilon) - 1e-9).ceil().max(1.0) as u64)
}

/// `Delta(d, r)` for `r <= window`, with the sparse support of each row.
#[derive(Debug, Clone)]
struct KStencil {
    window: u64,
    table: KernelTable,
    support: Vec<Vec<(i64, f64)>>,
}

impl KStencil {
    fn new(window: u64) -> Self {
        let table = KernelTable::new(window);
        let support = (0..=window).map(|r| table.delta_support(r)).collect();
        KStencil {
            window,
            table,
            support,
        }
    }

    /// `K(x, t) = sum_{s in [t - window, t], s >= 1} sum_z xi~(|z|, s)
    /// Delta(x - z, t - s)`. Near the origin the two images `+-w` are grouped
    /// first, which makes `K(0, t)` vanish exactly.
    #[inline]
    fn value(&self, x: u64, t: u64, xi_tilde: impl Fn(u64, u64) -> f64) -> f64 {
        let mut acc = 0.0;
        let r_max = self.window.min(t.saturating_sub(1));
        for r in 0..=r_max {
            if t == 0 {
                break;
            }
            let s = t - r;
            let reach = r + 1;
            if x > reach {
                for &(d, c) in &self.support[r as usize] {
                    acc += c * xi_tilde((x as i64 - d) as u64, s);
                }
            } else {
                let xi = x as i64;
                let c0 = self.table.delta(xi, r);
                if c0 != 0.0 {
                    acc += c0 * xi_tilde(0, s);
                }
                for w in 1..=(x + reach) as i64 {
                    let c = self.table.delta(xi - w, r) + self.table.delta(xi + w, r);
                    if c != 0.0 {
                        acc += c * xi_tilde(w as u64, s);
                    }
                }
            }
        }
        acc
    }
}

/// `K(x, t)` at a single point.
pub fn k_field<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    x: u64,
    t: u64,
    epsilon: f64,
) -> Result<f64> {
    let stencil = KStencil::new(window_length(params.n(), epsilon)?);
    let weights = Weights::new(noise, params)?;
    Ok(stencil.value(x, t, |w, s| weights.xi_tilde(w, s)))
}

/// `K` on the light cone of `[0, x_eval] x [0, horizon]`.
#[derive(Debug, Clone)]
pub struct KField {
    params: ModelParams,
    epsilon: f64,
    window: u64,
    noise_tag: u64,
    x_eval: u64,
    rows: Vec<Vec<f64>>,
}

impl KField {
    pub fn compute<S: NoiseSource + ?Sized>(
        noise: &S,
        params: &ModelParams,
        epsilon: f64,
        horizon: u64,
        x_eval: u64,
    ) -> Result<Self> {
        let window = window_length(params.n(), epsilon)?;
        let stencil = KStencil::new(window);
        let weights = Weights::new(noise, params)?;
        let width = x_eval + horizon;
        let rows = (0..=horizon)
            .map(|t| {
                (0..=width - t)
                    .map(|x| stencil.value(x, t, |w, s| weights.xi_tilde(w, s)))
                    .collect()
            })
            .collect();
        Ok(KField {
            params: *params,
            epsilon,
            window,
            noise_tag: noise.tag(),
            x_eval,
            rows,
        })
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn horizon(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    pub fn x_eval(&self) -> u64 {
        self.x_eval
    }

    pub fn noise_tag(&self) -> u64 {
        self.noise_tag
    }

    /// `K(|x|, t)`.
    pub fn k(&self, x: i64, t: u64) -> Result<f64> {
        self.rows
            .get(t as usize)
            .and_then(|row| row.get(x.unsigned_abs() as usize))
            .copied()
            .ok_or_else(|| LabError::Range(format!("K({x}, {t}) is outside the stored cone")))
    }
}

/// `16 c / beta^4`.
pub fn y_prefactor(c: f64, params: &ModelParams) -> f64 {
    16.0 * c / params.beta().powi(4)
}

/// `Y(x, t) = (16 c / beta^4) sum_z sum_{s=1}^t p(x-z, t-s) K(|z|, s)^4` by
/// direct summation.
pub fn y_field(k: &KField, c: f64, params: &ModelParams, x: u64, t: u64) -> Result<f64> {
    let table = KernelTable::new(t);
    let xi = x as i64;
    let mut total = 0.0;
    for s in 1..=t {
        let r = (t - s) as i64;
        for z in (xi - r..=xi + r).step_by(2) {
            total += table.p(xi - z, t - s) * k.k(z, s)?.powi(4);
        }
    }
    Ok(y_prefactor(c, params) * total)
}

/// `Y` on `[0, x_eval] x [0, horizon]` by the equivalent recursion
/// `Y(x, t) = (Y(x-1, t-1) + Y(x+1, t-1)) / 2 + (16 c / beta^4) K(|x|, t)^4`.
#[derive(Debug, Clone)]
pub struct YField {
    params: ModelParams,
    c: f64,
    noise_tag: u64,
    rows: Vec<Vec<f64>>,
}

impl YField {
    pub fn from_k(k: &KField, c: f64) -> Self {
        let pref = y_prefactor(c, &k.params);
        let horizon = k.horizon();
        let width = k.x_eval + horizon;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(horizon as usize + 1);
        rows.push(vec![0.0; width as usize + 1]);
        for t in 1..=horizon as usize {
            let prev = &rows[t - 1];
            let kr = &k.rows[t];
            let w = width as usize - t;
            let mut row = vec![0.0; w + 1];
            row[0] = prev[1] + pref * kr[0].powi(4);
            for x in 1..=w {
                row[x] = 0.5 * (prev[x - 1] + prev[x + 1]) + pref * kr[x].powi(4);
            }
            rows.push(row);
        }
        YField {
            params: k.params,
            c,
            noise_tag: k.noise_tag,
            rows,
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn noise_tag(&self) -> u64 {
        self.noise_tag
    }

    pub fn horizon(&self) -> u64 {
        self.rows.len() as u64 - 1
    }

    pub fn y(&self, x: i64, t: u64) -> Result<f64> {
        self.rows
            .get(t as usize)
            .and_then(|row| row.get(x.unsigned_abs() as usize))
            .copied()
            .ok_or_else(|| LabError::Range(format!("Y({x}, {t}) is outside the stored cone")))
    }
}

/// `Y(x, t)` for one realization without storing the cone: `xi~` rows are
/// kept in a ring of `window + 1` rows and `Y` in two rows.
pub fn renorm_y_sample<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    epsilon: f64,
    c: f64,
    x: u64,
    t: u64,
) -> Result<f64> {
    check_gamma(params)?;
    let window = window_length(params.n(), epsilon)?;
    let stencil = KStencil::new(window);
    let weights = Weights::new(noise, params)?;
    let pref = y_prefactor(c, params);
    let width = (x + t) as usize;
    let ring_len = window as usize + 1;
    let reach = width + window as usize + 2;
    let mut ring = vec![vec![0.0; reach + 1]; ring_len];
    let mut y = vec![0.0; width + 2];
    let mut y_next = vec![0.0; width + 2];
    let mut k_row = vec![0.0; width + 1];
    for s in 1..=t {
        let w = width - s as usize;
        // xi~ at time s is read by K rows s..s+window, all of width <= w.
        let slot = &mut ring[s as usize % ring_len];
        let need = (w + window as usize + 1).min(reach);
        for (z, v) in slot.iter_mut().enumerate().take(need + 1) {
            *v = weights.xi_tilde(z as u64, s);
        }
        // Sites within reach of the origin fold the mirror images; beyond
        // that the stencil is applied row by row in the same term order.
        let bulk = window as usize + 2;
        for (z, v) in k_row.iter_mut().enumerate().take(bulk.min(w + 1)) {
            *v = stencil.value(z as u64, s, |site, time| ring[time as usize % ring_len][site as usize]);
        }
        if w >= bulk {
            k_row[bulk..=w].fill(0.0);
            for r in 0..=window.min(s - 1) {
                let row = &ring[(s - r) as usize % ring_len];
                for &(d, c) in &stencil.support[r as usize] {
                    let src = &row[(bulk as i64 - d) as usize..=(w as i64 - d) as usize];
                    for (k, &v) in k_row[bulk..=w].iter_mut().zip(src) {
                        *k += c * v;
                    }
                }
            }
        }
        y_next[0] = y[1] + pref * k_row[0].powi(4);
        for z in 1..=w {
            y_next[z] = 0.5 * (y[z - 1] + y[z + 1]) + pref * k_row[z].powi(4);
        }
        std::mem::swap(&mut y, &mut y_next);
    }
    let v = y[x as usize];
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::NonFinite(format!("Y({x}, {t})")))
    }
}

/// `c = psi''''(0, 0) / 24 + psi''(0, 0)^3 / 12`, from the rule's own
/// derivatives.
pub fn compute_c(growth: &GrowthFunction) -> Result<f64> {
    let (c2, c4) = growth.derivatives()?;
    let c = c4 / 24.0 + c2.powi(3) / 12.0;
    if c.is_finite() {
        Ok(c)
    } else {
        Err(LabError::NonFinite("renormalization constant c".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VReport {
    pub c: f64,
    /// Truncated sums plus the fitted asymptotic tail.
    #[serde(rename = "V")]
    pub v: f64,
    /// `V` from `t <= truncation` only.
    pub v_truncated: f64,
    /// Bound on `|V_exact - v_truncated|` from the doubled envelopes.
    pub tail_bound: f64,
    pub truncation: u64,
    pub sum_delta2: f64,
    pub sum_delta4: f64,
    pub mu2: f64,
    pub mu4: f64,
}

/// `V = c [(mu4 - mu2^2) sum sum Delta^4 + (mu2 sum sum Delta^2)^2]`.
pub fn compute_v(spec: &NoiseSpec, growth: &GrowthFunction, truncation: u64) -> Result<VReport> {
    if truncation < 16 {
        return Err(LabError::Parameter(format!("truncation must be >= 16, got {truncation}")));
    }
    let c = compute_c(growth)?;
    let mu2 = spec.moment(2)?;
    let mu4 = spec.moment(4)?;
    let s2: f64 = delta_power_sums(2, truncation)?.iter().sum();
    let s4: f64 = delta_power_sums(4, truncation)?.iter().sum();
    let excess = mu4 - mu2 * mu2;
    let v_of = |s2: f64, s4: f64| c * (excess * s4 + (mu2 * s2).powi(2));

    let (b2, b4) = (tail_sum(2, truncation)?, tail_sum(4, truncation)?);
    let tail_bound = c.abs() * (excess.abs() * b4 + mu2 * mu2 * (2.0 * s2 * b2 + b2 * b2));
    let (e2, e4) = (tail_estimate(2, truncation)?, tail_estimate(4, truncation)?);
    Ok(VReport {
        c,
        v: v_of(s2 + e2, s4 + e4),
        v_truncated: v_of(s2, s4),
        tail_bound,
        truncation,
        sum_delta2: s2 + e2,
        sum_delta4: s4 + e4,
        mu2,
        mu4,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaComparison {
    /// `(x, t, K, Y, delta)` on the window.
    pub rows: Vec<(u64, u64, f64, f64, f64)>,
    pub sup_abs: f64,
}

/// `delta = f - f_poly - Y` on `[0, a sqrt(N)] x [0, b N]` clipped to the
/// computed region. All inputs must come from the same realization.
pub fn delta_comparison(
    f: &InterfaceField,
    z: &PartitionField,
    k: &KField,
    y: &YField,
) -> Result<DeltaComparison> {
    let tags = [f.noise_tag(), z.noise_tag, k.noise_tag, y.noise_tag];
    if tags.iter().any(|&t| t != tags[0]) {
        return Err(LabError::Contract(format!("fields come from different realizations: {tags:?}")));
    }
    if f.params() != &z.params || z.params != k.params || k.params != y.params {
        return Err(LabError::Contract("fields were built with different parameters".into()));
    }
    let p = f.params();
    let x_max = p.x_window().min(f.x_eval()).min(z.x_eval);
    let t_max = p.t_window().min(f.horizon()).min(z.horizon).min(y.horizon());
    let mut rows = Vec::with_capacity(((x_max + 1) * (t_max + 1)) as usize);
    let mut sup = 0.0f64;
    for t in 0..=t_max {
        for x in 0..=x_max {
            let d = f.tilted(x, t)? - z.f_poly(x as i64, t)? - y.y(x as i64, t)?;
            sup = sup.max(d.abs());
            rows.push((x, t, k.k(x as i64, t)?, y.y(x as i64, t)?, d));
        }
    }
    Ok(DeltaComparison { rows, sup_abs: sup })
}

/// Extremes of one realization over `[0, a sqrt(N)] x [0, b N]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundScanSample {
    pub min_z: f64,
    /// `max |Z(x+1, t) - Z(x-1, t)|` over `x >= 1`.
    pub max_gradient: f64,
    /// `N^{-eps}`.
    pub lower_threshold: f64,
    /// `N^{-1/4 + eps}`.
    pub upper_threshold: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
}

/// Streams `Z` over the window and records its minimum and largest
/// two-site gradient.
pub fn bound_scan_sample<S: NoiseSource + ?Sized>(
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    epsilon: f64,
) -> Result<BoundScanSample> {
    profile.validate()?;
    check_gamma(params)?;
    let x_max = params.x_window() as usize;
    let horizon = params.t_window();
    // Gradients at x_max read x_max + 1.
    let width = x_max as u64 + 1 + horizon;
    let weights = Weights::new(noise, params)?;
    let n = params.n();
    let mut cur: Vec<f64> = (0..=width).map(|x| profile.value(x, n)).collect();
    let mut next = vec![0.0; cur.len()];
    let scan = |row: &[f64], min: &mut f64, grad: &mut f64| {
        for &v in &row[..=x_max] {
            *min = min.min(v);
        }
        for x in 1..=x_max {
            *grad = grad.max((row[x + 1] - row[x - 1]).abs());
        }
    };
    let (mut min_z, mut max_grad) = (f64::INFINITY, 0.0f64);
    scan(&cur, &mut min_z, &mut max_grad);
    for t in 1..=horizon {
        let w = (width - t) as usize;
        partition_step(&weights, t, &cur, &mut next, w);
        std::mem::swap(&mut cur, &mut next);
        scan(&cur, &mut min_z, &mut max_grad);
    }
    if !min_z.is_finite() || !max_grad.is_finite() {
        return Err(LabError::NonFinite("partition function in bound scan".into()));
    }
    let nf = n as f64;
    let lower_threshold = nf.powf(-epsilon);
    let upper_threshold = nf.powf(-0.25 + epsilon);
    Ok(BoundScanSample {
        min_z,
        max_gradient: max_grad,
        lower_threshold,
        upper_threshold,
        lower_ok: min_z >= lower_threshold,
        upper_ok: max_grad <= upper_threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioCheck {
    pub eta: f64,
    /// Points with `|R| < eta`.
    pub checked: usize,
    /// Largest `|r|` in `|f(x+1) - f(x-1)| = (2 / beta) |R| (1 + r)`.
    pub max_r: f64,
    pub holds: bool,
}

/// Pointwise check of `|f_poly(x+1, t) - f_poly(x-1, t)| = (2/beta) |R| (1 +
/// r)` with `|r| <= 2 eta` wherever `R = (Z(x+1) - Z(x-1)) / (Z(x+1) +
/// Z(x-1))` satisfies `|R| < eta`.
pub fn ratio_check(field: &PartitionField, eta: f64) -> Result<RatioCheck> {
    let beta = field.params.beta();
    let (mut checked, mut max_r) = (0usize, 0.0f64);
    for t in 0..=field.horizon {
        let x_hi = (field.x_eval as usize).min(field.rows[t as usize].len() - 2) as i64;
        for x in 1..=x_hi {
            let (zp, zm) = (field.z(x + 1, t)?, field.z(x - 1, t)?);
            let ratio = (zp - zm) / (zp + zm);
            if ratio.abs() >= eta || ratio == 0.0 {
                continue;
            }
            let lhs = (field.f_poly(x + 1, t)? - field.f_poly(x - 1, t)?).abs();
            let r = lhs / (2.0 / beta * ratio.abs()) - 1.0;
            checked += 1;
            max_r = max_r.max(r.abs());
        }
    }
    Ok(RatioCheck {
        eta,
        checked,
        max_r,
        holds: max_r <= 2.0 * eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::evolve_interface;
    use crate::kernels::delta_kernel;
    use crate::noise::{NoiseField, PinnedNoise, ZeroNoise};
    use approx::assert_relative_eq;

    fn params(n: u64, a: f64) -> ModelParams {
        ModelParams::new(n, 1.0, a).unwrap()
    }

    fn tab() -> InitialProfile {
        InitialProfile::Tabulated {
            values: vec![1.0, 1.5, 0.7, 2.0, 1.2, 0.9],
        }
    }

    #[test]
    fn constant_data_is_preserved_without_noise() {
        let z = evolve_partition(&ZeroNoise, &params(64, 0.0), &InitialProfile::Flat, 20, 5, None).unwrap();
        for t in 0..=20 {
            for x in -5..=5 {
                assert_eq!(z.z(x, t).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn one_step_values() {
        let p = params(64, 2.0);
        let noise = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 4);
        let prof = tab();
        let z = evolve_partition(&noise, &p, &prof, 1, 3, None).unwrap();
        let w = Weights::new(&noise, &p).unwrap();
        let one_plus = |x| 1.0 + w.xi(x, 1);
        assert_relative_eq!(z.z(0, 1).unwrap(), p.gamma() * one_plus(0) * 1.5, max_relative = 1e-14);
        assert_relative_eq!(z.z(2, 1).unwrap(), one_plus(2) * (1.5 + 2.0) / 2.0, max_relative = 1e-14);
        for x in 0..4 {
            assert_eq!(z.z(x, 0).unwrap(), prof.value(x as u64, 64));
            assert_eq!(z.z(-x, 1).unwrap(), z.z(x, 1).unwrap());
        }
    }

    #[test]
    fn bruteforce_agrees_with_recursion() {
        for seed in 0..3 {
            let noise = NoiseField::new(NoiseSpec::Uniform { half_width: 1.5 }, seed);
            let p = params(16, 1.0);
            let z = evolve_partition(&noise, &p, &tab(), 10, 4, None).unwrap();
            for t in 0..=10 {
                for x in 0..=4 {
                    let b = partition_bruteforce(&noise, &p, &tab(), x, t).unwrap();
                    assert_relative_eq!(z.z(x as i64, t).unwrap(), b, max_relative = 1e-12);
                }
            }
        }
        let refused = partition_bruteforce(&ZeroNoise, &params(16, 0.0), &tab(), 0, 15);
        assert!(matches!(refused, Err(LabError::Refused(_))));
    }

    #[test]
    fn bruteforce_at_t0_is_lambda() {
        assert_eq!(partition_bruteforce(&ZeroNoise, &params(4, 0.0), &tab(), 3, 0).unwrap(), 2.0);
    }

    #[test]
    fn chaos_identity_and_degenerate_cases() {
        let noise = NoiseField::new(NoiseSpec::Rademacher, 8);
        let p = params(64, 0.8);
        let z = evolve_partition(&noise, &p, &tab(), 25, 6, None).unwrap();
        for t in [0u64, 1, 7, 25] {
            for x in 0..=6 {
                let c = chaos_decomposition(&z, &noise, x, t).unwrap();
                assert!(c.residual.abs() < 1e-12, "{x} {t}: {c:?}");
            }
        }
        let flat = evolve_partition(&ZeroNoise, &params(64, 0.0), &InitialProfile::Flat, 12, 3, None).unwrap();
        let c = chaos_decomposition(&flat, &ZeroNoise, 2, 12).unwrap();
        assert_eq!(c.noise_term, 0.0);
        assert_relative_eq!(c.kernel_term, 1.0, epsilon = 1e-15);

        let other = NoiseField::new(NoiseSpec::Rademacher, 9);
        assert!(matches!(chaos_decomposition(&z, &other, 1, 3), Err(LabError::Contract(_))));
        let window = evolve_partition_window(&noise, &p, &tab(), 25, 6).unwrap();
        assert!(chaos_decomposition(&window, &noise, 1, 3).is_ok());
        assert!(matches!(chaos_decomposition(&window, &noise, 5, 10), Err(LabError::Contract(_))));
    }

    #[test]
    fn gradient_decomposition_through_m() {
        let noise = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 21);
        let p = params(100, -1.0);
        let z = evolve_partition(&noise, &p, &tab(), 20, 6, None).unwrap();
        let table = KernelTable::new(20);
        for t in [1u64, 5, 20] {
            for x in 1..=5i64 {
                let m = m_field(&z, &noise, x as u64, t).unwrap();
                let ti = t as i64;
                let kern: f64 = (x - ti - 1..=x + ti + 1)
                    .map(|w| table.delta(x - w, t) * tab().value(w.unsigned_abs(), 100))
                    .sum();
                let diff = z.z(x + 1, t).unwrap() - z.z(x - 1, t).unwrap();
                assert!((diff - kern - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deterministic_part_of_m_is_small() {
        // No bulk noise but gamma != 1: M is the boundary sum only.
        for &n in &[100u64, 400, 1600] {
            let p = params(n, 1.0);
            let z = evolve_partition(&ZeroNoise, &p, &InitialProfile::Flat, 40, 8, Some(49)).unwrap();
            for x in 1..=8u64 {
                let m = m_field(&z, &ZeroNoise, x, 40).unwrap();
                let scale: f64 = (0..40).map(|r| delta_kernel(x as i64, r).abs()).sum();
                assert!(m.abs() <= 1.0 / (n as f64).sqrt() * scale + 1e-15);
            }
        }
    }

    #[test]
    fn k_vanishes_at_origin_and_on_zero_noise() {
        for seed in 0..5 {
            let noise = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, seed);
            let p = params(10_000, 1.5);
            let k = KField::compute(&noise, &p, 0.3, 60, 5).unwrap();
            for t in 0..=60 {
                assert_eq!(k.k(0, t).unwrap(), 0.0);
            }
        }
        let k = KField::compute(&ZeroNoise, &params(64, 0.0), 0.2, 20, 4).unwrap();
        assert!(k.rows.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn k_impulse_response() {
        let p = params(4096, 0.0);
        let (z0, s0) = (3u64, 10u64);
        let noise = PinnedNoise::new(NoiseSpec::Rademacher).with(z0, s0, 1.0);
        let xi0 = Weights::new(&noise, &p).unwrap().xi(z0, s0);
        let window = window_length(4096, 0.25).unwrap();
        assert_eq!(window, 8);
        // Everything else carries xi = exp(-log m) - 1 since y = 0 there;
        // subtract the response of the all-zero background.
        let flat = PinnedNoise::new(NoiseSpec::Rademacher);
        let xi_bg = Weights::new(&flat, &p).unwrap().xi(0, 1);
        for x in 0..12u64 {
            for t in s0..=s0 + window {
                let diff = k_field(&noise, &p, x, t, 0.25).unwrap() - k_field(&flat, &p, x, t, 0.25).unwrap();
                let r = t - s0;
                let expect = (xi0 - xi_bg)
                    * (delta_kernel(x as i64 - z0 as i64, r) + delta_kernel(x as i64 + z0 as i64, r));
                assert!((diff - expect).abs() < 1e-15, "x={x} t={t}");
            }
        }
    }

    #[test]
    fn y_recursion_matches_convolution_and_boundary_identity() {
        let noise = NoiseField::new(NoiseSpec::Rademacher, 5);
        let p = params(256, 1.0);
        let k = KField::compute(&noise, &p, 0.3, 30, 6).unwrap();
        let y = YField::from_k(&k, 1.0 / 12.0);
        for t in 0..=30u64 {
            for x in 0..=6u64 {
                let direct = y_field(&k, 1.0 / 12.0, &p, x, t).unwrap();
                assert_relative_eq!(y.y(x as i64, t).unwrap(), direct, max_relative = 1e-12, epsilon = 1e-300);
            }
            if t >= 1 {
                assert_eq!(y.y(0, t).unwrap(), y.y(1, t - 1).unwrap());
            } else {
                assert_eq!(y.y(3, 0).unwrap(), 0.0);
            }
        }
        let streamed = renorm_y_sample(&noise, &p, 0.3, 1.0 / 12.0, 6, 30).unwrap();
        assert_relative_eq!(streamed, y.y(6, 30).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn c_and_v() {
        let quad = GrowthFunction::quadratic(1.0).unwrap();
        assert_relative_eq!(compute_c(&quad).unwrap(), 1.0 / 12.0, max_relative = 1e-15);
        let r = compute_v(&NoiseSpec::Rademacher, &quad, 128).unwrap();
        // Rademacher: only the squared series survives, and sum sum Delta^2 = 4.
        assert_relative_eq!(r.v, 16.0 / 12.0, max_relative = 1e-4);
        assert!(r.v_truncated < r.v && r.v - r.v_truncated <= r.tail_bound);
        assert!(matches!(compute_v(&NoiseSpec::Rademacher, &quad, 8), Err(LabError::Parameter(_))));
    }

    #[test]
    fn delta_vanishes_for_polymer_growth_without_y() {
        let noise = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 17);
        let p = params(64, 1.0).with_window(1.0, 0.5).unwrap();
        let poly = GrowthFunction::polymer(1.0).unwrap();
        let f = evolve_interface(&poly, &noise, &p, &tab(), 32, 8, None).unwrap();
        let z = evolve_partition(&noise, &p, &tab(), 32, 8, None).unwrap();
        let k = KField::compute(&noise, &p, 0.2, 32, 8).unwrap();
        let y = YField::from_k(&k, 0.0);
        let d = delta_comparison(&f, &z, &k, &y).unwrap();
        assert!(d.sup_abs < 1e-10, "{}", d.sup_abs);
        assert_eq!(d.rows.len(), 9 * 33);

        let other = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 18);
        let z2 = evolve_partition(&other, &p, &tab(), 32, 8, None).unwrap();
        assert!(matches!(delta_comparison(&f, &z2, &k, &y), Err(LabError::Contract(_))));
    }

    #[test]
    fn ratio_relation_holds() {
        let noise = NoiseField::new(NoiseSpec::Rademacher, 2);
        let p = params(1024, 0.5);
        let z = evolve_partition_window(&noise, &p, &InitialProfile::Flat, 200, 20).unwrap();
        let r = ratio_check(&z, 0.1).unwrap();
        assert!(r.checked > 1000 && r.holds, "{r:?}");
        assert!(r.max_r < 0.1 * 0.1);
    }

    #[test]
    fn bound_scan_runs() {
        let noise = NoiseField::new(NoiseSpec::Rademacher, 3);
        let p = params(256, 0.0);
        let s = bound_scan_sample(&noise, &p, &InitialProfile::Flat, 0.2).unwrap();
        let z = evolve_partition_window(&noise, &p, &InitialProfile::Flat, 256, 17).unwrap();
        let min = (0..=256u64)
            .flat_map(|t| (0..=16i64).map(move |x| (x, t)))
            .map(|(x, t)| z.z(x, t).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(s.min_z, min);
        assert!(s.min_z > 0.0 && s.max_gradient > 0.0);
    }

    #[test]
    fn rescaled_polymer_at_time_zero_is_lambda() {
        let z = evolve_partition_window(&ZeroNoise, &params(16, 0.0), &tab(), 4, 5).unwrap();
        assert_relative_eq!(z.rescaled_exp_beta(0.25, 0.0).unwrap(), 1.5, max_relative = 1e-12);
    }
}
