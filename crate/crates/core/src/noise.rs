//! Noise laws, model parameters and the seeded space-time noise field.
//!
//! The field is counter based: the value at `(x, t)` is a pure function of
//! `(master_seed, x, t)`, so lattices can be filled in any order (or in
//! parallel) and still agree bit for bit.

use std::collections::BTreeMap;
use std::convert::TryFrom;
use std::fmt;

use rand::distr::{Distribution, Uniform};
use rand::RngCore;
use rand_distr::{Binomial, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Highest moment order carried by [`NoiseSpec::moment`].
pub const MAX_MOMENT: u32 = 8;

/// Scaling parameter `N`, curvature `beta`, boundary constant `A` and the
/// rescaled window `[0, a] x [0, b]`.
///
/// `gamma = 1 - A / sqrt(N)` is always derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n: u64,
    beta: f64,
    boundary: f64,
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    #[serde(rename = "N")]
    n: u64,
    beta: f64,
    #[serde(rename = "A")]
    boundary: f64,
    #[serde(default = "one")]
    a: f64,
    #[serde(default = "one")]
    b: f64,
}

fn one() -> f64 {
    1.0
}

impl TryFrom<RawParams> for ModelParams {
    type Error = LabError;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.n, raw.beta, raw.boundary)?.with_window(raw.a, raw.b)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            n: p.n,
            beta: p.beta,
            boundary: p.boundary,
            a: p.a,
            b: p.b,
        }
    }
}

impl ModelParams {
    /// Window defaults to `a = b = 1`.
    pub fn new(n: u64, beta: f64, boundary: f64) -> Result<Self> {
        if n == 0 {
            return Err(LabError::Parameter("N must be a positive integer".into()));
        }
        if !beta.is_finite() || beta == 0.0 {
            return Err(LabError::Parameter(format!(
                "beta must be finite and nonzero, got {beta}"
            )));
        }
        if !boundary.is_finite() {
            return Err(LabError::Parameter("A must be finite".into()));
        }
        let params = ModelParams {
            n,
            beta,
            boundary,
            a: 1.0,
            b: 1.0,
        };
        if params.gamma() <= 0.0 {
            return Err(LabError::Parameter(format!(
                "gamma = 1 - A/sqrt(N) = {} must be positive (A = {boundary}, N = {n})",
                params.gamma()
            )));
        }
        Ok(params)
    }

    pub fn with_window(mut self, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite() && b > 0.0 && b.is_finite()) {
            return Err(LabError::Parameter(format!(
                "window sizes must be positive, got a = {a}, b = {b}"
            )));
        }
        self.a = a;
        self.b = b;
        Ok(self)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The boundary constant `A`.
    pub fn boundary(&self) -> f64 {
        self.boundary
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    /// Reflection rate at the origin.
    pub fn gamma(&self) -> f64 {
        1.0 - self.boundary / self.sqrt_n()
    }

    /// `N^{-1/4}`, the amplitude multiplying `y(x, t)` in the recursion.
    pub fn noise_scale(&self) -> f64 {
        (self.n as f64).powf(-0.25)
    }

    /// `beta * N^{-1/4}`, the MGF argument used for the tilt and for `xi`.
    pub fn theta(&self) -> f64 {
        self.beta * self.noise_scale()
    }

    /// Largest lattice site of the spatial window, `floor(a sqrt(N))`.
    pub fn x_window(&self) -> u64 {
        (self.a * self.sqrt_n() + 1e-9).floor() as u64
    }

    /// Largest lattice time of the window, `floor(b N)`.
    pub fn t_window(&self) -> u64 {
        (self.b * self.n as f64 + 1e-9).floor() as u64
    }
}

/// Law of the background noise `y(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRepr", into = "NoiseSpecRepr")]
pub enum NoiseSpec {
    Rademacher,
    Gaussian { sigma: f64 },
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// `Binomial(n, 1/2) - n/2`.
    CenteredBinomial { n: u32 },
}

#[derive(Serialize, Deserialize)]
struct NoiseSpecRepr {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parameter: Option<f64>,
}

impl TryFrom<NoiseSpecRepr> for NoiseSpec {
    type Error = LabError;

    fn try_from(repr: NoiseSpecRepr) -> Result<Self> {
        NoiseSpec::from_name(&repr.family, repr.parameter)
    }
}

impl From<NoiseSpec> for NoiseSpecRepr {
    fn from(spec: NoiseSpec) -> Self {
        NoiseSpecRepr {
            family: spec.family_name().to_string(),
            parameter: spec.parameter(),
        }
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parameter() {
            Some(p) => write!(f, "{}({p})", self.family_name()),
            None => f.write_str(self.family_name()),
        }
    }
}

impl NoiseSpec {
    /// Builds a spec from its config name. Gaussian and uniform default to
    /// unit variance when no parameter is given.
    pub fn from_name(family: &str, parameter: Option<f64>) -> Result<Self> {
        let spec = match family {
            "rademacher" => NoiseSpec::Rademacher,
            "gaussian" => NoiseSpec::Gaussian {
                sigma: parameter.unwrap_or(1.0),
            },
            "uniform" => NoiseSpec::Uniform {
                half_width: parameter.unwrap_or(3f64.sqrt()),
            },
            "centered_binomial" | "centered-binomial" => {
                let n = parameter.unwrap_or(4.0);
                if n.fract() != 0.0 || n < 1.0 || n > u32::MAX as f64 {
                    return Err(LabError::Parameter(format!(
                        "centered-binomial needs a positive integer n, got {n}"
                    )));
                }
                NoiseSpec::CenteredBinomial { n: n as u32 }
            }
            other => {
                return Err(LabError::Parameter(format!(
                    "unknown noise family `{other}`"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseSpec::Rademacher => true,
            NoiseSpec::Gaussian { sigma } => sigma > 0.0 && sigma.is_finite(),
            NoiseSpec::Uniform { half_width } => half_width > 0.0 && half_width.is_finite(),
            NoiseSpec::CenteredBinomial { n } => n >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(LabError::Parameter(format!(
                "{self} has a degenerate parameter (mu_2 must be positive)"
            )))
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            NoiseSpec::Rademacher => "rademacher",
            NoiseSpec::Gaussian { .. } => "gaussian",
            NoiseSpec::Uniform { .. } => "uniform",
            NoiseSpec::CenteredBinomial { .. } => "centered_binomial",
        }
    }

    pub fn parameter(&self) -> Option<f64> {
        match *self {
            NoiseSpec::Rademacher => None,
            NoiseSpec::Gaussian { sigma } => Some(sigma),
            NoiseSpec::Uniform { half_width } => Some(half_width),
            NoiseSpec::CenteredBinomial { n } => Some(n as f64),
        }
    }

    /// `log m(theta)`, evaluated without forming `m` so it stays finite for
    /// large arguments.
    pub fn log_mgf(&self, theta: f64) -> Result<f64> {
        if !theta.is_finite() {
            return Err(self.domain_error(theta));
        }
        let value = match *self {
            NoiseSpec::Rademacher => ln_cosh(theta),
            NoiseSpec::Gaussian { sigma } => 0.5 * sigma * sigma * theta * theta,
            NoiseSpec::Uniform { half_width } => ln_sinhc(half_width * theta),
            NoiseSpec::CenteredBinomial { n } => n as f64 * ln_cosh(0.5 * theta),
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(self.domain_error(theta))
        }
    }

    /// `m(theta) = E[exp(theta y)]`.
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        let m = self.log_mgf(theta)?.exp();
        if m.is_finite() {
            Ok(m)
        } else {
            Err(self.domain_error(theta))
        }
    }

    /// Raw moment `mu_k = E[y^k]` for `1 <= k <= 8`.
    pub fn moment(&self, k: u32) -> Result<f64> {
        if !(1..=MAX_MOMENT).contains(&k) {
            return Err(LabError::Unsupported(format!(
                "moment order {k} (supported: 1..={MAX_MOMENT})"
            )));
        }
        if k % 2 == 1 {
            return Ok(0.0);
        }
        let value = match *self {
            NoiseSpec::Rademacher => 1.0,
            NoiseSpec::Gaussian { sigma } => {
                let double_factorial: f64 = (1..k).step_by(2).map(|j| j as f64).product();
                sigma.powi(k as i32) * double_factorial
            }
            NoiseSpec::Uniform { half_width } => half_width.powi(k as i32) / (k as f64 + 1.0),
            NoiseSpec::CenteredBinomial { n } => {
                let half = n as f64 / 2.0;
                let ln_total = n as f64 * std::f64::consts::LN_2;
                (0..=n)
                    .map(|j| {
                        let w = (ln_binomial(n as u64, j as u64) - ln_total).exp();
                        w * (j as f64 - half).powi(k as i32)
                    })
                    .sum()
            }
        };
        Ok(value)
    }

    pub fn variance(&self) -> f64 {
        self.moment(2).expect("order 2 is supported")
    }

    fn domain_error(&self, theta: f64) -> LabError {
        LabError::MgfDomain {
            family: self.family_name(),
            theta,
        }
    }
}

/// `(m(theta), mu_k)` in one call.
pub fn mgf_and_moments(spec: &NoiseSpec, theta: f64, k: u32) -> Result<(f64, f64)> {
    Ok((spec.mgf(theta)?, spec.moment(k)?))
}

pub(crate) fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln(sinh(u) / u)`.
fn ln_sinhc(u: f64) -> f64 {
    let au = u.abs();
    if au < 1e-3 {
        let u2 = au * au;
        u2 / 6.0 - u2 * u2 / 180.0 + u2 * u2 * u2 / 2835.0
    } else {
        au + (-(-2.0 * au).exp()).ln_1p() - std::f64::consts::LN_2 - au.ln()
    }
}

pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// A source of the background noise `y(x, t)` on `N_0 x N_0`.
pub trait NoiseSource: Sync {
    fn value(&self, x: u64, t: u64) -> f64;

    /// `log m(theta)` for the law the values are drawn from.
    fn log_mgf(&self, theta: f64) -> Result<f64>;

    /// Identifies the realization; fields built from different tags are
    /// never compared with each other.
    fn tag(&self) -> u64;
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit stream key from a master seed and a path of
/// indices (replicate, model, ...).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master ^ 0x6A09_E667_F3BC_C909), |acc, &p| {
            mix64(acc ^ mix64(p.wrapping_add(0xBB67_AE85_84CA_A73B)))
        })
}

#[inline]
fn cell_key(seed: u64, x: u64, t: u64) -> u64 {
    mix64(mix64(seed ^ mix64(x)) ^ t.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Counter-mode generator for one lattice cell.
struct CellRng {
    key: u64,
    counter: u64,
}

impl RngCore for CellRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key ^ self.counter.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}

#[derive(Debug, Clone)]
enum Sampler {
    Rademacher,
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
    Binomial(Binomial, f64),
}

/// The seeded i.i.d. field `y(x, t)`.
#[derive(Debug, Clone)]
pub struct NoiseField {
    spec: NoiseSpec,
    master_seed: u64,
    sampler: Sampler,
}

impl NoiseField {
    pub fn new(spec: NoiseSpec, master_seed: u64) -> Self {
        let sampler = match spec {
            NoiseSpec::Rademacher => Sampler::Rademacher,
            NoiseSpec::Gaussian { sigma } => {
                Sampler::Normal(Normal::new(0.0, sigma).expect("validated sigma"))
            }
            NoiseSpec::Uniform { half_width } => Sampler::Uniform(
                Uniform::new_inclusive(-half_width, half_width).expect("validated width"),
            ),
            NoiseSpec::CenteredBinomial { n } => Sampler::Binomial(
                Binomial::new(n as u64, 0.5).expect("validated n"),
                n as f64 / 2.0,
            ),
        };
        NoiseField {
            spec,
            master_seed,
            sampler,
        }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// `y(x, t)`; identical inputs give identical bits.
    pub fn sample(&self, x: u64, t: u64) -> f64 {
        let key = cell_key(self.master_seed, x, t);
        match &self.sampler {
            Sampler::Rademacher => {
                if mix64(key) >> 63 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Sampler::Normal(d) => d.sample(&mut CellRng { key, counter: 0 }),
            Sampler::Uniform(d) => d.sample(&mut CellRng { key, counter: 0 }),
            Sampler::Binomial(d, half) => d.sample(&mut CellRng { key, counter: 0 }) as f64 - half,
        }
    }
}

/// `y(x, t)` from a field; kept as a free function for symmetry with the
/// other field operations.
pub fn sample_noise(field: &NoiseField, x: u64, t: u64) -> f64 {
    field.sample(x, t)
}

impl NoiseSource for NoiseField {
    fn value(&self, x: u64, t: u64) -> f64 {
        self.sample(x, t)
    }

    fn log_mgf(&self, theta: f64) -> Result<f64> {
        self.spec.log_mgf(theta)
    }

    fn tag(&self) -> u64 {
        self.master_seed
    }
}

/// Identically zero background (`m = 1`, so `xi = 0`).
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn value(&self, _x: u64, _t: u64) -> f64 {
        0.0
    }

    fn log_mgf(&self, _theta: f64) -> Result<f64> {
        Ok(0.0)
    }

    fn tag(&self) -> u64 {
        0
    }
}

/// Explicit values at a few cells (zero elsewhere), normalized with the MGF
/// of `spec`. Used to place impulses and hand-picked realizations.
#[derive(Debug, Clone)]
pub struct PinnedNoise {
    spec: NoiseSpec,
    values: BTreeMap<(u64, u64), f64>,
    tag: u64,
}

impl PinnedNoise {
    pub fn new(spec: NoiseSpec) -> Self {
        PinnedNoise {
            spec,
            values: BTreeMap::new(),
            tag: u64::MAX,
        }
    }

    pub fn with(mut self, x: u64, t: u64, y: f64) -> Self {
        self.values.insert((x, t), y);
        self
    }

    pub fn with_tag(mut self, tag: u64) -> Self {
        self.tag = tag;
        self
    }
}

impl NoiseSource for PinnedNoise {
    fn value(&self, x: u64, t: u64) -> f64 {
        self.values.get(&(x, t)).copied().unwrap_or(0.0)
    }

    fn log_mgf(&self, theta: f64) -> Result<f64> {
        self.spec.log_mgf(theta)
    }

    fn tag(&self) -> u64 {
        self.tag
    }
}

/// Multiplicative weights `1 + xi` and `1 + xi~` for a given source and
/// parameter set, with `theta` and `log m(theta)` evaluated once.
#[derive(Clone, Copy)]
pub struct Weights<'a, S: NoiseSource + ?Sized> {
    source: &'a S,
    scale: f64,
    theta: f64,
    log_m: f64,
    gamma: f64,
    // exp(+-theta - log m), the only values taken under +-1 noise
    up: f64,
    down: f64,
    up_m1: f64,
    down_m1: f64,
}

impl<'a, S: NoiseSource + ?Sized> Weights<'a, S> {
    pub fn new(source: &'a S, params: &ModelParams) -> Result<Self> {
        let theta = params.theta();
        let log_m = source.log_mgf(theta)?;
        Ok(Weights {
            source,
            scale: params.noise_scale(),
            theta,
            log_m,
            gamma: params.gamma(),
            up: (theta - log_m).exp(),
            down: (-theta - log_m).exp(),
            up_m1: (theta - log_m).exp_m1(),
            down_m1: (-theta - log_m).exp_m1(),
        })
    }

    pub fn source(&self) -> &'a S {
        self.source
    }

    /// `log m(beta N^{-1/4})`.
    pub fn log_m(&self) -> f64 {
        self.log_m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `N^{-1/4} y(x, t)`.
    #[inline]
    pub fn kick(&self, x: u64, t: u64) -> f64 {
        self.scale * self.source.value(x, t)
    }

    /// `1 + xi(x, t) = exp(theta y) / m(theta)`.
    #[inline]
    pub fn one_plus_xi(&self, x: u64, t: u64) -> f64 {
        let y = self.source.value(x, t);
        // The sign pick is a select; only the (predictable) +-1 test branches.
        let pm = if y > 0.0 { self.up } else { self.down };
        if y.abs() == 1.0 {
            pm
        } else {
            (self.theta * y - self.log_m).exp()
        }
    }

    #[inline]
    pub fn xi(&self, x: u64, t: u64) -> f64 {
        let y = self.source.value(x, t);
        let pm = if y > 0.0 { self.up_m1 } else { self.down_m1 };
        if y.abs() == 1.0 {
            pm
        } else {
            (self.theta * y - self.log_m).exp_m1()
        }
    }

    /// `1 + xi~(x, t)`: the boundary site carries the extra factor `gamma`.
    #[inline]
    pub fn one_plus_xi_tilde(&self, x: u64, t: u64) -> f64 {
        let w = self.one_plus_xi(x, t);
        if x == 0 {
            self.gamma * w
        } else {
            w
        }
    }

    #[inline]
    pub fn xi_tilde(&self, x: u64, t: u64) -> f64 {
        if x == 0 {
            self.gamma * self.one_plus_xi(x, t) - 1.0
        } else {
            self.xi(x, t)
        }
    }
}

/// `xi(x, t) = exp(beta N^{-1/4} y) / m(beta N^{-1/4}) - 1`.
pub fn xi<S: NoiseSource + ?Sized>(field: &S, params: &ModelParams, x: u64, t: u64) -> Result<f64> {
    Ok(Weights::new(field, params)?.xi(x, t))
}

/// `xi~(x, t)`, equal to `xi` away from the origin and to
/// `gamma (1 + xi) - 1` at `x = 0`.
pub fn xi_tilde<S: NoiseSource + ?Sized>(
    field: &S,
    params: &ModelParams,
    x: u64,
    t: u64,
) -> Result<f64> {
    Ok(Weights::new(field, params)?.xi_tilde(x, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn mgf_at_zero_is_one_for_every_family() {
        for spec in all_specs() {
            assert_eq!(spec.mgf(0.0).unwrap(), 1.0, "{spec}");
        }
    }

    #[test]
    fn rademacher_even_moments_are_one() {
        let (m, mu2) = mgf_and_moments(&NoiseSpec::Rademacher, 0.0, 2).unwrap();
        assert_eq!(m, 1.0);
        assert_eq!(mu2, 1.0);
        assert_eq!(NoiseSpec::Rademacher.moment(4).unwrap(), 1.0);
        assert_eq!(NoiseSpec::Rademacher.moment(3).unwrap(), 0.0);
    }

    #[test]
    fn standard_gaussian_values() {
        let g = NoiseSpec::Gaussian { sigma: 1.0 };
        assert_relative_eq!(g.mgf(1.0).unwrap(), 0.5f64.exp(), max_relative = 1e-15);
        assert_eq!(g.moment(4).unwrap(), 3.0);
        assert_eq!(g.moment(8).unwrap(), 105.0);
    }

    #[test]
    fn uniform_with_half_width_sqrt3_has_unit_variance() {
        let u = NoiseSpec::Uniform {
            half_width: 3f64.sqrt(),
        };
        assert_relative_eq!(u.moment(2).unwrap(), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn centered_binomial_moments() {
        let b = NoiseSpec::CenteredBinomial { n: 4 };
        // Sum of four +-1/2 steps: variance 1, fourth moment 3*1 - 2*4/16 = 2.5.
        assert_relative_eq!(b.moment(2).unwrap(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(b.moment(4).unwrap(), 2.5, max_relative = 1e-14);
    }

    #[test]
    fn unsupported_moment_order() {
        assert!(matches!(
            NoiseSpec::Rademacher.moment(9),
            Err(LabError::Unsupported(_))
        ));
        assert!(NoiseSpec::Rademacher.moment(0).is_err());
    }

    #[test]
    fn mgf_outside_domain_is_an_error() {
        assert!(matches!(
            NoiseSpec::Gaussian { sigma: 1.0 }.mgf(100.0),
            Err(LabError::MgfDomain { .. })
        ));
        assert!(NoiseSpec::Rademacher.mgf(f64::NAN).is_err());
    }

    #[test]
    fn mgf_matches_numerical_oracles() {
        // Quadrature for the continuous laws, direct enumeration for the
        // discrete ones; relative agreement 1e-10.
        let thetas = [-2.0, -0.7, -0.1, 0.05, 0.3, 1.0, 2.5];
        for &theta in &thetas {
            let rad = 0.5 * (theta as f64).exp() + 0.5 * (-theta as f64).exp();
            assert_relative_eq!(
                NoiseSpec::Rademacher.mgf(theta).unwrap(),
                rad,
                max_relative = 1e-10
            );

            let sigma = 0.8;
            let gauss = simpson(
                |y| (theta * y).exp() * (-y * y / (2.0 * sigma * sigma)).exp(),
                -14.0,
                14.0,
                40_000,
            ) / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            assert_relative_eq!(
                NoiseSpec::Gaussian { sigma }.mgf(theta).unwrap(),
                gauss,
                max_relative = 1e-10
            );

            let h = 1.3;
            let unif = simpson(|y| (theta * y).exp(), -h, h, 2_000) / (2.0 * h);
            assert_relative_eq!(
                NoiseSpec::Uniform { half_width: h }.mgf(theta).unwrap(),
                unif,
                max_relative = 1e-10
            );

            let n = 6u32;
            let binom: f64 = (0..=n)
                .map(|j| {
                    let c = (1..=j).fold(1.0, |acc, i| acc * (n - i + 1) as f64 / i as f64);
                    c / 64.0 * (theta * (j as f64 - 3.0)).exp()
                })
                .sum();
            assert_relative_eq!(
                NoiseSpec::CenteredBinomial { n }.mgf(theta).unwrap(),
                binom,
                max_relative = 1e-10
            );
        }
    }

    #[test]
    fn field_is_deterministic_and_order_independent() {
        for spec in all_specs() {
            let field = NoiseField::new(spec, 42);
            let forward: Vec<f64> = (0..50).map(|i| field.sample(i % 7, i / 7)).collect();
            let backward: Vec<f64> = (0..50).rev().map(|i| field.sample(i % 7, i / 7)).collect();
            let reversed: Vec<f64> = backward.into_iter().rev().collect();
            assert_eq!(forward, reversed);
            let again = NoiseField::new(spec, 42);
            assert_eq!(field.sample(3, 11).to_bits(), again.sample(3, 11).to_bits());
        }
    }

    #[test]
    fn rademacher_support() {
        let field = NoiseField::new(NoiseSpec::Rademacher, 7);
        for x in 0..40 {
            for t in 0..40 {
                let y = field.sample(x, t);
                assert!(y == 1.0 || y == -1.0);
            }
        }
    }

    #[test]
    fn empirical_mean_within_clt_band() {
        // 10^6 draws; the band is 4 sigma / 10^3.
        for spec in all_specs() {
            let field = NoiseField::new(spec, 2024);
            let n = 1_000_000u64;
            let mean = (0..n).map(|i| field.sample(i % 1000, i / 1000)).sum::<f64>() / n as f64;
            let sigma = spec.variance().sqrt();
            assert!(mean.abs() < 4.0 * sigma / 1e3, "{spec}: mean {mean}");
        }
    }

    #[test]
    fn empirical_variance_matches_spec() {
        for spec in all_specs() {
            let field = NoiseField::new(spec, 99);
            let n = 200_000u64;
            let m2 = (0..n).map(|i| field.sample(i, 3).powi(2)).sum::<f64>() / n as f64;
            let mu2 = spec.variance();
            let sd = ((spec.moment(4).unwrap() - mu2 * mu2) / n as f64).sqrt();
            assert!((m2 - mu2).abs() <= 5.0 * sd + 1e-12, "{spec}: {m2} vs {mu2}");
        }
    }

    #[test]
    fn xi_for_rademacher_is_tanh() {
        let params = ModelParams::new(1, 1.0, 0.0).unwrap();
        let up = PinnedNoise::new(NoiseSpec::Rademacher).with(2, 1, 1.0).with(3, 1, -1.0);
        assert_relative_eq!(
            xi(&up, &params, 2, 1).unwrap(),
            1f64.tanh(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            xi(&up, &params, 3, 1).unwrap(),
            -(1f64.tanh()),
            max_relative = 1e-14
        );
        // y = 0 gives 1/m - 1.
        let m = NoiseSpec::Rademacher.mgf(1.0).unwrap();
        assert_relative_eq!(xi(&up, &params, 9, 9).unwrap(), 1.0 / m - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn xi_tilde_boundary_rule() {
        let params = ModelParams::new(100, 1.0, 1.0).unwrap();
        assert_relative_eq!(params.gamma(), 0.9, max_relative = 1e-15);
        let field = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 5);
        for t in 1..10 {
            assert_eq!(
                xi_tilde(&field, &params, 3, t).unwrap(),
                xi(&field, &params, 3, t).unwrap()
            );
        }
        assert_relative_eq!(
            xi_tilde(&ZeroNoise, &params, 0, 4).unwrap(),
            -0.1,
            max_relative = 1e-12
        );
    }

    #[test]
    fn xi_has_mean_zero_and_boundary_mean_gamma_minus_one() {
        for &n in &[1u64, 16, 256] {
            let params = ModelParams::new(n, 1.0, 0.5).unwrap();
            let field = NoiseField::new(NoiseSpec::Gaussian { sigma: 1.0 }, 31 + n);
            let w = Weights::new(&field, &params).unwrap();
            let reps = 100_000u64;
            let samples: Vec<f64> = (0..reps).map(|i| w.xi(1 + i % 500, i / 500)).collect();
            let (mean, se) = mean_se(&samples);
            assert!(mean.abs() < 4.0 * se, "N={n}: {mean} +- {se}");

            let boundary: Vec<f64> = (0..reps).map(|t| w.xi_tilde(0, t)).collect();
            let (mean, se) = mean_se(&boundary);
            let target = params.gamma() - 1.0;
            assert!((mean - target).abs() < 4.0 * se, "N={n}: {mean} vs {target}");
        }
    }

    #[test]
    fn rademacher_xi_moments_scale_like_theta_powers() {
        // For rademacher noise xi = y tanh(theta) exactly, so the moments are
        // analytic: E[xi^k] = tanh(theta)^k for even k and 0 for odd k.
        let beta = 1.0;
        for &n in &[256u64, 1024, 65536] {
            let params = ModelParams::new(n, beta, 0.0).unwrap();
            let theta = params.theta();
            let nf = n as f64;
            for k in 2..=4u32 {
                let exact = if k % 2 == 0 {
                    theta.tanh().powi(k as i32)
                } else {
                    0.0
                };
                let leading = beta.powi(k as i32)
                    * nf.powf(-(k as f64) / 4.0)
                    * NoiseSpec::Rademacher.moment(k).unwrap();
                let slack = 0.5 * beta.powi(k as i32) * nf.powf(-(k as f64 + 1.0) / 4.0);
                assert!((exact - leading).abs() <= slack, "N={n} k={k}");
            }
        }
    }

    #[test]
    fn xi_tilde_even_moments_are_bounded_by_power_of_n() {
        // E[xi~^{2p}] <= C N^{-p/2}. With C = 2 (gamma^2 + 1)^p beta^{2p} for
        // rademacher (the boundary site dominates), checked analytically.
        let beta = 1.0;
        for p in 1..=2i32 {
            for &n in &[64u64, 256, 4096, 1 << 20] {
                for &a in &[-1.0, 0.0, 1.0] {
                    let params = ModelParams::new(n, beta, a).unwrap();
                    let th = params.theta().tanh();
                    let g = params.gamma();
                    let interior = th.powi(2 * p);
                    // xi~(0) = g(1 +- th) - 1 with prob 1/2 each.
                    let boundary = 0.5 * ((g * (1.0 + th) - 1.0).powi(2 * p)
                        + (g * (1.0 - th) - 1.0).powi(2 * p));
                    let c = 2.0 * (1.0 + a * a).powi(p) * beta.powi(2 * p);
                    let bound = c * (n as f64).powf(-(p as f64) / 2.0);
                    assert!(interior <= bound && boundary <= bound, "p={p} N={n} A={a}");
                }
            }
        }
    }

    #[test]
    fn params_reject_nonpositive_gamma_and_zero_beta() {
        assert!(ModelParams::new(4, 1.0, 2.0).is_err());
        assert!(ModelParams::new(4, 0.0, 0.0).is_err());
        assert!(ModelParams::new(0, 1.0, 0.0).is_err());
        let p = ModelParams::new(4096, 1.0, 1.0).unwrap();
        assert_eq!(p.gamma(), 1.0 - 1.0 / 64.0);
        assert_eq!(p.x_window(), 64);
        assert_eq!(p.t_window(), 4096);
    }

    #[test]
    fn params_and_spec_serde() {
        let p = ModelParams::new(4096, 0.5, -1.0).unwrap().with_window(0.5, 2.0).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains("\"N\":4096") && json.contains("\"A\":-1.0"));
        assert_eq!(serde_json::from_str::<ModelParams>(&json).unwrap(), p);
        assert!(serde_json::from_str::<ModelParams>(r#"{"N":4,"beta":1.0,"A":3.0}"#).is_err());

        for spec in all_specs() {
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<NoiseSpec>(&json).unwrap(), spec);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, &[0]);
        let b = derive_seed(1, &[1]);
        let c = derive_seed(2, &[0]);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derive_seed(1, &[0]));
    }

    fn all_specs() -> Vec<NoiseSpec> {
        vec![
            NoiseSpec::Rademacher,
            NoiseSpec::Gaussian { sigma: 1.0 },
            NoiseSpec::Uniform {
                half_width: 3f64.sqrt(),
            },
            NoiseSpec::CenteredBinomial { n: 4 },
        ]
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut s = f(a) + f(b);
        for i in 1..panels {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }
}
