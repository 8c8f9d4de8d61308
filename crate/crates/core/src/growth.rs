//! Half-space interface growth `f_N(x, t) = psi(f_N(x-1, t-1), f_N(x+1, t-1))
//! + N^{-1/4} y(x, t)`, with the reflected boundary update at `x = 0`, and
//! its tilted and parabolically rescaled versions.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::noise::{ln_cosh, ModelParams, NoiseSource};

type PsiFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// A symmetric, shift-equivariant update rule `psi(u, v)`.
#[derive(Clone)]
pub enum GrowthFunction {
    /// `psi(u, v) = beta^{-1} log((e^{beta u} + e^{beta v}) / 2)`.
    Polymer { beta: f64 },
    /// `psi(u, v) = (kappa / 2) (u - v)^2 + (u + v) / 2`.
    Quadratic { kappa: f64 },
    Custom { name: String, psi: Arc<PsiFn> },
}

impl fmt::Debug for GrowthFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthFunction::Polymer { beta } => write!(f, "Polymer {{ beta: {beta} }}"),
            GrowthFunction::Quadratic { kappa } => write!(f, "Quadratic {{ kappa: {kappa} }}"),
            GrowthFunction::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

impl GrowthFunction {
    pub fn polymer(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta == 0.0 {
            return Err(LabError::Parameter(format!("polymer beta must be finite and nonzero, got {beta}")));
        }
        Ok(GrowthFunction::Polymer { beta })
    }

    pub fn quadratic(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(LabError::Parameter(format!("kappa must be finite, got {kappa}")));
        }
        Ok(GrowthFunction::Quadratic { kappa })
    }

    pub fn custom(name: impl Into<String>, psi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        GrowthFunction::Custom {
            name: name.into(),
            psi: Arc::new(psi),
        }
    }

    /// `"polymer"` or `"quadratic"` with its single parameter.
    pub fn from_name(name: &str, parameter: f64) -> Result<Self> {
        match name {
            "polymer" => Self::polymer(parameter),
            "quadratic" => Self::quadratic(parameter),
            other => Err(LabError::Unsupported(format!("unknown growth function '{other}'"))),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            GrowthFunction::Polymer { .. } => "polymer",
            GrowthFunction::Quadratic { .. } => "quadratic",
            GrowthFunction::Custom { name, .. } => name,
        }
    }

    #[inline]
    pub fn psi(&self, u: f64, v: f64) -> f64 {
        match self {
            GrowthFunction::Polymer { beta } => {
                0.5 * (u + v) + ln_cosh(0.5 * beta * (u - v)) / beta
            }
            GrowthFunction::Quadratic { kappa } => {
                let d = u - v;
                0.5 * kappa * d * d + 0.5 * (u + v)
            }
            GrowthFunction::Custom { psi, .. } => psi(u, v),
        }
    }

    /// `phi(u) = psi(u/2, -u/2)`.
    pub fn phi(&self, u: f64) -> f64 {
        self.psi(0.5 * u, -0.5 * u)
    }

    /// `d^2/du^2 psi(0, 0) = phi''(0)` when known in closed form.
    pub fn curvature(&self) -> Option<f64> {
        match self {
            GrowthFunction::Polymer { beta } => Some(beta / 4.0),
            GrowthFunction::Quadratic { kappa } => Some(*kappa),
            GrowthFunction::Custom { .. } => None,
        }
    }

    /// `d^4/du^4 psi(0, 0) = phi''''(0)` when known in closed form.
    pub fn fourth_derivative(&self) -> Option<f64> {
        match self {
            GrowthFunction::Polymer { beta } => Some(-beta.powi(3) / 8.0),
            GrowthFunction::Quadratic { .. } => Some(0.0),
            GrowthFunction::Custom { .. } => None,
        }
    }

    /// Closed-form derivatives, or Richardson-extrapolated finite
    /// differences for custom rules.
    pub fn derivatives(&self) -> Result<(f64, f64)> {
        match (self.curvature(), self.fourth_derivative()) {
            (Some(c2), Some(c4)) => Ok((c2, c4)),
            _ => {
                let phi = |u: f64| self.phi(u);
                let c2 = second_derivative(&phi, DEFAULT_STEP);
                let c4 = fourth_derivative(&phi, FOURTH_STEP);
                if c2.is_finite() && c4.is_finite() {
                    Ok((c2, c4))
                } else {
                    Err(LabError::NonFinite(format!("derivatives of {}", self.name())))
                }
            }
        }
    }
}

/// How a comparison model is matched to the polymer at inverse temperature
/// `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// The model's `psi''(0, 0)` equals `beta`.
    Literal,
    /// The model's `psi''(0, 0)` equals the polymer rule's own curvature
    /// `beta / 4`.
    EffectiveCurvature,
}

impl Pairing {
    pub fn curvature_for(self, beta: f64) -> f64 {
        match self {
            Pairing::Literal => beta,
            Pairing::EffectiveCurvature => beta / 4.0,
        }
    }

    /// The quadratic rule paired with the polymer at `beta`.
    pub fn quadratic_for(self, beta: f64) -> Result<GrowthFunction> {
        GrowthFunction::quadratic(self.curvature_for(beta))
    }
}

/// `phi(u) = psi(u/2, -u/2)` as a closure.
pub fn phi_from_psi<F>(psi: F) -> impl Fn(f64) -> f64
where
    F: Fn(f64, f64) -> f64,
{
    move |u| psi(0.5 * u, -0.5 * u)
}

pub const DEFAULT_STEP: f64 = 1e-3;
/// Fourth differences need a coarser step: roundoff scales like `eps / h^4`.
pub const FOURTH_STEP: f64 = 0.02;

fn second_derivative(f: &impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
    (4.0 * d(0.5 * h) - d(h)) / 3.0
}

fn fourth_derivative(f: &impl Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| {
        (f(2.0 * h) - 4.0 * f(h) + 6.0 * f(0.0) - 4.0 * f(-h) + f(-2.0 * h)) / h.powi(4)
    };
    (16.0 * d(0.5 * h) - d(h)) / 15.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthCheck {
    pub equivariance_residual: f64,
    pub symmetry_residual: f64,
    /// `psi(0, 0)`.
    pub normalization: f64,
    pub effective_beta: f64,
    pub effective_fourth: f64,
}

/// Checks shift equivariance and symmetry of `psi` on `trials` random
/// points of `[-2, 2]^3` and estimates `phi''(0)`, `phi''''(0)` by finite
/// differences (step `h` for the second derivative).
pub fn check_growth_function<F>(psi: F, h: f64, trials: usize, seed: u64) -> Result<GrowthCheck>
where
    F: Fn(f64, f64) -> f64,
{
    if !(h > 0.0) {
        return Err(LabError::Parameter(format!("step must be positive, got {h}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut eq, mut sym) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let u: f64 = rng.random_range(-2.0..2.0);
        let v: f64 = rng.random_range(-2.0..2.0);
        let c: f64 = rng.random_range(-2.0..2.0);
        let base = psi(u, v);
        let shifted = psi(u + c, v + c);
        let swapped = psi(v, u);
        if !(base.is_finite() && shifted.is_finite() && swapped.is_finite()) {
            return Err(LabError::NonFinite(format!("psi({u}, {v}) or a shifted/swapped copy")));
        }
        eq = eq.max((shifted - base - c).abs());
        sym = sym.max((swapped - base).abs());
    }
    let phi = phi_from_psi(&psi);
    let effective_beta = second_derivative(&phi, h);
    let effective_fourth = fourth_derivative(&phi, FOURTH_STEP.max(h));
    if !effective_beta.is_finite() || !effective_fourth.is_finite() {
        return Err(LabError::NonFinite("finite-difference derivative".into()));
    }
    Ok(GrowthCheck {
        equivariance_residual: eq,
        symmetry_residual: sym,
        normalization: psi(0.0, 0.0),
        effective_beta,
        effective_fourth,
    })
}

/// Initial data `Lambda(x) > 0`; the height profile is `lambda = beta^{-1}
/// log Lambda`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    Flat,
    /// `exp(sin(sqrt(x / sqrt(N))))` clipped to `[1/clip, clip]`.
    HolderSine { clip: f64 },
    /// Explicit values; the last one is repeated to the right.
    Tabulated { values: Vec<f64> },
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Flat
    }
}

impl InitialProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialProfile::Flat => Ok(()),
            InitialProfile::HolderSine { clip } if *clip >= 1.0 && clip.is_finite() => Ok(()),
            InitialProfile::HolderSine { clip } => {
                Err(LabError::Parameter(format!("clip constant must be >= 1, got {clip}")))
            }
            InitialProfile::Tabulated { values } => {
                if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    Err(LabError::Parameter("tabulated profile needs positive finite values".into()))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// `Lambda(x)` at lattice site `x` for scaling parameter `n`.
    pub fn value(&self, x: u64, n: u64) -> f64 {
        match self {
            InitialProfile::Flat => 1.0,
            InitialProfile::HolderSine { clip } => {
                let r = (x as f64 / (n as f64).sqrt()).sqrt();
                r.sin().exp().clamp(1.0 / clip, *clip)
            }
            InitialProfile::Tabulated { values } => {
                values[(x as usize).min(values.len() - 1)]
            }
        }
    }
}

/// Heights `f_N` on `[0, x_eval] x [0, horizon]`.
#[derive(Debug, Clone)]
pub struct InterfaceField {
    params: ModelParams,
    growth: String,
    psi00: f64,
    log_m: f64,
    x_eval: u64,
    horizon: u64,
    noise_tag: u64,
    raw: Vec<f64>,
}

impl InterfaceField {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn growth_name(&self) -> &str {
        &self.growth
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

    /// `log m(beta N^{-1/4})` of the noise that drove the field.
    pub fn log_m(&self) -> f64 {
        self.log_m
    }

    fn index(&self, x: u64, t: u64) -> Result<usize> {
        if x > self.x_eval || t > self.horizon {
            return Err(LabError::Range(format!(
                "({x}, {t}) outside [0, {}] x [0, {}]",
                self.x_eval, self.horizon
            )));
        }
        Ok((t * (self.x_eval + 1) + x) as usize)
    }

    /// `f_N(x, t)`.
    pub fn raw(&self, x: u64, t: u64) -> Result<f64> {
        Ok(self.raw[self.index(x, t)?])
    }

    /// `f(x, t) = f_N(x, t) - t beta^{-1} log m(beta N^{-1/4})`.
    pub fn tilted(&self, x: u64, t: u64) -> Result<f64> {
        Ok(self.raw(x, t)? - t as f64 * self.log_m / self.params.beta())
    }

    pub fn raw_row(&self, t: u64) -> Result<&[f64]> {
        let start = self.index(0, t)?;
        Ok(&self.raw[start..start + self.x_eval as usize + 1])
    }
}

/// Evolves the interface from `lambda = beta^{-1} log Lambda` for `horizon`
/// steps and keeps `x in [0, x_eval]`.
///
/// Row `t` is computed on `[0, width - t]`, so every kept value is exact
/// whenever `width >= x_eval + horizon`; `width = None` picks that minimum.
pub fn evolve_interface<S: NoiseSource + ?Sized>(
    growth: &GrowthFunction,
    noise: &S,
    params: &ModelParams,
    profile: &InitialProfile,
    horizon: u64,
    x_eval: u64,
    width: Option<u64>,
) -> Result<InterfaceField> {
    profile.validate()?;
    let beta = params.beta();
    let n = params.n();
    let initial = |x: u64| profile.value(x, n).ln() / beta;
    evolve_interface_from(growth, noise, params, initial, horizon, x_eval, width)
}

/// [`evolve_interface`] from explicit initial heights `lambda(x)`.
pub fn evolve_interface_from<S: NoiseSource + ?Sized>(
    growth: &GrowthFunction,
    noise: &S,
    params: &ModelParams,
    initial: impl Fn(u64) -> f64,
    horizon: u64,
    x_eval: u64,
    width: Option<u64>,
) -> Result<InterfaceField> {
    let gamma = params.gamma();
    if !(gamma > 0.0) {
        return Err(LabError::Parameter(format!("gamma = {gamma} must be positive")));
    }
    let min_width = x_eval + horizon;
    let width = width.unwrap_or(min_width);
    if width < min_width {
        return Err(LabError::Contract(format!(
            "slab width {width} is below the light-cone width {min_width}"
        )));
    }
    let beta = params.beta();
    let scale = params.noise_scale();
    let log_m = noise.log_mgf(params.theta())?;
    let boundary_shift = gamma.ln() / beta;
    let keep = x_eval as usize + 1;

    let mut cur: Vec<f64> = (0..=width).map(initial).collect();
    let mut next = vec![0.0; cur.len()];
    let mut raw = Vec::with_capacity(keep * (horizon as usize + 1));
    raw.extend_from_slice(&cur[..keep]);

    for t in 1..=horizon {
        let w = (width - t) as usize;
        next[0] = growth.psi(cur[1], cur[1]) + scale * noise.value(0, t) + boundary_shift;
        for x in 1..=w {
            next[x] = growth.psi(cur[x - 1], cur[x + 1]) + scale * noise.value(x as u64, t);
        }
        if let Some(x) = next[..=w].iter().position(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!(
                "height at ({x}, {t}) for {} growth; reduce beta or the noise scale",
                growth.name()
            )));
        }
        std::mem::swap(&mut cur, &mut next);
        raw.extend_from_slice(&cur[..keep]);
    }

    Ok(InterfaceField {
        params: *params,
        growth: growth.name().to_string(),
        psi00: growth.psi(0.0, 0.0),
        log_m,
        x_eval,
        horizon,
        noise_tag: noise.tag(),
        raw,
    })
}

/// `f~(x, t) = f_N(sqrt(N) x, N t) - (V + beta^{-1} N log m + N psi(0, 0)) t`
/// in rescaled coordinates, bilinear between lattice points.
#[derive(Debug, Clone)]
pub struct RescaledField<'a> {
    field: &'a InterfaceField,
    drift: f64,
}

pub fn rescale_field(field: &InterfaceField, v: f64) -> RescaledField<'_> {
    let n = field.params.n() as f64;
    let drift = v + n * field.log_m / field.params.beta() + n * field.psi00;
    RescaledField { field, drift }
}

impl RescaledField<'_> {
    /// Per-unit-time shift subtracted from `f_N`.
    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn value(&self, x: f64, t: f64) -> Result<f64> {
        let p = &self.field.params;
        let (lx, lt) = (x * p.sqrt_n(), t * p.n() as f64);
        if !(lx >= 0.0 && lt >= 0.0) {
            return Err(LabError::Range(format!("negative coordinate ({x}, {t})")));
        }
        // Snap to the lattice when within rounding of a grid point.
        let snap = |v: f64| if (v - v.round()).abs() < 1e-9 { v.round() } else { v };
        let (lx, lt) = (snap(lx), snap(lt));
        let (x0, t0) = (lx.floor() as u64, lt.floor() as u64);
        let (fx, ft) = (lx - x0 as f64, lt - t0 as f64);
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let t1 = if ft > 0.0 { t0 + 1 } else { t0 };
        let f = |x: u64, t: u64| self.field.raw(x, t);
        let lattice = (1.0 - ft) * ((1.0 - fx) * f(x0, t0)? + fx * f(x1, t0)?)
            + ft * ((1.0 - fx) * f(x0, t1)? + fx * f(x1, t1)?);
        Ok(lattice - self.drift * t)
    }

    /// `exp(beta f~(x, t))`.
    pub fn exp_beta(&self, x: f64, t: f64) -> Result<f64> {
        Ok((self.field.params.beta() * self.value(x, t)?).exp())
    }
}
