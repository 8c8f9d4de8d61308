//! Reference objects for the half-space stochastic heat equation
//! `dZ = (1/2) Z_xx dt + sqrt(2 mu2) beta Z dW` with `Z_x(0, t) = A Z(0, t)`:
//! the Robin heat kernel and an explicit Euler sampler.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{LabError, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian density with variance `t`.
pub fn gaussian_kernel(x: f64, t: f64) -> f64 {
    (-x * x / (2.0 * t) - 0.5 * t.ln() - LN_SQRT_2PI).exp()
}

/// `log P(N(0,1) > u)`, accurate in the far tail.
fn ln_upper_tail(u: f64) -> f64 {
    if u < 25.0 {
        (0.5 * erfc(u / std::f64::consts::SQRT_2)).ln()
    } else {
        let u2 = u * u;
        -0.5 * u2 - u.ln() - LN_SQRT_2PI + (1.0 - 1.0 / u2 + 3.0 / (u2 * u2)).ln()
    }
}

/// `P_t(x, y) = g_t(x-y) + g_t(x+y) - 2A e^{A(x+y) + A^2 t/2} P(N > (x+y+At)/sqrt(t))`,
/// the transition density of Brownian motion on `[0, inf)` with
/// `d/dx P = A P` at `x = 0`.
pub fn robin_heat_kernel(a: f64, x: f64, y: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(LabError::Parameter(format!("t must be positive, got {t}")));
    }
    if !(x >= 0.0 && y >= 0.0) {
        return Err(LabError::Parameter(format!("({x}, {y}) is outside the half-line")));
    }
    let images = gaussian_kernel(x - y, t) + gaussian_kernel(x + y, t);
    if a == 0.0 {
        return Ok(images);
    }
    let s = x + y;
    let u = (s + a * t) / t.sqrt();
    let log_mag = (2.0 * a.abs()).ln() + a * s + 0.5 * a * a * t + ln_upper_tail(u);
    Ok(images - a.signum() * log_mag.exp())
}

/// Composite Simpson rule on `[lo, hi]` with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    let n = panels + panels % 2;
    let h = (hi - lo) / n as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + i as f64 * h);
    }
    acc * h / 3.0
}

/// `int_0^inf P_t(x, y) g(y) dy` by quadrature over `[0, x + 14 sqrt(t) + |A| t]`.
pub fn robin_semigroup(a: f64, g: impl Fn(f64) -> f64, x: f64, t: f64) -> Result<f64> {
    robin_heat_kernel(a, x, 0.0, t)?;
    let hi = x + 14.0 * t.sqrt() + a.abs() * t;
    Ok(simpson(
        |y| robin_heat_kernel(a, x, y, t).unwrap_or(0.0) * g(y),
        0.0,
        hi,
        4000,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerGrid {
    /// Robin constant `A`.
    #[serde(rename = "A")]
    pub a: f64,
    pub beta: f64,
    pub mu2: f64,
    pub dx: f64,
    pub dt: f64,
    /// Right end of the truncated domain; a reflecting wall sits there.
    pub length: f64,
    pub horizon: f64,
}

impl EulerGrid {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.a, self.beta, self.mu2, self.dx, self.dt, self.length, self.horizon]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.dx > 0.0 && self.dt > 0.0 && self.length > self.dx && self.horizon >= 0.0) {
            return Err(LabError::Parameter(format!("invalid Euler grid {self:?}")));
        }
        if self.mu2 < 0.0 {
            return Err(LabError::Parameter(format!("mu2 must be >= 0, got {}", self.mu2)));
        }
        if self.dt > 0.5 * self.dx * self.dx {
            return Err(LabError::Refused(format!(
                "dt = {} exceeds the stability limit dx^2/2 = {}",
                self.dt,
                0.5 * self.dx * self.dx
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        (self.length / self.dx).round() as usize + 1
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheSample {
    pub grid: EulerGrid,
    pub seed: u64,
    /// `(t, Z(., t))` at the requested snapshot steps, always including the
    /// final time.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Cell updates that produced a negative value.
    pub negative_cells: usize,
}

impl SheSample {
    pub fn final_row(&self) -> &[f64] {
        &self.snapshots.last().expect("at least one snapshot").1
    }

    /// Linear interpolation of the final row at `x`.
    pub fn value_at(&self, x: f64) -> Result<f64> {
        let row = self.final_row();
        let pos = x / self.grid.dx;
        if !(pos >= 0.0) || pos > (row.len() - 1) as f64 {
            return Err(LabError::Range(format!("x = {x} outside [0, {}]", self.grid.length)));
        }
        let i = (pos.floor() as usize).min(row.len() - 2);
        let f = pos - i as f64;
        Ok((1.0 - f) * row[i] + f * row[i + 1])
    }
}

/// One explicit Euler trajectory from `initial`.
///
/// The Laplacian uses the ghost value `Z(-dx) = Z(dx) - 2 dx A Z(0)` and a
/// mirror at the right end; each cell receives the increment
/// `sqrt(2 mu2) beta Z N(0, dt/dx)`.
pub fn she_euler_sample(
    grid: &EulerGrid,
    initial: impl Fn(f64) -> f64,
    snapshot_every: Option<usize>,
    seed: u64,
) -> Result<SheSample> {
    grid.validate()?;
    let m = grid.cells();
    let mut z: Vec<f64> = (0..m).map(|i| initial(i as f64 * grid.dx)).collect();
    if z.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(LabError::Parameter("initial data must be positive and finite".into()));
    }
    let mut next = vec![0.0; m];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lap = 0.5 * grid.dt / (grid.dx * grid.dx);
    let noise = (2.0 * grid.mu2).sqrt() * grid.beta * (grid.dt / grid.dx).sqrt();
    let steps = grid.steps();
    let mut snapshots = vec![(0.0, z.clone())];
    let mut negative_cells = 0;
    for n in 1..=steps {
        for i in 0..m {
            let left = if i == 0 { z[1] - 2.0 * grid.dx * grid.a * z[0] } else { z[i - 1] };
            let right = if i == m - 1 { z[m - 2] } else { z[i + 1] };
            let mut v = z[i] + lap * (left - 2.0 * z[i] + right);
            if noise != 0.0 {
                let g: f64 = StandardNormal.sample(&mut rng);
                v += noise * z[i] * g;
            }
            if v < 0.0 {
                negative_cells += 1;
            }
            next[i] = v;
        }
        std::mem::swap(&mut z, &mut next);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite(format!("SHE field at step {n}")));
        }
        if matches!(snapshot_every, Some(k) if k > 0 && n % k == 0) && n != steps {
            snapshots.push((n as f64 * grid.dt, z.clone()));
        }
    }
    if steps > 0 {
        snapshots.push((steps as f64 * grid.dt, z));
    }
    Ok(SheSample {
        grid: *grid,
        seed,
        snapshots,
        negative_cells,
    })
}
