//! Parametric bivariate copulas and the multivariate normal copula.
//!
//! Conventions: `h(u, v) = ∂C(u, v)/∂v` is the distribution of the first
//! argument conditional on the second. All families here are exchangeable,
//! so conditioning on the first argument is `h(v, u)`.

mod mvn;

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{EdaError, Result};
use crate::numeric::{
    bisect, bivariate_normal_cdf, golden_max, integrate, normal_cdf, normal_quantile,
    one_minus_debye1, student_cdf, student_quantile,
};

pub use mvn::{mvnormal_copula_sample, CorrelationMatrix};

/// Arguments are clamped to `[EPS, 1 - EPS]` before density and h evaluation.
pub const EPS: f64 = 1e-10;

const HINV_MAX_ITER: usize = 200;

pub const STUDENT_DOF_MIN: f64 = 1.0;
pub const STUDENT_DOF_MAX: f64 = 100.0;

#[inline]
pub fn clamp_unit(x: f64) -> f64 {
    x.clamp(EPS, 1.0 - EPS)
}

/// Probabilities fed to `hinv` only need to stay off 0 and 1 exactly.
#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CopulaFamily {
    Product,
    Normal,
    Student,
    Clayton,
    Frank,
    Gumbel,
}

impl CopulaFamily {
    pub const ALL: [CopulaFamily; 6] = [
        CopulaFamily::Product,
        CopulaFamily::Normal,
        CopulaFamily::Student,
        CopulaFamily::Clayton,
        CopulaFamily::Frank,
        CopulaFamily::Gumbel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CopulaFamily::Product => "product",
            CopulaFamily::Normal => "normal",
            CopulaFamily::Student => "t",
            CopulaFamily::Clayton => "clayton",
            CopulaFamily::Frank => "frank",
            CopulaFamily::Gumbel => "gumbel",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "product" | "indep" | "independence" => Some(CopulaFamily::Product),
            "normal" | "gaussian" => Some(CopulaFamily::Normal),
            "t" | "student" => Some(CopulaFamily::Student),
            "clayton" => Some(CopulaFamily::Clayton),
            "frank" => Some(CopulaFamily::Frank),
            "gumbel" => Some(CopulaFamily::Gumbel),
            _ => None,
        }
    }
}

impl fmt::Display for CopulaFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A bivariate copula with its dependence parameters.
///
/// Use the checked constructors; the variants are public for pattern matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BivariateCopula {
    Product,
    Normal { rho: f64 },
    Student { rho: f64, nu: f64 },
    Clayton { theta: f64 },
    Frank { theta: f64 },
    Gumbel { theta: f64 },
}

impl fmt::Display for BivariateCopula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BivariateCopula::Product => write!(f, "product"),
            BivariateCopula::Normal { rho } => write!(f, "normal(rho={rho:.6})"),
            BivariateCopula::Student { rho, nu } => write!(f, "t(rho={rho:.6}, nu={nu:.4})"),
            BivariateCopula::Clayton { theta } => write!(f, "clayton(theta={theta:.6})"),
            BivariateCopula::Frank { theta } => write!(f, "frank(theta={theta:.6})"),
            BivariateCopula::Gumbel { theta } => write!(f, "gumbel(theta={theta:.6})"),
        }
    }
}

impl BivariateCopula {
    pub fn normal(rho: f64) -> Result<Self> {
        BivariateCopula::Normal { rho }.validated()
    }

    pub fn student(rho: f64, nu: f64) -> Result<Self> {
        BivariateCopula::Student { rho, nu }.validated()
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        BivariateCopula::Clayton { theta }.validated()
    }

    /// `theta == 0` collapses to the product copula.
    pub fn frank(theta: f64) -> Result<Self> {
        if theta == 0.0 {
            return Ok(BivariateCopula::Product);
        }
        BivariateCopula::Frank { theta }.validated()
    }

    pub fn gumbel(theta: f64) -> Result<Self> {
        BivariateCopula::Gumbel { theta }.validated()
    }

    pub fn family(&self) -> CopulaFamily {
        match self {
            BivariateCopula::Product => CopulaFamily::Product,
            BivariateCopula::Normal { .. } => CopulaFamily::Normal,
            BivariateCopula::Student { .. } => CopulaFamily::Student,
            BivariateCopula::Clayton { .. } => CopulaFamily::Clayton,
            BivariateCopula::Frank { .. } => CopulaFamily::Frank,
            BivariateCopula::Gumbel { .. } => CopulaFamily::Gumbel,
        }
    }

    /// Number of free parameters, as counted by information criteria.
    pub fn num_params(&self) -> usize {
        match self {
            BivariateCopula::Product => 0,
            BivariateCopula::Student { .. } => 2,
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: String| {
            Err(EdaError::ParameterDomain {
                family: self.family(),
                detail,
            })
        };
        match *self {
            BivariateCopula::Product => Ok(()),
            BivariateCopula::Normal { rho } => {
                if rho.is_finite() && rho.abs() < 1.0 {
                    Ok(())
                } else {
                    bad(format!("rho = {rho} must lie in (-1, 1)"))
                }
            }
            BivariateCopula::Student { rho, nu } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    bad(format!("rho = {rho} must lie in (-1, 1)"))
                } else if !(nu.is_finite() && nu >= STUDENT_DOF_MIN) {
                    bad(format!("nu = {nu} must be >= 1"))
                } else {
                    Ok(())
                }
            }
            BivariateCopula::Clayton { theta } => {
                if theta.is_finite() && theta > 0.0 {
                    Ok(())
                } else {
                    bad(format!("theta = {theta} must be > 0"))
                }
            }
            BivariateCopula::Frank { theta } => {
                if theta.is_finite() && theta != 0.0 {
                    Ok(())
                } else {
                    bad(format!("theta = {theta} must be finite and nonzero"))
                }
            }
            BivariateCopula::Gumbel { theta } => {
                if theta.is_finite() && theta >= 1.0 {
                    Ok(())
                } else {
                    bad(format!("theta = {theta} must be >= 1"))
                }
            }
        }
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    /// Log-density at an interior point.
    pub fn ln_pdf(&self, u: f64, v: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.ln_pdf_unchecked(clamp_unit(u), clamp_unit(v)))
    }

    pub fn pdf(&self, u: f64, v: f64) -> Result<f64> {
        self.ln_pdf(u, v).map(f64::exp)
    }

    fn ln_pdf_unchecked(&self, u: f64, v: f64) -> f64 {
        match *self {
            BivariateCopula::Product => 0.0,
            BivariateCopula::Normal { rho } => {
                let x = normal_quantile(u);
                let y = normal_quantile(v);
                let one_m = 1.0 - rho * rho;
                -0.5 * one_m.ln() - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * one_m)
            }
            BivariateCopula::Student { rho, nu } => {
                let x = student_quantile(u, nu);
                let y = student_quantile(v, nu);
                let one_m = 1.0 - rho * rho;
                let q = (x * x + y * y - 2.0 * rho * x * y) / (nu * one_m);
                ln_gamma(0.5 * (nu + 2.0)) + ln_gamma(0.5 * nu)
                    - 2.0 * ln_gamma(0.5 * (nu + 1.0))
                    - 0.5 * one_m.ln()
                    - 0.5 * (nu + 2.0) * q.ln_1p()
                    + 0.5 * (nu + 1.0) * ((x * x / nu).ln_1p() + (y * y / nu).ln_1p())
            }
            BivariateCopula::Clayton { theta } => {
                let a = -theta * u.ln();
                let b = -theta * v.ln();
                (1.0 + theta).ln() + (theta + 1.0) / theta * (a + b)
                    - (2.0 + 1.0 / theta) * clayton_ln_s(a, b)
            }
            BivariateCopula::Frank { theta } => {
                let d = (-theta).exp_m1();
                let a = (-theta * u).exp_m1();
                let b = (-theta * v).exp_m1();
                (theta * -d).ln() - theta * (u + v) - 2.0 * (d + a * b).abs().ln()
            }
            BivariateCopula::Gumbel { theta } => {
                let x = -u.ln();
                let y = -v.ln();
                let ln_a = gumbel_ln_a(x, y, theta);
                let a = ln_a.exp();
                -a + x + y + (theta - 1.0) * (x.ln() + y.ln()) + (1.0 - 2.0 * theta) * ln_a
                    + (a + theta - 1.0).ln()
            }
        }
    }

    /// Copula distribution function. Boundary values are exact.
    pub fn cdf(&self, u: f64, v: f64) -> Result<f64> {
        self.validate()?;
        if u <= 0.0 || v <= 0.0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(v.min(1.0));
        }
        if v >= 1.0 {
            return Ok(u);
        }
        let value = match *self {
            BivariateCopula::Product => u * v,
            BivariateCopula::Normal { rho } => {
                bivariate_normal_cdf(normal_quantile(u), normal_quantile(v), rho)
            }
            BivariateCopula::Student { rho, nu } => student_copula_cdf(u, v, rho, nu),
            BivariateCopula::Clayton { theta } => {
                let a = -theta * u.ln();
                let b = -theta * v.ln();
                (-clayton_ln_s(a, b) / theta).exp()
            }
            BivariateCopula::Frank { theta } => {
                let d = (-theta).exp_m1();
                let a = (-theta * u).exp_m1();
                let b = (-theta * v).exp_m1();
                -(a * b / d).ln_1p() / theta
            }
            BivariateCopula::Gumbel { theta } => {
                (-gumbel_ln_a(-u.ln(), -v.ln(), theta).exp()).exp()
            }
        };
        // Fréchet–Hoeffding bounds.
        Ok(value.clamp((u + v - 1.0).max(0.0), u.min(v)))
    }

    /// Conditional distribution of the first argument given the second.
    pub fn h(&self, u: f64, v: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.h_unchecked(clamp_unit(u), clamp_unit(v)))
    }

    fn h_unchecked(&self, u: f64, v: f64) -> f64 {
        let value = match *self {
            BivariateCopula::Product => u,
            BivariateCopula::Normal { rho } => {
                let x = normal_quantile(u);
                let y = normal_quantile(v);
                normal_cdf((x - rho * y) / (1.0 - rho * rho).sqrt())
            }
            BivariateCopula::Student { rho, nu } => {
                let x = student_quantile(u, nu);
                let y = student_quantile(v, nu);
                let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                student_cdf((x - rho * y) / scale, nu + 1.0)
            }
            BivariateCopula::Clayton { theta } => {
                let a = -theta * u.ln();
                let b = -theta * v.ln();
                ((theta + 1.0) / theta * b - (1.0 + 1.0 / theta) * clayton_ln_s(a, b)).exp()
            }
            BivariateCopula::Frank { theta } => {
                let d = (-theta).exp_m1();
                let a = (-theta * u).exp_m1();
                let b = (-theta * v).exp_m1();
                (-theta * v).exp() * a / (d + a * b)
            }
            BivariateCopula::Gumbel { theta } => {
                let x = -u.ln();
                let y = -v.ln();
                let ln_a = gumbel_ln_a(x, y, theta);
                (-ln_a.exp() + y + (theta - 1.0) * (y.ln() - ln_a)).exp()
            }
        };
        value.clamp(0.0, 1.0)
    }

    /// Inverse of `h` in its first argument: returns `u` with `h(u, v) = p`.
    pub fn hinv(&self, p: f64, v: f64) -> Result<f64> {
        self.validate()?;
        Ok(self.hinv_unchecked(clamp_prob(p), clamp_unit(v)))
    }

    fn hinv_unchecked(&self, p: f64, v: f64) -> f64 {
        let value = match *self {
            BivariateCopula::Product => p,
            BivariateCopula::Normal { rho } => {
                let z = normal_quantile(p);
                let y = normal_quantile(v);
                normal_cdf(z * (1.0 - rho * rho).sqrt() + rho * y)
            }
            BivariateCopula::Student { rho, nu } => {
                let z = student_quantile(p, nu + 1.0);
                let y = student_quantile(v, nu);
                let scale = ((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0)).sqrt();
                student_cdf(z * scale + rho * y, nu)
            }
            BivariateCopula::Clayton { theta } => {
                // h = (1 + (v/u)^θ - v^θ)^{-(1+θ)/θ}
                let k = (-theta / (1.0 + theta) * p.ln()).exp_m1() + v.powf(theta);
                self.newton_polish(v * (-k.ln() / theta).exp(), p, v)
            }
            BivariateCopula::Frank { theta } => {
                let d = (-theta).exp_m1();
                let b = (-theta * v).exp_m1();
                let a = p * d / (1.0 + b * (1.0 - p));
                -a.ln_1p() / theta
            }
            BivariateCopula::Gumbel { .. } => {
                return self.hinv_bisect(p, v);
            }
        };
        if value.is_finite() {
            value.clamp(EPS, 1.0 - EPS)
        } else {
            self.hinv_bisect(p, v)
        }
    }

    /// Two Newton steps on `h(., v) = p`, each kept only if it reduces the
    /// residual. Recovers digits lost by cancellation in closed forms.
    fn newton_polish(&self, mut u: f64, p: f64, v: f64) -> f64 {
        if !(u > EPS && u < 1.0 - EPS) {
            return u;
        }
        let mut r = self.h_unchecked(u, v) - p;
        for _ in 0..2 {
            let d = self.ln_pdf_unchecked(u, v).exp();
            if !(d > 0.0 && d.is_finite()) || r == 0.0 {
                break;
            }
            let next = (u - r / d).clamp(EPS, 1.0 - EPS);
            let rn = self.h_unchecked(next, v) - p;
            if rn.abs() >= r.abs() {
                break;
            }
            u = next;
            r = rn;
        }
        u
    }

    fn hinv_bisect(&self, p: f64, v: f64) -> f64 {
        let (mut lo, mut hi) = (EPS, 1.0 - EPS);
        if self.h_unchecked(lo, v) >= p {
            return lo;
        }
        if self.h_unchecked(hi, v) <= p {
            return hi;
        }
        for _ in 0..HINV_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            let hm = self.h_unchecked(mid, v);
            if hm == p || mid <= lo || mid >= hi {
                return mid;
            }
            if hm < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Kendall's tau implied by the parameters.
    pub fn tau(&self) -> f64 {
        match *self {
            BivariateCopula::Product => 0.0,
            BivariateCopula::Normal { rho } | BivariateCopula::Student { rho, .. } => {
                2.0 * rho.asin() / std::f64::consts::PI
            }
            BivariateCopula::Clayton { theta } => theta / (theta + 2.0),
            BivariateCopula::Frank { theta } => frank_tau(theta),
            BivariateCopula::Gumbel { theta } => 1.0 - 1.0 / theta,
        }
    }

    /// Draws `m` pairs `(u, v)` by the conditional method: `v ~ U(0,1)`,
    /// `u = hinv(w, v)` with `w ~ U(0,1)`.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..m)
            .map(|_| {
                let v: f64 = rng.random();
                let w: f64 = rng.random();
                [self.hinv_unchecked(clamp_prob(w), clamp_unit(v)), v]
            })
            .collect()
    }

    /// Sum of log-densities over the rows.
    pub fn loglik(&self, data: &[[f64; 2]]) -> Result<f64> {
        self.validate()?;
        if let BivariateCopula::Product = self {
            return Ok(0.0);
        }
        Ok(data
            .iter()
            .map(|&[u, v]| self.ln_pdf_unchecked(clamp_unit(u), clamp_unit(v)))
            .sum())
    }
}

fn clayton_ln_s(a: f64, b: f64) -> f64 {
    // ln(e^a + e^b - 1) with a, b >= 0
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + ((lo - hi).exp() - (-hi).exp()).ln_1p()
}

fn gumbel_ln_a(x: f64, y: f64, theta: f64) -> f64 {
    // ln (x^θ + y^θ)^{1/θ}
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    hi.ln() + ((lo / hi).powf(theta)).ln_1p() / theta
}

fn frank_tau(theta: f64) -> f64 {
    let a = theta.abs();
    let tau = 1.0 - 4.0 * one_minus_debye1(a) / a;
    tau.copysign(theta)
}

/// Student copula CDF as a one-dimensional integral of the conditional
/// distribution against the t density, after mapping `y = √ν tan φ` so the
/// integrand is bounded on a finite interval. Absolute error below 1e-8.
fn student_copula_cdf(u: f64, v: f64, rho: f64, nu: f64) -> f64 {
    let x = student_quantile(u, nu);
    let yv = student_quantile(v, nu);
    let s = (1.0 - rho * rho).sqrt();
    let upper = (yv / nu.sqrt()).atan();
    let ln_k = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * std::f64::consts::PI.ln();
    let integrand = |phi: f64| {
        let c = phi.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let y = nu.sqrt() * phi.tan();
        let scale = s * ((nu + y * y) / (nu + 1.0)).sqrt();
        let cond = student_cdf((x - rho * y) / scale, nu + 1.0);
        cond * (ln_k + (nu - 1.0) * c.ln()).exp()
    };
    integrate(integrand, -std::f64::consts::FRAC_PI_2, upper, 1e-10)
}

/// Method-of-moments parameter for a family from Kendall's tau.
///
/// Clayton and Gumbel only represent positive dependence; a nonpositive tau
/// yields [`EdaError::UnsupportedTau`]. A zero tau gives the product copula
/// for the remaining families.
pub fn tau_to_parameter(family: CopulaFamily, tau: f64) -> Result<BivariateCopula> {
    if !(tau.is_finite() && tau.abs() < 1.0) {
        return Err(EdaError::ParameterDomain {
            family,
            detail: format!("tau = {tau} must lie in (-1, 1)"),
        });
    }
    match family {
        CopulaFamily::Clayton | CopulaFamily::Gumbel if tau <= 0.0 => {
            Err(EdaError::UnsupportedTau { family, tau })
        }
        CopulaFamily::Product => Ok(BivariateCopula::Product),
        _ if tau == 0.0 => Ok(BivariateCopula::Product),
        CopulaFamily::Normal => {
            BivariateCopula::normal((std::f64::consts::FRAC_PI_2 * tau).sin())
        }
        CopulaFamily::Student => Ok(BivariateCopula::Student {
            rho: (std::f64::consts::FRAC_PI_2 * tau).sin(),
            nu: 4.0,
        }),
        CopulaFamily::Clayton => BivariateCopula::clayton(2.0 * tau / (1.0 - tau)),
        CopulaFamily::Gumbel => BivariateCopula::gumbel(1.0 / (1.0 - tau)),
        CopulaFamily::Frank => BivariateCopula::frank(frank_theta_from_tau(tau)),
    }
}

fn frank_theta_from_tau(tau: f64) -> f64 {
    let target = tau.abs();
    let mut hi = 1.0;
    while frank_tau(hi) < target {
        hi *= 2.0;
    }
    let theta = bisect(frank_tau, target, 0.0, hi, 1e-13 * hi.max(1.0), 200);
    theta.copysign(tau)
}

pub fn parameter_to_tau(copula: &BivariateCopula) -> f64 {
    copula.tau()
}

/// Maximum-likelihood degrees of freedom with the correlation fixed, by a
/// golden-section search on `ln ν` over `[1, 100]`.
pub fn fit_student_dof(data: &[[f64; 2]], rho: f64) -> Result<BivariateCopula> {
    BivariateCopula::Student { rho, nu: 4.0 }.validate()?;
    let objective = |ln_nu: f64| {
        let nu = ln_nu.exp();
        BivariateCopula::Student { rho, nu }
            .loglik(data)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let lo = STUDENT_DOF_MIN.ln();
    let hi = STUDENT_DOF_MAX.ln();
    // 1e-5 in ln ν is below 1e-3 in ν over the whole range.
    let (best, value, _) = golden_max(objective, lo, hi, 1e-5);
    let mut nu = best.exp();
    // Keep a bound when the likelihood keeps increasing towards it.
    for bound in [STUDENT_DOF_MIN, STUDENT_DOF_MAX] {
        if objective(bound.ln()) > value {
            nu = bound;
        }
    }
    BivariateCopula::student(rho, nu.clamp(STUDENT_DOF_MIN, STUDENT_DOF_MAX))
}

#[cfg(test)]
mod tests;
