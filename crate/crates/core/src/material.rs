//! Closed-form corner analysis for the pi/4 corner.
//!
//! Everything here is a pure function of the contrast `kappa = sigma_minus / sigma_plus`:
//! the singular exponent `mu`, the exponent lattice, the angular profile of the singular
//! functions and the sequence of rounding parameters at which the canonical operator
//! loses injectivity.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Piecewise-constant diffusion coefficient: `sigma_plus > 0` on the obtuse sector,
/// `sigma_minus < 0` on the pi/4 sector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialContrast {
    sigma_plus: f64,
    sigma_minus: f64,
}

/// Classification of a contrast against the critical interval `(-1, -1/3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ContrastClass {
    CriticalInterval,
    OutsideCritical,
    LimitThird,
    Forbidden,
}

impl MaterialContrast {
    pub fn new(sigma_plus: f64, sigma_minus: f64) -> Result<Self> {
        if !(sigma_plus.is_finite() && sigma_plus > 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_plus must be positive, got {sigma_plus}"
            )));
        }
        if !(sigma_minus.is_finite() && sigma_minus < 0.0) {
            return Err(Error::InvalidInput(format!(
                "sigma_minus must be negative, got {sigma_minus}"
            )));
        }
        if sigma_minus == -sigma_plus {
            return Err(Error::ForbiddenContrast);
        }
        Ok(Self {
            sigma_plus,
            sigma_minus,
        })
    }

    /// Contrast with `sigma_plus = 1`.
    pub fn from_kappa(kappa: f64) -> Result<Self> {
        Self::new(1.0, kappa)
    }

    pub fn sigma_plus(&self) -> f64 {
        self.sigma_plus
    }

    pub fn sigma_minus(&self) -> f64 {
        self.sigma_minus
    }

    pub fn kappa(&self) -> f64 {
        self.sigma_minus / self.sigma_plus
    }

    /// Same contrast with both coefficients multiplied by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha * self.sigma_plus, alpha * self.sigma_minus)
    }

    pub fn class(&self) -> ContrastClass {
        classify(self.kappa())
    }

    pub fn is_critical(&self) -> bool {
        self.class() == ContrastClass::CriticalInterval
    }
}

pub fn classify(kappa: f64) -> ContrastClass {
    const THIRD: f64 = -1.0 / 3.0;
    if kappa == -1.0 {
        ContrastClass::Forbidden
    } else if (kappa - THIRD).abs() <= 4.0 * f64::EPSILON {
        ContrastClass::LimitThird
    } else if kappa > -1.0 && kappa < THIRD {
        ContrastClass::CriticalInterval
    } else {
        ContrastClass::OutsideCritical
    }
}

/// `(1 - kappa) / (2 (1 + kappa))`, i.e. `(sigma_+ - sigma_-) / (2 (sigma_+ + sigma_-))`.
fn log_argument_base(c: &MaterialContrast) -> f64 {
    0.5 * (c.sigma_plus - c.sigma_minus) / (c.sigma_plus + c.sigma_minus)
}

/// Singular exponent `mu = -(2/pi) Log[a + i sqrt(1 - a^2)]`, principal branches.
///
/// `(a + i s)(a - i s) = 1`, so whichever factor has the larger modulus is evaluated
/// directly and the other one obtained by inversion; this avoids the cancellation in
/// `a - sqrt(a^2 - 1)` when `kappa` approaches -1.
pub fn compute_mu(contrast: &MaterialContrast) -> Result<Complex64> {
    if contrast.class() == ContrastClass::Forbidden {
        return Err(Error::ForbiddenContrast);
    }
    if contrast.class() == ContrastClass::LimitThird {
        // branch point of the square root: rounding would leave O(sqrt(eps)) residue
        return Ok(Complex64::new(0.0, 0.0));
    }
    let a = Complex64::new(log_argument_base(contrast), 0.0);
    let s = (Complex64::new(1.0, 0.0) - a * a).sqrt();
    let i = Complex64::i();
    let plus = a + i * s;
    let minus = a - i * s;
    let log = if plus.norm() >= minus.norm() {
        plus.ln()
    } else {
        -minus.ln()
    };
    let mu = -(2.0 / PI) * log;
    // normalize a signed zero
    Ok(Complex64::new(mu.re, mu.im + 0.0))
}

/// Real, positive `mu` for a critical contrast.
pub fn critical_mu(contrast: &MaterialContrast) -> Result<f64> {
    if !contrast.is_critical() {
        return Err(Error::NonCritical(contrast.kappa()));
    }
    Ok(compute_mu(contrast)?.re)
}

/// Period `pi / mu` of the spectrum in `ln(delta)`; critical contrasts only.
pub fn period_lndelta(contrast: &MaterialContrast) -> Result<f64> {
    Ok(PI / critical_mu(contrast)?)
}

const LATTICE_TOL: f64 = 1e-12;

/// Points of `(2Z \ {0}) U (i mu + 4Z) U (-i mu + 4Z)` with `|Re| <= window_halfwidth`,
/// sorted by `(Re, Im)` and deduplicated.
pub fn lattice(contrast: &MaterialContrast, window_halfwidth: f64) -> Result<Vec<Complex64>> {
    if !(window_halfwidth >= 0.0) || !window_halfwidth.is_finite() {
        return Err(Error::Domain {
            value: window_halfwidth,
            domain: "[0, inf)",
        });
    }
    let mu = compute_mu(contrast)?;
    let w = window_halfwidth + LATTICE_TOL;
    let mut pts = Vec::new();

    let kmax = (w / 2.0).floor() as i64;
    for k in -kmax..=kmax {
        if k != 0 {
            pts.push(Complex64::new(2.0 * k as f64, 0.0));
        }
    }
    let i = Complex64::i();
    for base in [i * mu, -i * mu] {
        let lo = ((-w - base.re) / 4.0).ceil() as i64;
        let hi = ((w - base.re) / 4.0).floor() as i64;
        for k in lo..=hi {
            let z = base + 4.0 * k as f64;
            pts.push(Complex64::new(snap(z.re), snap(z.im)));
        }
    }
    pts.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    pts.dedup_by(|a, b| (*a - *b).norm() <= LATTICE_TOL * (1.0 + b.norm()));
    Ok(pts)
}

fn snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= LATTICE_TOL * (1.0 + r.abs()) {
        r
    } else {
        x
    }
}

/// `sinh(x) / sinh(y)` for `0 <= x <= y`, without overflow for large arguments.
fn sinh_ratio(x: f64, y: f64) -> f64 {
    if y == 0.0 {
        return 1.0;
    }
    if y < 20.0 {
        x.sinh() / y.sinh()
    } else {
        (x - y).exp() * (-(-2.0 * x).exp_m1()) / (-(-2.0 * y).exp_m1())
    }
}

/// Angular profile of the singular functions `r^{+-i mu} phi(theta)`.
pub fn phi(theta: f64, mu: f64, c_phi: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain {
            value: theta,
            domain: "[0, pi]",
        });
    }
    if !(mu > 0.0) {
        return Err(Error::Domain {
            value: mu,
            domain: "(0, inf)",
        });
    }
    Ok(if theta <= FRAC_PI_4 {
        c_phi * sinh_ratio(mu * theta, mu * FRAC_PI_4)
    } else {
        c_phi * sinh_ratio(mu * (PI - theta), mu * 3.0 * FRAC_PI_4)
    })
}

/// `int_0^len sinh(mu t)^2 dt / sinh(mu len)^2`.
fn sinh_sq_integral_ratio(mu: f64, len: f64) -> f64 {
    let x = mu * len;
    if x < 1e-3 {
        let x2 = x * x;
        len * (1.0 / 3.0 - 2.0 * x2 / 45.0 + 2.0 * x2 * x2 / 315.0)
    } else {
        let s = x.sinh();
        1.0 / (2.0 * mu * x.tanh()) - len / (2.0 * s * s)
    }
}

/// `int_0^pi sigma0(theta) phi(theta)^2 dtheta` for `c_phi = 1`, in closed form.
pub fn weighted_profile_integral(contrast: &MaterialContrast, mu: f64) -> f64 {
    contrast.sigma_minus * sinh_sq_integral_ratio(mu, FRAC_PI_4)
        + contrast.sigma_plus * sinh_sq_integral_ratio(mu, 3.0 * FRAC_PI_4)
}

/// Positive constant `c_phi` with `mu * int sigma0 phi^2 = 1`.
pub fn normalize_phi(contrast: &MaterialContrast, mu: f64) -> Result<f64> {
    if !contrast.is_critical() {
        return Err(Error::NonCritical(contrast.kappa()));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain {
            value: mu,
            domain: "(0, inf)",
        });
    }
    let integral = weighted_profile_integral(contrast, mu);
    if !(integral > 0.0) {
        return Err(Error::InvalidInput(format!(
            "weighted profile integral {integral:e} is not positive"
        )));
    }
    Ok(1.0 / (mu * integral).sqrt())
}

/// `delta^n = exp(-n pi / mu)`, the n-th rounding parameter where the canonical operator
/// has a kernel.
pub fn delta_n(contrast: &MaterialContrast, n: u32) -> Result<f64> {
    Ok(ln_delta_n(contrast, n)?.exp())
}

/// `ln delta^n = -n pi / mu`. Near `kappa = -1/3` the exponent is in the thousands and
/// `delta^n` itself underflows; this stays exact.
pub fn ln_delta_n(contrast: &MaterialContrast, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be >= 1".into()));
    }
    let mu = critical_mu(contrast)?;
    Ok(-(n as f64) * PI / mu)
}

/// Bundle of the corner quantities for one contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularData {
    pub mu: Complex64,
    pub lattice_window: Vec<Complex64>,
    /// Only for critical contrasts.
    pub phi_cphi: Option<f64>,
    /// Only for critical contrasts.
    pub period_lndelta: Option<f64>,
}

impl SingularData {
    pub fn compute(contrast: &MaterialContrast, window_halfwidth: f64) -> Result<Self> {
        let mu = compute_mu(contrast)?;
        let lattice_window = lattice(contrast, window_halfwidth)?;
        let (phi_cphi, period) = if contrast.is_critical() {
            (Some(normalize_phi(contrast, mu.re)?), Some(PI / mu.re))
        } else {
            (None, None)
        };
        Ok(Self {
            mu,
            lattice_window,
            phi_cphi,
            period_lndelta: period,
        })
    }
}
