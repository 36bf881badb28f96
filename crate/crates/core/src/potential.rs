//! Double-well potentials, the monotone part `β = Ψ' + C_Ψ·id`, its resolvent
//! and Yosida approximation, and the regularized potential `Ψ_λ`.

use crate::error::{ChcError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialKind {
    /// `¼(r² − 1)²`
    Polynomial,
    /// `(θ/2)((1+r)ln(1+r) + (1−r)ln(1−r)) − (θ₀/2)r²` on `[-1, 1]`.
    Logarithmic { theta: f64, theta0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialModel {
    kind: PotentialKind,
    c_psi: f64,
    gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RegularizationParam(f64);

impl RegularizationParam {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self(lambda))
        } else {
            Err(ChcError::param("lambda", format!("{lambda} must be positive")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Yosida-layer values at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularized {
    pub beta_lam: f64,
    pub beta_hat_lam: f64,
    pub psi_lam: f64,
    pub psi_lam_prime: f64,
}

const RESOLVENT_MAX_ITERS: usize = 200;

impl PotentialModel {
    pub fn polynomial() -> Self {
        Self {
            kind: PotentialKind::Polynomial,
            c_psi: 1.0,
            gamma: 2.0,
        }
    }

    /// Requires `0 < theta < theta0`; the semiconvexity constant is `theta0 − theta`.
    pub fn logarithmic(theta: f64, theta0: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < theta0 && theta0.is_finite()) {
            return Err(ChcError::param(
                "theta",
                format!("logarithmic potential requires 0 < theta < theta0 (got {theta}, {theta0})"),
            ));
        }
        Ok(Self {
            kind: PotentialKind::Logarithmic { theta, theta0 },
            c_psi: theta0 - theta,
            gamma: 1.0,
        })
    }

    pub fn kind(&self) -> PotentialKind {
        self.kind
    }

    pub fn c_psi(&self) -> f64 {
        self.c_psi
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.kind, PotentialKind::Logarithmic { .. })
    }

    /// `Ψ^{(order)}(r)` for `order` in `0..=3`.
    pub fn eval(&self, order: u8, r: f64) -> Result<f64> {
        match self.kind {
            PotentialKind::Polynomial => Ok(match order {
                0 => 0.25 * (r * r - 1.0).powi(2),
                1 => r * r * r - r,
                2 => 3.0 * r * r - 1.0,
                3 => 6.0 * r,
                _ => return Err(ChcError::param("order", format!("{order} > 3"))),
            }),
            PotentialKind::Logarithmic { theta, theta0 } => {
                if order == 0 {
                    if r.abs() > 1.0 || r.is_nan() {
                        return Err(ChcError::DomainViolation(r));
                    }
                    return Ok(0.5 * theta * (xlogx(1.0 + r) + xlogx(1.0 - r)) - 0.5 * theta0 * r * r);
                }
                if r.abs() >= 1.0 || r.is_nan() {
                    return Err(ChcError::DomainViolation(r));
                }
                Ok(match order {
                    1 => theta * r.atanh() - theta0 * r,
                    2 => theta / (1.0 - r * r) - theta0,
                    3 => 2.0 * theta * r / (1.0 - r * r).powi(2),
                    _ => return Err(ChcError::param("order", format!("{order} > 3"))),
                })
            }
        }
    }

    /// `β(r) = Ψ'(r) + C_Ψ r`, nondecreasing with `β(0) = 0`.
    pub fn beta(&self, r: f64) -> Result<f64> {
        Ok(self.eval(1, r)? + self.c_psi * r)
    }

    pub fn beta_prime(&self, r: f64) -> Result<f64> {
        Ok(self.eval(2, r)? + self.c_psi)
    }

    /// Convex antiderivative of `β` vanishing at 0, in closed form.
    pub fn beta_hat(&self, r: f64) -> Result<f64> {
        match self.kind {
            PotentialKind::Polynomial => Ok(0.25 * r.powi(4)),
            PotentialKind::Logarithmic { theta, .. } => {
                if r.abs() > 1.0 || r.is_nan() {
                    return Err(ChcError::DomainViolation(r));
                }
                Ok(0.5 * theta * (xlogx(1.0 + r) + xlogx(1.0 - r)) - 0.5 * theta * r * r)
            }
        }
    }

    /// `J_λ r = (I + λβ)⁻¹ r` by safeguarded Newton on the bracket between 0 and `r`.
    pub fn resolvent(&self, lambda: RegularizationParam, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(ChcError::NoConvergence(r));
        }
        if r == 0.0 {
            return Ok(0.0);
        }
        let lam = lambda.get();
        let tol = 1e-12 * (1.0 + r.abs());
        // x + λβ(x) = r with β odd-signed forces the root between 0 and r
        let (mut lo, mut hi) = (r.min(0.0), r.max(0.0));
        if self.is_singular() {
            let edge = 1.0f64.next_down();
            lo = lo.max(-edge);
            hi = hi.min(edge);
        }
        let residual = |x: f64| -> Result<f64> { Ok(x + lam * self.beta(x)? - r) };
        let mut x = match self.kind {
            PotentialKind::Polynomial => r / (1.0 + lam * self.beta_prime(0.0)?),
            PotentialKind::Logarithmic { .. } => 0.5 * (lo + hi),
        };
        x = x.clamp(lo, hi);
        for _ in 0..RESOLVENT_MAX_ITERS {
            let f = residual(x)?;
            if f.abs() <= tol {
                return Ok(x);
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                // bracket collapsed to adjacent floats
                let (f_lo, f_hi) = (residual(lo)?, residual(hi)?);
                return Ok(if f_lo.abs() <= f_hi.abs() { lo } else { hi });
            }
            let step = f / (1.0 + lam * self.beta_prime(x)?);
            let mut next = x - step;
            if !(next > lo && next < hi) {
                next = mid;
            }
            x = next;
        }
        Err(ChcError::NoConvergence(r))
    }

    /// Yosida approximation, Moreau envelope and regularized potential at `r`.
    pub fn regularized(&self, lambda: RegularizationParam, r: f64) -> Result<Regularized> {
        let lam = lambda.get();
        let j = self.resolvent(lambda, r)?;
        let beta_lam = (r - j) / lam;
        let beta_hat_lam = self.beta_hat(j)? + (r - j).powi(2) / (2.0 * lam);
        let psi0 = self.eval(0, 0.0)?;
        Ok(Regularized {
            beta_lam,
            beta_hat_lam,
            psi_lam: psi0 + beta_hat_lam - 0.5 * self.c_psi * r * r,
            psi_lam_prime: beta_lam - self.c_psi * r,
        })
    }

    /// `Ψ_λ''(r) = β'(J_λ r) / (1 + λβ'(J_λ r)) − C_Ψ`.
    pub fn regularized_second(&self, lambda: RegularizationParam, r: f64) -> Result<f64> {
        let j = self.resolvent(lambda, r)?;
        let bp = self.beta_prime(j)?;
        Ok(bp / (1.0 + lambda.get() * bp) - self.c_psi)
    }

    /// Checks `Ψ'' ≥ −C_Ψ` on a sample grid of the admissible range.
    pub fn check_semiconvexity(&self) -> bool {
        let range = if self.is_singular() { 0.999 } else { 5.0 };
        (0..=200).all(|i| {
            let r = -range + 2.0 * range * i as f64 / 200.0;
            self.eval(2, r).map(|v| v >= -self.c_psi - 1e-12).unwrap_or(false)
        })
    }
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// The potential actually used by the time stepper: `Ψ` itself, or `Ψ_λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePotential {
    pub model: PotentialModel,
    pub lambda: Option<RegularizationParam>,
}

impl EffectivePotential {
    pub fn new(model: PotentialModel, lambda: Option<RegularizationParam>) -> Result<Self> {
        if model.is_singular() && lambda.is_none() {
            return Err(ChcError::PotentialDomainViolation);
        }
        Ok(Self { model, lambda })
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(self.model.regularized(l, r)?.psi_lam),
            None => self.model.eval(0, r),
        }
    }

    pub fn prime(&self, r: f64) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(self.model.regularized(l, r)?.psi_lam_prime),
            None => self.model.eval(1, r),
        }
    }

    pub fn second(&self, r: f64) -> Result<f64> {
        match self.lambda {
            Some(l) => self.model.regularized_second(l, r),
            None => self.model.eval(2, r),
        }
    }
}
