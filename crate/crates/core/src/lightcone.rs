//! Reduction of the lightcone kernel δ(s²) to a weighted sum over crossing
//! roots of f(τ) = (x − y(τ))² along a partner worldline.
//!
//! Roots are bracketed on the grid (nodes plus cell midpoints), polished by
//! bisection, and finished with two Newton steps. The Newton steps run on the
//! generic scalar type, so dual-number inputs pick up the implicit derivative
//! of each root through f(τ*) = 0.

use crate::minkowski::FourVector;
use crate::real::Real;
use crate::worldline::Worldline;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LightconeError {
    #[error("grazing lightcone contact at τ = {tau}: |ds²/dτ| = {slope} below threshold")]
    GrazingRoot { tau: f64, slope: f64 },
}

/// Which side of the lightcone a crossing sits on, by the sign of Δx⁰.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CrossingKind {
    Retarded,
    Advanced,
}

/// One root of s²(τ) = 0 with its δ-function Jacobian weight.
#[derive(Clone, Copy, Debug)]
pub struct LightconeCrossing<T = f64> {
    pub tau_root: T,
    /// 1/|d s²/dτ| at the root.
    pub weight: T,
    pub kind: CrossingKind,
}

/// Selects the integrand contracted against the δ-weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegrandKind {
    /// ẋ·x′ scalar density (action terms).
    Scalar,
    /// x′ four-vector (momentum R-terms).
    Vector,
}

/// Relative root tolerance on f, times the characteristic scale of f.
pub const TOL_ROOT: f64 = 1e-12;
/// Below this times the scale, 1/|f′| is numerically meaningless.
pub const TOL_GRAZE: f64 = 1e-8;
/// Default self-interaction exclusion half-width, in grid cells.
pub const DELTA_CUT_CELLS: f64 = 2.0;

fn f_interval<T: Real>(x: &FourVector<T>, partner: &Worldline<T>, tau: T) -> T {
    x.interval_sq(&partner.position_at(tau))
}

/// Analytic df/dτ = −2 (x − y(τ)) · y′(τ) on the Hermite interpolant.
fn f_slope<T: Real>(x: &FourVector<T>, partner: &Worldline<T>, tau: T) -> T {
    let d = *x - partner.position_at(tau);
    -(d.dot(&partner.velocity_at(tau))).scale(2.0)
}

fn in_excluded(tau: f64, exclude: Option<(f64, f64)>) -> bool {
    match exclude {
        Some((lo, hi)) => tau > lo && tau < hi,
        None => false,
    }
}

/// All lightcone crossings of the point `x` with `partner`, both retarded and
/// advanced. Roots inside `exclude` (a τ-interval) are dropped.
pub fn find_crossings<T: Real>(
    x: &FourVector<T>,
    partner: &Worldline<T>,
    exclude: Option<(f64, f64)>,
) -> Result<Vec<LightconeCrossing<T>>, LightconeError> {
    let k = partner.samples();
    // sample nodes and midpoints for bracketing
    let m = 2 * (k - 1) + 1;
    let dt = 1.0 / (m - 1) as f64;
    let mut fs = Vec::with_capacity(m);
    let mut scale: f64 = 1.0;
    for j in 0..m {
        let fv = f_interval(x, partner, T::from_f64(j as f64 * dt)).value();
        scale = scale.max(fv.abs());
        fs.push(fv);
    }
    let tol_root = TOL_ROOT * scale;
    let tol_graze = TOL_GRAZE * scale;

    let mut out = Vec::new();
    for j in 0..m - 1 {
        let (fa, fb) = (fs[j], fs[j + 1]);
        let root_here = if fa == 0.0 {
            Some(j as f64 * dt)
        } else if fa * fb < 0.0 {
            // bisection on primal values
            let (mut lo, mut hi) = (j as f64 * dt, (j + 1) as f64 * dt);
            let mut flo = fa;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let fm = f_interval(x, partner, T::from_f64(mid)).value();
                if fm.abs() <= tol_root {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if flo * fm < 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                    flo = fm;
                }
            }
            Some(0.5 * (lo + hi))
        } else {
            None
        };
        // trailing endpoint root
        let root_here = if j == m - 2 && fb == 0.0 {
            Some(1.0)
        } else {
            root_here
        };
        let Some(tau0) = root_here else { continue };
        // drop excluded roots before polishing: the exact node coincidence in
        // a self-interaction sum is a degenerate root of f = (x − y)² and must
        // never reach the Newton/grazing machinery
        if in_excluded(tau0, exclude) {
            continue;
        }
        // two Newton steps on the generic scalar carry the implicit derivative
        let mut tau = T::from_f64(tau0);
        for _ in 0..2 {
            let slope = f_slope(x, partner, tau);
            if slope.value().abs() < tol_graze {
                return Err(LightconeError::GrazingRoot {
                    tau: tau.value(),
                    slope: slope.value().abs(),
                });
            }
            tau = tau - f_interval(x, partner, tau) / slope;
        }
        let tv = tau.value();
        if !(-(dt * 0.5)..=1.0 + dt * 0.5).contains(&tv) {
            continue;
        }
        let tv = tv.clamp(0.0, 1.0);
        if in_excluded(tv, exclude) {
            continue;
        }
        // drop duplicates from adjacent brackets
        if out
            .iter()
            .any(|c: &LightconeCrossing<T>| (c.tau_root.value() - tv).abs() < dt * 0.25)
        {
            continue;
        }
        let slope = f_slope(x, partner, tau);
        if slope.value().abs() < tol_graze {
            return Err(LightconeError::GrazingRoot {
                tau: tau.value(),
                slope: slope.value().abs(),
            });
        }
        let kind = if x.time().value() > partner.position_at(tau).time().value() {
            CrossingKind::Retarded
        } else {
            CrossingKind::Advanced
        };
        out.push(LightconeCrossing {
            tau_root: tau,
            weight: T::one() / slope.abs(),
            kind,
        });
    }
    Ok(out)
}

/// Σ over crossings of weight × integrand(τ*): the caller supplies any extra
/// density (charge, shift, lapse) through the closure.
pub fn sum_over_crossings<T: Real, R>(
    x: &FourVector<T>,
    partner: &Worldline<T>,
    exclude: Option<(f64, f64)>,
    mut integrand: impl FnMut(&LightconeCrossing<T>, &FourVector<T>, &FourVector<T>) -> R,
    zero: R,
    add: impl Fn(R, R) -> R,
) -> Result<R, LightconeError> {
    let crossings = find_crossings(x, partner, exclude)?;
    let mut acc = zero;
    for c in &crossings {
        let pos = partner.position_at(c.tau_root);
        let vel = partner.velocity_at(c.tau_root);
        acc = add(acc, integrand(c, &pos, &vel));
    }
    Ok(acc)
}

/// Scalar result of [`lightcone_sum`].
pub enum LightconeSum<T> {
    Scalar(T),
    Vector(FourVector<T>),
}

/// Replaces ∫ e dτ δ(s²)(…) by Σ_roots e(s(τ*))·weight·(…).
///
/// `Scalar` contracts the partner velocity against `v` (ẋ₁·x′₂ density);
/// `Vector` returns Σ weight·e·x′₂ for momentum terms.
pub fn lightcone_sum<T: Real>(
    x: &FourVector<T>,
    v: &FourVector<T>,
    partner: &Worldline<T>,
    kind: IntegrandKind,
    exclude: Option<(f64, f64)>,
) -> Result<LightconeSum<T>, LightconeError> {
    match kind {
        IntegrandKind::Scalar => sum_over_crossings(
            x,
            partner,
            exclude,
            |c, _pos, vel| {
                let e = partner.charge_profile.eval(
                    partner.proper_time_unchecked(c.tau_root),
                );
                c.weight * e * v.dot(vel)
            },
            T::zero(),
            |a, b| a + b,
        )
        .map(LightconeSum::Scalar),
        IntegrandKind::Vector => sum_over_crossings(
            x,
            partner,
            exclude,
            |c, _pos, vel| {
                let e = partner.charge_profile.eval(
                    partner.proper_time_unchecked(c.tau_root),
                );
                vel.scale(c.weight * e)
            },
            FourVector::zero(),
            |a, b| a + b,
        )
        .map(LightconeSum::Vector),
    }
}

/// Scalar convenience wrapper.
pub fn lightcone_sum_scalar<T: Real>(
    x: &FourVector<T>,
    v: &FourVector<T>,
    partner: &Worldline<T>,
    exclude: Option<(f64, f64)>,
) -> Result<T, LightconeError> {
    match lightcone_sum(x, v, partner, IntegrandKind::Scalar, exclude)? {
        LightconeSum::Scalar(s) => Ok(s),
        LightconeSum::Vector(_) => unreachable!(),
    }
}

/// Vector convenience wrapper.
pub fn lightcone_sum_vector<T: Real>(
    x: &FourVector<T>,
    partner: &Worldline<T>,
    exclude: Option<(f64, f64)>,
) -> Result<FourVector<T>, LightconeError> {
    match lightcone_sum(
        x,
        &FourVector::zero(),
        partner,
        IntegrandKind::Vector,
        exclude,
    )? {
        LightconeSum::Vector(v) => Ok(v),
        LightconeSum::Scalar(_) => unreachable!(),
    }
}
