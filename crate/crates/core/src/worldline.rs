//! Discretized worldlines: uniform parameter grid, lapse samples, proper time,
//! charge switching profiles and first-order reparametrizations.
//!
//! A worldline stores K samples at τ_k = k/(K−1). Between samples the
//! trajectory is a C¹ cubic Hermite interpolant whose node slopes are the
//! second-order finite differences, so `position_at`/`velocity_at` are exact
//! derivatives of each other. The lapse is interpolated linearly and proper
//! time is its exact cell-wise integral.

use crate::minkowski::FourVector;
use crate::real::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldlineError {
    #[error("worldline needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("lapse must be positive everywhere (node {0})")]
    NonPositiveLapse(usize),
    #[error("mass must be positive")]
    NonPositiveMass,
    #[error("non-finite component at node {0}")]
    NonFinite(usize),
    #[error("parameter {0} outside [0,1]")]
    ParameterOutOfRange(f64),
    #[error("shift field endpoints must vanish")]
    ShiftEndpoints,
    #[error("reparametrized grid is non-monotone (fold-over near node {0})")]
    FoldOver(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Charge as a C¹ function of proper time: zero outside [s_on, s_off],
/// e_max on the plateau [s_on+w, s_off−w], smoothstep joins of width w.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchingProfile {
    pub e_max: f64,
    pub s_on: f64,
    pub s_off: f64,
    pub ramp: f64,
}

impl SwitchingProfile {
    pub fn new(e_max: f64, s_on: f64, s_off: f64, ramp: f64) -> Self {
        assert!(s_on < s_off, "switching window must have s_on < s_off");
        assert!(ramp > 0.0, "ramp width must be positive");
        assert!(2.0 * ramp <= s_off - s_on, "ramps overlap");
        SwitchingProfile { e_max, s_on, s_off, ramp }
    }

    /// Permanently switched-on charge (window far outside any desk-scale run).
    pub fn constant(e_max: f64) -> Self {
        SwitchingProfile::new(e_max, -1e12, 1e12, 1.0)
    }

    /// Zero charge.
    pub fn off() -> Self {
        SwitchingProfile::new(0.0, -1e12, 1e12, 1.0)
    }

    /// e(s).
    pub fn eval<T: Real>(&self, s: T) -> T {
        let sv = s.value();
        if sv <= self.s_on || sv >= self.s_off {
            return T::zero();
        }
        if sv < self.s_on + self.ramp {
            let t = (s - T::from_f64(self.s_on)).scale(1.0 / self.ramp);
            smoothstep(t).scale(self.e_max)
        } else if sv > self.s_off - self.ramp {
            let t = (T::from_f64(self.s_off) - s).scale(1.0 / self.ramp);
            smoothstep(t).scale(self.e_max)
        } else {
            T::from_f64(self.e_max)
        }
    }

    /// Analytic de/ds.
    pub fn derivative<T: Real>(&self, s: T) -> T {
        let sv = s.value();
        if sv <= self.s_on || sv >= self.s_off {
            return T::zero();
        }
        if sv < self.s_on + self.ramp {
            let t = (s - T::from_f64(self.s_on)).scale(1.0 / self.ramp);
            smoothstep_deriv(t).scale(self.e_max / self.ramp)
        } else if sv > self.s_off - self.ramp {
            let t = (T::from_f64(self.s_off) - s).scale(1.0 / self.ramp);
            -smoothstep_deriv(t).scale(self.e_max / self.ramp)
        } else {
            T::zero()
        }
    }
}

fn smoothstep<T: Real>(t: T) -> T {
    // 3t² − 2t³
    t * t * (T::from_f64(3.0) - t.scale(2.0))
}

fn smoothstep_deriv<T: Real>(t: T) -> T {
    // 6t(1−t)
    t.scale(6.0) * (T::one() - t)
}

/// Infinitesimal proper-time shift sampled on the worldline grid.
/// Endpoints are pinned to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftField {
    pub values: Vec<f64>,
}

impl ShiftField {
    pub fn new(values: Vec<f64>) -> Result<Self, WorldlineError> {
        if values.len() < 3 {
            return Err(WorldlineError::TooFewSamples(values.len()));
        }
        if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
            return Err(WorldlineError::ShiftEndpoints);
        }
        Ok(ShiftField { values })
    }

    pub fn zero(k: usize) -> Self {
        ShiftField { values: vec![0.0; k] }
    }

    /// ε_k = amp · sin(πτ_k), the standard single-bump shape.
    pub fn sine_bump(k: usize, amp: f64) -> Self {
        let mut values: Vec<f64> = (0..k)
            .map(|i| amp * (std::f64::consts::PI * i as f64 / (k - 1) as f64).sin())
            .collect();
        values[0] = 0.0;
        values[k - 1] = 0.0;
        ShiftField { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Self {
        ShiftField { values: self.values.iter().map(|v| c * v).collect() }
    }

    /// dε/dτ on the grid, same finite-difference stencil as `Worldline::velocity`.
    pub fn derivative_tau(&self) -> Vec<f64> {
        fd_derivative(&self.values, 1.0 / (self.values.len() - 1) as f64)
    }

    /// Linear interpolation of ε at τ.
    pub fn at(&self, tau: f64) -> f64 {
        let k = self.values.len();
        let h = 1.0 / (k - 1) as f64;
        let t = tau.clamp(0.0, 1.0) / h;
        let i = (t.floor() as usize).min(k - 2);
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Second-order finite-difference derivative of node samples with spacing h.
pub fn fd_derivative(vals: &[f64], h: f64) -> Vec<f64> {
    let k = vals.len();
    let mut out = vec![0.0; k];
    // first-order one-sided ends: together with trapezoid weights this is a
    // summation-by-parts pairing, so constant-slope data is exactly
    // stationary for the discrete quadratic forms built on it
    out[0] = (vals[1] - vals[0]) / h;
    for i in 1..k - 1 {
        out[i] = (vals[i + 1] - vals[i - 1]) / (2.0 * h);
    }
    out[k - 1] = (vals[k - 1] - vals[k - 2]) / h;
    out
}

/// A discretized particle trajectory.
#[derive(Clone, Debug)]
pub struct Worldline<T = f64> {
    pub points: Vec<FourVector<T>>,
    pub lapse: Vec<T>,
    pub mass: f64,
    pub charge_profile: SwitchingProfile,
    /// Node slopes dx/dτ, kept consistent with `points`.
    slopes: Vec<FourVector<T>>,
    /// Cumulative proper time at the nodes.
    cum_s: Vec<T>,
}

impl<T: Real> Worldline<T> {
    pub fn new(
        points: Vec<FourVector<T>>,
        lapse: Vec<T>,
        mass: f64,
        charge_profile: SwitchingProfile,
    ) -> Result<Self, WorldlineError> {
        let k = points.len();
        if k < 3 {
            return Err(WorldlineError::TooFewSamples(k));
        }
        if lapse.len() != k {
            return Err(WorldlineError::TooFewSamples(lapse.len()));
        }
        if mass <= 0.0 {
            return Err(WorldlineError::NonPositiveMass);
        }
        for (i, n) in lapse.iter().enumerate() {
            if !(n.value() > 0.0) {
                return Err(WorldlineError::NonPositiveLapse(i));
            }
        }
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(WorldlineError::NonFinite(i));
            }
        }
        let mut w = Worldline {
            points,
            lapse,
            mass,
            charge_profile,
            slopes: Vec::new(),
            cum_s: Vec::new(),
        };
        w.refresh();
        Ok(w)
    }

    /// Recompute slopes and cumulative proper time after editing nodes.
    pub fn refresh(&mut self) {
        let k = self.points.len();
        let h = self.h();
        let mut slopes = Vec::with_capacity(k);
        // componentwise finite differences matching `fd_derivative`:
        // central in the interior, first-order one-sided at the ends so the
        // trapezoid-weighted forms satisfy summation by parts
        let two_h = T::from_f64(2.0 * h);
        let one_h = T::from_f64(h);
        slopes.push((self.points[1] - self.points[0]).scale(T::one() / one_h));
        for i in 1..k - 1 {
            slopes.push((self.points[i + 1] - self.points[i - 1]).scale(T::one() / two_h));
        }
        slopes.push((self.points[k - 1] - self.points[k - 2]).scale(T::one() / one_h));
        self.slopes = slopes;

        let mut cum = Vec::with_capacity(k);
        let mut acc = T::zero();
        cum.push(acc);
        for i in 0..k - 1 {
            acc = acc + (self.lapse[i] + self.lapse[i + 1]).scale(0.5 * h);
            cum.push(acc);
        }
        self.cum_s = cum;
    }

    pub fn samples(&self) -> usize {
        self.points.len()
    }

    /// Grid spacing in τ.
    pub fn h(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }

    pub fn tau(&self, k: usize) -> f64 {
        k as f64 * self.h()
    }

    /// Node velocity dx/dτ (central difference, one-sided at the ends).
    pub fn velocity(&self, k: usize) -> FourVector<T> {
        self.slopes[k]
    }

    /// Proper time s(τ) = ∫₀^τ N dτ′, exact on the linear lapse interpolant.
    pub fn proper_time(&self, tau: f64) -> Result<T, WorldlineError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(WorldlineError::ParameterOutOfRange(tau));
        }
        Ok(self.proper_time_unchecked(T::from_f64(tau)))
    }

    pub fn proper_time_unchecked(&self, tau: T) -> T {
        let h = self.h();
        let t = tau.value().clamp(0.0, 1.0) / h;
        let i = (t.floor() as usize).min(self.samples() - 2);
        let f = (tau - T::from_f64(self.tau(i))).scale(1.0 / h);
        // ∫ over the partial cell of the linear interpolant of N
        let n0 = self.lapse[i];
        let n1 = self.lapse[i + 1];
        let nmid = n0 + (n1 - n0) * f.scale(0.5);
        self.cum_s[i] + nmid * f.scale(h)
    }

    /// Total proper time S = s(1).
    pub fn total_proper_time(&self) -> T {
        *self.cum_s.last().unwrap()
    }

    pub fn proper_time_at_node(&self, k: usize) -> T {
        self.cum_s[k]
    }

    /// Invert s(τ): parameter value at proper time s (clamped to [0,1]).
    pub fn tau_of_proper_time(&self, s: f64) -> f64 {
        let k = self.samples();
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.total_proper_time().value() {
            return 1.0;
        }
        let mut i = match self
            .cum_s
            .binary_search_by(|c| c.value().partial_cmp(&s).unwrap())
        {
            Ok(j) => j,
            Err(j) => j.saturating_sub(1),
        };
        i = i.min(k - 2);
        // solve the cell quadratic s(τ) by bisection (monotone, N > 0)
        let (mut lo, mut hi) = (self.tau(i), self.tau(i + 1));
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.proper_time_unchecked(T::from_f64(mid)).value() < s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Lapse N(τ), linear interpolation.
    pub fn lapse_at(&self, tau: T) -> T {
        let h = self.h();
        let t = tau.value().clamp(0.0, 1.0) / h;
        let i = (t.floor() as usize).min(self.samples() - 2);
        let f = (tau - T::from_f64(self.tau(i))).scale(1.0 / h);
        self.lapse[i] + (self.lapse[i + 1] - self.lapse[i]) * f
    }

    /// Position x(τ) on the C¹ Hermite interpolant.
    pub fn position_at(&self, tau: T) -> FourVector<T> {
        let (i, f, h) = self.cell(tau);
        let (h00, h10, h01, h11) = hermite_basis(f);
        self.points[i].scale(h00)
            + self.slopes[i].scale(h10.scale(h))
            + self.points[i + 1].scale(h01)
            + self.slopes[i + 1].scale(h11.scale(h))
    }

    /// dx/dτ of the interpolant (exact derivative of `position_at`).
    pub fn velocity_at(&self, tau: T) -> FourVector<T> {
        let (i, f, h) = self.cell(tau);
        let (d00, d10, d01, d11) = hermite_basis_deriv(f);
        (self.points[i].scale(d00)
            + self.slopes[i].scale(d10.scale(h))
            + self.points[i + 1].scale(d01)
            + self.slopes[i + 1].scale(d11.scale(h)))
        .scale(T::from_f64(1.0 / h))
    }

    /// d²x/dτ² of the interpolant.
    pub fn acceleration_at(&self, tau: T) -> FourVector<T> {
        let (i, f, h) = self.cell(tau);
        let (s00, s10, s01, s11) = hermite_basis_second(f);
        (self.points[i].scale(s00)
            + self.slopes[i].scale(s10.scale(h))
            + self.points[i + 1].scale(s01)
            + self.slopes[i + 1].scale(s11.scale(h)))
        .scale(T::from_f64(1.0 / (h * h)))
    }

    fn cell(&self, tau: T) -> (usize, T, f64) {
        let h = self.h();
        let t = tau.value().clamp(0.0, 1.0) / h;
        let i = (t.floor() as usize).min(self.samples() - 2);
        let f = (tau - T::from_f64(self.tau(i))).scale(1.0 / h);
        (i, f, h)
    }

    /// Charge at the node's proper time.
    pub fn charge_at_node(&self, k: usize) -> T {
        self.charge_profile.eval(self.proper_time_at_node(k))
    }

    /// First-order reparametrization generated by the shift ε:
    /// N ↦ N − dε/dτ, x ↦ x − ẋ ε/N. Total proper time is preserved to O(ε²).
    pub fn reparametrize(&self, eps: &ShiftField) -> Result<Self, WorldlineError>
    where
        T: Real,
    {
        assert_eq!(eps.len(), self.samples(), "shift field grid mismatch");
        if eps.values[0] != 0.0 || eps.values[eps.len() - 1] != 0.0 {
            return Err(WorldlineError::ShiftEndpoints);
        }
        let k = self.samples();
        let eps_dot = eps.derivative_tau();
        let mut lapse = Vec::with_capacity(k);
        for i in 0..k {
            let n = self.lapse[i] - T::from_f64(eps_dot[i]);
            if n.value() <= 0.0 {
                return Err(WorldlineError::FoldOver(i));
            }
            lapse.push(n);
        }
        // fold-over check on the shifted parameter τ − ε/N
        let mut prev = f64::NEG_INFINITY;
        for i in 0..k {
            let shifted = self.tau(i) - eps.values[i] / self.lapse[i].value();
            if shifted <= prev {
                return Err(WorldlineError::FoldOver(i));
            }
            prev = shifted;
        }
        let points = (0..k)
            .map(|i| {
                let d = T::from_f64(eps.values[i]) / self.lapse[i];
                self.points[i] - self.velocity(i).scale(d)
            })
            .collect();
        Worldline::new(points, lapse, self.mass, self.charge_profile)
    }
}

impl Worldline<f64> {
    /// Straight worldline from `a` to `b` with constant lapse.
    pub fn straight(
        a: FourVector,
        b: FourVector,
        k: usize,
        lapse: f64,
        mass: f64,
        charge_profile: SwitchingProfile,
    ) -> Result<Self, WorldlineError> {
        let points = (0..k)
            .map(|i| {
                let f = i as f64 / (k - 1) as f64;
                a + (b - a).scale(f)
            })
            .collect();
        Worldline::new(points, vec![lapse; k], mass, charge_profile)
    }

    /// Lift to another scalar type (all entries constants).
    pub fn lift<T: Real>(&self) -> Worldline<T> {
        Worldline::new(
            self.points.iter().map(|p| p.lift()).collect(),
            self.lapse.iter().map(|&n| T::from_f64(n)).collect(),
            self.mass,
            self.charge_profile,
        )
        .expect("lift of a valid worldline is valid")
    }

    /// Plain-text table: one row per node `τ x0 x1 x2 x3 N`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("# tau x0 x1 x2 x3 lapse\n");
        for i in 0..self.samples() {
            let p = self.points[i];
            out.push_str(&format!(
                "{} {} {} {} {} {}\n",
                self.tau(i),
                p.0[0],
                p.0[1],
                p.0[2],
                p.0[3],
                self.lapse[i]
            ));
        }
        out
    }

    /// Parse the plain-text table format written by [`to_table`].
    ///
    /// Mass and charge profile are not part of the table; the caller supplies
    /// them (they live in the scenario file).
    pub fn from_table(
        text: &str,
        mass: f64,
        charge_profile: SwitchingProfile,
    ) -> Result<Self, WorldlineError> {
        let mut points = Vec::new();
        let mut lapse = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 6 {
                return Err(WorldlineError::Parse {
                    line: lineno + 1,
                    msg: format!("expected 6 columns, got {}", cols.len()),
                });
            }
            let mut vals = [0.0f64; 6];
            for (j, c) in cols.iter().enumerate() {
                vals[j] = c.parse().map_err(|e| WorldlineError::Parse {
                    line: lineno + 1,
                    msg: format!("bad number {c:?}: {e}"),
                })?;
                if !vals[j].is_finite() {
                    return Err(WorldlineError::Parse {
                        line: lineno + 1,
                        msg: format!("non-finite value {c:?}"),
                    });
                }
            }
            points.push(FourVector::new(vals[1], vals[2], vals[3], vals[4]));
            lapse.push(vals[5]);
        }
        Worldline::new(points, lapse, mass, charge_profile)
    }
}

fn hermite_basis<T: Real>(t: T) -> (T, T, T, T) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        t3.scale(2.0) - t2.scale(3.0) + T::one(),
        t3 - t2.scale(2.0) + t,
        -t3.scale(2.0) + t2.scale(3.0),
        t3 - t2,
    )
}

fn hermite_basis_deriv<T: Real>(t: T) -> (T, T, T, T) {
    let t2 = t * t;
    (
        t2.scale(6.0) - t.scale(6.0),
        t2.scale(3.0) - t.scale(4.0) + T::one(),
        -t2.scale(6.0) + t.scale(6.0),
        t2.scale(3.0) - t.scale(2.0),
    )
}

fn hermite_basis_second<T: Real>(t: T) -> (T, T, T, T) {
    (
        t.scale(12.0) - T::from_f64(6.0),
        t.scale(6.0) - T::from_f64(4.0),
        -t.scale(12.0) + T::from_f64(6.0),
        t.scale(6.0) - T::from_f64(2.0),
    )
}
