//! Named experiments the scenario runner dispatches to. Each produces a set
//! of output files plus a one-line machine-readable summary.

use crate::action::{fokker_action, ActionBreakdown, ActionOptions};
use crate::canonical::CanonicalError;
use crate::lightcone::LightconeError;
use crate::minkowski::FourVector;
use crate::propagator::{
    first_order_propagator, free_propagator_lattice, gaussian_matrix_integral,
    lattice_propagator_with_insertions, proper_time_fixing, zeroth_order_propagator,
    PerturbationOptions, PropagatorError,
};
use crate::scenario::Scenario;
use crate::solver::{find_stationary, SolverOptions, StationaryReport};
use crate::spinor::{evolution_operator, SpinOperator};
use crate::worldline::{ShiftField, Worldline, WorldlineError};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Lightcone(#[from] LightconeError),
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
    #[error(transparent)]
    Propagator(#[from] PropagatorError),
    #[error(transparent)]
    Worldline(#[from] WorldlineError),
    #[error("worldline chord of particle {0} is not timelike")]
    SpacelikeChord(u8),
}

/// Files to write (name, contents) and the manifest summary line.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub files: Vec<(String, String)>,
    pub summary: String,
}

/// Dispatch a validated scenario. `seed` feeds every randomized choice, so
/// identical (scenario, seed) pairs give byte-identical outputs.
pub fn run_experiment(
    sc: &Scenario,
    w1: &Worldline,
    w2: &Worldline,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    match sc.experiment.as_str() {
        "action-eval" => action_eval(w1, w2),
        "invariance-sweep" => invariance_sweep(w1, w2, seed),
        "classical-orbit" => classical_orbit(w1, w2, sc),
        "free-propagator" => free_propagator(w1, w2, sc),
        "gaussian-check" => gaussian_check(sc),
        "perturbation-order" => perturbation_order(w1, w2, sc),
        "proper-time-fix" => proper_time_fix(w1, w2),
        other => unreachable!("validate() admitted unknown experiment {other}"),
    }
}

fn action_eval(w1: &Worldline, w2: &Worldline) -> Result<ExperimentOutput, ExperimentError> {
    let breakdown = fokker_action(w1, w2, &ActionOptions::default())?;
    let mut csv = String::from(ActionBreakdown::<f64>::CSV_HEADER);
    csv.push('\n');
    csv.push_str(&breakdown.to_csv_row());
    csv.push('\n');
    Ok(ExperimentOutput {
        files: vec![("action.csv".into(), csv)],
        summary: format!("action-eval ok total={}", breakdown.total),
    })
}

fn smooth_shape(k: usize, amp: f64, rng: &mut ChaCha8Rng) -> ShiftField {
    let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut vals: Vec<f64> = (0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64;
            amp * coeffs
                .iter()
                .enumerate()
                .map(|(m, c)| c * (std::f64::consts::PI * (m + 1) as f64 * t).sin())
                .sum::<f64>()
        })
        .collect();
    // sin(πm) leaves rounding residue at the last node; the ends are exact
    vals[0] = 0.0;
    vals[k - 1] = 0.0;
    // normalize so the slope never exceeds amp: keeps tau + eps monotone
    let sup = crate::worldline::fd_derivative(&vals, 1.0 / (k - 1) as f64)
        .iter()
        .fold(0.0f64, |m, d| m.max(d.abs()));
    for v in &mut vals {
        *v *= amp / sup.max(1e-300);
    }
    ShiftField::new(vals).expect("finite by construction")
}

fn invariance_sweep(
    w1: &Worldline,
    w2: &Worldline,
    seed: u64,
) -> Result<ExperimentOutput, ExperimentError> {
    let opts = ActionOptions::default();
    let base = fokker_action(w1, w2, &opts)?.total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("shape,amp,delta,order\n");
    let mut worst: f64 = f64::INFINITY;
    for shape in 0..3 {
        let eps = smooth_shape(w1.samples(), 1.0, &mut rng);
        let mut prev: Option<f64> = None;
        for amp in [0.2, 0.1, 0.05] {
            let scaled = eps.scaled(amp);
            let r1 = w1.reparametrize(&scaled)?;
            let delta = (fokker_action(&r1, w2, &opts)?.total - base).abs();
            let order = prev.map(|p| (p / delta).log2());
            csv.push_str(&format!(
                "{shape},{amp},{delta},{}\n",
                order.map(|o| o.to_string()).unwrap_or_default()
            ));
            if let Some(o) = order {
                worst = worst.min(o);
            }
            prev = Some(delta);
        }
    }
    Ok(ExperimentOutput {
        files: vec![("invariance.csv".into(), csv)],
        summary: format!("invariance-sweep ok min_order={worst}"),
    })
}

fn report_files(report: &StationaryReport) -> Vec<(String, String)> {
    let mut csv = String::from(StationaryReport::CSV_HEADER);
    csv.push('\n');
    csv.push_str(&report.to_csv_row());
    csv.push('\n');
    vec![
        ("stationary.csv".into(), csv),
        ("worldline1.txt".into(), report.worldlines.0.to_table()),
        ("worldline2.txt".into(), report.worldlines.1.to_table()),
    ]
}

fn classical_orbit(
    w1: &Worldline,
    w2: &Worldline,
    sc: &Scenario,
) -> Result<ExperimentOutput, ExperimentError> {
    let sopts = SolverOptions {
        tol_grad: sc.tolerances.grad,
        freeze_margin: (w1.samples() / 4).min(8),
        ..Default::default()
    };
    let report = find_stationary(w1, w2, &sopts)?;
    Ok(ExperimentOutput {
        files: report_files(&report),
        summary: format!(
            "classical-orbit {} gradient_norm={}",
            if report.converged { "ok" } else { "stalled" },
            report.gradient_norm
        ),
    })
}

fn chord_momentum(w: &Worldline, which: u8) -> Result<FourVector, ExperimentError> {
    let chord = w.points[w.samples() - 1] - w.points[0];
    let n2 = chord.norm_sq();
    if n2 <= 0.0 {
        return Err(ExperimentError::SpacelikeChord(which));
    }
    Ok(chord.scale(w.mass / n2.sqrt()))
}

fn free_propagator(
    w1: &Worldline,
    _w2: &Worldline,
    sc: &Scenario,
) -> Result<ExperimentOutput, ExperimentError> {
    let p = chord_momentum(w1, 1)?;
    let s = w1.total_proper_time();
    let closed = evolution_operator(&p, w1.mass, s, sc.hbar);
    let mut csv = String::from("steps,error\n");
    let mut steps = 1usize;
    let mut last = 0.0;
    while steps <= sc.grid.lattice_steps {
        let lat = free_propagator_lattice(w1.mass, &p, s, steps, sc.hbar);
        last = lat.max_diff(&closed);
        csv.push_str(&format!("{steps},{last}\n"));
        steps *= 2;
    }
    Ok(ExperimentOutput {
        files: vec![("free_propagator.csv".into(), csv)],
        summary: format!("free-propagator ok max_error={last}"),
    })
}

fn gaussian_check(sc: &Scenario) -> Result<ExperimentOutput, ExperimentError> {
    let (a, c) = (1.3, 0.7);
    let form = nalgebra::DMatrix::from_element(1, 1, a);
    let gammas = [SpinOperator::identity(4).scale(Complex64::new(c, 0.0))];
    let analytic = gaussian_matrix_integral(&form, &gammas, sc.hbar)?.entries[(0, 0)];
    // damped oscillatory quadrature, extrapolated η → 0
    let one = |eta: f64| -> Complex64 {
        let l = 9.0 / eta.sqrt();
        let n = 400_001usize;
        let h = 2.0 * l / (n - 1) as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let p = -l + i as f64 * h;
            let w = if i == 0 || i == n - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let phase = -(a * p * p + c * p) / sc.hbar;
            acc += Complex64::new(w, 0.0)
                * (Complex64::new(-eta * p * p, 0.0) + Complex64::new(0.0, phase)).exp();
        }
        acc * Complex64::new(h / 3.0, 0.0)
    };
    let etas = [0.4, 0.2, 0.1, 0.05];
    let mut vals: Vec<Complex64> = etas.iter().map(|&e| one(e)).collect();
    let mut csv = String::from("eta,quad_re,quad_im\n");
    for (e, v) in etas.iter().zip(&vals) {
        csv.push_str(&format!("{e},{},{}\n", v.re, v.im));
    }
    for round in 1..etas.len() {
        for i in 0..etas.len() - round {
            let (x0, x1) = (etas[i], etas[i + round]);
            vals[i] = (vals[i + 1] * Complex64::new(x0, 0.0)
                - vals[i] * Complex64::new(x1, 0.0))
                / Complex64::new(x0 - x1, 0.0);
        }
    }
    let rel = (analytic - vals[0]).norm() / analytic.norm();
    csv.push_str(&format!("0,{},{}\n", vals[0].re, vals[0].im));
    csv.push_str(&format!("analytic,{},{}\n", analytic.re, analytic.im));
    Ok(ExperimentOutput {
        files: vec![("gaussian.csv".into(), csv)],
        summary: format!("gaussian-check ok rel_error={rel}"),
    })
}

fn perturbation_order(
    w1: &Worldline,
    w2: &Worldline,
    sc: &Scenario,
) -> Result<ExperimentOutput, ExperimentError> {
    let p1 = chord_momentum(w1, 1)?;
    let p2 = chord_momentum(w2, 2)?;
    let (s1, s2) = (w1.total_proper_time(), w2.total_proper_time());
    let popts = PerturbationOptions {
        steps: sc.grid.lattice_steps,
        hbar: sc.hbar,
        include_self: false,
    };
    let z1 = ShiftField::zero(w1.samples());
    let z2 = ShiftField::zero(w2.samples());
    let mut csv = String::from("e_scale,order1_norm,residual\n");
    let mut last_pair: Option<(f64, f64)> = None;
    let mut min_order = f64::INFINITY;
    let mut order1_max: f64 = 0.0;
    for e_scale in [1.0, 0.5, 0.25] {
        let mut a = w1.clone();
        let mut b = w2.clone();
        a.charge_profile.e_max *= e_scale;
        b.charge_profile.e_max *= e_scale;
        let order0 =
            zeroth_order_propagator(a.mass, b.mass, &p1, &p2, s1, s2, sc.hbar).value;
        let order1 = first_order_propagator(
            a.mass, b.mass, &p1, &p2, s1, s2, &a, &b, &z1, &z2, &popts,
        )?
        .value;
        let full = lattice_propagator_with_insertions(
            a.mass, b.mass, &p1, &p2, s1, s2, &a, &b, &z1, &z2, &popts,
        )?;
        let residual = full.sub(&order0).sub(&order1).max_abs();
        order1_max = order1_max.max(order1.max_abs());
        csv.push_str(&format!("{e_scale},{},{residual}\n", order1.max_abs()));
        if let Some((_, prev)) = last_pair {
            if residual > 0.0 {
                min_order = min_order.min((prev / residual).log2());
            }
        }
        last_pair = Some((e_scale, residual));
    }
    let summary = if order1_max == 0.0 {
        "perturbation-order ok order1=0".to_string()
    } else {
        format!("perturbation-order ok min_order={min_order}")
    };
    Ok(ExperimentOutput {
        files: vec![("perturbation.csv".into(), csv)],
        summary,
    })
}

fn proper_time_fix(w1: &Worldline, w2: &Worldline) -> Result<ExperimentOutput, ExperimentError> {
    let eps1 = ShiftField::sine_bump(w1.samples(), 0.02);
    let eps2 = ShiftField::zero(w2.samples());
    let fix = proper_time_fixing(w1, w2, &eps1, &eps2, 0.0, 0.0, &ActionOptions::default())?;
    let mut files = Vec::new();
    for (name, traj) in [("peps1.csv", &fix.p_eps1), ("peps2.csv", &fix.p_eps2)] {
        let mut csv = String::from("s,p_eps\n");
        for (s, p) in traj {
            csv.push_str(&format!("{s},{p}\n"));
        }
        files.push((name.to_string(), csv));
    }
    Ok(ExperimentOutput {
        files,
        summary: format!(
            "proper-time-fix ok S1={} S2={} residual1={}",
            fix.s1, fix.s2, fix.residual1
        ),
    })
}
