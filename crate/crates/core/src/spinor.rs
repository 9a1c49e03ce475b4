//! Dirac gamma algebra in the Dirac representation, two-particle Kronecker
//! operators, Clifford linearization of Minkowski square roots, and the
//! bi-spinor proper-time evolution operator.

use crate::minkowski::{metric_diag, FourVector};
use nalgebra::DMatrix;
use num_complex::Complex64;

type C = Complex64;
pub type CMat = DMatrix<Complex64>;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// A complex square matrix acting on one (dim 4) or two (dim 16) spinor
/// factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinOperator {
    pub entries: CMat,
    pub dim: usize,
}

impl SpinOperator {
    pub fn new(entries: CMat) -> Self {
        let dim = entries.nrows();
        assert!(entries.is_square());
        assert!(dim == 4 || dim == 16, "spin operators are 4x4 or 16x16");
        SpinOperator { entries, dim }
    }

    pub fn identity(dim: usize) -> Self {
        SpinOperator::new(CMat::identity(dim, dim))
    }

    pub fn zero(dim: usize) -> Self {
        SpinOperator::new(CMat::zeros(dim, dim))
    }

    pub fn mul(&self, other: &Self) -> Self {
        SpinOperator::new(&self.entries * &other.entries)
    }

    pub fn add(&self, other: &Self) -> Self {
        SpinOperator::new(&self.entries + &other.entries)
    }

    pub fn sub(&self, other: &Self) -> Self {
        SpinOperator::new(&self.entries - &other.entries)
    }

    pub fn scale(&self, z: C) -> Self {
        SpinOperator::new(&self.entries * z)
    }

    pub fn adjoint(&self) -> Self {
        SpinOperator::new(self.entries.adjoint())
    }

    pub fn trace(&self) -> C {
        self.entries.trace()
    }

    pub fn kron(&self, other: &Self) -> Self {
        SpinOperator::new(self.entries.kronecker(&other.entries))
    }

    /// Largest entry magnitude of self − other.
    pub fn max_diff(&self, other: &Self) -> f64 {
        (&self.entries - &other.entries)
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Scaling-and-squaring matrix exponential.
    pub fn expm(&self) -> Self {
        SpinOperator::new(self.entries.exp())
    }
}

/// Dirac-representation gamma matrices:
/// γ⁰ = diag(1,1,−1,−1), γ^i = [[0, σ^i], [−σ^i, 0]].
pub fn gamma_matrices() -> [SpinOperator; 4] {
    let z = c(0.0);
    let o = c(1.0);
    let i = C::new(0.0, 1.0);
    let g0 = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![o, o, -o, -o]));
    #[rustfmt::skip]
    let g1 = CMat::from_row_slice(4, 4, &[
        z, z, z, o,
        z, z, o, z,
        z, -o, z, z,
        -o, z, z, z,
    ]);
    #[rustfmt::skip]
    let g2 = CMat::from_row_slice(4, 4, &[
        z, z, z, -i,
        z, z, i, z,
        z, i, z, z,
        -i, z, z, z,
    ]);
    #[rustfmt::skip]
    let g3 = CMat::from_row_slice(4, 4, &[
        z, z, o, z,
        z, z, z, -o,
        -o, z, z, z,
        z, o, z, z,
    ]);
    [
        SpinOperator::new(g0),
        SpinOperator::new(g1),
        SpinOperator::new(g2),
        SpinOperator::new(g3),
    ]
}

/// γ̂₁^μ = γ^μ ⊗ E₄ and γ̂₂^ν = E₄ ⊗ γ^ν on the two-particle space.
pub fn two_particle_gammas() -> ([SpinOperator; 4], [SpinOperator; 4]) {
    let g = gamma_matrices();
    let e4 = SpinOperator::identity(4);
    let g1 = [
        g[0].kron(&e4),
        g[1].kron(&e4),
        g[2].kron(&e4),
        g[3].kron(&e4),
    ];
    let g2 = [
        e4.kron(&g[0]),
        e4.kron(&g[1]),
        e4.kron(&g[2]),
        e4.kron(&g[3]),
    ];
    (g1, g2)
}

/// Which spinor factor an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Particle {
    Single,
    First,
    Second,
}

/// Clifford linearization γ^μ p_μ = γ⁰p⁰ − γ·p, so that slash(p)² = p²·I.
pub fn slash(p: &FourVector, which: Particle) -> SpinOperator {
    let gammas: [SpinOperator; 4] = match which {
        Particle::Single => gamma_matrices(),
        Particle::First => two_particle_gammas().0,
        Particle::Second => two_particle_gammas().1,
    };
    let dim = gammas[0].dim;
    let mut acc = SpinOperator::zero(dim);
    for mu in 0..4 {
        acc = acc.add(&gammas[mu].scale(c(metric_diag(mu) * p.0[mu])));
    }
    acc
}

/// Single-particle bi-spinor Hamiltonian Ĥ = m·slash(p) − m²·I.
pub fn dirac_hamiltonian(p: &FourVector, m: f64) -> SpinOperator {
    assert!(m > 0.0);
    slash(p, Particle::Single)
        .scale(c(m))
        .sub(&SpinOperator::identity(4).scale(c(m * m)))
}

/// cos(√z) continued through z < 0.
fn cos_sqrt(z: f64) -> f64 {
    if z >= 0.0 {
        z.sqrt().cos()
    } else {
        (-z).sqrt().cosh()
    }
}

/// sin(√z)/√z continued through z < 0, with a series fallback near 0.
fn sinc_sqrt(z: f64) -> f64 {
    if z.abs() < 1e-14 {
        1.0 - z / 6.0 + z * z / 120.0
    } else if z > 0.0 {
        z.sqrt().sin() / z.sqrt()
    } else {
        (-z).sqrt().sinh() / (-z).sqrt()
    }
}

/// Closed-form evolution kernel:
/// exp(−(i/ħ)ĤS) = e^{im²S/ħ}[cos(a√(p²))·I − i·a·sinc(a√(p²))·slash(p)],
/// a = mS/ħ, analytically continued for spacelike p.
pub fn evolution_operator_closed_form(
    p: &FourVector,
    m: f64,
    s: f64,
    hbar: f64,
) -> SpinOperator {
    let a = m * s / hbar;
    let z = a * a * p.norm_sq();
    let phase = C::new(0.0, m * m * s / hbar).exp();
    let cos_part = SpinOperator::identity(4).scale(c(cos_sqrt(z)));
    let sin_part = slash(p, Particle::Single).scale(C::new(0.0, -a * sinc_sqrt(z)));
    cos_part.add(&sin_part).scale(phase)
}

/// Proper-time evolution operator exp(−(i/ħ)ĤS) by scaling-and-squaring,
/// cross-checked against the closed form.
pub fn evolution_operator(p: &FourVector, m: f64, s: f64, hbar: f64) -> SpinOperator {
    assert!(s >= 0.0);
    let h = dirac_hamiltonian(p, m);
    let result = h.scale(C::new(0.0, -s / hbar)).expm();
    let closed = evolution_operator_closed_form(p, m, s, hbar);
    let diff = result.max_diff(&closed);
    let scale = result.max_abs().max(1.0);
    assert!(
        diff <= 1e-9 * scale,
        "evolution operator branches disagree by {diff}"
    );
    result
}
