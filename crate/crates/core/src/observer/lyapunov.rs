//! Discrete Lyapunov machinery behind the adaptive dead zone.

use nalgebra::{DMatrix, DVector, Matrix5, SymmetricEigen, Vector5};

use crate::error::{Error, Result};

use super::state_space::StateSpace;

/// Default pole shift applied to the integrator row before solving.
///
/// Chosen so the shifted integrator leaks less than 1 ppm over 10⁴ steps
/// (`ε·N ≤ 1e-6`). The bound scales as `sqrt(2ε)` because `‖I + P‖ ≈ 1/(2ε)`,
/// so this value sets the voltage scale of the dead zone.
pub const EPSILON_INT: f64 = 1e-10;

/// Solves `Aᵀ P A − P = −Q` for `P` by vectorization:
/// `(Aᵀ ⊗ Aᵀ − I) vec(P) = −vec(Q)`.
pub fn solve_discrete_lyapunov(a: &Matrix5<f64>, q: &Matrix5<f64>) -> Result<Matrix5<f64>> {
    let radius = spectral_radius(a);
    if !(radius < 1.0) {
        return Err(Error::config(format!(
            "state matrix is not Schur stable (spectral radius {radius})"
        )));
    }
    let n = 5;
    let at = a.transpose();
    let mut lhs = DMatrix::<f64>::zeros(n * n, n * n);
    // vec is column-major: vec(Aᵀ P A) = (Aᵀ ⊗ Aᵀ) vec(P)
    for i in 0..n {
        for j in 0..n {
            let aij = at[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for k in 0..n {
                for l in 0..n {
                    lhs[(i * n + k, j * n + l)] = aij * at[(k, l)];
                }
            }
        }
    }
    for d in 0..n * n {
        lhs[(d, d)] -= 1.0;
    }
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::config("Lyapunov system is singular"))?;
    let p = Matrix5::from_iterator(sol.iter().copied());
    Ok((p + p.transpose()) * 0.5)
}

pub fn spectral_radius(a: &Matrix5<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn symmetric_extremes(m: &Matrix5<f64>) -> (f64, f64) {
    let eig = SymmetricEigen::new(*m);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Quantities of the Lyapunov bound that depend only on `A` and `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovCache {
    pub p: Matrix5<f64>,
    /// λ_min(P − A_sᵀ P A_s).
    pub lambda_m: f64,
    /// Spectral norm of I + P.
    pub norm_ip: f64,
    /// Euclidean norm of the injection gain.
    pub norm_l: f64,
    /// The shifted matrix the equation was solved for.
    pub a_s: Matrix5<f64>,
}

impl LyapunovCache {
    /// `sqrt(lambda_m / ‖I + P‖) / ‖L‖`, the factor multiplying the state norm.
    pub fn scale(&self) -> f64 {
        (self.lambda_m / self.norm_ip).sqrt() / self.norm_l
    }

    pub fn residual(&self) -> f64 {
        let r = self.a_s.transpose() * self.p * self.a_s - self.p + Matrix5::identity();
        r.amax()
    }
}

/// Solves the Lyapunov equation for `ss` with the integrator pole moved to
/// `1 - epsilon_int`, and caches the norms the dead-zone bound needs.
pub fn lyapunov_prepare(ss: &StateSpace, l: &Vector5<f64>, epsilon_int: f64) -> Result<LyapunovCache> {
    let mut a_s = ss.a_matrix();
    a_s[(0, 0)] = 1.0 - epsilon_int;
    prepare_for_matrix(&a_s, l, &Matrix5::identity())
}

pub fn prepare_for_matrix(a_s: &Matrix5<f64>, l: &Vector5<f64>, q: &Matrix5<f64>) -> Result<LyapunovCache> {
    let p = solve_discrete_lyapunov(a_s, q)?;
    let diff = p - a_s.transpose() * p * a_s;
    let (lambda_m, _) = symmetric_extremes(&((diff + diff.transpose()) * 0.5));
    if !(lambda_m > 0.0) {
        return Err(Error::config(format!(
            "Lyapunov decrease matrix is not positive definite (lambda_min = {lambda_m})"
        )));
    }
    let (p_min, _) = symmetric_extremes(&p);
    if !(p_min > 0.0) {
        return Err(Error::config("Lyapunov solution is not positive definite"));
    }
    let (_, norm_ip) = symmetric_extremes(&(Matrix5::identity() + p));
    Ok(LyapunovCache {
        p,
        lambda_m,
        norm_ip,
        norm_l: l.norm(),
        a_s: *a_s,
    })
}

/// Adaptive dead-zone radius, V:
/// `(‖x̂ + A⁻¹B i‖ + ‖A⁻¹K‖) / ‖L‖ · sqrt(λ_m / ‖I + P‖)`.
pub fn dead_zone_bound(
    x_hat: &Vector5<f64>,
    ss: &StateSpace,
    k: &Vector5<f64>,
    cache: &LyapunovCache,
    current: f64,
) -> Result<f64> {
    let state_term = (x_hat + ss.a_inv_mul(&ss.b) * current).norm();
    let sliding_term = ss.a_inv_mul(k).norm();
    bound_from_norms(state_term, sliding_term, cache.norm_l, cache.lambda_m, cache.norm_ip)
}

pub fn bound_from_norms(
    state_term: f64,
    sliding_term: f64,
    norm_l: f64,
    lambda_m: f64,
    norm_ip: f64,
) -> Result<f64> {
    if !(norm_l > 0.0) {
        return Err(Error::config("injection gain L must be non-zero for the dead-zone bound"));
    }
    Ok((state_term + sliding_term) / norm_l * (lambda_m / norm_ip).sqrt())
}
