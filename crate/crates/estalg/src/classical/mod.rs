//! Classical polynomial filtering models and their estimation algebra.
//!
//! The model is dX = v(X) dt + gamma_0 dW, dY = h(X) dt + dZ with polynomial
//! drift and observation. The module assembles the DMZ dual generator
//!
//!   L0* = 1/2 gamma_0^2 Lap - div(v .) - 1/2 h^2,
//!
//! the gauge field F_ij = dv_i/dx_j - dv_j/dx_i, the potential
//! Phi = 1/2 [h^2 + div v + gamma_0^{-2} v.v], the Benes-class test, and the
//! bracket closure Lie{L0*, h} in exact rational arithmetic.

mod closure;
mod diffop;
mod poly;

pub use closure::{classical_closure, closure_of_ops, SymbolicClosureReport, SymbolicOutcome};
pub use diffop::{PolyDiffOp, TermKey};
pub use poly::{rat, rat_int, Monomial, Poly, Rat};

use num_traits::Signed;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassicalError {
    #[error("drift must have one component per variable: expected {expected}, found {found}")]
    DriftArity { expected: usize, found: usize },
    #[error("{which} is a polynomial in {found} variables, model has {expected}")]
    VarArity { which: String, expected: usize, found: usize },
    #[error("diffusion coefficient gamma0 must be positive")]
    NonPositiveGamma,
    #[error("symbolic degree guard: intermediate operator reached total degree {degree} > {limit}")]
    DegreeGuard { degree: u32, limit: u32 },
    #[error("closure cap must be at least 2, got {cap}")]
    CapTooSmall { cap: usize },
}

/// Polynomial filtering model (drift vector, observation vector, diffusion
/// coefficient).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalModel {
    n_vars: usize,
    v: Vec<Poly>,
    h: Vec<Poly>,
    gamma0: Rat,
}

impl ClassicalModel {
    pub fn new(n_vars: usize, v: Vec<Poly>, h: Vec<Poly>, gamma0: Rat) -> Result<Self, ClassicalError> {
        if v.len() != n_vars {
            return Err(ClassicalError::DriftArity { expected: n_vars, found: v.len() });
        }
        for (i, p) in v.iter().enumerate() {
            if p.n_vars() != n_vars {
                return Err(ClassicalError::VarArity {
                    which: format!("v[{i}]"),
                    expected: n_vars,
                    found: p.n_vars(),
                });
            }
        }
        for (j, p) in h.iter().enumerate() {
            if p.n_vars() != n_vars {
                return Err(ClassicalError::VarArity {
                    which: format!("h[{j}]"),
                    expected: n_vars,
                    found: p.n_vars(),
                });
            }
        }
        if !gamma0.is_positive() {
            return Err(ClassicalError::NonPositiveGamma);
        }
        Ok(Self { n_vars, v, h, gamma0 })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn drift(&self) -> &[Poly] {
        &self.v
    }

    pub fn observation(&self) -> &[Poly] {
        &self.h
    }

    pub fn gamma0(&self) -> &Rat {
        &self.gamma0
    }

    fn h_squared(&self) -> Poly {
        let mut s = Poly::zero(self.n_vars);
        for hj in &self.h {
            s = s.add(&hj.mul(hj));
        }
        s
    }
}

/// DMZ dual generator L0* = 1/2 gamma0^2 Lap - sum_i d_i o (v_i .) - 1/2 h^2.
pub fn dmz_generator(model: &ClassicalModel) -> PolyDiffOp {
    let n = model.n_vars;
    let half_gamma_sq = model.gamma0.clone() * model.gamma0.clone() / rat_int(2);
    let mut op = PolyDiffOp::laplacian(n).scale(&half_gamma_sq);
    for (i, vi) in model.v.iter().enumerate() {
        let div_term = PolyDiffOp::partial(n, i).compose(&PolyDiffOp::from_poly(vi));
        op = op.sub(&div_term);
    }
    op.sub(&PolyDiffOp::from_poly(&model.h_squared()).scale(&rat(1, 2)))
}

/// Gauge field F_ij = dv_i/dx_j - dv_j/dx_i (antisymmetric polynomial matrix).
pub fn gauge_field(model: &ClassicalModel) -> Vec<Vec<Poly>> {
    let n = model.n_vars;
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| model.v[i].partial(j).sub(&model.v[j].partial(i)))
                .collect()
        })
        .collect()
}

/// Potential Phi = 1/2 [h^2 + div v + gamma0^{-2} v.v].
pub fn potential_phi(model: &ClassicalModel) -> Poly {
    let n = model.n_vars;
    let mut phi = model.h_squared();
    for (i, vi) in model.v.iter().enumerate() {
        phi = phi.add(&vi.partial(i));
    }
    let inv_gamma_sq = rat_int(1) / (model.gamma0.clone() * model.gamma0.clone());
    let mut vv = Poly::zero(n);
    for vi in &model.v {
        vv = vv.add(&vi.mul(vi));
    }
    phi = phi.add(&vv.scale(&inv_gamma_sq));
    phi.scale(&rat(1, 2))
}

/// Exactness: the gauge field vanishes identically (exact arithmetic, no
/// tolerance).
pub fn is_exact(model: &ClassicalModel) -> bool {
    gauge_field(model).iter().flatten().all(Poly::is_zero)
}

/// Benes-class verdict with the failed clauses spelled out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenesReport {
    pub is_benes: bool,
    pub reasons: Vec<String>,
}

/// Benes class: exact problem, every observation component affine
/// (degree <= 1), and potential of degree <= 2.
pub fn benes_class(model: &ClassicalModel) -> BenesReport {
    let mut reasons = Vec::new();
    if !is_exact(model) {
        reasons.push("gauge field F is not identically zero (problem is not exact)".to_string());
    }
    for (j, hj) in model.h.iter().enumerate() {
        let deg = hj.degree().unwrap_or(0);
        if deg > 1 {
            reasons.push(format!("h[{j}] has degree {deg} > 1"));
        }
    }
    let phi_deg = potential_phi(model).degree().unwrap_or(0);
    if phi_deg > 2 {
        reasons.push(format!("potential Phi has degree {phi_deg} > 2"));
    }
    BenesReport { is_benes: reasons.is_empty(), reasons }
}

/// The completed-square form 1/2 gamma0^2 sum_i D_i o D_i - Phi with the
/// gauge covariant derivative D_i = d_i - gamma0^{-2} v_i. Equals
/// [`dmz_generator`] term by term; the equality test is the arbiter of the
/// operator ordering.
pub fn completed_square_form(model: &ClassicalModel) -> PolyDiffOp {
    let n = model.n_vars;
    let inv_gamma_sq = rat_int(1) / (model.gamma0.clone() * model.gamma0.clone());
    let half_gamma_sq = model.gamma0.clone() * model.gamma0.clone() / rat_int(2);
    let mut op = PolyDiffOp::zero(n);
    for i in 0..n {
        let d_i = PolyDiffOp::partial(n, i)
            .sub(&PolyDiffOp::from_poly(&model.v[i].scale(&inv_gamma_sq)));
        op = op.add(&d_i.compose(&d_i));
    }
    op.scale(&half_gamma_sq)
        .sub(&PolyDiffOp::from_poly(&potential_phi(model)))
}

/// Lie{L0*, h_1, ..., h_p} over Q.
pub fn estimation_generators(model: &ClassicalModel) -> Vec<PolyDiffOp> {
    let mut gens = vec![dmz_generator(model)];
    for hj in &model.h {
        gens.push(PolyDiffOp::from_poly(hj));
    }
    gens
}

/// Reference models used by tests and the CLI presets.
pub mod models {
    use super::*;

    /// dX = a X dt + dW, dY = c X dt + dZ with gamma0 = 1.
    pub fn kalman_1d(a: Rat, c: Rat) -> ClassicalModel {
        let x = Poly::var(1, 0);
        ClassicalModel::new(1, vec![x.scale(&a)], vec![x.scale(&c)], rat_int(1)).unwrap()
    }

    /// Driftless cubic sensor: dY = X^3 dt + dZ.
    pub fn cubic_sensor() -> ClassicalModel {
        let x = Poly::var(1, 0);
        let x3 = x.mul(&x).mul(&x);
        ClassicalModel::new(1, vec![Poly::zero(1)], vec![x3], rat_int(1)).unwrap()
    }

    /// Rotational drift v = (-x2, x1) with h = x1: constant nonzero gauge
    /// field, the Brockett-Mitter non-exact example.
    pub fn rotational_2d() -> ClassicalModel {
        let x1 = Poly::var(2, 0);
        let x2 = Poly::var(2, 1);
        ClassicalModel::new(2, vec![x2.neg(), x1.clone()], vec![x1], rat_int(1)).unwrap()
    }
}
