//! Seeded random operators, models, and schemes.
//!
//! Used by the verification suite (`cmd verify`) and by tests; everything is
//! driven by a caller-supplied RNG so runs are reproducible.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::operators::Operator;
use crate::scalar::{Scalar, C};
use crate::superops::{MeasurementScheme, ModelSpec};

/// Complex Ginibre matrix: independent standard-normal real and imaginary
/// parts scaled by 1/sqrt(2d) so the Frobenius norm is O(1).
pub fn random_operator<T: Scalar>(rng: &mut impl Rng, dim: usize) -> Operator<T> {
    let scale = 1.0 / (2.0 * dim as f64).sqrt();
    let mut draw = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C::new(T::cast(re * scale), T::cast(im * scale))
    };
    Operator::from_fn(dim, |_| draw()).expect("random operator is valid")
}

/// Random self-adjoint operator (A + A^dag)/2.
pub fn random_selfadjoint<T: Scalar>(rng: &mut impl Rng, dim: usize) -> Operator<T> {
    let a = random_operator::<T>(rng, dim);
    (&a + &a.dagger()).scale_re(T::cast(0.5))
}

/// Random density matrix G G^dag / tr(G G^dag): positive with unit trace.
pub fn random_density<T: Scalar>(rng: &mut impl Rng, dim: usize) -> Operator<T> {
    let g = random_operator::<T>(rng, dim);
    let p = &g * &g.dagger();
    let tr = p.trace().re;
    p.scale_re(T::one() / tr)
}

/// Random model with `channels` coupling operators and a random Hamiltonian.
pub fn random_model<T: Scalar>(rng: &mut impl Rng, dim: usize, channels: usize) -> ModelSpec<T> {
    let l_ops = (0..channels).map(|_| random_operator::<T>(rng, dim)).collect();
    let h = random_selfadjoint::<T>(rng, dim);
    ModelSpec::new(l_ops, h).expect("random model is valid")
}

/// Complete-homodyne scheme over `channels` channels with uniform random
/// phases in [0, 2 pi).
pub fn random_complete_scheme<T: Scalar>(rng: &mut impl Rng, channels: usize) -> MeasurementScheme<T> {
    let theta = (0..channels)
        .map(|_| T::cast(rng.gen::<f64>() * std::f64::consts::TAU))
        .collect();
    MeasurementScheme::complete(theta)
}

/// Scheme observing the first `observed` of `channels` channels.
pub fn prefix_scheme<T: Scalar>(rng: &mut impl Rng, observed: usize) -> MeasurementScheme<T> {
    let theta: Vec<T> = (0..observed)
        .map(|_| T::cast(rng.gen::<f64>() * std::f64::consts::TAU))
        .collect();
    MeasurementScheme::new((0..observed).collect(), theta).expect("prefix scheme is valid")
}
