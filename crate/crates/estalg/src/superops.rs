//! Super-operators on the vectorized operator space.
//!
//! A super-operator is stored as a dense d^2 x d^2 complex matrix acting on
//! column-stacked operators, vec(A X B) = (B^T (x) A) vec(X). The module
//! builds the zeta maps
//!
//!   zeta_A(X) = X A + A^dag X,
//!
//! the Lindblad generator of a model G = (L, H), its Stratonovich rewrite
//!
//!   L~_{G,Theta} = L_G - 1/2 sum_{a in A} zeta_{e^{i theta_a} L_a} o zeta_{e^{i theta_a} L_a},
//!
//! the drift operator K(G, Theta) of the observed channels, and the
//! unobserved-channel dissipator, with the split
//!
//!   L~_{G,Theta} = zeta_{K(G,Theta)} + L_unobs
//!
//! as the defining identity for K.

use ndarray::Array2;
use thiserror::Error;

use crate::linalg;
use crate::operators::{Operator, OperatorError};
use crate::scalar::{im, re, Scalar, C};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("Hamiltonian is not self-adjoint (relative defect {defect_rel})")]
    HamiltonianNotSelfAdjoint { defect_rel: String },
    #[error("coupling operator {index} has dimension {found}, expected {expected}")]
    CouplingDimension { index: usize, expected: usize, found: usize },
    #[error("observed channel index {index} out of range 1..={channels}")]
    ObservedOutOfRange { index: usize, channels: usize },
    #[error("observed channel index {index} listed twice")]
    DuplicateObserved { index: usize },
    #[error("{observed} observed indices but {phases} quadrature phases")]
    PhaseCountMismatch { observed: usize, phases: usize },
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Open-system model G = (L, H): coupling vector plus Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T: Scalar = f64> {
    dim: usize,
    l_ops: Vec<Operator<T>>,
    h: Operator<T>,
}

impl<T: Scalar> ModelSpec<T> {
    /// Validates dimensions and self-adjointness of H (relative tolerance
    /// 1e-12 against the Frobenius norm).
    pub fn new(l_ops: Vec<Operator<T>>, h: Operator<T>) -> Result<Self, ModelError> {
        let dim = h.dim();
        for (k, l) in l_ops.iter().enumerate() {
            if l.dim() != dim {
                return Err(ModelError::CouplingDimension {
                    index: k + 1,
                    expected: dim,
                    found: l.dim(),
                });
            }
        }
        let scale = h.fro_norm().max(T::one());
        let check = h.hermitian_check(T::cast(1e-12) * scale);
        if !check.is_selfadjoint {
            return Err(ModelError::HamiltonianNotSelfAdjoint {
                defect_rel: format!("{:e}", (check.defect / scale).as_f64()),
            });
        }
        Ok(Self { dim, l_ops, h })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.l_ops.len()
    }

    pub fn couplings(&self) -> &[Operator<T>] {
        &self.l_ops
    }

    pub fn hamiltonian(&self) -> &Operator<T> {
        &self.h
    }
}

/// Which output channels are homodyne-measured, and at which quadrature
/// phase. Channel indices are 0-based internally (1-based in the JSON
/// encoding).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementScheme<T: Scalar = f64> {
    observed: Vec<usize>,
    theta: Vec<T>,
}

impl<T: Scalar> MeasurementScheme<T> {
    pub fn new(observed: Vec<usize>, theta: Vec<T>) -> Result<Self, ModelError> {
        if observed.len() != theta.len() {
            return Err(ModelError::PhaseCountMismatch {
                observed: observed.len(),
                phases: theta.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for &i in &observed {
            if !seen.insert(i) {
                return Err(ModelError::DuplicateObserved { index: i + 1 });
            }
        }
        Ok(Self { observed, theta })
    }

    /// No channel observed.
    pub fn empty() -> Self {
        Self { observed: Vec::new(), theta: Vec::new() }
    }

    /// All n channels observed at the given phases.
    pub fn complete(theta: Vec<T>) -> Self {
        Self { observed: (0..theta.len()).collect(), theta }
    }

    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn phases(&self) -> &[T] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_complete(&self, channels: usize) -> bool {
        self.observed.len() == channels && self.observed.iter().all(|&i| i < channels)
    }

    /// Checks all observed indices address channels of the model.
    pub fn validate_for(&self, model: &ModelSpec<T>) -> Result<(), ModelError> {
        for &i in &self.observed {
            if i >= model.channels() {
                return Err(ModelError::ObservedOutOfRange {
                    index: i + 1,
                    channels: model.channels(),
                });
            }
        }
        Ok(())
    }

    /// Iterator over (channel index, phase) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.observed.iter().copied().zip(self.theta.iter().copied())
    }
}

/// Dense super-operator on vec'd operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator<T: Scalar = f64> {
    dim: usize,
    mat: Array2<C<T>>,
}

impl<T: Scalar> SuperOperator<T> {
    pub fn from_matrix(dim: usize, mat: Array2<C<T>>) -> Self {
        assert_eq!(mat.nrows(), dim * dim, "super-operator side must be dim^2");
        assert_eq!(mat.ncols(), dim * dim, "super-operator side must be dim^2");
        Self { dim, mat }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, mat: Array2::from_elem((dim * dim, dim * dim), re(T::zero())) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, mat: linalg::identity(dim * dim) }
    }

    /// Left multiplication X -> A X, matrix I (x) A.
    pub fn left_mult(a: &Operator<T>) -> Self {
        let d = a.dim();
        Self { dim: d, mat: linalg::kron(&linalg::identity(d), a.mat()) }
    }

    /// Right multiplication X -> X A, matrix A^T (x) I.
    pub fn right_mult(a: &Operator<T>) -> Self {
        let d = a.dim();
        let at = a.mat().t().to_owned();
        Self { dim: d, mat: linalg::kron(&at, &linalg::identity(d)) }
    }

    /// Sandwich X -> A X B, matrix B^T (x) A.
    pub fn sandwich(a: &Operator<T>, b: &Operator<T>) -> Self {
        assert_eq!(a.dim(), b.dim(), "dimension mismatch: {} vs {}", a.dim(), b.dim());
        let bt = b.mat().t().to_owned();
        Self { dim: a.dim(), mat: linalg::kron(&bt, a.mat()) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &Array2<C<T>> {
        &self.mat
    }

    pub fn fro_norm(&self) -> T {
        linalg::fro_norm(&self.mat)
    }

    pub fn scale(&self, z: C<T>) -> Self {
        Self { dim: self.dim, mat: self.mat.mapv(|w| w * z) }
    }

    pub fn scale_re(&self, x: T) -> Self {
        self.scale(re(x))
    }

    fn check_dims(&self, other: &Self) {
        assert_eq!(
            self.dim, other.dim,
            "dimension mismatch: {} vs {}",
            self.dim, other.dim
        );
    }

    /// Apply to an operator: unvec(M vec(X)).
    pub fn apply(&self, x: &Operator<T>) -> Operator<T> {
        assert_eq!(
            self.dim,
            x.dim(),
            "dimension mismatch: {} vs {}",
            self.dim,
            x.dim()
        );
        let v = self.mat.dot(&linalg::vec_col(x.mat()));
        Operator::new(linalg::unvec_col(&v, self.dim)).expect("apply preserves validity")
    }

    /// Composition (self after other).
    pub fn compose(&self, other: &Self) -> Self {
        self.check_dims(other);
        Self { dim: self.dim, mat: self.mat.dot(&other.mat) }
    }

    /// Super-operator Lie bracket [S1, S2] = S1 o S2 - S2 o S1.
    pub fn sbracket(&self, other: &Self) -> Self {
        self.check_dims(other);
        let ab = self.mat.dot(&other.mat);
        let ba = other.mat.dot(&self.mat);
        Self { dim: self.dim, mat: ab - ba }
    }

    /// Dissipation D_S(X, Y) = S(XY) - S(X) Y - X S(Y).
    pub fn dissipation(&self, x: &Operator<T>, y: &Operator<T>) -> Operator<T> {
        let xy = x * y;
        let sxy = self.apply(&xy);
        let sx_y = &self.apply(x) * y;
        let x_sy = x * &self.apply(y);
        &(&sxy - &sx_y) - &x_sy
    }

    /// Derivation test: the dissipation must vanish on the spanning set of
    /// all matrix-unit pairs. Returns the worst defect found.
    pub fn is_derivation(&self, tol: T) -> DerivationCheck<T> {
        assert!(tol > T::zero(), "tolerance must be positive");
        let d = self.dim;
        let mut max_defect = T::zero();
        let mut worst = (0, 0, 0, 0);
        for i in 0..d {
            for j in 0..d {
                let x = Operator::matrix_unit(d, i, j);
                for k in 0..d {
                    for l in 0..d {
                        let y = Operator::matrix_unit(d, k, l);
                        let defect = self.dissipation(&x, &y).fro_norm();
                        if defect > max_defect {
                            max_defect = defect;
                            worst = (i, j, k, l);
                        }
                    }
                }
            }
        }
        DerivationCheck { is_derivation: max_defect <= tol, max_defect, worst_pair: worst }
    }

    /// Semigroup element exp(t S), as a super-operator.
    pub fn expm_scaled(&self, t: T) -> Result<Self, OperatorError> {
        let scaled = self.mat.mapv(|z| z * re(t));
        let mat = linalg::expm(&scaled).map_err(|_| OperatorError::NonFinite)?;
        Ok(Self { dim: self.dim, mat })
    }

    /// Adjoint with respect to the trace pairing tr{S*(rho) X} = tr{rho S(X)}.
    pub fn adjoint(&self) -> Self {
        let d = self.dim;
        let n = d * d;
        let mut out = Array2::from_elem((n, n), re(T::zero()));
        // S* = P S^T P with P the vec-transposition permutation
        for r in 0..n {
            let pr = linalg::transpose_index(r, d);
            for c in 0..n {
                let pc = linalg::transpose_index(c, d);
                out[(pr, pc)] = self.mat[(c, r)];
            }
        }
        Self { dim: d, mat: out }
    }
}

impl<T: Scalar> std::ops::Add for &SuperOperator<T> {
    type Output = SuperOperator<T>;
    fn add(self, rhs: &SuperOperator<T>) -> SuperOperator<T> {
        self.check_dims(rhs);
        SuperOperator { dim: self.dim, mat: &self.mat + &rhs.mat }
    }
}

impl<T: Scalar> std::ops::Sub for &SuperOperator<T> {
    type Output = SuperOperator<T>;
    fn sub(self, rhs: &SuperOperator<T>) -> SuperOperator<T> {
        self.check_dims(rhs);
        SuperOperator { dim: self.dim, mat: &self.mat - &rhs.mat }
    }
}

impl<T: Scalar> std::ops::Neg for &SuperOperator<T> {
    type Output = SuperOperator<T>;
    fn neg(self) -> SuperOperator<T> {
        SuperOperator { dim: self.dim, mat: self.mat.mapv(|z| -z) }
    }
}

/// Certificate from [`SuperOperator::is_derivation`]: the maximal dissipation
/// norm over matrix-unit pairs (X, Y) = (E_ij, E_kl).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivationCheck<T: Scalar = f64> {
    pub is_derivation: bool,
    pub max_defect: T,
    pub worst_pair: (usize, usize, usize, usize),
}

/// zeta_A(X) = X A + A^dag X, stored as A^T (x) I + I (x) A^dag.
pub fn zeta<T: Scalar>(a: &Operator<T>) -> SuperOperator<T> {
    &SuperOperator::right_mult(a) + &SuperOperator::left_mult(&a.dagger())
}

/// Phase-rotated coupling e^{i theta} L.
pub fn phased<T: Scalar>(l: &Operator<T>, theta: T) -> Operator<T> {
    l.scale(C::from_polar(T::one(), theta))
}

/// K = -1/2 sum_k L_k^dag L_k - i H.
pub fn k_ito<T: Scalar>(model: &ModelSpec<T>) -> Operator<T> {
    let d = model.dim();
    let mut k = Operator::zeros(d);
    for l in model.couplings() {
        k = &k - &(&l.dagger() * l).scale_re(T::cast(0.5));
    }
    &k - &model.hamiltonian().scale(im())
}

/// Which closed form of K(G, Theta) to build. `Derived` is the form
/// consistent with the Stratonovich split and is the default everywhere;
/// the other two are deliberately wrong variants kept as negative controls
/// for the verification suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KForm {
    /// -1/2 sum_{a in A} (L^dag L + e^{2i theta} L^2) - iH
    #[default]
    Derived,
    /// -1/2 sum_{a in A} (L^dag L - e^{2i theta} L^2) - iH
    SignFlipped,
    /// -1/2 sum_{a in A} (L^dag L - 1/2 e^{2i theta} L^2) - iH
    HalfWeight,
}

/// Stratonovich drift operator of the observed channels,
/// K(G, Theta) = -1/2 sum_{a in A} (L_a^dag L_a + e^{2i theta_a} L_a^2) - iH.
///
/// The normative definition is the super-operator identity
/// `strat_generator = zeta(k_strat) + l_unobs`; this closed form is the one
/// that satisfies it.
pub fn k_strat<T: Scalar>(model: &ModelSpec<T>, scheme: &MeasurementScheme<T>) -> Result<Operator<T>, ModelError> {
    k_strat_variant(model, scheme, KForm::Derived)
}

/// K(G, Theta) in a chosen closed form; see [`KForm`].
pub fn k_strat_variant<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    form: KForm,
) -> Result<Operator<T>, ModelError> {
    scheme.validate_for(model)?;
    let d = model.dim();
    let half = T::cast(0.5);
    let square_weight = match form {
        KForm::Derived => re(T::one()),
        KForm::SignFlipped => re(-T::one()),
        KForm::HalfWeight => re(-half),
    };
    let mut k = Operator::zeros(d);
    for (alpha, theta) in scheme.iter() {
        let l = &model.couplings()[alpha];
        let ldl = &l.dagger() * l;
        let l2 = (l * l).scale(C::from_polar(T::one(), theta + theta) * square_weight);
        k = &k - &(&ldl + &l2).scale_re(half);
    }
    Ok(&k - &model.hamiltonian().scale(im()))
}

/// Lindblad generator, direct sum form:
/// L_G X = sum_k (L_k^dag X L_k - 1/2 L_k^dag L_k X - 1/2 X L_k^dag L_k) - i[X, H].
pub fn lindblad<T: Scalar>(model: &ModelSpec<T>) -> SuperOperator<T> {
    let d = model.dim();
    let mut g = dissipator_sum(model.couplings().iter(), d);
    // -i[X, H] = -i(XH - HX)
    let h = model.hamiltonian();
    let comm = &SuperOperator::right_mult(h) - &SuperOperator::left_mult(h);
    g = &g + &comm.scale(-im::<T>());
    g
}

/// Lindblad generator via the zeta split, sum_k L_k^dag X L_k + zeta_K X.
pub fn lindblad_zeta_form<T: Scalar>(model: &ModelSpec<T>) -> SuperOperator<T> {
    let d = model.dim();
    let mut g = SuperOperator::zero(d);
    for l in model.couplings() {
        g = &g + &SuperOperator::sandwich(&l.dagger(), l);
    }
    &g + &zeta(&k_ito(model))
}

/// Lindblad generator via squared zeta maps,
/// 1/2 sum_k (zeta_{L_k} o zeta_{L_k} - zeta_{L_k^2}) + zeta_K.
pub fn lindblad_zeta_square_form<T: Scalar>(model: &ModelSpec<T>) -> SuperOperator<T> {
    let d = model.dim();
    let half = T::cast(0.5);
    let mut g = SuperOperator::zero(d);
    for l in model.couplings() {
        let zl = zeta(l);
        let term = &zl.compose(&zl) - &zeta(&(l * l));
        g = &g + &term.scale_re(half);
    }
    &g + &zeta(&k_ito(model))
}

/// Lindblad dissipator restricted to the unobserved channels k not in A
/// (no Hamiltonian term).
pub fn l_unobs<T: Scalar>(model: &ModelSpec<T>, scheme: &MeasurementScheme<T>) -> SuperOperator<T> {
    let observed: std::collections::BTreeSet<usize> = scheme.observed().iter().copied().collect();
    let unobserved = model
        .couplings()
        .iter()
        .enumerate()
        .filter(|(k, _)| !observed.contains(k))
        .map(|(_, l)| l);
    dissipator_sum(unobserved, model.dim())
}

fn dissipator_sum<'a, T: Scalar + 'a>(
    couplings: impl Iterator<Item = &'a Operator<T>>,
    dim: usize,
) -> SuperOperator<T> {
    let half = T::cast(0.5);
    let mut g = SuperOperator::zero(dim);
    for l in couplings {
        let ldag = l.dagger();
        let ldl = &ldag * l;
        let jump = SuperOperator::sandwich(&ldag, l);
        let left = SuperOperator::left_mult(&ldl).scale_re(half);
        let right = SuperOperator::right_mult(&ldl).scale_re(half);
        g = &(&(&g + &jump) - &left) - &right;
    }
    g
}

/// Stratonovich generator, Eq. form
/// L~ = L_G - 1/2 sum_{a in A} zeta_{e^{i theta_a} L_a} o zeta_{e^{i theta_a} L_a}.
pub fn strat_generator<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
) -> Result<SuperOperator<T>, ModelError> {
    scheme.validate_for(model)?;
    let half = T::cast(0.5);
    let mut g = lindblad(model);
    for (alpha, theta) in scheme.iter() {
        let m = phased(&model.couplings()[alpha], theta);
        let zm = zeta(&m);
        g = &g - &zm.compose(&zm).scale_re(half);
    }
    Ok(g)
}
