//! Real-linear Lie closure of complex matrix sets, structure constants,
//! and the operator / estimation algebras of a homodyne measurement model.
//!
//! Closures run over the REAL span of matrices with inner product
//! Re tr(A^dag B): the map A -> zeta_A is only real-linear, so the scalar
//! field of every algebra here is R. A bracket component counts as a new
//! direction when its post-projection norm exceeds tol * max ||generator||.

mod wei_norman;

pub use wei_norman::{product_of_exponentials, wei_norman, WeiNormanPath};

use ndarray::Array2;
use thiserror::Error;

use crate::linalg;
use crate::operators::Operator;
use crate::scalar::{im, re, Scalar, C};
use crate::superops::{
    k_strat, phased, strat_generator, zeta, MeasurementScheme, ModelError, ModelSpec,
};

#[derive(Debug, Error)]
pub enum LieError {
    #[error("generator list is empty")]
    EmptyGenerators,
    #[error("generator {index} has shape {found_rows}x{found_cols}, expected {rows}x{cols}")]
    ShapeMismatch { index: usize, rows: usize, cols: usize, found_rows: usize, found_cols: usize },
    #[error("tolerance must be positive, got {tol}")]
    BadTolerance { tol: f64 },
    #[error("cap must be at least 1")]
    BadCap,
    #[error("basis is not closed under brackets (residual {residual:e} > tol {tol:e})")]
    NotClosed { residual: f64, tol: f64 },
    #[error("basis is not orthonormal (defect {defect:e})")]
    NotOrthonormal { defect: f64 },
    #[error("scheme must observe every channel for this construction")]
    IncompleteScheme,
    #[error("closure hit the dimension cap at {dimension}")]
    CapExceeded { dimension: usize },
    #[error(
        "Wei-Norman chart breakdown at t = {time}: coordinate matrix condition number {cond:e}"
    )]
    ChartBreakdown { time: f64, cond: f64 },
    #[error("coefficient path entry {index} has {found} coordinates, basis has {expected}")]
    CoefficientLength { index: usize, expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Orthonormal basis of a matrix Lie algebra over R, together with its
/// structure constants `[X_i, X_j] = sum_k c[i][j][k] X_k` and the residual
/// certifying closedness.
#[derive(Debug, Clone)]
pub struct LieBasis<T: Scalar = f64> {
    elements: Vec<Array2<C<T>>>,
    structure: Vec<T>,
    residual: T,
    tolerance: T,
}

impl<T: Scalar> LieBasis<T> {
    pub fn dimension(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Array2<C<T>>] {
        &self.elements
    }

    pub fn element(&self, i: usize) -> &Array2<C<T>> {
        &self.elements[i]
    }

    /// Max norm of bracket components outside the span.
    pub fn residual(&self) -> T {
        self.residual
    }

    pub fn tolerance(&self) -> T {
        self.tolerance
    }

    /// `c[i][j][k]` with `[X_i, X_j] = sum_k c[i][j][k] X_k`.
    pub fn structure_constant(&self, i: usize, j: usize, k: usize) -> T {
        let n = self.elements.len();
        self.structure[(i * n + j) * n + k]
    }

    /// The full tensor as nested vectors (JSON-friendly).
    pub fn structure_tensor(&self) -> Vec<Vec<Vec<T>>> {
        let n = self.elements.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| self.structure_constant(i, j, k)).collect())
                    .collect()
            })
            .collect()
    }

    /// Re-validates an externally assembled basis: orthonormality and
    /// bracket closedness at the given tolerance.
    pub fn from_elements(elements: Vec<Array2<C<T>>>, tol: T) -> Result<Self, LieError> {
        if elements.is_empty() {
            return Err(LieError::EmptyGenerators);
        }
        let mut defect = T::zero();
        for (i, a) in elements.iter().enumerate() {
            for (j, b) in elements.iter().enumerate() {
                let want = if i == j { T::one() } else { T::zero() };
                defect = defect.max((re_hs(a, b) - want).abs());
            }
        }
        if defect > T::cast(1e-10) {
            return Err(LieError::NotOrthonormal { defect: defect.as_f64() });
        }
        let (structure, residual) = structure_and_residual(&elements);
        if residual > tol {
            return Err(LieError::NotClosed { residual: residual.as_f64(), tol: tol.as_f64() });
        }
        Ok(Self { elements, structure, residual, tolerance: tol })
    }

    /// Coordinates of an arbitrary matrix in this basis, plus the norm of
    /// the orthogonal remainder.
    pub fn coordinates(&self, m: &Array2<C<T>>) -> (Vec<T>, T) {
        let mut rem = m.clone();
        let mut coords = Vec::with_capacity(self.elements.len());
        for b in &self.elements {
            let c = re_hs(b, &rem);
            rem = rem - b.mapv(|z| z * re(c));
            coords.push(c);
        }
        // refine once against accumulated projection error
        for (k, b) in self.elements.iter().enumerate() {
            let c = re_hs(b, &rem);
            rem = rem - b.mapv(|z| z * re(c));
            coords[k] = coords[k] + c;
        }
        (coords, linalg::fro_norm(&rem))
    }
}

/// Result of a closure run.
#[derive(Debug, Clone)]
pub enum ClosureOutcome<T: Scalar = f64> {
    Finite(LieBasis<T>),
    CapExceeded { dimension: usize },
}

#[derive(Debug, Clone)]
pub struct ClosureReport<T: Scalar = f64> {
    pub outcome: ClosureOutcome<T>,
    pub tolerance: T,
    pub bracket_count: usize,
    /// Basis dimension after the generator stage and after each sweep.
    pub growth_trace: Vec<usize>,
}

impl<T: Scalar> ClosureReport<T> {
    pub fn dimension(&self) -> usize {
        match &self.outcome {
            ClosureOutcome::Finite(b) => b.dimension(),
            ClosureOutcome::CapExceeded { dimension } => *dimension,
        }
    }

    pub fn basis(&self) -> Option<&LieBasis<T>> {
        match &self.outcome {
            ClosureOutcome::Finite(b) => Some(b),
            ClosureOutcome::CapExceeded { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.outcome, ClosureOutcome::Finite(_))
    }
}

fn re_hs<T: Scalar>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        s = s + (x.conj() * *y).re;
    }
    s
}

fn bracket<T: Scalar>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Array2<C<T>> {
    a.dot(b) - b.dot(a)
}

/// Project `m` onto the orthogonal complement of the span (classical
/// Gram-Schmidt applied twice for numerical robustness).
fn project_out<T: Scalar>(basis: &[Array2<C<T>>], m: &Array2<C<T>>) -> Array2<C<T>> {
    let mut r = m.clone();
    for _ in 0..2 {
        for b in basis {
            let c = re_hs(b, &r);
            r = r - b.mapv(|z| z * re(c));
        }
    }
    r
}

fn structure_and_residual<T: Scalar>(elements: &[Array2<C<T>>]) -> (Vec<T>, T) {
    let n = elements.len();
    let mut tensor = vec![T::zero(); n * n * n];
    let mut residual = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            let br = bracket(&elements[i], &elements[j]);
            let mut rem = br.clone();
            for (k, b) in elements.iter().enumerate() {
                let c = re_hs(b, &rem);
                rem = rem - b.mapv(|z| z * re(c));
                tensor[(i * n + j) * n + k] = tensor[(i * n + j) * n + k] + c;
            }
            // second pass sharpens the coordinates
            for (k, b) in elements.iter().enumerate() {
                let c = re_hs(b, &rem);
                rem = rem - b.mapv(|z| z * re(c));
                tensor[(i * n + j) * n + k] = tensor[(i * n + j) * n + k] + c;
            }
            for k in 0..n {
                tensor[(j * n + i) * n + k] = -tensor[(i * n + j) * n + k];
            }
            residual = residual.max(linalg::fro_norm(&rem));
        }
    }
    (tensor, residual)
}

/// Bracket-closure of a generator list.
///
/// Orthonormalizes the generators in input order, then sweeps: every pair is
/// bracketed once, components orthogonal to the current span (norm above
/// tol * max generator norm) are appended, and sweeps repeat until no growth
/// or the cap is exceeded. Deterministic: input order fixes the basis.
pub fn closure<T: Scalar>(
    generators: &[Array2<C<T>>],
    tol: T,
    cap: usize,
) -> Result<ClosureReport<T>, LieError> {
    if generators.is_empty() {
        return Err(LieError::EmptyGenerators);
    }
    if !(tol > T::zero()) {
        return Err(LieError::BadTolerance { tol: tol.as_f64() });
    }
    if cap == 0 {
        return Err(LieError::BadCap);
    }
    let (rows, cols) = (generators[0].nrows(), generators[0].ncols());
    for (index, g) in generators.iter().enumerate() {
        if g.nrows() != rows || g.ncols() != cols {
            return Err(LieError::ShapeMismatch {
                index,
                rows,
                cols,
                found_rows: g.nrows(),
                found_cols: g.ncols(),
            });
        }
    }

    let scale = generators
        .iter()
        .map(linalg::fro_norm)
        .fold(T::zero(), |m, x| m.max(x));
    let threshold = tol * scale.max(T::epsilon());

    let mut basis: Vec<Array2<C<T>>> = Vec::new();
    let mut bracket_count = 0usize;
    let mut growth_trace = Vec::new();

    let append_if_new = |basis: &mut Vec<Array2<C<T>>>, m: &Array2<C<T>>| -> bool {
        let r = project_out(basis, m);
        let norm = linalg::fro_norm(&r);
        if norm > threshold {
            basis.push(r.mapv(|z| z / re(norm)));
            true
        } else {
            false
        }
    };

    for g in generators {
        append_if_new(&mut basis, g);
        if basis.len() > cap {
            growth_trace.push(basis.len());
            return Ok(ClosureReport {
                outcome: ClosureOutcome::CapExceeded { dimension: basis.len() },
                tolerance: tol,
                bracket_count,
                growth_trace,
            });
        }
    }
    growth_trace.push(basis.len());

    let mut processed = basis.len().min(1);
    loop {
        let sweep_start = basis.len();
        if processed >= sweep_start {
            break;
        }
        for j in processed..sweep_start {
            for i in 0..j {
                let br = bracket(&basis[i], &basis[j]);
                bracket_count += 1;
                if append_if_new(&mut basis, &br) && basis.len() > cap {
                    growth_trace.push(basis.len());
                    return Ok(ClosureReport {
                        outcome: ClosureOutcome::CapExceeded { dimension: basis.len() },
                        tolerance: tol,
                        bracket_count,
                        growth_trace,
                    });
                }
            }
        }
        processed = sweep_start;
        growth_trace.push(basis.len());
    }

    let (structure, residual) = structure_and_residual(&basis);
    let lie_basis = LieBasis { elements: basis, structure, residual, tolerance: tol };
    Ok(ClosureReport {
        outcome: ClosureOutcome::Finite(lie_basis),
        tolerance: tol,
        bracket_count,
        growth_trace,
    })
}

/// Structure constants of a closed basis, `c[i][j][k] = Re tr(X_k^dag [X_i, X_j])`.
pub fn structure_constants<T: Scalar>(basis: &LieBasis<T>) -> Vec<Vec<Vec<T>>> {
    basis.structure_tensor()
}

/// Ambient real dimension of d x d complex matrices, the closure cap above
/// which `CapExceeded` is impossible for operator algebras.
pub fn operator_cap(dim: usize) -> usize {
    2 * dim * dim
}

/// Ambient real dimension of super-operators on a d-dimensional space.
pub fn superop_cap(dim: usize) -> usize {
    2 * dim.pow(4)
}

/// The system-operator Lie algebra of a complete homodyne scheme,
/// Lie{ K(G, Theta), e^{i theta_1} L_1, ..., e^{i theta_n} L_n }.
pub fn operator_algebra<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    tol: T,
    cap: Option<usize>,
) -> Result<ClosureReport<T>, LieError> {
    if !scheme.is_complete(model.channels()) {
        return Err(LieError::IncompleteScheme);
    }
    let mut gens: Vec<Array2<C<T>>> = vec![k_strat(model, scheme)?.into_mat()];
    for (alpha, theta) in scheme.iter() {
        gens.push(phased(&model.couplings()[alpha], theta).into_mat());
    }
    closure(&gens, tol, cap.unwrap_or_else(|| operator_cap(model.dim())))
}

/// The estimation algebra of the filter,
/// Lie{ L~_{G,Theta}, zeta_{e^{i theta_a} L_a} : a in A }, for any observed
/// subset.
pub fn estimation_algebra<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    tol: T,
    cap: Option<usize>,
) -> Result<ClosureReport<T>, LieError> {
    scheme.validate_for(model)?;
    let mut gens: Vec<Array2<C<T>>> = vec![strat_generator(model, scheme)?.matrix().clone()];
    for (alpha, theta) in scheme.iter() {
        gens.push(zeta(&phased(&model.couplings()[alpha], theta)).matrix().clone());
    }
    closure(&gens, tol, cap.unwrap_or_else(|| superop_cap(model.dim())))
}

/// Outcome of the complete-homodyne equivalence check between the estimation
/// algebra and the zeta image of the operator algebra.
#[derive(Debug, Clone)]
pub struct TheoremMainReport<T: Scalar = f64> {
    pub dim_ops: usize,
    pub dim_superops: usize,
    /// dim of the operator algebra's intersection with iR I (0 or 1).
    pub kernel_dim: usize,
    /// Worst two-sided subspace-inclusion defect between the super-operator
    /// basis and the zeta image of the operator basis.
    pub max_inclusion_defect: T,
    pub pass: bool,
}

/// Checks `dim_superops = dim_ops - kernel_dim` and mutual subspace
/// inclusion of the estimation algebra and the zeta image of the operator
/// algebra, at tolerance `tol`. Complete homodyne only.
pub fn verify_theorem_main<T: Scalar>(
    model: &ModelSpec<T>,
    scheme: &MeasurementScheme<T>,
    tol: T,
    cap: Option<usize>,
) -> Result<TheoremMainReport<T>, LieError> {
    if !scheme.is_complete(model.channels()) {
        return Err(LieError::IncompleteScheme);
    }
    let ops = operator_algebra(model, scheme, tol, cap)?;
    let sup_cap = cap.map(|_| superop_cap(model.dim()));
    let superops = estimation_algebra(model, scheme, tol, sup_cap)?;
    let (ops_basis, sup_basis) = match (ops.basis(), superops.basis()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(LieError::CapExceeded { dimension: ops.dimension().max(superops.dimension()) }),
    };

    let d = model.dim();
    // kernel: does the operator span contain iI?
    let i_id = linalg::identity::<T>(d).mapv(|z| z * im::<T>());
    let i_norm = linalg::fro_norm(&i_id);
    let rem = project_out(ops_basis.elements(), &i_id);
    let kernel_dim = if linalg::fro_norm(&rem) <= tol * i_norm { 1 } else { 0 };

    // zeta image of the operator basis, orthonormalized
    let images: Vec<Array2<C<T>>> = ops_basis
        .elements()
        .iter()
        .map(|x| {
            let op = Operator::new(x.clone()).expect("basis element is a valid operator");
            zeta(&op).matrix().clone()
        })
        .collect();
    let mut image_basis: Vec<Array2<C<T>>> = Vec::new();
    for img in &images {
        let r = project_out(&image_basis, img);
        let norm = linalg::fro_norm(&r);
        if norm > tol * linalg::fro_norm(img).max(T::one()) {
            image_basis.push(r.mapv(|z| z / re(norm)));
        }
    }

    // two-sided inclusion on unit vectors
    let mut max_defect = T::zero();
    for e in sup_basis.elements() {
        max_defect = max_defect.max(linalg::fro_norm(&project_out(&image_basis, e)));
    }
    for img in &images {
        let norm = linalg::fro_norm(img);
        if norm > tol {
            let unit = img.mapv(|z| z / re(norm));
            max_defect = max_defect.max(linalg::fro_norm(&project_out(sup_basis.elements(), &unit)));
        }
    }

    let dim_ops = ops_basis.dimension();
    let dim_superops = sup_basis.dimension();
    let pass = dim_superops + kernel_dim == dim_ops && max_defect <= tol;
    Ok(TheoremMainReport { dim_ops, dim_superops, kernel_dim, max_inclusion_defect: max_defect, pass })
}
