//! Dense complex linear algebra shared by the operator and super-operator
//! layers: vectorization, LU solves, the matrix exponential, and a Jacobi
//! eigensolver for Hermitian matrices.
//!
//! Everything here is generic over the real [`Scalar`] type and sized for
//! the d <= 64 Hilbert-space cap (so d^2 <= 4096 on the super-operator
//! side). No BLAS/LAPACK backend; `ndarray::dot` is fast enough at these
//! sizes and keeps the crate scalar-generic.

use ndarray::{Array1, Array2};
use thiserror::Error;

use crate::scalar::{im, re, Scalar, C};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinalgError {
    #[error("matrix is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
}

pub fn dagger<T: Scalar>(a: &Array2<C<T>>) -> Array2<C<T>> {
    a.t().mapv(|z| z.conj())
}

pub fn trace<T: Scalar>(a: &Array2<C<T>>) -> C<T> {
    a.diag().iter().copied().fold(C::new(T::zero(), T::zero()), |s, z| s + z)
}

pub fn fro_norm<T: Scalar>(a: &Array2<C<T>>) -> T {
    a.iter().map(|z| z.norm_sqr()).fold(T::zero(), |s, x| s + x).sqrt()
}

/// Maximum absolute column sum.
pub fn one_norm<T: Scalar>(a: &Array2<C<T>>) -> T {
    let mut best = T::zero();
    for col in a.columns() {
        let s = col.iter().map(|z| z.norm()).fold(T::zero(), |s, x| s + x);
        if s > best {
            best = s;
        }
    }
    best
}

pub fn all_finite<T: Scalar>(a: &Array2<C<T>>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Column-stacking vectorization: `vec(X)[i + j*d] = X[(i, j)]`.
pub fn vec_col<T: Scalar>(a: &Array2<C<T>>) -> Array1<C<T>> {
    let d = a.nrows();
    Array1::from_shape_fn(d * d, |k| a[(k % d, k / d)])
}

/// Inverse of [`vec_col`].
pub fn unvec_col<T: Scalar>(v: &Array1<C<T>>, d: usize) -> Array2<C<T>> {
    assert_eq!(v.len(), d * d, "vector length must be d^2");
    Array2::from_shape_fn((d, d), |(i, j)| v[i + j * d])
}

/// Kronecker product `a (x) b`.
pub fn kron<T: Scalar>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Array2<C<T>> {
    ndarray::linalg::kron(a, b)
}

pub fn identity<T: Scalar>(d: usize) -> Array2<C<T>> {
    Array2::from_shape_fn((d, d), |(i, j)| {
        if i == j {
            re(T::one())
        } else {
            re(T::zero())
        }
    })
}

/// LU factorization with partial pivoting, in place.
struct Lu<T: Scalar> {
    lu: Array2<C<T>>,
    perm: Vec<usize>,
}

fn lu_factor<T: Scalar>(a: &Array2<C<T>>) -> Result<Lu<T>, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "LU needs a square matrix");
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        // pivot on the largest remaining magnitude in column k
        let mut p = k;
        let mut best = lu[(k, k)].norm_sqr();
        for r in k + 1..n {
            let m = lu[(r, k)].norm_sqr();
            if m > best {
                best = m;
                p = r;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return Err(LinalgError::Singular { pivot: k });
        }
        if p != k {
            perm.swap(k, p);
            for c in 0..n {
                let tmp = lu[(k, c)];
                lu[(k, c)] = lu[(p, c)];
                lu[(p, c)] = tmp;
            }
        }
        let piv = lu[(k, k)];
        for r in k + 1..n {
            let f = lu[(r, k)] / piv;
            lu[(r, k)] = f;
            for c in k + 1..n {
                let sub = f * lu[(k, c)];
                lu[(r, c)] = lu[(r, c)] - sub;
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl<T: Scalar> Lu<T> {
    fn solve_vec(&self, b: &Array1<C<T>>) -> Array1<C<T>> {
        let n = self.perm.len();
        let mut x = Array1::from_shape_fn(n, |i| b[self.perm[i]]);
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }
}

/// Solve `A X = B` for square `A`.
pub fn solve<T: Scalar>(a: &Array2<C<T>>, b: &Array2<C<T>>) -> Result<Array2<C<T>>, LinalgError> {
    let lu = lu_factor(a)?;
    let n = a.nrows();
    let m = b.ncols();
    let mut x = Array2::from_elem((n, m), re(T::zero()));
    for c in 0..m {
        let col = b.column(c).to_owned();
        let xc = lu.solve_vec(&col);
        for r in 0..n {
            x[(r, c)] = xc[r];
        }
    }
    Ok(x)
}

/// 1-norm condition number via an explicit inverse (fine at the small
/// dimensions the Wei-Norman chart uses).
pub fn cond_one<T: Scalar>(a: &Array2<C<T>>) -> T {
    match solve(a, &identity(a.nrows())) {
        Ok(inv) => one_norm(a) * one_norm(&inv),
        Err(_) => T::infinity(),
    }
}

/// Matrix exponential by scaling-and-squaring with the degree-13 Pade
/// approximant. Relative accuracy well below 1e-12 for ||A|| <= 10 in f64.
pub fn expm<T: Scalar>(a: &Array2<C<T>>) -> Result<Array2<C<T>>, LinalgError> {
    if !all_finite(a) {
        return Err(LinalgError::NonFinite);
    }
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");

    const PADE13: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;

    let norm = one_norm(a).as_f64();
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scale = re(T::cast(0.5f64.powi(s as i32)));
    let a1 = a.mapv(|z| z * scale);

    let b: Vec<C<T>> = PADE13.iter().map(|&x| re(T::cast(x))).collect();
    let a2 = a1.dot(&a1);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);
    let eye = identity::<T>(n);

    let w1 = a6.mapv(|z| z * b[13]) + a4.mapv(|z| z * b[11]) + a2.mapv(|z| z * b[9]);
    let w2 = a6.mapv(|z| z * b[7]) + a4.mapv(|z| z * b[5]) + a2.mapv(|z| z * b[3]) + eye.mapv(|z| z * b[1]);
    let u = a1.dot(&(a6.dot(&w1) + w2));
    let z1 = a6.mapv(|z| z * b[12]) + a4.mapv(|z| z * b[10]) + a2.mapv(|z| z * b[8]);
    let v = a6.dot(&z1) + a6.mapv(|z| z * b[6]) + a4.mapv(|z| z * b[4]) + a2.mapv(|z| z * b[2]) + eye.mapv(|z| z * b[0]);

    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Eigen-decomposition of a Hermitian matrix by the cyclic complex Jacobi
/// method. Returns eigenvalues in ascending order with matching unit
/// eigenvectors in the columns of the second component.
pub fn eigh<T: Scalar>(a: &Array2<C<T>>) -> (Vec<T>, Array2<C<T>>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigh needs a square matrix");
    let mut m = a.clone();
    let mut v = identity::<T>(n);
    if n <= 1 {
        let vals = m.diag().iter().map(|z| z.re).collect();
        return (vals, v);
    }

    let fro = fro_norm(&m).max(T::epsilon());
    let target = fro * T::epsilon() * T::cast(n as f64);
    let off = |m: &Array2<C<T>>| -> T {
        let mut s = T::zero();
        for p in 0..n {
            for q in 0..n {
                if p != q {
                    s = s + m[(p, q)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    for _sweep in 0..64 {
        if off(&m) <= target {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = m[(p, q)];
                let gn = g.norm();
                if gn <= target / T::cast((n * n) as f64) {
                    continue;
                }
                let phase = g / re(gn);
                let alpha = m[(p, p)].re;
                let beta = m[(q, q)].re;
                let tau = (beta - alpha) / (gn + gn);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                let cs = re(c);
                let sp = re(s) * phase; // s * e^{i phi}
                let spc = sp.conj();

                // columns: A <- A J, with J = [[c, s e^{i phi}], [-s e^{-i phi}, c]]
                for r in 0..n {
                    let arp = m[(r, p)];
                    let arq = m[(r, q)];
                    m[(r, p)] = arp * cs - arq * spc;
                    m[(r, q)] = arp * sp + arq * cs;
                }
                // rows: A <- J^H A
                for cix in 0..n {
                    let apx = m[(p, cix)];
                    let aqx = m[(q, cix)];
                    m[(p, cix)] = apx * cs - aqx * sp;
                    m[(q, cix)] = apx * spc + aqx * cs;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * cs - vrq * spc;
                    v[(r, q)] = vrp * sp + vrq * cs;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).expect("finite eigenvalues"));
    let vals: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let vecs = Array2::from_shape_fn((n, n), |(r, c)| v[(r, order[c])]);
    (vals, vecs)
}

/// Vectorization-side transposition permutation index: `i + j*d -> j + i*d`.
pub fn transpose_index(k: usize, d: usize) -> usize {
    (k / d) + (k % d) * d
}

#[allow(dead_code)]
pub fn imat<T: Scalar>(n: usize) -> Array2<C<T>> {
    identity::<T>(n).mapv(|z| z * im::<T>())
}
