//! Wei-Norman propagation: represent the time-ordered propagator of
//! dP/dt = (sum_i g_i(t) X_i) P as an ordered product of one-parameter
//! exponentials e^{u_1(t) X_1} ... e^{u_n(t) X_n}.
//!
//! The coordinates solve M(u) du/dt = g, where column j of M(u) holds the
//! basis coordinates of (prod_{i<j} Ad_{e^{u_i X_i}}) X_j. The chart is
//! local: when M(u) degenerates (condition number above
//! [`crate::defaults::CHART_COND_MAX`]) the integration aborts with the
//! failure time.

use ndarray::Array2;

use super::{LieBasis, LieError};
use crate::defaults::CHART_COND_MAX;
use crate::linalg;
use crate::scalar::{re, Scalar, C};

/// Coordinate track u(t): one coordinate vector per grid point, including
/// the zero initial condition.
#[derive(Debug, Clone)]
pub struct WeiNormanPath<T: Scalar = f64> {
    pub times: Vec<T>,
    pub coords: Vec<Vec<T>>,
}

/// prod_i e^{u_i X_i} in basis order.
pub fn product_of_exponentials<T: Scalar>(
    basis: &LieBasis<T>,
    coords: &[T],
) -> Result<Array2<C<T>>, LieError> {
    assert_eq!(coords.len(), basis.dimension(), "coordinate count must match basis");
    let side = basis.element(0).nrows();
    let mut prod = linalg::identity::<T>(side);
    for (u, x) in coords.iter().zip(basis.elements()) {
        let e = linalg::expm(&x.mapv(|z| z * re(*u))).map_err(|_| LieError::BadCap)?;
        prod = prod.dot(&e);
    }
    Ok(prod)
}

struct Chart<'a, T: Scalar> {
    basis: &'a LieBasis<T>,
}

impl<T: Scalar> Chart<'_, T> {
    /// Build M(u) and solve M(u) udot = g; errors when the chart degenerates.
    fn velocity(&self, u: &[T], g: &[T], time: T) -> Result<Vec<T>, LieError> {
        let n = self.basis.dimension();
        let mut m = Array2::from_elem((n, n), re(T::zero()));
        // cache e^{u_i X_i} and inverses for i < n-1 (column j needs i < j)
        let mut exps: Vec<(Array2<C<T>>, Array2<C<T>>)> = Vec::with_capacity(n.saturating_sub(1));
        for i in 0..n.saturating_sub(1) {
            let a = self.basis.element(i).mapv(|z| z * re(u[i]));
            let fwd = linalg::expm(&a).map_err(|_| LieError::ChartBreakdown {
                time: time.as_f64(),
                cond: f64::INFINITY,
            })?;
            let bwd = linalg::expm(&a.mapv(|z| -z)).map_err(|_| LieError::ChartBreakdown {
                time: time.as_f64(),
                cond: f64::INFINITY,
            })?;
            exps.push((fwd, bwd));
        }
        for j in 0..n {
            let mut y = self.basis.element(j).clone();
            for i in (0..j).rev() {
                let (fwd, bwd) = &exps[i];
                y = fwd.dot(&y).dot(bwd);
            }
            let (coords, _) = self.basis.coordinates(&y);
            for k in 0..n {
                m[(k, j)] = re(coords[k]);
            }
        }
        let cond = linalg::cond_one(&m).as_f64();
        if !(cond <= CHART_COND_MAX) {
            return Err(LieError::ChartBreakdown { time: time.as_f64(), cond });
        }
        let rhs = Array2::from_shape_fn((n, 1), |(i, _)| re(g[i]));
        let sol = linalg::solve(&m, &rhs).map_err(|_| LieError::ChartBreakdown {
            time: time.as_f64(),
            cond,
        })?;
        Ok((0..n).map(|i| sol[(i, 0)].re).collect())
    }
}

/// Integrate M(u) du/dt = g with classic fixed-step 4th-order Runge-Kutta.
///
/// `coeff_path[k]` is the coefficient vector of the instantaneous generator
/// on the step [k dt, (k+1) dt): the generator is treated as piecewise
/// constant on the grid.
pub fn wei_norman<T: Scalar>(
    basis: &LieBasis<T>,
    coeff_path: &[Vec<T>],
    dt: T,
) -> Result<WeiNormanPath<T>, LieError> {
    let n = basis.dimension();
    if !(dt > T::zero()) {
        return Err(LieError::BadTolerance { tol: dt.as_f64() });
    }
    for (index, g) in coeff_path.iter().enumerate() {
        if g.len() != n {
            return Err(LieError::CoefficientLength { index, expected: n, found: g.len() });
        }
    }

    let chart = Chart { basis };
    let mut u = vec![T::zero(); n];
    let mut times = Vec::with_capacity(coeff_path.len() + 1);
    let mut coords = Vec::with_capacity(coeff_path.len() + 1);
    times.push(T::zero());
    coords.push(u.clone());

    let half = T::cast(0.5);
    let sixth = T::one() / T::cast(6.0);
    for (k, g) in coeff_path.iter().enumerate() {
        let t = dt * T::cast(k as f64);
        let k1 = chart.velocity(&u, g, t)?;
        let u2: Vec<T> = u.iter().zip(&k1).map(|(&ui, &ki)| ui + half * dt * ki).collect();
        let k2 = chart.velocity(&u2, g, t)?;
        let u3: Vec<T> = u.iter().zip(&k2).map(|(&ui, &ki)| ui + half * dt * ki).collect();
        let k3 = chart.velocity(&u3, g, t)?;
        let u4: Vec<T> = u.iter().zip(&k3).map(|(&ui, &ki)| ui + dt * ki).collect();
        let k4 = chart.velocity(&u4, g, t)?;
        for i in 0..n {
            u[i] = u[i] + dt * sixth * (k1[i] + (k2[i] + k2[i]) + (k3[i] + k3[i]) + k4[i]);
        }
        times.push(dt * T::cast((k + 1) as f64));
        coords.push(u.clone());
    }
    Ok(WeiNormanPath { times, coords })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie_engine::closure;
    use crate::operators::Operator;
    use crate::superops::{k_strat, MeasurementScheme, ModelSpec};

    type Op = Operator<f64>;

    #[test]
    fn one_dimensional_chart_integrates_linearly() {
        let x = Op::pauli_z().scale_re(1.0 / 2f64.sqrt());
        let report = closure(&[x.into_mat()], 1e-9, 4).unwrap();
        let basis = report.basis().unwrap().clone();
        let g = vec![vec![0.7]; 100];
        let path = wei_norman(&basis, &g, 0.01).unwrap();
        let u_end = path.coords.last().unwrap()[0];
        assert!((u_end - 0.7).abs() < 1e-12);
    }

    #[test]
    fn commuting_basis_reduces_to_quadrature() {
        // two commuting projectors: M(u) = I, so u_i = integral of g_i
        let gens = vec![
            Op::matrix_unit(2, 0, 0).into_mat(),
            Op::matrix_unit(2, 1, 1).into_mat(),
        ];
        let report = closure(&gens, 1e-9, 8).unwrap();
        let basis = report.basis().unwrap().clone();
        assert_eq!(basis.dimension(), 2);
        let steps = 50;
        let dt = 0.02;
        let g: Vec<Vec<f64>> = (0..steps)
            .map(|k| vec![(k as f64 * dt).sin(), 1.0 - 0.3 * (k as f64 * dt)])
            .collect();
        let path = wei_norman(&basis, &g, dt).unwrap();
        // piecewise-constant quadrature oracle
        let mut int0 = 0.0;
        let mut int1 = 0.0;
        for gk in &g {
            int0 += gk[0] * dt;
            int1 += gk[1] * dt;
        }
        let end = path.coords.last().unwrap();
        assert!((end[0] - int0).abs() < 1e-12);
        assert!((end[1] - int1).abs() < 1e-12);
    }

    #[test]
    fn qubit_solvable_algebra_reproduces_time_ordered_propagator() {
        // the 2-dimensional operator algebra of the decay model, driven by
        // a piecewise-constant coefficient path
        let model = ModelSpec::new(vec![Op::sigma_minus()], Op::zeros(2)).unwrap();
        let scheme = MeasurementScheme::complete(vec![0.0]);
        let k = k_strat(&model, &scheme).unwrap();
        let report = closure(
            &[k.mat().clone(), Op::sigma_minus().into_mat()],
            1e-9,
            8,
        )
        .unwrap();
        let basis = report.basis().unwrap().clone();
        assert_eq!(basis.dimension(), 2);

        let dt = 1e-3;
        let steps = 400;
        let g: Vec<Vec<f64>> = (0..steps)
            .map(|s| {
                let t = s as f64 * dt;
                vec![0.5, (7.0 * t).cos() * 1.5]
            })
            .collect();
        let path = wei_norman(&basis, &g, dt).unwrap();

        // direct time-ordered propagator with the same piecewise-constant g
        let side = 2;
        let mut oracle = linalg::identity::<f64>(side);
        for gk in &g {
            let mut a = Array2::from_elem((side, side), re(0.0));
            for (i, &gi) in gk.iter().enumerate() {
                a = a + basis.element(i).mapv(|z| z * re(gi * dt));
            }
            oracle = linalg::expm(&a).unwrap().dot(&oracle);
        }
        let wn = product_of_exponentials(&basis, path.coords.last().unwrap()).unwrap();
        let defect = linalg::fro_norm(&(&wn - &oracle));
        assert!(defect < 1e-6, "propagator defect {defect}");
    }

    #[test]
    fn chart_breakdown_fires_at_gimbal_lock() {
        // su(2): rotate straight to the singular surface of the chart and
        // then ask for motion along the third axis
        let s = 1.0 / 2f64.sqrt();
        let gens = vec![
            Op::pauli_x().scale(C::new(0.0, s)).into_mat(),
            Op::pauli_y().scale(C::new(0.0, s)).into_mat(),
            Op::pauli_z().scale(C::new(0.0, s)).into_mat(),
        ];
        let basis = closure(&gens, 1e-9, 8).unwrap().basis().unwrap().clone();
        let u_star = std::f64::consts::FRAC_PI_2 / 2f64.sqrt();
        let steps = 1000;
        let dt = u_star / steps as f64;
        let mut g: Vec<Vec<f64>> = vec![vec![0.0, 1.0, 0.0]; steps];
        g.extend(vec![vec![0.0, 0.0, 1.0]; 10]);
        let err = wei_norman(&basis, &g, dt).unwrap_err();
        match err {
            LieError::ChartBreakdown { time, cond } => {
                assert!((time - u_star).abs() < 3.0 * dt, "fired at t = {time}");
                assert!(cond > 1e12);
            }
            other => panic!("expected chart breakdown, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_coefficient_length() {
        let basis = closure(&[Op::pauli_x().into_mat()], 1e-9, 4)
            .unwrap()
            .basis()
            .unwrap()
            .clone();
        let err = wei_norman(&basis, &[vec![1.0, 2.0]], 0.1).unwrap_err();
        assert!(matches!(err, LieError::CoefficientLength { .. }));
    }
}
