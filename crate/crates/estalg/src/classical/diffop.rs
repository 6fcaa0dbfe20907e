//! Polynomial differential operators sum c_{j,k} x^j d^k with exact rational
//! coefficients, composed through the Leibniz expansion
//!
//!   d^b o x^c = sum_{m <= min(b,c)} C(b, m) c!/(c-m)! x^{c-m} d^{b-m}
//!
//! applied per variable.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use super::poly::{Monomial, Poly, Rat};

/// (monomial, derivative) multi-index pair addressing one term x^j d^k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermKey {
    pub xpow: Monomial,
    pub dpow: Monomial,
}

impl TermKey {
    pub fn total(&self) -> u32 {
        self.xpow.total() + self.dpow.total()
    }
}

impl Ord for TermKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total()
            .cmp(&other.total())
            .then_with(|| self.xpow.cmp(&other.xpow))
            .then_with(|| self.dpow.cmp(&other.dpow))
    }
}

impl PartialOrd for TermKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Differential operator with polynomial coefficients, stored sparsely with
/// no zero coefficients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolyDiffOp {
    n_vars: usize,
    terms: BTreeMap<TermKey, Rat>,
}

impl PolyDiffOp {
    pub fn zero(n_vars: usize) -> Self {
        PolyDiffOp { n_vars, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, c: Rat) -> Self {
        let mut op = PolyDiffOp::zero(n_vars);
        op.add_term(TermKey { xpow: Monomial::unit(n_vars), dpow: Monomial::unit(n_vars) }, c);
        op
    }

    /// Multiplication operator f -> p f.
    pub fn from_poly(p: &Poly) -> Self {
        let n = p.n_vars();
        let mut op = PolyDiffOp::zero(n);
        for (m, c) in p.terms() {
            op.add_term(TermKey { xpow: m.clone(), dpow: Monomial::unit(n) }, c.clone());
        }
        op
    }

    /// d/dx_i.
    pub fn partial(n_vars: usize, i: usize) -> Self {
        let mut op = PolyDiffOp::zero(n_vars);
        op.add_term(
            TermKey { xpow: Monomial::unit(n_vars), dpow: Monomial::var(n_vars, i) },
            Rat::one(),
        );
        op
    }

    pub fn laplacian(n_vars: usize) -> Self {
        let mut op = PolyDiffOp::zero(n_vars);
        for i in 0..n_vars {
            let mut d2 = vec![0; n_vars];
            d2[i] = 2;
            op.add_term(TermKey { xpow: Monomial::unit(n_vars), dpow: Monomial(d2) }, Rat::one());
        }
        op
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&TermKey, &Rat)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, key: &TermKey) -> Rat {
        self.terms.get(key).cloned().unwrap_or_else(Rat::zero)
    }

    /// Largest term key under the graded order (the echelon pivot).
    pub fn leading_key(&self) -> Option<&TermKey> {
        self.terms.keys().next_back()
    }

    /// Maximal total degree |j| + |k| over stored terms.
    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(TermKey::total).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, key: TermKey, c: Rat) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(key) {
            Entry::Vacant(e) => {
                e.insert(c);
            }
            Entry::Occupied(mut e) => {
                let sum = e.get().clone() + c;
                if sum.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = sum;
                }
            }
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let mut out = self.clone();
        for (k, c) in &other.terms {
            out.add_term(k.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-Rat::one()))
    }

    pub fn scale(&self, s: &Rat) -> Self {
        if s.is_zero() {
            return PolyDiffOp::zero(self.n_vars);
        }
        PolyDiffOp {
            n_vars: self.n_vars,
            terms: self.terms.iter().map(|(k, c)| (k.clone(), c.clone() * s.clone())).collect(),
        }
    }

    /// Operator composition (self after other).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let n = self.n_vars;
        let mut out = PolyDiffOp::zero(n);
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                // x^{a_x} d^{a_d} o x^{b_x} d^{b_d}: push d^{a_d} through x^{b_x}
                let bounds: Vec<u32> = (0..n).map(|i| ka.dpow.0[i].min(kb.xpow.0[i])).collect();
                let mut m = vec![0u32; n];
                loop {
                    let mut weight = BigInt::one();
                    for i in 0..n {
                        weight *= binomial(ka.dpow.0[i], m[i]) * falling(kb.xpow.0[i], m[i]);
                    }
                    let xpow = Monomial(
                        (0..n).map(|i| ka.xpow.0[i] + kb.xpow.0[i] - m[i]).collect(),
                    );
                    let dpow = Monomial(
                        (0..n).map(|i| ka.dpow.0[i] - m[i] + kb.dpow.0[i]).collect(),
                    );
                    let c = ca.clone() * cb.clone() * Rat::from_integer(weight);
                    out.add_term(TermKey { xpow, dpow }, c);

                    // odometer over 0 <= m_i <= bounds_i
                    let mut carry = true;
                    for i in 0..n {
                        if !carry {
                            break;
                        }
                        if m[i] < bounds[i] {
                            m[i] += 1;
                            carry = false;
                        } else {
                            m[i] = 0;
                        }
                    }
                    if carry {
                        break;
                    }
                }
            }
        }
        out
    }

    /// Lie bracket PQ - QP.
    pub fn bracket(&self, other: &Self) -> Self {
        self.compose(other).sub(&other.compose(self))
    }

    /// Action on a polynomial: all derivatives applied, then multiplied.
    pub fn apply(&self, f: &Poly) -> Poly {
        assert_eq!(self.n_vars, f.n_vars(), "variable count mismatch");
        let mut out = Poly::zero(self.n_vars);
        for (k, c) in &self.terms {
            let mut g = f.clone();
            for (i, &reps) in k.dpow.0.iter().enumerate() {
                for _ in 0..reps {
                    g = g.partial(i);
                }
            }
            let mut xmono = Poly::zero(self.n_vars);
            xmono.add_term(k.xpow.clone(), c.clone());
            out = out.add(&xmono.mul(&g));
        }
        out
    }
}

fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut num = BigInt::one();
    let mut den = BigInt::one();
    for i in 0..k {
        num *= BigInt::from(n - i);
        den *= BigInt::from(i + 1);
    }
    num / den
}

/// Falling factorial n (n-1) ... (n-k+1).
fn falling(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    let mut out = BigInt::one();
    for i in 0..k {
        out *= BigInt::from(n - i);
    }
    out
}

impl fmt::Display for PolyDiffOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.terms.iter().rev() {
            if first {
                if c.is_negative() {
                    write!(f, "-")?;
                }
                first = false;
            } else if c.is_negative() {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let ac = c.abs();
            if !ac.is_one() || k.total() == 0 {
                write!(f, "{ac}")?;
            }
            for (i, &p) in k.xpow.0.iter().enumerate() {
                if p == 1 {
                    write!(f, " x{i}")?;
                } else if p > 1 {
                    write!(f, " x{i}^{p}")?;
                }
            }
            for (i, &p) in k.dpow.0.iter().enumerate() {
                if p == 1 {
                    write!(f, " d{i}")?;
                } else if p > 1 {
                    write!(f, " d{i}^{p}")?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::poly::{rat, rat_int};
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn x(n: usize, i: usize) -> PolyDiffOp {
        PolyDiffOp::from_poly(&Poly::var(n, i))
    }

    fn random_op(rng: &mut ChaCha12Rng, n_vars: usize, max_deg: u32, terms: usize) -> PolyDiffOp {
        let mut op = PolyDiffOp::zero(n_vars);
        for _ in 0..terms {
            let xpow = Monomial((0..n_vars).map(|_| rng.gen_range(0..=max_deg)).collect());
            let dpow = Monomial((0..n_vars).map(|_| rng.gen_range(0..=max_deg)).collect());
            let c = rat(rng.gen_range(-6i64..=6), rng.gen_range(1i64..=4));
            op.add_term(TermKey { xpow, dpow }, c);
        }
        op
    }

    #[test]
    fn canonical_commutation_relation() {
        // [d, x] = 1 in one variable
        let d = PolyDiffOp::partial(1, 0);
        let lhs = d.bracket(&x(1, 0));
        assert_eq!(lhs, PolyDiffOp::constant(1, rat_int(1)));
    }

    #[test]
    fn second_derivative_bracket() {
        // [d^2, x] = 2 d
        let d = PolyDiffOp::partial(1, 0);
        let d2 = d.compose(&d);
        let lhs = d2.bracket(&x(1, 0));
        assert_eq!(lhs, d.scale(&rat_int(2)));
    }

    #[test]
    fn self_bracket_vanishes() {
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        for _ in 0..10 {
            let p = random_op(&mut rng, 2, 3, 4);
            assert!(p.bracket(&p).is_zero());
        }
    }

    #[test]
    fn jacobi_identity_holds_exactly() {
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        for n_vars in [1usize, 2] {
            for _ in 0..6 {
                let p = random_op(&mut rng, n_vars, 3, 3);
                let q = random_op(&mut rng, n_vars, 3, 3);
                let r = random_op(&mut rng, n_vars, 3, 3);
                let jacobi = p
                    .bracket(&q.bracket(&r))
                    .add(&q.bracket(&r.bracket(&p)))
                    .add(&r.bracket(&p.bracket(&q)));
                assert!(jacobi.is_zero(), "Jacobi defect: {jacobi}");
            }
        }
    }

    #[test]
    fn composition_matches_application() {
        // (P o Q) f = P (Q f) on a concrete polynomial
        let mut rng = ChaCha12Rng::seed_from_u64(52);
        let p = random_op(&mut rng, 2, 2, 3);
        let q = random_op(&mut rng, 2, 2, 3);
        let f = Poly::from_terms(
            2,
            vec![
                (vec![2, 1], rat(3, 2)),
                (vec![0, 3], rat(-1, 5)),
                (vec![1, 0], rat_int(2)),
            ],
        );
        let lhs = p.compose(&q).apply(&f);
        let rhs = p.apply(&q.apply(&f));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn leading_key_is_graded_maximum() {
        let d = PolyDiffOp::partial(1, 0);
        let op = d.compose(&d).add(&x(1, 0)).add(&PolyDiffOp::constant(1, rat_int(7)));
        let lead = op.leading_key().unwrap();
        assert_eq!(lead.dpow.0, vec![2]);
        assert_eq!(op.total_degree(), 2);
    }
}
