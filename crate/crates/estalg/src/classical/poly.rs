//! Sparse multivariate polynomials with exact rational coefficients.
//!
//! Monomials are exponent vectors ordered graded-lexicographically, so every
//! map iteration and echelon decision downstream is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Exact rational scalar for the classical layer.
pub type Rat = BigRational;

pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(BigInt::from(num), BigInt::from(den))
}

pub fn rat_int(num: i64) -> Rat {
    Rat::from_integer(BigInt::from(num))
}

/// Exponent multi-index of fixed arity, graded-lex ordered.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn unit(n_vars: usize) -> Self {
        Monomial(vec![0; n_vars])
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        let mut m = vec![0; n_vars];
        m[i] += 1;
        Monomial(m)
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Self) -> Self {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.total()
            .cmp(&other.total())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Polynomial as a monomial -> coefficient map with no stored zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Poly {
    n_vars: usize,
    terms: BTreeMap<Monomial, Rat>,
}

impl Poly {
    pub fn zero(n_vars: usize) -> Self {
        Poly { n_vars, terms: BTreeMap::new() }
    }

    pub fn constant(n_vars: usize, c: Rat) -> Self {
        let mut p = Poly::zero(n_vars);
        p.add_term(Monomial::unit(n_vars), c);
        p
    }

    pub fn var(n_vars: usize, i: usize) -> Self {
        assert!(i < n_vars, "variable index out of range");
        let mut p = Poly::zero(n_vars);
        p.add_term(Monomial::var(n_vars, i), Rat::one());
        p
    }

    pub fn from_terms(n_vars: usize, terms: impl IntoIterator<Item = (Vec<u32>, Rat)>) -> Self {
        let mut p = Poly::zero(n_vars);
        for (powers, c) in terms {
            assert_eq!(powers.len(), n_vars, "multi-index arity mismatch");
            p.add_term(Monomial(powers), c);
        }
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(Monomial::total).max()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rat)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> Rat {
        self.terms.get(m).cloned().unwrap_or_else(Rat::zero)
    }

    pub fn add_term(&mut self, m: Monomial, c: Rat) {
        if c.is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(m) {
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
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        Poly { n_vars: self.n_vars, terms: self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect() }
    }

    pub fn scale(&self, s: &Rat) -> Self {
        if s.is_zero() {
            return Poly::zero(self.n_vars);
        }
        Poly {
            n_vars: self.n_vars,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c.clone() * s.clone())).collect(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.n_vars, other.n_vars, "variable count mismatch");
        let mut out = Poly::zero(self.n_vars);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        out
    }

    /// Partial derivative with respect to variable `i`.
    pub fn partial(&self, i: usize) -> Self {
        assert!(i < self.n_vars, "variable index out of range");
        let mut out = Poly::zero(self.n_vars);
        for (m, c) in &self.terms {
            let k = m.0[i];
            if k == 0 {
                continue;
            }
            let mut powers = m.0.clone();
            powers[i] -= 1;
            out.add_term(Monomial(powers), c.clone() * rat_int(k as i64));
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
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
            let trivial_mono = m.total() == 0;
            if !ac.is_one() || trivial_mono {
                write!(f, "{ac}")?;
            }
            for (i, &p) in m.0.iter().enumerate() {
                if p == 1 {
                    write!(f, " x{i}")?;
                } else if p > 1 {
                    write!(f, " x{i}^{p}")?;
                }
            }
        }
        Ok(())
    }
}
