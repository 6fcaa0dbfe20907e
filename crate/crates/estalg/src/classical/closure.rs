//! Exact bracket closure of polynomial differential operators over Q.
//!
//! Linear independence is decided by echelon reduction on coefficient
//! vectors in the graded-lex term order: each basis element is normalized to
//! a unit leading coefficient, and candidates are reduced against the basis
//! in descending leading-key order before admission. No tolerances anywhere.

use super::diffop::PolyDiffOp;
use super::{ClassicalError, ClassicalModel};
use crate::defaults::DEGREE_GUARD;
use num_traits::Zero;

#[derive(Debug, Clone)]
pub enum SymbolicOutcome {
    Finite { basis: Vec<PolyDiffOp> },
    CapExceeded { dimension: usize },
}

#[derive(Debug, Clone)]
pub struct SymbolicClosureReport {
    pub outcome: SymbolicOutcome,
    /// Basis dimension after the generator stage and after each sweep.
    pub growth_trace: Vec<usize>,
    pub bracket_count: usize,
}

impl SymbolicClosureReport {
    pub fn dimension(&self) -> usize {
        match &self.outcome {
            SymbolicOutcome::Finite { basis } => basis.len(),
            SymbolicOutcome::CapExceeded { dimension } => *dimension,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.outcome, SymbolicOutcome::Finite { .. })
    }

    pub fn basis(&self) -> Option<&[PolyDiffOp]> {
        match &self.outcome {
            SymbolicOutcome::Finite { basis } => Some(basis),
            SymbolicOutcome::CapExceeded { .. } => None,
        }
    }
}

struct Echelon {
    elements: Vec<PolyDiffOp>,
    /// Indices into `elements`, sorted by leading key descending.
    by_leading: Vec<usize>,
}

impl Echelon {
    fn new() -> Self {
        Echelon { elements: Vec::new(), by_leading: Vec::new() }
    }

    fn len(&self) -> usize {
        self.elements.len()
    }

    /// Fully reduce `op` against the basis (single descending pass is
    /// complete because each element's keys are bounded by its leading key).
    fn reduce(&self, mut op: PolyDiffOp) -> PolyDiffOp {
        for &idx in &self.by_leading {
            let b = &self.elements[idx];
            let lead = b.leading_key().expect("basis elements are nonzero");
            let c = op.coeff(lead);
            if !c.is_zero() {
                op = op.sub(&b.scale(&c));
            }
        }
        op
    }

    /// Insert a reduced nonzero element, normalizing its leading coefficient.
    fn insert(&mut self, op: PolyDiffOp) {
        let lead_coeff = {
            let lead = op.leading_key().expect("inserting a nonzero element");
            op.coeff(lead)
        };
        let normalized = op.scale(&(num_rational::BigRational::from_integer(1.into()) / lead_coeff));
        let lead = normalized.leading_key().unwrap().clone();
        let pos = self
            .by_leading
            .partition_point(|&i| self.elements[i].leading_key().unwrap() > &lead);
        self.elements.push(normalized);
        self.by_leading.insert(pos, self.elements.len() - 1);
    }
}

/// Bracket closure of an explicit generator list; `cap` bounds the basis
/// dimension and the degree guard aborts runaway symbol growth.
pub fn closure_of_ops(
    generators: &[PolyDiffOp],
    cap: usize,
) -> Result<SymbolicClosureReport, ClassicalError> {
    if cap < 2 {
        return Err(ClassicalError::CapTooSmall { cap });
    }
    let mut basis = Echelon::new();
    let mut growth_trace = Vec::new();
    let mut bracket_count = 0usize;

    for g in generators {
        guard_degree(g)?;
        let r = basis.reduce(g.clone());
        if !r.is_zero() {
            basis.insert(r);
            if basis.len() > cap {
                growth_trace.push(basis.len());
                return Ok(SymbolicClosureReport {
                    outcome: SymbolicOutcome::CapExceeded { dimension: basis.len() },
                    growth_trace,
                    bracket_count,
                });
            }
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
                let br = basis.elements[i].bracket(&basis.elements[j]);
                bracket_count += 1;
                guard_degree(&br)?;
                let r = basis.reduce(br);
                if !r.is_zero() {
                    basis.insert(r);
                    if basis.len() > cap {
                        growth_trace.push(basis.len());
                        return Ok(SymbolicClosureReport {
                            outcome: SymbolicOutcome::CapExceeded { dimension: basis.len() },
                            growth_trace,
                            bracket_count,
                        });
                    }
                }
            }
        }
        processed = sweep_start;
        growth_trace.push(basis.len());
    }

    Ok(SymbolicClosureReport {
        outcome: SymbolicOutcome::Finite { basis: basis.elements },
        growth_trace,
        bracket_count,
    })
}

fn guard_degree(op: &PolyDiffOp) -> Result<(), ClassicalError> {
    let degree = op.total_degree();
    if degree > DEGREE_GUARD {
        return Err(ClassicalError::DegreeGuard { degree, limit: DEGREE_GUARD });
    }
    Ok(())
}

/// The classical estimation algebra Lie{L0*, h_1, ..., h_p}.
pub fn classical_closure(
    model: &ClassicalModel,
    cap: usize,
) -> Result<SymbolicClosureReport, ClassicalError> {
    closure_of_ops(&super::estimation_generators(model), cap)
}
