use std::cmp::Ordering;

use crate::field::FieldElement;

use super::{CircuitError, Constraint, ConstraintSystem, SparseRow, Witness};

/// A wire before index resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variable {
    One,
    Public(usize),
    Private(usize),
}

/// Sorted, merged sparse combination with no zero coefficients.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearCombination {
    terms: Vec<(Variable, FieldElement)>,
}

impl LinearCombination {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_var(v: Variable) -> Self {
        LinearCombination {
            terms: vec![(v, FieldElement::ONE)],
        }
    }

    pub fn constant(k: FieldElement) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        LinearCombination {
            terms: vec![(Variable::One, k)],
        }
    }

    pub fn terms(&self) -> &[(Variable, FieldElement)] {
        &self.terms
    }

    /// The value if the combination mentions only the constant wire.
    pub fn constant_value(&self) -> Option<FieldElement> {
        match self.terms.as_slice() {
            [] => Some(FieldElement::ZERO),
            [(Variable::One, k)] => Some(*k),
            _ => None,
        }
    }

    pub fn add_scaled(&self, other: &Self, k: FieldElement) -> Self {
        if k.is_zero() {
            return self.clone();
        }
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let ord = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    out.push(self.terms[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    let (v, c) = other.terms[j];
                    out.push((v, c * k));
                    j += 1;
                }
                Ordering::Equal => {
                    let (v, c) = self.terms[i];
                    let s = c + other.terms[j].1 * k;
                    if !s.is_zero() {
                        out.push((v, s));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        LinearCombination { terms: out }
    }

    pub fn scale(&self, k: FieldElement) -> Self {
        if k.is_zero() {
            return Self::zero();
        }
        LinearCombination {
            terms: self.terms.iter().map(|(v, c)| (*v, *c * k)).collect(),
        }
    }
}

/// A linear combination together with its value when one is known (always
/// for constants, for everything else only while proving).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Num {
    lc: LinearCombination,
    value: Option<FieldElement>,
}

fn lift2(a: Option<FieldElement>, b: Option<FieldElement>, f: impl FnOnce(FieldElement, FieldElement) -> FieldElement) -> Option<FieldElement> {
    Some(f(a?, b?))
}

impl Num {
    pub fn constant(k: FieldElement) -> Self {
        Num {
            lc: LinearCombination::constant(k),
            value: Some(k),
        }
    }

    pub fn zero() -> Self {
        Self::constant(FieldElement::ZERO)
    }

    pub fn one() -> Self {
        Self::constant(FieldElement::ONE)
    }

    pub fn lc(&self) -> &LinearCombination {
        &self.lc
    }

    pub fn value(&self) -> Option<FieldElement> {
        self.value
    }

    pub fn as_constant(&self) -> Option<FieldElement> {
        self.lc.constant_value()
    }

    /// The single private wire this number is, if it is exactly one.
    pub fn as_private(&self) -> Option<usize> {
        match self.lc.terms() {
            [(Variable::Private(i), k)] if *k == FieldElement::ONE => Some(*i),
            _ => None,
        }
    }

    pub fn add(&self, o: &Num) -> Num {
        Num {
            lc: self.lc.add_scaled(&o.lc, FieldElement::ONE),
            value: lift2(self.value, o.value, |a, b| a + b),
        }
    }

    pub fn sub(&self, o: &Num) -> Num {
        Num {
            lc: self.lc.add_scaled(&o.lc, -FieldElement::ONE),
            value: lift2(self.value, o.value, |a, b| a - b),
        }
    }

    pub fn scale(&self, k: FieldElement) -> Num {
        Num {
            lc: self.lc.scale(k),
            value: self.value.map(|v| v * k),
        }
    }

    pub fn add_constant(&self, k: FieldElement) -> Num {
        self.add(&Num::constant(k))
    }

    pub fn neg(&self) -> Num {
        self.scale(-FieldElement::ONE)
    }

    /// `1 - self`.
    pub fn not(&self) -> Num {
        Num::one().sub(self)
    }
}

/// Collects wires and constraints. In setup mode no values are computed; in
/// proving mode every wire gets a value and recording constraints is optional.
#[derive(Debug)]
pub struct Builder {
    proving: bool,
    record: bool,
    closed: bool,
    public_values: Vec<FieldElement>,
    private_values: Vec<FieldElement>,
    num_public: usize,
    num_private: usize,
    constraints: Vec<[LinearCombination; 3]>,
    constraint_count: usize,
    slack: Vec<usize>,
    fallback: Option<FieldElement>,
    failures: Vec<String>,
}

impl Builder {
    fn new(proving: bool, record: bool) -> Self {
        Builder {
            proving,
            record,
            closed: false,
            public_values: Vec::new(),
            private_values: Vec::new(),
            num_public: 0,
            num_private: 0,
            constraints: Vec::new(),
            constraint_count: 0,
            slack: Vec::new(),
            fallback: None,
            failures: Vec::new(),
        }
    }

    /// Shape-only building, as used for setup.
    pub fn setup() -> Self {
        Self::new(false, true)
    }

    /// Builds with values; `record = false` keeps only the assignment.
    pub fn prover(record: bool) -> Self {
        Self::new(true, record)
    }

    /// Proving mode that assigns `fallback` wherever witness computation
    /// fails instead of aborting. The result is generally unsatisfying; it
    /// exists to probe what a cheating prover could assign.
    pub fn lenient(fallback: FieldElement) -> Self {
        let mut b = Self::new(true, true);
        b.fallback = Some(fallback);
        b
    }

    /// Witness-computation failures replaced by the fallback value.
    pub fn failures(&self) -> &[String] {
        &self.failures
    }

    fn compute(&mut self, f: impl FnOnce() -> Result<FieldElement, CircuitError>) -> Result<FieldElement, CircuitError> {
        match (f(), self.fallback) {
            (Ok(v), _) => Ok(v),
            (Err(CircuitError::WitnessSynthesis(m)), Some(v)) => {
                self.failures.push(m);
                Ok(v)
            }
            (Err(e), _) => Err(e),
        }
    }

    pub fn is_proving(&self) -> bool {
        self.proving
    }

    pub fn constraint_count(&self) -> usize {
        self.constraint_count
    }

    fn open(&self) -> Result<(), CircuitError> {
        if self.closed {
            Err(CircuitError::BuildPhaseClosed)
        } else {
            Ok(())
        }
    }

    pub fn alloc_public(&mut self, f: impl FnOnce() -> Result<FieldElement, CircuitError>) -> Result<Num, CircuitError> {
        self.open()?;
        let value = if self.proving {
            let v = self.compute(f)?;
            self.public_values.push(v);
            Some(v)
        } else {
            None
        };
        let var = Variable::Public(self.num_public);
        self.num_public += 1;
        Ok(Num {
            lc: LinearCombination::from_var(var),
            value,
        })
    }

    pub fn alloc_private(&mut self, f: impl FnOnce() -> Result<FieldElement, CircuitError>) -> Result<Num, CircuitError> {
        self.open()?;
        let value = if self.proving {
            let v = self.compute(f)?;
            self.private_values.push(v);
            Some(v)
        } else {
            None
        };
        let var = Variable::Private(self.num_private);
        self.num_private += 1;
        Ok(Num {
            lc: LinearCombination::from_var(var),
            value,
        })
    }

    /// Records that `n` (a bare private wire) is unconstrained in this witness.
    pub fn mark_slack(&mut self, n: &Num) {
        if let Some(i) = n.as_private() {
            self.slack.push(i);
        }
    }

    pub fn enforce(&mut self, a: &Num, b: &Num, c: &Num) -> Result<(), CircuitError> {
        self.open()?;
        if let (Some(x), Some(y), Some(z)) = (a.as_constant(), b.as_constant(), c.as_constant()) {
            if x * y != z {
                return Err(CircuitError::WitnessSynthesis("constant constraint is violated".into()));
            }
            return Ok(());
        }
        self.constraint_count += 1;
        if self.record {
            self.constraints.push([a.lc.clone(), b.lc.clone(), c.lc.clone()]);
        }
        Ok(())
    }

    pub fn enforce_equal(&mut self, a: &Num, b: &Num) -> Result<(), CircuitError> {
        self.enforce(&a.sub(b), &Num::one(), &Num::zero())
    }

    pub fn enforce_boolean(&mut self, x: &Num) -> Result<(), CircuitError> {
        self.enforce(x, &x.not(), &Num::zero())
    }

    fn resolve(&self, lc: &LinearCombination) -> SparseRow {
        lc.terms()
            .iter()
            .map(|(v, k)| {
                let i = match v {
                    Variable::One => 0,
                    Variable::Public(i) => 1 + i,
                    Variable::Private(i) => 1 + self.num_public + i,
                };
                (i, *k)
            })
            .collect()
    }

    /// Closes the building phase and returns the constraint system.
    pub fn finalize_system(&mut self) -> Result<ConstraintSystem, CircuitError> {
        self.open()?;
        self.closed = true;
        let constraints = std::mem::take(&mut self.constraints)
            .iter()
            .map(|[a, b, c]| Constraint {
                a: self.resolve(a),
                b: self.resolve(b),
                c: self.resolve(c),
            })
            .collect();
        Ok(ConstraintSystem {
            num_public: self.num_public,
            num_private: self.num_private,
            constraints,
        })
    }

    /// The full assignment; only available while proving.
    pub fn witness(&self) -> Result<Witness, CircuitError> {
        if !self.proving {
            return Err(CircuitError::MissingValue);
        }
        let mut assignment = Vec::with_capacity(1 + self.num_public + self.num_private);
        assignment.push(FieldElement::ONE);
        assignment.extend_from_slice(&self.public_values);
        assignment.extend_from_slice(&self.private_values);
        Ok(Witness {
            assignment,
            slack: self.slack.clone(),
        })
    }

    pub fn finalize(mut self) -> Result<(ConstraintSystem, Witness), CircuitError> {
        let cs = self.finalize_system()?;
        let w = self.witness()?;
        Ok((cs, w))
    }
}
