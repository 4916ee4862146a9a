//! Rank-1 constraint systems, a builder with gadgets, and the two statement
//! circuits: the model relation (dataset commits to `h_D`, training on it
//! yields a model hashing to `h_m`) and the data relation (training set and
//! unlearnt chain are consistent and disjoint).

mod builder;
pub mod gadgets;
mod statements;

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::field::FieldElement;
use crate::fixed::FixedPointError;

pub use builder::{Builder, LinearCombination, Num, Variable};
pub use statements::{
    build_data_circuit, build_model_circuit, data_public_inputs, model_public_inputs, synthesize_data_witness,
    synthesize_data_witness_lenient,
    synthesize_model_witness, DataShape, DataWitnessInput, ModelShape,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CircuitError {
    #[error("constraint system is already finalized")]
    BuildPhaseClosed,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("witness synthesis failed: {0}")]
    WitnessSynthesis(String),
    #[error("no value assigned to a wire while proving")]
    MissingValue,
}

impl From<FixedPointError> for CircuitError {
    fn from(e: FixedPointError) -> Self {
        CircuitError::WitnessSynthesis(e.to_string())
    }
}

/// Sparse linear combination over resolved wire indices; index 0 is the
/// constant one, then public inputs, then private wires.
pub type SparseRow = Vec<(usize, FieldElement)>;

/// `<a, z> * <b, z> = <c, z>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub a: SparseRow,
    pub b: SparseRow,
    pub c: SparseRow,
}

fn eval_row(row: &SparseRow, z: &[FieldElement]) -> FieldElement {
    row.iter().fold(FieldElement::ZERO, |acc, (i, k)| acc + *k * z[*i])
}

impl Constraint {
    pub fn is_satisfied(&self, z: &[FieldElement]) -> bool {
        eval_row(&self.a, z) * eval_row(&self.b, z) == eval_row(&self.c, z)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSystem {
    pub num_public: usize,
    pub num_private: usize,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitStats {
    pub constraint_count: usize,
    pub public_count: usize,
    pub private_count: usize,
}

/// Full assignment `[1, public.., private..]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub assignment: Vec<FieldElement>,
    /// Private wire indices (relative to the private block) whose value is
    /// not pinned by the constraints, e.g. the inverse hint of a zero.
    #[serde(default)]
    pub slack: Vec<usize>,
}

impl Witness {
    pub fn num_variables(&self) -> usize {
        self.assignment.len()
    }

    pub fn public_inputs(&self, num_public: usize) -> &[FieldElement] {
        &self.assignment[1..1 + num_public]
    }

    pub fn private_inputs(&self, num_public: usize) -> &[FieldElement] {
        &self.assignment[1 + num_public..]
    }
}

impl ConstraintSystem {
    pub fn num_variables(&self) -> usize {
        1 + self.num_public + self.num_private
    }

    pub fn stats(&self) -> CircuitStats {
        CircuitStats {
            constraint_count: self.constraints.len(),
            public_count: self.num_public,
            private_count: self.num_private,
        }
    }

    /// Index of the first violated constraint, if any. A witness of the wrong
    /// length or with a first entry other than one is rejected as constraint 0.
    pub fn first_unsatisfied(&self, w: &Witness) -> Option<usize> {
        let z = &w.assignment;
        if z.len() != self.num_variables() || z[0] != FieldElement::ONE {
            return Some(0);
        }
        self.constraints
            .par_iter()
            .position_first(|c| !c.is_satisfied(z))
    }

    /// Constraint indices mentioning each wire.
    pub fn occurrences(&self) -> Vec<Vec<usize>> {
        let mut occ = vec![Vec::new(); self.num_variables()];
        for (ci, c) in self.constraints.iter().enumerate() {
            for row in [&c.a, &c.b, &c.c] {
                for (i, _) in row {
                    if occ[*i].last() != Some(&ci) {
                        occ[*i].push(ci);
                    }
                }
            }
        }
        occ
    }

    /// SHA-256 over the canonical byte encoding of the constraint list.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"r1cs-v1");
        h.update((self.num_public as u64).to_be_bytes());
        h.update((self.num_private as u64).to_be_bytes());
        h.update((self.constraints.len() as u64).to_be_bytes());
        for c in &self.constraints {
            for row in [&c.a, &c.b, &c.c] {
                h.update((row.len() as u64).to_be_bytes());
                for (i, k) in row {
                    h.update((*i as u64).to_be_bytes());
                    h.update(k.to_bytes_be());
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Line-oriented text listing: a header, then one `a ; b ; c` row per
    /// constraint with terms written as `index:hexcoeff`.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "r1cs 1");
        let _ = writeln!(out, "public {}", self.num_public);
        let _ = writeln!(out, "private {}", self.num_private);
        let _ = writeln!(out, "constraints {}", self.constraints.len());
        for c in &self.constraints {
            let rows: Vec<String> = [&c.a, &c.b, &c.c]
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|(i, k)| format!("{i}:{}", k.to_hex().trim_start_matches('0')))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            let _ = writeln!(out, "{}", rows.join(" ; "));
        }
        out
    }

    /// Parses the output of [`ConstraintSystem::export_text`].
    pub fn import_text(s: &str) -> Result<Self, CircuitError> {
        let bad = |m: &str| CircuitError::ShapeMismatch(format!("malformed constraint listing: {m}"));
        let mut lines = s.lines();
        let mut header = |name: &str| -> Result<usize, CircuitError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let (k, v) = line.split_once(' ').ok_or_else(|| bad(line))?;
            if k != name {
                return Err(bad(line));
            }
            v.parse().map_err(|_| bad(line))
        };
        if header("r1cs")? != 1 {
            return Err(bad("unsupported version"));
        }
        let num_public = header("public")?;
        let num_private = header("private")?;
        let count = header("constraints")?;
        let parse_row = |r: &str| -> Result<SparseRow, CircuitError> {
            r.split_whitespace()
                .map(|t| {
                    let (i, k) = t.split_once(':').ok_or_else(|| bad(t))?;
                    let i: usize = i.parse().map_err(|_| bad(t))?;
                    let k = FieldElement::from_hex(&format!("{k:0>64}")).map_err(|_| bad(t))?;
                    Ok((i, k))
                })
                .collect()
        };
        let mut constraints = Vec::with_capacity(count);
        for line in lines.take(count) {
            let parts: Vec<&str> = line.split(';').collect();
            if parts.len() != 3 {
                return Err(bad(line));
            }
            constraints.push(Constraint {
                a: parse_row(parts[0])?,
                b: parse_row(parts[1])?,
                c: parse_row(parts[2])?,
            });
        }
        if constraints.len() != count {
            return Err(bad("constraint count"));
        }
        Ok(ConstraintSystem {
            num_public,
            num_private,
            constraints,
        })
    }
}

pub fn is_satisfied(cs: &ConstraintSystem, w: &Witness) -> bool {
    cs.first_unsatisfied(w).is_none()
}

/// Outcome of perturbing every private wire of an honest witness one at a time.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationReport {
    pub mutated: usize,
    pub rejected: usize,
    pub slack: usize,
    /// Non-slack private wires whose perturbation went unnoticed.
    pub escaped: Vec<usize>,
}

/// Adds `delta` to each private wire in turn and re-checks only the
/// constraints mentioning that wire.
pub fn mutation_scan(cs: &ConstraintSystem, w: &Witness, delta: FieldElement) -> MutationReport {
    let occ = cs.occurrences();
    let offset = 1 + cs.num_public;
    let slack: HashMap<usize, ()> = w.slack.iter().map(|&i| (i, ())).collect();
    let results: Vec<(usize, bool)> = (0..cs.num_private)
        .into_par_iter()
        .filter(|i| !slack.contains_key(i))
        .map_init(
            || w.assignment.clone(),
            |z, i| {
                let wire = offset + i;
                let old = z[wire];
                z[wire] = old + delta;
                let caught = occ[wire].iter().any(|&ci| !cs.constraints[ci].is_satisfied(z));
                z[wire] = old;
                (i, caught)
            },
        )
        .collect();
    let mut report = MutationReport {
        slack: slack.len(),
        ..Default::default()
    };
    for (i, caught) in results {
        report.mutated += 1;
        if caught {
            report.rejected += 1;
        } else {
            report.escaped.push(i);
        }
    }
    report
}
