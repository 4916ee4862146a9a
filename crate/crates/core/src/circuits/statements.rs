use serde::{Deserialize, Serialize};

use crate::field::FieldElement;
use crate::hashing::{self, poseidon, HashDigest, HashedSet};
use crate::sigmoid::SigmoidPoly;
use crate::training::{sgd_step, Dataset, TrainConfig};

use super::gadgets::{self, CircuitArith};
use super::{Builder, CircuitError, ConstraintSystem, Num, Witness};

/// Shape of the model relation: training configuration plus dataset capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub capacity: usize,
    pub train: TrainConfig,
}

/// Shape of the data relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShape {
    /// Slots for `H_D`.
    pub data_capacity: usize,
    /// Slots for `H_U` before the update.
    pub unlearnt_capacity: usize,
    /// Slots for digests appended to `H_U` by the update.
    pub add_capacity: usize,
}

/// Private input of the data relation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataWitnessInput {
    pub h_d: HashedSet,
    pub h_u_prev: HashedSet,
    pub h_u_add: HashedSet,
}

/// `(h_m, h_D)`.
pub fn model_public_inputs(h_m: HashDigest, h_d: HashDigest) -> Vec<FieldElement> {
    vec![h_m.0, h_d.0]
}

/// `(h_D, h_U_prev, h_U)`.
pub fn data_public_inputs(h_d: HashDigest, h_u_prev: HashDigest, h_u: HashDigest) -> Vec<FieldElement> {
    vec![h_d.0, h_u_prev.0, h_u.0]
}

fn alloc_publics(b: &mut Builder, n: usize, values: Option<&[FieldElement]>) -> Result<Vec<Num>, CircuitError> {
    if let Some(v) = values {
        if v.len() != n {
            return Err(CircuitError::ShapeMismatch(format!("expected {n} public inputs, got {}", v.len())));
        }
    }
    (0..n)
        .map(|i| b.alloc_public(|| Ok(values.expect("proving")[i])))
        .collect()
}

fn model_circuit(
    b: &mut Builder,
    shape: &ModelShape,
    input: Option<(&[FieldElement], &Dataset)>,
) -> Result<(), CircuitError> {
    let cfg = &shape.train;
    cfg.validate()
        .map_err(|e| CircuitError::ShapeMismatch(e.to_string()))?;
    let n = cfg.arity;
    let scale = &cfg.scale;
    if let Some((_, d)) = input {
        if d.arity != n {
            return Err(CircuitError::ShapeMismatch(format!("dataset arity {} vs circuit arity {n}", d.arity)));
        }
        if d.len() > shape.capacity {
            return Err(CircuitError::ShapeMismatch(format!(
                "dataset of {} points exceeds capacity {}",
                d.len(),
                shape.capacity
            )));
        }
    }
    let publics = alloc_publics(b, 2, input.map(|i| i.0))?;
    let (h_m, h_d) = (&publics[0], &publics[1]);
    let points = input.map(|i| &i.1.points);
    let count = points.map_or(0, |p| p.len());

    let present = gadgets::presence_bits(b, shape.capacity, count)?;
    let mut xs = Vec::with_capacity(shape.capacity);
    let mut ys = Vec::with_capacity(shape.capacity);
    let mut leaves = Vec::with_capacity(shape.capacity);
    for (slot, p) in present.iter().enumerate() {
        let point = points.and_then(|ps| ps.get(slot));
        let uid = b.alloc_private(|| Ok(point.map_or(FieldElement::ZERO, |d| FieldElement::from_u64(d.uid))))?;
        let x = (0..n)
            .map(|j| b.alloc_private(|| Ok(point.map_or(FieldElement::ZERO, |d| d.x[j].repr()))))
            .collect::<Result<Vec<_>, _>>()?;
        let y = b.alloc_private(|| Ok(point.map_or(FieldElement::ZERO, |d| d.y.repr())))?;
        for v in std::iter::once(&uid).chain(&x).chain(std::iter::once(&y)) {
            gadgets::enforce_absent_zero(b, p, v)?;
        }
        for v in x.iter().chain(std::iter::once(&y)) {
            gadgets::range_check_signed(b, v, scale.range_bits())?;
        }
        leaves.push(gadgets::hash_data_point(b, &uid, &x, &y)?);
        xs.push(x);
        ys.push(y);
    }
    let root = gadgets::hash_data(b, &leaves, &present)?;
    b.enforce_equal(&root, h_d)?;

    let sigmoid = SigmoidPoly::fixed(scale)?.map(|c| Num::constant(c.repr()));
    let lr = Num::constant(cfg.learning_rate.repr());
    let mut params: Vec<Num> = cfg.init_values.iter().map(|w| Num::constant(w.repr())).collect();
    for _ in 0..cfg.epochs {
        for slot in 0..shape.capacity {
            let next = {
                let mut ar = CircuitArith {
                    builder: &mut *b,
                    scale,
                };
                sgd_step(&mut ar, cfg.kind, n, &sigmoid, &lr, &params, &xs[slot], &ys[slot])?
            };
            params = params
                .iter()
                .zip(&next)
                .map(|(old, new)| gadgets::select(b, &present[slot], new, old))
                .collect::<Result<_, _>>()?;
        }
    }
    let model_hash = gadgets::hash_model(b, &params)?;
    b.enforce_equal(&model_hash, h_m)
}

fn slot_values(set: Option<&HashedSet>, capacity: usize, what: &str) -> Result<usize, CircuitError> {
    let len = set.map_or(0, |s| s.len());
    if len > capacity {
        return Err(CircuitError::ShapeMismatch(format!("{what} has {len} digests, capacity {capacity}")));
    }
    Ok(len)
}

fn alloc_digest_slots(
    b: &mut Builder,
    set: Option<&HashedSet>,
    capacity: usize,
    what: &str,
) -> Result<(Vec<Num>, Vec<Num>), CircuitError> {
    let count = slot_values(set, capacity, what)?;
    let present = gadgets::presence_bits(b, capacity, count)?;
    let mut items = Vec::with_capacity(capacity);
    for (slot, p) in present.iter().enumerate() {
        let v = b.alloc_private(|| Ok(set.and_then(|s| s.items.get(slot)).map_or(FieldElement::ZERO, |h| h.0)))?;
        gadgets::enforce_absent_zero(b, p, &v)?;
        items.push(v);
    }
    Ok((items, present))
}

/// Offsets moving absent slots of `H_D` and `H_U` to two distinct constants,
/// so padding never registers as an intersection.
fn sentinels() -> (FieldElement, FieldElement) {
    (
        poseidon::hash(FieldElement::from_u64(4), &[FieldElement::ZERO]),
        poseidon::hash(FieldElement::from_u64(5), &[FieldElement::ZERO]),
    )
}

fn data_circuit(
    b: &mut Builder,
    shape: &DataShape,
    input: Option<(&[FieldElement], &DataWitnessInput)>,
) -> Result<(), CircuitError> {
    let publics = alloc_publics(b, 3, input.map(|i| i.0))?;
    let (h_d, h_u_prev, h_u) = (&publics[0], &publics[1], &publics[2]);
    let private = input.map(|i| i.1);

    let (d_items, d_pres) = alloc_digest_slots(b, private.map(|p| &p.h_d), shape.data_capacity, "H_D")?;
    let (prev_items, prev_pres) =
        alloc_digest_slots(b, private.map(|p| &p.h_u_prev), shape.unlearnt_capacity, "previous H_U")?;
    let (add_items, add_pres) = alloc_digest_slots(b, private.map(|p| &p.h_u_add), shape.add_capacity, "H_U additions")?;

    let root = gadgets::hash_data(b, &d_items, &d_pres)?;
    b.enforce_equal(&root, h_d)?;
    let base = Num::constant(hashing::empty_root().0);
    let psi_prev = gadgets::extend_chain(b, &base, &prev_items, &prev_pres)?;
    b.enforce_equal(&psi_prev, h_u_prev)?;
    let psi = gadgets::extend_chain(b, &psi_prev, &add_items, &add_pres)?;
    b.enforce_equal(&psi, h_u)?;

    let (s_d, s_u) = sentinels();
    let shift = |v: &Num, p: &Num, s: FieldElement| v.add(&p.not().scale(s));
    let unlearnt: Vec<Num> = prev_items
        .iter()
        .zip(&prev_pres)
        .chain(add_items.iter().zip(&add_pres))
        .map(|(v, p)| shift(v, p, s_u))
        .collect();
    for (a, pa) in d_items.iter().zip(&d_pres) {
        let a = shift(a, pa, s_d);
        for u in &unlearnt {
            gadgets::enforce_nonzero(b, &a.sub(u), "training set and unlearnt set intersect")?;
        }
    }
    Ok(())
}

pub fn build_model_circuit(shape: &ModelShape) -> Result<ConstraintSystem, CircuitError> {
    let mut b = Builder::setup();
    model_circuit(&mut b, shape, None)?;
    b.finalize_system()
}

pub fn build_data_circuit(shape: &DataShape) -> Result<ConstraintSystem, CircuitError> {
    let mut b = Builder::setup();
    data_circuit(&mut b, shape, None)?;
    b.finalize_system()
}

/// Assignment for the model relation with statement `public = (h_m, h_D)`.
/// With `record`, also returns the constraint system built alongside.
pub fn synthesize_model_witness(
    shape: &ModelShape,
    public: &[FieldElement],
    d: &Dataset,
    record: bool,
) -> Result<(Option<ConstraintSystem>, Witness), CircuitError> {
    let mut b = Builder::prover(record);
    model_circuit(&mut b, shape, Some((public, d)))?;
    finish(b, record)
}

/// Assignment for the data relation with statement `(h_D, h_U_prev, h_U)`.
pub fn synthesize_data_witness(
    shape: &DataShape,
    public: &[FieldElement],
    input: &DataWitnessInput,
    record: bool,
) -> Result<(Option<ConstraintSystem>, Witness), CircuitError> {
    let mut b = Builder::prover(record);
    data_circuit(&mut b, shape, Some((public, input)))?;
    finish(b, record)
}

/// Best-effort data witness that substitutes `fallback` for every value the
/// honest prover cannot compute. Returns the system, the assignment and the
/// substituted failures.
pub fn synthesize_data_witness_lenient(
    shape: &DataShape,
    public: &[FieldElement],
    input: &DataWitnessInput,
    fallback: FieldElement,
) -> Result<(ConstraintSystem, Witness, Vec<String>), CircuitError> {
    let mut b = Builder::lenient(fallback);
    data_circuit(&mut b, shape, Some((public, input)))?;
    let cs = b.finalize_system()?;
    let w = b.witness()?;
    Ok((cs, w, b.failures().to_vec()))
}

fn finish(mut b: Builder, record: bool) -> Result<(Option<ConstraintSystem>, Witness), CircuitError> {
    let cs = b.finalize_system()?;
    let w = b.witness()?;
    Ok((record.then_some(cs), w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuits::{is_satisfied, mutation_scan};
    use crate::fixed::{FixedPoint, ScaleConfig};
    use crate::hashing::DataPoint;
    use crate::training::{train_model, ModelKind};

    fn fx(s: &str) -> FixedPoint {
        FixedPoint::from_decimal_str(s, &ScaleConfig::default()).unwrap()
    }

    fn shape(kind: ModelKind, arity: usize, capacity: usize, epochs: usize) -> ModelShape {
        let mut train = TrainConfig::new(kind, arity, ScaleConfig::default()).unwrap();
        train.epochs = epochs;
        ModelShape { capacity, train }
    }

    fn dataset(n: usize, arity: usize) -> Dataset {
        let points = (0..n)
            .map(|i| {
                let x = (0..arity)
                    .map(|j| FixedPoint::from_raw(((i * 37 + j * 53) % 200) as i128 * 1_000 - 100_000))
                    .collect();
                DataPoint::new(10 + i as u64, x, FixedPoint::from_raw(((i % 2) * 100_000) as i128))
            })
            .collect();
        Dataset::new(arity, points).unwrap()
    }

    fn honest(shape: &ModelShape, d: &Dataset) -> Vec<FieldElement> {
        let m = train_model(d, &shape.train).unwrap();
        let h_d = hashing::hash_data(&HashedSet::of_points(&d.points));
        model_public_inputs(m.digest().unwrap(), h_d)
    }

    #[test]
    fn honest_model_witness_satisfies() {
        for kind in [ModelKind::LinearRegression, ModelKind::LogisticRegression, ModelKind::NeuralNet { hidden: 2 }] {
            let s = shape(kind, 2, 3, 2);
            for n in 0..=3 {
                let d = dataset(n, 2);
                let (cs, w) = synthesize_model_witness(&s, &honest(&s, &d), &d, true).unwrap();
                let cs = cs.unwrap();
                assert!(is_satisfied(&cs, &w), "{kind} with {n} points");
                assert_eq!(cs, build_model_circuit(&s).unwrap());
            }
        }
    }

    #[test]
    fn wrong_model_hash_is_unsatisfiable() {
        let s = shape(ModelKind::LinearRegression, 1, 2, 1);
        let d = dataset(2, 1);
        let mut public = honest(&s, &d);
        let other = crate::training::ModelParams {
            kind: ModelKind::LinearRegression,
            arity: 1,
            weights: vec![fx("0.1"), fx("0.2")],
        };
        public[0] = other.digest().unwrap().0;
        let (cs, w) = synthesize_model_witness(&s, &public, &d, true).unwrap();
        assert!(!is_satisfied(&cs.unwrap(), &w));
    }

    #[test]
    fn oversized_dataset_is_a_shape_error() {
        let s = shape(ModelKind::LinearRegression, 1, 2, 1);
        let d = dataset(3, 1);
        assert!(matches!(
            synthesize_model_witness(&s, &honest(&s, &d), &d, false),
            Err(CircuitError::ShapeMismatch(_))
        ));
        let d = dataset(1, 2);
        assert!(matches!(
            synthesize_model_witness(&s, &[FieldElement::ZERO; 2], &d, false),
            Err(CircuitError::ShapeMismatch(_))
        ));
    }

    fn set(vals: &[u64]) -> HashedSet {
        HashedSet::new(vals.iter().map(|&v| HashDigest(FieldElement::from_u64(v))).collect())
    }

    fn data_statement(input: &DataWitnessInput) -> Vec<FieldElement> {
        let mut all = input.h_u_prev.clone();
        all.items.extend(input.h_u_add.items.iter().copied());
        data_public_inputs(
            hashing::hash_data(&input.h_d),
            hashing::hash_unlearn(&input.h_u_prev),
            hashing::hash_unlearn(&all),
        )
    }

    const DATA_SHAPE: DataShape = DataShape {
        data_capacity: 3,
        unlearnt_capacity: 2,
        add_capacity: 2,
    };

    #[test]
    fn disjoint_sets_satisfy() {
        let input = DataWitnessInput {
            h_d: set(&[3, 5]),
            h_u_prev: HashedSet::default(),
            h_u_add: set(&[9]),
        };
        let (cs, w) = synthesize_data_witness(&DATA_SHAPE, &data_statement(&input), &input, true).unwrap();
        assert!(is_satisfied(&cs.unwrap(), &w));
    }

    #[test]
    fn intersecting_sets_have_no_witness() {
        let input = DataWitnessInput {
            h_d: set(&[3, 5]),
            h_u_prev: HashedSet::default(),
            h_u_add: set(&[5]),
        };
        let err = synthesize_data_witness(&DATA_SHAPE, &data_statement(&input), &input, false).unwrap_err();
        assert!(matches!(err, CircuitError::WitnessSynthesis(_)));
        let input = DataWitnessInput {
            h_d: set(&[3, 5]),
            h_u_prev: set(&[3]),
            h_u_add: HashedSet::default(),
        };
        assert!(synthesize_data_witness(&DATA_SHAPE, &data_statement(&input), &input, false).is_err());
    }

    #[test]
    fn wrong_chain_extension_is_unsatisfiable() {
        let input = DataWitnessInput {
            h_d: set(&[3]),
            h_u_prev: set(&[7]),
            h_u_add: set(&[9]),
        };
        let mut public = data_statement(&input);
        public[2] = hashing::hash_unlearn(&set(&[9, 7])).0;
        let (cs, w) = synthesize_data_witness(&DATA_SHAPE, &public, &input, true).unwrap();
        assert!(!is_satisfied(&cs.unwrap(), &w));
    }

    #[test]
    fn empty_sets_and_full_sets() {
        for input in [
            DataWitnessInput::default(),
            DataWitnessInput {
                h_d: set(&[1, 2, 3]),
                h_u_prev: set(&[4, 5]),
                h_u_add: set(&[6, 7]),
            },
        ] {
            let (cs, w) = synthesize_data_witness(&DATA_SHAPE, &data_statement(&input), &input, true).unwrap();
            assert!(is_satisfied(&cs.unwrap(), &w));
        }
    }

    #[test]
    fn building_is_deterministic() {
        let s = shape(ModelKind::LogisticRegression, 2, 2, 1);
        assert_eq!(build_model_circuit(&s).unwrap().fingerprint(), build_model_circuit(&s).unwrap().fingerprint());
        assert_eq!(build_data_circuit(&DATA_SHAPE).unwrap(), build_data_circuit(&DATA_SHAPE).unwrap());
    }

    #[test]
    fn constraint_count_grows_with_every_dimension() {
        let count = |kind, capacity, epochs| build_model_circuit(&shape(kind, 2, capacity, epochs)).unwrap().constraints.len();
        let lin = ModelKind::LinearRegression;
        assert!(count(lin, 2, 1) < count(lin, 3, 1));
        assert!(count(lin, 2, 1) < count(lin, 2, 2));
        assert!(count(lin, 2, 1) < count(ModelKind::NeuralNet { hidden: 2 }, 2, 1));
        assert!(count(ModelKind::NeuralNet { hidden: 2 }, 2, 1) < count(ModelKind::NeuralNet { hidden: 4 }, 2, 1));
    }

    #[test]
    fn small_model_circuit_has_no_free_wires() {
        let s = shape(ModelKind::LinearRegression, 1, 2, 1);
        let d = dataset(1, 1);
        let (cs, w) = synthesize_model_witness(&s, &honest(&s, &d), &d, true).unwrap();
        let report = mutation_scan(&cs.unwrap(), &w, FieldElement::ONE);
        assert!(report.escaped.is_empty(), "{:?}", report.escaped);
        assert!(report.mutated > 0);
    }
}
