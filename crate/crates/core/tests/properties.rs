use std::sync::OnceLock;

use num_rational::BigRational;
use num_traits::Signed;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use unlearn_core::circuits::{
    build_data_circuit, data_public_inputs, model_public_inputs, synthesize_data_witness, synthesize_model_witness,
    DataShape, DataWitnessInput, ModelShape,
};
use unlearn_core::game::random_requests;
use unlearn_core::hashing::{self, DataPoint, HashDigest, HashedSet};
use unlearn_core::proofsys::{self, Backend, RelationHandle};
use unlearn_core::protocol::{global_setup, server_init, Commitment, ProtocolConfig, PublicParams};
use unlearn_core::training::{train_model, train_samples, ModelKind, Sample};
use unlearn_core::{Dataset, FieldElement, FixedPoint, FloatTrainConfig, ScaleConfig, TrainConfig};

fn scale() -> ScaleConfig {
    ScaleConfig::default()
}

#[derive(Debug, Clone)]
enum Expr {
    Leaf(i128),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

fn expr(leaf: i128, ops: bool) -> impl Strategy<Value = Expr> {
    (-leaf..=leaf).prop_map(Expr::Leaf).prop_recursive(8, 64, 2, move |inner| {
        if ops {
            prop_oneof![
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(a.into(), b.into())),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(a.into(), b.into())),
                (inner.clone(), inner).prop_map(|(a, b)| Expr::Mul(a.into(), b.into())),
            ]
            .boxed()
        } else {
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Mul(a.into(), b.into())).boxed()
        }
    })
}

/// Fixed-point value, exact value, and a propagated bound on the gap.
fn eval(e: &Expr, s: &ScaleConfig) -> Option<(FixedPoint, BigRational, BigRational, usize)> {
    let unit = BigRational::new(1.into(), (s.gamma() as i64).into());
    Some(match e {
        Expr::Leaf(k) => {
            let f = FixedPoint::from_raw(*k);
            (f, f.decode(s), BigRational::from_integer(0.into()), 0)
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            let (fa, ra, ea, ma) = eval(a, s)?;
            let (fb, rb, eb, mb) = eval(b, s)?;
            let (f, r) = if matches!(e, Expr::Add(..)) { (fa.add(fb), ra + rb) } else { (fa.sub(fb), ra - rb) };
            (f, r, ea + eb, ma + mb)
        }
        Expr::Mul(a, b) => {
            let (fa, ra, ea, ma) = eval(a, s)?;
            let (fb, rb, eb, mb) = eval(b, s)?;
            let f = fa.mul(fb, s).ok()?;
            let bound = ra.abs() * &eb + rb.abs() * &ea + &ea * &eb + unit;
            (f, ra * rb, bound, ma + mb + 1)
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fixed_point_tracks_rationals(e in expr(400_000, true)) {
        let s = scale();
        if let Some((f, exact, bound, _)) = eval(&e, &s) {
            prop_assert!((f.decode(&s) - exact).abs() <= bound);
        }
    }

    // without amplification the gap is at most one unit per multiplication
    #[test]
    fn products_on_the_unit_interval(e in expr(100_000, false)) {
        let s = scale();
        let (f, exact, _, muls) = eval(&e, &s).unwrap();
        let limit = BigRational::new((muls as i64).into(), (s.gamma() as i64).into());
        prop_assert!((f.decode(&s) - exact).abs() <= limit);
    }
}

fn random_points(seed: u64, n: usize, arity: usize) -> Vec<DataPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let x = (0..arity).map(|_| FixedPoint::from_raw(rng.gen_range(-100_000..=100_000))).collect();
            DataPoint::new(i as u64, x, FixedPoint::from_raw(if rng.gen_bool(0.5) { 100_000 } else { 0 }))
        })
        .collect()
}

fn train_cfg(kind: ModelKind, arity: usize) -> TrainConfig {
    let mut c = TrainConfig::new(kind, arity, scale()).unwrap();
    c.epochs = 1;
    c
}

fn kinds() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::LinearRegression), Just(ModelKind::LogisticRegression)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fixed_training_tracks_float(seed in any::<u64>(), arity in 1usize..=3, kind in kinds()) {
        let d = Dataset::new(arity, random_points(seed, 16, arity)).unwrap();
        let c = train_cfg(kind, arity);
        let fixed = train_model(&d, &c).unwrap();
        let fc: FloatTrainConfig = c.convert(()).unwrap();
        let samples: Vec<Sample<f64>> = d
            .points
            .iter()
            .map(|p| Sample { x: p.x.iter().map(|v| v.to_f64(&scale())).collect(), y: p.y.to_f64(&scale()) })
            .collect();
        let float = train_samples(&samples, &fc).unwrap();
        for (a, b) in fixed.weights.iter().zip(&float.weights) {
            prop_assert!((a.to_f64(&scale()) - b).abs() <= 1e-3);
        }
    }

    #[test]
    fn non_members_have_no_path(n in 0usize..=64, seed in any::<u64>()) {
        let pts = random_points(seed, n + 1, 2);
        let hu = HashedSet::of_points(&pts[..n]);
        prop_assert!(hashing::compute_tree_path(&pts[n], &hu).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // the circuit's model hash equals the natively computed one
    #[test]
    fn model_circuit_agrees_with_native_training(seed in any::<u64>(), n in 0usize..=8, arity in 1usize..=3, kind in kinds()) {
        let shape = ModelShape { capacity: 8, train: train_cfg(kind, arity) };
        let d = Dataset::new(arity, random_points(seed, n, arity)).unwrap();
        let h_m = train_model(&d, &shape.train).unwrap().digest().unwrap();
        let h_d = hashing::hash_data(&HashedSet::of_points(&d.points));
        let (cs, w) = synthesize_model_witness(&shape, &model_public_inputs(h_m, h_d), &d, true).unwrap();
        prop_assert_eq!(cs.unwrap().first_unsatisfied(&w), None);
        let off = HashDigest(h_m.value() + FieldElement::ONE);
        if let Ok((cs, w)) = synthesize_model_witness(&shape, &model_public_inputs(off, h_d), &d, true) {
            prop_assert!(cs.unwrap().first_unsatisfied(&w).is_some());
        }
    }
}

fn witness_params() -> &'static PublicParams {
    static PP: OnceLock<PublicParams> = OnceLock::new();
    PP.get_or_init(|| global_setup(&ProtocolConfig::linear(1, 8, Backend::WitnessCheck).unwrap()).unwrap())
}

fn replay(pp: &PublicParams, seed: u64, iters: usize) -> Vec<Commitment> {
    let cfg = &pp.config;
    let (mut st, com0, _) = server_init(pp);
    let mut coms = vec![com0];
    for batch in random_requests(pp, seed, iters, 8) {
        for p in batch.add {
            st.queue_add(cfg, p).unwrap();
        }
        for p in batch.unlearn {
            st.queue_delete(cfg, p).unwrap();
        }
        let prev_u = st.h_u.clone();
        let (com, _) = st.prove_update(pp).unwrap();
        assert_eq!(&st.h_u.items[..prev_u.len()], &prev_u.items[..], "unlearnt set is append-only");
        assert!(st.h_d.items.iter().all(|h| !st.h_u.contains(h)), "training and unlearnt sets intersect");
        coms.push(com);
    }
    coms
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn protocol_runs_keep_their_invariants(seed in any::<u64>(), iters in 1usize..=5) {
        let pp = witness_params();
        let a = replay(pp, seed, iters);
        prop_assert_eq!(a, replay(pp, seed, iters));
    }
}

fn tiny_data_relation() -> (RelationHandle, Vec<(Vec<FieldElement>, unlearn_core::circuits::Witness)>) {
    let shape = DataShape {
        data_capacity: 2,
        unlearnt_capacity: 1,
        add_capacity: 1,
    };
    let r = RelationHandle::new(build_data_circuit(&shape).unwrap());
    let pts = random_points(9, 4, 1);
    let corpus = [(vec![0, 1], vec![], vec![2]), (vec![0], vec![2], vec![3]), (vec![], vec![], vec![])]
        .into_iter()
        .map(|(d, prev, add): (Vec<usize>, Vec<usize>, Vec<usize>)| {
            let set = |ix: &[usize]| HashedSet::of_points(ix.iter().map(|&i| &pts[i]));
            let input = DataWitnessInput {
                h_d: set(&d),
                h_u_prev: set(&prev),
                h_u_add: set(&add),
            };
            let mut all = input.h_u_prev.clone();
            all.items.extend(input.h_u_add.items.iter().copied());
            let phi = data_public_inputs(
                hashing::hash_data(&input.h_d),
                hashing::hash_unlearn(&input.h_u_prev),
                hashing::hash_unlearn(&all),
            );
            let (_, w) = synthesize_data_witness(&shape, &phi, &input, false).unwrap();
            (phi, w)
        })
        .collect();
    (r, corpus)
}

#[test]
fn backends_agree_on_the_corpus() {
    let (r, corpus) = tiny_data_relation();
    let wc = proofsys::setup(&r, Backend::WitnessCheck).unwrap();
    let sn = proofsys::setup(&r, Backend::Snark).unwrap();
    for (phi, w) in &corpus {
        let a = proofsys::prove(&r, &wc, phi, w).unwrap();
        let b = proofsys::prove(&r, &sn, phi, w).unwrap();
        assert!(proofsys::verify(&r, &wc, phi, &a));
        assert!(proofsys::verify(&r, &sn, phi, &b));
        for i in 0..phi.len() {
            let mut bad = phi.clone();
            bad[i] += FieldElement::ONE;
            assert!(!proofsys::verify(&r, &wc, &bad, &a));
            assert!(!proofsys::verify(&r, &sn, &bad, &b));
        }
    }
}

#[test]
fn flipped_snark_proofs_never_verify() {
    let (r, corpus) = tiny_data_relation();
    let sp = proofsys::setup(&r, Backend::Snark).unwrap();
    let (phi, w) = &corpus[0];
    let blob = proofsys::prove(&r, &sp, phi, w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let mut bad = blob.clone();
        let pos = rng.gen_range(0..bad.bytes.len());
        bad.bytes[pos] ^= 1 << rng.gen_range(0..8);
        assert!(!proofsys::verify(&r, &sp, phi, &bad));
    }
}
