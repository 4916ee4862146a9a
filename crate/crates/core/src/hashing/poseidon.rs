//! Poseidon over BN254 with x^5 S-boxes and the circom round constants.
//!
//! The permutation is evaluated here directly; `light-poseidon` supplies the
//! constants and serves as an independent reference in tests. The circuit
//! gadget in `circuits::gadgets` replays the exact same round schedule.

use std::sync::OnceLock;

use ark_bn254::Fr;

use crate::field::FieldElement;

/// Round constants and MDS matrix for one state width.
#[derive(Debug)]
pub struct PoseidonParams {
    pub width: usize,
    pub full_rounds: usize,
    pub partial_rounds: usize,
    pub ark: Vec<FieldElement>,
    pub mds: Vec<Vec<FieldElement>>,
}

fn load(width: u8) -> PoseidonParams {
    let p = light_poseidon::parameters::bn254_x5::get_poseidon_parameters::<Fr>(width)
        .expect("circom parameters exist for widths 2..=13");
    assert_eq!(p.alpha, 5);
    PoseidonParams {
        width: p.width,
        full_rounds: p.full_rounds,
        partial_rounds: p.partial_rounds,
        ark: p.ark.into_iter().map(FieldElement::from_inner).collect(),
        mds: p
            .mds
            .into_iter()
            .map(|row| row.into_iter().map(FieldElement::from_inner).collect())
            .collect(),
    }
}

/// Parameters for `arity` inputs (state width `arity + 1`). Supported arities: 1, 2.
pub fn params(arity: usize) -> &'static PoseidonParams {
    static T2: OnceLock<PoseidonParams> = OnceLock::new();
    static T3: OnceLock<PoseidonParams> = OnceLock::new();
    match arity {
        1 => T2.get_or_init(|| load(2)),
        2 => T3.get_or_init(|| load(3)),
        _ => panic!("unsupported poseidon arity {arity}"),
    }
}

fn sbox(x: FieldElement) -> FieldElement {
    let x2 = x.square();
    x2.square() * x
}

/// Hashes `inputs` with `domain_tag` in the capacity slot; returns `state[0]`.
pub fn hash(domain_tag: FieldElement, inputs: &[FieldElement]) -> FieldElement {
    let p = params(inputs.len());
    let mut state = Vec::with_capacity(p.width);
    state.push(domain_tag);
    state.extend_from_slice(inputs);

    let half = p.full_rounds / 2;
    let total = p.full_rounds + p.partial_rounds;
    for round in 0..total {
        for (i, s) in state.iter_mut().enumerate() {
            *s += p.ark[round * p.width + i];
        }
        if round < half || round >= half + p.partial_rounds {
            for s in state.iter_mut() {
                *s = sbox(*s);
            }
        } else {
            state[0] = sbox(state[0]);
        }
        state = p
            .mds
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&state)
                    .fold(FieldElement::ZERO, |acc, (m, s)| acc + *m * *s)
            })
            .collect();
    }
    state[0]
}
