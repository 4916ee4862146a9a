//! Executable unlearning security game and completeness driver.
//!
//! Adversaries play the server and hand back a [`Transcript`]: commitments,
//! proofs, a claimed unlearning `(k, d, pi_U)`, and the datasets an extractor
//! would recover. [`run_game`] replays the winning condition line by line and
//! reports which line rejected.

use std::fmt;

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{data_public_inputs, model_public_inputs, DataWitnessInput};
use crate::fixed::FixedPoint;
use crate::hashing::{self, DataPoint, HashDigest, HashedSet, MembershipPath};
use crate::proofsys::{self, ProofBlob};
use crate::protocol::{
    self, empty_commitment, prove_data, prove_model, server_init, verify_init, verify_unlearn, verify_update,
    Commitment, InitProof, ProtocolError, PublicParams, ServerState, UnlearnProof, UpdateProof,
};
use crate::training::{train_model, Dataset, ModelParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GameError {
    #[error("malformed transcript: {0}")]
    MalformedTranscript(String),
    #[error("strategy {strategy} aborted: {source}")]
    StrategyFailed { strategy: String, source: ProtocolError },
}

/// What the adversary and the extractor output together.
#[derive(Debug, Clone)]
pub struct Transcript {
    pub k: usize,
    pub d: DataPoint,
    pub pi_u: UnlearnProof,
    /// `com_0 .. com_l`.
    pub commitments: Vec<Commitment>,
    pub pi0: InitProof,
    /// Proofs of update for iterations `1 .. l`.
    pub updates: Vec<UpdateProof>,
    /// Surrendered datasets `D_0 .. D_l`.
    pub datasets: Vec<Dataset>,
    /// Prover errors the adversary hit while trying to build honest proofs.
    pub prover_errors: Vec<(usize, ProtocolError)>,
}

impl Transcript {
    pub fn rounds(&self) -> usize {
        self.updates.len()
    }

    fn validate(&self) -> Result<(), GameError> {
        let l = self.updates.len();
        let bad = |m: String| Err(GameError::MalformedTranscript(m));
        if l == 0 {
            return bad("at least one update is required".into());
        }
        if self.commitments.len() != l + 1 || self.datasets.len() != l + 1 {
            return bad(format!(
                "{} updates need {} commitments and datasets, got {} and {}",
                l,
                l + 1,
                self.commitments.len(),
                self.datasets.len()
            ));
        }
        if self.k == 0 || self.k > l {
            return bad(format!("k = {} outside [1, {}]", self.k, l));
        }
        Ok(())
    }
}

/// Lines of the winning condition, in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    CommitmentsValid,
    Initialization,
    ProofOfUpdate,
    ModelRecomputation,
    ProofOfUnlearning,
    UnlearntMembership,
    Winning,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Check::CommitmentsValid => "commitments-valid",
            Check::Initialization => "initialization",
            Check::ProofOfUpdate => "proof-of-update",
            Check::ModelRecomputation => "model-recomputation",
            Check::ProofOfUnlearning => "proof-of-unlearning",
            Check::UnlearntMembership => "unlearnt-membership",
            Check::Winning => "winning",
        };
        f.write_str(s)
    }
}

/// Game hops. `G1` adds model recomputation, `G2` also checks that `d`
/// stays in every unlearnt set from `k` on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GameHop {
    G0,
    G1,
    G2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameConfig {
    pub hop: GameHop,
    /// Negative-control switch: `false` skips the commitment-validity line.
    pub check_commitments: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            hop: GameHop::G0,
            check_commitments: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameOutcome {
    /// `true` iff the game outputs 1.
    pub won: bool,
    /// The rejecting line, `None` when the adversary won.
    pub failing_check: Option<Check>,
    /// Iteration the rejecting line was evaluating, where it has one.
    pub failing_iteration: Option<usize>,
}

impl GameOutcome {
    fn reject(c: Check, i: Option<usize>) -> Self {
        GameOutcome {
            won: false,
            failing_check: Some(c),
            failing_iteration: i,
        }
    }

    pub fn bit(&self) -> u8 {
        self.won as u8
    }
}

fn set_minus(a: &Dataset, b: &Dataset) -> Vec<DataPoint> {
    a.points.iter().filter(|p| !b.points.contains(p)).cloned().collect()
}

/// Evaluates the winning condition on `t`.
pub fn run_game(pp: &PublicParams, cfg: &GameConfig, t: &Transcript) -> Result<GameOutcome, GameError> {
    t.validate()?;
    let l = t.rounds();
    let ds = &t.datasets;
    let coms = &t.commitments;

    // U_i^+ = D_{i-1} \ D_i and the cumulative U_i.
    let mut u_add = vec![Vec::new()];
    let mut u = vec![Vec::new()];
    for i in 1..=l {
        let add = set_minus(&ds[i - 1], &ds[i]);
        let mut cum: Vec<DataPoint> = u[i - 1].clone();
        cum.extend(add.iter().cloned());
        u_add.push(add);
        u.push(cum);
    }

    if cfg.check_commitments {
        for i in 0..=l {
            if hashing::hash_data(&HashedSet::of_points(&ds[i].points)) != coms[i].h_d {
                return Ok(GameOutcome::reject(Check::CommitmentsValid, Some(i)));
            }
        }
    }
    if !verify_init(pp, &coms[0], &t.pi0) {
        return Ok(GameOutcome::reject(Check::Initialization, Some(0)));
    }
    for i in 1..=l {
        if !verify_update(pp, &coms[i - 1], &coms[i], &t.updates[i - 1]) {
            return Ok(GameOutcome::reject(Check::ProofOfUpdate, Some(i)));
        }
    }
    if cfg.hop >= GameHop::G1 {
        for i in 1..=l {
            let same = train_model(&ds[i], &pp.config.train)
                .ok()
                .and_then(|m| m.digest().ok())
                .is_some_and(|h| h == coms[i].h_m);
            if !same {
                return Ok(GameOutcome::reject(Check::ModelRecomputation, Some(i)));
            }
        }
    }
    if !verify_unlearn(pp, &t.d, &coms[t.k], &t.pi_u) {
        return Ok(GameOutcome::reject(Check::ProofOfUnlearning, Some(t.k)));
    }
    if cfg.hop >= GameHop::G2 {
        for (i, ui) in u.iter().enumerate().skip(t.k) {
            if !ui.contains(&t.d) {
                return Ok(GameOutcome::reject(Check::UnlearntMembership, Some(i)));
            }
        }
    }
    if t.k < l && u_add[t.k].contains(&t.d) && ds[l].points.contains(&t.d) {
        Ok(GameOutcome {
            won: true,
            failing_check: None,
            failing_iteration: None,
        })
    } else {
        Ok(GameOutcome::reject(Check::Winning, None))
    }
}

/// A server program. It receives the public parameters and its random coins.
pub trait Strategy: Send + Sync {
    fn name(&self) -> &str;
    /// The game line this strategy is aimed at once proofs stop protecting
    /// the earlier lines.
    fn target(&self) -> Check;
    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError>;
}

/// Report line for one game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameReport {
    pub strategy: String,
    pub seed: u64,
    pub verdict: u8,
    pub failing_check: Option<Check>,
}

/// Plays `strategy` with coins from `seed` and evaluates the game.
pub fn play_game(pp: &PublicParams, cfg: &GameConfig, strategy: &dyn Strategy, seed: u64) -> Result<GameReport, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = strategy.play(pp, &mut rng).map_err(|source| GameError::StrategyFailed {
        strategy: strategy.name().to_string(),
        source,
    })?;
    let out = run_game(pp, cfg, &t)?;
    Ok(GameReport {
        strategy: strategy.name().to_string(),
        seed,
        verdict: out.bit(),
        failing_check: out.failing_check,
    })
}

/// Every strategy against every seed, one game per task.
pub fn run_suite(
    pp: &PublicParams,
    cfg: &GameConfig,
    strategies: &[Box<dyn Strategy>],
    seeds: &[u64],
) -> Result<Vec<GameReport>, GameError> {
    let jobs: Vec<(&dyn Strategy, u64)> = strategies
        .iter()
        .flat_map(|s| seeds.iter().map(move |&seed| (s.as_ref(), seed)))
        .collect();
    jobs.par_iter().map(|(s, seed)| play_game(pp, cfg, *s, *seed)).collect()
}

pub fn builtin_strategies() -> Vec<Box<dyn Strategy>> {
    vec![
        Box::new(HonestServer),
        Box::new(WrongModelHash),
        Box::new(ForgedUnlearnPath),
        Box::new(StaleCommitmentSplice),
        Box::new(ReAddAfterUnlearn),
    ]
}

pub fn strategy_by_name(name: &str) -> Option<Box<dyn Strategy>> {
    let mut all = builtin_strategies();
    all.push(Box::new(CheatWithUnsoundBackend));
    all.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
}

fn random_point(rng: &mut ChaCha8Rng, uid: u64, arity: usize, gamma: i128) -> DataPoint {
    let x = (0..arity).map(|_| FixedPoint::from_raw(rng.gen_range(-gamma..=gamma))).collect();
    let y = FixedPoint::from_raw(if rng.gen_bool(0.5) { gamma } else { 0 });
    DataPoint::new(uid, x, y)
}

fn random_points(rng: &mut ChaCha8Rng, pp: &PublicParams, n: usize, first_uid: u64) -> Vec<DataPoint> {
    let gamma = pp.config.scale().gamma() as i128;
    (0..n)
        .map(|i| random_point(rng, first_uid + i as u64, pp.config.train.arity, gamma))
        .collect()
}

/// A server that takes arbitrary transitions and proves what it can.
struct Rogue<'a> {
    pp: &'a PublicParams,
    coms: Vec<Commitment>,
    updates: Vec<UpdateProof>,
    datasets: Vec<Dataset>,
    h_u: HashedSet,
    errors: Vec<(usize, ProtocolError)>,
}

#[derive(Default)]
struct Step {
    /// Dataset handed to the extractor when it differs from the committed one.
    surrendered: Option<Dataset>,
    h_m: Option<HashDigest>,
    /// Reuse the previous proof of update instead of proving.
    splice: bool,
}

impl<'a> Rogue<'a> {
    fn new(pp: &'a PublicParams) -> Self {
        Rogue {
            pp,
            coms: vec![empty_commitment()],
            updates: Vec::new(),
            datasets: vec![Dataset::empty(pp.config.train.arity)],
            h_u: HashedSet::default(),
            errors: Vec::new(),
        }
    }

    fn prove_or_forge(&mut self, i: usize, sp: &proofsys::SetupArtifacts, phi: &[crate::FieldElement], r: Result<ProofBlob, ProtocolError>) -> ProofBlob {
        r.unwrap_or_else(|e| {
            self.errors.push((i, e));
            ProofBlob::forged(sp, phi)
        })
    }

    /// Commits to `committed` with `unlearn_add` appended to the chain.
    fn step(&mut self, committed: &[DataPoint], unlearn_add: &[DataPoint], opts: Step) -> Result<(), ProtocolError> {
        let pp = self.pp;
        let i = self.updates.len() + 1;
        let data = Dataset {
            arity: pp.config.train.arity,
            points: committed.to_vec(),
        };
        let h_d = HashedSet::of_points(&data.points);
        let add = HashedSet::of_points(unlearn_add);
        let mut h_u = self.h_u.clone();
        h_u.items.extend(add.items.iter().copied());
        let h_m = match opts.h_m {
            Some(h) => h,
            None => train_model(&data, &pp.config.train)?
                .digest()
                .map_err(|e| ProtocolError::StateCorrupted(e.to_string()))?,
        };
        let prev = *self.coms.last().expect("com_0 is always present");
        let com = Commitment {
            h_m,
            h_d: hashing::hash_data(&h_d),
            h_u: hashing::hash_unlearn(&h_u),
        };
        let proof = if opts.splice {
            self.updates.last().cloned().ok_or_else(|| ProtocolError::Config("nothing to splice".into()))?
        } else {
            let phi_m = model_public_inputs(com.h_m, com.h_d);
            let phi_d = data_public_inputs(com.h_d, prev.h_u, com.h_u);
            let input = DataWitnessInput {
                h_d,
                h_u_prev: self.h_u.clone(),
                h_u_add: add,
            };
            let rm = prove_model(pp, &phi_m, &data);
            let pi_m = self.prove_or_forge(i, &pp.model_setup, &phi_m, rm);
            let rd = prove_data(pp, &phi_d, &input);
            let pi_d = self.prove_or_forge(i, &pp.data_setup, &phi_d, rd);
            UpdateProof {
                phi_m,
                pi_m,
                phi_d,
                pi_d,
            }
        };
        self.coms.push(com);
        self.updates.push(proof);
        self.datasets.push(opts.surrendered.unwrap_or(data));
        self.h_u = h_u;
        Ok(())
    }

    fn finish(self, k: usize, d: DataPoint, h_u_k: &HashedSet) -> Transcript {
        let path = hashing::compute_tree_path(&d, h_u_k).unwrap_or(MembershipPath { nodes: Vec::new() });
        Transcript {
            k,
            d,
            pi_u: UnlearnProof { iteration: k, path },
            commitments: self.coms,
            pi0: InitProof::Empty,
            updates: self.updates,
            datasets: self.datasets,
            prover_errors: self.errors,
        }
    }
}

/// Control: runs the real protocol, adds three points, deletes one.
pub struct HonestServer;

impl Strategy for HonestServer {
    fn name(&self) -> &str {
        "HonestServer"
    }

    fn target(&self) -> Check {
        Check::Winning
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let cfg = &pp.config;
        let n = cfg.data_capacity.min(3);
        let points = random_points(rng, pp, n, 0);
        let (mut st, com0, pi0) = server_init(pp);
        let mut commitments = vec![com0];
        let mut updates = Vec::new();
        let mut datasets = vec![st.dataset.clone()];
        let mut record = |st: &mut ServerState| -> Result<(), ProtocolError> {
            let (c, p) = st.prove_update(pp)?;
            commitments.push(c);
            updates.push(p);
            datasets.push(st.dataset.clone());
            Ok(())
        };
        for p in &points {
            st.queue_add(cfg, p.clone())?;
        }
        record(&mut st)?;
        let d = points.choose(rng).expect("at least one point").clone();
        st.queue_delete(cfg, d.clone())?;
        record(&mut st)?;
        let pi_u = st.prove_unlearn(&d)?;
        Ok(Transcript {
            k: st.iteration,
            d,
            pi_u,
            commitments,
            pi0,
            updates,
            datasets,
            prover_errors: Vec::new(),
        })
    }
}

/// Commits to a model that was not trained on the committed data.
pub struct WrongModelHash;

impl Strategy for WrongModelHash {
    fn name(&self) -> &str {
        "WrongModelHash"
    }

    fn target(&self) -> Check {
        Check::ModelRecomputation
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let points = random_points(rng, pp, pp.config.data_capacity.min(2), 0);
        let data = Dataset::new(pp.config.train.arity, points.clone())?;
        let mut model: ModelParams = train_model(&data, &pp.config.train)?;
        let j = rng.gen_range(0..model.weights.len());
        model.weights[j] = FixedPoint::from_raw(model.weights[j].raw_i128().unwrap_or(0) + rng.gen_range(1..=1000));
        let h_m = model.digest().map_err(|e| ProtocolError::StateCorrupted(e.to_string()))?;
        let mut rogue = Rogue::new(pp);
        rogue.step(
            &points,
            &[],
            Step {
                h_m: Some(h_m),
                ..Step::default()
            },
        )?;
        let h_u = rogue.h_u.clone();
        Ok(rogue.finish(1, points[0].clone(), &h_u))
    }
}

/// Claims unlearning of a point it keeps training on by appending its digest
/// to the unlearnt chain.
pub struct ForgedUnlearnPath;

impl Strategy for ForgedUnlearnPath {
    fn name(&self) -> &str {
        "ForgedUnlearnPath"
    }

    fn target(&self) -> Check {
        Check::UnlearntMembership
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let points = random_points(rng, pp, pp.config.data_capacity.min(2), 0);
        let d = points.choose(rng).expect("at least one point").clone();
        let mut rogue = Rogue::new(pp);
        rogue.step(&points, std::slice::from_ref(&d), Step::default())?;
        let h_u = rogue.h_u.clone();
        Ok(rogue.finish(1, d, &h_u))
    }
}

/// Presents the previous iteration's proof of update for a new commitment.
pub struct StaleCommitmentSplice;

impl Strategy for StaleCommitmentSplice {
    fn name(&self) -> &str {
        "StaleCommitmentSplice"
    }

    fn target(&self) -> Check {
        Check::ProofOfUpdate
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let n = pp.config.data_capacity.min(2);
        let points = random_points(rng, pp, n + 1, 0);
        let mut rogue = Rogue::new(pp);
        rogue.step(&points[..n - 1], &[], Step::default())?;
        // add one point and delete another, re-using the old proof
        let d = points[0].clone();
        let mut next: Vec<DataPoint> = points[1..n].to_vec();
        next.push(points[n].clone());
        rogue.step(
            &next,
            std::slice::from_ref(&d),
            Step {
                splice: true,
                ..Step::default()
            },
        )?;
        let h_u = rogue.h_u.clone();
        Ok(rogue.finish(2, d, &h_u))
    }
}

/// Deletes a point, proves it, then trains on it again.
pub struct ReAddAfterUnlearn;

impl Strategy for ReAddAfterUnlearn {
    fn name(&self) -> &str {
        "ReAddAfterUnlearn"
    }

    fn target(&self) -> Check {
        Check::Winning
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let points = random_points(rng, pp, pp.config.data_capacity.min(2), 0);
        let d = points.choose(rng).expect("at least one point").clone();
        let rest: Vec<DataPoint> = points.iter().filter(|p| **p != d).cloned().collect();
        let mut rogue = Rogue::new(pp);
        rogue.step(&points, &[], Step::default())?;
        rogue.step(&rest, std::slice::from_ref(&d), Step::default())?;
        let h_u_k = rogue.h_u.clone();
        rogue.step(&points, &[], Step::default())?;
        Ok(rogue.finish(2, d, &h_u_k))
    }
}

/// Negative control: commits to and proves a dataset without `d` while
/// training on (and surrendering) one that contains it.
pub struct CheatWithUnsoundBackend;

impl Strategy for CheatWithUnsoundBackend {
    fn name(&self) -> &str {
        "CheatWithUnsoundBackend"
    }

    fn target(&self) -> Check {
        Check::CommitmentsValid
    }

    fn play(&self, pp: &PublicParams, rng: &mut ChaCha8Rng) -> Result<Transcript, ProtocolError> {
        let mut points = random_points(rng, pp, pp.config.data_capacity.min(2), 0);
        // a label-1 point always moves the model, so retraining exposes it
        points[0].y = FixedPoint::from_raw(pp.config.scale().gamma() as i128);
        let d = points[0].clone();
        let rest: Vec<DataPoint> = points.iter().filter(|p| **p != d).cloned().collect();
        let mut rogue = Rogue::new(pp);
        rogue.step(&points, &[], Step::default())?;
        rogue.step(&rest, std::slice::from_ref(&d), Step::default())?;
        let h_u_k = rogue.h_u.clone();
        let actual = Dataset::new(pp.config.train.arity, points.clone())?;
        rogue.step(
            &rest,
            &[],
            Step {
                surrendered: Some(actual),
                ..Step::default()
            },
        )?;
        Ok(rogue.finish(2, d, &h_u_k))
    }
}

/// Counts from one completeness run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletenessReport {
    pub seed: u64,
    pub iterations: usize,
    pub added: usize,
    pub unlearnt: usize,
    pub update_checks: usize,
    pub unlearn_checks: usize,
    pub failures: Vec<String>,
}

impl CompletenessReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// One batch of a request sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestBatch {
    pub add: Vec<DataPoint>,
    pub unlearn: Vec<DataPoint>,
}

/// Random request sequence that never re-adds a point and never exceeds the
/// configured capacities. Deletions only target points that were added.
pub fn random_requests(pp: &PublicParams, seed: u64, iters: usize, max_points: usize) -> Vec<RequestBatch> {
    let cfg = &pp.config;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = cfg.scale().gamma() as i128;
    let mut live: Vec<DataPoint> = Vec::new();
    let (mut next_uid, mut unlearnt) = (0u64, 0usize);
    let mut out = Vec::with_capacity(iters);
    for _ in 0..iters {
        let room = cfg.data_capacity.saturating_sub(live.len()).min(max_points - next_uid as usize);
        let n_add = rng.gen_range(0..=room);
        let add: Vec<DataPoint> = (0..n_add)
            .map(|i| random_point(&mut rng, next_uid + i as u64, cfg.train.arity, gamma))
            .collect();
        next_uid += n_add as u64;
        live.extend(add.iter().cloned());
        let budget = cfg.add_capacity.min(cfg.unlearnt_capacity - unlearnt).min(live.len());
        let n_del = rng.gen_range(0..=budget);
        live.shuffle(&mut rng);
        let unlearn: Vec<DataPoint> = live.drain(..n_del).collect();
        unlearnt += n_del;
        out.push(RequestBatch { add, unlearn });
    }
    out
}

/// Drives the protocol through `iters` random valid batches and verifies
/// every output on the user side.
pub fn run_completeness(
    pp: &PublicParams,
    seed: u64,
    iters: usize,
    max_points: usize,
) -> Result<CompletenessReport, ProtocolError> {
    let cfg = &pp.config;
    let user = pp.verifier_view();
    let mut report = CompletenessReport {
        seed,
        ..CompletenessReport::default()
    };
    let (mut st, com0, pi0) = server_init(pp);
    if !verify_init(&user, &com0, &pi0) {
        report.failures.push("initial commitment rejected".into());
    }
    let mut prev = com0;
    for (i, batch) in random_requests(pp, seed, iters, max_points).into_iter().enumerate() {
        for p in &batch.add {
            st.queue_add(cfg, p.clone())?;
        }
        for p in &batch.unlearn {
            st.queue_delete(cfg, p.clone())?;
        }
        let (com, proof) = st.prove_update(pp)?;
        report.iterations += 1;
        report.added += batch.add.len();
        report.unlearnt += batch.unlearn.len();
        report.update_checks += 1;
        if !verify_update(&user, &prev, &com, &proof) {
            report.failures.push(format!("update {} rejected", i + 1));
        }
        for p in &batch.unlearn {
            report.unlearn_checks += 1;
            let ok = st.prove_unlearn(p).is_ok_and(|u| protocol::verify_unlearn(&user, p, &com, &u));
            if !ok {
                report.failures.push(format!("unlearning of uid {} in update {} rejected", p.uid, i + 1));
            }
        }
        prev = com;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proofsys::Backend;
    use crate::protocol::{global_setup, ProtocolConfig};

    fn params(backend: Backend) -> PublicParams {
        global_setup(&ProtocolConfig::linear(1, 4, backend).unwrap()).unwrap()
    }

    fn g2() -> GameConfig {
        GameConfig {
            hop: GameHop::G2,
            check_commitments: true,
        }
    }

    #[test]
    fn honest_fails_only_at_the_final_line() {
        let pp = params(Backend::WitnessCheck);
        for hop in [GameHop::G0, GameHop::G1, GameHop::G2] {
            let cfg = GameConfig { hop, check_commitments: true };
            let r = play_game(&pp, &cfg, &HonestServer, 3).unwrap();
            assert_eq!((r.verdict, r.failing_check), (0, Some(Check::Winning)));
        }
    }

    #[test]
    fn strategies_reach_their_target_without_proofs() {
        let pp = params(Backend::Unsound);
        for s in builtin_strategies() {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let t = s.play(&pp, &mut rng).unwrap();
            let out = run_game(&pp, &g2(), &t).unwrap();
            // winning counts as reaching the final line
            let reached = out.failing_check.unwrap_or(Check::Winning);
            assert_eq!(reached, s.target(), "{}", s.name());
        }
    }

    #[test]
    fn witness_check_backend_rejects_every_builtin() {
        let pp = params(Backend::WitnessCheck);
        let reports = run_suite(&pp, &GameConfig::default(), &builtin_strategies(), &[0, 1]).unwrap();
        for r in reports {
            assert_eq!(r.verdict, 0, "{r:?}");
            let expected = if r.strategy == "HonestServer" { Check::Winning } else { Check::ProofOfUpdate };
            assert_eq!(r.failing_check, Some(expected), "{r:?}");
        }
    }

    #[test]
    fn re_add_cannot_be_proven() {
        let pp = params(Backend::WitnessCheck);
        let t = ReAddAfterUnlearn.play(&pp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(t.prover_errors.len(), 1);
        let (i, e) = &t.prover_errors[0];
        assert_eq!(*i, 3);
        assert!(matches!(e, ProtocolError::Circuit(crate::circuits::CircuitError::WitnessSynthesis(_))), "{e}");
    }

    #[test]
    fn negative_controls() {
        let pp = params(Backend::WitnessCheck);
        let t = CheatWithUnsoundBackend.play(&pp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(t.prover_errors.is_empty());
        let caught = run_game(&pp, &GameConfig::default(), &t).unwrap();
        assert_eq!(caught.failing_check, Some(Check::CommitmentsValid));
        let open = GameConfig { hop: GameHop::G0, check_commitments: false };
        assert!(run_game(&pp, &open, &t).unwrap().won);
        let g1 = GameConfig { hop: GameHop::G1, check_commitments: false };
        assert_eq!(run_game(&pp, &g1, &t).unwrap().failing_check, Some(Check::ModelRecomputation));

        let unsound = params(Backend::Unsound);
        let r = play_game(&unsound, &GameConfig::default(), &ReAddAfterUnlearn, 0).unwrap();
        assert_eq!(r.verdict, 1);
    }

    #[test]
    fn malformed_transcripts() {
        let pp = params(Backend::WitnessCheck);
        let t = HonestServer.play(&pp, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut bad = t.clone();
        bad.k = 0;
        assert!(run_game(&pp, &g2(), &bad).is_err());
        let mut bad = t.clone();
        bad.datasets.pop();
        assert!(run_game(&pp, &g2(), &bad).is_err());
        let mut bad = t;
        bad.updates.clear();
        assert!(run_game(&pp, &g2(), &bad).is_err());
    }

    #[test]
    fn request_generator_is_valid() {
        let pp = params(Backend::WitnessCheck);
        for seed in 0..50 {
            let reqs = random_requests(&pp, seed, 5, 8);
            let mut seen = std::collections::HashSet::new();
            let mut gone = std::collections::HashSet::new();
            for b in &reqs {
                for p in &b.add {
                    assert!(seen.insert(p.uid) && !gone.contains(&p.uid));
                }
                for p in &b.unlearn {
                    assert!(seen.contains(&p.uid) && gone.insert(p.uid));
                }
            }
            assert!(seen.len() <= 8);
        }
    }

    #[test]
    fn completeness_small() {
        let pp = params(Backend::WitnessCheck);
        let r = run_completeness(&pp, 0, 3, 4).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.iterations, 3);
    }
}
