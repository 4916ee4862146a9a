//! Server and user sides of the unlearning protocol: global setup,
//! initialization, batched add/delete requests, proofs of update, and proofs
//! of unlearning.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::circuits::{
    self, build_data_circuit, build_model_circuit, data_public_inputs, model_public_inputs, CircuitError, DataShape,
    DataWitnessInput, ModelShape,
};
use crate::field::FieldElement;
use crate::fixed::ScaleConfig;
use crate::hashing::{
    self, DataPoint, HashDigest, HashFunction, HashedSet, MembershipPath, ENVELOPE_VERSION,
};
use crate::proofsys::{self, Backend, ProofBlob, ProofEnvelope, ProofError, RelationHandle, SetupArtifacts, SetupCache};
use crate::training::{train_model, Dataset, ModelKind, ModelParams, TrainConfig, TrainingError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("uid {0} was deleted and can never be added again")]
    ReAddAfterDelete(u64),
    #[error("uid {0} is already present or queued")]
    DuplicateAdd(u64),
    #[error("delete request for uid {0} does not match the stored point")]
    ConflictingDelete(u64),
    #[error("point {uid} has {got} features, expected {expected}")]
    ArityMismatch { uid: u64, expected: usize, got: usize },
    #[error("point {0} has a value outside the circuit range")]
    OutOfRange(u64),
    #[error("update exceeds circuit capacity: {0}")]
    ShapeOverflow(String),
    #[error("data point {0} was never unlearnt")]
    NotMember(u64),
    #[error("server state is inconsistent: {0}")]
    StateCorrupted(String),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Proof(#[from] ProofError),
}

/// Everything both sides agree on before the first iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub train: TrainConfig,
    pub hash: HashFunction,
    pub backend: Backend,
    /// Maximum training-set size.
    pub data_capacity: usize,
    /// Maximum total number of unlearnt points.
    pub unlearnt_capacity: usize,
    /// Maximum number of points unlearnt in one update.
    pub add_capacity: usize,
}

impl ProtocolConfig {
    /// Linear regression over `arity` features with `capacity` slots
    /// everywhere and one training epoch.
    pub fn linear(arity: usize, capacity: usize, backend: Backend) -> Result<Self, ProtocolError> {
        let mut train = TrainConfig::new(ModelKind::LinearRegression, arity, ScaleConfig::default())?;
        train.epochs = 1;
        Ok(ProtocolConfig {
            train,
            hash: HashFunction::PoseidonBn254,
            backend,
            data_capacity: capacity,
            unlearnt_capacity: capacity,
            add_capacity: capacity,
        })
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.train.validate().map_err(|e| ProtocolError::Config(e.to_string()))?;
        if self.data_capacity == 0 || self.unlearnt_capacity == 0 || self.add_capacity == 0 {
            return Err(ProtocolError::Config("capacities must be positive".into()));
        }
        if self.add_capacity > self.unlearnt_capacity {
            return Err(ProtocolError::Config(format!(
                "per-update unlearn capacity {} exceeds total capacity {}",
                self.add_capacity, self.unlearnt_capacity
            )));
        }
        if self.train.epochs == 0 {
            return Err(ProtocolError::Config("at least one epoch is required".into()));
        }
        Ok(())
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            capacity: self.data_capacity,
            train: self.train.clone(),
        }
    }

    pub fn data_shape(&self) -> DataShape {
        DataShape {
            data_capacity: self.data_capacity,
            unlearnt_capacity: self.unlearnt_capacity,
            add_capacity: self.add_capacity,
        }
    }

    pub fn scale(&self) -> &ScaleConfig {
        &self.train.scale
    }
}

/// `pub`: configuration, both relations and their setup artifacts.
#[derive(Debug, Clone)]
pub struct PublicParams {
    pub config: ProtocolConfig,
    pub model_relation: RelationHandle,
    pub data_relation: RelationHandle,
    pub model_setup: SetupArtifacts,
    pub data_setup: SetupArtifacts,
}

fn relations(cfg: &ProtocolConfig) -> Result<(RelationHandle, RelationHandle), ProtocolError> {
    cfg.validate()?;
    let model = RelationHandle::new(build_model_circuit(&cfg.model_shape())?);
    let data = RelationHandle::new(build_data_circuit(&cfg.data_shape())?);
    Ok((model, data))
}

/// Builds both circuits and runs setup for each.
pub fn global_setup(cfg: &ProtocolConfig) -> Result<PublicParams, ProtocolError> {
    let (model_relation, data_relation) = relations(cfg)?;
    let (m, d) = rayon::join(
        || proofsys::setup(&model_relation, cfg.backend),
        || proofsys::setup(&data_relation, cfg.backend),
    );
    Ok(PublicParams {
        config: cfg.clone(),
        model_setup: m?,
        data_setup: d?,
        model_relation,
        data_relation,
    })
}

/// Like [`global_setup`], reusing artifacts persisted by fingerprint.
pub fn global_setup_cached(cfg: &ProtocolConfig, cache: &SetupCache) -> Result<PublicParams, ProtocolError> {
    let (model_relation, data_relation) = relations(cfg)?;
    Ok(PublicParams {
        config: cfg.clone(),
        model_setup: cache.load_or_setup(&model_relation, cfg.backend)?,
        data_setup: cache.load_or_setup(&data_relation, cfg.backend)?,
        model_relation,
        data_relation,
    })
}

/// Rebuilds the relations for `cfg` and attaches previously generated setups.
pub fn public_params_from_setups(
    cfg: &ProtocolConfig,
    model_setup: SetupArtifacts,
    data_setup: SetupArtifacts,
) -> Result<PublicParams, ProtocolError> {
    let (model_relation, data_relation) = relations(cfg)?;
    for (r, sp) in [(&model_relation, &model_setup), (&data_relation, &data_setup)] {
        if r.fingerprint != sp.fingerprint {
            return Err(ProofError::FingerprintMismatch {
                expected: r.fingerprint.clone(),
                got: sp.fingerprint.clone(),
            }
            .into());
        }
        if sp.backend != cfg.backend {
            return Err(ProtocolError::Config(format!("setup is for {}, config says {}", sp.backend, cfg.backend)));
        }
    }
    Ok(PublicParams {
        config: cfg.clone(),
        model_relation,
        data_relation,
        model_setup,
        data_setup,
    })
}

impl PublicParams {
    /// The same parameters without proving material.
    pub fn verifier_view(&self) -> Self {
        PublicParams {
            model_setup: self.model_setup.verifier_only(),
            data_setup: self.data_setup.verifier_only(),
            ..self.clone()
        }
    }
}

/// `com_i = (h_m, h_D, h_U)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Commitment {
    pub h_m: HashDigest,
    pub h_d: HashDigest,
    pub h_u: HashDigest,
}

/// `pi_i = (phi_m, pi_m, phi_D, pi_D)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateProof {
    pub phi_m: Vec<FieldElement>,
    pub pi_m: ProofBlob,
    pub phi_d: Vec<FieldElement>,
    pub pi_d: ProofBlob,
}

/// `pi_U`: a membership path in the unlearnt chain, issued at `iteration`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlearnProof {
    pub iteration: usize,
    pub path: MembershipPath,
}

/// `pi_0`: honest servers send the `empty` marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitProof {
    Empty,
    Opaque(Vec<u8>),
}

/// The commitment of the empty state: empty model, empty tree, empty chain.
pub fn empty_commitment() -> Commitment {
    Commitment {
        h_m: ModelParams::empty().digest().expect("the empty model has one weight"),
        h_d: hashing::hash_data(&HashedSet::default()),
        h_u: hashing::hash_unlearn(&HashedSet::default()),
    }
}

/// `st_S` plus the request queues of the current iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerState {
    pub iteration: usize,
    pub dataset: Dataset,
    pub h_d: HashedSet,
    pub h_u: HashedSet,
    pub h_u_root: HashDigest,
    pub model: ModelParams,
    pub deleted: BTreeSet<u64>,
    /// Unlearnt points in `h_u` order, kept to answer unlearning requests.
    pub unlearnt: Vec<DataPoint>,
    pub pending_add: Vec<DataPoint>,
    pub pending_delete: Vec<DataPoint>,
}

/// Server initialization: empty state, its commitment and the `empty` marker.
pub fn server_init(pp: &PublicParams) -> (ServerState, Commitment, InitProof) {
    let st = ServerState {
        iteration: 0,
        dataset: Dataset::empty(pp.config.train.arity),
        h_d: HashedSet::default(),
        h_u: HashedSet::default(),
        h_u_root: hashing::hash_unlearn(&HashedSet::default()),
        model: ModelParams::empty(),
        deleted: BTreeSet::new(),
        unlearnt: Vec::new(),
        pending_add: Vec::new(),
        pending_delete: Vec::new(),
    };
    (st, empty_commitment(), InitProof::Empty)
}

pub fn verify_init(_pp: &PublicParams, com0: &Commitment, pi0: &InitProof) -> bool {
    *pi0 == InitProof::Empty && *com0 == empty_commitment()
}

impl ServerState {
    fn check_point(&self, cfg: &ProtocolConfig, d: &DataPoint) -> Result<(), ProtocolError> {
        if d.arity() != cfg.train.arity {
            return Err(ProtocolError::ArityMismatch {
                uid: d.uid,
                expected: cfg.train.arity,
                got: d.arity(),
            });
        }
        let scale = cfg.scale();
        if !d.x.iter().chain(std::iter::once(&d.y)).all(|v| scale.in_circuit_range(*v)) {
            return Err(ProtocolError::OutOfRange(d.uid));
        }
        Ok(())
    }

    fn known(&self, uid: u64) -> Option<&DataPoint> {
        self.dataset
            .points
            .iter()
            .chain(&self.pending_add)
            .chain(&self.unlearnt)
            .chain(&self.pending_delete)
            .find(|p| p.uid == uid)
    }

    pub fn queue_add(&mut self, cfg: &ProtocolConfig, d: DataPoint) -> Result<(), ProtocolError> {
        self.check_point(cfg, &d)?;
        if self.deleted.contains(&d.uid) || self.pending_delete.iter().any(|p| p.uid == d.uid) {
            return Err(ProtocolError::ReAddAfterDelete(d.uid));
        }
        if self.dataset.contains_uid(d.uid) || self.pending_add.iter().any(|p| p.uid == d.uid) {
            return Err(ProtocolError::DuplicateAdd(d.uid));
        }
        self.pending_add.push(d);
        Ok(())
    }

    /// Queues `d` for unlearning. A never-added point is accepted and banned
    /// from then on; repeating a delete is a no-op.
    pub fn queue_delete(&mut self, cfg: &ProtocolConfig, d: DataPoint) -> Result<(), ProtocolError> {
        self.check_point(cfg, &d)?;
        if let Some(existing) = self.known(d.uid) {
            if *existing != d {
                return Err(ProtocolError::ConflictingDelete(d.uid));
            }
        }
        if self.deleted.contains(&d.uid) || self.pending_delete.iter().any(|p| p.uid == d.uid) {
            return Ok(());
        }
        self.pending_delete.push(d);
        Ok(())
    }

    /// Dataset, H_D and the new unlearnt digests after applying the queues.
    fn next_sets(&self) -> (Dataset, HashedSet, HashedSet) {
        let removed: BTreeSet<u64> = self.pending_delete.iter().map(|p| p.uid).collect();
        let points: Vec<DataPoint> = self
            .dataset
            .points
            .iter()
            .chain(&self.pending_add)
            .filter(|p| !removed.contains(&p.uid))
            .cloned()
            .collect();
        let dataset = Dataset {
            arity: self.dataset.arity,
            points,
        };
        let h_d = HashedSet::of_points(&dataset.points);
        let h_u_add = HashedSet::of_points(&self.pending_delete);
        (dataset, h_d, h_u_add)
    }

    /// Runs one iteration: applies the queues, retrains, commits and proves.
    /// On error the state is left untouched.
    pub fn prove_update(&mut self, pp: &PublicParams) -> Result<(Commitment, UpdateProof), ProtocolError> {
        let cfg = &pp.config;
        let (dataset, h_d, h_u_add) = self.next_sets();
        if dataset.len() > cfg.data_capacity {
            return Err(ProtocolError::ShapeOverflow(format!(
                "{} training points, capacity {}",
                dataset.len(),
                cfg.data_capacity
            )));
        }
        if h_u_add.len() > cfg.add_capacity {
            return Err(ProtocolError::ShapeOverflow(format!(
                "{} deletions in one update, capacity {}",
                h_u_add.len(),
                cfg.add_capacity
            )));
        }
        if self.h_u.len() + h_u_add.len() > cfg.unlearnt_capacity {
            return Err(ProtocolError::ShapeOverflow(format!(
                "{} unlearnt points in total, capacity {}",
                self.h_u.len() + h_u_add.len(),
                cfg.unlearnt_capacity
            )));
        }
        let mut h_u = self.h_u.clone();
        h_u.items.extend(h_u_add.items.iter().copied());
        if let Some(h) = h_d.items.iter().find(|h| h_u.contains(h)) {
            return Err(ProtocolError::StateCorrupted(format!("digest {h} is both trained on and unlearnt")));
        }

        let model = train_model(&dataset, &cfg.train)?;
        let com = Commitment {
            h_m: model.digest().map_err(|e| ProtocolError::StateCorrupted(e.to_string()))?,
            h_d: hashing::hash_data(&h_d),
            h_u: hashing::hash_unlearn(&h_u),
        };
        let data_input = DataWitnessInput {
            h_d: h_d.clone(),
            h_u_prev: self.h_u.clone(),
            h_u_add,
        };
        let phi_m = model_public_inputs(com.h_m, com.h_d);
        let phi_d = data_public_inputs(com.h_d, self.h_u_root, com.h_u);
        let (pi_m, pi_d) = rayon::join(
            || prove_model(pp, &phi_m, &dataset),
            || prove_data(pp, &phi_d, &data_input),
        );
        let proof = UpdateProof {
            phi_m,
            pi_m: pi_m?,
            phi_d,
            pi_d: pi_d?,
        };

        self.iteration += 1;
        self.dataset = dataset;
        self.h_d = h_d;
        self.h_u = h_u;
        self.h_u_root = com.h_u;
        self.model = model;
        for p in self.pending_delete.drain(..) {
            self.deleted.insert(p.uid);
            self.unlearnt.push(p);
        }
        self.pending_add.clear();
        Ok((com, proof))
    }

    /// Membership path of `d` in the current unlearnt chain.
    pub fn prove_unlearn(&self, d: &DataPoint) -> Result<UnlearnProof, ProtocolError> {
        let path = hashing::compute_tree_path(d, &self.h_u).map_err(|_| ProtocolError::NotMember(d.uid))?;
        Ok(UnlearnProof {
            iteration: self.iteration,
            path,
        })
    }

    pub fn commitment(&self) -> Result<Commitment, ProtocolError> {
        Ok(Commitment {
            h_m: self.model.digest().map_err(|e| ProtocolError::StateCorrupted(e.to_string()))?,
            h_d: hashing::hash_data(&self.h_d),
            h_u: self.h_u_root,
        })
    }

    /// Recomputes every derived field and reports the first inconsistency.
    pub fn check_invariants(&self) -> Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::StateCorrupted(m.to_string()));
        if HashedSet::of_points(&self.dataset.points) != self.h_d {
            return bad("H_D does not match the dataset");
        }
        if hashing::hash_unlearn(&self.h_u) != self.h_u_root {
            return bad("h_U does not match H_U");
        }
        if HashedSet::of_points(&self.unlearnt) != self.h_u {
            return bad("H_U does not match the unlearnt points");
        }
        if self.h_d.items.iter().any(|h| self.h_u.contains(h)) {
            return bad("H_D and H_U intersect");
        }
        if !self.unlearnt.iter().all(|p| self.deleted.contains(&p.uid)) {
            return bad("an unlearnt point is missing from the deleted ledger");
        }
        Ok(())
    }
}

/// Proof for the model relation with statement `phi = (h_m, h_D)`.
pub fn prove_model(pp: &PublicParams, phi: &[FieldElement], d: &Dataset) -> Result<ProofBlob, ProtocolError> {
    let (_, w) = circuits::synthesize_model_witness(&pp.config.model_shape(), phi, d, false)?;
    Ok(proofsys::prove(&pp.model_relation, &pp.model_setup, phi, &w)?)
}

/// Proof for the data relation with statement `phi = (h_D, h_U_prev, h_U)`.
pub fn prove_data(pp: &PublicParams, phi: &[FieldElement], input: &DataWitnessInput) -> Result<ProofBlob, ProtocolError> {
    let (_, w) = circuits::synthesize_data_witness(&pp.config.data_shape(), phi, input, false)?;
    Ok(proofsys::prove(&pp.data_relation, &pp.data_setup, phi, &w)?)
}

/// Binds the proof statements to the two commitments and checks both proofs.
pub fn verify_update(pp: &PublicParams, prev: &Commitment, cur: &Commitment, proof: &UpdateProof) -> bool {
    if proof.phi_m != model_public_inputs(cur.h_m, cur.h_d) || proof.phi_d != data_public_inputs(cur.h_d, prev.h_u, cur.h_u) {
        return false;
    }
    let (m, d) = rayon::join(
        || proofsys::verify(&pp.model_relation, &pp.model_setup, &proof.phi_m, &proof.pi_m),
        || proofsys::verify(&pp.data_relation, &pp.data_setup, &proof.phi_d, &proof.pi_d),
    );
    m && d
}

pub fn verify_unlearn(_pp: &PublicParams, d: &DataPoint, com: &Commitment, proof: &UnlearnProof) -> bool {
    hashing::verify_tree_path(d, &com.h_u, &proof.path)
}

/// User-side state: public parameters plus the latest verified commitment.
#[derive(Debug, Clone)]
pub struct Verifier {
    pub pp: PublicParams,
    pub iteration: usize,
    pub latest: Commitment,
}

impl Verifier {
    /// Starts from a verified initial commitment.
    pub fn new(pp: PublicParams, com0: Commitment, pi0: &InitProof) -> Option<Self> {
        verify_init(&pp, &com0, pi0).then_some(Verifier {
            pp,
            iteration: 0,
            latest: com0,
        })
    }

    /// Accepts `com` as the next commitment if its proof verifies.
    pub fn advance(&mut self, com: Commitment, proof: &UpdateProof) -> bool {
        let ok = verify_update(&self.pp, &self.latest, &com, proof);
        if ok {
            self.latest = com;
            self.iteration += 1;
        }
        ok
    }

    pub fn check_unlearn(&self, d: &DataPoint, proof: &UnlearnProof) -> bool {
        verify_unlearn(&self.pp, d, &self.latest, proof)
    }
}

/// `commitments/com_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentEnvelope {
    pub version: u32,
    pub iteration: usize,
    pub h_m: HashDigest,
    pub h_d: HashDigest,
    pub h_u: HashDigest,
}

impl CommitmentEnvelope {
    pub fn new(iteration: usize, c: &Commitment) -> Self {
        CommitmentEnvelope {
            version: ENVELOPE_VERSION,
            iteration,
            h_m: c.h_m,
            h_d: c.h_d,
            h_u: c.h_u,
        }
    }

    pub fn commitment(&self) -> Commitment {
        Commitment {
            h_m: self.h_m,
            h_d: self.h_d,
            h_u: self.h_u,
        }
    }
}

/// `proofs/update_i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateProofEnvelope {
    pub version: u32,
    pub iteration: usize,
    pub phi_m: Vec<FieldElement>,
    pub pi_m: ProofEnvelope,
    pub phi_d: Vec<FieldElement>,
    pub pi_d: ProofEnvelope,
}

impl UpdateProofEnvelope {
    pub fn new(iteration: usize, p: &UpdateProof) -> Self {
        UpdateProofEnvelope {
            version: ENVELOPE_VERSION,
            iteration,
            phi_m: p.phi_m.clone(),
            pi_m: p.pi_m.to_envelope(),
            phi_d: p.phi_d.clone(),
            pi_d: p.pi_d.to_envelope(),
        }
    }

    pub fn proof(&self) -> Result<UpdateProof, ProofError> {
        Ok(UpdateProof {
            phi_m: self.phi_m.clone(),
            pi_m: ProofBlob::from_envelope(&self.pi_m)?,
            phi_d: self.phi_d.clone(),
            pi_d: ProofBlob::from_envelope(&self.pi_d)?,
        })
    }
}

/// `proofs/unlearn_<i>_<uid>`: the path envelope plus the iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearnProofEnvelope {
    pub version: u32,
    pub iteration: usize,
    pub point_uid: u64,
    pub path: Vec<HashDigest>,
}

impl UnlearnProofEnvelope {
    pub fn new(uid: u64, p: &UnlearnProof) -> Self {
        UnlearnProofEnvelope {
            version: ENVELOPE_VERSION,
            iteration: p.iteration,
            point_uid: uid,
            path: p.path.nodes.clone(),
        }
    }

    pub fn proof(&self) -> UnlearnProof {
        UnlearnProof {
            iteration: self.iteration,
            path: MembershipPath {
                nodes: self.path.clone(),
            },
        }
    }
}

/// `state.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEnvelope {
    pub version: u32,
    pub state: ServerState,
}

/// `pub/config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEnvelope {
    pub version: u32,
    pub config: ProtocolConfig,
    pub model_fingerprint: String,
    pub data_fingerprint: String,
}
