//! Setup, prove and verify behind one interface, with three backends:
//!
//! * `witness-check`: the proof is the full witness behind a checksum;
//!   verification re-evaluates every constraint. Not succinct, not hiding.
//! * `snark`: Groth16 over BN254. Setup draws fresh randomness and drops the
//!   toxic waste before returning.
//! * `unsound`: accepts any proof whose public inputs match. Exists only to
//!   show the security game can detect a win when soundness is missing.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use ark_bn254::{Bn254, Fr};
use ark_groth16::{Groth16, PreparedVerifyingKey, Proof, ProvingKey, VerifyingKey};
use ark_relations::r1cs::{
    ConstraintSynthesizer, ConstraintSystemRef, LinearCombination as ArkLc, SynthesisError, Variable as ArkVar,
};
use ark_serialize::{CanonicalDeserialize, CanonicalSerialize};
use ark_snark::SNARK;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::rngs::OsRng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::circuits::{ConstraintSystem, SparseRow, Witness};
use crate::field::{FieldElement, FIELD_BYTES};
use crate::hashing::ENVELOPE_VERSION;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProofError {
    #[error("circuit fingerprint {got} does not match setup {expected}")]
    FingerprintMismatch { expected: String, got: String },
    #[error("witness does not satisfy constraint {0}")]
    UnsatisfiedWitness(usize),
    #[error("witness public inputs differ from the statement")]
    StatementMismatch,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed artifact: {0}")]
    Malformed(String),
    #[error("io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    WitnessCheck,
    Snark,
    Unsound,
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::WitnessCheck => "witness-check",
            Backend::Snark => "snark",
            Backend::Unsound => "unsound",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = ProofError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "witness-check" => Ok(Backend::WitnessCheck),
            "snark" => Ok(Backend::Snark),
            "unsound" => Ok(Backend::Unsound),
            other => Err(ProofError::BackendUnavailable(other.to_string())),
        }
    }
}

/// A finalized relation with its content fingerprint.
#[derive(Debug, Clone)]
pub struct RelationHandle {
    pub circuit: Arc<ConstraintSystem>,
    pub fingerprint: String,
}

impl RelationHandle {
    pub fn new(circuit: ConstraintSystem) -> Self {
        let fingerprint = circuit.fingerprint();
        RelationHandle {
            circuit: Arc::new(circuit),
            fingerprint,
        }
    }
}

struct SnarkKeys {
    pk: Option<ProvingKey<Bn254>>,
    vk: VerifyingKey<Bn254>,
    pvk: PreparedVerifyingKey<Bn254>,
}

/// Output of setup. Holds no trapdoor: Groth16's toxic waste never leaves
/// the setup call.
#[derive(Clone)]
pub struct SetupArtifacts {
    pub backend: Backend,
    pub fingerprint: String,
    snark: Option<Arc<SnarkKeys>>,
}

impl fmt::Debug for SetupArtifacts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SetupArtifacts")
            .field("backend", &self.backend)
            .field("fingerprint", &self.fingerprint)
            .field("has_proving_key", &self.can_prove())
            .finish()
    }
}

/// Serialized form of [`SetupArtifacts`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupEnvelope {
    pub version: u32,
    pub backend: Backend,
    pub fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proving_params: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifying_params: Option<String>,
}

fn ser<T: CanonicalSerialize>(v: &T) -> Vec<u8> {
    let mut out = Vec::with_capacity(v.uncompressed_size());
    v.serialize_uncompressed(&mut out).expect("writing to a vector");
    out
}

impl SetupArtifacts {
    pub fn can_prove(&self) -> bool {
        match self.backend {
            Backend::Snark => self.snark.as_ref().is_some_and(|k| k.pk.is_some()),
            _ => true,
        }
    }

    /// A copy without proving material, as handed to verifiers.
    pub fn verifier_only(&self) -> Self {
        let snark = self.snark.as_ref().map(|k| {
            Arc::new(SnarkKeys {
                pk: None,
                vk: k.vk.clone(),
                pvk: k.pvk.clone(),
            })
        });
        SetupArtifacts {
            backend: self.backend,
            fingerprint: self.fingerprint.clone(),
            snark,
        }
    }

    pub fn to_envelope(&self) -> SetupEnvelope {
        let (proving_params, verifying_params) = match &self.snark {
            Some(k) => (k.pk.as_ref().map(|pk| B64.encode(ser(pk))), Some(B64.encode(ser(&k.vk)))),
            None => (None, None),
        };
        SetupEnvelope {
            version: ENVELOPE_VERSION,
            backend: self.backend,
            fingerprint: self.fingerprint.clone(),
            proving_params,
            verifying_params,
        }
    }

    /// Proving parameters are trusted local files and are loaded without
    /// subgroup checks; verifying parameters are always validated.
    pub fn from_envelope(e: &SetupEnvelope) -> Result<Self, ProofError> {
        if e.version != ENVELOPE_VERSION {
            return Err(ProofError::Malformed(format!("unsupported setup version {}", e.version)));
        }
        let decode = |s: &str| B64.decode(s).map_err(|err| ProofError::Malformed(err.to_string()));
        let snark = match e.backend {
            Backend::Snark => {
                let vk_bytes = decode(e.verifying_params.as_deref().ok_or_else(|| {
                    ProofError::Malformed("snark setup without verifying parameters".into())
                })?)?;
                let vk = VerifyingKey::<Bn254>::deserialize_uncompressed(&vk_bytes[..])
                    .map_err(|err| ProofError::Malformed(err.to_string()))?;
                let pk = match &e.proving_params {
                    Some(s) => Some(
                        ProvingKey::<Bn254>::deserialize_uncompressed_unchecked(&decode(s)?[..])
                            .map_err(|err| ProofError::Malformed(err.to_string()))?,
                    ),
                    None => None,
                };
                let pvk = ark_groth16::prepare_verifying_key(&vk);
                Some(Arc::new(SnarkKeys { pk, vk, pvk }))
            }
            _ => None,
        };
        Ok(SetupArtifacts {
            backend: e.backend,
            fingerprint: e.fingerprint.clone(),
            snark,
        })
    }
}

/// A proof together with the statement it is bound to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofBlob {
    pub backend: Backend,
    pub fingerprint: String,
    pub public_inputs: Vec<FieldElement>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofEnvelope {
    pub version: u32,
    pub backend: Backend,
    pub fingerprint: String,
    pub public_inputs: Vec<FieldElement>,
    pub proof_bytes: String,
}

impl ProofBlob {
    pub fn to_envelope(&self) -> ProofEnvelope {
        ProofEnvelope {
            version: ENVELOPE_VERSION,
            backend: self.backend,
            fingerprint: self.fingerprint.clone(),
            public_inputs: self.public_inputs.clone(),
            proof_bytes: B64.encode(&self.bytes),
        }
    }

    pub fn from_envelope(e: &ProofEnvelope) -> Result<Self, ProofError> {
        if e.version != ENVELOPE_VERSION {
            return Err(ProofError::Malformed(format!("unsupported proof version {}", e.version)));
        }
        Ok(ProofBlob {
            backend: e.backend,
            fingerprint: e.fingerprint.clone(),
            public_inputs: e.public_inputs.clone(),
            bytes: B64
                .decode(&e.proof_bytes)
                .map_err(|err| ProofError::Malformed(err.to_string()))?,
        })
    }

    /// A blob carrying arbitrary bytes for `statement`; used by adversaries
    /// that cannot produce a real proof.
    pub fn forged(sp: &SetupArtifacts, statement: &[FieldElement]) -> Self {
        ProofBlob {
            backend: sp.backend,
            fingerprint: sp.fingerprint.clone(),
            public_inputs: statement.to_vec(),
            bytes: vec![0u8; 64],
        }
    }
}

struct Adapter<'a> {
    cs: &'a ConstraintSystem,
    assignment: Option<&'a [FieldElement]>,
}

fn ark_lc(row: &SparseRow, vars: &[ArkVar]) -> ArkLc<Fr> {
    ArkLc(row.iter().map(|(i, k)| (k.inner(), vars[*i])).collect())
}

impl ConstraintSynthesizer<Fr> for Adapter<'_> {
    fn generate_constraints(self, cs: ConstraintSystemRef<Fr>) -> Result<(), SynthesisError> {
        let value = |i: usize| {
            self.assignment
                .map(|a| a[i].inner())
                .ok_or(SynthesisError::AssignmentMissing)
        };
        let mut vars = Vec::with_capacity(self.cs.num_variables());
        vars.push(ArkVar::One);
        for i in 0..self.cs.num_public {
            vars.push(cs.new_input_variable(|| value(1 + i))?);
        }
        for i in 0..self.cs.num_private {
            vars.push(cs.new_witness_variable(|| value(1 + self.cs.num_public + i))?);
        }
        for c in &self.cs.constraints {
            cs.enforce_constraint(ark_lc(&c.a, &vars), ark_lc(&c.b, &vars), ark_lc(&c.c, &vars))?;
        }
        Ok(())
    }
}

pub fn setup(r: &RelationHandle, backend: Backend) -> Result<SetupArtifacts, ProofError> {
    let snark = match backend {
        Backend::Snark => {
            let adapter = Adapter {
                cs: &r.circuit,
                assignment: None,
            };
            let (pk, vk) = Groth16::<Bn254>::circuit_specific_setup(adapter, &mut OsRng)
                .map_err(|e| ProofError::BackendUnavailable(e.to_string()))?;
            let pvk = ark_groth16::prepare_verifying_key(&vk);
            Some(Arc::new(SnarkKeys { pk: Some(pk), vk, pvk }))
        }
        _ => None,
    };
    Ok(SetupArtifacts {
        backend,
        fingerprint: r.fingerprint.clone(),
        snark,
    })
}

fn check_fingerprint(r: &RelationHandle, sp: &SetupArtifacts) -> Result<(), ProofError> {
    if r.fingerprint != sp.fingerprint {
        return Err(ProofError::FingerprintMismatch {
            expected: sp.fingerprint.clone(),
            got: r.fingerprint.clone(),
        });
    }
    Ok(())
}

fn encode_witness(w: &Witness) -> Vec<u8> {
    let mut payload = Vec::with_capacity(w.assignment.len() * FIELD_BYTES);
    for v in &w.assignment {
        payload.extend_from_slice(&v.to_bytes_be());
    }
    let mut out = Sha256::digest(&payload).to_vec();
    out.extend(payload);
    out
}

fn decode_witness(bytes: &[u8]) -> Option<Vec<FieldElement>> {
    if bytes.len() < 32 || !(bytes.len() - 32).is_multiple_of(FIELD_BYTES) {
        return None;
    }
    let (sum, payload) = bytes.split_at(32);
    if Sha256::digest(payload).as_slice() != sum {
        return None;
    }
    payload
        .chunks_exact(FIELD_BYTES)
        .map(|c| FieldElement::from_bytes_be(c.try_into().expect("exact chunk")).ok())
        .collect()
}

/// Proves `statement` with `witness`. Refuses unsatisfying witnesses.
pub fn prove(
    r: &RelationHandle,
    sp: &SetupArtifacts,
    statement: &[FieldElement],
    witness: &Witness,
) -> Result<ProofBlob, ProofError> {
    check_fingerprint(r, sp)?;
    let cs = &r.circuit;
    if witness.assignment.len() != cs.num_variables() || witness.public_inputs(cs.num_public) != statement {
        return Err(ProofError::StatementMismatch);
    }
    if let Some(i) = cs.first_unsatisfied(witness) {
        return Err(ProofError::UnsatisfiedWitness(i));
    }
    let bytes = match sp.backend {
        Backend::WitnessCheck => encode_witness(witness),
        Backend::Unsound => Vec::new(),
        Backend::Snark => {
            let pk = sp
                .snark
                .as_ref()
                .and_then(|k| k.pk.as_ref())
                .ok_or_else(|| ProofError::BackendUnavailable("no proving parameters loaded".into()))?;
            let adapter = Adapter {
                cs,
                assignment: Some(&witness.assignment),
            };
            let proof = Groth16::<Bn254>::prove(pk, adapter, &mut OsRng)
                .map_err(|e| ProofError::BackendUnavailable(e.to_string()))?;
            let mut out = Vec::new();
            proof.serialize_compressed(&mut out).expect("writing to a vector");
            out
        }
    };
    Ok(ProofBlob {
        backend: sp.backend,
        fingerprint: sp.fingerprint.clone(),
        public_inputs: statement.to_vec(),
        bytes,
    })
}

/// Checks `blob` against `statement`. Never panics on malformed input.
pub fn verify(r: &RelationHandle, sp: &SetupArtifacts, statement: &[FieldElement], blob: &ProofBlob) -> bool {
    if check_fingerprint(r, sp).is_err()
        || blob.backend != sp.backend
        || blob.fingerprint != sp.fingerprint
        || blob.public_inputs != statement
        || statement.len() != r.circuit.num_public
    {
        return false;
    }
    match sp.backend {
        Backend::Unsound => true,
        Backend::WitnessCheck => {
            let Some(assignment) = decode_witness(&blob.bytes) else {
                return false;
            };
            let w = Witness {
                assignment,
                slack: Vec::new(),
            };
            w.assignment.len() == r.circuit.num_variables()
                && w.public_inputs(r.circuit.num_public) == statement
                && crate::circuits::is_satisfied(&r.circuit, &w)
        }
        Backend::Snark => {
            let Some(keys) = sp.snark.as_ref() else {
                return false;
            };
            let Ok(proof) = Proof::<Bn254>::deserialize_compressed(&blob.bytes[..]) else {
                return false;
            };
            let inputs: Vec<Fr> = statement.iter().map(|v| v.inner()).collect();
            Groth16::<Bn254>::verify_with_processed_vk(&keys.pvk, &inputs, &proof).unwrap_or(false)
        }
    }
}

/// Setup artifacts persisted under `<dir>/<fingerprint>.<backend>.json`.
#[derive(Debug, Clone)]
pub struct SetupCache {
    dir: PathBuf,
}

impl SetupCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        SetupCache { dir: dir.into() }
    }

    pub fn path_for(&self, fingerprint: &str, backend: Backend) -> PathBuf {
        self.dir.join(format!("{fingerprint}.{}.json", backend.name()))
    }

    pub fn load_or_setup(&self, r: &RelationHandle, backend: Backend) -> Result<SetupArtifacts, ProofError> {
        let path = self.path_for(&r.fingerprint, backend);
        if path.exists() {
            let sp = read_setup(&path)?;
            if sp.fingerprint == r.fingerprint && sp.backend == backend && sp.can_prove() {
                return Ok(sp);
            }
        }
        let sp = setup(r, backend)?;
        fs::create_dir_all(&self.dir).map_err(|e| ProofError::Io(e.to_string()))?;
        write_setup(&path, &sp)?;
        Ok(sp)
    }
}

pub fn read_setup(path: &Path) -> Result<SetupArtifacts, ProofError> {
    let text = fs::read_to_string(path).map_err(|e| ProofError::Io(format!("{}: {e}", path.display())))?;
    let env: SetupEnvelope = serde_json::from_str(&text).map_err(|e| ProofError::Malformed(e.to_string()))?;
    SetupArtifacts::from_envelope(&env)
}

/// Writes through a temporary file and a rename.
pub fn write_setup(path: &Path, sp: &SetupArtifacts) -> Result<(), ProofError> {
    let text = serde_json::to_string(&sp.to_envelope()).map_err(|e| ProofError::Malformed(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| ProofError::Io(e.to_string()))?;
    fs::rename(&tmp, path).map_err(|e| ProofError::Io(e.to_string()))
}
