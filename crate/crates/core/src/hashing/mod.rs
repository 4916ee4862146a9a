//! Hashing of data points and models, the Merkle tree over training data, and
//! the append-only chain over unlearnt data with its membership paths.

pub mod poseidon;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::field::FieldElement;
use crate::fixed::FixedPoint;

/// Capacity-slot tag for single-input hashing.
pub const TAG_HASH1: u64 = 1;
/// Capacity-slot tag for two-input hashing.
pub const TAG_HASH2: u64 = 2;
/// Capacity-slot tag for the empty-structure sentinel.
pub const TAG_EMPTY: u64 = 3;

/// Current version of every file envelope written by this crate.
pub const ENVELOPE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HashError {
    #[error("cannot hash a model with no parameters")]
    EmptyModel,
    #[error("data point {uid} is not a member of the unlearnt set")]
    NotMember { uid: u64 },
}

/// Output of the field hash; lives in the field so circuits can recompute it.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashDigest(pub FieldElement);

impl HashDigest {
    pub fn value(&self) -> FieldElement {
        self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }
}

impl fmt::Debug for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = self.0.to_hex();
        write!(f, "#{}", &h[h.len() - 12..])
    }
}

impl fmt::Display for HashDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex())
    }
}

/// Hash function selection. Only the circuit-friendly Poseidon instance exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashFunction {
    #[default]
    PoseidonBn254,
}

pub fn hash1(v: FieldElement) -> HashDigest {
    HashDigest(poseidon::hash(FieldElement::from_u64(TAG_HASH1), &[v]))
}

pub fn hash2(l: FieldElement, r: FieldElement) -> HashDigest {
    HashDigest(poseidon::hash(FieldElement::from_u64(TAG_HASH2), &[l, r]))
}

/// `hash1(EMPTY_SENTINEL)`: the root of an empty tree and the base of the chain.
/// It uses its own domain tag, so it never equals `hash1(0)`.
pub fn empty_root() -> HashDigest {
    HashDigest(poseidon::hash(FieldElement::from_u64(TAG_EMPTY), &[FieldElement::ZERO]))
}

/// A training example `(uid, x, y)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataPoint {
    pub uid: u64,
    pub x: Vec<FixedPoint>,
    pub y: FixedPoint,
}

impl DataPoint {
    pub fn new(uid: u64, x: Vec<FixedPoint>, y: FixedPoint) -> Self {
        DataPoint { uid, x, y }
    }

    pub fn arity(&self) -> usize {
        self.x.len()
    }
}

/// `h := hash1(uid)`, then `h := hash2(h, hash1(x_j))` per feature, then the label.
pub fn hash_data_point(d: &DataPoint) -> HashDigest {
    let mut h = hash1(FieldElement::from_u64(d.uid));
    for xj in &d.x {
        h = hash2(h.0, hash1(xj.repr()).0);
    }
    hash2(h.0, hash1(d.y.repr()).0)
}

/// `h := hash1(w_0)`, then `h := hash2(h, hash1(w_i))`.
pub fn hash_model(weights: &[FixedPoint]) -> Result<HashDigest, HashError> {
    let (first, rest) = weights.split_first().ok_or(HashError::EmptyModel)?;
    Ok(rest
        .iter()
        .fold(hash1(first.repr()), |h, w| hash2(h.0, hash1(w.repr()).0)))
}

/// Ordered list of digests (H_D or H_U). Order is significant.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HashedSet {
    pub items: Vec<HashDigest>,
}

impl HashedSet {
    pub fn new(items: Vec<HashDigest>) -> Self {
        HashedSet { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn contains(&self, h: &HashDigest) -> bool {
        self.items.contains(h)
    }

    pub fn push(&mut self, h: HashDigest) {
        self.items.push(h);
    }

    pub fn of_points<'a>(points: impl IntoIterator<Item = &'a DataPoint>) -> Self {
        HashedSet {
            items: points.into_iter().map(hash_data_point).collect(),
        }
    }
}

impl FromIterator<HashDigest> for HashedSet {
    fn from_iter<I: IntoIterator<Item = HashDigest>>(iter: I) -> Self {
        HashedSet {
            items: iter.into_iter().collect(),
        }
    }
}

/// Merkle root over `hd`, pairing left to right; an odd trailing node is
/// carried up unhashed.
pub fn hash_data(hd: &HashedSet) -> HashDigest {
    if hd.is_empty() {
        return empty_root();
    }
    let mut level = hd.items.clone();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| match pair {
                [l, r] => hash2(l.0, r.0),
                [single] => *single,
                _ => unreachable!(),
            })
            .collect();
    }
    level[0]
}

/// Append-only chain root: `psi := empty_root()`, then `psi := hash2(psi, h)`.
pub fn hash_unlearn(hu: &HashedSet) -> HashDigest {
    extend_chain(empty_root(), &hu.items)
}

/// Continues a chain from an existing root.
pub fn extend_chain(root: HashDigest, items: &[HashDigest]) -> HashDigest {
    items.iter().fold(root, |psi, h| hash2(psi.0, h.0))
}

/// Membership path in the unlearnt chain: the intermediate root below the
/// target followed by every digest appended after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MembershipPath {
    pub nodes: Vec<HashDigest>,
}

/// Path for the first occurrence of `hash_data_point(d)` in `hu`.
pub fn compute_tree_path(d: &DataPoint, hu: &HashedSet) -> Result<MembershipPath, HashError> {
    let hd = hash_data_point(d);
    let idx = hu
        .items
        .iter()
        .position(|h| *h == hd)
        .ok_or(HashError::NotMember { uid: d.uid })?;
    let mut nodes = Vec::with_capacity(hu.len() - idx);
    nodes.push(extend_chain(empty_root(), &hu.items[..idx]));
    nodes.extend_from_slice(&hu.items[idx + 1..]);
    Ok(MembershipPath { nodes })
}

/// Recomputes the chain root from `path` and compares it with `root`.
pub fn verify_tree_path(d: &DataPoint, root: &HashDigest, path: &MembershipPath) -> bool {
    let Some((below, after)) = path.nodes.split_first() else {
        return false;
    };
    let psi = hash2(below.0, hash_data_point(d).0);
    extend_chain(psi, after) == *root
}

/// On-disk form of a membership path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathEnvelope {
    pub version: u32,
    pub point_uid: u64,
    pub path: Vec<HashDigest>,
}

impl PathEnvelope {
    pub fn new(point_uid: u64, path: &MembershipPath) -> Self {
        PathEnvelope {
            version: ENVELOPE_VERSION,
            point_uid,
            path: path.nodes.clone(),
        }
    }

    pub fn path(&self) -> MembershipPath {
        MembershipPath {
            nodes: self.path.clone(),
        }
    }
}
