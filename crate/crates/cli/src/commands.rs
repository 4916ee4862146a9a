use std::path::Path;
use std::time::Instant;

use anyhow::Context;
use serde::Serialize;
use serde_json::json;
use unlearn_core::fixed::FixedPoint;
use unlearn_core::game::{self, GameConfig, GameHop, GameReport};
use unlearn_core::hashing::{DataPoint, ENVELOPE_VERSION};
use unlearn_core::proofsys::{read_setup, Backend, ProofError, SetupCache};
use unlearn_core::protocol::{
    global_setup, global_setup_cached, public_params_from_setups, server_init, verify_init, verify_unlearn,
    verify_update, CommitmentEnvelope, ConfigEnvelope, InitProof, ProtocolConfig, ProtocolError, PublicParams,
    ServerState, StateEnvelope, UnlearnProofEnvelope, UpdateProofEnvelope,
};
use unlearn_core::training::Dataset;

use crate::config::CliConfig;
use crate::ingest::{ingest_csv, train_test_split, Schema};
use crate::store::{read_json, write_json, Layout};
use crate::Failure;

/// Command result: a JSON value for `--json` and a line for humans.
#[derive(Debug, Clone)]
pub struct Output {
    pub json: serde_json::Value,
    pub text: String,
}

impl Output {
    fn new(json: serde_json::Value, text: impl Into<String>) -> Self {
        Output {
            json,
            text: text.into(),
        }
    }
}

fn request_error(e: ProtocolError) -> Failure {
    match e {
        ProtocolError::StateCorrupted(m) => Failure::Corrupt(m),
        ProtocolError::Proof(ProofError::Io(m)) => Failure::Io(m),
        ProtocolError::Proof(ProofError::Malformed(m)) => Failure::Corrupt(m),
        ProtocolError::Proof(e @ ProofError::FingerprintMismatch { .. }) => Failure::Corrupt(e.to_string()),
        other => Failure::Usage(other.to_string()),
    }
}

fn load_config(l: &Layout) -> Result<ConfigEnvelope, Failure> {
    let env: ConfigEnvelope = read_json(&l.config())
        .map_err(|e| match e {
            Failure::Usage(_) => Failure::Usage(format!("{} has not been set up; run `unlearn setup`", l.root.display())),
            e => e,
        })?;
    if env.version != ENVELOPE_VERSION {
        return Err(Failure::Corrupt(format!("config envelope version {}", env.version)));
    }
    Ok(env)
}

/// Public parameters from the stored setup; `proving` keeps the proving keys.
pub fn load_params(l: &Layout, proving: bool) -> Result<PublicParams, Failure> {
    let env = load_config(l)?;
    let cache = SetupCache::new(l.setup_dir());
    let read = |fp: &str| {
        read_setup(&cache.path_for(fp, env.config.backend)).map_err(|e| match e {
            ProofError::Io(m) => Failure::Corrupt(format!("setup artifacts missing: {m}")),
            e => Failure::Corrupt(e.to_string()),
        })
    };
    let pp = public_params_from_setups(&env.config, read(&env.model_fingerprint)?, read(&env.data_fingerprint)?)
        .map_err(|e| Failure::Corrupt(e.to_string()))?;
    if proving && !(pp.model_setup.can_prove() && pp.data_setup.can_prove()) {
        return Err(Failure::Corrupt("stored setup has no proving parameters".into()));
    }
    Ok(if proving { pp } else { pp.verifier_view() })
}

pub fn load_state(l: &Layout) -> Result<ServerState, Failure> {
    let env: StateEnvelope = read_json(&l.state()).map_err(|e| match e {
        Failure::Usage(_) => Failure::Usage(format!("{} is not initialized; run `unlearn init`", l.root.display())),
        e => e,
    })?;
    if env.version != ENVELOPE_VERSION {
        return Err(Failure::Corrupt(format!("state envelope version {}", env.version)));
    }
    env.state.check_invariants().map_err(|e| Failure::Corrupt(e.to_string()))?;
    Ok(env.state)
}

fn save_state(l: &Layout, st: &ServerState) -> Result<(), Failure> {
    write_json(
        &l.state(),
        &StateEnvelope {
            version: ENVELOPE_VERSION,
            state: st.clone(),
        },
    )
}

fn protocol_config(cfg: &CliConfig) -> Result<ProtocolConfig, Failure> {
    cfg.protocol_config().map_err(|e| Failure::Usage(e.to_string()))
}

pub fn cmd_setup(l: &Layout, mut cfg: CliConfig) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    if l.state().exists() {
        return Err(Failure::Usage(format!("{} is already initialized", l.root.display())).into());
    }
    if cfg.arity.is_none() {
        if let Some(path) = &cfg.dataset {
            let scale = unlearn_core::ScaleConfig::new(cfg.gamma, cfg.range_bits)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let d = ingest_csv(path, &Schema::default(), &scale).map_err(|e| Failure::Usage(e.to_string()))?;
            cfg.arity = Some(d.dataset.arity);
        }
    }
    let pcfg = protocol_config(&cfg)?;
    let started = Instant::now();
    let pp = global_setup_cached(&pcfg, &SetupCache::new(l.setup_dir())).map_err(request_error)?;
    let elapsed = started.elapsed();
    let env = ConfigEnvelope {
        version: ENVELOPE_VERSION,
        config: pcfg,
        model_fingerprint: pp.model_relation.fingerprint.clone(),
        data_fingerprint: pp.data_relation.fingerprint.clone(),
    };
    crate::store::write_atomic(&l.config_text(), cfg.render().as_bytes())?;
    write_json(&l.config(), &env)?;
    let m = pp.model_relation.circuit.stats();
    let d = pp.data_relation.circuit.stats();
    Ok(Output::new(
        json!({
            "backend": env.config.backend,
            "model_fingerprint": env.model_fingerprint,
            "data_fingerprint": env.data_fingerprint,
            "model_circuit": m,
            "data_circuit": d,
            "setup_ms": elapsed.as_millis() as u64,
        }),
        format!(
            "setup done ({}): model relation {} constraints, data relation {} constraints",
            env.config.backend, m.constraint_count, d.constraint_count
        ),
    ))
}

pub fn cmd_init(l: &Layout) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    if l.state().exists() {
        return Err(Failure::Usage(format!("{} is already initialized", l.root.display())).into());
    }
    let pp = load_params(l, false)?;
    let (st, com0, pi0) = server_init(&pp);
    write_json(&l.commitment(0), &CommitmentEnvelope::new(0, &com0))?;
    write_json(&l.init_proof(), &pi0)?;
    save_state(l, &st)?;
    Ok(Output::new(
        json!({ "iteration": 0, "commitment": com0 }),
        format!("initialized; h_m = {}", com0.h_m),
    ))
}

/// A point given on the command line.
#[derive(Debug, Clone)]
pub struct PointArgs {
    pub uid: u64,
    pub features: Vec<String>,
    pub label: String,
}

pub enum AddSource<'a> {
    Point(PointArgs),
    Csv(&'a Path),
}

fn parse_point(cfg: &ProtocolConfig, p: &PointArgs) -> Result<DataPoint, Failure> {
    let enc = |s: &str| {
        FixedPoint::from_decimal_str(s.trim(), cfg.scale()).map_err(|e| Failure::Usage(format!("`{s}`: {e}")))
    };
    let x = p.features.iter().map(|s| enc(s)).collect::<Result<Vec<_>, _>>()?;
    Ok(DataPoint::new(p.uid, x, enc(&p.label)?))
}

pub fn cmd_add(l: &Layout, src: AddSource<'_>) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    let env = load_config(l)?;
    let cfg = &env.config;
    let mut st = load_state(l)?;
    let (points, held_out) = match src {
        AddSource::Point(p) => (vec![parse_point(cfg, &p)?], None),
        AddSource::Csv(path) => {
            let cli = CliConfig::parse(&std::fs::read_to_string(l.config_text()).context("reading config.txt")?)
                .map_err(|e| Failure::Corrupt(e.to_string()))?;
            let d = ingest_csv(path, &Schema::default(), cfg.scale()).map_err(|e| Failure::Usage(e.to_string()))?;
            let (train, test) = train_test_split(&d.dataset, cli.split);
            (train.points, Some(test))
        }
    };
    for p in &points {
        st.queue_add(cfg, p.clone()).map_err(request_error)?;
    }
    if let Some(test) = &held_out {
        write_json(&l.holdout(), test)?;
    }
    save_state(l, &st)?;
    Ok(Output::new(
        json!({
            "queued": points.iter().map(|p| p.uid).collect::<Vec<_>>(),
            "held_out": held_out.as_ref().map_or(0, Dataset::len),
            "pending_add": st.pending_add.len(),
        }),
        format!("queued {} point(s) for addition", points.len()),
    ))
}

pub fn cmd_delete(l: &Layout, uid: u64) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    let env = load_config(l)?;
    let mut st = load_state(l)?;
    let point = st
        .dataset
        .points
        .iter()
        .chain(&st.pending_add)
        .chain(&st.unlearnt)
        .find(|p| p.uid == uid)
        .cloned()
        .ok_or_else(|| Failure::Usage(format!("uid {uid} is not in the training set")))?;
    st.queue_delete(&env.config, point).map_err(request_error)?;
    save_state(l, &st)?;
    Ok(Output::new(
        json!({ "uid": uid, "pending_delete": st.pending_delete.len() }),
        format!("queued uid {uid} for unlearning"),
    ))
}

pub fn cmd_update(l: &Layout) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    let pp = load_params(l, true)?;
    let mut st = load_state(l)?;
    let (added, deleted) = (st.pending_add.len(), st.pending_delete.len());
    let started = Instant::now();
    let (com, proof) = st.prove_update(&pp).map_err(request_error)?;
    let elapsed = started.elapsed();
    let i = st.iteration;
    write_json(&l.commitment(i), &CommitmentEnvelope::new(i, &com))?;
    write_json(&l.update_proof(i), &UpdateProofEnvelope::new(i, &proof))?;
    // the state file is the commit point
    save_state(l, &st)?;
    Ok(Output::new(
        json!({
            "iteration": i,
            "added": added,
            "unlearnt": deleted,
            "training_points": st.dataset.len(),
            "commitment": com,
            "prove_ms": elapsed.as_millis() as u64,
        }),
        format!(
            "iteration {i}: +{added} / -{deleted}, {} training points, h_m = {}",
            st.dataset.len(),
            com.h_m
        ),
    ))
}

fn read_commitment(l: &Layout, i: usize) -> Result<unlearn_core::protocol::Commitment, Failure> {
    let env: CommitmentEnvelope = read_json(&l.commitment(i))?;
    if env.iteration != i {
        return Err(Failure::Corrupt(format!("com_{i} claims iteration {}", env.iteration)));
    }
    Ok(env.commitment())
}

pub fn cmd_verify_update(l: &Layout, i: usize) -> anyhow::Result<Output> {
    let pp = load_params(l, false)?;
    let cur = read_commitment(l, i)?;
    let ok = if i == 0 {
        let pi0: InitProof = read_json(&l.init_proof())?;
        verify_init(&pp, &cur, &pi0)
    } else {
        let prev = read_commitment(l, i - 1)?;
        let env: UpdateProofEnvelope = read_json(&l.update_proof(i))?;
        if env.iteration != i {
            return Err(Failure::Reject(format!("proof file claims iteration {}", env.iteration)).into());
        }
        match env.proof() {
            Ok(p) => verify_update(&pp, &prev, &cur, &p),
            Err(e) => return Err(Failure::Reject(format!("malformed proof: {e}")).into()),
        }
    };
    if !ok {
        return Err(Failure::Reject(format!("proof of update {i} rejected")).into());
    }
    Ok(Output::new(json!({ "iteration": i, "accepted": true }), format!("update {i} verified")))
}

pub fn cmd_prove_unlearn(l: &Layout, uid: u64) -> anyhow::Result<Output> {
    let _lock = l.lock()?;
    let st = load_state(l)?;
    let d = st
        .unlearnt
        .iter()
        .find(|p| p.uid == uid)
        .ok_or_else(|| Failure::Usage(format!("uid {uid} has not been unlearnt")))?;
    let proof = st.prove_unlearn(d).map_err(request_error)?;
    let path = l.unlearn_proof(proof.iteration, uid);
    write_json(&path, &UnlearnProofEnvelope::new(uid, &proof))?;
    Ok(Output::new(
        json!({ "uid": uid, "iteration": proof.iteration, "path_length": proof.path.nodes.len(), "file": path }),
        format!("wrote {}", path.display()),
    ))
}

pub fn cmd_verify_unlearn(l: &Layout, uid: u64, k: usize) -> anyhow::Result<Output> {
    let pp = load_params(l, false)?;
    let st = load_state(l)?;
    let d = st
        .unlearnt
        .iter()
        .find(|p| p.uid == uid)
        .ok_or_else(|| Failure::Usage(format!("uid {uid} has not been unlearnt")))?;
    let com = read_commitment(l, k)?;
    let env: UnlearnProofEnvelope = read_json(&l.unlearn_proof(k, uid)).map_err(|e| match e {
        Failure::Corrupt(m) => Failure::Reject(format!("malformed proof: {m}")),
        e => e,
    })?;
    if env.point_uid != uid || env.iteration != k {
        return Err(Failure::Reject(format!(
            "proof is for uid {} at iteration {}",
            env.point_uid, env.iteration
        ))
        .into());
    }
    if !verify_unlearn(&pp, d, &com, &env.proof()) {
        return Err(Failure::Reject(format!("path mismatch: proof for uid {uid} does not reach h_U of iteration {k}")).into());
    }
    Ok(Output::new(
        json!({ "uid": uid, "iteration": k, "accepted": true }),
        format!("unlearning of uid {uid} verified against iteration {k}"),
    ))
}

#[derive(Debug, Clone)]
pub struct GameArgs {
    pub strategy: String,
    pub seeds: u64,
    pub hop: GameHop,
    pub check_commitments: bool,
    pub backend: Option<Backend>,
}

pub fn cmd_game(l: &Layout, args: &GameArgs) -> anyhow::Result<Output> {
    let stored = load_config(l)?;
    let pp = match args.backend {
        Some(b) if b != stored.config.backend => {
            let cfg = ProtocolConfig {
                backend: b,
                ..stored.config.clone()
            };
            global_setup(&cfg).map_err(request_error)?
        }
        _ => load_params(l, true)?,
    };
    let strategies = if args.strategy == "all" {
        game::builtin_strategies()
    } else {
        vec![game::strategy_by_name(&args.strategy)
            .ok_or_else(|| Failure::Usage(format!("unknown strategy `{}`", args.strategy)))?]
    };
    let cfg = GameConfig {
        hop: args.hop,
        check_commitments: args.check_commitments,
    };
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let reports: Vec<GameReport> =
        game::run_suite(&pp, &cfg, &strategies, &seeds).map_err(|e| Failure::Usage(e.to_string()))?;
    let wins = reports.iter().filter(|r| r.verdict == 1).count();
    let mut text = String::new();
    for r in &reports {
        let check = r.failing_check.map_or("-".to_string(), |c| c.to_string());
        text += &format!("{:<24} seed {:>3}  verdict {}  failing check {}\n", r.strategy, r.seed, r.verdict, check);
    }
    text += &format!("{} game(s), {} won by the adversary", reports.len(), wins);
    let out = Output::new(json!({ "reports": reports, "wins": wins }), text);
    if wins > 0 {
        // the adversary winning is a rejection of the protocol instance
        eprintln!("{}", out.text);
        return Err(Failure::Reject(format!("{wins} game(s) won by the adversary")).into());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub size: usize,
    pub unlearnt: usize,
    pub model_constraints: usize,
    pub data_constraints: usize,
    pub setup_ms: u64,
    pub prove_ms: u64,
    pub verify_ms: f64,
}

pub fn cmd_bench(l: &Layout, sizes: &[usize], fraction: f64) -> anyhow::Result<Output> {
    let base = match load_config(l) {
        Ok(env) => env.config,
        Err(Failure::Usage(_)) => protocol_config(&CliConfig {
            arity: Some(1),
            ..CliConfig::default()
        })?,
        Err(e) => return Err(e.into()),
    };
    let mut rows = Vec::new();
    for &n in sizes {
        let unlearnt = ((n as f64 * fraction).round() as usize).clamp(1, n);
        let cfg = ProtocolConfig {
            data_capacity: n,
            unlearnt_capacity: unlearnt,
            add_capacity: unlearnt,
            ..base.clone()
        };
        let t = Instant::now();
        let pp = global_setup(&cfg).map_err(request_error)?;
        let setup_ms = t.elapsed().as_millis() as u64;
        let (mut st, com0, _) = server_init(&pp);
        let gamma = cfg.scale().gamma() as i128;
        for uid in 0..n as u64 {
            let x = (0..cfg.train.arity)
                .map(|j| FixedPoint::from_raw(((uid as i128 * 7919 + j as i128 * 104729) % (2 * gamma)) - gamma))
                .collect();
            let y = FixedPoint::from_raw(if uid % 2 == 0 { gamma } else { 0 });
            st.queue_add(&cfg, DataPoint::new(uid, x, y)).map_err(request_error)?;
        }
        let (com1, _) = st.prove_update(&pp).map_err(request_error)?;
        for p in st.dataset.points[..unlearnt].to_vec() {
            st.queue_delete(&cfg, p).map_err(request_error)?;
        }
        let t = Instant::now();
        let (com2, proof) = st.prove_update(&pp).map_err(request_error)?;
        let prove_ms = t.elapsed().as_millis() as u64;
        let t = Instant::now();
        let ok = verify_update(&pp, &com1, &com2, &proof);
        let verify_ms = t.elapsed().as_secs_f64() * 1e3;
        if !ok || com0 == com1 {
            return Err(Failure::Corrupt(format!("benchmark run at size {n} did not verify")).into());
        }
        rows.push(BenchRow {
            size: n,
            unlearnt,
            model_constraints: pp.model_relation.circuit.stats().constraint_count,
            data_constraints: pp.data_relation.circuit.stats().constraint_count,
            setup_ms,
            prove_ms,
            verify_ms,
        });
    }
    let mut text = format!(
        "{:>6} {:>9} {:>12} {:>12} {:>10} {:>10} {:>10}\n",
        "size", "unlearnt", "model_cons", "data_cons", "setup_ms", "prove_ms", "verify_ms"
    );
    for r in &rows {
        text += &format!(
            "{:>6} {:>9} {:>12} {:>12} {:>10} {:>10} {:>10.2}\n",
            r.size, r.unlearnt, r.model_constraints, r.data_constraints, r.setup_ms, r.prove_ms, r.verify_ms
        );
    }
    Ok(Output::new(
        json!({ "backend": base.backend, "rows": rows }),
        text.trim_end().to_string(),
    ))
}
