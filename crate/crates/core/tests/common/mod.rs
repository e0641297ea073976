//! Independent oracles shared by the integration tests and the acceptance
//! harness. Nothing here calls into the code under test beyond reading
//! plain data structures.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::{json, Map, Value};

use tippy_core::job_engine::{Engine, JobError};
use tippy_core::lab_model::{seed_world, ActorStatus, Job, JobState, World};
use tippy_core::molecule::Molecule;

pub const CORPUS: &str = include_str!("../data/molecules.tsv");
pub const MASSES: &str = include_str!("../../data/atomic_masses.tsv");

pub struct Entry {
    pub name: &'static str,
    pub smiles: &'static str,
    pub formula: &'static str,
}

pub fn corpus() -> Vec<Entry> {
    CORPUS
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            Entry {
                name: cols[0],
                smiles: cols[1],
                formula: cols[2],
            }
        })
        .collect()
}

pub fn mass_table() -> BTreeMap<&'static str, f64> {
    MASSES
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            (cols[0], cols[2].trim().parse().unwrap())
        })
        .collect()
}

/// Element counts from a formula string such as "C9H8O4" or "ClNa".
pub fn parse_formula(f: &str) -> BTreeMap<String, u32> {
    let mut out = BTreeMap::new();
    let chars: Vec<char> = f.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let mut sym = chars[i].to_string();
        i += 1;
        while i < chars.len() && chars[i].is_ascii_lowercase() {
            sym.push(chars[i]);
            i += 1;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let n: u32 = if start == i {
            1
        } else {
            chars[start..i].iter().collect::<String>().parse().unwrap()
        };
        *out.entry(sym).or_insert(0) += n;
    }
    out
}

/// Hill order: C then H then alphabetical with carbon, fully alphabetical
/// without it.
pub fn hill(counts: &BTreeMap<String, u32>) -> String {
    let mut keys: Vec<&String> = counts.keys().collect();
    if counts.contains_key("C") {
        keys.sort_by_key(|k| match k.as_str() {
            "C" => (0, String::new()),
            "H" => (1, String::new()),
            other => (2, other.to_string()),
        });
    }
    keys.iter()
        .map(|k| match counts[*k] {
            1 => k.to_string(),
            n => format!("{k}{n}"),
        })
        .collect()
}

pub fn oracle_mass(formula: &str) -> f64 {
    let table = mass_table();
    parse_formula(formula)
        .iter()
        .map(|(el, n)| table[el.as_str()] * *n as f64)
        .sum()
}

/// Number of independent cycles: the GF(2) rank of the edge vectors of
/// every simple cycle in the bond graph.
pub fn cycle_rank(mol: &Molecule) -> usize {
    let n = mol.atoms.len();
    let mut adj = vec![Vec::new(); n];
    for (e, b) in mol.bonds.iter().enumerate() {
        adj[b.a].push((b.b, e));
        adj[b.b].push((b.a, e));
    }
    let mut cycles: Vec<u64> = Vec::new();
    // Cycles are rooted at their smallest vertex to limit duplicates.
    fn dfs(
        start: usize,
        v: usize,
        adj: &[Vec<(usize, usize)>],
        visited: &mut Vec<bool>,
        edges: u64,
        depth: usize,
        out: &mut Vec<u64>,
    ) {
        for &(w, e) in &adj[v] {
            if edges & (1 << e) != 0 {
                continue;
            }
            if w == start && depth >= 2 {
                out.push(edges | (1 << e));
            } else if w > start && !visited[w] {
                visited[w] = true;
                dfs(start, w, adj, visited, edges | (1 << e), depth + 1, out);
                visited[w] = false;
            }
        }
    }
    for s in 0..n {
        let mut visited = vec![false; n];
        visited[s] = true;
        dfs(s, s, &adj, &mut visited, 0, 0, &mut cycles);
    }
    let mut basis: Vec<u64> = Vec::new();
    for mut c in cycles {
        for b in &basis {
            c = c.min(c ^ b);
        }
        if c != 0 {
            basis.push(c);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// Checks that every xref entry points at the matching `N 0 obj` header
/// and that `startxref` points at the table.
pub fn validate_xref(pdf: &[u8]) -> Result<usize, String> {
    let text = String::from_utf8_lossy(pdf);
    let sx = text.rfind("startxref").ok_or("no startxref")?;
    let at: usize = text[sx + 9..]
        .split_whitespace()
        .next()
        .ok_or("no offset")?
        .parse()
        .map_err(|_| "bad offset")?;
    if !text[at..].starts_with("xref") {
        return Err(format!("startxref {at} does not point at xref"));
    }
    let mut parts = text[at + 4..].split_whitespace();
    let first: usize = parts.next().unwrap().parse().unwrap();
    let count: usize = parts.next().unwrap().parse().unwrap();
    if first != 0 {
        return Err("xref does not start at object 0".into());
    }
    let table_start =
        at + text[at..].find(&format!("0 {count}")).unwrap() + format!("0 {count}").len();
    let table = text[table_start..].trim_start_matches(['\r', '\n']);
    for i in 1..count {
        let entry = &table[i * 20..i * 20 + 20];
        let off: usize = entry[..10].parse().map_err(|_| format!("bad entry {i}"))?;
        if &entry[17..18] != "n" {
            return Err(format!("entry {i} not in use"));
        }
        if !text[off..].starts_with(&format!("{i} 0 obj")) {
            return Err(format!("entry {i} offset {off} does not start object {i}"));
        }
    }
    if !text.contains(&format!("/Size {count}")) {
        return Err("trailer size mismatch".into());
    }
    Ok(count - 1)
}

pub const WORKFLOWS: [(&str, &str); 5] = [
    ("hplc_purity_check", "sample"),
    ("hplc_retention_screen", "sample"),
    ("compound_synthesis", "target_smiles"),
    ("plate_prep", "plate_format"),
    ("sample_weighing", "sample"),
];

/// The legal lifecycle edges, written out independently of the library.
pub fn legal(from: JobState, to: JobState) -> bool {
    use JobState::*;
    [
        (Created, Queued),
        (Created, Cancelled),
        (Queued, Running),
        (Queued, Cancelled),
        (Running, Completed),
        (Running, Failed),
        (Running, Cancelled),
    ]
    .contains(&(from, to))
}

#[derive(Debug, Clone)]
pub enum Cmd {
    Create { workflow: usize, fail: bool },
    Start(usize),
    Cancel(usize),
    Approve(usize),
    Tick(f64),
}

/// A random command for lifecycle sequences, with the same weights as the
/// property-test strategy.
pub fn random_cmd(rng: &mut impl Rng) -> Cmd {
    match rng.random_range(0..10) {
        0..=2 => Cmd::Create {
            workflow: rng.random_range(0..WORKFLOWS.len()),
            fail: rng.random_bool(0.5),
        },
        3..=5 => Cmd::Start(rng.random_range(0..12)),
        6 => Cmd::Cancel(rng.random_range(0..12)),
        7 => Cmd::Approve(rng.random_range(0..12)),
        _ => Cmd::Tick(rng.random_range(1..5000) as f64),
    }
}

pub fn params(workflow: usize, fail: bool) -> Map<String, Value> {
    let (_, key) = WORKFLOWS[workflow];
    let value = if key == "plate_format" {
        json!("96")
    } else {
        json!("CCO")
    };
    let mut m = Map::new();
    m.insert(key.into(), value);
    if fail {
        m.insert("fail_probability".into(), json!(0.5));
    }
    m
}

pub fn job_id(engine: &Engine, idx: usize) -> String {
    // One index past the end names a job that does not exist.
    let n = engine.world().jobs.len();
    format!("j{}", idx % (n + 1) + 1)
}

/// Every actor is busy iff exactly one running job lists it, and running
/// jobs only list busy actors.
pub fn check_conservation(world: &World) -> Result<(), String> {
    let mut holders: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for j in world.jobs.values().filter(|j| j.state == JobState::Running) {
        if j.assigned_actor_ids.is_empty() {
            return Err(format!("running job {} has no actor", j.id));
        }
        for a in &j.assigned_actor_ids {
            holders.entry(a).or_default().push(&j.id);
        }
    }
    for a in world.actors.values() {
        let n = holders.get(a.id.as_str()).map_or(0, Vec::len);
        let busy = a.status == ActorStatus::Busy;
        if busy != (n == 1) || n > 1 {
            return Err(format!(
                "actor {} busy={busy} held by {n} running jobs",
                a.id
            ));
        }
    }
    Ok(())
}

/// Replays the event log and checks every state change is a legal edge.
pub fn check_log(engine: &Engine) -> Result<(), String> {
    let mut last: BTreeMap<String, JobState> = BTreeMap::new();
    for e in engine.log() {
        let Some(to) = e.state else { continue };
        match last.get(&e.job_id) {
            None if to == JobState::Created => {}
            None => return Err(format!("{} first seen in {to:?}", e.job_id)),
            Some(&from) if legal(from, to) => {}
            Some(&from) => return Err(format!("{}: logged {from:?} -> {to:?}", e.job_id)),
        }
        last.insert(e.job_id.clone(), to);
    }
    Ok(())
}

pub fn apply(engine: &mut Engine, c: &Cmd) -> Result<(), String> {
    match c {
        Cmd::Create { workflow, fail } => {
            let before = engine.world().jobs.len();
            let (job, _) = engine
                .create_job(WORKFLOWS[*workflow].0, params(*workflow, *fail), "u1")
                .map_err(|e| format!("create failed: {e}"))?;
            if job.state != JobState::Created || engine.world().jobs.len() != before + 1 {
                return Err("create did not add a Created job".into());
            }
        }
        Cmd::Start(i) => {
            let id = job_id(engine, *i);
            let before: Option<Job> = engine.world().jobs.get(&id).cloned();
            let needs_approval = before.is_some()
                && engine.requires_approval(&id).unwrap()
                && !engine.has_start_approval(&id);
            let result = engine.start_job(&id);
            match (&before, result) {
                (None, Err(JobError::World(_))) => {}
                (Some(b), Ok((after, _))) => {
                    if b.state != JobState::Created || needs_approval {
                        return Err(format!(
                            "start accepted from {:?} (approval needed: {needs_approval})",
                            b.state
                        ));
                    }
                    if !matches!(after.state, JobState::Queued | JobState::Running) {
                        return Err(format!("start left job in {:?}", after.state));
                    }
                }
                (Some(b), Err(e)) => {
                    let expected = matches!(e, JobError::IllegalTransition(s) if s == b.state && s != JobState::Created)
                        || matches!(e, JobError::ApprovalRequired(_) if needs_approval && b.state == JobState::Created);
                    if !expected {
                        return Err(format!("unexpected start error from {:?}: {e}", b.state));
                    }
                    if engine.world().jobs.get(&id) != Some(b) {
                        return Err("rejected start changed the job".into());
                    }
                }
                (None, other) => return Err(format!("start of missing job gave {other:?}")),
            }
        }
        Cmd::Cancel(i) => {
            let id = job_id(engine, *i);
            let before: Option<Job> = engine.world().jobs.get(&id).cloned();
            let result = engine.cancel_job(&id);
            match (&before, result) {
                (None, Err(JobError::World(_))) => {}
                (Some(b), Ok((after, _))) => {
                    if !legal(b.state, JobState::Cancelled) || after.state != JobState::Cancelled {
                        return Err(format!("cancel accepted from {:?}", b.state));
                    }
                }
                (Some(b), Err(JobError::IllegalTransition(s))) => {
                    if legal(b.state, JobState::Cancelled) || s != b.state {
                        return Err(format!("cancel rejected from {:?}", b.state));
                    }
                    if engine.world().jobs.get(&id) != Some(b) {
                        return Err("rejected cancel changed the job".into());
                    }
                }
                (_, other) => return Err(format!("cancel gave {other:?}")),
            }
        }
        Cmd::Approve(i) => {
            let id = job_id(engine, *i);
            let req = engine.create_approval("conv", "start_job", json!({"job_id": id}));
            engine
                .resolve_approval(&req.id, true, "u1")
                .map_err(|e| e.to_string())?;
        }
        Cmd::Tick(dt) => {
            let before = engine.now_s();
            engine.tick(*dt).map_err(|e| e.to_string())?;
            if (engine.now_s() - (before + dt)).abs() > 1e-9 {
                return Err("tick did not advance the clock by dt".into());
            }
        }
    }
    Ok(())
}

pub fn run(seed: u64, cmds: &[Cmd]) -> Result<Engine, String> {
    let mut engine = Engine::new(seed_world(seed));
    for (step, c) in cmds.iter().enumerate() {
        apply(&mut engine, c).map_err(|e| format!("step {step} {c:?}: {e}"))?;
        check_conservation(engine.world()).map_err(|e| format!("step {step} {c:?}: {e}"))?;
    }
    check_log(&engine)?;
    Ok(engine)
}
