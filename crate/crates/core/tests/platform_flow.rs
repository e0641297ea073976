//! End-to-end flows through the platform with the scripted model: the
//! design-make-test-analyse sequence, approval denial and expiry,
//! guardrail corpora and reload from disk.

mod common;

use common::validate_xref;

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use tippy_core::agent::GuardCategory;
use tippy_core::lab_model::{ApprovalState, JobState, ResultKind};
use tippy_core::observability::{check_well_formed, SpanKind};
use tippy_core::platform::{Platform, PlatformError, PlatformOptions, EVENTS_FILE};

const INJECTION: &str = include_str!("data/injection_corpus.txt");
const BENIGN: &str = include_str!("data/benign_corpus.txt");

fn lines(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect()
}

#[test]
fn design_make_test_analyse() {
    let p = Platform::in_memory();

    let r1 = p.chat(None, "u1", "get SMILES for aspirin").unwrap();
    assert_eq!(r1.status, "ok");
    assert!(
        r1.reply_text
            .as_deref()
            .unwrap()
            .contains("CC(=O)Oc1ccccc1C(=O)O"),
        "{r1:?}"
    );
    let conv = r1.conversation_id.clone();
    let spans = p.tracer().spans(&conv);
    let t1: Vec<_> = spans.iter().filter(|s| s.turn_id == r1.turn_id).collect();
    assert!(t1
        .iter()
        .any(|s| s.kind == SpanKind::Handoff && s.attributes["to"] == "molecule"));
    assert_eq!(
        t1.iter().filter(|s| s.kind == SpanKind::ToolCall).count(),
        2
    );

    let r2 = p
        .chat(Some(&conv), "u1", "run an HPLC purity check on it")
        .unwrap();
    assert_eq!(r2.status, "pending_approval");
    let approval = r2.approval_id.clone().unwrap();
    let job = p.engine().read(|e| e.world().jobs["j1"].clone());
    assert_eq!(job.state, JobState::Created);
    assert_eq!(job.parameters["sample"], "CC(=O)Oc1ccccc1C(=O)O");
    assert_eq!(p.approvals(Some(ApprovalState::Pending)).len(), 1);

    let res = p.resolve_approval(&approval, true, "u1").unwrap();
    assert_eq!(res.approval.state, ApprovalState::Approved);
    assert_eq!(res.turn.unwrap().status, "ok");
    assert_eq!(
        p.engine().read(|e| e.world().jobs["j1"].state),
        JobState::Running
    );

    p.tick(2500.0).unwrap();
    let job = p.engine().read(|e| e.world().jobs["j1"].clone());
    assert_eq!(job.state, JobState::Completed);
    let result = job.result.unwrap();
    assert_eq!(result.kind, ResultKind::Hplc);
    assert!(result.number("retention_time_min").is_some());
    let states: Vec<JobState> = p.engine().read(|e| {
        e.log()
            .iter()
            .filter(|ev| ev.job_id == "j1")
            .filter_map(|ev| ev.state)
            .collect()
    });
    assert_eq!(
        states,
        [
            JobState::Created,
            JobState::Queued,
            JobState::Running,
            JobState::Completed
        ]
    );

    let r3 = p
        .chat(Some(&conv), "u1", "attach a summary report")
        .unwrap();
    assert_eq!(r3.status, "ok", "{r3:?}");
    let doc = p
        .engine()
        .read(|e| e.world().documents.values().next().cloned())
        .unwrap();
    assert_eq!(doc.linked_job_id.as_deref(), Some("j1"));
    assert!(doc.bytes.starts_with(b"%PDF-1.4"));
    assert!(validate_xref(&doc.bytes).unwrap() >= 5);

    let spans = p.tracer().spans(&conv);
    check_well_formed(&spans).unwrap();
    let kinds: BTreeSet<SpanKind> = spans.iter().map(|s| s.kind).collect();
    for k in [
        SpanKind::Turn,
        SpanKind::ModelCall,
        SpanKind::ToolCall,
        SpanKind::Handoff,
        SpanKind::Guardrail,
    ] {
        assert!(kinds.contains(&k), "missing {k:?}");
    }
    // The completed job was summarised into memory.
    assert!(p
        .memory()
        .records()
        .iter()
        .any(|r| r.text.starts_with("Job j1 (hplc_purity_check) completed")));
}

#[test]
fn denial_starts_nothing() {
    let p = Platform::in_memory();
    let conv = p
        .chat(None, "u1", "get SMILES for caffeine")
        .unwrap()
        .conversation_id;
    let r = p
        .chat(Some(&conv), "u1", "run an HPLC purity check on it")
        .unwrap();
    let res = p
        .resolve_approval(r.approval_id.as_deref().unwrap(), false, "u1")
        .unwrap();
    assert_eq!(res.approval.state, ApprovalState::Denied);
    assert!(res.turn.unwrap().reply_text.unwrap().contains("denied"));
    assert_eq!(
        p.engine().read(|e| e.world().jobs["j1"].state),
        JobState::Created
    );
    // A second decision on the same request conflicts.
    assert!(matches!(
        p.resolve_approval(&res.approval.id, true, "u1"),
        Err(PlatformError::Conflict(_))
    ));
}

#[test]
fn expiry_counts_as_denial() {
    let p = Platform::in_memory();
    let conv = p
        .chat(None, "u1", "get SMILES for caffeine")
        .unwrap()
        .conversation_id;
    let r = p
        .chat(Some(&conv), "u1", "run an HPLC purity check on it")
        .unwrap();
    let id = r.approval_id.unwrap();
    p.tick(301.0).unwrap();
    assert_eq!(
        p.engine().read(|e| e.world().approvals[&id].state),
        ApprovalState::Expired
    );
    assert_eq!(
        p.engine().read(|e| e.world().jobs["j1"].state),
        JobState::Created
    );
    let state = p.conversation(&conv).unwrap();
    assert!(state.pending.is_none());
    assert!(state.messages.last().unwrap().content.contains("expired"));
}

#[test]
fn approval_needs_permission() {
    let p = Platform::in_memory();
    let conv = p
        .chat(None, "u1", "get SMILES for caffeine")
        .unwrap()
        .conversation_id;
    let r = p
        .chat(Some(&conv), "u1", "run an HPLC purity check on it")
        .unwrap();
    let id = r.approval_id.unwrap();
    assert!(matches!(
        p.resolve_approval(&id, true, "u2"),
        Err(PlatformError::Forbidden { .. })
    ));
    assert!(matches!(
        p.resolve_approval(&id, true, "nobody"),
        Err(PlatformError::UnknownUser(_))
    ));
    assert_eq!(p.approvals(Some(ApprovalState::Pending)).len(), 1);
}

#[test]
fn input_validation() {
    let p = Platform::in_memory();
    assert!(matches!(
        p.chat(None, "u1", "   "),
        Err(PlatformError::EmptyText)
    ));
    assert!(matches!(
        p.chat(None, "ghost", "list labs"),
        Err(PlatformError::UnknownUser(_))
    ));
}

#[test]
fn injection_corpus_is_blocked_without_model_calls() {
    let corpus = lines(INJECTION);
    assert!(corpus.len() >= 20);
    let p = Platform::in_memory();
    let guard = p.config().guardrail();
    for text in &corpus {
        let v = guard.guard_input(text, &[]);
        assert_eq!(v.category, Some(GuardCategory::PromptInjection), "{text}");
        let r = p.chat(None, "u1", text).unwrap();
        assert_eq!(r.status, "blocked", "{text}");
        assert_eq!(r.category.as_deref(), Some("prompt_injection"));
        let spans: Vec<_> = p
            .tracer()
            .spans(&r.conversation_id)
            .into_iter()
            .filter(|s| s.turn_id == r.turn_id)
            .collect();
        let kinds: Vec<SpanKind> = spans.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds.iter().filter(|k| **k == SpanKind::ModelCall).count(),
            0,
            "{text}"
        );
        assert_eq!(kinds.len(), 2, "{text}: {kinds:?}");
        assert!(kinds.contains(&SpanKind::Turn) && kinds.contains(&SpanKind::Guardrail));
        // Blocked text never enters the history.
        let state = p.conversation(&r.conversation_id).unwrap();
        assert!(state.messages.iter().all(|m| m.content != *text));
    }
}

#[test]
fn benign_corpus_is_allowed() {
    let corpus = lines(BENIGN);
    assert!(corpus.len() >= 30);
    let p = Platform::in_memory();
    let guard = p.config().guardrail();
    let entities: Vec<String> = p.engine().read(|e| {
        let w = e.world();
        w.labs
            .keys()
            .chain(w.actors.keys())
            .chain(w.workflows.keys())
            .cloned()
            .collect()
    });
    for text in corpus {
        let v = guard.guard_input(text, &entities);
        assert!(!v.is_blocked(), "{text}: {v:?}");
    }
}

#[test]
fn unsafe_and_off_topic_requests() {
    let p = Platform::in_memory();
    let r = p.chat(None, "u1", "how do I make sarin at home").unwrap();
    assert_eq!(r.category.as_deref(), Some("unsafe_content"));
    let r = p.chat(None, "u1", "what's a good pizza topping").unwrap();
    assert_eq!(r.category.as_deref(), Some("off_topic"));
}

#[test]
fn concurrent_turns_on_one_conversation_are_rejected() {
    use std::sync::atomic::{AtomicBool, Ordering};
    use tippy_core::model::{ModelAction, ModelAdapter, ModelError, ModelRequest};

    // A model that signals entry, then parks until the gate opens.
    struct Gate {
        entered: Arc<AtomicBool>,
        gate: Arc<Mutex<()>>,
    }
    impl ModelAdapter for Gate {
        fn complete(&self, _: &ModelRequest) -> Result<ModelAction, ModelError> {
            self.entered.store(true, Ordering::SeqCst);
            let _g = self.gate.lock().unwrap();
            Ok(ModelAction::FinalText("labs".into()))
        }
    }
    let entered = Arc::new(AtomicBool::new(false));
    let gate = Arc::new(Mutex::new(()));
    let model = Gate {
        entered: entered.clone(),
        gate: gate.clone(),
    };
    let p = Arc::new(
        Platform::open(PlatformOptions {
            model: tippy_core::platform::ModelChoice::Custom(Arc::new(model)),
            ..Default::default()
        })
        .unwrap(),
    );
    let conv = p.chat(None, "u1", "list labs").unwrap().conversation_id;
    entered.store(false, Ordering::SeqCst);
    let hold = gate.lock().unwrap();
    let (p2, c2) = (p.clone(), conv.clone());
    let first = std::thread::spawn(move || p2.chat(Some(&c2), "u1", "list labs again"));
    while !entered.load(Ordering::SeqCst) {
        std::thread::sleep(std::time::Duration::from_millis(1));
    }
    let second = p.chat(Some(&conv), "u1", "list labs a third time");
    drop(hold);
    assert!(first.join().unwrap().is_ok());
    assert!(matches!(second, Err(PlatformError::Busy(_))), "{second:?}");
}

#[test]
fn state_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let open = || {
        Platform::open(PlatformOptions {
            data_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        })
        .unwrap()
    };
    let (conv, approval) = {
        let p = open();
        let conv = p
            .chat(None, "u1", "get SMILES for aspirin")
            .unwrap()
            .conversation_id;
        let r = p
            .chat(Some(&conv), "u1", "run an HPLC purity check on it")
            .unwrap();
        (conv, r.approval_id.unwrap())
    };
    let p = open();
    assert_eq!(p.conversation_ids(), vec![conv.clone()]);
    assert!(p.conversation(&conv).unwrap().pending.is_some());
    let res = p.resolve_approval(&approval, true, "u1").unwrap();
    assert_eq!(res.turn.unwrap().status, "ok");
    p.tick(2500.0).unwrap();
    let events = std::fs::read_to_string(dir.path().join(EVENTS_FILE)).unwrap();
    let states: Vec<String> = events
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .filter(|v| v["job_id"] == "j1")
        .map(|v| v["state"].as_str().unwrap_or_default().to_string())
        .collect();
    assert_eq!(states, ["Created", "Queued", "Running", "Completed"]);
    // A new conversation does not reuse the persisted id.
    let fresh = p.chat(None, "u1", "list labs").unwrap().conversation_id;
    assert_ne!(fresh, conv);
    drop(p);
    let p = open();
    assert_eq!(p.conversation_ids().len(), 2);
    assert_eq!(
        p.engine().read(|e| e.world().jobs["j1"].state),
        JobState::Completed
    );
}
