//! Agent runtime behaviour: context truncation, step and handoff budgets,
//! tool scoping and the scripted single-question flow.

use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use serde_json::Map;

use tippy_core::agent::{elided_marker, estimate_tokens, truncate_context, TurnError};
use tippy_core::model::{
    Handoff, Message, ModelAction, ModelAdapter, ModelError, ModelRequest, Role, ToolCall,
};
use tippy_core::observability::SpanKind;
use tippy_core::platform::{ModelChoice, Platform, PlatformError, PlatformOptions};

struct FnModel<F>(F);

impl<F> ModelAdapter for FnModel<F>
where
    F: Fn(&ModelRequest) -> Result<ModelAction, ModelError> + Send + Sync,
{
    fn complete(&self, request: &ModelRequest) -> Result<ModelAction, ModelError> {
        (self.0)(request)
    }
}

fn platform_with<F>(f: F) -> Platform
where
    F: Fn(&ModelRequest) -> Result<ModelAction, ModelError> + Send + Sync + 'static,
{
    Platform::open(PlatformOptions {
        model: ModelChoice::Custom(Arc::new(FnModel(f))),
        ..Default::default()
    })
    .unwrap()
}

fn handoff(target: &str) -> ModelAction {
    ModelAction::Handoff(Handoff {
        target: target.into(),
        reason: "test".into(),
    })
}

fn call(tool: &str) -> ModelAction {
    ModelAction::ToolCalls(vec![ToolCall {
        id: "x".into(),
        tool_name: tool.into(),
        arguments: Map::new(),
    }])
}

fn msg(role: Role, chars: usize) -> Message {
    let text = "x".repeat(chars);
    match role {
        Role::System => Message::system(text),
        Role::User => Message::user(text),
        _ => Message::assistant("supervisor", text),
    }
}

/// Brute force: the largest number of newest messages that fit together
/// with the system message and a marker naming the dropped count.
fn oracle_kept(messages: &[Message], budget: usize) -> usize {
    let sys = estimate_tokens(&messages[0]);
    let rest = &messages[1..];
    let total: usize = rest.iter().map(estimate_tokens).sum();
    if sys + total <= budget {
        return rest.len();
    }
    (0..rest.len())
        .rev()
        .find(|&k| {
            let kept: usize = rest[rest.len() - k..].iter().map(estimate_tokens).sum();
            sys + kept + estimate_tokens(&elided_marker(rest.len() - k)) <= budget
        })
        .unwrap_or(0)
}

#[test]
fn hundred_long_messages_keep_seventy_eight() {
    let mut messages = vec![msg(Role::System, 400)];
    messages.extend((1..100).map(|i| {
        msg(
            if i % 2 == 1 {
                Role::User
            } else {
                Role::Assistant
            },
            400,
        )
    }));
    let out = truncate_context(&messages, 8000).unwrap();
    let kept = oracle_kept(&messages, 8000);
    // 100 (system) + 6 (marker) + 100·k ≤ 8000 gives k = 78; a free marker
    // would have allowed 79.
    assert_eq!(kept, 78);
    assert_eq!(out.len(), 1 + 1 + kept);
    assert_eq!(out[0], messages[0]);
    assert_eq!(out[1].content, "[[elided 21 messages]]");
    assert_eq!(&out[2..], &messages[100 - kept..]);
    assert!(out.iter().map(estimate_tokens).sum::<usize>() <= 8000);
}

#[test]
fn budget_below_system_message_is_an_error() {
    let messages = vec![msg(Role::System, 400), msg(Role::User, 4)];
    assert!(truncate_context(&messages, 50).is_err());
}

proptest! {
    #[test]
    fn truncation_is_a_maximal_fitting_suffix(
        sys in 1usize..200,
        lens in prop::collection::vec(1usize..800, 0..60),
        budget in 60usize..4000,
    ) {
        let mut messages = vec![msg(Role::System, sys)];
        messages.extend(lens.iter().map(|&n| msg(Role::User, n)));
        let out = truncate_context(&messages, budget).unwrap();
        prop_assert!(out.iter().map(estimate_tokens).sum::<usize>() <= budget);
        prop_assert_eq!(&out[0], &messages[0]);
        let kept = oracle_kept(&messages, budget);
        let dropped = lens.len() - kept;
        if dropped == 0 {
            prop_assert_eq!(&out, &messages);
        } else {
            prop_assert_eq!(&out[1], &elided_marker(dropped));
            prop_assert_eq!(&out[2..], &messages[1 + dropped..]);
        }
    }
}

#[test]
fn scripted_molecular_weight_question() {
    let p = Platform::in_memory();
    let r = p
        .chat(None, "u1", "what is the molecular weight of ethanol?")
        .unwrap();
    assert_eq!(r.status, "ok");
    assert!(r.reply_text.as_deref().unwrap().contains("46.069"), "{r:?}");
    let spans = p.tracer().spans(&r.conversation_id);
    let handoff = spans.iter().find(|s| s.kind == SpanKind::Handoff).unwrap();
    assert_eq!(handoff.attributes["from"], "supervisor");
    assert_eq!(handoff.attributes["to"], "molecule");
    let tools: Vec<&str> = spans
        .iter()
        .filter(|s| s.kind == SpanKind::ToolCall)
        .map(|s| s.name.as_str())
        .collect();
    assert_eq!(
        tools,
        ["smiles_from_molecule_name", "molecule_info_from_smiles"]
    );
}

#[test]
fn step_budget_stops_a_looping_agent() {
    let p = platform_with(|req| {
        Ok(if req.agent == "supervisor" {
            handoff("lab")
        } else {
            call("list_labs")
        })
    });
    let before = p.chat(None, "u1", "list labs please").unwrap_err();
    match before {
        PlatformError::Turn(TurnError::StepBudget(n)) => assert_eq!(n, 16),
        other => panic!("{other:?}"),
    }
}

#[test]
fn failed_turn_leaves_history_untouched() {
    let fail = Arc::new(Mutex::new(false));
    let flag = fail.clone();
    let p = platform_with(move |req| {
        if *flag.lock().unwrap() {
            return Err(ModelError::Transport("down".into()));
        }
        Ok(match req.agent.as_str() {
            "supervisor" if req.messages.last().is_some_and(|m| m.role == Role::User) => {
                handoff("lab")
            }
            "supervisor" => ModelAction::FinalText("done".into()),
            _ if req.messages.last().is_some_and(|m| m.role == Role::Tool) => {
                ModelAction::FinalText("labs listed".into())
            }
            _ => call("list_labs"),
        })
    });
    let r = p.chat(None, "u1", "list the labs").unwrap();
    let conv = r.conversation_id;
    let before = p.conversation(&conv).unwrap().messages;
    *fail.lock().unwrap() = true;
    assert!(matches!(
        p.chat(Some(&conv), "u1", "list the labs again"),
        Err(PlatformError::Turn(TurnError::Model(_)))
    ));
    assert_eq!(p.conversation(&conv).unwrap().messages, before);
}

#[test]
fn handoff_budget_stops_ping_pong() {
    let p = platform_with(|req| {
        Ok(if req.agent == "supervisor" {
            handoff("lab")
        } else {
            handoff("supervisor")
        })
    });
    match p.chat(None, "u1", "list labs please").unwrap_err() {
        PlatformError::Turn(TurnError::HandoffBudget(n)) => assert_eq!(n, 4),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_of_scope_tools_and_handoffs_are_rejected() {
    let p = platform_with(|req| {
        Ok(if req.agent == "supervisor" {
            handoff("molecule")
        } else {
            call("create_job")
        })
    });
    assert!(matches!(
        p.chat(None, "u1", "make a molecule job").unwrap_err(),
        PlatformError::Turn(TurnError::Model(ModelError::ToolScope { .. }))
    ));
    let p = platform_with(|_| Ok(handoff("janitor")));
    assert!(matches!(
        p.chat(None, "u1", "list labs please").unwrap_err(),
        PlatformError::Turn(TurnError::Model(ModelError::HandoffScope { .. }))
    ));
}

#[test]
fn each_agent_sees_only_its_roster() {
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    let p = platform_with(move |req| {
        let mut tools: Vec<String> = req.available_tools.iter().map(|t| t.name.clone()).collect();
        tools.sort();
        log.lock()
            .unwrap()
            .push((req.agent.clone(), tools, req.available_handoffs.clone()));
        Ok(match req.agent.as_str() {
            "supervisor" if req.messages.last().is_some_and(|m| m.role == Role::User) => {
                handoff("analysis")
            }
            "supervisor" => ModelAction::FinalText("ok".into()),
            _ => ModelAction::FinalText("nothing to do".into()),
        })
    });
    p.chat(None, "u1", "job history").unwrap();
    let seen = seen.lock().unwrap();
    let (_, sup_tools, sup_targets) = &seen[0];
    assert!(sup_tools.is_empty());
    assert_eq!(sup_targets.len(), 4);
    let (agent, tools, targets) = &seen[1];
    assert_eq!(agent, "analysis");
    let mut expected: Vec<String> = tippy_core::tools::roster::ANALYSIS_TOOLS
        .iter()
        .map(|s| s.to_string())
        .collect();
    expected.sort();
    assert_eq!(tools, &expected);
    assert_eq!(targets, &vec!["supervisor".to_string()]);
}

#[test]
fn memory_recall_reaches_the_supervisor() {
    let seen = Arc::new(Mutex::new(Vec::<ModelRequest>::new()));
    let log = seen.clone();
    let p = platform_with(move |req| {
        log.lock().unwrap().push(req.clone());
        Ok(ModelAction::FinalText(
            "HPLC-01 is the purity check instrument in lab-b".into(),
        ))
    });
    p.chat(None, "u1", "which instrument runs the purity check?")
        .unwrap();
    p.chat(
        None,
        "u1",
        "which instrument runs the purity check in lab-b?",
    )
    .unwrap();
    let seen = seen.lock().unwrap();
    let last = seen.last().unwrap();
    assert!(
        last.messages
            .iter()
            .any(|m| m.role == Role::System && m.content.contains("HPLC-01 is the purity check")),
        "{:?}",
        last.messages
    );
}
