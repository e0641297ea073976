//! Context-window management.
//!
//! Each message costs `ceil(chars / 4)` tokens. The system message is
//! always kept, then the newest messages that fit. When anything is dropped
//! a single `[[elided N messages]]` marker is inserted after the system
//! message, and its own cost is charged against the budget too, so the
//! result never exceeds the budget.

use thiserror::Error;

use crate::model::{Message, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("context budget of {budget} tokens cannot hold the system message and elision marker ({needed} tokens)")]
pub struct ContextError {
    pub budget: usize,
    pub needed: usize,
}

pub fn estimate_tokens(m: &Message) -> usize {
    m.content.chars().count().div_ceil(4)
}

pub fn elided_marker(n: usize) -> Message {
    Message::system(format!("[[elided {n} messages]]"))
}

pub fn truncate_context(messages: &[Message], budget: usize) -> Result<Vec<Message>, ContextError> {
    let (system, rest) = match messages.split_first() {
        Some((first, rest)) if first.role == Role::System => (Some(first), rest),
        _ => (None, messages),
    };
    let base = system.map_or(0, estimate_tokens);
    if base > budget {
        return Err(ContextError {
            budget,
            needed: base,
        });
    }
    let total: usize = rest.iter().map(estimate_tokens).sum();
    if base + total <= budget {
        return Ok(messages.to_vec());
    }
    // Largest suffix of `rest` that fits together with the marker. The
    // marker cost grows by at most one token as the count grows, so a scan
    // from the newest message backwards finds it.
    let mut kept = 0;
    let mut used = 0;
    for m in rest.iter().rev() {
        let cost = estimate_tokens(m);
        let dropped_after = rest.len() - kept - 1;
        let marker = if dropped_after > 0 {
            estimate_tokens(&elided_marker(dropped_after))
        } else {
            0
        };
        if base + used + cost + marker > budget {
            break;
        }
        used += cost;
        kept += 1;
    }
    let dropped = rest.len() - kept;
    let marker = elided_marker(dropped);
    if base + used + estimate_tokens(&marker) > budget {
        return Err(ContextError {
            budget,
            needed: base + estimate_tokens(&marker),
        });
    }
    let mut out = Vec::with_capacity(kept + 2);
    out.extend(system.cloned());
    out.push(marker);
    out.extend_from_slice(&rest[dropped..]);
    Ok(out)
}
