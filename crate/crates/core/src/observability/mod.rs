//! Span tracing of agent activity and content-addressed config lineage.

pub mod lineage;
pub mod trace;

pub use lineage::{
    config_payload, hash_payload, materialize, roster_table, ConfigPayload, ConfigSnapshot,
    Lineage, LineageError, LINEAGE_FILE,
};
pub use trace::{
    build_tree, check_well_formed, replay, SpanKind, SpanNode, SpanStatus, TraceError, TraceSpan,
    Tracer, TRACE_FILE,
};
