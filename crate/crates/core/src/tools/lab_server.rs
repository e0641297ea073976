//! The lab-side MCP server: fourteen tools over the shared job engine.
//!
//! Every handler checks the caller's permissions first and answers with
//! compact JSON text. Mutating tools go through [`EngineHandle::command`],
//! so they are serialized with clock ticks and other commands.

use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Map, Value};

use super::lookup::{fuzzy_lookup_actor, fuzzy_lookup_lab};
use super::pdf::render_markdown_pdf;
use super::roster::{category_of, LAB_TOOLS};
use crate::job_engine::{EngineHandle, JobFilter};
use crate::lab_model::{JobState, ParameterSchema, PropertySpec, ValueType, World};
use crate::mcp::{CallContext, McpServer, ToolDescriptor, ToolHandler};

pub const LAB_SERVER_NAME: &str = "tippy-lab";

type ToolResult = Result<String, String>;

fn to_text<T: Serialize>(value: &T) -> ToolResult {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn str_arg<'a>(args: &'a Map<String, Value>, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

/// Required string arguments are guaranteed by schema validation before a
/// handler runs.
fn req<'a>(args: &'a Map<String, Value>, key: &str) -> &'a str {
    str_arg(args, key).unwrap_or_default()
}

fn authorize(world: &World, ctx: &CallContext, tool: &str) -> Result<(), String> {
    if ctx.user_id.is_empty() {
        return Err("caller identity missing".into());
    }
    let user = world.user(&ctx.user_id).map_err(|e| e.to_string())?;
    if user.may_call(tool) {
        Ok(())
    } else {
        Err(format!("user '{}' lacks permission for {tool}", user.id))
    }
}

fn string(desc: &str) -> PropertySpec {
    PropertySpec::new(ValueType::String, true, desc)
}

fn opt_string(desc: &str) -> PropertySpec {
    PropertySpec::new(ValueType::String, false, desc)
}

fn opt_number(desc: &str) -> PropertySpec {
    PropertySpec::new(ValueType::Number, false, desc)
}

fn descriptor(name: &str, description: &str, schema: ParameterSchema) -> ToolDescriptor {
    ToolDescriptor {
        name: name.to_string(),
        description: description.to_string(),
        input_schema: schema,
        category: category_of(name).expect("lab tool has a category"),
        requires_approval: name == "start_job",
    }
}

fn lab_summary(world: &World, id: &str) -> Value {
    let lab = &world.labs[id];
    json!({
        "id": lab.id,
        "name": lab.name,
        "site": lab.site,
        "status": lab.status,
        "actor_count": lab.actor_ids.len(),
        "workflow_count": lab.workflow_ids.len(),
    })
}

fn job_summary(job: &crate::lab_model::Job) -> Value {
    json!({
        "id": job.id,
        "workflow_id": job.workflow_id,
        "lab_id": job.lab_id,
        "state": job.state,
        "created_at": job.created_at,
        "started_at": job.started_at,
        "ended_at": job.ended_at,
        "summary": job.result.as_ref().map(|r| r.summary.clone()),
    })
}

fn parse_filter(args: &Map<String, Value>) -> Result<JobFilter, String> {
    let state = match str_arg(args, "state") {
        Some(s) => Some(JobState::parse(s).ok_or_else(|| format!("unknown job state '{s}'"))?),
        None => None,
    };
    Ok(JobFilter {
        lab_id: str_arg(args, "lab_id").map(str::to_string),
        workflow_id: str_arg(args, "workflow_id").map(str::to_string),
        state,
        created_after: args.get("created_after").and_then(Value::as_f64),
        created_before: args.get("created_before").and_then(Value::as_f64),
        limit: args
            .get("limit")
            .and_then(Value::as_u64)
            .map(|n| n as usize),
    })
}

fn run(
    engine: &EngineHandle,
    tool: &str,
    args: &Map<String, Value>,
    ctx: &CallContext,
) -> ToolResult {
    engine.read(|e| authorize(e.world(), ctx, tool))?;
    match tool {
        "list_labs" => engine.read(|e| {
            let w = e.world();
            to_text(
                &w.labs
                    .keys()
                    .map(|id| lab_summary(w, id))
                    .collect::<Vec<_>>(),
            )
        }),
        "get_lab" => engine.read(|e| {
            let w = e.world();
            let lab = w.lab(req(args, "lab_id")).map_err(|err| err.to_string())?;
            let actors: Vec<Value> = lab
                .actor_ids
                .iter()
                .map(|id| {
                    let a = &w.actors[id];
                    json!({"id": a.id, "name": a.name, "kind": a.kind, "status": a.status})
                })
                .collect();
            let active = w
                .jobs
                .values()
                .filter(|j| {
                    j.lab_id == lab.id && matches!(j.state, JobState::Queued | JobState::Running)
                })
                .count();
            to_text(&json!({
                "id": lab.id,
                "name": lab.name,
                "site": lab.site,
                "status": lab.status,
                "actors": actors,
                "workflow_ids": lab.workflow_ids,
                "active_jobs": active,
            }))
        }),
        "list_actors" => engine.read(|e| {
            let w = e.world();
            let lab = str_arg(args, "lab_id");
            if let Some(id) = lab {
                w.lab(id).map_err(|err| err.to_string())?;
            }
            to_text(
                &w.actors
                    .values()
                    .filter(|a| lab.is_none_or(|l| a.lab_id == l))
                    .collect::<Vec<_>>(),
            )
        }),
        "list_workflows_in_lab" => engine.read(|e| {
            let w = e.world();
            let lab = w.lab(req(args, "lab_id")).map_err(|err| err.to_string())?;
            let flows: Vec<Value> = lab
                .workflow_ids
                .iter()
                .map(|id| {
                    let wf = &w.workflows[id];
                    json!({
                        "id": wf.id,
                        "name": wf.name,
                        "nominal_duration_s": wf.nominal_duration_s,
                        "required_capability": wf.required_capability,
                        "high_stakes": wf.is_high_stakes(),
                    })
                })
                .collect();
            to_text(&flows)
        }),
        "get_workflow_parameter_schema" => engine.read(|e| {
            let wf = e
                .world()
                .workflow(req(args, "workflow_id"))
                .map_err(|err| err.to_string())?;
            to_text(
                &json!({ "workflow_id": wf.id, "schema": wf.parameter_schema.to_json_schema() }),
            )
        }),
        "user_info" => engine.read(|e| {
            let id = str_arg(args, "user_id").unwrap_or(&ctx.user_id);
            to_text(e.world().user(id).map_err(|err| err.to_string())?)
        }),
        "fuzzy_lookup_actor" => engine.read(|e| {
            fuzzy_lookup_actor(e.world(), req(args, "query"))
                .map_err(|err| err.to_string())
                .and_then(|m| to_text(&m))
        }),
        "fuzzy_lookup_lab" => engine.read(|e| {
            fuzzy_lookup_lab(e.world(), req(args, "query"))
                .map_err(|err| err.to_string())
                .and_then(|m| to_text(&m))
        }),
        "query_job_status" => engine.read(|e| {
            e.query_job_status(req(args, "job_id"))
                .map_err(|err| err.to_string())
                .and_then(|s| to_text(&s))
        }),
        "query_jobs" => {
            let filter = parse_filter(args)?;
            engine.read(|e| {
                to_text(
                    &e.query_jobs(&filter)
                        .iter()
                        .map(job_summary)
                        .collect::<Vec<_>>(),
                )
            })
        }
        "get_workflow_duration" => engine.read(|e| {
            e.get_workflow_duration(req(args, "workflow_id"))
                .map_err(|err| err.to_string())
                .and_then(|s| to_text(&s))
        }),
        "create_job" => {
            let params = args
                .get("parameters")
                .and_then(Value::as_object)
                .cloned()
                .unwrap_or_default();
            let job = engine
                .command(|e| e.create_job(req(args, "workflow_id"), params, &ctx.user_id))
                .map_err(|err| err.to_string())?;
            to_text(&job_summary(&job))
        }
        "start_job" => {
            let job = engine
                .command(|e| e.start_job(req(args, "job_id")))
                .map_err(|err| err.to_string())?;
            to_text(&job_summary(&job))
        }
        "attach_pdf_of_markdown" => {
            let pdf = render_markdown_pdf(req(args, "markdown"));
            let doc = engine
                .command(|e| {
                    e.attach_document(req(args, "job_id"), req(args, "title"), pdf)
                        .map(|d| (d, Vec::new()))
                })
                .map_err(|err| err.to_string())?;
            to_text(&json!({
                "document_id": doc.id,
                "job_id": doc.linked_job_id,
                "title": doc.title,
                "mime": doc.mime,
                "bytes": doc.bytes.len(),
            }))
        }
        other => Err(format!("tool '{other}' is not served here")),
    }
}

/// Descriptors for the fourteen lab tools, in roster order.
pub fn lab_descriptors() -> Vec<ToolDescriptor> {
    LAB_TOOLS
        .iter()
        .map(|&name| match name {
            "attach_pdf_of_markdown" => descriptor(
                name,
                "Render a markdown report to PDF and attach it to a job",
                ParameterSchema::new()
                    .with("job_id", string("Job to attach the report to"))
                    .with("title", string("Document title"))
                    .with("markdown", string("Report body in markdown")),
            ),
            "create_job" => descriptor(
                name,
                "Create a job for a workflow; parameters must satisfy the workflow's schema",
                ParameterSchema::new()
                    .with("workflow_id", string("Workflow to run"))
                    .with(
                        "parameters",
                        PropertySpec::new(ValueType::Object, false, "Workflow parameters"),
                    ),
            ),
            "fuzzy_lookup_actor" => descriptor(
                name,
                "Find the actor best matching a loosely typed name or id",
                ParameterSchema::new().with("query", string("Actor name or id as typed")),
            ),
            "fuzzy_lookup_lab" => descriptor(
                name,
                "Find the lab best matching a loosely typed name or id",
                ParameterSchema::new().with("query", string("Lab name or id as typed")),
            ),
            "get_lab" => descriptor(
                name,
                "Detailed laboratory information and status",
                ParameterSchema::new().with("lab_id", string("Lab id")),
            ),
            "get_workflow_duration" => descriptor(
                name,
                "Duration statistics over completed runs of a workflow",
                ParameterSchema::new().with("workflow_id", string("Workflow id")),
            ),
            "get_workflow_parameter_schema" => descriptor(
                name,
                "Parameter schema to build valid job parameters for a workflow",
                ParameterSchema::new().with("workflow_id", string("Workflow id")),
            ),
            "list_actors" => descriptor(
                name,
                "List instruments and people, optionally in one lab",
                ParameterSchema::new().with("lab_id", opt_string("Restrict to this lab")),
            ),
            "list_labs" => descriptor(name, "List all laboratories", ParameterSchema::new()),
            "list_workflows_in_lab" => descriptor(
                name,
                "List the workflows a lab can run",
                ParameterSchema::new().with("lab_id", string("Lab id")),
            ),
            "query_jobs" => descriptor(
                name,
                "List jobs matching filters, newest first",
                ParameterSchema::new()
                    .with("lab_id", opt_string("Lab id"))
                    .with("workflow_id", opt_string("Workflow id"))
                    .with("state", opt_string("Job state, e.g. Running"))
                    .with(
                        "created_after",
                        opt_number("Inclusive lower bound on creation time (s)"),
                    )
                    .with(
                        "created_before",
                        opt_number("Inclusive upper bound on creation time (s)"),
                    )
                    .with(
                        "limit",
                        PropertySpec::new(ValueType::Integer, false, "Maximum number of jobs")
                            .range(Some(1.0), None),
                    ),
            ),
            "query_job_status" => descriptor(
                name,
                "State, timestamps and result of one job",
                ParameterSchema::new().with("job_id", string("Job id")),
            ),
            "start_job" => descriptor(
                name,
                "Queue a created job for execution; high-stakes workflows need approval",
                ParameterSchema::new().with("job_id", string("Job id")),
            ),
            "user_info" => descriptor(
                name,
                "Operator credentials and permissions",
                ParameterSchema::new()
                    .with("user_id", opt_string("User id; defaults to the caller")),
            ),
            other => unreachable!("lab roster entry {other} lacks a descriptor"),
        })
        .collect()
}

pub fn build_lab_server(engine: EngineHandle) -> McpServer {
    let mut server = McpServer::new(LAB_SERVER_NAME, env!("CARGO_PKG_VERSION"));
    for desc in lab_descriptors() {
        let engine = engine.clone();
        let name = desc.name.clone();
        let handler: Arc<dyn ToolHandler> =
            Arc::new(move |args: &Map<String, Value>, ctx: &CallContext| {
                run(&engine, &name, args, ctx)
            });
        server
            .register_tool(desc, handler)
            .expect("lab tool schemas are well formed");
    }
    server
}
