//! The molecule MCP server: the four chemistry tools, and the combined main
//! server that also carries the lab tools.

use std::sync::Arc;

use serde_json::{json, Map, Value};

use super::lab_server::build_lab_server;
use super::roster::{category_of, MOLECULE_TOOLS};
use crate::job_engine::EngineHandle;
use crate::lab_model::{ParameterSchema, PropertySpec, ValueType};
use crate::mcp::{CallContext, McpServer, ToolDescriptor, ToolHandler};
use crate::molecule::{
    generate_smiles_image, molecule_info_from_smiles, molmim_generate, smiles_from_molecule_name,
    Mode, Property, ScoreSpec,
};

pub const MOLECULE_SERVER_NAME: &str = "tippy-molecule";
pub const MAIN_SERVER_NAME: &str = "tippy";

pub const DEFAULT_IMAGE_SIZE: u32 = 300;
pub const DEFAULT_ITERATIONS: u32 = 200;
pub const DEFAULT_TOP_K: usize = 5;

fn descriptor(name: &str, description: &str, schema: ParameterSchema) -> ToolDescriptor {
    ToolDescriptor {
        name: name.to_string(),
        description: description.to_string(),
        input_schema: schema,
        category: category_of(name).expect("molecule tool has a category"),
        requires_approval: false,
    }
}

fn int(required: bool, desc: &str, min: f64, max: Option<f64>) -> PropertySpec {
    PropertySpec::new(ValueType::Integer, required, desc).range(Some(min), max)
}

pub fn molecule_descriptors() -> Vec<ToolDescriptor> {
    MOLECULE_TOOLS
        .iter()
        .map(|&name| match name {
            "generate_smiles_image" => descriptor(
                name,
                "Render a 2-D structure diagram of a SMILES string as SVG",
                ParameterSchema::new()
                    .with(
                        "smiles",
                        PropertySpec::new(ValueType::String, true, "SMILES string"),
                    )
                    .with(
                        "width",
                        int(false, "Image width in pixels", 64.0, Some(4096.0)),
                    )
                    .with(
                        "height",
                        int(false, "Image height in pixels", 64.0, Some(4096.0)),
                    ),
            ),
            "molecule_info_from_smiles" => descriptor(
                name,
                "Formula, molecular weight, ring count, H-bond donors/acceptors and estimated logP",
                ParameterSchema::new().with(
                    "smiles",
                    PropertySpec::new(ValueType::String, true, "SMILES string"),
                ),
            ),
            "molmim_generate" => descriptor(
                name,
                "Generate analogues of a seed molecule that optimize a property",
                ParameterSchema::new()
                    .with(
                        "seed_smiles",
                        PropertySpec::new(ValueType::String, true, "Starting molecule"),
                    )
                    .with(
                        "property",
                        PropertySpec::one_of(
                            true,
                            &["mw", "logp_est", "rings", "hbd", "hba"],
                            "Property to score",
                        ),
                    )
                    .with(
                        "mode",
                        PropertySpec::one_of(
                            true,
                            &["maximize", "minimize", "target"],
                            "Optimization goal",
                        ),
                    )
                    .with(
                        "target_value",
                        PropertySpec::new(
                            ValueType::Number,
                            false,
                            "Target property value; required for mode target",
                        ),
                    )
                    .with(
                        "n_iterations",
                        int(false, "Mutation attempts", 1.0, Some(10_000.0)),
                    )
                    .with("seed", int(false, "Random seed", 0.0, None))
                    .with("top_k", int(false, "Number of results", 1.0, Some(100.0))),
            ),
            "smiles_from_molecule_name" => descriptor(
                name,
                "Convert a common compound name to SMILES",
                ParameterSchema::new().with(
                    "name",
                    PropertySpec::new(ValueType::String, true, "Compound name"),
                ),
            ),
            other => unreachable!("molecule roster entry {other} lacks a descriptor"),
        })
        .collect()
}

fn req<'a>(args: &'a Map<String, Value>, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or_default()
}

fn enum_arg<T: serde::de::DeserializeOwned>(
    args: &Map<String, Value>,
    key: &str,
) -> Result<T, String> {
    serde_json::from_value(args.get(key).cloned().unwrap_or(Value::Null))
        .map_err(|e| format!("{key}: {e}"))
}

fn run(tool: &str, args: &Map<String, Value>) -> Result<String, String> {
    match tool {
        "smiles_from_molecule_name" => {
            let m = smiles_from_molecule_name(req(args, "name")).map_err(|e| e.to_string())?;
            Ok(json!({"smiles": m.smiles, "matched_name": m.matched_name, "confidence": m.confidence}).to_string())
        }
        "molecule_info_from_smiles" => {
            let info = molecule_info_from_smiles(req(args, "smiles")).map_err(|e| e.to_string())?;
            serde_json::to_string(&info).map_err(|e| e.to_string())
        }
        "generate_smiles_image" => {
            let dim = |k: &str| {
                args.get(k)
                    .and_then(Value::as_u64)
                    .map_or(DEFAULT_IMAGE_SIZE, |v| v as u32)
            };
            generate_smiles_image(req(args, "smiles"), dim("width"), dim("height"))
                .map_err(|e| e.to_string())
        }
        "molmim_generate" => {
            let spec = ScoreSpec {
                property: enum_arg::<Property>(args, "property")?,
                mode: enum_arg::<Mode>(args, "mode")?,
                target_value: args.get("target_value").and_then(Value::as_f64),
            };
            let n = args
                .get("n_iterations")
                .and_then(Value::as_u64)
                .map_or(DEFAULT_ITERATIONS, |v| v as u32);
            let seed = args.get("seed").and_then(Value::as_u64).unwrap_or(0);
            let k = args
                .get("top_k")
                .and_then(Value::as_u64)
                .map_or(DEFAULT_TOP_K, |v| v as usize);
            let out = molmim_generate(req(args, "seed_smiles"), &spec, n, seed, k)
                .map_err(|e| e.to_string())?;
            serde_json::to_string(&out).map_err(|e| e.to_string())
        }
        other => Err(format!("tool '{other}' is not served here")),
    }
}

/// The standalone molecule server. With an engine, callers are checked
/// against the user directory; without one the tools are open, since they
/// are pure functions with no lab side effects.
pub fn build_molecule_server(engine: Option<EngineHandle>) -> McpServer {
    let mut server = McpServer::new(MOLECULE_SERVER_NAME, env!("CARGO_PKG_VERSION"));
    for desc in molecule_descriptors() {
        let name = desc.name.clone();
        let engine = engine.clone();
        let handler: Arc<dyn ToolHandler> =
            Arc::new(move |args: &Map<String, Value>, ctx: &CallContext| {
                if let Some(engine) = &engine {
                    engine.read(|e| {
                        let user = e
                            .world()
                            .user(&ctx.user_id)
                            .map_err(|err| err.to_string())?;
                        if user.may_call(&name) {
                            Ok(())
                        } else {
                            Err(format!("user '{}' lacks permission for {name}", user.id))
                        }
                    })?;
                }
                run(&name, args)
            });
        server
            .register_tool(desc, handler)
            .expect("molecule tool schemas are well formed");
    }
    server
}

/// All eighteen tools on one server.
pub fn build_main_server(engine: EngineHandle) -> McpServer {
    let mut server = McpServer::new(MAIN_SERVER_NAME, env!("CARGO_PKG_VERSION"));
    server
        .merge(&build_lab_server(engine.clone()))
        .expect("disjoint rosters");
    server
        .merge(&build_molecule_server(Some(engine)))
        .expect("disjoint rosters");
    server
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::job_engine::Engine;
    use crate::lab_model::seed_world;

    fn call(s: &McpServer, tool: &str, args: Value) -> (bool, String) {
        let r = s
            .call_tool(tool, args.as_object().unwrap(), &CallContext::user("u1"))
            .unwrap();
        (r.is_error, r.joined_text())
    }

    #[test]
    fn four_tools() {
        let s = build_molecule_server(None);
        let names: Vec<_> = s.descriptors().iter().map(|d| d.name.clone()).collect();
        assert_eq!(names, MOLECULE_TOOLS);
    }

    #[test]
    fn name_then_info() {
        let s = build_molecule_server(None);
        let (err, text) = call(&s, "smiles_from_molecule_name", json!({"name": "ethanol"}));
        assert!(!err);
        let smiles = serde_json::from_str::<Value>(&text).unwrap()["smiles"]
            .as_str()
            .unwrap()
            .to_string();
        let (_, info) = call(&s, "molecule_info_from_smiles", json!({"smiles": smiles}));
        assert!(info.contains("46.069"), "{info}");
    }

    #[test]
    fn image_and_generation() {
        let s = build_molecule_server(None);
        let (err, svg) = call(&s, "generate_smiles_image", json!({"smiles": "CCO"}));
        assert!(!err && svg.contains("width=\"300\""));
        let (err, out) = call(
            &s,
            "molmim_generate",
            json!({"seed_smiles": "CCO", "property": "rings", "mode": "target", "target_value": 0, "n_iterations": 20}),
        );
        assert!(!err, "{out}");
        assert_eq!(
            serde_json::from_str::<Value>(&out).unwrap()[0]["score"],
            json!(0.0)
        );
        let (err, _) = call(
            &s,
            "molmim_generate",
            json!({"seed_smiles": "CCO", "property": "rings", "mode": "target"}),
        );
        assert!(err);
    }

    #[test]
    fn main_server_has_all_tools_and_checks_permissions() {
        let h = EngineHandle::new(Engine::new(seed_world(1)));
        let s = build_main_server(h);
        assert_eq!(s.descriptors().len(), 18);
        let r = s
            .call_tool(
                "molmim_generate",
                json!({"seed_smiles": "C", "property": "mw", "mode": "maximize"})
                    .as_object()
                    .unwrap(),
                &CallContext::user("u2"),
            )
            .unwrap();
        assert!(r.is_error);
    }
}
