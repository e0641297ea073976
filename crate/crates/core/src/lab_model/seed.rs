//! The bundled default world: two labs, six actors, five workflows.

use std::collections::BTreeSet;

use super::*;
use crate::tools::roster::TOOL_UNIVERSE;

fn fail_probability() -> PropertySpec {
    PropertySpec::new(
        ValueType::Number,
        false,
        "Probability in [0, 1] that the simulated run fails",
    )
    .range(Some(0.0), Some(1.0))
}

#[allow(clippy::too_many_arguments)]
fn workflow(
    id: &str,
    name: &str,
    lab_id: &str,
    duration: f64,
    kind: ResultKind,
    capability: &str,
    high_stakes: bool,
    schema: ParameterSchema,
) -> Workflow {
    let mut flags = BTreeSet::new();
    if high_stakes {
        flags.insert(HIGH_STAKES.to_string());
    }
    Workflow {
        id: id.into(),
        name: name.into(),
        lab_id: lab_id.into(),
        parameter_schema: schema.with("fail_probability", fail_probability()),
        nominal_duration_s: duration,
        flags,
        result_kind: kind,
        required_capability: capability.into(),
    }
}

fn actor(id: &str, name: &str, kind: ActorKind, caps: &[&str], lab_id: &str) -> Actor {
    Actor {
        id: id.into(),
        name: name.into(),
        kind,
        capabilities: caps.iter().map(|c| c.to_string()).collect(),
        status: ActorStatus::Idle,
        lab_id: lab_id.into(),
    }
}

const READ_ONLY_TOOLS: &[&str] = &[
    "fuzzy_lookup_actor",
    "fuzzy_lookup_lab",
    "get_lab",
    "get_workflow_duration",
    "get_workflow_parameter_schema",
    "list_actors",
    "list_labs",
    "list_workflows_in_lab",
    "query_jobs",
    "query_job_status",
    "user_info",
    "generate_smiles_image",
    "molecule_info_from_smiles",
    "smiles_from_molecule_name",
];

pub fn seed_world(seed: u64) -> World {
    let mut w = World::empty(seed);

    for (id, name, site) in [
        ("lab-a", "Chemistry Lab A", "Building 1"),
        ("lab-b", "Analytics Lab B", "Building 2"),
    ] {
        w.upsert(Entity::Lab(Lab {
            id: id.into(),
            name: name.into(),
            site: site.into(),
            status: LabStatus::Online,
            actor_ids: vec![],
            workflow_ids: vec![],
        }))
        .expect("seed lab");
    }

    let actors = [
        actor(
            "HPLC-01",
            "HPLC-01",
            ActorKind::Instrument,
            &["hplc"],
            "lab-b",
        ),
        actor(
            "HPLC-02",
            "HPLC-02",
            ActorKind::Instrument,
            &["hplc"],
            "lab-b",
        ),
        actor(
            "LH-01",
            "LiquidHandler-01",
            ActorKind::Instrument,
            &["liquid_handling"],
            "lab-a",
        ),
        actor(
            "SYN-01",
            "Synthesizer-01",
            ActorKind::Instrument,
            &["synthesis"],
            "lab-a",
        ),
        actor(
            "dana.kim",
            "Dana Kim",
            ActorKind::Human,
            &["weighing", "synthesis"],
            "lab-a",
        ),
        actor(
            "alex.chen",
            "Alex Chen",
            ActorKind::Human,
            &["weighing", "hplc_review"],
            "lab-b",
        ),
    ];
    for a in actors {
        w.upsert(Entity::Actor(a)).expect("seed actor");
    }

    let sample = || PropertySpec::new(ValueType::String, true, "Compound name or SMILES");
    let workflows = [
        workflow(
            "hplc_purity_check",
            "HPLC purity check",
            "lab-b",
            1800.0,
            ResultKind::Hplc,
            "hplc",
            true,
            ParameterSchema::new().with("sample", sample()).with(
                "column_temp_c",
                PropertySpec::new(ValueType::Number, false, "Column temperature in Celsius")
                    .range(Some(20.0), Some(80.0)),
            ),
        ),
        workflow(
            "hplc_retention_screen",
            "HPLC retention screen",
            "lab-b",
            1200.0,
            ResultKind::Hplc,
            "hplc",
            false,
            ParameterSchema::new().with("sample", sample()).with(
                "gradient",
                PropertySpec::one_of(false, &["fast", "standard"], "Solvent gradient program"),
            ),
        ),
        workflow(
            "compound_synthesis",
            "Compound synthesis",
            "lab-a",
            14400.0,
            ResultKind::Synthesis,
            "synthesis",
            false,
            ParameterSchema::new()
                .with(
                    "target_smiles",
                    PropertySpec::new(ValueType::String, true, "SMILES of the target compound"),
                )
                .with(
                    "scale_mg",
                    PropertySpec::new(ValueType::Number, false, "Batch scale in milligrams")
                        .range(Some(1.0), Some(1000.0)),
                ),
        ),
        workflow(
            "plate_prep",
            "Plate preparation",
            "lab-a",
            600.0,
            ResultKind::Generic,
            "liquid_handling",
            false,
            ParameterSchema::new()
                .with(
                    "plate_format",
                    PropertySpec::one_of(true, &["96", "384"], "Plate format"),
                )
                .with(
                    "wells",
                    PropertySpec::new(ValueType::Integer, false, "Number of wells to fill")
                        .range(Some(1.0), Some(384.0)),
                ),
        ),
        workflow(
            "sample_weighing",
            "Sample weighing",
            "lab-a",
            300.0,
            ResultKind::Generic,
            "weighing",
            false,
            ParameterSchema::new().with("sample", sample()),
        ),
    ];
    for wf in workflows {
        w.upsert(Entity::Workflow(wf)).expect("seed workflow");
    }

    let all: BTreeSet<String> = TOOL_UNIVERSE.iter().map(|t| t.to_string()).collect();
    let read_only: BTreeSet<String> = READ_ONLY_TOOLS.iter().map(|t| t.to_string()).collect();
    for (id, name, role, perms) in [
        ("u1", "Dana Kim", Role::Scientist, all.clone()),
        ("u2", "Sam Patel", Role::Scientist, read_only),
        ("admin", "Lab Administrator", Role::Admin, all),
    ] {
        w.upsert(Entity::User(User {
            id: id.into(),
            name: name.into(),
            role,
            permissions: perms,
        }))
        .expect("seed user");
    }

    debug_assert!(w.validate().is_ok());
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_sizes() {
        let w = seed_world(1);
        assert_eq!(w.labs.len(), 2);
        assert_eq!(w.actors.len(), 6);
        assert_eq!(w.workflows.len(), 5);
        assert_eq!(w.jobs.len(), 0);
        w.validate().unwrap();
        assert!(w.workflows["hplc_purity_check"].is_high_stakes());
    }
}
