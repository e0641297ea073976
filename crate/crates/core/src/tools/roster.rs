//! Tool names, categories and per-agent rosters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MOLECULE_TOOLS: [&str; 4] = [
    "generate_smiles_image",
    "molecule_info_from_smiles",
    "molmim_generate",
    "smiles_from_molecule_name",
];

/// The Lab agent roster. The prose introducing it says "13 tools" but the
/// list that follows has 14 entries; the list is authoritative here.
pub const LAB_TOOLS: [&str; 14] = [
    "attach_pdf_of_markdown",
    "create_job",
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
    "start_job",
    "user_info",
];

pub const ANALYSIS_TOOLS: [&str; 10] = [
    "attach_pdf_of_markdown",
    "fuzzy_lookup_actor",
    "fuzzy_lookup_lab",
    "get_lab",
    "get_workflow_duration",
    "list_actors",
    "list_labs",
    "query_jobs",
    "query_job_status",
    "user_info",
];

pub const REPORT_TOOLS: [&str; 8] = [
    "attach_pdf_of_markdown",
    "fuzzy_lookup_lab",
    "get_lab",
    "get_workflow_duration",
    "list_labs",
    "query_jobs",
    "query_job_status",
    "user_info",
];

/// Every tool known to the platform: the lab roster plus the molecule tools.
pub const TOOL_UNIVERSE: [&str; 18] = [
    "attach_pdf_of_markdown",
    "create_job",
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
    "start_job",
    "user_info",
    "generate_smiles_image",
    "molecule_info_from_smiles",
    "molmim_generate",
    "smiles_from_molecule_name",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Job,
    Lab,
    Document,
    Workflow,
    ActorAsset,
}

pub fn category_of(tool: &str) -> Option<Category> {
    Some(match tool {
        "create_job" | "start_job" | "query_jobs" | "query_job_status" => Category::Job,
        "get_lab" | "list_labs" => Category::Lab,
        "attach_pdf_of_markdown" => Category::Document,
        "get_workflow_duration" | "get_workflow_parameter_schema" | "list_workflows_in_lab" => {
            Category::Workflow
        }
        "list_actors" | "fuzzy_lookup_actor" | "fuzzy_lookup_lab" | "user_info" => {
            Category::ActorAsset
        }
        t if MOLECULE_TOOLS.contains(&t) => Category::ActorAsset,
        _ => return None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Specialist {
    Molecule,
    Lab,
    Analysis,
    Report,
}

impl Specialist {
    pub const ALL: [Specialist; 4] = [
        Specialist::Molecule,
        Specialist::Lab,
        Specialist::Analysis,
        Specialist::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Specialist::Molecule => "molecule",
            Specialist::Lab => "lab",
            Specialist::Analysis => "analysis",
            Specialist::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no toolset for agent '{0}'")]
pub struct UnknownAgent(pub String);

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AgentToolset {
    pub agent: Specialist,
    pub tool_names: Vec<&'static str>,
}

pub fn toolset(agent: Specialist) -> AgentToolset {
    let names: &[&'static str] = match agent {
        Specialist::Molecule => &MOLECULE_TOOLS,
        Specialist::Lab => &LAB_TOOLS,
        Specialist::Analysis => &ANALYSIS_TOOLS,
        Specialist::Report => &REPORT_TOOLS,
    };
    AgentToolset {
        agent,
        tool_names: names.to_vec(),
    }
}

pub fn toolset_for(agent: &str) -> Result<AgentToolset, UnknownAgent> {
    Specialist::ALL
        .into_iter()
        .find(|s| s.as_str() == agent)
        .map(toolset)
        .ok_or_else(|| UnknownAgent(agent.to_string()))
}
