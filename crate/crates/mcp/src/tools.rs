//! Tool descriptors and their handlers.

use std::collections::BTreeMap;

use geocard_core::catalog::{Catalog, CatalogError};
use geocard_core::ec7::{
    check_footing_uls_ec7, design_all_approaches, design_footing_width_ec7, get_ec7_preset_partials,
    DesignApproach, DesignOptions, Ec7Error, FootingScenario,
};
use geocard_core::engine::{EvaluationRequest, InputValue};
use geocard_core::skills::{SkillError, SkillIndex};
use geocard_core::units::{convert, parse_quantity, UnitRegistry};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::Session;

pub const DEFAULT_SESSION: &str = "default";
const DEFAULT_RECOMMEND_LIMIT: usize = 5;

/// A named tool with its argument schema and a summary of its result.
#[derive(Debug, Clone, Serialize)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
    #[serde(rename = "outputSchema")]
    pub output_schema: Value,
}

/// A failure reported to the client as a tool result with `isError`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolError {
    pub kind: String,
    pub message: String,
    pub partial_trace: Option<Value>,
}

impl ToolError {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        ToolError {
            kind: kind.to_owned(),
            message: message.into(),
            partial_trace: None,
        }
    }

    pub fn to_value(&self) -> Value {
        let mut error = Map::new();
        error.insert("kind".into(), json!(self.kind));
        error.insert("message".into(), json!(self.message));
        if let Some(t) = &self.partial_trace {
            error.insert("partial_trace".into(), t.clone());
        }
        json!({ "error": error })
    }
}

impl From<CatalogError> for ToolError {
    fn from(e: CatalogError) -> Self {
        ToolError {
            kind: e.kind().to_owned(),
            message: e.to_string(),
            partial_trace: e.partial_trace().map(to_value),
        }
    }
}

impl From<Ec7Error> for ToolError {
    fn from(e: Ec7Error) -> Self {
        let partial_trace = match &e {
            Ec7Error::Catalog(c) => c.partial_trace().map(to_value),
            _ => None,
        };
        ToolError {
            kind: e.kind().to_owned(),
            message: e.to_string(),
            partial_trace,
        }
    }
}

impl From<SkillError> for ToolError {
    fn from(e: SkillError) -> Self {
        ToolError::new(e.kind(), e.to_string())
    }
}

fn to_value(v: &impl Serialize) -> Value {
    serde_json::to_value(v).expect("tool results serialize")
}

fn object_schema(properties: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": properties,
        "required": required,
        "additionalProperties": false
    })
}

fn output_schema(properties: &[&str]) -> Value {
    let props: Map<String, Value> = properties.iter().map(|p| ((*p).to_owned(), json!({}))).collect();
    json!({ "type": "object", "properties": props })
}

fn scenario_schema() -> Value {
    json!({
        "type": ["object", "string"],
        "description": "Scenario object with unit-tagged fields, or the name of a bundled scenario (\"jrc_a3\")"
    })
}

fn evaluate_schema(value_type: Value, value_description: &str) -> Value {
    object_schema(
        json!({
            "method_id": {"type": "string", "description": "Card id, e.g. BEARING_CAPACITY_TERZAGHI"},
            "variant_id": {"type": "string", "description": "Variant id within the card, e.g. strip"},
            "inputs": {"type": "object", "additionalProperties": value_type, "description": value_description},
            "overrides": {"type": "object", "additionalProperties": value_type,
                          "description": "Replacement values for param variables"},
            "session_id": {"type": "string", "description": "Session whose defaults fill absent inputs"}
        }),
        &["method_id", "variant_id", "inputs"],
    )
}

pub fn descriptors() -> Vec<ToolDescriptor> {
    vec![
        ToolDescriptor {
            name: "geo_list_methods",
            description: "List the method cards in the catalog, optionally filtered by exact category.",
            input_schema: object_schema(json!({"category": {"type": "string"}}), &[]),
            output_schema: output_schema(&["methods"]),
        },
        ToolDescriptor {
            name: "geo_get_method",
            description: "Return a complete method card: variables with units, equations per variant, assumptions, applicability and sources.",
            input_schema: object_schema(json!({"method_id": {"type": "string"}}), &["method_id"]),
            output_schema: output_schema(&["id", "title", "category", "variables", "variants", "sources"]),
        },
        ToolDescriptor {
            name: "geo_evaluate",
            description: "Evaluate a card variant with numeric inputs expressed in the card's declared units. Returns the full calculation trace.",
            input_schema: evaluate_schema(json!({"type": "number"}), "Input values in the card's units"),
            output_schema: output_schema(&["request", "steps", "outputs", "sources", "diagnostics"]),
        },
        ToolDescriptor {
            name: "geo_evaluate_with_units",
            description: "Evaluate a card variant with unit-tagged inputs such as \"30 deg\" or \"18 kN/m^3\". Inputs are converted and dimension-checked before evaluation.",
            input_schema: evaluate_schema(json!({"type": "string"}), "Unit-tagged input values"),
            output_schema: output_schema(&["request", "steps", "outputs", "sources", "diagnostics"]),
        },
        ToolDescriptor {
            name: "geo_list_skills",
            description: "List the installed skills (engineering workflow guides).",
            input_schema: object_schema(json!({}), &[]),
            output_schema: output_schema(&["skills"]),
        },
        ToolDescriptor {
            name: "geo_recommend_skills",
            description: "Rank skills by relevance to a free-text description of the problem. Call this first, before any calculation tool.",
            input_schema: object_schema(
                json!({"query": {"type": "string"}, "limit": {"type": "integer", "minimum": 1}}),
                &["query"],
            ),
            output_schema: output_schema(&["query", "matches"]),
        },
        ToolDescriptor {
            name: "geo_get_skill",
            description: "Return a skill's full workflow text and, unless disabled, its reference documents.",
            input_schema: object_schema(
                json!({"name": {"type": "string"}, "include_references": {"type": "boolean"}}),
                &["name"],
            ),
            output_schema: output_schema(&["name", "description", "version", "category", "body", "references"]),
        },
        ToolDescriptor {
            name: "geo_get_ec7_preset_partials",
            description: "Partial factors of an EN 1997-1 Design Approach (DA1-C1, DA1-C2, DA2 or DA3).",
            input_schema: object_schema(json!({"design_approach": {"type": "string"}}), &["design_approach"]),
            output_schema: output_schema(&["design_approach", "partials", "description"]),
        },
        ToolDescriptor {
            name: "geo_check_footing_uls_ec7",
            description: "Eurocode 7 ULS bearing check of a footing at a given width: design action V_d, design resistance R_d and utilization.",
            input_schema: object_schema(
                json!({
                    "scenario": scenario_schema(),
                    "design_approach": {"type": "string"},
                    "B": {"type": ["string", "number"], "description": "Footing width, unit-tagged or in m; defaults to the scenario width"}
                }),
                &["scenario", "design_approach"],
            ),
            output_schema: output_schema(&["design_approach", "B", "V_d", "R_d", "utilization", "pass", "design_parameters", "partial_factors", "trace"]),
        },
        ToolDescriptor {
            name: "geo_design_footing_width_ec7",
            description: "Find the footing width at which utilization reaches 1 for one Design Approach, or for all four with design_approach \"all\".",
            input_schema: object_schema(
                json!({
                    "scenario": scenario_schema(),
                    "design_approach": {"type": "string"},
                    "tolerance": {"type": "number", "exclusiveMinimum": 0}
                }),
                &["scenario", "design_approach"],
            ),
            output_schema: output_schema(&["design_approach", "B_req", "iterations", "converged", "check", "results", "da1_governing", "B_req_DA1"]),
        },
        ToolDescriptor {
            name: "geo_session_set_defaults",
            description: "Store default input values for a session. Defaults fill card inputs that a later evaluation omits and never replace supplied values.",
            input_schema: object_schema(
                json!({
                    "defaults": {"type": "object", "additionalProperties": {"type": ["string", "number"]}},
                    "session_id": {"type": "string"}
                }),
                &["defaults"],
            ),
            output_schema: output_schema(&["session_id", "defaults"]),
        },
        ToolDescriptor {
            name: "geo_health",
            description: "Server health: catalog and skill counts, load diagnostics and version.",
            input_schema: object_schema(json!({}), &[]),
            output_schema: output_schema(&["status", "cards", "skills", "version", "diagnostics"]),
        },
    ]
}

/// Read-only state plus the session store a tool call may touch.
pub struct Context<'a> {
    pub catalog: &'a Catalog,
    pub skills: &'a SkillIndex,
    pub sessions: &'a mut BTreeMap<String, Session>,
}

fn str_arg<'v>(args: &'v Map<String, Value>, key: &str) -> Option<&'v str> {
    args.get(key).and_then(Value::as_str)
}

fn input_value(v: &Value) -> InputValue {
    match v {
        Value::Number(n) => InputValue::Number(n.as_f64().unwrap_or(f64::NAN)),
        Value::String(s) => InputValue::Text(s.clone()),
        other => InputValue::Text(other.to_string()),
    }
}

fn session_id(args: &Map<String, Value>) -> String {
    str_arg(args, "session_id").unwrap_or(DEFAULT_SESSION).to_owned()
}

/// Dispatches a schema-valid call. Unknown names never get here.
pub fn call(ctx: Context<'_>, name: &str, args: &Map<String, Value>) -> Result<Value, ToolError> {
    match name {
        "geo_list_methods" => Ok(json!({ "methods": ctx.catalog.list_methods(str_arg(args, "category")) })),
        "geo_get_method" => Ok(to_value(ctx.catalog.get_method(str_arg(args, "method_id").unwrap_or_default())?)),
        "geo_evaluate" | "geo_evaluate_with_units" => evaluate(&ctx, args),
        "geo_list_skills" => Ok(json!({ "skills": ctx.skills.list_skills() })),
        "geo_recommend_skills" => {
            let query = str_arg(args, "query").unwrap_or_default();
            let limit = args
                .get("limit")
                .and_then(Value::as_f64)
                .map_or(DEFAULT_RECOMMEND_LIMIT, |l| l as usize);
            let matches = ctx.skills.recommend_skills(query, limit)?;
            Ok(json!({ "query": query, "matches": matches }))
        }
        "geo_get_skill" => {
            let include = args.get("include_references").and_then(Value::as_bool).unwrap_or(true);
            Ok(to_value(&ctx.skills.get_skill(str_arg(args, "name").unwrap_or_default(), include)?))
        }
        "geo_get_ec7_preset_partials" => preset_partials(str_arg(args, "design_approach").unwrap_or_default()),
        "geo_check_footing_uls_ec7" => check_uls(&ctx, args),
        "geo_design_footing_width_ec7" => design_width(&ctx, args),
        "geo_session_set_defaults" => set_defaults(ctx, args),
        "geo_health" => Ok(health(ctx.catalog, ctx.skills)),
        other => Err(ToolError::new("UnknownTool", format!("unknown tool `{other}`"))),
    }
}

fn evaluate(ctx: &Context<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let method_id = str_arg(args, "method_id").unwrap_or_default();
    let variant_id = str_arg(args, "variant_id").unwrap_or_default();
    let mut req = EvaluationRequest::new(method_id, variant_id);
    if let Some(Value::Object(inputs)) = args.get("inputs") {
        for (k, v) in inputs {
            req = req.input(k.clone(), input_value(v));
        }
    }
    if let Some(Value::Object(overrides)) = args.get("overrides") {
        for (k, v) in overrides {
            req = req.override_param(k.clone(), input_value(v));
        }
    }
    if let (Some(session), Ok(card)) = (ctx.sessions.get(&session_id(args)), ctx.catalog.get_method(method_id)) {
        if let Some((index, _)) = card.variant(variant_id) {
            for var in card.variant_inputs(index) {
                if let (false, Some(v)) = (req.inputs.contains_key(&var.key), session.defaults.get(&var.key)) {
                    req.inputs.insert(var.key.clone(), input_value(v));
                }
            }
        }
    }
    Ok(to_value(&ctx.catalog.evaluate(&req)?))
}

/// The preset in its published response shape: the six factors of a
/// drained analysis, without the undrained-strength factor.
fn preset_partials(label: &str) -> Result<Value, ToolError> {
    let pf = get_ec7_preset_partials(label)?;
    let da = pf.design_approach.label();
    Ok(json!({
        "design_approach": da,
        "partials": {
            "gamma_G": pf.gamma_G,
            "gamma_Q": pf.gamma_Q,
            "gamma_phi": pf.gamma_phi,
            "gamma_c": pf.gamma_c,
            "gamma_gamma": pf.gamma_gamma,
            "gamma_R": pf.gamma_R
        },
        "description": format!("Standard EN 1997-1 partial factors for {da}")
    }))
}

fn scenario(args: &Map<String, Value>) -> Result<FootingScenario, ToolError> {
    match args.get("scenario") {
        Some(Value::String(name)) if name == "jrc_a3" => Ok(FootingScenario::jrc_a3()),
        Some(Value::String(name)) => Err(ToolError::new(
            "InvalidScenario",
            format!("unknown bundled scenario `{name}` (available: jrc_a3)"),
        )),
        Some(obj) => Ok(FootingScenario::from_json(&obj.to_string())?),
        None => Err(ToolError::new("InvalidScenario", "scenario is required")),
    }
}

fn design_approach(args: &Map<String, Value>) -> Result<DesignApproach, ToolError> {
    let label = str_arg(args, "design_approach").unwrap_or_default();
    Ok(label.parse::<DesignApproach>()?)
}

fn width(args: &Map<String, Value>, scenario: &FootingScenario) -> Result<f64, ToolError> {
    let invalid = |m: String| ToolError::new("InvalidGeometry", m);
    match args.get("B") {
        Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
        Some(Value::String(s)) => {
            let q = parse_quantity(s).map_err(|e| invalid(format!("B: {e}")))?;
            let metre = UnitRegistry::bundled().resolve("m").expect("metre is registered");
            let m = convert(&q, metre).map_err(|e| ToolError::new("DimensionMismatch", format!("B: {e}")))?;
            Ok(m.magnitude)
        }
        _ => scenario
            .b
            .ok_or_else(|| invalid("B is required when the scenario has no width".into())),
    }
}

fn check_uls(ctx: &Context<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let scenario = scenario(args)?;
    let da = design_approach(args)?;
    let b = width(args, &scenario)?;
    Ok(to_value(&check_footing_uls_ec7(ctx.catalog, &scenario, da, b)?))
}

fn design_width(ctx: &Context<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let scenario = scenario(args)?;
    let mut opts = DesignOptions::default();
    if let Some(t) = args.get("tolerance").and_then(Value::as_f64) {
        opts.tolerance = t;
    }
    if str_arg(args, "design_approach").is_some_and(|l| l.eq_ignore_ascii_case("all")) {
        return Ok(to_value(&design_all_approaches(ctx.catalog, &scenario, &opts)?));
    }
    let da = design_approach(args)?;
    Ok(to_value(&design_footing_width_ec7(ctx.catalog, &scenario, da, &opts)?))
}

fn set_defaults(ctx: Context<'_>, args: &Map<String, Value>) -> Result<Value, ToolError> {
    let id = session_id(args);
    let session = ctx.sessions.entry(id.clone()).or_insert_with(Session::new);
    if let Some(Value::Object(defaults)) = args.get("defaults") {
        for (k, v) in defaults {
            session.defaults.insert(k.clone(), v.clone());
        }
    }
    Ok(json!({ "session_id": id, "defaults": session.defaults }))
}

pub fn health(catalog: &Catalog, skills: &SkillIndex) -> Value {
    let degraded = catalog.has_errors() || skills.has_errors() || catalog.is_empty() || skills.is_empty();
    let diagnostics: Vec<_> = catalog.diagnostics().iter().chain(skills.diagnostics()).collect();
    json!({
        "status": if degraded { "degraded" } else { "ok" },
        "cards": catalog.len(),
        "skills": skills.len(),
        "version": env!("CARGO_PKG_VERSION"),
        "diagnostics": diagnostics
    })
}
