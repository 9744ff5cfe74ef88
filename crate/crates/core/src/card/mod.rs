//! Method cards: the declarative JSON record of one analytical method, and
//! the load-time validation that every card passes before it can be
//! evaluated.

mod dimensions;

pub use dimensions::{validate_dimensions, DimensionFinding};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::expression::{self, ExprError, ExprNode};
use crate::units::{Unit, UnitRegistry};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CardError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("equation for `{equation_target}` references undeclared symbol `{symbol}`")]
    UndeclaredSymbol {
        equation_target: String,
        symbol: String,
    },
    #[error("variable `{variable}` has unknown unit `{unit}`")]
    UnknownUnit { variable: String, unit: String },
    #[error("duplicate {kind} `{key}`")]
    DuplicateKey { kind: &'static str, key: String },
    #[error("expression at `{path}`: {source}")]
    Expression {
        path: String,
        #[source]
        source: ExprError,
    },
}

impl CardError {
    fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        CardError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Input,
    Output,
    Intermediate,
    Param,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Intermediate => "intermediate",
            Role::Param => "param",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableSpec {
    pub key: String,
    pub name: String,
    pub role: Role,
    pub unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub target: String,
    pub sympy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    pub id: String,
    pub title: String,
    pub equations: Vec<EquationSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

/// Optional per-card fixed-point iteration settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSettings {
    /// Relaxation factor in (0, 1]; 1 means undamped.
    #[serde(default = "IterationSettings::default_damping")]
    pub damping: f64,
}

impl IterationSettings {
    fn default_damping() -> f64 {
        1.0
    }
}

impl Default for IterationSettings {
    fn default() -> Self {
        IterationSettings { damping: 1.0 }
    }
}

/// A parsed equation, index-aligned with its [`EquationSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledEquation {
    pub expr: ExprNode,
    pub condition: Option<ExprNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodCard {
    pub id: String,
    pub title: String,
    pub category: String,
    pub description: String,
    pub variables: Vec<VariableSpec>,
    pub variants: Vec<VariantSpec>,
    pub assumptions: Vec<String>,
    pub applicability: Vec<String>,
    pub sources: Vec<Source>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<IterationSettings>,
    #[serde(skip)]
    compiled: Vec<Vec<CompiledEquation>>,
    #[serde(skip)]
    units: BTreeMap<String, Unit>,
}

impl MethodCard {
    pub fn variable(&self, key: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.key == key)
    }

    pub fn variant(&self, id: &str) -> Option<(usize, &VariantSpec)> {
        self.variants.iter().enumerate().find(|(_, v)| v.id == id)
    }

    /// Parsed equations of variant `index`, in listed order.
    pub fn compiled(&self, variant_index: usize) -> &[CompiledEquation] {
        &self.compiled[variant_index]
    }

    /// Resolved unit of a declared variable.
    pub fn unit_of(&self, key: &str) -> Option<&Unit> {
        self.units.get(key)
    }

    pub fn iteration(&self) -> IterationSettings {
        self.iteration.unwrap_or_default()
    }

    /// Input variables referenced by the equations of a variant, in
    /// declaration order.
    pub fn variant_inputs(&self, variant_index: usize) -> Vec<&VariableSpec> {
        let used = self.variant_symbols(variant_index);
        self.variables
            .iter()
            .filter(|v| v.role == Role::Input && used.contains(&v.key))
            .collect()
    }

    /// Every symbol a variant touches: equation targets plus free symbols.
    pub fn variant_symbols(&self, variant_index: usize) -> BTreeSet<String> {
        let mut used = BTreeSet::new();
        for (spec, eq) in self.variants[variant_index]
            .equations
            .iter()
            .zip(&self.compiled[variant_index])
        {
            used.insert(spec.target.clone());
            used.extend(eq.expr.free_symbols());
            if let Some(c) = &eq.condition {
                used.extend(c.free_symbols());
            }
        }
        used
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serializes")
    }
}

/// Parses and fully validates one card against the bundled unit registry.
pub fn load_card(json_text: &str) -> Result<MethodCard, CardError> {
    load_card_with(json_text, UnitRegistry::bundled())
}

pub fn load_card_with(json_text: &str, registry: &UnitRegistry) -> Result<MethodCard, CardError> {
    let value: serde_json::Value =
        serde_json::from_str(json_text).map_err(|e| CardError::Json(e.to_string()))?;
    load_card_value(value, registry)
}

pub fn load_card_value(
    value: serde_json::Value,
    registry: &UnitRegistry,
) -> Result<MethodCard, CardError> {
    let mut card: MethodCard = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        CardError::schema(path, e.into_inner().to_string())
    })?;
    validate(&mut card, registry)?;
    Ok(card)
}

fn is_upper_snake(id: &str) -> bool {
    let mut chars = id.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase())
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

fn validate(card: &mut MethodCard, registry: &UnitRegistry) -> Result<(), CardError> {
    if !is_upper_snake(&card.id) {
        return Err(CardError::schema("id", format!("`{}` is not UPPER_SNAKE_CASE", card.id)));
    }
    for (field, text) in [("title", &card.title), ("category", &card.category)] {
        if text.trim().is_empty() {
            return Err(CardError::schema(field, "must not be empty"));
        }
    }
    if card.sources.is_empty() {
        return Err(CardError::schema("sources", "at least one source is required"));
    }
    if let Some(it) = card.iteration {
        if !(it.damping > 0.0 && it.damping <= 1.0) {
            return Err(CardError::schema("iteration.damping", "must lie in (0, 1]"));
        }
    }

    let mut roles = BTreeMap::new();
    let mut units = BTreeMap::new();
    for (i, var) in card.variables.iter().enumerate() {
        let path = format!("variables[{i}]");
        if !expression::is_identifier(&var.key) || expression::is_reserved_name(&var.key) {
            return Err(CardError::schema(
                format!("{path}.key"),
                format!("`{}` is not a usable symbol name", var.key),
            ));
        }
        if roles.insert(var.key.clone(), var.role).is_some() {
            return Err(CardError::DuplicateKey {
                kind: "variable key",
                key: var.key.clone(),
            });
        }
        let unit = registry.resolve(&var.unit).map_err(|_| CardError::UnknownUnit {
            variable: var.key.clone(),
            unit: var.unit.clone(),
        })?;
        units.insert(var.key.clone(), unit.clone());
        match (var.role, var.default) {
            (Role::Param, None) => {
                return Err(CardError::schema(
                    format!("{path}.default"),
                    "a param variable requires a default",
                ))
            }
            (Role::Param, Some(d)) if !d.is_finite() => {
                return Err(CardError::schema(format!("{path}.default"), "must be finite"))
            }
            (role, Some(_)) if role != Role::Param => {
                return Err(CardError::schema(
                    format!("{path}.default"),
                    format!("a default is only allowed on params, not on {role} variables"),
                ))
            }
            _ => {}
        }
    }

    if card.variants.is_empty() {
        return Err(CardError::schema("variants", "at least one variant is required"));
    }
    let outputs: Vec<&String> = card
        .variables
        .iter()
        .filter(|v| v.role == Role::Output)
        .map(|v| &v.key)
        .collect();
    if outputs.is_empty() {
        return Err(CardError::schema("variables", "at least one output variable is required"));
    }

    let mut variant_ids = BTreeSet::new();
    let mut compiled = Vec::with_capacity(card.variants.len());
    for (vi, variant) in card.variants.iter().enumerate() {
        let vpath = format!("variants[{vi}]");
        if !expression::is_identifier(&variant.id) {
            return Err(CardError::schema(
                format!("{vpath}.id"),
                format!("`{}` is not an identifier", variant.id),
            ));
        }
        if !variant_ids.insert(variant.id.clone()) {
            return Err(CardError::DuplicateKey {
                kind: "variant id",
                key: variant.id.clone(),
            });
        }
        if variant.equations.is_empty() {
            return Err(CardError::schema(format!("{vpath}.equations"), "no equations"));
        }
        let mut eqs = Vec::with_capacity(variant.equations.len());
        let mut unconditioned = BTreeSet::new();
        for (ei, eq) in variant.equations.iter().enumerate() {
            let epath = format!("{vpath}.equations[{ei}]");
            match roles.get(&eq.target) {
                Some(Role::Output | Role::Intermediate) => {}
                Some(role) => {
                    return Err(CardError::schema(
                        format!("{epath}.target"),
                        format!("`{}` is an {role} variable and cannot be computed", eq.target),
                    ))
                }
                None => {
                    return Err(CardError::UndeclaredSymbol {
                        equation_target: eq.target.clone(),
                        symbol: eq.target.clone(),
                    })
                }
            }
            let expr = expression::parse(&eq.sympy).map_err(|source| CardError::Expression {
                path: format!("{epath}.sympy"),
                source,
            })?;
            if expr.is_boolean() {
                return Err(CardError::Expression {
                    path: format!("{epath}.sympy"),
                    source: ExprError::DisallowedSyntax("equation must be numeric".into()),
                });
            }
            let condition = match &eq.condition {
                None => {
                    if !unconditioned.insert(eq.target.clone()) {
                        return Err(CardError::schema(
                            epath,
                            format!(
                                "more than one unconditioned equation for `{}`",
                                eq.target
                            ),
                        ));
                    }
                    None
                }
                Some(text) => {
                    let c = expression::parse(text).map_err(|source| CardError::Expression {
                        path: format!("{epath}.condition"),
                        source,
                    })?;
                    if !c.is_boolean() {
                        return Err(CardError::Expression {
                            path: format!("{epath}.condition"),
                            source: ExprError::DisallowedSyntax(
                                "condition must be a comparison or True".into(),
                            ),
                        });
                    }
                    Some(c)
                }
            };
            let mut symbols = expr.free_symbols();
            if let Some(c) = &condition {
                symbols.extend(c.free_symbols());
            }
            if let Some(symbol) = symbols.into_iter().find(|s| !roles.contains_key(s)) {
                return Err(CardError::UndeclaredSymbol {
                    equation_target: eq.target.clone(),
                    symbol,
                });
            }
            eqs.push(CompiledEquation { expr, condition });
        }
        for out in &outputs {
            if !variant.equations.iter().any(|e| &e.target == *out) {
                return Err(CardError::schema(
                    format!("{vpath}.equations"),
                    format!("output `{out}` has no equation in variant `{}`", variant.id),
                ));
            }
        }
        compiled.push(eqs);
    }
    card.compiled = compiled;
    card.units = units;
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use serde_json::json;

    /// Listing-style Terzaghi card with the strip variant only.
    pub(crate) fn terzaghi_strip_json() -> serde_json::Value {
        json!({
            "id": "BEARING_CAPACITY_TERZAGHI",
            "title": "Terzaghi's Bearing Capacity Theory",
            "category": "Shallow Foundations - Bearing Capacity",
            "description": "Classical bearing capacity of shallow foundations.",
            "variables": [
                {"key": "q_ult", "name": "ultimate_bearing_capacity", "role": "output", "unit": "kPa"},
                {"key": "phi_prime", "name": "effective_friction_angle", "role": "input", "unit": "radians"},
                {"key": "c_prime", "name": "effective_cohesion", "role": "input", "unit": "kPa"},
                {"key": "gamma", "name": "unit_weight", "role": "input", "unit": "kN/m^3"},
                {"key": "B", "name": "width", "role": "input", "unit": "m"},
                {"key": "q", "name": "overburden", "role": "input", "unit": "kPa"},
                {"key": "N_q", "name": "N_q", "role": "intermediate", "unit": "dimensionless"},
                {"key": "N_c", "name": "N_c", "role": "intermediate", "unit": "dimensionless"},
                {"key": "N_gamma", "name": "N_gamma", "role": "intermediate", "unit": "dimensionless"}
            ],
            "variants": [{
                "id": "general_shear_failure_strip",
                "title": "General Shear Failure for Strip Footings",
                "equations": [
                    {"target": "N_q", "sympy": "exp(pi*tan(phi_prime))*tan(pi/4 + phi_prime/2)**2"},
                    {"target": "N_c", "sympy": "Piecewise(((N_q - 1)*cot(phi_prime), phi_prime > 0), (5.14, True))"},
                    {"target": "N_gamma", "sympy": "2*(N_q + 1)*tan(phi_prime)"},
                    {"target": "q_ult", "sympy": "c_prime*N_c + q*N_q + 0.5*gamma*B*N_gamma"}
                ]
            }],
            "assumptions": ["The foundation is shallow."],
            "applicability": ["Centrally loaded shallow footings."],
            "sources": [{"title": "Terzaghi, K. (1943). Theoretical Soil Mechanics. John Wiley & Sons."}]
        })
    }

    fn load(v: serde_json::Value) -> Result<MethodCard, CardError> {
        load_card(&v.to_string())
    }

    #[test]
    fn loads_listing_card() {
        let card = load(terzaghi_strip_json()).unwrap();
        for key in ["q_ult", "phi_prime", "c_prime", "gamma", "B", "q"] {
            assert!(card.variable(key).is_some(), "{key}");
        }
        let (idx, variant) = card.variant("general_shear_failure_strip").unwrap();
        assert_eq!(variant.equations.len(), 4);
        assert_eq!(card.compiled(idx).len(), 4);
        assert_eq!(card.unit_of("gamma").unwrap().name(), "kN/m^3");
        let inputs: Vec<_> = card.variant_inputs(idx).iter().map(|v| v.key.as_str()).collect();
        assert_eq!(inputs, ["phi_prime", "c_prime", "gamma", "B", "q"]);
    }

    #[test]
    fn undeclared_symbol() {
        let mut v = terzaghi_strip_json();
        v["variants"][0]["equations"][3]["sympy"] = json!("c_prime*N_c + q*N_q*D_f");
        assert_eq!(
            load(v).unwrap_err(),
            CardError::UndeclaredSymbol {
                equation_target: "q_ult".into(),
                symbol: "D_f".into()
            }
        );
    }

    #[test]
    fn unknown_unit() {
        let mut v = terzaghi_strip_json();
        v["variables"][4]["unit"] = json!("furlongs");
        assert_eq!(
            load(v).unwrap_err(),
            CardError::UnknownUnit {
                variable: "B".into(),
                unit: "furlongs".into()
            }
        );
    }

    #[test]
    fn schema_errors_carry_paths() {
        let mut v = terzaghi_strip_json();
        v["variables"][2]["role"] = json!("knob");
        match load(v).unwrap_err() {
            CardError::Schema { path, .. } => assert_eq!(path, "variables[2].role"),
            other => panic!("{other:?}"),
        }
        let mut v = terzaghi_strip_json();
        v.as_object_mut().unwrap().remove("sources");
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
        let mut v = terzaghi_strip_json();
        v["sources"] = json!([]);
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
        let mut v = terzaghi_strip_json();
        v["id"] = json!("terzaghi");
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
    }

    #[test]
    fn duplicate_keys_and_variants() {
        let mut v = terzaghi_strip_json();
        v["variables"][5]["key"] = json!("B");
        assert!(matches!(load(v).unwrap_err(), CardError::DuplicateKey { .. }));
        let mut v = terzaghi_strip_json();
        let variant = v["variants"][0].clone();
        v["variants"].as_array_mut().unwrap().push(variant);
        assert!(matches!(load(v).unwrap_err(), CardError::DuplicateKey { .. }));
    }

    #[test]
    fn role_rules() {
        let mut v = terzaghi_strip_json();
        v["variables"][3]["default"] = json!(18.0);
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
        let mut v = terzaghi_strip_json();
        v["variables"][3]["role"] = json!("param");
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
        let mut v = terzaghi_strip_json();
        v["variants"][0]["equations"][0]["target"] = json!("B");
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
        // output without equation
        let mut v = terzaghi_strip_json();
        v["variants"][0]["equations"].as_array_mut().unwrap().pop();
        assert!(matches!(load(v).unwrap_err(), CardError::Schema { .. }));
    }

    #[test]
    fn expression_errors_propagate() {
        let mut v = terzaghi_strip_json();
        v["variants"][0]["equations"][2]["sympy"] = json!("system(phi_prime)");
        match load(v).unwrap_err() {
            CardError::Expression { source, .. } => {
                assert_eq!(source, ExprError::DisallowedFunction("system".into()))
            }
            other => panic!("{other:?}"),
        }
        let mut v = terzaghi_strip_json();
        v["variants"][0]["equations"][2]["condition"] = json!("phi_prime + 1");
        assert!(matches!(load(v).unwrap_err(), CardError::Expression { .. }));
    }

    #[test]
    fn multiple_equations_per_target() {
        let mut v = terzaghi_strip_json();
        let eqs = v["variants"][0]["equations"].as_array_mut().unwrap();
        eqs.push(json!({"target": "N_gamma", "sympy": "0"}));
        assert!(matches!(load(v.clone()).unwrap_err(), CardError::Schema { .. }));
        v["variants"][0]["equations"][4]["condition"] = json!("phi_prime == 0");
        assert!(load(v).is_ok());
    }

    #[test]
    fn serialization_round_trip() {
        let card = load(terzaghi_strip_json()).unwrap();
        let again = load_card(&card.to_json_pretty()).unwrap();
        assert_eq!(card, again);
    }

    #[test]
    fn invalid_json_is_structured() {
        assert!(matches!(load_card("{"), Err(CardError::Json(_))));
        assert!(matches!(load_card("[]"), Err(CardError::Schema { .. })));
    }

    proptest::proptest! {
        #[test]
        fn load_is_total(text in "\\PC{0,200}") {
            let _ = load_card(&text);
        }

        #[test]
        fn load_is_total_on_mutated_cards(path in 0usize..9, junk in proptest::prelude::any::<i64>()) {
            let mut v = terzaghi_strip_json();
            let keys = ["id", "title", "category", "description", "variables", "variants", "assumptions", "applicability", "sources"];
            v[keys[path]] = json!(junk);
            proptest::prop_assert!(load(v).is_err());
        }
    }
}
