//! Evaluation of a card variant against concrete inputs.
//!
//! Equations are resolved in repeated passes: whenever every symbol an
//! equation needs is bound (and its condition, if any, holds) its target is
//! assigned. When passes stop making progress, the remaining targets are
//! grouped into strongly connected components and any self-contained cycle is
//! solved by fixed-point iteration, after which the passes resume. Everything
//! that gets assigned is recorded in order in an [`EvaluationTrace`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::card::{CompiledEquation, MethodCard, Role, Source};
use crate::expression::{self, ExprError};
use crate::units::{convert, Quantity, UnitError, UnitRegistry};

/// Converged when the largest relative change in one sweep drops below this.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-9;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 200;
const INITIAL_GUESS: f64 = 1.0;

/// A raw input: a unit-tagged quantity, a bare card-normalized number, or
/// text such as `"30 deg"`.
#[derive(Debug, Clone, PartialEq)]
pub enum InputValue {
    Quantity(Quantity),
    Number(f64),
    Text(String),
}

impl From<f64> for InputValue {
    fn from(v: f64) -> Self {
        InputValue::Number(v)
    }
}

impl From<&str> for InputValue {
    fn from(v: &str) -> Self {
        InputValue::Text(v.to_owned())
    }
}

impl From<Quantity> for InputValue {
    fn from(v: Quantity) -> Self {
        InputValue::Quantity(v)
    }
}

impl fmt::Display for InputValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputValue::Quantity(q) => write!(f, "{q}"),
            InputValue::Number(v) => write!(f, "{v}"),
            InputValue::Text(t) => f.write_str(t),
        }
    }
}

impl Serialize for InputValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            InputValue::Number(v) => s.serialize_f64(*v),
            InputValue::Quantity(q) => s.serialize_str(&q.to_string()),
            InputValue::Text(t) => s.serialize_str(t),
        }
    }
}

impl<'de> Deserialize<'de> for InputValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Number(v) => InputValue::Number(v),
            Raw::Text(t) => InputValue::Text(t),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRequest {
    pub card_id: String,
    pub variant_id: String,
    pub inputs: BTreeMap<String, InputValue>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, InputValue>,
}

impl EvaluationRequest {
    pub fn new(card_id: impl Into<String>, variant_id: impl Into<String>) -> Self {
        EvaluationRequest {
            card_id: card_id.into(),
            variant_id: variant_id.into(),
            inputs: BTreeMap::new(),
            overrides: BTreeMap::new(),
        }
    }

    pub fn input(mut self, key: impl Into<String>, value: impl Into<InputValue>) -> Self {
        self.inputs.insert(key.into(), value.into());
        self
    }

    pub fn override_param(mut self, key: impl Into<String>, value: impl Into<InputValue>) -> Self {
        self.overrides.insert(key.into(), value.into());
        self
    }
}

/// A value with the name of the unit it is expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracedValue {
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepMethod {
    Direct,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub target: String,
    pub expression: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub inputs: BTreeMap<String, f64>,
    pub result: TracedValue,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub method: StepMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleDiagnostic {
    pub variables: Vec<String>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Productive resolution passes.
    pub passes: usize,
    pub cycles: Vec<CycleDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestEcho {
    pub card_id: String,
    pub variant_id: String,
    pub inputs: BTreeMap<String, InputValue>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, InputValue>,
    /// Inputs and params after conversion to card units.
    pub normalized: BTreeMap<String, TracedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationTrace {
    pub request: RequestEcho,
    pub steps: Vec<TraceStep>,
    pub outputs: BTreeMap<String, TracedValue>,
    pub sources: Vec<Source>,
    pub diagnostics: Diagnostics,
}

impl EvaluationTrace {
    /// Canonical JSON: fixed field order, sorted maps, full precision.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }

    pub fn output(&self, key: &str) -> Option<f64> {
        self.outputs.get(key).map(|v| v.value)
    }

    pub fn step(&self, target: &str) -> Option<&TraceStep> {
        self.steps.iter().find(|s| s.target == target)
    }

    /// Value of any traced variable: a step result or a normalized input.
    pub fn value(&self, key: &str) -> Option<f64> {
        self.step(key)
            .map(|s| s.result.value)
            .or_else(|| self.request.normalized.get(key).map(|v| v.value))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("card `{card}` has no variant `{variant}`")]
    UnknownVariant { card: String, variant: String },
    #[error("missing input(s): {}", .0.join(", "))]
    MissingInput(Vec<String>),
    #[error("unexpected input `{0}`")]
    UnexpectedInput(String),
    #[error("input `{key}`: {source}")]
    Input {
        key: String,
        #[source]
        source: UnitError,
    },
    #[error("input `{key}`: expected a value in {expected}, got {given}")]
    DimensionMismatch {
        key: String,
        expected: String,
        given: String,
    },
    #[error("cannot compute {} from the given inputs", .0.join(", "))]
    UnresolvedVariable(Vec<String>),
    #[error("fixed-point iteration over {} did not converge after {iterations} iterations (residual {residual:e})", .cycle.join(", "))]
    NonConvergence {
        cycle: Vec<String>,
        iterations: usize,
        residual: f64,
    },
    #[error("more than one equation condition holds for `{target}`")]
    ConditionConflict { target: String },
    #[error("evaluating `{target}`: {source}")]
    Evaluation {
        target: String,
        #[source]
        source: ExprError,
        partial: Box<EvaluationTrace>,
    },
}

impl EngineError {
    /// Stable variant name for structured error payloads.
    pub fn kind(&self) -> &'static str {
        match self {
            EngineError::UnknownVariant { .. } => "UnknownVariant",
            EngineError::MissingInput(_) => "MissingInput",
            EngineError::UnexpectedInput(_) => "UnexpectedInput",
            EngineError::Input { source, .. } => match source {
                UnitError::UnknownUnit(_) => "UnknownUnit",
                UnitError::DimensionMismatch { .. } => "DimensionMismatch",
                _ => "MalformedQuantity",
            },
            EngineError::DimensionMismatch { .. } => "DimensionMismatch",
            EngineError::UnresolvedVariable(_) => "UnresolvedVariable",
            EngineError::NonConvergence { .. } => "NonConvergence",
            EngineError::ConditionConflict { .. } => "ConditionConflict",
            EngineError::Evaluation { source, .. } => match source {
                ExprError::MathDomain(_) => "MathDomain",
                ExprError::NoBranchTaken => "NoBranchTaken",
                _ => "EvaluationError",
            },
        }
    }

    /// Trace up to the failing step, for errors raised mid-evaluation.
    pub fn partial_trace(&self) -> Option<&EvaluationTrace> {
        match self {
            EngineError::Evaluation { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

fn normalize_value(
    card: &MethodCard,
    key: &str,
    raw: &InputValue,
    registry: &UnitRegistry,
) -> Result<f64, EngineError> {
    let unit = card.unit_of(key).expect("declared variable has a unit");
    let quantity = match raw {
        InputValue::Number(v) => {
            if !v.is_finite() {
                return Err(EngineError::Input {
                    key: key.to_owned(),
                    source: UnitError::MalformedQuantity(v.to_string()),
                });
            }
            return Ok(*v);
        }
        InputValue::Quantity(q) => q.clone(),
        InputValue::Text(t) => registry.parse_quantity(t).map_err(|source| EngineError::Input {
            key: key.to_owned(),
            source,
        })?,
    };
    match convert(&quantity, unit) {
        Ok(q) => Ok(q.magnitude),
        Err(UnitError::DimensionMismatch { .. }) => Err(EngineError::DimensionMismatch {
            key: key.to_owned(),
            expected: format!("{} ({})", unit.name(), unit.dimension()),
            given: format!("{} ({})", quantity, quantity.dimension()),
        }),
        Err(source) => Err(EngineError::Input {
            key: key.to_owned(),
            source,
        }),
    }
}

/// Converts raw inputs for one variant to magnitudes in the card's declared
/// units. Bare numbers are taken as already normalized.
pub fn normalize_inputs(
    card: &MethodCard,
    variant_id: &str,
    raw: &BTreeMap<String, InputValue>,
) -> Result<BTreeMap<String, f64>, EngineError> {
    normalize_inputs_with(card, variant_id, raw, UnitRegistry::bundled())
}

pub fn normalize_inputs_with(
    card: &MethodCard,
    variant_id: &str,
    raw: &BTreeMap<String, InputValue>,
    registry: &UnitRegistry,
) -> Result<BTreeMap<String, f64>, EngineError> {
    let (vi, _) = card.variant(variant_id).ok_or_else(|| EngineError::UnknownVariant {
        card: card.id.clone(),
        variant: variant_id.to_owned(),
    })?;
    let required: Vec<String> = card.variant_inputs(vi).iter().map(|v| v.key.clone()).collect();
    if let Some(extra) = raw.keys().find(|k| !required.contains(k)) {
        return Err(EngineError::UnexpectedInput(extra.clone()));
    }
    let missing: Vec<String> = required.iter().filter(|k| !raw.contains_key(*k)).cloned().collect();
    if !missing.is_empty() {
        return Err(EngineError::MissingInput(missing));
    }
    raw.iter()
        .map(|(k, v)| Ok((k.clone(), normalize_value(card, k, v, registry)?)))
        .collect()
}

enum Selection {
    Ready(usize),
    Waiting,
}

struct Run<'a> {
    card: &'a MethodCard,
    specs: &'a [crate::card::EquationSpec],
    eqs: &'a [CompiledEquation],
    values: BTreeMap<String, f64>,
    assigned: BTreeSet<String>,
    steps: Vec<TraceStep>,
    echo: RequestEcho,
    diagnostics: Diagnostics,
}

impl Run<'_> {
    fn equations_for<'s>(&'s self, target: &'s str) -> impl Iterator<Item = usize> + 's {
        self.specs
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.target == target)
            .map(|(i, _)| i)
    }

    fn bound(&self, symbols: &BTreeSet<String>) -> bool {
        symbols.iter().all(|s| self.values.contains_key(s))
    }

    /// Picks the applicable equation for `target` given current bindings.
    /// Exactly one condition may hold; an unconditioned equation is the
    /// fallback when none does.
    fn select(&self, target: &str) -> Result<Selection, EngineError> {
        let mut fallback = None;
        let mut chosen = Vec::new();
        for i in self.equations_for(target) {
            match &self.eqs[i].condition {
                None => fallback = Some(i),
                Some(cond) => {
                    if !self.bound(&cond.free_symbols()) {
                        return Ok(Selection::Waiting);
                    }
                    let holds = expression::evaluate_condition(cond, &self.values)
                        .map_err(|e| self.fail(target, e))?;
                    if holds {
                        chosen.push(i);
                    }
                }
            }
        }
        if chosen.len() > 1 {
            return Err(EngineError::ConditionConflict {
                target: target.to_owned(),
            });
        }
        match chosen.first().copied().or(fallback) {
            Some(i) if self.bound(&self.eqs[i].expr.free_symbols()) => Ok(Selection::Ready(i)),
            _ => Ok(Selection::Waiting),
        }
    }

    fn partial(&self) -> EvaluationTrace {
        EvaluationTrace {
            request: self.echo.clone(),
            steps: self.steps.clone(),
            outputs: BTreeMap::new(),
            sources: self.card.sources.clone(),
            diagnostics: self.diagnostics.clone(),
        }
    }

    fn fail(&self, target: &str, source: ExprError) -> EngineError {
        EngineError::Evaluation {
            target: target.to_owned(),
            source,
            partial: Box::new(self.partial()),
        }
    }

    fn record(&mut self, eq_index: usize, value: f64, method: StepMethod) {
        let spec = &self.specs[eq_index];
        let eq = &self.eqs[eq_index];
        let mut symbols = eq.expr.free_symbols();
        if let Some(c) = &eq.condition {
            symbols.extend(c.free_symbols());
        }
        let inputs = symbols
            .into_iter()
            .filter(|s| s != &spec.target || method == StepMethod::Iterative)
            .filter_map(|s| self.values.get(&s).map(|v| (s, *v)))
            .collect();
        let unit = self.card.unit_of(&spec.target).expect("declared").name().to_owned();
        self.steps.push(TraceStep {
            index: self.steps.len(),
            target: spec.target.clone(),
            expression: spec.sympy.clone(),
            condition: spec.condition.clone(),
            inputs,
            result: TracedValue { value, unit },
            description: spec.description.clone(),
            method,
        });
    }

    /// Targets in order of first appearance.
    fn targets(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.specs
            .iter()
            .filter(|s| seen.insert(s.target.clone()))
            .map(|s| s.target.clone())
            .collect()
    }

    fn resolve_passes(&mut self, targets: &[String]) -> Result<(), EngineError> {
        loop {
            let mut progress = false;
            for target in targets {
                if self.assigned.contains(target) {
                    continue;
                }
                if let Selection::Ready(i) = self.select(target)? {
                    let value = expression::evaluate(&self.eqs[i].expr, &self.values)
                        .map_err(|e| self.fail(target, e))?;
                    self.values.insert(target.clone(), value);
                    self.assigned.insert(target.clone());
                    self.record(i, value, StepMethod::Direct);
                    progress = true;
                }
            }
            if !progress {
                return Ok(());
            }
            self.diagnostics.passes += 1;
        }
    }

    /// Unassigned targets each unassigned target's equations depend on.
    fn dependencies(&self, target: &str, pending: &BTreeSet<String>) -> BTreeSet<String> {
        self.equations_for(target)
            .flat_map(|i| {
                let eq = &self.eqs[i];
                let mut s = eq.expr.free_symbols();
                if let Some(c) = &eq.condition {
                    s.extend(c.free_symbols());
                }
                s
            })
            .filter(|s| pending.contains(s))
            .collect()
    }

    /// A cycle among pending targets whose other dependencies are all bound.
    fn solvable_cycle(&self, targets: &[String]) -> Option<Vec<String>> {
        let pending: BTreeSet<String> = targets
            .iter()
            .filter(|t| !self.assigned.contains(*t))
            .cloned()
            .collect();
        let order: Vec<&String> = targets.iter().filter(|t| pending.contains(*t)).collect();
        let deps: BTreeMap<&String, BTreeSet<String>> = order
            .iter()
            .map(|t| (*t, self.dependencies(t, &pending)))
            .collect();
        for component in strongly_connected(&order, &deps) {
            let is_cycle = component.len() > 1 || deps[&component[0]].contains(&component[0]);
            if !is_cycle {
                continue;
            }
            let members: BTreeSet<&String> = component.iter().collect();
            let closed = component.iter().all(|t| {
                self.equations_for(t).all(|i| {
                    let eq = &self.eqs[i];
                    let mut s = eq.expr.free_symbols();
                    if let Some(c) = &eq.condition {
                        s.extend(c.free_symbols());
                    }
                    s.iter()
                        .all(|x| self.values.contains_key(x) || members.contains(x))
                })
            });
            if closed {
                return Some(component);
            }
        }
        None
    }

    fn iterate(&mut self, cycle: &[String]) -> Result<(), EngineError> {
        let damping = self.card.iteration().damping;
        for v in cycle {
            let guess = self
                .card
                .variable(v)
                .and_then(|spec| spec.default)
                .unwrap_or(INITIAL_GUESS);
            self.values.insert(v.clone(), guess);
        }
        let mut chosen: BTreeMap<String, usize> = BTreeMap::new();
        let mut residual = f64::INFINITY;
        for iteration in 1..=FIXED_POINT_MAX_ITERATIONS {
            residual = 0.0;
            for v in cycle {
                let i = match self.select(v)? {
                    Selection::Ready(i) => i,
                    Selection::Waiting => {
                        return Err(EngineError::UnresolvedVariable(vec![v.clone()]))
                    }
                };
                chosen.insert(v.clone(), i);
                let computed = expression::evaluate(&self.eqs[i].expr, &self.values)
                    .map_err(|e| self.fail(v, e))?;
                let old = self.values[v];
                let new = old + damping * (computed - old);
                let scale = new.abs().max(old.abs());
                let change = if scale == 0.0 { 0.0 } else { (new - old).abs() / scale };
                residual = residual.max(change);
                self.values.insert(v.clone(), new);
            }
            if residual < FIXED_POINT_TOLERANCE {
                for v in cycle {
                    self.assigned.insert(v.clone());
                    let value = self.values[v];
                    self.record(chosen[v], value, StepMethod::Iterative);
                }
                self.diagnostics.cycles.push(CycleDiagnostic {
                    variables: cycle.to_vec(),
                    iterations: iteration,
                    residual,
                });
                return Ok(());
            }
        }
        Err(EngineError::NonConvergence {
            cycle: cycle.to_vec(),
            iterations: FIXED_POINT_MAX_ITERATIONS,
            residual,
        })
    }
}

/// Tarjan's algorithm; components come out in dependency order.
fn strongly_connected(
    nodes: &[&String],
    deps: &BTreeMap<&String, BTreeSet<String>>,
) -> Vec<Vec<String>> {
    struct State<'a> {
        index: BTreeMap<&'a String, usize>,
        low: BTreeMap<&'a String, usize>,
        stack: Vec<&'a String>,
        on_stack: BTreeSet<&'a String>,
        next: usize,
        out: Vec<Vec<String>>,
    }
    fn visit<'a>(
        v: &'a String,
        nodes: &[&'a String],
        deps: &BTreeMap<&'a String, BTreeSet<String>>,
        st: &mut State<'a>,
    ) {
        st.index.insert(v, st.next);
        st.low.insert(v, st.next);
        st.next += 1;
        st.stack.push(v);
        st.on_stack.insert(v);
        for w in nodes.iter().filter(|w| deps[v].contains(**w)) {
            if !st.index.contains_key(*w) {
                visit(w, nodes, deps, st);
                let lw = st.low[*w];
                let lv = st.low.get_mut(v).unwrap();
                *lv = (*lv).min(lw);
            } else if st.on_stack.contains(*w) {
                let iw = st.index[*w];
                let lv = st.low.get_mut(v).unwrap();
                *lv = (*lv).min(iw);
            }
        }
        if st.low[v] == st.index[v] {
            let mut comp = Vec::new();
            while let Some(w) = st.stack.pop() {
                st.on_stack.remove(w);
                comp.push(w.clone());
                if w == v {
                    break;
                }
            }
            // listed order within the component
            comp.sort_by_key(|c| nodes.iter().position(|n| *n == c));
            st.out.push(comp);
        }
    }
    let mut st = State {
        index: BTreeMap::new(),
        low: BTreeMap::new(),
        stack: Vec::new(),
        on_stack: BTreeSet::new(),
        next: 0,
        out: Vec::new(),
    };
    for v in nodes {
        if !st.index.contains_key(*v) {
            visit(v, nodes, deps, &mut st);
        }
    }
    st.out
}

/// Runs one variant of `card` on the request's inputs.
pub fn evaluate_card(card: &MethodCard, req: &EvaluationRequest) -> Result<EvaluationTrace, EngineError> {
    evaluate_card_with(card, req, UnitRegistry::bundled())
}

pub fn evaluate_card_with(
    card: &MethodCard,
    req: &EvaluationRequest,
    registry: &UnitRegistry,
) -> Result<EvaluationTrace, EngineError> {
    let (vi, variant) = card.variant(&req.variant_id).ok_or_else(|| EngineError::UnknownVariant {
        card: card.id.clone(),
        variant: req.variant_id.clone(),
    })?;
    let mut values = normalize_inputs_with(card, &req.variant_id, &req.inputs, registry)?;

    for param in card.variables.iter().filter(|v| v.role == Role::Param) {
        let default = param.default.expect("params carry defaults");
        values.insert(param.key.clone(), default);
    }
    for (key, raw) in &req.overrides {
        match card.variable(key) {
            Some(v) if v.role == Role::Param => {
                let value = normalize_value(card, key, raw, registry)?;
                values.insert(key.clone(), value);
            }
            _ => return Err(EngineError::UnexpectedInput(key.clone())),
        }
    }

    let used = card.variant_symbols(vi);
    let normalized = values
        .iter()
        .filter(|(k, _)| used.contains(*k))
        .map(|(k, v)| {
            let unit = card.unit_of(k).expect("declared").name().to_owned();
            (k.clone(), TracedValue { value: *v, unit })
        })
        .collect();

    let mut run = Run {
        card,
        specs: &variant.equations,
        eqs: card.compiled(vi),
        values,
        assigned: BTreeSet::new(),
        steps: Vec::new(),
        echo: RequestEcho {
            card_id: req.card_id.clone(),
            variant_id: req.variant_id.clone(),
            inputs: req.inputs.clone(),
            overrides: req.overrides.clone(),
            normalized,
        },
        diagnostics: Diagnostics::default(),
    };
    let targets = run.targets();
    loop {
        run.resolve_passes(&targets)?;
        if targets.iter().all(|t| run.assigned.contains(t)) {
            break;
        }
        match run.solvable_cycle(&targets) {
            Some(cycle) => run.iterate(&cycle)?,
            None => {
                let unresolved = targets
                    .iter()
                    .filter(|t| !run.assigned.contains(*t))
                    .cloned()
                    .collect();
                return Err(EngineError::UnresolvedVariable(unresolved));
            }
        }
    }

    let outputs = card
        .variables
        .iter()
        .filter(|v| v.role == Role::Output && run.assigned.contains(&v.key))
        .map(|v| {
            (
                v.key.clone(),
                TracedValue {
                    value: run.values[&v.key],
                    unit: card.unit_of(&v.key).expect("declared").name().to_owned(),
                },
            )
        })
        .collect();

    Ok(EvaluationTrace {
        request: run.echo,
        steps: run.steps,
        outputs,
        sources: card.sources.clone(),
        diagnostics: run.diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::card::load_card;
    use crate::card::tests::terzaghi_strip_json;
    use serde_json::json;

    fn terzaghi() -> MethodCard {
        load_card(&terzaghi_strip_json().to_string()).unwrap()
    }

    fn strip_request() -> EvaluationRequest {
        EvaluationRequest::new("BEARING_CAPACITY_TERZAGHI", "general_shear_failure_strip")
            .input("c_prime", "0 kPa")
            .input("phi_prime", "30 deg")
            .input("gamma", "18 kN/m^3")
            .input("B", "2 m")
            .input("q", "18 kPa")
    }

    #[test]
    fn terzaghi_strip_against_hand_oracle() {
        // Independent scalar oracle at phi' = 30 deg, computed before the engine:
        // N_q = e^(pi tan30) tan^2(60) ; N_c = (N_q-1) cot30 ; N_gamma = 2(N_q+1) tan30
        const NQ: f64 = 18.401122218708668;
        const NC: f64 = 30.139627791519086;
        const NG: f64 = 22.402486271104557;
        const QULT: f64 = 734.4649528166381; // 0*NC + 18*NQ + 0.5*18*2*NG
        let trace = evaluate_card(&terzaghi(), &strip_request()).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
        assert!(rel(trace.value("N_q").unwrap(), NQ) < 1e-12);
        assert!(rel(trace.value("N_c").unwrap(), NC) < 1e-12);
        assert!(rel(trace.value("N_gamma").unwrap(), NG) < 1e-12);
        assert!(rel(trace.output("q_ult").unwrap(), QULT) < 1e-12);
        assert!((trace.output("q_ult").unwrap() - 734.46).abs() < 0.005);
        assert_eq!(trace.outputs["q_ult"].unit, "kPa");
        assert_eq!(trace.steps.len(), 4);
        assert!(trace.steps.iter().enumerate().all(|(i, s)| s.index == i));
    }

    #[test]
    fn frictionless_strip_collapses_to_cohesion_term() {
        let req = EvaluationRequest::new("BEARING_CAPACITY_TERZAGHI", "general_shear_failure_strip")
            .input("c_prime", "20 kPa")
            .input("phi_prime", 0.0)
            .input("gamma", "18 kN/m^3")
            .input("B", "1 m")
            .input("q", "0 kPa");
        let trace = evaluate_card(&terzaghi(), &req).unwrap();
        assert_eq!(trace.value("N_gamma"), Some(0.0));
        assert!((trace.output("q_ult").unwrap() - 102.8).abs() < 1e-9);
    }

    #[test]
    fn normalization() {
        let card = terzaghi();
        let raw: BTreeMap<String, InputValue> = [
            ("phi_prime", InputValue::from("38 deg")),
            ("B", InputValue::Quantity(crate::units::parse_quantity("1497 mm").unwrap())),
            ("c_prime", InputValue::Number(0.0)),
            ("gamma", InputValue::from("18 kN/m3")),
            ("q", InputValue::from("0.018 MPa")),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        let n = normalize_inputs(&card, "general_shear_failure_strip", &raw).unwrap();
        assert!((n["phi_prime"] - 0.6632251158).abs() < 1e-10);
        assert!((n["B"] - 1.497).abs() < 1e-12);
        assert!((n["q"] - 18.0).abs() < 1e-12);

        let mut bad = raw.clone();
        bad.insert("phi_prime".into(), "38 kPa".into());
        assert!(matches!(
            normalize_inputs(&card, "general_shear_failure_strip", &bad),
            Err(EngineError::DimensionMismatch { .. })
        ));
        let mut extra = raw.clone();
        extra.insert("D_f".into(), 1.0.into());
        assert_eq!(
            normalize_inputs(&card, "general_shear_failure_strip", &extra),
            Err(EngineError::UnexpectedInput("D_f".into()))
        );
        let mut missing = raw;
        missing.remove("gamma");
        missing.remove("B");
        assert_eq!(
            normalize_inputs(&card, "general_shear_failure_strip", &missing),
            Err(EngineError::MissingInput(vec!["gamma".into(), "B".into()]))
        );
    }

    #[test]
    fn bare_number_for_angle_is_normalized_but_unitless_text_is_rejected() {
        let card = terzaghi();
        let req = strip_request().input("phi_prime", "30");
        assert!(matches!(
            evaluate_card(&card, &req),
            Err(EngineError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn determinism() {
        let card = terzaghi();
        let a = evaluate_card(&card, &strip_request()).unwrap().to_canonical_json();
        let b = evaluate_card(&card, &strip_request()).unwrap().to_canonical_json();
        assert_eq!(a, b);
    }

    #[test]
    fn unit_invariance() {
        let card = terzaghi();
        let a = evaluate_card(&card, &strip_request()).unwrap();
        let req = strip_request()
            .input("B", "2000 mm")
            .input("q", "0.018 MPa")
            .input("gamma", "18000 N/m^3")
            .input("phi_prime", 30f64.to_radians());
        let b = evaluate_card(&card, &req).unwrap();
        for (k, v) in &a.outputs {
            let w = b.outputs[k].value;
            assert!((v.value - w).abs() <= 1e-12 * v.value.abs(), "{k}");
        }
    }

    fn card_with(variables: serde_json::Value, equations: serde_json::Value) -> MethodCard {
        let v = json!({
            "id": "SYNTHETIC", "title": "t", "category": "Test", "description": "d",
            "variables": variables,
            "variants": [{"id": "main", "title": "main", "equations": equations}],
            "assumptions": [], "applicability": [],
            "sources": [{"title": "test"}]
        });
        load_card(&v.to_string()).unwrap()
    }

    #[test]
    fn fixed_point_cycle() {
        // x = cos(y), y = x: converges to the Dottie number
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "dimensionless"},
                {"key": "x", "name": "x", "role": "intermediate", "unit": "dimensionless"},
                {"key": "y", "name": "y", "role": "intermediate", "unit": "dimensionless"},
                {"key": "z", "name": "z", "role": "output", "unit": "dimensionless"}
            ]),
            json!([
                {"target": "z", "sympy": "a*y"},
                {"target": "x", "sympy": "cos(y)"},
                {"target": "y", "sympy": "x"}
            ]),
        );
        let trace = evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main").input("a", 2.0)).unwrap();
        let dottie = 0.7390851332151607;
        assert!((trace.value("x").unwrap() - dottie).abs() < 1e-8);
        assert!((trace.output("z").unwrap() - 2.0 * dottie).abs() < 2e-8);
        assert_eq!(trace.diagnostics.cycles.len(), 1);
        assert_eq!(trace.diagnostics.cycles[0].variables, ["x", "y"]);
        assert!(trace.diagnostics.cycles[0].residual < FIXED_POINT_TOLERANCE);
        let methods: Vec<_> = trace.steps.iter().map(|s| (s.target.as_str(), s.method)).collect();
        assert_eq!(
            methods,
            [("x", StepMethod::Iterative), ("y", StepMethod::Iterative), ("z", StepMethod::Direct)]
        );
    }

    #[test]
    fn footing_width_coupling_converges() {
        // width sized from an allowable pressure that itself grows with width
        let card = card_with(
            json!([
                {"key": "P", "name": "load", "role": "input", "unit": "kN/m"},
                {"key": "q0", "name": "base_pressure", "role": "input", "unit": "kPa"},
                {"key": "k", "name": "width_gain", "role": "input", "unit": "kN/m^3"},
                {"key": "q_a", "name": "allowable", "role": "intermediate", "unit": "kPa"},
                {"key": "B", "name": "width", "role": "output", "unit": "m"}
            ]),
            json!([
                {"target": "q_a", "sympy": "q0 + k*B"},
                {"target": "B", "sympy": "P/q_a"}
            ]),
        );
        let req = EvaluationRequest::new("SYNTHETIC", "main")
            .input("P", "500 kN/m")
            .input("q0", "200 kPa")
            .input("k", "20 kN/m^3");
        let trace = evaluate_card(&card, &req).unwrap();
        let b = trace.output("B").unwrap();
        // closed form: 20 B^2 + 200 B - 500 = 0
        let exact = (-200.0 + (200.0f64 * 200.0 + 4.0 * 20.0 * 500.0).sqrt()) / 40.0;
        assert!((b - exact).abs() < 1e-7);
    }

    #[test]
    fn divergent_cycle_reports_non_convergence() {
        let card = card_with(
            json!([
                {"key": "x", "name": "x", "role": "output", "unit": "dimensionless"}
            ]),
            json!([{"target": "x", "sympy": "2*x + 1"}]),
        );
        match evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main")) {
            Err(EngineError::NonConvergence { cycle, iterations, .. }) => {
                assert_eq!(cycle, ["x"]);
                assert_eq!(iterations, FIXED_POINT_MAX_ITERATIONS);
            }
            Err(EngineError::Evaluation { source: ExprError::MathDomain(_), .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn damping_extension() {
        let v = json!({
            "id": "DAMPED", "title": "t", "category": "Test", "description": "d",
            "variables": [{"key": "x", "name": "x", "role": "output", "unit": "dimensionless"}],
            "variants": [{"id": "main", "title": "main", "equations": [{"target": "x", "sympy": "3 - x"}]}],
            "assumptions": [], "applicability": [], "sources": [{"title": "test"}],
            "iteration": {"damping": 0.5}
        });
        let card = load_card(&v.to_string()).unwrap();
        // undamped this oscillates between 1 and 2 forever; damped it lands on 1.5
        let trace = evaluate_card(&card, &EvaluationRequest::new("DAMPED", "main")).unwrap();
        assert!((trace.output("x").unwrap() - 1.5).abs() < 1e-8);
    }

    #[test]
    fn conditions_select_and_conflict() {
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "dimensionless"},
                {"key": "y", "name": "y", "role": "output", "unit": "dimensionless"}
            ]),
            json!([
                {"target": "y", "sympy": "1", "condition": "a > 0"},
                {"target": "y", "sympy": "2", "condition": "a > 1"},
                {"target": "y", "sympy": "3"}
            ]),
        );
        let run = |a: f64| evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main").input("a", a));
        assert_eq!(run(0.5).unwrap().output("y"), Some(1.0));
        assert_eq!(run(-1.0).unwrap().output("y"), Some(3.0));
        assert_eq!(
            run(2.0).unwrap_err(),
            EngineError::ConditionConflict { target: "y".into() }
        );
    }

    #[test]
    fn unresolvable_without_applicable_equation() {
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "dimensionless"},
                {"key": "y", "name": "y", "role": "output", "unit": "dimensionless"}
            ]),
            json!([{"target": "y", "sympy": "1", "condition": "a > 0"}]),
        );
        assert_eq!(
            evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main").input("a", -1.0)).unwrap_err(),
            EngineError::UnresolvedVariable(vec!["y".into()])
        );
    }

    #[test]
    fn domain_error_carries_partial_trace() {
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "dimensionless"},
                {"key": "b", "name": "b", "role": "intermediate", "unit": "dimensionless"},
                {"key": "y", "name": "y", "role": "output", "unit": "dimensionless"}
            ]),
            json!([
                {"target": "b", "sympy": "a - 1"},
                {"target": "y", "sympy": "1/b"}
            ]),
        );
        let err = evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main").input("a", 1.0)).unwrap_err();
        let partial = err.partial_trace().expect("partial trace");
        assert_eq!(partial.steps.len(), 1);
        assert_eq!(partial.steps[0].target, "b");
        assert!(matches!(err, EngineError::Evaluation { ref target, source: ExprError::MathDomain(_), .. } if target == "y"));
    }

    #[test]
    fn params_and_overrides() {
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "m"},
                {"key": "k", "name": "k", "role": "param", "unit": "dimensionless", "default": 2.0},
                {"key": "y", "name": "y", "role": "output", "unit": "m"}
            ]),
            json!([{"target": "y", "sympy": "k*a"}]),
        );
        let base = EvaluationRequest::new("SYNTHETIC", "main").input("a", "3 m");
        assert_eq!(evaluate_card(&card, &base).unwrap().output("y"), Some(6.0));
        let over = base.clone().override_param("k", 4.0);
        assert_eq!(evaluate_card(&card, &over).unwrap().output("y"), Some(12.0));
        let bad = base.override_param("a", 4.0);
        assert_eq!(
            evaluate_card(&card, &bad).unwrap_err(),
            EngineError::UnexpectedInput("a".into())
        );
    }

    #[test]
    fn pass_count_bound_and_reordering() {
        // equations listed in reverse dependency order still resolve
        let card = card_with(
            json!([
                {"key": "a", "name": "a", "role": "input", "unit": "dimensionless"},
                {"key": "b", "name": "b", "role": "intermediate", "unit": "dimensionless"},
                {"key": "c", "name": "c", "role": "intermediate", "unit": "dimensionless"},
                {"key": "d", "name": "d", "role": "output", "unit": "dimensionless"}
            ]),
            json!([
                {"target": "d", "sympy": "c + 1"},
                {"target": "c", "sympy": "b + 1"},
                {"target": "b", "sympy": "a + 1"}
            ]),
        );
        let trace = evaluate_card(&card, &EvaluationRequest::new("SYNTHETIC", "main").input("a", 0.0)).unwrap();
        assert_eq!(trace.output("d"), Some(3.0));
        assert!(trace.diagnostics.passes <= 3);
        let order: Vec<_> = trace.steps.iter().map(|s| s.target.as_str()).collect();
        assert_eq!(order, ["b", "c", "d"]);
    }

    #[test]
    fn trace_json_shape() {
        let trace = evaluate_card(&terzaghi(), &strip_request()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&trace.to_canonical_json()).unwrap();
        let keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["request", "steps", "outputs", "sources", "diagnostics"]);
        assert_eq!(json["request"]["inputs"]["phi_prime"], json!("30 deg"));
        assert_eq!(json["steps"][0]["method"], json!("direct"));
        let back: EvaluationTrace = serde_json::from_value(json).unwrap();
        assert_eq!(back, trace);
    }
}
