//! Validation of tool arguments against the subset of JSON Schema used by
//! the tool descriptors: `type` (single or list), `properties`, `required`,
//! `additionalProperties` (boolean or schema), `enum`, `minimum` and
//! `exclusiveMinimum`.

use serde_json::Value;

/// Returns every violation found, each prefixed with its JSON path.
pub fn validate(schema: &Value, value: &Value) -> Vec<String> {
    let mut errors = Vec::new();
    check(schema, value, "$", &mut errors);
    errors
}

fn type_name(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) if n.is_i64() || n.is_u64() => "integer",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_matches(expected: &str, value: &Value) -> bool {
    match expected {
        "number" => value.is_number(),
        "integer" => match value {
            Value::Number(n) => n.is_i64() || n.is_u64() || n.as_f64().is_some_and(|f| f.fract() == 0.0),
            _ => false,
        },
        other => type_name(value) == other,
    }
}

fn check(schema: &Value, value: &Value, path: &str, errors: &mut Vec<String>) {
    let Some(schema) = schema.as_object() else {
        return;
    };
    if let Some(ty) = schema.get("type") {
        let allowed: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(items) => items.iter().filter_map(Value::as_str).collect(),
            _ => Vec::new(),
        };
        if !allowed.is_empty() && !allowed.iter().any(|t| type_matches(t, value)) {
            errors.push(format!("{path}: expected {}, got {}", allowed.join(" or "), type_name(value)));
            return;
        }
    }
    if let Some(Value::Array(options)) = schema.get("enum") {
        if !options.contains(value) {
            let listed: Vec<String> = options.iter().map(Value::to_string).collect();
            errors.push(format!("{path}: must be one of {}", listed.join(", ")));
        }
    }
    if let Some(x) = value.as_f64() {
        if let Some(min) = schema.get("minimum").and_then(Value::as_f64) {
            if x < min {
                errors.push(format!("{path}: must be >= {min}"));
            }
        }
        if let Some(min) = schema.get("exclusiveMinimum").and_then(Value::as_f64) {
            if x <= min {
                errors.push(format!("{path}: must be > {min}"));
            }
        }
    }
    if let Value::Object(map) = value {
        let properties = schema.get("properties").and_then(Value::as_object);
        if let Some(Value::Array(required)) = schema.get("required") {
            for key in required.iter().filter_map(Value::as_str) {
                if !map.contains_key(key) {
                    errors.push(format!("{path}: missing required property `{key}`"));
                }
            }
        }
        for (key, item) in map {
            let child = format!("{path}.{key}");
            match properties.and_then(|p| p.get(key)) {
                Some(sub) => check(sub, item, &child, errors),
                None => match schema.get("additionalProperties") {
                    Some(Value::Bool(false)) => errors.push(format!("{path}: unexpected property `{key}`")),
                    Some(sub @ Value::Object(_)) => check(sub, item, &child, errors),
                    _ => {}
                },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn schema() -> Value {
        json!({
            "type": "object",
            "properties": {
                "name": {"type": "string"},
                "limit": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "mode": {"type": "string", "enum": ["a", "b"]},
                "inputs": {"type": "object", "additionalProperties": {"type": "number"}},
                "either": {"type": ["object", "string"]}
            },
            "required": ["name"],
            "additionalProperties": false
        })
    }

    #[test]
    fn accepts_conforming_values() {
        let v = json!({"name": "x", "limit": 3, "tol": 0.5, "mode": "b",
                       "inputs": {"B": 2.0, "q": 18}, "either": "jrc_a3"});
        assert!(validate(&schema(), &v).is_empty());
        assert!(validate(&schema(), &json!({"name": "x", "either": {}})).is_empty());
    }

    #[test]
    fn reports_each_violation() {
        let v = json!({"limit": 0, "tol": 0, "mode": "c", "inputs": {"B": "2 m"}, "extra": 1, "either": 3});
        let errors = validate(&schema(), &v);
        let joined = errors.join("\n");
        for needle in [
            "missing required property `name`",
            "$.limit: must be >= 1",
            "$.tol: must be > 0",
            "$.mode: must be one of",
            "$.inputs.B: expected number, got string",
            "unexpected property `extra`",
            "$.either: expected object or string",
        ] {
            assert!(joined.contains(needle), "{needle} not in {joined}");
        }
        assert_eq!(errors.len(), 7);
    }

    #[test]
    fn integer_accepts_whole_floats_only() {
        let s = json!({"type": "integer"});
        assert!(validate(&s, &json!(2.0)).is_empty());
        assert!(!validate(&s, &json!(2.5)).is_empty());
        assert!(!validate(&s, &json!("2")).is_empty());
    }
}
