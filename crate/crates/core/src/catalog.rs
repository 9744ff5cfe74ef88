//! The method catalog: bundled cards plus optional user directories.
//!
//! User directories (from `GEOCARD_CATALOG_DIR` or passed explicitly) are
//! searched before the bundled cards, so a user card with a bundled id
//! replaces it; each replacement is reported as a warning diagnostic.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::card::{load_card, validate_dimensions, MethodCard};
use crate::engine::{evaluate_card, EngineError, EvaluationRequest, EvaluationTrace};

pub const CATALOG_DIR_ENV: &str = "GEOCARD_CATALOG_DIR";

const BUNDLED: &[(&str, &str)] = &[
    (
        "bearing_capacity_eurocode7.json",
        include_str!("../catalog/bearing_capacity_eurocode7.json"),
    ),
    (
        "bearing_capacity_meyerhof.json",
        include_str!("../catalog/bearing_capacity_meyerhof.json"),
    ),
    (
        "bearing_capacity_terzaghi.json",
        include_str!("../catalog/bearing_capacity_terzaghi.json"),
    ),
    (
        "bearing_capacity_vesic.json",
        include_str!("../catalog/bearing_capacity_vesic.json"),
    ),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    /// File path, or `bundled:<file>` for embedded cards.
    pub source: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub id: String,
    pub title: String,
    pub category: String,
    pub variants: Vec<String>,
}

#[derive(Debug, Clone)]
struct Entry {
    card: MethodCard,
    source: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl CatalogError {
    pub fn kind(&self) -> &'static str {
        match self {
            CatalogError::UnknownMethod(_) => "UnknownMethod",
            CatalogError::Engine(e) => e.kind(),
        }
    }

    pub fn partial_trace(&self) -> Option<&EvaluationTrace> {
        match self {
            CatalogError::Engine(e) => e.partial_trace(),
            CatalogError::UnknownMethod(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: BTreeMap<String, Entry>,
    diagnostics: Vec<Diagnostic>,
}

impl Catalog {
    /// Only the cards shipped with the library.
    pub fn bundled() -> Catalog {
        Catalog::load(&[], true)
    }

    /// Bundled cards plus every directory listed in `GEOCARD_CATALOG_DIR`.
    pub fn from_env() -> Catalog {
        let dirs: Vec<PathBuf> = std::env::var_os(CATALOG_DIR_ENV)
            .map(|v| std::env::split_paths(&v).collect())
            .unwrap_or_default();
        Catalog::load(&dirs, true)
    }

    /// Loads `user_dirs` in priority order, then (optionally) the bundled
    /// cards. The first card seen for an id wins.
    pub fn load(user_dirs: &[PathBuf], include_bundled: bool) -> Catalog {
        let mut catalog = Catalog::default();
        for dir in user_dirs {
            catalog.load_dir(dir);
        }
        if include_bundled {
            for (name, text) in BUNDLED {
                catalog.add(format!("bundled:{name}"), text);
            }
        }
        catalog
    }

    fn load_dir(&mut self, dir: &Path) {
        let source = dir.display().to_string();
        let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
            Ok(rd) => rd
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect(),
            Err(e) => {
                self.error(source, format!("cannot read catalog directory: {e}"));
                return;
            }
        };
        if files.is_empty() {
            self.error(source, "catalog directory contains no card files".into());
            return;
        }
        files.sort();
        for path in files {
            let source = path.display().to_string();
            match fs::read_to_string(&path) {
                Ok(text) => self.add(source, &text),
                Err(e) => self.error(source, format!("cannot read card: {e}")),
            }
        }
    }

    fn error(&mut self, source: String, message: String) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            source,
            message,
        });
    }

    fn add(&mut self, source: String, text: &str) {
        let card = match load_card(text) {
            Ok(card) => card,
            Err(e) => return self.error(source, e.to_string()),
        };
        let findings = validate_dimensions(&card);
        if !findings.is_empty() {
            for f in findings {
                self.error(
                    source.clone(),
                    format!("{}/{}: {} at `{}`", f.variant, f.target, f.message, f.location),
                );
            }
            return;
        }
        if let Some(existing) = self.entries.get(&card.id) {
            let message = format!("card `{}` is shadowed by {}", card.id, existing.source);
            self.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                source,
                message,
            });
            return;
        }
        self.entries.insert(card.id.clone(), Entry { card, source });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    /// Summaries sorted by id, optionally restricted to one exact category.
    pub fn list_methods(&self, category: Option<&str>) -> Vec<MethodSummary> {
        self.entries
            .values()
            .filter(|e| category.is_none_or(|c| e.card.category == c))
            .map(|e| MethodSummary {
                id: e.card.id.clone(),
                title: e.card.title.clone(),
                category: e.card.category.clone(),
                variants: e.card.variants.iter().map(|v| v.id.clone()).collect(),
            })
            .collect()
    }

    pub fn get_method(&self, id: &str) -> Result<&MethodCard, CatalogError> {
        self.entries
            .get(id)
            .map(|e| &e.card)
            .ok_or_else(|| CatalogError::UnknownMethod(id.to_owned()))
    }

    /// Where a card was loaded from.
    pub fn source_of(&self, id: &str) -> Option<&str> {
        self.entries.get(id).map(|e| e.source.as_str())
    }

    pub fn evaluate(&self, req: &EvaluationRequest) -> Result<EvaluationTrace, CatalogError> {
        let card = self.get_method(&req.card_id)?;
        Ok(evaluate_card(card, req)?)
    }
}
