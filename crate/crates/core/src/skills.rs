//! Agent Skill packages: a `SKILL.md` with YAML frontmatter followed by
//! Markdown, plus optional `references/*.md` files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{Diagnostic, Severity};

pub const SKILLS_DIR_ENV: &str = "GEOCARD_SKILLS_DIR";

struct BundledSkill {
    dir: &'static str,
    skill_md: &'static str,
    references: &'static [(&'static str, &'static str)],
}

const BUNDLED: &[BundledSkill] = &[BundledSkill {
    dir: "shallow-foundation-bearing-capacity",
    skill_md: include_str!("../skills/shallow-foundation-bearing-capacity/SKILL.md"),
    references: &[
        (
            "eurocode7-design-approaches.md",
            include_str!("../skills/shallow-foundation-bearing-capacity/references/eurocode7-design-approaches.md"),
        ),
        (
            "method-comparison.md",
            include_str!("../skills/shallow-foundation-bearing-capacity/references/method-comparison.md"),
        ),
        (
            "sanity-checks.md",
            include_str!("../skills/shallow-foundation-bearing-capacity/references/sanity-checks.md"),
        ),
    ],
}];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub filename: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub description: String,
    pub version: String,
    pub category: String,
    pub body: String,
    pub references: Vec<Reference>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkillSummary {
    pub name: String,
    pub description: String,
    pub category: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkillMatch {
    pub name: String,
    pub score: f64,
    pub matched_terms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SkillError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("query must contain at least one word")]
    EmptyQuery,
    #[error("malformed SKILL.md: {0}")]
    Malformed(String),
}

impl SkillError {
    pub fn kind(&self) -> &'static str {
        match self {
            SkillError::UnknownSkill(_) => "UnknownSkill",
            SkillError::EmptyQuery => "EmptyQuery",
            SkillError::Malformed(_) => "MalformedSkill",
        }
    }
}

/// YAML scalars such as `1.0` arrive as numbers; keep their text.
fn scalar_string<'de, D: serde::Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Scalar {
        Text(String),
        Int(i64),
        Float(f64),
    }
    Ok(match Scalar::deserialize(d)? {
        Scalar::Text(s) => s,
        Scalar::Int(i) => i.to_string(),
        Scalar::Float(f) => f.to_string(),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct Frontmatter {
    #[serde(deserialize_with = "scalar_string")]
    name: String,
    #[serde(deserialize_with = "scalar_string")]
    description: String,
    #[serde(deserialize_with = "scalar_string")]
    version: String,
    #[serde(deserialize_with = "scalar_string")]
    category: String,
}

/// Splits `SKILL.md` text into a skill without references.
pub fn parse_skill_md(text: &str) -> Result<Skill, SkillError> {
    let malformed = |m: &str| SkillError::Malformed(m.to_owned());
    let rest = text
        .strip_prefix("---\n")
        .or_else(|| text.strip_prefix("---\r\n"))
        .ok_or_else(|| malformed("missing opening `---` line"))?;
    let mut offset = 0;
    let mut yaml_end = None;
    for line in rest.split_inclusive('\n') {
        if line.trim_end_matches(['\r', '\n']) == "---" {
            yaml_end = Some((offset, offset + line.len()));
            break;
        }
        offset += line.len();
    }
    let (yaml_end, body_start) = yaml_end.ok_or_else(|| malformed("missing closing `---` line"))?;
    let fm: Frontmatter = serde_yaml::from_str(&rest[..yaml_end])
        .map_err(|e| SkillError::Malformed(format!("frontmatter: {e}")))?;
    for (field, value) in [
        ("name", &fm.name),
        ("description", &fm.description),
        ("version", &fm.version),
        ("category", &fm.category),
    ] {
        if value.trim().is_empty() {
            return Err(SkillError::Malformed(format!("frontmatter field `{field}` is empty")));
        }
    }
    Ok(Skill {
        name: fm.name,
        description: fm.description,
        version: fm.version,
        category: fm.category,
        body: rest[body_start..].to_owned(),
        references: Vec::new(),
    })
}

/// Inverse of [`parse_skill_md`].
pub fn render_skill_md(skill: &Skill) -> String {
    let fm = Frontmatter {
        name: skill.name.clone(),
        description: skill.description.clone(),
        version: skill.version.clone(),
        category: skill.category.clone(),
    };
    let yaml = serde_yaml::to_string(&fm).expect("frontmatter serializes");
    format!("---\n{yaml}---\n{}", skill.body)
}

/// Lowercased alphanumeric runs.
fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct SkillIndex {
    skills: BTreeMap<String, Skill>,
    diagnostics: Vec<Diagnostic>,
}

impl SkillIndex {
    pub fn bundled() -> SkillIndex {
        SkillIndex::load(&[], true)
    }

    /// Bundled skills plus every directory listed in `GEOCARD_SKILLS_DIR`.
    pub fn from_env() -> SkillIndex {
        let dirs: Vec<PathBuf> = std::env::var_os(SKILLS_DIR_ENV)
            .map(|v| std::env::split_paths(&v).collect())
            .unwrap_or_default();
        SkillIndex::load(&dirs, true)
    }

    /// Scans `user_dirs` first (each holding `<name>/SKILL.md` packages), then
    /// optionally the bundled skills; the first skill seen for a name wins.
    pub fn load(user_dirs: &[PathBuf], include_bundled: bool) -> SkillIndex {
        let mut index = SkillIndex::default();
        for dir in user_dirs {
            index.scan(dir);
        }
        if include_bundled {
            for b in BUNDLED {
                let refs = b
                    .references
                    .iter()
                    .map(|(f, c)| Reference {
                        filename: (*f).to_owned(),
                        content: (*c).to_owned(),
                    })
                    .collect();
                index.add(format!("bundled:{}", b.dir), b.dir, b.skill_md, refs);
            }
        }
        index
    }

    fn error(&mut self, source: String, message: String) {
        self.diagnostics.push(Diagnostic {
            severity: Severity::Error,
            source,
            message,
        });
    }

    fn scan(&mut self, root: &Path) {
        let mut dirs: Vec<PathBuf> = match fs::read_dir(root) {
            Ok(rd) => rd.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.is_dir()).collect(),
            Err(e) => return self.error(root.display().to_string(), format!("cannot read skills directory: {e}")),
        };
        dirs.sort();
        for dir in dirs {
            let source = dir.display().to_string();
            let Some(dir_name) = dir.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
                continue;
            };
            let skill_md = match fs::read_to_string(dir.join("SKILL.md")) {
                Ok(t) => t,
                Err(e) => {
                    self.error(source, format!("cannot read SKILL.md: {e}"));
                    continue;
                }
            };
            let mut refs = Vec::new();
            if let Ok(rd) = fs::read_dir(dir.join("references")) {
                let mut files: Vec<PathBuf> = rd
                    .filter_map(Result::ok)
                    .map(|e| e.path())
                    .filter(|p| p.extension().is_some_and(|x| x == "md"))
                    .collect();
                files.sort();
                for f in files {
                    match fs::read_to_string(&f) {
                        Ok(content) => refs.push(Reference {
                            filename: f.file_name().unwrap().to_string_lossy().into_owned(),
                            content,
                        }),
                        Err(e) => self.error(f.display().to_string(), format!("cannot read reference: {e}")),
                    }
                }
            }
            self.add(source, &dir_name, &skill_md, refs);
        }
    }

    fn add(&mut self, source: String, dir_name: &str, skill_md: &str, references: Vec<Reference>) {
        let mut skill = match parse_skill_md(skill_md) {
            Ok(s) => s,
            Err(e) => return self.error(source, e.to_string()),
        };
        if skill.name != dir_name {
            return self.error(
                source,
                format!("skill name `{}` does not match directory `{dir_name}`", skill.name),
            );
        }
        if self.skills.contains_key(&skill.name) {
            let message = format!("skill `{}` is shadowed by an earlier skills directory", skill.name);
            self.diagnostics.push(Diagnostic {
                severity: Severity::Warning,
                source,
                message,
            });
            return;
        }
        skill.references = references;
        self.skills.insert(skill.name.clone(), skill);
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn has_errors(&self) -> bool {
        self.diagnostics.iter().any(|d| d.severity == Severity::Error)
    }

    pub fn list_skills(&self) -> Vec<SkillSummary> {
        self.skills
            .values()
            .map(|s| SkillSummary {
                name: s.name.clone(),
                description: s.description.clone(),
                category: s.category.clone(),
                version: s.version.clone(),
            })
            .collect()
    }

    /// Lexical relevance: each distinct query word scores 3 if it occurs in
    /// the name, 2 in the description and 1 in the category; the sum is
    /// divided by the maximum possible, 6 per query word.
    pub fn recommend_skills(&self, query: &str, limit: usize) -> Result<Vec<SkillMatch>, SkillError> {
        let query_terms: Vec<String> = {
            let mut seen = BTreeSet::new();
            query
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_lowercase)
                .filter(|t| seen.insert(t.clone()))
                .collect()
        };
        if query_terms.is_empty() {
            return Err(SkillError::EmptyQuery);
        }
        let mut matches: Vec<SkillMatch> = self
            .skills
            .values()
            .filter_map(|s| {
                let (name, desc, cat) = (tokens(&s.name), tokens(&s.description), tokens(&s.category));
                let mut points = 0u32;
                let mut matched_terms = Vec::new();
                for t in &query_terms {
                    let p = 3 * u32::from(name.contains(t))
                        + 2 * u32::from(desc.contains(t))
                        + u32::from(cat.contains(t));
                    if p > 0 {
                        matched_terms.push(t.clone());
                    }
                    points += p;
                }
                (points > 0).then(|| SkillMatch {
                    name: s.name.clone(),
                    score: f64::from(points) / (6.0 * query_terms.len() as f64),
                    matched_terms,
                })
            })
            .collect();
        matches.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        matches.truncate(limit);
        Ok(matches)
    }

    pub fn get_skill(&self, name: &str, include_references: bool) -> Result<Skill, SkillError> {
        let mut skill = self
            .skills
            .get(name)
            .cloned()
            .ok_or_else(|| SkillError::UnknownSkill(name.to_owned()))?;
        if !include_references {
            skill.references.clear();
        }
        Ok(skill)
    }
}
