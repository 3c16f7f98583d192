//! The interview question catalog.
//!
//! A catalog is a plug-in JSON document: an ordered list of categories, each
//! holding an ordered list of questions. The engine never hard-codes question
//! text; everything it asks comes from here.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The catalog shipped with the service (five assessment categories, 73 questions).
pub const DEFAULT_CATALOG_JSON: &str = include_str!("../data/catalog.default.json");

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(String);

impl CategoryId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CategoryId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuestionId(String);

impl QuestionId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Synthesized id for the `index`-th (1-based) question of `category`.
    pub fn synthesized(category: &CategoryId, index: usize) -> Self {
        Self(format!("{category}.{index}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for QuestionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: QuestionId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub display_name: String,
    pub aliases: Vec<String>,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionCatalog {
    pub version: String,
    pub categories: Vec<Category>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("malformed catalog document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: {message}")]
    Invalid { location: String, message: String },
    #[error("duplicate category id `{id}` at {location}")]
    DuplicateCategory { id: String, location: String },
    #[error("duplicate question id `{id}` at {location}")]
    DuplicateQuestion { id: String, location: String },
    #[error("category name `{name}` at {location} also names category `{other}`")]
    ConflictingName {
        name: String,
        location: String,
        other: String,
    },
    #[error("cannot read catalog file {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("unknown category `{name}`; valid categories are: {}", valid.join(", "))]
    NoMatch { name: String, valid: Vec<String> },
    #[error("category name `{name}` is ambiguous between: {}", candidates.join(", "))]
    Ambiguous { name: String, candidates: Vec<String> },
}

// Wire shape of the catalog document.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    version: String,
    categories: Vec<CategoryDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryDoc {
    id: String,
    display_name: String,
    #[serde(default)]
    aliases: Vec<String>,
    questions: Vec<QuestionDoc>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QuestionDoc {
    Text(String),
    Explicit { id: String, text: String },
}

fn invalid(location: String, message: &str) -> CatalogError {
    CatalogError::Invalid {
        location,
        message: message.to_owned(),
    }
}

/// Key under which names are compared: case-folded, with `_`/`-` read as
/// spaces (models often send `supply_management`) and whitespace collapsed.
fn match_key(name: &str) -> String {
    normalize_name(&name.replace(['_', '-'], " "))
}

fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Parses and validates a catalog document.
pub fn load_catalog(source: &str) -> Result<QuestionCatalog, CatalogError> {
    let doc: CatalogDoc = serde_json::from_str(source).map_err(|e| CatalogError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    if doc.version.trim().is_empty() {
        return Err(invalid("version".into(), "version must be nonempty"));
    }
    if doc.categories.is_empty() {
        return Err(invalid("categories".into(), "catalog has no categories"));
    }

    let mut category_ids = HashSet::new();
    let mut question_ids = HashSet::new();
    // normalized name -> owning category id
    let mut names: BTreeMap<String, String> = BTreeMap::new();
    let mut categories = Vec::with_capacity(doc.categories.len());

    for (ci, cat) in doc.categories.into_iter().enumerate() {
        let loc = format!("categories[{ci}]");
        let id = cat.id.trim().to_owned();
        if id.is_empty() {
            return Err(invalid(format!("{loc}.id"), "category id must be nonempty"));
        }
        if !category_ids.insert(id.clone()) {
            return Err(CatalogError::DuplicateCategory {
                id,
                location: format!("{loc}.id"),
            });
        }
        let display_name = cat.display_name.trim().to_owned();
        if display_name.is_empty() {
            return Err(invalid(format!("{loc}.display_name"), "display_name must be nonempty"));
        }
        if cat.questions.is_empty() {
            return Err(invalid(
                format!("{loc}.questions"),
                "category must hold at least one question",
            ));
        }

        let mut aliases = Vec::with_capacity(cat.aliases.len());
        for (ai, alias) in cat.aliases.iter().enumerate() {
            let alias = normalize_name(alias);
            if alias.is_empty() {
                return Err(invalid(format!("{loc}.aliases[{ai}]"), "alias must be nonempty"));
            }
            if !aliases.contains(&alias) {
                aliases.push(alias);
            }
        }

        let own_names = [
            (format!("{loc}.id"), match_key(&id)),
            (format!("{loc}.display_name"), match_key(&display_name)),
        ]
        .into_iter()
        .chain(
            aliases
                .iter()
                .enumerate()
                .map(|(ai, a)| (format!("{loc}.aliases[{ai}]"), match_key(a))),
        );
        for (name_loc, name) in own_names {
            if name.is_empty() {
                return Err(invalid(
                    name_loc,
                    "name must contain something besides spaces, `_` and `-`",
                ));
            }
            match names.get(&name) {
                Some(owner) if *owner != id => {
                    return Err(CatalogError::ConflictingName {
                        name,
                        location: name_loc,
                        other: owner.clone(),
                    })
                }
                _ => {
                    names.insert(name, id.clone());
                }
            }
        }

        let category_id = CategoryId::new(id);
        let mut questions = Vec::with_capacity(cat.questions.len());
        for (qi, q) in cat.questions.into_iter().enumerate() {
            let qloc = format!("{loc}.questions[{qi}]");
            let (qid, text) = match q {
                QuestionDoc::Text(text) => (QuestionId::synthesized(&category_id, qi + 1), text),
                QuestionDoc::Explicit { id, text } => {
                    let id = id.trim().to_owned();
                    if id.is_empty() {
                        return Err(invalid(format!("{qloc}.id"), "question id must be nonempty"));
                    }
                    (QuestionId::new(id), text)
                }
            };
            let text = text.trim().to_owned();
            if text.is_empty() {
                return Err(invalid(qloc, "question text must be nonempty"));
            }
            if !question_ids.insert(qid.clone()) {
                return Err(CatalogError::DuplicateQuestion {
                    id: qid.0,
                    location: qloc,
                });
            }
            questions.push(Question { id: qid, text });
        }

        categories.push(Category {
            id: category_id,
            display_name,
            aliases,
            questions,
        });
    }

    Ok(QuestionCatalog {
        version: doc.version.trim().to_owned(),
        categories,
    })
}

/// Reads and validates a catalog file.
pub fn load_catalog_file(path: impl AsRef<Path>) -> Result<QuestionCatalog, CatalogError> {
    let path = path.as_ref();
    let source = std::fs::read_to_string(path).map_err(|e| CatalogError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_catalog(&source)
}

/// The shipped catalog.
pub fn default_catalog() -> QuestionCatalog {
    load_catalog(DEFAULT_CATALOG_JSON).expect("shipped catalog is valid")
}

impl QuestionCatalog {
    pub fn category(&self, id: &CategoryId) -> Option<&Category> {
        self.categories.iter().find(|c| &c.id == id)
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.category(id).is_some()
    }

    pub fn total_questions(&self) -> usize {
        self.categories.iter().map(|c| c.questions.len()).sum()
    }

    /// Number of questions in `id`, zero if the category is unknown.
    pub fn question_count(&self, id: &CategoryId) -> usize {
        self.category(id).map_or(0, |c| c.questions.len())
    }

    pub fn display_names(&self) -> Vec<String> {
        self.categories.iter().map(|c| c.display_name.clone()).collect()
    }

    /// Maps a free-text category name onto a category id.
    ///
    /// Matching is case-insensitive against the id, display name and aliases,
    /// after trimming, collapsing whitespace and reading `_`/`-` as spaces.
    /// No fuzzy matching.
    pub fn resolve_category(&self, name: &str) -> Result<CategoryId, ResolveError> {
        let wanted = match_key(name);
        let candidates: Vec<&Category> = self
            .categories
            .iter()
            .filter(|c| {
                !wanted.is_empty()
                    && (match_key(c.id.as_str()) == wanted
                        || match_key(&c.display_name) == wanted
                        || c.aliases.iter().any(|a| match_key(a) == wanted))
            })
            .collect();
        match candidates.as_slice() {
            [one] => Ok(one.id.clone()),
            [] => Err(ResolveError::NoMatch {
                name: name.to_owned(),
                valid: self.display_names(),
            }),
            many => Err(ResolveError::Ambiguous {
                name: name.to_owned(),
                candidates: many.iter().map(|c| c.id.to_string()).collect(),
            }),
        }
    }
}
