//! Exception-type catalogs: plain files with one fully-qualified name per
//! line and `#` comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::BenchError;

pub const EXCEPTION_SUFFIXES: &[&str] = &["Exception", "Error", "Throwable"];

/// JDK exception types shipped with the crate.
pub const JDK_SEED: &str = include_str!("../../data/jdk-exceptions.txt");

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExceptionCatalog {
    pub names: BTreeSet<String>,
    pub sources: Vec<String>,
    /// Simple name to the fully-qualified names sharing it.
    #[serde(skip)]
    simple: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CatalogBuild {
    pub catalog: ExceptionCatalog,
    /// Rejected names, one message each.
    pub warnings: Vec<String>,
}

impl ExceptionCatalog {
    /// The bundled JDK list.
    pub fn seed() -> Self {
        let mut build = CatalogBuild::default();
        build.add_source("jdk-seed", JDK_SEED, &[]);
        build.catalog
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = ExceptionCatalog::default();
        for n in names {
            catalog.insert(n.into());
        }
        catalog
    }

    fn insert(&mut self, name: String) {
        let simple = simple_name(&name).to_string();
        self.simple.entry(simple).or_default().insert(name.clone());
        self.names.insert(name);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Resolves a qualified or simple name to a catalog entry.
    pub fn lookup(&self, token: &str) -> Option<&str> {
        if let Some(n) = self.names.get(token) {
            return Some(n);
        }
        if token.contains('.') {
            return None;
        }
        self.simple
            .get(token)
            .and_then(|set| set.iter().next())
            .map(String::as_str)
    }
}

fn simple_name(name: &str) -> &str {
    name.rsplit(['.', '$']).next().unwrap_or(name)
}

fn has_suffix(name: &str) -> bool {
    let simple = simple_name(name);
    EXCEPTION_SUFFIXES.iter().any(|s| simple.ends_with(s))
}

impl CatalogBuild {
    fn add_source(&mut self, label: &str, text: &str, whitelist: &[String]) {
        self.catalog.sources.push(label.to_string());
        for (idx, line) in text.lines().enumerate() {
            let name = line.split('#').next().unwrap_or("").trim();
            if name.is_empty() {
                continue;
            }
            if has_suffix(name) || whitelist.iter().any(|w| w == name) {
                self.catalog.insert(name.to_string());
            } else {
                self.warnings.push(format!(
                    "{label}:{}: {name} has no {} suffix",
                    idx + 1,
                    EXCEPTION_SUFFIXES.join("/")
                ));
            }
        }
    }
}

/// Union of catalog files. Names without an exception-like suffix are
/// rejected with a warning unless whitelisted.
pub fn build_catalog<P: AsRef<Path>>(sources: &[P], whitelist: &[String]) -> Result<CatalogBuild, BenchError> {
    let mut build = CatalogBuild::default();
    for path in sources {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| BenchError::SourceUnreadable {
            path: path.to_path_buf(),
            source: e,
        })?;
        build.add_source(&path.display().to_string(), &text, whitelist);
    }
    Ok(build)
}
