//! Letter template files.
//!
//! One UTF-8 text file per template key (`<key>.txt`) in a templates
//! directory, plus `manifest.txt` listing the keys one per line (`#` starts a
//! comment). A template starts with a `Subject: ...` line and a blank line;
//! the rest is the body. Placeholders are written `{name}`; the only names
//! allowed are those in [`PLACEHOLDERS`].

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grading::DrGrade;

use super::{template_key, LETTER_LOCALES};

pub const PLACEHOLDERS: [&str; 4] = ["participant_name", "address_block", "grade_statement", "recommendation"];

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LetterTemplate {
    pub key: String,
    pub subject: String,
    pub body: String,
}

/// The full set of result letters, validated to cover every grade in every
/// letter locale.
#[derive(Debug, Clone)]
pub struct LetterTemplates {
    templates: BTreeMap<String, LetterTemplate>,
}

/// Keys that must be present: every grade in every letter locale.
pub fn required_keys() -> Vec<String> {
    DrGrade::ALL
        .iter()
        .flat_map(|g| LETTER_LOCALES.iter().map(move |l| template_key(*g, l)))
        .collect()
}

macro_rules! builtin_templates {
    ($($key:literal),+ $(,)?) => {
        &[$(($key, include_str!(concat!("../../assets/templates/", $key, ".txt")))),+]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates!(
    "letter-no-apparent-dr-en",
    "letter-no-apparent-dr-es",
    "letter-mild-npdr-en",
    "letter-mild-npdr-es",
    "letter-moderate-npdr-en",
    "letter-moderate-npdr-es",
    "letter-severe-npdr-en",
    "letter-severe-npdr-es",
    "letter-proliferative-dr-en",
    "letter-proliferative-dr-es",
    "letter-macular-edema-suspected-en",
    "letter-macular-edema-suspected-es",
    "letter-other-findings-en",
    "letter-other-findings-es",
    "letter-ungradable-en",
    "letter-ungradable-es",
);

impl LetterTemplates {
    /// Templates compiled into the binary.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(key, text)| parse_template(key, text).map(|t| (key.to_string(), t)))
            .collect::<Result<BTreeMap<_, _>>>()
            .expect("shipped templates parse");
        Self::from_map(templates).expect("shipped templates are complete")
    }

    /// Loads and validates a templates directory. Fails if the manifest does
    /// not list exactly the required keys or any listed file is missing.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = std::fs::read_to_string(&manifest_path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", manifest_path.display())))?;
        let listed: Vec<&str> = manifest
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect();
        let required = required_keys();
        for key in &required {
            if !listed.contains(&key.as_str()) {
                return Err(Error::MissingTemplate(format!("{key} (not listed in manifest)")));
            }
        }
        if let Some(extra) = listed.iter().find(|k| !required.iter().any(|r| r == *k)) {
            return Err(Error::Config(format!("manifest lists unexpected template `{extra}`")));
        }

        let mut templates = BTreeMap::new();
        for key in &required {
            let path = dir.join(format!("{key}.txt"));
            let text = match std::fs::read_to_string(&path) {
                Ok(text) => text,
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                    return Err(Error::MissingTemplate(key.clone()));
                }
                Err(e) => return Err(Error::Io(e)),
            };
            templates.insert(key.clone(), parse_template(key, &text)?);
        }
        Self::from_map(templates)
    }

    fn from_map(templates: BTreeMap<String, LetterTemplate>) -> Result<Self> {
        for key in required_keys() {
            if !templates.contains_key(&key) {
                return Err(Error::MissingTemplate(key));
            }
        }
        Ok(Self { templates })
    }

    pub fn get(&self, key: &str) -> Result<&LetterTemplate> {
        self.templates
            .get(key)
            .ok_or_else(|| Error::MissingTemplate(key.to_string()))
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}

pub fn parse_template(key: &str, text: &str) -> Result<LetterTemplate> {
    let bad = |msg: &str| Error::Config(format!("template {key}: {msg}"));
    let text = text.strip_prefix('\u{feff}').unwrap_or(text).replace("\r\n", "\n");
    let (first, rest) = text.split_once('\n').ok_or_else(|| bad("missing body"))?;
    let subject = first
        .strip_prefix("Subject:")
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| bad("first line must be `Subject: ...`"))?;
    let body = rest
        .strip_prefix('\n')
        .ok_or_else(|| bad("blank line must follow the subject"))?;
    check_placeholders(body).map_err(|m| bad(&m))?;
    check_placeholders(subject).map_err(|m| bad(&m))?;
    Ok(LetterTemplate {
        key: key.to_string(),
        subject: subject.to_string(),
        body: body.trim_end().to_string() + "\n",
    })
}

fn check_placeholders(text: &str) -> std::result::Result<(), String> {
    let mut rest = text;
    while let Some(open) = rest.find(['{', '}']) {
        if rest.as_bytes()[open] == b'}' {
            return Err("unbalanced `}`".into());
        }
        let after = &rest[open + 1..];
        let close = after.find('}').ok_or("unterminated placeholder")?;
        let name = &after[..close];
        if !PLACEHOLDERS.contains(&name) {
            return Err(format!("unknown placeholder `{{{name}}}`"));
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

/// Substitutes placeholders. Braces in substituted values are neutralised so
/// the result never contains placeholder syntax.
pub fn fill(text: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = text.to_string();
    for name in PLACEHOLDERS {
        if let Some(value) = values.get(name) {
            let safe = value.replace('{', "(").replace('}', ")");
            out = out.replace(&format!("{{{name}}}"), &safe);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn copy_builtin(dir: &Path) {
        let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/templates");
        for entry in std::fs::read_dir(src).unwrap() {
            let entry = entry.unwrap();
            std::fs::copy(entry.path(), dir.join(entry.file_name())).unwrap();
        }
    }

    #[test]
    fn builtin_has_sixteen() {
        let t = LetterTemplates::builtin();
        assert_eq!(t.len(), 16);
        assert_eq!(required_keys().len(), 16);
    }

    #[test]
    fn shipped_directory_loads() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/templates");
        let t = LetterTemplates::load_dir(&dir).unwrap();
        assert_eq!(
            t.keys().collect::<Vec<_>>(),
            LetterTemplates::builtin().keys().collect::<Vec<_>>()
        );
    }

    #[test]
    fn each_missing_file_is_reported() {
        for key in required_keys() {
            let dir = tempfile::tempdir().unwrap();
            copy_builtin(dir.path());
            std::fs::remove_file(dir.path().join(format!("{key}.txt"))).unwrap();
            match LetterTemplates::load_dir(dir.path()) {
                Err(Error::MissingTemplate(k)) => assert_eq!(k, key),
                other => panic!("expected MissingTemplate for {key}, got {other:?}"),
            }
        }
    }

    #[test]
    fn manifest_must_list_all() {
        let dir = tempfile::tempdir().unwrap();
        copy_builtin(dir.path());
        let manifest = std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap();
        let trimmed: String = manifest
            .lines()
            .filter(|l| !l.contains("ungradable-es"))
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(dir.path().join(MANIFEST_FILE), trimmed).unwrap();
        assert!(matches!(
            LetterTemplates::load_dir(dir.path()),
            Err(Error::MissingTemplate(_))
        ));
    }

    #[test]
    fn rejects_unknown_placeholder() {
        assert!(parse_template("k", "Subject: x\n\nHello {nombre}\n").is_err());
        assert!(parse_template("k", "Subject: x\n\nHello {participant_name\n").is_err());
        assert!(parse_template("k", "no subject\n\nbody").is_err());
        assert!(parse_template("k", "Subject: x\nbody").is_err());
        assert!(parse_template("k", "Subject: x\r\n\r\nHi {participant_name}\r\n").is_ok());
    }

    #[test]
    fn fill_neutralises_braces() {
        let mut values = BTreeMap::new();
        values.insert("participant_name", "Ana {x}".to_string());
        assert_eq!(fill("Dear {participant_name},", &values), "Dear Ana (x),");
    }
}
