//! Query normalization, flu-keyword flagging and A1/A2 taxonomy labels.
//!
//! Labeling is rule based: an ordered list of regular expressions over the
//! normalized text, first match wins, followed by an explicit per-query
//! override table. Both are plain text files so that the labeling of a
//! corpus can be reviewed and reproduced.

pub mod embedding;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{cosine, embed_document, expand_seed, train_embeddings, EmbeddingModel, Expansion, TrainParams};

/// Taxonomy label attached to a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// First-person symptom or diagnosis seeking.
    A1,
    /// Flu related news or research.
    A2,
    Secondary,
    NonIli,
    Unlabeled,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::A1 => "A1",
            Label::A2 => "A2",
            Label::Secondary => "SECONDARY",
            Label::NonIli => "NON_ILI",
            Label::Unlabeled => "UNLABELED",
        }
    }

    /// Whether the query contains a flu term at all.
    pub fn is_flagged(self) -> bool {
        self != Label::NonIli
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A1" => Ok(Label::A1),
            "A2" => Ok(Label::A2),
            "SECONDARY" => Ok(Label::Secondary),
            "NON_ILI" => Ok(Label::NonIli),
            "UNLABELED" => Ok(Label::Unlabeled),
            other => Err(Error::Config(format!("unknown label `{other}`"))),
        }
    }
}

/// Five digit US zipcode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Zipcode(String);

impl Zipcode {
    pub fn new(code: &str) -> Result<Self> {
        if code.len() == 5 && code.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Zipcode(code.to_owned()))
        } else {
            Err(Error::Domain(format!("invalid zipcode `{code}`")))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Zipcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRecord {
    /// UTC seconds.
    pub timestamp: i64,
    pub zipcode: Zipcode,
    pub raw_text: String,
    pub normalized_text: String,
    pub label: Label,
}

impl QueryRecord {
    pub fn new(timestamp: i64, zipcode: Zipcode, raw_text: impl Into<String>) -> Self {
        let raw_text = raw_text.into();
        let normalized_text = normalize(&raw_text);
        QueryRecord {
            timestamp,
            zipcode,
            raw_text,
            normalized_text,
            label: Label::Unlabeled,
        }
    }
}

/// Lowercases ASCII letters, replaces ASCII punctuation with spaces and
/// collapses whitespace. Non-ASCII characters pass through unchanged.
pub fn normalize(raw_text: &str) -> String {
    let mapped: String = raw_text
        .chars()
        .map(|c| {
            if c.is_ascii_punctuation() {
                ' '
            } else {
                c.to_ascii_lowercase()
            }
        })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Keywords from the survey screening step.
pub const DEFAULT_FLAG_TERMS: &[&str] = &[
    "flu",
    "fever",
    "influenza",
    "swollen",
    "cough",
    "pneumonia",
    "sore throat",
];

const DEFAULT_RULES: &str = "\
# news, history and research context
\\b(spanish|bird|swine|avian) flu\\b\tA2
\\b(news|history|obama|president|outbreak|pandemic|epidemic|vaccine|vaccines|shot|shots|death|deaths|statistics|study|research|cdc report)\\b\tA2
# symptom and diagnosis seeking
\\b(symptom|symptoms|do i have|how long|contagious|treatment|treat|remedy|remedies|medicine|sick|diagnosis|diagnose|incubation)\\b\tA1
\\b(fever|cough|sore throat|influenza|flu|pneumonia|swollen)\\b\tA1
";

#[derive(Debug, Clone)]
struct LabelRule {
    pattern: Regex,
    label: Label,
}

/// Flag terms plus ordered label rules.
#[derive(Debug, Clone)]
pub struct KeywordRules {
    flag_terms: Vec<Vec<String>>,
    rules: Vec<LabelRule>,
}

impl KeywordRules {
    /// Builds rules from flag terms and the text of a rules file
    /// (`PATTERN<TAB>LABEL` per line, `#` comments). `source` names the
    /// file in error messages.
    pub fn parse(flag_terms: &[impl AsRef<str>], rules_text: &str, source: &str) -> Result<Self> {
        let terms: BTreeSet<Vec<String>> = flag_terms
            .iter()
            .map(|t| normalize(t.as_ref()))
            .filter(|t| !t.is_empty())
            .map(|t| t.split(' ').map(str::to_owned).collect())
            .collect();
        if terms.is_empty() {
            return Err(Error::Config("flag term set must not be empty".into()));
        }
        let mut rules = Vec::new();
        for (idx, line) in rules_text.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((pattern, label)) = line.split_once('\t') else {
                return Err(Error::Config(format!(
                    "{source}:{lineno}: expected `PATTERN<TAB>LABEL`"
                )));
            };
            if pattern.is_empty() {
                return Err(Error::Config(format!("{source}:{lineno}: empty pattern")));
            }
            let label: Label = label
                .parse()
                .map_err(|e| Error::Config(format!("{source}:{lineno}: {e}")))?;
            let pattern = Regex::new(pattern)
                .map_err(|e| Error::Config(format!("{source}:{lineno}: bad pattern: {e}")))?;
            rules.push(LabelRule { pattern, label });
        }
        Ok(KeywordRules {
            flag_terms: terms.into_iter().collect(),
            rules,
        })
    }

    pub fn from_file(flag_terms: &[impl AsRef<str>], path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(flag_terms, &text, &path.display().to_string())
    }

    /// Built-in keyword list and rule set.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_FLAG_TERMS, DEFAULT_RULES, "<builtin>").expect("builtin rules parse")
    }

    pub fn builtin_rules_text() -> &'static str {
        DEFAULT_RULES
    }

    pub fn flag_terms(&self) -> impl Iterator<Item = String> + '_ {
        self.flag_terms.iter().map(|t| t.join(" "))
    }

    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
}

/// True when some flag term occurs in the text as a contiguous run of
/// whole tokens.
pub fn flag_candidate(normalized_text: &str, rules: &KeywordRules) -> bool {
    let tokens: Vec<&str> = normalized_text.split(' ').filter(|t| !t.is_empty()).collect();
    rules.flag_terms.iter().any(|term| {
        tokens
            .windows(term.len())
            .any(|w| w.iter().zip(term).all(|(a, b)| *a == b))
    })
}

/// Label from the first matching rule. Unflagged text is `NON_ILI`;
/// flagged text that no rule matches stays `UNLABELED` for review.
pub fn assign_label(normalized_text: &str, rules: &KeywordRules) -> Label {
    if !flag_candidate(normalized_text, rules) {
        return Label::NonIli;
    }
    rules
        .rules
        .iter()
        .find(|r| r.pattern.is_match(normalized_text))
        .map(|r| r.label)
        .unwrap_or(Label::Unlabeled)
}

/// Per-query labels that take precedence over the rules.
#[derive(Debug, Clone, Default)]
pub struct LabelOverrides {
    labels: HashMap<String, Label>,
}

impl LabelOverrides {
    /// Parses `normalized_text<TAB>LABEL` lines; keys are re-normalized.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut labels = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let trimmed = line.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((query, label)) = line.split_once('\t') else {
                return Err(Error::Config(format!(
                    "{source}:{lineno}: expected `normalized_text<TAB>LABEL`"
                )));
            };
            let label: Label = label
                .parse()
                .map_err(|e| Error::Config(format!("{source}:{lineno}: {e}")))?;
            labels.insert(normalize(query), label);
        }
        Ok(LabelOverrides { labels })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn get(&self, normalized_text: &str) -> Option<Label> {
        self.labels.get(normalized_text).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Rules followed by overrides.
pub fn label_text(normalized_text: &str, rules: &KeywordRules, overrides: &LabelOverrides) -> Label {
    overrides
        .get(normalized_text)
        .unwrap_or_else(|| assign_label(normalized_text, rules))
}

pub fn label_records(records: &mut [QueryRecord], rules: &KeywordRules, overrides: &LabelOverrides) {
    for rec in records {
        rec.label = label_text(&rec.normalized_text, rules, overrides);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Flu  Symptoms?"), "flu symptoms");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("Obama's sore-throat"), "obama s sore throat");
        assert_eq!(normalize("  \t FEVER\n"), "fever");
        // non-ASCII is left alone
        assert_eq!(normalize("Grippe É"), "grippe É");
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }
    }

    #[test]
    fn flagging() {
        let rules = KeywordRules::builtin();
        assert!(flag_candidate("what are the symptoms of the flu", &rules));
        assert!(!flag_candidate("pizza near me", &rules));
        assert!(flag_candidate("spanish flu", &rules));
        assert!(flag_candidate("my sore throat hurts", &rules));
        assert!(!flag_candidate("sore feet", &rules));
        // whole tokens only
        assert!(!flag_candidate("fluffy pancakes", &rules));
    }

    #[test]
    fn labels_from_builtin_rules() {
        let rules = KeywordRules::builtin();
        assert_eq!(assign_label("continued fever is a symptom of", &rules), Label::A1);
        assert_eq!(assign_label("what are the symptoms of the flu", &rules), Label::A1);
        assert_eq!(assign_label("spanish flu", &rules), Label::A2);
        assert_eq!(assign_label("obama sore throat", &rules), Label::A2);
        assert_eq!(assign_label("pizza near me", &rules), Label::NonIli);
    }

    #[test]
    fn first_matching_rule_wins() {
        let rules = KeywordRules::parse(&["flu"], "flu\tA2\nflu\tA1\n", "t").unwrap();
        assert_eq!(assign_label("flu", &rules), Label::A2);
        let none = KeywordRules::parse(&["flu"], "# nothing\n", "t").unwrap();
        assert_eq!(assign_label("flu", &none), Label::Unlabeled);
    }

    #[test]
    fn malformed_rule_file_names_line() {
        let err = KeywordRules::parse(&["flu"], "# ok\nflu\tA1\nno tab here\n", "rules.tsv").unwrap_err();
        assert!(err.to_string().contains("rules.tsv:3"), "{err}");
        let err = KeywordRules::parse(&["flu"], "flu\tA9\n", "rules.tsv").unwrap_err();
        assert!(err.to_string().contains("rules.tsv:1"), "{err}");
        let err = KeywordRules::parse(&["flu"], "\n(unclosed\tA1\n", "rules.tsv").unwrap_err();
        assert!(err.to_string().contains("rules.tsv:2"), "{err}");
        assert!(err.is_validation());
    }

    #[test]
    fn empty_flag_terms_rejected() {
        let empty: [&str; 0] = [];
        assert!(KeywordRules::parse(&empty, "", "t").is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let rules = KeywordRules::builtin();
        let ov = LabelOverrides::parse("Spanish Flu\tA1\npizza near me\tSECONDARY\n", "ov").unwrap();
        assert_eq!(label_text("spanish flu", &rules, &ov), Label::A1);
        assert_eq!(label_text("pizza near me", &rules, &ov), Label::Secondary);
        assert_eq!(label_text("flu symptoms", &rules, &ov), Label::A1);
        assert!(LabelOverrides::parse("x\tBAD\n", "ov").is_err());
    }

    #[test]
    fn zipcodes_validated() {
        assert!(Zipcode::new("02115").is_ok());
        assert!(Zipcode::new("2115").is_err());
        assert!(Zipcode::new("0211a").is_err());
    }

    #[test]
    fn labeling_is_thread_independent() {
        let rules = KeywordRules::builtin();
        let texts: Vec<String> = (0..200)
            .map(|i| match i % 4 {
                0 => format!("flu symptoms day {i}"),
                1 => format!("spanish flu history {i}"),
                2 => format!("cheap flights {i}"),
                _ => format!("fever {i}"),
            })
            .collect();
        let serial: Vec<Label> = texts.iter().map(|t| assign_label(t, &rules)).collect();
        let parallel: Vec<Label> = std::thread::scope(|s| {
            let handles: Vec<_> = texts
                .chunks(50)
                .map(|chunk| s.spawn(|| chunk.iter().map(|t| assign_label(t, &rules)).collect::<Vec<_>>()))
                .collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        });
        assert_eq!(serial, parallel);
    }
}
