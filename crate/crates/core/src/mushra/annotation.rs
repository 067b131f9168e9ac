//! Error flags: 8 categories × 3 severities, counted per system and per domain.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::MushraError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorCategory {
    AudioGlitch,
    IncorrectPauseInsertion,
    IncorrectPitchAccent,
    IntonationProsody,
    Pronunciation,
    Stress,
    TextNormalisation,
    Other,
}

impl ErrorCategory {
    pub const ALL: [ErrorCategory; 8] = [
        Self::AudioGlitch,
        Self::IncorrectPauseInsertion,
        Self::IncorrectPitchAccent,
        Self::IntonationProsody,
        Self::Pronunciation,
        Self::Stress,
        Self::TextNormalisation,
        Self::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::AudioGlitch => "Audio glitch",
            Self::IncorrectPauseInsertion => "Incorrect pause insertion",
            Self::IncorrectPitchAccent => "Incorrect pitch accent",
            Self::IntonationProsody => "Intonation/Prosody",
            Self::Pronunciation => "Pronunciation",
            Self::Stress => "Stress",
            Self::TextNormalisation => "Text normalisation",
            Self::Other => "Other",
        }
    }
}

impl fmt::Display for ErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ErrorCategory {
    type Err = MushraError;

    /// Case-insensitive; spaces, `_` and `-` are interchangeable.
    /// "incorrect pitch insertion" is an alias of the pitch-accent category.
    fn from_str(s: &str) -> Result<Self, MushraError> {
        let key: String = s
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .collect();
        let key = key.split_whitespace().collect::<Vec<_>>().join(" ");
        Ok(match key.as_str() {
            "audio glitch" | "glitch" => Self::AudioGlitch,
            "incorrect pause insertion" | "pause insertion" => Self::IncorrectPauseInsertion,
            "incorrect pitch accent" | "incorrect pitch insertion" | "pitch accent" => {
                Self::IncorrectPitchAccent
            }
            "intonation/prosody" | "intonation" | "prosody" | "intonation prosody" => {
                Self::IntonationProsody
            }
            "pronunciation" => Self::Pronunciation,
            "stress" => Self::Stress,
            "text normalisation" | "text normalization" => Self::TextNormalisation,
            "other" => Self::Other,
            _ => return Err(MushraError::UnknownCategory(s.to_string())),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Critical,
    Medium,
    Minor,
}

impl Severity {
    pub const ALL: [Severity; 3] = [Self::Critical, Self::Medium, Self::Minor];

    pub fn label(self) -> &'static str {
        match self {
            Self::Critical => "critical",
            Self::Medium => "medium",
            Self::Minor => "minor",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Severity {
    type Err = MushraError;

    fn from_str(s: &str) -> Result<Self, MushraError> {
        match s.trim().to_lowercase().as_str() {
            "critical" => Ok(Self::Critical),
            "medium" => Ok(Self::Medium),
            "minor" => Ok(Self::Minor),
            _ => Err(MushraError::UnknownSeverity(s.to_string())),
        }
    }
}

macro_rules! serde_via_str {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }
        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}
serde_via_str!(ErrorCategory);
serde_via_str!(Severity);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorFlag {
    pub annotator_id: String,
    pub utterance_id: String,
    pub system: String,
    pub category: ErrorCategory,
    pub severity: Severity,
    #[serde(default)]
    pub note: String,
}

pub fn read_flags(path: &Path) -> Result<Vec<ErrorFlag>, MushraError> {
    parse_flags(std::fs::File::open(path)?)
}

pub fn parse_flags<R: std::io::Read>(input: R) -> Result<Vec<ErrorFlag>, MushraError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| MushraError::Flags(format!("row {}: {e}", i + 1)))?);
    }
    Ok(out)
}

pub fn write_flags<W: std::io::Write>(out: W, flags: &[ErrorFlag]) -> Result<(), MushraError> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record([
        "annotator_id",
        "utterance_id",
        "system",
        "category",
        "severity",
        "note",
    ])?;
    for f in flags {
        w.serialize(f)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SystemErrorRow {
    pub system: String,
    pub category: ErrorCategory,
    pub critical: usize,
    pub medium: usize,
    pub minor: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DomainErrorRow {
    pub domain: String,
    pub critical: usize,
    pub medium: usize,
    pub minor: usize,
}

fn bump(counts: &mut [usize; 3], s: Severity) {
    counts[s.index()] += 1;
}

/// Counts per system × category × severity. Every listed system gets all
/// eight category rows, zero or not; systems seen only in the flags are
/// appended in first-seen order.
pub fn aggregate_by_system(flags: &[ErrorFlag], systems: &[String]) -> Vec<SystemErrorRow> {
    let mut order: Vec<String> = systems.to_vec();
    for f in flags {
        if !order.contains(&f.system) {
            order.push(f.system.clone());
        }
    }
    let mut counts: HashMap<(&str, ErrorCategory), [usize; 3]> = HashMap::new();
    for f in flags {
        bump(
            counts.entry((f.system.as_str(), f.category)).or_default(),
            f.severity,
        );
    }
    let mut rows = Vec::with_capacity(order.len() * 8);
    for s in &order {
        for c in ErrorCategory::ALL {
            let k = counts.get(&(s.as_str(), c)).copied().unwrap_or_default();
            rows.push(SystemErrorRow {
                system: s.clone(),
                category: c,
                critical: k[0],
                medium: k[1],
                minor: k[2],
            });
        }
    }
    rows
}

/// Restricts a per-domain count to one system and/or category.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlagFilter {
    pub system: Option<String>,
    pub category: Option<ErrorCategory>,
}

impl FlagFilter {
    pub fn matches(&self, f: &ErrorFlag) -> bool {
        self.system.as_ref().is_none_or(|s| *s == f.system)
            && self.category.is_none_or(|c| c == f.category)
    }
}

/// Severity counts per domain for flags passing `filter`. `domains` lists
/// the utterance → domain map in report order (every domain appears, with
/// zeros if nothing matched). A flag on an utterance without a domain is an
/// error, whether or not it passes the filter.
pub fn aggregate_by_domain(
    flags: &[ErrorFlag],
    utterance_domains: &[(String, String)],
    filter: &FlagFilter,
) -> Result<Vec<DomainErrorRow>, MushraError> {
    let domain_of: HashMap<&str, &str> = utterance_domains
        .iter()
        .map(|(u, d)| (u.as_str(), d.as_str()))
        .collect();
    let mut order: Vec<&str> = Vec::new();
    for (_, d) in utterance_domains {
        if !order.contains(&d.as_str()) {
            order.push(d);
        }
    }
    let mut counts: HashMap<&str, [usize; 3]> = HashMap::new();
    for f in flags {
        let d = domain_of.get(f.utterance_id.as_str()).ok_or_else(|| {
            MushraError::Flags(format!("utterance {} has no domain", f.utterance_id))
        })?;
        if filter.matches(f) {
            bump(counts.entry(d).or_default(), f.severity);
        }
    }
    Ok(order
        .into_iter()
        .map(|d| {
            let k = counts.get(d).copied().unwrap_or_default();
            DomainErrorRow {
                domain: d.to_string(),
                critical: k[0],
                medium: k[1],
                minor: k[2],
            }
        })
        .collect())
}

/// Text rendering of both tables.
pub fn render_error_report(
    by_system: &[SystemErrorRow],
    by_domain: &[DomainErrorRow],
    filter: &FlagFilter,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Perceived cause of errors");
    let _ = writeln!(
        s,
        "{:<12} {:<26} {:>8} {:>8} {:>8}",
        "System", "Category", "Critical", "Medium", "Minor"
    );
    for r in by_system {
        let _ = writeln!(
            s,
            "{:<12} {:<26} {:>8} {:>8} {:>8}",
            r.system,
            r.category.label(),
            r.critical,
            r.medium,
            r.minor
        );
    }
    let what = match (&filter.system, filter.category) {
        (Some(sys), Some(c)) => format!("{c} flags for {sys}"),
        (Some(sys), None) => format!("all flags for {sys}"),
        (None, Some(c)) => format!("{c} flags, all systems"),
        (None, None) => "all flags".to_string(),
    };
    let _ = writeln!(s, "\nPer domain ({what})");
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:>8} {:>8}",
        "Domain", "Critical", "Medium", "Minor"
    );
    for r in by_domain {
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:>8} {:>8}",
            r.domain, r.critical, r.medium, r.minor
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flag(u: &str, s: &str, c: ErrorCategory, v: Severity) -> ErrorFlag {
        ErrorFlag {
            annotator_id: "a".into(),
            utterance_id: u.into(),
            system: s.into(),
            category: c,
            severity: v,
            note: String::new(),
        }
    }

    #[test]
    fn parsing_and_aliases() {
        assert_eq!(
            "incorrect pitch insertion"
                .parse::<ErrorCategory>()
                .unwrap(),
            ErrorCategory::IncorrectPitchAccent
        );
        assert_eq!(
            "Audio_Glitch".parse::<ErrorCategory>().unwrap(),
            ErrorCategory::AudioGlitch
        );
        for c in ErrorCategory::ALL {
            assert_eq!(c.label().parse::<ErrorCategory>().unwrap(), c);
        }
        assert!("buzz".parse::<ErrorCategory>().is_err());
        assert!("severe".parse::<Severity>().is_err());
    }

    #[test]
    fn empty_is_all_zero() {
        let rows = aggregate_by_system(&[], &["SSWS".to_string()]);
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.critical + r.medium + r.minor == 0));
    }

    #[test]
    fn hand_counts() {
        use ErrorCategory::*;
        use Severity::*;
        let flags = [
            flag("u1", "SSWS", AudioGlitch, Critical),
            flag("u2", "SSWS", AudioGlitch, Minor),
            flag("u1", "SSWS", Stress, Minor),
        ];
        let rows = aggregate_by_system(&flags, &["SSWS".into()]);
        assert_eq!((rows[0].critical, rows[0].medium, rows[0].minor), (1, 0, 1));
        assert_eq!(rows[5].minor, 1);
        let domains = vec![
            ("u1".to_string(), "news".to_string()),
            ("u2".to_string(), "calling".to_string()),
        ];
        let filter = FlagFilter {
            system: Some("SSWS".into()),
            category: Some(AudioGlitch),
        };
        let d = aggregate_by_domain(&flags, &domains, &filter).unwrap();
        assert_eq!((d[0].critical, d[0].minor, d[1].minor), (1, 0, 1));
        let none = FlagFilter {
            system: Some("nobody".into()),
            category: None,
        };
        assert!(aggregate_by_domain(&flags, &domains, &none)
            .unwrap()
            .iter()
            .all(|r| r.critical + r.medium + r.minor == 0));
        assert!(aggregate_by_domain(&flags, &domains[..1], &filter).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let flags = vec![flag(
            "u1",
            "SSWS",
            ErrorCategory::IntonationProsody,
            Severity::Medium,
        )];
        write_flags(
            std::fs::File::create(dir.path().join("f.csv")).unwrap(),
            &flags,
        )
        .unwrap();
        assert_eq!(read_flags(&dir.path().join("f.csv")).unwrap(), flags);
    }
}
