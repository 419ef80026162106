//! Cohort statistics: demographic tables, age summary, Likert summaries of
//! the satisfaction survey, response rate and language-stratified
//! histograms. All reported figures are rounded half-up to 2 decimals.

pub mod synthesis;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{Ethnicity, Insurance, Language, Sex};
use crate::error::{Error, Result};
use crate::ids::{ParticipantId, VisitId};
use crate::storage::export::ExportRow;

/// A non-negative decimal with exactly two fraction digits, stored as an
/// integer count of hundredths so rounding happens once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub struct Hundredths(pub u64);

impl Hundredths {
    /// `num / den` rounded half-up, computed exactly.
    pub fn from_ratio(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::DivisionByZero);
        }
        let (num, den) = (u128::from(num), u128::from(den));
        Ok(Self(((200 * num + den) / (2 * den)) as u64))
    }

    /// Rounds a non-negative float half-up.
    pub fn from_f64(x: f64) -> Self {
        debug_assert!(x >= 0.0 && x.is_finite());
        Self((x * 100.0).round() as u64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Hundredths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:02}", self.0 / 100, self.0 % 100)
    }
}

impl FromStr for Hundredths {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::validation(
                "value",
                format!("`{s}` is not a decimal with at most 2 fraction digits"),
            )
        };
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if whole.is_empty() || frac.len() > 2 || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: u64 = whole.parse().map_err(|_| bad())?;
        let frac: u64 = format!("{frac:0<2}").parse().map_err(|_| bad())?;
        Ok(Self(whole * 100 + frac))
    }
}

impl From<Hundredths> for f64 {
    fn from(h: Hundredths) -> f64 {
        h.as_f64()
    }
}

impl TryFrom<f64> for Hundredths {
    type Error = Error;
    fn try_from(x: f64) -> Result<Self> {
        if x.is_finite() && x >= 0.0 {
            Ok(Self::from_f64(x))
        } else {
            Err(Error::validation("value", "must be a non-negative number"))
        }
    }
}

/// Percentage `100 * part / whole`.
pub fn pct(part: u64, whole: u64) -> Result<Hundredths> {
    if whole == 0 {
        return Err(Error::DivisionByZero);
    }
    if part > whole {
        return Err(Error::validation("part", format!("{part} exceeds the whole {whole}")));
    }
    Hundredths::from_ratio(100 * part, whole)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeSummary {
    pub count: usize,
    pub mean: Hundredths,
    pub min: u32,
    pub max: u32,
}

pub fn age_summary(ages: &[u32]) -> Result<AgeSummary> {
    let (Some(&min), Some(&max)) = (ages.iter().min(), ages.iter().max()) else {
        return Err(Error::EmptyInput("ages"));
    };
    let sum: u64 = ages.iter().map(|&a| u64::from(a)).sum();
    Ok(AgeSummary {
        count: ages.len(),
        mean: Hundredths::from_ratio(sum, ages.len() as u64)?,
        min,
        max,
    })
}

/// Likert points, strongly disagree (1) to strongly agree (5).
pub const LIKERT_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub count: u64,
    pub mean: Hundredths,
    /// Sample standard deviation (n - 1 denominator); 0 for one response.
    pub sd: Hundredths,
    pub mean_raw: f64,
    pub sd_raw: f64,
}

/// Sample SD from the count, sum and sum of squares, in exact integer
/// arithmetic up to the final square root.
pub(crate) fn sample_sd(n: u64, sum: u64, sum_sq: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let (n, s, q) = (u128::from(n), u128::from(sum), u128::from(sum_sq));
    let numerator = n * q - s * s;
    (numerator as f64 / (n * (n - 1)) as f64).sqrt()
}

pub(crate) fn summary_from_moments(n: u64, sum: u64, sum_sq: u64) -> Result<LikertSummary> {
    if n == 0 {
        return Err(Error::EmptyInput("likert responses"));
    }
    let sd_raw = sample_sd(n, sum, sum_sq);
    Ok(LikertSummary {
        count: n,
        mean: Hundredths::from_ratio(sum, n)?,
        sd: Hundredths::from_f64(sd_raw),
        mean_raw: sum as f64 / n as f64,
        sd_raw,
    })
}

pub fn likert_summary(values: &[u8]) -> Result<LikertSummary> {
    let mut counts = [0u64; LIKERT_LEVELS];
    for &v in values {
        if !(1..=5).contains(&v) {
            return Err(Error::validation("value", format!("{v} is not on the 1-5 scale")));
        }
        counts[usize::from(v) - 1] += 1;
    }
    likert_from_counts(&counts)
}

/// Summary of a histogram where `counts[i]` is the number of `i + 1` answers.
pub fn likert_from_counts(counts: &[u64; LIKERT_LEVELS]) -> Result<LikertSummary> {
    let (mut n, mut sum, mut sum_sq) = (0, 0, 0);
    for (value, &c) in (1u64..).zip(counts) {
        n += c;
        sum += value * c;
        sum_sq += value * value * c;
    }
    summary_from_moments(n, sum, sum_sq)
}

/// The satisfaction survey themes, in reporting order.
pub const THEMES: [&str; 8] = [
    "comfort",
    "location",
    "privacy",
    "involvement",
    "dissemination",
    "connection",
    "language",
    "general_acceptance",
];

/// Language groups of the satisfaction survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LanguageGroup {
    English,
    Spanish,
    /// No preference stated, or another language.
    None,
}

impl LanguageGroup {
    pub const ALL: [LanguageGroup; 3] = [LanguageGroup::English, LanguageGroup::Spanish, LanguageGroup::None];

    pub fn token(self) -> &'static str {
        match self {
            LanguageGroup::English => "english",
            LanguageGroup::Spanish => "spanish",
            LanguageGroup::None => "none",
        }
    }
}

impl fmt::Display for LanguageGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for LanguageGroup {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.token() == s)
            .ok_or_else(|| Error::validation("preferred_language", format!("unknown language group `{s}`")))
    }
}

/// Participants speaking both languages or another one fall in `None`.
impl From<Language> for LanguageGroup {
    fn from(language: Language) -> Self {
        match language {
            Language::English => LanguageGroup::English,
            Language::Spanish => LanguageGroup::Spanish,
            Language::Both | Language::Other => LanguageGroup::None,
        }
    }
}

/// One row of the satisfaction response file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseRecord {
    pub visit_id: VisitId,
    pub theme: String,
    /// `None` when the respondent skipped the theme.
    pub value: Option<u8>,
    /// `None` means: take the participant's registered language.
    pub preferred_language: Option<LanguageGroup>,
}

pub const RESPONSE_COLUMNS: [&str; 4] = ["visit_id", "theme", "value", "preferred_language"];

pub fn write_responses(records: &[ResponseRecord]) -> String {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    out.write_record(RESPONSE_COLUMNS).expect("writing to memory");
    for r in records {
        out.write_record([
            r.visit_id.to_string(),
            r.theme.clone(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
            r.preferred_language.map(|g| g.token().to_string()).unwrap_or_default(),
        ])
        .expect("writing to memory");
    }
    String::from_utf8(out.into_inner().expect("writing to memory")).expect("csv of strings is UTF-8")
}

pub fn parse_responses(text: &str) -> Result<Vec<ResponseRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or(Error::EmptyInput("response file"))?
        .map_err(|e| Error::format(1, "header", e.to_string()))?;
    if header.iter().ne(RESPONSE_COLUMNS) {
        return Err(Error::format(
            1,
            "header",
            format!("expected `{}`", RESPONSE_COLUMNS.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::format(row, "record", e.to_string()))?;
        if record.len() != RESPONSE_COLUMNS.len() {
            return Err(Error::format(
                row,
                "record",
                format!("expected {} fields", RESPONSE_COLUMNS.len()),
            ));
        }
        let visit_id = record[0]
            .parse()
            .map_err(|_| Error::format(row, "visit_id", format!("`{}` is not a visit id", &record[0])))?;
        let theme = record[1].trim();
        if theme.is_empty() {
            return Err(Error::format(row, "theme", "empty"));
        }
        let value = match record[2].trim() {
            "" => None,
            v => match v.parse::<u8>() {
                Ok(n @ 1..=5) => Some(n),
                _ => return Err(Error::format(row, "value", format!("`{v}` is not on the 1-5 scale"))),
            },
        };
        let preferred_language = match record[3].trim() {
            "" => None,
            g => Some(
                g.parse()
                    .map_err(|_| Error::format(row, "preferred_language", format!("unknown group `{g}`")))?,
            ),
        };
        out.push(ResponseRecord {
            visit_id,
            theme: theme.to_string(),
            value,
            preferred_language,
        });
    }
    Ok(out)
}

/// Likert summary of every theme present, known themes first.
pub fn likert_by_theme(responses: &[ResponseRecord]) -> Result<Vec<(String, LikertSummary)>> {
    let mut values: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for r in responses {
        let entry = values.entry(r.theme.as_str()).or_default();
        entry.extend(r.value);
    }
    let rank = |t: &str| THEMES.iter().position(|k| *k == t).unwrap_or(THEMES.len());
    let mut themes: Vec<&str> = values.keys().copied().collect();
    themes.sort_by_key(|t| (rank(t), *t));
    themes
        .into_iter()
        .filter(|t| !values[t].is_empty())
        .map(|t| Ok((t.to_string(), likert_summary(&values[t])?)))
        .collect()
}

/// Distinct visits with at least one row in the response file.
pub fn respondents(responses: &[ResponseRecord]) -> BTreeMap<VisitId, Option<LanguageGroup>> {
    let mut out = BTreeMap::new();
    for r in responses {
        out.entry(r.visit_id).or_insert(r.preferred_language);
    }
    out
}

pub fn response_rate(responded: u64, invited: u64) -> Result<Hundredths> {
    pct(responded, invited)
}

/// Response histograms of one theme per language group. `counts[i]` is the
/// number of `i + 1` answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Stratified {
    pub theme: String,
    pub groups: BTreeMap<LanguageGroup, [u64; LIKERT_LEVELS]>,
}

impl Stratified {
    pub fn total(&self) -> u64 {
        self.groups.values().flatten().sum()
    }
}

/// Groups answers of `theme` by language. A response without a stated
/// preference takes the language of the participant it belongs to.
pub fn stratify(
    responses: &[ResponseRecord],
    theme: &str,
    participant_language: &HashMap<VisitId, Language>,
) -> Result<Stratified> {
    let mut groups: BTreeMap<LanguageGroup, [u64; LIKERT_LEVELS]> = LanguageGroup::ALL
        .into_iter()
        .map(|g| (g, [0; LIKERT_LEVELS]))
        .collect();
    for r in responses.iter().filter(|r| r.theme == theme) {
        let Some(value) = r.value else { continue };
        let group = match r.preferred_language {
            Some(g) => g,
            None => participant_language
                .get(&r.visit_id)
                .copied()
                .map(LanguageGroup::from)
                .ok_or_else(|| Error::JoinFailure(r.visit_id.to_string()))?,
        };
        groups.get_mut(&group).expect("all groups present")[usize::from(value) - 1] += 1;
    }
    Ok(Stratified {
        theme: theme.to_string(),
        groups,
    })
}

/// Visit to language map for joining responses to an export.
pub fn languages_by_visit(rows: &[ExportRow]) -> HashMap<VisitId, Language> {
    rows.iter().map(|r| (r.visit_id, r.language)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: u64,
    pub percent: Hundredths,
}

/// Cohort demographic profile. Each participant counts once, with
/// the age at their first visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DemographicSummary {
    pub participants: u64,
    pub age: AgeSummary,
    pub sex: Vec<CategoryCount>,
    pub ethnicity: Vec<CategoryCount>,
    pub country: Vec<CategoryCount>,
    pub insurance: Vec<CategoryCount>,
    pub language: Vec<CategoryCount>,
}

fn tally<K: Ord + Clone>(
    keys: impl Iterator<Item = K>,
    order: impl IntoIterator<Item = K>,
    label: impl Fn(&K) -> String,
    whole: u64,
) -> Result<Vec<CategoryCount>> {
    let mut counts: BTreeMap<K, u64> = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_default() += 1;
    }
    order
        .into_iter()
        .map(|k| {
            let count = counts.get(&k).copied().unwrap_or(0);
            Ok(CategoryCount {
                category: label(&k),
                count,
                percent: pct(count, whole)?,
            })
        })
        .collect()
}

pub fn demographics(rows: &[ExportRow]) -> Result<DemographicSummary> {
    let mut first: BTreeMap<ParticipantId, &ExportRow> = BTreeMap::new();
    for r in rows {
        let slot = first.entry(r.participant_id).or_insert(r);
        if r.visit_id.seq() < slot.visit_id.seq() {
            *slot = r;
        }
    }
    if first.is_empty() {
        return Err(Error::EmptyInput("export rows"));
    }
    let people: Vec<&ExportRow> = first.into_values().collect();
    let n = people.len() as u64;
    let ages: Vec<u32> = people.iter().map(|r| r.age_at_visit).collect();

    let mut countries: BTreeMap<&str, u64> = BTreeMap::new();
    for r in &people {
        *countries.entry(r.country.as_str()).or_default() += 1;
    }
    let mut country_order: Vec<(&str, u64)> = countries.into_iter().collect();
    country_order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));

    Ok(DemographicSummary {
        participants: n,
        age: age_summary(&ages)?,
        sex: tally(
            people.iter().map(|r| r.sex),
            Sex::ALL.iter().copied(),
            |k| k.token().into(),
            n,
        )?,
        ethnicity: tally(
            people.iter().map(|r| r.ethnicity),
            Ethnicity::ALL.iter().copied(),
            |k| k.token().into(),
            n,
        )?,
        country: tally(
            people.iter().map(|r| r.country.as_str()),
            country_order.iter().map(|(c, _)| *c),
            |k| k.to_string(),
            n,
        )?,
        insurance: tally(
            people.iter().map(|r| r.insurance),
            Insurance::ALL.iter().copied(),
            |k| k.token().into(),
            n,
        )?,
        language: tally(
            people.iter().map(|r| r.language),
            Language::ALL.iter().copied(),
            |k| k.token().into(),
            n,
        )?,
    })
}

impl DemographicSummary {
    pub fn fields(&self) -> [(&'static str, &[CategoryCount]); 5] {
        [
            ("sex", &self.sex),
            ("ethnicity", &self.ethnicity),
            ("country", &self.country),
            ("insurance", &self.insurance),
            ("language", &self.language),
        ]
    }

    pub fn find(&self, field: &str, category: &str) -> Option<&CategoryCount> {
        self.fields()
            .into_iter()
            .find(|(f, _)| *f == field)?
            .1
            .iter()
            .find(|c| c.category == category)
    }
}

/// Plain-text table with left-aligned columns.
pub fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    out.write_record(header).expect("writing to memory");
    for row in rows {
        out.write_record(row).expect("writing to memory");
    }
    String::from_utf8(out.into_inner().expect("writing to memory")).expect("csv of strings is UTF-8")
}

pub const DEMOGRAPHIC_HEADER: [&str; 4] = ["field", "category", "count", "percent"];

impl DemographicSummary {
    /// Rows for [`DEMOGRAPHIC_HEADER`]; the age row carries mean and range.
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![vec![
            "age".to_string(),
            format!("mean (range {}-{})", self.age.min, self.age.max),
            self.age.count.to_string(),
            self.age.mean.to_string(),
        ]];
        for (field, counts) in self.fields() {
            for c in counts {
                rows.push(vec![
                    field.to_string(),
                    c.category.clone(),
                    c.count.to_string(),
                    c.percent.to_string(),
                ]);
            }
        }
        rows
    }
}

pub const LIKERT_HEADER: [&str; 4] = ["theme", "count", "mean", "sd"];

pub fn likert_rows(summaries: &[(String, LikertSummary)]) -> Vec<Vec<String>> {
    summaries
        .iter()
        .map(|(t, s)| vec![t.clone(), s.count.to_string(), s.mean.to_string(), s.sd.to_string()])
        .collect()
}

pub const STRATIFIED_HEADER: [&str; 7] = ["group", "1", "2", "3", "4", "5", "total"];

impl Stratified {
    pub fn table_rows(&self) -> Vec<Vec<String>> {
        self.groups
            .iter()
            .map(|(g, h)| {
                let mut row = vec![g.token().to_string()];
                row.extend(h.iter().map(u64::to_string));
                row.push(h.iter().sum::<u64>().to_string());
                row
            })
            .collect()
    }
}

/// Respondent counts by language group, with shares of all respondents.
pub fn respondent_languages(responses: &[ResponseRecord]) -> Result<Vec<CategoryCount>> {
    let who = respondents(responses);
    let total = who.len() as u64;
    let stated: BTreeSet<VisitId> = who.iter().filter(|(_, g)| g.is_some()).map(|(v, _)| *v).collect();
    if stated.len() as u64 != total {
        return Err(Error::validation(
            "preferred_language",
            "some respondents have no stated language",
        ));
    }
    tally(
        who.values().map(|g| g.expect("checked above")),
        LanguageGroup::ALL,
        |g| g.token().to_string(),
        total,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn percentages() {
        assert_eq!(pct(530, 865).unwrap().to_string(), "61.27");
        assert_eq!(pct(378, 400).unwrap().to_string(), "94.50");
        assert_eq!(pct(0, 100).unwrap().to_string(), "0.00");
        assert_eq!(pct(1, 8).unwrap().to_string(), "12.50");
        assert_eq!(pct(1, 800).unwrap().to_string(), "0.13", "0.125 rounds half up");
        assert!(matches!(pct(1, 0), Err(Error::DivisionByZero)));
        assert!(pct(2, 1).is_err());
    }

    #[test]
    fn ages() {
        let s = age_summary(&[15, 89]).unwrap();
        assert_eq!((s.mean.to_string().as_str(), s.min, s.max), ("52.00", 15, 89));
        assert_eq!(age_summary(&[50]).unwrap().mean.to_string(), "50.00");
        assert!(matches!(age_summary(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn likert_small_cases() {
        let s = likert_summary(&[5, 5, 5]).unwrap();
        assert_eq!(
            (s.count, s.mean.to_string(), s.sd.to_string()),
            (3, "5.00".into(), "0.00".into())
        );
        let s = likert_summary(&[4, 5]).unwrap();
        assert_eq!((s.mean.to_string(), s.sd.to_string()), ("4.50".into(), "0.71".into()));
        assert!(likert_summary(&[6]).is_err());
        assert!(matches!(likert_summary(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn hundredths_parse_and_print() {
        for s in ["4.81", "0.48", "49.91", "100.00"] {
            assert_eq!(s.parse::<Hundredths>().unwrap().to_string(), s);
        }
        assert_eq!("4.8".parse::<Hundredths>().unwrap().to_string(), "4.80");
        assert!("4.811".parse::<Hundredths>().is_err());
        assert!("-1".parse::<Hundredths>().is_err());
    }

    #[test]
    fn response_file_round_trip() {
        let records = vec![
            ResponseRecord {
                visit_id: "AAA001001".parse().unwrap(),
                theme: "comfort".into(),
                value: Some(5),
                preferred_language: Some(LanguageGroup::Spanish),
            },
            ResponseRecord {
                visit_id: "AAA001001".parse().unwrap(),
                theme: "privacy".into(),
                value: None,
                preferred_language: None,
            },
        ];
        assert_eq!(parse_responses(&write_responses(&records)).unwrap(), records);
        let err = parse_responses("visit_id,theme,value,preferred_language\nAAA001001,comfort,7,\n").unwrap_err();
        assert_eq!(err.locator().as_deref(), Some("row 2, column value"));
    }

    #[test]
    fn stratify_joins_and_partitions() {
        let vid: VisitId = "AAA001001".parse().unwrap();
        let other: VisitId = "AAA002001".parse().unwrap();
        let r = |v: VisitId, value, g| ResponseRecord {
            visit_id: v,
            theme: "language".into(),
            value: Some(value),
            preferred_language: g,
        };
        let responses = vec![r(vid, 5, None), r(other, 3, Some(LanguageGroup::English))];
        let langs = HashMap::from([(vid, Language::Spanish)]);
        let s = stratify(&responses, "language", &langs).unwrap();
        assert_eq!(s.groups[&LanguageGroup::Spanish], [0, 0, 0, 0, 1]);
        assert_eq!(s.groups[&LanguageGroup::None], [0; 5]);
        assert_eq!(s.total(), 2);
        let orphan = vec![r(other, 4, None)];
        assert!(matches!(
            stratify(&orphan, "language", &langs),
            Err(Error::JoinFailure(_))
        ));
    }

    /// Mean and SD computed the textbook two-pass way.
    fn two_pass(values: &[u8]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let ss = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>();
        (mean, if values.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 })
    }

    proptest! {
        #[test]
        fn likert_matches_two_pass(values in proptest::collection::vec(1u8..=5, 1..600)) {
            let s = likert_summary(&values).unwrap();
            let (mean, sd) = two_pass(&values);
            prop_assert!((s.mean_raw - mean).abs() < 1e-9);
            prop_assert!((s.sd_raw - sd).abs() < 1e-9);
            prop_assert!(s.mean.0 >= 100 && s.mean.0 <= 500);
        }

        #[test]
        fn pct_is_exact_half_up(part in 0u64..10_000, extra in 0u64..10_000) {
            let whole = part + extra + 1;
            let got = pct(part, whole).unwrap().0 as f64;
            let exact = 10_000.0 * part as f64 / whole as f64;
            prop_assert!(got - exact <= 0.5 + 1e-9 && exact - got < 0.5 + 1e-9);
        }
    }
}
