//! The flat per-visit CSV used for data download, analytics and migration.
//!
//! UTF-8, RFC 4180 quoting, LF line endings on output (CRLF accepted on
//! input). Empty optional values are empty fields. Grades use their slugs,
//! yes/no answers are `yes`/`no`, demographic categories use their tokens.

use std::collections::BTreeMap;

use chrono::{DateTime, Months, NaiveDate, Utc};

use crate::domain::{Ethnicity, Insurance, Language, OrganizationId, Participant, Sex, StateChange, Visit, VisitState};
use crate::error::{Error, Result};
use crate::grading::{overall_grade, DrGrade, EyeGrade, GradingRecord};
use crate::ids::{ParticipantId, VisitId};
use crate::reporting::{select_letter, FollowUp, FollowUpChannel, LetterDispatch};
use crate::survey::{AnswerSet, AnswerValue};

use super::Tables;

pub const EXPORT_COLUMNS: [&str; 20] = [
    "participant_id",
    "visit_id",
    "age_at_visit",
    "sex",
    "ethnicity",
    "language",
    "insurance",
    "city",
    "state",
    "zipcode",
    "country",
    "survey_date",
    "has_diabetes",
    "diabetes_type",
    "diabetes_duration",
    "hypertension",
    "left_grade",
    "right_grade",
    "letter_sent",
    "followup_count",
];

/// Actor recorded on everything reconstructed by an import.
pub const IMPORT_ACTOR: &str = "import";

#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub participant_id: ParticipantId,
    pub visit_id: VisitId,
    pub age_at_visit: u32,
    pub sex: Sex,
    pub ethnicity: Ethnicity,
    pub language: Language,
    pub insurance: Insurance,
    pub city: String,
    pub state: String,
    pub zipcode: String,
    pub country: String,
    /// Survey date, or the date the visit was opened if no survey is saved.
    pub survey_date: NaiveDate,
    pub has_diabetes: Option<bool>,
    pub diabetes_type: Option<String>,
    pub diabetes_duration: Option<f64>,
    pub hypertension: Option<bool>,
    pub left_grade: Option<DrGrade>,
    pub right_grade: Option<DrGrade>,
    pub letter_sent: bool,
    pub followup_count: u32,
}

fn yes_no(v: Option<bool>) -> String {
    match v {
        Some(true) => "yes".into(),
        Some(false) => "no".into(),
        None => String::new(),
    }
}

impl ExportRow {
    fn from_records(tables: &Tables, participant: &Participant, visit: &Visit) -> Self {
        let key = (visit.organization_id.clone(), visit.visit_id);
        let grading = tables.latest_grading(&key);
        let survey_date = visit.screened_at().date_naive();
        let answers = &visit.answers;
        Self {
            participant_id: participant.participant_id,
            visit_id: visit.visit_id,
            age_at_visit: participant.age_on(survey_date),
            sex: participant.sex,
            ethnicity: participant.ethnicity,
            language: participant.language,
            insurance: participant.insurance,
            city: participant.city.clone(),
            state: participant.state.clone(),
            zipcode: participant.zipcode.clone(),
            country: participant.country.clone(),
            survey_date,
            has_diabetes: answers.get("has_diabetes").and_then(AnswerValue::as_bool),
            diabetes_type: answers
                .get("diabetes_type")
                .and_then(AnswerValue::as_text)
                .map(str::to_string),
            diabetes_duration: answers.get("diabetes_duration").and_then(AnswerValue::as_number),
            hypertension: answers.get("hypertension").and_then(AnswerValue::as_bool),
            left_grade: grading.and_then(|g| g.left.as_ref()).map(|e| e.grade),
            right_grade: grading.and_then(|g| g.right.as_ref()).map(|e| e.grade),
            letter_sent: tables.dispatches.get(&key).is_some_and(|d| d.iter().any(|d| d.sent)),
            followup_count: tables.followups.get(&key).map_or(0, |f| f.len() as u32),
        }
    }

    pub fn fields(&self) -> [String; 20] {
        [
            self.participant_id.to_string(),
            self.visit_id.to_string(),
            self.age_at_visit.to_string(),
            self.sex.token().into(),
            self.ethnicity.token().into(),
            self.language.token().into(),
            self.insurance.token().into(),
            self.city.clone(),
            self.state.clone(),
            self.zipcode.clone(),
            self.country.clone(),
            self.survey_date.format("%Y-%m-%d").to_string(),
            yes_no(self.has_diabetes),
            self.diabetes_type.clone().unwrap_or_default(),
            self.diabetes_duration.map(|d| d.to_string()).unwrap_or_default(),
            yes_no(self.hypertension),
            self.left_grade.map(|g| g.slug().to_string()).unwrap_or_default(),
            self.right_grade.map(|g| g.slug().to_string()).unwrap_or_default(),
            self.letter_sent.to_string(),
            self.followup_count.to_string(),
        ]
    }

    /// Parses one data row; `row` is the 1-based line number for errors.
    pub fn parse(row: usize, record: &csv::StringRecord) -> Result<Self> {
        if record.len() != EXPORT_COLUMNS.len() {
            return Err(Error::format(
                row,
                "*",
                format!("expected {} fields, found {}", EXPORT_COLUMNS.len(), record.len()),
            ));
        }
        let cell = |i: usize| &record[i];
        let col = |i: usize| EXPORT_COLUMNS[i];
        let bad = |i: usize, msg: String| Error::format(row, col(i), msg);
        let parse_with = |i: usize, what: &str| -> Result<String> {
            let v = cell(i).trim();
            if v.is_empty() {
                Err(bad(i, format!("{what} is required")))
            } else {
                Ok(v.to_string())
            }
        };
        let token = |i: usize| -> Result<String> { parse_with(i, "value") };
        let opt_bool = |i: usize| -> Result<Option<bool>> {
            match cell(i) {
                "" => Ok(None),
                "yes" => Ok(Some(true)),
                "no" => Ok(Some(false)),
                other => Err(bad(i, format!("`{other}` is not yes/no"))),
            }
        };
        let opt_grade = |i: usize| -> Result<Option<DrGrade>> {
            match cell(i) {
                "" => Ok(None),
                other => other
                    .parse()
                    .map(Some)
                    .map_err(|_| bad(i, format!("`{other}` is not a grade"))),
            }
        };
        let enum_cell = |i: usize| -> Result<String> { token(i) };

        let participant_id: ParticipantId = cell(0)
            .parse()
            .map_err(|_| bad(0, format!("`{}` is not a participant id", cell(0))))?;
        let visit_id: VisitId = cell(1)
            .parse()
            .map_err(|_| bad(1, format!("`{}` is not a visit id", cell(1))))?;
        if visit_id.participant() != participant_id {
            return Err(bad(1, format!("{visit_id} does not belong to {participant_id}")));
        }
        let age_at_visit = cell(2)
            .parse()
            .map_err(|_| bad(2, format!("`{}` is not an age", cell(2))))?;
        let sex = enum_cell(3)?
            .parse()
            .map_err(|_| bad(3, format!("unknown sex `{}`", cell(3))))?;
        let ethnicity = enum_cell(4)?
            .parse()
            .map_err(|_| bad(4, format!("unknown ethnicity `{}`", cell(4))))?;
        let language = enum_cell(5)?
            .parse()
            .map_err(|_| bad(5, format!("unknown language `{}`", cell(5))))?;
        let insurance = enum_cell(6)?
            .parse()
            .map_err(|_| bad(6, format!("unknown insurance `{}`", cell(6))))?;
        let survey_date = NaiveDate::parse_from_str(cell(11), "%Y-%m-%d")
            .map_err(|_| bad(11, format!("`{}` is not a YYYY-MM-DD date", cell(11))))?;
        let diabetes_duration = match cell(14) {
            "" => None,
            v => Some(
                v.parse::<f64>()
                    .ok()
                    .filter(|d| d.is_finite())
                    .ok_or_else(|| bad(14, format!("`{v}` is not a number")))?,
            ),
        };
        let letter_sent = match cell(18) {
            "true" => true,
            "false" => false,
            other => return Err(bad(18, format!("`{other}` is not true/false"))),
        };
        let followup_count = cell(19)
            .parse()
            .map_err(|_| bad(19, format!("`{}` is not a count", cell(19))))?;
        Ok(Self {
            participant_id,
            visit_id,
            age_at_visit,
            sex,
            ethnicity,
            language,
            insurance,
            city: parse_with(7, "city")?,
            state: parse_with(8, "state")?,
            zipcode: parse_with(9, "zipcode")?,
            country: parse_with(10, "country")?,
            survey_date,
            has_diabetes: opt_bool(12)?,
            diabetes_type: Some(cell(13).to_string()).filter(|s| !s.is_empty()),
            diabetes_duration,
            hypertension: opt_bool(15)?,
            left_grade: opt_grade(16)?,
            right_grade: opt_grade(17)?,
            letter_sent,
            followup_count,
        })
    }
}

/// One row per visit, ordered by participant id, then visit sequence, then
/// organization.
pub fn export_rows(tables: &Tables, org: Option<&OrganizationId>) -> Vec<ExportRow> {
    let mut visits: Vec<&Visit> = tables
        .visits
        .values()
        .filter(|v| org.is_none_or(|o| &v.organization_id == o))
        .collect();
    visits.sort_by(|a, b| {
        (a.participant_id, a.visit_id.seq(), &a.organization_id).cmp(&(
            b.participant_id,
            b.visit_id.seq(),
            &b.organization_id,
        ))
    });
    visits
        .into_iter()
        .map(|v| {
            let p = tables
                .participant(&v.organization_id, v.participant_id)
                .expect("referential integrity is enforced on write");
            ExportRow::from_records(tables, p, v)
        })
        .collect()
}

pub fn write_csv(rows: &[ExportRow]) -> String {
    let mut out = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    out.write_record(EXPORT_COLUMNS).expect("writing to memory");
    for row in rows {
        out.write_record(row.fields()).expect("writing to memory");
    }
    String::from_utf8(out.into_inner().expect("writing to memory")).expect("fields are UTF-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<ExportRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => return Err(Error::format(1, "*", e.to_string())),
        None => return Err(Error::format(1, "*", "missing header row")),
    };
    if header.len() != EXPORT_COLUMNS.len() {
        return Err(Error::format(
            1,
            "*",
            format!("header has {} columns, expected {}", header.len(), EXPORT_COLUMNS.len()),
        ));
    }
    for (i, (found, expected)) in header.iter().zip(EXPORT_COLUMNS).enumerate() {
        if found != expected {
            return Err(Error::format(
                1,
                format!("#{}", i + 1),
                format!("expected `{expected}`, found `{found}`"),
            ));
        }
    }
    records
        .enumerate()
        .map(|(i, rec)| {
            let row = i + 2;
            let rec = rec.map_err(|e| Error::format(row, "*", e.to_string()))?;
            ExportRow::parse(row, &rec)
        })
        .collect()
}

fn midnight(date: NaiveDate) -> DateTime<Utc> {
    date.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc()
}

/// Latest birth date for which the participant is `age` on `on`.
fn latest_birth_date(on: NaiveDate, age: u32) -> Option<NaiveDate> {
    on.checked_sub_months(Months::new(age.checked_mul(12)?))
}

/// Rebuilds records from export rows into `org`. The whole document is
/// checked before anything is written. Fields the export does not carry get
/// neutral placeholders: the name becomes `Imported <id>`, the phone
/// `unknown`, and the birth date the latest date consistent with every
/// visit's age.
pub fn import_rows(
    tables: &mut Tables,
    rows: &[ExportRow],
    org: &OrganizationId,
    schema_version: &str,
) -> Result<usize> {
    // Rows are numbered as in the CSV: the header is row 1.
    let mut by_participant: BTreeMap<ParticipantId, Vec<(usize, &ExportRow)>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        by_participant.entry(row.participant_id).or_default().push((i + 2, row));
    }

    let mut participants = Vec::new();
    let mut visits = Vec::new();
    let mut gradings = Vec::new();
    let mut dispatches = Vec::new();
    let mut followups = Vec::new();

    for (pid, mut group) in by_participant {
        let first_row = group[0].0;
        if tables.participants.contains_key(&(org.clone(), pid)) {
            return Err(Error::format(
                first_row,
                "participant_id",
                format!("{pid} already exists"),
            ));
        }
        group.sort_by_key(|(_, r)| r.visit_id.seq());
        for (expected_seq, (row, r)) in (1u16..).zip(&group) {
            if r.visit_id.seq() != expected_seq {
                return Err(Error::format(
                    *row,
                    "visit_id",
                    format!(
                        "{} breaks the visit sequence of {pid} (expected visit {expected_seq:03})",
                        r.visit_id
                    ),
                ));
            }
        }
        let (_, head) = group[0];
        for (row, r) in &group[1..] {
            let same = [
                ("sex", r.sex == head.sex),
                ("ethnicity", r.ethnicity == head.ethnicity),
                ("language", r.language == head.language),
                ("insurance", r.insurance == head.insurance),
                ("city", r.city == head.city),
                ("state", r.state == head.state),
                ("zipcode", r.zipcode == head.zipcode),
                ("country", r.country == head.country),
            ];
            if let Some((column, _)) = same.iter().find(|(_, ok)| !ok) {
                return Err(Error::format(
                    *row,
                    *column,
                    format!("differs from an earlier row of {pid}"),
                ));
            }
        }

        let mut dob = None::<NaiveDate>;
        for (row, r) in &group {
            let latest = latest_birth_date(r.survey_date, r.age_at_visit)
                .ok_or_else(|| Error::format(*row, "age_at_visit", "age out of range"))?;
            dob = Some(dob.map_or(latest, |d| d.min(latest)));
        }
        let dob = dob.expect("at least one row per participant");
        for (row, r) in &group {
            if crate::domain::age_between(dob, r.survey_date) != r.age_at_visit {
                return Err(Error::format(
                    *row,
                    "age_at_visit",
                    format!("ages of {pid} are inconsistent across visits"),
                ));
            }
        }
        let created = group.iter().map(|(_, r)| r.survey_date).min().expect("non-empty");
        participants.push(Participant {
            participant_id: pid,
            name: format!("Imported {pid}"),
            first_name: "Imported".into(),
            last_name: pid.to_string(),
            date_of_birth: dob,
            sex: head.sex,
            ethnicity: head.ethnicity,
            language: head.language,
            insurance: head.insurance,
            city: head.city.clone(),
            state: head.state.clone(),
            zipcode: head.zipcode.clone(),
            country: head.country.clone(),
            primary_phone: "unknown".into(),
            secondary_phone: None,
            email: None,
            organization_id: org.clone(),
            created_at: midnight(created),
            version: 1,
        });

        for (row, r) in &group {
            let at = midnight(r.survey_date);
            let graded = r.left_grade.is_some() || r.right_grade.is_some();
            if r.letter_sent && !graded {
                return Err(Error::format(
                    *row,
                    "letter_sent",
                    "a letter cannot be sent for an ungraded visit",
                ));
            }
            if r.followup_count > 0 && !r.letter_sent {
                return Err(Error::format(
                    *row,
                    "followup_count",
                    "follow-ups require a sent letter",
                ));
            }
            let mut answers = AnswerSet::new(schema_version);
            if let Some(v) = r.has_diabetes {
                answers.answers.insert("has_diabetes".into(), AnswerValue::Bool(v));
            }
            if let Some(v) = &r.diabetes_type {
                answers
                    .answers
                    .insert("diabetes_type".into(), AnswerValue::Text(v.clone()));
            }
            if let Some(v) = r.diabetes_duration {
                answers
                    .answers
                    .insert("diabetes_duration".into(), AnswerValue::Number(v));
            }
            if let Some(v) = r.hypertension {
                answers.answers.insert("hypertension".into(), AnswerValue::Bool(v));
            }
            let target = if r.letter_sent {
                VisitState::Notified
            } else if graded {
                VisitState::Graded
            } else {
                VisitState::Surveyed
            };
            let history = VisitState::ALL
                .windows(2)
                .take_while(|w| w[0] < target)
                .map(|w| StateChange {
                    from: w[0],
                    to: w[1],
                    at,
                    actor: IMPORT_ACTOR.into(),
                })
                .collect();
            visits.push(Visit {
                visit_id: r.visit_id,
                participant_id: pid,
                organization_id: org.clone(),
                survey_taken_at: (!answers.is_empty()).then_some(at),
                answers,
                image_refs: Vec::new(),
                state: target,
                opened_at: at,
                graded_at: graded.then_some(at),
                requires_reissue: false,
                version: 1,
                history,
            });
            if graded {
                gradings.push(GradingRecord {
                    visit_id: r.visit_id,
                    left: r.left_grade.map(EyeGrade::new),
                    right: r.right_grade.map(EyeGrade::new),
                    grader_id: IMPORT_ACTOR.into(),
                    graded_at: at,
                    revision: 1,
                });
            }
            if r.letter_sent {
                dispatches.push(LetterDispatch {
                    visit_id: r.visit_id,
                    template_key: select_letter(overall_grade(r.left_grade, r.right_grade), head.language),
                    rendered_at: at,
                    sent: true,
                    sent_marked_at: Some(at),
                });
            }
            for _ in 0..r.followup_count {
                followups.push(FollowUp {
                    visit_id: r.visit_id,
                    channel: FollowUpChannel::PhoneCall,
                    comment: String::new(),
                    created_at: at,
                    staff_id: IMPORT_ACTOR.into(),
                });
            }
        }
    }

    let count = visits.len();
    if let Some(max) = participants.iter().map(|p| p.participant_id).max() {
        let counter = tables.last_participant_id.entry(org.clone()).or_insert(max);
        *counter = (*counter).max(max);
    }
    for p in participants {
        tables.participants.insert((org.clone(), p.participant_id), p);
    }
    for v in visits {
        tables.visits.insert((org.clone(), v.visit_id), v);
    }
    for g in gradings {
        tables.gradings.entry((org.clone(), g.visit_id)).or_default().push(g);
    }
    for d in dispatches {
        tables.dispatches.entry((org.clone(), d.visit_id)).or_default().push(d);
    }
    for f in followups {
        tables.followups.entry((org.clone(), f.visit_id)).or_default().push(f);
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn org() -> OrganizationId {
        OrganizationId::new("ucc").unwrap()
    }

    fn row(pid: &str, seq: u16, age: u32, date: &str) -> ExportRow {
        let participant_id: ParticipantId = pid.parse().unwrap();
        ExportRow {
            participant_id,
            visit_id: VisitId::new(participant_id, seq).unwrap(),
            age_at_visit: age,
            sex: Sex::Female,
            ethnicity: Ethnicity::White,
            language: Language::English,
            insurance: Insurance::Private,
            city: "Milwaukee, West".into(),
            state: "WI".into(),
            zipcode: "53204".into(),
            country: "USA".into(),
            survey_date: date.parse().unwrap(),
            has_diabetes: Some(true),
            diabetes_type: Some("type_2".into()),
            diabetes_duration: Some(2.5),
            hypertension: Some(false),
            left_grade: Some(DrGrade::MildNPDR),
            right_grade: None,
            letter_sent: true,
            followup_count: 2,
        }
    }

    #[test]
    fn empty_store_exports_header_only() {
        let csv = write_csv(&export_rows(&Tables::default(), None));
        assert_eq!(csv, format!("{}\n", EXPORT_COLUMNS.join(",")));
        assert_eq!(EXPORT_COLUMNS.len(), 20);
    }

    #[test]
    fn round_trip_and_sorting() {
        let rows = vec![
            row("AAB000", 1, 30, "2018-06-01"),
            row("AAA002", 2, 41, "2019-01-05"),
            row("AAA002", 1, 40, "2018-06-01"),
        ];
        let mut tables = Tables::default();
        assert_eq!(import_rows(&mut tables, &rows, &org(), "screening-v1").unwrap(), 3);
        tables.check_integrity().unwrap();
        let exported = write_csv(&export_rows(&tables, None));
        let ids: Vec<_> = parse_csv(&exported)
            .unwrap()
            .iter()
            .map(|r| r.visit_id.to_string())
            .collect();
        assert_eq!(ids, ["AAA002001", "AAA002002", "AAB000001"]);
        assert!(exported.contains("\"Milwaukee, West\""));

        let mut fresh = Tables::default();
        import_rows(&mut fresh, &parse_csv(&exported).unwrap(), &org(), "screening-v1").unwrap();
        assert_eq!(write_csv(&export_rows(&fresh, None)), exported);
        assert_eq!(fresh.last_participant_id[&org()].to_string(), "AAB000");
    }

    #[test]
    fn crlf_accepted() {
        let rows = vec![row("AAA001", 1, 50, "2018-06-01")];
        let lf = write_csv(&rows);
        let crlf = lf.replace('\n', "\r\n");
        assert_eq!(parse_csv(&crlf).unwrap(), rows);
    }

    #[test]
    fn header_with_nineteen_columns_rejected() {
        let header = EXPORT_COLUMNS[..19].join(",");
        assert!(matches!(
            parse_csv(&format!("{header}\n")),
            Err(Error::Format { row: 1, .. })
        ));
    }

    #[test]
    fn bad_grade_names_the_cell() {
        let csv = write_csv(&[row("AAA001", 1, 50, "2018-06-01")]).replace("mild-npdr", "very-bad");
        match parse_csv(&csv) {
            Err(e @ Error::Format { .. }) => assert_eq!(e.locator().as_deref(), Some("row 2, column left_grade")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistent_rows_rejected() {
        let mut second = row("AAA001", 2, 50, "2018-06-01");
        second.city = "Madison".into();
        let err = import_rows(
            &mut Tables::default(),
            &[row("AAA001", 1, 50, "2018-06-01"), second],
            &org(),
            "v",
        )
        .unwrap_err();
        assert_eq!(err.locator().as_deref(), Some("row 3, column city"));

        let gap = [row("AAA001", 2, 50, "2018-06-01")];
        assert!(import_rows(&mut Tables::default(), &gap, &org(), "v").is_err());

        let ages = [row("AAA001", 1, 50, "2018-06-01"), row("AAA001", 2, 40, "2018-07-01")];
        assert!(import_rows(&mut Tables::default(), &ages, &org(), "v").is_err());
    }

    #[test]
    fn birth_date_satisfies_every_visit() {
        // 40 on 2018-06-01 and 41 on 2019-01-05 pins the birthday between
        // 2018-01-06 and 2018-06-01 of the respective years.
        let rows = [row("AAA001", 1, 40, "2018-06-01"), row("AAA001", 2, 41, "2019-01-05")];
        let mut tables = Tables::default();
        import_rows(&mut tables, &rows, &org(), "v").unwrap();
        let p = tables.participant(&org(), "AAA001".parse().unwrap()).unwrap();
        assert_eq!(p.age_on("2018-06-01".parse().unwrap()), 40);
        assert_eq!(p.age_on("2019-01-05".parse().unwrap()), 41);
    }
}
