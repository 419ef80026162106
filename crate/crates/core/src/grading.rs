//! Per-eye diabetic retinopathy grading.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{ImageRef, OrganizationId, Sex};
use crate::error::{Error, Result};
use crate::ids::VisitId;
use crate::survey::AnswerSet;

/// Outcome a grader can pick for one eye. Each outcome has its own result
/// letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DrGrade {
    #[serde(rename = "no-apparent-dr")]
    NoApparentDR,
    #[serde(rename = "mild-npdr")]
    MildNPDR,
    #[serde(rename = "moderate-npdr")]
    ModerateNPDR,
    #[serde(rename = "severe-npdr")]
    SevereNPDR,
    #[serde(rename = "proliferative-dr")]
    ProliferativeDR,
    #[serde(rename = "macular-edema-suspected")]
    MacularEdemaSuspected,
    #[serde(rename = "other-findings")]
    OtherFindings,
    #[serde(rename = "ungradable")]
    Ungradable,
}

impl DrGrade {
    pub const ALL: [DrGrade; 8] = [
        DrGrade::NoApparentDR,
        DrGrade::MildNPDR,
        DrGrade::ModerateNPDR,
        DrGrade::SevereNPDR,
        DrGrade::ProliferativeDR,
        DrGrade::MacularEdemaSuspected,
        DrGrade::OtherFindings,
        DrGrade::Ungradable,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            DrGrade::NoApparentDR => "no-apparent-dr",
            DrGrade::MildNPDR => "mild-npdr",
            DrGrade::ModerateNPDR => "moderate-npdr",
            DrGrade::SevereNPDR => "severe-npdr",
            DrGrade::ProliferativeDR => "proliferative-dr",
            DrGrade::MacularEdemaSuspected => "macular-edema-suspected",
            DrGrade::OtherFindings => "other-findings",
            DrGrade::Ungradable => "ungradable",
        }
    }

    /// Clinical severity used to combine two eyes. `Ungradable` has none.
    ///
    /// no apparent DR < other findings < mild < moderate < suspected macular
    /// edema < severe < proliferative
    pub fn severity(self) -> Option<u8> {
        match self {
            DrGrade::NoApparentDR => Some(0),
            DrGrade::OtherFindings => Some(1),
            DrGrade::MildNPDR => Some(2),
            DrGrade::ModerateNPDR => Some(3),
            DrGrade::MacularEdemaSuspected => Some(4),
            DrGrade::SevereNPDR => Some(5),
            DrGrade::ProliferativeDR => Some(6),
            DrGrade::Ungradable => None,
        }
    }
}

impl fmt::Display for DrGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for DrGrade {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DrGrade::ALL
            .into_iter()
            .find(|g| g.slug() == s)
            .ok_or_else(|| Error::validation("grade", format!("unknown grade `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EyeGrade {
    pub grade: DrGrade,
    /// Additional findings noted by the grader.
    #[serde(default)]
    pub comment: String,
}

impl EyeGrade {
    pub fn new(grade: DrGrade) -> Self {
        Self {
            grade,
            comment: String::new(),
        }
    }
}

const MAX_COMMENT: usize = 2000;

/// What a grader submits: one or both eyes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingSubmission {
    #[serde(default)]
    pub left: Option<EyeGrade>,
    #[serde(default)]
    pub right: Option<EyeGrade>,
}

impl GradingSubmission {
    pub fn validate(&self) -> Result<()> {
        if self.left.is_none() && self.right.is_none() {
            return Err(Error::validation("left", "at least one eye must be graded"));
        }
        for (field, eye) in [("left.comment", &self.left), ("right.comment", &self.right)] {
            if eye.as_ref().is_some_and(|e| e.comment.chars().count() > MAX_COMMENT) {
                return Err(Error::validation(
                    field,
                    format!("longer than {MAX_COMMENT} characters"),
                ));
            }
        }
        Ok(())
    }
}

/// Edit of an existing grading. `revision` is the revision the grader
/// started from; a stale value is a conflict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradingEdit {
    pub revision: u32,
    #[serde(default)]
    pub left: Option<EyeGrade>,
    #[serde(default)]
    pub right: Option<EyeGrade>,
}

impl GradingEdit {
    pub fn submission(&self) -> GradingSubmission {
        GradingSubmission {
            left: self.left.clone(),
            right: self.right.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradingRecord {
    pub visit_id: VisitId,
    pub left: Option<EyeGrade>,
    pub right: Option<EyeGrade>,
    pub grader_id: String,
    pub graded_at: DateTime<Utc>,
    pub revision: u32,
}

impl GradingRecord {
    pub fn from_submission(
        visit_id: VisitId,
        submission: GradingSubmission,
        grader_id: &str,
        graded_at: DateTime<Utc>,
        revision: u32,
    ) -> Result<Self> {
        submission.validate()?;
        Ok(Self {
            visit_id,
            left: submission.left,
            right: submission.right,
            grader_id: grader_id.to_string(),
            graded_at,
            revision,
        })
    }

    pub fn overall_grade(&self) -> DrGrade {
        overall_grade(
            self.left.as_ref().map(|e| e.grade),
            self.right.as_ref().map(|e| e.grade),
        )
    }
}

/// Combines the two eyes into the one outcome that selects the letter: the
/// most severe gradable eye wins; `Ungradable` only when no eye is gradable.
pub fn overall_grade(left: Option<DrGrade>, right: Option<DrGrade>) -> DrGrade {
    [left, right]
        .into_iter()
        .flatten()
        .filter_map(|g| g.severity().map(|s| (s, g)))
        .max_by_key(|(s, _)| *s)
        .map(|(_, g)| g)
        .unwrap_or(DrGrade::Ungradable)
}

/// Everything a grader may see about a visit. Carries no name, contact
/// details, address or exact birth date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraderView {
    pub visit_id: VisitId,
    pub organization_id: OrganizationId,
    pub age_band: String,
    pub sex: Sex,
    pub answers: AnswerSet,
    pub image_refs: Vec<ImageRef>,
    pub survey_taken_at: Option<DateTime<Utc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<GradingRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use DrGrade::*;

    #[test]
    fn eight_distinct_slugs() {
        let slugs: std::collections::HashSet<_> = DrGrade::ALL.iter().map(|g| g.slug()).collect();
        assert_eq!(slugs.len(), 8);
        for g in DrGrade::ALL {
            assert_eq!(g.slug().parse::<DrGrade>().unwrap(), g);
            assert_eq!(serde_json::to_string(&g).unwrap(), format!("\"{}\"", g.slug()));
        }
    }

    #[test]
    fn overall_examples() {
        assert_eq!(overall_grade(Some(NoApparentDR), Some(SevereNPDR)), SevereNPDR);
        assert_eq!(overall_grade(Some(Ungradable), Some(MildNPDR)), MildNPDR);
        assert_eq!(overall_grade(Some(Ungradable), None), Ungradable);
        assert_eq!(overall_grade(Some(Ungradable), Some(Ungradable)), Ungradable);
        assert_eq!(
            overall_grade(Some(MacularEdemaSuspected), Some(ModerateNPDR)),
            MacularEdemaSuspected
        );
        assert_eq!(overall_grade(Some(OtherFindings), Some(NoApparentDR)), OtherFindings);
        assert_eq!(overall_grade(None, Some(ProliferativeDR)), ProliferativeDR);
    }

    #[test]
    fn submission_needs_an_eye() {
        let empty = GradingSubmission {
            left: None,
            right: None,
        };
        assert!(matches!(empty.validate(), Err(Error::Validation { .. })));
        let one = GradingSubmission {
            left: Some(EyeGrade::new(MildNPDR)),
            right: None,
        };
        assert!(one.validate().is_ok());
    }

    proptest! {
        #[test]
        fn overall_is_symmetric_and_dominates(a in 0usize..8, b in 0usize..8) {
            let (a, b) = (DrGrade::ALL[a], DrGrade::ALL[b]);
            let o = overall_grade(Some(a), Some(b));
            prop_assert_eq!(o, overall_grade(Some(b), Some(a)));
            prop_assert!(o == a || o == b);
            if let Some(s) = o.severity() {
                for g in [a, b] {
                    prop_assert!(g.severity().is_none_or(|gs| gs <= s));
                }
            } else {
                prop_assert!(a == Ungradable && b == Ungradable);
            }
        }
    }
}
