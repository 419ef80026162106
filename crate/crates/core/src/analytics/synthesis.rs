//! Seeded fixture generation: a cohort export whose marginals equal given
//! category counts and age summary, and satisfaction responses whose
//! per-theme count, mean and SD round to given targets.

use chrono::{Duration, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sample_sd, Hundredths, LanguageGroup, ResponseRecord, LIKERT_LEVELS};
use crate::domain::{Ethnicity, Insurance, Language, Sex};
use crate::error::{Error, Result};
use crate::grading::DrGrade;
use crate::ids::{first_participant_id, next_participant_id, VisitId};
use crate::storage::export::ExportRow;

pub const DEFAULT_SEED: u64 = 2019;

/// Target marginals of a cohort; every field's counts sum to `total`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTargets {
    pub total: u32,
    pub sex: Vec<(Sex, u32)>,
    pub ethnicity: Vec<(Ethnicity, u32)>,
    pub country: Vec<(String, u32)>,
    pub insurance: Vec<(Insurance, u32)>,
    pub language: Vec<(Language, u32)>,
    pub age_mean: Hundredths,
    pub age_min: u32,
    pub age_max: u32,
}

impl CohortTargets {
    /// The 865-participant profile of the screening program. Ethnicity and
    /// country counts list 850 and 823 people; the rest are recorded as
    /// `other` and `Unreported`.
    pub fn screening_program() -> Self {
        let country = [
            ("USA", 483),
            ("Mexico", 253),
            ("Myanmar (Burma)", 24),
            ("Laos", 21),
            ("Puerto Rico", 8),
            ("South America", 4),
            ("Other Central America", 14),
            ("Other Caribbean", 1),
            ("Other", 15),
            ("Unreported", 42),
        ];
        Self {
            total: 865,
            sex: vec![(Sex::Female, 530), (Sex::Male, 335)],
            ethnicity: vec![
                (Ethnicity::HispanicLatino, 317),
                (Ethnicity::BlackAfricanAmerican, 245),
                (Ethnicity::White, 117),
                (Ethnicity::AsianPacificIslander, 95),
                (Ethnicity::NativeAmerican, 76),
                (Ethnicity::Other, 15),
            ],
            country: country.iter().map(|(c, n)| (c.to_string(), *n)).collect(),
            insurance: vec![
                (Insurance::None, 341),
                (Insurance::Private, 224),
                (Insurance::Medicare, 58),
                (Insurance::Medicaid, 146),
                (Insurance::MedicareMedicaid, 44),
                (Insurance::Other, 52),
            ],
            language: vec![
                (Language::English, 502),
                (Language::Spanish, 265),
                (Language::Both, 13),
                (Language::Other, 85),
            ],
            age_mean: Hundredths(4991),
            age_min: 15,
            age_max: 89,
        }
    }

    fn check(&self) -> Result<()> {
        if self.total == 0 {
            return Err(Error::InfeasibleTargets("cohort total is zero".into()));
        }
        let sums = [
            ("sex", self.sex.iter().map(|c| c.1).sum::<u32>()),
            ("ethnicity", self.ethnicity.iter().map(|c| c.1).sum()),
            ("country", self.country.iter().map(|c| c.1).sum()),
            ("insurance", self.insurance.iter().map(|c| c.1).sum()),
            ("language", self.language.iter().map(|c| c.1).sum()),
        ];
        for (field, sum) in sums {
            if sum != self.total {
                return Err(Error::InfeasibleTargets(format!(
                    "{field} counts sum to {sum}, but the cohort has {} participants",
                    self.total
                )));
            }
        }
        if self.country.iter().any(|(c, _)| c.trim().is_empty()) {
            return Err(Error::InfeasibleTargets("empty country name".into()));
        }
        Ok(())
    }

    /// Integer age total whose mean rounds to the target, closest to it.
    fn age_sum(&self) -> Result<u64> {
        let (n, lo, hi) = (u64::from(self.total), u64::from(self.age_min), u64::from(self.age_max));
        let infeasible = || {
            Error::InfeasibleTargets(format!(
                "no {n} ages in {lo}-{hi} including both ends have mean {}",
                self.age_mean
            ))
        };
        if lo > hi || (n == 1 && lo != hi) {
            return Err(infeasible());
        }
        let (min_sum, max_sum) = if n == 1 {
            (lo, lo)
        } else {
            (lo + hi + lo * (n - 2), lo + hi + hi * (n - 2))
        };
        let ideal = (self.age_mean.0 * n + 50) / 100;
        let spread = n / 100 + 2;
        (ideal.saturating_sub(spread)..=ideal + spread)
            .filter(|s| (min_sum..=max_sum).contains(s))
            .filter(|&s| Hundredths::from_ratio(s, n).ok() == Some(self.age_mean))
            .min_by_key(|&s| (s as i64 * 100 - (self.age_mean.0 * n) as i64).abs())
            .ok_or_else(infeasible)
    }
}

/// Count, mean and SD a theme's responses must round to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LikertTarget {
    pub theme: String,
    pub count: u64,
    pub mean: Hundredths,
    pub sd: Hundredths,
}

/// Pins how many respondents of one language group give `value` on `theme`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTarget {
    pub theme: String,
    pub group: LanguageGroup,
    pub value: u8,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyTargets {
    pub invited: u64,
    pub respondents: Vec<(LanguageGroup, u64)>,
    pub themes: Vec<LikertTarget>,
    pub stratum: Option<StratumTarget>,
}

impl SurveyTargets {
    /// The 400-person satisfaction survey: 378 responses, eight themes, and
    /// 95 Spanish speakers strongly agreeing on the language theme.
    pub fn satisfaction_survey() -> Self {
        let theme = |name: &str, count, mean, sd| LikertTarget {
            theme: name.into(),
            count,
            mean: Hundredths(mean),
            sd: Hundredths(sd),
        };
        Self {
            invited: 400,
            respondents: vec![
                (LanguageGroup::English, 225),
                (LanguageGroup::Spanish, 103),
                (LanguageGroup::None, 50),
            ],
            themes: vec![
                theme("comfort", 376, 481, 48),
                theme("location", 370, 481, 49),
                theme("privacy", 358, 258, 154),
                theme("involvement", 368, 458, 70),
                theme("dissemination", 368, 477, 55),
                theme("connection", 368, 467, 64),
                theme("language", 338, 420, 98),
                theme("general_acceptance", 371, 478, 51),
            ],
            stratum: Some(StratumTarget {
                theme: "language".into(),
                group: LanguageGroup::Spanish,
                value: 5,
                count: 95,
            }),
        }
    }

    pub fn respondent_total(&self) -> u64 {
        self.respondents.iter().map(|r| r.1).sum()
    }
}

/// Finds response counts `[n1, .., n5]` for a Likert target.
///
/// Candidate sums `S` and sums of squares `Q` that round to the target are
/// tried closest first; for each, `n1` and `n2` are enumerated and the other
/// three counts follow from the two moment equations.
pub fn likert_counts(target: &LikertTarget) -> Result<[u64; LIKERT_LEVELS]> {
    let n = target.count;
    let infeasible = || {
        Error::InfeasibleTargets(format!(
            "{}: no {n} responses on 1-5 have mean {} and SD {}",
            target.theme, target.mean, target.sd
        ))
    };
    if n == 0 {
        return Err(infeasible());
    }
    let (m, t) = (target.mean.as_f64(), target.sd.as_f64());
    let mut candidates = Vec::new();
    let ideal_sum = (m * n as f64).round() as u64;
    for s in ideal_sum.saturating_sub(n / 100 + 2)..=ideal_sum + n / 100 + 2 {
        if !(n..=5 * n).contains(&s) || Hundredths::from_ratio(s, n)? != target.mean {
            continue;
        }
        let base = (s * s) as f64 / n as f64;
        let q_at = |sd: f64| sd.max(0.0).powi(2) * (n.saturating_sub(1)) as f64 + base;
        let lo = (q_at(t - 0.005).floor() as u64).saturating_sub(2).max(s);
        let hi = (q_at(t + 0.005).ceil() as u64 + 2).min(25 * n);
        for q in lo..=hi {
            if q % 2 != s % 2 || Hundredths::from_f64(sample_sd(n, s, q)) != target.sd {
                continue;
            }
            let miss = (s as f64 / n as f64 - m).abs() + (sample_sd(n, s, q) - t).abs();
            candidates.push((miss, s, q));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let n = n as i64;
    for (_, s, q) in candidates {
        let (s, q) = (s as i64, q as i64);
        for c1 in 0..=n {
            for c2 in 0..=n - c1 {
                let rest = n - c1 - c2;
                let b = s - c1 - 2 * c2 - 3 * rest; // c4 + 2 c5
                let c = q - c1 - 4 * c2 - 9 * rest; // 7 c4 + 16 c5
                if b < 0 || c < 0 || (c - 7 * b) % 2 != 0 {
                    continue;
                }
                let c5 = (c - 7 * b) / 2;
                let c4 = b - 2 * c5;
                let c3 = rest - c4 - c5;
                if c5 >= 0 && c4 >= 0 && c3 >= 0 {
                    return Ok([c1, c2, c3, c4, c5].map(|x| x as u64));
                }
            }
        }
    }
    Err(infeasible())
}

const PLACES: [(&str, &str, &str); 4] = [
    ("Milwaukee", "WI", "53204"),
    ("Milwaukee", "WI", "53215"),
    ("West Allis", "WI", "53214"),
    ("Racine", "WI", "53403"),
];

const DIABETES_TYPES: [&str; 4] = ["type_2", "type_2", "type_1", "unsure"];

fn spread<T: Clone>(counts: &[(T, u32)], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut out: Vec<T> = counts
        .iter()
        .flat_map(|(v, n)| std::iter::repeat_n(v.clone(), *n as usize))
        .collect();
    out.shuffle(rng);
    out
}

/// Ages skewed toward the older end, including both range ends, with the
/// exact total that makes the mean round to the target.
fn ages(targets: &CohortTargets, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    let total = targets.age_sum()?;
    let (lo, hi) = (targets.age_min, targets.age_max);
    let n = targets.total as usize;
    if n == 1 {
        return Ok(vec![lo]);
    }
    let width = f64::from(hi - lo).max(1.0);
    let mode =
        ((3.0 * targets.age_mean.as_f64() - f64::from(lo) - f64::from(hi) - f64::from(lo)) / width).clamp(0.0, 1.0);
    let mut ages = vec![lo, hi];
    while ages.len() < n {
        let u: f64 = rng.gen();
        let x = if u < mode {
            (u * mode).sqrt()
        } else {
            1.0 - ((1.0 - u) * (1.0 - mode)).sqrt()
        };
        ages.push(lo + (x * width).round() as u32);
    }
    let mut sum: u64 = ages.iter().map(|&a| u64::from(a)).sum();
    while sum != total {
        let i = rng.gen_range(2..n);
        if sum < total && ages[i] < hi {
            ages[i] += 1;
            sum += 1;
        } else if sum > total && ages[i] > lo {
            ages[i] -= 1;
            sum -= 1;
        }
    }
    ages.shuffle(rng);
    Ok(ages)
}

fn grade(rng: &mut ChaCha8Rng) -> DrGrade {
    match rng.gen_range(0..100) {
        0..=61 => DrGrade::NoApparentDR,
        62..=71 => DrGrade::OtherFindings,
        72..=81 => DrGrade::MildNPDR,
        82..=87 => DrGrade::ModerateNPDR,
        88..=90 => DrGrade::MacularEdemaSuspected,
        91..=92 => DrGrade::SevereNPDR,
        93 => DrGrade::ProliferativeDR,
        _ => DrGrade::Ungradable,
    }
}

/// One visit per participant, ids from `AAA001` on, in export order.
pub fn synthesize_cohort(targets: &CohortTargets, seed: u64) -> Result<Vec<ExportRow>> {
    targets.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ages = ages(targets, &mut rng)?;
    let sexes = spread(&targets.sex, &mut rng);
    let ethnicities = spread(&targets.ethnicity, &mut rng);
    let countries = spread(&targets.country, &mut rng);
    let insurances = spread(&targets.insurance, &mut rng);
    let languages = spread(&targets.language, &mut rng);
    let first_day = NaiveDate::from_ymd_opt(2017, 6, 1).expect("valid date");
    let days = (NaiveDate::from_ymd_opt(2019, 6, 30).expect("valid date") - first_day).num_days();

    let mut rows = Vec::with_capacity(targets.total as usize);
    let mut pid = first_participant_id();
    for i in 0..targets.total as usize {
        if i > 0 {
            pid = next_participant_id(pid)?;
        }
        let (city, state, zipcode) = PLACES[rng.gen_range(0..PLACES.len())];
        let has_diabetes = rng.gen_bool(0.45);
        let graded = rng.gen_bool(0.9);
        let letter_sent = graded && rng.gen_bool(0.85);
        rows.push(ExportRow {
            participant_id: pid,
            visit_id: VisitId::new(pid, 1)?,
            age_at_visit: ages[i],
            sex: sexes[i],
            ethnicity: ethnicities[i],
            language: languages[i],
            insurance: insurances[i],
            city: city.into(),
            state: state.into(),
            zipcode: zipcode.into(),
            country: countries[i].clone(),
            survey_date: first_day + Duration::days(rng.gen_range(0..=days)),
            has_diabetes: Some(has_diabetes),
            diabetes_type: has_diabetes.then(|| DIABETES_TYPES[rng.gen_range(0..DIABETES_TYPES.len())].to_string()),
            diabetes_duration: has_diabetes.then(|| f64::from(rng.gen_range(0..60u32)) / 2.0),
            hypertension: Some(rng.gen_bool(0.4)),
            left_grade: graded.then(|| grade(&mut rng)),
            right_grade: graded.then(|| grade(&mut rng)),
            letter_sent,
            followup_count: if letter_sent { rng.gen_range(0..=3) } else { 0 },
        });
    }
    Ok(rows)
}

/// Satisfaction responses over a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SurveyFixture {
    pub invited: Vec<VisitId>,
    pub responses: Vec<ResponseRecord>,
}

fn expand(counts: &[u64; LIKERT_LEVELS]) -> Vec<u8> {
    (1u8..)
        .zip(counts)
        .flat_map(|(v, &c)| std::iter::repeat_n(v, c as usize))
        .collect()
}

/// Picks respondents by registered language, then assigns every theme's
/// answers. Respondents who skip a theme get a row without a value.
pub fn synthesize_responses(cohort: &[ExportRow], targets: &SurveyTargets, seed: u64) -> Result<SurveyFixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed);
    let respondent_total = targets.respondent_total();
    if respondent_total > targets.invited {
        return Err(Error::InfeasibleTargets(format!(
            "{respondent_total} respondents out of {} invited",
            targets.invited
        )));
    }
    if targets.invited > cohort.len() as u64 {
        return Err(Error::InfeasibleTargets(format!(
            "{} invited but the cohort has {} visits",
            targets.invited,
            cohort.len()
        )));
    }

    let mut chosen: Vec<(VisitId, LanguageGroup)> = Vec::new();
    for &(group, want) in &targets.respondents {
        let mut pool: Vec<VisitId> = cohort
            .iter()
            .filter(|r| LanguageGroup::from(r.language) == group)
            .map(|r| r.visit_id)
            .collect();
        if (pool.len() as u64) < want {
            return Err(Error::InfeasibleTargets(format!(
                "{want} {group} respondents wanted, the cohort has {}",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        chosen.extend(pool.into_iter().take(want as usize).map(|v| (v, group)));
    }
    chosen.sort();

    let mut others: Vec<VisitId> = cohort
        .iter()
        .map(|r| r.visit_id)
        .filter(|v| chosen.binary_search_by_key(v, |c| c.0).is_err())
        .collect();
    others.shuffle(&mut rng);
    let mut invited: Vec<VisitId> = chosen.iter().map(|c| c.0).collect();
    invited.extend(others.into_iter().take((targets.invited - respondent_total) as usize));
    invited.sort();

    // answers[i][t] is respondent i's answer to theme t.
    let mut answers: Vec<Vec<Option<u8>>> = vec![vec![None; targets.themes.len()]; chosen.len()];
    for (t, theme) in targets.themes.iter().enumerate() {
        if theme.count > respondent_total {
            return Err(Error::InfeasibleTargets(format!(
                "{}: {} answers from {respondent_total} respondents",
                theme.theme, theme.count
            )));
        }
        let counts = likert_counts(theme)?;
        let stratum = targets.stratum.as_ref().filter(|s| s.theme == theme.theme);
        let assignment = match stratum {
            None => {
                let mut order: Vec<usize> = (0..chosen.len()).collect();
                order.shuffle(&mut rng);
                let mut values = expand(&counts);
                values.shuffle(&mut rng);
                order.into_iter().zip(values).collect::<Vec<_>>()
            }
            Some(s) => stratified_assignment(&chosen, &counts, s, &mut rng)?,
        };
        for (i, v) in assignment {
            answers[i][t] = Some(v);
        }
    }

    let mut responses = Vec::with_capacity(chosen.len() * targets.themes.len());
    for ((visit_id, group), row) in chosen.iter().zip(&answers) {
        for (theme, value) in targets.themes.iter().zip(row) {
            responses.push(ResponseRecord {
                visit_id: *visit_id,
                theme: theme.theme.clone(),
                value: *value,
                preferred_language: Some(*group),
            });
        }
    }
    Ok(SurveyFixture { invited, responses })
}

/// Gives exactly `stratum.count` members of the stratum group the pinned
/// value, a few more members other values, and the rest to everyone else.
fn stratified_assignment(
    chosen: &[(VisitId, LanguageGroup)],
    counts: &[u64; LIKERT_LEVELS],
    stratum: &StratumTarget,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, u8)>> {
    if !(1..=5).contains(&stratum.value) {
        return Err(Error::InfeasibleTargets(format!(
            "value {} is not on the 1-5 scale",
            stratum.value
        )));
    }
    let vi = usize::from(stratum.value) - 1;
    let n: u64 = counts.iter().sum();
    let (mut group, mut rest): (Vec<usize>, Vec<usize>) =
        (0..chosen.len()).partition(|&i| chosen[i].1 == stratum.group);
    let (g, k) = (group.len() as u64, stratum.count);
    let infeasible = |why: &str| Error::InfeasibleTargets(format!("{} stratum: {why}", stratum.theme));
    if counts[vi] < k {
        return Err(infeasible("fewer answers with the pinned value than the stratum needs"));
    }
    if g < k {
        return Err(infeasible("the group has fewer respondents than the stratum count"));
    }
    // Group members answering with another value.
    let extra_min = (n - k).saturating_sub(rest.len() as u64);
    let extra_max = (g - k).min(n - counts[vi]);
    if extra_min > extra_max {
        return Err(infeasible("the remaining answers do not fit the other respondents"));
    }
    let extra = ((g - k).div_ceil(2)).clamp(extra_min, extra_max);

    let mut remaining = *counts;
    remaining[vi] -= k;
    let mut group_values = vec![stratum.value; k as usize];
    // Prefer values nearest the neutral midpoint for the group's other answers.
    let mut preference: Vec<usize> = (0..LIKERT_LEVELS).filter(|&i| i != vi).collect();
    preference.sort_by_key(|&i| (i as i64 - 2).abs());
    for _ in 0..extra {
        let i = *preference
            .iter()
            .find(|&&i| remaining[i] > 0)
            .expect("extra <= answers without the pinned value");
        remaining[i] -= 1;
        group_values.push(i as u8 + 1);
    }
    let mut rest_values = expand(&remaining);
    debug_assert!(rest_values.iter().filter(|&&v| v == stratum.value).count() as u64 == counts[vi] - k);

    group.shuffle(rng);
    rest.shuffle(rng);
    group_values.shuffle(rng);
    rest_values.shuffle(rng);
    Ok(group
        .into_iter()
        .zip(group_values)
        .chain(rest.into_iter().zip(rest_values))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{likert_from_counts, stratify};
    use std::collections::HashMap;

    #[test]
    fn every_survey_target_is_reachable() {
        for target in SurveyTargets::satisfaction_survey().themes {
            let counts = likert_counts(&target).unwrap();
            let s = likert_from_counts(&counts).unwrap();
            assert_eq!(
                (s.count, s.mean, s.sd),
                (target.count, target.mean, target.sd),
                "{}",
                target.theme
            );
        }
    }

    #[test]
    fn impossible_likert_targets_are_reported() {
        let target = LikertTarget {
            theme: "x".into(),
            count: 10,
            mean: Hundredths(500),
            sd: Hundredths(100),
        };
        assert!(matches!(likert_counts(&target), Err(Error::InfeasibleTargets(_))));
        let target = LikertTarget {
            theme: "x".into(),
            count: 0,
            mean: Hundredths(300),
            sd: Hundredths(0),
        };
        assert!(likert_counts(&target).is_err());
    }

    #[test]
    fn inconsistent_cohort_totals_are_reported() {
        let mut targets = CohortTargets::screening_program();
        targets.language = vec![(Language::English, 800)];
        let err = synthesize_cohort(&targets, 1).unwrap_err();
        assert!(
            matches!(err, Error::InfeasibleTargets(ref m) if m.contains("language")),
            "{err}"
        );
    }

    #[test]
    fn cohort_is_deterministic() {
        let targets = CohortTargets::screening_program();
        assert_eq!(
            synthesize_cohort(&targets, 7).unwrap(),
            synthesize_cohort(&targets, 7).unwrap()
        );
        assert_ne!(
            synthesize_cohort(&targets, 7).unwrap(),
            synthesize_cohort(&targets, 8).unwrap()
        );
    }

    #[test]
    fn language_stratum_is_exact() {
        let cohort = synthesize_cohort(&CohortTargets::screening_program(), DEFAULT_SEED).unwrap();
        let survey = SurveyTargets::satisfaction_survey();
        let fixture = synthesize_responses(&cohort, &survey, DEFAULT_SEED).unwrap();
        let s = stratify(&fixture.responses, "language", &HashMap::new()).unwrap();
        assert_eq!(s.groups[&LanguageGroup::Spanish][4], 95);
        assert_eq!(s.total(), 338);
        assert_eq!(fixture.invited.len(), 400);
        // Stated preferences agree with the registered language.
        let langs: HashMap<_, _> = cohort.iter().map(|r| (r.visit_id, r.language)).collect();
        for r in &fixture.responses {
            assert_eq!(Some(LanguageGroup::from(langs[&r.visit_id])), r.preferred_language);
        }
    }
}
