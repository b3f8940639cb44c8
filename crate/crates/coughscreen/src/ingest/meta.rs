//! De-identified sample metadata: schema, enumerations, and validation.
//!
//! Submissions arrive as flat-ish JSON objects. Every key must be part of
//! the schema below and every value must come from a closed vocabulary (or
//! match a strict code shape). Free-form text is rejected wholesale so that
//! nothing identifying can ride along with an upload. Validation collects
//! *all* violations before failing, so a client can fix a submission in one
//! round trip.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Allowed `age_bucket` values. Ages above 89 must use the open-ended
/// top bucket; a raw age is never accepted.
pub const AGE_BUCKETS: [&str; 10] = [
    "0-9", "10-19", "20-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-89", "90+",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    NonBinary,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comorbidity {
    Cardiovascular,
    Pulmonary,
    Diabetes,
    Hypertension,
    Other,
}

/// Outcome of a clinical test, including "not performed" states so the
/// absence of a result is explicit rather than a missing key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestResult {
    Positive,
    Negative,
    Pending,
    Absent,
}

/// Optional clinical block for samples collected in a hospital setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalInfo {
    pub rt_pcr: TestResult,
    pub serology: TestResult,
    pub thorax_rx_available: bool,
    pub ct_available: bool,
    pub icu_admission: bool,
    /// Treatment codes (same shape rules as medication codes).
    #[serde(default)]
    pub treatment: Vec<String>,
}

/// Validated, de-identified metadata attached to one audio sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub age_bucket: String,
    pub gender: Gender,
    /// ISO-639-style lowercase language code (2-3 letters).
    pub mother_tongue: String,
    /// Coarse geographic code from the configured allowlist.
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub days_since_onset: Option<u32>,
    #[serde(default)]
    pub comorbidities: Vec<Comorbidity>,
    /// Medication codes; shape-checked, never free text.
    #[serde(default)]
    pub concomitant_medication: Vec<String>,
    /// Optional client-generated opaque pseudonym. Lets a client link its
    /// own uploads across days without the server learning anything.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudonym: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clinical: Option<ClinicalInfo>,
}

/// One reason a submission failed de-identification checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "code")]
pub enum Violation {
    /// A raw `age` key with a value above 89 — must use the `90+` bucket.
    AgeAbove89MustBeBucketed { value: String },
    /// A key outside the schema; treated as potentially identifying.
    UnknownIdentifyingField { key: String },
    /// `region` not present in the configured coarse allowlist.
    RegionNotAllowed { region: String },
    /// A value that should be a closed-vocabulary code looks like free text.
    FreeTextNotAllowed { field: String },
    /// Wrong type or a value outside the field's enumeration.
    InvalidValue { field: String, expected: String },
    /// A required schema field is absent.
    MissingField { field: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AgeAbove89MustBeBucketed { value } => {
                write!(f, "raw age {value} above 89 must be reported as the 90+ bucket")
            }
            Violation::UnknownIdentifyingField { key } => {
                write!(f, "unknown field `{key}` is not part of the schema")
            }
            Violation::RegionNotAllowed { region } => {
                write!(f, "region `{region}` is not in the allowlist")
            }
            Violation::FreeTextNotAllowed { field } => {
                write!(f, "field `{field}` must be a code, not free text")
            }
            Violation::InvalidValue { field, expected } => {
                write!(f, "field `{field}` must be {expected}")
            }
            Violation::MissingField { field } => write!(f, "required field `{field}` is missing"),
        }
    }
}

const KNOWN_KEYS: [&str; 9] = [
    "age_bucket",
    "gender",
    "mother_tongue",
    "region",
    "days_since_onset",
    "comorbidities",
    "concomitant_medication",
    "pseudonym",
    "clinical",
];

const CLINICAL_KEYS: [&str; 6] = [
    "rt_pcr",
    "serology",
    "thorax_rx_available",
    "ct_available",
    "icu_admission",
    "treatment",
];

/// 2-3 lowercase ASCII letters, e.g. `pt`, `en`, `deu`.
fn is_language_code(s: &str) -> bool {
    (2..=3).contains(&s.len()) && s.bytes().all(|b| b.is_ascii_lowercase())
}

/// Lowercase alphanumeric code with optional single dashes, max 32 chars.
/// Rejects anything with spaces, capitals, or punctuation — i.e. free text.
fn is_opaque_code(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 64
        && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
        && !s.starts_with('-')
        && !s.ends_with('-')
}

fn expect_str<'a>(field: &str, value: &'a Value, violations: &mut Vec<Violation>) -> Option<&'a str> {
    match value.as_str() {
        Some(s) => Some(s),
        None => {
            violations.push(Violation::InvalidValue {
                field: field.to_string(),
                expected: "a string".to_string(),
            });
            None
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(
    field: &str,
    value: &Value,
    expected: &str,
    violations: &mut Vec<Violation>,
) -> Option<T> {
    match serde_json::from_value::<T>(value.clone()) {
        Ok(v) => Some(v),
        Err(_) => {
            violations.push(Violation::InvalidValue {
                field: field.to_string(),
                expected: expected.to_string(),
            });
            None
        }
    }
}

fn parse_code_list(field: &str, value: &Value, violations: &mut Vec<Violation>) -> Vec<String> {
    let Some(items) = value.as_array() else {
        violations.push(Violation::InvalidValue {
            field: field.to_string(),
            expected: "an array of code strings".to_string(),
        });
        return Vec::new();
    };
    let mut codes = Vec::new();
    for item in items {
        match item.as_str() {
            Some(s) if is_opaque_code(s) => codes.push(s.to_string()),
            _ => violations.push(Violation::FreeTextNotAllowed { field: field.to_string() }),
        }
    }
    codes
}

fn parse_clinical(value: &Value, violations: &mut Vec<Violation>) -> Option<ClinicalInfo> {
    let Some(obj) = value.as_object() else {
        violations.push(Violation::InvalidValue {
            field: "clinical".to_string(),
            expected: "an object".to_string(),
        });
        return None;
    };
    for key in obj.keys() {
        if !CLINICAL_KEYS.contains(&key.as_str()) {
            violations.push(Violation::UnknownIdentifyingField { key: format!("clinical.{key}") });
        }
    }
    let before = violations.len();
    let rt_pcr = match obj.get("rt_pcr") {
        Some(v) => parse_enum::<TestResult>(
            "clinical.rt_pcr",
            v,
            "one of positive, negative, pending, absent",
            violations,
        ),
        None => {
            violations.push(Violation::MissingField { field: "clinical.rt_pcr".to_string() });
            None
        }
    };
    let serology = match obj.get("serology") {
        Some(v) => parse_enum::<TestResult>(
            "clinical.serology",
            v,
            "one of positive, negative, pending, absent",
            violations,
        ),
        None => {
            violations.push(Violation::MissingField { field: "clinical.serology".to_string() });
            None
        }
    };
    let mut flag = |name: &str| -> Option<bool> {
        match obj.get(name) {
            Some(Value::Bool(b)) => Some(*b),
            Some(_) => {
                violations.push(Violation::InvalidValue {
                    field: format!("clinical.{name}"),
                    expected: "a boolean".to_string(),
                });
                None
            }
            None => {
                violations.push(Violation::MissingField { field: format!("clinical.{name}") });
                None
            }
        }
    };
    let thorax = flag("thorax_rx_available");
    let ct = flag("ct_available");
    let icu = flag("icu_admission");
    let treatment = match obj.get("treatment") {
        Some(v) => parse_code_list("clinical.treatment", v, violations),
        None => Vec::new(),
    };
    if violations.len() > before {
        return None;
    }
    Some(ClinicalInfo {
        rt_pcr: rt_pcr?,
        serology: serology?,
        thorax_rx_available: thorax?,
        ct_available: ct?,
        icu_admission: icu?,
        treatment,
    })
}

/// Validates a raw key-value submission against the de-identification
/// schema. Returns the parsed metadata, or *every* violation found.
pub fn validate_deidentification(
    raw: &Value,
    region_allowlist: &BTreeSet<String>,
) -> Result<SampleMetadata, Vec<Violation>> {
    let mut violations = Vec::new();
    let Some(obj) = raw.as_object() else {
        return Err(vec![Violation::InvalidValue {
            field: "metadata".to_string(),
            expected: "a JSON object".to_string(),
        }]);
    };

    for (key, value) in obj {
        if KNOWN_KEYS.contains(&key.as_str()) {
            continue;
        }
        // A raw age key gets the dedicated violation when the value is
        // above the bucketing cut-off; any other unexpected key is flagged
        // as potentially identifying.
        if key == "age" {
            let age = match value {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            match age {
                Some(a) if a > 89.0 => violations.push(Violation::AgeAbove89MustBeBucketed {
                    value: value_display(value),
                }),
                _ => violations.push(Violation::UnknownIdentifyingField { key: key.clone() }),
            }
        } else {
            violations.push(Violation::UnknownIdentifyingField { key: key.clone() });
        }
    }

    let age_bucket = match obj.get("age_bucket") {
        Some(v) => expect_str("age_bucket", v, &mut violations).and_then(|s| {
            if AGE_BUCKETS.contains(&s) {
                Some(s.to_string())
            } else {
                violations.push(Violation::InvalidValue {
                    field: "age_bucket".to_string(),
                    expected: format!("one of {}", AGE_BUCKETS.join(", ")),
                });
                None
            }
        }),
        None => {
            violations.push(Violation::MissingField { field: "age_bucket".to_string() });
            None
        }
    };

    let gender = match obj.get("gender") {
        Some(v) => parse_enum::<Gender>(
            "gender",
            v,
            "one of female, male, non_binary, undisclosed",
            &mut violations,
        ),
        None => {
            violations.push(Violation::MissingField { field: "gender".to_string() });
            None
        }
    };

    let mother_tongue = match obj.get("mother_tongue") {
        Some(v) => expect_str("mother_tongue", v, &mut violations).and_then(|s| {
            if is_language_code(s) {
                Some(s.to_string())
            } else {
                violations.push(Violation::FreeTextNotAllowed {
                    field: "mother_tongue".to_string(),
                });
                None
            }
        }),
        None => {
            violations.push(Violation::MissingField { field: "mother_tongue".to_string() });
            None
        }
    };

    let region = match obj.get("region") {
        Some(v) => expect_str("region", v, &mut violations).and_then(|s| {
            if region_allowlist.contains(s) {
                Some(s.to_string())
            } else {
                violations.push(Violation::RegionNotAllowed { region: s.to_string() });
                None
            }
        }),
        None => {
            violations.push(Violation::MissingField { field: "region".to_string() });
            None
        }
    };

    let days_since_onset = match obj.get("days_since_onset") {
        Some(Value::Null) | None => None,
        Some(v) => match v.as_u64() {
            Some(d) if d <= u64::from(u32::MAX) => Some(d as u32),
            _ => {
                violations.push(Violation::InvalidValue {
                    field: "days_since_onset".to_string(),
                    expected: "a non-negative integer".to_string(),
                });
                None
            }
        },
    };

    let comorbidities = match obj.get("comorbidities") {
        Some(Value::Array(items)) => {
            let mut list = Vec::new();
            for item in items {
                if let Some(c) = parse_enum::<Comorbidity>(
                    "comorbidities",
                    item,
                    "one of cardiovascular, pulmonary, diabetes, hypertension, other",
                    &mut violations,
                ) {
                    list.push(c);
                }
            }
            list
        }
        Some(_) => {
            violations.push(Violation::InvalidValue {
                field: "comorbidities".to_string(),
                expected: "an array of comorbidity codes".to_string(),
            });
            Vec::new()
        }
        None => Vec::new(),
    };

    let concomitant_medication = match obj.get("concomitant_medication") {
        Some(v) => parse_code_list("concomitant_medication", v, &mut violations),
        None => Vec::new(),
    };

    let pseudonym = match obj.get("pseudonym") {
        Some(Value::Null) | None => None,
        Some(v) => expect_str("pseudonym", v, &mut violations).and_then(|s| {
            if is_opaque_code(s) {
                Some(s.to_string())
            } else {
                violations.push(Violation::FreeTextNotAllowed { field: "pseudonym".to_string() });
                None
            }
        }),
    };

    let clinical = match obj.get("clinical") {
        Some(Value::Null) | None => None,
        Some(v) => parse_clinical(v, &mut violations),
    };

    if !violations.is_empty() {
        return Err(violations);
    }
    Ok(SampleMetadata {
        age_bucket: age_bucket.expect("validated"),
        gender: gender.expect("validated"),
        mother_tongue: mother_tongue.expect("validated"),
        region: region.expect("validated"),
        days_since_onset,
        comorbidities,
        concomitant_medication,
        pseudonym,
        clinical,
    })
}

fn value_display(value: &Value) -> String {
    match value {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn allowlist() -> BTreeSet<String> {
        ["europe", "americas"].iter().map(|s| s.to_string()).collect()
    }

    fn valid_submission() -> Value {
        json!({
            "age_bucket": "40-49",
            "gender": "female",
            "mother_tongue": "pt",
            "region": "europe",
            "days_since_onset": 3,
            "comorbidities": ["hypertension"],
            "concomitant_medication": ["c09aa05"],
        })
    }

    #[test]
    fn valid_submission_parses() {
        let meta = validate_deidentification(&valid_submission(), &allowlist()).unwrap();
        assert_eq!(meta.age_bucket, "40-49");
        assert_eq!(meta.gender, Gender::Female);
        assert_eq!(meta.days_since_onset, Some(3));
        assert_eq!(meta.comorbidities, vec![Comorbidity::Hypertension]);
        assert_eq!(meta.concomitant_medication, vec!["c09aa05".to_string()]);
        assert!(meta.pseudonym.is_none());
        assert!(meta.clinical.is_none());
    }

    #[test]
    fn raw_age_above_89_is_named_violation() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("age".into(), json!("92"));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::AgeAbove89MustBeBucketed { value: "92".to_string() }]
        );
    }

    #[test]
    fn raw_age_below_cutoff_is_unknown_field() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("age".into(), json!(35));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(violations, vec![Violation::UnknownIdentifyingField { key: "age".to_string() }]);
    }

    #[test]
    fn unknown_key_is_flagged() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("patient_name".into(), json!("maria"));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::UnknownIdentifyingField { key: "patient_name".to_string() }]
        );
    }

    #[test]
    fn all_violations_reported_at_once() {
        let raw = json!({
            "age": 92,
            "patient_name": "maria",
            "age_bucket": "40-49",
            "gender": "female",
            "mother_tongue": "Portuguese is my native language",
            "region": "narnia",
        });
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert!(violations
            .contains(&Violation::AgeAbove89MustBeBucketed { value: "92".to_string() }));
        assert!(violations
            .contains(&Violation::UnknownIdentifyingField { key: "patient_name".to_string() }));
        assert!(violations
            .contains(&Violation::FreeTextNotAllowed { field: "mother_tongue".to_string() }));
        assert!(violations.contains(&Violation::RegionNotAllowed { region: "narnia".to_string() }));
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn missing_required_fields_all_reported() {
        let violations = validate_deidentification(&json!({}), &allowlist()).unwrap_err();
        let missing: Vec<_> = violations
            .iter()
            .filter_map(|v| match v {
                Violation::MissingField { field } => Some(field.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(missing, vec!["age_bucket", "gender", "mother_tongue", "region"]);
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn free_text_medication_rejected() {
        let mut raw = valid_submission();
        raw.as_object_mut()
            .unwrap()
            .insert("concomitant_medication".into(), json!(["Aspirin twice a day"]));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::FreeTextNotAllowed { field: "concomitant_medication".to_string() }]
        );
    }

    #[test]
    fn top_age_bucket_is_accepted() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("age_bucket".into(), json!("90+"));
        let meta = validate_deidentification(&raw, &allowlist()).unwrap();
        assert_eq!(meta.age_bucket, "90+");
    }

    #[test]
    fn bad_age_bucket_rejected() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("age_bucket".into(), json!("40-45"));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert!(matches!(&violations[0], Violation::InvalidValue { field, .. } if field == "age_bucket"));
    }

    #[test]
    fn clinical_block_round_trips() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert(
            "clinical".into(),
            json!({
                "rt_pcr": "positive",
                "serology": "absent",
                "thorax_rx_available": true,
                "ct_available": false,
                "icu_admission": false,
                "treatment": ["j05ax"],
            }),
        );
        let meta = validate_deidentification(&raw, &allowlist()).unwrap();
        let clinical = meta.clinical.clone().expect("clinical block");
        assert_eq!(clinical.rt_pcr, TestResult::Positive);
        assert_eq!(clinical.serology, TestResult::Absent);
        assert!(clinical.thorax_rx_available);
        assert_eq!(clinical.treatment, vec!["j05ax".to_string()]);
        // And the parsed struct serializes back without loss.
        let text = serde_json::to_string(&meta).unwrap();
        let back: SampleMetadata = serde_json::from_str(&text).unwrap();
        assert_eq!(back, meta);
    }

    #[test]
    fn clinical_free_text_key_rejected() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert(
            "clinical".into(),
            json!({
                "rt_pcr": "pending",
                "serology": "pending",
                "thorax_rx_available": false,
                "ct_available": false,
                "icu_admission": false,
                "doctor_notes": "patient reports fatigue",
            }),
        );
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::UnknownIdentifyingField { key: "clinical.doctor_notes".to_string() }]
        );
    }

    #[test]
    fn pseudonym_shape_checked() {
        let mut raw = valid_submission();
        raw.as_object_mut().unwrap().insert("pseudonym".into(), json!("a3f9-0b7c-11aa"));
        let meta = validate_deidentification(&raw, &allowlist()).unwrap();
        assert_eq!(meta.pseudonym.as_deref(), Some("a3f9-0b7c-11aa"));

        raw.as_object_mut().unwrap().insert("pseudonym".into(), json!("Maria from Porto"));
        let violations = validate_deidentification(&raw, &allowlist()).unwrap_err();
        assert_eq!(
            violations,
            vec![Violation::FreeTextNotAllowed { field: "pseudonym".to_string() }]
        );
    }

    #[test]
    fn violation_serialization_uses_code_tag() {
        let v = Violation::AgeAbove89MustBeBucketed { value: "92".to_string() };
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.contains("\"code\":\"AgeAbove89MustBeBucketed\""));
    }
}
