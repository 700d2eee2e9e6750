//! System profiles: a (autonomy, alignment) pair for each of the twelve
//! aspects, the JSON profile format and the built-in assessment dataset.

use std::collections::BTreeMap;
use std::fmt;
use std::marker::PhantomData;

use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::error::ProfileError;
use crate::taxonomy::{AlignmentLevel, AspectConfig, AspectId, AutonomyLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    GeneralPurpose,
    CentralController,
    RoleAgent,
    WorkflowAutomation,
    Unlabeled,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Category::GeneralPurpose => "GeneralPurpose",
            Category::CentralController => "CentralController",
            Category::RoleAgent => "RoleAgent",
            Category::WorkflowAutomation => "WorkflowAutomation",
            Category::Unlabeled => "Unlabeled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub name: String,
    pub category: Category,
    pub aspects: BTreeMap<AspectId, AspectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl SystemProfile {
    /// Profile with every aspect set to the same configuration.
    pub fn uniform(name: impl Into<String>, config: AspectConfig) -> Self {
        Self {
            name: name.into(),
            category: Category::Unlabeled,
            aspects: AspectId::ALL.iter().map(|&a| (a, config)).collect(),
            notes: None,
        }
    }

    /// Builds a profile from 24 ordinals laid out as (au, al) pairs in column order.
    pub fn from_levels(name: impl Into<String>, category: Category, levels: [u8; 24]) -> Self {
        let aspects = AspectId::ALL
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let cfg = AspectConfig::from_ordinals(levels[2 * i], levels[2 * i + 1])
                    .expect("ordinals within 0..=2");
                (a, cfg)
            })
            .collect();
        Self { name: name.into(), category, aspects, notes: None }
    }

    pub fn with_aspect(mut self, aspect: AspectId, au: AutonomyLevel, al: AlignmentLevel) -> Self {
        self.aspects.insert(aspect, AspectConfig::new(au, al));
        self
    }

    /// Panics on an incomplete profile; callers validate first.
    pub fn config(&self, aspect: AspectId) -> AspectConfig {
        self.aspects[&aspect]
    }

    pub fn autonomy(&self, aspect: AspectId) -> AutonomyLevel {
        self.config(aspect).autonomy
    }

    pub fn alignment(&self, aspect: AspectId) -> AlignmentLevel {
        self.config(aspect).alignment
    }

    /// The 24 level ordinals in column order (au, al per aspect).
    pub fn level_vector(&self) -> [u8; 24] {
        let mut out = [0u8; 24];
        for (i, a) in AspectId::ALL.iter().enumerate() {
            let cfg = self.config(*a);
            out[2 * i] = cfg.autonomy.ordinal();
            out[2 * i + 1] = cfg.alignment.ordinal();
        }
        out
    }

    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedProfile {
    pub profile: SystemProfile,
    /// Unknown fields that were skipped.
    pub notices: Vec<String>,
}

/// Keeps duplicate keys, which `serde_json::Map` would silently merge.
struct Entries<T>(Vec<(String, T)>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Entries<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = Entries<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Entries<T>, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, T>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V(PhantomData))
    }
}

fn raw_to_value(raw: &RawValue) -> Value {
    serde_json::from_str(raw.get()).expect("raw value is valid JSON")
}

#[derive(Deserialize)]
struct RawAspect {
    au: Option<Value>,
    al: Option<Value>,
}

fn level_value(aspect: AspectId, field: &str, v: Option<Value>) -> Result<u8, ProfileError> {
    let v = v.ok_or_else(|| {
        ProfileError::MalformedDocument(format!("aspects.{}.{field} is missing", aspect.key()))
    })?;
    let n = v.as_i64().ok_or_else(|| {
        ProfileError::MalformedDocument(format!("aspects.{}.{field} is not an integer", aspect.key()))
    })?;
    if !(0..=2).contains(&n) {
        return Err(ProfileError::LevelOutOfRange { aspect, value: n });
    }
    Ok(n as u8)
}

/// Parses a profile document. Unknown top-level or aspect keys are skipped and
/// reported in `notices`.
pub fn parse_profile(document: &str) -> Result<ParsedProfile, ProfileError> {
    let top: Entries<Box<RawValue>> =
        serde_json::from_str(document).map_err(|e| ProfileError::MalformedDocument(e.to_string()))?;
    let mut notices = Vec::new();
    let mut name = None;
    let mut category = None;
    let mut notes = None;
    let mut raw_aspects = None;
    for (k, v) in top.0 {
        match k.as_str() {
            "name" => name = Some(raw_to_value(&v)),
            "category" => category = Some(raw_to_value(&v)),
            "notes" => notes = Some(raw_to_value(&v)),
            "aspects" => raw_aspects = Some(v),
            other => notices.push(format!("ignored unknown field `{other}`")),
        }
    }

    let name = match name {
        Some(Value::String(s)) => s,
        Some(_) => return Err(ProfileError::MalformedDocument("name must be a string".into())),
        None => return Err(ProfileError::MalformedDocument("name is missing".into())),
    };
    let category = match category {
        None | Some(Value::Null) => Category::Unlabeled,
        Some(v) => serde_json::from_value(v)
            .map_err(|e| ProfileError::MalformedDocument(format!("category: {e}")))?,
    };
    let notes = match notes {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s),
        Some(_) => return Err(ProfileError::MalformedDocument("notes must be a string".into())),
    };
    let raw_aspects = raw_aspects
        .ok_or_else(|| ProfileError::MalformedDocument("aspects is missing".into()))?;
    let entries: Entries<Value> = serde_json::from_str(raw_aspects.get())
        .map_err(|e| ProfileError::MalformedDocument(format!("aspects: {e}")))?;

    let mut aspects = BTreeMap::new();
    for (k, v) in entries.0 {
        let Some(aspect) = AspectId::ALL.into_iter().find(|a| a.key() == k) else {
            notices.push(format!("ignored unknown aspect `{k}`"));
            continue;
        };
        if aspects.contains_key(&aspect) {
            return Err(ProfileError::DuplicateAspect(aspect));
        }
        let raw: RawAspect = serde_json::from_value(v).map_err(|e| {
            ProfileError::MalformedDocument(format!("aspects.{k}: {e}"))
        })?;
        let au = level_value(aspect, "au", raw.au)?;
        let al = level_value(aspect, "al", raw.al)?;
        aspects.insert(aspect, AspectConfig::from_ordinals(au, al).expect("checked range"));
    }
    if let Some(missing) = AspectId::ALL.into_iter().find(|a| !aspects.contains_key(a)) {
        return Err(ProfileError::MissingAspect(missing));
    }
    Ok(ParsedProfile { profile: SystemProfile { name, category, aspects, notes }, notices })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProfileValidationReport {
    pub valid: bool,
    pub issues: Vec<ValidationIssue>,
}

pub fn validate(profile: &SystemProfile) -> ProfileValidationReport {
    let mut issues = Vec::new();
    if profile.name.trim().is_empty() {
        issues.push(ValidationIssue { path: "name".into(), message: "name is empty".into() });
    }
    for a in AspectId::ALL {
        if !profile.aspects.contains_key(&a) {
            issues.push(ValidationIssue {
                path: format!("aspects.{}", a.key()),
                message: ProfileError::MissingAspect(a).to_string(),
            });
        }
    }
    ProfileValidationReport { valid: issues.is_empty(), issues }
}

const CAMEL_NOTE: &str = "Levels follow the assessment table. The accompanying prose credits \
CAMEL with L2 autonomy for Prompt Engineering and Action Management, while the table lists \
PrEng (1,0) and ActM (1,0).";

/// The eight assessed systems. Rows are (au, al) pairs in column order:
/// Decom Orch Synth | CommP PrEng ActM | AGen RoleD MemU NetM | Integ Util.
#[rustfmt::skip]
const DATASET: [(&str, Category, [u8; 24]); 8] = [
    ("Auto-GPT", Category::GeneralPurpose,
        [2,0, 0,0, 1,0,  0,0, 1,0, 2,0,  0,0, 1,0, 0,0, 0,0,  0,0, 2,0]),
    ("BabyAGI", Category::GeneralPurpose,
        [2,0, 0,0, 1,0,  0,0, 1,0, 2,0,  0,0, 1,0, 0,0, 0,0,  0,0, 2,0]),
    ("SuperAGI", Category::GeneralPurpose,
        [2,0, 1,0, 1,1,  0,0, 1,0, 2,0,  1,1, 2,1, 0,1, 0,0,  0,1, 2,1]),
    ("HuggingGPT", Category::CentralController,
        [2,0, 1,0, 2,0,  0,0, 2,0, 2,0,  2,0, 2,0, 1,0, 0,0,  2,0, 2,0]),
    ("MetaGPT", Category::RoleAgent,
        [2,0, 0,0, 2,0,  1,0, 1,0, 2,0,  0,0, 0,0, 0,0, 1,0,  0,0, 2,0]),
    ("CAMEL", Category::RoleAgent,
        [2,0, 0,0, 1,0,  0,0, 1,0, 1,0,  0,1, 1,1, 0,0, 0,1,  0,0, 0,0]),
    ("AgentGPT", Category::GeneralPurpose,
        [2,1, 1,0, 1,0,  0,0, 1,0, 2,0,  1,1, 2,0, 0,0, 0,0,  0,0, 2,1]),
    ("Zapier", Category::WorkflowAutomation,
        [1,1, 0,1, 0,1,  0,0, 0,1, 0,1,  0,0, 0,0, 0,0, 0,0,  0,1, 0,1]),
];

/// The built-in assessment dataset, in table row order.
pub fn builtin_profiles() -> Vec<SystemProfile> {
    DATASET
        .iter()
        .map(|(name, cat, levels)| {
            let mut p = SystemProfile::from_levels(*name, *cat, *levels);
            if *name == "CAMEL" {
                p.notes = Some(CAMEL_NOTE.to_string());
            }
            if *name == "Zapier" {
                p.notes = Some("Workflow-automation tool included for contrast.".to_string());
            }
            p
        })
        .collect()
}

/// Looks up a builtin profile by name, ignoring case.
pub fn builtin(name: &str) -> Option<SystemProfile> {
    builtin_profiles().into_iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// Builtins that are LLM-powered systems (everything but the workflow-automation contrast row).
pub fn llm_builtins() -> Vec<SystemProfile> {
    builtin_profiles()
        .into_iter()
        .filter(|p| p.category != Category::WorkflowAutomation)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_doc() -> serde_json::Value {
        let aspects: serde_json::Map<String, Value> = AspectId::ALL
            .iter()
            .map(|a| (a.key().to_string(), serde_json::json!({"au": 1, "al": 0})))
            .collect();
        serde_json::json!({"name": "demo", "category": "RoleAgent", "aspects": aspects})
    }

    #[test]
    fn parses_complete_document() {
        let parsed = parse_profile(&full_doc().to_string()).unwrap();
        assert_eq!(parsed.profile.aspects.len(), 12);
        assert_eq!(parsed.profile.category, Category::RoleAgent);
        assert!(parsed.notices.is_empty());
    }

    #[test]
    fn missing_aspect_rejected() {
        let mut doc = full_doc();
        doc["aspects"].as_object_mut().unwrap().remove("util");
        assert_eq!(parse_profile(&doc.to_string()), Err(ProfileError::MissingAspect(AspectId::Util)));
    }

    #[test]
    fn out_of_range_level_rejected() {
        let mut doc = full_doc();
        doc["aspects"]["decom"]["au"] = serde_json::json!(3);
        assert_eq!(
            parse_profile(&doc.to_string()),
            Err(ProfileError::LevelOutOfRange { aspect: AspectId::Decom, value: 3 })
        );
    }

    #[test]
    fn duplicate_aspect_rejected() {
        let doc = full_doc().to_string();
        let doc = doc.replacen("\"decom\":", "\"decom\":{\"au\":0,\"al\":0},\"decom\":", 1);
        assert_eq!(parse_profile(&doc), Err(ProfileError::DuplicateAspect(AspectId::Decom)));
    }

    #[test]
    fn malformed_and_unknown_fields() {
        assert!(matches!(parse_profile("[1,2]"), Err(ProfileError::MalformedDocument(_))));
        assert!(matches!(parse_profile("{"), Err(ProfileError::MalformedDocument(_))));
        let mut doc = full_doc();
        doc["vendor"] = serde_json::json!("x");
        doc["aspects"]["extra"] = serde_json::json!({"au": 0, "al": 0});
        let parsed = parse_profile(&doc.to_string()).unwrap();
        assert_eq!(parsed.notices.len(), 2);
    }

    #[test]
    fn builtin_rows() {
        let all = builtin_profiles();
        let names: Vec<_> = all.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(
            names,
            ["Auto-GPT", "BabyAGI", "SuperAGI", "HuggingGPT", "MetaGPT", "CAMEL", "AgentGPT", "Zapier"]
        );
        let auto = &all[0];
        let expected = [
            (AspectId::Decom, 2, 0), (AspectId::Orch, 0, 0), (AspectId::Synth, 1, 0),
            (AspectId::CommP, 0, 0), (AspectId::PrEng, 1, 0), (AspectId::ActM, 2, 0),
            (AspectId::AGen, 0, 0), (AspectId::RoleD, 1, 0), (AspectId::MemU, 0, 0),
            (AspectId::NetM, 0, 0), (AspectId::Integ, 0, 0), (AspectId::Util, 2, 0),
        ];
        for (a, au, al) in expected {
            assert_eq!(auto.config(a), AspectConfig::from_ordinals(au, al).unwrap(), "{a}");
        }
        let hug = builtin("HuggingGPT").unwrap();
        assert_eq!(hug.autonomy(AspectId::Integ), AutonomyLevel::SelfOrganizing);
        assert_eq!(hug.autonomy(AspectId::Util), AutonomyLevel::SelfOrganizing);
        assert!(AspectId::ALL.iter().all(|&a| hug.alignment(a) == AlignmentLevel::Integrated));
        let zap = builtin("zapier").unwrap();
        assert_eq!(zap.config(AspectId::Decom), AspectConfig::from_ordinals(1, 1).unwrap());
        for a in [AspectId::AGen, AspectId::RoleD, AspectId::MemU, AspectId::NetM] {
            assert_eq!(zap.config(a), AspectConfig::from_ordinals(0, 0).unwrap());
        }
        assert_eq!(all[0].level_vector(), all[1].level_vector());
        assert!(builtin("CAMEL").unwrap().notes.unwrap().contains("PrEng (1,0)"));
    }

    #[test]
    fn builtin_categories() {
        use Category::*;
        let cats: Vec<_> = builtin_profiles().iter().map(|p| p.category).collect();
        assert_eq!(
            cats,
            [GeneralPurpose, GeneralPurpose, GeneralPurpose, CentralController, RoleAgent, RoleAgent,
             GeneralPurpose, WorkflowAutomation]
        );
    }

    #[test]
    fn validation() {
        for p in builtin_profiles() {
            assert!(validate(&p).valid, "{}", p.name);
        }
        let mut p = builtin("MetaGPT").unwrap();
        p.aspects.remove(&AspectId::NetM);
        let r = validate(&p);
        assert!(!r.valid);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].path, "aspects.netm");

        let mut p = builtin("MetaGPT").unwrap();
        p.name = String::new();
        let r = validate(&p);
        assert_eq!((r.valid, r.issues.len()), (false, 1));
    }

    #[test]
    fn builtins_round_trip_through_document() {
        for p in builtin_profiles() {
            let back = parse_profile(&p.to_document()).unwrap();
            assert_eq!(back.profile, p);
            assert!(back.notices.is_empty());
        }
    }
}
