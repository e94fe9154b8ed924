//! Model documents (format version 1) and run reports as canonical JSON.
//!
//! Canonical means object keys sorted lexicographically at every level and
//! reals written in their shortest round-trip form, so equal values always
//! produce equal bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::InterfaceError;
use crate::classifiers::{
    FittedPayload, HyperparamAssignment, KnnFit, LogregFit, ModelFamily, NbFit, TrainedModel, TreeFit,
};
use crate::dataset::{FeatureMask, ScalerStats};
use crate::optimizer::RunReport;

pub const FORMAT_VERSION: u64 = 1;

const MODEL_KEYS: [&str; 8] =
    ["format_version", "family", "params", "mask", "feature_names", "class_names", "scaler", "payload"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistedModel {
    pub format_version: u64,
    pub family: ModelFamily,
    pub params: HyperparamAssignment,
    pub mask: FeatureMask,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
    pub scaler: ScalerStats,
    pub payload: Value,
}

/// Serializes through `serde_json::Value`, whose maps are ordered by key.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, InterfaceError> {
    let v = serde_json::to_value(value).map_err(|e| InterfaceError::Internal(e.to_string()))?;
    let mut s = serde_json::to_string_pretty(&v).map_err(|e| InterfaceError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes `contents` to a temporary file beside `path`, then renames it over
/// `path`. Nothing is left behind on failure.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), InterfaceError> {
    let io = |e: std::io::Error| InterfaceError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents.as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

impl PersistedModel {
    pub fn from_model(model: &TrainedModel) -> Result<Self, InterfaceError> {
        let payload = match &model.fitted {
            FittedPayload::Logreg(f) => serde_json::to_value(f),
            FittedPayload::GaussianNb(f) => serde_json::to_value(f),
            FittedPayload::Knn(f) => serde_json::to_value(f),
            FittedPayload::Tree(f) => serde_json::to_value(f),
        }
        .map_err(|e| InterfaceError::Internal(e.to_string()))?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            family: model.family,
            params: model.params.clone(),
            mask: model.mask.clone(),
            feature_names: model.feature_names.clone(),
            class_names: model.class_names.clone(),
            scaler: model.scaler.clone(),
            payload,
        })
    }

    pub fn into_model(self) -> Result<TrainedModel, InterfaceError> {
        let schema = |field: &str| {
            let field = field.to_string();
            move |_| InterfaceError::SchemaError(field)
        };
        let fitted = match self.family {
            ModelFamily::Logreg => FittedPayload::Logreg(serde_json::from_value::<LogregFit>(self.payload).map_err(schema("payload"))?),
            ModelFamily::GaussianNb => FittedPayload::GaussianNb(serde_json::from_value::<NbFit>(self.payload).map_err(schema("payload"))?),
            ModelFamily::Knn => FittedPayload::Knn(serde_json::from_value::<KnnFit>(self.payload).map_err(schema("payload"))?),
            ModelFamily::Tree => FittedPayload::Tree(serde_json::from_value::<TreeFit>(self.payload).map_err(schema("payload"))?),
        };
        let model = TrainedModel {
            family: self.family,
            params: self.params,
            mask: self.mask,
            scaler: self.scaler,
            fitted,
            n_classes: self.class_names.len(),
            feature_names: self.feature_names,
            class_names: self.class_names,
        };
        model.check_consistency().map_err(|e| InterfaceError::SchemaError(format!("payload ({e})")))?;
        Ok(model)
    }
}

pub fn model_to_json(model: &TrainedModel) -> Result<String, InterfaceError> {
    to_canonical_json(&PersistedModel::from_model(model)?)
}

/// Parses a model document, checking the version first and then each
/// top-level field by name.
pub fn model_from_json(text: &str) -> Result<TrainedModel, InterfaceError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| InterfaceError::SchemaError(format!("document ({e})")))?;
    let obj = doc.as_object().ok_or_else(|| InterfaceError::SchemaError("document".into()))?;
    match obj.get("format_version").map(Value::as_u64) {
        None => return Err(InterfaceError::SchemaError("format_version".into())),
        Some(Some(FORMAT_VERSION)) => {}
        Some(Some(v)) => return Err(InterfaceError::UnsupportedVersion(v)),
        Some(None) => return Err(InterfaceError::SchemaError("format_version".into())),
    }
    for key in MODEL_KEYS {
        if !obj.contains_key(key) {
            return Err(InterfaceError::SchemaError(key.into()));
        }
    }
    // Decode field by field so errors name the offending key.
    fn field<T: for<'de> Deserialize<'de>>(obj: &serde_json::Map<String, Value>, key: &str) -> Result<T, InterfaceError> {
        serde_json::from_value(obj[key].clone()).map_err(|_| InterfaceError::SchemaError(key.into()))
    }
    let persisted = PersistedModel {
        format_version: FORMAT_VERSION,
        family: field(obj, "family")?,
        params: field(obj, "params")?,
        mask: field(obj, "mask")?,
        feature_names: field(obj, "feature_names")?,
        class_names: field(obj, "class_names")?,
        scaler: field(obj, "scaler")?,
        payload: obj["payload"].clone(),
    };
    persisted.into_model()
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), InterfaceError> {
    write_atomic(path.as_ref(), &model_to_json(model)?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, InterfaceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| InterfaceError::Io(format!("{}: {e}", path.display())))?;
    model_from_json(&text)
}

pub fn report_to_json(report: &RunReport) -> Result<String, InterfaceError> {
    to_canonical_json(report)
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<(), InterfaceError> {
    write_atomic(path.as_ref(), &report_to_json(report)?)
}

/// Report value with every `wall_time_ms` field removed, for comparisons.
pub fn strip_wall_time(report: &mut Value) {
    match report {
        Value::Object(map) => {
            map.remove("wall_time_ms");
            map.values_mut().for_each(strip_wall_time);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_time),
        _ => {}
    }
}
