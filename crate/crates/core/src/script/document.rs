use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Anchor, ScriptError};
use crate::feasibility::RegionMode;
use crate::kinematics::RobotModel;

pub const SCRIPT_VERSION: u32 = 1;

/// Where the script will run; picks the default transition duration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Simulation,
    Hardware,
}

impl Profile {
    /// Transition duration used when a keyframe does not set one (s).
    pub fn default_duration(self) -> f64 {
        match self {
            Profile::Simulation => 2.0,
            Profile::Hardware => 4.0,
        }
    }
}

impl std::str::FromStr for Profile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "simulation" => Ok(Profile::Simulation),
            "hardware" => Ok(Profile::Hardware),
            other => Err(format!("unknown profile `{other}` (expected simulation or hardware)")),
        }
    }
}

pub(crate) mod dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub(crate) mod opt_dvec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.collect_seq(v.iter()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DVector<f64>>, D::Error> {
        Ok(Option::<Vec<f64>>::deserialize(d)?.map(DVector::from_vec))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyFrame {
    pub index: usize,
    /// Controller reference before this keyframe was dispatched.
    #[serde(with = "dvec")]
    pub controller_q: DVector<f64>,
    #[serde(with = "dvec")]
    pub puppet_q: DVector<f64>,
    #[serde(default)]
    pub anchors: Vec<Anchor>,
    /// Null-space posture in force when the keyframe was solved; the model
    /// nominal when unset.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_dvec")]
    pub nominal_q: Option<DVector<f64>>,
    /// Transition time into this keyframe; the profile default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default)]
    pub region_mode: RegionMode,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl KeyFrame {
    pub fn duration(&self, profile: Profile) -> f64 {
        self.duration_s.unwrap_or_else(|| profile.default_duration())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub version: u32,
    pub model: String,
    pub environment: String,
    #[serde(default)]
    pub keyframes: Vec<KeyFrame>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Script {
    pub fn new(model: &str, environment: &str) -> Self {
        Script {
            version: SCRIPT_VERSION,
            model: model.to_string(),
            environment: environment.to_string(),
            keyframes: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn total_duration(&self, profile: Profile) -> f64 {
        self.keyframes.iter().map(|k| k.duration(profile)).sum()
    }

    /// Canonical text: sorted keys, shortest round-trip floats, two-space
    /// indent, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ScriptError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ScriptError::Parse {
            offset: byte_offset(text, e.line(), e.column()),
            message: e.to_string(),
        })?;
        match value.get("version") {
            None => return Err(ScriptError::Schema("missing `version`".into())),
            Some(v) if v.as_u64() != Some(SCRIPT_VERSION as u64) => {
                return Err(ScriptError::Version(v.to_string()));
            }
            _ => {}
        }
        let script: Script = serde_json::from_value(value).map_err(|e| ScriptError::Schema(e.to_string()))?;
        script.check_structure()?;
        Ok(script)
    }

    fn check_structure(&self) -> Result<(), ScriptError> {
        for (i, kf) in self.keyframes.iter().enumerate() {
            if kf.index != i {
                return Err(ScriptError::Schema(format!("keyframe {i} has index {}", kf.index)));
            }
            if let Some(d) = kf.duration_s {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(ScriptError::Schema(format!("keyframe {i}: duration_s must be positive, got {d}")));
                }
            }
            let mut seen = std::collections::HashSet::new();
            for a in &kf.anchors {
                if !seen.insert(a.id.as_str()) {
                    return Err(ScriptError::Schema(format!("keyframe {i}: duplicate anchor id `{}`", a.id)));
                }
            }
        }
        Ok(())
    }

    /// Check configurations and anchors against the referenced model.
    pub fn validate(&self, model: &RobotModel) -> Result<(), ScriptError> {
        self.check_structure()?;
        for kf in &self.keyframes {
            let mut configs = vec![("controller_q", &kf.controller_q), ("puppet_q", &kf.puppet_q)];
            if let Some(n) = &kf.nominal_q {
                configs.push(("nominal_q", n));
            }
            for (name, q) in configs {
                if q.len() != model.dof() {
                    return Err(ScriptError::Schema(format!(
                        "keyframe {}: {name} has {} entries, model has {} coordinates",
                        kf.index,
                        q.len(),
                        model.dof()
                    )));
                }
                if !q.iter().all(|v| v.is_finite()) {
                    return Err(ScriptError::Schema(format!("keyframe {}: {name} is not finite", kf.index)));
                }
            }
            for a in &kf.anchors {
                a.validate(model)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScriptError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_canonical_json()).map_err(|e| ScriptError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io(path.display().to_string(), e))?;
        Self::from_json_str(&text)
    }
}

pub fn save_script(script: &Script, path: impl AsRef<Path>) -> Result<(), ScriptError> {
    script.save(path)
}

pub fn load_script(path: impl AsRef<Path>) -> Result<Script, ScriptError> {
    Script::load(path)
}

/// Pretty JSON with object keys sorted, as used for every file the crate writes.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // Going through `Value` sorts keys; floats print in shortest round-trip form.
    let v = serde_json::to_value(value).expect("value serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("value serializes");
    s.push('\n');
    s
}

/// Byte offset of a 1-based line/column position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    (start + column.saturating_sub(1)).min(text.len())
}
