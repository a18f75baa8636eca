//! World-fixed environment polytopes and their JSON file.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Attachment, ConvexPolytope, GeometryError};
use crate::kinematics::PolytopeDoc;

#[derive(Clone, Debug, Default)]
pub struct Environment {
    pub name: String,
    pub polytopes: Vec<ConvexPolytope>,
    doc: Vec<PolytopeDoc>,
}

/// On disk an environment is a bare list of polytopes; an object with a
/// `polytopes` list is also accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnvironmentDoc {
    List(Vec<PolytopeDoc>),
    Named { name: String, polytopes: Vec<PolytopeDoc> },
}

impl Environment {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_docs(name: &str, docs: Vec<PolytopeDoc>) -> Result<Self, GeometryError> {
        let polytopes = docs
            .iter()
            .map(|d| {
                let pts: Vec<Vector3<f64>> = d.vertices.iter().map(|v| Vector3::from(*v)).collect();
                ConvexPolytope::from_points(&d.name, &pts, Attachment::World)
            })
            .collect::<Result<_, _>>()?;
        Ok(Environment {
            name: name.to_string(),
            polytopes,
            doc: docs,
        })
    }

    pub fn from_json_str(name: &str, s: &str) -> Result<Self, GeometryError> {
        match serde_json::from_str::<EnvironmentDoc>(s)? {
            EnvironmentDoc::List(docs) => Self::from_docs(name, docs),
            EnvironmentDoc::Named { name, polytopes } => Self::from_docs(&name, polytopes),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| GeometryError::Io(path.display().to_string(), e))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("environment");
        Self::from_json_str(stem, &text)
    }

    pub fn documents(&self) -> &[PolytopeDoc] {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("environment serializes")
    }

    /// Add an axis-aligned box, mostly for fixtures.
    pub fn push_box(&mut self, name: &str, center: Vector3<f64>, size: Vector3<f64>) {
        let poly = ConvexPolytope::cuboid(name, center, size, Attachment::World);
        self.doc.push(PolytopeDoc {
            name: name.to_string(),
            vertices: poly.vertices.iter().map(|v| [v.x, v.y, v.z]).collect(),
        });
        self.polytopes.push(poly);
    }
}
