use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BodyTemplate;
use crate::error::{Error, Result};
use crate::math::Vec3;

pub const TEMPLATE_VERSION: &str = "veri3d-template/1";

/// On-disk template layout: flat row-major arrays plus dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateDocument {
    pub version: String,
    pub m: usize,
    pub p: usize,
    pub s: usize,
    pub rest_vertices: Vec<f64>,
    pub faces: Vec<usize>,
    pub skin_weights: Vec<f64>,
    pub joints_rest: Vec<f64>,
    /// Parent joint index per joint, `-1` for the root.
    pub parent: Vec<i64>,
    pub shape_basis: Vec<f64>,
    pub uv: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub part_names: Vec<String>,
}

fn vec3s(flat: &[f64], count: usize, field: &str) -> Result<Vec<Vec3>> {
    if flat.len() != count * 3 {
        return Err(Error::Format(format!(
            "{field}: expected {} values, found {}",
            count * 3,
            flat.len()
        )));
    }
    Ok(flat
        .chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect())
}

fn flatten(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

impl TemplateDocument {
    pub fn from_template(t: &BodyTemplate) -> Self {
        Self {
            version: TEMPLATE_VERSION.to_string(),
            m: t.num_vertices(),
            p: t.num_parts(),
            s: t.shape_dim(),
            rest_vertices: flatten(&t.rest_vertices),
            faces: t.faces.iter().flatten().copied().collect(),
            skin_weights: t.skin_weights.clone(),
            joints_rest: flatten(&t.joints_rest),
            parent: t
                .parent
                .iter()
                .map(|p| p.map_or(-1, |q| q as i64))
                .collect(),
            shape_basis: t.shape_basis.iter().flat_map(|b| flatten(b)).collect(),
            uv: t.uv.iter().flatten().copied().collect(),
            part_names: t.part_names.clone(),
        }
    }

    pub fn into_template(self) -> Result<BodyTemplate> {
        if self.version != TEMPLATE_VERSION {
            return Err(Error::Format(format!(
                "unsupported template version {:?}",
                self.version
            )));
        }
        let (m, p, s) = (self.m, self.p, self.s);
        if self.faces.len() % 3 != 0 {
            return Err(Error::Format("faces length is not a multiple of 3".into()));
        }
        if self.parent.len() != p {
            return Err(Error::Format(format!(
                "parent: expected {p} entries, found {}",
                self.parent.len()
            )));
        }
        if self.skin_weights.len() != m * p {
            return Err(Error::Format(format!(
                "skin_weights: expected {} values, found {}",
                m * p,
                self.skin_weights.len()
            )));
        }
        if self.uv.len() != m * 2 {
            return Err(Error::Format(format!(
                "uv: expected {} values, found {}",
                m * 2,
                self.uv.len()
            )));
        }
        let parent = self
            .parent
            .iter()
            .map(|&q| match q {
                -1 => Ok(None),
                q if q >= 0 => Ok(Some(q as usize)),
                q => Err(Error::Format(format!("parent index {q} is invalid"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let basis_flat = vec3s(&self.shape_basis, m * s, "shape_basis")?;
        let template = BodyTemplate {
            rest_vertices: vec3s(&self.rest_vertices, m, "rest_vertices")?,
            faces: self
                .faces
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect(),
            skin_weights: self.skin_weights,
            joints_rest: vec3s(&self.joints_rest, p, "joints_rest")?,
            parent,
            shape_basis: if m == 0 {
                vec![Vec::new(); s]
            } else {
                basis_flat.chunks(m).map(|c| c.to_vec()).collect()
            },
            uv: self.uv.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
            part_names: self.part_names,
        };
        template.validate()?;
        Ok(template)
    }
}

pub fn save_template(template: &BodyTemplate, path: impl AsRef<Path>) -> Result<()> {
    let doc = TemplateDocument::from_template(template);
    std::fs::write(path, serde_json::to_vec(&doc)?)?;
    Ok(())
}

pub fn load_template(path: impl AsRef<Path>) -> Result<BodyTemplate> {
    let bytes = std::fs::read(path)?;
    let doc: TemplateDocument = serde_json::from_slice(&bytes)?;
    doc.into_template()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::capsule::capsule_person;

    #[test]
    fn round_trip_through_file() {
        let t = capsule_person();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tpl.json");
        save_template(&t, &path).unwrap();
        assert_eq!(load_template(&path).unwrap(), t);
    }

    #[test]
    fn loader_validates_invariants() {
        let mut doc = TemplateDocument::from_template(&capsule_person());
        doc.skin_weights[0] += 0.5;
        assert!(matches!(doc.into_template(), Err(Error::InvariantViolation(_))));

        let mut doc = TemplateDocument::from_template(&capsule_person());
        doc.version = "veri3d-template/0".into();
        assert!(matches!(doc.into_template(), Err(Error::Format(_))));

        let mut doc = TemplateDocument::from_template(&capsule_person());
        doc.parent[1] = -1;
        assert!(matches!(doc.into_template(), Err(Error::Kinematics(_))));

        let mut doc = TemplateDocument::from_template(&capsule_person());
        doc.uv.pop();
        assert!(matches!(doc.into_template(), Err(Error::Format(_))));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let doc = TemplateDocument::from_template(&capsule_person());
        let mut value = serde_json::to_value(&doc).unwrap();
        value["colour"] = serde_json::json!(1);
        assert!(serde_json::from_value::<TemplateDocument>(value).is_err());
    }
}
