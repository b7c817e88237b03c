use std::collections::BTreeMap;
use std::path::Path;

use crate::antenna::Orientation;
use crate::error::{schema_error, Result, TwinError};
use crate::scene::SceneConfig;

/// One steering angle per sub-beam, keyed by `(cell id, sub-beam index)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeamAssignment {
    angles: BTreeMap<String, BTreeMap<usize, Orientation>>,
}

impl BeamAssignment {
    /// Every sub-beam at its configured baseline angle.
    pub fn baseline(scene: &SceneConfig) -> Self {
        let mut a = BeamAssignment::default();
        for r in scene.beams() {
            a.set(&scene.cell(r).id, r.beam, scene.sub_beam(r).baseline);
        }
        a
    }

    pub fn get(&self, cell_id: &str, beam: usize) -> Option<Orientation> {
        self.angles.get(cell_id)?.get(&beam).copied()
    }

    pub fn set(&mut self, cell_id: &str, beam: usize, angle: Orientation) {
        match self.angles.get_mut(cell_id) {
            Some(beams) => {
                beams.insert(beam, angle);
            }
            None => {
                self.angles
                    .insert(cell_id.to_string(), BTreeMap::from([(beam, angle)]));
            }
        }
    }

    pub fn len(&self) -> usize {
        self.angles.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize, Orientation)> {
        self.angles
            .iter()
            .flat_map(|(c, beams)| beams.iter().map(move |(&b, &o)| (c.as_str(), b, o)))
    }

    /// Checks completeness, bounds and lattice membership against a scene.
    /// Baseline angles are admitted even when they are off the lattice.
    pub fn validate(&self, scene: &SceneConfig) -> Result<()> {
        crate::spectrum::check_assignment(scene, self)?;
        for r in scene.beams() {
            let cell = scene.cell(r);
            let beam = scene.sub_beam(r);
            let angle = self.get(&cell.id, r.beam).expect("checked above");
            if angle != beam.baseline && !beam.candidate_lattice().contains(&angle) {
                return Err(TwinError::validation(
                    format!("assignment.{}.{}", cell.id, r.beam),
                    format!(
                        "({}, {}) is not on the candidate lattice",
                        angle.azimuth_deg(),
                        angle.tilt_deg()
                    ),
                ));
            }
        }
        if self.len() != scene.sub_beam_total() {
            return Err(TwinError::validation(
                "assignment",
                format!(
                    "has {} entries but the scene has {} sub-beams",
                    self.len(),
                    scene.sub_beam_total()
                ),
            ));
        }
        Ok(())
    }

    /// Parses `{cell_id: {beam_index: [az_deg, tilt_deg]}}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: BTreeMap<String, BTreeMap<String, Orientation>> =
            serde_path_to_error::deserialize(de).map_err(schema_error)?;
        let mut a = BeamAssignment::default();
        for (cell, beams) in raw {
            for (key, angle) in beams {
                let beam: usize = key.parse().map_err(|_| {
                    TwinError::validation(
                        format!("{cell}.{key}"),
                        "sub-beam index must be a non-negative integer",
                    )
                })?;
                a.set(&cell, beam, angle);
            }
        }
        Ok(a)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        let mut raw: BTreeMap<&str, BTreeMap<usize, [f64; 2]>> = BTreeMap::new();
        for (cell, beam, o) in self.iter() {
            raw.entry(cell).or_default().insert(beam, o.into());
        }
        serde_json::to_string_pretty(&raw).expect("assignment serializes")
    }
}
