//! Run parameters and `--set key=value` overrides.
//!
//! A key whose first segment names a [`RunParams`] field updates the run
//! parameters; any other key (optionally prefixed with `scene.`) is a path
//! into the scene document. Numeric segments index arrays.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lacn_twin::metrics::DEFAULT_HEATMAP_ALTITUDES_M;
use lacn_twin::optimizer::DEFAULT_BRUTE_FORCE_CAP;
use lacn_twin::ObjectiveWeights;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationParams {
    pub train_fraction: f64,
    pub n_folds: usize,
    pub layer_height_m: f64,
    pub neighbors: usize,
    pub lag_bins: usize,
}

impl Default for ValidationParams {
    fn default() -> Self {
        ValidationParams {
            train_fraction: 0.7,
            n_folds: 3,
            layer_height_m: 10.0,
            neighbors: 32,
            lag_bins: 20,
        }
    }
}

/// Every tunable of a run besides the scene itself. Recorded verbatim in
/// the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunParams {
    pub offset_db: f64,
    pub weights: ObjectiveWeights,
    pub validation: ValidationParams,
    pub noise_sigma_db: f64,
    pub drift_threshold_db: Option<f64>,
    pub brute_force_cap: u64,
    pub heatmap_altitudes_m: Vec<f64>,
}

impl Default for RunParams {
    fn default() -> Self {
        RunParams {
            offset_db: 0.0,
            weights: ObjectiveWeights::default(),
            validation: ValidationParams::default(),
            noise_sigma_db: 0.0,
            drift_threshold_db: None,
            brute_force_cap: DEFAULT_BRUTE_FORCE_CAP as u64,
            heatmap_altitudes_m: DEFAULT_HEATMAP_ALTITUDES_M.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    /// Parses `key=value`; the value is read as JSON, else as a string.
    pub fn parse(raw: &str) -> CliResult<Self> {
        let (key, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--set {raw}: expected KEY=VALUE")))?;
        let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Input(format!("--set {raw}: empty path segment")));
        }
        let value = serde_json::from_str(value.trim())
            .unwrap_or_else(|_| Value::String(value.trim().to_owned()));
        Ok(Override { path, value })
    }

    pub fn key(&self) -> String {
        self.path.join(".")
    }
}

/// Splits overrides into (run parameter, scene) groups. The scene group has
/// any leading `scene.` stripped.
pub fn partition(overrides: Vec<Override>) -> (Vec<Override>, Vec<Override>) {
    let params = serde_json::to_value(RunParams::default()).expect("params serialize");
    let mut run = Vec::new();
    let mut scene = Vec::new();
    for mut o in overrides {
        if o.path[0] == "scene" && o.path.len() > 1 {
            o.path.remove(0);
            scene.push(o);
        } else if params.get(&o.path[0]).is_some() {
            run.push(o);
        } else {
            scene.push(o);
        }
    }
    (run, scene)
}

/// Sets `o.value` at `o.path`. Missing object keys are created only when
/// `create` is set; array indices must exist.
pub fn apply(doc: &mut Value, o: &Override, create: bool) -> CliResult<()> {
    let bad = |msg: &str| CliError::Input(format!("--set {}: {msg}", o.key()));
    let (last, parents) = o.path.split_last().expect("non-empty path");
    let mut node = doc;
    for seg in parents {
        node = match node {
            Value::Object(map) => {
                if !map.contains_key(seg) && !create {
                    return Err(bad(&format!("unknown key {seg}")));
                }
                map.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let i: usize = seg.parse().map_err(|_| bad(&format!("{seg} is not an index")))?;
                let len = items.len();
                items
                    .get_mut(i)
                    .ok_or_else(|| bad(&format!("index {i} out of range ({len} items)")))?
            }
            _ => return Err(bad(&format!("{seg} is not a container"))),
        };
    }
    match node {
        Value::Object(map) => {
            if !map.contains_key(last) && !create {
                return Err(bad(&format!("unknown key {last}")));
            }
            map.insert(last.clone(), o.value.clone());
        }
        Value::Array(items) => {
            let i: usize = last.parse().map_err(|_| bad(&format!("{last} is not an index")))?;
            let len = items.len();
            *items
                .get_mut(i)
                .ok_or_else(|| bad(&format!("index {i} out of range ({len} items)")))? =
                o.value.clone();
        }
        _ => return Err(bad("target is not a container")),
    }
    Ok(())
}

impl RunParams {
    pub fn with_overrides(self, overrides: &[Override]) -> CliResult<Self> {
        let mut doc = serde_json::to_value(self).expect("params serialize");
        for o in overrides {
            apply(&mut doc, o, false)?;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Input(format!("--set: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_parsing() {
        assert_eq!(Override::parse("a.b=3").unwrap().value, Value::from(3));
        assert_eq!(Override::parse("a=x y").unwrap().value, Value::from("x y"));
        assert_eq!(Override::parse("a=[1,2]").unwrap().value, serde_json::json!([1, 2]));
        assert!(Override::parse("novalue").is_err());
        assert!(Override::parse("a..b=1").is_err());
    }

    #[test]
    fn routing_and_application() {
        let raw = ["weights.beta=0.5", "radio.noise_figure_db=9", "scene.sites.0.id=X"];
        let parsed = raw.iter().map(|r| Override::parse(r).unwrap()).collect();
        let (run, scene) = partition(parsed);
        assert_eq!(run.len(), 1);
        assert_eq!(scene[1].path, ["sites", "0", "id"]);

        let p = RunParams::default().with_overrides(&run).unwrap();
        assert_eq!(p.weights.beta, 0.5);

        let mut doc = serde_json::json!({"radio": {}, "sites": [{"id": "A"}]});
        for o in &scene {
            apply(&mut doc, o, true).unwrap();
        }
        assert_eq!(doc["radio"]["noise_figure_db"], 9);
        assert_eq!(doc["sites"][0]["id"], "X");
    }

    #[test]
    fn unknown_param_keys_rejected() {
        let o = Override::parse("weights.gamma=1").unwrap();
        assert!(RunParams::default().with_overrides(&[o]).is_err());
        let o = Override::parse("validation.n_folds=-1").unwrap();
        assert!(RunParams::default().with_overrides(&[o]).is_err());
        let mut doc = serde_json::json!({"sites": []});
        assert!(apply(&mut doc, &Override::parse("sites.0.id=1").unwrap(), true).is_err());
    }
}
