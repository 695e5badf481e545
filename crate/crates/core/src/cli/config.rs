//! Scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::EngineConfig;
use crate::error::{Error, Result};
use crate::flash::FlashTiming;
use crate::layout::FlashGeometry;
use crate::system::sweep::SweepItem;
use crate::system::{HardwareSpec, ModelSpec, Scenario, Sparsity, SystemKind, Workload};

fn default_id() -> String {
    "scenario".into()
}

/// One scenario as written on disk. `seed`, `system` and `workload` are required; the
/// remaining sections fall back to the default calibration but must be complete when
/// given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_id")]
    pub id: String,
    pub seed: u64,
    pub system: SystemKind,
    pub workload: Workload,
    #[serde(default = "ModelSpec::opt_13b")]
    pub model: ModelSpec,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default)]
    pub sparsity: Sparsity,
    #[serde(default)]
    pub flash_timing: FlashTiming,
    #[serde(default)]
    pub geometry: FlashGeometry,
    #[serde(default)]
    pub engine: EngineConfig,
}

impl ScenarioFile {
    pub fn from_item(item: &SweepItem) -> Self {
        let s = &item.scenario;
        Self {
            id: item.id.clone(),
            seed: s.seed,
            system: s.system,
            workload: s.workload,
            model: s.model.clone(),
            hardware: s.hardware.clone(),
            sparsity: s.sparsity,
            flash_timing: s.flash_timing,
            geometry: s.geometry,
            engine: s.engine,
        }
    }

    pub fn into_item(self) -> SweepItem {
        SweepItem {
            id: self.id,
            scenario: Scenario {
                system: self.system,
                model: self.model,
                hardware: self.hardware,
                workload: self.workload,
                sparsity: self.sparsity,
                flash_timing: self.flash_timing,
                geometry: self.geometry,
                engine: self.engine,
                seed: self.seed,
            },
        }
    }
}

/// Parses a single scenario object or an array of them.
pub fn parse_scenarios(json: &str) -> Result<Vec<SweepItem>> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    let files = match value {
        serde_json::Value::Array(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                serde_json::from_value::<ScenarioFile>(v).map_err(|e| Error::Parse(format!("scenario {i}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?,
        v @ serde_json::Value::Object(_) => vec![serde_json::from_value::<ScenarioFile>(v)?],
        _ => return Err(Error::Parse("expected a scenario object or an array of them".into())),
    };
    Ok(files.into_iter().map(ScenarioFile::into_item).collect())
}

pub fn load_scenarios(path: &Path) -> Result<Vec<SweepItem>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_scenarios(&text)
}

/// Command-line overrides applied to every scenario.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub csd_count: Option<usize>,
    pub ratio: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, items: &mut [SweepItem]) {
        for it in items {
            let s = &mut it.scenario;
            if let Some(seed) = self.seed {
                s.seed = seed;
            }
            if let Some(n) = self.csd_count {
                s.hardware.csd_count = n;
                s.hardware.ssd_count = n;
            }
            if let Some(r) = self.ratio {
                s.sparsity.ratio = r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "seed": 7,
        "system": "instinfer",
        "workload": {"batch": 4, "input_len": 64, "output_len": 4}
    }"#;

    #[test]
    fn minimal_file_uses_defaults() {
        let items = parse_scenarios(MINIMAL).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].id, "scenario");
        assert_eq!(items[0].scenario.seed, 7);
        assert_eq!(items[0].scenario.model, ModelSpec::opt_13b());
    }

    #[test]
    fn missing_seed_is_named() {
        let json = MINIMAL.replace("\"seed\": 7,", "");
        let err = parse_scenarios(&json).unwrap_err().to_string();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn incomplete_section_is_named() {
        let json = MINIMAL.replace("\"seed\": 7,", "\"seed\": 7, \"flash_timing\": {\"t_read_page_us\": 50},");
        let err = parse_scenarios(&json).unwrap_err().to_string();
        assert!(err.contains("t_program_page_us"), "{err}");
    }

    #[test]
    fn arrays_and_roundtrip() {
        let items = parse_scenarios(&format!("[{MINIMAL}, {MINIMAL}]")).unwrap();
        assert_eq!(items.len(), 2);
        let back = serde_json::to_string(&ScenarioFile::from_item(&items[0])).unwrap();
        assert_eq!(parse_scenarios(&back).unwrap()[0], items[0]);
        assert!(parse_scenarios("[]").unwrap().is_empty());
        assert!(parse_scenarios("3").is_err());
    }

    #[test]
    fn overrides_touch_every_item() {
        let mut items = parse_scenarios(&format!("[{MINIMAL}, {MINIMAL}]")).unwrap();
        Overrides {
            seed: Some(1),
            csd_count: Some(4),
            ratio: Some(0.25),
        }
        .apply(&mut items);
        for it in &items {
            assert_eq!(it.scenario.seed, 1);
            assert_eq!(it.scenario.hardware.csd_count, 4);
            assert_eq!(it.scenario.sparsity.ratio, 0.25);
        }
    }
}
