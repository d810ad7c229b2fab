use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Architecture, TaskModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    architecture: Architecture,
    params: Vec<f64>,
}

/// JSON checkpoint: architecture descriptor plus the flat parameter array.
/// Floats are written in shortest round-trip form, so a load returns the
/// exact same bits.
pub fn to_json(model: &TaskModel) -> Result<String> {
    Ok(serde_json::to_string(&Checkpoint {
        format_version: CHECKPOINT_VERSION,
        architecture: model.architecture().clone(),
        params: model.flat_params(),
    })?)
}

pub fn from_json(text: &str) -> Result<TaskModel> {
    let ck: Checkpoint = serde_json::from_str(text)?;
    if ck.format_version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
            ck.format_version
        )));
    }
    TaskModel::from_flat(ck.architecture, &ck.params)
}

pub fn save(model: &TaskModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TaskModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn checkpoint_round_trips_bit_exactly(seed in any::<u64>(), scale in -1e6f64..1e6) {
            let mut model = TaskModel::new(Architecture::mlp(3, &[4], 2), seed).unwrap();
            let flat: Vec<f64> = model.flat_params().iter().map(|w| w * scale).collect();
            model.set_flat_params(&flat).unwrap();
            let back = from_json(&to_json(&model).unwrap()).unwrap();
            let bits = |m: &TaskModel| m.flat_params().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&back), bits(&model));
            prop_assert_eq!(back.architecture(), model.architecture());
        }
    }

    #[test]
    fn rejects_unknown_version() {
        let model = TaskModel::new(Architecture::logistic(2, 2), 0).unwrap();
        let text = to_json(&model).unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(matches!(from_json(&text), Err(Error::Format(_))));
    }
}
