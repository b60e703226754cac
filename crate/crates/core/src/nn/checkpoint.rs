use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};

use super::adam::Adam;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Serializable model state: named tensors, architecture hyperparameters,
/// training step and the root seed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelCheckpoint {
    pub params: BTreeMap<String, Tensor>,
    pub hyper: BTreeMap<String, String>,
    pub step: u64,
    pub seed: u64,
}

const FIRST_MOMENT: &str = "adam.m.";
const SECOND_MOMENT: &str = "adam.v.";

impl ModelCheckpoint {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.hyper.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.hyper
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::MissingParameter(key.to_string()))
    }

    pub fn parse<T: core::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.get(key)?;
        raw.parse()
            .map_err(|_| Error::InvalidArgument(alloc::format!("hyperparameter {key} = `{raw}`")))
    }

    /// Model tensors plus the optimiser moments (stored under `adam.m.*` / `adam.v.*`).
    pub fn capture(store: &ParamStore, opt: Option<&Adam>) -> BTreeMap<String, Tensor> {
        let mut map = store.to_map();
        if let Some(opt) = opt {
            for id in store.ids() {
                let name = store.name(id);
                map.insert(alloc::format!("{FIRST_MOMENT}{name}"), opt.first[id.0].clone());
                map.insert(alloc::format!("{SECOND_MOMENT}{name}"), opt.second[id.0].clone());
            }
        }
        map
    }

    /// Restore optimiser moments saved by [`capture`](Self::capture), if present.
    pub fn restore_optimizer(&self, store: &ParamStore, opt: &mut Adam) -> Result<bool> {
        let mut found = false;
        for id in store.ids() {
            let name = store.name(id);
            let m = self.params.get(&alloc::format!("{FIRST_MOMENT}{name}"));
            let v = self.params.get(&alloc::format!("{SECOND_MOMENT}{name}"));
            if let (Some(m), Some(v)) = (m, v) {
                if m.len() != opt.first[id.0].len() || v.len() != opt.second[id.0].len() {
                    return Err(Error::Shape(alloc::format!("optimiser state for `{name}`")));
                }
                opt.first[id.0].data_mut().copy_from_slice(m.data());
                opt.second[id.0].data_mut().copy_from_slice(v.data());
                found = true;
            }
        }
        opt.step = self.step;
        Ok(found)
    }
}
