use std::collections::BTreeMap;

use super::engine::Emitter;

/// Called once per input record (a line without its newline).
pub type MapFn = fn(&[u8], &mut Emitter) -> Result<(), String>;
/// Called once per key group with the values in merge order.
pub type ReduceFn = fn(&[u8], &[&[u8]]) -> Result<Vec<u8>, String>;

/// Named builtin functions a job may reference.
#[derive(Debug, Clone, Default)]
pub struct FunctionRegistry {
    maps: BTreeMap<String, MapFn>,
    reduces: BTreeMap<String, ReduceFn>,
}

impl FunctionRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_map(mut self, name: &str, f: MapFn) -> Self {
        self.maps.insert(name.to_string(), f);
        self
    }

    pub fn with_reduce(mut self, name: &str, f: ReduceFn) -> Self {
        self.reduces.insert(name.to_string(), f);
        self
    }

    pub fn map(&self, name: &str) -> Option<MapFn> {
        self.maps.get(name).copied()
    }

    pub fn reduce(&self, name: &str) -> Option<ReduceFn> {
        self.reduces.get(name).copied()
    }
}
