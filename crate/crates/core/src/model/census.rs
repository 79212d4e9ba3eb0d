//! Parameter census: a deterministic listing of every named parameter
//! with shared storages counted once in the totals.

use std::collections::HashMap;

use crate::autodiff::Elem;

use super::vst::VstModel;

#[derive(Debug, Clone)]
pub struct CensusEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub count: usize,
    /// Storage identity normalised to first-appearance order, so the
    /// listing is stable across runs.
    pub storage_id: usize,
}

#[derive(Debug, Clone)]
pub struct Census {
    pub entries: Vec<CensusEntry>,
}

impl Census {
    pub fn of<T: Elem>(model: &VstModel<T>) -> Census {
        let mut display_ids: HashMap<u64, usize> = HashMap::new();
        let entries = model
            .params()
            .iter()
            .map(|p| {
                let next = display_ids.len() + 1;
                let id = *display_ids.entry(p.storage_id()).or_insert(next);
                CensusEntry {
                    name: p.name().to_string(),
                    shape: p.shape().to_vec(),
                    count: p.numel(),
                    storage_id: id,
                }
            })
            .collect();
        Census { entries }
    }

    /// Total trainable values, each storage counted once.
    pub fn total(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.storage_id))
            .map(|e| e.count)
            .sum()
    }

    /// Sum over entries whose name starts with `prefix` (unique storages).
    pub fn total_with_prefix(&self, prefix: &str) -> usize {
        let mut seen = std::collections::HashSet::new();
        self.entries
            .iter()
            .filter(|e| e.name.starts_with(prefix) && seen.insert(e.storage_id))
            .map(|e| e.count)
            .sum()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<40} {:<16} {:>12} {:>8}\n", "name", "shape", "count", "storage"));
        for e in &self.entries {
            let shape = e
                .shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            out.push_str(&format!(
                "{:<40} {:<16} {:>12} {:>8}\n",
                e.name, shape, e.count, e.storage_id
            ));
        }
        out.push_str(&format!("total (shared storages counted once): {}\n", self.total()));
        out
    }
}
