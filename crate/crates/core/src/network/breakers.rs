use serde::{Deserialize, Serialize};

use super::PowerSystem;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerEntry {
    pub breaker_id: String,
    pub branch_id: String,
    pub terminal_bus: u32,
}

/// Two breakers per in-service line, one at each terminal. Transformers
/// carry none.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerRegistry {
    pub entries: Vec<BreakerEntry>,
}

impl BreakerRegistry {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn for_branch(&self, branch_id: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.branch_id == branch_id)
            .map(|e| e.breaker_id.as_str())
            .collect()
    }

    pub fn for_bus(&self, bus: u32) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.terminal_bus == bus)
            .map(|e| e.breaker_id.as_str())
            .collect()
    }

    /// Buses that own at least one breaker, ascending.
    pub fn buses(&self) -> Vec<u32> {
        let mut b: Vec<u32> = self.entries.iter().map(|e| e.terminal_bus).collect();
        b.sort_unstable();
        b.dedup();
        b
    }
}

/// Name breakers `B1..B2N` in branch order, from terminal first.
pub fn build_breaker_registry(system: &PowerSystem) -> BreakerRegistry {
    let mut entries = Vec::new();
    for line in system.lines() {
        for bus in [line.from_bus, line.to_bus] {
            entries.push(BreakerEntry {
                breaker_id: format!("B{}", entries.len() + 1),
                branch_id: line.id.clone(),
                terminal_bus: bus,
            });
        }
    }
    BreakerRegistry { entries }
}
