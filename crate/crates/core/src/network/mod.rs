//! Static network model: buses, branches, machines and breakers.

mod breakers;
mod cdf;
mod dynamics;
mod ybus;

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use breakers::{build_breaker_registry, BreakerEntry, BreakerRegistry};
pub use cdf::{parse_cdf, write_cdf};
pub use dynamics::{
    load_dynamics, DynamicsData, MachineDynamics, TransformerConnection, TransformerOverride,
    ZeroSequenceData,
};
pub use ybus::{build_ybus, Sequence};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BusKind {
    Slack,
    PV,
    PQ,
}

/// One bus of the case. Loads and generation stay in MW/MVar as read from
/// the file; use the `*_pu` accessors on [`PowerSystem`] internally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusRecord {
    pub id: u32,
    pub name: String,
    pub kind: BusKind,
    /// Voltage magnitude from the solved case in the file.
    pub v_final: f64,
    pub angle_final_deg: f64,
    /// Voltage setpoint for slack and PV buses, 0 when unspecified.
    pub v_set: f64,
    pub p_load: f64,
    pub q_load: f64,
    pub p_gen: f64,
    pub q_gen: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub id: String,
    pub from_bus: u32,
    pub to_bus: u32,
    pub circuit: u8,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b: f64,
    /// Off-nominal turns ratio on the from side; 1.0 for lines.
    pub tap: f64,
    pub shift_deg: f64,
    pub is_line: bool,
    pub in_service: bool,
}

/// Validated network plus optional machine dynamics and breakers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerSystem {
    pub name: String,
    pub system_mva: f64,
    pub f0: f64,
    pub buses: Vec<BusRecord>,
    pub branches: Vec<BranchRecord>,
    pub machines: Vec<MachineDynamics>,
    pub zero_sequence: ZeroSequenceData,
    pub breakers: BreakerRegistry,
    #[serde(skip)]
    index: HashMap<u32, usize>,
}

impl PowerSystem {
    /// Assemble and validate a network without machines.
    pub fn new(
        name: impl Into<String>,
        system_mva: f64,
        buses: Vec<BusRecord>,
        branches: Vec<BranchRecord>,
    ) -> Result<Self> {
        let mut sys = PowerSystem {
            name: name.into(),
            system_mva,
            f0: 60.0,
            buses,
            branches,
            machines: Vec::new(),
            zero_sequence: ZeroSequenceData::default(),
            breakers: BreakerRegistry::default(),
            index: HashMap::new(),
        };
        sys.reindex()?;
        sys.validate()?;
        Ok(sys)
    }

    /// Attach machine data (already checked against this system) and derive
    /// the breaker registry.
    pub fn with_dynamics(mut self, dynamics: DynamicsData) -> Result<Self> {
        for m in &dynamics.machines {
            if self.bus_index(m.bus).is_none() {
                return Err(Error::UnknownBus { bus: m.bus, context: "machine".into() });
            }
        }
        self.machines = dynamics.machines;
        self.zero_sequence = dynamics.zero_sequence;
        self.breakers = build_breaker_registry(&self);
        Ok(self)
    }

    /// Parse a CDF case and a dynamics sidecar into a complete system.
    pub fn from_texts(cdf: &str, dynamics: &str) -> Result<Self> {
        let sys = parse_cdf(cdf)?;
        let dyn_data = load_dynamics(dynamics, &sys)?;
        sys.with_dynamics(dyn_data)
    }

    pub(crate) fn reindex(&mut self) -> Result<()> {
        self.index.clear();
        for (i, b) in self.buses.iter().enumerate() {
            if self.index.insert(b.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        Ok(())
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated system has a slack bus")
    }

    pub fn branch(&self, id: &str) -> Option<(usize, &BranchRecord)> {
        self.branches.iter().enumerate().find(|(_, b)| b.id == id)
    }

    /// In-service transmission lines in file order.
    pub fn lines(&self) -> impl Iterator<Item = &BranchRecord> {
        self.branches.iter().filter(|b| b.is_line && b.in_service)
    }

    pub fn n_lines(&self) -> usize {
        self.lines().count()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.p_load).sum()
    }

    pub fn total_load_mvar(&self) -> f64 {
        self.buses.iter().map(|b| b.q_load).sum()
    }

    /// Machine reactance converted to the system base.
    pub fn machine_xd_sys(&self, m: &MachineDynamics) -> f64 {
        m.xd_prime * self.system_mva / m.mva_base
    }

    /// Machine inertia converted to the system base, seconds.
    pub fn machine_h_sys(&self, m: &MachineDynamics) -> f64 {
        m.h * m.mva_base / self.system_mva
    }

    /// Damping on the system base (scales with machine rating like H).
    pub fn machine_d_sys(&self, m: &MachineDynamics) -> f64 {
        m.d * m.mva_base / self.system_mva
    }

    /// Lowest-index in-service line touching `bus`; hosts faults at that bus.
    pub fn host_line_for_bus(&self, bus: u32) -> Option<&BranchRecord> {
        self.lines().find(|b| b.from_bus == bus || b.to_bus == bus)
    }

    /// Check the structural invariants of the network.
    pub fn validate(&self) -> Result<()> {
        if self.buses.len() < 2 || !self.branches.iter().any(|b| b.in_service) {
            return Err(Error::Validation(
                "network needs at least two buses and one in-service branch".into(),
            ));
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(Error::Validation(format!("expected exactly one slack bus, found {slacks}")));
        }
        for br in &self.branches {
            for bus in [br.from_bus, br.to_bus] {
                if self.bus_index(bus).is_none() {
                    return Err(Error::UnknownBus { bus, context: format!("branch {}", br.id) });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(Error::Validation(format!("branch {} connects bus {} to itself", br.id, br.from_bus)));
            }
            if br.x == 0.0 {
                return Err(Error::SingularElement(br.id.clone()));
            }
        }
        let comp = self.components(|_| true);
        if let Some((i, _)) = comp.iter().enumerate().find(|(_, &c)| c != comp[0]) {
            return Err(Error::Validation(format!(
                "bus {} is not connected to the rest of the network",
                self.buses[i].id
            )));
        }
        Ok(())
    }

    /// Connected-component label per bus over in-service branches accepted
    /// by `keep`.
    pub(crate) fn components(&self, keep: impl Fn(&BranchRecord) -> bool) -> Vec<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.in_service && keep(b)) {
            let (f, t) = (self.index[&br.from_bus], self.index[&br.to_bus]);
            adj[f].push(t);
            adj[t].push(f);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            label[start] = next;
            while let Some(u) = queue.pop_front() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }
}

/// Identifier for a branch: `Line_0006_0013`, `Trf_0004_0007`, with a
/// `/circuit` suffix when parallel circuits of the same kind share the
/// bus pair.
pub fn branch_ids(branches: &[(u32, u32, u8, bool)]) -> Vec<String> {
    let mut count: BTreeMap<(u32, u32, bool), usize> = BTreeMap::new();
    for &(f, t, _, line) in branches {
        *count.entry((f.min(t), f.max(t), line)).or_default() += 1;
    }
    branches
        .iter()
        .map(|&(f, t, ckt, line)| {
            let prefix = if line { "Line" } else { "Trf" };
            let base = format!("{prefix}_{f:04}_{t:04}");
            if count[&(f.min(t), f.max(t), line)] > 1 {
                format!("{base}/{ckt}")
            } else {
                base
            }
        })
        .collect()
}

/// `Bus_0006` style label.
pub fn bus_label(id: u32) -> String {
    format!("Bus_{id:04}")
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub fn bus(id: u32, kind: BusKind, p_load: f64, q_load: f64) -> BusRecord {
        BusRecord {
            id,
            name: format!("B{id}"),
            kind,
            v_final: 1.0,
            angle_final_deg: 0.0,
            v_set: if kind == BusKind::PQ { 0.0 } else { 1.0 },
            p_load,
            q_load,
            p_gen: 0.0,
            q_gen: 0.0,
            q_max: 0.0,
            q_min: 0.0,
            g_shunt: 0.0,
            b_shunt: 0.0,
            base_kv: 0.0,
        }
    }

    pub fn line(id: &str, from: u32, to: u32, r: f64, x: f64, b: f64) -> BranchRecord {
        BranchRecord {
            id: id.into(),
            from_bus: from,
            to_bus: to,
            circuit: 1,
            r,
            x,
            b,
            tap: 1.0,
            shift_deg: 0.0,
            is_line: true,
            in_service: true,
        }
    }
}
