//! Machine-dynamics sidecar (JSON).
//!
//! ```json
//! { "machines": [{ "bus": 1, "h": 5.148, "xd_prime": 0.2995, "d": 2.0,
//!                  "mva_base": 615.0, "is_condenser": false, "x0": 0.1 }],
//!   "zero_sequence": { "line_x0_ratio": 3.0, "line_r0_ratio": 3.0,
//!                      "transformers": [{ "branch": "Trf_0004_0007", "connection": "yg_yg" }] } }
//! ```
//!
//! Values are on the machine MVA base. `x0` is the machine zero-sequence
//! reactance; omit it for an ungrounded neutral.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::PowerSystem;
use crate::error::{Error, Result};

/// Classical-model machine parameters, machine MVA base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineDynamics {
    pub bus: u32,
    /// Inertia constant, s.
    pub h: f64,
    pub xd_prime: f64,
    #[serde(default)]
    pub d: f64,
    pub mva_base: f64,
    #[serde(default)]
    pub is_condenser: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

/// Winding connection of a two-winding transformer, from side first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformerConnection {
    /// Grounded wye on both sides: series zero-sequence path.
    YgYg,
    /// Grounded wye on the from side, delta on the to side.
    YgD,
    /// Delta on the from side, grounded wye on the to side.
    DYg,
    /// No zero-sequence path at all.
    DD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerOverride {
    pub branch: String,
    pub connection: TransformerConnection,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroSequenceData {
    #[serde(default = "default_ratio")]
    pub line_x0_ratio: f64,
    #[serde(default = "default_ratio")]
    pub line_r0_ratio: f64,
    #[serde(default = "default_connection")]
    pub default_connection: TransformerConnection,
    #[serde(default)]
    pub transformers: Vec<TransformerOverride>,
}

fn default_ratio() -> f64 {
    3.0
}

fn default_connection() -> TransformerConnection {
    TransformerConnection::DYg
}

impl Default for ZeroSequenceData {
    fn default() -> Self {
        ZeroSequenceData {
            line_x0_ratio: default_ratio(),
            line_r0_ratio: default_ratio(),
            default_connection: default_connection(),
            transformers: Vec::new(),
        }
    }
}

impl ZeroSequenceData {
    pub fn transformer(&self, branch: &str) -> Option<&TransformerOverride> {
        self.transformers.iter().find(|t| t.branch == branch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsData {
    pub machines: Vec<MachineDynamics>,
    #[serde(default)]
    pub zero_sequence: ZeroSequenceData,
}

/// Parse and check a dynamics sidecar against `system`.
pub fn load_dynamics(text: &str, system: &PowerSystem) -> Result<DynamicsData> {
    let data: DynamicsData = serde_json::from_str(text)?;
    let mut seen = HashSet::new();
    for m in &data.machines {
        if system.bus_index(m.bus).is_none() {
            return Err(Error::UnknownBus { bus: m.bus, context: "machine".into() });
        }
        if !seen.insert(m.bus) {
            return Err(Error::Validation(format!("more than one machine at bus {}", m.bus)));
        }
        let finite = [m.h, m.xd_prime, m.d, m.mva_base].iter().all(|v| v.is_finite());
        if !finite || m.h <= 0.0 {
            return Err(Error::Validation(format!("machine at bus {}: h must be positive", m.bus)));
        }
        if m.xd_prime <= 0.0 || m.mva_base <= 0.0 {
            return Err(Error::Validation(format!(
                "machine at bus {}: xd_prime and mva_base must be positive",
                m.bus
            )));
        }
        if m.d < 0.0 {
            return Err(Error::Validation(format!("machine at bus {}: negative damping", m.bus)));
        }
        if m.x0.is_some_and(|x| !(x > 0.0)) {
            return Err(Error::Validation(format!("machine at bus {}: x0 must be positive", m.bus)));
        }
    }
    for t in &data.zero_sequence.transformers {
        match system.branch(&t.branch) {
            Some((_, b)) if !b.is_line => {}
            Some(_) => return Err(Error::Validation(format!("{} is a line, not a transformer", t.branch))),
            None => return Err(Error::UnknownElement(t.branch.clone())),
        }
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::parse_cdf;

    const CASE14: &str = include_str!("../../data/case14.cdf");
    const DYN14: &str = include_str!("../../data/dyn14.json");

    #[test]
    fn shipped_sidecar() {
        let sys = parse_cdf(CASE14).unwrap();
        let d = load_dynamics(DYN14, &sys).unwrap();
        assert_eq!(d.machines.len(), 5);
        assert_eq!(d.machines.iter().filter(|m| m.is_condenser).count(), 3);
        assert_eq!(d.zero_sequence.line_x0_ratio, 3.0);
    }

    #[test]
    fn zero_inertia_rejected() {
        let sys = parse_cdf(CASE14).unwrap();
        let text = r#"{"machines":[{"bus":1,"h":0.0,"xd_prime":0.3,"d":0,"mva_base":100}]}"#;
        assert!(matches!(load_dynamics(text, &sys), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_bus_rejected() {
        let sys = parse_cdf(CASE14).unwrap();
        let text = r#"{"machines":[{"bus":99,"h":3.0,"xd_prime":0.3,"d":0,"mva_base":100}]}"#;
        assert!(matches!(load_dynamics(text, &sys), Err(Error::UnknownBus { bus: 99, .. })));
    }

    #[test]
    fn override_must_name_a_transformer() {
        let sys = parse_cdf(CASE14).unwrap();
        let text = r#"{"machines":[],"zero_sequence":{"transformers":[{"branch":"Line_0006_0013","connection":"d_d"}]}}"#;
        assert!(load_dynamics(text, &sys).is_err());
        let text = r#"{"machines":[],"zero_sequence":{"transformers":[{"branch":"Trf_0004_0007","connection":"d_d"}]}}"#;
        let d = load_dynamics(text, &sys).unwrap();
        assert_eq!(d.zero_sequence.transformer("Trf_0004_0007").unwrap().connection, TransformerConnection::DD);
    }
}
