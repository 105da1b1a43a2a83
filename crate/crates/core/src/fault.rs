//! Fault placement, sequence-network fault shunts and reduction of the
//! pre-fault, fault-on and post-fault networks to machine internal nodes.

use std::fmt;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{build_ybus, BranchRecord, BusKind, BusRecord, PowerSystem, Sequence};
use crate::powerflow::OperatingPoint;
use crate::CMatrix;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultType {
    LG,
    LLG,
    LL,
    LLL,
}

impl FaultType {
    /// Inverse-CDF order.
    pub const ALL: [FaultType; 4] = [FaultType::LG, FaultType::LLG, FaultType::LL, FaultType::LLL];

    /// Occurrence probability of each fault category.
    pub fn probability(self) -> f64 {
        match self {
            FaultType::LG => 0.7,
            FaultType::LLG => 0.15,
            FaultType::LL => 0.1,
            FaultType::LLL => 0.05,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for FaultType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for FaultType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LG" => Ok(FaultType::LG),
            "LLG" => Ok(FaultType::LLG),
            "LL" => Ok(FaultType::LL),
            "LLL" => Ok(FaultType::LLL),
            _ => Err(Error::Domain(format!("unknown fault type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FaultTarget {
    /// Fault along a line at `fraction` of its length from the from bus.
    Line { id: String, fraction: f64 },
    Bus(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: FaultTarget,
    pub ftype: FaultType,
    pub zf: Complex64,
}

impl FaultSpec {
    pub fn bolted(target: FaultTarget, ftype: FaultType) -> Self {
        FaultSpec { target, ftype, zf: ZERO }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Impedance {
    Finite(Complex64),
    /// No path to the reference in this sequence network.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShuntAdmittance {
    Finite(Complex64),
    /// Zero effective impedance: the fault node is tied to ground.
    Grounded,
}

impl ShuntAdmittance {
    pub fn magnitude(self) -> f64 {
        match self {
            ShuntAdmittance::Finite(y) => y.norm(),
            ShuntAdmittance::Grounded => f64::INFINITY,
        }
    }
}

/// Reduced admittance matrices at machine internal nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMatrices {
    pub y_pre: CMatrix,
    pub y_fault: CMatrix,
    pub y_post: CMatrix,
}

/// Split `line_id` at `fraction` with an unloaded fictitious bus and return
/// the augmented system with the fault node index. Series impedance is
/// shared in proportion to `fraction`; the line charging is moved onto the
/// terminal buses. Fractions 0 and 1 reuse the terminal bus.
pub fn insert_fault_node(system: &PowerSystem, line_id: &str, fraction: f64) -> Result<(PowerSystem, usize)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Domain(format!("fault location {fraction} outside [0, 1]")));
    }
    let (k, line) = system.branch(line_id).ok_or_else(|| Error::UnknownElement(line_id.into()))?;
    if !line.in_service {
        return Err(Error::Domain(format!("line {line_id} is out of service")));
    }
    if fraction == 0.0 || fraction == 1.0 {
        let bus = if fraction == 0.0 { line.from_bus } else { line.to_bus };
        return Ok((system.clone(), system.bus_index(bus).expect("validated")));
    }

    let mut aug = system.clone();
    let fault_id = system.buses.iter().map(|b| b.id).max().unwrap_or(0) + 1;
    aug.buses.push(BusRecord {
        id: fault_id,
        name: format!("Fault {line_id}"),
        kind: BusKind::PQ,
        v_final: 1.0,
        angle_final_deg: 0.0,
        v_set: 0.0,
        p_load: 0.0,
        q_load: 0.0,
        p_gen: 0.0,
        q_gen: 0.0,
        q_max: 0.0,
        q_min: 0.0,
        g_shunt: 0.0,
        b_shunt: 0.0,
        base_kv: system.buses[system.bus_index(line.from_bus).expect("validated")].base_kv,
    });
    // The line's end charging stays at its terminals so the augmented
    // network is electrically identical to the original one.
    for bus in [line.from_bus, line.to_bus] {
        let i = system.bus_index(bus).expect("validated");
        aug.buses[i].b_shunt += line.b / 2.0;
    }
    let seg = |suffix: &str, from: u32, to: u32, share: f64| BranchRecord {
        id: format!("{}#{suffix}", line.id),
        from_bus: from,
        to_bus: to,
        r: line.r * share,
        x: line.x * share,
        b: 0.0,
        ..line.clone()
    };
    let a = seg("a", line.from_bus, fault_id, fraction);
    let b = seg("b", fault_id, line.to_bus, 1.0 - fraction);
    aug.branches.splice(k..=k, [a, b]);
    aug.reindex()?;
    let idx = aug.n_buses() - 1;
    Ok((aug, idx))
}

/// Constant-impedance load admittances from an operating point.
pub fn load_admittances(op: &OperatingPoint) -> Vec<Complex64> {
    op.s_load.iter().zip(&op.v).map(|(s, v)| s.conj() / v.norm_sqr()).collect()
}

/// Bus-order sequence admittance matrix with loads (positive/negative only)
/// and machines tied to ground: X'd in positive/negative sequence, the
/// machine `x0` in zero sequence when grounded.
pub fn sequence_matrix(system: &PowerSystem, load_y: &[Complex64], sequence: Sequence) -> Result<CMatrix> {
    let mut y = build_ybus(system, sequence)?;
    if sequence != Sequence::Zero {
        for (k, yl) in load_y.iter().enumerate().take(system.n_buses()) {
            y[(k, k)] += yl;
        }
    }
    for m in &system.machines {
        let k = system.bus_index(m.bus).expect("validated");
        let x = match sequence {
            Sequence::Zero => match m.x0 {
                Some(x0) => x0 * system.system_mva / m.mva_base,
                None => continue,
            },
            _ => system.machine_xd_sys(m),
        };
        y[(k, k)] += Complex64::new(0.0, -1.0 / x);
    }
    Ok(y)
}

/// Driving-point impedance of `node` in the given sequence network.
pub fn thevenin_sequence_impedance(
    system: &PowerSystem,
    load_y: &[Complex64],
    node: usize,
    sequence: Sequence,
) -> Result<Impedance> {
    let y = sequence_matrix(system, load_y, sequence)?;
    driving_point(&y, node)
}

/// Z(node, node) of the inverse of `y`, restricted to the connected part of
/// the network holding `node`. A part with no shunt to ground yields
/// [`Impedance::Infinite`].
pub fn driving_point(y: &CMatrix, node: usize) -> Result<Impedance> {
    let n = y.nrows();
    let mut comp = vec![false; n];
    let mut stack = vec![node];
    comp[node] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            if !comp[v] && (y[(u, v)] != ZERO || y[(v, u)] != ZERO) {
                comp[v] = true;
                stack.push(v);
            }
        }
    }
    let members: Vec<usize> = (0..n).filter(|&i| comp[i]).collect();
    let scale = members.iter().map(|&i| y[(i, i)].norm()).fold(0.0, f64::max);
    let grounded = members
        .iter()
        .any(|&i| members.iter().map(|&j| y[(i, j)]).sum::<Complex64>().norm() > 1e-9 * scale.max(1.0));
    if !grounded {
        return Ok(Impedance::Infinite);
    }
    let m = members.len();
    let sub = CMatrix::from_fn(m, m, |a, b| y[(members[a], members[b])]);
    let pos = members.iter().position(|&i| i == node).expect("node is a member");
    let mut rhs = DVector::from_element(m, ZERO);
    rhs[pos] = Complex64::new(1.0, 0.0);
    let z = sub.lu().solve(&rhs).ok_or(Error::SingularPivot { node })?;
    Ok(Impedance::Finite(z[pos]))
}

/// Equivalent positive-sequence shunt representing an unbalanced fault.
pub fn effective_fault_admittance(ftype: FaultType, z0: Impedance, z2: Impedance, zf: Complex64) -> ShuntAdmittance {
    use Impedance::{Finite, Infinite};
    let zeff = match (ftype, z0, z2) {
        (FaultType::LLL, _, _) => Finite(zf),
        (FaultType::LL, _, Finite(z2)) => Finite(z2 + zf),
        (FaultType::LG, Finite(z0), Finite(z2)) => Finite(z0 + z2 + 3.0 * zf),
        (FaultType::LLG, Finite(z0), Finite(z2)) => {
            let zg = z0 + 3.0 * zf;
            Finite(z2 * zg / (z2 + zg))
        }
        (FaultType::LLG, Infinite, Finite(z2)) => Finite(z2),
        (FaultType::LLG, Finite(z0), Infinite) => Finite(z0 + 3.0 * zf),
        _ => Infinite,
    };
    match zeff {
        Finite(z) if z == ZERO => ShuntAdmittance::Grounded,
        Finite(z) => ShuntAdmittance::Finite(z.inv()),
        Infinite => ShuntAdmittance::Finite(ZERO),
    }
}

/// Eliminate every node not in `keep`; result rows/columns follow `keep`.
pub fn kron_reduce(y: &CMatrix, keep: &[usize]) -> Result<CMatrix> {
    let n = y.nrows();
    let mut kept = vec![false; n];
    for &k in keep {
        kept[k] = true;
    }
    let mut w: Vec<Complex64> = (0..n * n).map(|i| y[(i / n, i % n)]).collect();
    let scale = (0..n).map(|i| w[i * n + i].norm()).fold(0.0, f64::max).max(1.0);
    let mut alive = vec![true; n];
    for p in (0..n).filter(|&p| !kept[p]) {
        let pivot = w[p * n + p];
        if !(pivot.norm() > 1e-12 * scale) {
            return Err(Error::SingularPivot { node: p });
        }
        alive[p] = false;
        let inv = pivot.inv();
        for i in (0..n).filter(|&i| alive[i]) {
            let f = w[i * n + p] * inv;
            if f == ZERO {
                continue;
            }
            for j in (0..n).filter(|&j| alive[j]) {
                let d = f * w[p * n + j];
                w[i * n + j] -= d;
            }
        }
    }
    Ok(CMatrix::from_fn(keep.len(), keep.len(), |a, b| w[keep[a] * n + keep[b]]))
}

/// Bus-plus-internal-node matrix: network, constant-impedance loads and a
/// 1/(jX'd) link from each machine bus to its internal node (appended after
/// the buses in machine order).
fn extended_matrix(system: &PowerSystem, load_y: &[Complex64]) -> Result<CMatrix> {
    let nb = system.n_buses();
    let nm = system.machines.len();
    let ybus = build_ybus(system, Sequence::Positive)?;
    let mut y = CMatrix::zeros(nb + nm, nb + nm);
    y.view_mut((0, 0), (nb, nb)).copy_from(&ybus);
    for (k, yl) in load_y.iter().enumerate().take(nb) {
        y[(k, k)] += yl;
    }
    for (m, mach) in system.machines.iter().enumerate() {
        let b = system.bus_index(mach.bus).expect("validated");
        let e = nb + m;
        let ym = Complex64::new(0.0, -1.0 / system.machine_xd_sys(mach));
        y[(b, b)] += ym;
        y[(e, e)] += ym;
        y[(b, e)] -= ym;
        y[(e, b)] -= ym;
    }
    Ok(y)
}

/// Reduce an extended matrix to internal nodes after deleting `drop` nodes
/// (grounded or isolated).
fn reduce_to_machines(y: &CMatrix, n_buses: usize, drop: &[usize]) -> Result<CMatrix> {
    let n = y.nrows();
    let live: Vec<usize> = (0..n).filter(|i| !drop.contains(i)).collect();
    let sub = CMatrix::from_fn(live.len(), live.len(), |a, b| y[(live[a], live[b])]);
    let keep: Vec<usize> = live.iter().enumerate().filter(|(_, &i)| i >= n_buses).map(|(a, _)| a).collect();
    kron_reduce(&sub, &keep)
}

/// Resolve a fault target to (host line id, fraction along it).
pub fn fault_host(system: &PowerSystem, target: &FaultTarget) -> Result<(String, f64)> {
    match target {
        FaultTarget::Line { id, fraction } => Ok((id.clone(), *fraction)),
        FaultTarget::Bus(bus) => {
            let line = system
                .host_line_for_bus(*bus)
                .ok_or_else(|| Error::UnknownElement(format!("bus {bus} has no in-service line")))?;
            let f = if line.from_bus == *bus { 0.0 } else { 1.0 };
            Ok((line.id.clone(), f))
        }
    }
}

/// Pre-fault, fault-on and post-fault matrices at the machine internal
/// nodes. The post-fault network has the host line removed.
pub fn build_phase_matrices(system: &PowerSystem, op: &OperatingPoint, fault: &FaultSpec) -> Result<PhaseMatrices> {
    if !op.converged {
        return Err(Error::Domain("operating point has not converged".into()));
    }
    let load_y = load_admittances(op);
    let nb = system.n_buses();
    let y_pre = reduce_to_machines(&extended_matrix(system, &load_y)?, nb, &[])?;

    let (line_id, fraction) = fault_host(system, &fault.target)?;
    let (_, line) = system.branch(&line_id).ok_or_else(|| Error::UnknownElement(line_id.clone()))?;
    if !line.in_service {
        return Ok(PhaseMatrices { y_fault: y_pre.clone(), y_post: y_pre.clone(), y_pre });
    }

    let (aug, node) = insert_fault_node(system, &line_id, fraction)?;
    let mut y_ext = extended_matrix(&aug, &load_y)?;
    let shunt = match fault.ftype {
        FaultType::LLL => effective_fault_admittance(FaultType::LLL, Impedance::Infinite, Impedance::Infinite, fault.zf),
        ftype => {
            let z2 = thevenin_sequence_impedance(&aug, &load_y, node, Sequence::Negative)?;
            let z0 = if ftype == FaultType::LL {
                Impedance::Infinite
            } else {
                thevenin_sequence_impedance(&aug, &load_y, node, Sequence::Zero)?
            };
            effective_fault_admittance(ftype, z0, z2, fault.zf)
        }
    };
    let y_fault = match shunt {
        ShuntAdmittance::Grounded => reduce_to_machines(&y_ext, aug.n_buses(), &[node])?,
        ShuntAdmittance::Finite(ys) => {
            y_ext[(node, node)] += ys;
            reduce_to_machines(&y_ext, aug.n_buses(), &[])?
        }
    };

    let y_post = post_fault_matrix(system, &load_y, &line_id)?;
    Ok(PhaseMatrices { y_pre, y_fault, y_post })
}

/// Reduced matrix with `line_id` open at both ends. Passive buses cut off
/// from every machine are dropped; machines split across islands are an
/// error.
pub fn post_fault_matrix(system: &PowerSystem, load_y: &[Complex64], line_id: &str) -> Result<CMatrix> {
    let mut post = system.clone();
    let (k, _) = post.branch(line_id).ok_or_else(|| Error::UnknownElement(line_id.into()))?;
    post.branches[k].in_service = false;

    let label = post.components(|_| true);
    let machine_buses: Vec<(u32, usize)> = post
        .machines
        .iter()
        .map(|m| (m.bus, post.bus_index(m.bus).expect("validated")))
        .collect();
    if let Some(&(_, first)) = machine_buses.first() {
        if let Some(&(bus, _)) = machine_buses.iter().find(|(_, i)| label[*i] != label[first]) {
            return Err(Error::MachineIslanded { bus });
        }
    }
    let live = machine_buses.first().map(|&(_, i)| label[i]);
    let drop: Vec<usize> = (0..post.n_buses()).filter(|&i| Some(label[i]) != live).collect();
    reduce_to_machines(&extended_matrix(&post, load_y)?, post.n_buses(), &drop)
}
