use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{PowerSystem, TransformerConnection};
use crate::error::{Error, Result};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sequence {
    Positive,
    Negative,
    Zero,
}

const J: Complex64 = Complex64::new(0.0, 1.0);

/// Nodal admittance matrix of the branch network and bus shunts, in bus
/// order. Machines and loads are not included.
///
/// Positive and negative sequence share the branch data. Zero sequence
/// scales line impedances by the sidecar ratios and follows each
/// transformer's winding connection; line charging and bus shunts are left
/// out of the zero-sequence network.
pub fn build_ybus(system: &PowerSystem, sequence: Sequence) -> Result<CMatrix> {
    let n = system.n_buses();
    let mut y = CMatrix::zeros(n, n);
    let zs = &system.zero_sequence;

    for br in system.branches.iter().filter(|b| b.in_service) {
        if br.x == 0.0 {
            return Err(Error::SingularElement(br.id.clone()));
        }
        let f = system.bus_index(br.from_bus).expect("validated");
        let t = system.bus_index(br.to_bus).expect("validated");

        if sequence == Sequence::Zero {
            if br.is_line {
                let z0 = Complex64::new(br.r * zs.line_r0_ratio, br.x * zs.line_x0_ratio);
                stamp_series(&mut y, f, t, z0.inv());
            } else {
                let ov = zs.transformer(&br.id);
                let conn = ov.map_or(zs.default_connection, |o| o.connection);
                let z0 = Complex64::new(
                    ov.and_then(|o| o.r0).unwrap_or(br.r),
                    ov.and_then(|o| o.x0).unwrap_or(br.x),
                );
                let y0 = z0.inv();
                match conn {
                    TransformerConnection::YgYg => stamp_series(&mut y, f, t, y0),
                    TransformerConnection::YgD => y[(f, f)] += y0,
                    TransformerConnection::DYg => y[(t, t)] += y0,
                    TransformerConnection::DD => {}
                }
            }
            continue;
        }

        let ys = Complex64::new(br.r, br.x).inv();
        let ych = J * (br.b / 2.0);
        let shift = br.shift_deg.to_radians();
        let shift = if sequence == Sequence::Negative { -shift } else { shift };
        let tap = Complex64::from_polar(br.tap, shift);
        y[(f, f)] += (ys + ych) / (br.tap * br.tap);
        y[(t, t)] += ys + ych;
        y[(f, t)] -= ys / tap.conj();
        y[(t, f)] -= ys / tap;
    }

    if sequence != Sequence::Zero {
        for (i, bus) in system.buses.iter().enumerate() {
            y[(i, i)] += Complex64::new(bus.g_shunt, bus.b_shunt);
        }
    }
    Ok(y)
}

fn stamp_series(y: &mut CMatrix, f: usize, t: usize, ys: Complex64) {
    y[(f, f)] += ys;
    y[(t, t)] += ys;
    y[(f, t)] -= ys;
    y[(t, f)] -= ys;
}
