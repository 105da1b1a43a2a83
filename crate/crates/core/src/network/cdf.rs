//! IEEE Common Data Format reader and writer (fixed columns).

use std::fmt::Write as _;

use super::{branch_ids, BranchRecord, BusKind, BusRecord, PowerSystem};
use crate::error::{Error, Result};

/// 1-based inclusive column range.
#[derive(Clone, Copy)]
struct Col(usize, usize);

mod bus_col {
    use super::Col;
    pub const NUMBER: Col = Col(1, 4);
    pub const NAME: Col = Col(6, 17);
    pub const TYPE: Col = Col(25, 26);
    pub const V_FINAL: Col = Col(28, 33);
    pub const ANGLE: Col = Col(34, 40);
    pub const P_LOAD: Col = Col(41, 49);
    pub const Q_LOAD: Col = Col(50, 58);
    pub const P_GEN: Col = Col(59, 67);
    pub const Q_GEN: Col = Col(68, 75);
    pub const BASE_KV: Col = Col(77, 83);
    pub const V_SET: Col = Col(85, 90);
    pub const Q_MAX: Col = Col(91, 98);
    pub const Q_MIN: Col = Col(99, 106);
    pub const G_SHUNT: Col = Col(107, 114);
    pub const B_SHUNT: Col = Col(115, 122);
}

mod branch_col {
    use super::Col;
    pub const FROM: Col = Col(1, 4);
    pub const TO: Col = Col(6, 9);
    pub const CIRCUIT: Col = Col(17, 17);
    pub const TYPE: Col = Col(19, 19);
    pub const R: Col = Col(20, 29);
    pub const X: Col = Col(30, 40);
    pub const B: Col = Col(41, 50);
    pub const RATIO: Col = Col(77, 82);
    pub const SHIFT: Col = Col(84, 90);
}

const MVA_BASE: Col = Col(32, 37);
const CASE_ID: Col = Col(46, 73);

fn field(line: &str, Col(a, b): Col) -> &str {
    let end = b.min(line.len());
    if a > end {
        return "";
    }
    line.get(a - 1..end).unwrap_or("").trim()
}

struct Line<'a> {
    no: usize,
    text: &'a str,
}

impl Line<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse { line: self.no, msg: msg.into() }
    }

    fn int(&self, col: Col, what: &str) -> Result<i64> {
        let s = field(self.text, col);
        s.parse().map_err(|_| self.err(format!("{what}: expected integer in columns {}-{}, found {s:?}", col.0, col.1)))
    }

    fn int_or_zero(&self, col: Col, what: &str) -> Result<i64> {
        if field(self.text, col).is_empty() {
            Ok(0)
        } else {
            self.int(col, what)
        }
    }

    fn real(&self, col: Col, what: &str) -> Result<f64> {
        let s = field(self.text, col);
        if s.is_empty() {
            return Ok(0.0);
        }
        s.parse()
            .map_err(|_| self.err(format!("{what}: expected number in columns {}-{}, found {s:?}", col.0, col.1)))
    }
}

/// Parse an IEEE CDF case. Machines and breakers are not part of the format.
pub fn parse_cdf(text: &str) -> Result<PowerSystem> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, text)| Line { no: i + 1, text: text.trim_end_matches('\r') });

    let title = lines.next().filter(|l| !l.text.trim().is_empty()).ok_or_else(|| Error::Structure("empty file".into()))?;
    if !title.text.is_ascii() {
        return Err(title.err("non-ASCII title card"));
    }
    let system_mva = match title.real(MVA_BASE, "MVA base")? {
        v if v > 0.0 => v,
        _ => 100.0,
    };
    let name = field(title.text, CASE_ID).to_string();

    seek_section(&mut lines, "BUS DATA")?;
    let mut buses = Vec::new();
    for l in section_records(&mut lines, "bus")? {
        buses.push(parse_bus(&l)?);
    }

    seek_section(&mut lines, "BRANCH DATA")?;
    let mut raw = Vec::new();
    for l in section_records(&mut lines, "branch")? {
        raw.push(parse_branch(&l)?);
    }
    let ids = branch_ids(&raw.iter().map(|b| (b.from_bus, b.to_bus, b.circuit, b.is_line)).collect::<Vec<_>>());
    for (b, id) in raw.iter_mut().zip(ids) {
        b.id = id;
    }

    PowerSystem::new(name, system_mva, buses, raw)
}

fn seek_section<'a>(lines: &mut impl Iterator<Item = Line<'a>>, header: &str) -> Result<()> {
    for l in lines.by_ref() {
        if l.text.trim_start().starts_with(header) {
            return Ok(());
        }
    }
    Err(Error::Structure(format!("missing {header} section")))
}

fn section_records<'a>(lines: &mut impl Iterator<Item = Line<'a>>, what: &str) -> Result<Vec<Line<'a>>> {
    let mut out = Vec::new();
    for l in lines.by_ref() {
        if l.text.trim_start().starts_with("-999") {
            return Ok(out);
        }
        if l.text.trim().is_empty() {
            continue;
        }
        if !l.text.is_ascii() {
            return Err(l.err("non-ASCII record"));
        }
        out.push(l);
    }
    Err(Error::Structure(format!("{what} section is missing its -999 terminator")))
}

fn parse_bus(l: &Line) -> Result<BusRecord> {
    use bus_col::*;
    let id = l.int(NUMBER, "bus number")?;
    if id <= 0 {
        return Err(l.err(format!("bus number must be positive, found {id}")));
    }
    let kind = match l.int_or_zero(TYPE, "bus type")? {
        3 => BusKind::Slack,
        2 => BusKind::PV,
        0 | 1 => BusKind::PQ,
        t => return Err(l.err(format!("unknown bus type {t}"))),
    };
    Ok(BusRecord {
        id: id as u32,
        name: field(l.text, NAME).to_string(),
        kind,
        v_final: l.real(V_FINAL, "final voltage")?,
        angle_final_deg: l.real(ANGLE, "final angle")?,
        v_set: l.real(V_SET, "desired voltage")?,
        p_load: l.real(P_LOAD, "load MW")?,
        q_load: l.real(Q_LOAD, "load MVAR")?,
        p_gen: l.real(P_GEN, "generation MW")?,
        q_gen: l.real(Q_GEN, "generation MVAR")?,
        q_max: l.real(Q_MAX, "max MVAR")?,
        q_min: l.real(Q_MIN, "min MVAR")?,
        g_shunt: l.real(G_SHUNT, "shunt G")?,
        b_shunt: l.real(B_SHUNT, "shunt B")?,
        base_kv: l.real(BASE_KV, "base kV")?,
    })
}

fn parse_branch(l: &Line) -> Result<BranchRecord> {
    use branch_col::*;
    let from = l.int(FROM, "tap bus")?;
    let to = l.int(TO, "Z bus")?;
    if from <= 0 || to <= 0 {
        return Err(l.err("bus numbers must be positive"));
    }
    let circuit = l.int_or_zero(CIRCUIT, "circuit")?.clamp(0, 9) as u8;
    let kind = l.int_or_zero(TYPE, "branch type")?;
    let ratio = l.real(RATIO, "turns ratio")?;
    let shift = l.real(SHIFT, "phase shift")?;
    Ok(BranchRecord {
        id: String::new(),
        from_bus: from as u32,
        to_bus: to as u32,
        circuit: circuit.max(1),
        r: l.real(R, "resistance")?,
        x: l.real(X, "reactance")?,
        b: l.real(B, "charging")?,
        tap: if ratio == 0.0 { 1.0 } else { ratio },
        shift_deg: shift,
        is_line: kind == 0 && ratio == 0.0 && shift == 0.0,
        in_service: true,
    })
}

/// Place `s` right-aligned into a column range of `buf`.
fn put(buf: &mut [u8], Col(a, b): Col, s: &str, left: bool) {
    let w = b - a + 1;
    let s = if s.len() > w { &s[..w] } else { s };
    let start = if left { a - 1 } else { b - s.len() };
    buf[start..start + s.len()].copy_from_slice(s.as_bytes());
}

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

/// Serialize a system back to CDF columns. Only the fields this crate reads
/// are written; out-of-service branches are omitted.
pub fn write_cdf(system: &PowerSystem) -> String {
    let mut out = String::new();
    let mut title = vec![b' '; 73];
    put(&mut title, MVA_BASE, &num(system.system_mva), false);
    put(&mut title, CASE_ID, &system.name, true);
    out.push_str(String::from_utf8_lossy(&title).trim_end());
    out.push('\n');

    let _ = writeln!(out, "BUS DATA FOLLOWS{:>28} ITEMS", system.buses.len());
    for bus in &system.buses {
        use bus_col::*;
        let mut l = vec![b' '; 122];
        put(&mut l, NUMBER, &bus.id.to_string(), false);
        put(&mut l, NAME, &bus.name, true);
        put(&mut l, Col(19, 20), "1", false);
        put(&mut l, Col(21, 23), "1", false);
        let kind = match bus.kind {
            BusKind::Slack => "3",
            BusKind::PV => "2",
            BusKind::PQ => "0",
        };
        put(&mut l, TYPE, kind, false);
        for (col, v) in [
            (V_FINAL, bus.v_final),
            (ANGLE, bus.angle_final_deg),
            (P_LOAD, bus.p_load),
            (Q_LOAD, bus.q_load),
            (P_GEN, bus.p_gen),
            (Q_GEN, bus.q_gen),
            (BASE_KV, bus.base_kv),
            (V_SET, bus.v_set),
            (Q_MAX, bus.q_max),
            (Q_MIN, bus.q_min),
            (G_SHUNT, bus.g_shunt),
            (B_SHUNT, bus.b_shunt),
        ] {
            put(&mut l, col, &num(v), false);
        }
        out.push_str(&String::from_utf8_lossy(&l));
        out.push('\n');
    }
    out.push_str("-999\n");

    let branches: Vec<_> = system.branches.iter().filter(|b| b.in_service).collect();
    let _ = writeln!(out, "BRANCH DATA FOLLOWS{:>25} ITEMS", branches.len());
    for br in branches {
        use branch_col::*;
        let mut l = vec![b' '; 90];
        put(&mut l, FROM, &br.from_bus.to_string(), false);
        put(&mut l, TO, &br.to_bus.to_string(), false);
        put(&mut l, Col(11, 12), "1", false);
        put(&mut l, Col(13, 14), "1", false);
        put(&mut l, CIRCUIT, &br.circuit.to_string(), false);
        put(&mut l, TYPE, if br.is_line { "0" } else { "1" }, false);
        put(&mut l, R, &num(br.r), false);
        put(&mut l, X, &num(br.x), false);
        put(&mut l, B, &num(br.b), false);
        let ratio = if br.is_line { 0.0 } else { br.tap };
        put(&mut l, RATIO, &num(ratio), false);
        put(&mut l, SHIFT, &num(br.shift_deg), false);
        out.push_str(&String::from_utf8_lossy(&l));
        out.push('\n');
    }
    out.push_str("-999\nEND OF DATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const CASE14: &str = include_str!("../../data/case14.cdf");

    #[test]
    fn parses_shipped_case() {
        let sys = parse_cdf(CASE14).unwrap();
        assert_eq!(sys.buses.len(), 14);
        assert_eq!(sys.branches.len(), 21);
        assert_eq!(sys.n_lines(), 16);
        assert_eq!(sys.system_mva, 100.0);
        assert_eq!(sys.buses[sys.slack_index()].id, 1);
        assert!((sys.total_load_mw() - 259.0).abs() < 0.5);
        assert!((sys.total_load_mvar() - 81.3).abs() < 0.5);
        assert!(sys.buses.iter().all(|b| b.p_load >= 0.0));
        assert_eq!(sys.branches[0].id, "Line_0001_0002/1");
        assert_eq!(sys.branches[1].id, "Line_0001_0002/2");
        let t = sys.branch("Trf_0004_0007").unwrap().1;
        assert_eq!(t.tap, 0.978);
        assert!(!t.is_line);
        assert_eq!(sys.branch("Trf_0007_0008").unwrap().1.tap, 1.0);
        assert_eq!(sys.buses[8].b_shunt, 0.19);
    }

    #[test]
    fn empty_file_is_structural_error() {
        assert!(matches!(parse_cdf(""), Err(Error::Structure(_))));
        assert!(matches!(parse_cdf("\n\n"), Err(Error::Structure(_))));
    }

    #[test]
    fn missing_terminator_is_structural_error() {
        let cut: String = CASE14.lines().take(10).map(|l| format!("{l}\n")).collect();
        let err = parse_cdf(&cut).unwrap_err();
        assert!(matches!(err, Error::Structure(ref m) if m.contains("-999")), "{err}");
    }

    #[test]
    fn bad_field_names_line() {
        let bad = CASE14.replacen("  94.2", "  9x.2", 1);
        match parse_cdf(&bad) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 5);
                assert!(msg.contains("load MW"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_bus_is_validation_error() {
        let bad = CASE14.replacen("   2 Bus 2", "   1 Bus 2", 1);
        assert!(matches!(parse_cdf(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn single_bus_no_branches_rejected() {
        let text = format!(
            "{}\nBUS DATA FOLLOWS 1 ITEMS\n{}\n-999\nBRANCH DATA FOLLOWS 0 ITEMS\n-999\n",
            CASE14.lines().next().unwrap(),
            CASE14.lines().nth(2).unwrap()
        );
        assert!(matches!(parse_cdf(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn shipped_case_round_trips() {
        let a = parse_cdf(CASE14).unwrap();
        let b = parse_cdf(&write_cdf(&a)).unwrap();
        assert_eq!(a.name, b.name);
        assert_eq!(a.system_mva, b.system_mva);
        assert_eq!(a.buses, b.buses);
        assert_eq!(a.branches, b.branches);
    }

    fn decimal(max: i64, scale: f64) -> impl Strategy<Value = f64> {
        (-max..=max).prop_map(move |k| k as f64 / scale)
    }

    proptest! {
        #[test]
        fn random_records_round_trip(
            loads in proptest::collection::vec((decimal(99_999, 10.0), decimal(9_999, 10.0), decimal(999, 1000.0)), 3..8),
            xs in proptest::collection::vec((1i64..99_999, 0i64..9_999, 0i64..9_999), 2..10),
        ) {
            let n = loads.len() as u32;
            let mut text = String::from(" 01/01/00 TEST                  100.0 2000 S Random case\nBUS DATA FOLLOWS\n");
            let sys0 = parse_cdf(CASE14).unwrap();
            let mut buses = Vec::new();
            for (i, (p, q, b)) in loads.iter().enumerate() {
                let mut bus = sys0.buses[i].clone();
                bus.id = i as u32 + 1;
                bus.kind = if i == 0 { BusKind::Slack } else { BusKind::PQ };
                bus.p_load = *p;
                bus.q_load = *q;
                bus.b_shunt = *b;
                buses.push(bus);
            }
            let mut branches = Vec::new();
            for (k, (x, r, bc)) in xs.iter().enumerate() {
                let from = (k as u32 % (n - 1)) + 1;
                branches.push(BranchRecord {
                    id: String::new(),
                    from_bus: from,
                    to_bus: from + 1,
                    circuit: 1,
                    r: *r as f64 / 1e5,
                    x: *x as f64 / 1e5,
                    b: *bc as f64 / 1e4,
                    tap: 1.0,
                    shift_deg: 0.0,
                    is_line: true,
                    in_service: true,
                });
            }
            // connect the tail so the network is never split
            for to in 2..=n {
                branches.push(BranchRecord { from_bus: 1, to_bus: to, circuit: 3, ..branches[0].clone() });
            }
            let ids = branch_ids(&branches.iter().map(|b| (b.from_bus, b.to_bus, b.circuit, b.is_line)).collect::<Vec<_>>());
            for (b, id) in branches.iter_mut().zip(ids) { b.id = id; }
            let sys = PowerSystem::new("Random case", 100.0, buses, branches).unwrap();
            text.clear();
            text.push_str(&write_cdf(&sys));
            let back = parse_cdf(&text).unwrap();
            prop_assert_eq!(&sys.buses, &back.buses);
            prop_assert_eq!(&sys.branches, &back.branches);
        }
    }
}
