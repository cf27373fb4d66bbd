//! The composition table: `min(1, Q_total × single_attempt)` for every
//! stack of two or more countermeasures, at 32-, 64- and 128-bit widths.

use serde::Serialize;

use super::{single_attempt, BoundParams, BoundResult};
use crate::countermeasures::StageKind::{self, *};
use crate::error::BoundError;

pub const TABLE1_COMPOSITIONS: [(&str, &[StageKind]); 11] = [
    ("ASLR⊗PointGuard", &[PointGuard, Aslr]),
    ("ASLR⊗ISR", &[Aslr, Isr]),
    ("PointGuard⊗ISR", &[PointGuard, Isr]),
    ("Canary⊗ASLR", &[Canary, Aslr]),
    ("Canary⊗PointGuard", &[Canary, PointGuard]),
    ("Canary⊗ISR", &[Canary, Isr]),
    ("ASLR⊗PointGuard⊗ISR", &[PointGuard, Aslr, Isr]),
    ("Canary⊗ASLR⊗PointGuard", &[Canary, PointGuard, Aslr]),
    ("Canary⊗ASLR⊗ISR", &[Canary, Aslr, Isr]),
    ("Canary⊗PointGuard⊗ISR", &[Canary, PointGuard, Isr]),
    ("Canary⊗ASLR⊗PointGuard⊗ISR", &[Canary, PointGuard, Aslr, Isr]),
];

/// Published exponents per row for 32-, 64- and 128-bit; `0` stands for "1".
pub const REFERENCE_EXPONENTS: [[i32; 3]; 11] = [
    [0, -23, -87],
    [-10, -75, -203],
    [-10, -75, -203],
    [-22, -87, -215],
    [-22, -87, -215],
    [-26, -91, -219],
    [-10, -75, -203],
    [-22, -87, -215],
    [-42, -139, -331],
    [-42, -139, -331],
    [-42, -139, -331],
];

pub const TABLE1_ARCHES: [u32; 3] = [32, 64, 128];

#[derive(Clone, Debug, Serialize)]
pub struct Table1Cell {
    pub arch: u32,
    pub bound: BoundResult,
    /// Published exponent, when the architecture is one of the table's columns.
    pub reference: Option<i32>,
}

impl Table1Cell {
    /// Integer exponent of the computed value; every cell is an exact power of two.
    pub fn exponent(&self) -> i32 {
        self.bound.log2_value.round() as i32
    }

    pub fn matches_reference(&self) -> Option<bool> {
        self.reference.map(|r| r == self.exponent())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1Row {
    pub composition: String,
    pub cells: Vec<Table1Cell>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table1 {
    pub q_total: u64,
    pub valid_size: u64,
    pub isa_size: u64,
    pub rows: Vec<Table1Row>,
}

pub fn table1(arches: &[u32], q_total: u64, valid_size: u64, isa_size: u64) -> Result<Table1, BoundError> {
    for &a in arches {
        if !TABLE1_ARCHES.contains(&a) {
            return Err(BoundError::Params(format!("architecture {a} not in {{32, 64, 128}}")));
        }
    }
    let rows = TABLE1_COMPOSITIONS
        .iter()
        .zip(REFERENCE_EXPONENTS.iter())
        .map(|((name, stages), refs)| {
            let cells = arches
                .iter()
                .map(|&arch| {
                    let params = BoundParams { n: arch, m: arch, valid_size, isa_size, q: q_total, ..Default::default() };
                    let one = single_attempt(stages, &params)?;
                    let bound = match one.exact {
                        Some(p) => BoundResult::from_rational(p * num_rational::BigRational::from_integer(q_total.into())),
                        None => BoundResult::from_log2(one.log2_value + (q_total as f64).log2()),
                    };
                    let col = TABLE1_ARCHES.iter().position(|&a| a == arch).unwrap();
                    Ok(Table1Cell { arch, bound, reference: Some(refs[col]) })
                })
                .collect::<Result<Vec<_>, BoundError>>()?;
            Ok(Table1Row { composition: name.to_string(), cells })
        })
        .collect::<Result<Vec<_>, BoundError>>()?;
    Ok(Table1 { q_total, valid_size, isa_size, rows })
}

impl Table1 {
    pub fn arches(&self) -> Vec<u32> {
        self.rows.first().map(|r| r.cells.iter().map(|c| c.arch).collect()).unwrap_or_default()
    }

    pub fn to_markdown(&self) -> String {
        let arches = self.arches();
        let mut out = String::from("| Composition |");
        for a in &arches {
            out.push_str(&format!(" {a}-bit |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(arches.len()));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("| {} |", row.composition));
            for c in &row.cells {
                out.push_str(&format!(" {} |", c.bound.label()));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("composition,arch,log2,label,reference_log2,clamped\n");
        for row in &self.rows {
            for c in &row.cells {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    row.composition,
                    c.arch,
                    c.exponent(),
                    c.bound.label(),
                    c.reference.map(|r| r.to_string()).unwrap_or_default(),
                    c.bound.clamped
                ));
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let arches = self.arches();
        let mut out = format!("{:<30}", "composition");
        for a in &arches {
            out.push_str(&format!("{:>14}", format!("{a}-bit")));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<30}", row.composition));
            for c in &row.cells {
                let mark = match c.matches_reference() {
                    Some(false) => "*",
                    _ => " ",
                };
                out.push_str(&format!("{:>13}{mark}", c.bound.label()));
            }
            out.push('\n');
        }
        if self.rows.iter().flat_map(|r| &r.cells).any(|c| c.matches_reference() == Some(false)) {
            out.push_str("* differs from the published value\n");
        }
        out
    }

    /// Cells whose exponent differs from the published one by more than `tolerance` bits.
    pub fn mismatches(&self, arch: u32, tolerance: i32) -> Vec<(String, i32, i32)> {
        self.rows
            .iter()
            .flat_map(|row| {
                row.cells.iter().filter(|c| c.arch == arch).filter_map(move |c| {
                    let r = c.reference?;
                    ((c.exponent() - r).abs() > tolerance).then(|| (row.composition.clone(), c.exponent(), r))
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn published() -> Table1 {
        table1(&TABLE1_ARCHES, 1 << 25, 1 << 16, 1 << 12).unwrap()
    }

    #[test]
    fn wide_columns_match_exactly() {
        let t = published();
        assert!(t.mismatches(64, 0).is_empty());
        assert!(t.mismatches(128, 0).is_empty());
        assert!(t.mismatches(32, 1).is_empty());
    }

    #[test]
    fn narrow_column_is_one_bit_below() {
        let t = published();
        for row in &t.rows[1..] {
            let c = &row.cells[0];
            assert_eq!(c.exponent(), c.reference.unwrap() - 1, "{}", row.composition);
        }
        assert!(t.rows[0].cells[0].bound.clamped);
        assert_eq!(t.rows[0].cells[0].bound.label(), "1");
    }

    #[test]
    fn spot_values() {
        let t = published();
        assert_eq!(t.rows[0].cells[1].bound.log2_value, -23.0);
        assert_eq!(t.rows[8].cells[2].bound.log2_value, -331.0);
        assert!(t.rows.iter().flat_map(|r| &r.cells).all(|c| c.bound.exact.is_some()));
    }

    #[test]
    fn renders() {
        let t = published();
        let md = t.to_markdown();
        assert_eq!(md.lines().count(), 13);
        assert!(md.contains("| ASLR⊗PointGuard | 1 | 2^-23 | 2^-87 |"));
        assert_eq!(t.to_csv().lines().count(), 34);
        assert!(table1(&[16], 1, 1, 1).is_err());
    }
}
