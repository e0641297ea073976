//! Bundled atomic mass table.

use std::collections::HashMap;
use std::sync::OnceLock;

const MASS_TABLE: &str = include_str!("../../data/atomic_masses.tsv");

pub const HYDROGEN_MASS: f64 = 1.008;

#[derive(Debug, Clone, Copy)]
pub struct ElementData {
    pub number: u8,
    pub mass: f64,
}

fn table() -> &'static HashMap<&'static str, ElementData> {
    static TABLE: OnceLock<HashMap<&'static str, ElementData>> = OnceLock::new();
    TABLE.get_or_init(|| {
        MASS_TABLE
            .lines()
            .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
            .map(|l| {
                let mut cols = l.split('\t');
                let sym = cols.next().expect("symbol");
                let number = cols
                    .next()
                    .and_then(|c| c.parse().ok())
                    .expect("atomic number");
                let mass = cols
                    .next()
                    .and_then(|c| c.trim().parse().ok())
                    .expect("mass");
                (sym, ElementData { number, mass })
            })
            .collect()
    })
}

pub fn lookup(symbol: &str) -> Option<ElementData> {
    table().get(symbol).copied()
}

pub fn is_known(symbol: &str) -> bool {
    table().contains_key(symbol)
}

pub fn is_halogen(symbol: &str) -> bool {
    matches!(symbol, "F" | "Cl" | "Br" | "I")
}

/// Allowed valences for organic-subset atoms written without brackets.
pub fn default_valences(symbol: &str) -> Option<&'static [u8]> {
    Some(match symbol {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3, 5],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => return None,
    })
}
