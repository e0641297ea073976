//! Molecule kit: SMILES parsing, descriptors, name lookup, depiction and a
//! seeded property-guided generator.
//!
//! `logp_est` is a deliberately fictional linear surrogate for lipophilicity.
//! It is not a prediction of anything; it exists so that every downstream
//! number (HPLC retention, generation scores) is reproducible.

mod elements;
mod generate;
mod names;
mod parse;
mod svg;
mod writer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::round_to;

pub use elements::{default_valences, is_halogen, lookup as element_data, HYDROGEN_MASS};
pub use generate::{molmim_generate, GenerateError, Mode, Property, ScoreSpec, Scored};
pub use names::{smiles_from_molecule_name, NameError, NameMatch, NAME_THRESHOLD};
pub use parse::parse_smiles;
pub use svg::{generate_smiles_image, SvgError, MAX_DIMENSION, MIN_DIMENSION};
pub use writer::to_smiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Valence consumed at each endpoint.
    pub fn valence_units(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub element: String,
    pub aromatic: bool,
    pub charge: i8,
    /// Explicit count for bracket atoms, derived count otherwise.
    pub hydrogens: u8,
    pub bracket: bool,
    pub isotope: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub source_smiles: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SmilesErrorKind {
    Empty,
    UnbalancedParenthesis,
    UnclosedRing,
    UnknownElement(String),
    ValenceOverflow(String),
    UnexpectedChar(char),
    DanglingBond,
    DuplicateBond,
    ConflictingRingBond,
    UnterminatedBracket,
}

impl std::fmt::Display for SmilesErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SmilesErrorKind::Empty => write!(f, "empty SMILES"),
            SmilesErrorKind::UnbalancedParenthesis => write!(f, "unbalanced parenthesis"),
            SmilesErrorKind::UnclosedRing => write!(f, "unclosed ring bond"),
            SmilesErrorKind::UnknownElement(s) => write!(f, "unknown element '{s}'"),
            SmilesErrorKind::ValenceOverflow(s) => write!(f, "valence overflow on {s}"),
            SmilesErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            SmilesErrorKind::DanglingBond => write!(f, "bond symbol without a following atom"),
            SmilesErrorKind::DuplicateBond => write!(f, "duplicate bond between the same atoms"),
            SmilesErrorKind::ConflictingRingBond => {
                write!(f, "conflicting ring-closure bond orders")
            }
            SmilesErrorKind::UnterminatedBracket => write!(f, "unterminated bracket atom"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} at offset {offset}")]
pub struct SmilesError {
    /// 0-based character offset into the input.
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl Molecule {
    pub fn neighbors(&self, atom: usize) -> Vec<(usize, BondOrder)> {
        let mut out: Vec<_> = self
            .bonds
            .iter()
            .filter_map(|b| {
                if b.a == atom {
                    Some((b.b, b.order))
                } else if b.b == atom {
                    Some((b.a, b.order))
                } else {
                    None
                }
            })
            .collect();
        out.sort_by_key(|(n, _)| *n);
        out
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    /// Connected-component label per atom, labels numbered from 0 in order of
    /// the lowest atom index.
    pub fn components(&self) -> Vec<usize> {
        let n = self.atoms.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for b in &self.bonds {
            let (ra, rb) = (find(&mut parent, b.a), find(&mut parent, b.b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut labels = BTreeMap::new();
        (0..n)
            .map(|i| {
                let root = find(&mut parent, i);
                let next = labels.len();
                *labels.entry(root).or_insert(next)
            })
            .collect()
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Cyclomatic number: bonds − atoms + components.
    pub fn ring_count(&self) -> usize {
        (self.bonds.len() + self.component_count()).saturating_sub(self.atoms.len())
    }

    /// Whether the bond between `a` and `b` lies on a cycle.
    pub fn bond_in_ring(&self, a: usize, b: usize) -> bool {
        // Search for a path a→b that avoids the direct edge.
        let mut seen = vec![false; self.atoms.len()];
        let mut stack = vec![a];
        seen[a] = true;
        while let Some(x) = stack.pop() {
            for (y, _) in self.neighbors(x) {
                if x == a && y == b {
                    continue;
                }
                if y == b {
                    return true;
                }
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        false
    }

    /// Valence units used by bonds at `atom`.
    pub fn bond_valence(&self, atom: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .map(|b| b.order.valence_units())
            .sum()
    }

    /// Element counts including hydrogens, keyed by symbol.
    pub fn element_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for a in &self.atoms {
            *counts.entry(a.element.clone()).or_insert(0) += 1;
            if a.hydrogens > 0 {
                *counts.entry("H".to_string()).or_insert(0) += usize::from(a.hydrogens);
            }
        }
        counts
    }

    /// Molecular formula in Hill order: C then H when carbon is present,
    /// everything else alphabetical.
    pub fn formula(&self) -> String {
        let mut counts = self.element_counts();
        let mut out = String::new();
        let mut emit = |sym: &str, n: usize| {
            out.push_str(sym);
            if n > 1 {
                out.push_str(&n.to_string());
            }
        };
        if let Some(c) = counts.remove("C") {
            emit("C", c);
            if let Some(h) = counts.remove("H") {
                emit("H", h);
            }
        }
        for (sym, n) in counts {
            emit(&sym, n);
        }
        out
    }

    /// Average molecular weight from the bundled mass table.
    pub fn molecular_weight(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| {
                element_data(&a.element).map_or(0.0, |e| e.mass)
                    + f64::from(a.hydrogens) * HYDROGEN_MASS
            })
            .sum()
    }

    pub fn info(&self) -> MoleculeInfo {
        let count = |f: &dyn Fn(&Atom) -> bool| self.atoms.iter().filter(|a| f(a)).count();
        let is_no = |a: &Atom| a.element == "N" || a.element == "O";
        let c = count(&|a| a.element == "C");
        let no = count(&is_no);
        let halogens = count(&|a| is_halogen(&a.element));
        MoleculeInfo {
            formula: self.formula(),
            mw: round_to(self.molecular_weight(), 3),
            heavy_atoms: self.atoms.iter().filter(|a| a.element != "H").count(),
            rings: self.ring_count(),
            hbd: count(&|a| is_no(a) && a.hydrogens > 0),
            hba: no,
            logp_est: round_to(
                0.25 * c as f64 - 0.6 * no as f64 + 0.35 * halogens as f64,
                4,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeInfo {
    pub formula: String,
    /// g/mol, rounded to 3 decimals.
    pub mw: f64,
    pub heavy_atoms: usize,
    pub rings: usize,
    pub hbd: usize,
    pub hba: usize,
    /// Fictional surrogate: 0.25·C − 0.6·(N + O) + 0.35·halogens.
    pub logp_est: f64,
}

impl MoleculeInfo {
    pub fn property(&self, p: Property) -> f64 {
        match p {
            Property::Mw => self.mw,
            Property::LogpEst => self.logp_est,
            Property::Rings => self.rings as f64,
            Property::Hbd => self.hbd as f64,
            Property::Hba => self.hba as f64,
        }
    }
}

pub fn molecule_info_from_smiles(text: &str) -> Result<MoleculeInfo, SmilesError> {
    Ok(parse_smiles(text)?.info())
}

/// Bundled name table as `(name, smiles)` rows.
pub fn compound_table() -> &'static [(String, String)] {
    names::table()
}
