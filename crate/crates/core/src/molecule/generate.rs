//! Seeded property-guided hill climbing, a small deterministic stand-in for
//! a learned molecule generator.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{parse_smiles, to_smiles, Atom, Bond, BondOrder, Molecule, SmilesError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Mw,
    LogpEst,
    Rings,
    Hbd,
    Hba,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Maximize,
    Minimize,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub property: Property,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_value: Option<f64>,
}

impl ScoreSpec {
    pub fn validate(&self) -> Result<(), GenerateError> {
        match (self.mode, self.target_value) {
            (Mode::Target, None) => Err(GenerateError::InvalidSpec(
                "target_value is required when mode is target".into(),
            )),
            (Mode::Target, Some(t)) if !t.is_finite() => Err(GenerateError::InvalidSpec(
                "target_value must be finite".into(),
            )),
            (Mode::Maximize | Mode::Minimize, Some(_)) => Err(GenerateError::InvalidSpec(
                "target_value is only allowed when mode is target".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn score(&self, mol: &Molecule) -> f64 {
        let v = mol.info().property(self.property);
        match self.mode {
            Mode::Maximize => v,
            Mode::Minimize => -v,
            Mode::Target => -(v - self.target_value.unwrap_or(0.0)).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub smiles: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerateError {
    #[error("seed SMILES: {0}")]
    Seed(#[from] SmilesError),
    #[error("invalid score spec: {0}")]
    InvalidSpec(String),
    #[error("{0} must be at least 1")]
    Range(&'static str),
}

const APPEND: [&str; 3] = ["C", "N", "O"];

fn plain_atom(element: &str) -> Atom {
    Atom {
        element: element.into(),
        aromatic: false,
        charge: 0,
        hydrogens: 0,
        bracket: false,
        isotope: None,
    }
}

fn mutate(mol: &Molecule, rng: &mut ChaCha8Rng) -> Option<Molecule> {
    let n = mol.atoms.len();
    let mut next = mol.clone();
    match rng.random_range(0..4u8) {
        0 => {
            let hosts: Vec<usize> = (0..n)
                .filter(|&i| !mol.atoms[i].bracket && mol.atoms[i].hydrogens > 0)
                .collect();
            if hosts.is_empty() {
                return None;
            }
            let host = hosts[rng.random_range(0..hosts.len())];
            let element = APPEND[rng.random_range(0..APPEND.len())];
            next.atoms.push(plain_atom(element));
            next.bonds.push(Bond {
                a: host,
                b: n,
                order: BondOrder::Single,
            });
        }
        1 => {
            if n < 2 {
                return None;
            }
            let terminals: Vec<usize> = (0..n).filter(|&i| mol.degree(i) == 1).collect();
            if terminals.is_empty() {
                return None;
            }
            let gone = terminals[rng.random_range(0..terminals.len())];
            next.atoms.remove(gone);
            next.bonds = mol
                .bonds
                .iter()
                .filter(|b| b.a != gone && b.b != gone)
                .map(|b| Bond {
                    a: b.a - usize::from(b.a > gone),
                    b: b.b - usize::from(b.b > gone),
                    order: b.order,
                })
                .collect();
        }
        2 => {
            let halogens: Vec<usize> = (0..n)
                .filter(|&i| {
                    !mol.atoms[i].bracket
                        && matches!(mol.atoms[i].element.as_str(), "F" | "Cl" | "Br")
                })
                .collect();
            if halogens.is_empty() {
                return None;
            }
            let i = halogens[rng.random_range(0..halogens.len())];
            next.atoms[i].element = match mol.atoms[i].element.as_str() {
                "F" => "Cl",
                "Cl" => "Br",
                _ => "F",
            }
            .into();
        }
        _ => {
            let toggles: Vec<usize> = mol
                .bonds
                .iter()
                .enumerate()
                .filter(|(_, b)| {
                    let (x, y) = (&mol.atoms[b.a], &mol.atoms[b.b]);
                    let plain = !x.aromatic && !y.aromatic && !x.bracket && !y.bracket;
                    let ok = match b.order {
                        BondOrder::Single => x.hydrogens > 0 && y.hydrogens > 0,
                        BondOrder::Double => true,
                        _ => false,
                    };
                    plain && ok && !mol.bond_in_ring(b.a, b.b)
                })
                .map(|(i, _)| i)
                .collect();
            if toggles.is_empty() {
                return None;
            }
            let i = toggles[rng.random_range(0..toggles.len())];
            next.bonds[i].order = match mol.bonds[i].order {
                BondOrder::Single => BondOrder::Double,
                _ => BondOrder::Single,
            };
        }
    }
    // Re-derive hydrogens and confirm the candidate is valid by re-parsing.
    parse_smiles(&to_smiles(&next)).ok()
}

/// Runs `n_iterations` mutation attempts from `seed_smiles` and returns up to
/// `top_k` distinct molecules (the seed plus every accepted step), best
/// first. Ties are broken by SMILES.
pub fn molmim_generate(
    seed_smiles: &str,
    spec: &ScoreSpec,
    n_iterations: u32,
    seed: u64,
    top_k: usize,
) -> Result<Vec<Scored>, GenerateError> {
    spec.validate()?;
    if n_iterations == 0 {
        return Err(GenerateError::Range("n_iterations"));
    }
    if top_k == 0 {
        return Err(GenerateError::Range("top_k"));
    }
    let start = parse_smiles(seed_smiles)?;
    let mut current = parse_smiles(&to_smiles(&start)).unwrap_or(start);
    let mut current_score = spec.score(&current);
    let mut pool: BTreeMap<String, f64> = BTreeMap::from([(to_smiles(&current), current_score)]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for _ in 0..n_iterations {
        let Some(candidate) = mutate(&current, &mut rng) else {
            continue;
        };
        let score = spec.score(&candidate);
        if score > current_score {
            pool.insert(to_smiles(&candidate), score);
            current = candidate;
            current_score = score;
        }
    }

    let mut out: Vec<Scored> = pool
        .into_iter()
        .map(|(smiles, score)| Scored { smiles, score })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.smiles.cmp(&b.smiles))
    });
    out.truncate(top_k);
    Ok(out)
}
