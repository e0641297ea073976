//! SMILES reader.
//!
//! Supported: organic-subset atoms, bracket atoms (isotope, chirality
//! markers, explicit H, charge, atom class), bonds `- = # :`, branches,
//! ring closures `0-9` and `%nn`, dot-separated components. Stereo markers
//! (`/`, `\`, `@`) are accepted and ignored.

use std::collections::BTreeMap;

use super::elements::{self, default_valences};
use super::{Atom, Bond, BondOrder, Molecule, SmilesError, SmilesErrorKind};

struct RingOpen {
    atom: usize,
    order: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    text: &'a str,
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    offsets: Vec<usize>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<usize>,
    rings: BTreeMap<u32, RingOpen>,
}

fn err(offset: usize, kind: SmilesErrorKind) -> SmilesError {
    SmilesError { offset, kind }
}

pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    if text.trim().is_empty() {
        return Err(err(0, SmilesErrorKind::Empty));
    }
    let mut p = Parser {
        text,
        bytes: text.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        offsets: Vec::new(),
        bonds: Vec::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
    };
    p.run()?;
    let mut mol = Molecule {
        atoms: p.atoms,
        bonds: p.bonds,
        source_smiles: text.to_string(),
    };
    assign_implicit_hydrogens(&mut mol, &p.offsets)?;
    Ok(mol)
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    let Some(prev) = self.prev else {
                        return Err(err(at, SmilesErrorKind::UnexpectedChar('(')));
                    };
                    if self.pending.is_some() {
                        return Err(err(at, SmilesErrorKind::DanglingBond));
                    }
                    self.branches.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(err(at, SmilesErrorKind::DanglingBond));
                    }
                    let Some(open) = self.branches.pop() else {
                        return Err(err(at, SmilesErrorKind::UnbalancedParenthesis));
                    };
                    self.prev = Some(open);
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(err(at, SmilesErrorKind::DanglingBond));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'/' | b'\\' => {
                    if self.prev.is_none() {
                        return Err(err(at, SmilesErrorKind::DanglingBond));
                    }
                    self.pos += 1;
                }
                b'.' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return Err(err(at, SmilesErrorKind::UnexpectedChar('.')));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_bond(u32::from(c - b'0'), at)?;
                }
                b'%' => {
                    let digits = self.bytes.get(at + 1..at + 3);
                    let label = match digits {
                        Some([a, b]) if a.is_ascii_digit() && b.is_ascii_digit() => {
                            u32::from(a - b'0') * 10 + u32::from(b - b'0')
                        }
                        _ => return Err(err(at, SmilesErrorKind::UnexpectedChar('%'))),
                    };
                    self.pos += 3;
                    self.ring_bond(label, at)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, at)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, at)?;
                }
            }
        }
        let end = self.bytes.len();
        if self.pending.is_some() {
            return Err(err(end, SmilesErrorKind::DanglingBond));
        }
        if !self.branches.is_empty() {
            return Err(err(end, SmilesErrorKind::UnbalancedParenthesis));
        }
        if let Some(open) = self.rings.values().min_by_key(|r| r.offset) {
            return Err(err(open.offset, SmilesErrorKind::UnclosedRing));
        }
        if self.atoms.is_empty() {
            return Err(err(0, SmilesErrorKind::Empty));
        }
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.offsets.push(offset);
        if let Some(prev) = self.prev {
            let order = self.take_order(prev, idx);
            self.push_bond(prev, idx, order, offset)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn take_order(&mut self, a: usize, b: usize) -> BondOrder {
        match self.pending.take() {
            Some((order, _)) => order,
            None => self.default_order(a, b),
        }
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn push_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        offset: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(err(offset, SmilesErrorKind::DuplicateBond));
        }
        let dup = self
            .bonds
            .iter()
            .any(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a));
        if dup {
            return Err(err(offset, SmilesErrorKind::DuplicateBond));
        }
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn ring_bond(&mut self, label: u32, at: usize) -> Result<(), SmilesError> {
        let Some(prev) = self.prev else {
            return Err(err(
                at,
                SmilesErrorKind::UnexpectedChar(self.text[at..].chars().next().unwrap_or('?')),
            ));
        };
        let pending = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&label) {
            Some(open) => {
                let order = match (open.order, pending) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(err(at, SmilesErrorKind::ConflictingRingBond))
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => self.default_order(open.atom, prev),
                };
                self.push_bond(open.atom, prev, order, at)
            }
            None => {
                self.rings.insert(
                    label,
                    RingOpen {
                        atom: prev,
                        order: pending,
                        offset: at,
                    },
                );
                Ok(())
            }
        }
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let at = self.pos;
        let c = self.bytes[at];
        let next = self.bytes.get(at + 1).copied();
        let (symbol, aromatic, len) = match (c, next) {
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b's', _) => ("S", true, 1),
            (b'p', _) => ("P", true, 1),
            _ => {
                let ch = self.text[at..].chars().next().unwrap_or('?');
                return Err(if ch.is_ascii_alphabetic() || ch == '*' {
                    err(at, SmilesErrorKind::UnknownElement(ch.to_string()))
                } else {
                    err(at, SmilesErrorKind::UnexpectedChar(ch))
                });
            }
        };
        self.pos += len;
        Ok(Atom {
            element: symbol.to_string(),
            aromatic,
            charge: 0,
            hydrogens: 0,
            bracket: false,
            isotope: None,
        })
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        (self.pos > start).then(|| self.text[start..self.pos].parse().unwrap_or(u32::MAX))
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        self.pos += 1;
        let isotope = self.digits().map(|d| d.min(u32::from(u16::MAX)) as u16);

        let sym_at = self.pos;
        let rest = &self.text[sym_at..];
        let (symbol, aromatic, len) =
            if let Some(s) = ["se", "as", "te"].iter().find(|s| rest.starts_with(**s)) {
                let mut up = s.to_string();
                up[..1].make_ascii_uppercase();
                (up, true, 2)
            } else {
                match self.peek() {
                    Some(c @ (b'b' | b'c' | b'n' | b'o' | b's' | b'p')) => {
                        ((c.to_ascii_uppercase() as char).to_string(), true, 1)
                    }
                    Some(c) if c.is_ascii_uppercase() => {
                        let two = self
                            .bytes
                            .get(sym_at + 1)
                            .filter(|n| n.is_ascii_lowercase())
                            .map(|n| format!("{}{}", c as char, *n as char));
                        match two {
                            Some(t) if elements::is_known(&t) => (t, false, 2),
                            _ => ((c as char).to_string(), false, 1),
                        }
                    }
                    _ => {
                        let ch = rest.chars().next().unwrap_or(']');
                        return Err(err(sym_at, SmilesErrorKind::UnknownElement(ch.to_string())));
                    }
                }
            };
        if !elements::is_known(&symbol) {
            return Err(err(sym_at, SmilesErrorKind::UnknownElement(symbol)));
        }
        self.pos += len;

        // Chirality, ignored.
        while self.peek() == Some(b'@') {
            self.pos += 1;
        }
        for class in ["TH", "AL", "SP", "TB", "OH"] {
            if self.text[self.pos..].starts_with(class) {
                self.pos += 2;
                self.digits();
                break;
            }
        }

        let mut hydrogens = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hydrogens = self.digits().map_or(1, |d| d.min(8) as u8);
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(d) = self.digits() {
                charge = unit * d.min(15) as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    charge += unit;
                }
            }
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            self.digits();
        }
        if self.peek() != Some(b']') {
            return Err(err(open, SmilesErrorKind::UnterminatedBracket));
        }
        self.pos += 1;
        Ok(Atom {
            element: symbol,
            aromatic,
            charge: charge.clamp(-15, 15) as i8,
            hydrogens,
            bracket: true,
            isotope,
        })
    }
}

/// Fills in hydrogen counts for atoms written without brackets.
///
/// Aromatic atoms use one unit of valence per aromatic bond plus one for
/// their membership in the aromatic system; when that exceeds the default
/// valence (pyrrole-type N, furan O) they simply carry no hydrogen.
fn assign_implicit_hydrogens(mol: &mut Molecule, offsets: &[usize]) -> Result<(), SmilesError> {
    let mut used = vec![0u32; mol.atoms.len()];
    for bond in &mol.bonds {
        let w = bond.order.valence_units();
        used[bond.a] += w;
        used[bond.b] += w;
    }
    for (i, atom) in mol.atoms.iter_mut().enumerate() {
        if atom.bracket {
            continue;
        }
        let valences = default_valences(&atom.element).expect("organic subset");
        let max = u32::from(*valences.last().expect("non-empty"));
        if used[i] > max {
            return Err(err(
                offsets[i],
                SmilesErrorKind::ValenceOverflow(atom.element.clone()),
            ));
        }
        atom.hydrogens = if atom.aromatic {
            let total = used[i] + 1;
            u32::from(valences[0]).saturating_sub(total) as u8
        } else {
            let target = valences
                .iter()
                .map(|&v| u32::from(v))
                .find(|&v| v >= used[i])
                .expect("used <= max");
            (target - used[i]) as u8
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(s: &str) -> Vec<u8> {
        parse_smiles(s)
            .unwrap()
            .atoms
            .iter()
            .map(|a| a.hydrogens)
            .collect()
    }

    #[test]
    fn ethanol_hydrogens() {
        let m = parse_smiles("CCO").unwrap();
        assert_eq!(m.atoms.len(), 3);
        assert_eq!(m.bonds.len(), 2);
        assert!(m.bonds.iter().all(|b| b.order == BondOrder::Single));
        assert_eq!(h("CCO"), [3, 2, 1]);
    }

    #[test]
    fn benzene_is_aromatic_ring() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.atoms.len(), 6);
        assert!(m.atoms.iter().all(|a| a.aromatic && a.element == "C"));
        assert_eq!(m.bonds.len(), 6);
        assert!(m.bonds.iter().all(|b| b.order == BondOrder::Aromatic));
        assert_eq!(h("c1ccccc1"), [1; 6]);
    }

    #[test]
    fn aromatic_heteroatoms() {
        assert_eq!(h("c1ccncc1"), [1, 1, 1, 0, 1, 1]);
        assert_eq!(h("c1ccoc1"), [1, 1, 1, 0, 1]);
        assert_eq!(h("c1cc[nH]c1"), [1, 1, 1, 1, 1]);
        assert_eq!(h("Cn1cccc1")[1], 0);
    }

    #[test]
    fn higher_valence_sulfur_and_phosphorus() {
        assert_eq!(h("CS(C)=O"), [3, 0, 3, 0]);
        assert_eq!(h("OP(=O)(O)O"), [1, 0, 0, 1, 1]);
        assert_eq!(h("NS(=O)(=O)C")[1], 0);
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[13CH4]").unwrap();
        assert_eq!(m.atoms[0].isotope, Some(13));
        assert_eq!(m.atoms[0].hydrogens, 4);
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atoms[0].charge, 1);
        let m = parse_smiles("[O--]").unwrap();
        assert_eq!(m.atoms[0].charge, -2);
        let m = parse_smiles("[Fe+3]").unwrap();
        assert_eq!(m.atoms[0].charge, 3);
        let m = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(m.atoms[1].hydrogens, 1);
        let m = parse_smiles("[se]1cccc1").unwrap();
        assert!(m.atoms[0].aromatic);
        assert_eq!(m.atoms[0].element, "Se");
    }

    #[test]
    fn stereo_markers_ignored() {
        let a = parse_smiles("F/C=C/F").unwrap();
        let b = parse_smiles("FC=CF").unwrap();
        assert_eq!(a.atoms, b.atoms);
        assert_eq!(a.bonds, b.bonds);
    }

    #[test]
    fn percent_ring_labels() {
        let m = parse_smiles("C%12CCCCC%12").unwrap();
        assert_eq!(m.bonds.len(), 6);
    }

    #[test]
    fn error_offsets() {
        let e = parse_smiles("C(C").unwrap_err();
        assert_eq!(e.offset, 3);
        assert_eq!(e.kind, SmilesErrorKind::UnbalancedParenthesis);
        assert!(e.to_string().contains("unbalanced parenthesis"));

        let e = parse_smiles("CC)C").unwrap_err();
        assert_eq!(
            (e.offset, e.kind),
            (2, SmilesErrorKind::UnbalancedParenthesis)
        );

        let e = parse_smiles("C1CC").unwrap_err();
        assert_eq!((e.offset, e.kind), (1, SmilesErrorKind::UnclosedRing));

        let e = parse_smiles("CCX").unwrap_err();
        assert_eq!(e.offset, 2);
        assert!(matches!(e.kind, SmilesErrorKind::UnknownElement(_)));

        let e = parse_smiles("C[Xx]").unwrap_err();
        assert_eq!(e.offset, 2);

        let e = parse_smiles("CC(C)(C)(C)C").unwrap_err();
        assert_eq!(e.offset, 1);
        assert!(matches!(e.kind, SmilesErrorKind::ValenceOverflow(_)));

        let e = parse_smiles("C11").unwrap_err();
        assert_eq!(e.kind, SmilesErrorKind::DuplicateBond);

        assert_eq!(parse_smiles("").unwrap_err().kind, SmilesErrorKind::Empty);
        assert_eq!(
            parse_smiles("C=").unwrap_err().kind,
            SmilesErrorKind::DanglingBond
        );
        assert_eq!(
            parse_smiles("[CH4").unwrap_err().kind,
            SmilesErrorKind::UnterminatedBracket
        );
    }

    #[test]
    fn dot_components() {
        let m = parse_smiles("[Na+].[Cl-]").unwrap();
        assert_eq!(m.atoms.len(), 2);
        assert!(m.bonds.is_empty());
    }
}
