//! SMILES emission with a fixed traversal: each component starts at the atom
//! with the smallest (degree, element, index), then depth-first with
//! lowest-index neighbors first. Output is self-consistent, not canonical
//! across toolkits.

use std::collections::{BTreeMap, BTreeSet};

use super::{Atom, BondOrder, Molecule};

const ORGANIC: &[&str] = &["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC_ORGANIC: &[&str] = &["B", "C", "N", "O", "P", "S"];

fn atom_token(atom: &Atom) -> String {
    let plain = !atom.bracket
        && atom.charge == 0
        && atom.isotope.is_none()
        && if atom.aromatic {
            AROMATIC_ORGANIC.contains(&atom.element.as_str())
        } else {
            ORGANIC.contains(&atom.element.as_str())
        };
    let symbol = if atom.aromatic {
        atom.element.to_lowercase()
    } else {
        atom.element.clone()
    };
    if plain {
        return symbol;
    }
    let mut s = String::from("[");
    if let Some(iso) = atom.isotope {
        s.push_str(&iso.to_string());
    }
    s.push_str(&symbol);
    match atom.hydrogens {
        0 => {}
        1 => s.push('H'),
        n => s.push_str(&format!("H{n}")),
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_token(mol: &Molecule, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atoms[a].aromatic && mol.atoms[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(n: u32) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

struct Plan {
    /// Tree children per atom in emission order.
    children: Vec<Vec<usize>>,
    /// Ring-closure partners per atom in discovery order.
    rings: Vec<Vec<usize>>,
}

fn plan(mol: &Molecule, root: usize, visited: &mut [bool], p: &mut Plan) {
    let mut seen_ring: BTreeSet<(usize, usize)> = BTreeSet::new();
    // Iterative DFS to avoid recursion limits on long chains.
    let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
    visited[root] = true;
    while let Some(frame) = stack.last_mut() {
        let (v, parent, cursor) = *frame;
        let nbrs = mol.neighbors(v);
        if cursor >= nbrs.len() {
            stack.pop();
            continue;
        }
        frame.2 += 1;
        let n = nbrs[cursor].0;
        if Some(n) == parent {
            continue;
        }
        if visited[n] {
            let key = (v.min(n), v.max(n));
            if seen_ring.insert(key) {
                p.rings[n].push(v);
                p.rings[v].push(n);
            }
            continue;
        }
        visited[n] = true;
        p.children[v].push(n);
        stack.push((n, Some(v), 0));
    }
}

pub fn to_smiles(mol: &Molecule) -> String {
    let n = mol.atoms.len();
    let mut visited = vec![false; n];
    let mut p = Plan {
        children: vec![Vec::new(); n],
        rings: vec![Vec::new(); n],
    };
    let key = |i: usize| (mol.degree(i), mol.atoms[i].element.clone(), i);
    let mut roots = Vec::new();
    while let Some(root) = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| key(i)) {
        plan(mol, root, &mut visited, &mut p);
        roots.push(root);
    }

    let order_of = |a: usize, b: usize| {
        mol.bonds
            .iter()
            .find(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
            .map(|bd| bd.order)
            .expect("planned edge exists")
    };

    let mut out = Vec::new();
    for root in roots {
        let mut s = String::new();
        let mut open: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        let mut in_use: BTreeSet<u32> = BTreeSet::new();
        let mut emitted = vec![false; n];
        // Work stack of atoms (with the parent they hang from) and branch parentheses.
        enum Step {
            Atom(usize, Option<usize>),
            Text(&'static str),
        }
        let mut stack = vec![Step::Atom(root, None)];
        while let Some(step) = stack.pop() {
            let (v, parent) = match step {
                Step::Text(t) => {
                    s.push_str(t);
                    continue;
                }
                Step::Atom(v, parent) => (v, parent),
            };
            if let Some(u) = parent {
                s.push_str(bond_token(mol, u, v, order_of(u, v)));
            }
            s.push_str(&atom_token(&mol.atoms[v]));
            emitted[v] = true;
            // Closings first, then openings.
            let (closing, opening): (Vec<usize>, Vec<usize>) =
                p.rings[v].iter().partition(|&&m| emitted[m] && m != v);
            for m in closing {
                let label = open.remove(&(m.min(v), m.max(v))).expect("ring was opened");
                in_use.remove(&label);
                s.push_str(bond_token(mol, m, v, order_of(m, v)));
                s.push_str(&ring_label(label));
            }
            for m in opening {
                let label = (1..).find(|l| !in_use.contains(l)).expect("free label");
                in_use.insert(label);
                open.insert((m.min(v), m.max(v)), label);
                s.push_str(&ring_label(label));
            }
            let kids = &p.children[v];
            for (i, &c) in kids.iter().enumerate().rev() {
                let last = i + 1 == kids.len();
                if last {
                    stack.push(Step::Atom(c, Some(v)));
                } else {
                    stack.push(Step::Text(")"));
                    stack.push(Step::Atom(c, Some(v)));
                    stack.push(Step::Text("("));
                }
            }
        }
        out.push(s);
    }
    out.join(".")
}
