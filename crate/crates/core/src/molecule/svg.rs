//! Deterministic 2-D depiction as SVG.
//!
//! Layout is breadth-first from atom 0. Ring members are placed on regular
//! polygons the first time the traversal touches a ring; other neighbors fan
//! out radially away from the incoming bond. Each bond becomes exactly one
//! `<line>` (single, aromatic) or `<path>` (double, triple) and each
//! non-carbon or charged atom exactly one `<text>` label.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use super::{parse_smiles, BondOrder, Molecule, SmilesError};

pub const MIN_DIMENSION: u32 = 64;
pub const MAX_DIMENSION: u32 = 4096;
const MARGIN: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SvgError {
    #[error(transparent)]
    Parse(#[from] SmilesError),
    #[error("{field} must be in [{MIN_DIMENSION}, {MAX_DIMENSION}], got {value}")]
    Dimension { field: &'static str, value: u32 },
}

pub fn generate_smiles_image(
    text: &str,
    width_px: u32,
    height_px: u32,
) -> Result<String, SvgError> {
    for (field, value) in [("width_px", width_px), ("height_px", height_px)] {
        if !(MIN_DIMENSION..=MAX_DIMENSION).contains(&value) {
            return Err(SvgError::Dimension { field, value });
        }
    }
    let mol = parse_smiles(text)?;
    Ok(render(&mol, width_px, height_px))
}

type Point = (f64, f64);

/// Cycles from the breadth-first tree: one per non-tree edge.
fn tree_cycles(mol: &Molecule, parent: &[Option<usize>], depth: &[usize]) -> Vec<Vec<usize>> {
    let mut cycles = Vec::new();
    for b in &mol.bonds {
        if parent[b.a] == Some(b.b) || parent[b.b] == Some(b.a) {
            continue;
        }
        let (mut x, mut y) = (b.a, b.b);
        let (mut left, mut right) = (vec![x], vec![y]);
        while x != y {
            if depth[x] >= depth[y] {
                x = parent[x].expect("non-root has parent");
                left.push(x);
            } else {
                y = parent[y].expect("non-root has parent");
                right.push(y);
            }
        }
        right.pop();
        right.reverse();
        left.extend(right);
        cycles.push(left);
    }
    cycles.sort_by_key(|c| c.len());
    cycles
}

fn bfs_tree(mol: &Molecule) -> (Vec<Option<usize>>, Vec<usize>, Vec<usize>) {
    let n = mol.atoms.len();
    let mut parent = vec![None; n];
    let mut depth = vec![0; n];
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            order.push(v);
            for (w, _) in mol.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some(v);
                    depth[w] = depth[v] + 1;
                    q.push_back(w);
                }
            }
        }
    }
    (parent, depth, order)
}

fn layout(mol: &Molecule) -> Vec<Point> {
    let n = mol.atoms.len();
    let (parent, depth, _) = bfs_tree(mol);
    let cycles = tree_cycles(mol, &parent, &depth);
    let mut pos: Vec<Option<Point>> = vec![None; n];
    let mut came_from: Vec<Option<usize>> = vec![None; n];
    let mut offset_x = 0.0;

    for start in 0..n {
        if pos[start].is_some() {
            continue;
        }
        pos[start] = Some((offset_x, 0.0));
        let mut q = VecDeque::from([start]);
        while let Some(v) = q.pop_front() {
            let pv = pos[v].expect("queued atoms are placed");
            let away = match came_from[v].and_then(|u| pos[u]) {
                Some(pu) => (pv.1 - pu.1).atan2(pv.0 - pu.0),
                None => 0.0,
            };

            for cyc in cycles.iter().filter(|c| c.contains(&v)) {
                let placed: Vec<usize> =
                    cyc.iter().copied().filter(|&a| pos[a].is_some()).collect();
                if placed.len() == cyc.len() {
                    continue;
                }
                let k = cyc.len();
                let radius = 1.0 / (2.0 * (PI / k as f64).sin());
                let at = cyc.iter().position(|&a| a == v).expect("cycle contains v");
                let rotated: Vec<usize> = (0..k).map(|i| cyc[(at + i) % k]).collect();
                let (center, base) = if placed.len() == 1 {
                    let c = (pv.0 + radius * away.cos(), pv.1 + radius * away.sin());
                    (c, (pv.1 - c.1).atan2(pv.0 - c.0))
                } else if placed.len() == 2
                    && (rotated[1] == placed[0]
                        || rotated[1] == placed[1]
                        || rotated[k - 1] == placed[0]
                        || rotated[k - 1] == placed[1])
                {
                    // Fused ring: share the placed edge, grow on the far side.
                    let other = if pos[rotated[1]].is_some() {
                        rotated[1]
                    } else {
                        rotated[k - 1]
                    };
                    let po = pos[other].expect("placed");
                    let mid = ((pv.0 + po.0) / 2.0, (pv.1 + po.1) / 2.0);
                    let (ex, ey) = (po.0 - pv.0, po.1 - pv.1);
                    let len = (ex * ex + ey * ey).sqrt().max(1e-9);
                    let normal = (-ey / len, ex / len);
                    let apothem = (radius * radius - 0.25).max(0.0).sqrt();
                    let (sx, sy) = placed_centroid(&pos);
                    let side = if (mid.0 - sx) * normal.0 + (mid.1 - sy) * normal.1 >= 0.0 {
                        1.0
                    } else {
                        -1.0
                    };
                    let c = (
                        mid.0 + side * apothem * normal.0,
                        mid.1 + side * apothem * normal.1,
                    );
                    (c, (pv.1 - c.1).atan2(pv.0 - c.0))
                } else {
                    continue;
                };
                // Walk direction so that a shared neighbor lands on its spot.
                let step = 2.0 * PI / k as f64;
                let dir = match pos[rotated[1]] {
                    Some(p1) => {
                        let a1 = (p1.1 - center.1).atan2(p1.0 - center.0);
                        let ccw =
                            angle_diff(a1, base + step).abs() < angle_diff(a1, base - step).abs();
                        if ccw {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    None => 1.0,
                };
                for (i, &a) in rotated.iter().enumerate().skip(1) {
                    if pos[a].is_none() {
                        let ang = base + dir * step * i as f64;
                        pos[a] =
                            Some((center.0 + radius * ang.cos(), center.1 + radius * ang.sin()));
                        came_from[a] = Some(v);
                        q.push_back(a);
                    }
                }
            }

            let free: Vec<usize> = mol
                .neighbors(v)
                .into_iter()
                .map(|(w, _)| w)
                .filter(|&w| pos[w].is_none())
                .collect();
            let m = free.len();
            let has_parent = came_from[v].is_some();
            for (i, &w) in free.iter().enumerate() {
                let ang = match (has_parent, m) {
                    // Zig-zag chains.
                    (true, 1) => {
                        away + if depth[v] % 2 == 1 {
                            PI / 6.0
                        } else {
                            -PI / 6.0
                        }
                    }
                    (true, _) => away - PI / 3.0 + (2.0 * PI / 3.0) * i as f64 / (m - 1) as f64,
                    (false, _) => away + 2.0 * PI * i as f64 / m as f64,
                };
                pos[w] = Some((pv.0 + ang.cos(), pv.1 + ang.sin()));
                came_from[w] = Some(v);
                q.push_back(w);
            }
        }
        let max_x = pos.iter().flatten().map(|p| p.0).fold(f64::MIN, f64::max);
        offset_x = max_x + 2.0;
    }
    pos.into_iter()
        .map(|p| p.expect("every atom placed"))
        .collect()
}

fn placed_centroid(pos: &[Option<Point>]) -> Point {
    let pts: Vec<Point> = pos.iter().flatten().copied().collect();
    let k = pts.len().max(1) as f64;
    (
        pts.iter().map(|p| p.0).sum::<f64>() / k,
        pts.iter().map(|p| p.1).sum::<f64>() / k,
    )
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

fn render(mol: &Molecule, width: u32, height: u32) -> String {
    let pts = layout(mol);
    let (w, h) = (f64::from(width), f64::from(height));
    let min_x = pts.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let max_x = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let min_y = pts.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    let max_y = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);
    let scale = ((w - 2.0 * MARGIN) / span_x)
        .min((h - 2.0 * MARGIN) / span_y)
        .min(40.0);
    let cx = (min_x + max_x) / 2.0;
    let cy = (min_y + max_y) / 2.0;
    let to_px = |p: Point| (w / 2.0 + (p.0 - cx) * scale, h / 2.0 + (p.1 - cy) * scale);

    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    s.push('\n');
    let font = (scale * 0.45).clamp(8.0, 18.0);
    for b in &mol.bonds {
        let (x1, y1) = to_px(pts[b.a]);
        let (x2, y2) = to_px(pts[b.b]);
        match b.order {
            BondOrder::Single | BondOrder::Aromatic => {
                let dash = if b.order == BondOrder::Aromatic {
                    r#" stroke-dasharray="4 2""#
                } else {
                    ""
                };
                let _ = writeln!(
                    s,
                    r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="1.5"{dash}/>"#
                );
            }
            BondOrder::Double | BondOrder::Triple => {
                let len = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt().max(1e-9);
                let (nx, ny) = (-(y2 - y1) / len * 3.0, (x2 - x1) / len * 3.0);
                let offsets: &[f64] = if b.order == BondOrder::Double {
                    &[-0.5, 0.5]
                } else {
                    &[-1.0, 0.0, 1.0]
                };
                let d: Vec<String> = offsets
                    .iter()
                    .map(|k| {
                        format!(
                            "M{:.2} {:.2} L{:.2} {:.2}",
                            x1 + k * nx,
                            y1 + k * ny,
                            x2 + k * nx,
                            y2 + k * ny
                        )
                    })
                    .collect();
                let _ = writeln!(
                    s,
                    r#"<path d="{}" stroke="black" stroke-width="1.5" fill="none"/>"#,
                    d.join(" ")
                );
            }
        }
    }
    for (i, a) in mol.atoms.iter().enumerate() {
        if a.element == "C" && a.charge == 0 {
            continue;
        }
        let (x, y) = to_px(pts[i]);
        let charge = match a.charge {
            0 => String::new(),
            1 => "+".into(),
            -1 => "-".into(),
            c if c > 0 => format!("{c}+"),
            c => format!("{}-", -c),
        };
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{y:.2}" font-family="Helvetica" font-size="{font:.1}" text-anchor="middle" dominant-baseline="central">{}{charge}</text>"#,
            a.element
        );
    }
    s.push_str("</svg>\n");
    s
}
