use super::table::EDGE_CORNERS;
use super::SignedCube;
use crate::field::{CubeSample, UdfGrid};
use crate::geom::vec3;

/// Edge `e` relation bit: `1` when the corners differ.
pub fn edge_relations(signs: &[i8; 8]) -> [u8; 12] {
    EDGE_CORNERS.map(|(a, b)| u8::from(signs[a] != signs[b]))
}

/// Walks the relations outward from corner 0 (set positive). Returns `None`
/// when some relation contradicts the labels already assigned.
pub fn propagate_relations(rel: &[u8; 12]) -> Option<[i8; 8]> {
    let mut signs = [0i8; 8];
    signs[0] = 1;
    let mut stack = vec![0usize];
    while let Some(v) = stack.pop() {
        for (e, &(a, b)) in EDGE_CORNERS.iter().enumerate() {
            let w = if a == v {
                b
            } else if b == v {
                a
            } else {
                continue;
            };
            let want = if rel[e] == 1 { -signs[v] } else { signs[v] };
            if signs[w] == 0 {
                signs[w] = want;
                stack.push(w);
            } else if signs[w] != want {
                return None;
            }
        }
    }
    Some(signs)
}

/// Relations from corner gradients: same sign iff `⟨g_a, g_b⟩ > 0`.
pub fn gradient_relations(grads: &[[f64; 3]; 8]) -> [u8; 12] {
    EDGE_CORNERS.map(|(a, b)| u8::from(vec3::dot(grads[a], grads[b]) <= 0.0))
}

/// Labels agreeing with the most relations, corner 0 positive; ties go to the
/// first labelling in class order.
pub fn majority_labels(rel: &[u8; 12]) -> [i8; 8] {
    let mut best = ([1i8; 8], 0usize);
    for class in 0..128usize {
        let signs: [i8; 8] = std::array::from_fn(|c| if c > 0 && (class >> (c - 1)) & 1 == 1 { -1 } else { 1 });
        let agree = edge_relations(&signs).iter().zip(rel).filter(|(a, b)| a == b).count();
        if agree > best.1 {
            best = (signs, agree);
        }
    }
    best.0
}

/// Gradient-voting signs per cube and the number of cubes whose relations
/// admitted no consistent labelling.
pub fn assign_signs_gradient_baseline(grid: &UdfGrid, anchors: &[[usize; 3]]) -> (Vec<SignedCube>, usize) {
    let mut conflicts = 0;
    let cubes = anchors
        .iter()
        .map(|&anchor| {
            let verts: [[usize; 3]; 8] = std::array::from_fn(|b| {
                let s = CubeSample::corner_site(b);
                [anchor[0] + s[0], anchor[1] + s[1], anchor[2] + s[2]]
            });
            let idx = verts.map(|v| grid.index(v[0], v[1], v[2]));
            let grads = idx.map(|i| grid.grad[i]);
            let rel = gradient_relations(&grads);
            let signs = propagate_relations(&rel).unwrap_or_else(|| {
                conflicts += 1;
                majority_labels(&rel)
            });
            SignedCube { anchor, signs, udf: idx.map(|i| grid.udf[i]) }
        })
        .collect();
    (cubes, conflicts)
}

/// Whether relations around a closed loop of corners are contradictory: an
/// odd number of "opposite" links.
pub fn loop_conflicts(relations: &[u8]) -> bool {
    relations.iter().map(|&r| r as usize).sum::<usize>() % 2 == 1
}

/// The edge left out when counting independent edge compositions: its
/// relation follows from the other eleven for any consistent labelling.
pub const IMPLIED_EDGE: usize = 11;

/// Edge-relation compositions over the cube's eleven independent edges that
/// admit no corner labelling: `2¹¹ − 128 = 1920`.
pub fn count_conflicting_edge_patterns() -> usize {
    (0..1usize << 11)
        .filter(|&bits| {
            let mut signs = [0i8; 8];
            signs[0] = 1;
            // Propagate over the eleven edges until fixed point.
            let edges: Vec<(usize, (usize, usize))> = EDGE_CORNERS.iter().copied().enumerate().filter(|(e, _)| *e != IMPLIED_EDGE).collect();
            let rel = |k: usize| (bits >> k) & 1;
            let mut changed = true;
            while changed {
                changed = false;
                for (k, &(_, (a, b))) in edges.iter().enumerate() {
                    let f = if rel(k) == 1 { -1 } else { 1 };
                    if signs[a] != 0 && signs[b] == 0 {
                        signs[b] = signs[a] * f;
                        changed = true;
                    } else if signs[b] != 0 && signs[a] == 0 {
                        signs[a] = signs[b] * f;
                        changed = true;
                    }
                }
            }
            edges.iter().enumerate().any(|(k, &(_, (a, b)))| (signs[a] != signs[b]) as usize != rel(k))
        })
        .count()
}

/// The same count over all twelve edges: `2¹² − 128 = 3968`.
pub fn count_conflicting_edge_patterns_all_edges() -> usize {
    (0..1usize << 12)
        .filter(|&bits| {
            let rel: [u8; 12] = std::array::from_fn(|e| ((bits >> e) & 1) as u8);
            propagate_relations(&rel).is_none()
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    /// Patterns actually produced by labellings, counted from the other side.
    fn reachable(edges: &[usize]) -> usize {
        (0..256usize)
            .map(|b| {
                let s: [i8; 8] = std::array::from_fn(|c| if b >> c & 1 == 1 { -1 } else { 1 });
                let r = edge_relations(&s);
                edges.iter().map(|&e| r[e]).collect::<Vec<_>>()
            })
            .collect::<HashSet<_>>()
            .len()
    }

    #[test]
    fn conflict_counts_match_enumeration() {
        let eleven: Vec<usize> = (0..12).filter(|&e| e != IMPLIED_EDGE).collect();
        assert_eq!(reachable(&eleven), 128);
        assert_eq!(count_conflicting_edge_patterns(), (1 << 11) - reachable(&eleven));
        assert_eq!(count_conflicting_edge_patterns(), 1920);
        let all: Vec<usize> = (0..12).collect();
        assert_eq!(count_conflicting_edge_patterns_all_edges(), (1 << 12) - reachable(&all));
        assert_eq!(count_conflicting_edge_patterns_all_edges(), 3968);
    }

    #[test]
    fn all_same_is_consistent() {
        assert_eq!(propagate_relations(&[0; 12]), Some([1; 8]));
    }

    #[test]
    fn square_walkthrough_conflicts() {
        // A–B opposite, A–C opposite, C–D same, B–D opposite, as a loop A B D C.
        let ab = 1;
        let bd = 1;
        let dc = 0;
        let ca = 1;
        assert!(loop_conflicts(&[ab, bd, dc, ca]));
        // The same pattern on the bottom face of a cube with corners
        // A=0, B=1, C=2, D=3 and every vertical edge "same".
        let mut rel = [0u8; 12];
        rel[0] = ab; // 0-1
        rel[3] = ca; // 0-2
        rel[2] = dc; // 2-3
        rel[1] = bd; // 1-3
        assert!(propagate_relations(&rel).is_none());
    }

    #[test]
    fn linear_field_has_no_conflicts() {
        let mut grads = [[0.0; 3]; 8];
        for (b, g) in grads.iter_mut().enumerate() {
            *g = if b & 1 == 1 { [1.0, 0.0, 0.0] } else { [-1.0, 0.0, 0.0] };
        }
        let rel = gradient_relations(&grads);
        let s = propagate_relations(&rel).unwrap();
        assert_eq!(s, [1, -1, 1, -1, 1, -1, 1, -1]);
    }

    #[test]
    fn majority_resolves_to_a_nearest_labelling() {
        let mut rel = edge_relations(&[1, -1, 1, -1, 1, -1, 1, -1]);
        rel[5] ^= 1;
        assert!(propagate_relations(&rel).is_none());
        let s = majority_labels(&rel);
        let agree = edge_relations(&s).iter().zip(&rel).filter(|(a, b)| a == b).count();
        assert_eq!(agree, 11);
    }
}
