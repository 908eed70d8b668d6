use super::table::{case_index, case_triangles, EDGE_CORNERS};
use crate::geom::{vec3, Vec3};

/// A cube's eight corners (corner-bit order) with relative signs and UDF magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedCube {
    pub anchor: [usize; 3],
    pub signs: [i8; 8],
    pub udf: [f64; 8],
}

impl SignedCube {
    pub fn flipped(&self) -> Self {
        Self { signs: self.signs.map(|s| -s), ..*self }
    }

    pub fn crosses(&self) -> bool {
        self.signs.iter().any(|&s| s != self.signs[0])
    }
}

/// Zero crossing of `s_a·u_a` and `s_b·u_b` along an edge, measured from `a`.
pub fn crossing_parameter(ua: f64, ub: f64) -> f64 {
    let s = ua + ub;
    if s > 0.0 {
        ua / s
    } else {
        0.5
    }
}

/// Triangles with their vertices given as `(edge, t)` pairs, `t` measured from
/// the edge's first corner.
pub fn cube_crossings(cube: &SignedCube) -> Vec<[(usize, f64); 3]> {
    case_triangles(case_index(&cube.signs))
        .into_iter()
        .map(|t| {
            t.map(|e| {
                let (a, b) = EDGE_CORNERS[e];
                (e, crossing_parameter(cube.udf[a], cube.udf[b]))
            })
        })
        .collect()
}

/// Triangles of one cube with corners at `corners` (corner-bit order).
pub fn marching_cubes_at(cube: &SignedCube, corners: &[Vec3; 8]) -> Vec<[Vec3; 3]> {
    cube_crossings(cube)
        .into_iter()
        .map(|t| {
            t.map(|(e, s)| {
                let (a, b) = EDGE_CORNERS[e];
                vec3::lerp(corners[a], corners[b], s)
            })
        })
        .collect()
}

/// Triangles of one cube whose corner 0 is at `origin` with edge lengths `step`.
pub fn marching_cubes(cube: &SignedCube, origin: Vec3, step: Vec3) -> Vec<[Vec3; 3]> {
    let corners = std::array::from_fn(|b| [origin[0] + (b & 1) as f64 * step[0], origin[1] + ((b >> 1) & 1) as f64 * step[1], origin[2] + ((b >> 2) & 1) as f64 * step[2]]);
    marching_cubes_at(cube, &corners)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_negative_corner_gives_midpoint_triangle() {
        let mut signs = [1i8; 8];
        signs[0] = -1;
        let c = SignedCube { anchor: [0; 3], signs, udf: [1.0; 8] };
        let t = marching_cubes(&c, [0.0; 3], [1.0; 3]);
        assert_eq!(t.len(), 1);
        let mut v: Vec<Vec3> = t[0].to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(v, vec![[0.0, 0.0, 0.5], [0.0, 0.5, 0.0], [0.5, 0.0, 0.0]]);
        let n = vec3::cross(vec3::sub(t[0][1], t[0][0]), vec3::sub(t[0][2], t[0][0]));
        assert!(vec3::dot(n, [1.0; 3]) > 0.0);
    }

    #[test]
    fn uniform_signs_are_empty() {
        let c = SignedCube { anchor: [0; 3], signs: [-1; 8], udf: [0.3; 8] };
        assert!(marching_cubes(&c, [0.0; 3], [1.0; 3]).is_empty());
        assert!(marching_cubes(&c.flipped(), [0.0; 3], [1.0; 3]).is_empty());
    }

    proptest! {
        #[test]
        fn flip_keeps_vertices(bits in 0u8..=255, udf in prop::array::uniform8(1e-6f64..1.0)) {
            let signs = std::array::from_fn(|i| if bits >> i & 1 == 1 { -1 } else { 1 });
            let c = SignedCube { anchor: [0; 3], signs, udf };
            let a = marching_cubes(&c, [0.1, 0.2, 0.3], [0.5, 0.5, 0.5]);
            let b = marching_cubes(&c.flipped(), [0.1, 0.2, 0.3], [0.5, 0.5, 0.5]);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!([x[0], x[2], x[1]], *y);
            }
            for t in cube_crossings(&c) {
                for (_, s) in t {
                    prop_assert!(s > 0.0 && s < 1.0);
                }
            }
        }
    }
}
