//! Structured triangulations of axis-aligned rectangles.
//!
//! An nx-by-ny grid of congruent cells is split by the diagonal from
//! each cell's lower-left to upper-right corner, producing two element
//! congruence classes: "lower" triangles (corner, right, diagonal) and
//! "upper" triangles (diagonal, top, left).  Vertices are numbered
//! row-major bottom-to-top, and every edge carries a global orientation
//! from its lower-numbered vertex to its higher-numbered one; on this
//! grid that convention is translation invariant, so all elements of a
//! class see identical edge directions.  The normal of an edge is its
//! global tangent rotated a quarter turn clockwise.
//!
//! When the rectangle straddles x = 0 or y = 0 the corresponding
//! subdivision count must be even, so that the coordinate axes are mesh
//! lines; data with |x|-type kinks is then smooth inside every element.

use crate::error::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// One triangle, vertices in counterclockwise order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triangle {
    /// Vertex indices; local edge i joins `v[i]` to `v[(i + 1) % 3]`.
    pub v: [usize; 3],
    /// Global edge index of each local edge.
    pub e: [usize; 3],
    /// +1 where the global edge normal points out of this triangle,
    /// -1 where it points in.
    pub sign: [i8; 3],
    /// Congruence class: 0 = lower (below the diagonal), 1 = upper.
    pub class: u8,
}

/// One edge, endpoints stored in ascending vertex order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub v: [usize; 2],
    pub boundary: bool,
}

/// Structured triangulation of `[ax, bx] x [ay, by]`.
#[derive(Debug, Clone)]
pub struct RectMesh {
    pub ax: f64,
    pub ay: f64,
    pub bx: f64,
    pub by: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Maximum element diameter (the cell diagonal).
    pub h: f64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<Edge>,
}

impl RectMesh {
    /// Build the mesh, rejecting subdivisions that would place a
    /// coordinate-axis kink line strictly inside elements.
    pub fn build(ax: f64, ay: f64, bx: f64, by: f64, nx: usize, ny: usize) -> Result<RectMesh> {
        if !(bx > ax) || !(by > ay) {
            return Err(Error::Config(format!(
                "degenerate rectangle [{ax}, {bx}] x [{ay}, {by}]"
            )));
        }
        if nx == 0 || ny == 0 {
            return Err(Error::ParamDomain {
                name: "subdivisions",
                value: 0.0,
                constraint: "nx, ny >= 1",
            });
        }
        if ax < 0.0 && bx > 0.0 && nx % 2 == 1 {
            return Err(Error::OddSubdivision { axis: "x", count: nx });
        }
        if ay < 0.0 && by > 0.0 && ny % 2 == 1 {
            return Err(Error::OddSubdivision { axis: "y", count: ny });
        }

        let dx = (bx - ax) / nx as f64;
        let dy = (by - ay) / ny as f64;
        // Convex combination keeps endpoints exact and, on symmetric
        // domains, pins the axis lines to exactly zero.
        let xcoord = |i: usize| {
            let s = i as f64 / nx as f64;
            ax * (1.0 - s) + bx * s
        };
        let ycoord = |j: usize| {
            let s = j as f64 / ny as f64;
            ay * (1.0 - s) + by * s
        };

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for iy in 0..=ny {
            for ix in 0..=nx {
                vertices.push([xcoord(ix), ycoord(iy)]);
            }
        }

        let vid = |ix: usize, iy: usize| iy * (nx + 1) + ix;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                let v00 = vid(ix, iy);
                let v10 = vid(ix + 1, iy);
                let v01 = vid(ix, iy + 1);
                let v11 = vid(ix + 1, iy + 1);
                triangles.push(Triangle {
                    v: [v00, v10, v11],
                    e: [0; 3],
                    sign: [0; 3],
                    class: 0,
                });
                triangles.push(Triangle {
                    v: [v00, v11, v01],
                    e: [0; 3],
                    sign: [0; 3],
                    class: 1,
                });
            }
        }

        // Edge table keyed by ascending vertex pair; first-seen order
        // over the deterministic element sweep assigns indices.
        let mut edges: Vec<Edge> = Vec::with_capacity(3 * nx * ny + nx + ny);
        let mut incidence: Vec<u8> = Vec::new();
        // Dense lookup: per lower vertex, up to three possible partners
        // (right, above, diagonal).  A small open-addressed map keeps
        // this simple and dependency-free.
        let mut lookup = EdgeLookup::new(vertices.len());
        for t in triangles.iter_mut() {
            for i in 0..3 {
                let a = t.v[i];
                let b = t.v[(i + 1) % 3];
                let key = if a < b { (a, b) } else { (b, a) };
                let idx = match lookup.get(key) {
                    Some(idx) => idx,
                    None => {
                        let idx = edges.len();
                        edges.push(Edge { v: [key.0, key.1], boundary: false });
                        incidence.push(0);
                        lookup.insert(key, idx);
                        idx
                    }
                };
                incidence[idx] += 1;
                t.e[i] = idx;
                // Outward normal of a CCW triangle is the forward local
                // tangent rotated clockwise; the global normal does the
                // same to the ascending-order tangent.
                t.sign[i] = if a < b { 1 } else { -1 };
            }
        }
        for (e, inc) in edges.iter_mut().zip(&incidence) {
            e.boundary = match inc {
                1 => true,
                2 => false,
                _ => {
                    return Err(Error::Config(format!(
                        "edge ({}, {}) shared by {} triangles",
                        e.v[0], e.v[1], inc
                    )))
                }
            };
        }

        let h = (dx * dx + dy * dy).sqrt();
        Ok(RectMesh { ax, ay, bx, by, nx, ny, dx, dy, h, vertices, triangles, edges })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Area of every element (the mesh is uniform).
    pub fn element_area(&self) -> f64 {
        0.5 * self.dx * self.dy
    }

    /// Coordinates of a triangle's vertices.
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = &self.triangles[t];
        [self.vertices[tri.v[0]], self.vertices[tri.v[1]], self.vertices[tri.v[2]]]
    }

    /// Signed area from the cross product; positive for CCW vertices.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [a, b, c] = self.triangle_coords(t);
        [(a[0] + b[0] + c[0]) / 3.0, (a[1] + b[1] + c[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let ed = &self.edges[e];
        let a = self.vertices[ed.v[0]];
        let b = self.vertices[ed.v[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Unit tangent along the global orientation (ascending index).
    pub fn edge_tangent(&self, e: usize) -> [f64; 2] {
        let ed = &self.edges[e];
        let a = self.vertices[ed.v[0]];
        let b = self.vertices[ed.v[1]];
        let len = self.edge_length(e);
        [(b[0] - a[0]) / len, (b[1] - a[1]) / len]
    }

    /// Unit normal: the global tangent rotated a quarter turn clockwise.
    pub fn edge_normal(&self, e: usize) -> [f64; 2] {
        let t = self.edge_tangent(e);
        [t[1], -t[0]]
    }

    /// Plain-text node/element listing (0-based indices, one record per
    /// line) for debugging.
    pub fn export_listing(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "rect {} {} {} {} nx {} ny {}\n",
            self.ax, self.ay, self.bx, self.by, self.nx, self.ny
        ));
        for (i, v) in self.vertices.iter().enumerate() {
            out.push_str(&format!("vertex {} {} {}\n", i, v[0], v[1]));
        }
        for (i, t) in self.triangles.iter().enumerate() {
            out.push_str(&format!(
                "triangle {} {} {} {} class {}\n",
                i, t.v[0], t.v[1], t.v[2], t.class
            ));
        }
        for (i, e) in self.edges.iter().enumerate() {
            out.push_str(&format!(
                "edge {} {} {} {}\n",
                i,
                e.v[0],
                e.v[1],
                if e.boundary { "boundary" } else { "interior" }
            ));
        }
        out
    }
}

/// Minimal open-addressed map from vertex pairs to edge indices.
struct EdgeLookup {
    mask: usize,
    slots: Vec<(u64, usize)>,
}

impl EdgeLookup {
    fn new(n_vertices: usize) -> Self {
        // At most ~3.5 edges per vertex on this topology; size for a
        // load factor under one half.
        let cap = (8 * n_vertices).next_power_of_two();
        EdgeLookup { mask: cap - 1, slots: alloc::vec![(u64::MAX, usize::MAX); cap] }
    }

    fn key_hash(key: (usize, usize)) -> u64 {
        let k = ((key.0 as u64) << 32) | key.1 as u64;
        // SplitMix64-style finalizer.
        let mut z = k.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    fn packed(key: (usize, usize)) -> u64 {
        ((key.0 as u64) << 32) | key.1 as u64
    }

    fn get(&self, key: (usize, usize)) -> Option<usize> {
        let packed = Self::packed(key);
        let mut i = (Self::key_hash(key) as usize) & self.mask;
        loop {
            let (k, v) = self.slots[i];
            if k == packed {
                return Some(v);
            }
            if v == usize::MAX {
                return None;
            }
            i = (i + 1) & self.mask;
        }
    }

    fn insert(&mut self, key: (usize, usize), value: usize) {
        let packed = Self::packed(key);
        let mut i = (Self::key_hash(key) as usize) & self.mask;
        loop {
            if self.slots[i].1 == usize::MAX {
                self.slots[i] = (packed, value);
                return;
            }
            i = (i + 1) & self.mask;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_counts() {
        let m = RectMesh::build(0.0, 0.0, 1.0, 1.0, 1, 1).unwrap();
        assert_eq!(m.n_triangles(), 2);
        assert_eq!(m.n_edges(), 5);
        assert_eq!(m.n_vertices(), 4);
        assert!((m.h - 2.0_f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.triangles[0].class, 0);
        assert_eq!(m.triangles[1].class, 1);
    }

    #[test]
    fn symmetric_domain_pins_axis_lines() {
        let m = RectMesh::build(-1.0, -1.0, 1.0, 1.0, 2, 2).unwrap();
        assert_eq!(m.n_triangles(), 8);
        // x = 0 and y = 0 are exact mesh lines.
        assert!(m.vertices.iter().any(|v| v[0] == 0.0));
        assert!(m.vertices.iter().any(|v| v[1] == 0.0));
        let mid = m.vertices[4]; // center vertex of the 3x3 grid
        assert_eq!(mid, [0.0, 0.0]);
    }

    #[test]
    fn areas_partition_the_domain() {
        let m = RectMesh::build(0.0, 0.0, 1.0, 1.0, 4, 4).unwrap();
        let total: f64 = (0..m.n_triangles()).map(|t| m.signed_area(t)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for t in 0..m.n_triangles() {
            assert!(m.signed_area(t) > 0.0);
            assert!((m.signed_area(t) - m.element_area()).abs() < 1e-15);
        }
    }

    #[test]
    fn odd_straddling_subdivision_rejected() {
        assert!(matches!(
            RectMesh::build(-1.0, 0.0, 1.0, 1.0, 3, 2),
            Err(Error::OddSubdivision { axis: "x", count: 3 })
        ));
        assert!(matches!(
            RectMesh::build(0.0, -2.0, 1.0, 2.0, 2, 5),
            Err(Error::OddSubdivision { axis: "y", count: 5 })
        ));
        // No straddle: odd counts are fine.
        assert!(RectMesh::build(0.0, 0.0, 1.0, 1.0, 3, 5).is_ok());
    }

    #[test]
    fn edge_incidence_and_boundary() {
        let m = RectMesh::build(0.0, 0.0, 1.0, 1.0, 3, 2).unwrap();
        assert_eq!(m.n_edges(), 3 * 6 + 3 + 2);
        let n_boundary = m.edges.iter().filter(|e| e.boundary).count();
        assert_eq!(n_boundary, 2 * (3 + 2));
        // Every boundary edge lies on the rectangle's boundary.
        for e in m.edges.iter().filter(|e| e.boundary) {
            let a = m.vertices[e.v[0]];
            let b = m.vertices[e.v[1]];
            let on_rect = |p: [f64; 2]| {
                p[0] == m.ax || p[0] == m.bx || p[1] == m.ay || p[1] == m.by
            };
            assert!(on_rect(a) && on_rect(b));
        }
    }

    #[test]
    fn class_patterns_are_translation_invariant() {
        let m = RectMesh::build(-1.0, -1.0, 1.0, 1.0, 4, 4).unwrap();
        // Per class, the local edge orientation signs and the vertex
        // offset pattern must be identical across all elements.
        let mut expect: [Option<([i8; 3], [[f64; 2]; 3])>; 2] = [None, None];
        for t in 0..m.n_triangles() {
            let tri = &m.triangles[t];
            let [a, b, c] = m.triangle_coords(t);
            let offs = [
                [0.0, 0.0],
                [b[0] - a[0], b[1] - a[1]],
                [c[0] - a[0], c[1] - a[1]],
            ];
            match &expect[tri.class as usize] {
                None => expect[tri.class as usize] = Some((tri.sign, offs)),
                Some((sign, offsets)) => {
                    assert_eq!(*sign, tri.sign, "triangle {t}");
                    for i in 0..3 {
                        assert!((offsets[i][0] - offs[i][0]).abs() < 1e-13);
                        assert!((offsets[i][1] - offs[i][1]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn normals_rotate_tangents_clockwise() {
        let m = RectMesh::build(0.0, 0.0, 2.0, 1.0, 2, 2).unwrap();
        for e in 0..m.n_edges() {
            let t = m.edge_tangent(e);
            let n = m.edge_normal(e);
            assert!((t[0] * n[0] + t[1] * n[1]).abs() < 1e-15);
            // Right-handed check: t x n = -1 for a clockwise rotation.
            assert!((t[0] * n[1] - t[1] * n[0] + 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn export_listing_has_one_record_per_entity() {
        let m = RectMesh::build(0.0, 0.0, 1.0, 1.0, 2, 2).unwrap();
        let listing = m.export_listing();
        let lines: Vec<&str> = listing.lines().collect();
        assert_eq!(lines.len(), 1 + m.n_vertices() + m.n_triangles() + m.n_edges());
        assert!(lines[1].starts_with("vertex 0 "));
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(RectMesh::build(1.0, 0.0, 0.0, 1.0, 2, 2).is_err());
        assert!(RectMesh::build(0.0, 0.0, 1.0, 1.0, 0, 2).is_err());
    }
}
