//! Structured triangulation of the unit square with tagged boundary sides.

use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Num;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    /// Total head prescribed, tangential velocity zero, temperature zero.
    #[serde(rename = "gamma1", alias = "Gamma1")]
    Gamma1,
    /// No-slip velocity, prescribed heat flux.
    #[serde(rename = "gamma2", alias = "Gamma2")]
    Gamma2,
}

impl fmt::Display for BoundaryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryTag::Gamma1 => f.write_str("Gamma1"),
            BoundaryTag::Gamma2 => f.write_str("Gamma2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    pub fn outward_normal(self) -> [f64; 2] {
        match self {
            Side::Bottom => [0.0, -1.0],
            Side::Right => [1.0, 0.0],
            Side::Top => [0.0, 1.0],
            Side::Left => [-1.0, 0.0],
        }
    }

    /// Index of the velocity component tangential to this side.
    pub fn tangential_component(self) -> usize {
        match self {
            Side::Bottom | Side::Top => 0,
            Side::Left | Side::Right => 1,
        }
    }
}

/// Assignment of the four sides of the square to Γ₁ or Γ₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideTagging {
    pub bottom: BoundaryTag,
    pub right: BoundaryTag,
    pub top: BoundaryTag,
    pub left: BoundaryTag,
}

impl Default for SideTagging {
    /// Γ₁ = {x = 0} ∪ {x = 1}, Γ₂ = {y = 0} ∪ {y = 1}.
    fn default() -> Self {
        SideTagging {
            bottom: BoundaryTag::Gamma2,
            right: BoundaryTag::Gamma1,
            top: BoundaryTag::Gamma2,
            left: BoundaryTag::Gamma1,
        }
    }
}

impl SideTagging {
    pub fn uniform(tag: BoundaryTag) -> Self {
        SideTagging { bottom: tag, right: tag, top: tag, left: tag }
    }

    pub fn tag(&self, side: Side) -> BoundaryTag {
        match side {
            Side::Bottom => self.bottom,
            Side::Right => self.right,
            Side::Top => self.top,
            Side::Left => self.left,
        }
    }

    pub fn has(&self, tag: BoundaryTag) -> bool {
        Side::ALL.iter().any(|&s| self.tag(s) == tag)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    /// Endpoints in counter-clockwise boundary order.
    pub nodes: [usize; 2],
    pub tag: BoundaryTag,
    pub side: Side,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub elements: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    pub tagging: SideTagging,
    pub h: f64,
}

/// Builds a `2 nx ny`-triangle mesh of (0,1)², each cell split along its
/// lower-left to upper-right diagonal.
pub fn build_unit_square_mesh(nx: usize, ny: usize, tagging: SideTagging) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!("subdivision counts must be positive (nx={nx}, ny={ny})")));
    }
    if !tagging.has(BoundaryTag::Gamma2) {
        return Err(Error::InvalidMesh("Gamma2 must not be empty".into()));
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
        }
    }
    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push([a, b, c]);
            elements.push([a, c, d]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    let mut push = |n0, n1, side: Side| {
        boundary_edges.push(BoundaryEdge { nodes: [n0, n1], tag: tagging.tag(side), side })
    };
    for i in 0..nx {
        push(id(i, 0), id(i + 1, 0), Side::Bottom);
    }
    for j in 0..ny {
        push(id(nx, j), id(nx, j + 1), Side::Right);
    }
    for i in (0..nx).rev() {
        push(id(i + 1, ny), id(i, ny), Side::Top);
    }
    for j in (0..ny).rev() {
        push(id(0, j + 1), id(0, j), Side::Left);
    }
    let h = (1.0 / nx as f64).max(1.0 / ny as f64);
    Ok(Mesh { nx, ny, nodes, elements, boundary_edges, tagging, h })
}

impl Mesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertices(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.elements[e];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    /// Twice the signed area of element `e`.
    pub fn jacobian_det(&self, e: usize) -> f64 {
        let [p0, p1, p2] = self.vertices(e);
        (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
    }

    pub fn area(&self, e: usize) -> f64 {
        0.5 * self.jacobian_det(e)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.area(e)).sum()
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = &BoundaryEdge> {
        self.boundary_edges.iter().filter(move |e| e.tag == tag)
    }

    pub fn edge_length(&self, edge: &BoundaryEdge) -> f64 {
        let [a, b] = edge.nodes;
        let (p, q) = (self.nodes[a], self.nodes[b]);
        ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt()
    }

    /// Measure of the part of the boundary carrying `tag`.
    pub fn boundary_measure(&self, tag: BoundaryTag) -> f64 {
        self.edges_with_tag(tag).map(|e| self.edge_length(e)).sum()
    }

    /// Writes `nodes.csv`, `elements.csv` and `boundary.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("nodes.csv"))?);
        writeln!(f, "id,x,y")?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(f, "{i},{},{}", Num(p[0]), Num(p[1]))?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("elements.csv"))?);
        writeln!(f, "id,n0,n1,n2")?;
        for (i, t) in self.elements.iter().enumerate() {
            writeln!(f, "{i},{},{},{}", t[0], t[1], t[2])?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join("boundary.csv"))?);
        writeln!(f, "id,n0,n1,tag")?;
        for (i, e) in self.boundary_edges.iter().enumerate() {
            writeln!(f, "{i},{},{},{}", e.nodes[0], e.nodes[1], e.tag)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;

    #[test]
    fn single_cell() {
        let m = build_unit_square_mesh(1, 1, SideTagging::default()).unwrap();
        assert_eq!(m.n_elements(), 2);
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.boundary_edges.len(), 4);
    }

    #[test]
    fn two_by_two() {
        let m = build_unit_square_mesh(2, 2, SideTagging::default()).unwrap();
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.n_nodes(), 9);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn default_tag_counts() {
        let m = build_unit_square_mesh(4, 4, SideTagging::default()).unwrap();
        assert_eq!(m.edges_with_tag(BoundaryTag::Gamma1).count(), 8);
        assert_eq!(m.edges_with_tag(BoundaryTag::Gamma2).count(), 8);
        assert!((m.boundary_measure(BoundaryTag::Gamma2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(build_unit_square_mesh(0, 3, SideTagging::default()), Err(Error::InvalidMesh(_))));
        assert!(matches!(
            build_unit_square_mesh(2, 2, SideTagging::uniform(BoundaryTag::Gamma1)),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn invariants_over_sizes() {
        for nx in 1..=16 {
            for ny in 1..=16 {
                let m = build_unit_square_mesh(nx, ny, SideTagging::default()).unwrap();
                assert!((m.total_area() - 1.0).abs() < 1e-12);
                assert!((0..m.n_elements()).all(|e| m.jacobian_det(e) > 0.0));
                // conformity: interior edges shared by two triangles, boundary edges by one
                let mut count: HashMap<(usize, usize), usize> = HashMap::new();
                for t in &m.elements {
                    for k in 0..3 {
                        let (a, b) = (t[k], t[(k + 1) % 3]);
                        *count.entry((a.min(b), a.max(b))).or_default() += 1;
                    }
                }
                let boundary: Vec<(usize, usize)> = m
                    .boundary_edges
                    .iter()
                    .map(|e| (e.nodes[0].min(e.nodes[1]), e.nodes[0].max(e.nodes[1])))
                    .collect();
                for (edge, c) in &count {
                    let expected = if boundary.contains(edge) { 1 } else { 2 };
                    assert_eq!(*c, expected);
                }
                assert_eq!(boundary.len(), 2 * (nx + ny));
                let g1 = m.edges_with_tag(BoundaryTag::Gamma1).count();
                let g2 = m.edges_with_tag(BoundaryTag::Gamma2).count();
                assert_eq!(g1 + g2, boundary.len());
            }
        }
    }

    #[test]
    fn csv_dump() {
        let dir = tempfile::tempdir().unwrap();
        let m = build_unit_square_mesh(2, 1, SideTagging::default()).unwrap();
        m.write_csv(dir.path()).unwrap();
        let b = std::fs::read_to_string(dir.path().join("boundary.csv")).unwrap();
        assert_eq!(b.lines().count(), 1 + 6);
        assert!(b.starts_with("id,n0,n1,tag\n0,0,1,Gamma2"));
    }
}
