//! Conforming triangulations of the closed unit disk.
//!
//! The level-0 mesh is a fan around the origin with `N0` boundary vertices at
//! angles `2πj/N0`. Each refinement splits every triangle into four through
//! its edge midpoints and pushes the midpoints of boundary edges radially onto
//! the unit circle, so level `L` carries `N0·2^L` boundary vertices that stay
//! equally spaced in angle. Boundary integrals use the periodic trapezoid rule
//! on those vertices.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};

pub type Point = [f64; 2];

/// Triangulation of the unit disk with ordered boundary vertices.
#[derive(Debug)]
pub struct DiskMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<usize>,
    level: usize,
    base_count: usize,
    /// Endpoints of the parent edge for every vertex created by the last
    /// refinement, in vertex order. Empty at level 0.
    parent_edges: Vec<[usize; 2]>,
    areas: Vec<f64>,
    shape_gradients: Vec<[Point; 3]>,
    locator: OnceLock<PointLocator>,
}

/// Level-0 fan mesh with `base_boundary_count` boundary vertices.
pub fn build_disk_mesh(base_boundary_count: usize) -> Result<DiskMesh> {
    if base_boundary_count < 8 || base_boundary_count % 2 != 0 {
        return Err(invalid(format!(
            "base boundary count must be an even integer >= 8, got {base_boundary_count}"
        )));
    }
    let n0 = base_boundary_count;
    let mut vertices = Vec::with_capacity(n0 + 1);
    vertices.push([0.0, 0.0]);
    for j in 0..n0 {
        vertices.push(circle_point(j, n0));
    }
    let triangles = (0..n0)
        .map(|j| [0, 1 + j, 1 + (j + 1) % n0])
        .collect::<Vec<_>>();
    let boundary = (1..=n0).collect();
    Ok(DiskMesh::assemble(vertices, triangles, boundary, 0, n0, Vec::new()))
}

/// Uniform 1-to-4 refinement with boundary midpoints projected onto the circle.
pub fn refine_mesh(mesh: &DiskMesh) -> DiskMesh {
    let mut vertices = mesh.vertices.clone();
    let mut parent_edges = Vec::new();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();

    // Boundary edges first so that the new boundary ordering can be read off
    // directly: edge j joins boundary[j] and boundary[j+1].
    let nb = mesh.boundary.len();
    let mut new_boundary = Vec::with_capacity(2 * nb);
    for j in 0..nb {
        let a = mesh.boundary[j];
        let b = mesh.boundary[(j + 1) % nb];
        let idx = vertices.len();
        vertices.push(circle_point(2 * j + 1, 2 * nb));
        parent_edges.push([a, b]);
        midpoint.insert(edge_key(a, b), idx);
        new_boundary.push(a);
        new_boundary.push(idx);
    }

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let mut mid = |p: usize, q: usize| -> usize {
            *midpoint.entry(edge_key(p, q)).or_insert_with(|| {
                let (vp, vq) = (mesh.vertices[p], mesh.vertices[q]);
                vertices.push([0.5 * (vp[0] + vq[0]), 0.5 * (vp[1] + vq[1])]);
                parent_edges.push([p, q]);
                vertices.len() - 1
            })
        };
        let ab = mid(a, b);
        let bc = mid(b, c);
        let ca = mid(c, a);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    DiskMesh::assemble(
        vertices,
        triangles,
        new_boundary,
        mesh.level + 1,
        mesh.base_count,
        parent_edges,
    )
}

/// Mesh at `level` obtained by refining the level-0 fan.
pub fn build_refined_mesh(base_boundary_count: usize, level: usize) -> Result<DiskMesh> {
    let mut mesh = build_disk_mesh(base_boundary_count)?;
    for _ in 0..level {
        mesh = refine_mesh(&mesh);
    }
    Ok(mesh)
}

/// `(angle, weight)` pairs of the periodic trapezoid rule on the boundary
/// vertices, in boundary order. Weights sum to `2π`.
pub fn boundary_quadrature(mesh: &DiskMesh) -> Vec<(f64, f64)> {
    let nb = mesh.boundary.len();
    let w = 2.0 * PI / nb as f64;
    (0..nb).map(|j| (mesh.boundary_angle(j), w)).collect()
}

fn circle_point(j: usize, n: usize) -> Point {
    let t = 2.0 * PI * j as f64 / n as f64;
    [t.cos(), t.sin()]
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl DiskMesh {
    fn assemble(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<usize>,
        level: usize,
        base_count: usize,
        parent_edges: Vec<[usize; 2]>,
    ) -> Self {
        let mut areas = Vec::with_capacity(triangles.len());
        let mut shape_gradients = Vec::with_capacity(triangles.len());
        for t in &triangles {
            let [p0, p1, p2] = t.map(|i| vertices[i]);
            let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
            areas.push(0.5 * det);
            // grad λ_i = rot90(opposite edge) / det
            let g = |a: Point, b: Point| [(a[1] - b[1]) / det, (b[0] - a[0]) / det];
            shape_gradients.push([g(p1, p2), g(p2, p0), g(p0, p1)]);
        }
        Self {
            vertices,
            triangles,
            boundary,
            level,
            base_count,
            parent_edges,
            areas,
            shape_gradients,
            locator: OnceLock::new(),
        }
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Boundary vertex indices; entry `j` sits at angle `2πj/len`.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn base_count(&self) -> usize {
        self.base_count
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.len()
    }

    /// Angle of the `j`-th boundary vertex.
    pub fn boundary_angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.boundary.len() as f64
    }

    /// Signed triangle areas (all positive for a valid mesh).
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    /// Gradients of the three barycentric hat functions per triangle.
    pub fn shape_gradients(&self) -> &[[Point; 3]] {
        &self.shape_gradients
    }

    pub fn parent_edges(&self) -> &[[usize; 2]] {
        &self.parent_edges
    }

    /// Number of vertices the parent mesh had (equal to the vertex count at level 0).
    pub fn parent_vertex_count(&self) -> usize {
        self.vertices.len() - self.parent_edges.len()
    }

    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for &[a, b, c] in &self.triangles {
            edges.insert(edge_key(a, b));
            edges.insert(edge_key(b, c));
            edges.insert(edge_key(c, a));
        }
        edges.len()
    }

    /// `V - E + F` with `F` counting triangles only.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertex_count() as i64 - self.edge_count() as i64 + self.triangle_count() as i64
    }

    /// Lumped (row-sum) mass: a third of the area of every incident triangle.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                mass[i] += self.areas[t] / 3.0;
            }
        }
        mass
    }

    /// Area-weighted average of per-triangle values at each vertex.
    pub fn element_to_nodal(&self, element_values: &[f64]) -> Vec<f64> {
        let mut num = vec![0.0; self.vertices.len()];
        let mut den = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                num[i] += self.areas[t] * element_values[t];
                den[i] += self.areas[t];
            }
        }
        num.iter().zip(&den).map(|(n, d)| n / d).collect()
    }

    /// `∫ u v` for piecewise-linear nodal fields, via the consistent P1 mass matrix.
    pub fn mass_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut total = 0.0;
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            let (ua, ub, uc) = (u[a], u[b], u[c]);
            let (va, vb, vc) = (v[a], v[b], v[c]);
            let s = ua * (2.0 * va + vb + vc) + ub * (va + 2.0 * vb + vc) + uc * (va + vb + 2.0 * vc);
            total += self.areas[t] * s / 12.0;
        }
        total
    }

    /// Locates the triangle containing `p` and its barycentric coordinates.
    ///
    /// Points in the thin gap between the boundary chords and the unit circle
    /// are assigned to the nearest boundary triangle; their coordinates then
    /// extrapolate linearly.
    pub fn locate(&self, p: Point) -> Result<(usize, [f64; 3])> {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        if !r.is_finite() || r > 1.0 + 1e-12 {
            return Err(Error::OutOfDomain { x: p[0], y: p[1] });
        }
        let locator = self.locator.get_or_init(|| PointLocator::new(self));
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for t in locator.candidates(p) {
            let bary = self.barycentric(t, p);
            let worst = bary.iter().copied().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Ok((t, bary));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((t, bary, worst));
            }
        }
        best.map(|(t, b, _)| (t, b))
            .ok_or(Error::OutOfDomain { x: p[0], y: p[1] })
    }

    fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [i0, i1, i2] = self.triangles[t];
        let (p0, p1, p2) = (self.vertices[i0], self.vertices[i1], self.vertices[i2]);
        let det = 2.0 * self.areas[t];
        let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
        let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Writes the vertex table as CSV with header `x,y`.
    pub fn write_vertices_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y"])?;
        for v in &self.vertices {
            w.write_record([format!("{:.16e}", v[0]), format!("{:.16e}", v[1])])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the triangle table as CSV with header `i,j,k`.
    pub fn write_triangles_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "k"])?;
        for t in &self.triangles {
            w.write_record(t.map(|i| i.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Uniform bucket grid over `[-1, 1]²` for triangle lookup.
#[derive(Debug)]
struct PointLocator {
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

impl PointLocator {
    fn new(mesh: &DiskMesh) -> Self {
        let cells = ((mesh.triangles.len() as f64).sqrt().ceil() as usize).clamp(1, 512);
        let mut buckets = vec![Vec::new(); cells * cells];
        let cell_of = |x: f64| -> usize {
            (((x + 1.0) * 0.5 * cells as f64).floor().max(0.0) as usize).min(cells - 1)
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let pts = tri.map(|i| mesh.vertices[i]);
            let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for p in pts {
                x0 = x0.min(p[0]);
                x1 = x1.max(p[0]);
                y0 = y0.min(p[1]);
                y1 = y1.max(p[1]);
            }
            for cy in cell_of(y0)..=cell_of(y1) {
                for cx in cell_of(x0)..=cell_of(x1) {
                    buckets[cy * cells + cx].push(t);
                }
            }
        }
        Self { cells, buckets }
    }

    fn candidates(&self, p: Point) -> impl Iterator<Item = usize> + '_ {
        let n = self.cells as i64;
        let cell = |x: f64| (((x + 1.0) * 0.5 * n as f64).floor() as i64).clamp(0, n - 1);
        let (cx, cy) = (cell(p[0]), cell(p[1]));
        (-1..=1).flat_map(move |dy| {
            (-1..=1).filter_map(move |dx| {
                let (x, y) = (cx + dx, cy + dy);
                (x >= 0 && y >= 0 && x < n && y < n).then(|| &self.buckets[(y * n + x) as usize])
            })
        })
        .flatten()
        .copied()
    }
}
