//! Piecewise-linear conductivity fields on a [`DiskMesh`].

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::{DiskMesh, Point};

/// Closed-form conductivities: the four benchmark distributions plus
/// constant and radial-polynomial profiles used for validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnalyticSigma {
    /// `x³ + y³ + 4`
    Benchmark1,
    /// `b x³ + a y⁵ + y² + 2`
    Benchmark2 { a: f64, b: f64 },
    /// `x³ + y⁵ + |y - 0.5|^0.4 + 3` (real branch below `y = 0.5`)
    Benchmark3,
    /// `x³ + y⁵ + χ(x² + y² < 0.25) + 2`
    Benchmark4,
    Constant { value: f64 },
    /// `Σ_k coefficients[k] r^k`
    Radial { coefficients: Vec<f64> },
}

impl AnalyticSigma {
    pub fn eval(&self, p: Point) -> f64 {
        let [x, y] = p;
        match self {
            Self::Benchmark1 => x.powi(3) + y.powi(3) + 4.0,
            Self::Benchmark2 { a, b } => b * x.powi(3) + a * y.powi(5) + y * y + 2.0,
            Self::Benchmark3 => x.powi(3) + y.powi(5) + (y - 0.5).abs().powf(0.4) + 3.0,
            Self::Benchmark4 => {
                let inside = if x * x + y * y < 0.25 { 1.0 } else { 0.0 };
                x.powi(3) + y.powi(5) + inside + 2.0
            }
            Self::Constant { value } => *value,
            Self::Radial { coefficients } => {
                let r = (x * x + y * y).sqrt();
                coefficients.iter().rev().fold(0.0, |acc, c| acc * r + c)
            }
        }
    }

    /// Radial profile `σ(r)` when the conductivity is rotationally symmetric.
    pub fn radial_profile(&self) -> Option<impl Fn(f64) -> f64 + '_> {
        match self {
            Self::Constant { .. } | Self::Radial { .. } => Some(move |r: f64| self.eval([r, 0.0])),
            _ => None,
        }
    }
}

/// Nodal conductivity on a mesh, bounded in `[1/c, c]`.
#[derive(Debug, Clone)]
pub struct ConductivityField {
    mesh: Arc<DiskMesh>,
    values: Vec<f64>,
    bound: f64,
}

impl ConductivityField {
    pub fn new(mesh: Arc<DiskMesh>, values: Vec<f64>, bound: f64) -> Result<Self> {
        if !(bound > 1.0) || !bound.is_finite() {
            return Err(invalid(format!("conductivity bound must exceed 1, got {bound}")));
        }
        if values.len() != mesh.vertex_count() {
            return Err(invalid(format!(
                "expected {} nodal values, got {}",
                mesh.vertex_count(),
                values.len()
            )));
        }
        let lo = 1.0 / bound;
        for (vertex, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < lo * (1.0 - 1e-14) || value > bound * (1.0 + 1e-14) {
                return Err(Error::NonFinite { vertex, value });
            }
        }
        Ok(Self { mesh, values, bound })
    }

    pub fn constant(mesh: Arc<DiskMesh>, value: f64) -> Result<Self> {
        let bound = value.max(1.0 / value).max(2.0);
        let n = mesh.vertex_count();
        Self::new(mesh, vec![value; n], bound)
    }

    pub fn mesh(&self) -> &Arc<DiskMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Mean of the three vertex values of every triangle.
    pub fn element_means(&self) -> Vec<f64> {
        self.mesh
            .triangles()
            .iter()
            .map(|t| (self.values[t[0]] + self.values[t[1]] + self.values[t[2]]) / 3.0)
            .collect()
    }

    /// `∫_D σ²`
    pub fn l2_norm_squared(&self) -> f64 {
        self.mesh.mass_inner(&self.values, &self.values)
    }

    /// Writes `x,y,sigma` rows in vertex order.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "sigma"])?;
        for (v, s) in self.mesh.vertices().iter().zip(&self.values) {
            w.write_record([v[0], v[1], *s].map(|x| format!("{x:.16e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a field written by [`write_csv`](Self::write_csv); coordinates must
    /// match the mesh vertices.
    pub fn read_csv<R: Read>(mesh: Arc<DiskMesh>, reader: R, bound: f64) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "y", "sigma"] {
            return Err(Error::Parse(format!("unexpected field header {headers:?}")));
        }
        let mut values = Vec::with_capacity(mesh.vertex_count());
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Parse(format!("row {i}, column {k}")))
            };
            let v = mesh
                .vertices()
                .get(i)
                .ok_or_else(|| Error::Parse("more rows than mesh vertices".into()))?;
            if (parse(0)? - v[0]).abs() > 1e-9 || (parse(1)? - v[1]).abs() > 1e-9 {
                return Err(Error::Parse(format!("row {i} does not match vertex coordinates")));
            }
            values.push(parse(2)?);
        }
        Self::new(mesh, values, bound)
    }
}

/// Nodal interpolant of `spec`; the bound is `max(2, ⌈max(σ_max, 1/σ_min)⌉)`.
pub fn project_sigma(spec: &AnalyticSigma, mesh: Arc<DiskMesh>) -> Result<ConductivityField> {
    let mut values = Vec::with_capacity(mesh.vertex_count());
    for (vertex, &p) in mesh.vertices().iter().enumerate() {
        let value = spec.eval(p);
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::NonFinite { vertex, value });
        }
        values.push(value);
    }
    let hi = values.iter().fold(0.0f64, |m, &v| m.max(v));
    let lo = values.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let bound = hi.max(1.0 / lo).ceil().max(2.0);
    ConductivityField::new(mesh, values, bound)
}

/// Piecewise-linear interpolation at `p`.
pub fn eval_field(field: &ConductivityField, p: Point) -> Result<f64> {
    eval_nodal(field.mesh(), field.values(), p)
}

pub(crate) fn eval_nodal(mesh: &DiskMesh, values: &[f64], p: Point) -> Result<f64> {
    let (t, bary) = mesh.locate(p)?;
    let tri = mesh.triangles()[t];
    Ok((0..3).map(|i| bary[i] * values[tri[i]]).sum())
}

/// Projects nodal values into `[1/c, c]`.
pub fn clamp_field(field: &ConductivityField, c: f64) -> Result<ConductivityField> {
    if !(c > 1.0) {
        return Err(invalid(format!("clamp bound must exceed 1, got {c}")));
    }
    let values = clamp_values(field.values(), c);
    ConductivityField::new(field.mesh.clone(), values, c)
}

pub(crate) fn clamp_values(values: &[f64], c: f64) -> Vec<f64> {
    values.iter().map(|v| v.clamp(1.0 / c, c)).collect()
}

/// Exact P1 prolongation onto the next refinement of the field's mesh: parent
/// vertices keep their values, edge midpoints take the edge average.
pub fn prolongate(field: &ConductivityField, child: Arc<DiskMesh>) -> Result<ConductivityField> {
    let parent = field.mesh();
    if child.level() != parent.level() + 1
        || child.base_count() != parent.base_count()
        || child.parent_vertex_count() != parent.vertex_count()
    {
        return Err(invalid("target mesh is not the refinement of the field's mesh"));
    }
    let old = &field.values;
    let mut values = old.clone();
    values.extend(child.parent_edges().iter().map(|&[a, b]| 0.5 * (old[a] + old[b])));
    ConductivityField::new(child, values, field.bound)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_disk_mesh, build_refined_mesh, refine_mesh};
    use proptest::prelude::*;

    fn mesh(level: usize) -> Arc<DiskMesh> {
        Arc::new(build_refined_mesh(8, level).unwrap())
    }

    #[test]
    fn benchmark_values() {
        assert_eq!(AnalyticSigma::Benchmark1.eval([0.0, 0.0]), 4.0);
        assert_eq!(AnalyticSigma::Benchmark2 { a: 1.0, b: 1.0 }.eval([0.0, 1.0]), 4.0);
        assert_eq!(AnalyticSigma::Benchmark4.eval([0.0, 0.0]), 3.0);
        assert_eq!(AnalyticSigma::Benchmark4.eval([0.9, 0.0]), 0.9f64.powi(3) + 2.0);
        // real branch below y = 0.5
        let v = AnalyticSigma::Benchmark3.eval([0.0, 0.0]);
        assert!((v - (0.5f64.powf(0.4) + 3.0)).abs() < 1e-15);
        let r = AnalyticSigma::Radial { coefficients: vec![1.0, 0.0, 1.0] };
        assert!((r.eval([0.6, 0.8]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn projection_reproduces_formula_at_vertices() {
        let m = mesh(3);
        for spec in [
            AnalyticSigma::Benchmark1,
            AnalyticSigma::Benchmark2 { a: 0.5, b: 0.2 },
            AnalyticSigma::Benchmark3,
            AnalyticSigma::Benchmark4,
        ] {
            let f = project_sigma(&spec, m.clone()).unwrap();
            for &p in m.vertices() {
                assert!((eval_field(&f, p).unwrap() - spec.eval(p)).abs() < 1e-12);
            }
            assert!(f.bound() >= 2.0);
        }
        let f = project_sigma(&AnalyticSigma::Benchmark1, m).unwrap();
        assert_eq!(f.values()[0], 4.0);
        assert_eq!(f.bound(), 5.0);
    }

    #[test]
    fn projection_rejects_non_positive() {
        let err = project_sigma(&AnalyticSigma::Constant { value: -1.0 }, mesh(0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { vertex: 0, .. }));
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let m = mesh(3);
        let f = ConductivityField::constant(m.clone(), 3.0).unwrap();
        assert!((eval_field(&f, [0.1, 0.7]).unwrap() - 3.0).abs() < 1e-14);
        let xs: Vec<f64> = m.vertices().iter().map(|v| v[0] + 2.0).collect();
        let f = ConductivityField::new(m, xs, 4.0).unwrap();
        assert!((eval_field(&f, [0.25, 0.0]).unwrap() - 2.25).abs() < 1e-12);
        assert!(matches!(eval_field(&f, [2.0, 0.0]), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn clamp_projects_into_interval() {
        let m = Arc::new(build_disk_mesh(8).unwrap());
        let mut vals = vec![1.0; 9];
        vals[0] = 0.1;
        vals[1] = 5.0;
        let f = ConductivityField::new(m, vals, 10.0).unwrap();
        let g = clamp_field(&f, 4.0).unwrap();
        assert_eq!(g.values()[0], 0.25);
        assert_eq!(g.values()[1], 4.0);
        assert_eq!(clamp_field(&g, 4.0).unwrap().values(), g.values());
        assert!(clamp_field(&f, 1.0).is_err());
    }

    #[test]
    fn prolongation_is_exact_for_linear_fields() {
        let coarse = Arc::new(build_disk_mesh(8).unwrap());
        let fine = Arc::new(refine_mesh(&coarse));
        let vals = coarse.vertices().iter().map(|v| 3.0 + v[0] - 0.5 * v[1]).collect();
        let f = ConductivityField::new(coarse, vals, 5.0).unwrap();
        let g = prolongate(&f, fine.clone()).unwrap();
        for (i, v) in fine.vertices().iter().enumerate().take(fine.parent_vertex_count()) {
            assert!((g.values()[i] - (3.0 + v[0] - 0.5 * v[1])).abs() < 1e-14);
        }
        assert!(prolongate(&g, fine).is_err());
    }

    #[test]
    fn mass_integrals_of_constants() {
        let m = mesh(4);
        let f = ConductivityField::constant(m.clone(), 2.0).unwrap();
        let area: f64 = m.areas().iter().sum();
        assert!((f.l2_norm_squared() - 4.0 * area).abs() < 1e-12);
        let lumped: f64 = m.lumped_mass().iter().sum();
        assert!((lumped - area).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let m = mesh(2);
        let f = project_sigma(&AnalyticSigma::Benchmark1, m.clone()).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"x,y,sigma\n"));
        let g = ConductivityField::read_csv(m, buf.as_slice(), f.bound()).unwrap();
        assert_eq!(g.values(), f.values());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent_and_nonexpansive(
            a in proptest::collection::vec(0.05f64..20.0, 9),
            b in proptest::collection::vec(0.05f64..20.0, 9),
            c in 1.5f64..8.0,
        ) {
            let m = Arc::new(build_disk_mesh(8).unwrap());
            let fa = ConductivityField::new(m.clone(), a, 20.0).unwrap();
            let fb = ConductivityField::new(m, b, 20.0).unwrap();
            let ca = clamp_field(&fa, c).unwrap();
            let cb = clamp_field(&fb, c).unwrap();
            let cca = clamp_field(&ca, c).unwrap();
            prop_assert_eq!(cca.values(), ca.values());
            let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            prop_assert!(dist(ca.values(), cb.values()) <= dist(fa.values(), fb.values()) + 1e-15);
        }
    }
}
