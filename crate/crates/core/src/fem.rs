//! P1 Galerkin solver for `∇·σ∇u = 0` in the disk with Neumann flux
//! `σ ∂u/∂ν = g` and zero boundary mean.
//!
//! Boundary data live on the zero-mean trigonometric basis. The load
//! `∫ g φ_j` is integrated exactly against boundary hat functions that are
//! linear in the polar angle, which gives the closed form
//! `F_k cos(kθ_j)` with `F_k = 2(1 - cos kΔ)/(k²Δ)`. The same functional,
//! divided by `π`, projects a piecewise-linear trace back onto mode `k`, so
//! the discrete Neumann-to-Dirichlet matrix is exactly symmetric.
//!
//! The constant kernel is removed by pinning one interior vertex and then
//! shifting the solution to zero boundary mean. For compatible (zero-mean)
//! loads this coincides with the Lagrange-multiplier formulation, whose
//! multiplier vanishes.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::cgpt::Parity;
use crate::error::{invalid, Error, Result};
use crate::field::ConductivityField;
use crate::mesh::{DiskMesh, Point};
use crate::sparse::{conjugate_gradient, norm, CsrMatrix, EnvelopeCholesky};

/// Neumann datum `g = Σ_k (cos_k cos kθ + sin_k sin kθ)`, modes `1..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxCoefficients {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl FluxCoefficients {
    pub fn zeros(order: usize) -> Self {
        Self { cos: vec![0.0; order], sin: vec![0.0; order] }
    }

    /// Single basis mode with unit amplitude.
    pub fn mode(order: usize, mode: usize, parity: Parity) -> Self {
        let mut g = Self::zeros(order);
        match parity {
            Parity::Cos => g.cos[mode - 1] = 1.0,
            Parity::Sin => g.sin[mode - 1] = 1.0,
        }
        g
    }

    pub fn order(&self) -> usize {
        self.cos.len()
    }
}

/// Nodal FEM potential for one Neumann datum.
#[derive(Debug, Clone)]
pub struct InteriorSolution {
    pub mesh: Arc<DiskMesh>,
    pub potential: Vec<f64>,
    pub flux: FluxCoefficients,
}

/// Linear-solver configuration.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Systems with more unknowns than this use conjugate gradients.
    pub direct_limit: usize,
    pub cg_tolerance: f64,
    pub cg_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { direct_limit: 200_000, cg_tolerance: 1e-12, cg_max_iterations: 20_000 }
    }
}

#[derive(Debug)]
enum Backend {
    Direct(EnvelopeCholesky),
    Iterative { reduced: CsrMatrix, options: SolverOptions },
}

/// Assembled and factored stiffness operator for one conductivity.
#[derive(Debug)]
pub struct NeumannSolver {
    mesh: Arc<DiskMesh>,
    stiffness: CsrMatrix,
    pinned: usize,
    backend: Backend,
}

impl NeumannSolver {
    pub fn new(sigma: &ConductivityField) -> Result<Self> {
        Self::with_options(sigma, SolverOptions::default())
    }

    pub fn with_options(sigma: &ConductivityField, options: SolverOptions) -> Result<Self> {
        let mesh = sigma.mesh().clone();
        let stiffness = assemble_stiffness(&mesh, &sigma.element_means())?;
        // vertex 0 is the disk centre at every level
        let pinned = 0;
        let reduced = stiffness.without_index(pinned);
        let backend = if reduced.dim() <= options.direct_limit {
            Backend::Direct(EnvelopeCholesky::factor(&reduced)?)
        } else {
            Backend::Iterative { reduced, options }
        };
        Ok(Self { mesh, stiffness, pinned, backend })
    }

    pub fn mesh(&self) -> &Arc<DiskMesh> {
        &self.mesh
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Solves `K u = load` with zero boundary mean; the load must sum to zero.
    pub fn solve_load(&self, load: &[f64]) -> Result<Vec<f64>> {
        let p = self.pinned;
        let rhs: Vec<f64> = load
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != p)
            .map(|(_, &v)| v)
            .collect();
        let reduced = match &self.backend {
            Backend::Direct(chol) => chol.solve(&rhs),
            Backend::Iterative { reduced, options } => {
                conjugate_gradient(reduced, &rhs, options.cg_tolerance, options.cg_max_iterations)?.0
            }
        };
        let mut u = Vec::with_capacity(load.len());
        u.extend_from_slice(&reduced[..p]);
        u.push(0.0);
        u.extend_from_slice(&reduced[p..]);

        let mean = boundary_mean(&self.mesh, &u);
        u.iter_mut().for_each(|x| *x -= mean);

        let load_norm = norm(load);
        if load_norm > 0.0 {
            let ku = self.stiffness.matvec(&u);
            let r: Vec<f64> = ku.iter().zip(load).map(|(a, b)| a - b).collect();
            let rel = norm(&r) / load_norm;
            if !(rel <= 1e-10) {
                return Err(Error::NotConverged { residual: rel });
            }
        }
        Ok(u)
    }

    pub fn solve(&self, g: &FluxCoefficients) -> Result<InteriorSolution> {
        let potential = self.solve_load(&boundary_load(&self.mesh, g)?)?;
        Ok(InteriorSolution { mesh: self.mesh.clone(), potential, flux: g.clone() })
    }
}

/// One-shot Neumann solve.
pub fn solve_neumann(
    mesh: &Arc<DiskMesh>,
    sigma: &ConductivityField,
    g: &FluxCoefficients,
) -> Result<InteriorSolution> {
    if !Arc::ptr_eq(mesh, sigma.mesh()) && mesh.vertex_count() != sigma.mesh().vertex_count() {
        return Err(invalid("conductivity lives on a different mesh"));
    }
    NeumannSolver::new(sigma)?.solve(g)
}

/// Constant per-triangle gradient of the solution's piecewise-linear interpolant.
pub fn element_gradients(sol: &InteriorSolution) -> Vec<Point> {
    nodal_gradients(&sol.mesh, &sol.potential)
}

pub fn nodal_gradients(mesh: &DiskMesh, values: &[f64]) -> Vec<Point> {
    mesh.triangles()
        .iter()
        .zip(mesh.shape_gradients())
        .map(|(t, g)| {
            let mut d = [0.0; 2];
            for i in 0..3 {
                d[0] += values[t[i]] * g[i][0];
                d[1] += values[t[i]] * g[i][1];
            }
            d
        })
        .collect()
}

fn assemble_stiffness(mesh: &DiskMesh, element_sigma: &[f64]) -> Result<CsrMatrix> {
    let mut triplets = Vec::with_capacity(9 * mesh.triangle_count());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let s = element_sigma[t];
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Singular { what: "stiffness matrix", condition: f64::INFINITY });
        }
        let g = mesh.shape_gradients()[t];
        let scale = s * mesh.areas()[t];
        for i in 0..3 {
            for j in 0..3 {
                let k = scale * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                triplets.push((tri[i], tri[j], k));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(mesh.vertex_count(), &triplets))
}

/// `∫ cos kθ φ_j dθ / cos kθ_j` for the angular hat function of a boundary vertex.
pub fn hat_mode_factor(mesh: &DiskMesh, k: usize) -> f64 {
    let delta = 2.0 * PI / mesh.boundary_count() as f64;
    let kd = k as f64 * delta;
    2.0 * (1.0 - kd.cos()) / (k as f64 * kd)
}

fn nyquist_limit(mesh: &DiskMesh) -> usize {
    mesh.boundary_count() / 2 - 1
}

/// Exact Galerkin load vector for the trigonometric flux `g`.
pub fn boundary_load(mesh: &DiskMesh, g: &FluxCoefficients) -> Result<Vec<f64>> {
    if g.order() > nyquist_limit(mesh) {
        return Err(Error::Nyquist { order: g.order(), limit: nyquist_limit(mesh) });
    }
    let mut load = vec![0.0; mesh.vertex_count()];
    for k in 1..=g.order() {
        let (a, b) = (g.cos[k - 1], g.sin[k - 1]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let f = hat_mode_factor(mesh, k);
        for (j, &v) in mesh.boundary().iter().enumerate() {
            let t = k as f64 * mesh.boundary_angle(j);
            load[v] += f * (a * t.cos() + b * t.sin());
        }
    }
    Ok(load)
}

/// Fourier coefficients (modes `1..=order`) of the piecewise-linear boundary trace.
pub fn trace_coefficients(mesh: &DiskMesh, u: &[f64], order: usize) -> FluxCoefficients {
    let mut out = FluxCoefficients::zeros(order);
    for k in 1..=order {
        let f = hat_mode_factor(mesh, k) / PI;
        let (mut c, mut s) = (0.0, 0.0);
        for (j, &v) in mesh.boundary().iter().enumerate() {
            let t = k as f64 * mesh.boundary_angle(j);
            c += u[v] * t.cos();
            s += u[v] * t.sin();
        }
        out.cos[k - 1] = f * c;
        out.sin[k - 1] = f * s;
    }
    out
}

/// Trapezoid-rule boundary mean `(1/2π) Σ w_b u_b`.
pub fn boundary_mean(mesh: &DiskMesh, u: &[f64]) -> f64 {
    mesh.boundary().iter().map(|&b| u[b]).sum::<f64>() / mesh.boundary_count() as f64
}
