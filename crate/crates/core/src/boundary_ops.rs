//! Boundary operators on the zero-mean trigonometric basis and the GPT
//! operator `M_σ = Λ_1⁻¹(Λ_1 − Λ_σ)(Λ_σ − Λ^e)⁻¹(Λ_1 − Λ^e)`.
//!
//! Basis index `i < K_b` is `cos((i+1)θ)`, index `K_b + i` is `sin((i+1)θ)`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::cgpt::{CgptMatrix, Parity};
use crate::error::{invalid, Error, Result};
use crate::fem::{boundary_load, trace_coefficients, FluxCoefficients, NeumannSolver};
use crate::field::ConductivityField;
use crate::mesh::DiskMesh;

/// Operators are rejected when their condition number exceeds this.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest tolerated relative asymmetry of an assembled NtD matrix.
pub const ASYMMETRY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorRole {
    NtdInterior,
    NtdExterior,
    MSigma,
    Composite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierBoundaryOperator {
    pub order: usize,
    pub matrix: DMatrix<f64>,
    pub role: OperatorRole,
}

impl FourierBoundaryOperator {
    pub fn index(&self, mode: usize, parity: Parity) -> usize {
        basis_index(self.order, mode, parity)
    }

    /// Coefficient vector to `FluxCoefficients`.
    pub fn apply(&self, g: &FluxCoefficients) -> Result<FluxCoefficients> {
        if g.order() != self.order {
            return Err(invalid("flux order does not match operator order"));
        }
        let x = to_vector(g);
        Ok(from_vector(&(&self.matrix * x)))
    }
}

pub fn basis_index(order: usize, mode: usize, parity: Parity) -> usize {
    parity.index() * order + mode - 1
}

pub(crate) fn to_vector(g: &FluxCoefficients) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_iterator(2 * g.order(), g.cos.iter().chain(&g.sin).copied())
}

pub(crate) fn from_vector(v: &nalgebra::DVector<f64>) -> FluxCoefficients {
    let k = v.len() / 2;
    FluxCoefficients { cos: v.rows(0, k).iter().copied().collect(), sin: v.rows(k, k).iter().copied().collect() }
}

fn mode_of(order: usize, i: usize) -> usize {
    i % order + 1
}

/// Default boundary truncation for CGPT order `k`.
pub fn default_boundary_order(k: usize) -> usize {
    2 * k + 8
}

/// Largest boundary order allowed on a mesh.
pub fn max_boundary_order(mesh: &DiskMesh) -> usize {
    (mesh.boundary_count() / 2).saturating_sub(2)
}

pub fn ntd_unit_disk(order: usize) -> FourierBoundaryOperator {
    let matrix = DMatrix::from_fn(2 * order, 2 * order, |i, j| {
        if i == j {
            1.0 / mode_of(order, i) as f64
        } else {
            0.0
        }
    });
    FourierBoundaryOperator { order, matrix, role: OperatorRole::NtdInterior }
}

pub fn exterior_ntd_disk(order: usize) -> FourierBoundaryOperator {
    let inner = ntd_unit_disk(order);
    FourierBoundaryOperator { order, matrix: -inner.matrix, role: OperatorRole::NtdExterior }
}

/// FEM potentials for every basis flux, in basis order.
pub(crate) fn basis_potentials(solver: &NeumannSolver, order: usize) -> Result<Vec<Vec<f64>>> {
    let mesh = solver.mesh();
    if order == 0 || order > max_boundary_order(mesh) {
        return Err(Error::Nyquist { order, limit: max_boundary_order(mesh) });
    }
    (0..2 * order)
        .into_par_iter()
        .map(|i| {
            let parity = Parity::BOTH[i / order];
            let g = FluxCoefficients::mode(order, mode_of(order, i), parity);
            solver.solve_load(&boundary_load(mesh, &g)?)
        })
        .collect()
}

/// Discrete NtD matrix from basis potentials, checked and symmetrized.
pub(crate) fn ntd_from_potentials(mesh: &DiskMesh, potentials: &[Vec<f64>]) -> Result<FourierBoundaryOperator> {
    let order = potentials.len() / 2;
    let mut a = DMatrix::zeros(2 * order, 2 * order);
    for (j, u) in potentials.iter().enumerate() {
        let t = trace_coefficients(mesh, u, order);
        for (i, v) in t.cos.iter().chain(&t.sin).enumerate() {
            a[(i, j)] = *v;
        }
    }
    let asym = (&a - a.transpose()).norm() / a.norm();
    if !(asym < ASYMMETRY_TOLERANCE) {
        return Err(Error::Asymmetric { relative: asym });
    }
    let matrix = (&a + a.transpose()) * 0.5;
    Ok(FourierBoundaryOperator { order, matrix, role: OperatorRole::NtdInterior })
}

/// Neumann-to-Dirichlet operator of `σ` on the first `order` modes of each parity.
pub fn ntd_sigma(sigma: &ConductivityField, order: usize) -> Result<FourierBoundaryOperator> {
    let mesh = sigma.mesh();
    if order == 0 || order > max_boundary_order(mesh) {
        return Err(Error::Nyquist { order, limit: max_boundary_order(mesh) });
    }
    let solver = NeumannSolver::new(sigma)?;
    ntd_from_potentials(mesh, &basis_potentials(&solver, order)?)
}

pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    let s = a.singular_values();
    let max = s.max();
    let min = s.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Inverse after a condition check.
pub(crate) fn checked_inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { what, condition });
    }
    a.clone().try_inverse().ok_or(Error::Singular { what, condition })
}

/// `(Λ_σ − Λ^e)⁻¹(Λ_1 − Λ^e)`: maps a harmonic's normal derivative to the
/// Neumann flux of the corresponding transmission solution inside the disk.
pub fn flux_transfer(lambda_sigma: &FourierBoundaryOperator) -> Result<DMatrix<f64>> {
    let k = lambda_sigma.order;
    let l1 = ntd_unit_disk(k).matrix;
    let le = exterior_ntd_disk(k).matrix;
    let inv = checked_inverse(&(&lambda_sigma.matrix - &le), "Λ_σ − Λ^e")?;
    Ok(inv * (l1 - le))
}

pub fn msigma_matrix(lambda_sigma: &FourierBoundaryOperator) -> Result<FourierBoundaryOperator> {
    if lambda_sigma.role != OperatorRole::NtdInterior {
        return Err(invalid("M_σ needs an interior NtD operator"));
    }
    let k = lambda_sigma.order;
    let l1 = ntd_unit_disk(k).matrix;
    let l1_inv = DMatrix::from_diagonal(&l1.diagonal().map(|d| 1.0 / d));
    let matrix = l1_inv * (&l1 - &lambda_sigma.matrix) * flux_transfer(lambda_sigma)?;
    Ok(FourierBoundaryOperator { order: k, matrix, role: OperatorRole::MSigma })
}

/// Contracted GPTs `M^{pq}_{mn} = π n M_σ[(m,p),(n,q)]` for `m, n ≤ k`.
pub fn cgpt_from_msigma(m_sigma: &FourierBoundaryOperator, k: usize) -> Result<CgptMatrix> {
    if m_sigma.role != OperatorRole::MSigma {
        return Err(invalid("CGPTs need an M_σ operator"));
    }
    if k == 0 || k + 4 > m_sigma.order {
        return Err(invalid(format!(
            "CGPT order {k} needs boundary order at least {}, got {}",
            k + 4,
            m_sigma.order
        )));
    }
    let mut out = CgptMatrix::zeros(k);
    for p in Parity::BOTH {
        for q in Parity::BOTH {
            let block = out.block_mut(p, q);
            for m in 1..=k {
                for n in 1..=k {
                    let v = m_sigma.matrix[(m_sigma.index(m, p), m_sigma.index(n, q))];
                    block[(m - 1, n - 1)] = PI * n as f64 * v;
                }
            }
        }
    }
    Ok(out)
}

/// CGPTs of `σ` up to order `k`, using the default boundary truncation.
pub fn compute_cgpt(sigma: &ConductivityField, k: usize) -> Result<CgptMatrix> {
    let kb = default_boundary_order(k);
    cgpt_from_msigma(&msigma_matrix(&ntd_sigma(sigma, kb)?)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{project_sigma, AnalyticSigma};
    use crate::mesh::build_refined_mesh;
    use std::sync::Arc;

    fn mesh(level: usize) -> Arc<DiskMesh> {
        Arc::new(build_refined_mesh(8, level).unwrap())
    }

    #[test]
    fn disk_operators() {
        let l1 = ntd_unit_disk(3);
        let g = FluxCoefficients::mode(3, 3, Parity::Cos);
        assert!((l1.apply(&g).unwrap().cos[2] - 1.0 / 3.0).abs() < 1e-15);
        let le = exterior_ntd_disk(3);
        let g = FluxCoefficients::mode(3, 2, Parity::Sin);
        assert!((le.apply(&g).unwrap().sin[1] + 0.5).abs() < 1e-15);
        assert_eq!(&l1.matrix - &le.matrix, &l1.matrix * 2.0);
        assert!(le.matrix.symmetric_eigenvalues().iter().all(|&e| e < 0.0));
    }

    #[test]
    fn unit_conductivity_reproduces_disk_ntd() {
        // level 5 resolves the linear mode to 1e-4; higher modes carry
        // an O((k² - 1) h²) P1 error and need level 6
        let sigma = ConductivityField::constant(mesh(5), 1.0).unwrap();
        let a = ntd_sigma(&sigma, 6).unwrap();
        let err = &a.matrix - ntd_unit_disk(6).matrix;
        assert!(err.column(0).amax() < 1e-4 && err.column(6).amax() < 1e-4);

        let sigma = ConductivityField::constant(mesh(6), 1.0).unwrap();
        let a = ntd_sigma(&sigma, 6).unwrap();
        let err = &a.matrix - ntd_unit_disk(6).matrix;
        for k in 1..=3 {
            for p in Parity::BOTH {
                let i = a.index(k, p);
                assert!(err.column(i).amax() < 1e-4, "mode {k}: {}", err.column(i).amax());
            }
        }
        let msig = msigma_matrix(&a).unwrap();
        for (i, j) in [(0, 0), (1, 1), (2, 2), (0, 7), (8, 2)] {
            assert!(msig.matrix[(i, j)].abs() < 1e-3);
        }
    }

    #[test]
    fn constant_two_operator_values() {
        let sigma = ConductivityField::constant(mesh(6), 2.0).unwrap();
        let a = ntd_sigma(&sigma, 7).unwrap();
        for k in 1..=3 {
            let i = a.index(k, Parity::Sin);
            assert!((a.matrix[(i, i)] - 0.5 / k as f64).abs() < 1e-4);
        }
        let msig = msigma_matrix(&a).unwrap();
        for k in 1..=3 {
            let i = msig.index(k, Parity::Cos);
            assert!((msig.matrix[(i, i)] - 2.0 / 3.0).abs() < 2e-3, "{}", msig.matrix[(i, i)]);
        }
        let c = cgpt_from_msigma(&msig, 3).unwrap();
        assert!((c.cc[(0, 0)] - 2.0 * PI / 3.0).abs() < 2e-3);
        assert!(cgpt_from_msigma(&msig, 4).is_err());
    }

    #[test]
    fn nyquist_and_positivity() {
        let m = mesh(2);
        let sigma = project_sigma(&AnalyticSigma::Benchmark1, m).unwrap();
        assert!(matches!(ntd_sigma(&sigma, 15), Err(Error::Nyquist { .. })));
        let a = ntd_sigma(&sigma, 14).unwrap();
        assert!(a.matrix.clone().symmetric_eigenvalues().iter().all(|&e| e > 0.0));
    }

    #[test]
    fn monotone_sign_and_lipschitz_trend() {
        let m = mesh(4);
        let above = project_sigma(&AnalyticSigma::Benchmark1, m.clone()).unwrap();
        let c = compute_cgpt(&above, 3).unwrap();
        for i in 0..3 {
            assert!(c.cc[(i, i)] > 0.0 && c.ss[(i, i)] > 0.0);
        }
        let below = ConductivityField::constant(m.clone(), 0.5).unwrap();
        let c = compute_cgpt(&below, 3).unwrap();
        for i in 0..3 {
            assert!(c.cc[(i, i)] < 0.0);
        }

        let base = compute_cgpt(&ConductivityField::constant(m.clone(), 2.0).unwrap(), 2).unwrap();
        let diff = |d: f64| {
            let s = ConductivityField::constant(m.clone(), 2.0 + d).unwrap();
            compute_cgpt(&s, 2).unwrap().sub(&base).unwrap().frobenius()
        };
        let (a, b) = (diff(1e-3), diff(2e-3));
        assert!(a > 0.0 && (b / a - 2.0).abs() < 1e-2);
    }

    #[test]
    fn benchmark_cgpts_are_symmetric() {
        let m = mesh(4);
        let sigma = project_sigma(&AnalyticSigma::Benchmark3, m).unwrap();
        let c = compute_cgpt(&sigma, 4).unwrap();
        assert!(c.asymmetry() < 1e-6, "{}", c.asymmetry());
    }
}
