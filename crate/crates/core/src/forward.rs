//! Everything the inverse solver needs from one conductivity: CGPTs plus the
//! transmission potentials `u_n` whose gradients form the Fréchet derivative.

use nalgebra::{DMatrix, DVector};

use crate::boundary_ops::{
    basis_index, basis_potentials, cgpt_from_msigma, default_boundary_order, flux_transfer, msigma_matrix,
    ntd_from_potentials, FourierBoundaryOperator,
};
use crate::cgpt::{CgptMatrix, Parity};
use crate::error::{invalid, Result};
use crate::fem::{nodal_gradients, NeumannSolver};
use crate::field::ConductivityField;
use crate::mesh::Point;

#[derive(Debug, Clone)]
pub struct ForwardModel {
    sigma: ConductivityField,
    potentials: Vec<Vec<f64>>,
    lambda: FourierBoundaryOperator,
    msigma: FourierBoundaryOperator,
    transfer: DMatrix<f64>,
}

impl ForwardModel {
    /// Solves for all `2·boundary_order` basis fluxes.
    pub fn new(sigma: &ConductivityField, boundary_order: usize) -> Result<Self> {
        let solver = NeumannSolver::new(sigma)?;
        let potentials = basis_potentials(&solver, boundary_order)?;
        let lambda = ntd_from_potentials(sigma.mesh(), &potentials)?;
        let msigma = msigma_matrix(&lambda)?;
        let transfer = flux_transfer(&lambda)?;
        Ok(Self { sigma: sigma.clone(), potentials, lambda, msigma, transfer })
    }

    /// Uses the default boundary truncation for CGPT order `k`.
    pub fn for_order(sigma: &ConductivityField, k: usize) -> Result<Self> {
        Self::new(sigma, default_boundary_order(k))
    }

    pub fn sigma(&self) -> &ConductivityField {
        &self.sigma
    }

    pub fn boundary_order(&self) -> usize {
        self.lambda.order
    }

    pub fn ntd(&self) -> &FourierBoundaryOperator {
        &self.lambda
    }

    pub fn msigma(&self) -> &FourierBoundaryOperator {
        &self.msigma
    }

    pub fn cgpt(&self, k: usize) -> Result<CgptMatrix> {
        cgpt_from_msigma(&self.msigma, k)
    }

    /// Nodal potential `u_n` inside the disk for the harmonic `h_n` of the given parity.
    pub fn transmission_potential(&self, n: usize, parity: Parity) -> Result<Vec<f64>> {
        let kb = self.boundary_order();
        if n == 0 || n > kb {
            return Err(invalid(format!("mode {n} outside boundary order {kb}")));
        }
        let mut dh = DVector::zeros(2 * kb);
        dh[basis_index(kb, n, parity)] = n as f64;
        let g = &self.transfer * dh;
        let mut u = vec![0.0; self.sigma.mesh().vertex_count()];
        for (coef, basis) in g.iter().zip(&self.potentials) {
            if *coef != 0.0 {
                u.iter_mut().zip(basis).for_each(|(a, b)| *a += coef * b);
            }
        }
        Ok(u)
    }

    /// Per-element gradients of `u_n`.
    pub fn transmission_gradients(&self, n: usize, parity: Parity) -> Result<Vec<Point>> {
        Ok(nodal_gradients(self.sigma.mesh(), &self.transmission_potential(n, parity)?))
    }

    /// Gradients of every potential up to order `k`, indexed like the
    /// assembled CGPT matrix (cosines first).
    pub fn all_gradients(&self, k: usize) -> Result<Vec<Vec<Point>>> {
        let mut out = Vec::with_capacity(2 * k);
        for p in Parity::BOTH {
            for n in 1..=k {
                out.push(self.transmission_gradients(n, p)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_refined_mesh;
    use std::sync::Arc;

    #[test]
    fn constant_conductivity_potentials_are_scaled_harmonics() {
        let mesh = Arc::new(build_refined_mesh(8, 5).unwrap());
        let c = 2.0;
        let sigma = ConductivityField::constant(mesh.clone(), c).unwrap();
        let fwd = ForwardModel::for_order(&sigma, 2).unwrap();
        let u = fwd.transmission_potential(2, Parity::Sin).unwrap();
        let err = mesh
            .vertices()
            .iter()
            .zip(&u)
            .map(|(p, v)| (v - 2.0 / (c + 1.0) * 2.0 * p[0] * p[1]).abs())
            .fold(0.0, f64::max);
        assert!(err < 2e-3, "{err}");
        let g = fwd.transmission_gradients(1, Parity::Cos).unwrap();
        for d in g {
            assert!((d[0] - 2.0 / 3.0).abs() < 1e-3 && d[1].abs() < 1e-3);
        }
        let cg = fwd.cgpt(2).unwrap();
        assert!((cg.cc[(0, 0)] - 2.0 * std::f64::consts::PI / 3.0).abs() < 1e-6);
        assert!(fwd.transmission_potential(13, Parity::Cos).is_err());
    }
}
