//! Discrepancy functionals, their Fréchet derivatives and descent directions.
//!
//! Matrices indexed by `a, b` use the assembled CGPT layout: `a < N` is
//! `cos((a+1)θ)`, `a ≥ N` is `sin((a-N+1)θ)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::config::{EigenWeight, Functional, Penalty, WeightScheme};
use crate::cgpt::{CgptMatrix, Parity};
use crate::error::{invalid, Error, Result};
use crate::forward::ForwardModel;
use crate::mesh::{DiskMesh, Point};

/// `ω` over the assembled `2N×2N` layout for active order `n`.
pub fn weight_matrix(scheme: WeightScheme, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * n, 2 * n, |a, b| {
        let (m, k) = ((a % n + 1) as f64, (b % n + 1) as f64);
        match scheme {
            WeightScheme::Unit => 1.0,
            WeightScheme::InverseProduct => 1.0 / (m * k),
        }
    })
}

/// `½ Σ ω_ab (y_ab − M_ab)²` over all parity blocks.
pub fn s1_value(m: &CgptMatrix, y: &CgptMatrix, weights: &DMatrix<f64>) -> Result<f64> {
    let e = y.sub(m)?.assemble();
    if weights.shape() != e.shape() {
        return Err(invalid("weight matrix does not match the CGPT order"));
    }
    Ok(0.5 * e.component_mul(&e).component_mul(weights).sum())
}

/// Spectral data of a symmetric CGPT assembly, eigenvalues ascending.
struct Spectrum {
    values: Vec<f64>,
    vectors: DMatrix<f64>,
}

fn spectrum(a: &DMatrix<f64>) -> Result<Spectrum> {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(Error::Eigen)?;
    if eig.eigenvalues.iter().chain(eig.eigenvectors.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Eigen);
    }
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Spectrum { values, vectors })
}

fn eigen_weights(rule: EigenWeight, values: &[f64]) -> Vec<f64> {
    match rule {
        EigenWeight::Unit => vec![1.0; values.len()],
        EigenWeight::InverseMagnitude => {
            let floor = 1e-3 * values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            values.iter().map(|v| 1.0 / (v.abs() + floor)).collect()
        }
    }
}

/// Value of the eigenbasis functional and its residual-weight matrix
/// `W = Σ ω_l ω_l' c_ll' v_l' v0_lᵀ` with `c_ll' = ⟨(Y − M) v0_l, v_l'⟩`.
fn s2_parts(m: &CgptMatrix, y: &CgptMatrix, rule: EigenWeight) -> Result<(f64, DMatrix<f64>, Spectrum, Spectrum)> {
    let ya = y.assemble();
    let ma = m.assemble();
    if ya.shape() != ma.shape() {
        return Err(invalid("CGPT orders differ"));
    }
    let sy = spectrum(&ya)?;
    let sm = spectrum(&ma)?;
    let (wy, wm) = (eigen_weights(rule, &sy.values), eigen_weights(rule, &sm.values));
    // c[l', l] = v_l'ᵀ E v0_l
    let c = sm.vectors.transpose() * (&ya - &ma) * &sy.vectors;
    let mut value = 0.0;
    let mut scaled = c.clone();
    for l in 0..c.ncols() {
        for lp in 0..c.nrows() {
            let w = wy[l] * wm[lp];
            value += 0.5 * w * c[(lp, l)].powi(2);
            scaled[(lp, l)] *= w;
        }
    }
    let w = &sm.vectors * scaled * sy.vectors.transpose();
    Ok((value, w, sy, sm))
}

/// `½ Σ_{l,l'} ω_l(λ0_l) ω_l'(λ_l') ⟨(Y − M) v0_l, v_l'⟩²`.
pub fn s2_value(m: &CgptMatrix, y: &CgptMatrix, rule: EigenWeight) -> Result<f64> {
    Ok(s2_parts(m, y, rule)?.0)
}

/// Penalty term `q‖σ − σ₀‖²` against a nodal reference.
#[derive(Debug, Clone)]
pub struct Regularization {
    pub q: f64,
    pub penalty: Penalty,
    pub reference: Vec<f64>,
}

impl Regularization {
    fn value(&self, mesh: &DiskMesh, sigma: &[f64]) -> f64 {
        let d: Vec<f64> = sigma.iter().zip(&self.reference).map(|(s, r)| s - r).collect();
        match self.penalty {
            Penalty::L2 => self.q * mesh.lumped_mass().iter().zip(&d).map(|(w, x)| w * x * x).sum::<f64>(),
            Penalty::LInf => self.q * d.iter().fold(0.0f64, |m, x| m.max(x.abs())).powi(2),
        }
    }

    /// Riesz representative (lumped mass) of the penalty gradient.
    fn gradient(&self, mesh: &DiskMesh, sigma: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = sigma.iter().zip(&self.reference).map(|(s, r)| s - r).collect();
        match self.penalty {
            Penalty::L2 => d.iter().map(|x| 2.0 * self.q * x).collect(),
            Penalty::LInf => {
                let mut g = vec![0.0; d.len()];
                let (i, x) = d
                    .iter()
                    .enumerate()
                    .fold((0, 0.0f64), |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best });
                if x != 0.0 {
                    g[i] = 2.0 * self.q * x / mesh.lumped_mass()[i];
                }
                g
            }
        }
    }
}

/// Functional of one stage: target, weights and optional penalty.
#[derive(Debug, Clone)]
pub struct Objective {
    pub target: CgptMatrix,
    pub weights: DMatrix<f64>,
    pub functional: Functional,
    pub eigen_weights: EigenWeight,
    pub regularization: Option<Regularization>,
}

/// Objective evaluated at one conductivity.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cgpt: CgptMatrix,
    pub data: f64,
    pub penalty: f64,
    /// `W` such that `−S'_data[γ] = Σ_ab W_ab M'_ab[γ]`.
    pub residual_weights: DMatrix<f64>,
}

impl Evaluation {
    pub fn total(&self) -> f64 {
        self.data + self.penalty
    }

    /// `√(2 S_data)`: the weighted Frobenius residual.
    pub fn residual(&self) -> f64 {
        (2.0 * self.data).sqrt()
    }
}

impl Objective {
    pub fn order(&self) -> usize {
        self.target.order()
    }

    pub fn evaluate(&self, fwd: &ForwardModel) -> Result<Evaluation> {
        let cgpt = fwd.cgpt(self.order())?;
        let (data, residual_weights) = if self.functional.uses_eigenbasis() {
            let (v, w, _, _) = s2_parts(&cgpt, &self.target, self.eigen_weights)?;
            (v, w)
        } else {
            let e = self.target.sub(&cgpt)?.assemble();
            (s1_value(&cgpt, &self.target, &self.weights)?, e.component_mul(&self.weights))
        };
        let penalty = match (&self.regularization, self.functional.regularized()) {
            (Some(r), true) => r.value(fwd.sigma().mesh(), fwd.sigma().values()),
            _ => 0.0,
        };
        Ok(Evaluation { cgpt, data, penalty, residual_weights })
    }

    /// Newton spanning directions as per-element densities.
    pub fn newton_densities(&self, fwd: &ForwardModel, eval: &Evaluation) -> Result<Vec<Vec<f64>>> {
        let n = self.order();
        let grads = fwd.all_gradients(n)?;
        let mut out = Vec::new();
        if self.functional.uses_eigenbasis() {
            let sy = spectrum(&self.target.assemble())?;
            let sm = spectrum(&eval.cgpt.assemble())?;
            for l in 0..2 * n {
                for lp in 0..2 * n {
                    let w = sm.vectors.column(lp) * sy.vectors.column(l).transpose();
                    out.push(element_density(&w, &grads));
                }
            }
        } else {
            for a in 0..2 * n {
                for b in a..2 * n {
                    if self.weights[(a, b)] != 0.0 || self.weights[(b, a)] != 0.0 {
                        out.push(pair_density(&grads[a], &grads[b]));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Penalty gradient (Riesz, lumped mass) at `fwd`'s conductivity, if active.
    pub(crate) fn penalty_gradient(&self, fwd: &ForwardModel) -> Option<Vec<f64>> {
        match (&self.regularization, self.functional.regularized()) {
            (Some(r), true) if r.q > 0.0 => Some(r.gradient(fwd.sigma().mesh(), fwd.sigma().values())),
            _ => None,
        }
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn pair_density(a: &[Point], b: &[Point]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| dot(*x, *y)).collect()
}

/// `Σ_ab W_ab ∇u_a·∇u_b` from gradient vectors at a single location.
pub fn density_at(w: &DMatrix<f64>, grads: &[Point]) -> f64 {
    let mut g = 0.0;
    for a in 0..w.nrows() {
        for b in 0..w.ncols() {
            let c = w[(a, b)];
            if c != 0.0 {
                g += c * dot(grads[a], grads[b]);
            }
        }
    }
    g
}

/// `Σ_ab W_ab ∇u_a·∇u_b` per element, given per-element gradients of each `u_a`.
pub fn element_density(w: &DMatrix<f64>, grads: &[Vec<Point>]) -> Vec<f64> {
    let sym = (w + w.transpose()) * 0.5;
    let ntri = grads.first().map_or(0, Vec::len);
    let mut g = vec![0.0; ntri];
    for a in 0..sym.nrows() {
        for b in a..sym.ncols() {
            let c = if a == b { sym[(a, b)] } else { 2.0 * sym[(a, b)] };
            if c == 0.0 {
                continue;
            }
            for (t, gt) in g.iter_mut().enumerate() {
                *gt += c * dot(grads[a][t], grads[b][t]);
            }
        }
    }
    g
}

/// `M'_mn(σ)[γ] = Σ_T γ̄_T |T| ∇u_m·∇u_n` for the parity pair `(p, q)`.
pub fn frechet_apply(fwd: &ForwardModel, gamma: &[f64], m: usize, n: usize, p: Parity, q: Parity) -> Result<f64> {
    let mesh = fwd.sigma().mesh();
    if gamma.len() != mesh.vertex_count() {
        return Err(invalid("direction length does not match the mesh"));
    }
    let gm = fwd.transmission_gradients(m, p)?;
    let gn = fwd.transmission_gradients(n, q)?;
    Ok(mesh
        .triangles()
        .iter()
        .zip(mesh.areas())
        .enumerate()
        .map(|(t, (tri, area))| {
            let gbar = (gamma[tri[0]] + gamma[tri[1]] + gamma[tri[2]]) / 3.0;
            gbar * area * dot(gm[t], gn[t])
        })
        .sum())
}

/// `−S'_data[γ]` for a nodal direction, from an element density `g`.
pub fn directional_decrease(mesh: &DiskMesh, density: &[f64], gamma: &[f64]) -> f64 {
    mesh.triangles()
        .iter()
        .zip(mesh.areas())
        .zip(density)
        .map(|((tri, area), g)| (gamma[tri[0]] + gamma[tri[1]] + gamma[tri[2]]) / 3.0 * area * g)
        .sum()
}

/// Negative gradient of the data term as a nodal field (lumped-mass Riesz map).
pub fn gradient_field(fwd: &ForwardModel, objective: &Objective, eval: &Evaluation) -> Result<Vec<f64>> {
    let grads = fwd.all_gradients(objective.order())?;
    let density = element_density(&eval.residual_weights, &grads);
    Ok(fwd.sigma().mesh().element_to_nodal(&density))
}

/// Negative gradient of the full objective (data plus penalty).
pub fn descent_direction(fwd: &ForwardModel, objective: &Objective, eval: &Evaluation) -> Result<Vec<f64>> {
    let mut g = gradient_field(fwd, objective, eval)?;
    if let Some(p) = objective.penalty_gradient(fwd) {
        g.iter_mut().zip(p).for_each(|(a, b)| *a -= b);
    }
    Ok(g)
}
