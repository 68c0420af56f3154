//! Convergence metrics and the constant-background first perturbation.

use nalgebra::DMatrix;

use crate::cgpt::CgptMatrix;
use crate::error::{invalid, Result};
use crate::field::ConductivityField;
use crate::mesh::Point;

fn check_common_mesh(a: &ConductivityField, b: &ConductivityField) -> Result<()> {
    if a.mesh().vertex_count() != b.mesh().vertex_count() || a.mesh().level() != b.mesh().level() {
        return Err(invalid("fields live on different meshes"));
    }
    Ok(())
}

/// `ε_M = Σ (y_mn − M_mn)²` over all four parity blocks up to `order`, and
/// `ε_σ = ∫(σ_k − σ*)² / ∫σ*²` with the consistent mass matrix.
pub fn epsilon_metrics(
    sigma_k: &ConductivityField,
    sigma_star: &ConductivityField,
    m_k: &CgptMatrix,
    y: &CgptMatrix,
    order: usize,
) -> Result<(f64, f64)> {
    let eps_m = cgpt_discrepancy(m_k, y, order)?;
    Ok((eps_m, relative_l2_squared(sigma_k, sigma_star)?))
}

pub fn cgpt_discrepancy(m_k: &CgptMatrix, y: &CgptMatrix, order: usize) -> Result<f64> {
    let e = y.truncate(order)?.sub(&m_k.truncate(order)?)?;
    Ok(e.frobenius().powi(2))
}

pub fn relative_l2_squared(sigma_k: &ConductivityField, sigma_star: &ConductivityField) -> Result<f64> {
    check_common_mesh(sigma_k, sigma_star)?;
    let mesh = sigma_k.mesh();
    let d: Vec<f64> = sigma_k.values().iter().zip(sigma_star.values()).map(|(a, b)| a - b).collect();
    Ok(mesh.mass_inner(&d, &d) / mesh.mass_inner(sigma_star.values(), sigma_star.values()))
}

/// `‖σ_k − σ*‖_{L²}`.
pub fn l2_error(sigma_k: &ConductivityField, sigma_star: &ConductivityField) -> Result<f64> {
    check_common_mesh(sigma_k, sigma_star)?;
    let d: Vec<f64> = sigma_k.values().iter().zip(sigma_star.values()).map(|(a, b)| a - b).collect();
    Ok(sigma_k.mesh().mass_inner(&d, &d).sqrt())
}

/// Gradients of the transmission potentials `u = 2/(c+1)·h` for a constant
/// conductivity `c`, in the assembled CGPT order.
pub fn constant_background_gradients(c: f64, order: usize, p: Point) -> Vec<Point> {
    let alpha = 2.0 / (c + 1.0);
    let (r, th) = (p[0].hypot(p[1]), p[1].atan2(p[0]));
    let mut out = Vec::with_capacity(2 * order);
    for sin in [false, true] {
        for m in 1..=order {
            // ∇Re z^m = (Re, −Im) of m z^{m−1}; ∇Im z^m = (Im, Re)
            let k = m as f64;
            let a = k * r.powi(m as i32 - 1);
            let (c1, s1) = (((k - 1.0) * th).cos(), ((k - 1.0) * th).sin());
            out.push(if sin { [alpha * a * s1, alpha * a * c1] } else { [alpha * a * c1, -alpha * a * s1] });
        }
    }
    out
}

/// Closed form of the first Landweber update from `σ₀ ≡ c`:
/// `γ(x) = t α² Σ ω_mn m n r^{m+n−2} [(ε^cc+ε^ss) cos((m−n)θ) + (ε^sc−ε^cs) sin((m−n)θ)]`
/// with `α = 2/(c+1)` and `ε = Y − M(c)`.
pub fn first_perturbation(c: f64, t: f64, weights: &DMatrix<f64>, residual: &CgptMatrix, p: Point) -> f64 {
    let n = residual.order();
    let alpha = 2.0 / (c + 1.0);
    let (r, th) = (p[0].hypot(p[1]), p[1].atan2(p[0]));
    let mut total = 0.0;
    for m in 1..=n {
        for k in 1..=n {
            let (i, j) = (m - 1, k - 1);
            let w = weights[(i, j)];
            let rad = (m * k) as f64 * r.powi((m + k) as i32 - 2);
            let d = (m as f64 - k as f64) * th;
            let even = residual.cc[(i, j)] + residual.ss[(i, j)];
            let odd = residual.sc[(i, j)] - residual.cs[(i, j)];
            total += w * rad * (even * d.cos() + odd * d.sin());
        }
    }
    t * alpha * alpha * total
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("spearman needs two samples of equal length ≥ 2"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    Ok(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgpt::constant_cgpt;
    use crate::inverse::objective::density_at;
    use crate::mesh::build_refined_mesh;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    #[test]
    fn epsilon_examples() {
        let mesh = Arc::new(build_refined_mesh(8, 3).unwrap());
        let star = ConductivityField::constant(mesh.clone(), 2.0).unwrap();
        let shifted = ConductivityField::constant(mesh.clone(), 2.1).unwrap();
        let m = constant_cgpt(2.0, 2).unwrap();
        let (em, es) = epsilon_metrics(&star, &star, &m, &m, 2).unwrap();
        assert_eq!((em, es), (0.0, 0.0));
        let (_, es) = epsilon_metrics(&shifted, &star, &m, &m, 2).unwrap();
        assert!((es - 0.0025).abs() < 1e-12);
        let one = ConductivityField::constant(mesh, 1.0).unwrap();
        let (em, _) = epsilon_metrics(&one, &star, &CgptMatrix::zeros(1), &constant_cgpt(2.0, 1).unwrap(), 1).unwrap();
        assert!((em - 2.0 * (2.0 * PI / 3.0).powi(2)).abs() < 1e-12);
        let area: f64 = star.mesh().areas().iter().sum();
        assert!((l2_error(&shifted, &star).unwrap() - 0.1 * area.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.9486832980505138).abs() < 1e-12);
    }

    #[test]
    fn kernel_reproduces_first_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 2;
        let mut residual = CgptMatrix::zeros(n);
        for b in [&mut residual.cc, &mut residual.cs, &mut residual.sc, &mut residual.ss] {
            b.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        let w = DMatrix::from_fn(2 * n, 2 * n, |a, b| 1.0 / ((a % n + 1) * (b % n + 1)) as f64);
        let (c, t) = (2.0, 0.37);
        let e = residual.assemble();
        for _ in 0..20 {
            let (r, th) = (rng.random_range(0.0..1.0f64).sqrt(), rng.random_range(0.0..2.0 * PI));
            let p = [r * th.cos(), r * th.sin()];
            let grads = constant_background_gradients(c, n, p);
            let kernel = t * density_at(&e.component_mul(&w), &grads);
            let formula = first_perturbation(c, t, &w.view((0, 0), (n, n)).into_owned(), &residual, p);
            assert!((kernel - formula).abs() <= 1e-12 * formula.abs().max(1.0), "{kernel} vs {formula}");
        }
    }
}
