//! Multistatic response (MSR) synthesis from CGPTs and least-squares CGPT
//! recovery for a circular array of coincident sources and receivers.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cgpt::CgptMatrix;
use crate::error::{invalid, Error, Result};
use crate::mesh::Point;

/// Minimum gap between the array radius and the unit disk.
const RADIUS_MARGIN: f64 = 0.1;
const PINV_RTOL: f64 = 1e-12;

/// `N` equally spaced points `R(cos 2πt/N, sin 2πt/N)`, centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorArray {
    count: usize,
    radius: f64,
}

impl SensorArray {
    pub fn new(count: usize, radius: f64) -> Result<Self> {
        if count < 3 {
            return Err(invalid(format!("sensor count must be at least 3, got {count}")));
        }
        if !(radius > 1.0 + RADIUS_MARGIN) || !radius.is_finite() {
            return Err(invalid(format!("array radius must exceed {}, got {radius}", 1.0 + RADIUS_MARGIN)));
        }
        Ok(Self { count, radius })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn angle(&self, t: usize) -> f64 {
        2.0 * PI * t as f64 / self.count as f64
    }

    pub fn position(&self, t: usize) -> Point {
        let a = self.angle(t);
        [self.radius * a.cos(), self.radius * a.sin()]
    }
}

/// `2K × N` matrix with rows `cos mθ_t / (2πmR^m)` and `sin mθ_t / (2πmR^m)`
/// at indices `2(m-1)` and `2(m-1)+1`.
pub fn build_a(array: &SensorArray, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(2 * k, array.count, |i, t| {
        let m = (i / 2 + 1) as f64;
        let scale = 2.0 * PI * m * array.radius.powf(m);
        let a = m * array.angle(t);
        if i % 2 == 0 {
            a.cos() / scale
        } else {
            a.sin() / scale
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsrMatrix {
    pub values: DMatrix<f64>,
    pub simulated_order: usize,
    pub noise_std: f64,
}

impl MsrMatrix {
    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| crate::io::fmt_f64(*v)))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a square matrix; provenance fields are unknown and set to zero.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("row {i}: bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Parse("MSR matrix must be square and non-empty".into()));
        }
        Ok(Self { values: DMatrix::from_fn(n, n, |i, j| rows[i][j]), simulated_order: 0, noise_std: 0.0 })
    }
}

/// `V = Aᵀ 𝐌 A + E` with `𝐌` truncated to order `k_sim` and `E` i.i.d.
/// Gaussian with standard deviation `noise_std`, drawn from `seed`.
pub fn simulate_msr(
    truth: &CgptMatrix,
    array: &SensorArray,
    k_sim: usize,
    noise_std: f64,
    seed: u64,
) -> Result<MsrMatrix> {
    if k_sim == 0 || k_sim > truth.order() {
        return Err(invalid(format!("simulation order {k_sim} must be in 1..={}", truth.order())));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(invalid(format!("noise level must be finite and non-negative, got {noise_std}")));
    }
    let a = build_a(array, k_sim);
    let m = truth.truncate(k_sim)?.interleaved();
    let mut values = a.transpose() * &m * &a;
    if m == m.transpose() {
        // reciprocity holds exactly, not just up to rounding
        values = (&values + values.transpose()) * 0.5;
    }
    if noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).map_err(|e| invalid(e.to_string()))?;
        for v in values.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(MsrMatrix { values, simulated_order: k_sim, noise_std })
}

fn pseudo_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::Singular { what: "A Aᵀ", condition: f64::INFINITY });
    }
    let cut = PINV_RTOL * smax;
    if svd.singular_values.iter().all(|&s| s <= cut) {
        return Err(Error::Singular { what: "A Aᵀ", condition: f64::INFINITY });
    }
    svd.pseudo_inverse(cut).map_err(|e| invalid(e.to_string()))
}

/// Frobenius least-squares fit `argmin ‖V − Aᵀ𝐌A‖_F` of order `k`.
pub fn recover_cgpt(v: &MsrMatrix, array: &SensorArray, k: usize) -> Result<CgptMatrix> {
    if v.size() != array.count {
        return Err(invalid(format!("MSR size {} does not match {} sensors", v.size(), array.count)));
    }
    if k == 0 || 2 * k >= array.count {
        return Err(invalid(format!("recovery order {k} needs 2K < N = {}", array.count)));
    }
    let a = build_a(array, k);
    let p = pseudo_inverse(&(&a * a.transpose()))?;
    let m = &p * &a * &v.values * a.transpose() * &p;
    CgptMatrix::from_interleaved(&m)
}

/// `‖est − truth‖_F / ‖truth‖_F` restricted to the 2×2 parity block of
/// diagonal order `m`.
pub fn order_block_error(est: &CgptMatrix, truth: &CgptMatrix, m: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in crate::cgpt::Parity::BOTH {
        for q in crate::cgpt::Parity::BOTH {
            let t = truth.get(m, m, p, q);
            num += (est.get(m, m, p, q) - t).powi(2);
            den += t * t;
        }
    }
    (num / den).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgpt::{constant_cgpt, far_field_eval, radial_cgpt_oracle, HarmonicCoefficients};
    use proptest::prelude::*;

    fn rel(a: &CgptMatrix, b: &CgptMatrix) -> f64 {
        a.sub(b).unwrap().frobenius() / b.frobenius()
    }

    #[test]
    fn a_matrix_entries() {
        let array = SensorArray::new(4, 2.0).unwrap();
        let a = build_a(&array, 2);
        assert!((a[(0, 0)] - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(a[(1, 0)], 0.0);
        let array = SensorArray::new(12, 1.7).unwrap();
        let a = build_a(&array, 4);
        for i in 0..8 {
            let m = (i / 2 + 1) as f64;
            let expected = (6.0f64).sqrt() / (2.0 * PI * m * 1.7f64.powf(m));
            assert!((a.row(i).norm() - expected).abs() < 1e-13);
        }
        assert_eq!(build_a(&array, 0).nrows(), 0);
        assert!(SensorArray::new(8, 1.05).is_err());
    }

    #[test]
    fn zero_cgpt_gives_zero_data() {
        let array = SensorArray::new(16, 2.0).unwrap();
        let v = simulate_msr(&CgptMatrix::zeros(3), &array, 3, 0.0, 1).unwrap();
        assert_eq!(v.values.amax(), 0.0);
        assert_eq!(recover_cgpt(&v, &array, 3).unwrap().frobenius(), 0.0);
    }

    #[test]
    fn matches_point_source_far_field() {
        // source at x_s has harmonic coefficients -A[·, s]; V_ts is its
        // far-field perturbation at x_t
        let truth = constant_cgpt(2.0, 5).unwrap();
        let array = SensorArray::new(32, 3.0).unwrap();
        let v = simulate_msr(&truth, &array, 5, 0.0, 0).unwrap();
        let a = build_a(&array, 5);
        for (t, s) in [(0, 0), (3, 17), (31, 8)] {
            let cos: Vec<f64> = (0..5).map(|n| -a[(2 * n, s)]).collect();
            let sin: Vec<f64> = (0..5).map(|n| -a[(2 * n + 1, s)]).collect();
            let h = HarmonicCoefficients::new(0.0, cos, sin).unwrap();
            let ff = far_field_eval(&truth, &h, array.position(t)).unwrap();
            assert!((ff - v.values[(t, s)]).abs() < 1e-15 + 1e-12 * ff.abs());
        }
        assert_eq!(v.values, v.values.transpose());
        let spot: f64 = (1..=5)
            .map(|m| {
                let m = m as f64;
                (2.0 * PI * m / 3.0) / (2.0 * PI * m * 3f64.powf(m)).powi(2)
            })
            .sum();
        assert!((v.values[(4, 4)] - spot).abs() < 1e-15);
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = constant_cgpt(2.0, 3).unwrap();
        let array = SensorArray::new(32, 3.0).unwrap();
        let v = simulate_msr(&truth, &array, 3, 0.0, 0).unwrap();
        assert!(rel(&recover_cgpt(&v, &array, 3).unwrap(), &truth) < 1e-10);
        assert!(recover_cgpt(&v, &array, 16).is_err());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let truth = constant_cgpt(3.0, 2).unwrap();
        let array = SensorArray::new(10, 2.0).unwrap();
        let a = simulate_msr(&truth, &array, 2, 1e-3, 42).unwrap();
        let b = simulate_msr(&truth, &array, 2, 1e-3, 42).unwrap();
        let c = simulate_msr(&truth, &array, 2, 1e-3, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn mode_contributions_decay_with_radius() {
        for m in 1..=3usize {
            let mut truth = CgptMatrix::zeros(3);
            truth.cc[(m - 1, m - 1)] = 1.0;
            let near = SensorArray::new(16, 2.0).unwrap();
            let far = SensorArray::new(16, 4.0).unwrap();
            let vn = simulate_msr(&truth, &near, 3, 0.0, 0).unwrap().values.norm();
            let vf = simulate_msr(&truth, &far, 3, 0.0, 0).unwrap().values.norm();
            let ratio = vn / vf;
            assert!((ratio - 2f64.powi(2 * m as i32)).abs() < 1e-9 * ratio);
        }
    }

    #[test]
    fn low_orders_are_stable_under_noise() {
        let truth = radial_cgpt_oracle(|r| 2.0 + r * r, 5).unwrap();
        let array = SensorArray::new(32, 3.0).unwrap();
        let v = simulate_msr(&truth, &array, 5, 1e-6, 7).unwrap();
        let k3 = recover_cgpt(&v, &array, 3).unwrap();
        let k5 = recover_cgpt(&v, &array, 5).unwrap();
        let t3 = truth.truncate(3).unwrap();
        let (e1_k3, e1_k5) = (order_block_error(&k3, &t3, 1), order_block_error(&k5, &truth, 1));
        assert!(e1_k5 < 10.0 * e1_k3.max(1e-12));
        assert!(order_block_error(&k5, &truth, 5) > 100.0 * e1_k5);
    }

    #[test]
    fn csv_round_trip() {
        let truth = constant_cgpt(2.0, 2).unwrap();
        let array = SensorArray::new(6, 2.5).unwrap();
        let v = simulate_msr(&truth, &array, 2, 0.0, 0).unwrap();
        let mut buf = Vec::new();
        v.write_csv(&mut buf).unwrap();
        let back = MsrMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back.values, v.values);
        assert!(MsrMatrix::read_csv(&b"1,2\n3\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn recovery_inverts_simulation(vals in proptest::collection::vec(-5.0f64..5.0, 36), n in 7usize..40) {
            let raw = DMatrix::from_vec(6, 6, vals);
            let truth = CgptMatrix::from_assembled(&(&raw + raw.transpose())).unwrap();
            let array = SensorArray::new(n, 2.5).unwrap();
            let v = simulate_msr(&truth, &array, 3, 0.0, 0).unwrap();
            let est = recover_cgpt(&v, &array, 3).unwrap();
            prop_assert!(rel(&est, &truth) < 1e-9);
            prop_assert_eq!(v.values.clone(), v.values.transpose());
        }
    }
}
