//! Contracted GPT container, closed-form and radial-ODE oracles, and the
//! far-field expansion.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::Point;

/// Angular parity of a harmonic `r^n cos nθ` / `r^n sin nθ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Cos,
    Sin,
}

impl Parity {
    pub const BOTH: [Parity; 2] = [Parity::Cos, Parity::Sin];

    pub fn index(self) -> usize {
        match self {
            Parity::Cos => 0,
            Parity::Sin => 1,
        }
    }

    pub fn apply(self, angle: f64) -> f64 {
        match self {
            Parity::Cos => angle.cos(),
            Parity::Sin => angle.sin(),
        }
    }
}

/// Order-`K` CGPTs as four `K×K` blocks; entry `(m-1, n-1)` of block `pq`
/// is `M^{pq}_{mn}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CgptMatrix {
    pub cc: DMatrix<f64>,
    pub cs: DMatrix<f64>,
    pub sc: DMatrix<f64>,
    pub ss: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CgptJson {
    order: usize,
    cc: Vec<Vec<f64>>,
    cs: Vec<Vec<f64>>,
    sc: Vec<Vec<f64>>,
    ss: Vec<Vec<f64>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(k: usize, name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.len() != k || rows.iter().any(|r| r.len() != k) {
        return Err(Error::Parse(format!("block {name} is not {k}x{k}")));
    }
    Ok(DMatrix::from_fn(k, k, |i, j| rows[i][j]))
}

impl CgptMatrix {
    pub fn zeros(order: usize) -> Self {
        let z = DMatrix::zeros(order, order);
        Self { cc: z.clone(), cs: z.clone(), sc: z.clone(), ss: z }
    }

    pub fn order(&self) -> usize {
        self.cc.nrows()
    }

    pub fn block(&self, p: Parity, q: Parity) -> &DMatrix<f64> {
        match (p, q) {
            (Parity::Cos, Parity::Cos) => &self.cc,
            (Parity::Cos, Parity::Sin) => &self.cs,
            (Parity::Sin, Parity::Cos) => &self.sc,
            (Parity::Sin, Parity::Sin) => &self.ss,
        }
    }

    pub fn block_mut(&mut self, p: Parity, q: Parity) -> &mut DMatrix<f64> {
        match (p, q) {
            (Parity::Cos, Parity::Cos) => &mut self.cc,
            (Parity::Cos, Parity::Sin) => &mut self.cs,
            (Parity::Sin, Parity::Cos) => &mut self.sc,
            (Parity::Sin, Parity::Sin) => &mut self.ss,
        }
    }

    /// `M^{pq}_{mn}` with 1-based orders.
    pub fn get(&self, m: usize, n: usize, p: Parity, q: Parity) -> f64 {
        self.block(p, q)[(m - 1, n - 1)]
    }

    /// Block layout `[[cc, cs], [sc, ss]]`.
    pub fn assemble(&self) -> DMatrix<f64> {
        let k = self.order();
        let mut a = DMatrix::zeros(2 * k, 2 * k);
        a.view_mut((0, 0), (k, k)).copy_from(&self.cc);
        a.view_mut((0, k), (k, k)).copy_from(&self.cs);
        a.view_mut((k, 0), (k, k)).copy_from(&self.sc);
        a.view_mut((k, k), (k, k)).copy_from(&self.ss);
        a
    }

    pub fn from_assembled(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() % 2 != 0 {
            return Err(invalid("assembled CGPT matrix must be square with even size"));
        }
        let k = a.nrows() / 2;
        Ok(Self {
            cc: a.view((0, 0), (k, k)).into_owned(),
            cs: a.view((0, k), (k, k)).into_owned(),
            sc: a.view((k, 0), (k, k)).into_owned(),
            ss: a.view((k, k), (k, k)).into_owned(),
        })
    }

    /// Mode-interleaved layout: index `2(m-1) + parity`.
    pub fn interleaved(&self) -> DMatrix<f64> {
        let k = self.order();
        DMatrix::from_fn(2 * k, 2 * k, |i, j| {
            let p = Parity::BOTH[i % 2];
            let q = Parity::BOTH[j % 2];
            self.block(p, q)[(i / 2, j / 2)]
        })
    }

    pub fn from_interleaved(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() % 2 != 0 {
            return Err(invalid("interleaved CGPT matrix must be square with even size"));
        }
        let mut out = Self::zeros(a.nrows() / 2);
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                let (p, q) = (Parity::BOTH[i % 2], Parity::BOTH[j % 2]);
                out.block_mut(p, q)[(i / 2, j / 2)] = a[(i, j)];
            }
        }
        Ok(out)
    }

    /// Leading `order×order` sub-blocks.
    pub fn truncate(&self, order: usize) -> Result<Self> {
        if order == 0 || order > self.order() {
            return Err(invalid(format!("cannot truncate order {} to {order}", self.order())));
        }
        let t = |m: &DMatrix<f64>| m.view((0, 0), (order, order)).into_owned();
        Ok(Self { cc: t(&self.cc), cs: t(&self.cs), sc: t(&self.sc), ss: t(&self.ss) })
    }

    pub fn frobenius(&self) -> f64 {
        (self.cc.norm_squared() + self.cs.norm_squared() + self.sc.norm_squared() + self.ss.norm_squared())
            .sqrt()
    }

    /// `‖A − Aᵀ‖_F / ‖A‖_F` of the assembled matrix (0 for the zero matrix).
    pub fn asymmetry(&self) -> f64 {
        let a = self.assemble();
        let n = a.norm();
        if n == 0.0 {
            0.0
        } else {
            (&a - a.transpose()).norm() / n
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.order() != other.order() {
            return Err(invalid("CGPT orders differ"));
        }
        Ok(Self {
            cc: &self.cc - &other.cc,
            cs: &self.cs - &other.cs,
            sc: &self.sc - &other.sc,
            ss: &self.ss - &other.ss,
        })
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        let doc = CgptJson {
            order: self.order(),
            cc: rows(&self.cc),
            cs: rows(&self.cs),
            sc: rows(&self.sc),
            ss: rows(&self.ss),
        };
        crate::io::write_json(writer, &doc)
    }

    pub fn to_json_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_json(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read_json<R: std::io::Read>(reader: R) -> Result<Self> {
        let doc: CgptJson = serde_json::from_reader(reader)?;
        let k = doc.order;
        if k == 0 {
            return Err(Error::Parse("CGPT order must be positive".into()));
        }
        Ok(Self {
            cc: from_rows(k, "cc", &doc.cc)?,
            cs: from_rows(k, "cs", &doc.cs)?,
            sc: from_rows(k, "sc", &doc.sc)?,
            ss: from_rows(k, "ss", &doc.ss)?,
        })
    }
}

/// Harmonic `h = h(0) + Σ_n r^n (a_n^c cos nθ + a_n^s sin nθ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicCoefficients {
    pub constant: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl HarmonicCoefficients {
    pub fn new(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        if cos.len() != sin.len() {
            return Err(invalid("cosine and sine coefficient counts differ"));
        }
        if !constant.is_finite() || cos.iter().chain(&sin).any(|v| !v.is_finite()) {
            return Err(invalid("harmonic coefficients must be finite"));
        }
        Ok(Self { constant, cos, sin })
    }

    pub fn order(&self) -> usize {
        self.cos.len()
    }

    pub fn eval(&self, x: Point) -> f64 {
        let r = x[0].hypot(x[1]);
        let t = x[1].atan2(x[0]);
        let mut v = self.constant;
        for n in 1..=self.order() {
            let rn = r.powi(n as i32);
            let a = n as f64 * t;
            v += rn * (self.cos[n - 1] * a.cos() + self.sin[n - 1] * a.sin());
        }
        v
    }
}

/// CGPTs of the constant conductivity `c` on the unit disk.
pub fn constant_cgpt(c: f64, order: usize) -> Result<CgptMatrix> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid(format!("constant conductivity must be positive, got {c}")));
    }
    let mut out = CgptMatrix::zeros(order);
    let ratio = (c - 1.0) / (c + 1.0);
    for m in 1..=order {
        let v = 2.0 * PI * m as f64 * ratio;
        out.cc[(m - 1, m - 1)] = v;
        out.ss[(m - 1, m - 1)] = v;
    }
    Ok(out)
}

/// Relative tolerance of the radial shooting integration.
const RADIAL_RTOL: f64 = 1e-10;
const RADIAL_START: f64 = 1e-6;

/// Exterior reflection coefficient `b_m` for a radial conductivity profile.
///
/// Integrates `(σ r f')' = m² σ f / r` outward in `s = ln r` using the
/// scaled unknowns `f = r^m φ`, `σ r f' = r^m ψ`, which stay O(1) for the
/// regular solution, then matches `r^m + b_m r^{-m}` at `r = 1`.
pub fn radial_reflection<F: Fn(f64) -> f64>(sigma: F, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(invalid("mode must be positive"));
    }
    let mf = m as f64;
    let rhs = |s: f64, y: [f64; 2]| -> [f64; 2] {
        let sg = sigma(s.exp());
        [y[1] / sg - mf * y[0], mf * mf * sg * y[0] - mf * y[1]]
    };
    let s0 = RADIAL_START.ln();
    let sg0 = sigma(RADIAL_START);
    if !(sg0 > 0.0) || !sg0.is_finite() {
        return Err(Error::Integration(format!("non-positive conductivity {sg0} near the origin")));
    }
    let y = dormand_prince(rhs, s0, 0.0, [1.0, mf * sg0], RADIAL_RTOL)?;
    let rho = mf * y[0] / y[1];
    Ok((rho - 1.0) / (rho + 1.0))
}

/// Diagonal CGPTs `M_mm = -2πm b_m` of a radial conductivity.
pub fn radial_cgpt_oracle<F: Fn(f64) -> f64>(sigma: F, order: usize) -> Result<CgptMatrix> {
    let mut out = CgptMatrix::zeros(order);
    for m in 1..=order {
        let v = -2.0 * PI * m as f64 * radial_reflection(&sigma, m)?;
        out.cc[(m - 1, m - 1)] = v;
        out.ss[(m - 1, m - 1)] = v;
    }
    Ok(out)
}

/// Adaptive Dormand–Prince 5(4) integration of a 2-component system.
fn dormand_prince<F>(f: F, t0: f64, t1: f64, y0: [f64; 2], rtol: f64) -> Result<[f64; 2]>
where
    F: Fn(f64, [f64; 2]) -> [f64; 2],
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let atol = rtol * 1e-3;
    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) * 1e-3;
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Integration("step budget exhausted".into()));
        }
        h = h.min(t1 - t);
        let mut k = [[0.0; 2]; 7];
        for s in 0..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                ys[0] += h * A[s][j] * kj[0];
                ys[1] += h * A[s][j] * kj[1];
            }
            k[s] = f(t + C[s] * h, ys);
        }
        let mut y_new = y;
        let mut err = 0.0f64;
        for i in 0..2 {
            let (mut inc, mut e) = (0.0, 0.0);
            for s in 0..7 {
                inc += B[s] * k[s][i];
                e += E[s] * k[s][i];
            }
            y_new[i] += h * inc;
            let scale = atol + rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * e).abs() / scale);
        }
        if !err.is_finite() || !y_new.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration(format!("non-finite state at s = {t}")));
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-14 * (t1 - t0) && t < t1 {
            return Err(Error::Integration(format!("step size underflow at s = {t}")));
        }
    }
    Ok(y)
}

/// Truncated far-field expansion of `(u − h)(x)` for `|x| > 1`.
pub fn far_field_eval(m: &CgptMatrix, h: &HarmonicCoefficients, x: Point) -> Result<f64> {
    let r = x[0].hypot(x[1]);
    if !(r > 1.0) {
        return Err(Error::OutOfDomain { x: x[0], y: x[1] });
    }
    let k = m.order().min(h.order());
    let t = x[1].atan2(x[0]);
    let mut v = 0.0;
    for i in 1..=k {
        let (mut cc, mut ss) = (0.0, 0.0);
        for n in 1..=k {
            cc += m.cc[(i - 1, n - 1)] * h.cos[n - 1] + m.cs[(i - 1, n - 1)] * h.sin[n - 1];
            ss += m.sc[(i - 1, n - 1)] * h.cos[n - 1] + m.ss[(i - 1, n - 1)] * h.sin[n - 1];
        }
        let w = 2.0 * PI * i as f64 * r.powi(i as i32);
        let a = i as f64 * t;
        v -= (a.cos() * cc + a.sin() * ss) / w;
    }
    Ok(v)
}
