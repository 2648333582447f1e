//! Scalar root finding, golden-section search and real polynomial roots.

use crate::error::{Error, Result};

/// Bisection on a bracketing interval. `f(lo)` and `f(hi)` must differ in sign.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Infeasible(format!("root not bracketed in [{lo}, {hi}]")));
    }
    // 200 halvings exhaust f64 resolution on any finite interval
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximisation of `f` on `[a, b]`. Returns `(x, f(x))`.
pub fn golden_max<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Real polynomial in ascending coefficient order.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn degree(&self) -> usize {
        self.0.iter().rposition(|c| *c != 0.0).unwrap_or(0)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect())
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = vec![0.0; self.0.len() + other.0.len() - 1];
        for (i, a) in self.0.iter().enumerate() {
            for (j, b) in other.0.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly(out)
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.0.len().max(other.0.len());
        Poly(
            (0..n)
                .map(|k| self.0.get(k).unwrap_or(&0.0) + other.0.get(k).unwrap_or(&0.0))
                .collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Poly {
        Poly(self.0.iter().map(|c| c * s).collect())
    }

    /// Cauchy bound on the magnitude of every root.
    fn root_bound(&self) -> f64 {
        let n = self.degree();
        let lead = self.0[n];
        1.0 + self.0[..n].iter().map(|c| (c / lead).abs()).fold(0.0, f64::max)
    }

    /// All distinct real roots in ascending order, located by bracketing
    /// between the real roots of the derivative.
    pub fn real_roots(&self) -> Vec<f64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![-self.0[0] / self.0[1]];
        }
        let bound = self.root_bound();
        let mut knots = vec![-bound];
        knots.extend(
            self.derivative().real_roots().into_iter().filter(|x| x.abs() < bound),
        );
        knots.push(bound);
        let mut roots: Vec<f64> = Vec::new();
        for w in knots.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let (f_lo, f_hi) = (self.eval(lo), self.eval(hi));
            let root = if f_lo == 0.0 {
                Some(lo)
            } else if f_hi == 0.0 {
                Some(hi)
            } else if f_lo.signum() != f_hi.signum() {
                bisect(|x| Ok(self.eval(x)), lo, hi, 0.0).ok()
            } else {
                None
            };
            if let Some(r) = root {
                if roots.last().is_none_or(|last| (r - last).abs() > 1e-12 * r.abs().max(1.0)) {
                    roots.push(r);
                }
            }
        }
        roots
    }
}
