//! Truncated multivariate Taylor jets with complex coefficients.
//!
//! A [`Jet`] stores the Taylor coefficients `c_e = ∂^e f(x0) / e!` of a
//! function around a base point, for every multi-index `e` with `|e| <= K`.
//! Monomials are graded by degree, so the coefficient layout of order `K - 1`
//! is a prefix of the layout of order `K`; lowering the order is a truncation.

use num_complex::Complex64;
use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};
use std::sync::{Mutex, OnceLock};

pub type C64 = Complex64;

/// Maximum number of stored coefficients (dimension 5 at order 3).
pub const MAX_COEFFS: usize = 56;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Monomial tables for a fixed (dimension, order) pair.
#[derive(Debug)]
pub struct JetSpace {
    dim: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degree: Vec<usize>,
    /// Inverse factorial weight 1/e!, so that ∂^e f = c_e * e!.
    factorial: Vec<f64>,
    mul: Vec<(u16, u16, u16)>,
    /// Per variable: (source, target, factor) for ∂/∂x_v.
    deriv: Vec<Vec<(u16, u16, f64)>>,
    index: HashMap<Vec<u8>, usize>,
}

fn registry() -> &'static Mutex<HashMap<(usize, usize), &'static JetSpace>> {
    static R: OnceLock<Mutex<HashMap<(usize, usize), &'static JetSpace>>> = OnceLock::new();
    R.get_or_init(|| Mutex::new(HashMap::new()))
}

fn monomials(dim: usize, degree: usize, prefix: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if prefix.len() == dim - 1 {
        let used: usize = prefix.iter().map(|&e| e as usize).sum();
        let mut e = prefix.clone();
        e.push((degree - used) as u8);
        out.push(e);
        return;
    }
    let used: usize = prefix.iter().map(|&e| e as usize).sum();
    for k in (0..=degree - used).rev() {
        prefix.push(k as u8);
        monomials(dim, degree, prefix, out);
        prefix.pop();
    }
}

/// Number of monomials of degree <= order in `dim` variables.
pub fn coefficient_count(dim: usize, order: usize) -> usize {
    // C(dim + order, order)
    let mut c = 1usize;
    for i in 1..=order {
        c = c * (dim + i) / i;
    }
    c
}

impl JetSpace {
    /// Shared space for the given dimension and order.
    ///
    /// Panics if the coefficient count exceeds [`MAX_COEFFS`].
    pub fn get(dim: usize, order: usize) -> &'static JetSpace {
        assert!(dim >= 1, "jet dimension must be positive");
        assert!(
            coefficient_count(dim, order) <= MAX_COEFFS,
            "jet space (dim {dim}, order {order}) exceeds capacity"
        );
        let mut reg = registry().lock().expect("jet registry poisoned");
        if let Some(s) = reg.get(&(dim, order)) {
            return s;
        }
        let space: &'static JetSpace = Box::leak(Box::new(Self::build(dim, order)));
        reg.insert((dim, order), space);
        space
    }

    fn build(dim: usize, order: usize) -> JetSpace {
        let mut exps = Vec::new();
        for d in 0..=order {
            monomials(dim, d, &mut Vec::new(), &mut exps);
        }
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let degree: Vec<usize> = exps.iter().map(|e| e.iter().map(|&k| k as usize).sum()).collect();
        let factorial = exps
            .iter()
            .map(|e| e.iter().map(|&k| (1..=k as u64).product::<u64>() as f64).product())
            .collect();
        let mut mul = Vec::new();
        for (i, a) in exps.iter().enumerate() {
            for (j, b) in exps.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    continue;
                }
                let s: Vec<u8> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                mul.push((i as u16, j as u16, index[&s] as u16));
            }
        }
        let mut deriv = vec![Vec::new(); dim];
        for (v, table) in deriv.iter_mut().enumerate() {
            for (i, e) in exps.iter().enumerate() {
                if e[v] == 0 {
                    continue;
                }
                let mut t = e.clone();
                t[v] -= 1;
                table.push((i as u16, index[&t] as u16, e[v] as f64));
            }
        }
        JetSpace { dim, order, exps, degree, factorial, mul, deriv, index }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn order(&self) -> usize {
        self.order
    }
    pub fn len(&self) -> usize {
        self.exps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.exps.is_empty()
    }
    /// Exponent vectors in storage order.
    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exps
    }
    /// Storage index of a multi-index, if representable.
    pub fn index_of(&self, e: &[u8]) -> Option<usize> {
        self.index.get(e).copied()
    }
    pub fn degree_of(&self, i: usize) -> usize {
        self.degree[i]
    }
    /// e! for the monomial stored at `i`.
    pub fn factorial_of(&self, i: usize) -> f64 {
        self.factorial[i]
    }
    fn lower(&self) -> &'static JetSpace {
        JetSpace::get(self.dim, self.order.saturating_sub(1))
    }
}

/// A truncated Taylor expansion.
#[derive(Clone, Copy)]
pub struct Jet {
    space: &'static JetSpace,
    c: [C64; MAX_COEFFS],
}

impl std::fmt::Debug for Jet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Jet")
            .field("dim", &self.space.dim)
            .field("order", &self.space.order)
            .field("coeffs", &&self.c[..self.space.len()])
            .finish()
    }
}

impl Jet {
    pub fn zero(space: &'static JetSpace) -> Jet {
        Jet { space, c: [ZERO; MAX_COEFFS] }
    }

    pub fn constant(space: &'static JetSpace, v: impl Into<C64>) -> Jet {
        let mut j = Jet::zero(space);
        j.c[0] = v.into();
        j
    }

    /// The coordinate function x_i expanded at x_i = x0.
    pub fn variable(space: &'static JetSpace, i: usize, x0: f64) -> Jet {
        let mut j = Jet::constant(space, x0);
        if space.order >= 1 {
            let mut e = vec![0u8; space.dim];
            e[i] = 1;
            j.c[space.index[&e]] = C64::new(1.0, 0.0);
        }
        j
    }

    /// Coordinate jets for every variable of `x`.
    pub fn variables(x: &[f64], order: usize) -> Vec<Jet> {
        let space = JetSpace::get(x.len(), order);
        x.iter().enumerate().map(|(i, &v)| Jet::variable(space, i, v)).collect()
    }

    /// Builds a jet from raw Taylor coefficients in storage order.
    pub fn from_coeffs(space: &'static JetSpace, coeffs: &[C64]) -> Jet {
        assert_eq!(coeffs.len(), space.len());
        let mut j = Jet::zero(space);
        j.c[..coeffs.len()].copy_from_slice(coeffs);
        j
    }

    pub fn space(&self) -> &'static JetSpace {
        self.space
    }
    pub fn order(&self) -> usize {
        self.space.order
    }
    pub fn dim(&self) -> usize {
        self.space.dim
    }
    pub fn coeffs(&self) -> &[C64] {
        &self.c[..self.space.len()]
    }
    pub fn value(&self) -> C64 {
        self.c[0]
    }
    pub fn re_value(&self) -> f64 {
        self.c[0].re
    }

    /// ∂^e f at the base point.
    pub fn partial(&self, e: &[u8]) -> C64 {
        match self.space.index.get(e) {
            Some(&i) => self.c[i] * self.space.factorial[i],
            None => ZERO,
        }
    }

    /// First partial derivative values.
    pub fn gradient(&self) -> Vec<C64> {
        (0..self.space.dim)
            .map(|v| {
                let mut e = vec![0u8; self.space.dim];
                e[v] = 1;
                self.partial(&e)
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs().iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Truncate to a lower order (no-op if `order` is not lower).
    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.space.order {
            return *self;
        }
        let space = JetSpace::get(self.space.dim, order);
        let mut j = Jet::zero(space);
        j.c[..space.len()].copy_from_slice(&self.c[..space.len()]);
        j
    }

    /// ∂/∂x_v; the result has order one lower.
    pub fn derivative(&self, v: usize) -> Jet {
        let space = self.space.lower();
        let mut r = Jet::zero(space);
        if self.space.order == 0 {
            return r;
        }
        for &(s, t, k) in &self.space.deriv[v] {
            r.c[t as usize] += self.c[s as usize] * k;
        }
        r
    }

    pub fn conj(&self) -> Jet {
        let mut r = *self;
        for c in r.c[..self.space.len()].iter_mut() {
            *c = c.conj();
        }
        r
    }

    pub fn re(&self) -> Jet {
        let mut r = *self;
        for c in r.c[..self.space.len()].iter_mut() {
            *c = C64::new(c.re, 0.0);
        }
        r
    }

    pub fn im(&self) -> Jet {
        let mut r = *self;
        for c in r.c[..self.space.len()].iter_mut() {
            *c = C64::new(c.im, 0.0);
        }
        r
    }

    /// Largest coefficient modulus; a cheap size measure.
    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    fn common(a: &Jet, b: &Jet) -> &'static JetSpace {
        debug_assert_eq!(a.space.dim, b.space.dim, "jet dimension mismatch");
        if a.space.order <= b.space.order {
            a.space
        } else {
            b.space
        }
    }

    /// Applies the univariate function with derivatives `d[k] = f^(k)(a0)`.
    pub fn compose(&self, d: &[C64]) -> Jet {
        let k_max = self.space.order;
        let mut delta = *self;
        delta.c[0] = ZERO;
        let mut r = Jet::constant(self.space, d[0]);
        let mut power = Jet::constant(self.space, 1.0);
        let mut fact = 1.0;
        for (k, dk) in d.iter().enumerate().take(k_max + 1).skip(1) {
            power = power * delta;
            fact *= k as f64;
            let w = *dk / fact;
            for i in 0..self.space.len() {
                r.c[i] += power.c[i] * w;
            }
        }
        r
    }

    fn orders(&self) -> usize {
        self.space.order + 1
    }

    pub fn exp(&self) -> Jet {
        let e = self.c[0].exp();
        self.compose(&vec![e; self.orders()])
    }

    pub fn ln(&self) -> Jet {
        let a = self.c[0];
        let mut d = vec![a.ln()];
        let mut p = C64::new(1.0, 0.0);
        for k in 1..self.orders() {
            // (k-1)! (-1)^(k-1) / a^k
            p = p / a * if k > 1 { -((k - 1) as f64) } else { 1.0 };
            d.push(p);
        }
        self.compose(&d)
    }

    pub fn recip(&self) -> Jet {
        let a = self.c[0];
        let mut d = Vec::with_capacity(self.orders());
        let mut p = C64::new(1.0, 0.0) / a;
        for k in 0..self.orders() {
            d.push(p);
            p = p * (-((k + 1) as f64)) / a;
        }
        self.compose(&d)
    }

    /// Real power a^s.
    pub fn powf(&self, s: f64) -> Jet {
        let a = self.c[0];
        let mut d = Vec::with_capacity(self.orders());
        let mut coef = 1.0;
        for k in 0..self.orders() {
            d.push(a.powf(s - k as f64) * coef);
            coef *= s - k as f64;
        }
        self.compose(&d)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn powi(&self, n: u32) -> Jet {
        let mut r = Jet::constant(self.space, 1.0);
        for _ in 0..n {
            r = r * *self;
        }
        r
    }

    pub fn sin(&self) -> Jet {
        let a = self.c[0];
        let (s, c) = (a.sin(), a.cos());
        let d: Vec<C64> = (0..self.orders()).map(|k| [s, c, -s, -c][k % 4]).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Jet {
        let a = self.c[0];
        let (s, c) = (a.sin(), a.cos());
        let d: Vec<C64> = (0..self.orders()).map(|k| [c, -s, -c, s][k % 4]).collect();
        self.compose(&d)
    }

    pub fn tan(&self) -> Jet {
        self.sin() / self.cos()
    }

    /// Arctangent of a real-valued jet.
    pub fn atan(&self) -> Jet {
        // atan(a0 + δ) = atan(a0) + ∫ 1/(1+x²); derive via composition with
        // the derivative series of 1/(1+x²).
        let a0 = self.c[0].re;
        let x = Jet::variable(JetSpace::get(1, self.space.order.max(1)), 0, a0);
        let inv = (x * x + 1.0).recip();
        // derivatives of atan: d[0] = atan(a0), d[k] = (k-1)! * coeff_{k-1}(inv)
        let mut d = vec![C64::new(a0.atan(), 0.0)];
        for k in 1..self.orders() {
            d.push(inv.partial(&[(k - 1) as u8]));
        }
        self.compose(&d)
    }

    /// atan2(y, x) for real jets, continuous near the base point.
    pub fn atan2(y: &Jet, x: &Jet) -> Jet {
        let base = y.c[0].re.atan2(x.c[0].re);
        let (cb, sb) = (base.cos(), base.sin());
        // rotate so the base angle becomes zero
        let xr = *x * cb + *y * sb;
        let yr = *y * cb - *x * sb;
        (yr / xr).atan() + base
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, b: Jet) -> Jet {
        let space = Jet::common(&self, &b);
        let mut r = Jet::zero(space);
        for i in 0..space.len() {
            r.c[i] = self.c[i] + b.c[i];
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, b: Jet) -> Jet {
        let space = Jet::common(&self, &b);
        let mut r = Jet::zero(space);
        for i in 0..space.len() {
            r.c[i] = self.c[i] - b.c[i];
        }
        r
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, b: Jet) -> Jet {
        let space = Jet::common(&self, &b);
        let mut r = Jet::zero(space);
        if self.is_zero() || b.is_zero() {
            return r;
        }
        if space.order == self.space.order && space.order == b.space.order {
            for &(i, j, k) in &space.mul {
                r.c[k as usize] += self.c[i as usize] * b.c[j as usize];
            }
        } else {
            let (x, y) = (self.truncate(space.order), b.truncate(space.order));
            for &(i, j, k) in &space.mul {
                r.c[k as usize] += x.c[i as usize] * y.c[j as usize];
            }
        }
        r
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, b: Jet) -> Jet {
        self * b.recip()
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, b: Jet) {
        *self = *self + b;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, b: Jet) {
        *self = *self - b;
    }
}

impl Mul<C64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: C64) -> Jet {
        for c in self.c[..self.space.len()].iter_mut() {
            *c *= s;
        }
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, s: f64) -> Jet {
        for c in self.c[..self.space.len()].iter_mut() {
            *c *= s;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, s: f64) -> Jet {
        self * (1.0 / s)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, s: f64) -> Jet {
        self.c[0] += s;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, s: f64) -> Jet {
        self.c[0] -= s;
        self
    }
}

impl Add<C64> for Jet {
    type Output = Jet;
    fn add(mut self, s: C64) -> Jet {
        self.c[0] += s;
        self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Mul<Jet> for C64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, j: Jet) -> Jet {
        j + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, j: Jet) -> Jet {
        -j + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: f64, tol: f64) -> bool {
        (a - b).norm() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn counts_and_prefix_layout() {
        assert_eq!(coefficient_count(3, 3), 20);
        assert_eq!(coefficient_count(5, 3), 56);
        let a = JetSpace::get(3, 2);
        let b = JetSpace::get(3, 3);
        assert_eq!(&b.exponents()[..a.len()], a.exponents());
    }

    #[test]
    fn product_rule_and_partials() {
        // f = x^2 y + sin(z) at (1, 2, 0.3)
        let v = Jet::variables(&[1.0, 2.0, 0.3], 3);
        let f = v[0] * v[0] * v[1] + v[2].sin();
        assert!(close(f.value(), 2.0 + 0.3f64.sin(), 1e-15));
        assert!(close(f.partial(&[1, 0, 0]), 4.0, 1e-14));
        assert!(close(f.partial(&[2, 1, 0]), 2.0, 1e-14));
        assert!(close(f.partial(&[0, 0, 3]), -(0.3f64.cos()), 1e-14));
        assert!(close(f.partial(&[1, 1, 0]), 2.0, 1e-14));
    }

    #[test]
    fn derivative_lowers_order() {
        let v = Jet::variables(&[0.5, -1.0], 3);
        let f = (v[0] * v[1]).exp();
        let fx = f.derivative(0);
        assert_eq!(fx.order(), 2);
        // ∂x e^{xy} = y e^{xy}; ∂y of that = (1 + xy) e^{xy}
        let e = (-0.5f64).exp();
        assert!(close(fx.value(), -e, 1e-14));
        assert!(close(fx.partial(&[0, 1]), 0.5 * e, 1e-14));
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let x = Jet::variables(&[0.7], 3)[0];
        let checks: [(Jet, [f64; 4]); 5] = [
            (x.ln(), [0.7f64.ln(), 1.0 / 0.7, -1.0 / 0.49, 2.0 / 0.343]),
            (x.sqrt(), [0.7f64.sqrt(), 0.5 * 0.7f64.powf(-0.5), -0.25 * 0.7f64.powf(-1.5), 0.375 * 0.7f64.powf(-2.5)]),
            (x.recip(), [1.0 / 0.7, -1.0 / 0.49, 2.0 / 0.343, -6.0 / 0.2401]),
            (x.atan(), [0.7f64.atan(), 1.0 / 1.49, -1.4 / (1.49 * 1.49), (6.0 * 0.49 - 2.0) / 1.49f64.powi(3)]),
            (x.cos(), [0.7f64.cos(), -(0.7f64.sin()), -(0.7f64.cos()), 0.7f64.sin()]),
        ];
        for (j, want) in checks.iter() {
            for (k, w) in want.iter().enumerate() {
                assert!(close(j.partial(&[k as u8]), *w, 1e-13), "k={k} got {:?} want {w}", j.partial(&[k as u8]));
            }
        }
    }

    #[test]
    fn atan2_is_continuous_across_branch() {
        let v = Jet::variables(&[-1.0, 1e-3], 2);
        let a = Jet::atan2(&v[1], &v[0]);
        assert!((a.value().re - 1e-3f64.atan2(-1.0)).abs() < 1e-15);
        // ∂/∂y atan2(y, x) = x / (x² + y²)
        assert!(close(a.partial(&[0, 1]), -1.0 / (1.0 + 1e-6), 1e-13));
    }

    #[test]
    fn mixed_order_arithmetic_truncates() {
        let v = Jet::variables(&[1.0, 1.0], 3);
        let low = v[0].truncate(1);
        let p = low * v[1];
        assert_eq!(p.order(), 1);
    }
}
