//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] carries the Taylor coefficients of a scalar function of `nvars`
//! seed variables up to a fixed total order (at most [`MAX_ORDER`]). It is the
//! symmetric collapse of a tower of nested dual numbers: every mixed partial
//! is stored once, indexed by its multi-index, and arithmetic is exact to
//! rounding.
//!
//! Coefficients are stored as `c_α = ∂^α f / α!`, ordered by total degree, so
//! truncating to a lower order is a prefix copy.

use std::collections::HashMap;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Highest total derivative order a jet can carry.
pub const MAX_ORDER: usize = 4;
/// Highest number of seed variables.
pub const MAX_VARS: usize = 12;

/// Monomial bookkeeping shared by all jets of one `(nvars, order)` shape.
pub struct JetLayout {
    nvars: usize,
    order: usize,
    monomials: Vec<Vec<u8>>,
    degree: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    // (i, j, k): c_k += a_i * b_j
    mul_table: Vec<(u32, u32, u32)>,
    // α! for each monomial
    factorial: Vec<f64>,
}

impl fmt::Debug for JetLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JetLayout")
            .field("nvars", &self.nvars)
            .field("order", &self.order)
            .field("len", &self.monomials.len())
            .finish()
    }
}

static LAYOUTS: [[OnceLock<JetLayout>; MAX_ORDER + 1]; MAX_VARS + 1] =
    [const { [const { OnceLock::new() }; MAX_ORDER + 1] }; MAX_VARS + 1];

fn monomials_of_degree(nvars: usize, degree: usize) -> Vec<Vec<u8>> {
    if nvars == 0 {
        return if degree == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in monomials_of_degree(nvars - 1, degree - first) {
            let mut m = Vec::with_capacity(nvars);
            m.push(first as u8);
            m.append(&mut rest);
            out.push(m);
        }
    }
    out
}

impl JetLayout {
    fn build(nvars: usize, order: usize) -> Self {
        let mut monomials = Vec::new();
        let mut degree = Vec::new();
        for d in 0..=order {
            for m in monomials_of_degree(nvars, d) {
                monomials.push(m);
                degree.push(d);
            }
        }
        let index: HashMap<Vec<u8>, usize> = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        let mut mul_table = Vec::new();
        let mut sum = vec![0u8; nvars];
        for (i, a) in monomials.iter().enumerate() {
            for (j, b) in monomials.iter().enumerate() {
                if degree[i] + degree[j] > order {
                    // graded order: later monomials only have higher degree
                    break;
                }
                for v in 0..nvars {
                    sum[v] = a[v] + b[v];
                }
                let k = index[&sum];
                mul_table.push((i as u32, j as u32, k as u32));
            }
        }
        let factorial = monomials
            .iter()
            .map(|m| m.iter().map(|&e| factorial(e as usize)).product())
            .collect();
        Self {
            nvars,
            order,
            monomials,
            degree,
            index,
            mul_table,
            factorial,
        }
    }

    /// Shared layout for `nvars` variables truncated at total `order`.
    pub fn get(nvars: usize, order: usize) -> &'static JetLayout {
        assert!(nvars <= MAX_VARS, "jet supports at most {MAX_VARS} variables");
        assert!(order <= MAX_ORDER, "jet supports at most order {MAX_ORDER}");
        LAYOUTS[nvars][order].get_or_init(|| JetLayout::build(nvars, order))
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    /// Multi-index of the `i`-th stored coefficient.
    pub fn monomial(&self, i: usize) -> &[u8] {
        &self.monomials[i]
    }

    /// Position of a multi-index, if it is within the truncation order.
    /// Total degree of monomial `i`.
    pub fn degree(&self, i: usize) -> usize {
        self.degree[i]
    }

    pub fn position(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// A truncated Taylor expansion in several seed variables.
#[derive(Clone)]
pub struct Jet {
    layout: &'static JetLayout,
    coeffs: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Jet")
            .field("nvars", &self.layout.nvars)
            .field("order", &self.layout.order)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl Jet {
    pub fn constant(layout: &'static JetLayout, value: f64) -> Self {
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[0] = value;
        Self { layout, coeffs }
    }

    pub fn from_coeffs(layout: &'static JetLayout, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), layout.len());
        Self { layout, coeffs }
    }

    /// The seed variable `var` expanded around `value`.
    pub fn variable(layout: &'static JetLayout, var: usize, value: f64) -> Self {
        let mut jet = Self::constant(layout, value);
        if layout.order >= 1 {
            let mut alpha = vec![0u8; layout.nvars];
            alpha[var] = 1;
            jet.coeffs[layout.index[&alpha]] = 1.0;
        }
        jet
    }

    /// `value + Σ_a direction[a]·ε_a`.
    pub fn affine(layout: &'static JetLayout, value: f64, direction: &[f64]) -> Self {
        let mut jet = Self::constant(layout, value);
        if layout.order >= 1 {
            for (var, &d) in direction.iter().enumerate() {
                jet.coeffs[1 + var] = d;
            }
        }
        jet
    }

    pub fn layout(&self) -> &'static JetLayout {
        self.layout
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Taylor coefficient `∂^α f / α!`.
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        self.layout
            .position(alpha)
            .map_or(0.0, |i| self.coeffs[i])
    }

    /// Mixed partial derivative along the listed seed variables (a multiset).
    pub fn partial(&self, vars: &[usize]) -> f64 {
        let mut alpha = vec![0u8; self.layout.nvars];
        for &v in vars {
            alpha[v] += 1;
        }
        match self.layout.position(&alpha) {
            Some(i) => self.coeffs[i] * self.layout.factorial[i],
            None => 0.0,
        }
    }

    /// First partial along `var` evaluated at the expansion point.
    pub fn d1(&self, var: usize) -> f64 {
        if self.layout.order == 0 {
            return 0.0;
        }
        self.coeffs[1 + var]
    }

    /// Exact derivative with respect to `var`, one order lower.
    pub fn derivative(&self, var: usize) -> Jet {
        assert!(self.layout.order >= 1, "cannot differentiate an order-0 jet");
        let lower = JetLayout::get(self.layout.nvars, self.layout.order - 1);
        let mut coeffs = vec![0.0; lower.len()];
        let mut alpha = vec![0u8; self.layout.nvars];
        for (k, out) in coeffs.iter_mut().enumerate() {
            alpha.copy_from_slice(&lower.monomials[k]);
            alpha[var] += 1;
            let src = self.layout.index[&alpha];
            *out = self.coeffs[src] * alpha[var] as f64;
        }
        Jet {
            layout: lower,
            coeffs,
        }
    }

    /// Drop all terms above `order`.
    pub fn truncate(&self, order: usize) -> Jet {
        assert!(order <= self.layout.order);
        let lower = JetLayout::get(self.layout.nvars, order);
        Jet {
            layout: lower,
            coeffs: self.coeffs[..lower.len()].to_vec(),
        }
    }

    /// `f(self)` given `derivs[k] = f^{(k)}(self.value())` for `k = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.layout.order;
        debug_assert!(derivs.len() > order);
        let mut h = self.clone();
        h.coeffs[0] = 0.0;
        let mut acc = Jet::constant(self.layout, derivs[order] / factorial(order));
        for k in (0..order).rev() {
            acc = &acc * &h;
            acc.coeffs[0] += derivs[k] / factorial(k);
        }
        acc
    }

    fn same_layout(&self, other: &Jet) {
        debug_assert!(
            std::ptr::eq(self.layout, other.layout),
            "jets with different layouts"
        );
    }

    pub fn scale(mut self, s: f64) -> Jet {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
        self
    }

    pub fn powf(&self, p: f64) -> Jet {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.layout.order + 1);
        let mut falling = 1.0;
        for k in 0..=self.layout.order {
            derivs.push(falling * a.powf(p - k as f64));
            falling *= p - k as f64;
        }
        self.compose(&derivs)
    }
}

impl<'a> Add<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn add(self, rhs: &'a Jet) -> Jet {
        self.same_layout(rhs);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Jet {
            layout: self.layout,
            coeffs,
        }
    }
}

impl<'a> Sub<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn sub(self, rhs: &'a Jet) -> Jet {
        self.same_layout(rhs);
        let coeffs = self
            .coeffs
            .iter()
            .zip(&rhs.coeffs)
            .map(|(a, b)| a - b)
            .collect();
        Jet {
            layout: self.layout,
            coeffs,
        }
    }
}

impl<'a> Mul<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn mul(self, rhs: &'a Jet) -> Jet {
        self.same_layout(rhs);
        let mut coeffs = vec![0.0; self.coeffs.len()];
        let a = &self.coeffs;
        let b = &rhs.coeffs;
        for &(i, j, k) in &self.layout.mul_table {
            coeffs[k as usize] += a[i as usize] * b[j as usize];
        }
        Jet {
            layout: self.layout,
            coeffs,
        }
    }
}

impl<'a> Div<&'a Jet> for &'a Jet {
    type Output = Jet;
    fn div(self, rhs: &'a Jet) -> Jet {
        self * &Real::recip(rhs)
    }
}

macro_rules! owned_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: Jet) -> Jet {
                (&self).$method(&rhs)
            }
        }
        impl<'a> $trait<&'a Jet> for Jet {
            type Output = Jet;
            fn $method(self, rhs: &'a Jet) -> Jet {
                (&self).$method(rhs)
            }
        }
    };
}
owned_binop!(Add, add);
owned_binop!(Sub, sub);
owned_binop!(Mul, mul);
owned_binop!(Div, div);

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.coeffs[0] += rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(rhs)
    }
}

/// Scalar arithmetic shared by `f64` and [`Jet`], so metric formulas are
/// written once and evaluated either plainly or with derivatives attached.
pub trait Real:
    Clone
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    /// A constant with the same shape as `self`.
    fn lift(&self, value: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(&self) -> Self;
    fn recip(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
}

impl Real for f64 {
    fn lift(&self, value: f64) -> Self {
        value
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn recip(&self) -> Self {
        1.0 / *self
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
}

impl Real for Jet {
    fn lift(&self, value: f64) -> Self {
        Jet::constant(self.layout, value)
    }
    fn value(&self) -> f64 {
        self.coeffs[0]
    }
    fn sqrt(&self) -> Self {
        self.powf(0.5)
    }
    fn recip(&self) -> Self {
        let a = self.value();
        let mut derivs = Vec::with_capacity(self.layout.order + 1);
        let mut d = 1.0 / a;
        for k in 0..=self.layout.order {
            derivs.push(d);
            d *= -((k + 1) as f64) / a;
        }
        self.compose(&derivs)
    }
    fn exp(&self) -> Self {
        let e = self.value().exp();
        self.compose(&vec![e; self.layout.order + 1])
    }
    fn ln(&self) -> Self {
        let a = self.value();
        let mut derivs = vec![a.ln()];
        let mut d = 1.0 / a;
        for k in 1..=self.layout.order {
            derivs.push(d);
            d *= -(k as f64) / a;
        }
        self.compose(&derivs)
    }
    fn sin(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [s, c, -s, -c];
        let derivs: Vec<f64> = (0..=self.layout.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }
    fn cos(&self) -> Self {
        let (s, c) = self.value().sin_cos();
        let cycle = [c, -s, -c, s];
        let derivs: Vec<f64> = (0..=self.layout.order).map(|k| cycle[k % 4]).collect();
        self.compose(&derivs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes_are_binomial() {
        // C(n + m, m)
        assert_eq!(JetLayout::get(2, 2).len(), 6);
        assert_eq!(JetLayout::get(4, 4).len(), 70);
        assert_eq!(JetLayout::get(6, 4).len(), 210);
        assert_eq!(JetLayout::get(8, 4).len(), 495);
    }

    #[test]
    fn product_rule_on_polynomial() {
        let l = JetLayout::get(2, 4);
        let x = Jet::variable(l, 0, 1.5);
        let y = Jet::variable(l, 1, -0.5);
        // f = x^3 y
        let f = &(&(&x * &x) * &x) * &y;
        assert!((f.value() - 1.5f64.powi(3) * -0.5).abs() < 1e-15);
        assert!((f.partial(&[0]) - 3.0 * 1.5 * 1.5 * -0.5).abs() < 1e-14);
        assert!((f.partial(&[0, 1]) - 3.0 * 1.5 * 1.5).abs() < 1e-14);
        assert!((f.partial(&[0, 0, 0, 1]) - 6.0).abs() < 1e-14);
        assert_eq!(f.partial(&[1, 1]), 0.0);
    }

    #[test]
    fn elementary_functions_match_closed_forms() {
        let l = JetLayout::get(1, 4);
        let a = 0.7;
        let x = Jet::variable(l, 0, a);
        let s = Real::sqrt(&x);
        // d^4/dx^4 sqrt(x) = -15/16 x^{-7/2}
        assert!((s.partial(&[0, 0, 0, 0]) + 15.0 / 16.0 * a.powf(-3.5)).abs() < 1e-12);
        let r = Real::recip(&x);
        assert!((r.partial(&[0, 0, 0]) + 6.0 / a.powi(4)).abs() < 1e-11);
        let e = Real::exp(&(x.clone() * 2.0));
        assert!((e.partial(&[0, 0, 0, 0]) - 16.0 * (2.0 * a).exp()).abs() < 1e-11);
        let sn = Real::sin(&x);
        assert!((sn.partial(&[0, 0, 0]) + a.cos()).abs() < 1e-14);
        let ln = Real::ln(&x);
        assert!((ln.partial(&[0, 0]) + 1.0 / (a * a)).abs() < 1e-13);
    }

    #[test]
    fn derivative_then_truncate_commute() {
        let l = JetLayout::get(3, 4);
        let x = Jet::variable(l, 0, 0.3);
        let y = Jet::variable(l, 1, 0.2);
        let z = Jet::variable(l, 2, -0.1);
        let f = Real::exp(&(&(&x * &y) + &z));
        let d = f.derivative(1);
        assert_eq!(d.layout().order(), 3);
        // ∂_y f = x e^{xy+z}
        let expect = 0.3 * (0.3f64 * 0.2 - 0.1).exp();
        assert!((d.value() - expect).abs() < 1e-14);
        assert!((d.partial(&[0]) - f.partial(&[0, 1])).abs() < 1e-13);
        assert!((d.truncate(1).partial(&[2]) - f.partial(&[1, 2])).abs() < 1e-13);
    }
}
