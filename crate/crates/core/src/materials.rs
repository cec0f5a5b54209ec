//! Constitutive laws: the Flory–Huggins potential, linear density and
//! viscosity mixing, the gradient-energy coefficient `a(φ)`, the mobility
//! `b(φ)` and the transform `A(φ) = ∫₀^φ √a`.

use crate::error::{AggError, Result};

/// Polynomial in ascending powers.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self(vec![c])
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    #[inline]
    pub fn eval_prime(&self, s: f64) -> f64 {
        self.0
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, c)| acc * s + k as f64 * c)
    }

    pub fn is_constant(&self) -> bool {
        self.0.iter().skip(1).all(|c| *c == 0.0)
    }

    /// Guaranteed `[lo, hi]` enclosure on `[-1, 1]`: a uniform scan widened by
    /// half a scan spacing times the bound `Σ k |c_k|` on `|p'|`.
    pub fn bounds_on_unit_interval(&self) -> (f64, f64) {
        const SCAN: usize = 10_000;
        let lip: f64 = self.0.iter().enumerate().map(|(k, c)| k as f64 * c.abs()).sum();
        let spacing = 2.0 / SCAN as f64;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=SCAN {
            let v = self.eval(-1.0 + k as f64 * spacing);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo - 0.5 * spacing * lip, hi + 0.5 * spacing * lip)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalParams {
    pub rho1: f64,
    pub rho2: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub theta: f64,
    pub theta0: f64,
    pub a: Polynomial,
    pub b: Polynomial,
    pub a_lo: f64,
    pub a_hi: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    /// Distance from ±1 that nonlinear iterates must keep.
    pub sep_guard: f64,
}

pub const DEFAULT_SEP_GUARD: f64 = 1e-9;

#[allow(clippy::too_many_arguments)]
impl PhysicalParams {
    pub fn new(
        rho1: f64,
        rho2: f64,
        nu1: f64,
        nu2: f64,
        theta: f64,
        theta0: f64,
        a: Polynomial,
        b: Polynomial,
        sep_guard: f64,
    ) -> Result<Self> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(AggError::Validation { key: key.into(), reason: format!("must be positive, got {v}") })
            }
        };
        positive("rho1", rho1)?;
        positive("rho2", rho2)?;
        positive("nu1", nu1)?;
        positive("nu2", nu2)?;
        positive("theta", theta)?;
        if !(theta0 > theta && theta0.is_finite()) {
            return Err(AggError::Validation {
                key: "theta0".into(),
                reason: format!("need 0 < theta < theta0, got theta = {theta}, theta0 = {theta0}"),
            });
        }
        if !(sep_guard > 0.0 && sep_guard <= 1e-6) {
            return Err(AggError::Validation { key: "sep_guard".into(), reason: format!("must lie in (0, 1e-6], got {sep_guard}") });
        }
        let (a_lo, a_hi) = a.bounds_on_unit_interval();
        if !(a_lo > 0.0) {
            return Err(AggError::NonPositiveCoefficient { which: "gradient-energy", lower: a_lo });
        }
        let (b_lo, b_hi) = b.bounds_on_unit_interval();
        if !(b_lo > 0.0) {
            return Err(AggError::NonPositiveCoefficient { which: "mobility", lower: b_lo });
        }
        Ok(Self { rho1, rho2, nu1, nu2, theta, theta0, a, b, a_lo, a_hi, b_lo, b_hi, sep_guard })
    }

    /// Constant `a`, `b` with the default guard.
    pub fn simple(rho1: f64, rho2: f64, nu1: f64, nu2: f64, theta: f64, theta0: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(rho1, rho2, nu1, nu2, theta, theta0, Polynomial::constant(a), Polynomial::constant(b), DEFAULT_SEP_GUARD)
    }

    pub fn rho_min(&self) -> f64 {
        self.rho1.min(self.rho2)
    }
    pub fn rho_max(&self) -> f64 {
        self.rho1.max(self.rho2)
    }
    pub fn nu_min(&self) -> f64 {
        self.nu1.min(self.nu2)
    }
    pub fn nu_max(&self) -> f64 {
        self.nu1.max(self.nu2)
    }

    /// Largest admissible `|φ|` inside nonlinear solves.
    pub fn phi_limit(&self) -> f64 {
        1.0 - self.sep_guard
    }

    /// Flory–Huggins potential; defined at ±1 by continuity.
    pub fn psi(&self, s: f64) -> f64 {
        let xlx = |x: f64| if x <= 0.0 { 0.0 } else { x * x.ln() };
        0.5 * self.theta * (xlx(1.0 + s) + xlx(1.0 - s)) - 0.5 * self.theta0 * s * s
    }

    pub fn psi_prime(&self, s: f64) -> Result<f64> {
        check_open(s)?;
        Ok(self.psi0_prime(s) - self.theta0 * s)
    }

    pub fn psi_second(&self, s: f64) -> Result<f64> {
        check_open(s)?;
        Ok(self.psi0_second(s) - self.theta0)
    }

    /// Derivative of the convex (logarithmic) part, `Θ artanh s`.
    #[inline]
    pub fn psi0_prime(&self, s: f64) -> f64 {
        0.5 * self.theta * (s.ln_1p() - (-s).ln_1p())
    }

    #[inline]
    pub fn psi0_second(&self, s: f64) -> f64 {
        self.theta / (1.0 - s * s)
    }

    #[inline]
    pub fn rho_of(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        self.rho1 * 0.5 * (1.0 + s) + self.rho2 * 0.5 * (1.0 - s)
    }

    #[inline]
    pub fn nu_of(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        self.nu1 * 0.5 * (1.0 + s) + self.nu2 * 0.5 * (1.0 - s)
    }

    /// `(ρ₁ − ρ₂)/2`, the constant slope of `ρ(φ)`.
    #[inline]
    pub fn drho(&self) -> f64 {
        0.5 * (self.rho1 - self.rho2)
    }

    #[inline]
    pub fn a_of(&self, s: f64) -> f64 {
        self.a.eval(s)
    }

    #[inline]
    pub fn a_prime(&self, s: f64) -> f64 {
        self.a.eval_prime(s)
    }

    #[inline]
    pub fn b_of(&self, s: f64) -> f64 {
        self.b.eval(s)
    }

    /// `A(s) = ∫₀ˢ √a(r) dr` by adaptive Gauss–Kronrod quadrature.
    pub fn big_a_of(&self, s: f64) -> f64 {
        let s = clamp_unit(s);
        if self.a.is_constant() {
            return self.a.0.first().copied().unwrap_or(0.0).sqrt() * s;
        }
        integrate(&|r| self.a.eval(r).max(0.0).sqrt(), 0.0, s, 1e-12)
    }
}

fn check_open(s: f64) -> Result<()> {
    if s.abs() < 1.0 {
        Ok(())
    } else {
        Err(AggError::DomainError { value: s })
    }
}

fn clamp_unit(s: f64) -> f64 {
    if s.abs() > 1.0 {
        log::warn!("phase value {s} outside [-1, 1] clamped in constitutive law");
        s.clamp(-1.0, 1.0)
    } else {
        s
    }
}

// Gauss–Kronrod 7/15 abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h.abs())
}

/// Adaptive Gauss–Kronrod integration to absolute tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (val, err) = gk15(f, a, b);
        if err <= tol || depth >= 40 {
            return val;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, tol, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> PhysicalParams {
        PhysicalParams::simple(3.0, 1.0, 0.2, 0.1, 1.0, 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn potential_at_origin() {
        let p = params();
        assert_eq!(p.psi(0.0), 0.0);
        assert_eq!(p.psi_prime(0.0).unwrap(), 0.0);
        assert_eq!(p.psi_second(0.0).unwrap(), p.theta - p.theta0);
        assert!(p.psi_second(0.0).unwrap() < 0.0);
    }

    #[test]
    fn potential_at_pure_phases() {
        let p = params();
        let expect = p.theta * 2f64.ln() - 0.5 * p.theta0;
        assert!((p.psi(1.0) - expect).abs() < 1e-15);
        assert!((p.psi(-1.0) - expect).abs() < 1e-15);
        assert!(matches!(p.psi_prime(1.0), Err(AggError::DomainError { .. })));
        assert!(matches!(p.psi_second(-1.0), Err(AggError::DomainError { .. })));
    }

    #[test]
    fn derivative_matches_centered_difference() {
        let p = params();
        let h = 1e-6;
        let fd = (p.psi(0.5 + h) - p.psi(0.5 - h)) / (2.0 * h);
        assert!((fd - p.psi_prime(0.5).unwrap()).abs() < 1e-8);
        let fd2 = (p.psi_prime(0.5 + h).unwrap() - p.psi_prime(0.5 - h).unwrap()) / (2.0 * h);
        assert!((fd2 - p.psi_second(0.5).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn convex_part_is_uniformly_convex() {
        let p = params();
        for k in 0..2000 {
            let s = -0.9999 + k as f64 * (2.0 * 0.9999 / 1999.0);
            assert!(p.psi_second(s).unwrap() + p.theta0 >= p.theta);
        }
    }

    #[test]
    fn symmetry_of_potential() {
        let p = params();
        for s in [0.1, 0.37, 0.8, 0.999] {
            assert_eq!(p.psi(s), p.psi(-s));
            assert_eq!(p.psi_prime(s).unwrap(), -p.psi_prime(-s).unwrap());
        }
    }

    #[test]
    fn linear_mixing_laws() {
        let p = params();
        assert_eq!(p.rho_of(1.0), p.rho1);
        assert_eq!(p.rho_of(-1.0), p.rho2);
        assert_eq!(p.rho_of(0.0), 0.5 * (p.rho1 + p.rho2));
        assert_eq!(p.nu_of(1.0), p.nu1);
        let h = 1e-3;
        assert!(((p.rho_of(0.3 + h) - p.rho_of(0.3 - h)) / (2.0 * h) - p.drho()).abs() < 1e-12);
        let matched = PhysicalParams::simple(2.0, 2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0).unwrap();
        assert_eq!(matched.drho(), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            PhysicalParams::simple(1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 1.0),
            Err(AggError::Validation { .. })
        ));
        let r = PhysicalParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, Polynomial(vec![0.1, 0.0, -0.2]), Polynomial::constant(1.0), 1e-9);
        assert!(matches!(r, Err(AggError::NonPositiveCoefficient { .. })));
    }

    #[test]
    fn constant_gradient_coefficient_transform() {
        let p = params();
        for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert!((p.big_a_of(s) - s).abs() < 1e-15);
        }
        assert_eq!(p.a_prime(0.4), 0.0);
    }

    /// Composite 5-point Gauss–Legendre with many panels.
    fn reference_integral(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let x = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
        let w = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let c = a + (k as f64 + 0.5) * h;
                x.iter().zip(&w).map(|(xi, wi)| wi * f(c + 0.5 * h * xi)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn variable_gradient_coefficient_transform() {
        let p = PhysicalParams::new(1.0, 1.0, 1.0, 1.0, 1.0, 2.0, Polynomial(vec![1.0, 0.0, 0.5]), Polynomial::constant(1.0), 1e-9).unwrap();
        let oracle = reference_integral(|r| (1.0 + 0.5 * r * r).sqrt(), 0.0, 0.8, 400);
        let oracle2 = reference_integral(|r| (1.0 + 0.5 * r * r).sqrt(), 0.0, 0.8, 800);
        assert!((oracle - oracle2).abs() < 1e-14);
        assert!((p.big_a_of(0.8) - oracle).abs() <= 1e-12);
        assert!(p.a_lo <= 1.0 && p.a_hi >= 1.5);
        for k in 0..=100 {
            let s = -1.0 + 0.02 * k as f64;
            assert!(p.big_a_of(s).abs() <= p.a_hi.sqrt());
        }
    }

    #[test]
    fn coefficient_scan_within_certified_bounds() {
        let p = PhysicalParams::new(
            1.0, 1.0, 1.0, 1.0, 1.0, 2.0,
            Polynomial(vec![1.0, 0.3, -0.4, 0.1]),
            Polynomial(vec![0.5, -0.2, 0.3]),
            1e-9,
        )
        .unwrap();
        for k in 0..=10_000 {
            let s = -1.0 + 2.0 * k as f64 / 10_000.0;
            assert!(p.a_of(s) >= p.a_lo && p.a_of(s) <= p.a_hi);
            assert!(p.b_of(s) >= p.b_lo && p.b_of(s) <= p.b_hi);
        }
    }

    #[test]
    fn gauss_kronrod_integrates_smooth_functions() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-13);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-13);
        let p = integrate(&|x: f64| x.powi(20), -1.0, 1.0, 1e-14);
        assert!((p - 2.0 / 21.0).abs() < 1e-14);
    }
}
