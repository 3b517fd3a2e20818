//! Random own-demand of a mobile user.
//!
//! A [`DemandDistribution`] is a continuous law on a bounded interval
//! `[lo, hi]`. The uniform family is the workhorse; a truncated exponential
//! is provided so that code paths which must not assume uniformity (the
//! quadrature branch of the expected-sales integral, the density-slope term
//! of the best-response curvature) get exercised.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance of the adaptive quadrature used for non-uniform laws.
pub const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandKind {
    Uniform,
    /// Exponential law with the given rate, truncated to `[lo, hi]`.
    /// Positive rates give a decreasing density, negative rates an
    /// increasing one.
    TruncatedExponential { rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDemand", into = "RawDemand")]
pub struct DemandDistribution {
    kind: DemandKind,
    lo: f64,
    hi: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDemand {
    #[serde(flatten)]
    kind: DemandKind,
    lo: f64,
    hi: f64,
}

impl TryFrom<RawDemand> for DemandDistribution {
    type Error = Error;

    fn try_from(raw: RawDemand) -> Result<Self> {
        DemandDistribution::new(raw.kind, raw.lo, raw.hi)
    }
}

impl From<DemandDistribution> for RawDemand {
    fn from(d: DemandDistribution) -> Self {
        RawDemand {
            kind: d.kind,
            lo: d.lo,
            hi: d.hi,
        }
    }
}

impl DemandDistribution {
    pub fn new(kind: DemandKind, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || lo >= hi {
            return Err(Error::config(format!(
                "demand support must satisfy 0 <= lo < hi, got [{lo}, {hi}]"
            )));
        }
        if let DemandKind::TruncatedExponential { rate } = kind {
            if !rate.is_finite() || rate == 0.0 {
                return Err(Error::config(format!(
                    "truncated exponential rate must be finite and nonzero, got {rate}"
                )));
            }
        }
        Ok(DemandDistribution { kind, lo, hi })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(DemandKind::Uniform, lo, hi)
    }

    pub fn truncated_exponential(lo: f64, hi: f64, rate: f64) -> Result<Self> {
        Self::new(DemandKind::TruncatedExponential { rate }, lo, hi)
    }

    pub fn kind(&self) -> DemandKind {
        self.kind
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `1 - exp(-rate * width)`, the normaliser of the truncated exponential.
    fn exp_mass(rate: f64, width: f64) -> f64 {
        -(-rate * width).exp_m1()
    }

    pub fn density(&self, xi: f64) -> f64 {
        if xi < self.lo || xi > self.hi {
            return 0.0;
        }
        match self.kind {
            DemandKind::Uniform => 1.0 / self.width(),
            DemandKind::TruncatedExponential { rate } => {
                rate * (-rate * (xi - self.lo)).exp() / Self::exp_mass(rate, self.width())
            }
        }
    }

    /// Derivative of the density on the open support; zero outside.
    pub fn density_slope(&self, xi: f64) -> f64 {
        if xi < self.lo || xi > self.hi {
            return 0.0;
        }
        match self.kind {
            DemandKind::Uniform => 0.0,
            DemandKind::TruncatedExponential { rate } => -rate * self.density(xi),
        }
    }

    pub fn cdf(&self, xi: f64) -> f64 {
        if xi <= self.lo {
            return 0.0;
        }
        if xi >= self.hi {
            return 1.0;
        }
        let f = match self.kind {
            DemandKind::Uniform => (xi - self.lo) / self.width(),
            DemandKind::TruncatedExponential { rate } => {
                -(-rate * (xi - self.lo)).exp_m1() / Self::exp_mass(rate, self.width())
            }
        };
        f.clamp(0.0, 1.0)
    }

    /// Generalised inverse `inf { xi : F(xi) >= q }`, so `quantile(0) = lo`
    /// and `quantile(1) = hi`. Probabilities are clamped into `[0, 1]`.
    pub fn quantile(&self, q: f64) -> f64 {
        let q = if q.is_nan() { 0.0 } else { q.clamp(0.0, 1.0) };
        if q == 0.0 {
            return self.lo;
        }
        if q == 1.0 {
            return self.hi;
        }
        let xi = match self.kind {
            DemandKind::Uniform => self.lo + q * self.width(),
            DemandKind::TruncatedExponential { rate } => {
                let mass = Self::exp_mass(rate, self.width());
                self.lo - (-q * mass).ln_1p() / rate
            }
        };
        xi.clamp(self.lo, self.hi)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self.kind {
            DemandKind::Uniform => self.lo + u * self.width(),
            DemandKind::TruncatedExponential { .. } => self.quantile(u),
        }
    }

    /// Whether the density never increases over the support.
    pub fn has_non_increasing_density(&self) -> bool {
        match self.kind {
            DemandKind::Uniform => true,
            DemandKind::TruncatedExponential { rate } => rate > 0.0,
        }
    }

    /// Admission test for equilibrium solving: non-increasing density that is
    /// strictly positive on `[lo, hi)`.
    pub fn is_admissible(&self) -> bool {
        self.has_non_increasing_density() && self.density(self.hi) > 0.0
    }

    /// `E[min(xi, level)]`, the expected amount of own demand served when
    /// `level` units are kept back.
    pub fn expected_min(&self, level: f64) -> f64 {
        if level <= self.lo {
            return level;
        }
        match self.kind {
            DemandKind::Uniform => {
                if level >= self.hi {
                    0.5 * (self.lo + self.hi)
                } else {
                    let w = self.width();
                    (level * level - self.lo * self.lo) / (2.0 * w) + level * (self.hi - level) / w
                }
            }
            DemandKind::TruncatedExponential { .. } => {
                let top = level.min(self.hi);
                let served = adaptive_simpson(|xi| xi * self.density(xi), self.lo, top, QUADRATURE_TOL);
                served + level * (1.0 - self.cdf(level))
            }
        }
    }
}

/// Adaptive Simpson quadrature on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_bad_support() {
        assert!(DemandDistribution::uniform(3.0, 3.0).is_err());
        assert!(DemandDistribution::uniform(-1.0, 3.0).is_err());
        assert!(DemandDistribution::uniform(0.0, f64::INFINITY).is_err());
        assert!(DemandDistribution::truncated_exponential(0.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn quantile_endpoints() {
        let d = DemandDistribution::uniform(2.0, 7.0).unwrap();
        assert_eq!(d.quantile(0.0), 2.0);
        assert_eq!(d.quantile(1.0), 7.0);
        assert_eq!(d.quantile(-1e-17), 2.0);
        assert_eq!(d.quantile(1.0 + 1e-16), 7.0);
    }

    #[test]
    fn cdf_and_density_outside_support() {
        let d = DemandDistribution::truncated_exponential(1.0, 4.0, 0.7).unwrap();
        assert_eq!(d.cdf(0.5), 0.0);
        assert_eq!(d.cdf(4.5), 1.0);
        assert_eq!(d.density(0.5), 0.0);
        assert_eq!(d.density(4.5), 0.0);
    }

    #[test]
    fn round_trip_on_random_probes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let dists = [
            DemandDistribution::uniform(0.0, 25.0).unwrap(),
            DemandDistribution::uniform(3.0, 9.0).unwrap(),
            DemandDistribution::truncated_exponential(0.0, 25.0, 0.08).unwrap(),
            DemandDistribution::truncated_exponential(2.0, 12.0, -0.3).unwrap(),
        ];
        for d in dists {
            for _ in 0..1000 {
                let xi = d.lo() + (d.hi() - d.lo()) * rng.random::<f64>();
                let back = d.quantile(d.cdf(xi));
                assert!((back - xi).abs() <= 1e-9, "{d:?}: {xi} -> {back}");
            }
        }
    }

    #[test]
    fn exponential_density_integrates_to_one() {
        let d = DemandDistribution::truncated_exponential(1.0, 6.0, 0.4).unwrap();
        let mass = adaptive_simpson(|x| d.density(x), 1.0, 6.0, 1e-12);
        assert!((mass - 1.0).abs() < 1e-10);
    }

    #[test]
    fn admissibility() {
        assert!(DemandDistribution::uniform(0.0, 1.0).unwrap().is_admissible());
        let dec = DemandDistribution::truncated_exponential(0.0, 5.0, 0.5).unwrap();
        assert!(dec.is_admissible());
        let inc = DemandDistribution::truncated_exponential(0.0, 5.0, -0.5).unwrap();
        assert!(!inc.has_non_increasing_density());
        assert!(!inc.is_admissible());
    }

    #[test]
    fn expected_min_quadrature_agrees_with_tail_integral() {
        // E[min(xi, r)] = lo + int_lo^r (1 - F(t)) dt for r in [lo, hi].
        let d = DemandDistribution::truncated_exponential(2.0, 20.0, 0.15).unwrap();
        for r in [2.0f64, 3.5, 10.0, 19.9, 20.0, 30.0] {
            let tail = 2.0 + adaptive_simpson(|t| 1.0 - d.cdf(t), 2.0, r.min(20.0), 1e-12);
            assert!((d.expected_min(r) - tail).abs() < 1e-8, "r={r}");
        }
    }

    #[test]
    fn serde_validates() {
        let ok: DemandDistribution =
            serde_json::from_str(r#"{"kind":"uniform","lo":0.0,"hi":25.0}"#).unwrap();
        assert_eq!(ok.hi(), 25.0);
        let bad = serde_json::from_str::<DemandDistribution>(r#"{"kind":"uniform","lo":5.0,"hi":1.0}"#);
        assert!(bad.is_err());
    }
}
