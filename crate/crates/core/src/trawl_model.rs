//! Trawl functions and Lévy seeds with their closed-form quantities.
//!
//! Two trawl families are supported, both normalised to `a(0) = 1`:
//!
//! ```text
//! Exponential(λ):   a(s) = exp(-λ s)           Leb(A) = 1/λ
//! SupGamma(ᾱ, H):   a(s) = (1 + s/ᾱ)^(-H)      Leb(A) = ᾱ/(H-1),  H > 1
//! ```
//!
//! `leb_intersection(h) = Leb(A ∩ A_h) = ∫_h^∞ a(u) du`, which is also the
//! autocovariance at lag `h` when `Var(L') = 1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A parametric trawl function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTrawl", into = "RawTrawl")]
pub enum TrawlSpec {
    Exponential { lambda: f64 },
    SupGamma { alpha: f64, h: f64 },
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawTrawl {
    Exp {
        lambda: f64,
    },
    Supgamma {
        alpha: f64,
        #[serde(rename = "H")]
        h: f64,
    },
}

impl TryFrom<RawTrawl> for TrawlSpec {
    type Error = Error;

    fn try_from(raw: RawTrawl) -> Result<Self> {
        match raw {
            RawTrawl::Exp { lambda } => TrawlSpec::exponential(lambda),
            RawTrawl::Supgamma { alpha, h } => TrawlSpec::sup_gamma(alpha, h),
        }
    }
}

impl From<TrawlSpec> for RawTrawl {
    fn from(spec: TrawlSpec) -> Self {
        match spec {
            TrawlSpec::Exponential { lambda } => RawTrawl::Exp { lambda },
            TrawlSpec::SupGamma { alpha, h } => RawTrawl::Supgamma { alpha, h },
        }
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::domain(format!("{what} must be non-negative, got {t}")));
    }
    Ok(())
}

impl TrawlSpec {
    pub fn exponential(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain(format!("exponential rate must be > 0, got {lambda}")));
        }
        Ok(TrawlSpec::Exponential { lambda })
    }

    /// `H <= 1` gives an infinite trawl set and is rejected.
    pub fn sup_gamma(alpha: f64, h: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::domain(format!("supGamma scale must be > 0, got {alpha}")));
        }
        if !(h.is_finite() && h > 1.0) {
            return Err(Error::domain(format!("supGamma exponent must be > 1, got {h}")));
        }
        Ok(TrawlSpec::SupGamma { alpha, h })
    }

    /// Trawl function `a(t)`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        check_time(t, "time")?;
        Ok(self.a(t))
    }

    /// `φ(t) = -a'(t)`.
    pub fn phi(&self, t: f64) -> Result<f64> {
        check_time(t, "time")?;
        Ok(match *self {
            TrawlSpec::Exponential { lambda } => lambda * (-lambda * t).exp(),
            TrawlSpec::SupGamma { alpha, h } => (h / alpha) * (1.0 + t / alpha).powf(-h - 1.0),
        })
    }

    /// Unchecked evaluation for internal callers that already validated `t >= 0`.
    pub(crate) fn a(&self, t: f64) -> f64 {
        match *self {
            TrawlSpec::Exponential { lambda } => (-lambda * t).exp(),
            TrawlSpec::SupGamma { alpha, h } => (1.0 + t / alpha).powf(-h),
        }
    }

    /// Total area of the trawl set.
    pub fn leb_a(&self) -> f64 {
        match *self {
            TrawlSpec::Exponential { lambda } => 1.0 / lambda,
            TrawlSpec::SupGamma { alpha, h } => alpha / (h - 1.0),
        }
    }

    /// `Leb(A ∩ A_h) = ∫_h^∞ a(u) du`.
    pub fn leb_intersection(&self, h: f64) -> Result<f64> {
        check_time(h, "lag")?;
        Ok(self.tail(h))
    }

    /// `Leb(A \ A_h) = Leb(A) - Leb(A ∩ A_h)`.
    pub fn leb_setminus(&self, h: f64) -> Result<f64> {
        Ok(self.leb_a() - self.leb_intersection(h)?)
    }

    /// Autocovariance at lag `h` of the process driven by a unit-variance seed.
    pub fn theoretical_acf(&self, h: f64) -> f64 {
        self.tail(h.abs())
    }

    pub(crate) fn tail(&self, x: f64) -> f64 {
        match *self {
            TrawlSpec::Exponential { lambda } => (-lambda * x).exp() / lambda,
            TrawlSpec::SupGamma { alpha, h } => alpha / (h - 1.0) * (1.0 + x / alpha).powf(1.0 - h),
        }
    }

    /// `∫_x0^x1 a(u) du` for `0 <= x0 <= x1`, computed without cancellation
    /// between the two tail values.
    pub fn integral(&self, x0: f64, x1: f64) -> f64 {
        debug_assert!(x0 >= 0.0 && x1 >= x0);
        match *self {
            TrawlSpec::Exponential { lambda } => {
                (-lambda * x0).exp() * -(-lambda * (x1 - x0)).exp_m1() / lambda
            }
            TrawlSpec::SupGamma { alpha, h } => {
                let log_ratio = ((x1 - x0) / (alpha + x0)).ln_1p();
                -self.tail(x0) * ((1.0 - h) * log_ratio).exp_m1()
            }
        }
    }

    /// Smallest `T` with `∫_T^∞ a <= rel_tol * Leb(A)`.
    pub fn tail_cutoff(&self, rel_tol: f64) -> f64 {
        match *self {
            TrawlSpec::Exponential { lambda } => -rel_tol.ln() / lambda,
            TrawlSpec::SupGamma { alpha, h } => alpha * (rel_tol.powf(1.0 / (1.0 - h)) - 1.0),
        }
    }

    /// `∫_0^∞ a(s)^2 ds`.
    pub fn integral_a_squared(&self) -> f64 {
        match *self {
            TrawlSpec::Exponential { lambda } => 0.5 / lambda,
            TrawlSpec::SupGamma { alpha, h } => alpha / (2.0 * h - 1.0),
        }
    }
}

/// Law of the Lévy seed `L'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeed", into = "RawSeed")]
pub enum SeedSpec {
    /// `P(L' = x) = Γ(m+x)/(Γ(m) x!) (1-θ)^m θ^x`.
    NegBin { m: f64, theta: f64 },
    /// Shape/scale parameterisation.
    Gamma { shape: f64, scale: f64 },
    Gaussian { mean: f64, variance: f64 },
}

/// Mean, variance and fourth cumulant `c4 = ∫ x^4 ν(dx)` of a seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedMoments {
    pub mean: f64,
    pub variance: f64,
    pub c4: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum RawSeed {
    Negbin {
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m: Option<f64>,
    },
    Gamma {
        shape: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
    },
    Gaussian {
        mean: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
    },
}

impl TryFrom<RawSeed> for SeedSpec {
    type Error = Error;

    fn try_from(raw: RawSeed) -> Result<Self> {
        match raw {
            RawSeed::Negbin { theta, m: None } => SeedSpec::negbin_normalized(theta),
            RawSeed::Negbin { theta, m: Some(m) } => SeedSpec::negbin_unchecked(m, theta),
            RawSeed::Gamma { shape, scale: None } => SeedSpec::gamma_normalized(shape),
            RawSeed::Gamma { shape, scale: Some(scale) } => SeedSpec::gamma_unchecked(shape, scale),
            RawSeed::Gaussian { mean, variance: None } => SeedSpec::gaussian_normalized(mean),
            RawSeed::Gaussian { mean, variance: Some(v) } => SeedSpec::gaussian_unchecked(mean, v),
        }
    }
}

impl From<SeedSpec> for RawSeed {
    fn from(seed: SeedSpec) -> Self {
        match seed {
            SeedSpec::NegBin { m, theta } => RawSeed::Negbin { theta, m: Some(m) },
            SeedSpec::Gamma { shape, scale } => RawSeed::Gamma { shape, scale: Some(scale) },
            SeedSpec::Gaussian { mean, variance } => RawSeed::Gaussian { mean, variance: Some(variance) },
        }
    }
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be > 0, got {x}")))
    }
}

impl SeedSpec {
    /// Negative binomial with `m = (1-θ)²/θ`, so that `Var(L') = 1`.
    pub fn negbin_normalized(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::domain(format!("negbin θ must lie in (0,1), got {theta}")));
        }
        Ok(SeedSpec::NegBin { m: (1.0 - theta).powi(2) / theta, theta })
    }

    pub fn negbin_unchecked(m: f64, theta: f64) -> Result<Self> {
        positive(m, "negbin m")?;
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::domain(format!("negbin θ must lie in (0,1), got {theta}")));
        }
        Ok(SeedSpec::NegBin { m, theta })
    }

    /// Gamma with scale `1/√shape`, so that `Var(L') = 1`.
    pub fn gamma_normalized(shape: f64) -> Result<Self> {
        positive(shape, "gamma shape")?;
        Ok(SeedSpec::Gamma { shape, scale: shape.sqrt().recip() })
    }

    pub fn gamma_unchecked(shape: f64, scale: f64) -> Result<Self> {
        positive(shape, "gamma shape")?;
        positive(scale, "gamma scale")?;
        Ok(SeedSpec::Gamma { shape, scale })
    }

    pub fn gaussian_normalized(mean: f64) -> Result<Self> {
        SeedSpec::gaussian_unchecked(mean, 1.0)
    }

    pub fn gaussian_unchecked(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() {
            return Err(Error::domain(format!("gaussian mean must be finite, got {mean}")));
        }
        positive(variance, "gaussian variance")?;
        Ok(SeedSpec::Gaussian { mean, variance })
    }

    pub fn moments(&self) -> SeedMoments {
        match *self {
            SeedSpec::NegBin { m, theta } => SeedMoments {
                mean: m * theta / (1.0 - theta),
                variance: m * theta / (1.0 - theta).powi(2),
                c4: m * theta * (theta * theta + 4.0 * theta + 1.0) / (theta - 1.0).powi(4),
            },
            SeedSpec::Gamma { shape, scale } => SeedMoments {
                mean: shape * scale,
                variance: shape * scale * scale,
                c4: 6.0 * shape * scale.powi(4),
            },
            SeedSpec::Gaussian { mean, variance } => SeedMoments { mean, variance, c4: 0.0 },
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, SeedSpec::Gaussian { .. })
    }
}
