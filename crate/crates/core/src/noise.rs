//! Idiosyncratic noise for the agents.
//!
//! The reference law is the discrete Weierstrass-Mandelbrot (WM) distribution
//! with spikes at `+-b0 * b^j`, `j = 0, 1, 2, ...`, carrying mass
//! `(1 - 1/K) K^-j / 2` each. Continuous Gaussian, rounded Gaussian and a
//! two-sided Pareto law are available as alternatives.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Parameters of the Weierstrass-Mandelbrot distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmParams {
    k: f64,
    b: f64,
    b0: f64,
}

/// Sign of a WM spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// Variance of a noise law. The infinite case is a distinct value, never an
/// overflowed float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Infinite,
}

impl Variance {
    pub fn is_finite(&self) -> bool {
        matches!(self, Variance::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Variance::Finite(v) => Some(v),
            Variance::Infinite => None,
        }
    }
}

impl WmParams {
    pub fn new(k: f64, b: f64, b0: f64) -> Result<Self> {
        if !(k > 1.0) || !k.is_finite() {
            return Err(Error::invalid("K", format!("must be > 1, got {k}")));
        }
        if !(b > 1.0) || !b.is_finite() {
            return Err(Error::invalid("b", format!("must be > 1, got {b}")));
        }
        if !(b0 > 0.0) || !b0.is_finite() {
            return Err(Error::invalid("b0", format!("must be > 0, got {b0}")));
        }
        Ok(WmParams { k, b, b0 })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Location of the `j`-th positive spike, `b0 * b^j`.
    pub fn spike(&self, j: u32) -> f64 {
        self.b0 * self.b.powi(j as i32)
    }

    /// Probability mass of the spike at `sign * b0 * b^j`.
    pub fn pmf(&self, j: u32, _sign: Sign) -> f64 {
        (1.0 - 1.0 / self.k) * self.k.powi(-(j as i32)) * 0.5
    }

    /// `b0^2 (1 - 1/K) / (1 - b^2/K)` when `b^2 < K`, infinite otherwise.
    pub fn variance(&self) -> Variance {
        let ratio = self.b * self.b / self.k;
        if ratio < 1.0 {
            Variance::Finite(self.b0 * self.b0 * (1.0 - 1.0 / self.k) / (1.0 - ratio))
        } else {
            Variance::Infinite
        }
    }

    /// Exponent `beta = ln K / ln b` of the asymptotic density `|x|^-(1+beta)`.
    pub fn tail_exponent(&self) -> f64 {
        self.k.ln() / self.b.ln()
    }
}

/// The law generating every agent's noise term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    WeierstrassMandelbrot(WmParams),
    GaussianContinuous {
        sigma: f64,
    },
    /// Gaussian sample rounded to the nearest multiple of `step`.
    GaussianDiscrete {
        sigma: f64,
        step: f64,
    },
    /// Symmetric Pareto: magnitude `scale * U^(-1/exponent)`, fair sign.
    ParetoContinuous {
        exponent: f64,
        scale: f64,
    },
}

impl NoiseSpec {
    pub fn wm(k: f64, b: f64, b0: f64) -> Result<Self> {
        WmParams::new(k, b, b0).map(NoiseSpec::WeierstrassMandelbrot)
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be > 0, got {v}")))
            }
        }
        match *self {
            NoiseSpec::WeierstrassMandelbrot(p) => WmParams::new(p.k, p.b, p.b0).map(|_| ()),
            NoiseSpec::GaussianContinuous { sigma } => positive("sigma", sigma),
            NoiseSpec::GaussianDiscrete { sigma, step } => {
                positive("sigma", sigma)?;
                positive("step", step)
            }
            NoiseSpec::ParetoContinuous { exponent, scale } => {
                positive("exponent", exponent)?;
                positive("scale", scale)
            }
        }
    }

    pub fn variance(&self) -> Variance {
        match *self {
            NoiseSpec::WeierstrassMandelbrot(p) => p.variance(),
            NoiseSpec::GaussianContinuous { sigma } => Variance::Finite(sigma * sigma),
            // Rounding changes the variance; there is no closed form worth carrying.
            NoiseSpec::GaussianDiscrete { sigma, step } => {
                Variance::Finite(sigma * sigma + step * step / 12.0)
            }
            NoiseSpec::ParetoContinuous { exponent, scale } => {
                if exponent > 2.0 {
                    Variance::Finite(scale * scale * exponent / (exponent - 2.0))
                } else {
                    Variance::Infinite
                }
            }
        }
    }

    /// Draw a single value. Builds a fresh [`NoiseSampler`]; use the sampler
    /// directly in hot loops.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        NoiseSampler::new(*self).sample(rng)
    }

    pub fn sampler(&self) -> NoiseSampler {
        NoiseSampler::new(*self)
    }
}

const UNIT_53: f64 = 1.0 / (1u64 << 53) as f64;
const LOW_53: u64 = (1 << 53) - 1;

/// Splits one 64-bit draw into a fair sign (top bit) and a uniform in (0, 1].
#[inline]
fn sign_and_unit(bits: u64) -> (bool, f64) {
    let negative = bits >> 63 == 1;
    let u = ((bits & LOW_53) + 1) as f64 * UNIT_53;
    (negative, u)
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Wm {
        /// `tail[j] = K^-(j+1) = P(J > j)`, down to the uniform's resolution.
        tail: Vec<f64>,
        /// `magnitude[j] = b0 * b^j`.
        magnitude: Vec<f64>,
    },
    Gaussian {
        sigma: f64,
    },
    DiscreteGaussian {
        sigma: f64,
        step: f64,
    },
    Pareto {
        inv_exponent: f64,
        scale: f64,
    },
}

/// Precomputed sampler for a [`NoiseSpec`].
///
/// WM, Pareto: exactly one `u64` per sample. Gaussian families: whatever the
/// ziggurat consumes.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    spec: NoiseSpec,
    kind: SamplerKind,
}

impl NoiseSampler {
    pub fn new(spec: NoiseSpec) -> Self {
        let kind = match spec {
            NoiseSpec::WeierstrassMandelbrot(p) => {
                let mut tail = Vec::new();
                let mut magnitude = vec![p.b0];
                let mut t = 1.0 / p.k;
                // The smallest uniform is 2^-53, so spikes beyond this are unreachable.
                while t >= UNIT_53 {
                    tail.push(t);
                    magnitude.push(p.spike(tail.len() as u32));
                    t /= p.k;
                }
                SamplerKind::Wm { tail, magnitude }
            }
            NoiseSpec::GaussianContinuous { sigma } => SamplerKind::Gaussian { sigma },
            NoiseSpec::GaussianDiscrete { sigma, step } => {
                SamplerKind::DiscreteGaussian { sigma, step }
            }
            NoiseSpec::ParetoContinuous { exponent, scale } => SamplerKind::Pareto {
                inv_exponent: 1.0 / exponent,
                scale,
            },
        };
        NoiseSampler { spec, kind }
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    /// Index `j` of the WM spike selected by a uniform `u` in (0, 1]:
    /// the inverse CDF of the geometric law `P(J >= j) = K^-j`.
    #[inline]
    fn wm_index(tail: &[f64], u: f64) -> usize {
        let mut j = 0;
        while j < tail.len() && u <= tail[j] {
            j += 1;
        }
        j
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Wm { tail, magnitude } => {
                let (negative, u) = sign_and_unit(rng.next_u64());
                let x = magnitude[Self::wm_index(tail, u)];
                if negative {
                    -x
                } else {
                    x
                }
            }
            SamplerKind::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            SamplerKind::DiscreteGaussian { sigma, step } => {
                let z: f64 = rng.sample(StandardNormal);
                (sigma * z / step).round() * step
            }
            SamplerKind::Pareto {
                inv_exponent,
                scale,
            } => {
                let (negative, u) = sign_and_unit(rng.next_u64());
                let x = scale * u.powf(-inv_exponent);
                if negative {
                    -x
                } else {
                    x
                }
            }
        }
    }

    /// WM only: the spike index `j` of a sample, for frequency tests.
    pub fn sample_wm_index<R: RngCore + ?Sized>(&self, rng: &mut R) -> Option<(usize, Sign)> {
        match &self.kind {
            SamplerKind::Wm { tail, .. } => {
                let (negative, u) = sign_and_unit(rng.next_u64());
                let sign = if negative { Sign::Minus } else { Sign::Plus };
                Some((Self::wm_index(tail, u), sign))
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn reference() -> WmParams {
        WmParams::new(5.0, 2.0, 0.2).unwrap()
    }

    #[test]
    fn pmf_values() {
        let p = reference();
        assert!((p.pmf(0, Sign::Plus) - 0.4).abs() < 1e-15);
        assert!((p.pmf(1, Sign::Minus) - 0.08).abs() < 1e-15);
    }

    #[test]
    fn pmf_normalizes() {
        for &(k, b) in &[(5.0, 2.0), (1.5, 1.2), (9.5, 4.8), (2.0, 3.0)] {
            let p = WmParams::new(k, b, 0.3).unwrap();
            let total: f64 = (0..2000)
                .map(|j| p.pmf(j, Sign::Plus) + p.pmf(j, Sign::Minus))
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "K={k}: {total}");
        }
    }

    #[test]
    fn variance_and_tail_exponent() {
        assert!((reference().variance().finite().unwrap() - 0.16).abs() < 1e-15);
        assert_eq!(
            WmParams::new(2.0, 2.0, 1.0).unwrap().variance(),
            Variance::Infinite
        );
        assert!((reference().tail_exponent() - 5f64.ln() / 2f64.ln()).abs() < 1e-15);
        assert!((reference().tail_exponent() - 2.321928094887362).abs() < 1e-12);
        let four = WmParams::new(4.0, 2.0, 1.0).unwrap();
        assert!((four.tail_exponent() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn finite_variance_iff_beta_above_two() {
        for ki in 0..17 {
            for bi in 0..19 {
                let k = 1.5 + 0.5 * ki as f64;
                let b = 1.2 + 0.2 * bi as f64;
                let p = WmParams::new(k, b, 0.5).unwrap();
                let by_ratio = b * b / k < 1.0;
                let beta = p.tail_exponent();
                // Grid points with b^2 == K exactly sit on the boundary.
                if (b * b - k).abs() < 1e-9 {
                    continue;
                }
                assert_eq!(p.variance().is_finite(), by_ratio, "K={k} b={b}");
                assert_eq!(p.variance().is_finite(), beta > 2.0, "K={k} b={b}");
            }
        }
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(WmParams::new(1.0, 2.0, 0.2).is_err());
        assert!(WmParams::new(5.0, 1.0, 0.2).is_err());
        assert!(WmParams::new(5.0, 2.0, 0.0).is_err());
        assert!(NoiseSpec::GaussianDiscrete {
            sigma: 1.0,
            step: 0.0
        }
        .validate()
        .is_err());
        assert!(NoiseSpec::ParetoContinuous {
            exponent: -1.0,
            scale: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn wm_samples_lie_on_spikes() {
        let p = reference();
        let sampler = NoiseSpec::WeierstrassMandelbrot(p).sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let x = sampler.sample(&mut rng).abs();
            let j = (x / p.b0()).log2().round() as u32;
            assert_eq!(x, p.spike(j));
        }
    }

    #[test]
    fn wm_chi_square_against_pmf() {
        let p = reference();
        let sampler = NoiseSpec::WeierstrassMandelbrot(p).sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let mut counts = [0u64; 9];
        for _ in 0..n {
            let (j, _) = sampler.sample_wm_index(&mut rng).unwrap();
            counts[j.min(8)] += 1;
        }
        // magnitude frequency of the first spike
        let f0 = counts[0] as f64 / n as f64;
        assert!((f0 - 0.8).abs() < 0.002, "{f0}");

        let mut chi2 = 0.0;
        let mut head = 0.0;
        for (j, &c) in counts.iter().enumerate().take(8) {
            let expected = 2.0 * p.pmf(j as u32, Sign::Plus) * n as f64;
            head += expected;
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        let rest = n as f64 - head;
        chi2 += (counts[8] as f64 - rest).powi(2) / rest;
        let pvalue = 1.0 - ChiSquared::new(8.0).unwrap().cdf(chi2);
        assert!(pvalue > 0.001, "chi2={chi2} p={pvalue}");
    }

    #[test]
    fn sign_is_fair_and_stream_deterministic() {
        let spec = NoiseSpec::wm(5.0, 2.0, 0.2).unwrap();
        let sampler = spec.sampler();
        let mut a = ChaCha8Rng::seed_from_u64(99);
        let mut b = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut a)).collect();
        let ys: Vec<f64> = (0..n).map(|_| sampler.sample(&mut b)).collect();
        assert_eq!(xs, ys);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = (0.16 / n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn gaussian_mean_is_zero() {
        let sampler = NoiseSpec::GaussianContinuous { sigma: 1.0 }.sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sampler.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.005, "{mean}");
    }

    #[test]
    fn discrete_gaussian_is_on_grid() {
        let sampler = NoiseSpec::GaussianDiscrete {
            sigma: 1.0,
            step: 0.25,
        }
        .sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let x = sampler.sample(&mut rng) / 0.25;
            assert_eq!(x, x.round());
        }
    }

    #[test]
    fn pareto_magnitude_has_expected_survival() {
        let sampler = NoiseSpec::ParetoContinuous {
            exponent: 3.0,
            scale: 0.5,
        }
        .sampler();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 400_000;
        let mut above = 0;
        for _ in 0..n {
            let x = sampler.sample(&mut rng).abs();
            assert!(x >= 0.5);
            if x >= 1.0 {
                above += 1;
            }
        }
        // P(|X| >= 2 * scale) = 2^-3
        let f = above as f64 / n as f64;
        assert!((f - 0.125).abs() < 0.002, "{f}");
    }
}
