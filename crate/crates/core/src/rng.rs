//! Stateless, coordinate-addressable Gaussian noise.
//!
//! Every variate is a pure function of a [`NoiseKey`]: the key tuple is fed
//! through the Philox-4x32-10 block cipher and the output is mapped to a
//! standard normal by the inverse CDF. No generator state is carried around,
//! so two simulations that share `(seed, path, particle, step)` see the same
//! Brownian increment no matter how many particles or workers they use.

use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};

/// Step index reserved for initial-condition draws.
pub const INITIAL_STEP: u32 = u32::MAX;
/// Step index reserved for the assumption sampler in `verify`.
pub const VERIFY_STEP: u32 = u32::MAX - 1;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Address of a single variate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseKey {
    pub seed: u64,
    pub path: u32,
    pub particle: u32,
    pub step: u32,
    pub component: u32,
}

impl NoiseKey {
    pub fn new(seed: u64, path: u32, particle: u32, step: u32, component: u32) -> Self {
        Self {
            seed,
            path,
            particle,
            step,
            component,
        }
    }

    fn counter(&self) -> [u32; 4] {
        [self.step, self.particle, self.path, self.component]
    }

    fn cipher_key(&self) -> [u32; 2] {
        [self.seed as u32, (self.seed >> 32) as u32]
    }
}

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// Philox-4x32 with ten rounds (the Random123 reference parameters).
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    ctr = philox_round(ctr, key);
    for _ in 1..10 {
        key[0] = key[0].wrapping_add(PHILOX_W0);
        key[1] = key[1].wrapping_add(PHILOX_W1);
        ctr = philox_round(ctr, key);
    }
    ctr
}

/// Uniform variate strictly inside (0, 1) with 53 random bits.
#[inline]
pub fn uniform(key: NoiseKey) -> f64 {
    let out = philox4x32_10(key.counter(), key.cipher_key());
    let bits = (u64::from(out[0]) << 21) | (u64::from(out[1]) >> 11);
    (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal quantile, accurate to a few ulps.
///
/// `erfc_inv` alone is good to roughly 1e-9; one Halley step against the
/// correctly rounded `erfc` from libm closes the gap.
#[inline]
pub fn normal_quantile(p: f64) -> f64 {
    let z = -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    let e = 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * z * z).exp();
    z - u / (1.0 + 0.5 * z * u)
}

/// Standard normal variate addressed by `key`.
#[inline]
pub fn gaussian(key: NoiseKey) -> f64 {
    normal_quantile(uniform(key))
}

/// Writes the `out.len()` Brownian increment components for one particle and step.
pub fn fill_brownian_increment(
    seed: u64,
    path: u32,
    particle: u32,
    step: u32,
    dt: f64,
    out: &mut [f64],
) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "brownian increment needs dt > 0, got {dt}"
        )));
    }
    debug_assert_ne!(step, INITIAL_STEP);
    let scale = dt.sqrt();
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = gaussian(NoiseKey::new(seed, path, particle, step, c as u32)) * scale;
    }
    Ok(())
}

/// Brownian increment `W(t_{k+1}) - W(t_k)` for one particle, `m` components.
pub fn brownian_increment(
    seed: u64,
    path: u32,
    particle: u32,
    step: u32,
    m: usize,
    dt: f64,
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m];
    fill_brownian_increment(seed, path, particle, step, dt, &mut out)?;
    Ok(out)
}

/// Mean and standard deviation of the iid Gaussian initial law.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InitialLaw {
    pub mean: f64,
    pub std: f64,
}

impl InitialLaw {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(std >= 0.0) || !mean.is_finite() || !std.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial law needs finite mean and std >= 0, got mean={mean}, std={std}"
            )));
        }
        Ok(Self { mean, std })
    }
}

/// Initial state of one particle. The draw does not depend on the population
/// size, so growing `N` extends the population instead of reshuffling it.
pub fn initial_sample(seed: u64, path: u32, particle: u32, law: InitialLaw, out: &mut [f64]) {
    for (c, slot) in out.iter_mut().enumerate() {
        *slot = if law.std == 0.0 {
            law.mean
        } else {
            law.mean + law.std * gaussian(NoiseKey::new(seed, path, particle, INITIAL_STEP, c as u32))
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn phi(z: f64) -> f64 {
        0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
    }

    #[test]
    fn philox_known_answers() {
        assert_eq!(
            philox4x32_10([0; 4], [0; 2]),
            [0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8]
        );
        assert_eq!(
            philox4x32_10([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd]
        );
        assert_eq!(
            philox4x32_10(
                [0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344],
                [0xa4093822, 0x299f31d0]
            ),
            [0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1]
        );
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = normal_quantile(p);
            assert!((phi(z) - p).abs() < 1e-12, "p={p} z={z}");
        }
        assert!((phi(normal_quantile(1e-10)) / 1e-10 - 1.0).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12, "{:.17}", normal_quantile(0.975));
    }

    #[test]
    fn gaussian_is_pure() {
        let k = NoiseKey::new(42, 3, 7, 11, 0);
        assert_eq!(gaussian(k).to_bits(), gaussian(k).to_bits());
        let other = NoiseKey { particle: 8, ..k };
        assert_ne!(gaussian(k), gaussian(other));
    }

    #[test]
    fn gaussian_moments_and_lag_correlation() {
        let n = 1_000_000u32;
        let draws: Vec<f64> = (0..n)
            .map(|k| gaussian(NoiseKey::new(2024, k % 97, k / 97, k % 1000, 0)))
            .collect();
        let mean = draws.iter().sum::<f64>() / f64::from(n);
        let var = draws.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / f64::from(n - 1);
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((0.99..1.01).contains(&var), "var {var}");

        // Consecutive steps of one particle.
        let path: Vec<f64> = (0..n)
            .map(|k| gaussian(NoiseKey::new(5, 0, 0, k, 0)))
            .collect();
        let m = path.iter().sum::<f64>() / f64::from(n);
        let c0: f64 = path.iter().map(|z| (z - m).powi(2)).sum();
        let c1: f64 = path.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        assert!((c1 / c0).abs() < 0.005, "lag-1 {}", c1 / c0);
    }

    #[test]
    fn increment_variance_and_particle_independence() {
        let n = 1_000_000u32;
        let dt = 0.01;
        let mut sq = 0.0;
        let mut cross = 0.0;
        let mut s0 = 0.0;
        let mut s1 = 0.0;
        for k in 0..n {
            let a = brownian_increment(9, 0, 0, k, 1, dt).unwrap()[0];
            let b = brownian_increment(9, 0, 1, k, 1, dt).unwrap()[0];
            sq += a * a;
            cross += a * b;
            s0 += a;
            s1 += b;
        }
        let nf = f64::from(n);
        let second = sq / nf;
        assert!((second - 0.01).abs() < 3e-5, "E|dW|^2 = {second}");
        let cov = cross / nf - (s0 / nf) * (s1 / nf);
        assert!((cov / dt).abs() < 0.005, "corr {}", cov / dt);
    }

    #[test]
    fn increment_rejects_bad_dt() {
        assert!(brownian_increment(1, 0, 0, 0, 1, 0.0).is_err());
        assert!(brownian_increment(1, 0, 0, 0, 1, -1.0).is_err());
    }

    #[test]
    fn initial_sample_properties() {
        let law = InitialLaw::new(3.5, 0.0).unwrap();
        let mut x = [0.0; 2];
        initial_sample(1, 0, 0, law, &mut x);
        assert_eq!(x, [3.5, 3.5]);
        assert!(InitialLaw::new(0.0, -1.0).is_err());

        let law = InitialLaw::new(2.0, 1.0).unwrap();
        let n = 1_000_000u32;
        let mut s = 0.0;
        let mut one = [0.0];
        for j in 0..n {
            initial_sample(77, 0, j, law, &mut one);
            s += one[0];
        }
        assert!((s / f64::from(n) - 2.0).abs() < 0.003);

        // Particle 7 gets the same draw whatever the population size.
        let mut a = [0.0];
        let mut b = [0.0];
        initial_sample(77, 4, 7, law, &mut a);
        initial_sample(77, 4, 7, law, &mut b);
        assert_eq!(a[0].to_bits(), b[0].to_bits());
    }

    #[test]
    fn kolmogorov_smirnov_against_standard_normal() {
        let n = 100_000usize;
        let mut z: Vec<f64> = (0..n as u32)
            .map(|k| gaussian(NoiseKey::new(31337, 1, k, 0, 0)))
            .collect();
        z.sort_by(f64::total_cmp);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let nf = n as f64;
        let d = z
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = normal.cdf(v);
                (f - i as f64 / nf).abs().max(((i + 1) as f64 / nf - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic critical value at alpha = 0.001 is 1.9495 / sqrt(n).
        assert!(d < 1.9495 / nf.sqrt(), "KS statistic {d}");
    }
}
