//! Keyed random streams.
//!
//! Each draw site is addressed by `(seed, role, unit, period)`, so a value does
//! not depend on the panel dimensions or on generation order. This is what
//! makes a T=20 panel an exact prefix of the T=100 panel with the same seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub(crate) enum Role {
    CovariateX = 1,
    CovariateZ,
    LatentMu,
    LoadingZ,
    LoadingThetaRef,
    LoadingThetaTildeRef,
    LoadingX,
    LoadingVarthetaTarget,
    LoadingVarthetaTildeTarget,
    InterceptRef,
    InterceptTarget,
    Alpha,
    NoiseRef,
    NoiseTarget,
    ExclusiveMuTarget,
    ExclusiveMuRef,
    AdditiveLoadingX,
    AdditiveLoadingZ,
    UnitLevel,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub(crate) fn stream(seed: u64, role: Role, unit: u64, period: u64) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ role as u64);
    h = splitmix64(h ^ unit);
    h = splitmix64(h ^ period);
    ChaCha8Rng::seed_from_u64(h)
}

/// `n` uniform draws on `[lo, hi)` from one keyed stream.
pub(crate) fn uniforms(seed: u64, role: Role, unit: u64, period: u64, n: usize, range: (f64, f64)) -> alloc::vec::Vec<f64> {
    if n == 0 {
        return alloc::vec::Vec::new();
    }
    let mut rng = stream(seed, role, unit, period);
    if range.0 == range.1 {
        return alloc::vec![range.0; n];
    }
    let dist = Uniform::new(range.0, range.1);
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

pub(crate) fn uniform(seed: u64, role: Role, unit: u64, period: u64, range: (f64, f64)) -> f64 {
    uniforms(seed, role, unit, period, 1, range)[0]
}

/// One Gaussian draw with the given variance.
pub(crate) fn gaussian(seed: u64, role: Role, unit: u64, period: u64, variance: f64) -> f64 {
    gaussians(seed, role, unit, period, 1, variance)[0]
}

pub(crate) fn gaussians(seed: u64, role: Role, unit: u64, period: u64, n: usize, variance: f64) -> alloc::vec::Vec<f64> {
    if variance == 0.0 || n == 0 {
        return alloc::vec![0.0; n];
    }
    let mut rng = stream(seed, role, unit, period);
    let dist = Normal::new(0.0, libm::sqrt(variance)).expect("finite nonnegative variance");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}
