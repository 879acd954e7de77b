//! Counter-based Gaussian draws keyed by `(seed, particle, step, mode)`.
//!
//! Every draw is a pure function of its key, so the same increments come back
//! under any evaluation order or worker count, and two runs that share a seed
//! share their noise exactly (common random numbers).
//!
//! Uniforms come from Philox-4×32-10; normals are obtained by inverting the
//! standard normal CDF.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox-4×32 with 10 rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let p0 = (PHILOX_M0 as u64) * (c[0] as u64);
        let p1 = (PHILOX_M1 as u64) * (c[2] as u64);
        let (hi0, lo0) = ((p0 >> 32) as u32, p0 as u32);
        let (hi1, lo1) = ((p1 >> 32) as u32, p1 as u32);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Independent streams that share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Stream {
    Wiener = 0,
    InitialState = 1,
    Direction = 2,
    Probe = 3,
    Control = 4,
}

/// Stateless keyed source of uniforms and standard normals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedGaussian {
    seed: u64,
}

impl KeyedGaussian {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in the open interval `(0, 1)` with 53 random bits.
    pub fn uniform(&self, stream: Stream, a: u32, b: u32, c: u32) -> f64 {
        let key = [self.seed as u32, (self.seed >> 32) as u32];
        let out = philox4x32([a, b, c, stream as u32], key);
        let bits = ((out[0] as u64) << 32 | out[1] as u64) >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by inverse CDF of [`Self::uniform`].
    pub fn normal(&self, stream: Stream, a: u32, b: u32, c: u32) -> f64 {
        Normal::standard().inverse_cdf(self.uniform(stream, a, b, c))
    }
}

/// Sampling plan for the truncated cylindrical Wiener process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisePlan {
    pub seed: u64,
    pub n_particles: usize,
    pub n_modes: usize,
    pub n_steps: usize,
    pub dt: f64,
}

impl NoisePlan {
    pub fn new(seed: u64, n_particles: usize, n_modes: usize, n_steps: usize, horizon: f64) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::OutOfRange {
                what: "n_t",
                value: 0.0,
                rule: "n_t >= 1",
            });
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::OutOfRange {
                what: "T",
                value: horizon,
                rule: "T > 0",
            });
        }
        if n_particles == 0 || n_modes == 0 {
            return Err(Error::OutOfRange {
                what: "N or M",
                value: 0.0,
                rule: "N >= 1 and M >= 1",
            });
        }
        Ok(Self {
            seed,
            n_particles,
            n_modes,
            n_steps,
            dt: horizon / n_steps as f64,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn generator(&self) -> KeyedGaussian {
        KeyedGaussian::new(self.seed)
    }

    /// Increments `ΔW` for one step: `n_particles` rows of `n_modes` entries,
    /// each `N(0, dt)`.
    pub fn wiener_increments(&self, step: usize) -> Result<Vec<Vec<f64>>> {
        if step >= self.n_steps {
            return Err(Error::OutOfRange {
                what: "step",
                value: step as f64,
                rule: "0 <= step < n_t",
            });
        }
        let gen = self.generator();
        let sd = self.dt.sqrt();
        Ok((0..self.n_particles)
            .map(|i| {
                (0..self.n_modes)
                    .map(|k| sd * gen.normal(Stream::Wiener, i as u32, step as u32, k as u32))
                    .collect()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answer() {
        // Random123 known-answer vectors for philox4x32-10
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([u32::MAX; 4], [u32::MAX; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x24126ea1]
        );
    }

    #[test]
    fn deterministic() {
        let plan = NoisePlan::new(7, 4, 3, 10, 1.0).unwrap();
        assert_eq!(plan.wiener_increments(3).unwrap(), plan.wiener_increments(3).unwrap());
        assert!(plan.wiener_increments(10).is_err());
    }

    #[test]
    fn refinement_keeps_existing_keys() {
        let small = NoisePlan::new(11, 2, 3, 5, 1.0).unwrap();
        let big = NoisePlan::new(11, 5, 6, 5, 1.0).unwrap();
        let a = small.wiener_increments(2).unwrap();
        let b = big.wiener_increments(2).unwrap();
        for i in 0..2 {
            assert_eq!(a[i][..], b[i][..3]);
        }
    }

    #[test]
    fn halving_dt_scales_by_inverse_sqrt2() {
        let coarse = NoisePlan::new(5, 3, 4, 10, 1.0).unwrap();
        let fine = NoisePlan::new(5, 3, 4, 20, 1.0).unwrap();
        let a = coarse.wiener_increments(4).unwrap();
        let b = fine.wiener_increments(4).unwrap();
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((y - x / 2f64.sqrt()).abs() <= 1e-15 * x.abs().max(1.0));
            }
        }
    }

    #[test]
    fn uniform_stays_open() {
        let g = KeyedGaussian::new(0);
        for i in 0..1000 {
            let u = g.uniform(Stream::Probe, i, 0, 0);
            assert!(u > 0.0 && u < 1.0);
        }
    }
}
