//! Random channel realizations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::SystemConfig;
use crate::error::{CoreError, Result};

/// Independent random stream purposes within one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamPurpose {
    Channels = 0,
    Init = 1,
    Randomization = 2,
}

/// Deterministic RNG for a `(seed, trial, purpose)` triple. Streams for
/// different triples are independent.
pub fn trial_rng(seed: u64, trial: u64, purpose: StreamPurpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

/// One realization of every complex link.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct source to suspicious receiver.
    pub h_sd: Complex64,
    /// Source to surface, length `N`.
    pub h_sr: DVector<Complex64>,
    /// Surface to suspicious receiver, length `N`.
    pub h_rd: DVector<Complex64>,
    /// Surface to eavesdropper receive array, `N_R x N`.
    pub h_re: DMatrix<Complex64>,
    /// Eavesdropper transmit array to surface, `N x N_T`.
    pub h_er: DMatrix<Complex64>,
    /// Self-interference, `N_R x N_T`.
    pub h_ee: DMatrix<Complex64>,
}

impl ChannelSet {
    pub fn n(&self) -> usize {
        self.h_sr.len()
    }

    pub fn n_t(&self) -> usize {
        self.h_ee.ncols()
    }

    pub fn n_r(&self) -> usize {
        self.h_ee.nrows()
    }

    /// Checks that all dimensions agree and every entry is finite.
    pub fn validate(&self) -> Result<()> {
        let (n, n_t, n_r) = (self.n(), self.n_t(), self.n_r());
        let dims = [
            ("h_rd", n, self.h_rd.len()),
            ("h_re rows", n_r, self.h_re.nrows()),
            ("h_re cols", n, self.h_re.ncols()),
            ("h_er rows", n, self.h_er.nrows()),
            ("h_er cols", n_t, self.h_er.ncols()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(CoreError::Dimension {
                    what,
                    expected,
                    found,
                });
            }
        }
        let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
        let all_finite = finite(&self.h_sd)
            && self.h_sr.iter().all(finite)
            && self.h_rd.iter().all(finite)
            && self.h_re.iter().all(finite)
            && self.h_er.iter().all(finite)
            && self.h_ee.iter().all(finite);
        if !all_finite {
            return Err(CoreError::InvalidConfig {
                field: "channels",
                reason: "non-finite entry".into(),
            });
        }
        Ok(())
    }
}

fn cn<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (scale * std::f64::consts::FRAC_1_SQRT_2)
}

/// Draws one realization: each link is `sqrt(gain)` times i.i.d. `CN(0, 1)`
/// entries and the self-interference entries are `CN(0, sigma_si2)`.
///
/// The draw order is fixed and every entry is drawn at unit variance before
/// scaling, so two configurations that differ only in gains or `sigma_si2`
/// see the same underlying fading.
pub fn sample_channels<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Result<ChannelSet> {
    cfg.validate()?;
    let g = cfg.gains()?;
    let (n, n_t, n_r) = (cfg.n, cfg.n_t, cfg.n_r);
    let h_sd = cn(rng, g.sd.sqrt());
    let h_sr = DVector::from_fn(n, |_, _| cn(rng, g.sr.sqrt()));
    let h_rd = DVector::from_fn(n, |_, _| cn(rng, g.rd.sqrt()));
    let h_re = DMatrix::from_fn(n_r, n, |_, _| cn(rng, g.re.sqrt()));
    let h_er = DMatrix::from_fn(n, n_t, |_, _| cn(rng, g.re.sqrt()));
    let h_ee = DMatrix::from_fn(n_r, n_t, |_, _| cn(rng, cfg.sigma_si2.sqrt()));
    Ok(ChannelSet {
        h_sd,
        h_sr,
        h_rd,
        h_re,
        h_er,
        h_ee,
    })
}

/// Channels of trial `trial` under the configuration's seed.
pub fn trial_channels(cfg: &SystemConfig, trial: u64) -> Result<ChannelSet> {
    let mut rng = trial_rng(cfg.seed, trial, StreamPurpose::Channels);
    sample_channels(cfg, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_channels() {
        let cfg = SystemConfig::default();
        let a = trial_channels(&cfg, 5).unwrap();
        let b = trial_channels(&cfg, 5).unwrap();
        assert_eq!(a, b);
        let c = trial_channels(&cfg, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_si_gives_zero_matrix() {
        let cfg = SystemConfig {
            sigma_si2: 0.0,
            ..SystemConfig::default()
        };
        let ch = trial_channels(&cfg, 0).unwrap();
        assert!(ch.h_ee.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn dimensions_follow_config() {
        let cfg = SystemConfig {
            n: 3,
            n_t: 2,
            n_r: 5,
            ..SystemConfig::default()
        };
        let ch = trial_channels(&cfg, 1).unwrap();
        ch.validate().unwrap();
        assert_eq!((ch.n(), ch.n_t(), ch.n_r()), (3, 2, 5));
        assert_eq!(ch.h_er.shape(), (3, 2));
        assert_eq!(ch.h_re.shape(), (5, 3));
    }

    #[test]
    fn gains_only_rescale_fading() {
        let a = SystemConfig::default();
        let b = SystemConfig {
            sigma_si2: 4.0 * a.sigma_si2,
            ..a.clone()
        };
        let ca = trial_channels(&a, 3).unwrap();
        let cb = trial_channels(&b, 3).unwrap();
        assert_eq!(ca.h_sr, cb.h_sr);
        assert!((ca.h_ee.clone() * Complex64::new(2.0, 0.0) - cb.h_ee).norm() < 1e-12);
    }
}
