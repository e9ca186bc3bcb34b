//! Surface coefficients, beamformer pairs and the exact link metrics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::error::{CoreError, Result};

pub const UNIT_TOL: f64 = 1e-9;

/// Transmission and reflection coefficients of every surface element.
#[derive(Debug, Clone, PartialEq)]
pub struct StarCoefficients {
    u_t: DVector<Complex64>,
    u_r: DVector<Complex64>,
}

impl StarCoefficients {
    /// Validates `|u_t[n]|^2 + |u_r[n]|^2 = 1` for every element.
    pub fn new(u_t: DVector<Complex64>, u_r: DVector<Complex64>) -> Result<Self> {
        if u_t.len() != u_r.len() {
            return Err(CoreError::Dimension {
                what: "reflection coefficients",
                expected: u_t.len(),
                found: u_r.len(),
            });
        }
        if u_t.is_empty() {
            return Err(CoreError::Empty("star coefficients"));
        }
        for (i, (a, b)) in u_t.iter().zip(u_r.iter()).enumerate() {
            let total = a.norm_sqr() + b.norm_sqr();
            if !total.is_finite() || (total - 1.0).abs() > UNIT_TOL {
                return Err(CoreError::EnergySplit { index: i, total });
            }
        }
        Ok(StarCoefficients { u_t, u_r })
    }

    /// Builds coefficients from transmission ratios and phases (radians).
    pub fn from_split(beta_t: &[f64], theta_t: &[f64], theta_r: &[f64]) -> Result<Self> {
        let n = beta_t.len();
        for (what, len) in [("theta_t", theta_t.len()), ("theta_r", theta_r.len())] {
            if len != n {
                return Err(CoreError::Dimension {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        if let Some(i) = beta_t.iter().position(|b| !(0.0..=1.0).contains(b)) {
            return Err(CoreError::EnergySplit {
                index: i,
                total: beta_t[i],
            });
        }
        let u_t = DVector::from_fn(n, |i, _| {
            Complex64::from_polar(beta_t[i].sqrt(), theta_t[i])
        });
        let u_r = DVector::from_fn(n, |i, _| {
            Complex64::from_polar((1.0 - beta_t[i]).sqrt(), theta_r[i])
        });
        Self::new(u_t, u_r)
    }

    /// Rescales arbitrary complex vectors so that each element pair has unit
    /// total energy, keeping phases. Elements where both entries vanish get an
    /// even split.
    pub fn normalized(mut u_t: DVector<Complex64>, mut u_r: DVector<Complex64>) -> Result<Self> {
        for i in 0..u_t.len().min(u_r.len()) {
            let total = (u_t[i].norm_sqr() + u_r[i].norm_sqr()).sqrt();
            if total > 0.0 && total.is_finite() {
                u_t[i] /= total;
                u_r[i] /= total;
            } else {
                u_t[i] = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                u_r[i] = u_t[i];
            }
        }
        Self::new(u_t, u_r)
    }

    pub fn n(&self) -> usize {
        self.u_t.len()
    }

    pub fn u_t(&self) -> &DVector<Complex64> {
        &self.u_t
    }

    pub fn u_r(&self) -> &DVector<Complex64> {
        &self.u_r
    }

    /// Per-element transmission ratios `|u_t[n]|^2`.
    pub fn beta_t(&self) -> Vec<f64> {
        self.u_t.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Replaces the per-element ratios by their mean, keeping all phases.
    pub fn uniform_beta(&self) -> Self {
        let n = self.n() as f64;
        let b = (self.beta_t().iter().sum::<f64>() / n).clamp(0.0, 1.0);
        let (st, sr) = (b.sqrt(), (1.0 - b).sqrt());
        let u_t = self.u_t.map(|z| Complex64::from_polar(st, z.arg()));
        let u_r = self.u_r.map(|z| Complex64::from_polar(sr, z.arg()));
        StarCoefficients { u_t, u_r }
    }

    /// Largest deviation of `|u_t|^2 + |u_r|^2` from one.
    pub fn energy_error(&self) -> f64 {
        self.u_t
            .iter()
            .zip(self.u_r.iter())
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Unit-norm transmit and receive beamformers at the eavesdropper.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPair {
    pub w_t: DVector<Complex64>,
    pub w_r: DVector<Complex64>,
}

impl BeamPair {
    pub fn new(w_t: DVector<Complex64>, w_r: DVector<Complex64>) -> Result<Self> {
        for (what, w) in [("w_t", &w_t), ("w_r", &w_r)] {
            let norm = w.norm();
            if !((norm - 1.0).abs() <= UNIT_TOL) {
                return Err(CoreError::NotUnitNorm { what, norm });
            }
        }
        Ok(BeamPair { w_t, w_r })
    }
}

/// Transmit powers and noise variances entering the SINRs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Powers {
    pub p_s: f64,
    pub p_e: f64,
    pub sigma_d2: f64,
    pub sigma_e2: f64,
}

impl Powers {
    pub fn from_config(cfg: &SystemConfig) -> Self {
        Powers {
            p_s: cfg.p_s,
            p_e: cfg.p_e,
            sigma_d2: cfg.sigma_d2,
            sigma_e2: cfg.sigma_e2,
        }
    }

    /// Jamming SNR `P_E / sigma_E^2`.
    pub fn rho_e(&self) -> f64 {
        self.p_e / self.sigma_e2
    }
}

fn check_star(ch: &ChannelSet, star: &StarCoefficients) -> Result<()> {
    if star.n() != ch.n() {
        return Err(CoreError::Dimension {
            what: "star coefficients",
            expected: ch.n(),
            found: star.n(),
        });
    }
    Ok(())
}

fn check_len(what: &'static str, v: &DVector<Complex64>, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(CoreError::Dimension {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// `H_RE diag(u) H_ER`.
pub(crate) fn cascade(ch: &ChannelSet, u: &DVector<Complex64>) -> DMatrix<Complex64> {
    let mut scaled = ch.h_er.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row *= u[i];
    }
    &ch.h_re * scaled
}

/// `U = H_EE + H_RE diag(u_r) H_ER`, the loop-back channel seen by the
/// eavesdropper's receiver.
pub fn effective_jamming_matrix(
    ch: &ChannelSet,
    star: &StarCoefficients,
) -> Result<DMatrix<Complex64>> {
    check_star(ch, star)?;
    Ok(&ch.h_ee + cascade(ch, star.u_r()))
}

/// `h_RD^H diag(u) x`.
pub(crate) fn rd_form(
    ch: &ChannelSet,
    u: &DVector<Complex64>,
    x: &DVector<Complex64>,
) -> Complex64 {
    ch.h_rd
        .iter()
        .zip(u.iter().zip(x.iter()))
        .map(|(h, (a, b))| h.conj() * a * b)
        .sum()
}

/// Combined direct and reflected source signal `h_SD + h_RD^H Theta_r h_SR`.
pub(crate) fn source_to_receiver(ch: &ChannelSet, star: &StarCoefficients) -> Complex64 {
    ch.h_sd + rd_form(ch, star.u_r(), &ch.h_sr)
}

/// Desired signal vector at the eavesdropper `H_RE Theta_t h_SR`.
pub(crate) fn source_to_eaves(ch: &ChannelSet, star: &StarCoefficients) -> DVector<Complex64> {
    &ch.h_re * star.u_t().component_mul(&ch.h_sr)
}

/// Jamming row `h_RD^H Theta_t H_ER` as a column vector of its conjugate,
/// i.e. the MRT direction before normalization.
pub(crate) fn jamming_direction(ch: &ChannelSet, star: &StarCoefficients) -> DVector<Complex64> {
    let g = star.u_t().map(|z| z.conj()).component_mul(&ch.h_rd);
    ch.h_er.adjoint() * g
}

/// The four squared magnitudes that make up both SINRs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkTerms {
    /// `|h_SD + h_RD^H Theta_r h_SR|^2`
    pub source_d: f64,
    /// `|h_RD^H Theta_t H_ER w_t|^2`
    pub jam_d: f64,
    /// `|w_r^H H_RE Theta_t h_SR|^2`
    pub source_e: f64,
    /// `|w_r^H U w_t|^2`
    pub jam_e: f64,
}

impl LinkTerms {
    pub fn evaluate(ch: &ChannelSet, star: &StarCoefficients, pair: &BeamPair) -> Result<Self> {
        check_star(ch, star)?;
        check_len("w_t", &pair.w_t, ch.n_t())?;
        check_len("w_r", &pair.w_r, ch.n_r())?;
        let source_d = source_to_receiver(ch, star).norm_sqr();
        let jam_d = rd_form(ch, star.u_t(), &(&ch.h_er * &pair.w_t)).norm_sqr();
        let source_e = pair.w_r.dotc(&source_to_eaves(ch, star)).norm_sqr();
        let u = effective_jamming_matrix(ch, star)?;
        let jam_e = pair.w_r.dotc(&(u * &pair.w_t)).norm_sqr();
        Ok(LinkTerms {
            source_d,
            jam_d,
            source_e,
            jam_e,
        })
    }

    pub fn sinr_d(&self, pw: &Powers) -> f64 {
        pw.p_s * self.source_d / (pw.p_e * self.jam_d + pw.sigma_d2)
    }

    pub fn sinr_e(&self, pw: &Powers) -> f64 {
        pw.p_s * self.source_e / (pw.p_e * self.jam_e + pw.sigma_e2)
    }

    /// `SINR_D / P_s - SINR_E / P_s`; smaller favours the eavesdropper.
    pub fn objective(&self, pw: &Powers) -> f64 {
        self.source_d / (pw.p_e * self.jam_d + pw.sigma_d2)
            - self.source_e / (pw.p_e * self.jam_e + pw.sigma_e2)
    }
}

/// SINR at the suspicious receiver.
pub fn sinr_d(
    ch: &ChannelSet,
    star: &StarCoefficients,
    w_t: &DVector<Complex64>,
    pw: &Powers,
) -> Result<f64> {
    check_star(ch, star)?;
    check_len("w_t", w_t, ch.n_t())?;
    let source = source_to_receiver(ch, star).norm_sqr();
    let jam = rd_form(ch, star.u_t(), &(&ch.h_er * w_t)).norm_sqr();
    Ok(pw.p_s * source / (pw.p_e * jam + pw.sigma_d2))
}

/// SINR at the eavesdropper.
pub fn sinr_e(
    ch: &ChannelSet,
    star: &StarCoefficients,
    pair: &BeamPair,
    pw: &Powers,
) -> Result<f64> {
    Ok(LinkTerms::evaluate(ch, star, pair)?.sinr_e(pw))
}

/// Successful interception indicator; ties count as success.
pub fn eaves_indicator(sinr_e: f64, sinr_d: f64) -> u8 {
    u8::from(sinr_e >= sinr_d)
}

/// Block-coordinate objective `(SINR_D - SINR_E) / P_s`. Smaller is better.
pub fn design_objective(
    ch: &ChannelSet,
    star: &StarCoefficients,
    pair: &BeamPair,
    pw: &Powers,
) -> Result<f64> {
    Ok(LinkTerms::evaluate(ch, star, pair)?.objective(pw))
}
