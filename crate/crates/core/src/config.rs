//! System parameters, the path-loss law and configuration loading.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Converts decibels to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Physical and simulation parameters of one scenario. All quantities are
/// linear (watts, metres, plain ratios).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// STAR-RIS element count.
    pub n: usize,
    /// Transmit antennas at the eavesdropper.
    pub n_t: usize,
    /// Receive antennas at the eavesdropper.
    pub n_r: usize,
    pub p_s: f64,
    pub p_e: f64,
    pub sigma_d2: f64,
    pub sigma_e2: f64,
    pub sigma_si2: f64,
    pub c0: f64,
    pub d0: f64,
    pub mu: f64,
    pub d_sd: f64,
    pub d_sr: f64,
    pub d_rd: f64,
    pub d_re: f64,
    pub seed: u64,
}

impl Default for SystemConfig {
    /// Reference values: unit noise, `rho_s = rho_e = 10 dB`, `C0 = -30 dB`
    /// at `D0 = 1 m`, path-loss exponent 3.6, and a geometry with the surface
    /// midway between the eavesdropper and the suspicious pair.
    fn default() -> Self {
        SystemConfig {
            n: 8,
            n_t: 4,
            n_r: 4,
            p_s: 10.0,
            p_e: 10.0,
            sigma_d2: 1.0,
            sigma_e2: 1.0,
            sigma_si2: db_to_linear(-10.0),
            c0: db_to_linear(-30.0),
            d0: 1.0,
            mu: 3.6,
            d_sd: 80.0,
            d_sr: 40.0,
            d_rd: 40.0,
            d_re: 40.0,
            seed: 1,
        }
    }
}

/// Large-scale gains of the four fading links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGains {
    pub sd: f64,
    pub sr: f64,
    pub rd: f64,
    pub re: f64,
}

impl SystemConfig {
    /// Short-range calibration used by the sweeps and the demo.
    ///
    /// With the reference values every link gain is below `1e-8` and all
    /// schemes sit at `P_NOP = 0`. This preset keeps the path-loss law and
    /// noise normalization, with a 0 dB reference gain and metre-scale links.
    pub fn desk() -> Self {
        SystemConfig {
            c0: db_to_linear(0.0),
            d_sd: 1.0,
            d_sr: 2.0,
            d_rd: 2.0,
            d_re: 3.0,
            ..SystemConfig::default()
        }
    }

    pub fn rho_s(&self) -> f64 {
        self.p_s / self.sigma_d2
    }

    pub fn rho_e(&self) -> f64 {
        self.p_e / self.sigma_e2
    }

    /// Sets `P_E` from a jamming SNR in dB.
    pub fn set_rho_e_db(&mut self, db: f64) {
        self.p_e = db_to_linear(db) * self.sigma_e2;
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [("n", self.n), ("n_t", self.n_t), ("n_r", self.n_r)];
        for (field, v) in counts {
            if v == 0 {
                return Err(CoreError::InvalidConfig {
                    field,
                    reason: "must be at least 1".into(),
                });
            }
        }
        let positive = [
            ("p_s", self.p_s),
            ("sigma_d2", self.sigma_d2),
            ("sigma_e2", self.sigma_e2),
            ("c0", self.c0),
            ("d0", self.d0),
            ("mu", self.mu),
            ("d_sd", self.d_sd),
            ("d_sr", self.d_sr),
            ("d_rd", self.d_rd),
            ("d_re", self.d_re),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidConfig {
                    field,
                    reason: format!("must be positive and finite, got {v}"),
                });
            }
        }
        // Zero jamming power and zero self-interference are meaningful limits.
        for (field, v) in [("p_e", self.p_e), ("sigma_si2", self.sigma_si2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidConfig {
                    field,
                    reason: format!("must be non-negative and finite, got {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn gains(&self) -> Result<LinkGains> {
        Ok(LinkGains {
            sd: pathloss_gain(self.d_sd, self)?,
            sr: pathloss_gain(self.d_sr, self)?,
            rd: pathloss_gain(self.d_rd, self)?,
            re: pathloss_gain(self.d_re, self)?,
        })
    }
}

/// Large-scale gain `C0 (d / D0)^(-mu)` at distance `d` metres.
pub fn pathloss_gain(d: f64, cfg: &SystemConfig) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(CoreError::InvalidConfig {
            field: "distance",
            reason: format!("must be positive, got {d}"),
        });
    }
    Ok(cfg.c0 * (d / cfg.d0).powf(-cfg.mu))
}

/// Parses a TOML configuration; absent keys take the values of `base`.
pub fn parse_config(text: &str, base: &SystemConfig) -> Result<SystemConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CoreError::Parse(e.to_string()))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| CoreError::Parse(e.to_string()))?;
    for (k, v) in table {
        merged.insert(k, v);
    }
    let cfg: SystemConfig = merged
        .try_into()
        .map_err(|e: toml::de::Error| CoreError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a TOML configuration file.
pub fn load_config(path: &Path, base: &SystemConfig) -> Result<SystemConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text, base)
}
