use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelParams, RelayParams, MIN_CALIBRATION_SAMPLES};
use crate::dsp::{PilotSpec, RrcSpec, LOWPASS_CUTOFF_HZ};
use crate::error::{Error, Result};
use crate::postprocess::{EbModel, EfficiencyModel, RateSettings, Reference};

/// Flat run configuration. Every field has a default; unknown keys are
/// rejected when parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// Modulation variances, SNU.
    pub v_a: f64,
    pub v_b: f64,
    /// Baud.
    pub symbol_rate: f64,
    /// Hz. Must be an integer multiple of `symbol_rate`.
    pub sample_rate: f64,
    pub n_symbols: usize,
    pub tau_a: f64,
    pub tau_b: f64,
    /// Channel excess noise referred to each channel input, SNU.
    pub xi_in_a: f64,
    pub xi_in_b: f64,
    pub eta: f64,
    /// Relay electronic noise, SNU per quadrature.
    pub nu_el: f64,
    /// Beamsplitter transmittance minus 1/2.
    pub imbalance: f64,
    /// Detector variance per SNU in raw units.
    pub raw_gain: f64,
    /// Residual phase noise on Bob's channel, rad.
    pub phase_sigma: f64,
    /// Correlation length of the residual phase, symbols.
    pub phase_corr_len: f64,
    pub phase_mean_a: f64,
    pub phase_mean_b: f64,
    pub pilot_freq: f64,
    pub pilot_amplitude_ratio: f64,
    pub rrc_roll_off: f64,
    pub rrc_span_symbols: usize,
    pub lowpass_cutoff: f64,
    /// Relay output latency in samples, waveform mode.
    pub relay_delay: usize,
    pub max_delay: usize,
    /// Symbols per phase-alignment block; 0 aligns whole frames.
    pub align_block: usize,
    pub epsilon_pe: f64,
    pub beta_ir: f64,
    pub fer: f64,
    /// Coefficient of the optional finite-size correction; 0 disables it.
    pub delta_coeff: f64,
    pub efficiency: EfficiencyModel,
    pub reference: Reference,
    /// Samples per frame; a frame carries `frame_samples / sps` symbols.
    pub frame_samples: usize,
    pub calibration_samples: usize,
    pub seed: u64,
}

/// Relay-input excess noise of the reference configuration, SNU.
pub const REFERENCE_RELAY_EXCESS: f64 = 0.0395;

impl Default for ProtocolConfig {
    fn default() -> Self {
        let base = Self {
            v_a: 6.5,
            v_b: 6.5,
            symbol_rate: 20e6,
            sample_rate: 1e9,
            n_symbols: 4_000_000,
            tau_a: 1.0,
            tau_b: 0.56,
            xi_in_a: 0.0,
            xi_in_b: 0.0,
            eta: 0.94,
            nu_el: 0.0,
            imbalance: 0.0,
            raw_gain: 2.5e-3,
            phase_sigma: 0.06,
            phase_corr_len: 200.0,
            phase_mean_a: 0.4,
            phase_mean_b: -3.0,
            pilot_freq: 15e6,
            pilot_amplitude_ratio: 3.0,
            rrc_roll_off: 0.2,
            rrc_span_symbols: 20,
            lowpass_cutoff: LOWPASS_CUTOFF_HZ,
            relay_delay: 2471,
            max_delay: 10_000,
            align_block: 0,
            epsilon_pe: 1e-10,
            beta_ir: 0.97,
            fer: 0.0,
            delta_coeff: 0.0,
            efficiency: EfficiencyModel::Trusted,
            reference: Reference::Alice,
            frame_samples: 10_000_000,
            calibration_samples: 200_000_000,
            seed: 20_240_601,
        };
        base.with_relay_excess(REFERENCE_RELAY_EXCESS)
            .expect("reference configuration is feasible")
    }
}

impl ProtocolConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml_string().as_bytes()).into()
    }

    pub fn samples_per_symbol(&self) -> usize {
        (self.sample_rate / self.symbol_rate).round() as usize
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.frame_samples / self.samples_per_symbol()
    }

    /// Symbol count of every frame; the last one may be short.
    pub fn frame_sizes(&self) -> Vec<usize> {
        let per = self.symbols_per_frame();
        let mut sizes = vec![per; self.n_symbols / per];
        if !self.n_symbols.is_multiple_of(per) {
            sizes.push(self.n_symbols % per);
        }
        sizes
    }

    pub fn rrc(&self) -> RrcSpec {
        RrcSpec {
            roll_off: self.rrc_roll_off,
            span_symbols: self.rrc_span_symbols,
            samples_per_symbol: self.samples_per_symbol(),
        }
    }

    pub fn pilot(&self) -> PilotSpec {
        PilotSpec {
            freq: self.pilot_freq,
            amplitude_ratio: self.pilot_amplitude_ratio,
        }
    }

    pub fn channel_a(&self) -> ChannelParams {
        ChannelParams {
            tau: self.tau_a,
            xi_in: self.xi_in_a,
            phase_sigma: 0.0,
            phase_corr_len: self.phase_corr_len,
            phase_mean: self.phase_mean_a,
        }
    }

    pub fn channel_b(&self) -> ChannelParams {
        ChannelParams {
            tau: self.tau_b,
            xi_in: self.xi_in_b,
            phase_sigma: self.phase_sigma,
            phase_corr_len: self.phase_corr_len,
            phase_mean: self.phase_mean_b,
        }
    }

    pub fn relay(&self) -> RelayParams {
        RelayParams {
            eta: self.eta,
            nu_el: self.nu_el,
            imbalance: self.imbalance,
            raw_gain: self.raw_gain,
        }
    }

    pub fn rate_settings(&self) -> RateSettings {
        RateSettings {
            beta_ir: self.beta_ir,
            symbol_rate: self.symbol_rate,
            fer: self.fer,
            delta_coeff: self.delta_coeff,
            reference: self.reference,
        }
    }

    /// Excess noise from Bob's residual phase once each frame is aligned:
    /// the coherent part of his signal shrinks by `exp(-sigma^2)` in power.
    pub fn phase_excess(&self) -> f64 {
        self.tau_b * self.v_b * (1.0 - (-self.phase_sigma * self.phase_sigma).exp())
    }

    /// Excess noise the relay sees, referred to its input, SNU.
    pub fn relay_excess(&self) -> f64 {
        self.tau_a * self.xi_in_a + self.tau_b * self.xi_in_b + 2.0 * self.nu_el / self.eta + self.phase_excess()
    }

    /// Sets `nu_el` so that `relay_excess()` equals `xi_relay`.
    pub fn with_relay_excess(mut self, xi_relay: f64) -> Result<Self> {
        let rest = self.tau_a * self.xi_in_a + self.tau_b * self.xi_in_b + self.phase_excess();
        let nu = 0.5 * self.eta * (xi_relay - rest);
        if nu < 0.0 {
            return Err(Error::config(format!(
                "relay excess {xi_relay} is below the {rest} already set by channel and phase noise"
            )));
        }
        self.nu_el = nu;
        Ok(self)
    }

    /// Key-rate model at the configured truth.
    pub fn eb_model(&self) -> Result<EbModel> {
        EbModel::from_relay_excess(
            self.v_a,
            self.v_b,
            self.tau_a,
            self.tau_b,
            self.eta,
            self.relay_excess(),
            self.efficiency,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::config(e.to_string());
        for (name, v) in [("v_a", self.v_a), ("v_b", self.v_b)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.symbol_rate > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config("symbol and sample rates must be > 0"));
        }
        let ratio = self.sample_rate / self.symbol_rate;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 2.0 {
            return Err(Error::config(format!(
                "sample_rate / symbol_rate must be an integer >= 2, got {ratio}"
            )));
        }
        self.channel_a().validate().map_err(wrap)?;
        self.channel_b().validate().map_err(wrap)?;
        self.relay().validate().map_err(wrap)?;
        self.rrc().validate()?;
        self.pilot().validate(&self.rrc(), self.sample_rate)?;
        let edge = self.rrc().band_edge(self.sample_rate);
        if !(self.lowpass_cutoff > edge && self.lowpass_cutoff < self.pilot_freq.abs()) {
            return Err(Error::config(format!(
                "lowpass cutoff {} Hz must lie between the band edge {edge} Hz and the pilot",
                self.lowpass_cutoff
            )));
        }
        if self.symbols_per_frame() == 0 {
            return Err(Error::config("frame_samples is shorter than one symbol"));
        }
        if self.calibration_samples < MIN_CALIBRATION_SAMPLES {
            return Err(Error::config(format!(
                "calibration_samples must be >= {MIN_CALIBRATION_SAMPLES}"
            )));
        }
        if !(self.epsilon_pe > 0.0 && self.epsilon_pe < 0.5) {
            return Err(Error::config(format!("epsilon_pe must lie in (0, 0.5), got {}", self.epsilon_pe)));
        }
        self.rate_settings().validate().map_err(wrap)?;
        Ok(())
    }
}
