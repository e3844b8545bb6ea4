use serde::{Deserialize, Serialize};

use super::estimation::EstimationResult;
use crate::error::{Error, Result};
use crate::gaussian::{
    add_noise, apply_beamsplitter, apply_loss_noise, condition_on_heterodyne, condition_on_homodyne, tmsv_cm,
    von_neumann_entropy, CovMatrix, Quadrature,
};

/// Whether the relay detector efficiency is characterized by the parties.
///
/// `Trusted` models the loss with vacuum ancillas that stay outside Eve's
/// purification. `Untrusted` hands the loss to Eve, which is equivalent to
/// folding `eta` into the channel transmissivities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfficiencyModel {
    #[default]
    Trusted,
    Untrusted,
}

/// Whose heterodyne outcome is the key reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reference {
    /// Bob infers Alice's variable.
    #[default]
    Alice,
    Bob,
}

impl Reference {
    fn modes(self) -> (usize, usize) {
        match self {
            Reference::Alice => (0, 1),
            Reference::Bob => (1, 0),
        }
    }
}

/// Entanglement-based picture of one relay use.
///
/// Each sender holds a TMSV with `mu = v + 1` and sends one mode through a
/// thermal-loss channel. The relay has efficiency `eta`, adds untrusted
/// detector noise `nu_el`, interferes the two modes on a balanced
/// beamsplitter and homodynes x on one port and p on the other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbModel {
    pub v_a: f64,
    pub v_b: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub xi_in_a: f64,
    pub xi_in_b: f64,
    pub eta: f64,
    pub nu_el: f64,
    #[serde(default)]
    pub efficiency: EfficiencyModel,
}

impl EbModel {
    /// Model whose relay output shows `xi_relay` of excess noise referred
    /// to the relay input.
    ///
    /// The noise is placed at the detectors as `nu_el = (eta / 2) xi_relay`.
    /// Negative estimates are floored at zero.
    pub fn from_relay_excess(
        v_a: f64,
        v_b: f64,
        tau_a: f64,
        tau_b: f64,
        eta: f64,
        xi_relay: f64,
        efficiency: EfficiencyModel,
    ) -> Result<Self> {
        let m = Self {
            v_a,
            v_b,
            tau_a,
            tau_b,
            xi_in_a: 0.0,
            xi_in_b: 0.0,
            eta,
            nu_el: 0.5 * eta * xi_relay.max(0.0),
            efficiency,
        };
        m.validate()?;
        Ok(m)
    }

    /// Same modulation and relay as `self`, channel taken from estimates.
    ///
    /// Transmissivities are capped at 1: the model has no amplifying channel.
    pub fn with_channel(&self, tau_a: f64, tau_b: f64, xi_relay: f64) -> Result<Self> {
        Self::from_relay_excess(
            self.v_a,
            self.v_b,
            tau_a.min(1.0),
            tau_b.min(1.0),
            self.eta,
            xi_relay,
            self.efficiency,
        )
    }

    /// Excess noise at the relay input implied by the model.
    pub fn relay_excess(&self) -> f64 {
        self.tau_a * self.xi_in_a + self.tau_b * self.xi_in_b + 2.0 * self.nu_el / self.eta
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_a", self.v_a), ("v_b", self.v_b), ("xi_in_a", self.xi_in_a), ("xi_in_b", self.xi_in_b), ("nu_el", self.nu_el)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        for (name, v) in [("tau_a", self.tau_a), ("tau_b", self.tau_b), ("eta", self.eta)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(format!("{name} must lie in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Conditional state after the relay announces its outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EbState {
    /// Modes `(a, b)` retained by Alice and Bob, then any trusted ancillas.
    pub full: CovMatrix,
    /// The `(a, b)` block.
    pub ab: CovMatrix,
}

// Mode layout before measurement: a, A, b, B, then the trusted loss
// ancillas F (for A) and G (for B).
const A: usize = 1;
const B: usize = 3;

pub fn build_eb_cm(model: &EbModel) -> Result<EbState> {
    model.validate()?;
    let mut cm = tmsv_cm(model.v_a + 1.0)?.direct_sum(&tmsv_cm(model.v_b + 1.0)?);
    cm = apply_loss_noise(&cm, A, model.tau_a, model.xi_in_a)?;
    cm = apply_loss_noise(&cm, B, model.tau_b, model.xi_in_b)?;
    match model.efficiency {
        EfficiencyModel::Trusted => {
            cm = cm.direct_sum(&CovMatrix::vacuum(2));
            cm = apply_beamsplitter(&cm, A, 4, model.eta)?;
            cm = apply_beamsplitter(&cm, B, 5, model.eta)?;
        }
        EfficiencyModel::Untrusted => {
            cm = apply_loss_noise(&cm, A, model.eta, 0.0)?;
            cm = apply_loss_noise(&cm, B, model.eta, 0.0)?;
        }
    }
    cm = add_noise(&cm, A, model.nu_el)?;
    cm = add_noise(&cm, B, model.nu_el)?;
    // Port A becomes (A + B)/sqrt2 and port B becomes (B - A)/sqrt2.
    cm = apply_beamsplitter(&cm, A, B, 0.5)?;
    cm = condition_on_homodyne(&cm, B, Quadrature::X)?;
    cm = condition_on_homodyne(&cm, A, Quadrature::P)?;
    cm.validate_physical().map_err(|e| e.in_stage("conditional state"))?;
    let ab = cm.reduce(&[0, 1])?;
    Ok(EbState { full: cm, ab })
}

fn check_two_parties(cm: &CovMatrix) -> Result<()> {
    if cm.n_modes() < 2 {
        return Err(Error::domain("conditional state needs Alice's and Bob's modes"));
    }
    cm.validate_physical()
}

/// Shannon information between Alice's and Bob's heterodyne outcomes on the
/// `(a, b)` modes of `cm`, bits per use.
///
/// Per quadrature `1/2 log2((V_a + 1) / (V_{a|b} + 1))`, where `V_{a|b}` is
/// Alice's variance conditioned on Bob's heterodyne. The `+ 1` is the
/// vacuum added by Alice's own heterodyne.
pub fn mutual_information(cm: &CovMatrix) -> Result<f64> {
    check_two_parties(cm)?;
    let ab = cm.reduce(&[0, 1])?;
    let cond = condition_on_heterodyne(&ab, 1)?;
    let info = (0..2)
        .map(|q| 0.5 * ((ab.get(q, q) + 1.0) / (cond.get(q, q) + 1.0)).log2())
        .sum::<f64>();
    Ok(info.max(0.0))
}

/// Holevo information between the reference party's outcome and Eve, who
/// purifies every mode of `cm`.
///
/// `S(cm) - S(cm | heterodyne of the reference mode)`. Modes beyond the
/// first two are trusted ancillas and stay out of Eve's reach.
pub fn holevo_bound(cm: &CovMatrix, reference: Reference) -> Result<f64> {
    check_two_parties(cm)?;
    let (r, _) = reference.modes();
    let s = von_neumann_entropy(cm)?;
    let s_cond = von_neumann_entropy(&condition_on_heterodyne(cm, r)?)?;
    Ok((s - s_cond).max(0.0))
}

/// Reconciliation and accounting parameters for key-rate reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSettings {
    pub beta_ir: f64,
    /// Symbols per second.
    pub symbol_rate: f64,
    /// Fraction of frames that fail reconciliation and are disclosed.
    pub fer: f64,
    /// Coefficient `c` of the optional finite-size term
    /// `c sqrt(log2(2 / eps) / n)`. Zero disables it.
    pub delta_coeff: f64,
    pub reference: Reference,
}

impl Default for RateSettings {
    fn default() -> Self {
        Self {
            beta_ir: 0.97,
            symbol_rate: 20e6,
            fer: 0.0,
            delta_coeff: 0.0,
            reference: Reference::Alice,
        }
    }
}

impl RateSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_ir > 0.0 && self.beta_ir <= 1.0) {
            return Err(Error::domain(format!("IR efficiency must lie in (0, 1], got {}", self.beta_ir)));
        }
        if !(self.symbol_rate > 0.0) || !self.symbol_rate.is_finite() {
            return Err(Error::domain("symbol rate must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.fer) {
            return Err(Error::domain(format!("frame error rate must lie in [0, 1], got {}", self.fer)));
        }
        if !(self.delta_coeff >= 0.0) || !self.delta_coeff.is_finite() {
            return Err(Error::domain("finite-size coefficient must be >= 0"));
        }
        Ok(())
    }
}

/// Key-rate figures. Rates are bits per relay use; `*_signed` keep the
/// value before clamping at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub i_ab: f64,
    /// Holevo bound at the point estimates.
    pub chi_asym: f64,
    /// Holevo bound used for the finite-size rate.
    pub chi: f64,
    pub rate_asym: f64,
    pub rate_asym_signed: f64,
    pub rate_finite: f64,
    pub rate_finite_signed: f64,
    /// Finite-size correction subtracted from the rate.
    pub delta: f64,
    /// `rate_finite * symbol_rate * (1 - fer)`, bits per second.
    pub throughput: f64,
    pub fer: f64,
    pub beta_ir: f64,
    pub symbol_rate: f64,
}

impl KeyRateReport {
    pub fn clamped(&self) -> bool {
        self.rate_finite_signed < 0.0
    }
}

fn info_terms(model: &EbModel, reference: Reference) -> Result<(f64, f64)> {
    let state = build_eb_cm(model)?;
    let i_ab = match reference {
        Reference::Alice => mutual_information(&state.ab)?,
        Reference::Bob => mutual_information(&swap_parties(&state.ab)?)?,
    };
    Ok((i_ab, holevo_bound(&state.full, reference)?))
}

fn swap_parties(ab: &CovMatrix) -> Result<CovMatrix> {
    ab.reduce(&[1, 0])
}

/// `beta I_AB - chi` at the model's parameters, with no finite-size terms.
pub fn rate_asymptotic(model: &EbModel, settings: &RateSettings) -> Result<KeyRateReport> {
    settings.validate()?;
    let (i_ab, chi) = info_terms(model, settings.reference)?;
    let signed = settings.beta_ir * i_ab - chi;
    let rate = signed.max(0.0);
    Ok(KeyRateReport {
        i_ab,
        chi_asym: chi,
        chi,
        rate_asym: rate,
        rate_asym_signed: signed,
        rate_finite: rate,
        rate_finite_signed: signed,
        delta: 0.0,
        throughput: rate * settings.symbol_rate * (1.0 - settings.fer),
        fer: settings.fer,
        beta_ir: settings.beta_ir,
        symbol_rate: settings.symbol_rate,
    })
}

pub const MIN_BLOCK: usize = 1000;

/// Rate with `I_AB` at the point estimates and `chi` at the worst-case
/// channel, minus the optional correction term.
///
/// `model` supplies modulation and relay settings; its channel fields are
/// replaced by the estimates. Disclosed frames reduce only the throughput.
pub fn rate_finite(
    model: &EbModel,
    est: &EstimationResult,
    n_block: usize,
    settings: &RateSettings,
) -> Result<KeyRateReport> {
    settings.validate()?;
    if n_block < MIN_BLOCK {
        return Err(Error::domain(format!("block size must be >= {MIN_BLOCK}, got {n_block}")));
    }
    let wc = est
        .worst_case
        .ok_or_else(|| Error::domain("finite-size rate needs worst-case bounds"))?;
    let point = model.with_channel(est.tau_a_hat, est.tau_b_hat, est.xi_hat_relay)?;
    let worst = model.with_channel(wc.tau_a_wc, wc.tau_wc, wc.xi_wc)?;
    let (i_ab, chi_asym) = info_terms(&point, settings.reference)?;
    let (_, chi) = info_terms(&worst, settings.reference)?;
    let delta = settings.delta_coeff * ((2.0 / wc.epsilon_pe).log2() / n_block as f64).sqrt();
    let asym = settings.beta_ir * i_ab - chi_asym;
    let signed = settings.beta_ir * i_ab - chi - delta;
    let rate = signed.max(0.0);
    Ok(KeyRateReport {
        i_ab,
        chi_asym,
        chi,
        rate_asym: asym.max(0.0),
        rate_asym_signed: asym,
        rate_finite: rate,
        rate_finite_signed: signed,
        delta,
        throughput: rate * settings.symbol_rate * (1.0 - settings.fer),
        fer: settings.fer,
        beta_ir: settings.beta_ir,
        symbol_rate: settings.symbol_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::symplectic_eigenvalues;
    use nalgebra::DMatrix;

    fn reference_model(xi: f64) -> EbModel {
        EbModel::from_relay_excess(6.5, 6.5, 1.0, 0.56, 0.94, xi, EfficiencyModel::Trusted).unwrap()
    }

    #[test]
    fn no_modulation_gives_vacuum_and_no_information() {
        let m = EbModel::from_relay_excess(0.0, 0.0, 1.0, 0.56, 0.94, 0.0, EfficiencyModel::Trusted).unwrap();
        let s = build_eb_cm(&m).unwrap();
        assert!((s.ab.matrix() - DMatrix::identity(4, 4)).amax() < 1e-12);
        assert!(mutual_information(&s.ab).unwrap().abs() < 1e-12);
        assert!(holevo_bound(&s.full, Reference::Alice).unwrap().abs() < 1e-9);
    }

    #[test]
    fn ideal_conditional_state_pattern() {
        let m = EbModel::from_relay_excess(6.5, 6.5, 1.0, 1.0, 1.0, 0.0, EfficiencyModel::Trusted).unwrap();
        let s = build_eb_cm(&m).unwrap();
        let (cx, cp) = (s.ab.get(0, 2), s.ab.get(1, 3));
        assert!(cx.abs() > 1.0);
        assert!((cx + cp).abs() < 1e-9, "{cx} {cp}");
        assert!(symplectic_eigenvalues(&s.ab).unwrap().iter().all(|v| *v >= 1.0 - 1e-9));
        // Closed form: conditioning a TMSV pair on x_B - x_A and p_A + p_B.
        let mu = 7.5f64;
        let c = (mu * mu - 1.0).sqrt();
        let v = mu - c * c / (2.0 * mu);
        let w = c * c / (2.0 * mu);
        assert!((s.ab.get(0, 0) - v).abs() < 1e-9);
        assert!((cx - w).abs() < 1e-9);
        // The ideal relay leaves a pure state.
        assert!(holevo_bound(&s.full, Reference::Alice).unwrap().abs() < 1e-6);
        let r = rate_asymptotic(&m, &RateSettings { beta_ir: 1.0, ..Default::default() }).unwrap();
        assert!(r.rate_asym > 0.0);
    }

    #[test]
    fn mutual_information_from_correlation() {
        // Heterodyne outcome covariance is CM + I; build CM so that its
        // per-quadrature correlation is 0.6.
        let s = 11.0;
        let c = 0.6 * s;
        let mut m = DMatrix::identity(4, 4) * (s - 1.0);
        m[(0, 2)] = c;
        m[(2, 0)] = c;
        m[(1, 3)] = -c;
        m[(3, 1)] = -c;
        let cm = CovMatrix::new(m).unwrap();
        let expected = 2.0 * 0.5 * (1.0f64 / (1.0 - 0.36)).log2();
        assert!((mutual_information(&cm).unwrap() - expected).abs() < 1e-12);
        assert!((0.5 * (1.0f64 / 0.64).log2() - 0.3219).abs() < 1e-4);
        let product = CovMatrix::thermal(5.0).unwrap().direct_sum(&CovMatrix::thermal(3.0).unwrap());
        assert!(mutual_information(&product).unwrap().abs() < 1e-15);
    }

    #[test]
    fn table_one_rate() {
        let r = rate_asymptotic(&reference_model(0.0395), &RateSettings::default()).unwrap();
        assert!((r.i_ab - 0.9162).abs() < 5e-4, "{}", r.i_ab);
        assert!((r.chi - 0.7177).abs() < 5e-4, "{}", r.chi);
        assert!(r.rate_asym >= 0.152);
        let noisy = rate_asymptotic(&reference_model(0.2), &RateSettings::default()).unwrap();
        assert!(noisy.rate_asym_signed < 0.0 && noisy.rate_asym == 0.0 && noisy.clamped());
    }

    #[test]
    fn chi_is_continuous() {
        let base = build_eb_cm(&reference_model(0.0395)).unwrap();
        let bumped = build_eb_cm(&reference_model(0.0395 + 1e-6)).unwrap();
        let a = holevo_bound(&base.full, Reference::Alice).unwrap();
        let b = holevo_bound(&bumped.full, Reference::Alice).unwrap();
        assert!((a - b).abs() < 1e-4);
        assert!(b >= a - 1e-12);
    }

    #[test]
    fn pure_state_chi_is_conditional_term() {
        let cm = crate::gaussian::tmsv_cm(4.0).unwrap();
        let chi = holevo_bound(&cm, Reference::Alice).unwrap();
        let cond = von_neumann_entropy(&condition_on_heterodyne(&cm, 0).unwrap()).unwrap();
        assert!(chi.abs() < 1e-9 && cond.abs() < 1e-9);
    }

    #[test]
    fn untrusted_efficiency_is_worse() {
        let mut m = reference_model(0.0395);
        let trusted = rate_asymptotic(&m, &RateSettings::default()).unwrap();
        m.efficiency = EfficiencyModel::Untrusted;
        let untrusted = rate_asymptotic(&m, &RateSettings::default()).unwrap();
        assert!(untrusted.rate_asym_signed < trusted.rate_asym_signed);
    }

    #[test]
    fn settings_and_model_validation() {
        assert!(RateSettings { beta_ir: 0.0, ..Default::default() }.validate().is_err());
        assert!(RateSettings { fer: 1.5, ..Default::default() }.validate().is_err());
        assert!(EbModel::from_relay_excess(6.5, 6.5, 1.2, 0.5, 0.9, 0.0, EfficiencyModel::Trusted).is_err());
        assert!(EbModel::from_relay_excess(-1.0, 6.5, 1.0, 0.5, 0.9, 0.0, EfficiencyModel::Trusted).is_err());
        assert!((reference_model(0.0395).relay_excess() - 0.0395).abs() < 1e-15);
    }
}
