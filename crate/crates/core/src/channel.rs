//! Fading uplink with perfect phase pre-compensation.
//!
//! Only gain magnitudes are simulated. The server receives
//! `y = Σ |h_i| x_i + z` with `z ~ N(0, σ₀² I_k)`.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_sample, ModelVector, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Mean of the exponential gain distribution before truncation.
    pub gain_mean: f64,
    pub gain_lo: f64,
    pub gain_hi: f64,
    /// σ₀, standard deviation of the receiver noise per symbol.
    pub noise_std: f64,
    /// K, symbols a device can send per time slot.
    pub subcarriers: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            gain_mean: 0.02,
            gain_lo: 0.0001,
            gain_hi: 0.1,
            noise_std: 1.0,
            subcarriers: 600,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gain_lo > 0.0 && self.gain_lo <= self.gain_hi && self.gain_hi.is_finite()) {
            return Err(Error::config(format!(
                "channel.gain_lo/gain_hi must satisfy 0 < lo <= hi, got [{}, {}]",
                self.gain_lo, self.gain_hi
            )));
        }
        if !(self.gain_mean > 0.0) {
            return Err(Error::config("channel.gain_mean must be positive"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config("channel.noise_std must be nonnegative"));
        }
        if self.subcarriers == 0 {
            return Err(Error::config("channel.subcarriers must be positive"));
        }
        Ok(())
    }
}

/// Gains of the selected devices for one round, in cohort order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub devices: Vec<usize>,
    pub gains: Vec<f64>,
    pub noise_std: f64,
    pub subcarriers: usize,
}

impl ChannelRealization {
    pub fn min_gain(&self) -> f64 {
        self.gains.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Each device's gain is drawn from its own sub-stream, so the result does not
/// depend on cohort order.
pub fn draw_channel(selected: &[usize], params: &ChannelParams, stream: &RngStream) -> Result<ChannelRealization> {
    params.validate()?;
    let exp = Exp::new(1.0 / params.gain_mean).map_err(|e| Error::config(format!("channel.gain_mean: {e}")))?;
    let gains = selected
        .iter()
        .map(|&dev| {
            let g: f64 = exp.sample(&mut stream.child(dev as u64).rng());
            g.clamp(params.gain_lo, params.gain_hi)
        })
        .collect();
    Ok(ChannelRealization {
        devices: selected.to_vec(),
        gains,
        noise_std: params.noise_std,
        subcarriers: params.subcarriers,
    })
}

/// Noise-free superposition `Σ gains_i · signals_i`, summed in slice order.
pub fn superpose(signals: &[ModelVector], gains: &[f64]) -> Result<ModelVector> {
    if signals.len() != gains.len() {
        return Err(Error::Dimension {
            expected: signals.len(),
            got: gains.len(),
        });
    }
    let k = signals.first().map_or(0, ModelVector::len);
    let mut y = ModelVector::zeros(k);
    for (x, &g) in signals.iter().zip(gains) {
        x.check_len(k)?;
        if !(g > 0.0) {
            return Err(Error::domain(format!("channel gain must be positive, got {g}")));
        }
        y.axpy(g, x);
    }
    Ok(y)
}

/// Received signal `Σ gains_i · signals_i + z`, `z ~ N(0, σ₀² I)`.
///
/// Signals must be given in ascending client-id order.
pub fn aircomp_transmit(signals: &[ModelVector], gains: &[f64], noise_std: f64, stream: &RngStream) -> Result<ModelVector> {
    let mut y = superpose(signals, gains)?;
    let z = gaussian_sample(stream, y.len(), noise_std);
    y.add_assign(&z);
    Ok(y)
}

/// Cumulative transmit energy and subcarrier usage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    per_device: BTreeMap<usize, f64>,
    subcarrier_uses: u64,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `‖x‖²` to `device` and `len(x)` symbols to the usage counter.
    pub fn record_energy(&mut self, device: usize, x: &ModelVector) {
        *self.per_device.entry(device).or_insert(0.0) += x.norm_squared();
        self.subcarrier_uses += x.len() as u64;
    }

    pub fn device_energy(&self, device: usize) -> f64 {
        self.per_device.get(&device).copied().unwrap_or(0.0)
    }

    /// Summed in ascending device order.
    pub fn total_energy(&self) -> f64 {
        self.per_device.values().sum()
    }

    pub fn subcarrier_uses(&self) -> u64 {
        self.subcarrier_uses
    }
}

/// Time slots needed to send `k` symbols over `subcarriers` parallel carriers.
pub fn slots_needed(k: usize, subcarriers: usize) -> usize {
    assert!(subcarriers >= 1, "at least one subcarrier required");
    k.div_ceil(subcarriers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> ModelVector {
        ModelVector::from(x.to_vec())
    }

    #[test]
    fn degenerate_interval_pins_gains() {
        let params = ChannelParams {
            gain_lo: 0.05,
            gain_hi: 0.05,
            ..Default::default()
        };
        let ch = draw_channel(&[0, 3, 9], &params, &RngStream::new(1)).unwrap();
        assert!(ch.gains.iter().all(|&g| g == 0.05));
    }

    #[test]
    fn invalid_interval() {
        for (lo, hi) in [(0.0, 0.1), (0.2, 0.1), (-1.0, 1.0)] {
            let params = ChannelParams {
                gain_lo: lo,
                gain_hi: hi,
                ..Default::default()
            };
            assert!(matches!(draw_channel(&[0], &params, &RngStream::new(1)), Err(Error::Config(_))));
        }
    }

    #[test]
    fn truncated_exponential_mean() {
        let params = ChannelParams::default();
        let devices: Vec<usize> = (0..1_000_000).collect();
        let ch = draw_channel(&devices, &params, &RngStream::new(77)).unwrap();
        let mean = ch.gains.iter().sum::<f64>() / ch.gains.len() as f64;
        assert!((0.018..=0.022).contains(&mean), "{mean}");
        assert!(ch.gains.iter().all(|&g| (0.0001..=0.1).contains(&g)));
        let again = draw_channel(&devices[..100], &params, &RngStream::new(77)).unwrap();
        assert_eq!(&again.gains[..], &ch.gains[..100]);
    }

    #[test]
    fn superposition_examples() {
        let s = RngStream::new(0);
        assert_eq!(aircomp_transmit(&[v(&[1.0, 2.0])], &[1.0], 0.0, &s).unwrap(), v(&[1.0, 2.0]));
        let cancel = aircomp_transmit(&[v(&[1.0, -2.0]), v(&[-1.0, 2.0])], &[0.5, 0.5], 0.0, &s).unwrap();
        assert_eq!(cancel, ModelVector::zeros(2));
        let ones = vec![v(&[1.0; 3]); 4];
        let y = aircomp_transmit(&ones, &[0.25; 4], 0.0, &s).unwrap();
        assert_eq!(y, v(&[1.0; 3]));
        assert!(matches!(
            aircomp_transmit(&[v(&[1.0]), v(&[1.0, 2.0])], &[1.0, 1.0], 0.0, &s),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn noise_uncorrelated_across_rounds() {
        let root = RngStream::new(5);
        let (rounds, k) = (10_000u64, 16);
        let noise: Vec<ModelVector> = (0..rounds)
            .map(|t| aircomp_transmit(&[ModelVector::zeros(k)], &[1.0], 1.0, &root.child(t)).unwrap())
            .collect();
        let pairs = (rounds - 1) as f64 * k as f64;
        let corr = noise.windows(2).map(|w| w[0].dot(&w[1])).sum::<f64>() / pairs;
        assert!(corr.abs() < 0.01, "{corr}");
    }

    #[test]
    fn ledger_accounting() {
        let mut ledger = EnergyLedger::new();
        ledger.record_energy(2, &ModelVector::zeros(3));
        assert_eq!(ledger.total_energy(), 0.0);
        ledger.record_energy(1, &v(&[3.0, 4.0]));
        assert_eq!(ledger.device_energy(1), 25.0);
        assert_eq!(ledger.subcarrier_uses(), 5);
        ledger.record_energy(1, &v(&[3.0, 4.0]));
        assert_eq!(ledger.device_energy(1), 50.0);
    }

    #[test]
    fn slot_counts() {
        assert_eq!(slots_needed(600, 600), 1);
        assert_eq!(slots_needed(601, 600), 2);
        assert_eq!(slots_needed(0, 600), 0);
    }
}
