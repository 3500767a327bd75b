//! Trusted sampler for the quantum prediction.
//!
//! The oracle sees both settings of a trial. That is the point of it: it
//! stands in for the entangled pair, so it lives on the referee's side of
//! the trust boundary and never goes through the locality-enforced
//! [`Station`](crate::strategies::Station) interface.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chsh::{coincidence_probability, AngleConfig, Bit, Setting};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationSense {
    #[default]
    EqualPolarization,
    OppositePolarization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumModel {
    pub angles: AngleConfig<f64>,
    pub correlation_sense: CorrelationSense,
}

impl QuantumModel {
    pub fn new(angles: AngleConfig<f64>, correlation_sense: CorrelationSense) -> Self {
        QuantumModel {
            angles,
            correlation_sense,
        }
    }

    /// Exact coincidence probability used by [`QuantumModel::sample_trial`].
    pub fn cell_coincidence_probability(&self, setting: Setting) -> f64 {
        let p = coincidence_probability(self.angles.difference(setting));
        match self.correlation_sense {
            CorrelationSense::EqualPolarization => p,
            CorrelationSense::OppositePolarization => 1.0 - p,
        }
    }

    /// Per-trial mean of the statistic with uniform settings.
    pub fn mean_per_trial(&self) -> f64 {
        let [c11, c12, c21, c22] = Setting::CELLS.map(|s| self.cell_coincidence_probability(s));
        (c12 - c11 - c21 - c22) / 4.0
    }

    /// One draw from `P(0,0) = P(1,1) = c/2`, `P(0,1) = P(1,0) = (1−c)/2`
    /// by inverse CDF on a single uniform.
    pub fn sample_trial<R: Rng + ?Sized>(&self, setting: Setting, rng: &mut R) -> (Bit, Bit) {
        let c = self.cell_coincidence_probability(setting);
        let u: f64 = rng.random();
        let half_c = c / 2.0;
        if u < half_c {
            (Bit::ZERO, Bit::ZERO)
        } else if u < c {
            (Bit::ONE, Bit::ONE)
        } else if u < c + (1.0 - c) / 2.0 {
            (Bit::ZERO, Bit::ONE)
        } else {
            (Bit::ONE, Bit::ZERO)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{role_rng, Role};
    use std::f64::consts::PI;

    fn single_angle(delta: f64) -> QuantumModel {
        QuantumModel::new(AngleConfig::new(delta, delta, 0.0, 0.0).unwrap(), CorrelationSense::EqualPolarization)
    }

    #[test]
    fn aligned_analyzers_always_agree() {
        let q = single_angle(0.0);
        let mut rng = role_rng(1, Role::Oracle);
        let s = Setting::new(1, 1).unwrap();
        let mut ones = 0u32;
        for _ in 0..100_000 {
            let (x, y) = q.sample_trial(s, &mut rng);
            assert_eq!(x, y);
            ones += u32::from(x.as_u8());
        }
        let f = f64::from(ones) / 100_000.0;
        assert!((f - 0.5).abs() < 4.0 * (0.25f64 / 100_000.0).sqrt());
    }

    #[test]
    fn perpendicular_analyzers_never_agree() {
        let q = single_angle(PI / 2.0);
        let mut rng = role_rng(2, Role::Oracle);
        let s = Setting::new(2, 2).unwrap();
        for _ in 0..100_000 {
            let (x, y) = q.sample_trial(s, &mut rng);
            assert_ne!(x, y);
        }
    }

    #[test]
    fn cell_probabilities_aspect_angles() {
        let q = QuantumModel::new(AngleConfig::aspect(), CorrelationSense::EqualPolarization);
        assert!((q.cell_coincidence_probability(Setting::new(1, 2).unwrap()) - 1.0).abs() < 1e-15);
        assert!((q.cell_coincidence_probability(Setting::new(1, 1).unwrap()) - 0.25).abs() < 1e-15);
        assert!((q.mean_per_trial() - 1.0 / 16.0).abs() < 1e-15);
        let opp = QuantumModel::new(AngleConfig::new(0.0, 0.0, 0.0, 0.0).unwrap(), CorrelationSense::OppositePolarization);
        assert_eq!(opp.cell_coincidence_probability(Setting::new(1, 1).unwrap()), 0.0);
    }

    #[test]
    fn third_of_pi_frequency() {
        let q = single_angle(PI / 3.0);
        let mut rng = role_rng(3, Role::Oracle);
        let s = Setting::new(1, 1).unwrap();
        let n = 1_000_000u32;
        let hits = (0..n).filter(|_| {
            let (x, y) = q.sample_trial(s, &mut rng);
            x == y
        }).count() as f64;
        let f = hits / f64::from(n);
        assert!((f - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / f64::from(n)).sqrt(), "{f}");
    }
}
