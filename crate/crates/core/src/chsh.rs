//! Domain types and the pure mathematics of the CHSH coincidence inequality.
//!
//! Everything here is written in terms of *coincidences*: a trial coincides
//! when both wings report the same bit. The privileged cell is `(1, 2)`; the
//! inequality says its coincidence probability cannot exceed the sum of the
//! other three under any local model.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChshError {
    #[error("setting index {0} is not 1 or 2")]
    InvalidSetting(u8),
    #[error("outcome {0} is not a bit")]
    InvalidBit(u8),
    #[error("angle {name} is not finite")]
    NonFiniteAngle { name: &'static str },
    #[error("negative probability at cell {cell:?}")]
    NegativeProbability { cell: [u8; 4] },
    #[error("probabilities sum to {sum}, not 1")]
    NotNormalized { sum: String },
    #[error("{coincidences} coincidences exceed {trials} trials in cell ({i},{j})")]
    CountOverflow {
        i: u8,
        j: u8,
        coincidences: u64,
        trials: u64,
    },
}

/// One of the two measuring stations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// A binary outcome. Serialized as the integer 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Bit(bool);

impl Bit {
    pub const ZERO: Bit = Bit(false);
    pub const ONE: Bit = Bit(true);

    pub fn new(v: u8) -> Result<Self, ChshError> {
        match v {
            0 => Ok(Bit::ZERO),
            1 => Ok(Bit::ONE),
            other => Err(ChshError::InvalidBit(other)),
        }
    }

    pub fn from_bool(b: bool) -> Self {
        Bit(b)
    }

    pub fn as_u8(self) -> u8 {
        self.0 as u8
    }

    pub fn as_bool(self) -> bool {
        self.0
    }

    pub fn flip(self) -> Self {
        Bit(!self.0)
    }
}

impl TryFrom<u8> for Bit {
    type Error = ChshError;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Bit::new(v)
    }
}

impl From<Bit> for u8 {
    fn from(b: Bit) -> u8 {
        b.as_u8()
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The joint setting `(i, j)` of one trial, each index in `{1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Setting {
    i: u8,
    j: u8,
}

impl Setting {
    /// The four cells in canonical order `(1,1), (1,2), (2,1), (2,2)`.
    pub const CELLS: [Setting; 4] = [
        Setting { i: 1, j: 1 },
        Setting { i: 1, j: 2 },
        Setting { i: 2, j: 1 },
        Setting { i: 2, j: 2 },
    ];

    pub fn new(i: u8, j: u8) -> Result<Self, ChshError> {
        if !(1..=2).contains(&i) {
            return Err(ChshError::InvalidSetting(i));
        }
        if !(1..=2).contains(&j) {
            return Err(ChshError::InvalidSetting(j));
        }
        Ok(Setting { i, j })
    }

    pub fn i(self) -> u8 {
        self.i
    }

    pub fn j(self) -> u8 {
        self.j
    }

    pub fn for_side(self, side: Side) -> u8 {
        match side {
            Side::Left => self.i,
            Side::Right => self.j,
        }
    }

    /// Position in [`Setting::CELLS`].
    pub fn cell_index(self) -> usize {
        usize::from((self.i - 1) * 2 + (self.j - 1))
    }

    /// The indicator vector: exactly one of the four cells is set.
    pub fn indicator(self) -> [u8; 4] {
        let mut u = [0; 4];
        u[self.cell_index()] = 1;
        u
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

/// One adjudicated trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "RecordRepr", try_from = "RecordRepr")]
pub struct TrialRecord {
    pub m: u64,
    pub setting: Setting,
    pub x: Bit,
    pub y: Bit,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordRepr {
    m: u64,
    i: u8,
    j: u8,
    x: Bit,
    y: Bit,
}

impl From<TrialRecord> for RecordRepr {
    fn from(r: TrialRecord) -> Self {
        RecordRepr {
            m: r.m,
            i: r.setting.i,
            j: r.setting.j,
            x: r.x,
            y: r.y,
        }
    }
}

impl TryFrom<RecordRepr> for TrialRecord {
    type Error = ChshError;
    fn try_from(r: RecordRepr) -> Result<Self, Self::Error> {
        Ok(TrialRecord {
            m: r.m,
            setting: Setting::new(r.i, r.j)?,
            x: r.x,
            y: r.y,
        })
    }
}

impl TrialRecord {
    pub fn coincides(&self) -> bool {
        self.x == self.y
    }

    pub fn outcome(&self, side: Side) -> Bit {
        match side {
            Side::Left => self.x,
            Side::Right => self.y,
        }
    }
}

/// Analyzer orientations in radians, photon convention (period π).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleConfig<T> {
    pub alpha1: T,
    pub alpha2: T,
    pub beta1: T,
    pub beta2: T,
}

impl<T: Real> AngleConfig<T> {
    pub fn new(alpha1: T, alpha2: T, beta1: T, beta2: T) -> Result<Self, ChshError> {
        let cfg = AngleConfig {
            alpha1,
            alpha2,
            beta1,
            beta2,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `(0, π/3, −π/3, 0)`: coincidence probabilities 1/4, 1, 1/4, 1/4.
    pub fn aspect() -> Self {
        let third = T::PI() / T::lit(3.0);
        AngleConfig {
            alpha1: T::zero(),
            alpha2: third,
            beta1: -third,
            beta2: T::zero(),
        }
    }

    /// `(π/8, 3π/8, −π/4, 0)`: the maximal quantum violation.
    pub fn optimal() -> Self {
        let eighth = T::PI() / T::lit(8.0);
        AngleConfig {
            alpha1: eighth,
            alpha2: eighth * T::lit(3.0),
            beta1: -T::FRAC_PI_4(),
            beta2: T::zero(),
        }
    }

    pub fn validate(&self) -> Result<(), ChshError> {
        for (name, v) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
        ] {
            if !v.is_finite() {
                return Err(ChshError::NonFiniteAngle { name });
            }
        }
        Ok(())
    }

    pub fn alpha(&self, i: u8) -> T {
        if i == 1 {
            self.alpha1
        } else {
            self.alpha2
        }
    }

    pub fn beta(&self, j: u8) -> T {
        if j == 1 {
            self.beta1
        } else {
            self.beta2
        }
    }

    /// The analyzer angle used by `side` under setting index `index`.
    pub fn analyzer(&self, side: Side, index: u8) -> T {
        match side {
            Side::Left => self.alpha(index),
            Side::Right => self.beta(index),
        }
    }

    /// `α_i − β_j`; only its value modulo π matters.
    pub fn difference(&self, setting: Setting) -> T {
        self.alpha(setting.i) - self.beta(setting.j)
    }
}

/// Trial and coincidence counts per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountMatrix {
    /// `n_ij`, indexed `[i-1][j-1]`.
    pub trials: [[u64; 2]; 2],
    /// `N_ij`, indexed `[i-1][j-1]`.
    pub coincidences: [[u64; 2]; 2],
}

impl CountMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a TrialRecord>) -> Self {
        let mut c = CountMatrix::new();
        for r in records {
            c.record(r);
        }
        c
    }

    pub fn record(&mut self, r: &TrialRecord) {
        let (a, b) = (usize::from(r.setting.i - 1), usize::from(r.setting.j - 1));
        self.trials[a][b] += 1;
        if r.coincides() {
            self.coincidences[a][b] += 1;
        }
    }

    pub fn n(&self, i: u8, j: u8) -> u64 {
        self.trials[usize::from(i - 1)][usize::from(j - 1)]
    }

    pub fn coincidences(&self, i: u8, j: u8) -> u64 {
        self.coincidences[usize::from(i - 1)][usize::from(j - 1)]
    }

    pub fn total(&self) -> u64 {
        self.trials.iter().flatten().sum()
    }

    pub fn validate(&self) -> Result<(), ChshError> {
        for s in Setting::CELLS {
            let (n, c) = (self.n(s.i, s.j), self.coincidences(s.i, s.j));
            if c > n {
                return Err(ChshError::CountOverflow {
                    i: s.i,
                    j: s.j,
                    coincidences: c,
                    trials: n,
                });
            }
        }
        Ok(())
    }
}

/// Joint law of `(X₁, X₂, Y₁, Y₂)`, indexed `p[x1][x2][y1][y2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointBitDistribution<T> {
    pub p: [[[[T; 2]; 2]; 2]; 2],
}

impl<T: Scalar> JointBitDistribution<T> {
    pub fn new(p: [[[[T; 2]; 2]; 2]; 2]) -> Result<Self, ChshError> {
        let d = JointBitDistribution { p };
        d.validate()?;
        Ok(d)
    }

    pub fn from_fn(mut f: impl FnMut([u8; 4]) -> T) -> Self {
        let mut p = [[[[T::zero(); 2]; 2]; 2]; 2];
        for pt in all_assignments() {
            p[pt[0] as usize][pt[1] as usize][pt[2] as usize][pt[3] as usize] = f(pt);
        }
        JointBitDistribution { p }
    }

    pub fn point_mass(at: [u8; 4]) -> Self {
        Self::from_fn(|pt| if pt == at { T::one() } else { T::zero() })
    }

    pub fn uniform() -> Self {
        let w = T::from_ratio(1, 16);
        Self::from_fn(|_| w)
    }

    pub fn get(&self, pt: [u8; 4]) -> T {
        self.p[pt[0] as usize][pt[1] as usize][pt[2] as usize][pt[3] as usize]
    }

    pub fn validate(&self) -> Result<(), ChshError> {
        let mut sum = T::zero();
        for pt in all_assignments() {
            let v = self.get(pt);
            if v < T::zero() {
                return Err(ChshError::NegativeProbability { cell: pt });
            }
            sum = sum + v;
        }
        if (sum - T::one()).abs() > T::normalization_tolerance() {
            return Err(ChshError::NotNormalized {
                sum: format!("{sum:?}"),
            });
        }
        Ok(())
    }

    /// `P{X_i = Y_j}`.
    pub fn coincidence(&self, setting: Setting) -> T {
        let mut acc = T::zero();
        for pt in all_assignments() {
            let x = pt[usize::from(setting.i - 1)];
            let y = pt[2 + usize::from(setting.j - 1)];
            if x == y {
                acc = acc + self.get(pt);
            }
        }
        acc
    }
}

/// The 16 points `[x1, x2, y1, y2]` of `{0,1}⁴` in lexicographic order.
pub fn all_assignments() -> impl Iterator<Item = [u8; 4]> {
    (0u8..16).map(|k| [(k >> 3) & 1, (k >> 2) & 1, (k >> 1) & 1, k & 1])
}

/// The deterministic core of the inequality: if `x1 = y2` then at least one
/// of `x1 = y1`, `x2 = y1`, `x2 = y2` holds.
pub fn deterministic_implication_holds(x1: Bit, x2: Bit, y1: Bit, y2: Bit) -> bool {
    x1 != y2 || x1 == y1 || x2 == y1 || x2 == y2
}

/// `P{X₁=Y₂} − P{X₁=Y₁} − P{X₂=Y₁} − P{X₂=Y₂}`, never positive.
pub fn bell_inequality_slack<T: Scalar>(dist: &JointBitDistribution<T>) -> Result<T, ChshError> {
    dist.validate()?;
    let [c11, c12, c21, c22] = Setting::CELLS.map(|s| dist.coincidence(s));
    Ok(c12 - c11 - c21 - c22)
}

/// Slack of a single deterministic assignment, always in `-3..=0`.
pub fn deterministic_slack(pt: [u8; 4]) -> i32 {
    let eq = |a: u8, b: u8| i32::from(a == b);
    let [x1, x2, y1, y2] = pt;
    eq(x1, y2) - eq(x1, y1) - eq(x2, y1) - eq(x2, y2)
}

/// Photon coincidence law `cos²(δ)`.
pub fn coincidence_probability<T: Real>(delta: T) -> T {
    let c = delta.cos();
    (c * c).max(T::zero()).min(T::one())
}

/// Coincidence law for a spin-half singlet pair, `sin²(δ/2)`.
pub fn spin_coincidence_probability<T: Real>(delta: T) -> T {
    let s = (delta / T::lit(2.0)).sin();
    (s * s).max(T::zero()).min(T::one())
}

/// Raw product moment of ±1-coded outcomes given a coincidence probability.
pub fn correlation_from_coincidence<T: Real>(p: T) -> T {
    T::lit(2.0) * p - T::one()
}

/// Mean per-trial increment of the statistic under the quantum prediction
/// with uniformly random settings.
pub fn expected_statistic_per_trial<T: Real>(angles: &AngleConfig<T>) -> T {
    let [c11, c12, c21, c22] =
        Setting::CELLS.map(|s| coincidence_probability(angles.difference(s)));
    (c12 - c11 - c21 - c22) / T::lit(4.0)
}

/// `N₁₂ − N₁₁ − N₂₁ − N₂₂`.
pub fn chsh_count_statistic(counts: &CountMatrix) -> i64 {
    let n = |i, j| counts.coincidences(i, j) as i64;
    n(1, 2) - n(1, 1) - n(2, 1) - n(2, 2)
}

/// For each cell (canonical order), its coincidence count minus the sum of
/// the other three. Index 1 is the adjudicated statistic; the rest are
/// diagnostics.
pub fn symmetric_count_statistics(counts: &CountMatrix) -> [i64; 4] {
    let all = Setting::CELLS.map(|s| counts.coincidences(s.i, s.j) as i64);
    let total: i64 = all.iter().sum();
    all.map(|c| 2 * c - total)
}

/// Translate photon orientations to the spin-half convention: double every
/// angle, then turn the right wing by π.
pub fn photon_to_spin_angles<T: Real>(angles: &AngleConfig<T>) -> AngleConfig<T> {
    let two = T::lit(2.0);
    AngleConfig {
        alpha1: two * angles.alpha1,
        alpha2: two * angles.alpha2,
        beta1: two * angles.beta1 + T::PI(),
        beta2: two * angles.beta2 + T::PI(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Rational;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn bits(pt: [u8; 4]) -> [Bit; 4] {
        pt.map(|b| Bit::new(b).unwrap())
    }

    #[test]
    fn implication_examples() {
        let [a, b, c, d] = bits([0, 0, 0, 0]);
        assert!(deterministic_implication_holds(a, b, c, d));
        let [a, b, c, d] = bits([1, 0, 0, 1]);
        assert!(deterministic_implication_holds(a, b, c, d));
        let [a, b, c, d] = bits([0, 1, 1, 0]);
        assert!(deterministic_implication_holds(a, b, c, d));
    }

    #[test]
    fn implication_exhaustive() {
        for pt in all_assignments() {
            let [a, b, c, d] = bits(pt);
            assert!(deterministic_implication_holds(a, b, c, d), "{pt:?}");
        }
    }

    #[test]
    fn slack_point_mass_at_origin() {
        let d = JointBitDistribution::<Rational>::point_mass([0, 0, 0, 0]);
        assert_eq!(bell_inequality_slack(&d).unwrap(), Rational::from_integer(-2));
    }

    #[test]
    fn slack_uniform_is_minus_one() {
        // Direct summation: each pair coincides on 8 of 16 points.
        let mut c12 = Rational::from_integer(0);
        let mut others = Rational::from_integer(0);
        for [x1, x2, y1, y2] in all_assignments() {
            let w = Rational::new(1, 16);
            if x1 == y2 {
                c12 += w;
            }
            for (a, b) in [(x1, y1), (x2, y1), (x2, y2)] {
                if a == b {
                    others += w;
                }
            }
        }
        let oracle = c12 - others;
        let d = JointBitDistribution::<Rational>::uniform();
        assert_eq!(bell_inequality_slack(&d).unwrap(), oracle);
        assert_eq!(oracle, Rational::from_integer(-1));
        let df = JointBitDistribution::<f64>::uniform();
        assert_abs_diff_eq!(bell_inequality_slack(&df).unwrap(), -1.0, epsilon = 1e-15);
    }

    #[test]
    fn slack_maximum_over_point_masses_is_zero() {
        let max = all_assignments()
            .map(|pt| bell_inequality_slack(&JointBitDistribution::<Rational>::point_mass(pt)).unwrap())
            .max()
            .unwrap();
        assert_eq!(max, Rational::from_integer(0));
        for pt in all_assignments() {
            let d = JointBitDistribution::<Rational>::point_mass(pt);
            assert_eq!(
                bell_inequality_slack(&d).unwrap(),
                Rational::from_integer(i64::from(deterministic_slack(pt)))
            );
        }
    }

    #[test]
    fn slack_rejects_bad_distributions() {
        let mut d = JointBitDistribution::<f64>::uniform();
        d.p[0][0][0][0] += 1e-9;
        assert!(matches!(bell_inequality_slack(&d), Err(ChshError::NotNormalized { .. })));
        let mut d = JointBitDistribution::<f64>::uniform();
        d.p[0][0][0][0] += 1e-13;
        assert!(bell_inequality_slack(&d).is_ok());
        let mut d = JointBitDistribution::<f64>::point_mass([1, 1, 1, 1]);
        d.p[0][0][0][0] = -0.5;
        d.p[0][0][0][1] = 0.5;
        assert!(matches!(bell_inequality_slack(&d), Err(ChshError::NegativeProbability { .. })));
    }

    #[test]
    fn coincidence_examples() {
        assert_eq!(coincidence_probability(0.0f64), 1.0);
        assert_abs_diff_eq!(coincidence_probability(PI / 3.0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(coincidence_probability(PI / 8.0), 0.853_553_390_593_273_7, epsilon = 1e-15);
        assert_abs_diff_eq!(coincidence_probability(3.0 * PI / 8.0), 0.146_446_609_406_726_24, epsilon = 1e-15);
    }

    #[test]
    fn coincidence_law_grid_properties() {
        for k in 0..10_000 {
            let d = -10.0 + 20.0 * f64::from(k) / 10_000.0;
            let p = coincidence_probability(d);
            assert!((0.0..=1.0).contains(&p));
            assert_abs_diff_eq!(p, coincidence_probability(d + PI), epsilon = 1e-12);
            assert_abs_diff_eq!(p, coincidence_probability(-d), epsilon = 1e-15);
        }
    }

    #[test]
    fn expected_statistic_examples() {
        assert_abs_diff_eq!(expected_statistic_per_trial(&AngleConfig::<f64>::aspect()), 1.0 / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            expected_statistic_per_trial(&AngleConfig::<f64>::optimal()),
            (2f64.sqrt() - 1.0) / 4.0,
            epsilon = 1e-15
        );
        let zero = AngleConfig::new(0.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(expected_statistic_per_trial(&zero), -0.5);
        // f32 route agrees.
        assert!((expected_statistic_per_trial(&AngleConfig::<f32>::optimal()) - 0.103_553_39).abs() < 1e-6);
    }

    #[test]
    fn expected_statistic_below_cirelson_on_grid() {
        let ceiling = (2f64.sqrt() - 1.0) / 4.0 + 1e-12;
        let g: Vec<f64> = (0..50).map(|k| PI * f64::from(k) / 50.0).collect();
        let mut best = f64::NEG_INFINITY;
        for &a1 in &g {
            for &a2 in &g {
                for &b1 in &g {
                    for &b2 in &g {
                        let v = expected_statistic_per_trial(&AngleConfig { alpha1: a1, alpha2: a2, beta1: b1, beta2: b2 });
                        best = best.max(v);
                    }
                }
            }
        }
        assert!(best <= ceiling, "{best}");
        assert!(best > 0.1);
    }

    #[test]
    fn count_statistic_examples() {
        assert_eq!(chsh_count_statistic(&CountMatrix::new()), 0);
        let c = CountMatrix {
            trials: [[100; 2]; 2],
            coincidences: [[20, 100], [20, 20]],
        };
        assert_eq!(chsh_count_statistic(&c), 40);
        assert_eq!(symmetric_count_statistics(&c), [-120, 40, -120, -120]);
        c.validate().unwrap();
        let bad = CountMatrix {
            trials: [[1; 2]; 2],
            coincidences: [[2, 0], [0, 0]],
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn spin_translation_examples() {
        let z = photon_to_spin_angles(&AngleConfig::new(0.0, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(z, AngleConfig { alpha1: 0.0, alpha2: 0.0, beta1: PI, beta2: PI });
        let s = photon_to_spin_angles(&AngleConfig::<f64>::optimal());
        assert_abs_diff_eq!(s.alpha1, PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.alpha2, 3.0 * PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.beta1, PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.beta2, PI, epsilon = 1e-15);
    }

    #[test]
    fn spin_translation_preserves_coincidences() {
        for photon in [AngleConfig::<f64>::optimal(), AngleConfig::aspect()] {
            let spin = photon_to_spin_angles(&photon);
            for s in Setting::CELLS {
                assert_abs_diff_eq!(
                    coincidence_probability(photon.difference(s)),
                    spin_coincidence_probability(spin.difference(s)),
                    epsilon = 1e-12
                );
            }
        }
    }

    #[test]
    fn settings_and_bits_validate() {
        assert!(Setting::new(0, 1).is_err());
        assert!(Setting::new(1, 3).is_err());
        assert_eq!(Setting::new(2, 1).unwrap().cell_index(), 2);
        assert_eq!(Setting::new(1, 2).unwrap().indicator(), [0, 1, 0, 0]);
        assert!(Bit::new(2).is_err());
        assert!(AngleConfig::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn record_json_shape() {
        let r = TrialRecord { m: 3, setting: Setting::new(1, 2).unwrap(), x: Bit::ONE, y: Bit::ZERO };
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"m":3,"i":1,"j":2,"x":1,"y":0}"#);
        assert_eq!(serde_json::from_str::<TrialRecord>(&s).unwrap(), r);
        assert!(serde_json::from_str::<TrialRecord>(r#"{"m":3,"i":1,"j":2,"x":2,"y":0}"#).is_err());
    }

    proptest! {
        #[test]
        fn slack_never_positive(w in proptest::collection::vec(0.0f64..1.0, 16)) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 1e-6);
            let mut k = 0;
            let d = JointBitDistribution::<f64>::from_fn(|_| { k += 1; w[k - 1] / total });
            prop_assert!(bell_inequality_slack(&d).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn slack_never_positive_many_random_laws() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let w: Vec<f64> = (0..16).map(|_| rng.random::<f64>().powi(3)).collect();
            let total: f64 = w.iter().sum();
            let mut k = 0;
            let d = JointBitDistribution::<f64>::from_fn(|_| {
                k += 1;
                w[k - 1] / total
            });
            assert!(bell_inequality_slack(&d).unwrap() <= 1e-12);
        }
    }
}
