use std::f64::consts::{FRAC_PI_4, PI};

use rand::Rng;
use serde::Serialize;

use super::{
    Broadcast, NonlocalResponder, RawOutcome, Source, SourceMessage, Station, StationMemory,
    StrategyContext, StrategyError, StrategySpec, WingRecord,
};
use crate::chsh::{all_assignments, deterministic_slack, Bit, Setting, Side, TrialRecord};
use crate::rng::{role_rng, Role, RoleRng};

pub const BUILTIN_NAMES: &[&str] = &[
    "constant",
    "independent-coin",
    "classical-polarizer",
    "deterministic-optimal",
    "adaptive-frequency-tracker",
    "nonlocal-cheater",
    "range-violator",
];

fn allowed_params(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "constant" => Some(&["bit"]),
        n if BUILTIN_NAMES.contains(&n) => Some(&[]),
        _ => None,
    }
}

pub(super) fn check_params(spec: &StrategySpec) -> Result<(), StrategyError> {
    let allowed = allowed_params(&spec.name).ok_or_else(|| StrategyError::Unknown(spec.name.clone()))?;
    for key in spec.params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(StrategyError::UnknownParam {
                strategy: spec.name.clone(),
                key: key.clone(),
            });
        }
    }
    Ok(())
}

fn bit_param(spec: &StrategySpec, key: &str, default: Bit) -> Result<Bit, StrategyError> {
    match spec.params.get(key) {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .and_then(|b| u8::try_from(b).ok())
            .and_then(|b| Bit::new(b).ok())
            .ok_or_else(|| StrategyError::BadParam {
                strategy: spec.name.clone(),
                key: key.to_string(),
                reason: format!("must be 0 or 1, got {v}"),
            }),
    }
}

pub(super) fn source(spec: &StrategySpec, ctx: &StrategyContext) -> Result<Box<dyn Source>, StrategyError> {
    check_params(spec)?;
    let rng = || role_rng(ctx.seed, Role::Source);
    Ok(match spec.name.as_str() {
        "constant" => Box::new(FixedSource(b"constant")),
        "independent-coin" => Box::new(FixedSource(b"")),
        "range-violator" => Box::new(FixedSource(b"range")),
        "classical-polarizer" => Box::new(PolarizationSource { rng: rng() }),
        "deterministic-optimal" => Box::new(OptimalSource::new(rng())),
        "adaptive-frequency-tracker" => Box::new(AdaptiveSource::default()),
        other => return Err(StrategyError::NotLocal(other.to_string())),
    })
}

pub(super) fn station(
    spec: &StrategySpec,
    side: Side,
    ctx: &StrategyContext,
) -> Result<Box<dyn Station>, StrategyError> {
    check_params(spec)?;
    let rng = || role_rng(ctx.seed, Role::station(side));
    Ok(match spec.name.as_str() {
        "constant" => Box::new(Constant {
            bit: bit_param(spec, "bit", Bit::ONE)?,
            trials: 0,
        }),
        "independent-coin" => Box::new(IndependentCoin::new(rng())),
        "classical-polarizer" => Box::new(ClassicalPolarizer {
            analyzers: [ctx.angles.analyzer(side, 1), ctx.angles.analyzer(side, 2)],
        }),
        "deterministic-optimal" => Box::new(DeterministicOptimal { side, trials: 0 }),
        "adaptive-frequency-tracker" => Box::new(AdaptiveFrequencyTracker::new(side)),
        "range-violator" => Box::new(RangeViolator::new(rng())),
        other => return Err(StrategyError::NotLocal(other.to_string())),
    })
}

pub(super) fn nonlocal(
    spec: &StrategySpec,
    ctx: &StrategyContext,
) -> Result<Box<dyn NonlocalResponder>, StrategyError> {
    check_params(spec)?;
    match spec.name.as_str() {
        "nonlocal-cheater" => Ok(Box::new(NonlocalCheater {
            rng: role_rng(ctx.seed, Role::Source),
        })),
        other => Err(StrategyError::NotNonlocal(other.to_string())),
    }
}

fn payload_bit(lambda: &SourceMessage, index: usize) -> Bit {
    Bit::from_bool(lambda.as_bytes().get(index).is_some_and(|&b| b != 0))
}

/// Index of λ's assignment byte for a wing and setting: `[x1, x2, y1, y2]`.
fn assignment_index(side: Side, setting: u8) -> usize {
    let base = match side {
        Side::Left => 0,
        Side::Right => 2,
    };
    base + usize::from(setting - 1)
}

struct FixedSource(&'static [u8]);

impl Source for FixedSource {
    fn emit(&mut self, _history: &[TrialRecord]) -> SourceMessage {
        SourceMessage::new(self.0)
    }
}

/// Always answers the same bit; counts trials.
#[derive(Debug, Clone, Serialize)]
pub struct Constant {
    bit: Bit,
    trials: u64,
}

impl Station for Constant {
    fn respond(&self, _setting: u8, _lambda: &SourceMessage) -> RawOutcome {
        self.bit.into()
    }

    fn update_memory(&mut self, _own: &WingRecord, _broadcast: Option<&Broadcast>) {
        self.trials += 1;
    }

    fn memory(&self) -> StationMemory {
        StationMemory::of(self)
    }
}

/// Fair coin per trial from the station's own stream, drawn at the trial
/// boundary.
#[derive(Debug, Clone)]
pub struct IndependentCoin {
    rng: RoleRng,
    next: Bit,
}

impl IndependentCoin {
    fn new(mut rng: RoleRng) -> Self {
        let next = Bit::from_bool(rng.random_bool(0.5));
        IndependentCoin { rng, next }
    }
}

impl Station for IndependentCoin {
    fn respond(&self, _setting: u8, _lambda: &SourceMessage) -> RawOutcome {
        self.next.into()
    }

    fn update_memory(&mut self, _own: &WingRecord, _broadcast: Option<&Broadcast>) {
        self.next = Bit::from_bool(self.rng.random_bool(0.5));
    }

    fn memory(&self) -> StationMemory {
        StationMemory(vec![self.next.as_u8()])
    }
}

struct PolarizationSource {
    rng: RoleRng,
}

impl Source for PolarizationSource {
    fn emit(&mut self, _history: &[TrialRecord]) -> SourceMessage {
        let angle = self.rng.random::<f64>() * PI;
        SourceMessage::new(&angle.to_le_bytes())
    }
}

/// Reads a polarization angle back out of λ.
pub fn decode_polarization(lambda: &SourceMessage) -> Option<f64> {
    let bytes: [u8; 8] = lambda.as_bytes().try_into().ok()?;
    Some(f64::from_le_bytes(bytes))
}

/// λ is a polarization direction uniform on `[0, π)`; the photon passes iff
/// it lies within π/4 of the analyzer (modulo π).
#[derive(Debug, Clone, Serialize)]
pub struct ClassicalPolarizer {
    analyzers: [f64; 2],
}

impl ClassicalPolarizer {
    pub fn passes(lambda_angle: f64, analyzer: f64) -> bool {
        let d = (lambda_angle - analyzer).rem_euclid(PI);
        d.min(PI - d) < FRAC_PI_4
    }
}

impl Station for ClassicalPolarizer {
    fn respond(&self, setting: u8, lambda: &SourceMessage) -> RawOutcome {
        let angle = decode_polarization(lambda).unwrap_or(0.0);
        let analyzer = self.analyzers[usize::from(setting - 1)];
        Bit::from_bool(Self::passes(angle, analyzer)).into()
    }

    fn update_memory(&mut self, _own: &WingRecord, _broadcast: Option<&Broadcast>) {}

    fn memory(&self) -> StationMemory {
        StationMemory::of(self)
    }
}

/// Assignments `[x1, x2, y1, y2]` attaining the largest slack, 0.
fn optimal_assignments() -> Vec<[u8; 4]> {
    let best = all_assignments().map(deterministic_slack).max().unwrap_or(0);
    all_assignments().filter(|&pt| deterministic_slack(pt) == best).collect()
}

struct OptimalSource {
    rng: RoleRng,
    choices: Vec<[u8; 4]>,
}

impl OptimalSource {
    fn new(rng: RoleRng) -> Self {
        OptimalSource {
            rng,
            choices: optimal_assignments(),
        }
    }
}

impl Source for OptimalSource {
    fn emit(&mut self, _history: &[TrialRecord]) -> SourceMessage {
        let pick = self.choices[self.rng.random_range(0..self.choices.len())];
        SourceMessage::new(&pick)
    }
}

/// λ carries a full assignment drawn uniformly from the slack-maximizing
/// ones; each wing reads off its own entry.
#[derive(Debug, Clone, Serialize)]
pub struct DeterministicOptimal {
    side: Side,
    trials: u64,
}

impl Station for DeterministicOptimal {
    fn respond(&self, setting: u8, lambda: &SourceMessage) -> RawOutcome {
        payload_bit(lambda, assignment_index(self.side, setting)).into()
    }

    fn update_memory(&mut self, _own: &WingRecord, _broadcast: Option<&Broadcast>) {
        self.trials += 1;
    }

    fn memory(&self) -> StationMemory {
        StationMemory::of(self)
    }
}

/// Increment a deterministic assignment yields in `cell`.
fn cell_delta(pt: [u8; 4], cell: Setting) -> i32 {
    let x = pt[assignment_index(Side::Left, cell.i())];
    let y = pt[assignment_index(Side::Right, cell.j())];
    match (x == y, cell == Setting::CELLS[1]) {
        (true, true) => 1,
        (true, false) => -1,
        (false, _) => 0,
    }
}

/// Gambler's-fallacy source: bets that the least frequent cell so far comes
/// next and sends the assignment best suited to it.
#[derive(Default)]
struct AdaptiveSource {
    cell_counts: [u64; 4],
    emitted: u32,
}

impl Source for AdaptiveSource {
    fn emit(&mut self, _history: &[TrialRecord]) -> SourceMessage {
        let predicted = Setting::CELLS
            .into_iter()
            .min_by_key(|c| self.cell_counts[c.cell_index()])
            .expect("four cells");
        let pick = all_assignments()
            .max_by_key(|&pt| (cell_delta(pt, predicted) * 10 + deterministic_slack(pt), std::cmp::Reverse(pt)))
            .expect("sixteen assignments");
        self.emitted += 1;
        let mut bytes = [0u8; 8];
        bytes[..4].copy_from_slice(&pick);
        bytes[4..].copy_from_slice(&self.emitted.to_le_bytes());
        SourceMessage::new(&bytes)
    }

    fn receive_broadcast(&mut self, broadcast: &Broadcast) {
        self.cell_counts[broadcast.record.setting.cell_index()] += 1;
    }
}

/// Tracks how often each setting has appeared on both wings. Once it has
/// seen the other wing's settings it guesses the other wing will use its
/// rarer setting and answers to win that cell.
#[derive(Debug, Clone, Serialize)]
pub struct AdaptiveFrequencyTracker {
    side: Side,
    own_counts: [u64; 2],
    other_counts: [u64; 2],
}

impl AdaptiveFrequencyTracker {
    pub fn new(side: Side) -> Self {
        AdaptiveFrequencyTracker {
            side,
            own_counts: [0; 2],
            other_counts: [0; 2],
        }
    }

    pub fn own_counts(&self) -> [u64; 2] {
        self.own_counts
    }

    pub fn other_counts(&self) -> [u64; 2] {
        self.other_counts
    }

    fn predicted_other(&self) -> Option<u8> {
        match self.other_counts[0].cmp(&self.other_counts[1]) {
            std::cmp::Ordering::Less => Some(1),
            std::cmp::Ordering::Greater => Some(2),
            std::cmp::Ordering::Equal => None,
        }
    }
}

impl Station for AdaptiveFrequencyTracker {
    fn respond(&self, setting: u8, lambda: &SourceMessage) -> RawOutcome {
        let own = payload_bit(lambda, assignment_index(self.side, setting));
        let Some(guess) = self.predicted_other() else {
            return own.into();
        };
        let other_side = self.side.other();
        let other_bit = payload_bit(lambda, assignment_index(other_side, guess));
        let cell = match self.side {
            Side::Left => Setting::new(setting, guess),
            Side::Right => Setting::new(guess, setting),
        }
        .expect("indices in range");
        let want_coincidence = cell == Setting::CELLS[1];
        Bit::from_bool(other_bit.as_bool() == want_coincidence).into()
    }

    fn update_memory(&mut self, own: &WingRecord, broadcast: Option<&Broadcast>) {
        self.own_counts[usize::from(own.setting - 1)] += 1;
        if let Some(b) = broadcast {
            let other = b.record.setting.for_side(self.side.other());
            self.other_counts[usize::from(other - 1)] += 1;
        }
    }

    fn memory(&self) -> StationMemory {
        StationMemory::of(self)
    }
}

/// Sees both settings: coincides exactly in the privileged cell.
pub struct NonlocalCheater {
    rng: RoleRng,
}

impl NonlocalResponder for NonlocalCheater {
    fn respond_joint(&mut self, setting: Setting) -> (RawOutcome, RawOutcome) {
        let b = Bit::from_bool(self.rng.random_bool(0.5));
        let y = if setting == Setting::CELLS[1] { b } else { b.flip() };
        (b.into(), y.into())
    }
}

/// Emits real values in `[−√(2π), √(2π)]` instead of bits.
#[derive(Debug, Clone)]
pub struct RangeViolator {
    rng: RoleRng,
    next: f64,
}

impl RangeViolator {
    pub fn bound() -> f64 {
        (2.0 * PI).sqrt()
    }

    fn new(mut rng: RoleRng) -> Self {
        let next = Self::draw(&mut rng);
        RangeViolator { rng, next }
    }

    fn draw(rng: &mut RoleRng) -> f64 {
        rng.random_range(-Self::bound()..=Self::bound())
    }
}

impl Station for RangeViolator {
    fn respond(&self, _setting: u8, _lambda: &SourceMessage) -> RawOutcome {
        RawOutcome(self.next)
    }

    fn update_memory(&mut self, _own: &WingRecord, _broadcast: Option<&Broadcast>) {
        self.next = Self::draw(&mut self.rng);
    }

    fn memory(&self) -> StationMemory {
        StationMemory(self.next.to_le_bytes().to_vec())
    }
}
