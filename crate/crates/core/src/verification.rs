//! Executable checks of the stationarity argument: flip invariance of the
//! weight, the flip balance of rates, the horizontal pair-count identities,
//! stationarity of the Gibbs vector, the outflow decomposition, and gauge
//! invariance.
//!
//! Every check returns a report; [`CheckReport`] is the machine-readable
//! shape emitted by the `verify` command.

use serde::Serialize;

use crate::dynamics::{self, JumpKind, RateTable};
use crate::enumeration::{
    self, build_generator, enumerate_states, GeneratorMatrix, GeneratorMode, StateSpace,
};
use crate::error::{Error, Result};
use crate::lattice::{FluxPair, State, TorusGeometry, VertexType};
use crate::weights::{free_fermion_defect, gauge_apply, GaugeKind, WeightVector};

pub mod tolerance {
    /// `max_j |(pi Q)_j|` for the normalized Gibbs vector.
    pub const STATIONARITY: f64 = 1e-10;
    /// Relative error of the flip balance on each generator edge.
    pub const FLIP_BALANCE: f64 = 1e-12;
    /// Relative error between two evaluations of a rate.
    pub const RATE: f64 = 1e-12;
    /// Total variation distance between two Gibbs vectors.
    pub const GIBBS_TV: f64 = 1e-12;
    /// `|defect|` accepted as the free-fermion point.
    pub const DEFECT: f64 = 1e-12;
    /// Relative residual of the outflow decomposition.
    pub const OUTFLOW: f64 = 1e-12;
}

/// One line of the `verify` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub config: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    fn new(check: &str, config: String, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            config,
            residual,
            tolerance,
            pass: residual <= tolerance,
        }
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Counts of types must agree between `s` and its flip. Residual is the
/// number of states where they do not.
pub fn check_flip_weight(space: &StateSpace) -> CheckReport {
    let failures = space
        .states()
        .filter(|s| s.count_types() != s.flip().count_types())
        .count();
    CheckReport::new("flip_weight", space_config(space), failures as f64, 0.0)
}

fn space_config(space: &StateSpace) -> String {
    let g = space.geometry();
    let f = space.flux();
    format!("M={} N={} k1={} k2={}", g.m, g.n, f.k1, f.k2)
}

#[derive(Debug, Clone, Serialize)]
pub struct FlipBalanceReport {
    pub edges: usize,
    /// Edges `s1 -> s2` for which `flip s2 -> flip s1` has zero rate.
    pub missing_reverse: usize,
    pub max_relative_error: f64,
}

/// For each positive edge `s1 -> s2` compares `pi(s1) Q(s1, s2)` with
/// `pi(flip s2) Q(flip s2, flip s1)`.
pub fn check_flip_balance(
    space: &StateSpace,
    q: &GeneratorMatrix,
    pi: &[f64],
) -> Result<FlipBalanceReport> {
    let flip_index: Vec<usize> = (0..space.len())
        .map(|i| {
            space
                .index_of(&space.state(i).flip())
                .ok_or(Error::MissingFlipImage { index: i })
        })
        .collect::<Result<_>>()?;
    let mut report = FlipBalanceReport {
        edges: 0,
        missing_reverse: 0,
        max_relative_error: 0.0,
    };
    for (i, j, r) in q.edges() {
        report.edges += 1;
        let back = q.rate(flip_index[j], flip_index[i]);
        if back <= 0.0 {
            report.missing_reverse += 1;
            report.max_relative_error = report.max_relative_error.max(1.0);
            continue;
        }
        let err = relative_error(pi[i] * r, pi[flip_index[j]] * back);
        report.max_relative_error = report.max_relative_error.max(err);
    }
    Ok(report)
}

/// Horizontal pair-count identities of a single state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairIdentityReport {
    /// `N(WN, Empty) - N(Empty, SE)`.
    pub a: i64,
    /// `N(WN, Empty) + N(Horiz, WN)` and `N(Empty, SE) + N(SE, Horiz)`.
    pub block_counts: (i64, i64),
    /// `N(Vert,SE) - N(WN,Vert)`, `N(Empty,Vert) - N(Vert,Empty)`,
    /// `N(SE,Horiz) - N(Horiz,WN)`, `N(Cross,WN) - N(SE,Cross)`,
    /// `N(Horiz,Cross) - N(Cross,Horiz)`.
    pub differences: [i64; 5],
    pub pass: bool,
}

pub fn check_pair_identities(s: &State) -> PairIdentityReport {
    use VertexType::*;
    let p = s.pair_counts();
    let n = |x, y| p.get(x, y) as i64;
    let a = n(CornerWN, Empty) - n(Empty, CornerSE);
    let block_counts = (
        n(CornerWN, Empty) + n(Horiz, CornerWN),
        n(Empty, CornerSE) + n(CornerSE, Horiz),
    );
    let differences = [
        n(Vert, CornerSE) - n(CornerWN, Vert),
        n(Empty, Vert) - n(Vert, Empty),
        n(CornerSE, Horiz) - n(Horiz, CornerWN),
        n(Cross, CornerWN) - n(CornerSE, Cross),
        n(Horiz, Cross) - n(Cross, Horiz),
    ];
    let pass = block_counts.0 == block_counts.1 && differences.iter().all(|&d| d == a);
    PairIdentityReport {
        a,
        block_counts,
        differences,
        pass,
    }
}

/// The four count functionals that are constant on a flux class:
/// `N(+) + N(WN) + N(—)`, `N(+) + N(WN) + N(|)`, total, `N(WN) - N(SE)`.
pub fn conserved_counts(s: &State) -> [i64; 4] {
    use VertexType::*;
    let c = s.count_types();
    let n = |t| c[t] as i64;
    [
        n(Cross) + n(CornerWN) + n(Horiz),
        n(Cross) + n(CornerWN) + n(Vert),
        c.total() as i64,
        n(CornerWN) - n(CornerSE),
    ]
}

/// Expected values of [`conserved_counts`] on a flux class:
/// `M k1`, `N k2`, `M N`, `0`.
pub fn expected_conserved_counts(geom: TorusGeometry, flux: FluxPair) -> [i64; 4] {
    [
        (geom.m * flux.k1) as i64,
        (geom.n * flux.k2) as i64,
        (geom.m * geom.n) as i64,
        0,
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct StationarityReport {
    pub mode: GeneratorMode,
    pub space_size: usize,
    pub residual_inf: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `max_j |(pi Q)_j|` for a given rate table, without precondition checks
/// on the weights. The Gibbs vector is always computed from `w`.
pub fn stationarity_residual(
    space: &StateSpace,
    w: &WeightVector,
    rates: &RateTable,
    mode: GeneratorMode,
) -> Result<StationarityReport> {
    let pi = enumeration::gibbs_distribution(space, w)?;
    let q = build_generator(space, rates, mode)?;
    let residual_inf = q.left_apply(&pi).iter().fold(0.0f64, |a, r| a.max(r.abs()));
    Ok(StationarityReport {
        mode,
        space_size: space.len(),
        residual_inf,
        tolerance: tolerance::STATIONARITY,
        pass: residual_inf <= tolerance::STATIONARITY,
    })
}

/// Enumerates `S_{k1,k2}` and checks `pi Q = 0`. One-directional modes are
/// only meaningful at the free-fermion point and are rejected elsewhere.
pub fn check_stationarity(
    geom: TorusGeometry,
    flux: FluxPair,
    w: &WeightVector,
    mode: GeneratorMode,
) -> Result<StationarityReport> {
    geom.check_dynamics_flux(flux)?;
    if mode != GeneratorMode::Full {
        let defect = free_fermion_defect(w);
        if defect.abs() > tolerance::DEFECT {
            return Err(Error::DefectNonzero {
                defect,
                tolerance: tolerance::DEFECT,
            });
        }
    }
    let space = enumerate_states(geom, flux)?;
    stationarity_residual(&space, w, &RateTable::from_weights(w), mode)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutflowReport {
    /// `outflow(s) - outflow(flip s)`.
    pub difference: f64,
    /// `A (R1 - R2 + R4)`.
    pub right_bracket: f64,
    /// `A (-L1 + L3 - L4)`.
    pub left_bracket: f64,
    /// Right-jump part of `difference`.
    pub right_difference: f64,
    /// Left-jump part of `difference`.
    pub left_difference: f64,
    /// Mismatch between the differences and the brackets, relative to the outflow.
    pub residual: f64,
    /// `|difference|` relative to the outflow.
    pub total_residual: f64,
    pub pass: bool,
}

fn directional_outflow(s: &State, rates: &RateTable) -> Result<(f64, f64)> {
    let (mut right, mut left) = (0.0, 0.0);
    for t in dynamics::find_triggers(s)? {
        let r = rates.get(dynamics::classify(s, t)?);
        match t.dir {
            dynamics::Direction::Right => right += r,
            dynamics::Direction::Left => left += r,
        }
    }
    Ok((right, left))
}

/// Compares the exit-rate difference between `s` and its flip with the
/// closed form in terms of `A` from [`check_pair_identities`].
pub fn check_outflow_decomposition(s: &State, w: &WeightVector) -> Result<OutflowReport> {
    let rates = RateTable::from_weights(w);
    let (r_s, l_s) = directional_outflow(s, &rates)?;
    let (r_f, l_f) = directional_outflow(&s.flip(), &rates)?;
    let a = check_pair_identities(s).a as f64;
    let k = |kind| rates.get(kind);
    let right_bracket = a * (k(JumpKind::R1) - k(JumpKind::R2) + k(JumpKind::R4));
    let left_bracket = a * (-k(JumpKind::L1) + k(JumpKind::L3) - k(JumpKind::L4));
    let right_difference = r_s - r_f;
    let left_difference = l_s - l_f;
    let difference = right_difference + left_difference;
    let scale = (r_s + l_s).max(r_f + l_f).max(1.0);
    let residual =
        ((right_difference - right_bracket).abs() + (left_difference - left_bracket).abs()) / scale;
    let total_residual = difference.abs() / scale;
    Ok(OutflowReport {
        difference,
        right_bracket,
        left_bracket,
        right_difference,
        left_difference,
        residual,
        total_residual,
        pass: residual <= tolerance::OUTFLOW && total_residual <= tolerance::OUTFLOW,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GaugeReport {
    pub transforms: usize,
    pub max_rate_relative_error: f64,
    pub max_gibbs_tv: f64,
    pub pass: bool,
}

/// Applies every kind with every constant of `grid`, plus the composite
/// kind 1 then 2 then 4, and compares rates and Gibbs vectors.
pub fn check_gauge_invariance(
    space: &StateSpace,
    w: &WeightVector,
    grid: &[f64],
) -> Result<GaugeReport> {
    let base_rates = RateTable::from_weights(w);
    let base_pi = enumeration::gibbs_distribution(space, w)?;
    let mut transformed = Vec::new();
    for &c in grid {
        for kind in GaugeKind::ALL {
            transformed.push(gauge_apply(w, kind, c)?);
        }
        let composite = gauge_apply(
            &gauge_apply(
                &gauge_apply(w, GaugeKind::Corner, c)?,
                GaugeKind::Vertical,
                c,
            )?,
            GaugeKind::Horizontal,
            c,
        )?;
        transformed.push(composite);
    }
    let mut report = GaugeReport {
        transforms: transformed.len(),
        max_rate_relative_error: 0.0,
        max_gibbs_tv: 0.0,
        pass: true,
    };
    for g in &transformed {
        let rates = RateTable::from_weights(g);
        for k in JumpKind::ALL {
            report.max_rate_relative_error = report
                .max_rate_relative_error
                .max(relative_error(rates.get(k), base_rates.get(k)));
        }
        let pi = enumeration::gibbs_distribution(space, g)?;
        let tv = 0.5
            * pi.iter()
                .zip(&base_pi)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
        report.max_gibbs_tv = report.max_gibbs_tv.max(tv);
    }
    report.pass = report.max_rate_relative_error <= tolerance::RATE
        && report.max_gibbs_tv <= tolerance::GIBBS_TV;
    Ok(report)
}

/// Names accepted by `verify --checks`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CheckName {
    FlipWeight,
    FlipBalance,
    PairIdentities,
    ConservedCounts,
    Stationarity,
    RightOnly,
    LeftOnly,
    Outflow,
    Gauge,
    RateDual,
}

impl CheckName {
    pub const ALL: [CheckName; 10] = [
        CheckName::FlipWeight,
        CheckName::FlipBalance,
        CheckName::PairIdentities,
        CheckName::ConservedCounts,
        CheckName::Stationarity,
        CheckName::RightOnly,
        CheckName::LeftOnly,
        CheckName::Outflow,
        CheckName::Gauge,
        CheckName::RateDual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckName::FlipWeight => "flip_weight",
            CheckName::FlipBalance => "flip_balance",
            CheckName::PairIdentities => "pair_identities",
            CheckName::ConservedCounts => "conserved_counts",
            CheckName::Stationarity => "stationarity",
            CheckName::RightOnly => "right_only",
            CheckName::LeftOnly => "left_only",
            CheckName::Outflow => "outflow",
            CheckName::Gauge => "gauge",
            CheckName::RateDual => "rate_dual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Parse {
                location: "--checks".into(),
                message: format!("unknown check {s:?}"),
            })
    }
}

/// Default gauge constants.
pub const GAUGE_GRID: [f64; 3] = [0.5, 2.0, 7.0];

/// Runs the selected checks on one configuration. With `checks = None` all
/// applicable checks run; the one-directional stationarity checks are then
/// included only at the free-fermion point.
pub fn run_checks(
    geom: TorusGeometry,
    flux: FluxPair,
    w: &WeightVector,
    checks: Option<&[CheckName]>,
) -> Result<Vec<CheckReport>> {
    geom.check_dynamics_flux(flux)?;
    let free_fermion = free_fermion_defect(w).abs() <= tolerance::DEFECT;
    let selected: Vec<CheckName> = match checks {
        Some(c) => c.to_vec(),
        None => CheckName::ALL
            .into_iter()
            .filter(|c| free_fermion || !matches!(c, CheckName::RightOnly | CheckName::LeftOnly))
            .collect(),
    };
    let space = enumerate_states(geom, flux)?;
    let rates = RateTable::from_weights(w);
    let config = format!("{} w={}", space_config(&space), w);
    let mut reports = Vec::new();
    for check in selected {
        let name = check.name();
        let report = match check {
            CheckName::FlipWeight => {
                let mut r = check_flip_weight(&space);
                r.config = config.clone();
                r
            }
            CheckName::FlipBalance => {
                let pi = enumeration::gibbs_distribution(&space, w)?;
                let q = build_generator(&space, &rates, GeneratorMode::Full)?;
                let b = check_flip_balance(&space, &q, &pi)?;
                CheckReport::new(
                    name,
                    config.clone(),
                    b.max_relative_error,
                    tolerance::FLIP_BALANCE,
                )
            }
            CheckName::PairIdentities => {
                let failures = space
                    .states()
                    .filter(|s| !check_pair_identities(s).pass)
                    .count();
                CheckReport::new(name, config.clone(), failures as f64, 0.0)
            }
            CheckName::ConservedCounts => {
                let expected = expected_conserved_counts(geom, flux);
                let failures = space
                    .states()
                    .filter(|s| conserved_counts(s) != expected)
                    .count();
                CheckReport::new(name, config.clone(), failures as f64, 0.0)
            }
            CheckName::Stationarity | CheckName::RightOnly | CheckName::LeftOnly => {
                let mode = match check {
                    CheckName::Stationarity => GeneratorMode::Full,
                    CheckName::RightOnly => GeneratorMode::RightOnly,
                    _ => GeneratorMode::LeftOnly,
                };
                // Explicitly selected one-directional checks run at any
                // weights and report their residual.
                let r = stationarity_residual(&space, w, &rates, mode)?;
                CheckReport::new(name, config.clone(), r.residual_inf, r.tolerance)
            }
            CheckName::Outflow => {
                let mut worst = 0.0f64;
                for s in space.states() {
                    let r = check_outflow_decomposition(&s, w)?;
                    worst = worst.max(r.residual).max(r.total_residual);
                }
                CheckReport::new(name, config.clone(), worst, tolerance::OUTFLOW)
            }
            CheckName::Gauge => {
                let g = check_gauge_invariance(&space, w, &GAUGE_GRID)?;
                CheckReport::new(
                    name,
                    config.clone(),
                    g.max_rate_relative_error.max(g.max_gibbs_tv),
                    tolerance::RATE.min(tolerance::GIBBS_TV),
                )
            }
            CheckName::RateDual => {
                let mut worst = 0.0f64;
                for s in space.states() {
                    for t in dynamics::find_triggers(&s)? {
                        let direct = rates.get(dynamics::classify(&s, t)?);
                        let dual = dynamics::rate_via_dual(&s, t, w)?;
                        worst = worst.max(relative_error(direct, dual));
                    }
                }
                CheckReport::new(name, config.clone(), worst, tolerance::RATE)
            }
        };
        reports.push(report);
    }
    Ok(reports)
}
