//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sixvertex::dynamics::{
    apply_move, classify, find_triggers, jump_rate, rate_via_dual, resolve_move, trigger_at,
    Direction, JumpKind, RateTable,
};
use sixvertex::enumeration::{
    build_generator, enumerate_bruteforce, enumerate_states, gibbs_distribution, GeneratorMode,
    StateSpace,
};
use sixvertex::simulation::{
    empirical_distribution, total_variation, Horizon, SimConfig, Simulator,
};
use sixvertex::verification::{
    check_flip_balance, check_gauge_invariance, check_pair_identities, conserved_counts,
    expected_conserved_counts, stationarity_residual, GAUGE_GRID,
};
use sixvertex::weights::{free_fermion_defect, state_log_weight};
use sixvertex::{FluxPair, State, TorusGeometry, VertexType, WeightVector};

const GRIDS: [(usize, usize, usize, usize); 7] = [
    (2, 2, 1, 1),
    (3, 2, 1, 1),
    (2, 3, 1, 1),
    (3, 3, 1, 1),
    (3, 3, 2, 1),
    (4, 3, 2, 1),
    (3, 4, 1, 2),
];
const WEIGHTS: [[f64; 6]; 3] = [
    [1.0; 6],
    [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
    [2.0, 1.0, 5.0, 3.0, 1.0, 4.0],
];
const FREE_FERMION: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 1.0, 1.0];

const STATIONARITY_TOL: f64 = 1e-10;
const BREAK_THRESHOLD: f64 = 1e-4;
const FLIP_BALANCE_TOL: f64 = 1e-12;
const RATE_TOL: f64 = 1e-12;
const TV_TOL: f64 = 0.02;

/// Regression constant taken from the brute-force oracle.
const SIZE_2211: usize = 6;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn geom(m: usize, n: usize) -> TorusGeometry {
    TorusGeometry::new(m, n).unwrap()
}

fn space(m: usize, n: usize, k1: usize, k2: usize) -> StateSpace {
    enumerate_states(geom(m, n), FluxPair::new(k1, k2)).unwrap()
}

fn weights(w: [f64; 6]) -> WeightVector {
    WeightVector::new(w).unwrap()
}

fn random_weights(rng: &mut ChaCha8Rng) -> WeightVector {
    let mut w = [0.0; 6];
    for x in &mut w {
        *x = rng.random_range(-1.5f64..1.5).exp();
    }
    weights(w)
}

fn residual(sp: &StateSpace, w: &WeightVector, rates: &RateTable, mode: GeneratorMode) -> f64 {
    stationarity_residual(sp, w, rates, mode)
        .unwrap()
        .residual_inf
}

fn c1_stationarity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut runs = 0;
    for (m, n, k1, k2) in GRIDS {
        let sp = space(m, n, k1, k2);
        for wv in WEIGHTS {
            let w = weights(wv);
            worst = worst.max(residual(
                &sp,
                &w,
                &RateTable::from_weights(&w),
                GeneratorMode::Full,
            ));
            runs += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= STATIONARITY_TOL && secs < 60.0,
        format!("{runs} configs, max |piQ| = {worst:.2e} (tol {STATIONARITY_TOL:.0e}), {secs:.2} s (limit 60 s)"),
    )
}

fn c2_free_fermion() -> Outcome {
    let ff = weights(FREE_FERMION);
    let defect = free_fermion_defect(&ff);
    let ff_rates = RateTable::from_weights(&ff);
    let mut worst_ff = 0.0f64;
    let mut worst_generic = 0.0f64;
    for (m, n, k1, k2) in GRIDS {
        let sp = space(m, n, k1, k2);
        for mode in [GeneratorMode::RightOnly, GeneratorMode::LeftOnly] {
            worst_ff = worst_ff.max(residual(&sp, &ff, &ff_rates, mode));
        }
        for wv in &WEIGHTS[1..] {
            let w = weights(*wv);
            worst_generic = worst_generic.max(residual(
                &sp,
                &w,
                &RateTable::from_weights(&w),
                GeneratorMode::RightOnly,
            ));
        }
    }
    let ff_pass = defect == 0.0 && worst_ff <= STATIONARITY_TOL;
    let generic_fails = worst_generic > BREAK_THRESHOLD;
    // Supplementary: a torus where one-directional dynamics does break.
    let sp = space(4, 4, 2, 2);
    let w = weights(WEIGHTS[1]);
    let extra = residual(
        &sp,
        &w,
        &RateTable::from_weights(&w),
        GeneratorMode::RightOnly,
    );
    outcome(
        ff_pass && generic_fails,
        format!(
            "defect {defect}; right/left_only at free-fermion max {worst_ff:.2e} (tol {STATIONARITY_TOL:.0e}); \
             generic right_only max {worst_generic:.2e} on listed grids (must exceed {BREAK_THRESHOLD:.0e}); \
             supplementary (4,4,2,2) generic right_only {extra:.2e}"
        ),
    )
}

fn c3_flip_balance() -> Outcome {
    let mut worst = 0.0f64;
    let mut edges = 0;
    let mut missing = 0;
    for (m, n, k1, k2) in GRIDS {
        let sp = space(m, n, k1, k2);
        for wv in WEIGHTS {
            let w = weights(wv);
            let pi = gibbs_distribution(&sp, &w).unwrap();
            let q =
                build_generator(&sp, &RateTable::from_weights(&w), GeneratorMode::Full).unwrap();
            let r = check_flip_balance(&sp, &q, &pi).unwrap();
            worst = worst.max(r.max_relative_error);
            edges += r.edges;
            missing += r.missing_reverse;
        }
    }
    outcome(
        worst <= FLIP_BALANCE_TOL && missing == 0,
        format!("{edges} edges, {missing} without flip-reverse, max relative error {worst:.2e} (tol {FLIP_BALANCE_TOL:.0e})"),
    )
}

/// Returns the number of violated identities on `s`.
fn identity_failures(s: &State) -> usize {
    use VertexType::*;
    let c = s.count_types();
    let f = s.flip();
    let fc = f.count_types();
    let w = weights(WEIGHTS[1]);
    let mut bad = 0;
    bad += (c[CornerWN] != c[CornerSE]) as usize;
    bad += (fc[CornerWN] != c[CornerSE] || fc[CornerSE] != c[CornerWN]) as usize;
    bad += [Empty, Cross, Horiz, Vert]
        .iter()
        .filter(|&&t| fc[t] != c[t])
        .count();
    bad += (state_log_weight(s, &w) != state_log_weight(&f, &w)) as usize;
    bad += (!check_pair_identities(s).pass) as usize;
    bad += (conserved_counts(s) != expected_conserved_counts(s.geometry(), s.flux())) as usize;
    bad
}

fn c4_identities() -> Outcome {
    let mut states = 0;
    let mut bad = 0;
    for (m, n, k1, k2) in GRIDS {
        for s in space(m, n, k1, k2).states() {
            states += 1;
            bad += identity_failures(&s);
        }
    }
    for (m, n) in [(2, 2), (3, 2), (2, 3)] {
        for sp in enumerate_bruteforce(geom(m, n)).unwrap().values() {
            for s in sp.states() {
                states += 1;
                bad += identity_failures(&s);
            }
        }
    }
    let enumerated = states;
    let start = State::canonical(geom(6, 5), FluxPair::new(2, 2)).unwrap();
    let mut sim = Simulator::new(start, RateTable::from_weights(&weights(WEIGHTS[2])), 4).unwrap();
    for _ in 0..1000 {
        for _ in 0..7 {
            sim.step().unwrap();
        }
        states += 1;
        bad += identity_failures(sim.state());
    }
    outcome(
        bad == 0,
        format!(
            "{enumerated} enumerated + {} simulated (6,5,2,2) states, {bad} identity violations",
            states - enumerated
        ),
    )
}

fn c5_oracle() -> Outcome {
    let mut classes = 0;
    let mut mismatches = 0;
    for (m, n) in [(2, 2), (3, 2)] {
        let g = geom(m, n);
        for (flux, oracle) in enumerate_bruteforce(g).unwrap() {
            classes += 1;
            let dfs = enumerate_states(g, flux).unwrap();
            mismatches += (dfs.codes() != oracle.codes()) as usize;
        }
    }
    let size = space(2, 2, 1, 1).len();
    outcome(
        mismatches == 0 && size == SIZE_2211,
        format!("{classes} flux classes on 2x2 and 3x2, {mismatches} mismatches; |S(2,2,1,1)| = {size} (frozen {SIZE_2211})"),
    )
}

fn random_state(rng: &mut ChaCha8Rng) -> (State, WeightVector) {
    let m = rng.random_range(2..9);
    let n = rng.random_range(2..9);
    let flux = FluxPair::new(rng.random_range(1..n), rng.random_range(1..m));
    let w = random_weights(rng);
    let start = State::canonical(geom(m, n), flux).unwrap();
    let mut sim = Simulator::new(start, RateTable::from_weights(&w), rng.random()).unwrap();
    for _ in 0..rng.random_range(0..200) {
        sim.step().unwrap();
    }
    (sim.state().clone(), w)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn c6_rates() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut triggers = 0;
    let mut worst_dual = 0.0f64;
    while triggers < 10_000 {
        let (s, w) = random_state(&mut rng);
        for t in find_triggers(&s).unwrap() {
            let kind = classify(&s, t).unwrap();
            worst_dual =
                worst_dual.max(rel(jump_rate(kind, &w), rate_via_dual(&s, t, &w).unwrap()));
            triggers += 1;
        }
    }
    let mut worst_inverse = 0.0f64;
    for _ in 0..10_000 {
        let w = random_weights(&mut rng);
        for i in 0..4 {
            let r = jump_rate(JumpKind::ALL[i], &w);
            let l = jump_rate(JumpKind::ALL[i + 4], &w);
            worst_inverse = worst_inverse.max(rel(l, 1.0 / r));
        }
    }
    let mut gauge_rate = 0.0f64;
    let mut gauge_tv = 0.0f64;
    for (m, n, k1, k2) in GRIDS {
        let sp = space(m, n, k1, k2);
        for wv in WEIGHTS {
            let g = check_gauge_invariance(&sp, &weights(wv), &GAUGE_GRID).unwrap();
            gauge_rate = gauge_rate.max(g.max_rate_relative_error);
            gauge_tv = gauge_tv.max(g.max_gibbs_tv);
        }
    }
    outcome(
        worst_dual <= RATE_TOL && worst_inverse <= RATE_TOL && gauge_rate <= RATE_TOL && gauge_tv <= RATE_TOL,
        format!(
            "{triggers} triggers: table vs dual {worst_dual:.2e}; Li*Ri-1 {worst_inverse:.2e}; \
             gauge C in {GAUGE_GRID:?}: rates {gauge_rate:.2e}, Gibbs TV {gauge_tv:.2e} (tol {RATE_TOL:.0e})"
        ),
    )
}

#[derive(Clone, Copy)]
enum Role {
    A,
    B,
    C,
    D,
    BetweenLeft,
    BetweenRight,
}

/// Allowed local retypings of a column jump.
fn expected_retype(dir: Direction, role: Role, before: VertexType) -> Option<VertexType> {
    use Role::*;
    use VertexType::*;
    let table: &[(VertexType, VertexType)] = match (dir, role) {
        (Direction::Right, A) => &[(CornerWN, Horiz), (Vert, CornerSE)],
        (Direction::Right, B) => &[(Empty, CornerWN), (CornerSE, Cross)],
        (Direction::Right, C) => &[(CornerSE, Empty), (Cross, CornerWN)],
        (Direction::Right, D) => &[(Horiz, CornerSE), (CornerWN, Vert)],
        (Direction::Right, BetweenLeft) => &[(Vert, Empty)],
        (Direction::Right, BetweenRight) => &[(Empty, Vert)],
        (Direction::Left, A) => &[(Horiz, CornerWN), (CornerSE, Vert)],
        (Direction::Left, B) => &[(CornerWN, Empty), (Cross, CornerSE)],
        (Direction::Left, C) => &[(Empty, CornerSE), (CornerWN, Cross)],
        (Direction::Left, D) => &[(Vert, CornerWN), (CornerSE, Horiz)],
        (Direction::Left, BetweenLeft) => &[(Horiz, Cross)],
        (Direction::Left, BetweenRight) => &[(Cross, Horiz)],
    };
    table.iter().find(|p| p.0 == before).map(|p| p.1)
}

/// Number of vertices whose retyping disagrees with the tables.
fn retype_violations(
    before: &State,
    after: &State,
    x: usize,
    y: usize,
    y_top: usize,
    span: usize,
    dir: Direction,
) -> usize {
    let g = before.geometry();
    let xr = g.right(x);
    let mut role = vec![None; g.m * g.n];
    role[x * g.n + y] = Some(Role::A);
    role[xr * g.n + y] = Some(Role::B);
    role[x * g.n + y_top] = Some(Role::C);
    role[xr * g.n + y_top] = Some(Role::D);
    for i in 1..span {
        let j = (y + i) % g.n;
        role[x * g.n + j] = Some(Role::BetweenLeft);
        role[xr * g.n + j] = Some(Role::BetweenRight);
    }
    let mut bad = 0;
    for a in 0..g.m {
        for b in 0..g.n {
            let (t0, t1) = (before.vertex_type(a, b), after.vertex_type(a, b));
            let ok = match role[a * g.n + b] {
                Some(r) => expected_retype(dir, r, t0) == Some(t1),
                None => t0 == t1,
            };
            bad += (!ok) as usize;
        }
    }
    bad
}

fn c7_dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut moves = 0;
    let mut invalid = 0;
    let mut retype_bad = 0;
    let mut reverse_bad = 0;
    while moves < 100_000 {
        let (mut s, _) = random_state(&mut rng);
        let flux = s.flux();
        for _ in 0..500 {
            let triggers = find_triggers(&s).unwrap();
            let t = triggers[rng.random_range(0..triggers.len())];
            let mv = resolve_move(&s, t).unwrap();
            let next = apply_move(&s, &mv).unwrap();
            if next.validate() != Ok(flux) {
                invalid += 1;
            }
            retype_bad += retype_violations(&s, &next, t.x, t.y, mv.y_top, mv.span, t.dir);
            let back = trigger_at(&next, t.x, t.y) == Some(t.dir.reverse())
                && classify(
                    &next,
                    sixvertex::dynamics::Trigger {
                        dir: t.dir.reverse(),
                        ..t
                    },
                )
                .ok()
                    == Some(mv.kind.reverse());
            reverse_bad += (!back) as usize;
            s = next;
            moves += 1;
        }
    }
    let start = State::canonical(geom(6, 5), FluxPair::new(2, 2)).unwrap();
    let mut sim = Simulator::new(start, RateTable::from_weights(&weights(WEIGHTS[1])), 77).unwrap();
    let mut rescan_bad = 0;
    for _ in 0..10_000 {
        sim.step().unwrap();
        if sim.triggers() != sim.full_rescan().unwrap()
            || sim.type_counts() != sim.state().count_types()
        {
            rescan_bad += 1;
        }
    }
    outcome(
        invalid == 0 && retype_bad == 0 && reverse_bad == 0 && rescan_bad == 0,
        format!(
            "{moves} moves: {invalid} invalid, {retype_bad} retyping mismatches, {reverse_bad} non-reversible; \
             10000-event incremental vs full rescan: {rescan_bad} mismatches"
        ),
    )
}

fn c8_mutation() -> Outcome {
    let sp = space(3, 3, 1, 1);
    let w = WeightVector::ones();
    let base = RateTable::from_weights(&w);
    let mut parts = Vec::new();
    let mut undetected = Vec::new();
    for kind in JumpKind::ALL {
        let r = residual(&sp, &w, &base.scaled(kind, 1.01), GeneratorMode::Full);
        parts.push(format!("{kind} {r:.1e}"));
        if r <= BREAK_THRESHOLD {
            undetected.push(kind.to_string());
        }
    }
    // Supplementary: (4,4,1,3) admits pairs with two vertical arrows in a row.
    let sp4 = space(4, 4, 1, 3);
    let extra: Vec<String> = [JumpKind::R4, JumpKind::L4]
        .iter()
        .map(|&k| {
            format!(
                "{k} {:.1e}",
                residual(&sp4, &w, &base.scaled(k, 1.01), GeneratorMode::Full)
            )
        })
        .collect();
    outcome(
        undetected.is_empty(),
        format!(
            "(3,3,1,1) residuals: {}; below {BREAK_THRESHOLD:.0e}: [{}]; supplementary (4,4,1,3): {}",
            parts.join(", "),
            undetected.join(", "),
            extra.join(", ")
        ),
    )
}

fn c9_sampling() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for ((m, n, k1, k2), seed) in [((3, 3, 1, 1), 2024u64), ((2, 2, 1, 1), 99)] {
        let sp = space(m, n, k1, k2);
        let cfg = SimConfig::new(
            geom(m, n),
            FluxPair::new(k1, k2),
            WeightVector::ones(),
            seed,
            Horizon::Events(1_200_000),
        );
        let p = empirical_distribution(&cfg, &sp).unwrap();
        let pi = gibbs_distribution(&sp, &cfg.weights).unwrap();
        let tv = total_variation(&p, &pi);
        pass &= tv <= TV_TOL;
        parts.push(format!("({m},{n},{k1},{k2}) seed {seed} TV {tv:.4}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        pass && secs < 120.0,
        format!(
            "1.2e6 events each (10% burn-in): {} (tol {TV_TOL}), {secs:.2} s (limit 120 s)",
            parts.join(", ")
        ),
    )
}

fn c10_drift() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_sixvertex"))
        .args([
            "simulate", "--M", "6", "--N", "5", "--k1", "2", "--k2", "2", "--seed", "10",
        ])
        .output()
        .expect("binary runs");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).expect("summary is JSON");
    let obs = &v["observables"];
    let drift = obs["drift"].as_f64();
    let counts: Vec<u64> = obs["jump_counts"]
        .as_array()
        .map(|a| a.iter().filter_map(|c| c.as_u64()).collect())
        .unwrap_or_default();
    let pass = out.status.success() && drift.is_some_and(f64::is_finite) && counts.len() == 8;
    outcome(
        pass,
        format!(
            "exit {:?}, drift {drift:?}, jump counts {counts:?}",
            out.status.code()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("stationarity", c1_stationarity),
        ("free-fermion one-directional", c2_free_fermion),
        ("flip balance", c3_flip_balance),
        ("count identities", c4_identities),
        ("enumeration oracle", c5_oracle),
        ("rate consistency", c6_rates),
        ("dynamics soundness", c7_dynamics),
        ("mutation sensitivity", c8_mutation),
        ("long-run sampling", c9_sampling),
        ("drift reporting", c10_drift),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failed += (!o.pass) as usize;
        println!(
            "[{}] {:>2} {name}: {} ({:.2} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
