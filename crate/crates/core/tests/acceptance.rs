//! Acceptance suite. Runs every exit criterion, prints one PASS/FAIL line
//! per criterion and exits non-zero if any fails.

mod common;

use std::path::PathBuf;
use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{Msd, Rk4Lanes, LANES};
use swarmlink_core::formation::{nominal_layout, RateClass, ShapeClass};
use swarmlink_core::impedance::{
    build_discrete_model, classify_damping, step_link, DampingClass, ImpedanceLinkState, ImpedanceParams,
};
use swarmlink_core::scenario::{load_scenario, run_scenario, LogRow, LogTable, ScenarioConfig};
use swarmlink_core::tactile::{render_pattern, select_pattern, Level, PatternId, TactileFrame};
use swarmlink_core::Link;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn load(name: &str) -> ScenarioConfig {
    let path = scenario_dir().join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    load_scenario(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn shipped() -> Vec<(String, ScenarioConfig)> {
    let mut names: Vec<String> = std::fs::read_dir(scenario_dir())
        .expect("scenario directory")
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".toml"))
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), load(&n))).collect()
}

fn run(cfg: &ScenarioConfig) -> LogTable {
    run_scenario(cfg).unwrap_or_else(|e| panic!("{e}"))
}

const HUM1: usize = Link::Hum1 as usize;

// Cruise scenario phases (s).
const ACCEL: (f64, f64) = (1.0, 2.0);
const CRUISE: (f64, f64) = (2.0, 5.0);
const STOP: f64 = 6.0;

fn in_phase(row: &LogRow, (a, b): (f64, f64)) -> bool {
    row.time_s >= a - 1e-9 && row.time_s <= b + 1e-9
}

/// 1. Exact discretization against dense RK4 over random draws in every
/// damping regime.
fn discretization_oracle() -> Verdict {
    const DRAWS: usize = 1000;
    const STEPS: usize = 800;
    const RK4_DT: f64 = 1e-6;
    const TOL: f64 = 1e-6;

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0f64;
    let mut regimes = [0usize; 3];

    for _ in 0..DRAWS / LANES {
        let mut systems = [Msd { mass: 1.0, damping: 0.0, stiffness: 1.0 }; LANES];
        let mut periods = [0.0; LANES];
        let mut models = Vec::with_capacity(LANES);
        for lane in 0..LANES {
            let mass: f64 = rng.gen_range(0.5..=5.0);
            let stiffness: f64 = rng.gen_range(1.0..=50.0);
            let damping = match rng.gen_range(0..10) {
                0 => 2.0 * (mass * stiffness).sqrt(),
                1 => 0.0,
                _ => rng.gen_range(0.0..=30.0),
            };
            let params = ImpedanceParams::new(mass, damping, stiffness).unwrap();
            regimes[match classify_damping(&params) {
                DampingClass::Underdamped => 0,
                DampingClass::Critical => 1,
                DampingClass::Overdamped => 2,
            }] += 1;
            periods[lane] = rng.gen_range(1.0 / 120.0..=1.0 / 60.0);
            systems[lane] = Msd { mass, damping, stiffness };
            models.push(build_discrete_model(params, periods[lane]).unwrap());
        }
        let substeps = (periods.iter().cloned().fold(0.0, f64::max) / RK4_DT).ceil() as usize;
        let mut oracle = Rk4Lanes::new(&systems);
        let mut exact = [Vector2::zeros(); LANES];
        for _ in 0..STEPS {
            let forces: [f64; LANES] = std::array::from_fn(|_| rng.gen_range(-20.0..=20.0));
            oracle.advance(&forces, &periods, substeps);
            for lane in 0..LANES {
                exact[lane] = models[lane].propagate(exact[lane], forces[lane]);
                worst = worst.max((exact[lane].x - oracle.x[lane]).abs());
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let covered = regimes.iter().all(|&n| n > 0);
    verdict(
        worst <= TOL && covered && secs < 120.0,
        format!(
            "max |Δx| error {worst:.2e} m (tol {TOL:e}) over {DRAWS} draws × {STEPS} steps; \
             regimes under/critical/over = {regimes:?}; {secs:.1} s"
        ),
    )
}

/// 2. Default link parameters: regime, settling and overshoot.
fn default_parameters() -> Verdict {
    let params = ImpedanceParams::default();
    let class = classify_damping(&params);
    let model = build_discrete_model(params, 1.0 / 80.0).unwrap();
    let force = Vector3::new(-7.0, 0.0, 0.0);
    let target = -7.0 / 21.0;
    let mut state = ImpedanceLinkState::default();
    let mut peak = 0.0f64;
    for _ in 0..800 {
        // Very wide limit: this checks the raw response.
        state = step_link(&model, &state, &force, 1e9).unwrap();
        peak = peak.min(state.displacement.x);
    }
    let settle = (state.displacement.x - target).abs();
    let overshoot = (peak - target) / target;
    verdict(
        class == DampingClass::Underdamped && settle <= 1e-3 && overshoot < 0.01,
        format!(
            "class {class:?} (D² = {:.2} < 4MK = {:.2}); |Δx(10 s) + 1/3| = {settle:.2e}; overshoot {:.2e} %",
            params.damping().powi(2),
            4.0 * params.mass() * params.stiffness(),
            overshoot * 100.0
        ),
    )
}

/// 3. Clamp plateau during the 1.5 m/s cruise.
fn clamp_saturation(log: &LogTable) -> Verdict {
    let cruise: Vec<&LogRow> = log.rows.iter().filter(|r| in_phase(r, CRUISE)).collect();
    let first = cruise.iter().position(|r| r.link_correction[HUM1][0] == -0.25);
    let holds = first.is_some_and(|i| cruise[i..].iter().all(|r| r.link_correction[HUM1][0] == -0.25));
    let bounded = log.rows.iter().all(|r| r.link_correction.iter().flatten().all(|c| c.abs() <= 0.25));
    let end = cruise.last().unwrap();
    let raw = end.link_displacement[HUM1][0];
    let expected_raw = -7.0 * 1.5 / 21.0;
    let speed = end.hand_velocity[0];
    verdict(
        holds && bounded && (raw - expected_raw).abs() <= 1e-3,
        format!(
            "plateau at -0.25 from t = {:?} s to end of cruise: {holds}; raw Δx at cruise end {raw:.6} m \
             (K_v·v/K_d = {expected_raw}); hand speed {speed:.6} m/s",
            first.map(|i| cruise[i].time_s)
        ),
    )
}

/// 4. Drone 1 to drone 4 separation spreads while accelerating and relaxes
/// after the stop.
fn spread_then_contract(log: &LogTable) -> Verdict {
    let sep = |r: &LogRow| r.positions[0][0] - r.positions[3][0];
    let max_accel = log
        .rows
        .iter()
        .filter(|r| in_phase(r, ACCEL))
        .map(sep)
        .fold(f64::NEG_INFINITY, f64::max);
    let settled: Vec<f64> = log.rows.iter().filter(|r| r.time_s >= STOP + 5.0 - 1e-9).map(sep).collect();
    let worst = settled.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let peak = log.rows.iter().map(sep).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        max_accel > 1.0 && !settled.is_empty() && worst <= 0.02,
        format!(
            "max separation while accelerating {max_accel:.4} m (> 1.0); overall peak {peak:.4} m; \
             worst |sep - 1.0| from t = {} s on: {worst:.2e} m (tol 0.02)",
            STOP + 5.0
        ),
    )
}

/// 5. Displacement from the nominal layout grows down the cascade.
fn lag_monotonicity(cfg: &ScenarioConfig, log: &LogTable) -> Verdict {
    let f = &cfg.world.formation;
    let mut violations = 0;
    let mut ticks = 0;
    let mut sample = String::new();
    for r in log.rows.iter().filter(|r| in_phase(r, CRUISE)) {
        let hand = Vector3::from(r.hand_position);
        let nominal = nominal_layout(f, &hand, &f.heading).unwrap();
        let d: Vec<f64> = (0..4).map(|i| (Vector3::from(r.positions[i]) - nominal[i]).norm()).collect();
        ticks += 1;
        if !(d[3] >= d[1] && d[3] >= d[2] && d[1] >= d[0] && d[2] >= d[0]) {
            violations += 1;
        }
        if (r.time_s - 3.5).abs() < 1e-9 {
            sample = format!("|d| at t = 3.5 s: {:.3} {:.3} {:.3} {:.3}", d[0], d[1], d[2], d[3]);
        }
    }
    verdict(
        violations == 0 && ticks > 0,
        format!("{violations} violating ticks of {ticks} cruise ticks; {sample}"),
    )
}

/// 6. With sustained hand motion along the heading, the hand link's
/// heading-axis correction opposes it. Checked on every shipped scenario.
fn opposition(logs: &[(String, LogTable)]) -> Verdict {
    const SPEED: f64 = 0.05;
    const SUSTAIN: f64 = 0.5;
    let mut checked = 0usize;
    let mut failures: Vec<(String, f64)> = Vec::new();
    for (name, log) in logs {
        let window = (SUSTAIN / log.sample_period_s).round() as usize;
        let mut run_sign = 0.0;
        let mut run_len = 0usize;
        for r in &log.rows {
            let u = Vector3::from(r.heading);
            let v = Vector3::from(r.hand_velocity).dot(&u);
            let sign = if v > SPEED {
                1.0
            } else if v < -SPEED {
                -1.0
            } else {
                0.0
            };
            if sign != 0.0 && sign == run_sign {
                run_len += 1;
            } else {
                run_sign = sign;
                run_len = usize::from(sign != 0.0);
            }
            // The last `window + 1` samples span SUSTAIN seconds.
            if run_len > window {
                checked += 1;
                let c = Vector3::from(r.link_correction[HUM1]).dot(&u);
                if !(c * run_sign < 0.0) {
                    failures.push((name.clone(), r.time_s));
                }
            }
        }
    }
    let mut by_scenario: Vec<String> = Vec::new();
    for (name, _) in logs {
        let times: Vec<f64> = failures.iter().filter(|f| &f.0 == name).map(|f| f.1).collect();
        if let (Some(a), Some(b)) = (times.first(), times.last()) {
            by_scenario.push(format!("{name}: {} ticks in t = {a:.4}..{b:.4} s", times.len()));
        }
    }
    verdict(
        failures.is_empty() && checked > 0,
        format!(
            "{checked} sustained-motion ticks checked, {} violations {by_scenario:?}",
            failures.len()
        ),
    )
}

fn golden(pattern: PatternId) -> Vec<TactileFrame> {
    use Level::*;
    let f = |start_ms, duration_ms, fingers| TactileFrame {
        start_ms,
        duration_ms,
        fingers,
    };
    match pattern {
        PatternId::EI => vec![
            f(0, 200, [Off, Off, Low, Off, Off]),
            f(200, 300, [Off, Mid, Off, Mid, Off]),
            f(500, 300, [High, Off, Off, Off, High]),
        ],
        PatternId::ED => vec![
            f(0, 300, [Off, Off, High, Off, Off]),
            f(300, 300, [Off, Mid, Off, Mid, Off]),
            f(600, 200, [Low, Off, Off, Off, Low]),
        ],
        PatternId::EC => vec![
            f(0, 300, [Off, Off, Mid, Off, Off]),
            f(300, 300, [Off, Mid, Off, Mid, Off]),
            f(600, 300, [Mid, Off, Off, Off, Mid]),
        ],
        PatternId::CI => vec![
            f(0, 300, [High, Off, Off, Off, High]),
            f(300, 300, [Off, Mid, Off, Mid, Off]),
            f(600, 200, [Off, Off, Low, Off, Off]),
        ],
        PatternId::CD => vec![
            f(0, 200, [Low, Off, Off, Off, Low]),
            f(200, 300, [Off, Mid, Off, Mid, Off]),
            f(500, 300, [Off, Off, High, Off, Off]),
        ],
        PatternId::CC => vec![
            f(0, 300, [Mid, Off, Off, Off, Mid]),
            f(300, 300, [Off, Mid, Off, Mid, Off]),
            f(600, 300, [Off, Off, Mid, Off, Off]),
        ],
        PatternId::None => vec![],
    }
}

/// 7. Frozen tactile waves, timing rules and selection coverage.
fn tactile_goldens() -> Verdict {
    let mut problems = Vec::new();
    for p in PatternId::ACTIVE {
        let wave = render_pattern(p);
        if wave.frames != golden(p) {
            problems.push(format!("{} differs from golden", p.as_str()));
        }
        if wave.gap_ms != 600 {
            problems.push(format!("{} gap {}", p.as_str(), wave.gap_ms));
        }
        for fr in &wave.frames {
            let want = if fr.max_level() == Level::Low { 200 } else { 300 };
            if fr.duration_ms != want {
                problems.push(format!("{} step at {} ms lasts {}", p.as_str(), fr.start_ms, fr.duration_ms));
            }
        }
    }
    let ei = render_pattern(PatternId::EI);
    if ei.active_ms() != 800 || ei.period_ms() != 1400 {
        problems.push(format!("EI active {} ms, period {} ms", ei.active_ms(), ei.period_ms()));
    }
    let mut image = Vec::new();
    for s in ShapeClass::ALL {
        for r in RateClass::ALL {
            image.push(select_pattern(s, r));
        }
    }
    let surjective = PatternId::ACTIVE.iter().all(|p| image.contains(p)) && image.contains(&PatternId::None);
    if !surjective || image.len() != 9 {
        problems.push("selection not total/surjective".into());
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "6 goldens match; EI = 800 ms + 600 ms gap; LOW steps 200 ms; selection covers all 6 + NONE".into()
        } else {
            problems.join("; ")
        },
    )
}

/// 8. Byte-identical CSV on replay.
fn determinism(scenarios: &[(String, ScenarioConfig)], first: &[(String, LogTable)]) -> Verdict {
    let mut differing = Vec::new();
    for ((name, cfg), (_, log)) in scenarios.iter().zip(first) {
        if run(cfg).to_csv() != log.to_csv() {
            differing.push(name.clone());
        }
    }
    verdict(
        differing.is_empty(),
        format!("{} scenarios replayed; differing: {differing:?}", scenarios.len()),
    )
}

/// 9. Vehicles 2 and 3 stay mirror images when the hand only moves along the
/// heading.
fn mirror_symmetry(scenarios: &[(String, ScenarioConfig)], logs: &[(String, LogTable)]) -> Verdict {
    let mut worst = 0.0f64;
    let mut used = Vec::new();
    for ((name, cfg), (_, log)) in scenarios.iter().zip(logs) {
        let f = &cfg.world.formation;
        let axis_only = f.heading == Vector3::x()
            && matches!(f.heading_mode, swarmlink_core::formation::HeadingMode::Fixed)
            && log.rows.iter().all(|r| r.hand_position[1] == log.rows[0].hand_position[1]
                && r.hand_position[2] == log.rows[0].hand_position[2]);
        if !axis_only {
            continue;
        }
        used.push(name.clone());
        for r in &log.rows {
            let axis_y = r.hand_position[1];
            let (p2, p3) = (r.positions[1], r.positions[2]);
            worst = worst
                .max((p2[0] - p3[0]).abs())
                .max(((p2[1] - axis_y) + (p3[1] - axis_y)).abs())
                .max((p2[2] - p3[2]).abs());
        }
    }
    verdict(
        worst <= 1e-9 && !used.is_empty(),
        format!("max mirror defect {worst:.2e} m over {used:?}"),
    )
}

fn main() {
    let started = Instant::now();
    let scenarios = shipped();
    let logs: Vec<(String, LogTable)> = scenarios.iter().map(|(n, c)| (n.clone(), run(c))).collect();
    let cruise_cfg = load("cruise.toml");
    let cruise = run(&cruise_cfg);

    let results: Vec<(&str, Verdict)> = vec![
        ("1 discretization oracle", discretization_oracle()),
        ("2 default parameters", default_parameters()),
        ("3 clamp saturation", clamp_saturation(&cruise)),
        ("4 spread then contract", spread_then_contract(&cruise)),
        ("5 lag monotonicity", lag_monotonicity(&cruise_cfg, &cruise)),
        ("6 opposition sign", opposition(&logs)),
        ("7 tactile goldens", tactile_goldens()),
        ("8 determinism", determinism(&scenarios, &logs)),
        ("9 mirror symmetry", mirror_symmetry(&scenarios, &logs)),
    ];

    let mut failed = 0;
    for (name, v) in &results {
        println!("criterion {name}: {} - {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1} s)",
        results.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
