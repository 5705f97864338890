//! Acceptance suite. One PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use gshp_core::ground::{
    borefield_gfunction, log_times, BorefieldLayout, GFunctionTable, GroundProperties, LoadAggregator,
};
use gshp_core::hybrid::npv;
use gshp_core::load_model::{scale_profile, BenchmarkTargets};
use gshp_core::plant::{fit_performance_map, MapReferences, PerformanceRow};
use gshp_core::sizing::{ground_resistances, temperature_penalty, PulseSchedule};
use gshp_core::{LoadProfile, Mode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gshp");

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit: Duration) -> (bool, String) {
    (
        elapsed <= limit,
        format!("{:.2} s of {} s", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

// ---------------------------------------------------------------- pipeline

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/reference")
}

fn scratch() -> tempfile::TempDir {
    let dir = tempfile::tempdir().expect("tempdir");
    for f in ["project.toml", "buildings.csv"] {
        std::fs::copy(fixture_dir().join(f), dir.path().join(f)).expect("copy fixture");
    }
    dir
}

fn gshp(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .args(["--config", "project.toml"])
        .args(args)
        .current_dir(dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`gshp {}` exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn timed(dir: &Path, args: &[&str]) -> Result<Duration, String> {
    let start = Instant::now();
    gshp(dir, args)?;
    Ok(start.elapsed())
}

/// Fixture pipeline run stage by stage with parallel cases.
struct Staged {
    dir: tempfile::TempDir,
    scale_optimize: Duration,
    simulate: Duration,
}

fn staged() -> Result<Staged, String> {
    let dir = scratch();
    let scale = timed(dir.path(), &["scale"])?;
    let size = timed(dir.path(), &["size"])?;
    let optimize = timed(dir.path(), &["optimize"])?;
    let simulate = timed(dir.path(), &["simulate", "--jobs", "4"])?;
    timed(dir.path(), &["report"])?;
    Ok(Staged {
        dir,
        scale_optimize: scale + size + optimize,
        simulate,
    })
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("read_dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root").to_path_buf();
                out.insert(rel, std::fs::read(&path).expect("read"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn summary(dir: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(dir.join("out/simulation/summary.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn case<'a>(summary: &'a Value, name: &str) -> Result<&'a Value, String> {
    summary["cases"]
        .as_array()
        .and_then(|cases| cases.iter().find(|c| c["case"] == name))
        .ok_or_else(|| format!("case {name} missing from summary"))
}

fn number(v: &Value, key: &str) -> Result<f64, String> {
    v[key].as_f64().ok_or_else(|| format!("{key} missing in {}", v["case"]))
}

// ---------------------------------------------------------------- oracles

/// Adaptive Simpson on [a, b].
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            return left + right + err / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    step(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

/// Infinite line source, K per W/m: E1(r^2 / 4 a t) / (4 pi k), with E1
/// integrated as the integral of exp(-e^v) over v from ln x to ln 745.
fn line_source(t_days: f64, r: f64, g: &GroundProperties) -> f64 {
    let x = r * r / (4.0 * g.diffusivity * t_days);
    let e1 = simpson(&|v: f64| (-v.exp()).exp(), x.ln(), 745f64.ln(), 1e-16);
    e1 / (4.0 * PI * g.conductivity)
}

/// Step-change superposition evaluated term by term.
fn convolution(history: &[f64], dt: f64, g: &GFunctionTable, ground: &GroundProperties) -> Vec<f64> {
    let response: Vec<f64> = (0..=history.len()).map(|k| g.value_at(k as f64 * dt)).collect();
    (1..=history.len())
        .map(|n| {
            let rise: f64 = (0..n)
                .map(|i| {
                    let prev = if i == 0 { 0.0 } else { history[i - 1] };
                    (history[i] - prev) * response[n - i]
                })
                .sum();
            ground.undisturbed_temperature + rise / (2.0 * PI * ground.conductivity)
        })
        .collect()
}

// ---------------------------------------------------------------- criteria

fn scaling_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for trial in 0..40 {
        let mode = if trial % 2 == 0 { Mode::Heating } else { Mode::Cooling };
        let mean = rng.gen_range(5.0..500.0);
        let swing = rng.gen_range(0.1..0.8);
        let phase = rng.gen_range(0.0..365.0);
        let raw: Vec<f64> = (0..8760)
            .map(|h| {
                let day = h as f64 / 24.0;
                let season = 1.0 + swing * (2.0 * PI * (day - phase) / 365.0).cos();
                mean * season * rng.gen_range(0.6..1.4)
            })
            .collect();
        let profile = LoadProfile::unscaled(raw.clone(), mode).expect("profile");
        // Exact fit with every scaled hour positive.
        let k = rng.gen_range(0.3..4.0);
        let low = raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let b = rng.gen_range(-0.9..2.0) * k * low;
        let energy: f64 = raw.iter().map(|v| k * v + b).sum();
        let peak = raw.iter().map(|v| k * v + b).fold(f64::MIN, f64::max);
        let targets = BenchmarkTargets {
            annual_energy: energy,
            peak_load: peak,
            mode,
        };
        let start = Instant::now();
        let scaled = match scale_profile(&profile, &targets) {
            Ok((_, scaled)) => scaled,
            Err(e) => return outcome(false, format!("trial {trial}: {e}")),
        };
        slowest = slowest.max(start.elapsed());
        worst = worst
            .max((scaled.total() / energy - 1.0).abs())
            .max((scaled.peak() / peak - 1.0).abs());
    }
    let (fast, time) = within(slowest, Duration::from_secs(1));
    outcome(
        worst <= 1e-3 && fast,
        format!("40 profiles, worst relative miss {worst:.2e} (limit 1e-3), slowest {time}"),
    )
}

fn npv_exactness() -> Outcome {
    let rate: f64 = 0.08;
    let mut flows = vec![0.0];
    flows.extend([1.0; 20]);
    let got = npv(&flows, rate).expect("npv");
    let closed = (1.0 - (1.0 + rate).powi(-20)) / rate;
    let rel = (got / closed - 1.0).abs();
    let rounded = (got * 1e5).round() / 1e5;
    outcome(
        rel <= 1e-10 && rounded == 9.81815,
        format!("npv {got:.12}, closed form {closed:.12}, relative {rel:.1e}"),
    )
}

fn cost_curve_shape(run: &Result<Staged, String>) -> Outcome {
    let run = match run {
        Ok(run) => run,
        Err(e) => return outcome(false, e.clone()),
    };
    let text = match std::fs::read_to_string(run.dir.path().join("out/sweep.csv")) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).expect("sweep column");
    let (ci, oi, ni) = (col("capital_usd"), col("opex_year1_usd"), col("npv_usd"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            [ci, oi, ni].iter().map(|&i| f[i].parse().unwrap_or(f64::NAN)).collect()
        })
        .collect();
    let capital_up = rows.windows(2).all(|w| w[1][0] >= w[0][0]);
    let opex_down = rows.windows(2).all(|w| w[1][1] <= w[0][1]);
    let best = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r[2].is_finite())
        .min_by(|a, b| a.1[2].total_cmp(&b.1[2]))
        .map(|(i, _)| i);
    let interior = matches!(best, Some(i) if i > 0 && i + 1 < rows.len());
    let (fast, time) = within(run.scale_optimize, Duration::from_secs(30));
    let alpha = best.map(|i| i as f64 / (rows.len() - 1) as f64);
    outcome(
        capital_up && opex_down && interior && fast,
        format!(
            "{} steps, capital nondecreasing {capital_up}, opex nonincreasing {opex_down}, \
             minimum at alpha {alpha:?} interior {interior}, scale+size+optimize {time}",
            rows.len()
        ),
    )
}

fn sizing_oracle() -> Outcome {
    let start = Instant::now();
    let g = GroundProperties::default();
    let pulses = PulseSchedule::default();
    let r = ground_resistances(&g, &pulses).expect("resistances");
    let rb = g.borehole_radius();
    let o = |t: f64| line_source(t, rb, &g);
    let (t1, t2, t3) = (pulses.annual, pulses.monthly, pulses.daily);
    let mut pairs = vec![
        ("annual", r.annual, o(t1 + t2 + t3) - o(t2 + t3)),
        ("monthly", r.monthly, o(t2 + t3) - o(t3)),
        ("daily", r.daily, o(t3)),
    ];
    // 3 x 3 field: the centre bore sees four neighbours at s and four at s*sqrt(2).
    let (s, q_kw, length) = (6.0, 9.0, 1800.0);
    let layout = BorefieldLayout::rectangular(9, s, 200.0, 5.0, rb).expect("layout");
    let tp = temperature_penalty(&layout, &g, q_kw, length, t1).expect("penalty");
    let per_metre = q_kw * 1000.0 / length;
    let want = per_metre * 4.0 * (line_source(t1, s, &g) + line_source(t1, s * 2f64.sqrt(), &g));
    pairs.push(("penalty", tp, want));
    let worst = pairs
        .iter()
        .map(|(_, got, want)| (got / want - 1.0).abs())
        .fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), Duration::from_secs(10));
    let listed: Vec<String> = pairs
        .iter()
        .map(|(n, got, want)| format!("{n} {got:.6} vs {want:.6}"))
        .collect();
    outcome(
        worst <= 1e-6 && fast,
        format!("{}; worst relative {worst:.1e}, {time}", listed.join(", ")),
    )
}

fn superposition_oracle() -> Outcome {
    let start = Instant::now();
    let ground = GroundProperties::default();
    let layout = BorefieldLayout::rectangular(4, 6.0, 150.0, 5.0, ground.borehole_radius()).expect("layout");
    let g = borefield_gfunction(&layout, &log_times(600.0, 4e7, 10), &ground).expect("g-function");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let history: Vec<f64> = (0..8760).map(|_| rng.gen_range(-50.0..50.0)).collect();
    let want = convolution(&history, 3600.0, &g, &ground);
    let mut agg = LoadAggregator::new(3600.0, 16).expect("aggregator");
    let mut worst: f64 = 0.0;
    for (q, w) in history.iter().zip(&want) {
        agg.push(*q, 3600.0).expect("push");
        worst = worst.max((agg.wall_temperature(&g, &ground) - w).abs());
    }
    let (fast, time) = within(start.elapsed(), Duration::from_secs(60));
    outcome(
        worst <= 0.05 && fast,
        format!("2x2 field, 8760 random hours, max error {worst:.4} K (limit 0.05 K), {time}"),
    )
}

fn equation_fit() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let references = MapReferences {
        q_ref: 120_000.0,
        p_ref: 30_000.0,
        t_ref_load: 323.15,
        t_ref_source: 283.15,
        mdot_ref_load: 4.0,
        mdot_ref_source: 5.5,
    };
    let capacity = [-0.4, -1.6, 7.1, 0.04, 0.04];
    let power = [-4.2, 3.9, 1.4, 0.01, -0.01];
    let affine = |c: &[f64; 5], r: &[f64; 5]| c.iter().zip(r).map(|(a, b)| a * b).sum::<f64>();
    let rows: Vec<PerformanceRow> = (0..60)
        .map(|_| {
            let t_load = references.t_ref_load + rng.gen_range(-10.0..10.0);
            let t_source = references.t_ref_source + rng.gen_range(-12.0..12.0);
            let mdot_load = references.mdot_ref_load * rng.gen_range(0.6..1.3);
            let mdot_source = references.mdot_ref_source * rng.gen_range(0.6..1.3);
            let r = [
                1.0,
                t_load / references.t_ref_load,
                t_source / references.t_ref_source,
                mdot_load / references.mdot_ref_load,
                mdot_source / references.mdot_ref_source,
            ];
            PerformanceRow {
                t_load,
                t_source,
                mdot_load,
                mdot_source,
                capacity: affine(&capacity, &r) * references.q_ref,
                power: affine(&power, &r) * references.p_ref,
            }
        })
        .collect();
    let fit = match fit_performance_map(&rows, references) {
        Ok(fit) => fit.map,
        Err(e) => return outcome(false, e.to_string()),
    };
    let worst = capacity
        .iter()
        .zip(&fit.capacity)
        .chain(power.iter().zip(&fit.power))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (fast, time) = within(start.elapsed(), Duration::from_secs(1));
    outcome(
        worst <= 1e-9 && fast,
        format!("60 rows, worst coefficient error {worst:.1e} (limit 1e-9), {time}"),
    )
}

fn electricity_ordering(run: &Result<Staged, String>, summary: &Result<Value, String>) -> Outcome {
    let check = || -> Result<Outcome, String> {
        let run = run.as_ref().map_err(Clone::clone)?;
        let s = summary.as_ref().map_err(Clone::clone)?;
        let ashp = number(case(s, "ashp_only")?, "electricity_kwh")?;
        let ground = number(case(s, "gshp_2x")?, "electricity_kwh")?;
        let heater = number(case(s, "gshp_heater_forced")?, "electricity_kwh")?;
        let saving = 1.0 - ground / ashp;
        let (fast, time) = within(run.simulate, Duration::from_secs(300));
        Ok(outcome(
            saving >= 0.15 && heater > ashp && fast,
            format!(
                "ASHP-only {ashp:.0} kWh, GSHP 2x {ground:.0} kWh ({:.1}% less, need 15%), \
                 forced heater {heater:.0} kWh ({:+.1}%), simulate {time}",
                100.0 * saving,
                100.0 * (heater / ashp - 1.0)
            ),
        ))
    };
    check().unwrap_or_else(|e| outcome(false, e))
}

fn failure_monotonicity(summary: &Result<Value, String>) -> Outcome {
    let check = || -> Result<Outcome, String> {
        let s = summary.as_ref().map_err(Clone::clone)?;
        let mut sizes: Vec<(f64, bool, String)> = s["cases"]
            .as_array()
            .ok_or("no cases")?
            .iter()
            .filter(|c| c["option"] == "GSHP-only" && c["force_auxiliary"] == false)
            .map(|c| {
                (
                    c["boreholes"].as_f64().unwrap_or(f64::NAN),
                    c["status"] == "failed",
                    c["failure_reason"].as_str().unwrap_or_default().to_string(),
                )
            })
            .collect();
        sizes.sort_by(|a, b| b.0.total_cmp(&a.0));
        let failed_reasons_ok = sizes.iter().filter(|c| c.1).all(|c| c.2.contains("loop temperature"));
        let first_failure = sizes.iter().position(|c| c.1);
        let monotone = match first_failure {
            Some(i) => sizes[i..].iter().all(|c| c.1),
            None => false,
        };
        let threshold = first_failure.map(|i| (sizes[i - i.min(1)].0, sizes[i].0));
        let listed: Vec<String> = sizes
            .iter()
            .map(|c| format!("{}{}", c.0, if c.1 { " failed" } else { " ok" }))
            .collect();
        Ok(outcome(
            sizes.len() >= 4 && monotone && failed_reasons_ok && first_failure.is_some_and(|i| i > 0),
            format!(
                "boreholes [{}], threshold between {:?}, loop-temperature reasons {failed_reasons_ok}",
                listed.join(", "),
                threshold
            ),
        ))
    };
    check().unwrap_or_else(|e| outcome(false, e))
}

fn comfort(summary: &Result<Value, String>) -> Outcome {
    let check = || -> Result<Outcome, String> {
        let s = summary.as_ref().map_err(Clone::clone)?;
        let c = case(s, "gshp_2x")?;
        let fraction = number(c, "comfort_fraction")?;
        let band = &s["comfort_band_c"];
        let completed = c["status"] == "completed";
        Ok(outcome(
            completed && fraction >= 0.99,
            format!(
                "GSHP 2x indoor within {band} for {:.2}% of post-warmup steps",
                100.0 * fraction
            ),
        ))
    };
    check().unwrap_or_else(|e| outcome(false, e))
}

fn loop_dt(summary: &Result<Value, String>) -> Outcome {
    let check = || -> Result<Outcome, String> {
        let s = summary.as_ref().map_err(Clone::clone)?;
        let dt = number(case(s, "gshp_2x")?, "loop_dt_k")?;
        let rel = (dt / 5.0 - 1.0).abs();
        Ok(outcome(
            rel <= 0.2,
            format!("GSHP 2x active-hour loop dT {dt:.2} K ({:.1}% from 5 K)", 100.0 * rel),
        ))
    };
    check().unwrap_or_else(|e| outcome(false, e))
}

fn determinism(run: &Result<Staged, String>) -> Outcome {
    let check = || -> Result<Outcome, String> {
        let start = Instant::now();
        let staged = run.as_ref().map_err(Clone::clone)?;
        let serial = scratch();
        gshp(serial.path(), &["run", "--jobs", "1"])?;
        let parallel = scratch();
        gshp(parallel.path(), &["run", "--jobs", "3"])?;
        let base = files(&serial.path().join("out"));
        let mut diffs = Vec::new();
        for (label, other) in [("jobs 3", parallel.path()), ("staged jobs 4", staged.dir.path())] {
            let got = files(&other.join("out"));
            let keys: std::collections::BTreeSet<&PathBuf> = base.keys().chain(got.keys()).collect();
            for k in keys {
                if base.get(k) != got.get(k) {
                    diffs.push(format!("{label}: {}", k.display()));
                }
            }
        }
        let elapsed = start.elapsed() + staged.scale_optimize + staged.simulate;
        let (fast, time) = within(elapsed, Duration::from_secs(600));
        Ok(outcome(
            diffs.is_empty() && fast,
            format!(
                "{} files compared across jobs 1, jobs 3 and staged jobs 4; differing {:?}; {time}",
                base.len(),
                diffs
            ),
        ))
    };
    check().unwrap_or_else(|e| outcome(false, e))
}

fn main() {
    let run = staged();
    let summary = run.as_ref().map_err(Clone::clone).and_then(|r| summary(r.dir.path()));
    let results = [
        ("scaling fidelity", scaling_fidelity()),
        ("npv exactness", npv_exactness()),
        ("cost-curve shape", cost_curve_shape(&run)),
        ("sizing oracle", sizing_oracle()),
        ("superposition oracle", superposition_oracle()),
        ("equation-fit round trip", equation_fit()),
        ("electricity ordering", electricity_ordering(&run, &summary)),
        ("failure monotonicity", failure_monotonicity(&summary)),
        ("comfort", comfort(&summary)),
        ("loop dT", loop_dt(&summary)),
        ("determinism", determinism(&run)),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "{} criterion {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
