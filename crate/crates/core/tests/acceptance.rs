//! Acceptance suite. Runs as a plain binary so every criterion prints one
//! PASS/FAIL line; exits non-zero if any criterion fails.

use std::collections::hash_map::DefaultHasher;
use std::f64::consts::PI;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pass_bt::codebook::{generate_codeword, Codebook, GuardDistance};
use pass_bt::harness::{
    overhead_table, parse_scenario, run_swmu, run_swsu, sweep_phase_pattern, sweep_run, write_multi_user_csv,
    write_overhead_csv, write_sweep_csv, Scenario, SweepSpec, SweepVariable,
};
use pass_bt::mwmu::{lemma1_bruteforce, run_increased_3sbt, WaveguideArray};
use pass_bt::noma::{run_improved_3sbt, write_combination_csv};
use pass_bt::oracle::{matched_resolution, OracleBudget, OracleGrid};
use pass_bt::physics::{dbm_to_watts, derive_params, Point3, SystemParams, Waveguide};
use pass_bt::swsu::{achieved_rate, run_3sbt, SamplingRange, SwsuSetup, TraceRow, TrainingHyperparams};

const DEFAULT_K: usize = 2;
const DEFAULT_L: usize = 8;
const DEFAULT_D_ES: f64 = 0.01;
const DEFAULT_N: usize = 18;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Every running-optimum trace produced by the suite, checked at the end.
#[derive(Default)]
struct Traces {
    runs: Vec<(String, Vec<f64>)>,
}

impl Traces {
    fn add(&mut self, label: impl Into<String>, trace: &[TraceRow]) {
        self.runs.push((label.into(), trace.iter().map(|r| r.running_best).collect()));
    }
}

fn params(freq: f64) -> SystemParams {
    derive_params(freq, 1.4, 3.0, dbm_to_watts(20.0), dbm_to_watts(-90.0)).unwrap()
}

fn default_hp() -> TrainingHyperparams {
    TrainingHyperparams { k: DEFAULT_K, l1: DEFAULT_L, l2: DEFAULT_L, d_es: DEFAULT_D_ES, n: DEFAULT_N }
}

fn scenario(text: &str) -> Scenario {
    parse_scenario(text).expect("scenario parses")
}

fn overhead_exactness() -> Verdict {
    let start = Instant::now();
    let region = SamplingRange::new((0.0, 10.0), (0.0, 10.0)).unwrap();
    let rows = overhead_table(&default_hp(), &region, &[2, 3]);
    let elapsed = start.elapsed().as_secs_f64();
    let find = |scheme: &str, users: usize| rows.iter().find(|r| r.scheme == scheme && r.users == users).map(|r| r.count);
    let expected: [(&str, usize, u128); 8] = [
        ("swsu_proposed", 1, 48),
        ("swsu_exhaustive", 1, 1 << 20),
        ("swmu_proposed", 2, 320),
        ("swmu_proposed", 3, 4192),
        ("swmu_exhaustive", 2, 1 << 40),
        ("swmu_exhaustive", 3, 1 << 60),
        ("mwmu_proposed", 2, 320),
        ("mwmu_exhaustive", 2, 1 << 40),
    ];
    let wrong: Vec<String> = expected
        .iter()
        .filter(|(s, m, c)| find(s, *m) != Some(*c))
        .map(|(s, m, c)| format!("{s}(M={m}) = {:?}, want {c}", find(s, *m)))
        .collect();
    let pass = wrong.is_empty() && elapsed < 1.0;
    let detail = if wrong.is_empty() {
        format!("8 overhead entries exact in {elapsed:.4} s")
    } else {
        format!("{} in {elapsed:.4} s", wrong.join("; "))
    };
    Verdict::new(pass, detail)
}

/// `ceil(len / d_es)` evaluated on integers: `len = 10 / K^L` metres and
/// `d_es = mm / 1000` metres.
fn cells_exact(k: usize, l: usize, mm: u64) -> u128 {
    let num = 10_000u128;
    let den = (k as u128).pow(l as u32) * mm as u128;
    num.div_ceil(den)
}

fn measured_counts(traces: &mut Traces) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mm_choices = [5u64, 10, 20, 40, 50];
    let mut tuples = Vec::new();
    while tuples.len() < 10 {
        let k = rng.gen_range(2..=4usize);
        let l1 = rng.gen_range(2..=8usize);
        let l2 = rng.gen_range(2..=8usize);
        let mm = mm_choices[rng.gen_range(0..mm_choices.len())];
        if (k as u128).pow(l1 as u32) > 4096 || (k as u128).pow(l2 as u32) > 4096 {
            continue;
        }
        if cells_exact(k, l1, mm) * cells_exact(k, l2, mm) > 120 {
            continue;
        }
        tuples.push((k, l1, l2, mm));
    }
    let mut failures = Vec::new();
    for &(k, l1, l2, mm) in &tuples {
        let d_es = mm as f64 / 1000.0;
        let per_user = cells_exact(k, l1, mm) * cells_exact(k, l2, mm);
        let stages = (k * (l1 + l2)) as u128;
        let training = format!("[training]\nk = {k}\nl1 = {l1}\nl2 = {l2}\nd_es = {d_es}\n");
        let label = format!("(K={k}, L1={l1}, L2={l2}, d_ES={d_es})");

        let s = scenario(&training);
        match run_swsu(&s) {
            Ok(r) => {
                traces.add(format!("swsu {label}"), &r.result.trace);
                if r.result.measurements as u128 != stages + per_user {
                    failures.push(format!("swsu {label}: {} vs {}", r.result.measurements, stages + per_user));
                }
            }
            Err(e) => failures.push(format!("swsu {label}: {e}")),
        }

        let s = scenario(&format!("mode = \"swmu\"\n{training}"));
        match run_swmu(&s, false) {
            Ok(o) => {
                for (m, u) in o.separated.iter().enumerate() {
                    traces.add(format!("swmu user {m} {label}"), &u.trace);
                }
                let want = 2 * stages + per_user * per_user;
                if o.measurements as u128 != want {
                    failures.push(format!("swmu {label}: {} vs {want}", o.measurements));
                }
            }
            Err(e) => failures.push(format!("swmu {label}: {e}")),
        }

        let s = scenario(&format!("mode = \"mwmu\"\n{training}"));
        let mut cb = s.codebook().unwrap();
        match run_increased_3sbt(&s.users, &s.mwmu_setup().unwrap(), &mut cb, false) {
            Ok(o) => {
                for (m, u) in o.separated.iter().enumerate() {
                    traces.add(format!("mwmu user {m} {label}"), &u.trace);
                }
                let want = 2 * stages + per_user * per_user;
                if o.measurements as u128 != want {
                    failures.push(format!("mwmu {label}: {} vs {want}", o.measurements));
                }
            }
            Err(e) => failures.push(format!("mwmu {label}: {e}")),
        }
    }
    if failures.is_empty() {
        Verdict::new(true, format!("{} tuples x 3 algorithms match the closed forms", tuples.len()))
    } else {
        Verdict::new(false, failures.join("; "))
    }
}

/// Total phase of the path feed -> antenna -> point, recomputed here from
/// the wave numbers rather than through the library.
fn total_phase(p: &SystemParams, wg: &Waveguide, x: f64, psi: &Point3) -> f64 {
    let k0 = 2.0 * PI / p.wavelength;
    let kg = 2.0 * PI * p.n_eff / p.wavelength;
    let free = ((x - psi.x).powi(2) + (wg.y - psi.y).powi(2) + (wg.height - psi.z).powi(2)).sqrt();
    k0 * free + kg * (x - wg.feed.x).abs()
}

fn residue(phase: f64) -> f64 {
    let r = phase.rem_euclid(2.0 * PI);
    r.min(2.0 * PI - r)
}

fn phase_alignment() -> Verdict {
    let p = params(28e9);
    let wg = Waveguide::new(0, 5.0, 3.0, -0.5, -0.5, 10.5).unwrap();
    let guard = GuardDistance::half_wavelength(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let start = Instant::now();
    let mut worst_residue = 0.0f64;
    let mut worst_spacing = f64::INFINITY;
    let mut errors = 0;
    for _ in 0..1000 {
        let psi = Point3::ground(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        match generate_codeword(&psi, &wg, DEFAULT_N, guard, &p) {
            Ok(cw) => {
                let reference = total_phase(&p, &wg, cw.positions[0], &psi);
                for &x in &cw.positions {
                    worst_residue = worst_residue.max(residue(total_phase(&p, &wg, x, &psi) - reference));
                    worst_residue = worst_residue.max(residue(total_phase(&p, &wg, x, &psi)));
                }
                for (i, a) in cw.positions.iter().enumerate() {
                    for b in &cw.positions[i + 1..] {
                        worst_spacing = worst_spacing.min((a - b).abs());
                    }
                }
            }
            Err(_) => errors += 1,
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let half = p.wavelength / 2.0;
    let pass = errors == 0 && worst_residue <= 1e-6 && worst_spacing >= half && elapsed < 10.0;
    Verdict::new(
        pass,
        format!(
            "1000 codewords, {errors} failed, max residue {worst_residue:.3e} rad, min spacing {worst_spacing:.6e} m (lambda/2 = {half:.6e}), {elapsed:.2} s"
        ),
    )
}

fn codebook_scalability() -> Verdict {
    let p = params(28e9);
    let wg = Waveguide::new(0, 5.0, 3.0, -0.5, -0.5, 10.5).unwrap();
    let guard = GuardDistance::half_wavelength(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let mut mismatches = 0;
    for _ in 0..100 {
        let psi = Point3::ground(rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let long = generate_codeword(&psi, &wg, 18, guard, &p);
        let short = generate_codeword(&psi, &wg, 6, guard, &p);
        match (long, short) {
            (Ok(l), Ok(s)) if l.positions[..6].iter().map(|x| x.to_bits()).eq(s.positions.iter().map(|x| x.to_bits())) => {}
            _ => mismatches += 1,
        }
    }
    Verdict::new(mismatches == 0, format!("{}/100 prefixes bit-identical", 100 - mismatches))
}

fn oracle_gap(traces: &mut Traces) -> Verdict {
    let start = Instant::now();
    let p = params(28e9);
    let wg = Waveguide::new(0, 5.0, 3.0, 0.0, 0.0, 10.5).unwrap();
    let guard = GuardDistance::half_wavelength(&p);
    let region = SamplingRange::new((4.0, 6.0), (3.0, 5.0)).unwrap();
    let hp = TrainingHyperparams { k: 2, l1: 4, l2: 4, d_es: 0.01, n: DEFAULT_N };
    let resolution = matched_resolution(&hp, &region);
    let grid = OracleGrid::build(&region, resolution, hp.n, &wg, guard, &p, OracleBudget::new(1 << 22).unwrap()).unwrap();
    let setup = SwsuSetup { params: p, waveguide: wg, region, hp, noise_seed: None };
    let mut cb = Codebook::new(hp.n, guard).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    let mut within = 0;
    let mut worst = f64::INFINITY;
    for i in 0..50 {
        let user = Point3::ground(rng.gen_range(4.0..6.0), rng.gen_range(3.0..5.0));
        let trained = run_3sbt(&user, &setup, &mut cb).unwrap();
        traces.add(format!("oracle-gap user {i}"), &trained.trace);
        let rate = achieved_rate(&user, &wg, &trained.best_codeword.positions, &p).unwrap();
        let oracle = grid.best_for(&user, &p).unwrap().rate;
        let ratio = rate / oracle;
        worst = worst.min(ratio);
        if ratio >= 0.95 {
            within += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Verdict::new(
        within >= 48 && elapsed < 120.0,
        format!(
            "{within}/50 users at >= 95% of the {}x{} exhaustive rate, worst ratio {worst:.4}, {elapsed:.1} s",
            resolution.0, resolution.1
        ),
    )
}

fn lemma1() -> Verdict {
    let p = params(28e9);
    let guard = GuardDistance::half_wavelength(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0006);
    let mut agree = 0;
    let mut instances = 0;
    let mut notes = Vec::new();
    while instances < 100 {
        let y1 = rng.gen_range(0.0..10.0);
        let y2 = y1 + rng.gen_range(1.0..10.0);
        let user = Point3::ground(rng.gen_range(1.0..9.0), rng.gen_range(y1 - 3.0..y2 + 3.0));
        let (d1, d2) = ((user.y - y1).abs(), (user.y - y2).abs());
        if (d1 - d2).abs() < 0.5 {
            continue;
        }
        let n = rng.gen_range(2..=8usize);
        let array = WaveguideArray::new(vec![
            Waveguide::new(0, y1, 3.0, 0.0, 0.0, 10.5).unwrap(),
            Waveguide::new(1, y2, 3.0, 0.0, 0.0, 10.5).unwrap(),
        ])
        .unwrap();
        instances += 1;
        let closest = if d1 < d2 { 0 } else { 1 };
        match lemma1_bruteforce(&user, &array, n, guard, &p) {
            Ok(o) if o.allocations[o.best_exact][closest] == n => agree += 1,
            Ok(o) => notes.push(format!("user {:?} n={n}: argmax {:?}", (user.x, user.y), o.allocations[o.best_exact])),
            Err(e) => notes.push(e.to_string()),
        }
    }
    let mut detail = format!("{agree}/100 argmax on the closest waveguide");
    if !notes.is_empty() {
        detail.push_str(&format!(" ({})", notes.join("; ")));
    }
    Verdict::new(agree == 100, detail)
}

fn phase_pattern() -> Verdict {
    let offsets: Vec<f64> = (0..8).map(|i| i as f64 * PI / 4.0).collect();
    let base = scenario("");
    let at_28 = sweep_phase_pattern(&base, &offsets).unwrap();
    let at_5 = sweep_phase_pattern(&base.with_frequency(5e9).unwrap(), &offsets).unwrap();
    let rates = |rows: &[pass_bt::harness::PhaseRow]| rows.iter().map(|r| r.rate).collect::<Vec<f64>>();
    let check = |r: &[f64]| {
        let argmax = (0..r.len()).fold(0, |b, i| if r[i] > r[b] { i } else { b });
        let argmin = (0..r.len()).fold(0, |b, i| if r[i] < r[b] { i } else { b });
        let asym = (1..r.len()).map(|i| (r[i] - r[r.len() - i]).abs() / r[i].max(r[r.len() - i])).fold(0.0, f64::max);
        (argmax == 0, argmin == 4, asym)
    };
    let (r28, r5) = (rates(&at_28), rates(&at_5));
    let (max28, min28, asym28) = check(&r28);
    let (max5, min5, asym5) = check(&r5);
    let dominates = r5.iter().zip(&r28).all(|(a, b)| a > b);
    let pass = max28 && min28 && max5 && min5 && asym28 <= 0.02 && asym5 <= 0.02 && dominates;
    Verdict::new(
        pass,
        format!(
            "28 GHz: max@0 {max28}, min@pi {min28}, asymmetry {:.3}%; 5 GHz: max@0 {max5}, min@pi {min5}, asymmetry {:.3}%; 5 GHz dominates {dominates}",
            asym28 * 100.0,
            asym5 * 100.0
        ),
    )
}

fn scheme_ordering(traces: &mut Traces) -> Verdict {
    let swmu = scenario("mode = \"swmu\"\n");
    let noma = run_swmu(&swmu, false).unwrap();
    for (m, u) in noma.separated.iter().enumerate() {
        traces.add(format!("ordering swmu user {m}"), &u.trace);
    }
    let wg = &swmu.waveguides[0];
    let mut single = Vec::new();
    for (m, u) in swmu.users.iter().enumerate() {
        let mut cb = swmu.codebook().unwrap();
        let r = run_3sbt(&u.location, &swmu.swsu_setup(m), &mut cb).unwrap();
        traces.add(format!("ordering tdma user {m}"), &r.trace);
        single.push(achieved_rate(&u.location, wg, &r.best_codeword.positions, &swmu.params).unwrap());
    }
    let tdma = single.iter().sum::<f64>() / single.len() as f64;

    let mwmu_s = scenario("mode = \"mwmu\"\n");
    let same_users = mwmu_s.users.iter().zip(&swmu.users).all(|(a, b)| a.location == b.location);
    let mut cb = mwmu_s.codebook().unwrap();
    let mwmu = run_increased_3sbt(&mwmu_s.users, &mwmu_s.mwmu_setup().unwrap(), &mut cb, false).unwrap();
    for (m, u) in mwmu.separated.iter().enumerate() {
        traces.add(format!("ordering mwmu user {m}"), &u.trace);
    }
    let noma_wins = noma.sum_rate() > tdma;
    let mwmu_wins = mwmu.sum_rate > noma.sum_rate();
    Verdict::new(
        noma_wins && mwmu_wins && same_users,
        format!(
            "NOMA {:.4} > TDMA {tdma:.4}: {noma_wins}; MWMU {:.4} > SWMU {:.4}: {mwmu_wins}",
            noma.sum_rate(),
            mwmu.sum_rate,
            noma.sum_rate()
        ),
    )
}

/// Every CSV artifact the CLI can emit, from the default scenarios.
fn artifacts(traces: &mut Traces) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = Vec::new();
    let region = SamplingRange::new((0.0, 10.0), (0.0, 10.0)).unwrap();

    let mut buf = Vec::new();
    write_overhead_csv(&overhead_table(&default_hp(), &region, &[2, 3]), &mut buf).unwrap();
    out.push(("overhead.csv", buf));

    let swsu = scenario("seed = 7\n");
    let report = run_swsu(&swsu).unwrap();
    traces.add("artifact swsu noisy", &report.result.trace);
    let mut buf = Vec::new();
    report.result.write_trace_csv(&mut buf).unwrap();
    out.push(("swsu_trace.csv", buf));

    let mut cb = swsu.codebook().unwrap();
    let wg = swsu.waveguides[0];
    for i in 0..16 {
        for j in 0..16 {
            let pt = Point3::ground(0.3125 + 0.625 * i as f64, 0.3125 + 0.625 * j as f64);
            cb.get_or_generate(&pt, &wg, &swsu.params).unwrap();
        }
    }
    let mut buf = Vec::new();
    cb.export_csv(&mut buf).unwrap();
    out.push(("codebook.csv", buf));

    for (name, variable, values) in [
        ("sweep_power.csv", SweepVariable::PowerDbm, vec![0.0, 20.0, 40.0]),
        ("sweep_phase.csv", SweepVariable::PhaseOffset, (0..8).map(|i| i as f64 * PI / 4.0).collect()),
        ("sweep_layer.csv", SweepVariable::LayerIndex, (1..=16).map(f64::from).collect()),
    ] {
        let rows = sweep_run(&scenario(""), &SweepSpec::new(variable, values).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(variable, &rows, &mut buf).unwrap();
        out.push((name, buf));
    }

    let swmu = scenario("mode = \"swmu\"\n");
    let mut cb = swmu.codebook().unwrap();
    let noma = run_improved_3sbt(&swmu.users, &swmu.noma_setup(), &mut cb, true).unwrap();
    for (m, u) in noma.separated.iter().enumerate() {
        traces.add(format!("artifact swmu user {m}"), &u.trace);
    }
    let mut buf = Vec::new();
    write_combination_csv(noma.joint.dump.as_deref().unwrap(), &mut buf).unwrap();
    out.push(("swmu_combinations.csv", buf));
    let estimates: Vec<Point3> = noma.separated.iter().map(|u| u.estimate).collect();
    let owners: Vec<usize> = (0..swmu.users.len())
        .map(|m| noma.clusters.iter().position(|c| c.users.contains(&m)).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_multi_user_csv(&estimates, &noma.joint.sampling_points, &owners, &noma.joint.sic.rates, None, &mut buf).unwrap();
    out.push(("swmu_users.csv", buf));

    let mwmu_s = scenario("mode = \"mwmu\"\n");
    let mut cb = mwmu_s.codebook().unwrap();
    let mwmu = run_increased_3sbt(&mwmu_s.users, &mwmu_s.mwmu_setup().unwrap(), &mut cb, true).unwrap();
    for (m, u) in mwmu.separated.iter().enumerate() {
        traces.add(format!("artifact mwmu user {m}"), &u.trace);
    }
    let mut buf = Vec::new();
    write_combination_csv(mwmu.dump.as_deref().unwrap(), &mut buf).unwrap();
    out.push(("mwmu_combinations.csv", buf));

    let compare = scenario("mode = \"swmu\"\nbaselines = [\"fixed_pinching\", \"conventional_ula\", \"tdma\"]\n");
    let rows = sweep_run(&compare, &SweepSpec::new(SweepVariable::AntennaCount, vec![6.0, 18.0]).unwrap()).unwrap();
    let mut buf = Vec::new();
    write_sweep_csv(SweepVariable::AntennaCount, &rows, &mut buf).unwrap();
    out.push(("sweep_antennas_swmu.csv", buf));
    out
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

/// Directory for this build's artifacts, keyed by a hash of the test binary
/// so that a rebuilt suite starts a fresh comparison.
fn artifact_dir() -> PathBuf {
    let mut h = DefaultHasher::new();
    std::env::current_exe().ok().and_then(|p| fs::read(p).ok()).unwrap_or_default().hash(&mut h);
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(format!("acceptance-{:016x}", h.finish()))
}

fn determinism(traces: &mut Traces) -> Verdict {
    let first = in_pool(1, || {
        let mut t = Traces::default();
        let a = artifacts(&mut t);
        (a, t)
    });
    let second = in_pool(4, || {
        let mut t = Traces::default();
        let a = artifacts(&mut t);
        (a, t)
    });
    traces.runs.extend(first.1.runs);
    traces.runs.extend(second.1.runs);
    let (first, second) = (first.0, second.0);
    let mut differing: Vec<&str> = first.iter().zip(&second).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0).collect();

    let dir = artifact_dir();
    let mut cross_run = "first run of this build, artifacts stored".to_string();
    if dir.is_dir() {
        let mut checked = 0;
        for (name, bytes) in &first {
            match fs::read(dir.join(name)) {
                Ok(prev) if prev == *bytes => checked += 1,
                _ => differing.push(name),
            }
        }
        cross_run = format!("{checked}/{} identical to the previous run", first.len());
    } else {
        fs::create_dir_all(&dir).unwrap();
        for (name, bytes) in &first {
            fs::write(dir.join(name), bytes).unwrap();
        }
    }
    let total: usize = first.iter().map(|a| a.1.len()).sum();
    let mut detail = format!(
        "{} CSV artifacts ({total} bytes) identical across 1- and 4-thread runs; {cross_run}; stored in {}",
        first.len(),
        dir.display()
    );
    if !differing.is_empty() {
        detail = format!("differing: {}; {detail}", differing.join(", "));
    }
    Verdict::new(differing.is_empty(), detail)
}

fn monotone(traces: &Traces) -> Verdict {
    let bad: Vec<&str> = traces
        .runs
        .iter()
        .filter(|(_, t)| t.windows(2).any(|w| w[1] < w[0]))
        .map(|(l, _)| l.as_str())
        .collect();
    let layers: usize = traces.runs.iter().map(|(_, t)| t.len()).sum();
    let mut detail = format!("{} training runs, {layers} layer rows, {} non-monotone", traces.runs.len(), bad.len());
    if !bad.is_empty() {
        detail.push_str(&format!(": {}", bad.join(", ")));
    }
    Verdict::new(bad.is_empty() && !traces.runs.is_empty(), detail)
}

fn main() -> ExitCode {
    let mut traces = Traces::default();
    let criteria: Vec<(&str, Verdict)> = vec![
        ("overhead exactness", overhead_exactness()),
        ("measured-count consistency", measured_counts(&mut traces)),
        ("phase-alignment invariant", phase_alignment()),
        ("codebook scalability", codebook_scalability()),
        ("oracle gap", oracle_gap(&mut traces)),
        ("closest-waveguide allocation", lemma1()),
        ("phase-pattern shape", phase_pattern()),
        ("scheme ordering", scheme_ordering(&mut traces)),
        ("determinism", determinism(&mut traces)),
    ];
    let last = monotone(&traces);
    let mut failed = 0;
    for (i, (name, v)) in criteria.iter().chain(std::iter::once(&("monotone optimum", last))).enumerate() {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("{tag} criterion {}: {name}: {}", i + 1, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
