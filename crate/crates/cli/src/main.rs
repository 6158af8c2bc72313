//! Command-line front end: codebook export, training runs, exhaustive
//! references, sweeps and the overhead table. All tabular output is CSV.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pass_bt::harness::{
    self, evaluate_schemes, overhead_table, run_mwmu, run_swmu, run_swsu, CsvOut, Mode, Scenario, ScenarioFile,
    SweepSpec, SweepVariable,
};
use pass_bt::codebook::associate_waveguides;
use pass_bt::format::sig12;
use pass_bt::noma::write_combination_csv;
use pass_bt::oracle::{exhaustive_2d, exhaustive_2d_noma, matched_resolution, OracleBudget};
use pass_bt::physics::Point3;
use pass_bt::swsu::{grid_cells, SamplingRange};
use pass_bt::Error;

/// Environment variable holding the worker thread count.
const THREADS_ENV: &str = "PASS_BT_THREADS";

#[derive(Parser)]
#[command(name = "pass-bt", version, about = "Beam training for pinching-antenna systems")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Scenario file plus per-key overrides.
#[derive(Args)]
struct Overrides {
    /// TOML scenario file; defaults apply when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    users: Option<usize>,
    #[arg(long, global = true)]
    antennas: Option<usize>,
    #[arg(long = "power-dbm", global = true, allow_negative_numbers = true)]
    power_dbm: Option<f64>,
    #[arg(long = "frequency-hz", global = true)]
    frequency_hz: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    l1: Option<usize>,
    #[arg(long, global = true)]
    l2: Option<usize>,
    #[arg(long = "d-es", global = true)]
    d_es: Option<f64>,
    /// Maximum exhaustive evaluations.
    #[arg(long, global = true)]
    budget: Option<u64>,
    /// Seed for measurement noise; noiseless when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate codewords on a grid over every user's sampling range and export them.
    Codebook {
        /// Grid cells per axis, e.g. 16x16.
        #[arg(long, default_value = "16x16")]
        grid: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the training scheme for the scenario mode.
    Train {
        /// swsu, swmu or mwmu; overrides the scenario mode.
        mode: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-layer trace (single user) written here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Every joint-search combination (multi-user) written here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Exhaustive search reference.
    Oracle {
        /// Grid cells per axis; defaults to the training's terminal accuracy.
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Proposed scheme and baselines side by side.
    Compare {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one variable and record every scheme.
    Sweep {
        /// antenna_count, power_dbm, layer_index, phase_offset or frequency.
        #[arg(long)]
        variable: String,
        /// Comma-separated values.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form training overhead table.
    Overhead {
        /// Comma-separated multi-user counts.
        #[arg(long, default_value = "2,3")]
        user_counts: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

fn output(path: &Option<PathBuf>) -> pass_bt::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn parse_pair(s: &str) -> pass_bt::Result<(usize, usize)> {
    let bad = || Error::Config(format!("expected a grid like 16x16, got `{s}`"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    let a: usize = a.trim().parse().map_err(|_| bad())?;
    let b: usize = b.trim().parse().map_err(|_| bad())?;
    if a == 0 || b == 0 {
        return Err(bad());
    }
    Ok((a, b))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> pass_bt::Result<Vec<T>> {
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|_| Error::Config(format!("cannot parse `{v}` in `{s}`"))))
        .collect()
}

fn load(o: &Overrides, mode: Option<&str>) -> pass_bt::Result<Scenario> {
    let text = match &o.scenario {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut file = ScenarioFile::parse(&text)?;
    if let Some(m) = mode.or(o.mode.as_deref()) {
        file.mode = Some(m.parse::<Mode>()?);
    }
    if o.users.is_some() {
        file.user_count = o.users;
        file.users = None;
    }
    if o.seed.is_some() {
        file.seed = o.seed;
    }
    let sys = file.system.get_or_insert_with(Default::default);
    if let Some(p) = o.power_dbm {
        sys.power_dbm = Some(p);
        sys.power_w = None;
    }
    if o.frequency_hz.is_some() {
        sys.carrier_frequency_hz = o.frequency_hz;
    }
    let tr = file.training.get_or_insert_with(Default::default);
    tr.k = o.k.or(tr.k);
    tr.l1 = o.l1.or(tr.l1);
    tr.l2 = o.l2.or(tr.l2);
    tr.d_es = o.d_es.or(tr.d_es);
    tr.antennas = o.antennas.or(tr.antennas);
    tr.budget = o.budget.or(tr.budget);
    file.resolve(Some(&text))
}

fn run(cli: Cli) -> pass_bt::Result<()> {
    match cli.command {
        Command::Codebook { grid, out } => {
            let s = load(&cli.overrides, None)?;
            let (n1, n2) = parse_pair(&grid)?;
            let mut cb = s.codebook()?;
            let association = match s.mode {
                Mode::Mwmu => {
                    let regions: Vec<SamplingRange> = s.users.iter().map(|u| u.region).collect();
                    associate_waveguides(&regions, &s.waveguides)?
                }
                _ => vec![0; s.users.len()],
            };
            for (m, user) in s.users.iter().enumerate() {
                let wg = &s.waveguides[association[m]];
                for cell in grid_cells(&user.region, n1, n2) {
                    cb.get_or_generate(&cell.midpoint(), wg, &s.params)?;
                }
            }
            cb.export_csv(output(&out)?)
        }
        Command::Train { mode, out, trace, dump } => {
            let s = load(&cli.overrides, mode.as_deref())?;
            match s.mode {
                Mode::Swsu => {
                    let r = run_swsu(&s)?;
                    if let Some(path) = &trace {
                        r.result.write_trace_csv(output(&Some(path.clone()))?)?;
                    }
                    let mut w = CsvOut::new(
                        output(&out)?,
                        &["estimate_x", "estimate_y", "metric", "rate", "aligned_rate", "measurements", "grid_k1", "grid_k2"],
                    )?;
                    w.row(&[
                        sig12(r.result.estimate.0),
                        sig12(r.result.estimate.1),
                        sig12(r.result.best_metric),
                        sig12(r.rate),
                        sig12(r.aligned_rate),
                        r.result.measurements.to_string(),
                        r.result.exhaustive_grid.0.to_string(),
                        r.result.exhaustive_grid.1.to_string(),
                    ])?;
                    w.finish()
                }
                Mode::Swmu => {
                    let r = run_swmu(&s, dump.is_some())?;
                    if let (Some(path), Some(rows)) = (&dump, &r.joint.dump) {
                        write_combination_csv(rows, output(&Some(path.clone()))?)?;
                    }
                    let mut home = vec![0; s.users.len()];
                    for (c, cl) in r.clusters.iter().enumerate() {
                        for &u in &cl.users {
                            home[u] = c;
                        }
                    }
                    let estimates: Vec<Point3> = r.separated.iter().map(|t| t.estimate).collect();
                    harness::write_multi_user_csv(&estimates, &r.joint.sampling_points, &home, &r.joint.sic.rates, None, output(&out)?)?;
                    eprintln!("sum_rate={} measurements={}", sig12(r.sum_rate()), r.measurements);
                    Ok(())
                }
                Mode::Mwmu => {
                    let r = run_mwmu(&s, dump.is_some())?;
                    if let (Some(path), Some(rows)) = (&dump, &r.dump) {
                        write_combination_csv(rows, output(&Some(path.clone()))?)?;
                    }
                    let estimates: Vec<Point3> = r.separated.iter().map(|t| t.estimate).collect();
                    let own: Vec<usize> = (0..s.users.len()).collect();
                    harness::write_multi_user_csv(&estimates, &r.sampling_points, &own, &r.rates, Some(&r.sinrs), output(&out)?)?;
                    eprintln!("sum_rate={} measurements={}", sig12(r.sum_rate), r.measurements);
                    Ok(())
                }
            }
        }
        Command::Oracle { resolution, out } => {
            let s = load(&cli.overrides, None)?;
            let budget = OracleBudget::new(s.budget)?;
            let res = |region: &SamplingRange| match &resolution {
                Some(r) => parse_pair(r),
                None => Ok(matched_resolution(&s.hp, region)),
            };
            let header = ["scheme", "evaluations", "argmax_x", "argmax_y", "rate"];
            match s.mode {
                Mode::Swsu => {
                    let user = &s.users[0];
                    let o = exhaustive_2d(&user.location, &user.region, res(&user.region)?, s.hp.n, &s.waveguides[0], s.guard, &s.params, budget)?;
                    let r = run_swsu(&s)?;
                    let mut w = CsvOut::new(output(&out)?, &header)?;
                    w.row(&["exhaustive".into(), o.evaluations.to_string(), sig12(o.point.x), sig12(o.point.y), sig12(o.rate)])?;
                    w.row(&[
                        "proposed".into(),
                        r.result.measurements.to_string(),
                        sig12(r.result.estimate.0),
                        sig12(r.result.estimate.1),
                        sig12(r.rate),
                    ])?;
                    w.finish()
                }
                Mode::Swmu => {
                    let o = exhaustive_2d_noma(&s.users, res(&s.users[0].region)?, s.hp.n, &s.alpha, &s.waveguides[0], s.guard, &s.params, budget)?;
                    let mut w = CsvOut::new(output(&out)?, &header)?;
                    for (m, p) in o.points.iter().enumerate() {
                        let rate = if m == 0 { sig12(o.sum_rate) } else { String::new() };
                        w.row(&[format!("exhaustive_user{m}"), o.evaluations.to_string(), sig12(p.x), sig12(p.y), rate])?;
                    }
                    w.finish()
                }
                Mode::Mwmu => Err(Error::Unsupported("no exhaustive reference for mwmu; see the overhead table".into())),
            }
        }
        Command::Compare { out } => {
            let s = load(&cli.overrides, None)?;
            harness::write_schemes_csv(&evaluate_schemes(&s)?, output(&out)?)
        }
        Command::Sweep { variable, values, out } => {
            let s = load(&cli.overrides, None)?;
            let variable: SweepVariable = variable.parse()?;
            let spec = SweepSpec::new(variable, parse_list(&values)?)?;
            let rows = harness::sweep_run(&s, &spec)?;
            harness::write_sweep_csv(variable, &rows, output(&out)?)
        }
        Command::Overhead { user_counts, out } => {
            let s = load(&cli.overrides, None)?;
            let counts: Vec<usize> = parse_list(&user_counts)?;
            harness::write_overhead_csv(&overhead_table(&s.hp, &s.users[0].region, &counts), output(&out)?)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("{THREADS_ENV} must be a positive integer, got `{v}`"))?;
    if n == 0 {
        return Err(format!("{THREADS_ENV} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
