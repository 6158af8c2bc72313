//! Scenario files, scheme evaluation, parameter sweeps, the overhead table and
//! CSV output.
//!
//! Scenario files are TOML. Every key is optional; an empty file yields the
//! default single-user setup (28 GHz, `n_eff = 1.4`, 3 m waveguide height,
//! −90 dBm noise, 18 antennas, `K = 2`, `L1 = L2 = 8`, `d_ES = 1 cm`).

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use crate::codebook::{generate_codeword, path_phase, solve_phase_target, Codebook, GuardDistance};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::mwmu::{run_increased_3sbt, DigitalPrecoder, MwmuOutcome, MwmuSetup, WaveguideArray};
use crate::noma::{cluster_antennas, run_improved_3sbt, NomaOutcome, NomaSetup, ServedUser};
use crate::oracle::{
    centered_array, fixed_pinching_bound, conventional_ula_bound, overhead, phase_matched_noma, tdma_wrapper,
    ula_layout, BaselineKind, DEFAULT_BUDGET,
};
use crate::physics::{dbm_to_watts, derive_params, Point3, SystemParams, Waveguide};
use crate::swsu::{achieved_rate, phase_aligned_bound, run_3sbt, SamplingRange, SwsuSetup, TrainingHyperparams, TrainingResult};

/// Extra waveguide length past the last sampling range, so codewords for
/// sampling points near the range edge still fit.
pub const EXTENT_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Swsu,
    Swmu,
    Mwmu,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swsu" => Ok(Self::Swsu),
            "swmu" => Ok(Self::Swmu),
            "mwmu" => Ok(Self::Mwmu),
            other => Err(Error::Config(format!("unknown mode `{other}`, expected swsu, swmu or mwmu"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Swsu => "swsu",
            Self::Swmu => "swmu",
            Self::Mwmu => "mwmu",
        })
    }
}

/// Scenario file as written; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    /// Number of users generated from the default template when no `[[user]]`
    /// entries are given.
    pub user_count: Option<usize>,
    pub system: Option<SystemSection>,
    pub training: Option<TrainingSection>,
    pub noma: Option<NomaSection>,
    pub baselines: Option<Vec<String>>,
    #[serde(rename = "user")]
    pub users: Option<Vec<UserSection>>,
    #[serde(rename = "waveguide")]
    pub waveguides: Option<Vec<WaveguideSection>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub carrier_frequency_hz: Option<f64>,
    pub n_eff: Option<f64>,
    pub height_m: Option<f64>,
    pub power_dbm: Option<f64>,
    pub power_w: Option<f64>,
    pub noise_dbm: Option<f64>,
    pub guard_m: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub k: Option<usize>,
    pub l1: Option<usize>,
    pub l2: Option<usize>,
    pub d_es: Option<f64>,
    pub antennas: Option<usize>,
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NomaSection {
    pub alpha: Option<Vec<f64>>,
    pub d_tilde: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSection {
    pub x: f64,
    pub y: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveguideSection {
    pub y: f64,
    pub feed_x: Option<f64>,
    pub x_end: Option<f64>,
}

/// Physical inputs kept so parameters can be re-derived under overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemInputs {
    pub carrier_frequency: f64,
    pub n_eff: f64,
    pub height: f64,
    pub power_w: f64,
    pub noise_w: f64,
    /// Explicit guard distance; `None` means half a free-space wavelength.
    pub guard: Option<f64>,
}

impl Default for SystemInputs {
    fn default() -> Self {
        Self {
            carrier_frequency: 28e9,
            n_eff: 1.4,
            height: 3.0,
            power_w: dbm_to_watts(DEFAULT_POWER_DBM),
            noise_w: dbm_to_watts(-90.0),
            guard: None,
        }
    }
}

/// Transmit power used when a scenario does not set one.
pub const DEFAULT_POWER_DBM: f64 = 20.0;

/// Fully resolved and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mode: Mode,
    pub system: SystemInputs,
    pub params: SystemParams,
    pub guard: GuardDistance,
    pub hp: TrainingHyperparams,
    pub d_tilde: f64,
    pub budget: u128,
    pub alpha: Vec<f64>,
    pub users: Vec<ServedUser>,
    pub waveguides: Vec<Waveguide>,
    pub baselines: Vec<BaselineKind>,
    pub seed: Option<u64>,
}

/// Weak-user-first power shares: `[1]`, `[0.7, 0.3]`, `[0.5, 0.3, 0.2]`, and
/// linearly decreasing weights beyond three users.
pub fn default_alpha(m: usize) -> Vec<f64> {
    match m {
        1 => vec![1.0],
        2 => vec![0.7, 0.3],
        3 => vec![0.5, 0.3, 0.2],
        _ => {
            let total = (m * (m + 1) / 2) as f64;
            (0..m).map(|i| (m - i) as f64 / total).collect()
        }
    }
}

/// Default user `m` (0-based) at `(10(m+½), 10(m+½) − 1, 0)`.
pub fn template_location(m: usize) -> Point3 {
    let c = 10.0 * (m as f64 + 0.5);
    Point3::ground(c, c - 1.0)
}

/// Default users for a mode. Single-waveguide regions tile x; multi-waveguide
/// regions tile both x and y so each template user lies inside its region.
pub fn template_users(mode: Mode, m: usize) -> Result<Vec<ServedUser>> {
    match mode {
        Mode::Swsu => Ok(vec![ServedUser {
            location: Point3::ground(5.0, 4.0),
            region: SamplingRange::new((0.0, 10.0), (0.0, 10.0))?,
        }]),
        Mode::Swmu | Mode::Mwmu => (0..m)
            .map(|i| {
                let lo = 10.0 * i as f64;
                let y = if mode == Mode::Swmu { (0.0, 10.0) } else { (lo, lo + 10.0) };
                Ok(ServedUser { location: template_location(i), region: SamplingRange::new((lo, lo + 10.0), y)? })
            })
            .collect(),
    }
}

/// Line number (1-based) of the first assignment to `key` in `text`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

/// Attaches the field name, and its line when the source text is known.
fn field_error(text: Option<&str>, key: &str, msg: impl fmt::Display) -> Error {
    match text.and_then(|t| line_of(t, key)) {
        Some(line) => Error::Config(format!("line {line}: field `{key}`: {msg}")),
        None => Error::Config(format!("field `{key}`: {msg}")),
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    /// Applies defaults and validates. `text` is the source, used to report
    /// line numbers.
    pub fn resolve(&self, text: Option<&str>) -> Result<Scenario> {
        let mode = self.mode.unwrap_or(Mode::Swsu);
        let sys = self.system.clone().unwrap_or_default();
        let tr = self.training.clone().unwrap_or_default();
        let noma = self.noma.clone().unwrap_or_default();
        let err = |key: &str, msg: String| field_error(text, key, msg);

        let mut system = SystemInputs::default();
        if let Some(f) = sys.carrier_frequency_hz {
            system.carrier_frequency = f;
        }
        if let Some(n) = sys.n_eff {
            system.n_eff = n;
        }
        if let Some(h) = sys.height_m {
            system.height = h;
        }
        if sys.power_dbm.is_some() && sys.power_w.is_some() {
            return Err(err("power_w", "set either power_dbm or power_w, not both".into()));
        }
        if let Some(p) = sys.power_dbm {
            system.power_w = dbm_to_watts(p);
        }
        if let Some(p) = sys.power_w {
            if !(p.is_finite() && p > 0.0) {
                return Err(err("power_w", format!("power must be positive, got {p}")));
            }
            system.power_w = p;
        }
        if let Some(n) = sys.noise_dbm {
            system.noise_w = dbm_to_watts(n);
        }
        if let Some(g) = sys.guard_m {
            if !(g.is_finite() && g > 0.0) {
                return Err(err("guard_m", format!("guard distance must be positive, got {g}")));
            }
            system.guard = Some(g);
        }
        let params = system_params(&system).map_err(|e| {
            let key = if !(system.carrier_frequency.is_finite() && system.carrier_frequency > 0.0) {
                "carrier_frequency_hz"
            } else if !(system.n_eff.is_finite() && system.n_eff >= 1.0) {
                "n_eff"
            } else if !(system.height.is_finite() && system.height > 0.0) {
                "height_m"
            } else if sys.power_w.is_some() {
                "power_w"
            } else if sys.power_dbm.is_some() {
                "power_dbm"
            } else {
                "noise_dbm"
            };
            err(key, e.to_string())
        })?;

        let hp = TrainingHyperparams {
            k: tr.k.unwrap_or(2),
            l1: tr.l1.unwrap_or(8),
            l2: tr.l2.unwrap_or(8),
            d_es: tr.d_es.unwrap_or(1e-2),
            n: tr.antennas.unwrap_or(18),
        };
        if let Err(e) = hp.validate() {
            let key = if hp.k < 2 {
                "k"
            } else if hp.l1 < 1 {
                "l1"
            } else if hp.l2 < 1 {
                "l2"
            } else if hp.n < 1 {
                "antennas"
            } else {
                "d_es"
            };
            return Err(err(key, e.to_string()));
        }
        let budget = tr.budget.map(u128::from).unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            return Err(err("budget", "budget must be positive".into()));
        }

        let users = match &self.users {
            Some(list) => list
                .iter()
                .map(|u| {
                    Ok(ServedUser {
                        location: Point3::ground(u.x, u.y),
                        region: SamplingRange::new((u.x_range[0], u.x_range[1]), (u.y_range[0], u.y_range[1]))
                            .map_err(|e| err("x_range", e.to_string()))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => {
                let m = self.user_count.unwrap_or(if mode == Mode::Swsu { 1 } else { 2 });
                if m == 0 {
                    return Err(err("user_count", "at least one user is required".into()));
                }
                template_users(mode, m)?
            }
        };
        let m = users.len();
        if mode == Mode::Swsu && m != 1 {
            return Err(err("user_count", format!("single-user mode needs exactly one user, got {m}")));
        }
        if hp.n < m {
            return Err(err("antennas", format!("{} antennas cannot serve {m} users", hp.n)));
        }

        let alpha = noma.alpha.clone().unwrap_or_else(|| default_alpha(m));
        if alpha.len() != m {
            return Err(err("alpha", format!("{m} users need {m} power shares, got {}", alpha.len())));
        }
        crate::noma::validate_alpha(&alpha).map_err(|e| err("alpha", e.to_string()))?;
        let d_tilde = noma.d_tilde.unwrap_or(2.0);
        if !(d_tilde.is_finite() && d_tilde >= 0.0) {
            return Err(err("d_tilde", format!("merge distance must be non-negative, got {d_tilde}")));
        }

        let x_end = users.iter().map(|u| u.region.x.max).fold(f64::NEG_INFINITY, f64::max) + EXTENT_MARGIN;
        let waveguides = match &self.waveguides {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, w)| {
                    let feed_x = w.feed_x.unwrap_or(0.0);
                    Waveguide::new(i, w.y, system.height, feed_x, feed_x, w.x_end.unwrap_or(x_end))
                        .map_err(|e| err("y", e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?,
            None => match mode {
                Mode::Swsu | Mode::Swmu => vec![Waveguide::new(0, 5.0, system.height, 0.0, 0.0, x_end)?],
                Mode::Mwmu => (0..m)
                    .map(|q| Waveguide::new(q, 10.0 * (q as f64 + 0.5), system.height, 0.0, 0.0, x_end))
                    .collect::<Result<Vec<_>>>()?,
            },
        };
        match mode {
            Mode::Swsu | Mode::Swmu if waveguides.len() != 1 => {
                return Err(err("y", format!("{mode} mode uses one waveguide, got {}", waveguides.len())));
            }
            Mode::Mwmu => {
                if waveguides.len() != m {
                    return Err(err("y", format!("{m} users need {m} waveguides, got {}", waveguides.len())));
                }
                WaveguideArray::new(waveguides.clone()).map_err(|e| err("y", e.to_string()))?;
            }
            _ => {}
        }

        let baselines = match &self.baselines {
            Some(list) => list
                .iter()
                .map(|b| match b.as_str() {
                    "fixed_pinching" => Ok(BaselineKind::FixedPinching),
                    "conventional_ula" => Ok(BaselineKind::ConventionalUla),
                    "tdma" => Ok(BaselineKind::TdmaWrapper),
                    other => Err(err("baselines", format!("unknown baseline `{other}`"))),
                })
                .collect::<Result<Vec<_>>>()?,
            None => vec![BaselineKind::FixedPinching, BaselineKind::ConventionalUla, BaselineKind::TdmaWrapper],
        };

        Ok(Scenario {
            mode,
            system,
            guard: guard_for(&system, &params)?,
            params,
            hp,
            d_tilde,
            budget,
            alpha,
            users,
            waveguides,
            baselines,
            seed: self.seed,
        })
    }
}

fn system_params(s: &SystemInputs) -> Result<SystemParams> {
    derive_params(s.carrier_frequency, s.n_eff, s.height, s.power_w, s.noise_w)
}

fn guard_for(s: &SystemInputs, params: &SystemParams) -> Result<GuardDistance> {
    match s.guard {
        Some(g) => GuardDistance::new(g),
        None => Ok(GuardDistance::half_wavelength(params)),
    }
}

/// Parses and resolves a scenario from text.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    ScenarioFile::parse(text)?.resolve(Some(text))
}

/// Reads, parses and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

impl Default for Scenario {
    fn default() -> Self {
        ScenarioFile::default().resolve(None).expect("defaults are valid")
    }
}

impl Scenario {
    pub fn with_power_dbm(&self, dbm: f64) -> Result<Self> {
        let mut s = self.clone();
        s.system.power_w = dbm_to_watts(dbm);
        s.params = system_params(&s.system)?;
        Ok(s)
    }

    pub fn with_frequency(&self, hz: f64) -> Result<Self> {
        let mut s = self.clone();
        s.system.carrier_frequency = hz;
        s.params = system_params(&s.system)?;
        s.guard = guard_for(&s.system, &s.params)?;
        Ok(s)
    }

    pub fn with_antennas(&self, n: usize) -> Result<Self> {
        let mut s = self.clone();
        s.hp.n = n;
        s.hp.validate()?;
        if n < s.users.len() {
            return Err(Error::InvalidParameter(format!("{n} antennas cannot serve {} users", s.users.len())));
        }
        Ok(s)
    }

    pub fn codebook(&self) -> Result<Codebook> {
        Codebook::new(self.hp.n, self.guard)
    }

    fn require(&self, mode: Mode) -> Result<()> {
        if self.mode != mode {
            return Err(Error::Unsupported(format!("operation needs {mode} mode, scenario is {}", self.mode)));
        }
        Ok(())
    }

    pub fn swsu_setup(&self, user: usize) -> SwsuSetup {
        SwsuSetup {
            params: self.params,
            waveguide: self.waveguides[0],
            region: self.users[user].region,
            hp: self.hp,
            noise_seed: self.seed,
        }
    }

    pub fn noma_setup(&self) -> NomaSetup {
        NomaSetup {
            params: self.params,
            waveguide: self.waveguides[0],
            hp: self.hp,
            alpha: self.alpha.clone(),
            d_tilde: self.d_tilde,
            budget: self.budget,
        }
    }

    pub fn mwmu_setup(&self) -> Result<MwmuSetup> {
        Ok(MwmuSetup {
            params: self.params,
            array: WaveguideArray::new(self.waveguides.clone())?,
            hp: self.hp,
            budget: self.budget,
        })
    }
}

/// Single-user run with its achieved and phase-aligned rates.
#[derive(Debug, Clone, PartialEq)]
pub struct SwsuReport {
    pub result: TrainingResult,
    pub rate: f64,
    pub aligned_rate: f64,
}

pub fn run_swsu(scenario: &Scenario) -> Result<SwsuReport> {
    scenario.require(Mode::Swsu)?;
    let user = scenario.users[0].location;
    let mut cb = scenario.codebook()?;
    let result = run_3sbt(&user, &scenario.swsu_setup(0), &mut cb)?;
    let wg = &scenario.waveguides[0];
    let pos = &result.best_codeword.positions;
    Ok(SwsuReport {
        rate: achieved_rate(&user, wg, pos, &scenario.params)?,
        aligned_rate: phase_aligned_bound(&user, wg, pos, &scenario.params),
        result,
    })
}

pub fn run_swmu(scenario: &Scenario, keep_dump: bool) -> Result<NomaOutcome> {
    scenario.require(Mode::Swmu)?;
    let mut cb = scenario.codebook()?;
    run_improved_3sbt(&scenario.users, &scenario.noma_setup(), &mut cb, keep_dump)
}

pub fn run_mwmu(scenario: &Scenario, keep_dump: bool) -> Result<MwmuOutcome> {
    scenario.require(Mode::Mwmu)?;
    let mut cb = scenario.codebook()?;
    run_increased_3sbt(&scenario.users, &scenario.mwmu_setup()?, &mut cb, keep_dump)
}

/// Rates of each user trained and served alone on the first waveguide with
/// full power, plus the measurements spent.
pub fn single_user_rates(scenario: &Scenario) -> Result<(Vec<f64>, u64)> {
    let wg = &scenario.waveguides[0];
    let mut cb = scenario.codebook()?;
    let mut rates = Vec::with_capacity(scenario.users.len());
    let mut measurements = 0;
    for (m, u) in scenario.users.iter().enumerate() {
        let mut setup = scenario.swsu_setup(m);
        setup.waveguide = *wg;
        let r = run_3sbt(&u.location, &setup, &mut cb)?;
        measurements += r.measurements;
        rates.push(achieved_rate(&u.location, wg, &r.best_codeword.positions, &scenario.params)?);
    }
    Ok((rates, measurements))
}

/// One scheme's rate (sum rate for multi-user modes).
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeResult {
    pub scheme: String,
    pub rate: f64,
    pub measurements: u64,
}

fn scheme(name: &str, rate: f64, measurements: u64) -> SchemeResult {
    SchemeResult { scheme: name.to_string(), rate, measurements }
}

/// Phase-matched SINR sum rate when waveguide `q` radiates from `elements[q]`
/// with one-hot precoding per association.
fn phase_matched_mwmu(
    users: &[ServedUser],
    elements: &[Vec<Point3>],
    association: &[usize],
    params: &SystemParams,
) -> Result<f64> {
    let q = elements.len();
    let per_antenna = params.total_power / elements.iter().map(Vec::len).sum::<usize>() as f64;
    let precoder = DigitalPrecoder::one_hot(association, q)?;
    let effective: Vec<Vec<num_complex::Complex64>> = users
        .iter()
        .map(|u| {
            elements
                .iter()
                .map(|els| {
                    let s: f64 = els.iter().map(|e| params.eta.sqrt() / u.location.distance(e)).sum();
                    num_complex::Complex64::new(s * per_antenna.sqrt(), 0.0)
                })
                .collect()
        })
        .collect();
    Ok(crate::mwmu::mwmu_sum_rate(&effective, &precoder, &vec![params.noise_power; users.len()]).1)
}

/// Evaluates the proposed scheme and every selected baseline.
pub fn evaluate_schemes(scenario: &Scenario) -> Result<Vec<SchemeResult>> {
    let p = &scenario.params;
    let n = scenario.hp.n;
    let wants = |b: BaselineKind| scenario.baselines.contains(&b);
    let mut out = Vec::new();
    match scenario.mode {
        Mode::Swsu => {
            let report = run_swsu(scenario)?;
            out.push(scheme("dynamic_pinching", report.rate, report.result.measurements));
            let user = scenario.users[0].location;
            if wants(BaselineKind::FixedPinching) {
                out.push(scheme("fixed_pinching", fixed_pinching_bound(&user, &scenario.waveguides[0], n, p)?, 0));
            }
            if wants(BaselineKind::ConventionalUla) {
                out.push(scheme("conventional_ula", conventional_ula_bound(&user, n, &scenario.waveguides[0].feed, p)?, 0));
            }
        }
        Mode::Swmu => {
            let noma = run_swmu(scenario, false)?;
            out.push(scheme("dynamic_pinching_noma", noma.sum_rate(), noma.measurements));
            let wg = &scenario.waveguides[0];
            let locations: Vec<Point3> = scenario.users.iter().map(|u| u.location).collect();
            if wants(BaselineKind::TdmaWrapper) {
                let (rates, m) = single_user_rates(scenario)?;
                out.push(scheme("dynamic_pinching_tdma", tdma_wrapper(&rates)?, m));
            }
            if wants(BaselineKind::FixedPinching) {
                let sizes = cluster_antennas(n, locations.len())?;
                let elements: Vec<Point3> = locations
                    .iter()
                    .zip(&sizes)
                    .flat_map(|(u, &k)| centered_array(u.x, k, p.wavelength / 2.0).into_iter().map(|x| wg.antenna_at(x)))
                    .collect();
                out.push(scheme("fixed_pinching_noma", phase_matched_noma(&locations, &elements, &scenario.alpha, p)?, 0));
                if wants(BaselineKind::TdmaWrapper) {
                    let rates = locations.iter().map(|u| fixed_pinching_bound(u, wg, n, p)).collect::<Result<Vec<_>>>()?;
                    out.push(scheme("fixed_pinching_tdma", tdma_wrapper(&rates)?, 0));
                }
            }
            if wants(BaselineKind::ConventionalUla) {
                let elements = ula_layout(&wg.feed, n, p);
                out.push(scheme("conventional_ula_noma", phase_matched_noma(&locations, &elements, &scenario.alpha, p)?, 0));
                if wants(BaselineKind::TdmaWrapper) {
                    let rates =
                        locations.iter().map(|u| conventional_ula_bound(u, n, &wg.feed, p)).collect::<Result<Vec<_>>>()?;
                    out.push(scheme("conventional_ula_tdma", tdma_wrapper(&rates)?, 0));
                }
            }
        }
        Mode::Mwmu => {
            let res = run_mwmu(scenario, false)?;
            out.push(scheme("dynamic_pinching", res.sum_rate, res.measurements));
            let users = &scenario.users;
            let mut owner = vec![0; scenario.waveguides.len()];
            for (m, &q) in res.association.iter().enumerate() {
                owner[q] = m;
            }
            if wants(BaselineKind::FixedPinching) {
                let elements: Vec<Vec<Point3>> = scenario
                    .waveguides
                    .iter()
                    .enumerate()
                    .map(|(q, wg)| {
                        centered_array(users[owner[q]].location.x, n, p.wavelength / 2.0)
                            .into_iter()
                            .map(|x| wg.antenna_at(x))
                            .collect()
                    })
                    .collect();
                out.push(scheme("fixed_pinching", phase_matched_mwmu(users, &elements, &res.association, p)?, 0));
            }
            if wants(BaselineKind::ConventionalUla) {
                let elements: Vec<Vec<Point3>> = scenario.waveguides.iter().map(|wg| ula_layout(&wg.feed, n, p)).collect();
                out.push(scheme("conventional_ula", phase_matched_mwmu(users, &elements, &res.association, p)?, 0));
            }
        }
    }
    Ok(out)
}

/// One overhead table row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverheadRow {
    pub scheme: &'static str,
    pub users: usize,
    pub formula: &'static str,
    pub count: u128,
}

/// Closed-form overheads for the single-user schemes and, for each user
/// count, the single- and multi-waveguide multi-user schemes. Every user's
/// sampling range is `region`.
pub fn overhead_table(hp: &TrainingHyperparams, region: &SamplingRange, user_counts: &[usize]) -> Vec<OverheadRow> {
    let g = hp.exhaustive_grid(region);
    let mut rows = vec![
        OverheadRow { scheme: "swsu_exhaustive", users: 1, formula: "K^(L1+L2)*K1*K2", count: overhead::swsu_exhaustive(hp, g) },
        OverheadRow { scheme: "swsu_proposed", users: 1, formula: "K*(L1+L2)+K1*K2", count: overhead::swsu_proposed(hp, g) },
    ];
    const EXHAUSTIVE: &str = "K^(M*(L1+L2))*prod(Km1*Km2)";
    const PROPOSED: &str = "M*K*(L1+L2)+prod(Km1*Km2)";
    for &m in user_counts {
        let grids = vec![g; m];
        rows.push(OverheadRow { scheme: "swmu_exhaustive", users: m, formula: EXHAUSTIVE, count: overhead::multi_user_exhaustive(hp, &grids) });
        rows.push(OverheadRow { scheme: "swmu_proposed", users: m, formula: PROPOSED, count: overhead::multi_user_proposed(hp, &grids) });
    }
    for &m in user_counts {
        let grids = vec![g; m];
        rows.push(OverheadRow { scheme: "mwmu_exhaustive", users: m, formula: EXHAUSTIVE, count: overhead::multi_user_exhaustive(hp, &grids) });
        rows.push(OverheadRow { scheme: "mwmu_proposed", users: m, formula: PROPOSED, count: overhead::multi_user_proposed(hp, &grids) });
    }
    rows
}

/// Rate for one relative arrival phase.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRow {
    pub offset: f64,
    pub rate: f64,
    /// Shifted antennas came closer than the guard distance.
    pub guard_violated: bool,
}

/// Positions of the codeword aligned to `user` with every antenna except the
/// first moved along +x until its arrival phase is `offset` past the first's.
pub fn phase_shifted_positions(
    user: &Point3,
    waveguide: &Waveguide,
    n: usize,
    offset: f64,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<Vec<f64>> {
    let cw = generate_codeword(user, waveguide, n, guard, params)?;
    let shift = offset.rem_euclid(2.0 * std::f64::consts::PI);
    cw.positions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if i == 0 || shift == 0.0 {
                return Ok(x);
            }
            solve_phase_target(user, waveguide, x, path_phase(user, waveguide, x, params) + shift, params)
        })
        .collect()
}

fn violates_guard(positions: &[f64], guard: GuardDistance) -> bool {
    let mut sorted = positions.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.windows(2).any(|w| w[1] - w[0] < guard.meters() - 1e-12)
}

/// Rate versus relative arrival phase for the single-user scenario's true
/// user location.
pub fn sweep_phase_pattern(scenario: &Scenario, offsets: &[f64]) -> Result<Vec<PhaseRow>> {
    scenario.require(Mode::Swsu)?;
    let user = scenario.users[0].location;
    let wg = &scenario.waveguides[0];
    offsets
        .par_iter()
        .map(|&offset| {
            let pos = phase_shifted_positions(&user, wg, scenario.hp.n, offset, scenario.guard, &scenario.params)?;
            Ok(PhaseRow {
                offset,
                rate: achieved_rate(&user, wg, &pos, &scenario.params)?,
                guard_violated: violates_guard(&pos, scenario.guard),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    AntennaCount,
    PowerDbm,
    LayerIndex,
    PhaseOffset,
    Frequency,
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "antenna_count" => Ok(Self::AntennaCount),
            "power_dbm" => Ok(Self::PowerDbm),
            "layer_index" => Ok(Self::LayerIndex),
            "phase_offset" => Ok(Self::PhaseOffset),
            "frequency" => Ok(Self::Frequency),
            other => Err(Error::Config(format!(
                "unknown sweep variable `{other}`, expected antenna_count, power_dbm, layer_index, phase_offset or frequency"
            ))),
        }
    }
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AntennaCount => "antenna_count",
            Self::PowerDbm => "power_dbm",
            Self::LayerIndex => "layer_index",
            Self::PhaseOffset => "phase_offset",
            Self::Frequency => "frequency",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(variable: SweepVariable, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("sweep needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("sweep values must be finite".into()));
        }
        Ok(Self { variable, values })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub scheme: String,
    pub rate: f64,
    pub measurements: u64,
    /// Set when the row is not a valid configuration (guard violation).
    pub flagged: bool,
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v < 1.0 || v.fract() != 0.0 {
        return Err(Error::InvalidParameter(format!("{what} must be a positive integer, got {v}")));
    }
    Ok(v as usize)
}

/// Runs a sweep. Points run in parallel; rows come back in value order and
/// then scheme order.
pub fn sweep_run(scenario: &Scenario, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    match spec.variable {
        SweepVariable::PhaseOffset => Ok(sweep_phase_pattern(scenario, &spec.values)?
            .into_iter()
            .map(|r| SweepRow { value: r.offset, scheme: "dynamic_pinching".into(), rate: r.rate, measurements: 0, flagged: r.guard_violated })
            .collect()),
        SweepVariable::LayerIndex => {
            let report = run_swsu(scenario)?;
            let trace = &report.result.trace;
            spec.values
                .iter()
                .map(|&v| {
                    let layer = as_count(v, "layer index")?;
                    let row = trace.get(layer - 1).ok_or_else(|| {
                        Error::InvalidParameter(format!("layer {layer} beyond the {} trained layers", trace.len()))
                    })?;
                    let measurements = trace[..layer].iter().map(|r| r.samples.len() as u64).sum();
                    let rate = (1.0 + row.running_best.powi(2) / scenario.params.noise_power).log2();
                    Ok(SweepRow { value: v, scheme: "dynamic_pinching".into(), rate, measurements, flagged: false })
                })
                .collect()
        }
        variable => {
            let per_value = spec
                .values
                .par_iter()
                .map(|&v| {
                    let s = match variable {
                        SweepVariable::AntennaCount => scenario.with_antennas(as_count(v, "antenna count")?)?,
                        SweepVariable::PowerDbm => scenario.with_power_dbm(v)?,
                        SweepVariable::Frequency => scenario.with_frequency(v)?,
                        _ => unreachable!("handled above"),
                    };
                    let rows = evaluate_schemes(&s)?
                        .into_iter()
                        .map(|r| SweepRow { value: v, scheme: r.scheme, rate: r.rate, measurements: r.measurements, flagged: false })
                        .collect::<Vec<_>>();
                    Ok(rows)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(per_value.into_iter().flatten().collect())
        }
    }
}

/// CSV writer with a header and 12-significant-digit floats.
pub struct CsvOut<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvOut<W> {
    pub fn new(out: W, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(header).map_err(csv_err)?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        self.inner.write_record(fields).map_err(csv_err)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn write_sweep_csv<W: Write>(variable: SweepVariable, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = CsvOut::new(out, &[&variable.to_string(), "scheme", "rate", "measurements", "flagged"])?;
    for r in rows {
        w.row(&[sig12(r.value), r.scheme.clone(), sig12(r.rate), r.measurements.to_string(), r.flagged.to_string()])?;
    }
    w.finish()
}

pub fn write_overhead_csv<W: Write>(rows: &[OverheadRow], out: W) -> Result<()> {
    let mut w = CsvOut::new(out, &["scheme", "users", "formula", "count"])?;
    for r in rows {
        w.row(&[r.scheme.to_string(), r.users.to_string(), r.formula.to_string(), r.count.to_string()])?;
    }
    w.finish()
}

pub fn write_schemes_csv<W: Write>(rows: &[SchemeResult], out: W) -> Result<()> {
    let mut w = CsvOut::new(out, &["scheme", "rate", "measurements"])?;
    for r in rows {
        w.row(&[r.scheme.clone(), sig12(r.rate), r.measurements.to_string()])?;
    }
    w.finish()
}

/// Per-user summary of a multi-user run: estimate, chosen sampling point,
/// rate and (multi-waveguide) SINR.
pub fn write_multi_user_csv<W: Write>(
    estimates: &[Point3],
    chosen: &[Point3],
    clusters: &[usize],
    rates: &[f64],
    sinrs: Option<&[f64]>,
    out: W,
) -> Result<()> {
    let mut w = CsvOut::new(
        out,
        &["user", "cluster", "estimate_x", "estimate_y", "chosen_x", "chosen_y", "rate", "sinr"],
    )?;
    for m in 0..estimates.len() {
        let c = clusters[m];
        w.row(&[
            m.to_string(),
            c.to_string(),
            sig12(estimates[m].x),
            sig12(estimates[m].y),
            sig12(chosen[c].x),
            sig12(chosen[c].y),
            sig12(rates[m]),
            sinrs.map(|s| sig12(s[m])).unwrap_or_default(),
        ])?;
    }
    w.finish()
}
