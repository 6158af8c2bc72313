//! Brute-force references and baseline schemes.
//!
//! The exhaustive search evaluates every cell of a uniform grid over the
//! sampling range; the baselines are phase-matched upper bounds for
//! fixed-location pinching antennas and a conventional array at the base
//! station, plus a TDMA wrapper around single-user rates.

use rayon::prelude::*;

use crate::codebook::{generate_codeword, GuardDistance, SampleKey};
use crate::error::{Error, Result};
use crate::noma::{cluster_antennas, combination_count, scan_combinations, sic_rates, ServedUser};
use crate::physics::{received_signal_swsu, superpose, Point3, SystemParams, Waveguide};
use crate::swsu::{grid_cells, SamplingRange, TrainingHyperparams};

/// Default cap on exhaustive evaluations.
pub const DEFAULT_BUDGET: u128 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    pub max_evaluations: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_evaluations: DEFAULT_BUDGET }
    }
}

impl OracleBudget {
    pub fn new(max_evaluations: u128) -> Result<Self> {
        if max_evaluations == 0 {
            return Err(Error::InvalidParameter("evaluation budget must be positive".into()));
        }
        Ok(Self { max_evaluations })
    }

    pub fn check(&self, required: u128) -> Result<()> {
        if required > self.max_evaluations {
            return Err(Error::BudgetExceeded { required, budget: self.max_evaluations });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaselineKind {
    DynamicPinching,
    FixedPinching,
    ConventionalUla,
    TdmaWrapper,
}

impl BaselineKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::DynamicPinching => "dynamic_pinching",
            Self::FixedPinching => "fixed_pinching",
            Self::ConventionalUla => "conventional_ula",
            Self::TdmaWrapper => "tdma",
        }
    }
}

fn checked_pow(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

/// Closed-form training overheads.
pub mod overhead {
    use super::*;

    /// `K^(L1+L2) · K1 K2`.
    pub fn swsu_exhaustive(hp: &TrainingHyperparams, grid: (usize, usize)) -> u128 {
        checked_pow(hp.k, hp.l1 + hp.l2).saturating_mul((grid.0 * grid.1) as u128)
    }

    /// `K(L1+L2) + K1 K2`.
    pub fn swsu_proposed(hp: &TrainingHyperparams, grid: (usize, usize)) -> u128 {
        (hp.k * (hp.l1 + hp.l2)) as u128 + (grid.0 * grid.1) as u128
    }

    /// `K^(M(L1+L2)) · Π K_m1 K_m2`.
    pub fn multi_user_exhaustive(hp: &TrainingHyperparams, grids: &[(usize, usize)]) -> u128 {
        let cells: Vec<usize> = grids.iter().map(|g| g.0 * g.1).collect();
        checked_pow(hp.k, grids.len() * (hp.l1 + hp.l2)).saturating_mul(combination_count(&cells))
    }

    /// `MK(L1+L2) + Π K_m1 K_m2`.
    pub fn multi_user_proposed(hp: &TrainingHyperparams, grids: &[(usize, usize)]) -> u128 {
        let cells: Vec<usize> = grids.iter().map(|g| g.0 * g.1).collect();
        (grids.len() * hp.k * (hp.l1 + hp.l2)) as u128 + combination_count(&cells)
    }
}

/// Exhaustive-search grid resolution matching the training's terminal
/// accuracy: `K^L · K_i` cells per axis.
pub fn matched_resolution(hp: &TrainingHyperparams, region: &SamplingRange) -> (usize, usize) {
    let (k1, k2) = hp.exhaustive_grid(region);
    let per = |l: usize, k: usize| (checked_pow(hp.k, l) as usize).saturating_mul(k);
    (per(hp.l1, k1), per(hp.l2, k2))
}

/// Codewords for every cell midpoint of a uniform grid, generated once and
/// shared by all users evaluated against it. Cells whose codeword does not
/// fit on the waveguide (too close to the feed or the end) are infeasible and
/// never selected.
#[derive(Debug, Clone)]
pub struct OracleGrid {
    pub region: SamplingRange,
    pub resolution: (usize, usize),
    pub points: Vec<Point3>,
    pub positions: Vec<Option<Vec<f64>>>,
    pub waveguide: Waveguide,
}

impl OracleGrid {
    pub fn build(
        region: &SamplingRange,
        resolution: (usize, usize),
        antennas: usize,
        waveguide: &Waveguide,
        guard: GuardDistance,
        params: &SystemParams,
        budget: OracleBudget,
    ) -> Result<Self> {
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::InvalidParameter("oracle grid needs at least one cell per axis".into()));
        }
        budget.check((resolution.0 as u128) * (resolution.1 as u128))?;
        let points: Vec<Point3> = grid_cells(region, resolution.0, resolution.1).iter().map(|c| c.midpoint()).collect();
        let positions = points
            .par_iter()
            .map(|p| {
                let snapped = SampleKey::new(p, waveguide.index).point();
                match generate_codeword(&snapped, waveguide, antennas, guard, params) {
                    Ok(cw) => Ok(Some(cw.positions)),
                    Err(Error::OutOfExtent { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { region: *region, resolution, points, positions, waveguide: *waveguide })
    }

    pub fn evaluations(&self) -> u64 {
        self.points.len() as u64
    }

    pub fn infeasible(&self) -> usize {
        self.positions.iter().filter(|p| p.is_none()).count()
    }

    /// Cell maximising `|r|` for `user`; the first cell wins ties.
    pub fn best_for(&self, user: &Point3, params: &SystemParams) -> Result<ExhaustiveOutcome> {
        let metrics = self
            .positions
            .par_iter()
            .map(|pos| match pos {
                Some(pos) => Ok(Some(received_signal_swsu(user, &self.waveguide, pos, params)?.norm())),
                None => Ok(None),
            })
            .collect::<Result<Vec<Option<f64>>>>()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, m) in metrics.iter().enumerate() {
            if let Some(m) = *m {
                if best.is_none_or(|(_, b)| m > b) {
                    best = Some((i, m));
                }
            }
        }
        let (best, metric) =
            best.ok_or_else(|| Error::Geometry("no cell of the oracle grid has a feasible codeword".into()))?;
        Ok(ExhaustiveOutcome {
            point: self.points[best],
            positions: self.positions[best].clone().expect("feasible cell"),
            metric,
            rate: (1.0 + metric * metric / params.noise_power).log2(),
            evaluations: self.evaluations(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOutcome {
    pub point: Point3,
    pub positions: Vec<f64>,
    pub metric: f64,
    pub rate: f64,
    pub evaluations: u64,
}

/// Single-user exhaustive search over a `resolution` grid.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_2d(
    user: &Point3,
    region: &SamplingRange,
    resolution: (usize, usize),
    antennas: usize,
    waveguide: &Waveguide,
    guard: GuardDistance,
    params: &SystemParams,
    budget: OracleBudget,
) -> Result<ExhaustiveOutcome> {
    OracleGrid::build(region, resolution, antennas, waveguide, guard, params, budget)?.best_for(user, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserExhaustive {
    pub points: Vec<Point3>,
    pub sum_rate: f64,
    pub evaluations: u128,
}

/// Cross-product exhaustive search for single-waveguide NOMA: every
/// combination of per-user grid cells, each user's cluster aligned to its
/// cell, scored by the SIC sum rate.
#[allow(clippy::too_many_arguments)]
pub fn exhaustive_2d_noma(
    users: &[ServedUser],
    resolution: (usize, usize),
    antennas: usize,
    alpha: &[f64],
    waveguide: &Waveguide,
    guard: GuardDistance,
    params: &SystemParams,
    budget: OracleBudget,
) -> Result<MultiUserExhaustive> {
    let per_user = (resolution.0 as u128) * (resolution.1 as u128);
    let required = (0..users.len()).fold(1u128, |acc, _| acc.saturating_mul(per_user));
    budget.check(required)?;
    let sizes = cluster_antennas(antennas, users.len())?;
    let grids = users
        .iter()
        .zip(&sizes)
        .map(|(u, &n)| OracleGrid::build(&u.region, resolution, n, waveguide, guard, params, budget))
        .collect::<Result<Vec<_>>>()?;
    let radices: Vec<usize> = grids.iter().map(|g| g.points.len()).collect();
    let noise = vec![params.noise_power; users.len()];
    let amp = (params.total_power / antennas as f64).sqrt();
    let (_, best) = scan_combinations(&radices, budget.max_evaluations, |cells| {
        let mut all = Vec::new();
        for (&k, g) in cells.iter().zip(&grids) {
            match &g.positions[k] {
                Some(p) => all.extend_from_slice(p),
                None => return Ok(f64::NEG_INFINITY),
            }
        }
        let gains = users
            .iter()
            .map(|u| Ok(superpose(&u.location, waveguide, &all, amp, params)?.norm_sqr()))
            .collect::<Result<Vec<_>>>()?;
        Ok(sic_rates(&gains, alpha, &noise, None)?.sum_rate)
    })?;
    Ok(MultiUserExhaustive {
        points: best.cells.iter().zip(&grids).map(|(&k, g)| g.points[k]).collect(),
        sum_rate: best.sum_rate,
        evaluations: required,
    })
}

/// `x` positions of `n` elements at `spacing`, centred on `center`.
pub fn centered_array(center: f64, n: usize, spacing: f64) -> Vec<f64> {
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|k| center + (k as f64 - mid) * spacing).collect()
}

/// Phase-matched amplitude sum `Σ √η / d_k` from a set of element locations.
fn coherent_gain(user: &Point3, elements: &[Point3], params: &SystemParams) -> f64 {
    elements.iter().map(|e| params.eta.sqrt() / user.distance(e)).sum()
}

fn rate_from_coherent(sum: f64, n: usize, params: &SystemParams) -> f64 {
    (1.0 + params.total_power / n as f64 * sum * sum / params.noise_power).log2()
}

/// Element locations of the fixed pinching array: `n` antennas at `λ/2`
/// spacing centred on the waveguide point nearest the user.
pub fn fixed_pinching_layout(user: &Point3, waveguide: &Waveguide, n: usize, params: &SystemParams) -> Vec<Point3> {
    centered_array(user.x, n, params.wavelength / 2.0).into_iter().map(|x| waveguide.antenna_at(x)).collect()
}

/// Rate of the fixed pinching array with every arrival phase aligned.
pub fn fixed_pinching_bound(user: &Point3, waveguide: &Waveguide, n: usize, params: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("fixed array needs at least one antenna".into()));
    }
    let layout = fixed_pinching_layout(user, waveguide, n, params);
    Ok(rate_from_coherent(coherent_gain(user, &layout, params), n, params))
}

/// Element locations of a `λ/2` uniform linear array along the x axis,
/// centred on the base station.
pub fn ula_layout(bs: &Point3, n: usize, params: &SystemParams) -> Vec<Point3> {
    centered_array(bs.x, n, params.wavelength / 2.0).into_iter().map(|x| Point3::new(x, bs.y, bs.z)).collect()
}

/// Rate of the conventional array with every arrival phase aligned.
pub fn conventional_ula_bound(user: &Point3, n: usize, bs: &Point3, params: &SystemParams) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("array needs at least one element".into()));
    }
    let layout = ula_layout(bs, n, params);
    Ok(rate_from_coherent(coherent_gain(user, &layout, params), n, params))
}

/// NOMA sum rate when each user's gain is the phase-matched coherent sum over
/// the given elements (total power split over all of them).
pub fn phase_matched_noma(
    users: &[Point3],
    elements: &[Point3],
    alpha: &[f64],
    params: &SystemParams,
) -> Result<f64> {
    if elements.is_empty() {
        return Err(Error::InvalidParameter("no elements".into()));
    }
    let n = elements.len() as f64;
    let gains: Vec<f64> = users.iter().map(|u| params.total_power / n * coherent_gain(u, elements, params).powi(2)).collect();
    let noise = vec![params.noise_power; users.len()];
    Ok(sic_rates(&gains, alpha, &noise, None)?.sum_rate)
}

/// Each user served alone, at full power, for `1/M` of the time.
pub fn tdma_wrapper(single_user_rates: &[f64]) -> Result<f64> {
    if single_user_rates.is_empty() {
        return Err(Error::InvalidParameter("no users".into()));
    }
    Ok(single_user_rates.iter().sum::<f64>() / single_user_rates.len() as f64)
}
