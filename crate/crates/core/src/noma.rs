//! Single-waveguide multi-user training with NOMA superposition.
//!
//! The activated antennas are split into one cluster per user. Each cluster
//! first trains on its own user (stages 1–2 of the single-user scheme), then
//! clusters whose users turn out to be close are merged or pushed to opposite
//! sides of each other, and finally every combination of per-cluster
//! exhaustive-search cells is scored by the SIC sum rate.

use rayon::prelude::*;

use crate::codebook::{generate_chain, truncate_codeword, Codebook, GuardDistance, SearchDirection};
use crate::error::{Error, Result};
use crate::physics::{superpose, Point3, SystemParams, Waveguide};
use crate::swsu::{
    exhaustive_cells, grid_cells, stage1_coarse, stage2_fine, Probe, SamplingRange, TraceRow, TrainingContext,
    TrainingHyperparams, TrainingState,
};

/// Tolerance on `Σα = 1`.
const ALPHA_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServedUser {
    pub location: Point3,
    pub region: SamplingRange,
}

/// Cluster sizes: the first `N mod M` clusters get `⌈N/M⌉`, the rest `⌊N/M⌋`.
pub fn cluster_antennas(n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || n < m {
        return Err(Error::InvalidParameter(format!("cannot split {n} antennas into {m} clusters")));
    }
    let extra = n % m;
    Ok((0..m).map(|i| if i < extra { n / m + 1 } else { n / m }).collect())
}

pub fn validate_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0 && *a <= 1.0)) {
        return Err(Error::InvalidParameter(format!("power allocation {alpha:?} has entries outside [0, 1]")));
    }
    let sum: f64 = alpha.iter().sum();
    if (sum - 1.0).abs() > ALPHA_SUM_TOL {
        return Err(Error::InvalidParameter(format!("power allocation sums to {sum}, expected 1")));
    }
    Ok(())
}

/// `|h^H g|²` with `g = √(P/N)` on every listed position.
pub fn effective_gain(
    user: &Point3,
    positions: &[f64],
    total_antennas: usize,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<f64> {
    if positions.is_empty() || total_antennas == 0 {
        return Err(Error::InvalidParameter("no active antennas".into()));
    }
    let amp = (params.total_power / total_antennas as f64).sqrt();
    Ok(superpose(user, waveguide, positions, amp, params)?.norm_sqr())
}

/// Desired-signal strength `|h_m^H g|² α_m`.
pub fn noma_received_strength(
    user: &Point3,
    positions: &[f64],
    alpha: f64,
    total_antennas: usize,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<f64> {
    Ok(effective_gain(user, positions, total_antennas, waveguide, params)? * alpha)
}

/// Per-user outcome of SIC decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct SicOutcome {
    /// User indices by ascending effective gain (decoding order).
    pub order: Vec<usize>,
    /// Rate of each user's own signal, indexed by user.
    pub rates: Vec<f64>,
    pub sum_rate: f64,
}

/// Ascending-gain order, ties by user index.
pub fn sic_order(gains: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| gains[a].total_cmp(&gains[b]).then(a.cmp(&b)));
    order
}

/// SIC rates. `alpha[p]` is the power share of the user at position `p` of
/// the decoding order; `noise[u]` is user `u`'s noise power. When `order` is
/// `None` it is derived from `gains`.
pub fn sic_rates(gains: &[f64], alpha: &[f64], noise: &[f64], order: Option<&[usize]>) -> Result<SicOutcome> {
    let m = gains.len();
    if alpha.len() != m || noise.len() != m {
        return Err(Error::InvalidParameter(format!(
            "{m} users need {m} power shares and noise powers, got {} and {}",
            alpha.len(),
            noise.len()
        )));
    }
    validate_alpha(alpha)?;
    let order = match order {
        Some(o) => o.to_vec(),
        None => sic_order(gains),
    };
    let mut rates = vec![0.0; m];
    for p in 0..m {
        let rest: f64 = alpha[p + 1..].iter().sum();
        let rate = (p..m)
            .map(|q| {
                let j = order[q];
                let g = gains[j];
                (1.0 + g * alpha[p] / (g * rest + noise[j])).log2()
            })
            .fold(f64::INFINITY, f64::min);
        rates[order[p]] = rate;
    }
    let sum_rate = rates.iter().sum();
    Ok(SicOutcome { order, rates, sum_rate })
}

/// Stage-1 metric: strength of the user's own cluster only.
struct ClusterProbe<'a> {
    user: Point3,
    alpha: f64,
    total_antennas: usize,
    waveguide: &'a Waveguide,
    params: &'a SystemParams,
}

impl Probe for ClusterProbe<'_> {
    fn measure(&mut self, positions: &[f64]) -> Result<f64> {
        noma_received_strength(&self.user, positions, self.alpha, self.total_antennas, self.waveguide, self.params)
    }
}

/// Result of the separated per-user hierarchical training.
#[derive(Debug, Clone, PartialEq)]
pub struct UserTraining {
    pub estimate: Point3,
    pub range: SamplingRange,
    pub best_metric: f64,
    pub measurements: u64,
    pub trace: Vec<TraceRow>,
}

/// Stages 1–2 of single-user training for each user inside its own region,
/// each capped at its cluster size.
#[allow(clippy::too_many_arguments)]
pub fn separated_training(
    users: &[ServedUser],
    cluster_sizes: &[usize],
    alpha: &[f64],
    hp: &TrainingHyperparams,
    cb: &mut Codebook,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<Vec<UserTraining>> {
    if cluster_sizes.len() != users.len() {
        return Err(Error::InvalidParameter("one cluster per user is required".into()));
    }
    let total: usize = cluster_sizes.iter().sum();
    users
        .iter()
        .enumerate()
        .map(|(m, user)| {
            let mut ctx = TrainingContext::new(waveguide, params, hp, &user.region);
            ctx.antenna_cap = cluster_sizes[m];
            let mut probe = ClusterProbe {
                user: user.location,
                alpha: alpha.get(m).copied().unwrap_or(1.0),
                total_antennas: total,
                waveguide,
                params,
            };
            let mut state = TrainingState::new(user.region);
            stage1_coarse(&ctx, &mut state, cb, &mut probe)?;
            stage2_fine(&ctx, &mut state, cb, &mut probe)?;
            Ok(UserTraining {
                estimate: Point3::ground(state.estimate.0, state.estimate.1),
                range: state.range,
                best_metric: state.best_metric,
                measurements: state.measurements,
                trace: state.trace,
            })
        })
        .collect()
}

/// Where a cluster may place its antennas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterLayout {
    /// Alternating codeword truncated to the cluster size.
    Full,
    /// Only positions toward the feed, all at or below `boundary − Δ/2`.
    FeedSide { boundary: f64 },
    /// Only positions toward the waveguide end, all at or above `boundary + Δ/2`.
    EndSide { boundary: f64 },
}

/// A cluster of activated antennas after reclustering.
#[derive(Debug, Clone, PartialEq)]
pub struct AntennaCluster {
    /// Users served by this cluster (more than one after a merge).
    pub users: Vec<usize>,
    pub size: usize,
    pub range: SamplingRange,
    pub layout: ClusterLayout,
    /// Adjacent cluster this one was interleaved with, if any.
    pub interleaved_with: Option<usize>,
}

impl AntennaCluster {
    pub fn owner(&self) -> usize {
        self.users[0]
    }

    /// Antenna positions aligned to `point` under this cluster's layout.
    pub fn positions(
        &self,
        point: &Point3,
        cb: &mut Codebook,
        waveguide: &Waveguide,
        params: &SystemParams,
    ) -> Result<Vec<f64>> {
        let guard = cb.guard();
        match self.layout {
            ClusterLayout::Full => {
                let cw = cb.get_or_generate(point, waveguide, params)?;
                Ok(truncate_codeword(cw, self.size)?.positions)
            }
            ClusterLayout::FeedSide { boundary } => generate_chain(
                point,
                waveguide,
                point.x.min(boundary) - guard.meters() / 2.0,
                self.size,
                SearchDirection::TowardFeed,
                guard,
                params,
            ),
            ClusterLayout::EndSide { boundary } => generate_chain(
                point,
                waveguide,
                point.x.max(boundary) + guard.meters() / 2.0,
                self.size,
                SearchDirection::TowardEnd,
                guard,
                params,
            ),
        }
    }
}

/// Merges adjacent clusters whose estimates are within `d_tilde`, and splits
/// x-close, overlapping neighbours onto opposite sides of their midpoint.
///
/// A cluster already pushed to the end side by its left neighbour keeps that
/// layout when its right neighbour would also need it on the feed side.
#[allow(clippy::too_many_arguments)]
pub fn recluster(
    trainings: &[UserTraining],
    cluster_sizes: &[usize],
    d_tilde: f64,
    guard: GuardDistance,
    cb: &mut Codebook,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<Vec<AntennaCluster>> {
    let mut clusters: Vec<AntennaCluster> = Vec::new();
    // Cluster index holding each user.
    let mut home: Vec<usize> = Vec::with_capacity(trainings.len());
    for (m, t) in trainings.iter().enumerate() {
        if m > 0 {
            let prev = &trainings[m - 1];
            let c = home[m - 1];
            if prev.estimate.distance(&t.estimate) <= d_tilde {
                let merged = &mut clusters[c];
                merged.users.push(m);
                merged.size += cluster_sizes[m];
                merged.range = merged.range.hull(&t.range);
                merged.layout = ClusterLayout::Full;
                home.push(c);
                continue;
            }
            if (prev.estimate.x - t.estimate.x).abs() <= d_tilde {
                let left = clusters[c].positions(&prev.estimate, cb, waveguide, params)?;
                let right = Codebook::truncated_lookup(cb, &t.estimate, cluster_sizes[m], waveguide, params)?;
                let left_reach = left.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let right_reach = right.iter().copied().fold(f64::INFINITY, f64::min);
                if right_reach - left_reach < guard.meters() {
                    let boundary = 0.5 * (prev.estimate.x + t.estimate.x);
                    if clusters[c].layout == ClusterLayout::Full {
                        clusters[c].layout = ClusterLayout::FeedSide { boundary };
                    }
                    clusters[c].interleaved_with = Some(clusters.len());
                    clusters.push(AntennaCluster {
                        users: vec![m],
                        size: cluster_sizes[m],
                        range: t.range,
                        layout: ClusterLayout::EndSide { boundary },
                        interleaved_with: Some(c),
                    });
                    home.push(clusters.len() - 1);
                    continue;
                }
            }
        }
        clusters.push(AntennaCluster {
            users: vec![m],
            size: cluster_sizes[m],
            range: t.range,
            layout: ClusterLayout::Full,
            interleaved_with: None,
        });
        home.push(clusters.len() - 1);
    }
    Ok(clusters)
}

impl Codebook {
    /// Codeword for `point` truncated to `count` entries.
    pub fn truncated_lookup(
        &mut self,
        point: &Point3,
        count: usize,
        waveguide: &Waveguide,
        params: &SystemParams,
    ) -> Result<Vec<f64>> {
        let cw = self.get_or_generate(point, waveguide, params)?;
        Ok(truncate_codeword(cw, count)?.positions)
    }
}

/// One scored combination of per-cluster cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinationScore {
    pub index: u64,
    pub cells: Vec<usize>,
    pub sum_rate: f64,
}

/// Writes one row per evaluated combination: index, per-cluster cells, sum rate.
pub fn write_combination_csv<W: std::io::Write>(rows: &[CombinationScore], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["combination", "cells", "sum_rate"]).map_err(io)?;
    for r in rows {
        let cells: Vec<String> = r.cells.iter().map(usize::to_string).collect();
        w.write_record([r.index.to_string(), cells.join(";"), crate::format::sig12(r.sum_rate)]).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Result of the joint multi-user exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct JointOutcome {
    /// Chosen cell index per cluster (x-major within the cluster grid).
    pub cells: Vec<usize>,
    pub sampling_points: Vec<Point3>,
    pub positions: Vec<Vec<f64>>,
    pub grids: Vec<(usize, usize)>,
    pub sic: SicOutcome,
    pub measurements: u64,
    /// Every evaluated combination when requested.
    pub dump: Option<Vec<CombinationScore>>,
}

/// Candidate antenna sets for one cluster: one per exhaustive-search cell.
pub struct ClusterCandidates {
    pub grid: (usize, usize),
    pub points: Vec<Point3>,
    pub positions: Vec<Vec<f64>>,
}

pub fn cluster_candidates(
    cluster: &AntennaCluster,
    d_es: f64,
    cb: &mut Codebook,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<ClusterCandidates> {
    let k1 = exhaustive_cells(cluster.range.x.len(), d_es);
    let k2 = exhaustive_cells(cluster.range.y.len(), d_es);
    let cells = grid_cells(&cluster.range, k1, k2);
    let mut points = Vec::with_capacity(cells.len());
    let mut positions = Vec::with_capacity(cells.len());
    for cell in &cells {
        let p = cell.midpoint();
        positions.push(cluster.positions(&p, cb, waveguide, params)?);
        points.push(p);
    }
    Ok(ClusterCandidates { grid: (k1, k2), points, positions })
}

/// Mixed-radix decode of a combination index, first cluster most significant.
pub fn decode_combination(mut index: u64, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (slot, &r) in out.iter_mut().zip(radices).rev() {
        *slot = (index % r as u64) as usize;
        index /= r as u64;
    }
    out
}

/// Product of counts, saturating into `u128`.
pub fn combination_count(radices: &[usize]) -> u128 {
    radices.iter().fold(1u128, |acc, &r| acc.saturating_mul(r as u128))
}

/// Evaluates `objective` on every mixed-radix combination (in parallel) and
/// returns all scores in index order plus the best one, first index winning
/// ties.
pub fn scan_combinations<F>(radices: &[usize], budget: u128, objective: F) -> Result<(Vec<CombinationScore>, CombinationScore)>
where
    F: Fn(&[usize]) -> Result<f64> + Sync,
{
    let count = combination_count(radices);
    if count > budget {
        return Err(Error::BudgetExceeded { required: count, budget });
    }
    let scores = (0..count as u64)
        .into_par_iter()
        .map(|index| {
            let cells = decode_combination(index, radices);
            let sum_rate = objective(&cells)?;
            Ok(CombinationScore { index, cells, sum_rate })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = scores
        .iter()
        .fold(None::<&CombinationScore>, |acc, s| match acc {
            Some(b) if b.sum_rate >= s.sum_rate => Some(b),
            _ => Some(s),
        })
        .cloned()
        .ok_or_else(|| Error::InvalidParameter("no combinations to evaluate".into()))?;
    Ok((scores, best))
}

/// Scores every cell combination by SIC sum rate and keeps the best (first
/// index wins ties).
#[allow(clippy::too_many_arguments)]
pub fn joint_exhaustive(
    users: &[ServedUser],
    clusters: &[AntennaCluster],
    hp: &TrainingHyperparams,
    alpha: &[f64],
    order: &[usize],
    budget: u128,
    keep_dump: bool,
    cb: &mut Codebook,
    waveguide: &Waveguide,
    params: &SystemParams,
) -> Result<JointOutcome> {
    validate_alpha(alpha)?;
    let candidates = clusters
        .iter()
        .map(|c| cluster_candidates(c, hp.d_es, cb, waveguide, params))
        .collect::<Result<Vec<_>>>()?;
    let radices: Vec<usize> = candidates.iter().map(|c| c.points.len()).collect();
    let total: usize = clusters.iter().map(|c| c.size).sum();
    let noise = vec![params.noise_power; users.len()];

    let (scores, best) = scan_combinations(&radices, budget, |cells| {
        let all: Vec<f64> = cells
            .iter()
            .zip(&candidates)
            .flat_map(|(&k, cand)| cand.positions[k].iter().copied())
            .collect();
        let gains = users
            .iter()
            .map(|u| effective_gain(&u.location, &all, total, waveguide, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(sic_rates(&gains, alpha, &noise, Some(order))?.sum_rate)
    })?;
    let count = scores.len();
    let positions: Vec<Vec<f64>> = best.cells.iter().zip(&candidates).map(|(&k, c)| c.positions[k].clone()).collect();
    let all: Vec<f64> = positions.iter().flatten().copied().collect();
    let gains = users
        .iter()
        .map(|u| effective_gain(&u.location, &all, total, waveguide, params))
        .collect::<Result<Vec<_>>>()?;
    let sic = sic_rates(&gains, alpha, &noise, Some(order))?;
    Ok(JointOutcome {
        cells: best.cells.clone(),
        sampling_points: best.cells.iter().zip(&candidates).map(|(&k, c)| c.points[k]).collect(),
        positions,
        grids: candidates.iter().map(|c| c.grid).collect(),
        sic,
        measurements: count as u64,
        dump: keep_dump.then_some(scores),
    })
}

/// Inputs of the improved three-stage scheme.
#[derive(Debug, Clone)]
pub struct NomaSetup {
    pub params: SystemParams,
    pub waveguide: Waveguide,
    pub hp: TrainingHyperparams,
    /// Power shares by SIC position, weakest user first.
    pub alpha: Vec<f64>,
    pub d_tilde: f64,
    pub budget: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NomaOutcome {
    pub separated: Vec<UserTraining>,
    pub clusters: Vec<AntennaCluster>,
    pub sic_order: Vec<usize>,
    pub joint: JointOutcome,
    pub separated_measurements: u64,
    pub measurements: u64,
}

impl NomaOutcome {
    pub fn sum_rate(&self) -> f64 {
        self.joint.sic.sum_rate
    }
}

/// Runs the improved three-stage scheme for all users.
pub fn run_improved_3sbt(users: &[ServedUser], setup: &NomaSetup, cb: &mut Codebook, keep_dump: bool) -> Result<NomaOutcome> {
    setup.hp.validate()?;
    if users.is_empty() {
        return Err(Error::InvalidParameter("no users".into()));
    }
    if setup.alpha.len() != users.len() {
        return Err(Error::InvalidParameter(format!(
            "{} users need {} power shares, got {}",
            users.len(),
            users.len(),
            setup.alpha.len()
        )));
    }
    let (wg, params) = (&setup.waveguide, &setup.params);
    let sizes = cluster_antennas(setup.hp.n, users.len())?;
    let separated = separated_training(users, &sizes, &setup.alpha, &setup.hp, cb, wg, params)?;
    let separated_measurements = separated.iter().map(|t| t.measurements).sum();
    let clusters = recluster(&separated, &sizes, setup.d_tilde, cb.guard(), cb, wg, params)?;

    // Decoding order from the post-reclustering layout at the estimates.
    let mut all = Vec::new();
    for c in &clusters {
        let anchor = separated[c.owner()].estimate;
        all.extend(c.positions(&anchor, cb, wg, params)?);
    }
    let total: usize = clusters.iter().map(|c| c.size).sum();
    let gains = users
        .iter()
        .map(|u| effective_gain(&u.location, &all, total, wg, params))
        .collect::<Result<Vec<_>>>()?;
    let order = sic_order(&gains);

    let joint = joint_exhaustive(users, &clusters, &setup.hp, &setup.alpha, &order, setup.budget, keep_dump, cb, wg, params)?;
    let measurements = separated_measurements + joint.measurements;
    Ok(NomaOutcome { separated, clusters, sic_order: order, joint, separated_measurements, measurements })
}
