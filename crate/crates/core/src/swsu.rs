//! Three-stage beam training for one user on one waveguide.
//!
//! Stage 1 narrows the x interval with a single activated antenna, stage 2
//! narrows the y interval while the number of activated antennas doubles per
//! layer, and stage 3 exhaustively scans the remaining cell on a grid fine
//! enough that every sub-cell is shorter than `d_ES`.
//!
//! The stages take a [`Probe`], which turns a set of antenna positions into
//! the scalar metric fed back by the user. The multi-user schemes reuse the
//! stages with their own probes.

use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::codebook::{truncate_codeword, Codebook, Codeword};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::physics::{received_signal_swsu, superpose, Point3, SystemParams, Waveguide};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min <= max) {
            return Err(Error::InvalidParameter(format!("interval [{min}, {max}] is invalid")));
        }
        Ok(Self { min, max })
    }

    pub fn len(&self) -> f64 {
        self.max - self.min
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.min && v <= self.max
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval { min: self.min.min(other.min), max: self.max.max(other.max) }
    }
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingRange {
    pub x: Interval,
    pub y: Interval,
}

impl SamplingRange {
    pub fn new(x: (f64, f64), y: (f64, f64)) -> Result<Self> {
        Ok(Self { x: Interval::new(x.0, x.1)?, y: Interval::new(y.0, y.1)? })
    }

    pub fn midpoint(&self) -> Point3 {
        Point3::ground(self.x.mid(), self.y.mid())
    }

    pub fn contains(&self, p: &Point3) -> bool {
        self.x.contains(p.x) && self.y.contains(p.y)
    }

    pub fn contains_range(&self, other: &SamplingRange) -> bool {
        self.x.min <= other.x.min && self.x.max >= other.x.max && self.y.min <= other.y.min && self.y.max >= other.y.max
    }

    /// Smallest rectangle covering both ranges.
    pub fn hull(&self, other: &SamplingRange) -> SamplingRange {
        SamplingRange { x: self.x.hull(&other.x), y: self.y.hull(&other.y) }
    }

    fn interval(&self, axis: Axis) -> Interval {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One training layer: the parent range cut into K equal cells along an axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSubdivision {
    pub parent: SamplingRange,
    pub axis: Axis,
    pub cells: Vec<SamplingRange>,
}

impl LayerSubdivision {
    /// Cell midpoints along the subdivided axis.
    pub fn midpoints(&self) -> Vec<f64> {
        self.cells.iter().map(|c| c.interval(self.axis).mid()).collect()
    }
}

pub fn subdivide(range: &SamplingRange, axis: Axis, k: usize) -> Result<LayerSubdivision> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("a layer needs K >= 2 branches, got {k}")));
    }
    let iv = range.interval(axis);
    if iv.len() <= 0.0 {
        return Err(Error::DegenerateRange(format!("{axis:?} interval [{}, {}] has zero length", iv.min, iv.max)));
    }
    let width = iv.len() / k as f64;
    let cells = (0..k)
        .map(|i| {
            let lo = iv.min + i as f64 * width;
            let hi = if i + 1 == k { iv.max } else { iv.min + (i + 1) as f64 * width };
            let cut = Interval { min: lo, max: hi };
            match axis {
                Axis::X => SamplingRange { x: cut, y: range.y },
                Axis::Y => SamplingRange { x: range.x, y: cut },
            }
        })
        .collect();
    Ok(LayerSubdivision { parent: *range, axis, cells })
}

/// Smallest cell count along an interval so every cell is at most `d_es` long.
pub fn exhaustive_cells(len: f64, d_es: f64) -> usize {
    // The relative slack keeps exact multiples (0.04 / 0.01) from rounding up.
    let ratio = len / d_es;
    ((ratio * (1.0 - 1e-12)).ceil() as usize).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingHyperparams {
    /// Branches per hierarchical layer.
    pub k: usize,
    pub l1: usize,
    pub l2: usize,
    /// Largest exhaustive-search cell side, m.
    pub d_es: f64,
    /// Activated antennas at full resolution.
    pub n: usize,
}

impl TrainingHyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidParameter(format!("K must be >= 2, got {}", self.k)));
        }
        if self.l1 < 1 || self.l2 < 1 {
            return Err(Error::InvalidParameter("L1 and L2 must be >= 1".into()));
        }
        if !(self.d_es.is_finite() && self.d_es > 0.0) {
            return Err(Error::InvalidParameter(format!("d_ES must be positive, got {}", self.d_es)));
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter("N must be >= 1".into()));
        }
        Ok(())
    }

    /// Active antennas at stage-2 layer `layer` (numbered from `L1 + 1`).
    pub fn stage2_antennas(&self, layer: usize) -> usize {
        let exp = (layer + 1).saturating_sub(self.l1);
        let doubled = if exp >= usize::BITS as usize { usize::MAX } else { 1usize << exp };
        doubled.min(self.n)
    }

    /// Cell edge lengths after the two hierarchical stages for a region.
    pub fn terminal_cell(&self, region: &SamplingRange) -> (f64, f64) {
        let kx = (self.k as f64).powi(self.l1 as i32);
        let ky = (self.k as f64).powi(self.l2 as i32);
        (region.x.len() / kx, region.y.len() / ky)
    }

    /// `(K1, K2)` for a region of this size.
    pub fn exhaustive_grid(&self, region: &SamplingRange) -> (usize, usize) {
        let (cx, cy) = self.terminal_cell(region);
        (exhaustive_cells(cx, self.d_es), exhaustive_cells(cy, self.d_es))
    }
}

/// Turns an activated antenna set into the metric fed back by the user.
pub trait Probe {
    fn measure(&mut self, positions: &[f64]) -> Result<f64>;
}

/// Magnitude of the received training signal at one user, with the probe's
/// power split equally over the active antennas and optional AWGN.
pub struct SignalProbe<'a> {
    pub user: Point3,
    pub waveguide: &'a Waveguide,
    pub params: &'a SystemParams,
    pub power: f64,
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
}

impl<'a> SignalProbe<'a> {
    pub fn new(user: Point3, waveguide: &'a Waveguide, params: &'a SystemParams, power: f64) -> Self {
        Self { user, waveguide, params, power, noise: None }
    }

    /// Adds circularly-symmetric complex Gaussian noise of variance `σ²` to
    /// every measurement.
    pub fn with_noise(mut self, seed: u64) -> Self {
        let std = (self.params.noise_power / 2.0).sqrt();
        self.noise = Some((ChaCha8Rng::seed_from_u64(seed), Normal::new(0.0, std).expect("finite std")));
        self
    }
}

impl Probe for SignalProbe<'_> {
    fn measure(&mut self, positions: &[f64]) -> Result<f64> {
        if positions.is_empty() {
            return Err(Error::InvalidParameter("no active antennas".into()));
        }
        let amp = (self.power / positions.len() as f64).sqrt();
        let mut r = superpose(&self.user, self.waveguide, positions, amp, self.params)?;
        if let Some((rng, normal)) = self.noise.as_mut() {
            r += Complex64::new(normal.sample(rng), normal.sample(rng));
        }
        Ok(r.norm())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Coarse,
    Fine,
    Exhaustive,
}

impl Stage {
    pub fn number(&self) -> usize {
        match self {
            Stage::Coarse => 1,
            Stage::Fine => 2,
            Stage::Exhaustive => 3,
        }
    }
}

/// One layer of training (stage 3 is logged as a single aggregate row).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub layer: usize,
    pub stage: Stage,
    pub active_antennas: usize,
    pub samples: Vec<Point3>,
    pub metrics: Vec<f64>,
    pub running_best: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingResult {
    pub best_codeword: Codeword,
    pub best_metric: f64,
    pub estimate: (f64, f64),
    pub final_range: SamplingRange,
    pub measurements: u64,
    pub exhaustive_grid: (usize, usize),
    pub trace: Vec<TraceRow>,
}

impl TrainingResult {
    /// `(layer, N', running best)` per trace row.
    pub fn per_layer(&self) -> Vec<(usize, usize, f64)> {
        self.trace.iter().map(|r| (r.layer, r.active_antennas, r.running_best)).collect()
    }

    /// One CSV row per measurement.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        write_trace_csv(&self.trace, out)
    }
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["layer", "stage", "active_antennas", "sample_index", "sample_x", "sample_y", "metric", "running_best"])
        .map_err(io)?;
    for row in trace {
        for (i, (p, m)) in row.samples.iter().zip(&row.metrics).enumerate() {
            w.write_record([
                row.layer.to_string(),
                row.stage.number().to_string(),
                row.active_antennas.to_string(),
                (i + 1).to_string(),
                sig12(p.x),
                sig12(p.y),
                sig12(*m),
                sig12(row.running_best),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Fixed inputs of one training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingContext<'a> {
    pub waveguide: &'a Waveguide,
    pub params: &'a SystemParams,
    pub hp: &'a TrainingHyperparams,
    /// y of the stage-1 sampling points.
    pub stage1_y: f64,
    /// Upper bound on active antennas (a cluster size in multi-user schemes).
    pub antenna_cap: usize,
}

impl<'a> TrainingContext<'a> {
    pub fn new(waveguide: &'a Waveguide, params: &'a SystemParams, hp: &'a TrainingHyperparams, region: &SamplingRange) -> Self {
        Self { waveguide, params, hp, stage1_y: region.y.mid(), antenna_cap: hp.n }
    }

    fn full_antennas(&self) -> usize {
        self.hp.n.min(self.antenna_cap)
    }
}

/// Mutable state carried across the stages.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub range: SamplingRange,
    pub best_metric: f64,
    pub best_codeword: Option<Codeword>,
    pub estimate: (f64, f64),
    pub measurements: u64,
    pub exhaustive_grid: (usize, usize),
    pub trace: Vec<TraceRow>,
    next_layer: usize,
}

impl TrainingState {
    pub fn new(region: SamplingRange) -> Self {
        Self {
            range: region,
            best_metric: 0.0,
            best_codeword: None,
            estimate: (region.x.mid(), region.y.mid()),
            measurements: 0,
            exhaustive_grid: (0, 0),
            trace: Vec::new(),
            next_layer: 1,
        }
    }

    pub fn into_result(self) -> Result<TrainingResult> {
        let best_codeword = self
            .best_codeword
            .ok_or_else(|| Error::InvalidParameter("training produced no measurement above zero".into()))?;
        Ok(TrainingResult {
            best_codeword,
            best_metric: self.best_metric,
            estimate: self.estimate,
            final_range: self.range,
            measurements: self.measurements,
            exhaustive_grid: self.exhaustive_grid,
            trace: self.trace,
        })
    }

    /// Strict-improvement update of the running optimum.
    fn offer(&mut self, metric: f64, cw: &Codeword, estimate: (Option<f64>, Option<f64>)) {
        if metric > self.best_metric {
            self.best_metric = metric;
            self.best_codeword = Some(cw.clone());
            if let Some(x) = estimate.0 {
                self.estimate.0 = x;
            }
            if let Some(y) = estimate.1 {
                self.estimate.1 = y;
            }
        }
    }
}

fn codeword_for(ctx: &TrainingContext, cb: &mut Codebook, point: &Point3, active: usize) -> Result<Codeword> {
    if cb.stored_antenna_count() < active {
        return Err(Error::InvalidParameter(format!(
            "codebook stores {} antennas per codeword, {active} requested",
            cb.stored_antenna_count()
        )));
    }
    let full = cb.get_or_generate(point, ctx.waveguide, ctx.params)?;
    truncate_codeword(full, active)
}

/// Index of the first maximum.
fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn hierarchical_layer(
    ctx: &TrainingContext,
    state: &mut TrainingState,
    cb: &mut Codebook,
    probe: &mut dyn Probe,
    axis: Axis,
    stage: Stage,
    active: usize,
) -> Result<()> {
    let layer = subdivide(&state.range, axis, ctx.hp.k)?;
    let fixed_x = state.range.x.mid();
    let mut samples = Vec::with_capacity(ctx.hp.k);
    let mut metrics = Vec::with_capacity(ctx.hp.k);
    for mid in layer.midpoints() {
        let point = match axis {
            Axis::X => Point3::ground(mid, ctx.stage1_y),
            Axis::Y => Point3::ground(fixed_x, mid),
        };
        let cw = codeword_for(ctx, cb, &point, active)?;
        let metric = probe.measure(&cw.positions)?;
        state.measurements += 1;
        let estimate = match axis {
            Axis::X => (Some(mid), None),
            Axis::Y => (None, Some(mid)),
        };
        state.offer(metric, &cw, estimate);
        samples.push(point);
        metrics.push(metric);
    }
    state.range = layer.cells[argmax(&metrics)];
    state.trace.push(TraceRow {
        layer: state.next_layer,
        stage,
        active_antennas: active,
        samples,
        metrics,
        running_best: state.best_metric,
    });
    state.next_layer += 1;
    Ok(())
}

/// Stage 1: `L1` layers along x with one active antenna.
pub fn stage1_coarse(ctx: &TrainingContext, state: &mut TrainingState, cb: &mut Codebook, probe: &mut dyn Probe) -> Result<()> {
    ctx.hp.validate()?;
    for _ in 0..ctx.hp.l1 {
        hierarchical_layer(ctx, state, cb, probe, Axis::X, Stage::Coarse, 1)?;
    }
    Ok(())
}

/// Stage 2: `L2` layers along y at the centre of the stage-1 x interval, with
/// `min(2^(l+1-L1), N)` active antennas at layer `l`.
pub fn stage2_fine(ctx: &TrainingContext, state: &mut TrainingState, cb: &mut Codebook, probe: &mut dyn Probe) -> Result<()> {
    ctx.hp.validate()?;
    for l in ctx.hp.l1 + 1..=ctx.hp.l1 + ctx.hp.l2 {
        let active = ctx.hp.stage2_antennas(l).min(ctx.antenna_cap);
        hierarchical_layer(ctx, state, cb, probe, Axis::Y, Stage::Fine, active)?;
    }
    Ok(())
}

/// Cell midpoints of a `K1 × K2` grid, x-major.
pub fn grid_cells(range: &SamplingRange, k1: usize, k2: usize) -> Vec<SamplingRange> {
    let wx = range.x.len() / k1 as f64;
    let wy = range.y.len() / k2 as f64;
    let mut out = Vec::with_capacity(k1 * k2);
    for i in 0..k1 {
        for j in 0..k2 {
            let x = Interval { min: range.x.min + i as f64 * wx, max: range.x.min + (i + 1) as f64 * wx };
            let y = Interval { min: range.y.min + j as f64 * wy, max: range.y.min + (j + 1) as f64 * wy };
            out.push(SamplingRange { x, y });
        }
    }
    out
}

/// Stage 3: exhaustive scan of the remaining range with all antennas.
pub fn stage3_exhaustive(ctx: &TrainingContext, state: &mut TrainingState, cb: &mut Codebook, probe: &mut dyn Probe) -> Result<()> {
    ctx.hp.validate()?;
    let k1 = exhaustive_cells(state.range.x.len(), ctx.hp.d_es);
    let k2 = exhaustive_cells(state.range.y.len(), ctx.hp.d_es);
    let active = ctx.full_antennas();
    let cells = grid_cells(&state.range, k1, k2);
    let mut samples = Vec::with_capacity(cells.len());
    let mut metrics = Vec::with_capacity(cells.len());
    for cell in &cells {
        let point = cell.midpoint();
        let cw = codeword_for(ctx, cb, &point, active)?;
        let metric = probe.measure(&cw.positions)?;
        state.measurements += 1;
        state.offer(metric, &cw, (Some(point.x), Some(point.y)));
        samples.push(point);
        metrics.push(metric);
    }
    state.range = cells[argmax(&metrics)];
    state.exhaustive_grid = (k1, k2);
    state.trace.push(TraceRow {
        layer: state.next_layer,
        stage: Stage::Exhaustive,
        active_antennas: active,
        samples,
        metrics,
        running_best: state.best_metric,
    });
    state.next_layer += 1;
    Ok(())
}

/// Inputs of a single-waveguide, single-user training run.
#[derive(Debug, Clone)]
pub struct SwsuSetup {
    pub params: SystemParams,
    pub waveguide: Waveguide,
    pub region: SamplingRange,
    pub hp: TrainingHyperparams,
    /// AWGN on measurements, seeded; `None` trains on noiseless feedback.
    pub noise_seed: Option<u64>,
}

/// Runs all three stages for `user`.
pub fn run_3sbt(user: &Point3, setup: &SwsuSetup, cb: &mut Codebook) -> Result<TrainingResult> {
    setup.hp.validate()?;
    let ctx = TrainingContext::new(&setup.waveguide, &setup.params, &setup.hp, &setup.region);
    let probe = SignalProbe::new(*user, &setup.waveguide, &setup.params, setup.params.total_power);
    let mut probe = match setup.noise_seed {
        Some(seed) => probe.with_noise(seed),
        None => probe,
    };
    let mut state = TrainingState::new(setup.region);
    stage1_coarse(&ctx, &mut state, cb, &mut probe)?;
    stage2_fine(&ctx, &mut state, cb, &mut probe)?;
    stage3_exhaustive(&ctx, &mut state, cb, &mut probe)?;
    state.into_result()
}

/// Noiseless rate of a user served by a codeword on one waveguide.
pub fn achieved_rate(user: &Point3, waveguide: &Waveguide, positions: &[f64], params: &SystemParams) -> Result<f64> {
    let r = received_signal_swsu(user, waveguide, positions, params)?;
    Ok((1.0 + r.norm_sqr() / params.noise_power).log2())
}

/// Rate if every antenna's contribution arrived in phase.
pub fn phase_aligned_bound(user: &Point3, waveguide: &Waveguide, positions: &[f64], params: &SystemParams) -> f64 {
    let n = positions.len() as f64;
    let sum: f64 = positions
        .iter()
        .map(|&x| params.eta.sqrt() / user.distance(&waveguide.antenna_at(x)))
        .sum();
    (1.0 + params.total_power / n * sum * sum / params.noise_power).log2()
}
