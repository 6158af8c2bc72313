//! Multi-waveguide, multi-user training with partially-connected hybrid
//! beamforming: each waveguide carries one precoded stream and its antennas
//! share the power equally.

use num_complex::Complex64;

use crate::codebook::{associate_waveguides, generate_codeword, Codebook, GuardDistance};
use crate::error::{Error, Result};
use crate::noma::{scan_combinations, CombinationScore, ServedUser, UserTraining};
use crate::physics::{channel_vector, superpose, Point3, SystemParams, Waveguide};
use crate::swsu::{
    exhaustive_cells, grid_cells, stage1_coarse, stage2_fine, SignalProbe, TrainingContext, TrainingHyperparams,
    TrainingState,
};

/// Parallel waveguides with distinct y coordinates at a common height.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveguideArray {
    pub waveguides: Vec<Waveguide>,
}

impl WaveguideArray {
    pub fn new(waveguides: Vec<Waveguide>) -> Result<Self> {
        if waveguides.is_empty() {
            return Err(Error::InvalidParameter("waveguide array is empty".into()));
        }
        for (i, a) in waveguides.iter().enumerate() {
            a.validate()?;
            if a.index != i {
                return Err(Error::InvalidParameter(format!("waveguide {i} carries index {}", a.index)));
            }
            if (a.height - waveguides[0].height).abs() > 1e-12 {
                return Err(Error::Geometry("waveguides must share one height".into()));
            }
            if waveguides[..i].iter().any(|b| (a.y - b.y).abs() <= 1e-12) {
                return Err(Error::Geometry(format!("two waveguides share y = {}", a.y)));
            }
        }
        Ok(Self { waveguides })
    }

    pub fn len(&self) -> usize {
        self.waveguides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveguides.is_empty()
    }
}

/// Concatenated per-antenna coefficients over all waveguides, each using its
/// own feed for the in-guide phase. `positions[q]` lists waveguide `q`'s
/// antennas.
pub fn mwmu_channel_vector(
    user: &Point3,
    array: &WaveguideArray,
    positions: &[Vec<f64>],
    params: &SystemParams,
) -> Result<Vec<Complex64>> {
    check_blocks(array, positions)?;
    let mut out = Vec::new();
    for (wg, pos) in array.waveguides.iter().zip(positions) {
        out.extend(channel_vector(user, wg, pos, params)?);
    }
    Ok(out)
}

fn check_blocks(array: &WaveguideArray, positions: &[Vec<f64>]) -> Result<()> {
    if positions.len() != array.len() {
        return Err(Error::InvalidParameter(format!(
            "{} antenna blocks for {} waveguides",
            positions.len(),
            array.len()
        )));
    }
    Ok(())
}

/// Block-diagonal pinching beamformer with equal per-antenna amplitude
/// `√(P/(QN))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinchingBeamformer {
    pub waveguides: usize,
    pub antennas_per_waveguide: usize,
    pub amplitude: f64,
}

impl PinchingBeamformer {
    pub fn new(waveguides: usize, antennas_per_waveguide: usize, total_power: f64) -> Result<Self> {
        if waveguides == 0 || antennas_per_waveguide == 0 {
            return Err(Error::InvalidParameter("beamformer needs at least one antenna".into()));
        }
        if !(total_power.is_finite() && total_power >= 0.0) {
            return Err(Error::InvalidParameter(format!("total power {total_power} is invalid")));
        }
        let amplitude = (total_power / (waveguides * antennas_per_waveguide) as f64).sqrt();
        Ok(Self { waveguides, antennas_per_waveguide, amplitude })
    }

    /// `hᴴG`: one effective coefficient per waveguide.
    pub fn effective_channel(
        &self,
        user: &Point3,
        array: &WaveguideArray,
        positions: &[Vec<f64>],
        params: &SystemParams,
    ) -> Result<Vec<Complex64>> {
        check_blocks(array, positions)?;
        array
            .waveguides
            .iter()
            .zip(positions)
            .map(|(wg, pos)| {
                if pos.len() != self.antennas_per_waveguide {
                    return Err(Error::InvalidParameter(format!(
                        "waveguide {} has {} antennas, expected {}",
                        wg.index,
                        pos.len(),
                        self.antennas_per_waveguide
                    )));
                }
                Ok(superpose(user, wg, pos, self.amplitude, params)?.conj())
            })
            .collect()
    }
}

/// Digital precoders, one `Q`-vector per user.
#[derive(Debug, Clone, PartialEq)]
pub struct DigitalPrecoder {
    pub columns: Vec<Vec<Complex64>>,
}

impl DigitalPrecoder {
    /// `W_m = e_{stream[m]}`.
    pub fn one_hot(streams: &[usize], waveguides: usize) -> Result<Self> {
        let columns = streams
            .iter()
            .map(|&q| {
                if q >= waveguides {
                    return Err(Error::InvalidParameter(format!("stream {q} on {waveguides} waveguides")));
                }
                let mut w = vec![Complex64::new(0.0, 0.0); waveguides];
                w[q] = Complex64::new(1.0, 0.0);
                Ok(w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns })
    }
}

fn inner(e: &[Complex64], w: &[Complex64]) -> Complex64 {
    e.iter().zip(w).map(|(a, b)| a * b).sum()
}

/// SINR of user `m` given every user's effective channel `hᴴG`.
pub fn mwmu_sinr(m: usize, effective: &[Complex64], precoder: &DigitalPrecoder, noise_power: f64) -> f64 {
    let signal = inner(effective, &precoder.columns[m]).norm_sqr();
    let interference: Complex64 = precoder
        .columns
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != m)
        .map(|(_, w)| inner(effective, w))
        .sum();
    signal / (interference.norm_sqr() + noise_power)
}

/// `Σ log2(1 + γ_m)`; `effective[m]` is user `m`'s `hᴴG`.
pub fn mwmu_sum_rate(effective: &[Vec<Complex64>], precoder: &DigitalPrecoder, noise: &[f64]) -> (Vec<f64>, f64) {
    let sinrs: Vec<f64> =
        (0..effective.len()).map(|m| mwmu_sinr(m, &effective[m], precoder, noise[m])).collect();
    let sum = sinrs.iter().map(|g| (1.0 + g).log2()).sum();
    (sinrs, sum)
}

/// Inputs of the increased-dimensional three-stage scheme.
#[derive(Debug, Clone)]
pub struct MwmuSetup {
    pub params: SystemParams,
    pub array: WaveguideArray,
    pub hp: TrainingHyperparams,
    pub budget: u128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MwmuOutcome {
    /// Waveguide serving each user.
    pub association: Vec<usize>,
    pub separated: Vec<UserTraining>,
    pub cells: Vec<usize>,
    pub grids: Vec<(usize, usize)>,
    pub sampling_points: Vec<Point3>,
    /// Activated positions per waveguide.
    pub positions: Vec<Vec<f64>>,
    pub sinrs: Vec<f64>,
    pub rates: Vec<f64>,
    pub sum_rate: f64,
    pub separated_measurements: u64,
    pub measurements: u64,
    pub dump: Option<Vec<CombinationScore>>,
}

fn user_blocks(
    association: &[usize],
    chosen: &[&Vec<f64>],
    q: usize,
) -> Vec<Vec<f64>> {
    let mut blocks = vec![Vec::new(); q];
    for (m, pos) in chosen.iter().enumerate() {
        blocks[association[m]] = (*pos).clone();
    }
    blocks
}

/// Runs waveguide association, separated per-user training on the associated
/// waveguide, and a joint scan of per-user exhaustive cells scored by sum rate.
pub fn run_increased_3sbt(
    users: &[ServedUser],
    setup: &MwmuSetup,
    cb: &mut Codebook,
    keep_dump: bool,
) -> Result<MwmuOutcome> {
    setup.hp.validate()?;
    let (array, params, hp) = (&setup.array, &setup.params, &setup.hp);
    let q = array.len();
    if users.len() != q {
        return Err(Error::Unsupported(format!("{} users on {q} waveguides; only M = Q is supported", users.len())));
    }
    let regions: Vec<_> = users.iter().map(|u| u.region).collect();
    let association = associate_waveguides(&regions, &array.waveguides)?;

    let probe_power = params.total_power / q as f64;
    let mut separated = Vec::with_capacity(q);
    for (m, user) in users.iter().enumerate() {
        let wg = &array.waveguides[association[m]];
        let ctx = TrainingContext::new(wg, params, hp, &user.region);
        let mut probe = SignalProbe::new(user.location, wg, params, probe_power);
        let mut state = TrainingState::new(user.region);
        stage1_coarse(&ctx, &mut state, cb, &mut probe)?;
        stage2_fine(&ctx, &mut state, cb, &mut probe)?;
        separated.push(UserTraining {
            estimate: Point3::ground(state.estimate.0, state.estimate.1),
            range: state.range,
            best_metric: state.best_metric,
            measurements: state.measurements,
            trace: state.trace,
        });
    }
    let separated_measurements = separated.iter().map(|t| t.measurements).sum();

    let mut grids = Vec::with_capacity(q);
    let mut points = Vec::with_capacity(q);
    let mut candidates = Vec::with_capacity(q);
    for (m, t) in separated.iter().enumerate() {
        let wg = &array.waveguides[association[m]];
        let k1 = exhaustive_cells(t.range.x.len(), hp.d_es);
        let k2 = exhaustive_cells(t.range.y.len(), hp.d_es);
        let cells = grid_cells(&t.range, k1, k2);
        let pts: Vec<Point3> = cells.iter().map(|c| c.midpoint()).collect();
        let pos = pts
            .iter()
            .map(|p| cb.truncated_lookup(p, hp.n, wg, params))
            .collect::<Result<Vec<_>>>()?;
        grids.push((k1, k2));
        points.push(pts);
        candidates.push(pos);
    }

    let beamformer = PinchingBeamformer::new(q, hp.n, params.total_power)?;
    let precoder = DigitalPrecoder::one_hot(&association, q)?;
    let noise = vec![params.noise_power; q];
    let evaluate = |cells: &[usize]| -> Result<(Vec<f64>, f64)> {
        let chosen: Vec<&Vec<f64>> = cells.iter().enumerate().map(|(m, &k)| &candidates[m][k]).collect();
        let blocks = user_blocks(&association, &chosen, q);
        let effective = users
            .iter()
            .map(|u| beamformer.effective_channel(&u.location, array, &blocks, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(mwmu_sum_rate(&effective, &precoder, &noise))
    };
    let radices: Vec<usize> = candidates.iter().map(Vec::len).collect();
    let (scores, best) = scan_combinations(&radices, setup.budget, |cells| Ok(evaluate(cells)?.1))?;
    let (sinrs, sum_rate) = evaluate(&best.cells)?;
    let chosen: Vec<&Vec<f64>> = best.cells.iter().enumerate().map(|(m, &k)| &candidates[m][k]).collect();
    let positions = user_blocks(&association, &chosen, q);
    let joint = scores.len() as u64;
    Ok(MwmuOutcome {
        association,
        separated,
        sampling_points: best.cells.iter().enumerate().map(|(m, &k)| points[m][k]).collect(),
        cells: best.cells,
        grids,
        positions,
        rates: sinrs.iter().map(|g| (1.0 + g).log2()).collect(),
        sinrs,
        sum_rate,
        separated_measurements,
        measurements: separated_measurements + joint,
        dump: keep_dump.then_some(scores),
    })
}

/// Received-strength table over antenna allocations for one user.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma1Outcome {
    /// Antenna count per waveguide for each candidate allocation.
    pub allocations: Vec<Vec<usize>>,
    /// `|r|²` from the exact channel with phase-aligned codewords.
    pub exact: Vec<f64>,
    /// `|r|²` from the coherent sum over perpendicular-foot distances.
    pub approximate: Vec<f64>,
    pub best_exact: usize,
    pub best_approximate: usize,
}

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Every split of `n` antennas across one pair of waveguides, plus all-on-one.
pub fn lemma1_allocations(q: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..q {
        let mut a = vec![0; q];
        a[i] = n;
        out.push(a);
    }
    for i in 0..q {
        for j in i + 1..q {
            for k in 1..n {
                let mut a = vec![0; q];
                a[i] = k;
                a[j] = n - k;
                out.push(a);
            }
        }
    }
    out
}

/// Enumerates antenna allocations across waveguides with the total power
/// split equally over all `n` antennas, each waveguide's antennas phase
/// aligned to the user.
pub fn lemma1_bruteforce(
    user: &Point3,
    array: &WaveguideArray,
    n: usize,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<Lemma1Outcome> {
    if array.len() < 2 || n == 0 {
        return Err(Error::InvalidParameter("need at least two waveguides and one antenna".into()));
    }
    let amp = (params.total_power / n as f64).sqrt();
    let codewords = array
        .waveguides
        .iter()
        .map(|wg| generate_codeword(user, wg, n, guard, params))
        .collect::<Result<Vec<_>>>()?;
    let allocations = lemma1_allocations(array.len(), n);
    let mut exact = Vec::with_capacity(allocations.len());
    let mut approximate = Vec::with_capacity(allocations.len());
    for alloc in &allocations {
        let mut r = Complex64::new(0.0, 0.0);
        let mut coherent = 0.0;
        for ((wg, cw), &count) in array.waveguides.iter().zip(&codewords).zip(alloc) {
            if count == 0 {
                continue;
            }
            r += superpose(user, wg, &cw.positions[..count], amp, params)?;
            let foot = ((wg.y - user.y).powi(2) + (wg.height - user.z).powi(2)).sqrt();
            coherent += count as f64 * amp * params.eta.sqrt() / foot;
        }
        exact.push(r.norm_sqr());
        approximate.push(coherent * coherent);
    }
    Ok(Lemma1Outcome {
        best_exact: first_max(&exact),
        best_approximate: first_max(&approximate),
        allocations,
        exact,
        approximate,
    })
}
