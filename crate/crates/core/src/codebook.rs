//! Scalable codebook of phase-aligned antenna locations.
//!
//! A codeword lists where to activate pinching antennas so that every
//! antenna's signal arrives at a sampling point with zero phase (mod 2π).
//! Antennas alternate sides around the point of the waveguide nearest the
//! sampling point: odd entries walk toward the far end of the waveguide, even
//! entries walk back toward the feed, each at least one guard distance from
//! the previous entry on the same side. Entries are produced one at a time,
//! so a codeword for `Ñ` antennas is always a prefix of the codeword for any
//! larger count.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::physics::{total_phase, wrap_phase, Point3, SystemParams, Waveguide};
use crate::swsu::SamplingRange;

/// Largest wrapped phase residue accepted at a stored antenna position, rad.
pub const PHASE_TOLERANCE: f64 = 1e-6;

/// Sampling coordinates are snapped to this grid before use as keys, m.
pub const KEY_QUANTUM: f64 = 1e-6;

/// Minimum spacing between activated antennas on one waveguide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardDistance(f64);

impl GuardDistance {
    pub fn new(meters: f64) -> Result<Self> {
        if meters.is_finite() && meters > 0.0 {
            Ok(Self(meters))
        } else {
            Err(Error::InvalidParameter(format!("guard distance must be positive, got {meters}")))
        }
    }

    /// Half a free-space wavelength.
    pub fn half_wavelength(params: &SystemParams) -> Self {
        Self(params.wavelength / 2.0)
    }

    pub fn meters(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchDirection {
    /// Increasing x, away from the feed.
    TowardEnd,
    /// Decreasing x, back toward the feed.
    TowardFeed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub sampling_point: Point3,
    pub waveguide_index: usize,
    /// Antenna abscissas, entry `n` (0-based) is the `(n+1)`-th activated antenna.
    pub positions: Vec<f64>,
}

impl Codeword {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Total path phase at `x` for a sampling point.
fn phase_at(psi_f: &Point3, wg: &Waveguide, x: f64, params: &SystemParams) -> f64 {
    total_phase(psi_f, &wg.antenna_at(x), &wg.feed, params)
}

/// Finds the first phase-aligned abscissa at or after `start_x` in `direction`.
///
/// The path phase is strictly increasing in x on the waveguide (to the right
/// of the feed), so the first root in either direction is the nearest
/// multiple of 2π on that side. It is bracketed by stepping `λ_g / 8` and
/// then bisected.
pub fn solve_phase_location(
    psi_f: &Point3,
    wg: &Waveguide,
    start_x: f64,
    direction: SearchDirection,
    params: &SystemParams,
) -> Result<f64> {
    if !wg.in_extent(start_x) {
        return Err(Error::InvalidParameter(format!(
            "search start {start_x} outside waveguide extent [{}, {}]",
            wg.x_start, wg.x_end
        )));
    }
    find_root(psi_f, wg, start_x, direction, params).ok_or(Error::OutOfExtent {
        index: 0,
        x_f: psi_f.x,
        y_f: psi_f.y,
    })
}

fn find_root(
    psi_f: &Point3,
    wg: &Waveguide,
    start_x: f64,
    direction: SearchDirection,
    params: &SystemParams,
) -> Option<f64> {
    let two_pi = 2.0 * PI;
    let f0 = phase_at(psi_f, wg, start_x, params);
    if wrap_phase(f0).abs() <= PHASE_TOLERANCE {
        return Some(start_x);
    }
    let step = params.guide_wavelength / 8.0;
    let tol = params.wavelength * 1e-9;
    // g(x) = f(x) - target changes sign exactly once along the search.
    let (target, sign, limit) = match direction {
        SearchDirection::TowardEnd => ((f0 / two_pi).ceil() * two_pi, 1.0, wg.x_end),
        SearchDirection::TowardFeed => ((f0 / two_pi).floor() * two_pi, -1.0, wg.x_start),
    };
    let g = |x: f64| sign * (phase_at(psi_f, wg, x, params) - target);
    bisect_first_crossing(g, start_x, sign, limit, step, tol)
}

/// Walks from `start` in steps of `step` (signed by `sign`) until `g` turns
/// non-negative, then bisects the bracket down to `tol`.
fn bisect_first_crossing(g: impl Fn(f64) -> f64, start: f64, sign: f64, limit: f64, step: f64, tol: f64) -> Option<f64> {
    let mut near = start;
    loop {
        let mut far = near + sign * step;
        if sign * (far - limit) > 0.0 {
            far = limit;
        }
        if g(far) >= 0.0 {
            let (mut a, mut b) = (near, far);
            while (b - a).abs() > tol {
                let mid = 0.5 * (a + b);
                if g(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        if far == limit {
            return None;
        }
        near = far;
    }
}

/// First abscissa at or after `start_x` where the path phase toward `psi_f`
/// reaches `target` (radians, unwrapped).
pub fn solve_phase_target(
    psi_f: &Point3,
    wg: &Waveguide,
    start_x: f64,
    target: f64,
    params: &SystemParams,
) -> Result<f64> {
    let out = Error::OutOfExtent { index: 0, x_f: psi_f.x, y_f: psi_f.y };
    if !wg.in_extent(start_x) {
        return Err(out);
    }
    let g = |x: f64| phase_at(psi_f, wg, x, params) - target;
    if g(start_x) >= 0.0 {
        return Ok(start_x);
    }
    bisect_first_crossing(g, start_x, 1.0, wg.x_end, params.guide_wavelength / 8.0, params.wavelength * 1e-9).ok_or(out)
}

/// Unwrapped path phase at abscissa `x` toward `psi_f`.
pub fn path_phase(psi_f: &Point3, wg: &Waveguide, x: f64, params: &SystemParams) -> f64 {
    phase_at(psi_f, wg, x, params)
}

/// Appends the next entry of the alternating chain to `positions`.
fn next_position(
    positions: &[f64],
    psi_f: &Point3,
    wg: &Waveguide,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<f64> {
    let n = positions.len() + 1;
    let (start, direction) = match n {
        1 => (psi_f.x, SearchDirection::TowardEnd),
        2 => (positions[0] - guard.meters(), SearchDirection::TowardFeed),
        _ if n % 2 == 1 => (positions[n - 3] + guard.meters(), SearchDirection::TowardEnd),
        _ => (positions[n - 3] - guard.meters(), SearchDirection::TowardFeed),
    };
    let out = Error::OutOfExtent { index: n, x_f: psi_f.x, y_f: psi_f.y };
    if !wg.in_extent(start) {
        return Err(out);
    }
    find_root(psi_f, wg, start, direction, params).ok_or(out)
}

fn check_sampling_point(psi_f: &Point3, wg: &Waveguide) -> Result<()> {
    if !psi_f.is_finite() {
        return Err(Error::InvalidParameter("sampling point is not finite".into()));
    }
    if psi_f.x < wg.feed.x {
        return Err(Error::Geometry(format!(
            "sampling point x = {} lies on the far side of the feed (x = {})",
            psi_f.x, wg.feed.x
        )));
    }
    if !wg.in_extent(psi_f.x) {
        return Err(Error::OutOfExtent { index: 1, x_f: psi_f.x, y_f: psi_f.y });
    }
    Ok(())
}

/// Generates the codeword for `psi_f` with `count` antennas.
pub fn generate_codeword(
    psi_f: &Point3,
    wg: &Waveguide,
    count: usize,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<Codeword> {
    if count == 0 {
        return Err(Error::InvalidParameter("codeword needs at least one antenna".into()));
    }
    check_sampling_point(psi_f, wg)?;
    let mut cw = Codeword {
        sampling_point: *psi_f,
        waveguide_index: wg.index,
        positions: Vec::with_capacity(count),
    };
    extend_codeword(&mut cw, count, wg, guard, params)?;
    Ok(cw)
}

/// Continues the alternating chain of an existing codeword until it holds
/// `count` entries.
pub fn extend_codeword(
    cw: &mut Codeword,
    count: usize,
    wg: &Waveguide,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<()> {
    while cw.positions.len() < count {
        let x = next_position(&cw.positions, &cw.sampling_point, wg, guard, params)?;
        cw.positions.push(x);
    }
    Ok(())
}

/// Phase-aligned chain walking one way from `start_x`: the first root at or
/// after the start, then each following root at least one guard distance on.
pub fn generate_chain(
    psi_f: &Point3,
    wg: &Waveguide,
    start_x: f64,
    count: usize,
    direction: SearchDirection,
    guard: GuardDistance,
    params: &SystemParams,
) -> Result<Vec<f64>> {
    let step = match direction {
        SearchDirection::TowardEnd => guard.meters(),
        SearchDirection::TowardFeed => -guard.meters(),
    };
    let mut out: Vec<f64> = Vec::with_capacity(count);
    let mut start = start_x;
    for n in 1..=count {
        let err = Error::OutOfExtent { index: n, x_f: psi_f.x, y_f: psi_f.y };
        if !wg.in_extent(start) {
            return Err(err);
        }
        let x = find_root(psi_f, wg, start, direction, params).ok_or(err)?;
        out.push(x);
        start = x + step;
    }
    Ok(out)
}

/// First `n` entries of a codeword.
pub fn truncate_codeword(cw: &Codeword, n: usize) -> Result<Codeword> {
    if n == 0 || n > cw.len() {
        return Err(Error::InvalidParameter(format!(
            "cannot truncate a {}-antenna codeword to {n}",
            cw.len()
        )));
    }
    Ok(Codeword {
        sampling_point: cw.sampling_point,
        waveguide_index: cw.waveguide_index,
        positions: cw.positions[..n].to_vec(),
    })
}

/// Exact-match key: sampling coordinates in micrometres plus waveguide index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleKey {
    pub waveguide_index: usize,
    pub x_um: i64,
    pub y_um: i64,
}

impl SampleKey {
    pub fn new(point: &Point3, waveguide_index: usize) -> Self {
        Self {
            waveguide_index,
            x_um: (point.x / KEY_QUANTUM).round() as i64,
            y_um: (point.y / KEY_QUANTUM).round() as i64,
        }
    }

    /// The snapped sampling point this key stands for.
    pub fn point(&self) -> Point3 {
        Point3::ground(self.x_um as f64 * KEY_QUANTUM, self.y_um as f64 * KEY_QUANTUM)
    }
}

/// Sampling-point keyed store of codewords sharing one antenna count.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    entries: BTreeMap<SampleKey, Codeword>,
    stored_antenna_count: usize,
    guard: GuardDistance,
}

impl Codebook {
    pub fn new(stored_antenna_count: usize, guard: GuardDistance) -> Result<Self> {
        if stored_antenna_count == 0 {
            return Err(Error::InvalidParameter("stored antenna count must be >= 1".into()));
        }
        Ok(Self { entries: BTreeMap::new(), stored_antenna_count, guard })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn stored_antenna_count(&self) -> usize {
        self.stored_antenna_count
    }

    pub fn guard(&self) -> GuardDistance {
        self.guard
    }

    pub fn get(&self, point: &Point3, waveguide_index: usize) -> Option<&Codeword> {
        self.entries.get(&SampleKey::new(point, waveguide_index))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SampleKey, &Codeword)> {
        self.entries.iter()
    }

    /// Looks up the codeword for `point`, generating and storing it on a miss.
    /// The stored codeword is generated for the snapped sampling point.
    pub fn get_or_generate(&mut self, point: &Point3, wg: &Waveguide, params: &SystemParams) -> Result<&Codeword> {
        let key = SampleKey::new(point, wg.index);
        if !self.entries.contains_key(&key) {
            let cw = generate_codeword(&key.point(), wg, self.stored_antenna_count, self.guard, params)?;
            self.entries.insert(key, cw);
        }
        Ok(&self.entries[&key])
    }

    /// Grows every stored codeword to `new_count` antennas, keeping prefixes.
    pub fn extend_antennas(&mut self, new_count: usize, waveguides: &[Waveguide], params: &SystemParams) -> Result<()> {
        if new_count <= self.stored_antenna_count {
            return Err(Error::InvalidParameter(format!(
                "new antenna count {new_count} must exceed the stored {}",
                self.stored_antenna_count
            )));
        }
        let mut extended = self.entries.clone();
        for cw in extended.values_mut() {
            let wg = waveguides
                .iter()
                .find(|w| w.index == cw.waveguide_index)
                .ok_or_else(|| Error::InvalidParameter(format!("no waveguide {}", cw.waveguide_index)))?;
            extend_codeword(cw, new_count, wg, self.guard, params)?;
        }
        self.entries = extended;
        self.stored_antenna_count = new_count;
        Ok(())
    }

    /// Copy of the codebook with every codeword cut to `count` antennas.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.stored_antenna_count {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a {}-antenna codebook to {count}",
                self.stored_antenna_count
            )));
        }
        let entries = self
            .entries
            .iter()
            .map(|(k, cw)| Ok((*k, truncate_codeword(cw, count)?)))
            .collect::<Result<_>>()?;
        Ok(Self { entries, stored_antenna_count: count, guard: self.guard })
    }

    /// Key union; entries already present in `self` win.
    pub fn merge(&mut self, other: &Codebook) -> Result<()> {
        if other.stored_antenna_count != self.stored_antenna_count {
            return Err(Error::InvalidParameter("cannot merge codebooks of different antenna counts".into()));
        }
        for (k, cw) in &other.entries {
            self.entries.entry(*k).or_insert_with(|| cw.clone());
        }
        Ok(())
    }

    /// Writes one CSV row per stored antenna.
    pub fn export_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(["sampling_x", "sampling_y", "waveguide_index", "antenna_index", "antenna_x"])
            .map_err(io)?;
        for cw in self.entries.values() {
            for (n, x) in cw.positions.iter().enumerate() {
                w.write_record([
                    sig12(cw.sampling_point.x),
                    sig12(cw.sampling_point.y),
                    cw.waveguide_index.to_string(),
                    (n + 1).to_string(),
                    sig12(*x),
                ])
                .map_err(io)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a codebook written by [`Codebook::export_csv`].
    pub fn import_csv<R: Read>(input: R, guard: GuardDistance) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers().map_err(|e| Error::Config(e.to_string()))?.clone();
        let expected = ["sampling_x", "sampling_y", "waveguide_index", "antenna_index", "antenna_x"];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::Config(format!("unexpected codebook header: {headers:?}")));
        }
        let mut rows: BTreeMap<SampleKey, (Point3, Vec<(usize, f64)>)> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Config(e.to_string()))?;
            let bad = |field: &str| Error::Config(format!("line {}: bad {field}", line + 2));
            let sx: f64 = rec[0].parse().map_err(|_| bad("sampling_x"))?;
            let sy: f64 = rec[1].parse().map_err(|_| bad("sampling_y"))?;
            let wg: usize = rec[2].parse().map_err(|_| bad("waveguide_index"))?;
            let n: usize = rec[3].parse().map_err(|_| bad("antenna_index"))?;
            let ax: f64 = rec[4].parse().map_err(|_| bad("antenna_x"))?;
            let point = Point3::ground(sx, sy);
            rows.entry(SampleKey::new(&point, wg))
                .or_insert_with(|| (point, Vec::new()))
                .1
                .push((n, ax));
        }
        let mut entries = BTreeMap::new();
        let mut count = None;
        for (key, (point, mut ants)) in rows {
            ants.sort_by_key(|a| a.0);
            if ants.iter().enumerate().any(|(i, a)| a.0 != i + 1) {
                return Err(Error::Config(format!(
                    "codeword at ({}, {}) has non-contiguous antenna indices",
                    point.x, point.y
                )));
            }
            match count {
                None => count = Some(ants.len()),
                Some(c) if c != ants.len() => {
                    return Err(Error::Config("codewords have different antenna counts".into()))
                }
                _ => {}
            }
            entries.insert(
                key,
                Codeword {
                    sampling_point: point,
                    waveguide_index: key.waveguide_index,
                    positions: ants.into_iter().map(|a| a.1).collect(),
                },
            );
        }
        let stored = count.ok_or_else(|| Error::Config("codebook file has no rows".into()))?;
        Ok(Self { entries, stored_antenna_count: stored, guard })
    }
}

/// Matches sampling ranges to waveguides: both sorted by descending y (range
/// `y_min`, waveguide `y`), ties by ascending original index, then paired in
/// order. Returns `assignment[range] = waveguide position in the slice`.
pub fn associate_waveguides(ranges: &[SamplingRange], waveguides: &[Waveguide]) -> Result<Vec<usize>> {
    if ranges.len() != waveguides.len() {
        return Err(Error::Unsupported(format!(
            "{} sampling ranges cannot be matched to {} waveguides",
            ranges.len(),
            waveguides.len()
        )));
    }
    let mut r: Vec<usize> = (0..ranges.len()).collect();
    r.sort_by(|&a, &b| ranges[b].y.min.total_cmp(&ranges[a].y.min).then(a.cmp(&b)));
    let mut w: Vec<usize> = (0..waveguides.len()).collect();
    w.sort_by(|&a, &b| waveguides[b].y.total_cmp(&waveguides[a].y).then(a.cmp(&b)));
    let mut assignment = vec![0; ranges.len()];
    for (ri, wi) in r.into_iter().zip(w) {
        assignment[ri] = wi;
    }
    Ok(assignment)
}
