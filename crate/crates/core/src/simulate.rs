//! Monte Carlo runs: sample events, detect, and histogram accepted centroids.
//!
//! Events are processed in fixed-size chunks; each event draws from its own
//! counter-based stream, and chunk results are merged by integer addition, so
//! the output is identical for any worker count.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;

use crate::detector::{
    candidate_stops, coupler_pass_probability, detect, pair_in_apertures, DetectionScheme, DetectorArray,
    RejectionReason,
};
use crate::error::{invalid, Error, Result};
use crate::histogram::Histogram;
use crate::rng::StreamFamily;
use crate::state::{sample_event, NoonStateSpec, PhotonArrivalEvent};

const CHUNK: u64 = 8192;

/// How to spread a run across threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Rayon work stealing; `workers = None` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { workers: Option<usize> },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { workers: None }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn with_workers(workers: Option<usize>) -> Self {
        match workers {
            Some(1) => Execution::Sequential,
            w => Execution::Parallel { workers: w },
        }
    }
}

/// Acceptance bookkeeping for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub scheme: String,
    pub events: u64,
    /// Exposure recorded in the histogram: events, times scan stops for
    /// scanned schemes.
    pub total_generated: u64,
    /// Accepted detection records. For scanned schemes one event can be
    /// recorded at several scan stops and separations.
    pub accepted: u64,
    /// Events that produced at least one accepted record.
    pub events_accepted: u64,
    pub rejections: BTreeMap<String, u64>,
    /// Accepted records per generated event.
    pub acceptance_rate: f64,
    /// Binomial standard error for pixel arrays, Poisson for scans.
    pub acceptance_std_error: f64,
    /// Accepted records per scan configuration (separation in mm; 0 is the
    /// coupler case). Empty for pixel arrays.
    pub per_configuration: BTreeMap<String, u64>,
}

#[derive(Debug, Clone)]
struct Tally {
    counts: Vec<u64>,
    accepted: u64,
    events_accepted: u64,
    reasons: [u64; 7],
    per_config: Vec<u64>,
}

impl Tally {
    fn new(bins: usize, configs: usize) -> Self {
        Self {
            counts: vec![0; bins],
            accepted: 0,
            events_accepted: 0,
            reasons: [0; 7],
            per_config: vec![0; configs],
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        for (a, b) in self.reasons.iter_mut().zip(other.reasons) {
            *a += b;
        }
        for (a, b) in self.per_config.iter_mut().zip(other.per_config) {
            *a += b;
        }
        self.accepted += other.accepted;
        self.events_accepted += other.events_accepted;
        self
    }
}

/// Bin layout for accepted centroid estimates.
#[derive(Debug, Clone, Copy)]
enum Binning {
    /// One bin per pixel (or scan stop).
    Pixels,
    /// Centroid lattice of spacing δx/N, centered on the attainable values.
    Lattice { photons: usize },
}

impl Binning {
    fn edges(&self, array: &DetectorArray) -> Vec<f64> {
        match *self {
            Binning::Pixels => (0..=array.pixel_count())
                .map(|i| array.origin() + i as f64 * array.pixel_size())
                .collect(),
            Binning::Lattice { photons } => {
                let n = photons as f64;
                let bins = photons * (array.pixel_count() - 1) + 1;
                (0..=bins)
                    .map(|j| array.origin() + array.pixel_size() * (0.5 + (j as f64 - 0.5) / n))
                    .collect()
            }
        }
    }

    fn bin_of(&self, array: &DetectorArray, estimate: f64) -> Option<usize> {
        match *self {
            Binning::Pixels => array.pixel_of(estimate),
            Binning::Lattice { photons } => {
                let n = photons as f64;
                let j = (((estimate - array.origin()) / array.pixel_size() - 0.5) * n).round();
                let bins = photons * (array.pixel_count() - 1) + 1;
                (j >= 0.0 && (j as usize) < bins).then_some(j as usize)
            }
        }
    }
}

struct RunContext<'a> {
    spec: &'a NoonStateSpec,
    scheme: &'a DetectionScheme,
    array: &'a DetectorArray,
    streams: StreamFamily,
    binning: Binning,
    /// Separations scanned by a fiber pair, zero first when the coupler case is on.
    configs: Vec<f64>,
}

impl RunContext<'_> {
    fn bins(&self) -> usize {
        self.binning.edges(self.array).len() - 1
    }

    fn run_range(&self, start: u64, end: u64) -> Result<Tally> {
        let mut tally = Tally::new(self.bins(), self.configs.len().max(1));
        for index in start..end {
            let mut rng = self.streams.stream(index);
            let event = sample_event(self.spec, &mut rng)?;
            self.process(&event, &mut rng, &mut tally)?;
        }
        Ok(tally)
    }

    fn process<R: Rng + ?Sized>(&self, event: &PhotonArrivalEvent, rng: &mut R, tally: &mut Tally) -> Result<()> {
        match self.scheme {
            DetectionScheme::FiberPair(fp) => {
                let (p, q) = (event.positions()[0], event.positions()[1]);
                let a = fp.aperture_width;
                let mut any = false;
                let mut geometric = false;
                for (ci, &s) in self.configs.iter().enumerate() {
                    let half = 0.5 * (s - a);
                    let (lo1, hi1) = ((p + half).max(q - 0.5 * (s + a)), (p + 0.5 * (s + a)).min(q - half));
                    let (lo2, hi2) = ((q + half).max(p - 0.5 * (s + a)), (q + 0.5 * (s + a)).min(p - half));
                    let (lo, hi) = match (lo1 <= hi1, lo2 <= hi2) {
                        (true, true) => (lo1.min(lo2), hi1.max(hi2)),
                        (true, false) => (lo1, hi1),
                        (false, true) => (lo2, hi2),
                        (false, false) => continue,
                    };
                    for stop in candidate_stops(self.array, lo, hi) {
                        let c = self.array.pixel_center(stop);
                        if !pair_in_apertures(p, q, c, s, a) {
                            continue;
                        }
                        geometric = true;
                        if s == 0.0 && fp.coupler_split < 1.0 && rng.random::<f64>() >= fp.coupler_split {
                            tally.reasons[RejectionReason::CouplerLoss.index()] += 1;
                            continue;
                        }
                        tally.counts[stop] += 1;
                        tally.accepted += 1;
                        tally.per_config[ci] += 1;
                        any = true;
                    }
                }
                self.finish_scan(tally, any, geometric);
            }
            DetectionScheme::ScannedAperture(sa) => {
                let half = 0.5 * sa.aperture_width;
                let (min, max) = event
                    .positions()
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                let pass = coupler_pass_probability(event.photon_number(), sa.coupler_split);
                let mut any = false;
                let mut geometric = false;
                for stop in candidate_stops(self.array, max - half, min + half) {
                    let c = self.array.pixel_center(stop);
                    if !event.positions().iter().all(|&x| (x - c).abs() <= half) {
                        continue;
                    }
                    geometric = true;
                    if pass < 1.0 && rng.random::<f64>() >= pass {
                        tally.reasons[RejectionReason::CouplerLoss.index()] += 1;
                        continue;
                    }
                    tally.counts[stop] += 1;
                    tally.accepted += 1;
                    tally.per_config[0] += 1;
                    any = true;
                }
                self.finish_scan(tally, any, geometric);
            }
            _ => {
                let record = detect(self.scheme, self.array, event, rng)?;
                tally.reasons[record.rejection_reason.index()] += 1;
                if let Some(est) = record.centroid_estimate {
                    let bin = self
                        .binning
                        .bin_of(self.array, est)
                        .ok_or_else(|| invalid(format!("centroid {est} outside histogram")))?;
                    tally.counts[bin] += 1;
                    tally.accepted += 1;
                    tally.events_accepted += 1;
                }
            }
        }
        Ok(())
    }

    fn finish_scan(&self, tally: &mut Tally, any: bool, geometric: bool) {
        if any {
            tally.events_accepted += 1;
            tally.reasons[RejectionReason::None.index()] += 1;
        } else if !geometric {
            tally.reasons[RejectionReason::NoPairInApertures.index()] += 1;
        }
    }
}

fn validate(spec: &NoonStateSpec, scheme: &DetectionScheme, array: &DetectorArray, n_events: u64) -> Result<()> {
    if n_events == 0 {
        return Err(invalid("n_events must be at least 1"));
    }
    scheme.validate()?;
    if !spec.is_samplable() {
        return Err(Error::Config(format!(
            "state outside the orthogonality regime (kappa0 = {}, delta_kappa = {})",
            spec.kappa0(),
            spec.delta_kappa()
        )));
    }
    let step = match scheme {
        DetectionScheme::FiberPair(fp) => {
            if spec.photon_number() != 2 {
                return Err(Error::Config(format!(
                    "fiber-pair scans need N = 2, got N = {}",
                    spec.photon_number()
                )));
            }
            Some(fp.scan_step)
        }
        DetectionScheme::ScannedAperture(sa) => Some(sa.scan_step),
        _ => None,
    };
    if let Some(step) = step {
        if (array.pixel_size() - step).abs() > 1e-9 * step {
            return Err(Error::Config(format!(
                "scan grid spacing {} does not match scan step {step}",
                array.pixel_size()
            )));
        }
    }
    Ok(())
}

/// Run `n_events` through `scheme` with streams derived from `master_seed`.
pub fn simulate_run(
    spec: &NoonStateSpec,
    scheme: &DetectionScheme,
    array: &DetectorArray,
    n_events: u64,
    master_seed: u64,
    execution: Execution,
) -> Result<(Histogram, RunStats)> {
    simulate_with_streams(spec, scheme, array, n_events, StreamFamily::new(master_seed), execution)
}

/// As [`simulate_run`] with an explicit stream family.
pub fn simulate_with_streams(
    spec: &NoonStateSpec,
    scheme: &DetectionScheme,
    array: &DetectorArray,
    n_events: u64,
    streams: StreamFamily,
    execution: Execution,
) -> Result<(Histogram, RunStats)> {
    validate(spec, scheme, array, n_events)?;
    let n = spec.photon_number() as usize;
    let binning = match scheme {
        DetectionScheme::OcmSp | DetectionScheme::OcmPnr => Binning::Lattice { photons: n },
        _ => Binning::Pixels,
    };
    let configs = match scheme {
        DetectionScheme::FiberPair(fp) => {
            let mut c = Vec::new();
            if fp.include_zero_separation_coupler {
                c.push(0.0);
            }
            c.extend(fp.separations.iter().copied());
            c
        }
        _ => Vec::new(),
    };
    let ctx = RunContext {
        spec,
        scheme,
        array,
        streams,
        binning,
        configs,
    };

    let chunks: Vec<(u64, u64)> = (0..n_events.div_ceil(CHUNK))
        .map(|c| (c * CHUNK, ((c + 1) * CHUNK).min(n_events)))
        .collect();
    let tally = run_chunks(&ctx, &chunks, execution)?;

    // every scan stop integrates the full event stream
    let exposures = if scheme.is_scanned() {
        n_events * array.pixel_count() as u64
    } else {
        n_events
    };
    let hist = Histogram::new(binning.edges(array), tally.counts.clone(), exposures)?;

    let events = n_events as f64;
    let rate = tally.accepted as f64 / events;
    let std_error = if scheme.is_scanned() {
        (tally.accepted as f64).sqrt() / events
    } else {
        (rate * (1.0 - rate) / events).sqrt()
    };
    let rejections = RejectionReason::ALL
        .iter()
        .filter(|r| **r != RejectionReason::None)
        .map(|r| (r.as_str().to_string(), tally.reasons[r.index()]))
        .collect();
    let per_configuration = ctx
        .configs
        .iter()
        .zip(&tally.per_config)
        .map(|(s, &c)| (format!("{s:.4}"), c))
        .collect();

    let stats = RunStats {
        scheme: scheme.name().to_string(),
        events: n_events,
        total_generated: hist.total_generated(),
        accepted: tally.accepted,
        events_accepted: tally.events_accepted,
        rejections,
        acceptance_rate: rate,
        acceptance_std_error: std_error,
        per_configuration,
    };
    Ok((hist, stats))
}

fn run_chunks(ctx: &RunContext<'_>, chunks: &[(u64, u64)], execution: Execution) -> Result<Tally> {
    let empty = || Tally::new(ctx.bins(), ctx.configs.len().max(1));
    match execution {
        Execution::Sequential => chunks
            .iter()
            .try_fold(empty(), |acc, &(s, e)| Ok(acc.merge(ctx.run_range(s, e)?))),
        Execution::Parallel { workers } => parallel_chunks(ctx, chunks, workers),
    }
}

#[cfg(feature = "parallel")]
fn parallel_chunks(ctx: &RunContext<'_>, chunks: &[(u64, u64)], workers: Option<usize>) -> Result<Tally> {
    use rayon::prelude::*;

    let work = || -> Result<Tally> {
        let parts: Vec<Tally> = chunks
            .par_iter()
            .map(|&(s, e)| ctx.run_range(s, e))
            .collect::<Result<_>>()?;
        Ok(parts
            .into_iter()
            .fold(Tally::new(ctx.bins(), ctx.configs.len().max(1)), Tally::merge))
    };
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_chunks(ctx: &RunContext<'_>, chunks: &[(u64, u64)], _workers: Option<usize>) -> Result<Tally> {
    run_chunks(ctx, chunks, Execution::Sequential)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::{FiberPair, ScannedAperture};

    fn spec2() -> NoonStateSpec {
        NoonStateSpec::new(2, 10.0, 1.0).unwrap()
    }

    #[test]
    fn zero_events_rejected() {
        let a = DetectorArray::centered(0.05, 200).unwrap();
        assert!(simulate_run(&spec2(), &DetectionScheme::OcmPnr, &a, 0, 1, Execution::Sequential).is_err());
    }

    #[test]
    fn single_event_histogram() {
        let a = DetectorArray::centered(0.05, 200).unwrap();
        for scheme in [DetectionScheme::OcmPnr, DetectionScheme::OcmSp, DetectionScheme::ql_mpa()] {
            let (h, s) = simulate_run(&spec2(), &scheme, &a, 1, 3, Execution::Sequential).unwrap();
            assert!(h.total_accepted() <= 1);
            assert_eq!(h.total_accepted(), s.accepted);
        }
    }

    #[test]
    fn fiber_pair_needs_two_photons() {
        let spec = NoonStateSpec::new(3, 10.0, 1.0).unwrap();
        let fp = DetectionScheme::FiberPair(FiberPair {
            separations: vec![0.125],
            aperture_width: 0.0625,
            scan_step: 0.05,
            include_zero_separation_coupler: false,
            coupler_split: 0.5,
        });
        let grid = DetectorArray::scan_grid(0.05, 20).unwrap();
        assert!(matches!(
            simulate_run(&spec, &fp, &grid, 10, 1, Execution::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scan_step_must_match_grid() {
        let sa = DetectionScheme::ScannedAperture(ScannedAperture {
            aperture_width: 0.0625,
            scan_step: 0.05,
            coupler_split: 0.5,
        });
        let grid = DetectorArray::scan_grid(0.04, 20).unwrap();
        assert!(matches!(
            simulate_run(&spec2(), &sa, &grid, 10, 1, Execution::Sequential),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lattice_bins_cover_all_centroids() {
        let a = DetectorArray::new(1.0, 4, 0.0).unwrap();
        let b = Binning::Lattice { photons: 2 };
        let edges = b.edges(&a);
        assert_eq!(edges.len(), 8);
        assert_eq!(b.bin_of(&a, 0.5), Some(0));
        assert_eq!(b.bin_of(&a, 1.0), Some(1));
        assert_eq!(b.bin_of(&a, 3.5), Some(6));
        for j in 0..7 {
            let c = 0.5 + j as f64 * 0.5;
            assert!(edges[j] < c && c < edges[j + 1]);
        }
    }

    #[test]
    fn scanned_detection_matches_reference_detector() {
        // the fast scan loop must agree with detect_fiber_pair stop by stop
        use crate::detector::detect_fiber_pair;
        let fp = FiberPair {
            separations: vec![0.125, 0.25],
            aperture_width: 0.0625,
            scan_step: 0.05,
            include_zero_separation_coupler: false,
            coupler_split: 0.5,
        };
        let grid = DetectorArray::scan_grid(0.05, 30).unwrap();
        let scheme = DetectionScheme::FiberPair(fp.clone());
        let spec = NoonStateSpec::new(2, 4.553, 0.4).unwrap();
        let fam = StreamFamily::new(77);
        let (h, _) = simulate_with_streams(&spec, &scheme, &grid, 3000, fam, Execution::Sequential).unwrap();
        let mut reference = vec![0u64; grid.pixel_count()];
        for i in 0..3000 {
            let mut rng = fam.stream(i);
            let ev = sample_event(&spec, &mut rng).unwrap();
            for &s in &fp.separations {
                for (stop, slot) in reference.iter_mut().enumerate() {
                    let r = detect_fiber_pair(&fp, &ev, grid.pixel_center(stop), s, &mut rng).unwrap();
                    *slot += r.accepted as u64;
                }
            }
        }
        assert_eq!(h.counts(), reference.as_slice());
    }
}
