//! Laboratory presets and the four-way comparison: classical scan, QL
//! coincidence scan, fiber-pair OCM and the composite OCM/PNR trace.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::combinatorics::{efficiency_ratio, RatioScheme};
use crate::detector::{DetectionScheme, DetectorArray, FiberPair, ScannedAperture};
use crate::error::{Error, Result};
use crate::fit::{amplitude_ratio, enhancement_ratio, fit_fringe, FitOptions, FringeFit, Ratio};
use crate::histogram::Histogram;
use crate::rng::StreamFamily;
use crate::simulate::{simulate_with_streams, Execution, RunStats};
use crate::state::NoonStateSpec;

pub const CLASSICAL: &str = "CLASSICAL";
pub const QL: &str = "QL";
pub const OCM: &str = "OCM";
pub const OCM_PNR_COMPOSITE: &str = "OCM_PNR_COMPOSITE";

/// Experimental parameters. Lengths carry their unit in the field name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Metadata only.
    pub wavelength_nm: f64,
    /// Metadata only; κ₀ comes from the measured classical period.
    pub beam_angle_deg: f64,
    pub classical_period_mm: f64,
    pub correlation_diameter_mm: f64,
    pub fiber_core_um: f64,
    pub fiber_cladding_um: f64,
    pub scan_step_um: f64,
    pub separations_um: Vec<f64>,
    /// Metadata only.
    pub coincidence_window_ns: f64,
    /// Pair-generation probability per pulse; scales reported rates only.
    pub pair_generation_probability: f64,
    pub events_per_run: u64,
    /// Effective pixel for the occupancy predictions, M = D / pixel.
    pub pixel_size_um: f64,
    pub coupler_split: f64,
    pub scan_half_range_mm: f64,
    /// Pixels of the array used for the raw PNR/NPA acceptance check.
    pub array_pixel_count: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 800.0,
            beam_angle_deg: 0.033,
            classical_period_mm: 0.69,
            correlation_diameter_mm: 0.5,
            fiber_core_um: 62.5,
            fiber_cladding_um: 125.0,
            scan_step_um: 50.0,
            separations_um: vec![125.0, 250.0, 375.0, 500.0, 625.0],
            coincidence_window_ns: 7.0,
            pair_generation_probability: 1.0,
            events_per_run: 1_000_000,
            pixel_size_um: 500.0 / 5.6,
            coupler_split: 0.5,
            scan_half_range_mm: 1.5,
            array_pixel_count: 64,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        positive("classical_period_mm", self.classical_period_mm)?;
        positive("correlation_diameter_mm", self.correlation_diameter_mm)?;
        positive("fiber_core_um", self.fiber_core_um)?;
        positive("fiber_cladding_um", self.fiber_cladding_um)?;
        positive("scan_step_um", self.scan_step_um)?;
        positive("pixel_size_um", self.pixel_size_um)?;
        positive("pair_generation_probability", self.pair_generation_probability)?;
        positive("scan_half_range_mm", self.scan_half_range_mm)?;
        if !(self.coupler_split > 0.0 && self.coupler_split <= 1.0) {
            return Err(Error::Config(format!("coupler_split must lie in (0, 1], got {}", self.coupler_split)));
        }
        if self.events_per_run == 0 {
            return Err(Error::Config("events_per_run must be at least 1".into()));
        }
        if self.array_pixel_count == 0 {
            return Err(Error::Config("array_pixel_count must be at least 1".into()));
        }
        if self.separations_um.is_empty() {
            return Err(Error::Config("separations_um must not be empty".into()));
        }
        for &s in &self.separations_um {
            positive("separation", s)?;
            let k = s / self.fiber_cladding_um;
            if (k - k.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "separation {s} um is not a multiple of the {} um cladding",
                    self.fiber_cladding_um
                )));
            }
        }
        Ok(())
    }

    fn mm(um: f64) -> f64 {
        um * 1e-3
    }

    pub fn scan_step_mm(&self) -> f64 {
        Self::mm(self.scan_step_um)
    }

    pub fn aperture_mm(&self) -> f64 {
        Self::mm(self.fiber_core_um)
    }

    pub fn separations_mm(&self) -> Vec<f64> {
        self.separations_um.iter().map(|&s| Self::mm(s)).collect()
    }

    /// Pixel multiplicity M = correlation diameter / pixel size.
    pub fn pixel_multiplicity(&self) -> f64 {
        self.correlation_diameter_mm / Self::mm(self.pixel_size_um)
    }

    /// Scan positions: `2h + 1` stops centered on the envelope.
    pub fn scan_grid(&self) -> Result<DetectorArray> {
        let half = (self.scan_half_range_mm / self.scan_step_mm()).round() as usize;
        DetectorArray::scan_grid(self.scan_step_mm(), half)
    }
}

/// Two-photon state for the preset: κ₀ = π/Λ_classical and
/// Δκ = 2/(√N·D), which puts the two-photon envelope exp(−NΔκ²x²) at 1/e
/// on the correlation diameter D.
///
/// The resulting κ₀/Δκ is far below the orthogonality cutoff, so the
/// returned state allows mode overlap and reports carry the warning.
pub fn derive_spec(config: &ExperimentConfig) -> Result<NoonStateSpec> {
    config.validate()?;
    let n = 2u32;
    let kappa0 = PI / config.classical_period_mm;
    let delta_kappa = 2.0 / (f64::from(n).sqrt() * config.correlation_diameter_mm);
    Ok(NoonStateSpec::new(n, kappa0, delta_kappa)?.allowing_mode_overlap())
}

/// One named run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub name: &'static str,
    pub photon_number: u32,
    pub scheme: DetectionScheme,
}

/// The four measurements: classical N = 1 scan, QL coupler scan, fiber-pair
/// OCM and OCM plus the zero-separation coupler trace.
pub fn paper_scenarios(config: &ExperimentConfig) -> Vec<Scenario> {
    let step = config.scan_step_mm();
    let aperture = config.aperture_mm();
    let pair = |coupler| FiberPair {
        separations: config.separations_mm(),
        aperture_width: aperture,
        scan_step: step,
        include_zero_separation_coupler: coupler,
        coupler_split: config.coupler_split,
    };
    vec![
        Scenario {
            name: CLASSICAL,
            photon_number: 1,
            scheme: DetectionScheme::ScannedAperture(ScannedAperture {
                aperture_width: aperture,
                scan_step: step,
                coupler_split: 1.0,
            }),
        },
        Scenario {
            name: QL,
            photon_number: 2,
            scheme: DetectionScheme::ScannedAperture(ScannedAperture {
                aperture_width: aperture,
                scan_step: step,
                coupler_split: config.coupler_split,
            }),
        },
        Scenario {
            name: OCM,
            photon_number: 2,
            scheme: DetectionScheme::FiberPair(pair(false)),
        },
        Scenario {
            name: OCM_PNR_COMPOSITE,
            photon_number: 2,
            scheme: DetectionScheme::FiberPair(pair(true)),
        },
    ]
}

/// Simulated histogram, statistics and fit of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub name: String,
    pub photon_number: u32,
    pub scheme: DetectionScheme,
    pub histogram: Histogram,
    pub stats: RunStats,
    pub fit: Option<FringeFit>,
    pub fit_error: Option<String>,
    /// γ × accepted records per generated event.
    pub expected_rate_per_pulse: f64,
}

/// Run one preset with a substream keyed by its name.
pub fn run_scenario(
    config: &ExperimentConfig,
    scenario: &Scenario,
    master_seed: u64,
    execution: Execution,
) -> Result<ScenarioResult> {
    let spec = derive_spec(config)?.with_photon_number(scenario.photon_number)?;
    let grid = config.scan_grid()?;
    let streams = StreamFamily::new(master_seed).child(scenario.name);
    let (histogram, stats) =
        simulate_with_streams(&spec, &scenario.scheme, &grid, config.events_per_run, streams, execution)?;
    let (fit, fit_error) = match fit_fringe(&histogram, &FitOptions::default()) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(ScenarioResult {
        name: scenario.name.to_string(),
        photon_number: scenario.photon_number,
        scheme: scenario.scheme.clone(),
        expected_rate_per_pulse: config.pair_generation_probability * stats.acceptance_rate,
        histogram,
        stats,
        fit,
        fit_error,
    })
}

/// Quantities derived from the config.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivedParameters {
    pub kappa0_per_mm: f64,
    pub delta_kappa_per_mm: f64,
    pub classical_period_mm: f64,
    pub two_photon_period_mm: f64,
    pub pixel_multiplicity: f64,
    pub orthogonality_warning: bool,
}

/// One line of the predicted-vs-simulated table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub name: String,
    pub predicted: Ratio,
    pub simulated: Option<Ratio>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub derived: DerivedParameters,
    pub normalization: &'static str,
    pub scenarios: Vec<ScenarioResult>,
    pub period_ratios: BTreeMap<String, Ratio>,
    pub amplitude_ratios: BTreeMap<String, Ratio>,
    pub acceptance_rates: BTreeMap<String, Ratio>,
    pub ratio_table: Vec<RatioRow>,
}

impl ComparisonReport {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&FringeFit> {
        self.scenario(name).and_then(|s| s.fit.as_ref())
    }
}

fn exact(value: f64) -> Ratio {
    Ratio { value, uncertainty: 0.0 }
}

/// Composite-over-QL amplitude expected from the pair correlation of the
/// state: a separated pair is hit in either order, the single fiber passes
/// the coupler with probability `split`.
pub fn pair_correlation_prediction(delta_kappa: f64, separations: &[f64], coupler_split: f64) -> f64 {
    let pairs: f64 = separations
        .iter()
        .map(|s| (-(delta_kappa * s).powi(2) / 2.0).exp())
        .sum();
    1.0 + 2.0 * pairs / coupler_split
}

/// Raw PNR/NPA acceptance on a pixel array of the configured pixel size
/// (no coupler loss), a direct measurement of the occupancy statistics.
fn array_pnr_over_npa(config: &ExperimentConfig, master_seed: u64, execution: Execution) -> Result<Ratio> {
    let spec = derive_spec(config)?;
    let array = DetectorArray::centered(ExperimentConfig::mm(config.pixel_size_um), config.array_pixel_count)?;
    let streams = StreamFamily::new(master_seed).child("ARRAY");
    let (_, pnr) = simulate_with_streams(
        &spec,
        &DetectionScheme::OcmPnr,
        &array,
        config.events_per_run,
        streams.child("OCM_PNR"),
        execution,
    )?;
    let (_, npa) = simulate_with_streams(
        &spec,
        &DetectionScheme::QlMpa { coupler_split: 1.0 },
        &array,
        config.events_per_run,
        streams.child("QL_MPA"),
        execution,
    )?;
    if npa.accepted == 0 {
        return Err(Error::UndefinedRatio("no co-located events on the pixel array".into()));
    }
    let a = pnr.acceptance_rate;
    let b = npa.acceptance_rate;
    let value = a / b;
    let rel = ((pnr.acceptance_std_error / a).powi(2) + (npa.acceptance_std_error / b).powi(2)).sqrt();
    Ok(Ratio {
        value,
        uncertainty: value * rel,
    })
}

/// Run all four presets, fit each and tabulate ratios against predictions.
pub fn run_comparison(config: &ExperimentConfig, master_seed: u64, execution: Execution) -> Result<ComparisonReport> {
    let spec = derive_spec(config)?;
    let m = config.pixel_multiplicity();
    let derived = DerivedParameters {
        kappa0_per_mm: spec.kappa0(),
        delta_kappa_per_mm: spec.delta_kappa(),
        classical_period_mm: spec.with_photon_number(1)?.fringe_period(),
        two_photon_period_mm: spec.fringe_period(),
        pixel_multiplicity: m,
        orthogonality_warning: spec.orthogonality_warning(),
    };

    let scenarios = paper_scenarios(config)
        .iter()
        .map(|s| run_scenario(config, s, master_seed, execution))
        .collect::<Result<Vec<_>>>()?;
    let find = |name: &str| scenarios.iter().find(|s| s.name == name).expect("preset present");

    let mut period_ratios = BTreeMap::new();
    let mut amplitude_ratios = BTreeMap::new();
    let period_pairs = [(CLASSICAL, QL), (CLASSICAL, OCM), (CLASSICAL, OCM_PNR_COMPOSITE), (OCM, QL)];
    for (a, b) in period_pairs {
        if let (Some(fa), Some(fb)) = (&find(a).fit, &find(b).fit) {
            if let Ok(r) = enhancement_ratio(fa, fb) {
                period_ratios.insert(format!("{a}/{b}"), r);
            }
        }
    }
    for (a, b) in [(OCM_PNR_COMPOSITE, QL), (OCM, QL)] {
        let (sa, sb) = (find(a), find(b));
        if let (Some(fa), Some(fb)) = (&sa.fit, &sb.fit) {
            if let Ok(r) = amplitude_ratio(&sa.histogram, &sb.histogram, fa, fb) {
                amplitude_ratios.insert(format!("{a}/{b}"), r);
            }
        }
    }
    let acceptance_rates = scenarios
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                Ratio {
                    value: s.stats.acceptance_rate,
                    uncertainty: s.stats.acceptance_std_error,
                },
            )
        })
        .collect();

    let composite = amplitude_ratios.get(&format!("{OCM_PNR_COMPOSITE}/{QL}")).copied();
    let split = config.coupler_split;
    let placement_uniform = (2.0 * crate::combinatorics::c_spa_real(m, 2)? + split * m) / (split * m);
    let ratio_table = vec![
        RatioRow {
            name: "PNR/NPA".into(),
            predicted: exact(efficiency_ratio(m, 2, RatioScheme::Pnr, RatioScheme::Npa, 1.0)?),
            simulated: array_pnr_over_npa(config, master_seed, execution).ok(),
            note: "equiprobable occupancy patterns; simulated on a pixel array of the configured pixel size".into(),
        },
        RatioRow {
            name: "PNR_COMPOSITE/QL [multiset_uniform]".into(),
            predicted: exact(efficiency_ratio(
                m,
                2,
                RatioScheme::PnrComposite,
                RatioScheme::Npa,
                split,
            )?),
            simulated: composite,
            note: "equiprobable occupancy patterns with coupler-corrected NPA".into(),
        },
        RatioRow {
            name: "PNR_COMPOSITE/QL [placement_uniform]".into(),
            predicted: exact(placement_uniform),
            simulated: composite,
            note: "independent uniform photon placements".into(),
        },
        RatioRow {
            name: "PNR_COMPOSITE/QL [pair_correlation]".into(),
            predicted: exact(pair_correlation_prediction(spec.delta_kappa(), &config.separations_mm(), split)),
            simulated: composite,
            note: "Gaussian pair correlation of the state at the scanned separations".into(),
        },
        RatioRow {
            name: "CLASSICAL/QL period".into(),
            predicted: exact(2.0),
            simulated: period_ratios.get(&format!("{CLASSICAL}/{QL}")).copied(),
            note: "N-fold fringe compression".into(),
        },
        RatioRow {
            name: "CLASSICAL/OCM period".into(),
            predicted: exact(2.0),
            simulated: period_ratios.get(&format!("{CLASSICAL}/{OCM}")).copied(),
            note: "N-fold fringe compression".into(),
        },
    ];

    Ok(ComparisonReport {
        master_seed,
        config: config.clone(),
        derived,
        normalization: "fringe amplitude per generated event (equal flux and integration time)",
        scenarios,
        period_ratios,
        amplitude_ratios,
        acceptance_rates,
        ratio_table,
    })
}
