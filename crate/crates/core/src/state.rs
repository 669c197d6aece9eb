//! N00N-state parameterization, exact detection-plane densities, and exact
//! sampling of N-photon arrival events.
//!
//! The transverse profile of each mode is the fixed Gaussian
//! `F(q) = exp(-q²/2Δκ²)/√π`, so the joint N-photon density on the detector
//! plane factorizes into an isotropic Gaussian in the relative coordinates
//! and a Gaussian-windowed fringe `1 + cos(2Nκ₀X)` in the centroid `X`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, invalid, Error, Result};
use crate::quadrature::integrate_panels;

/// κ₀ must exceed this multiple of Δκ for the two modes to be treated as
/// orthogonal.
pub const ORTHOGONALITY_RATIO: f64 = 10.0;

/// Upper bound on centroid proposals per event.
pub const MAX_PROPOSALS: usize = 10_000;

/// Parameters of the N-photon N00N state on the detection plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoonStateSpec {
    photon_number: u32,
    kappa0: f64,
    delta_kappa: f64,
    eta: f64,
    #[serde(default)]
    allow_mode_overlap: bool,
}

impl NoonStateSpec {
    pub fn new(photon_number: u32, kappa0: f64, delta_kappa: f64) -> Result<Self> {
        Self::with_scale(photon_number, kappa0, delta_kappa, 1.0)
    }

    pub fn with_scale(photon_number: u32, kappa0: f64, delta_kappa: f64, eta: f64) -> Result<Self> {
        if photon_number == 0 {
            return Err(invalid("photon number must be at least 1"));
        }
        ensure_finite("kappa0", kappa0)?;
        ensure_finite("delta_kappa", delta_kappa)?;
        ensure_finite("eta", eta)?;
        if kappa0 <= 0.0 {
            return Err(invalid(format!("kappa0 must be positive, got {kappa0}")));
        }
        if delta_kappa <= 0.0 {
            return Err(invalid(format!("delta_kappa must be positive, got {delta_kappa}")));
        }
        if eta <= 0.0 {
            return Err(invalid(format!("eta must be positive, got {eta}")));
        }
        Ok(Self {
            photon_number,
            kappa0,
            delta_kappa,
            eta,
            allow_mode_overlap: false,
        })
    }

    /// Permit sampling outside the κ₀ ≥ 10·Δκ regime. The warning flag stays
    /// set; callers are expected to surface it.
    pub fn allowing_mode_overlap(mut self) -> Self {
        self.allow_mode_overlap = true;
        self
    }

    pub fn mode_overlap_allowed(&self) -> bool {
        self.allow_mode_overlap
    }

    /// Sampling precondition: orthogonal, or overlap explicitly allowed.
    pub fn is_samplable(&self) -> bool {
        self.is_orthogonal() || self.allow_mode_overlap
    }

    pub fn photon_number(&self) -> u32 {
        self.photon_number
    }

    pub fn kappa0(&self) -> f64 {
        self.kappa0
    }

    pub fn delta_kappa(&self) -> f64 {
        self.delta_kappa
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Same κ₀, Δκ and η with a different photon number.
    pub fn with_photon_number(&self, photon_number: u32) -> Result<Self> {
        let mut spec = Self::with_scale(photon_number, self.kappa0, self.delta_kappa, self.eta)?;
        spec.allow_mode_overlap = self.allow_mode_overlap;
        Ok(spec)
    }

    /// True when κ₀ ≥ 10·Δκ.
    pub fn is_orthogonal(&self) -> bool {
        self.kappa0 >= ORTHOGONALITY_RATIO * self.delta_kappa
    }

    /// Warning flag: the modes overlap enough that `[A, B†] = 0` is doubtful.
    pub fn orthogonality_warning(&self) -> bool {
        !self.is_orthogonal()
    }

    /// Fringe period π/(Nκ₀) of both the multi-photon and centroid densities.
    pub fn fringe_period(&self) -> f64 {
        PI / (f64::from(self.photon_number) * self.kappa0)
    }

    /// Standard deviation of the Gaussian centroid envelope, 1/(√(2N)Δκ).
    pub fn centroid_sigma(&self) -> f64 {
        1.0 / ((2.0 * f64::from(self.photon_number)).sqrt() * self.delta_kappa)
    }

    /// Standard deviation of each photon before projection, 1/(√2·Δκ).
    pub fn photon_sigma(&self) -> f64 {
        1.0 / (2f64.sqrt() * self.delta_kappa)
    }

    fn fringe(&self, x: f64) -> f64 {
        let n = f64::from(self.photon_number);
        (-n * self.delta_kappa.powi(2) * x * x).exp() * (1.0 + (2.0 * n * self.kappa0 * x).cos())
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// One sampled arrival of N photons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotonArrivalEvent {
    positions: Vec<f64>,
    centroid: f64,
    relatives: Vec<f64>,
}

impl PhotonArrivalEvent {
    pub fn from_positions(positions: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(invalid("an event needs at least one photon"));
        }
        for &p in &positions {
            ensure_finite("position", p)?;
        }
        let centroid = positions.iter().sum::<f64>() / positions.len() as f64;
        let relatives = positions.iter().map(|p| p - centroid).collect();
        Ok(Self {
            positions,
            centroid,
            relatives,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn centroid(&self) -> f64 {
        self.centroid
    }

    pub fn relatives(&self) -> &[f64] {
        &self.relatives
    }

    pub fn photon_number(&self) -> usize {
        self.positions.len()
    }
}

/// N-photon coincidence density at a single point (multi-photon detection).
pub fn eval_ql_density(spec: &NoonStateSpec, x: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    let n = spec.photon_number;
    let prefactor = factorial(n) * (spec.eta * spec.delta_kappa / PI).powi(n as i32);
    Ok(prefactor * spec.fringe(x))
}

/// Marginal density of the optical centroid.
pub fn eval_centroid_density(spec: &NoonStateSpec, centroid: f64) -> Result<f64> {
    ensure_finite("centroid", centroid)?;
    Ok(centroid_prefactor(spec) * spec.fringe(centroid))
}

fn centroid_prefactor(spec: &NoonStateSpec) -> f64 {
    let n = spec.photon_number;
    let nf = f64::from(n);
    factorial(n) * spec.eta.powi(n as i32) * spec.delta_kappa / (nf * PI.powi(n as i32 + 1)).sqrt()
}

/// Ratio of centroid to multi-photon detection probability for pixel size δx:
/// `(1/√N)·(√π/(Δκ·δx))^(N−1)`.
pub fn density_ratio(spec: &NoonStateSpec, pixel_size: f64) -> Result<f64> {
    ensure_finite("pixel_size", pixel_size)?;
    if pixel_size <= 0.0 {
        return Err(invalid(format!("pixel size must be positive, got {pixel_size}")));
    }
    let n = spec.photon_number;
    let base = PI.sqrt() / (spec.delta_kappa * pixel_size);
    Ok(base.powi(n as i32 - 1) / f64::from(n).sqrt())
}

/// Classical (single-photon) reference fringe with the same κ₀ and Δκ.
pub fn eval_classical_fringe(spec: &NoonStateSpec, x: f64) -> Result<f64> {
    let single = spec.with_photon_number(1)?;
    eval_ql_density(&single, x)
}

/// ∫ P_M(X) dX by adaptive quadrature over ±8 envelope standard deviations
/// (±8/(√N·Δκ)), absolute tolerance 1e-10 of the peak density.
pub fn centroid_normalization(spec: &NoonStateSpec) -> f64 {
    let half = 8.0 / (f64::from(spec.photon_number).sqrt() * spec.delta_kappa);
    let peak = centroid_prefactor(spec) * 2.0;
    // enough panels that each holds at most a few fringe periods
    let periods = 2.0 * half / spec.fringe_period();
    let panels = (periods.ceil() as usize).clamp(8, 4096);
    integrate_panels(
        |x| centroid_prefactor(spec) * spec.fringe(x),
        -half,
        half,
        panels,
        1e-10 * peak,
    )
}

/// Normalized centroid density (integrates to one).
pub fn normalized_centroid_density(spec: &NoonStateSpec, norm: f64, centroid: f64) -> f64 {
    centroid_prefactor(spec) * spec.fringe(centroid) / norm
}

/// Draw one arrival event.
///
/// The relative coordinates are an isotropic Gaussian projected onto
/// `Σξ = 0`; the centroid is drawn from a Gaussian proposal thinned by the
/// fringe weight `(1 + cos(2Nκ₀X))/2`.
pub fn sample_event<R: Rng + ?Sized>(spec: &NoonStateSpec, rng: &mut R) -> Result<PhotonArrivalEvent> {
    if !spec.is_samplable() {
        return Err(Error::InvalidArgument(format!(
            "spec outside orthogonality regime (kappa0 = {}, delta_kappa = {})",
            spec.kappa0, spec.delta_kappa
        )));
    }
    let n = spec.photon_number as usize;
    let photon = Normal::new(0.0, spec.photon_sigma()).expect("positive sigma");
    let mut relatives: Vec<f64> = (0..n).map(|_| photon.sample(rng)).collect();
    let mean = relatives.iter().sum::<f64>() / n as f64;
    for r in &mut relatives {
        *r -= mean;
    }

    let centroid = sample_centroid(spec, rng)?;
    let positions = relatives.iter().map(|r| centroid + r).collect();
    Ok(PhotonArrivalEvent {
        positions,
        centroid,
        relatives,
    })
}

fn sample_centroid<R: Rng + ?Sized>(spec: &NoonStateSpec, rng: &mut R) -> Result<f64> {
    let proposal = Normal::new(0.0, spec.centroid_sigma()).expect("positive sigma");
    let k = 2.0 * f64::from(spec.photon_number) * spec.kappa0;
    for _ in 0..MAX_PROPOSALS {
        let x = proposal.sample(rng);
        let weight = 0.5 * (1.0 + (k * x).cos());
        if rng.random::<f64>() < weight {
            return Ok(x);
        }
    }
    Err(Error::RejectionExhausted(MAX_PROPOSALS))
}
