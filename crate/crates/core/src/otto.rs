//! Quantum Otto engine with a spin-ensemble working medium.
//!
//! The hot stroke brings the medium to the steady state at `β_h` under `H`;
//! the cold stroke to the steady state at `β_c` under `H' = λH`, which in
//! terms of `H` is the steady state at `λβ_c`. Collective strokes keep the
//! sector weights `p_J(β₀)` of the state the medium started in; independent
//! strokes reach Gibbs states.

use rayon::prelude::*;

use crate::angular_momentum::HalfInt;
use crate::equilibrium::{Coupling, Ensemble};
use crate::error::{Error, Result};
use crate::numerics::projection_variance;

/// Parameters of one engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSpec {
    beta0: f64,
    beta_h: f64,
    beta_c: f64,
    lambda: f64,
}

impl CycleSpec {
    /// Requires `0 ≤ β_h < β_c`, `0 < λ ≤ 1` and `λβ_c ≥ β_h`. Equality in the
    /// last condition is the degenerate zero-work engine.
    pub fn new(beta0: f64, beta_h: f64, beta_c: f64, lambda: f64) -> Result<Self> {
        if beta0.is_nan() {
            return Err(Error::Domain("beta0 must not be NaN".into()));
        }
        if !(beta_h.is_finite() && beta_h >= 0.0) {
            return Err(Error::Domain(format!(
                "beta_h must be finite and nonnegative, got {beta_h}"
            )));
        }
        if !(beta_c.is_finite() && beta_c > beta_h) {
            return Err(Error::Domain(format!(
                "beta_c must be finite and above beta_h, got {beta_c}"
            )));
        }
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Domain(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        if lambda * beta_c < beta_h {
            return Err(Error::Domain(format!(
                "lambda * beta_c = {} is below beta_h = {beta_h}; the cycle would not extract work",
                lambda * beta_c
            )));
        }
        Ok(CycleSpec {
            beta0,
            beta_h,
            beta_c,
            lambda,
        })
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn beta_h(&self) -> f64 {
        self.beta_h
    }

    pub fn beta_c(&self) -> f64 {
        self.beta_c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Inverse temperature of the cold stroke's steady state measured against `H`.
    pub fn compressed_beta_c(&self) -> f64 {
        self.lambda * self.beta_c
    }
}

/// Work and heat per cycle. Signs follow the engine convention: extracted
/// work is negative, heat absorbed from the hot bath positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleReport {
    pub coupling: Coupling,
    pub work_coh: f64,
    pub work_inc: f64,
    /// Heat from the hot bath in the reported coupling mode.
    pub heat_hot: f64,
    /// Heat into the cold bath in the reported coupling mode.
    pub heat_cold: f64,
    pub efficiency: f64,
    /// `W^coh / W^inc`; `None` when the independent engine produces no work.
    pub enhancement_ratio: Option<f64>,
    pub amplified: bool,
}

impl CycleReport {
    /// `W` of the reported coupling mode.
    pub fn work(&self) -> f64 {
        match self.coupling {
            Coupling::Collective => self.work_coh,
            Coupling::Independent => self.work_inc,
        }
    }
}

fn stroke_energies(ensemble: &Ensemble, cycle: &CycleSpec, coupling: Coupling) -> (f64, f64) {
    let (bh, bc) = (cycle.beta_h, cycle.compressed_beta_c());
    match coupling {
        Coupling::Collective => {
            let w = ensemble.thermal_weights(cycle.beta0);
            (ensemble.steady_energy_with(&w, bh), ensemble.steady_energy_with(&w, bc))
        }
        Coupling::Independent => (ensemble.thermal_energy(bh), ensemble.thermal_energy(bc)),
    }
}

/// Work `W = -(1-λ)[E(β_h) - E(λβ_c)]`.
pub fn cycle_work_value(ensemble: &Ensemble, cycle: &CycleSpec, coupling: Coupling) -> f64 {
    let (e1, e2) = stroke_energies(ensemble, cycle, coupling);
    -(1.0 - cycle.lambda) * (e1 - e2)
}

pub fn cycle_work(ensemble: &Ensemble, cycle: &CycleSpec, coupling: Coupling) -> CycleReport {
    let work_coh = cycle_work_value(ensemble, cycle, Coupling::Collective);
    let work_inc = cycle_work_value(ensemble, cycle, Coupling::Independent);
    let (e1, e2) = stroke_energies(ensemble, cycle, coupling);
    let heat_hot = e1 - e2;
    let heat_cold = cycle.lambda * (e2 - e1);
    CycleReport {
        coupling,
        work_coh,
        work_inc,
        heat_hot,
        heat_cold,
        efficiency: 1.0 - cycle.lambda,
        enhancement_ratio: (work_inc != 0.0).then(|| work_coh / work_inc),
        amplified: amplification_condition(ensemble, cycle),
    }
}

/// `S(β_h) - S(λβ_c)`, the entropy drop between the hot and cold steady states.
pub fn cycle_entropy_drop(ensemble: &Ensemble, cycle: &CycleSpec, coupling: Coupling) -> f64 {
    let (bh, bc) = (cycle.beta_h, cycle.compressed_beta_c());
    match coupling {
        Coupling::Collective => {
            let w = ensemble.thermal_weights(cycle.beta0);
            ensemble.steady_entropy_with(&w, bh) - ensemble.steady_entropy_with(&w, bc)
        }
        Coupling::Independent => ensemble.thermal_entropy(bh) - ensemble.thermal_entropy(bc),
    }
}

/// Free-energy change per cycle `(1/β_c - 1/β_h) [S(β_h) - S(λβ_c)]`;
/// `None` when `β_h = 0`.
pub fn cycle_free_energy(ensemble: &Ensemble, cycle: &CycleSpec, coupling: Coupling) -> Option<f64> {
    (cycle.beta_h > 0.0)
        .then(|| (1.0 / cycle.beta_c - 1.0 / cycle.beta_h) * cycle_entropy_drop(ensemble, cycle, coupling))
}

/// Whether the two collective strokes together act more strongly than
/// independent ones, judged by the entropy drop across the cycle.
pub fn amplification_condition(ensemble: &Ensemble, cycle: &CycleSpec) -> bool {
    cycle_entropy_drop(ensemble, cycle, Coupling::Collective)
        > cycle_entropy_drop(ensemble, cycle, Coupling::Independent)
}

/// `d/dx [E^th - E^∞](x)` in units of `ħω`, with `x = ħωβ`.
fn gap_slope(ensemble: &Ensemble, log_weights: &[f64], x: f64) -> f64 {
    let spec = ensemble.spec();
    let coherent: f64 = spec
        .j_ladder()
        .zip(log_weights)
        .filter(|(_, lw)| **lw > f64::NEG_INFINITY)
        .map(|(j, lw)| lw.exp() * projection_variance(j.twice() as u64, x))
        .sum();
    coherent - spec.n() as f64 * projection_variance(spec.two_s() as u64, x)
}

/// The positive inverse temperature at which `E^th(β) - E^∞_{β₀}(β)` peaks.
pub fn beta_l(ensemble: &Ensemble, beta0: f64) -> Result<f64> {
    let spec = ensemble.spec();
    let weights = ensemble.thermal_weights(beta0);
    let lw = weights.log_sector_weights();
    let at_origin: f64 = spec
        .j_ladder()
        .zip(lw)
        .filter(|(_, l)| **l > f64::NEG_INFINITY)
        .map(|(j, l): (HalfInt, &f64)| l.exp() * j.value() * (j.value() + 1.0))
        .sum::<f64>()
        - spec.n() as f64 * spec.spin().value() * (spec.spin().value() + 1.0);
    if at_origin <= 0.0 {
        return Err(Error::Domain(format!(
            "no enhancement regime: sum_J l_J p_J J(J+1) - n s(s+1) = {at_origin:e} is not positive"
        )));
    }
    let f = |x: f64| gap_slope(ensemble, lw, x);
    let mut hi = 1e-3;
    let mut doublings = 0;
    while f(hi) > 0.0 {
        doublings += 1;
        if doublings > 60 {
            return Err(Error::Bracket("slope stays positive up to x = 1e-3 * 2^60".into()));
        }
        hi *= 2.0;
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi) / spec.omega())
}

/// One row of a cold-bath sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda_beta_c: f64,
    pub work_coh: f64,
    pub work_inc: f64,
    /// `(|W^coh| - |W^inc|) / ((1-λ) ħω ns)`, computed from the stroke energies
    /// so that it stays finite at `λ = 1`.
    pub normalized_difference: f64,
    pub ratio: Option<f64>,
}

/// Evaluates the engine over a grid of cold-bath inverse temperatures.
/// Grid points that violate the cycle constraints are rejected.
pub fn sweep(ensemble: &Ensemble, beta0: f64, beta_h: f64, lambda: f64, betas_c: &[f64]) -> Result<Vec<SweepRow>> {
    let weights = ensemble.thermal_weights(beta0);
    let spec = ensemble.spec();
    let scale = spec.omega() * spec.max_j().value();
    betas_c
        .par_iter()
        .map(|&beta_c| {
            let cycle = CycleSpec::new(beta0, beta_h, beta_c, lambda)?;
            let bc = cycle.compressed_beta_c();
            let coh = ensemble.steady_energy_with(&weights, beta_h) - ensemble.steady_energy_with(&weights, bc);
            let inc = ensemble.thermal_energy(beta_h) - ensemble.thermal_energy(bc);
            let work_coh = -(1.0 - lambda) * coh;
            let work_inc = -(1.0 - lambda) * inc;
            Ok(SweepRow {
                lambda_beta_c: bc,
                work_coh,
                work_inc,
                normalized_difference: (coh.abs() - inc.abs()) / scale,
                ratio: (inc != 0.0).then(|| coh / inc),
            })
        })
        .collect()
}
