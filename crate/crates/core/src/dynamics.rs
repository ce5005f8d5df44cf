//! Block-by-block integration of the collective master equation.
//!
//! Collective dissipation never couples different total-spin sectors, so the
//! density operator is carried as one `(2J+1) × (2J+1)` matrix per sector,
//! indexed by `k = m + J`. The `l_J` degenerate copies of a sector start from
//! identical data and evolve identically, so they are folded into a single
//! representative block whose trace is the total sector weight.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::angular_momentum::{EnsembleSpec, HalfInt};
use crate::equilibrium::{BathSpec, Ensemble};
use crate::error::{Error, Result};
use crate::numerics::ln_level_probabilities;

/// Emission and absorption rates `G(ω)` and `G(-ω)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipatorRates {
    pub down: f64,
    pub up: f64,
}

impl DissipatorRates {
    /// Rates with `up/down = e^{-ħωβ}` and the larger of the two equal to `γ`.
    pub fn from_bath(bath: &BathSpec, omega: f64) -> Self {
        let x = omega * bath.beta();
        let gamma = bath.gamma();
        if x >= 0.0 {
            DissipatorRates {
                down: gamma,
                up: gamma * (-x).exp(),
            }
        } else {
            DissipatorRates {
                down: gamma * x.exp(),
                up: gamma,
            }
        }
    }

    /// Largest rate, which sets the integrator time scale.
    pub fn scale(&self) -> f64 {
        self.down.max(self.up)
    }
}

pub fn rates_from_bath(bath: &BathSpec, omega: f64) -> DissipatorRates {
    DissipatorRates::from_bath(bath, omega)
}

/// One total-spin sector, possibly standing for several degenerate copies.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    j: HalfInt,
    log_copies: f64,
    rho: DMatrix<Complex64>,
}

impl BlockState {
    /// `rho` is the summed density matrix of `e^{log_copies}` identical copies.
    pub fn new(j: HalfInt, rho: DMatrix<Complex64>, log_copies: f64) -> Result<Self> {
        let dim = j.multiplet_dim() as usize;
        if j.twice() < 0 || rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::Domain(format!(
                "block for J = {j} needs a {dim}x{dim} matrix, got {}x{}",
                rho.nrows(),
                rho.ncols()
            )));
        }
        let asym = (&rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if asym > 1e-12 {
            return Err(Error::Domain(format!(
                "block matrix is not Hermitian (deviation {asym:e})"
            )));
        }
        if log_copies.is_nan() || log_copies < 0.0 {
            return Err(Error::Domain(format!(
                "copy count must be at least one, got ln = {log_copies}"
            )));
        }
        Ok(BlockState { j, log_copies, rho })
    }

    /// Gibbs block at inverse temperature `x = ħωβ`, scaled to `weight`.
    pub fn thermal(j: HalfInt, weight: f64, x: f64, log_copies: f64) -> Self {
        let probs = ln_level_probabilities(j.twice() as u64, x);
        let diag: Vec<Complex64> = probs.iter().map(|lp| Complex64::new(weight * lp.exp(), 0.0)).collect();
        BlockState {
            j,
            log_copies,
            rho: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
        }
    }

    pub fn j(&self) -> HalfInt {
        self.j
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn log_copies(&self) -> f64 {
        self.log_copies
    }

    pub fn weight(&self) -> f64 {
        self.rho.trace().re
    }

    /// Populations `ρ_kk`, `k = m + J`.
    pub fn populations(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|z| z.re).collect()
    }

    /// `sum_k ρ_kk (m + ns)` in units of `ħω`.
    fn excitation(&self, ns: f64) -> f64 {
        let j = self.j.value();
        self.populations()
            .iter()
            .enumerate()
            .map(|(k, p)| p * (k as f64 - j + ns))
            .sum()
    }

    /// Block contribution to `<J+J->` and `<J-J+>`.
    fn ladder_moments(&self) -> (f64, f64) {
        let two_j = self.j.twice() as usize;
        self.populations()
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(a, b), (k, p)| {
                (
                    a + p * (k * (two_j - k + 1)) as f64,
                    b + p * ((two_j - k) * (k + 1)) as f64,
                )
            })
    }

    /// Contribution `-Tr ρ ln ρ + w ln l` of all folded copies.
    fn entropy(&self) -> f64 {
        let eig = self.rho.clone().symmetric_eigenvalues();
        let own: f64 = eig.iter().filter(|v| **v > 0.0).map(|v| -v * v.ln()).sum();
        own + self.weight() * self.log_copies
    }

    /// Smallest eigenvalue, for positivity checks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `(J+m)(J-m+1)` with `k = J + m`.
fn lowering_factor(two_j: usize, k: usize) -> f64 {
    (k * (two_j + 1 - k)) as f64
}

/// `(J-m)(J+m+1)` with `k = J + m`.
fn raising_factor(two_j: usize, k: usize) -> f64 {
    ((two_j - k) * (k + 1)) as f64
}

fn block_derivative(two_j: usize, rho: &DMatrix<Complex64>, rates: &DissipatorRates) -> DMatrix<Complex64> {
    let dim = two_j + 1;
    let low: Vec<f64> = (0..dim).map(|k| lowering_factor(two_j, k)).collect();
    let high: Vec<f64> = (0..dim).map(|k| raising_factor(two_j, k)).collect();
    let (gd, gu) = (rates.down, rates.up);
    DMatrix::from_fn(dim, dim, |k, q| {
        let damping = 0.5 * gd * (low[k] + low[q]) + 0.5 * gu * (high[k] + high[q]);
        let mut out = -rho[(k, q)] * damping;
        if k + 1 < dim && q + 1 < dim {
            out += rho[(k + 1, q + 1)] * (gd * (low[k + 1] * low[q + 1]).sqrt());
        }
        if k > 0 && q > 0 {
            out += rho[(k - 1, q - 1)] * (gu * (high[k - 1] * high[q - 1]).sqrt());
        }
        out
    })
}

/// `dρ/dt` of one block under the collective dissipator.
pub fn block_rhs(block: &BlockState, rates: &DissipatorRates) -> DMatrix<Complex64> {
    block_derivative(block.j.twice() as usize, &block.rho, rates)
}

fn rk4_step(two_j: usize, rho: &DMatrix<Complex64>, rates: &DissipatorRates, dt: f64) -> DMatrix<Complex64> {
    let k1 = block_derivative(two_j, rho, rates);
    let k2 = block_derivative(two_j, &(rho + &k1 * Complex64::from(0.5 * dt)), rates);
    let k3 = block_derivative(two_j, &(rho + &k2 * Complex64::from(0.5 * dt)), rates);
    let k4 = block_derivative(two_j, &(rho + &k3 * Complex64::from(dt)), rates);
    rho + (k1 + (k2 + k3) * Complex64::from(2.0) + k4) * Complex64::from(dt / 6.0)
}

/// The full state as a list of sector blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    spec: EnsembleSpec,
    blocks: Vec<BlockState>,
}

impl EnsembleState {
    pub fn new(spec: EnsembleSpec, blocks: Vec<BlockState>) -> Result<Self> {
        let total: f64 = blocks.iter().map(BlockState::weight).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("block weights sum to {total}, not 1")));
        }
        for b in &blocks {
            if spec.ladder_index(b.j).is_none() {
                return Err(Error::Domain(format!(
                    "J = {} is not on the ladder of this ensemble",
                    b.j
                )));
            }
        }
        Ok(EnsembleState { spec, blocks })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[BlockState] {
        &self.blocks
    }

    pub fn total_weight(&self) -> f64 {
        self.blocks.iter().map(BlockState::weight).sum()
    }

    /// Ground-referenced energy.
    pub fn energy(&self) -> f64 {
        let ns = self.spec.max_j().value();
        self.spec.omega() * self.blocks.iter().map(|b| b.excitation(ns)).sum::<f64>()
    }

    pub fn entropy(&self) -> f64 {
        self.blocks.iter().map(BlockState::entropy).sum()
    }

    /// `ħω / ln(<J-J+>/<J+J->)`.
    pub fn apparent_temperature(&self) -> Result<f64> {
        let (a, b) = self
            .blocks
            .iter()
            .map(BlockState::ladder_moments)
            .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        apparent_from_moments(a, b, self.spec.omega())
    }
}

fn apparent_from_moments(jpjm: f64, jmjp: f64, omega: f64) -> Result<f64> {
    if !(jpjm > 0.0 && jmjp > 0.0) {
        return Err(Error::DarkState { jpjm, jmjp });
    }
    Ok(omega / (jmjp / jpjm).ln())
}

/// Thermal state `ρ^th(β₀)` in folded block form: one diagonal block per
/// sector with weight `l_J p_J(β₀)`.
pub fn initial_thermal_blocks(ensemble: &Ensemble, beta0: f64) -> EnsembleState {
    let spec = *ensemble.spec();
    let x0 = spec.omega() * beta0;
    let weights = ensemble.thermal_weights(beta0);
    let blocks = spec
        .j_ladder()
        .zip(weights.log_sector_weights())
        .zip(ensemble.table().log_multiplicities())
        .filter(|((_, lw), _)| **lw > f64::NEG_INFINITY)
        .map(|((j, lw), ll)| BlockState::thermal(j, lw.exp(), x0, *ll))
        .collect();
    EnsembleState { spec, blocks }
}

/// Whether and how to confirm the step size by rerunning at `dt/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepCheck {
    Off,
    /// Compare final states of the full run at `dt` and `dt/2`; fail above this
    /// max-abs entry difference.
    Halving {
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    pub t_final: f64,
    /// Step size; `None` picks `0.01 / (γ (2ns+1)^2)`.
    pub dt: Option<f64>,
    /// Time between recorded samples; `None` records only the endpoints.
    pub sample_interval: Option<f64>,
    pub step_check: StepCheck,
}

impl EvolveOptions {
    pub fn until(t_final: f64) -> Self {
        EvolveOptions {
            t_final,
            dt: None,
            sample_interval: None,
            step_check: StepCheck::Halving { tolerance: 1e-9 },
        }
    }
}

/// Observables recorded along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub energy: f64,
    pub entropy: f64,
    /// `None` when the state is dark.
    pub apparent_temperature: Option<f64>,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub final_state: EnsembleState,
    pub dt: f64,
    pub steps: usize,
}

/// Per-block observables at one sample time.
#[derive(Debug, Clone, Copy, Default)]
struct BlockRecord {
    excitation: f64,
    entropy: f64,
    jpjm: f64,
    jmjp: f64,
    min_eig: f64,
}

fn record(block: &BlockState, ns: f64) -> BlockRecord {
    let (jpjm, jmjp) = block.ladder_moments();
    BlockRecord {
        excitation: block.excitation(ns),
        entropy: block.entropy(),
        jpjm,
        jmjp,
        min_eig: block.min_eigenvalue(),
    }
}

fn integrate_block(
    block: &BlockState,
    rates: &DissipatorRates,
    dt: f64,
    steps: usize,
    stride: usize,
    ns: f64,
) -> (DMatrix<Complex64>, Vec<BlockRecord>) {
    let two_j = block.j.twice() as usize;
    let mut rho = block.rho.clone();
    let mut records = vec![record(block, ns)];
    for step in 1..=steps {
        rho = rk4_step(two_j, &rho, rates, dt);
        if step % stride == 0 || step == steps {
            let snapshot = BlockState {
                rho: rho.clone(),
                ..block.clone()
            };
            records.push(record(&snapshot, ns));
        }
    }
    (rho, records)
}

fn propagate_only(block: &BlockState, rates: &DissipatorRates, dt: f64, steps: usize) -> DMatrix<Complex64> {
    let two_j = block.j.twice() as usize;
    let mut rho = block.rho.clone();
    for _ in 0..steps {
        rho = rk4_step(two_j, &rho, rates, dt);
    }
    rho
}

/// Integrates every block with fixed-step RK4 up to `t_final`.
pub fn evolve(state: &EnsembleState, rates: &DissipatorRates, options: &EvolveOptions) -> Result<Trajectory> {
    if !(options.t_final >= 0.0 && options.t_final.is_finite()) {
        return Err(Error::Domain(format!(
            "t_final must be finite and nonnegative, got {}",
            options.t_final
        )));
    }
    let spec = state.spec;
    let two_ns_plus_one = spec.max_j().twice() as f64 + 1.0;
    let scale = rates.scale();
    let default_dt = if scale > 0.0 {
        0.01 / (scale * two_ns_plus_one * two_ns_plus_one)
    } else {
        options.t_final.max(1.0)
    };
    let dt_request = options.dt.unwrap_or(default_dt);
    if !(dt_request > 0.0 && dt_request.is_finite()) {
        return Err(Error::Domain(format!("dt must be positive, got {dt_request}")));
    }
    let steps = ((options.t_final / dt_request).ceil() as usize).max(1);
    let dt = options.t_final / steps as f64;
    let stride = match options.sample_interval {
        Some(interval) if interval > 0.0 => ((interval / dt).round() as usize).clamp(1, steps),
        _ => steps,
    };
    let ns = spec.max_j().value();

    let results: Vec<(DMatrix<Complex64>, Vec<BlockRecord>)> = state
        .blocks
        .par_iter()
        .map(|b| integrate_block(b, rates, dt, steps, stride, ns))
        .collect();

    if let StepCheck::Halving { tolerance } = options.step_check {
        let discrepancy = state
            .blocks
            .par_iter()
            .zip(&results)
            .map(|(b, (coarse, _))| {
                let fine = propagate_only(b, rates, 0.5 * dt, 2 * steps);
                (coarse - fine).iter().map(|z| z.norm()).fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max);
        if discrepancy > tolerance {
            // RK4 global error scales as dt^4
            let suggested_dt = 0.5 * dt * (tolerance / discrepancy).powf(0.25);
            return Err(Error::StepSize {
                discrepancy,
                tolerance,
                suggested_dt,
            });
        }
    }

    let n_samples = results.first().map_or(1, |r| r.1.len());
    let omega = spec.omega();
    let samples = (0..n_samples)
        .map(|i| {
            let step = if i == n_samples - 1 { steps } else { i * stride };
            let mut acc = BlockRecord {
                min_eig: f64::INFINITY,
                ..Default::default()
            };
            for (_, recs) in &results {
                let r = recs[i];
                acc.excitation += r.excitation;
                acc.entropy += r.entropy;
                acc.jpjm += r.jpjm;
                acc.jmjp += r.jmjp;
                acc.min_eig = acc.min_eig.min(r.min_eig);
            }
            Sample {
                t: step as f64 * dt,
                energy: omega * acc.excitation,
                entropy: acc.entropy,
                apparent_temperature: apparent_from_moments(acc.jpjm, acc.jmjp, omega).ok(),
                min_eigenvalue: acc.min_eig,
            }
        })
        .collect();

    let blocks = state
        .blocks
        .iter()
        .zip(results)
        .map(|(b, (rho, _))| BlockState { rho, ..b.clone() })
        .collect();
    Ok(Trajectory {
        samples,
        final_state: EnsembleState { spec, blocks },
        dt,
        steps,
    })
}
