//! Closed-form steady-state thermodynamics of a spin ensemble under
//! collective dissipation.
//!
//! Inverse temperatures are passed in physical units (`1/(ħω)` scale set by
//! [`EnsembleSpec::omega`]); internally everything is expressed through the
//! dimensionless `x = ħωβ`. Energies are referenced to the ensemble ground
//! state, so they lie in `[0, 2ħωns]`. The initial inverse temperature `β₀`
//! may be `±∞` (the Dicke limit).

use crate::angular_momentum::{ln_biguint, EnsembleSpec, HalfInt, MultiplicityTable};
use crate::error::{Error, Result};
use crate::numerics::{
    block_entropy, ln_factorials, ln_level_probabilities, ln_partition_shifted, log_sum_exp, mean_excitation,
    mean_projection,
};

/// How the spins couple to the bath.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coupling {
    /// All spins share the collective jump operators `J±`.
    Collective,
    /// Each spin has its own jump operators.
    Independent,
}

/// Sign of a real quantity, with exact zero kept distinct.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(value: f64) -> Self {
        if value > 0.0 {
            Sign::Positive
        } else if value < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// A thermal bath: signed inverse temperature and overall rate scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpec {
    beta: f64,
    gamma: f64,
}

impl BathSpec {
    pub fn new(beta: f64, gamma: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Domain(format!(
                "bath inverse temperature must be finite, got {beta}"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Domain(format!("bath rate must be positive, got {gamma}")));
        }
        Ok(BathSpec { beta, gamma })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Sector probabilities `p_J(β₀)` of the initial thermal state.
#[derive(Debug, Clone)]
pub struct ThermalWeights {
    spec: EnsembleSpec,
    beta0: f64,
    log_p: Vec<f64>,
    log_weight: Vec<f64>,
}

impl ThermalWeights {
    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    /// `ln p_J` in ladder order.
    pub fn log_p(&self) -> &[f64] {
        &self.log_p
    }

    /// `ln(l_J p_J)` in ladder order: the log probability of sector `J`.
    pub fn log_sector_weights(&self) -> &[f64] {
        &self.log_weight
    }

    pub fn probability(&self, j: HalfInt) -> f64 {
        self.spec.ladder_index(j).map_or(0.0, |i| self.log_p[i].exp())
    }

    /// `l_J p_J(β₀)`.
    pub fn sector_weight(&self, j: HalfInt) -> f64 {
        self.spec.ladder_index(j).map_or(0.0, |i| self.log_weight[i].exp())
    }

    /// `(J, l_J p_J)` pairs in ladder order.
    pub fn sector_weights(&self) -> impl Iterator<Item = (HalfInt, f64)> + '_ {
        self.spec.j_ladder().zip(self.log_weight.iter().map(|v| v.exp()))
    }

    /// `sum_J l_J p_J`, equal to one up to rounding.
    pub fn normalization(&self) -> f64 {
        self.log_weight.iter().map(|v| v.exp()).sum()
    }
}

/// Thermodynamic summary of a collective steady state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateSummary {
    pub energy: f64,
    pub entropy: f64,
    /// `None` at infinite bath temperature, where free energy is undefined.
    pub free_energy_variation: Option<f64>,
    pub entropy_production: f64,
    /// `None` for a dark state.
    pub apparent_temperature: Option<f64>,
}

/// An `(n, s)` ensemble with its multiplicity table, the entry point for all
/// closed-form steady-state quantities.
#[derive(Debug, Clone)]
pub struct Ensemble {
    table: MultiplicityTable,
}

impl Ensemble {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        Ok(Ensemble {
            table: MultiplicityTable::new(spec)?,
        })
    }

    pub fn from_table(table: MultiplicityTable) -> Self {
        Ensemble { table }
    }

    pub fn spec(&self) -> &EnsembleSpec {
        self.table.spec()
    }

    pub fn table(&self) -> &MultiplicityTable {
        &self.table
    }

    fn x(&self, beta: f64) -> f64 {
        self.spec().omega() * beta
    }

    fn two_ns(&self) -> u64 {
        self.spec().max_j().twice() as u64
    }

    fn two_s(&self) -> u64 {
        self.spec().two_s() as u64
    }

    fn ns(&self) -> f64 {
        self.spec().max_j().value()
    }

    fn ladder_twice(&self) -> impl Iterator<Item = u64> + '_ {
        self.spec().j_ladder().map(|j| j.twice() as u64)
    }

    pub fn thermal_weights(&self, beta0: f64) -> ThermalWeights {
        let spec = *self.spec();
        let x0 = self.x(beta0);
        let a = x0.abs();
        let n = spec.n() as f64;
        let two_ns = self.two_ns();
        let single = ln_partition_shifted(self.two_s(), x0);
        let log_p: Vec<f64> = self
            .ladder_twice()
            .map(|two_j| {
                let gap = (two_ns - two_j) / 2;
                let base = ln_partition_shifted(two_j, x0) - n * single;
                if gap == 0 {
                    base
                } else {
                    base - gap as f64 * a
                }
            })
            .collect();
        let log_weight = log_p
            .iter()
            .zip(self.table.log_multiplicities())
            .map(|(lp, ll)| lp + ll)
            .collect();
        ThermalWeights {
            spec,
            beta0,
            log_p,
            log_weight,
        }
    }

    /// `sum_J w_J f(2J)` skipping sectors of zero weight.
    fn weighted_sum(&self, weights: &ThermalWeights, f: impl Fn(u64) -> f64) -> f64 {
        self.ladder_twice()
            .zip(weights.log_sector_weights())
            .filter(|(_, lw)| **lw > f64::NEG_INFINITY)
            .map(|(two_j, lw)| lw.exp() * f(two_j))
            .sum()
    }

    /// `e_J(β) = ħω <J_z>` in the spin-`J` Gibbs state.
    pub fn block_energy(&self, j: HalfInt, beta: f64) -> f64 {
        self.spec().omega() * mean_projection(j.twice() as u64, self.x(beta))
    }

    /// `ln Z_J(β)`.
    pub fn log_partition_block(&self, j: HalfInt, beta: f64) -> f64 {
        let x = self.x(beta);
        ln_partition_shifted(j.twice() as u64, x) + j.value() * x.abs()
    }

    /// Ground-referenced energy of the steady state reached from `ρ^th(β₀)`.
    pub fn steady_energy(&self, beta0: f64, beta_b: f64) -> f64 {
        let weights = self.thermal_weights(beta0);
        self.steady_energy_with(&weights, beta_b)
    }

    pub fn steady_energy_with(&self, weights: &ThermalWeights, beta_b: f64) -> f64 {
        let x = self.x(beta_b);
        let ns = self.ns();
        let total = self.weighted_sum(weights, |two_j| mean_excitation(two_j, x) + ns - two_j as f64 / 2.0);
        self.spec().omega() * total
    }

    /// `E^th(β) = n (e_s(β) + ħωs)`.
    pub fn thermal_energy(&self, beta: f64) -> f64 {
        let spec = self.spec();
        spec.n() as f64 * spec.omega() * mean_excitation(self.two_s(), self.x(beta))
    }

    /// `E_+(β)`, the steady energy in the Dicke limit `β₀ = ±∞`.
    pub fn dicke_energy(&self, beta: f64) -> f64 {
        self.spec().omega() * mean_excitation(self.two_ns(), self.x(beta))
    }

    /// `∂E^∞/∂β₀` as the symmetric double sum over sector pairs `J > J'`.
    pub fn energy_derivative(&self, beta0: f64, beta_b: f64) -> f64 {
        let weights = self.thermal_weights(beta0);
        let x0 = self.x(beta0);
        let xb = self.x(beta_b);
        let sectors: Vec<(f64, f64, f64)> = self
            .ladder_twice()
            .zip(weights.log_sector_weights())
            .filter(|(_, lw)| **lw > f64::NEG_INFINITY)
            .map(|(two_j, lw)| (lw.exp(), mean_projection(two_j, x0), mean_projection(two_j, xb)))
            .collect();
        let mut total = 0.0;
        for (a, &(wa, ea0, eab)) in sectors.iter().enumerate() {
            for &(wb, eb0, ebb) in &sectors[..a] {
                total += wa * wb * (ea0 - eb0) * (eab - ebb);
            }
        }
        let omega = self.spec().omega();
        -omega * omega * total
    }

    pub fn energy_derivative_sign(&self, beta0: f64, beta_b: f64) -> Sign {
        Sign::of(self.energy_derivative(beta0, beta_b))
    }

    /// Von Neumann entropy of the steady state reached from `ρ^th(β₀)`.
    pub fn steady_entropy(&self, beta0: f64, beta_b: f64) -> f64 {
        let weights = self.thermal_weights(beta0);
        self.steady_entropy_with(&weights, beta_b)
    }

    pub fn steady_entropy_with(&self, weights: &ThermalWeights, beta_b: f64) -> f64 {
        let x = self.x(beta_b);
        self.ladder_twice()
            .zip(weights.log_sector_weights().iter().zip(weights.log_p()))
            .filter(|(_, (lw, _))| **lw > f64::NEG_INFINITY)
            .map(|(two_j, (lw, lp))| lw.exp() * (block_entropy(two_j, x) - lp))
            .sum()
    }

    /// `S^th(β) = n S_s(β)`.
    pub fn thermal_entropy(&self, beta: f64) -> f64 {
        self.spec().n() as f64 * block_entropy(self.two_s(), self.x(beta))
    }

    /// `S_+(β)`, the steady entropy in the Dicke limit.
    pub fn dicke_entropy(&self, beta: f64) -> f64 {
        block_entropy(self.two_ns(), self.x(beta))
    }

    /// Energy and entropy changes of the relaxation from `ρ^th(β₀)`.
    fn relaxation_changes(&self, beta0: f64, beta_b: f64, coupling: Coupling) -> (f64, f64) {
        let (e_final, s_final) = match coupling {
            Coupling::Collective => {
                let weights = self.thermal_weights(beta0);
                (
                    self.steady_energy_with(&weights, beta_b),
                    self.steady_entropy_with(&weights, beta_b),
                )
            }
            Coupling::Independent => (self.thermal_energy(beta_b), self.thermal_entropy(beta_b)),
        };
        (
            e_final - self.thermal_energy(beta0),
            s_final - self.thermal_entropy(beta0),
        )
    }

    /// `ΔF = F[final] - F[ρ^th(β₀)]` with `F = E - S/β_B`.
    pub fn free_energy_variation(&self, beta0: f64, beta_b: f64, coupling: Coupling) -> Result<f64> {
        if beta_b == 0.0 || beta_b.is_nan() {
            return Err(Error::Domain(
                "free energy is undefined at infinite bath temperature (beta_B = 0)".into(),
            ));
        }
        let (de, ds) = self.relaxation_changes(beta0, beta_b, coupling);
        Ok(de - ds / beta_b)
    }

    /// `Σ = ΔS - β_B ΔE`, which equals `-β_B ΔF` and stays defined at `β_B = 0`.
    pub fn entropy_production(&self, beta0: f64, beta_b: f64, coupling: Coupling) -> Result<f64> {
        if !beta_b.is_finite() {
            return Err(Error::Domain(format!(
                "entropy production needs a finite bath inverse temperature, got {beta_b}"
            )));
        }
        let (de, ds) = self.relaxation_changes(beta0, beta_b, coupling);
        Ok(ds - beta_b * de)
    }

    /// `ln p_Loc(m₁)` for `m₁ = -s, ..., s`, one spin of the Dicke-limit steady state.
    fn ln_local_populations(&self, beta_b: f64) -> Vec<f64> {
        let x = self.x(beta_b);
        let two_s = self.two_s();
        let two_ns = self.two_ns();
        let ln_pi = ln_level_probabilities(two_ns, x);
        if self.spec().n() == 1 {
            return ln_pi;
        }
        let rest = two_ns - two_s;
        let lf = ln_factorials(two_ns as usize);
        let ln_choose = |top: u64, k: u64| lf[top as usize] - lf[k as usize] - lf[(top - k) as usize];
        (0..=two_s)
            .map(|k1| {
                log_sum_exp(
                    (k1..=k1 + rest).map(|k| {
                        ln_pi[k as usize] + ln_choose(two_s, k1) + ln_choose(rest, k - k1) - ln_choose(two_ns, k)
                    }),
                )
            })
            .collect()
    }

    /// Single-spin populations of the Dicke-limit steady state, `m₁ = -s..=s`.
    pub fn local_populations_dicke(&self, beta_b: f64) -> Vec<(HalfInt, f64)> {
        let two_s = self.two_s() as i64;
        self.ln_local_populations(beta_b)
            .into_iter()
            .enumerate()
            .map(|(k, lp)| (HalfInt::from_twice(2 * k as i64 - two_s), lp.exp()))
            .collect()
    }

    /// Inverse temperature of the two-level Gibbs state with the same
    /// per-spin energy as the steady state. Spin-1/2 only.
    pub fn local_inverse_temperature(&self, beta0: f64, beta_b: f64) -> Result<f64> {
        if self.two_s() != 1 {
            return Err(Error::Domain(format!(
                "local temperature is defined only for s = 1/2 (got s = {}); the local state of larger spins is not thermal",
                self.spec().spin()
            )));
        }
        let spec = self.spec();
        let excited = self.steady_energy(beta0, beta_b) / (spec.n() as f64 * spec.omega());
        if !(excited > 0.0 && excited < 1.0) {
            return Err(Error::Domain(format!(
                "excited population {excited} outside (0, 1); local temperature undefined"
            )));
        }
        Ok(((-excited).ln_1p() - excited.ln()) / spec.omega())
    }

    /// `ln<J+J-> ` and `ln<J-J+>` of the steady state reached from `ρ^th(β₀)`.
    fn ln_ladder_moments_steady(&self, beta0: f64, beta_b: f64) -> (f64, f64) {
        let weights = self.thermal_weights(beta0);
        let x = self.x(beta_b);
        let mut lower = Vec::new();
        let mut raise = Vec::new();
        for (two_j, lw) in self.ladder_twice().zip(weights.log_sector_weights()) {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            for (k, lp) in ln_level_probabilities(two_j, x).into_iter().enumerate() {
                let k = k as u64;
                // (J+m)(J-m+1) and (J-m)(J+m+1) with J+m = k
                let down = (k * (two_j - k + 1)) as f64;
                let up = ((two_j - k) * (k + 1)) as f64;
                if down > 0.0 {
                    lower.push(lw + lp + down.ln());
                }
                if up > 0.0 {
                    raise.push(lw + lp + up.ln());
                }
            }
        }
        (log_sum_exp(lower), log_sum_exp(raise))
    }

    fn apparent_from_moments(&self, ln_jpjm: f64, ln_jmjp: f64) -> Result<f64> {
        if ln_jpjm == f64::NEG_INFINITY || ln_jmjp == f64::NEG_INFINITY {
            return Err(Error::DarkState {
                jpjm: ln_jpjm.exp(),
                jmjp: ln_jmjp.exp(),
            });
        }
        Ok((ln_jmjp - ln_jpjm) / self.spec().omega())
    }

    /// `ln(<J-J+>/<J+J->)/ħω` of the collective steady state.
    pub fn apparent_inverse_temperature_steady(&self, beta0: f64, beta_b: f64) -> Result<f64> {
        let (a, b) = self.ln_ladder_moments_steady(beta0, beta_b);
        self.apparent_from_moments(a, b)
    }

    /// `ħω / ln(<J-J+>/<J+J->)`; `+∞` when the ratio is one.
    pub fn apparent_temperature_steady(&self, beta0: f64, beta_b: f64) -> Result<f64> {
        Ok(1.0 / self.apparent_inverse_temperature_steady(beta0, beta_b)?)
    }

    /// Inverse apparent temperature of the Dicke-limit steady state with all
    /// local-basis coherences removed.
    pub fn apparent_inverse_temperature_dephased(&self, beta_b: f64) -> Result<f64> {
        if self.spec().n() == 1 {
            return Ok(beta_b);
        }
        let two_s = self.two_s();
        let ln_n = (self.spec().n() as f64).ln();
        let mut lower = Vec::new();
        let mut raise = Vec::new();
        for (k, lp) in self.ln_local_populations(beta_b).into_iter().enumerate() {
            let k = k as u64;
            let down = (k * (two_s - k + 1)) as f64;
            let up = ((two_s - k) * (k + 1)) as f64;
            if down > 0.0 {
                lower.push(ln_n + lp + down.ln());
            }
            if up > 0.0 {
                raise.push(ln_n + lp + up.ln());
            }
        }
        self.apparent_from_moments(log_sum_exp(lower), log_sum_exp(raise))
    }

    pub fn apparent_temperature_dephased(&self, beta_b: f64) -> Result<f64> {
        Ok(1.0 / self.apparent_inverse_temperature_dephased(beta_b)?)
    }

    /// Same quantity as [`Self::apparent_inverse_temperature_dephased`] by the
    /// level-count double sum `sum_J sum_m e^{-mx} l_J (J±m)(J∓m+1) / I_m`.
    /// That sum assumes every product state in the `m` eigenspace carries the
    /// same Dicke amplitude, which holds only for `s = 1/2`.
    pub fn apparent_inverse_temperature_dephased_by_counting(&self, beta_b: f64) -> Result<f64> {
        if self.two_s() != 1 {
            return Err(Error::Domain("the level-count route applies only to s = 1/2".into()));
        }
        let two_ns = self.two_ns();
        let ln_pi = ln_level_probabilities(two_ns, self.x(beta_b));
        let ln_counts: Vec<f64> = self.table.level_counts().values().map(ln_biguint).collect();
        let mut lower = Vec::new();
        let mut raise = Vec::new();
        for (two_j, ll) in self.ladder_twice().zip(self.table.log_multiplicities()) {
            if *ll == f64::NEG_INFINITY {
                continue;
            }
            let offset = (two_ns - two_j) / 2;
            for k in 0..=two_j {
                // level index of m = k - J on the -ns..ns ladder
                let idx = (k + offset) as usize;
                let base = ln_pi[idx] - ln_counts[idx] + ll;
                let down = (k * (two_j - k + 1)) as f64;
                let up = ((two_j - k) * (k + 1)) as f64;
                if down > 0.0 {
                    lower.push(base + down.ln());
                }
                if up > 0.0 {
                    raise.push(base + up.ln());
                }
            }
        }
        self.apparent_from_moments(log_sum_exp(lower), log_sum_exp(raise))
    }

    pub fn steady_summary(&self, beta0: f64, beta_b: f64) -> Result<SteadyStateSummary> {
        let weights = self.thermal_weights(beta0);
        let free_energy_variation = if beta_b == 0.0 {
            None
        } else {
            Some(self.free_energy_variation(beta0, beta_b, Coupling::Collective)?)
        };
        let apparent_temperature = match self.apparent_temperature_steady(beta0, beta_b) {
            Ok(t) => Some(t),
            Err(Error::DarkState { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(SteadyStateSummary {
            energy: self.steady_energy_with(&weights, beta_b),
            entropy: self.steady_entropy_with(&weights, beta_b),
            free_energy_variation,
            entropy_production: self.entropy_production(beta0, beta_b, Coupling::Collective)?,
            apparent_temperature,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const INF: f64 = f64::INFINITY;

    fn ensemble(n: u32, two_s: i64) -> Ensemble {
        Ensemble::new(EnsembleSpec::with_unit_frequency(n, HalfInt::from_twice(two_s)).unwrap()).unwrap()
    }

    /// Full spectrum of the steady state, built level by level with plain
    /// exponentials: `(energy above ground, probability, multiplicity)`.
    fn spectrum(ens: &Ensemble, x0: f64, xb: f64) -> Vec<(f64, f64, f64)> {
        let spec = ens.spec();
        let ns = spec.max_j().value();
        let z_s: f64 = (0..=spec.two_s())
            .map(|k| (-(k as f64 - spec.two_s() as f64 / 2.0) * x0).exp())
            .sum();
        let z_total = z_s.powi(spec.n() as i32);
        let mut out = Vec::new();
        for (j, l) in ens.table().multiplicities() {
            let l: f64 = l.to_string().parse().unwrap();
            let ms: Vec<f64> = (0..=j.twice()).map(|k| k as f64 - j.value()).collect();
            let zj0: f64 = ms.iter().map(|m| (-m * x0).exp()).sum();
            let zjb: f64 = ms.iter().map(|m| (-m * xb).exp()).sum();
            let pj = zj0 / z_total;
            for m in &ms {
                out.push((m + ns, pj * (-m * xb).exp() / zjb, l));
            }
        }
        out
    }

    fn direct_energy(ens: &Ensemble, x0: f64, xb: f64) -> f64 {
        spectrum(ens, x0, xb).iter().map(|(e, p, l)| e * p * l).sum()
    }

    fn direct_entropy(ens: &Ensemble, x0: f64, xb: f64) -> f64 {
        spectrum(ens, x0, xb)
            .iter()
            .filter(|(_, p, _)| *p > 0.0)
            .map(|(_, p, l)| -l * p * p.ln())
            .sum()
    }

    #[test]
    fn log_partition_examples() {
        let e = ensemble(3, 1);
        assert_eq!(e.log_partition_block(HalfInt::from_int(4), 0.0), 9f64.ln());
        let direct: f64 = (-5..=5).map(|m| (-(m as f64) * 0.3).exp()).sum::<f64>().ln();
        let ours = e.log_partition_block(HalfInt::from_int(5), 0.3);
        assert!((ours - direct).abs() / direct < 1e-13);
        let two_level = e.log_partition_block(HalfInt::HALF, 2.0);
        assert!((two_level - (2.0 * 1f64.cosh()).ln()).abs() < 1e-15);
    }

    #[test]
    fn weights_examples() {
        let w = ensemble(2, 1).thermal_weights(0.0);
        assert!((w.probability(HalfInt::from_int(1)) - 0.75).abs() < 1e-15);
        assert!((w.probability(HalfInt::ZERO) - 0.25).abs() < 1e-15);
        assert!((w.sector_weight(HalfInt::from_int(1)) - 0.75).abs() < 1e-15);
        assert!((w.sector_weight(HalfInt::ZERO) - 0.25).abs() < 1e-15);
        assert!((ensemble(4, 1).thermal_weights(1.0).normalization() - 1.0).abs() < 1e-12);
        for beta0 in [INF, -INF] {
            let w = ensemble(5, 3).thermal_weights(beta0);
            let top = HalfInt::from_twice(15);
            assert_eq!(w.probability(top), 1.0);
            assert!(w.sector_weights().filter(|(j, _)| *j != top).all(|(_, v)| v == 0.0));
        }
    }

    #[test]
    fn normalization_grid() {
        for n in 1..=8 {
            for two_s in 1..=4 {
                let e = ensemble(n, two_s);
                for x0 in [-50.0, -7.3, -1.0, -1e-8, 0.0, 0.2, 3.0, 50.0] {
                    let total = e.thermal_weights(x0).normalization();
                    assert!((total - 1.0).abs() < 1e-12, "n={n} 2s={two_s} x0={x0}: {total}");
                }
            }
        }
    }

    #[test]
    fn block_energy_examples() {
        let e = ensemble(6, 1);
        let j = HalfInt::from_int(3);
        assert_eq!(e.block_energy(j, 0.0), 0.0);
        assert_eq!(e.block_energy(j, INF), -3.0);
        let (num, den) = (-3..=3).fold((0.0, 0.0), |(a, b), m| {
            let w = (-(m as f64)).exp();
            (a + m as f64 * w, b + w)
        });
        assert!((e.block_energy(j, 1.0) - num / den).abs() < 1e-12);
        let eps = 1e-4;
        let slope = (e.block_energy(j, eps) - e.block_energy(j, -eps)) / (2.0 * eps);
        assert!((slope + 4.0).abs() < 1e-7);
    }

    #[test]
    fn steady_energy_matches_spectrum() {
        for (n, two_s) in [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2), (2, 3), (5, 1)] {
            let e = ensemble(n, two_s);
            for x0 in [-2.0, 0.0, 0.3, 2.0] {
                for xb in [-3.0, -0.5, 0.0, 1.0, 3.0] {
                    let ours = e.steady_energy(x0, xb);
                    assert!((ours - direct_energy(&e, x0, xb)).abs() < 1e-12);
                    let s = e.steady_entropy(x0, xb);
                    assert!((s - direct_entropy(&e, x0, xb)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn steady_energy_identities() {
        let e = ensemble(4, 3);
        for xb in [-2.0, -0.1, 0.7, 4.0] {
            assert!((e.steady_energy(xb, xb) - e.thermal_energy(xb)).abs() < 1e-12);
            assert!((e.steady_energy(INF, xb) - e.dicke_energy(xb)).abs() < 1e-12);
            assert!((e.steady_energy(-INF, xb) - e.dicke_energy(xb)).abs() < 1e-12);
            assert!((e.steady_entropy(xb, xb) - e.thermal_entropy(xb)).abs() < 1e-12);
            assert!((e.steady_entropy(INF, xb) - e.dicke_entropy(xb)).abs() < 1e-12);
        }
        for x0 in [-INF, -3.0, 0.0, 1.5, INF] {
            assert!((e.steady_energy(x0, 0.0) - 6.0).abs() < 1e-12);
        }
        assert_eq!(ensemble(100, 1).thermal_energy(0.0), 50.0);
        assert_eq!(e.dicke_energy(0.0), 6.0);
    }

    #[test]
    fn entropy_limits() {
        let e = ensemble(9, 1);
        assert!((e.thermal_entropy(0.0) - 9.0 * 2f64.ln()).abs() < 1e-14);
        assert!((e.dicke_entropy(0.0) - 10f64.ln()).abs() < 1e-14);
        assert!((e.steady_entropy(INF, 0.0) - 10f64.ln()).abs() < 1e-14);
        // curvature -x^2 ns(ns+1)/6
        let x = 1e-3;
        let curv = (e.dicke_entropy(x) - 10f64.ln()) / (x * x);
        assert!((curv + 4.5 * 5.5 / 6.0).abs() < 1e-4, "{curv}");
    }

    #[test]
    fn slopes_at_origin() {
        for two_s in [1, 3, 9] {
            let e = ensemble(4, two_s);
            let ns = e.spec().max_j().value();
            let s = e.spec().spin().value();
            let h = 1e-4;
            let d_plus = (e.dicke_energy(h) - e.dicke_energy(-h)) / (2.0 * h) / ns;
            let d_th = (e.thermal_energy(h) - e.thermal_energy(-h)) / (2.0 * h) / ns;
            assert!((d_plus + (ns + 1.0) / 3.0).abs() / ((ns + 1.0) / 3.0) < 1e-6);
            assert!((d_th + (s + 1.0) / 3.0).abs() / ((s + 1.0) / 3.0) < 1e-6);
        }
    }

    #[test]
    fn derivative_examples() {
        let e = ensemble(4, 1);
        assert_eq!(e.energy_derivative_sign(0.0, 1.0), Sign::Zero);
        assert_eq!(e.energy_derivative_sign(1.0, 0.0), Sign::Zero);
        assert_eq!(e.energy_derivative_sign(0.5, 1.0), Sign::Negative);
        assert_eq!(e.energy_derivative_sign(-0.5, 1.0), Sign::Positive);
        assert_eq!(e.energy_derivative(INF, 1.0), 0.0);
        let (b0, bb, h) = (0.7, 1.3, 1e-4);
        let fd = (e.steady_energy(b0 + h, bb) - e.steady_energy(b0 - h, bb)) / (2.0 * h);
        let exact = e.energy_derivative(b0, bb);
        assert!((fd - exact).abs() / exact.abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn free_energy_examples() {
        let e = ensemble(6, 3);
        assert!(e.free_energy_variation(1.0, 0.0, Coupling::Collective).is_err());
        assert!(e.free_energy_variation(1.2, 1.2, Coupling::Collective).unwrap().abs() < 1e-12);
        assert!(e.entropy_production(1.2, 1.2, Coupling::Collective).unwrap().abs() < 1e-12);
        let coh = e.free_energy_variation(20.0, 10.0, Coupling::Collective).unwrap();
        let inc = e.free_energy_variation(20.0, 10.0, Coupling::Independent).unwrap();
        assert!((coh / inc * 6.0 - 1.0).abs() < 0.05, "{}", coh / inc);
    }

    #[test]
    fn mirror_relation() {
        let e = ensemble(5, 1);
        for xb in [0.3, 1.0, 4.0] {
            let plus = e.entropy_production(INF, xb, Coupling::Collective).unwrap();
            let minus = e.entropy_production(INF, -xb, Coupling::Collective).unwrap();
            assert!((minus - plus - 2.0 * xb * 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_half_local_populations_match_counting() {
        // p_Loc(m1) = Z^-1 sum_m K_{m-m1} e^{-m x} / I_m with exact counts
        for n in [2u32, 3, 5, 8] {
            let e = ensemble(n, 1);
            let counts = e.table().level_counts();
            let neighbors = e.table().neighbor_counts().unwrap();
            for x in [-2.0, 0.0, 0.4, 3.0] {
                let z: f64 = counts.keys().map(|m| (-m.value() * x).exp()).sum();
                let pops = e.local_populations_dicke(x);
                for (m1, p) in pops {
                    let mut expect = 0.0;
                    for (m, i_m) in &counts {
                        if let Some(k) = neighbors.get(&(*m - m1)) {
                            let ratio = ln_biguint(k) - ln_biguint(i_m);
                            expect += (-m.value() * x).exp() / z * ratio.exp();
                        }
                    }
                    assert!((p - expect).abs() < 1e-13, "n={n} x={x} m1={m1}");
                }
            }
        }
    }

    #[test]
    fn local_populations_normalized_and_nonthermal() {
        for (n, two_s) in [(2, 2), (3, 2), (2, 3), (4, 4)] {
            let e = ensemble(n, two_s);
            for x in [-1.0, 0.5, 2.0] {
                let pops: Vec<f64> = e.local_populations_dicke(x).into_iter().map(|p| p.1).collect();
                assert!((pops.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let worst = (1..pops.len() - 1)
                    .map(|i| (pops[i + 1] * pops[i - 1] - pops[i] * pops[i]).abs())
                    .fold(0.0, f64::max);
                assert!(worst > 1e-10, "n={n} 2s={two_s} x={x}");
            }
        }
        // two spin-1 at large x: p(1)p(-1) ~ e^{-2x}/6, p(0)^2 ~ e^{-2x}/4
        let pops: Vec<f64> = ensemble(2, 2)
            .local_populations_dicke(12.0)
            .into_iter()
            .map(|p| p.1)
            .collect();
        let ratio = pops[0] * pops[2] / (pops[1] * pops[1]);
        assert!((ratio - 4.0 / 6.0).abs() < 1e-3, "{ratio}");
    }

    #[test]
    fn local_temperature() {
        let e = ensemble(4, 1);
        for xb in [-2.0, 0.5, 3.0] {
            assert!((e.local_inverse_temperature(xb, xb).unwrap() - xb).abs() < 1e-12);
        }
        assert!(ensemble(3, 2).local_inverse_temperature(INF, 1.0).is_err());
        let hot = ensemble(100, 1).local_inverse_temperature(INF, 0.01).unwrap();
        assert!((hot / (0.01 * 102.0 / 3.0) - 1.0).abs() < 0.02, "{hot}");
    }

    #[test]
    fn apparent_temperature_examples() {
        let e = ensemble(3, 1);
        let t = e.apparent_temperature_steady(1.0, 0.5).unwrap();
        assert!((t - 2.0).abs() < 1e-10);
        assert_eq!(e.apparent_temperature_steady(1.0, 0.0).unwrap(), INF);
        // ground state of a single sector is dark
        assert!(matches!(
            e.apparent_temperature_steady(INF, INF),
            Err(Error::DarkState { .. })
        ));
        let d = ensemble(2, 1);
        assert_eq!(d.apparent_temperature_dephased(0.0).unwrap(), INF);
        let td = d.apparent_temperature_dephased(1.0).unwrap();
        assert!(td < 1.0 && td > 0.0, "{td}");
        assert_eq!(ensemble(1, 3).apparent_temperature_dephased(0.7).unwrap(), 1.0 / 0.7);
    }

    #[test]
    fn dephased_routes_agree_for_spin_half() {
        for n in [2u32, 3, 4, 7, 20] {
            let e = ensemble(n, 1);
            for xb in [-3.0, -0.4, 0.2, 1.0, 5.0] {
                let a = e.apparent_inverse_temperature_dephased(xb).unwrap();
                let b = e.apparent_inverse_temperature_dephased_by_counting(xb).unwrap();
                assert!((a - b).abs() < 1e-12, "n={n} xb={xb}: {a} vs {b}");
            }
        }
        assert!(ensemble(2, 2)
            .apparent_inverse_temperature_dephased_by_counting(1.0)
            .is_err());
    }

    #[test]
    fn saturation() {
        let e50 = ensemble(50, 1);
        let e100 = ensemble(100, 1);
        let rel = (e100.dicke_energy(2.0) - e50.dicke_energy(2.0)).abs() / e50.dicke_energy(2.0);
        assert!(rel < 0.01);
        assert_eq!(e100.thermal_energy(2.0) / e50.thermal_energy(2.0), 2.0);
    }

    #[test]
    fn summary_fields() {
        let e = ensemble(3, 1);
        let s = e.steady_summary(2.0, 1.0).unwrap();
        assert!(s.entropy >= 0.0 && s.entropy_production >= 0.0);
        assert!((s.apparent_temperature.unwrap() - 1.0).abs() < 1e-10);
        assert!(e.steady_summary(2.0, 0.0).unwrap().free_energy_variation.is_none());
    }

    fn small_ensemble() -> impl Strategy<Value = Ensemble> {
        (1u32..=6, 1i64..=4).prop_map(|(n, two_s)| ensemble(n, two_s))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn weights_are_normalized(e in small_ensemble(), x0 in -50.0f64..50.0) {
            prop_assert!((e.thermal_weights(x0).normalization() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn even_in_initial_temperature(e in small_ensemble(), x0 in -20.0f64..20.0, xb in -5.0f64..5.0) {
            prop_assert!((e.steady_energy(x0, xb) - e.steady_energy(-x0, xb)).abs() < 1e-12);
            prop_assert!((e.steady_entropy(x0, xb) - e.steady_entropy(-x0, xb)).abs() < 1e-12);
        }

        #[test]
        fn energy_ordering(e in (2u32..=6, 1i64..=4).prop_map(|(n, t)| ensemble(n, t)),
                           xb in 0.05f64..5.0, frac in 0.0f64..0.95, sgn in prop::bool::ANY,
                           neg_bath in prop::bool::ANY) {
            let xb = if neg_bath { -xb } else { xb };
            let x0_in = frac * xb.abs() * if sgn { 1.0 } else { -1.0 };
            let x0_out = (xb.abs() / (frac + 0.05)) * if sgn { 1.0 } else { -1.0 };
            let th = e.thermal_energy(xb);
            // |β₀| < |β_B| keeps the state closer to infinite temperature
            if xb > 0.0 {
                prop_assert!(e.steady_energy(x0_in, xb) > th);
                prop_assert!(e.steady_energy(x0_out, xb) < th);
            } else {
                prop_assert!(e.steady_energy(x0_in, xb) < th);
                prop_assert!(e.steady_energy(x0_out, xb) > th);
            }
        }

        #[test]
        fn derivative_sign_rule(e in (2u32..=6, 1i64..=4).prop_map(|(n, t)| ensemble(n, t)),
                                x0 in -6.0f64..6.0, xb in -6.0f64..6.0) {
            prop_assume!(x0.abs() > 1e-3 && xb.abs() > 1e-3);
            let expect = if x0 * xb > 0.0 { Sign::Negative } else { Sign::Positive };
            prop_assert_eq!(e.energy_derivative_sign(x0, xb), expect);
        }

        #[test]
        fn entropy_monotone_in_initial_temperature(e in (2u32..=6, 1i64..=3).prop_map(|(n, t)| ensemble(n, t)),
                                                   x0 in 0.05f64..8.0, xb in -4.0f64..4.0) {
            let h = 1e-3;
            prop_assert!(e.steady_entropy(x0 + h, xb) < e.steady_entropy(x0, xb));
            prop_assert!(e.steady_entropy(-x0 - h, xb) < e.steady_entropy(-x0, xb));
        }

        #[test]
        fn entropy_bounds(e in (2u32..=6, 1i64..=4).prop_map(|(n, t)| ensemble(n, t)),
                          x0 in -8.0f64..8.0, xb in -8.0f64..8.0) {
            prop_assume!((x0.abs() - xb.abs()).abs() > 1e-2);
            let s = e.steady_entropy(x0, xb);
            let th = e.thermal_entropy(xb);
            if x0.abs() > xb.abs() {
                prop_assert!(s < th);
            } else {
                prop_assert!(s > th);
            }
            let th0 = e.thermal_entropy(x0);
            prop_assert!((s - th0).abs() < (th - th0).abs() || (th - th0).abs() < 1e-12);
        }

        #[test]
        fn free_energy_mitigation(e in (2u32..=6, 1i64..=4).prop_map(|(n, t)| ensemble(n, t)),
                                  x0 in -6.0f64..6.0, xb in -6.0f64..6.0) {
            prop_assume!((x0.abs() - xb.abs()).abs() > 1e-2 && xb.abs() > 1e-2);
            let coh = e.free_energy_variation(x0, xb, Coupling::Collective).unwrap();
            let inc = e.free_energy_variation(x0, xb, Coupling::Independent).unwrap();
            prop_assert!(coh.abs() < inc.abs());
        }

        #[test]
        fn production_nonnegative_for_positive_bath(e in small_ensemble(), x0 in -10.0f64..10.0, xb in 0.0f64..10.0) {
            prop_assert!(e.entropy_production(x0, xb, Coupling::Collective).unwrap() >= -1e-12);
            prop_assert!(e.entropy_production(x0, xb, Coupling::Independent).unwrap() >= -1e-12);
        }

        #[test]
        fn apparent_temperature_is_bath_temperature(e in small_ensemble(), x0 in -10.0f64..10.0, xb in -10.0f64..10.0) {
            let b = e.apparent_inverse_temperature_steady(x0, xb).unwrap();
            prop_assert!((b - xb).abs() < 1e-10);
        }

        #[test]
        fn dephased_state_is_colder(e in (2u32..=6, 1i64..=3).prop_map(|(n, t)| ensemble(n, t)), xb in 0.05f64..6.0) {
            let beta_d = e.apparent_inverse_temperature_dephased(xb).unwrap();
            prop_assert!(beta_d > xb);
            let beta_neg = e.apparent_inverse_temperature_dephased(-xb).unwrap();
            prop_assert!(beta_neg < -xb);
        }
    }
}
