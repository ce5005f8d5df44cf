//! Brute-force Lindblad evolution in the `(2s+1)^n` local product basis.
//!
//! This is the ground truth against which the closed forms are checked, so it
//! deliberately shares no physics with [`crate::equilibrium`] beyond the
//! operator definitions. Product-basis index digits are the local levels
//! `k = m + s` of spins `0..n`, spin 0 most significant. Everything runs in the
//! frame rotating with the bare Hamiltonian `ħωJ_z`, which commutes with the
//! dissipator and leaves populations untouched.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::angular_momentum::{EnsembleSpec, HalfInt};
use crate::dynamics::DissipatorRates;
use crate::equilibrium::{Coupling, Ensemble, SteadyStateSummary};
use crate::error::{Error, Result};
use crate::numerics::ln_level_probabilities;

/// Default cap on the Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A sparse operator stored as `(row, col, value)` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOp {
    dim: usize,
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    fn from_map(dim: usize, map: HashMap<(usize, usize), Complex64>) -> Self {
        let mut entries: Vec<_> = map
            .into_iter()
            .filter(|(_, v)| v.norm() > 0.0)
            .map(|((r, c), v)| (r, c, v))
            .collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        SparseOp { dim, entries }
    }

    pub fn zeros(dim: usize) -> Self {
        SparseOp {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, Complex64)] {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        let mut entries: Vec<_> = self.entries.iter().map(|&(r, c, v)| (c, r, v.conj())).collect();
        entries.sort_by_key(|&(r, c, _)| (r, c));
        SparseOp { dim: self.dim, entries }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        SparseOp {
            dim: self.dim,
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * factor)).collect(),
        }
    }

    pub fn add(&self, other: &SparseOp) -> Self {
        let mut map = HashMap::new();
        for &(r, c, v) in self.entries.iter().chain(&other.entries) {
            *map.entry((r, c)).or_insert(ZERO) += v;
        }
        Self::from_map(self.dim, map)
    }

    /// `self * other`.
    pub fn compose(&self, other: &SparseOp) -> Self {
        let mut by_row: HashMap<usize, Vec<(usize, Complex64)>> = HashMap::new();
        for &(r, c, v) in &other.entries {
            by_row.entry(r).or_default().push((c, v));
        }
        let mut map = HashMap::new();
        for &(r, mid, v) in &self.entries {
            if let Some(row) = by_row.get(&mid) {
                for &(c, w) in row {
                    *map.entry((r, c)).or_insert(ZERO) += v * w;
                }
            }
        }
        Self::from_map(self.dim, map)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            out[(r, c)] += v;
        }
        out
    }

    /// `self * rho`.
    pub fn apply_left(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(self.dim, rho.ncols());
        for &(r, c, v) in &self.entries {
            for col in 0..rho.ncols() {
                out[(r, col)] += v * rho[(c, col)];
            }
        }
        out
    }

    /// `x * self^†`.
    pub fn apply_right_adjoint(&self, x: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut out = DMatrix::zeros(x.nrows(), self.dim);
        for &(r, c, v) in &self.entries {
            let vc = v.conj();
            let (src, mut dst) = (x.column(c), out.column_mut(r));
            dst.axpy(vc, &src, Complex64::new(1.0, 0.0));
        }
        out
    }

    /// `Tr(self * rho)`.
    pub fn expectation(&self, rho: &DMatrix<Complex64>) -> Complex64 {
        self.entries.iter().map(|&(r, c, v)| v * rho[(c, r)]).sum()
    }
}

/// Product basis of `n` spins `s`.
#[derive(Debug, Clone)]
struct ProductBasis {
    n: usize,
    local_dim: usize,
    dim: usize,
}

impl ProductBasis {
    fn new(spec: &EnsembleSpec, max_dim: usize) -> Result<Self> {
        let dim = spec.hilbert_dim().filter(|d| *d <= max_dim).ok_or(Error::Resource {
            what: "Hilbert-space dimension",
            requested: spec.hilbert_dim().unwrap_or(usize::MAX),
            cap: max_dim,
        })?;
        Ok(ProductBasis {
            n: spec.n() as usize,
            local_dim: spec.local_dim(),
            dim,
        })
    }

    fn digit(&self, index: usize, spin: usize) -> usize {
        let stride = self.local_dim.pow((self.n - 1 - spin) as u32);
        (index / stride) % self.local_dim
    }

    fn stride(&self, spin: usize) -> usize {
        self.local_dim.pow((self.n - 1 - spin) as u32)
    }

    /// `sum_i k_i`, i.e. `m + ns`.
    fn excitation(&self, index: usize) -> usize {
        (0..self.n).map(|i| self.digit(index, i)).sum()
    }

    /// Raising operator on one spin: `j+|k> = sqrt((2s-k)(k+1)) |k+1>`.
    fn local_raising(&self, spin: usize) -> SparseOp {
        let two_s = self.local_dim - 1;
        let stride = self.stride(spin);
        let entries = (0..self.dim)
            .filter_map(|idx| {
                let k = self.digit(idx, spin);
                (k < two_s).then(|| {
                    let amp = (((two_s - k) * (k + 1)) as f64).sqrt();
                    (idx + stride, idx, Complex64::new(amp, 0.0))
                })
            })
            .collect();
        SparseOp { dim: self.dim, entries }
    }

    fn local_z(&self, spin: usize) -> SparseOp {
        let s = (self.local_dim - 1) as f64 / 2.0;
        let entries = (0..self.dim)
            .map(|idx| (idx, idx, Complex64::new(self.digit(idx, spin) as f64 - s, 0.0)))
            .filter(|e| e.2.norm() > 0.0)
            .collect();
        SparseOp { dim: self.dim, entries }
    }
}

/// Collective operators in the product basis.
#[derive(Debug, Clone)]
pub struct CollectiveOps {
    pub j_plus: SparseOp,
    pub j_minus: SparseOp,
    pub j_z: SparseOp,
}

pub fn build_collective_ops(spec: &EnsembleSpec) -> Result<CollectiveOps> {
    build_collective_ops_capped(spec, DEFAULT_MAX_DIM)
}

pub fn build_collective_ops_capped(spec: &EnsembleSpec, max_dim: usize) -> Result<CollectiveOps> {
    let basis = ProductBasis::new(spec, max_dim)?;
    let mut j_plus = SparseOp::zeros(basis.dim);
    let mut j_z = SparseOp::zeros(basis.dim);
    for spin in 0..basis.n {
        j_plus = j_plus.add(&basis.local_raising(spin));
        j_z = j_z.add(&basis.local_z(spin));
    }
    let j_minus = j_plus.adjoint();
    Ok(CollectiveOps { j_plus, j_minus, j_z })
}

/// Per-spin detunings and pairwise exchange couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    detunings: Vec<f64>,
    couplings: DMatrix<f64>,
}

impl NoiseSpec {
    pub fn new(detunings: Vec<f64>, couplings: DMatrix<f64>) -> Result<Self> {
        let n = detunings.len();
        if couplings.nrows() != n || couplings.ncols() != n {
            return Err(Error::Domain(format!("coupling matrix must be {n}x{n}")));
        }
        for k in 0..n {
            if couplings[(k, k)] != 0.0 {
                return Err(Error::Domain("couplings must vanish on the diagonal".into()));
            }
            for l in 0..k {
                if couplings[(k, l)] != couplings[(l, k)] {
                    return Err(Error::Domain(format!("couplings not symmetric at ({k}, {l})")));
                }
            }
        }
        Ok(NoiseSpec { detunings, couplings })
    }

    /// Linearly spread detunings `δ_k = delta (k - (n-1)/2)` and a uniform coupling.
    pub fn graded(n: usize, delta: f64, coupling: f64) -> Self {
        let mid = (n as f64 - 1.0) / 2.0;
        let detunings = (0..n).map(|k| delta * (k as f64 - mid)).collect();
        let couplings = DMatrix::from_fn(n, n, |k, l| if k == l { 0.0 } else { coupling });
        NoiseSpec { detunings, couplings }
    }

    pub fn none(n: usize) -> Self {
        NoiseSpec {
            detunings: vec![0.0; n],
            couplings: DMatrix::zeros(n, n),
        }
    }

    pub fn detunings(&self) -> &[f64] {
        &self.detunings
    }

    pub fn coupling(&self, k: usize, l: usize) -> f64 {
        self.couplings[(k, l)]
    }

    /// Largest `|δ_k|` or `|Ω_kl|`.
    pub fn magnitude(&self) -> f64 {
        self.detunings
            .iter()
            .chain(self.couplings.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which jump operators act.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissipation {
    pub coupling: Coupling,
    pub rates: DissipatorRates,
    pub noise: Option<NoiseSpec>,
}

/// `dρ/dt = Aρ + (Aρ)^† + sum_c r_c L_c ρ L_c^†` with `A = -iH - ½ sum_c r_c L_c^† L_c`.
#[derive(Debug, Clone)]
pub struct LindbladGenerator {
    drift: SparseOp,
    jumps: Vec<(SparseOp, f64)>,
    stiffness: f64,
}

impl LindbladGenerator {
    pub fn new(spec: &EnsembleSpec, dissipation: &Dissipation, max_dim: usize) -> Result<Self> {
        let basis = ProductBasis::new(spec, max_dim)?;
        let rates = dissipation.rates;
        let mut jumps = Vec::new();
        match dissipation.coupling {
            Coupling::Collective => {
                let ops = build_collective_ops_capped(spec, max_dim)?;
                jumps.push((ops.j_minus, rates.down));
                jumps.push((ops.j_plus, rates.up));
            }
            Coupling::Independent => {
                for spin in 0..basis.n {
                    let up = basis.local_raising(spin);
                    jumps.push((up.adjoint(), rates.down));
                    jumps.push((up, rates.up));
                }
            }
        }
        jumps.retain(|(_, r)| *r > 0.0);
        let mut drift = SparseOp::zeros(basis.dim);
        for (op, rate) in &jumps {
            drift = drift.add(&op.adjoint().compose(op).scale(Complex64::new(-0.5 * rate, 0.0)));
        }
        let mut stiffness = 0.0;
        let ns1 = spec.max_j().value() + 1.0;
        stiffness += rates.scale() * ns1 * ns1;
        if let Some(noise) = &dissipation.noise {
            if noise.detunings.len() != basis.n {
                return Err(Error::Domain(format!(
                    "noise has {} detunings for {} spins",
                    noise.detunings.len(),
                    basis.n
                )));
            }
            let mut h = SparseOp::zeros(basis.dim);
            for k in 0..basis.n {
                if noise.detunings[k] != 0.0 {
                    h = h.add(&basis.local_z(k).scale(Complex64::new(noise.detunings[k], 0.0)));
                }
                for l in 0..k {
                    let omega = noise.couplings[(k, l)];
                    if omega != 0.0 {
                        let pk = basis.local_raising(k);
                        let pl = basis.local_raising(l);
                        let hop = pk.compose(&pl.adjoint()).add(&pk.adjoint().compose(&pl));
                        h = h.add(&hop.scale(Complex64::new(omega, 0.0)));
                    }
                }
            }
            drift = drift.add(&h.scale(Complex64::new(0.0, -1.0)));
            stiffness += noise.magnitude() * (basis.n * basis.n) as f64 * ns1;
        }
        Ok(LindbladGenerator {
            drift,
            jumps,
            stiffness,
        })
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let a_rho = self.drift.apply_left(rho);
        let mut out = &a_rho + a_rho.adjoint();
        for (op, rate) in &self.jumps {
            let left = op.apply_left(rho);
            out += op.apply_right_adjoint(&left) * Complex64::new(*rate, 0.0);
        }
        out
    }

    /// A step size safely inside the RK4 stability region.
    pub fn default_dt(&self) -> f64 {
        0.5 / self.stiffness.max(1e-12)
    }

    fn rk4(&self, rho: &DMatrix<Complex64>, dt: f64) -> DMatrix<Complex64> {
        let h = Complex64::new(dt, 0.0);
        let half = Complex64::new(0.5 * dt, 0.0);
        let k1 = self.apply(rho);
        let k2 = self.apply(&(rho + &k1 * half));
        let k3 = self.apply(&(rho + &k2 * half));
        let k4 = self.apply(&(rho + &k3 * h));
        rho + (k1 + (k2 + k3) * Complex64::new(2.0, 0.0) + k4) * (h / 6.0)
    }
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// A density matrix on the full product space.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    spec: EnsembleSpec,
    rho: DMatrix<Complex64>,
}

impl FullState {
    pub fn new(spec: EnsembleSpec, rho: DMatrix<Complex64>) -> Result<Self> {
        let dim = spec.hilbert_dim().unwrap_or(0);
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::Domain(format!("state must be {dim}x{dim}")));
        }
        let asym = max_abs(&(&rho - rho.adjoint()));
        if asym > 1e-12 {
            return Err(Error::Domain(format!("state is not Hermitian (deviation {asym:e})")));
        }
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::Domain(format!("state trace is {tr}, not 1")));
        }
        Ok(FullState { spec, rho })
    }

    /// Gibbs state of `ħωJ_z` at `β₀` (ground state at `+∞`, ceiling at `-∞`).
    pub fn thermal(spec: &EnsembleSpec, beta0: f64) -> Result<Self> {
        let basis = ProductBasis::new(spec, DEFAULT_MAX_DIM.max(spec.hilbert_dim().unwrap_or(0)))?;
        let local = ln_level_probabilities(spec.two_s() as u64, spec.omega() * beta0);
        let diag: Vec<Complex64> = (0..basis.dim)
            .map(|idx| {
                let lp: f64 = (0..basis.n).map(|i| local[basis.digit(idx, i)]).sum();
                Complex64::new(lp.exp(), 0.0)
            })
            .collect();
        Ok(FullState {
            spec: *spec,
            rho: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        })
    }

    pub fn maximally_mixed(spec: &EnsembleSpec) -> Result<Self> {
        Self::thermal(spec, 0.0)
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    /// Ground-referenced energy `ħω Tr[(J_z + ns) ρ]`.
    pub fn energy(&self) -> f64 {
        let basis = ProductBasis {
            n: self.spec.n() as usize,
            local_dim: self.spec.local_dim(),
            dim: self.dim(),
        };
        self.spec.omega()
            * (0..self.dim())
                .map(|i| self.rho[(i, i)].re * basis.excitation(i) as f64)
                .sum::<f64>()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.rho.clone().symmetric_eigenvalues().iter().copied().collect()
    }

    /// Von Neumann entropy; eigenvalues in `[-1e-9, 0)` are treated as zero.
    pub fn entropy(&self) -> Result<f64> {
        let mut total = 0.0;
        for v in self.eigenvalues() {
            if v < -1e-9 {
                return Err(Error::Consistency(format!("state has eigenvalue {v:e}")));
            }
            if v > 0.0 {
                total -= v * v.ln();
            }
        }
        Ok(total)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Removes every off-diagonal element in the local product basis.
pub fn dephase_local(state: &FullState) -> FullState {
    let diag = state.rho.diagonal();
    FullState {
        spec: state.spec,
        rho: DMatrix::from_diagonal(&diag),
    }
}

/// Reduced state of spin 0.
pub fn reduced_first_spin(state: &FullState) -> DMatrix<Complex64> {
    let d = state.spec.local_dim();
    let rest = state.dim() / d;
    DMatrix::from_fn(d, d, |a, b| {
        (0..rest).map(|r| state.rho[(a * rest + r, b * rest + r)]).sum()
    })
}

/// `(Tr sqrt(sqrt(ρ) σ sqrt(ρ)))^2`.
pub fn fidelity(rho: &DMatrix<Complex64>, sigma: &DMatrix<Complex64>) -> f64 {
    let eig = rho.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0).sqrt(), 0.0));
    let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.adjoint();
    let inner = &root * sigma * &root;
    let inner = (&inner + inner.adjoint()) * Complex64::new(0.5, 0.0);
    let tr: f64 = inner.symmetric_eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
    tr * tr
}

/// Energy, entropy and apparent temperature of a full state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub energy: f64,
    pub entropy: f64,
    pub jpjm: f64,
    pub jmjp: f64,
}

impl Observables {
    /// `None` for dark states.
    pub fn apparent_temperature(&self, omega: f64) -> Option<f64> {
        (self.jpjm > 0.0 && self.jmjp > 0.0).then(|| omega / (self.jmjp / self.jpjm).ln())
    }

    pub fn apparent_inverse_temperature(&self, omega: f64) -> Option<f64> {
        (self.jpjm > 0.0 && self.jmjp > 0.0).then(|| (self.jmjp / self.jpjm).ln() / omega)
    }
}

pub fn observables(state: &FullState, ops: &CollectiveOps) -> Result<Observables> {
    let jpjm = ops.j_plus.compose(&ops.j_minus).expectation(&state.rho).re;
    let jmjp = ops.j_minus.compose(&ops.j_plus).expectation(&state.rho).re;
    Ok(Observables {
        energy: state.energy(),
        entropy: state.entropy()?,
        jpjm: jpjm.max(0.0),
        jmjp: jmjp.max(0.0),
    })
}

/// Steady-state summary relative to the thermal state at `β₀`, all computed
/// from full-space matrices.
pub fn summary(state: &FullState, ops: &CollectiveOps, beta0: f64, beta_b: f64) -> Result<SteadyStateSummary> {
    let obs = observables(state, ops)?;
    let start = FullState::thermal(&state.spec, beta0)?;
    let de = obs.energy - start.energy();
    let ds = obs.entropy - start.entropy()?;
    Ok(SteadyStateSummary {
        energy: obs.energy,
        entropy: obs.entropy,
        free_energy_variation: (beta_b != 0.0).then(|| de - ds / beta_b),
        entropy_production: ds - beta_b * de,
        apparent_temperature: obs.apparent_temperature(state.spec.omega()),
    })
}

/// One `(J, m)` joint eigenspace of `𝒥²` and `J_z`.
#[derive(Debug, Clone)]
struct SectorBlock {
    j: HalfInt,
    level: usize,
    indices: Vec<usize>,
    vectors: DMatrix<f64>,
}

/// Orthonormal bases of all `(J, m)` eigenspaces, from diagonalizing the
/// total spin `𝒥² = J+J- + J_z² - J_z` inside each `J_z` eigenspace.
#[derive(Debug, Clone)]
pub struct SectorProjectors {
    spec: EnsembleSpec,
    blocks: Vec<SectorBlock>,
}

impl SectorProjectors {
    pub fn new(spec: &EnsembleSpec, ops: &CollectiveOps) -> Result<Self> {
        let dim = ops.j_z.dim();
        let basis = ProductBasis {
            n: spec.n() as usize,
            local_dim: spec.local_dim(),
            dim,
        };
        let two_ns = spec.max_j().twice() as usize;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); two_ns + 1];
        for idx in 0..dim {
            groups[basis.excitation(idx)].push(idx);
        }
        let mut position = vec![0usize; dim];
        for g in &groups {
            for (p, &idx) in g.iter().enumerate() {
                position[idx] = p;
            }
        }
        let lowering_first = ops.j_plus.compose(&ops.j_minus);
        let ns = spec.max_j().value();
        let mut blocks = Vec::new();
        for (level, group) in groups.iter().enumerate() {
            let m = level as f64 - ns;
            let size = group.len();
            let mut casimir = DMatrix::<f64>::from_diagonal_element(size, size, m * m - m);
            for &(r, c, v) in lowering_first.entries() {
                if basis.excitation(r) == level {
                    casimir[(position[r], position[c])] += v.re;
                }
            }
            let eig = casimir.symmetric_eigen();
            let mut by_j: HashMap<i64, Vec<usize>> = HashMap::new();
            for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
                let j = 0.5 * (-1.0 + (1.0 + 4.0 * lambda.max(0.0)).sqrt());
                let two_j = (2.0 * j).round() as i64;
                let exact = (two_j as f64 / 2.0) * (two_j as f64 / 2.0 + 1.0);
                if (lambda - exact).abs() > 1e-8 {
                    return Err(Error::Consistency(format!(
                        "total-spin eigenvalue {lambda} is not of the form J(J+1)"
                    )));
                }
                by_j.entry(two_j).or_default().push(col);
            }
            let mut keys: Vec<_> = by_j.keys().copied().collect();
            keys.sort_unstable();
            for two_j in keys {
                let cols = &by_j[&two_j];
                let vectors = DMatrix::from_fn(size, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
                blocks.push(SectorBlock {
                    j: HalfInt::from_twice(two_j),
                    level,
                    indices: group.clone(),
                    vectors,
                });
            }
        }
        Ok(SectorProjectors { spec: *spec, blocks })
    }

    /// Dimension of each `(J, m)` eigenspace, keyed by `(J, m)`.
    pub fn multiplicities(&self) -> Vec<(HalfInt, HalfInt, usize)> {
        let ns2 = self.spec.max_j().twice();
        self.blocks
            .iter()
            .map(|b| (b.j, HalfInt::from_twice(2 * b.level as i64 - ns2), b.vectors.ncols()))
            .collect()
    }

    /// `Tr(P_J ρ)` for every `J` on the ladder.
    pub fn sector_weights(&self, state: &FullState) -> Vec<(HalfInt, f64)> {
        let mut out: Vec<(HalfInt, f64)> = self.spec.j_ladder().map(|j| (j, 0.0)).collect();
        for b in &self.blocks {
            let sub = DMatrix::from_fn(b.indices.len(), b.indices.len(), |r, c| {
                state.rho[(b.indices[r], b.indices[c])].re
            });
            let w = (b.vectors.transpose() * sub * &b.vectors).trace();
            if let Some(i) = self.spec.ladder_index(b.j) {
                out[i].1 += w;
            }
        }
        out
    }

    /// `sum_J p_J(β₀) sum_i ρ^th_{J,i}(β_B)`, the predicted collective steady state.
    pub fn analytic_steady_state(&self, ensemble: &Ensemble, beta0: f64, beta_b: f64) -> FullState {
        let spec = self.spec;
        let dim = spec.hilbert_dim().expect("dimension checked at construction");
        let weights = ensemble.thermal_weights(beta0);
        let x = spec.omega() * beta_b;
        let ns2 = spec.max_j().twice();
        let mut rho = DMatrix::<Complex64>::zeros(dim, dim);
        for b in &self.blocks {
            let i = spec.ladder_index(b.j).expect("sector on ladder");
            let lp = weights.log_p()[i];
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let two_j = b.j.twice();
            let k = (2 * b.level as i64 - ns2 + two_j) / 2;
            let level_p = ln_level_probabilities(two_j as u64, x)[k as usize];
            let coeff = (lp + level_p).exp();
            let proj = &b.vectors * b.vectors.transpose();
            for (r, &gr) in b.indices.iter().enumerate() {
                for (c, &gc) in b.indices.iter().enumerate() {
                    rho[(gr, gc)] += Complex64::new(coeff * proj[(r, c)], 0.0);
                }
            }
        }
        FullState { spec, rho }
    }
}

/// Integration controls for [`steady_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyOptions {
    /// Stop once `max |dρ/dt|` drops below this.
    pub residual: f64,
    pub t_max: f64,
    pub dt: Option<f64>,
    pub max_dim: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions {
            residual: 1e-10,
            t_max: 1e4,
            dt: None,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

/// Integrates from `ρ^th(β₀)` until the Lindblad derivative is below tolerance.
pub fn steady_state(
    spec: &EnsembleSpec,
    beta0: f64,
    dissipation: &Dissipation,
    options: &SteadyOptions,
) -> Result<FullState> {
    let generator = LindbladGenerator::new(spec, dissipation, options.max_dim)?;
    let start = FullState::thermal(spec, beta0)?;
    relax(&generator, start, options)
}

/// Integrates `state` under `generator` until stationary.
pub fn relax(generator: &LindbladGenerator, state: FullState, options: &SteadyOptions) -> Result<FullState> {
    let dt = options.dt.unwrap_or_else(|| generator.default_dt());
    let check_every = 20usize;
    let mut rho = state.rho;
    let mut t = 0.0;
    let mut residual = max_abs(&generator.apply(&rho));
    while residual >= options.residual {
        if t > options.t_max {
            return Err(Error::Convergence {
                t_max: options.t_max,
                residual,
                tolerance: options.residual,
            });
        }
        for _ in 0..check_every {
            rho = generator.rk4(&rho, dt);
        }
        // keep the iterate exactly Hermitian
        rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        t += dt * check_every as f64;
        residual = max_abs(&generator.apply(&rho));
    }
    Ok(FullState { spec: state.spec, rho })
}

/// Outcome of a noisy-evolution probe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientReport {
    /// Noise-free steady energy the trajectory is compared with.
    pub target_energy: f64,
    pub band: f64,
    pub min_deviation: f64,
    /// First time the energy enters the band, if ever.
    pub entry_time: Option<f64>,
    /// First time after entry the energy leaves the band, if before `t_probe`.
    pub exit_time: Option<f64>,
    /// Time spent inside the band after the first entry.
    pub window: f64,
    pub t_probe: f64,
}

/// Evolves `ρ^th(β₀)` with the noisy collective generator up to `t_probe`
/// and tracks the distance of the energy from `target_energy`.
pub fn noisy_transient_check(
    spec: &EnsembleSpec,
    beta0: f64,
    rates: DissipatorRates,
    noise: &NoiseSpec,
    t_probe: f64,
    target_energy: f64,
    band: f64,
) -> Result<TransientReport> {
    let dissipation = Dissipation {
        coupling: Coupling::Collective,
        rates,
        noise: Some(noise.clone()),
    };
    let generator = LindbladGenerator::new(spec, &dissipation, DEFAULT_MAX_DIM)?;
    let mut state = FullState::thermal(spec, beta0)?;
    let steps = (t_probe / generator.default_dt()).ceil().max(1.0) as usize;
    let dt = t_probe / steps as f64;
    let mut min_deviation = f64::INFINITY;
    let mut entry_time = None;
    let mut exit_time = None;
    for step in 0..=steps {
        let t = step as f64 * dt;
        let dev = (state.energy() - target_energy).abs();
        min_deviation = min_deviation.min(dev);
        if dev <= band {
            entry_time.get_or_insert(t);
        } else if entry_time.is_some() && exit_time.is_none() {
            exit_time = Some(t);
        }
        if step < steps {
            state.rho = generator.rk4(&state.rho, dt);
        }
    }
    let window = match (entry_time, exit_time) {
        (Some(a), Some(b)) => b - a,
        (Some(a), None) => t_probe - a,
        _ => 0.0,
    };
    Ok(TransientReport {
        target_energy,
        band,
        min_deviation,
        entry_time,
        exit_time,
        window,
        t_probe,
    })
}
