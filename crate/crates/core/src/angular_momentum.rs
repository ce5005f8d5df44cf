//! Exact combinatorics of adding `n` spins of size `s`.
//!
//! Half-integers are carried as twice-value integers ([`HalfInt`]) so that
//! every quantum number is an exact key. Level counts `I_m` and multiplicities
//! `l_J` are arbitrary-precision integers; they are converted to floating point
//! only at use sites, through [`ln_biguint`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Default cap on `n * (2s + 1)` for building level-count tables.
pub const DEFAULT_TABLE_CAP: usize = 1_000_000;

/// A half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HalfInt(i64);

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt(0);
    pub const HALF: HalfInt = HalfInt(1);

    pub const fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    pub const fn from_int(value: i64) -> Self {
        HalfInt(2 * value)
    }

    pub const fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub const fn abs(self) -> Self {
        HalfInt(self.0.abs())
    }

    /// `2j + 1`, the dimension of a spin-`j` representation.
    pub fn multiplet_dim(self) -> i64 {
        self.0 + 1
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: Self) -> Self {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: Self) -> Self {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> Self {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for HalfInt {
    type Err = Error;

    /// Accepts `"3/2"`, `"-1/2"`, `"2"` and decimals such as `"1.5"`.
    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || Error::Domain(format!("not a half-integer: {text:?}"));
        if let Some((num, den)) = text.split_once('/') {
            let num: i64 = num.trim().parse().map_err(|_| bad())?;
            match den.trim() {
                "1" => Ok(HalfInt(2 * num)),
                "2" => Ok(HalfInt(num)),
                _ => Err(bad()),
            }
        } else {
            let value: f64 = text.parse().map_err(|_| bad())?;
            let twice = 2.0 * value;
            if !twice.is_finite() || twice.fract() != 0.0 {
                return Err(bad());
            }
            Ok(HalfInt(twice as i64))
        }
    }
}

/// `n` identical spins of size `s` with Bohr frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSpec {
    n: u32,
    two_s: u32,
    omega: f64,
}

impl EnsembleSpec {
    pub fn new(n: u32, spin: HalfInt, omega: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("ensemble needs at least one spin".into()));
        }
        if spin.twice() < 1 {
            return Err(Error::Domain(format!("spin size must be positive, got {spin}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::Domain(format!("omega must be positive and finite, got {omega}")));
        }
        let two_s = u32::try_from(spin.twice()).map_err(|_| Error::Domain(format!("spin size too large: {spin}")))?;
        Ok(EnsembleSpec { n, two_s, omega })
    }

    /// `n` spins with `ω = 1`.
    pub fn with_unit_frequency(n: u32, spin: HalfInt) -> Result<Self> {
        Self::new(n, spin, 1.0)
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn spin(&self) -> HalfInt {
        HalfInt::from_twice(self.two_s as i64)
    }

    pub fn two_s(&self) -> u32 {
        self.two_s
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Maximal total spin `ns`.
    pub fn max_j(&self) -> HalfInt {
        HalfInt::from_twice(self.n as i64 * self.two_s as i64)
    }

    /// Smallest total spin: 0 when `2ns` is even, 1/2 otherwise.
    pub fn min_j(&self) -> HalfInt {
        HalfInt::from_twice(self.max_j().twice() % 2)
    }

    /// `J_0, J_0 + 1, ..., ns`.
    pub fn j_ladder(&self) -> impl DoubleEndedIterator<Item = HalfInt> + Clone {
        let lo = self.min_j().twice();
        (0..self.ladder_len() as i64).map(move |i| HalfInt::from_twice(lo + 2 * i))
    }

    pub fn ladder_len(&self) -> usize {
        ((self.max_j().twice() - self.min_j().twice()) / 2 + 1) as usize
    }

    /// Position of `j` on the ladder.
    pub fn ladder_index(&self, j: HalfInt) -> Option<usize> {
        let lo = self.min_j().twice();
        let t = j.twice();
        if t < lo || t > self.max_j().twice() || (t - lo) % 2 != 0 {
            return None;
        }
        Some(((t - lo) / 2) as usize)
    }

    /// `2s + 1`.
    pub fn local_dim(&self) -> usize {
        self.two_s as usize + 1
    }

    /// `(2s + 1)^n`, or `None` on overflow.
    pub fn hilbert_dim(&self) -> Option<usize> {
        self.local_dim().checked_pow(self.n)
    }

    /// Same spin size with one spin removed.
    pub fn without_one_spin(&self) -> Result<Self> {
        if self.n < 2 {
            return Err(Error::Domain("cannot remove a spin from a single-spin ensemble".into()));
        }
        Ok(EnsembleSpec { n: self.n - 1, ..*self })
    }
}

/// Natural log of a big integer; `-inf` for zero.
pub fn ln_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit mantissa");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

fn convolve_counts(n: u32, two_s: u32, cap: usize) -> Result<Vec<BigUint>> {
    let requested = (n as usize).saturating_mul(two_s as usize + 1);
    if requested > cap {
        return Err(Error::Resource {
            what: "n * (2s + 1)",
            requested,
            cap,
        });
    }
    let mut counts = vec![BigUint::from(1u32)];
    for _ in 0..n {
        let mut next = vec![BigUint::zero(); counts.len() + two_s as usize];
        for (k, c) in counts.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for slot in &mut next[k..=k + two_s as usize] {
                *slot += c;
            }
        }
        counts = next;
    }
    Ok(counts)
}

/// Exact level counts and multiplicities for one `(n, s)` decomposition.
#[derive(Debug, Clone)]
pub struct MultiplicityTable {
    spec: EnsembleSpec,
    // index k <-> m = k - ns
    level_counts: Vec<BigUint>,
    // index i <-> J = J_0 + i
    multiplicities: Vec<BigUint>,
    // level counts of the (n - 1, s) ensemble, index k <-> m = k - (n-1)s
    neighbor_counts: Option<Vec<BigUint>>,
    log_multiplicities: Vec<f64>,
}

impl MultiplicityTable {
    pub fn new(spec: EnsembleSpec) -> Result<Self> {
        Self::with_cap(spec, DEFAULT_TABLE_CAP)
    }

    pub fn with_cap(spec: EnsembleSpec, cap: usize) -> Result<Self> {
        let level_counts = convolve_counts(spec.n, spec.two_s, cap)?;
        let ns2 = spec.max_j().twice();
        let at = |m2: i64| -> BigUint {
            let k = (m2 + ns2) / 2;
            level_counts.get(k as usize).cloned().unwrap_or_default()
        };
        let mut multiplicities = Vec::with_capacity(spec.ladder_len());
        for j in spec.j_ladder() {
            let upper = at(j.twice());
            let next = if j.twice() + 2 > ns2 {
                BigUint::zero()
            } else {
                at(j.twice() + 2)
            };
            if next > upper {
                return Err(Error::Consistency(format!(
                    "negative multiplicity at J = {j}: I_J = {upper}, I_(J+1) = {next}"
                )));
            }
            multiplicities.push(upper - next);
        }
        let neighbor_counts = if spec.n >= 2 {
            Some(convolve_counts(spec.n - 1, spec.two_s, cap)?)
        } else {
            None
        };
        let log_multiplicities = multiplicities.iter().map(ln_biguint).collect();
        Ok(MultiplicityTable {
            spec,
            level_counts,
            multiplicities,
            neighbor_counts,
            log_multiplicities,
        })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    /// `I_m`; zero outside `[-ns, ns]` or for `m` of the wrong parity.
    pub fn level_count(&self, m: HalfInt) -> BigUint {
        let ns2 = self.spec.max_j().twice();
        let t = m.twice();
        if t.abs() > ns2 || (t + ns2) % 2 != 0 {
            return BigUint::zero();
        }
        self.level_counts[((t + ns2) / 2) as usize].clone()
    }

    /// `I_m` as an ordered map over `m = -ns, ..., ns`.
    pub fn level_counts(&self) -> BTreeMap<HalfInt, BigUint> {
        let ns2 = self.spec.max_j().twice();
        self.level_counts
            .iter()
            .enumerate()
            .map(|(k, c)| (HalfInt::from_twice(2 * k as i64 - ns2), c.clone()))
            .collect()
    }

    /// `l_J`; zero off the ladder.
    pub fn multiplicity(&self, j: HalfInt) -> BigUint {
        self.spec
            .ladder_index(j)
            .map(|i| self.multiplicities[i].clone())
            .unwrap_or_default()
    }

    pub fn multiplicities(&self) -> BTreeMap<HalfInt, BigUint> {
        self.spec.j_ladder().zip(self.multiplicities.iter().cloned()).collect()
    }

    /// `ln l_J` in ladder order (`-inf` where `l_J = 0`).
    pub fn log_multiplicities(&self) -> &[f64] {
        &self.log_multiplicities
    }

    /// `K_m`, the level counts of the ensemble with one spin removed.
    pub fn neighbor_counts(&self) -> Result<BTreeMap<HalfInt, BigUint>> {
        let counts = self
            .neighbor_counts
            .as_ref()
            .ok_or_else(|| Error::Domain("neighbor counts need n >= 2".into()))?;
        let top = (self.spec.n as i64 - 1) * self.spec.two_s as i64;
        Ok(counts
            .iter()
            .enumerate()
            .map(|(k, c)| (HalfInt::from_twice(2 * k as i64 - top), c.clone()))
            .collect())
    }

    /// `sum_J l_J (2J + 1)`, which must equal `(2s + 1)^n`.
    pub fn collective_dimension(&self) -> BigUint {
        self.spec
            .j_ladder()
            .zip(&self.multiplicities)
            .map(|(j, l)| l * BigUint::from(j.multiplet_dim() as u64))
            .sum()
    }
}

pub fn level_counts(spec: &EnsembleSpec) -> Result<BTreeMap<HalfInt, BigUint>> {
    Ok(MultiplicityTable::new(*spec)?.level_counts())
}

pub fn multiplicities(spec: &EnsembleSpec) -> Result<BTreeMap<HalfInt, BigUint>> {
    Ok(MultiplicityTable::new(*spec)?.multiplicities())
}

pub fn neighbor_counts(spec: &EnsembleSpec) -> Result<BTreeMap<HalfInt, BigUint>> {
    spec.without_one_spin()?;
    MultiplicityTable::new(*spec)?.neighbor_counts()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: u32, two_s: i64) -> EnsembleSpec {
        EnsembleSpec::with_unit_frequency(n, HalfInt::from_twice(two_s)).unwrap()
    }

    fn big(v: u64) -> BigUint {
        BigUint::from(v)
    }

    /// Counts tuples by walking all `(2s+1)^n` of them.
    fn enumerate_counts(n: u32, two_s: i64) -> BTreeMap<i64, u64> {
        let d = (two_s + 1) as u64;
        let mut out = BTreeMap::new();
        for code in 0..d.pow(n) {
            let mut c = code;
            let mut m2 = 0i64;
            for _ in 0..n {
                m2 += 2 * (c % d) as i64 - two_s;
                c /= d;
            }
            *out.entry(m2).or_insert(0) += 1;
        }
        out
    }

    #[test]
    fn half_int_parsing() {
        assert_eq!("1/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(1));
        assert_eq!("3/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(3));
        assert_eq!("1.5".parse::<HalfInt>().unwrap(), HalfInt::from_twice(3));
        assert_eq!("2".parse::<HalfInt>().unwrap(), HalfInt::from_int(2));
        assert_eq!("-1/2".parse::<HalfInt>().unwrap(), HalfInt::from_twice(-1));
        assert!("1/3".parse::<HalfInt>().is_err());
        assert!("0.3".parse::<HalfInt>().is_err());
        assert_eq!(HalfInt::from_twice(3).to_string(), "3/2");
        assert_eq!(HalfInt::from_int(-2).to_string(), "-2");
    }

    #[test]
    fn spec_validation() {
        assert!(EnsembleSpec::new(0, HalfInt::HALF, 1.0).is_err());
        assert!(EnsembleSpec::new(2, HalfInt::ZERO, 1.0).is_err());
        assert!(EnsembleSpec::new(2, HalfInt::HALF, 0.0).is_err());
        let s = spec(3, 1);
        assert_eq!(s.min_j(), HalfInt::HALF);
        assert_eq!(s.max_j(), HalfInt::from_twice(3));
        assert_eq!(s.ladder_len(), 2);
        assert_eq!(spec(4, 1).min_j(), HalfInt::ZERO);
        assert_eq!(spec(3, 2).min_j(), HalfInt::ZERO);
    }

    #[test]
    fn two_qubits() {
        let t = MultiplicityTable::new(spec(2, 1)).unwrap();
        assert_eq!(t.level_count(HalfInt::from_int(-1)), big(1));
        assert_eq!(t.level_count(HalfInt::ZERO), big(2));
        assert_eq!(t.level_count(HalfInt::from_int(1)), big(1));
        assert_eq!(t.multiplicity(HalfInt::from_int(1)), big(1));
        assert_eq!(t.multiplicity(HalfInt::ZERO), big(1));
        let k = t.neighbor_counts().unwrap();
        assert_eq!(k.len(), 2);
        assert!(k.values().all(|v| *v == big(1)));
    }

    #[test]
    fn four_qubits() {
        let t = MultiplicityTable::new(spec(4, 1)).unwrap();
        let counts: Vec<_> = t.level_counts().into_values().collect();
        assert_eq!(counts, vec![big(1), big(4), big(6), big(4), big(1)]);
        assert_eq!(t.multiplicity(HalfInt::from_int(2)), big(1));
        assert_eq!(t.multiplicity(HalfInt::from_int(1)), big(3));
        assert_eq!(t.multiplicity(HalfInt::ZERO), big(2));
        // K_m for n=4 equals I_m for n=3, checked by enumeration
        let k = t.neighbor_counts().unwrap();
        let brute = enumerate_counts(3, 1);
        for (m, c) in &k {
            assert_eq!(*c, big(brute[&m.twice()]));
        }
        assert_eq!(k[&HalfInt::from_twice(3)], big(1));
        assert_eq!(k[&HalfInt::from_twice(1)], big(3));
    }

    #[test]
    fn three_qubits() {
        let t = MultiplicityTable::new(spec(3, 1)).unwrap();
        assert_eq!(t.multiplicity(HalfInt::from_twice(3)), big(1));
        assert_eq!(t.multiplicity(HalfInt::from_twice(1)), big(2));
    }

    #[test]
    fn spin_one_pair_neighbors() {
        let k = neighbor_counts(&spec(2, 2)).unwrap();
        assert_eq!(k.len(), 3);
        assert!(k.values().all(|v| *v == big(1)));
        assert!(neighbor_counts(&spec(1, 2)).is_err());
    }

    #[test]
    fn convolution_matches_enumeration() {
        for (n, two_s) in [(3u32, 2i64), (4, 3), (5, 1), (3, 4), (2, 5)] {
            let t = MultiplicityTable::new(spec(n, two_s)).unwrap();
            let brute = enumerate_counts(n, two_s);
            let ours = t.level_counts();
            assert_eq!(ours.len(), brute.len());
            for (m, c) in ours {
                assert_eq!(c, big(brute[&m.twice()]), "n={n} 2s={two_s} m={m}");
            }
        }
        // n=3, s=1: 27 tuples, I_0 = 7
        let t = MultiplicityTable::new(spec(3, 2)).unwrap();
        assert_eq!(t.level_count(HalfInt::ZERO), big(7));
    }

    #[test]
    fn dimension_identity_small_grid() {
        for n in 1..=8u32 {
            for two_s in 1..=4i64 {
                let t = MultiplicityTable::new(spec(n, two_s)).unwrap();
                let expect = BigUint::from(two_s as u64 + 1).pow(n);
                assert_eq!(t.collective_dimension(), expect);
                assert_eq!(t.multiplicity(t.spec().max_j()), big(1));
                if n >= 2 {
                    let below = t.spec().max_j() - HalfInt::from_int(1);
                    assert_eq!(t.multiplicity(below), big(n as u64 - 1));
                }
            }
        }
    }

    #[test]
    fn spin_half_closed_form() {
        fn fact(k: u64) -> BigUint {
            (1..=k).map(BigUint::from).product()
        }
        for n in (2..=20u64).step_by(2) {
            let t = MultiplicityTable::new(spec(n as u32, 1)).unwrap();
            for j in 0..=n / 2 {
                let expect = BigUint::from(2 * j + 1) * fact(n) / (fact(n / 2 + j + 1) * fact(n / 2 - j));
                assert_eq!(t.multiplicity(HalfInt::from_int(j as i64)), expect);
            }
        }
    }

    #[test]
    fn top_level_counts_for_integer_spins() {
        for two_s in [2i64, 3, 4] {
            for n in 2..=6u32 {
                let t = MultiplicityTable::new(spec(n, two_s)).unwrap();
                let top = t.spec().max_j();
                let one = HalfInt::from_int(1);
                let i0 = t.level_count(top);
                let i1 = t.level_count(top - one);
                let i2 = t.level_count(top - one - one);
                assert_eq!(i0, big(1));
                assert_eq!(i1, big(n as u64));
                assert_eq!(i2, big((n * (n + 1) / 2) as u64));
                assert_ne!(&i0 * &i2, &i1 * &i1);
            }
        }
    }

    #[test]
    fn large_ensemble_is_exact() {
        let t = MultiplicityTable::new(spec(200, 1)).unwrap();
        // I_0 = C(200, 100) has 59 decimal digits
        assert_eq!(t.level_count(HalfInt::ZERO).to_string().len(), 59);
        let ln = ln_biguint(&t.level_count(HalfInt::ZERO));
        assert!((ln - 135.753_236_081_278_5).abs() < 1e-10, "{ln}");
    }

    #[test]
    fn table_cap() {
        let err = MultiplicityTable::with_cap(spec(100, 1), 50).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
    }

    #[test]
    fn ln_of_huge_integer() {
        let x = BigUint::from(3u32).pow(2000);
        let expect = 2000.0 * 3f64.ln();
        assert!((ln_biguint(&x) - expect).abs() / expect < 1e-14);
    }
}
