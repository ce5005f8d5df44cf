//! Cancellation-free scalar kernels for spin-`J` Boltzmann sums.
//!
//! Every function takes the dimensionless inverse temperature `x = ħωβ` and a
//! multiplet size `two_j = 2J`. Each closed form is `0/0` at `x = 0` and
//! overflows for large `|x|`, so the kernels switch between a Taylor series
//! near the origin and an `expm1`-based form elsewhere. `x = ±∞` is accepted
//! wherever the limit is finite.

/// Below this `|y|` the series branches are used.
const SERIES_CUTOFF: f64 = 1e-2;

/// `1/expm1(y) - 1/y`, the regular part of the Bose factor.
pub fn bose_offset(y: f64) -> f64 {
    if y.abs() < SERIES_CUTOFF {
        let y2 = y * y;
        -0.5 + y / 12.0 * (1.0 - y2 / 60.0 * (1.0 - y2 / 42.0))
    } else {
        1.0 / y.exp_m1() - 1.0 / y
    }
}

/// Derivative of [`bose_offset`]: `1/y^2 - 1/(4 sinh^2(y/2))`.
fn bose_offset_slope(y: f64) -> f64 {
    if y.abs() < SERIES_CUTOFF {
        let y2 = y * y;
        1.0 / 12.0 - y2 / 240.0 + y2 * y2 / 6048.0
    } else {
        let sh = (0.5 * y).sinh();
        1.0 / (y * y) - 0.25 / (sh * sh)
    }
}

/// `ln(sinh(y/2) / (y/2))`, even in `y`.
fn log_sinhc(y: f64) -> f64 {
    let a = y.abs();
    if a < 1e-3 {
        let a2 = a * a;
        a2 / 24.0 - a2 * a2 / 2880.0 + a2 * a2 * a2 / 181_440.0
    } else {
        0.5 * a + (-(-a).exp_m1()).ln() - a.ln()
    }
}

/// `y/expm1(y) - ln((1 - e^{-y})/y)`, even in `y`; the entropy kernel.
fn entropy_kernel(y: f64) -> f64 {
    let a = y.abs();
    if a < SERIES_CUTOFF {
        let a2 = a * a;
        1.0 + a2 / 24.0 - a2 * a2 / 960.0
    } else {
        a / a.exp_m1() - (-(-a).exp_m1()).ln() + a.ln()
    }
}

/// `<m> + J` in the spin-`J` Gibbs state: the mean excitation above the
/// ground level `m = -J`. Lies in `[0, 2J]`.
pub fn mean_excitation(two_j: u64, x: f64) -> f64 {
    let dim = two_j as f64 + 1.0;
    if x.abs() < SERIES_CUTOFF {
        bose_offset(x) - dim * bose_offset(dim * x)
    } else {
        1.0 / x.exp_m1() - dim / (dim * x).exp_m1()
    }
}

/// `<m>` in the spin-`J` Gibbs state with weights `e^{-m x}`.
pub fn mean_projection(two_j: u64, x: f64) -> f64 {
    mean_excitation(two_j, x) - two_j as f64 / 2.0
}

/// Variance of `m` in the spin-`J` Gibbs state, equal to `-d<m>/dx`.
pub fn projection_variance(two_j: u64, x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    let dim = two_j as f64 + 1.0;
    if x.abs() < SERIES_CUTOFF {
        dim * dim * bose_offset_slope(dim * x) - bose_offset_slope(x)
    } else {
        let outer = (0.5 * x).sinh();
        let inner = (0.5 * dim * x).sinh();
        0.25 / (outer * outer) - 0.25 * dim * dim / (inner * inner)
    }
}

/// `ln Z_J(x)` with `Z_J = sum_m e^{-m x}`. Finite `x` only.
pub fn ln_partition(two_j: u64, x: f64) -> f64 {
    let dim = two_j as f64 + 1.0;
    dim.ln() + log_sinhc(dim * x) - log_sinhc(x)
}

/// `ln Z_J(x) - J|x|`, the log partition function referenced to the ground
/// level. Finite for `x = ±∞` (where it is 0).
pub fn ln_partition_shifted(two_j: u64, x: f64) -> f64 {
    let a = x.abs();
    let dim = two_j as f64 + 1.0;
    if a < 1e-3 {
        ln_partition(two_j, a) - 0.5 * two_j as f64 * a
    } else {
        (-(-dim * a).exp_m1()).ln() - (-(-a).exp_m1()).ln()
    }
}

/// Von Neumann entropy of the spin-`J` Gibbs state.
pub fn block_entropy(two_j: u64, x: f64) -> f64 {
    if x.is_infinite() || two_j == 0 {
        return 0.0;
    }
    let dim = two_j as f64 + 1.0;
    let s = dim.ln() + entropy_kernel(x) - entropy_kernel(dim * x);
    s.max(0.0)
}

/// Log Gibbs probabilities of the levels `m = -J, ..., J` (in that order).
pub fn ln_level_probabilities(two_j: u64, x: f64) -> Vec<f64> {
    let shift = ln_partition_shifted(two_j, x);
    let a = x.abs();
    (0..=two_j)
        .map(|k| {
            // excitation count measured from the most populated level
            let steps = if x >= 0.0 { k } else { two_j - k };
            if steps == 0 {
                -shift
            } else {
                -(steps as f64) * a - shift
            }
        })
        .collect()
}

/// `ln(sum_i e^{v_i})`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let top = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    if top == f64::INFINITY {
        return top;
    }
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

/// `ln(k!)` for `k = 0..=max`, accumulated as sums of logs.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=max {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn direct(two_j: u64, x: f64) -> (f64, f64, f64, f64) {
        let ms: Vec<f64> = (0..=two_j).map(|k| k as f64 - two_j as f64 / 2.0).collect();
        let ws: Vec<f64> = ms.iter().map(|m| (-m * x).exp()).collect();
        let z: f64 = ws.iter().sum();
        let mean: f64 = ms.iter().zip(&ws).map(|(m, w)| m * w).sum::<f64>() / z;
        let var: f64 = ms.iter().zip(&ws).map(|(m, w)| (m - mean).powi(2) * w).sum::<f64>() / z;
        let ent: f64 = ws
            .iter()
            .map(|w| {
                let p = w / z;
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            })
            .sum();
        (z.ln(), mean, var, ent)
    }

    #[test]
    fn zero_temperature_limits() {
        assert_eq!(ln_partition(6, 0.0), 7f64.ln());
        assert!(mean_projection(6, 0.0).abs() < 1e-15);
        assert_eq!(mean_projection(6, f64::INFINITY), -3.0);
        assert_eq!(mean_projection(6, f64::NEG_INFINITY), 3.0);
        assert_eq!(ln_partition_shifted(6, f64::INFINITY), 0.0);
        assert_eq!(block_entropy(6, f64::INFINITY), 0.0);
        assert!((block_entropy(6, 0.0) - 7f64.ln()).abs() < 1e-15);
        assert!((projection_variance(6, 0.0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_level_partition() {
        let expect = (2.0 * 1f64.cosh()).ln();
        assert!((ln_partition(1, 2.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn spin_five_direct_sum() {
        let (lz, mean, var, ent) = direct(10, 0.3);
        assert!((ln_partition(10, 0.3) - lz).abs() / lz < 1e-13);
        assert!((mean_projection(10, 0.3) - mean).abs() < 1e-12);
        assert!((projection_variance(10, 0.3) - var).abs() < 1e-12);
        assert!((block_entropy(10, 0.3) - ent).abs() < 1e-12);
    }

    #[test]
    fn spin_three_mean_at_unit_x() {
        let (_, mean, _, _) = direct(6, 1.0);
        assert!((mean_projection(6, 1.0) - mean).abs() < 1e-12);
    }

    #[test]
    fn series_branches_are_continuous() {
        for two_j in [1u64, 2, 5, 40] {
            for edge in [SERIES_CUTOFF, 1e-3] {
                for sign in [1.0, -1.0] {
                    let lo = sign * edge * (1.0 - 1e-12);
                    let hi = sign * edge * (1.0 + 1e-12);
                    assert!((mean_excitation(two_j, lo) - mean_excitation(two_j, hi)).abs() < 1e-10);
                    assert!((ln_partition(two_j, lo) - ln_partition(two_j, hi)).abs() < 1e-12);
                    assert!((ln_partition_shifted(two_j, lo) - ln_partition_shifted(two_j, hi)).abs() < 1e-12);
                    assert!((block_entropy(two_j, lo) - block_entropy(two_j, hi)).abs() < 1e-10);
                    assert!((projection_variance(two_j, lo) - projection_variance(two_j, hi)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn level_probabilities_normalized() {
        for x in [f64::NEG_INFINITY, -40.0, -0.3, 0.0, 1e-7, 2.5, 700.0, f64::INFINITY] {
            let lp = ln_level_probabilities(7, x);
            let total: f64 = lp.iter().map(|v| v.exp()).sum();
            assert!((total - 1.0).abs() < 1e-14, "x={x}");
        }
        let lp = ln_level_probabilities(2, f64::INFINITY);
        assert_eq!(lp[0], 0.0);
        assert_eq!(lp[2], f64::NEG_INFINITY);
    }

    #[test]
    fn log_sum_exp_edges() {
        assert_eq!(log_sum_exp([]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum_exp([1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kernels_match_direct_sums(two_j in 1u64..12, x in -30.0f64..30.0) {
            let (lz, mean, var, ent) = direct(two_j, x);
            prop_assert!((ln_partition(two_j, x) - lz).abs() <= 1e-12 * lz.abs().max(1.0));
            prop_assert!(
                (ln_partition_shifted(two_j, x) + two_j as f64 / 2.0 * x.abs() - lz).abs()
                    <= 1e-12 * lz.abs().max(1.0)
            );
            prop_assert!((mean_projection(two_j, x) - mean).abs() < 1e-11);
            prop_assert!((projection_variance(two_j, x) - var).abs() < 1e-10);
            prop_assert!((block_entropy(two_j, x) - ent).abs() < 1e-11);
        }

        #[test]
        fn mean_is_odd(two_j in 1u64..30, x in -50.0f64..50.0) {
            prop_assert!((mean_projection(two_j, x) + mean_projection(two_j, -x)).abs() < 1e-12);
        }
    }
}
