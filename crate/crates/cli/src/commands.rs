use collective_thermo::dynamics::{evolve, initial_thermal_blocks, DissipatorRates, EvolveOptions, StepCheck};
use collective_thermo::oracle::{fidelity, steady_state, Dissipation, FullState, SteadyOptions};
use collective_thermo::otto::{
    beta_l, cycle_entropy_drop, cycle_free_energy, cycle_work, sweep, CycleReport, CycleSpec,
};
use collective_thermo::validation::run_all;
use collective_thermo::{BathSpec, Coupling, Ensemble, EnsembleSpec, HalfInt};
use rayon::prelude::*;

use crate::table::{Cell, Table};
use crate::{CliError, Command, CurveArgs};

const ORACLE_TOLERANCE: f64 = 1e-8;
const INFIDELITY_TOLERANCE: f64 = 1e-10;

type Outcome = (Table, Result<(), CliError>);

/// Runs one subcommand. The inner result carries check failures that still
/// produce a table.
pub fn dispatch(command: &Command, normalize: bool) -> Result<Outcome, CliError> {
    let table = match command {
        Command::Multiplicities { ensemble, levels } => multiplicities(&ensemble.spec()?, *levels)?,
        Command::EnergyCurve(args) => energy_curve(args, normalize)?,
        Command::EntropyCurve(args) => entropy_curve(args, normalize)?,
        Command::FreeEnergy(args) => free_energy(args, normalize)?,
        Command::Otto {
            ensemble,
            beta0,
            beta_h,
            lambda,
            beta_c,
            grid,
        } => {
            let ens = Ensemble::new(ensemble.spec()?)?;
            let scale = Scale::new(ens.spec(), normalize);
            match (beta_c, grid) {
                (Some(bc), _) => otto_single(&ens, CycleSpec::new(*beta0, *beta_h, *bc, *lambda)?, scale),
                (None, Some(g)) => otto_sweep(&ens, *beta0, *beta_h, *lambda, &g.values(), scale)?,
                (None, None) => return Err(CliError::Usage("otto needs --beta-c or --grid".into())),
            }
        }
        Command::Dynamics {
            ensemble,
            beta0,
            beta_b,
            gamma,
            t_final,
            sample_interval,
            dt,
            no_step_check,
        } => {
            let ens = Ensemble::new(ensemble.spec()?)?;
            let rates = DissipatorRates::from_bath(&BathSpec::new(*beta_b, *gamma)?, ens.spec().omega());
            let options = EvolveOptions {
                t_final: *t_final,
                dt: *dt,
                sample_interval: *sample_interval,
                step_check: if *no_step_check {
                    StepCheck::Off
                } else {
                    EvolveOptions::until(*t_final).step_check
                },
            };
            dynamics(&ens, *beta0, &rates, &options, Scale::new(ens.spec(), normalize))?
        }
        Command::OracleCheck { max_dim } => return oracle_check(*max_dim),
        Command::Validate { seed } => return Ok(validate(*seed)),
    };
    Ok((table, Ok(())))
}

/// Divisors applied under `--normalize`.
#[derive(Debug, Clone, Copy)]
struct Scale {
    energy: f64,
    entropy: f64,
}

impl Scale {
    fn new(spec: &EnsembleSpec, normalize: bool) -> Self {
        if normalize {
            Scale {
                energy: spec.omega() * spec.max_j().value(),
                entropy: spec.n() as f64 * (spec.local_dim() as f64).ln(),
            }
        } else {
            Scale {
                energy: 1.0,
                entropy: 1.0,
            }
        }
    }
}

fn multiplicities(spec: &EnsembleSpec, levels: bool) -> Result<Table, CliError> {
    let table = collective_thermo::MultiplicityTable::new(*spec)?;
    let (header, entries) = if levels {
        (vec!["m", "level_count"], table.level_counts())
    } else {
        (vec!["J", "multiplicity"], table.multiplicities())
    };
    let mut out = Table::new(header);
    for (k, v) in entries {
        out.push(vec![Cell::Text(k.to_string()), Cell::Int(v.to_string())]);
    }
    Ok(out)
}

fn curve<F>(args: &CurveArgs, headers: Vec<&'static str>, row: F) -> Result<Table, CliError>
where
    F: Fn(&Ensemble, f64) -> Result<Vec<Cell>, CliError> + Sync,
{
    let ens = Ensemble::new(args.ensemble.spec()?)?;
    let rows: Vec<Vec<Cell>> = args
        .grid
        .values()
        .par_iter()
        .map(|&beta_b| {
            let mut cells = vec![Cell::Num(beta_b)];
            cells.extend(row(&ens, beta_b)?);
            Ok(cells)
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::new(headers);
    rows.into_iter().for_each(|r| table.push(r));
    Ok(table)
}

fn energy_curve(args: &CurveArgs, normalize: bool) -> Result<Table, CliError> {
    let beta0 = args.beta0;
    curve(args, vec!["beta_B", "E_inf", "E_th"], |ens, beta_b| {
        let scale = Scale::new(ens.spec(), normalize);
        let weights = ens.thermal_weights(beta0);
        Ok(vec![
            (ens.steady_energy_with(&weights, beta_b) / scale.energy).into(),
            (ens.thermal_energy(beta_b) / scale.energy).into(),
        ])
    })
}

fn entropy_curve(args: &CurveArgs, normalize: bool) -> Result<Table, CliError> {
    let beta0 = args.beta0;
    curve(args, vec!["beta_B", "S_inf", "S_th"], |ens, beta_b| {
        let scale = Scale::new(ens.spec(), normalize);
        let weights = ens.thermal_weights(beta0);
        Ok(vec![
            (ens.steady_entropy_with(&weights, beta_b) / scale.entropy).into(),
            (ens.thermal_entropy(beta_b) / scale.entropy).into(),
        ])
    })
}

/// Free energies are undefined at `β_B = 0`; those cells are `nan`.
fn free_energy(args: &CurveArgs, normalize: bool) -> Result<Table, CliError> {
    let beta0 = args.beta0;
    curve(
        args,
        vec!["beta_B", "dF_inf", "dF_th", "Sigma_inf", "Sigma_th"],
        |ens, beta_b| {
            let scale = Scale::new(ens.spec(), normalize);
            let df = |c| {
                ens.free_energy_variation(beta0, beta_b, c)
                    .ok()
                    .map(|v| v / scale.energy)
            };
            let sigma = |c| -> Result<f64, CliError> { Ok(ens.entropy_production(beta0, beta_b, c)? / scale.entropy) };
            Ok(vec![
                df(Coupling::Collective).into(),
                df(Coupling::Independent).into(),
                sigma(Coupling::Collective)?.into(),
                sigma(Coupling::Independent)?.into(),
            ])
        },
    )
}

fn otto_single(ens: &Ensemble, cycle: CycleSpec, scale: Scale) -> Table {
    let coh: CycleReport = cycle_work(ens, &cycle, Coupling::Collective);
    let inc: CycleReport = cycle_work(ens, &cycle, Coupling::Independent);
    let mut table = Table::new(vec![
        "lambda_beta_c",
        "W_coh",
        "W_inc",
        "Q_h_coh",
        "Q_c_coh",
        "Q_h_inc",
        "Q_c_inc",
        "efficiency",
        "ratio",
        "amplified",
        "dF_cyc_coh",
        "dF_cyc_inc",
        "dS_coh",
        "dS_inc",
        "beta_l",
    ]);
    let e = scale.energy;
    table.push(vec![
        cycle.compressed_beta_c().into(),
        (coh.work_coh / e).into(),
        (coh.work_inc / e).into(),
        (coh.heat_hot / e).into(),
        (coh.heat_cold / e).into(),
        (inc.heat_hot / e).into(),
        (inc.heat_cold / e).into(),
        coh.efficiency.into(),
        coh.enhancement_ratio.into(),
        coh.amplified.into(),
        cycle_free_energy(ens, &cycle, Coupling::Collective)
            .map(|v| v / e)
            .into(),
        cycle_free_energy(ens, &cycle, Coupling::Independent)
            .map(|v| v / e)
            .into(),
        (cycle_entropy_drop(ens, &cycle, Coupling::Collective) / scale.entropy).into(),
        (cycle_entropy_drop(ens, &cycle, Coupling::Independent) / scale.entropy).into(),
        beta_l(ens, cycle.beta0()).ok().into(),
    ]);
    table
}

fn otto_sweep(
    ens: &Ensemble,
    beta0: f64,
    beta_h: f64,
    lambda: f64,
    betas_c: &[f64],
    scale: Scale,
) -> Result<Table, CliError> {
    let rows = sweep(ens, beta0, beta_h, lambda, betas_c)?;
    let drops: Vec<(f64, f64)> = betas_c
        .par_iter()
        .map(|&bc| {
            let cycle = CycleSpec::new(beta0, beta_h, bc, lambda)?;
            Ok((
                cycle_entropy_drop(ens, &cycle, Coupling::Collective),
                cycle_entropy_drop(ens, &cycle, Coupling::Independent),
            ))
        })
        .collect::<Result<_, collective_thermo::Error>>()?;
    let mut table = Table::new(vec![
        "lambda_beta_c",
        "W_coh",
        "W_inc",
        "diff_normalized",
        "ratio",
        "dS_coh",
        "dS_inc",
    ]);
    for (r, (sc, si)) in rows.iter().zip(drops) {
        table.push(vec![
            r.lambda_beta_c.into(),
            (r.work_coh / scale.energy).into(),
            (r.work_inc / scale.energy).into(),
            r.normalized_difference.into(),
            r.ratio.into(),
            (sc / scale.entropy).into(),
            (si / scale.entropy).into(),
        ]);
    }
    Ok(table)
}

fn dynamics(
    ens: &Ensemble,
    beta0: f64,
    rates: &DissipatorRates,
    options: &EvolveOptions,
    scale: Scale,
) -> Result<Table, CliError> {
    let start = initial_thermal_blocks(ens, beta0);
    let traj = evolve(&start, rates, options)?;
    let mut table = Table::new(vec!["t", "energy", "entropy", "apparent_temperature", "min_eigenvalue"]);
    for s in &traj.samples {
        table.push(vec![
            s.t.into(),
            (s.energy / scale.energy).into(),
            (s.entropy / scale.entropy).into(),
            s.apparent_temperature.into(),
            s.min_eigenvalue.into(),
        ]);
    }
    Ok(table)
}

fn oracle_check(max_dim: usize) -> Result<Outcome, CliError> {
    let mut points = Vec::new();
    for (n, two_s) in [(2u32, 1i64), (3, 1), (4, 1), (6, 1), (2, 2), (3, 2), (2, 3)] {
        let spec = EnsembleSpec::with_unit_frequency(n, HalfInt::from_twice(two_s))?;
        if spec.hilbert_dim().is_none_or(|d| d > max_dim) {
            continue;
        }
        for beta_b in [-3.0, -1.0, -0.5, 0.5, 1.0, 3.0] {
            for beta0 in [0.3, 2.0, f64::INFINITY] {
                for coupling in [Coupling::Collective, Coupling::Independent] {
                    points.push((spec, beta0, beta_b, coupling));
                }
            }
        }
    }
    if points.is_empty() {
        return Err(CliError::Usage(format!("--max-dim {max_dim} excludes every ensemble")));
    }
    let options = SteadyOptions {
        max_dim,
        ..SteadyOptions::default()
    };
    let rows: Vec<(Vec<Cell>, bool)> = points
        .par_iter()
        .map(|&(spec, beta0, beta_b, coupling)| -> Result<_, CliError> {
            let ens = Ensemble::new(spec)?;
            let dissipation = Dissipation {
                coupling,
                rates: DissipatorRates::from_bath(&BathSpec::new(beta_b, 1.0)?, 1.0),
                noise: None,
            };
            let ss = steady_state(&spec, beta0, &dissipation, &options)?;
            let (energy, entropy, infidelity) = match coupling {
                Coupling::Collective => (
                    ens.steady_energy(beta0, beta_b),
                    ens.steady_entropy(beta0, beta_b),
                    f64::NAN,
                ),
                Coupling::Independent => {
                    let gibbs = FullState::thermal(&spec, beta_b)?;
                    (
                        ens.thermal_energy(beta_b),
                        ens.thermal_entropy(beta_b),
                        1.0 - fidelity(ss.rho(), gibbs.rho()),
                    )
                }
            };
            let de = (ss.energy() - energy).abs();
            let ds = (ss.entropy()? - entropy).abs();
            let passed = de < ORACLE_TOLERANCE
                && ds < ORACLE_TOLERANCE
                && (infidelity.is_nan() || infidelity < INFIDELITY_TOLERANCE);
            let mode = match coupling {
                Coupling::Collective => "collective",
                Coupling::Independent => "independent",
            };
            Ok((
                vec![
                    Cell::Int(spec.n().to_string()),
                    Cell::Text(spec.spin().to_string()),
                    beta0.into(),
                    beta_b.into(),
                    Cell::Text(mode.into()),
                    de.into(),
                    ds.into(),
                    infidelity.into(),
                    passed.into(),
                ],
                passed,
            ))
        })
        .collect::<Result<_, CliError>>()?;
    let mut table = Table::new(vec![
        "n",
        "s",
        "beta0",
        "beta_B",
        "mode",
        "energy_residual",
        "entropy_residual",
        "infidelity",
        "passed",
    ]);
    let failures = rows.iter().filter(|r| !r.1).count();
    rows.into_iter().for_each(|(r, _)| table.push(r));
    let outcome = if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failures} oracle comparisons failed")))
    };
    Ok((table, outcome))
}

fn validate(seed: u64) -> Outcome {
    let outcomes = run_all(seed);
    let mut table = Table::new(vec!["criterion", "title", "passed", "detail"]);
    let failures = outcomes.iter().filter(|o| !o.passed).count();
    for o in outcomes {
        table.push(vec![
            Cell::Int(o.index.to_string()),
            Cell::Text(o.title.into()),
            o.passed.into(),
            Cell::Text(o.detail),
        ]);
    }
    let outcome = if failures == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failures} validation criteria failed")))
    };
    (table, outcome)
}
