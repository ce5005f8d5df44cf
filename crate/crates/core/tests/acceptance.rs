//! Runs the consistency suite at its stated tolerances and exits non-zero on
//! any failure.

use collective_thermo::validation::run_all;

fn main() {
    let outcomes = run_all(7);
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!(
            "[{status}] {:>2}. {} ({:.2?}): {}",
            o.index, o.title, o.elapsed, o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
