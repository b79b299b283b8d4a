//! The finite-difference gradient suite, plus a one-off check of a custom
//! expression built from the tape's operations.

use lowlight::autodiff::{grad_check, Tensor};
use lowlight::harness::run_grad_suite;

pub fn run(instances: usize) -> lowlight::Result<()> {
    let reports = run_grad_suite(0, instances)?;
    for r in &reports {
        println!("{:<22} worst {:.2e}  tolerance {:.0e}  {}", r.name, r.worst, r.tolerance, if r.passed() { "ok" } else { "FAIL" });
    }
    let failed = reports.iter().filter(|r| !r.passed()).count();
    println!("{} cases, {failed} failed", reports.len());

    // sum(sigmoid(x) * exp(x / 3))
    let point = Tensor::from_fn([2, 3, 3], |i| (i as f64 * 0.37).sin());
    let err = grad_check(|_, x| Ok(x.sigmoid().mul(&x.mul_scalar(1.0 / 3.0)?.exp())?.sum()), &point, 1e-3)?;
    println!("custom expression: max relative error {err:.2e}");
    Ok(())
}

fn main() {
    let instances = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    run(instances).unwrap();
}
