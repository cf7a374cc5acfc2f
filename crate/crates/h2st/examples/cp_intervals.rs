//! The statistical kernels behind calibrated detection: the regularized
//! incomplete Beta function, its quantile, Clopper-Pearson intervals, and
//! the sliding window that feeds them.
//!
//! ```bash
//! cargo run -p h2st --example cp_intervals
//! ```

use h2st::stats::{beta_quantile, clopper_pearson, reg_inc_beta, WindowState};

fn main() {
    println!("Regularized incomplete Beta I_x(a,b):");
    for (x, a, b) in [(0.3, 5.0, 7.0), (0.5, 2.0, 2.0), (0.9, 1.0, 3.0)] {
        println!("  I_{x}({a},{b}) = {:.10}", reg_inc_beta(x, a, b).unwrap());
    }

    println!("\nBeta quantiles Q(p; a, b):");
    for (p, a, b) in [(0.025, 10.0, 11.0), (0.975, 11.0, 10.0), (0.5, 3.0, 3.0)] {
        println!("  Q({p}; {a}, {b}) = {:.10}", beta_quantile(p, a, b).unwrap());
    }

    println!("\nClopper-Pearson intervals at alpha = 0.05:");
    for (s, n) in [(0u64, 20u64), (10, 20), (20, 20), (30, 40), (75, 100)] {
        let ci = clopper_pearson(s, n, 0.05).unwrap();
        let contains_half = if ci.contains(0.5) { "contains" } else { "excludes" };
        println!(
            "  {s:>3}/{n:<3} -> [{:.4}, {:.4}]  ({contains_half} 1/2)",
            ci.lower, ci.upper
        );
    }

    // The detection test in one picture: push source/target correctness
    // pairs and ask whether 1/2 still fits the interval around the
    // windowed accuracy.
    println!("\nWindowed accuracy as a two-sample test statistic (w = 20):");
    let mut window = WindowState::new(20);
    for step in 1..=30 {
        // The classifier starts at chance and gradually separates the
        // distributions: correctness drifts from half to near-perfect.
        let source_correct = step % 2 == 0 || step > 10;
        let target_correct = step > 8;
        window.push(source_correct, target_correct);
        if step % 5 == 0 {
            let (mu, pairs) = window.mu_hat().unwrap();
            let trials = 2 * pairs as u64;
            let successes = (trials as f64 * mu).round() as u64;
            let ci = clopper_pearson(successes, trials, 0.05).unwrap();
            println!(
                "  step {step:>2}: mu = {mu:.3} over {pairs} pairs, CP = [{:.3}, {:.3}] -> {}",
                ci.lower,
                ci.upper,
                if ci.contains(0.5) {
                    "no shift detected"
                } else {
                    "shift detected"
                }
            );
        }
    }
}
