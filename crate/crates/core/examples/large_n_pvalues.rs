//! The same tiny effect, fitted at growing sample sizes: the naive
//! p-value shrinks with n while the share of variance explained does not.

use fairstep::synthpop::TinyEffect;

fn main() -> fairstep::Result<()> {
    let g = TinyEffect::default();
    println!("variance explained by the indicator: {:.2e}", g.variance_share());
    for n in [10_000, 100_000, 1_000_000] {
        let ps: Vec<String> = (1..=5)
            .map(|seed| g.p_value(n, seed).map(|p| format!("{p:.2e}")))
            .collect::<Result<_, _>>()?;
        println!("n = {n:>9}  p = {}", ps.join("  "));
    }
    Ok(())
}
