//! One LF cycle: solved constants, constraint residuals, and the samples.
//!
//! cargo run --example lf_cycle -- [f0_hz tp te ta]

use armax_lf::{generate_cycle, solve_direct, LfParams};

fn main() -> armax_lf::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|a| a.parse().expect("number")).collect();
    let [f0, tp, te, ta] = match args[..] {
        [a, b, c, d] => [a, b, c, d],
        _ => [100.0, 0.4, 0.55, 0.05],
    };
    let fs = 16000.0;
    let p = LfParams::new(f0, tp, te, ta, 1.0);
    let d = solve_direct(&p, fs)?;
    println!("grid      {:?}", d.grid);
    println!("lambda    {:.6} 1/s", d.lambda_per_s(fs));
    println!("mu        {:.6} 1/s", d.mu_per_s(fs));
    println!("E1, E2    {:.6}, {:.6}", d.e1, d.e2);
    println!("residuals return {:.2e}, area {:.2e}", d.return_phase_residual(), d.area_residual());
    println!("n,u");
    for (n, v) in generate_cycle(&p, fs)?.samples.iter().enumerate() {
        println!("{n},{v:.9}");
    }
    Ok(())
}
