//! Compare the hand-written backward pass against central finite differences.
//!
//! cargo run --release --example gradient_check

use diffedit::diffusion::DenoiserConfig;
use diffedit::numerics::RngStream;
use diffedit::training::gradient_check;

fn main() -> diffedit::Result<()> {
    let cfg = DenoiserConfig {
        input_dim: 8,
        depth: 3,
        width: 32,
        time_pe_dim: 16,
        time_hidden: 32,
    };
    let report = gradient_check(&cfg, 1e-5, &mut RngStream::named(1, "grad_check"))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.passed {
        std::process::exit(3);
    }
    Ok(())
}
