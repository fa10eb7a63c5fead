//! The acceptance suite: all thirteen criteria, one line each.
//!
//! `CONEHJ_SEED` overrides the default seed and `CONEHJ_ACCEPT_OUT` keeps the
//! CSV artifacts in the given directory.

use std::process::ExitCode;

use conehj_cli::acceptance::{run, Ctx};
use conehj_cli::experiments::DEFAULT_SEED;

fn main() -> ExitCode {
    let seed = std::env::var("CONEHJ_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED);
    let mut ctx = Ctx::new(seed);
    ctx.out = std::env::var_os("CONEHJ_ACCEPT_OUT").map(Into::into);
    println!("acceptance suite, seed {seed}");
    let reports = run(&mut ctx, &[], |r| println!("{r}"));
    let failed: Vec<u8> = reports.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    println!("{}/{} criteria passed", reports.len() - failed.len(), reports.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
