use clap::Parser;
use mpno_lab::{run, Cli};

fn main() -> anyhow::Result<()> {
    run(Cli::parse())?;
    Ok(())
}
