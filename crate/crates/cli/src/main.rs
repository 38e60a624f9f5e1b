use clap::Parser;
use polybc_cli::{run, Command, TrainConfig};
use std::path::PathBuf;
use std::process::ExitCode;

// Training allocates and frees megabyte-sized jet buffers on every loss evaluation; the
// system allocator returns them to the kernel each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Boundary-conforming neural PDE solver on convex polygons.
#[derive(Parser)]
#[command(name = "polybc", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment description.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = TrainConfig::load(&args.config).and_then(|cfg| run(args.command, &cfg, args.out.as_deref(), args.seed));
    match result {
        Ok(s) => {
            if let Some(e) = &s.error {
                eprintln!("training failed: {e}");
                eprintln!("partial outputs in {}", s.out_dir.display());
                return ExitCode::from(3);
            }
            println!("wrote {} to {}", s.files.join(", "), s.out_dir.display());
            if let Some(l) = s.final_loss {
                println!("final loss {l:.6e}");
            }
            if let Some(e) = s.max_abs_err {
                println!("max abs error {e:.6e}");
            }
            if let Some(a) = s.coefficients {
                println!("source coefficients {a:?}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
