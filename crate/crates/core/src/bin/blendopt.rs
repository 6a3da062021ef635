use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;

use blendopt::cases::Case;
use blendopt::cli::{run, Inputs, Mode, RunConfig, EXIT_INPUT};

/// Optimal hydrogen blending over a periodic horizon in a gas pipeline network.
#[derive(Debug, Parser)]
#[command(name = "blendopt", version)]
struct Args {
    /// Network description (JSON).
    #[arg(long, required_unless_present = "case", requires = "scenario")]
    network: Option<PathBuf>,
    /// Scenario description (JSON).
    #[arg(long, requires = "network")]
    scenario: Option<PathBuf>,
    /// Bundled case instead of --network/--scenario: single-pipe or eight-node.
    #[arg(long, conflicts_with_all = ["network", "scenario"])]
    case: Option<Case>,
    /// Output directory.
    #[arg(long, env = "BLENDOPT_OUT", default_value = "out")]
    out: PathBuf,
    /// Time step in hours; must divide the horizon.
    #[arg(long)]
    dt: Option<f64>,
    /// Maximum pipe segment length in metres.
    #[arg(long)]
    dl: Option<f64>,
    /// Weight of the energy revenue term against compression cost, in [0, 1].
    #[arg(long)]
    xi: Option<f64>,
    /// KKT tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap per solver stage.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long, default_value = "transient", value_parser = ["steady", "transient", "validate-only"])]
    mode: String,
    /// Write per-iteration solver records to iterations.csv.
    #[arg(long)]
    iter_log: bool,
    /// Write the assembled NLP (variables, rows, Jacobian) to nlp/.
    #[arg(long)]
    export_nlp: bool,
    /// Print solver iterations to stderr.
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let inputs = match (args.case, args.network, args.scenario) {
        (Some(case), _, _) => Inputs::Bundled(case),
        (None, Some(network), Some(scenario)) => Inputs::Files { network, scenario },
        _ => {
            eprintln!("error: either --case or both --network and --scenario are required");
            return ExitCode::from(EXIT_INPUT as u8);
        }
    };
    let mut config = RunConfig::new(inputs, args.out);
    config.dt_h = args.dt;
    config.dl_m = args.dl;
    config.xi = args.xi;
    config.tol = args.tol;
    config.max_iter = args.max_iter;
    config.mode = args.mode.parse::<Mode>().expect("restricted by clap");
    config.iter_log = args.iter_log;
    config.export_nlp = args.export_nlp;
    config.verbose = args.verbose;

    let start = Instant::now();
    match run(&config) {
        Ok(outcome) => {
            let s = &outcome.summary;
            eprintln!(
                "{} time steps, {} variables, {} equality and {} inequality rows",
                s.size.time_steps, s.size.variables, s.size.equality_constraints, s.size.inequality_constraints
            );
            for (name, stage) in [("steady", &s.steady), ("transient", &s.transient)] {
                if let Some(st) = stage {
                    eprintln!(
                        "{name}: {} after {} iterations, objective {:.6e}, violation {:.2e}",
                        st.status, st.iterations, st.objective, st.violation
                    );
                }
            }
            if let Some(obj) = &s.objective {
                eprintln!("economic {:.2} USD, compression {:.2} USD, total {:.2} USD", obj.r_e, obj.r_c, obj.total);
            }
            if let Some(a) = &outcome.audit {
                for c in a.checks.iter().filter(|c| !c.passed) {
                    eprintln!("audit failed: {} = {:.3e} (tolerance {:.1e})", c.name, c.value, c.tolerance);
                }
            }
            eprintln!("wall time {:.3} s, results in {}", start.elapsed().as_secs_f64(), config.out.display());
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
