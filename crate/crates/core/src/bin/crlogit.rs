use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crlogit::crl::{build_extended, erl_link_probs, path_prob_crl, solve_erl, solve_nested, NestedSpec};
use crlogit::estimation::{estimate, EstimationConfig, GradientMode, Model};
use crlogit::experiments::{
    edge_probabilities, export_dot, run_recharge_study, run_stability_contrast, run_threshold_sweep, run_toy_tables,
    Generator, RechargeSpec, StabilitySpec, SweepSpec,
};
use crlogit::network::{assets, generate_geometric_dag, load_network, load_observations, save_network, save_observations, Network, Observation};
use crlogit::path_oracle::{enumerate_paths, mnl_over, restrict_stepwise, EnumerationLimits};
use crlogit::rl::{link_probs, solve_rl, UtilitySpec};
use crlogit::simulation::{simulate, SimConfig, SimModel};
use crlogit::Error;

#[derive(Parser)]
#[command(name = "crlogit", version, about = "Recursive logit route choice with accumulated-cost constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate routes and their path-logit probabilities.
    Paths(PathsArgs),
    /// Solve the unconstrained value function.
    Solve(ModelArgs),
    /// Unconstrained link choice probabilities.
    Probs(ModelArgs),
    /// Constrained model on the extended state space.
    #[command(subcommand)]
    Crl(CrlCommand),
    /// Fit coefficients to observed routes.
    Estimate(EstimateArgs),
    /// Draw synthetic routes.
    Simulate(SimulateArgs),
    /// Write a random geometric DAG.
    Generate(GenerateArgs),
    /// Run the scripted studies.
    #[command(subcommand)]
    Repro(ReproCommand),
    /// Graph exports.
    #[command(subcommand)]
    Export(ExportCommand),
}

#[derive(Args)]
struct NetArg {
    /// Network file, or one of @toy, @recharge, @grid, @sioux-falls.
    #[arg(long, short)]
    network: String,
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    net: NetArg,
    /// Utility coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
}

#[derive(Args)]
struct PathsArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    origin: usize,
    /// Keep only routes within this bound at every step (cost quanta, comma separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Option<Vec<i64>>,
    #[arg(long, default_value_t = 1_000_000)]
    max_paths: usize,
    #[arg(long)]
    hop_limit: Option<usize>,
}

#[derive(Args)]
struct CrlArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    origin: usize,
    /// Bound per constraint dimension in cost quanta, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    alpha: Vec<i64>,
}

#[derive(Subcommand)]
enum CrlCommand {
    /// Extended state space size and values.
    Solve(CrlArgs),
    /// Choice probability of every extended transition.
    Probs(CrlArgs),
    /// Probability of one route.
    Pathprob {
        #[command(flatten)]
        args: CrlArgs,
        /// Route as comma-separated state ids.
        #[arg(long, value_delimiter = ',')]
        path: Vec<usize>,
        /// Per-state scales `state=mu` for the nested variant.
        #[arg(long, value_delimiter = ',')]
        nested: Vec<String>,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum GeneratorKind {
    Rl,
    Crl,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum ModelKind {
    Rl,
    Crl,
    Cnrl,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    net: NetArg,
    #[arg(long, short)]
    observations: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelKind::Crl)]
    model: ModelKind,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<i64>,
    /// Per-state scales `state=mu` for the nested variant.
    #[arg(long, value_delimiter = ',')]
    nested: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta0: Option<Vec<f64>>,
    /// Use finite-difference gradients.
    #[arg(long)]
    fd: bool,
    #[arg(long, default_value_t = 1e-6)]
    tol_grad: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Also write results as `key = value` lines.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value_t = ModelKind::Crl)]
    kind: ModelKind,
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<i64>,
    #[arg(long, value_delimiter = ',')]
    nested: Vec<String>,
    #[arg(long, short = 'c', default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    origin: usize,
    /// Draw from RL and discard routes that break the bound.
    #[arg(long)]
    rejection: bool,
    #[arg(long, default_value_t = 10_000)]
    max_hops: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    nodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReproCommand {
    /// Path probabilities on the two toy networks.
    Toy,
    /// Threshold sweep on random DAGs.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [20usize, 30, 40, 50])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        graphs: usize,
        /// Fractions of the longest route, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 3000)]
        n_in: usize,
        #[arg(long, default_value_t = 1000)]
        n_out: usize,
        #[arg(long, value_enum, default_value_t = GeneratorKind::Crl)]
        generator: GeneratorKind,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value = "sweep_out")]
        out_dir: PathBuf,
    },
    /// DAGs with random charging stations.
    Recharge {
        #[arg(long, value_delimiter = ',', default_values_t = [20usize, 30, 40, 50])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        graphs: usize,
        #[arg(long, default_value_t = 0.1)]
        station_fraction: f64,
        #[arg(long, default_value_t = 0.4)]
        energy_fraction: f64,
        #[arg(long, default_value_t = 3000)]
        n_in: usize,
        #[arg(long, default_value_t = 1000)]
        n_out: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "recharge_out")]
        out_dir: PathBuf,
    },
    /// RL against CRL on the cyclic Sioux Falls network.
    Stability {
        #[arg(long, value_delimiter = ',', default_values_t = [10i64, 15, 20, 25])]
        alphas: Vec<i64>,
        #[arg(long, default_value_t = 3000)]
        n_in: usize,
        #[arg(long, default_value_t = 1000)]
        n_out: usize,
        #[arg(long, default_value_t = 11)]
        seed: u64,
        /// Output CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExportCommand {
    /// Graphviz file with edge widths proportional to usage probability.
    Dot {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        origin: usize,
        /// Constrain with this bound; unconstrained otherwise.
        #[arg(long, value_delimiter = ',')]
        alpha: Option<Vec<i64>>,
        /// Edges below this probability are dashed.
        #[arg(long, default_value_t = 1e-9)]
        dashed_below: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn network(arg: &NetArg) -> CliResult<Network> {
    Ok(match arg.network.as_str() {
        "@toy" => assets::toy_travel_time(),
        "@recharge" => assets::toy_recharge(),
        "@grid" => assets::grid_recharge(),
        "@sioux-falls" => assets::sioux_falls(),
        path => load_network(&fs::read_to_string(path)?)?,
    })
}

fn utility(m: &ModelArgs) -> CliResult<(Network, UtilitySpec)> {
    let net = network(&m.net)?;
    let u = UtilitySpec::new(m.beta.clone(), m.mu)?;
    u.check(&net)?;
    Ok((net, u))
}

fn nested_spec(entries: &[String], default_mu: f64) -> CliResult<NestedSpec> {
    let mut spec = NestedSpec::uniform(default_mu);
    for e in entries {
        let (s, m) = e.split_once('=').ok_or_else(|| format!("expected state=mu, got `{e}`"))?;
        spec = spec.with(s.trim().parse()?, m.trim().parse()?);
    }
    spec.validate()?;
    Ok(spec)
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn state_list(path: &[usize]) -> String {
    path.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Paths(a) => {
            let (net, u) = utility(&a.model)?;
            let limits = EnumerationLimits {
                max_paths: a.max_paths,
                hop_limit: a.hop_limit,
            };
            let all = enumerate_paths(&net, &u, a.origin, limits)?;
            let ps = match &a.alpha {
                Some(alpha) => restrict_stepwise(&all, &net, alpha)?,
                None => all,
            };
            let probs = mnl_over(&ps, u.mu)?;
            println!("{:>10} {:>12}  path", "prob", "utility");
            for i in 0..ps.len() {
                println!("{:>10.6} {:>12.4}  {}", probs[i], ps.utilities[i], state_list(ps.paths[i].states()));
            }
        }
        Command::Solve(m) => {
            let (net, u) = utility(&m)?;
            let vt = solve_rl(&net, &u)?;
            println!("{:>6} {:>14} {:>14}", "state", "V", "z");
            for s in 0..net.num_states() {
                println!("{s:>6} {:>14.6} {:>14.6e}", vt.value(s), vt.z(s));
            }
        }
        Command::Probs(m) => {
            let (net, u) = utility(&m)?;
            let vt = solve_rl(&net, &u)?;
            let p = link_probs(&net, &u, &vt);
            println!("{:>6} {:>6} {:>10}", "from", "to", "prob");
            for (e, pe) in net.edges().iter().zip(p) {
                println!("{:>6} {:>6} {:>10.6}", e.from, e.to, pe);
            }
        }
        Command::Crl(c) => match c {
            CrlCommand::Solve(a) => {
                let (net, u) = utility(&a.model)?;
                let xs = build_extended(&net, a.origin, &a.alpha)?;
                let evt = solve_erl(&xs, &net, &u)?;
                println!("extended states {}", xs.len());
                println!("transitions {}", xs.num_transitions());
                println!("acyclic {}", xs.is_acyclic());
                println!("V(origin) {:.6}", evt.value(xs.origin_index()));
                println!("{:>6} {:>6} {:>14}  acc", "index", "state", "V");
                for (i, s) in xs.states().iter().enumerate() {
                    println!("{i:>6} {:>6} {:>14.6}  {:?}", s.base, evt.value(i), s.acc);
                }
            }
            CrlCommand::Probs(a) => {
                let (net, u) = utility(&a.model)?;
                let xs = build_extended(&net, a.origin, &a.alpha)?;
                let evt = solve_erl(&xs, &net, &u)?;
                let p = erl_link_probs(&xs, &net, &u, &evt);
                println!("{:>6} {:>10} {:>6} {:>10} {:>10}", "from", "acc", "to", "acc", "prob");
                for i in 0..xs.len() {
                    for tr in xs.graph().range(i) {
                        let (f, t) = (xs.state(i), xs.state(xs.graph().target(tr)));
                        println!(
                            "{:>6} {:>10} {:>6} {:>10} {:>10.6}",
                            f.base,
                            format!("{:?}", f.acc),
                            t.base,
                            format!("{:?}", t.acc),
                            p[tr]
                        );
                    }
                }
            }
            CrlCommand::Pathprob { args, path, nested } => {
                let (net, u) = utility(&args.model)?;
                let xs = build_extended(&net, args.origin, &args.alpha)?;
                let evt = if nested.is_empty() {
                    solve_erl(&xs, &net, &u)?
                } else {
                    solve_nested(&xs, &net, &u, &nested_spec(&nested, args.model.mu)?)?
                };
                println!("{:.6}", path_prob_crl(&xs, &net, &u, &evt, &Observation(path))?);
            }
        },
        Command::Estimate(a) => {
            let net = network(&a.net)?;
            let obs = load_observations(&fs::read_to_string(&a.observations)?)?;
            let model = match a.model {
                ModelKind::Rl => Model::Rl,
                ModelKind::Crl => Model::Crl { alpha: a.alpha.clone() },
                ModelKind::Cnrl => Model::Cnrl {
                    alpha: a.alpha.clone(),
                    nested: nested_spec(&a.nested, a.mu)?,
                },
            };
            let cfg = EstimationConfig {
                mu: a.mu,
                beta0: a.beta0.clone(),
                gradient: if a.fd { GradientMode::FiniteDifference } else { GradientMode::Analytic },
                tol_grad: a.tol_grad,
                max_outer_iters: a.max_iters,
                ..Default::default()
            };
            let res = match estimate(&net, &obs, &model, &cfg) {
                Err(Error::Solve(f)) if model == Model::Rl => {
                    return Err(format!(
                        "value function cannot be solved at the starting point ({f}); \
                         the unconstrained model is unstable here, try --model crl with a bound"
                    )
                    .into())
                }
                r => r?,
            };
            print!("{}", res.coefficient_table());
            if let Some(out) = &a.out {
                fs::write(out, res.key_values())?;
            }
            return Ok(res.converged);
        }
        Command::Simulate(a) => {
            let (net, u) = utility(&a.model)?;
            let model = match a.kind {
                ModelKind::Rl => SimModel::Rl,
                ModelKind::Crl => SimModel::Crl,
                ModelKind::Cnrl => SimModel::Cnrl(nested_spec(&a.nested, a.model.mu)?),
            };
            let mut cfg = SimConfig::new(model, a.count, a.seed, a.origin);
            cfg.rejection = a.rejection;
            cfg.max_hops = a.max_hops;
            let alpha = (!a.alpha.is_empty()).then_some(a.alpha.as_slice());
            let obs = simulate(&net, &u, alpha, &cfg)?;
            emit(a.out.as_deref(), &save_observations(&obs))?;
        }
        Command::Generate(a) => {
            let dag = generate_geometric_dag(a.nodes, a.seed)?;
            emit(a.out.as_deref(), &save_network(&dag.network))?;
        }
        Command::Repro(r) => return repro(r),
        Command::Export(ExportCommand::Dot {
            model,
            origin,
            alpha,
            dashed_below,
            out,
        }) => {
            let (net, u) = utility(&model)?;
            let p = edge_probabilities(&net, &u, alpha.as_deref(), origin)?;
            emit(out.as_deref(), &export_dot(&net, &p, dashed_below))?;
        }
    }
    Ok(true)
}

fn repro(r: ReproCommand) -> CliResult<bool> {
    match r {
        ReproCommand::Toy => {
            let report = run_toy_tables()?;
            print!("{}", report.render());
            Ok(report.all_pass())
        }
        ReproCommand::Sweep {
            sizes,
            graphs,
            thresholds,
            trials,
            n_in,
            n_out,
            generator,
            seed,
            out_dir,
        } => {
            let spec = SweepSpec {
                dag_sizes: sizes,
                graphs_per_size: graphs,
                thresholds,
                trials,
                n_insample: n_in,
                n_outsample: n_out,
                generator: match generator {
                    GeneratorKind::Rl => Generator::Rl,
                    GeneratorKind::Crl => Generator::Crl,
                },
                seed,
                ..Default::default()
            };
            let report = run_threshold_sweep(&spec)?;
            print!("{}", report.render());
            fs::create_dir_all(&out_dir)?;
            report.write_cells_csv(&out_dir.join("cells.csv"))?;
            report.write_trials_csv(&out_dir.join("trials.csv"))?;
            let violations = report
                .records
                .iter()
                .filter(|t| matches!((t.in_crl, t.in_rl), (Some(c), Some(r)) if c < r))
                .count();
            println!("in-sample dominance violations: {violations}");
            Ok(violations == 0)
        }
        ReproCommand::Recharge {
            sizes,
            graphs,
            station_fraction,
            energy_fraction,
            n_in,
            n_out,
            seed,
            out_dir,
        } => {
            let spec = RechargeSpec {
                dag_sizes: sizes,
                graphs_per_size: graphs,
                station_fraction,
                energy_fraction,
                n_insample: n_in,
                n_outsample: n_out,
                seed,
                ..Default::default()
            };
            let report = run_recharge_study(&spec)?;
            print!("{}", report.render());
            fs::create_dir_all(&out_dir)?;
            report.write_csv(&out_dir.join("instances.csv"))?;
            Ok(report.dominance_holds())
        }
        ReproCommand::Stability {
            alphas,
            n_in,
            n_out,
            seed,
            out,
        } => {
            let spec = StabilitySpec {
                alphas,
                n_insample: n_in,
                n_outsample: n_out,
                origin: assets::SIOUX_FALLS_ORIGIN,
                seed,
                ..Default::default()
            };
            let report = run_stability_contrast(&assets::sioux_falls(), &spec)?;
            print!("{}", report.render());
            if let Some(p) = out {
                report.write_csv(&p)?;
            }
            let ok = report.crl_decreasing() && report.rl_failed_everywhere();
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
