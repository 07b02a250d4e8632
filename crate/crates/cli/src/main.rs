use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use opinion_core::dynamics::{run, Mechanism};
use opinion_core::meanfield::{
    cumulants_iid_single_class, echo_chamber_check, echo_chamber_limits, fluctuation_limits, optimal_cycle,
    optimal_diffusion_decision, scaled_bernoulli_cumulants, single_class_moments, AnalyticsRecord, TwoStateChain,
};
use opinion_core::metrics::{error_sweep, global_error, local_error, Metric, SweepGrid};
use opinion_core::output::{write_metrics, write_trajectories};
use opinion_core::{catalog, Error, ScenarioConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "opinion", version, about = "Binary opinion dynamics with major influencers and mean-field approximations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Override the scenario's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (results go to OUT/<scenario name>/).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replications (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Lift the agent-step budget.
    #[arg(long, global = true)]
    allow_large: bool,
    /// Scenario override KEY=VALUE; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectories.csv and manifest.json.
    Simulate {
        /// Catalog name (`fig1_left`, `catalog/fig1_left`) or path to a TOML file.
        #[arg(long)]
        scenario: String,
    },
    /// Closed-form results of the linear model, as JSON.
    #[command(subcommand)]
    Analytics(Analytics),
    /// Estimate local or global errors, as CSV.
    Errors(ErrorsArgs),
    /// List the scenario catalog.
    List,
    /// Check a scenario (with overrides) and print its hash.
    Validate {
        #[arg(long)]
        scenario: String,
    },
}

#[derive(Subcommand)]
enum Analytics {
    /// Asymptotic trough and peak under a square-wave influencer.
    Fluctuation {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        c0: f64,
        /// Half-period.
        #[arg(long = "T")]
        t: u32,
    },
    /// Average change per step V(T) for T = 1..T_max.
    Cycle {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        c0: f64,
        #[arg(long = "T-max", default_value_t = 50)]
        t_max: u32,
    },
    /// Stationary mean and variance under a two-state influencer chain.
    Stationary {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        c0: f64,
        /// P[1 -> 0].
        #[arg(long)]
        alpha: f64,
        /// P[0 -> 1].
        #[arg(long)]
        beta: f64,
    },
    /// First three stationary cumulants for an i.i.d. Bernoulli(q) influencer.
    Cumulants {
        #[arg(long)]
        c: f64,
        #[arg(long)]
        c0: f64,
        #[arg(long, default_value_t = 0.5)]
        q: f64,
    },
    /// Whether an advertiser should switch (beta=1) or not (beta=0).
    Diffusion {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        theta: f64,
    },
    /// Long-run behaviour of the two echo-chamber communities.
    Echo {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        nu: f64,
        /// Also iterate the mean field and simulate agents.
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, default_value_t = 10_000)]
        agents: usize,
        #[arg(long, default_value_t = 500)]
        horizon: usize,
    },
}

#[derive(Args)]
struct ErrorsArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long, default_value = "local")]
    metric: Metric,
    /// Defaults to the scenario's first non-full mechanism.
    #[arg(long)]
    mechanism: Option<Mechanism>,
    /// Horizon; defaults to the scenario's.
    #[arg(long = "T")]
    t: Option<usize>,
    /// Replications; defaults to the scenario's.
    #[arg(long)]
    reps: Option<usize>,
    /// Sweep, e.g. `N=100,1000` or `M=10,100,1000` or `T=10,20`.
    #[arg(long)]
    grid: Option<SweepGrid>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Usage(_) | Error::Unsupported(_) => 2,
        Error::Budget { .. } => 3,
        Error::Domain(_) | Error::Numeric(_) => 4,
        Error::Io(_) => 1,
    }
}

fn resolve(name: &str) -> opinion_core::Result<ScenarioConfig> {
    let path = Path::new(name);
    if path.is_file() {
        return ScenarioConfig::load(path);
    }
    let with_ext = path.with_extension("toml");
    if with_ext.is_file() {
        return ScenarioConfig::load(with_ext);
    }
    match catalog::source(name) {
        Some(text) => ScenarioConfig::from_toml_str(text),
        None => Err(Error::Config {
            field: "scenario".into(),
            message: format!("`{name}` is neither a file nor a catalog entry (see `opinion list`)"),
        }),
    }
}

fn prepare(name: &str, g: &Global) -> opinion_core::Result<ScenarioConfig> {
    let mut s = resolve(name)?.with_overrides(&g.overrides)?;
    if let Some(seed) = g.seed {
        s.master_seed = seed;
    }
    s.budget.allow_large |= g.allow_large;
    Ok(s)
}

fn out_dir(g: &Global, s: &ScenarioConfig) -> opinion_core::Result<PathBuf> {
    let base = g.out.clone().or_else(|| s.output_dir.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    let dir = base.join(&s.name);
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn emit(record: AnalyticsRecord) -> opinion_core::Result<()> {
    let text = serde_json::to_string_pretty(&record).map_err(|e| Error::Numeric(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn simulate(name: &str, g: &Global) -> opinion_core::Result<()> {
    let s = prepare(name, g)?;
    let result = run(&s)?;
    let dir = out_dir(g, &s)?;
    let csv_path = dir.join("trajectories.csv");
    let mut w = std::io::BufWriter::new(fs::File::create(&csv_path)?);
    write_trajectories(&mut w, &result)?;
    w.flush()?;
    let manifest = json!({
        "scenario": s.name,
        "config_hash": s.config_hash()?,
        "master_seed": s.master_seed,
        "overrides": g.overrides,
        "n_agents": s.n_agents,
        "horizon": s.horizon,
        "replications": s.replications,
        "mechanisms": s.mechanisms.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
        "versions": {
            "opinion-cli": env!("CARGO_PKG_VERSION"),
            "opinion-core": opinion_core::VERSION,
            "spec_version": s.spec_version,
        },
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest).expect("json") + "\n")?;
    info!("wrote {}", csv_path.display());
    println!("{}", csv_path.display());
    Ok(())
}

fn analytics(cmd: &Analytics, g: &Global) -> opinion_core::Result<()> {
    match *cmd {
        Analytics::Fluctuation { c, c0, t } => {
            emit(AnalyticsRecord::new("fluctuation", json!({"c": c, "c0": c0, "T": t}), fluctuation_limits(c, c0, t)?)?)
        }
        Analytics::Cycle { c, c0, t_max } => {
            let cyc = optimal_cycle(c, c0, t_max)?;
            let out = json!({"argmax_T": cyc.argmax_t, "v_star": cyc.v_star, "values": cyc.values});
            emit(AnalyticsRecord::new("cycle", json!({"c": c, "c0": c0, "T_max": t_max}), out)?)
        }
        Analytics::Stationary { c, c0, alpha, beta } => {
            let chain = TwoStateChain::new(alpha, beta)?;
            let inputs = json!({"c": c, "c0": c0, "alpha": alpha, "beta": beta});
            emit(AnalyticsRecord::new("stationary", inputs, single_class_moments(c, c0, chain)?)?)
        }
        Analytics::Cumulants { c, c0, q } => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::Domain(format!("q = {q} must lie in [0, 1]")));
            }
            let k = cumulants_iid_single_class(c, scaled_bernoulli_cumulants(c0, q))?;
            emit(AnalyticsRecord::new("cumulants", json!({"c": c, "c0": c0, "q": q}), json!({"cumulants": k}))?)
        }
        Analytics::Diffusion { alpha, rho, c, theta } => {
            let d = optimal_diffusion_decision(alpha, rho, c, theta)?;
            let inputs = json!({"alpha": alpha, "rho": rho, "c": c, "theta": theta});
            emit(AnalyticsRecord::new("diffusion", inputs, json!({"decision": d.decision.label(), "threshold": d.threshold}))?)
        }
        Analytics::Echo { epsilon, nu, check, steps, agents, horizon } => {
            let limits = echo_chamber_limits(epsilon, nu)?;
            let mut out = serde_json::to_value(limits).expect("json");
            if check {
                let c = echo_chamber_check(epsilon, nu, steps, 1e-6, agents, horizon, g.seed.unwrap_or(0))?;
                out["check"] = serde_json::to_value(c).expect("json");
            }
            emit(AnalyticsRecord::new("echo", json!({"epsilon": epsilon, "nu": nu}), out)?)
        }
    }
}

fn errors(a: &ErrorsArgs, g: &Global) -> opinion_core::Result<()> {
    let mut s = prepare(&a.scenario, g)?;
    let mechanism = match a.mechanism {
        Some(m) => m,
        None => s.mechanisms.iter().copied().find(|m| *m != Mechanism::Full).ok_or_else(|| Error::Config {
            field: "mechanisms".into(),
            message: "no approximate mechanism in the scenario; pass --mechanism".into(),
        })?,
    };
    let horizon = a.t.unwrap_or(s.horizon);
    let reps = a.reps.unwrap_or(s.replications);
    s.horizon = horizon;
    let rows = match &a.grid {
        Some(grid) => error_sweep(&s, mechanism, a.metric, horizon, grid, reps)?,
        None => vec![match a.metric {
            Metric::Local => local_error(&s, mechanism, horizon, reps)?,
            Metric::Global => global_error(&s, mechanism, horizon, reps)?,
        }],
    };
    match &g.out {
        Some(_) => {
            let path = out_dir(g, &s)?.join("errors.csv");
            write_metrics(std::io::BufWriter::new(fs::File::create(&path)?), &rows)?;
            println!("{}", path.display());
        }
        None => write_metrics(std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn list() -> opinion_core::Result<()> {
    let mut out = std::io::stdout().lock();
    for name in catalog::names() {
        let s = catalog::get(name)?;
        let steps = (s.n_agents * s.horizon * s.replications) as f64;
        let flag = if steps > s.budget.max_agent_steps { "  [needs --allow-large]" } else { "" };
        writeln!(out, "{name:<16} N={:<8} T={:<4} reps={:<3} {}{flag}", s.n_agents, s.horizon, s.replications, s.description)?;
    }
    Ok(())
}

fn validate(name: &str, g: &Global) -> opinion_core::Result<()> {
    let s = prepare(name, g)?;
    println!("ok {} {}", s.name, s.config_hash()?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Simulate { scenario } => simulate(scenario, g),
        Command::Analytics(cmd) => analytics(cmd, g),
        Command::Errors(a) => errors(a, g),
        Command::List => list(),
        Command::Validate { scenario } => validate(scenario, g),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
