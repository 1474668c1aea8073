use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rebalsim::bridge::{self, ActionLog, LineTransport};
use rebalsim::experiment::{
    self, load_config, profitability_thresholds, scenario_appendix_a, ExperimentConfig,
    PolicyName, ScenarioParams,
};
use rebalsim::model::FeeSchedule;
use rebalsim::trace::{read_records, validate_records};
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "rebalsim", version, about = "Payment-channel rebalancing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment for every configured seed.
    Run(RunArgs),
    /// Run the experiment once per value of one parameter.
    Sweep(SweepArgs),
    /// Check trace CSVs for conservation and accounting errors.
    ValidateTrace {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Print the smallest swap sizes that can pay for themselves.
    Thresholds(ThresholdArgs),
    /// Run the alternating fixed-amount demand scenario without rebalancing.
    ScenarioAppendixA(ScenarioArgs),
    /// Serve the simulation to an external agent.
    ServeAgent(ServeArgs),
    /// Re-run a recorded agent episode from its action log.
    Replay(ReplayArgs),
    /// A protocol client that always sends the same action.
    ConstantAgent(ConstantAgentArgs),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range such as 1..10.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<SeedList>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicyName>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = load_config(&self.config)?;
        if let Some(seed) = self.seed {
            config.seeds = vec![seed];
        }
        if let Some(seeds) = &self.seeds {
            config.seeds = seeds.clone();
        }
        if let Some(policy) = self.policy {
            config.policy.name = policy;
        }
        config.validate()?;
        Ok(config)
    }

    fn out_dir(&self, config: &ExperimentConfig) -> Option<PathBuf> {
        self.out.clone().or_else(|| config.output_dir.clone())
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Dotted config path, such as fees.prop. Defaults to the config's
    /// [sweep] section.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Option<Vec<f64>>,
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long, conflicts_with_all = ["prop", "swap_prop", "miner"])]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    prop: f64,
    #[arg(long, default_value_t = 0.005)]
    swap_prop: f64,
    #[arg(long, default_value_t = 2.0)]
    miner: f64,
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long, default_value_t = 0.5)]
    fee_prop: f64,
    #[arg(long, default_value_t = 20)]
    transactions: u64,
    #[arg(long)]
    one_directional: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Shell command that starts the agent. It talks over stdin/stdout and
    /// finds the configured seeds in REBALSIM_SEEDS.
    #[arg(long, required_unless_present = "listen")]
    agent_cmd: Option<String>,
    /// Accept one agent over TCP instead of spawning it.
    #[arg(long, conflicts_with = "agent_cmd")]
    listen: Option<String>,
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<SeedList>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    log: PathBuf,
    /// Where to write the replayed trace CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConstantAgentArgs {
    /// Raw action pair, such as 0,0 or -0.5,0.3.
    #[arg(long, value_parser = parse_action, allow_hyphen_values = true, default_value = "0,0")]
    action: ActionPair,
    /// Seeds to request; REBALSIM_SEEDS or 0 when absent.
    #[arg(long, value_parser = parse_seed_range)]
    seeds: Option<SeedList>,
    /// Connect over TCP instead of using stdin/stdout.
    #[arg(long)]
    connect: Option<String>,
}

// Aliases keep clap from treating these as repeated flags.
type SeedList = Vec<u64>;
type ActionPair = Vec<f64>;

fn parse_action(s: &str) -> Result<ActionPair, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("bad action {x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if parts.len() != 2 {
        return Err(format!("expected two comma-separated numbers, got {s:?}"));
    }
    Ok(parts)
}

fn parse_seed_range(s: &str) -> Result<SeedList, String> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|e| format!("bad seed {a:?}: {e}"))?;
        let hi: u64 = b.trim().parse().map_err(|e| format!("bad seed {b:?}: {e}"))?;
        if lo > hi {
            return Err(format!("empty seed range {s}"));
        }
        Ok((lo..=hi).collect())
    } else {
        s.split(',')
            .map(|x| x.trim().parse().map_err(|e| format!("bad seed {x:?}: {e}")))
            .collect()
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn error_chain(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

fn main() -> ExitCode {
    match Cli::parse().command.execute() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            ExitCode::FAILURE
        }
    }
}

impl Command {
    fn execute(self) -> Result<ExitCode> {
        match self {
            Command::Run(args) => run(args),
            Command::Sweep(args) => sweep(args),
            Command::ValidateTrace { files } => validate(&files),
            Command::Thresholds(args) => thresholds(args),
            Command::ScenarioAppendixA(args) => scenario(args),
            Command::ServeAgent(args) => serve(args),
            Command::Replay(args) => replay(args),
            Command::ConstantAgent(args) => constant_agent(args),
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let config = args.common.load()?;
    let out = args.common.out_dir(&config);
    let result = experiment::run_experiment(&config, out.as_deref())?;
    let s = &result.summary;
    println!("policy {}  seeds {}", s.policy, s.runs.len());
    for r in &s.runs {
        println!(
            "seed {:>6}  steps {:>6}  final fortune {:.6}  lost fees {:.6}  swap fees {:.6}",
            r.seed, r.steps, r.final_fortune, r.cum_lost_fees, r.cum_swap_fees
        );
    }
    println!(
        "final fortune mean {:.6}  min {:.6}  max {:.6}  (initial {:.6})",
        s.final_fortune.mean, s.final_fortune.min, s.final_fortune.max, s.initial_fortune
    );
    if let Some(dir) = out {
        println!("wrote {}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let config = args.common.load()?;
    let out = args.common.out_dir(&config);
    let preset = config.sweep.clone();
    let Some(param) = args.param.or_else(|| preset.as_ref().map(|s| s.param.clone())) else {
        bail!("no --param given and the config has no [sweep] section");
    };
    let values = args
        .values
        .or_else(|| preset.filter(|s| s.param == param).map(|s| s.values))
        .unwrap_or_default();
    let rows = experiment::sweep(&config, &param, &values, out.as_deref())?;
    println!("{param},mean,min,max");
    for row in rows {
        println!("{},{},{},{}", row.value, row.mean, row.min, row.max);
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(files: &[PathBuf]) -> Result<ExitCode> {
    let mut failed = false;
    for path in files {
        let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let records = read_records(file).with_context(|| format!("reading {}", path.display()))?;
        let problems = validate_records(&records);
        if problems.is_empty() {
            println!("{}: ok ({} rows)", path.display(), records.len());
        } else {
            failed = true;
            println!("{}: {} problems", path.display(), problems.len());
            for p in problems {
                println!("  {p}");
            }
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn thresholds(args: ThresholdArgs) -> Result<ExitCode> {
    let fees = match &args.config {
        Some(path) => load_config(path)?.fees,
        None => FeeSchedule::proportional(args.prop, args.swap_prop, args.miner),
    };
    let t = profitability_thresholds(&fees);
    let show = |x: Option<f64>| x.map_or("infeasible".to_string(), |v| v.to_string());
    println!("swap-in: {}", show(t.swap_in));
    println!("swap-out: {}", show(t.swap_out));
    Ok(ExitCode::SUCCESS)
}

fn scenario(args: ScenarioArgs) -> Result<ExitCode> {
    let params = ScenarioParams {
        fee_prop: args.fee_prop,
        transactions: args.transactions,
        one_directional: args.one_directional,
        ..ScenarioParams::default()
    };
    let report = scenario_appendix_a(&params)?;
    let marks: String = report
        .outcomes
        .iter()
        .map(|&ok| if ok { '+' } else { '-' })
        .collect();
    println!("outcomes {marks}");
    println!("successes {} of {}", report.successes(), report.outcomes.len());
    match report.stuck_from {
        Some(k) => println!("stuck from transaction {k}"),
        None => println!("never stuck"),
    }
    if let Some(path) = args.out {
        write_trace(&path, &report.trace)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn write_trace(path: &Path, trace: &rebalsim::trace::MetricsTrace) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    trace.write_csv(std::io::BufWriter::new(file))?;
    Ok(())
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seeds = vec![seed];
    }
    if let Some(seeds) = args.seeds {
        config.seeds = seeds;
    }
    let seeds_env: Vec<String> = config.seeds.iter().map(u64::to_string).collect();
    let mut transport = match (&args.agent_cmd, &args.listen) {
        (Some(cmd), _) => {
            std::env::set_var("REBALSIM_SEEDS", seeds_env.join(","));
            LineTransport::spawn(cmd)?
        }
        (None, Some(addr)) => {
            let listener = TcpListener::bind(addr)?;
            eprintln!("listening on {}", listener.local_addr()?);
            let (stream, peer) = listener.accept()?;
            eprintln!("agent connected from {peer}");
            LineTransport::from_tcp(stream)?
        }
        (None, None) => bail!("either --agent-cmd or --listen is required"),
    };
    let options = config.agent.bridge_options();
    let episodes = bridge::serve(&mut transport, &config.sim_config(), &options)?;
    drop(transport);
    let out = args.out.or(config.output_dir);
    for (k, ep) in episodes.iter().enumerate() {
        println!(
            "episode {k}  seed {}  steps {}  final fortune {:.6}",
            ep.seed,
            ep.trace.len(),
            ep.trace.final_fortune()
        );
        if let Some(dir) = &out {
            fs::create_dir_all(dir)?;
            write_trace(&dir.join(format!("episode{k}_seed{}.csv", ep.seed)), &ep.trace)?;
            fs::write(
                dir.join(format!("episode{k}_seed{}.actions.json", ep.seed)),
                ep.log.to_json()? + "\n",
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(args: ReplayArgs) -> Result<ExitCode> {
    let config = load_config(&args.config)?;
    let text = fs::read_to_string(&args.log).with_context(|| format!("reading {}", args.log.display()))?;
    let log = ActionLog::from_json(&text)?;
    let trace = bridge::replay_policy(&log, &config.sim_config(), &config.agent.bridge_options())?;
    write_trace(&args.out, &trace)?;
    println!("replayed {} steps, final fortune {:.6}", trace.len(), trace.final_fortune());
    Ok(ExitCode::SUCCESS)
}

fn constant_agent(args: ConstantAgentArgs) -> Result<ExitCode> {
    let seeds = match args.seeds {
        Some(s) => s,
        None => match std::env::var("REBALSIM_SEEDS") {
            Ok(s) if !s.is_empty() => parse_seed_range(&s).map_err(anyhow::Error::msg)?,
            _ => vec![0],
        },
    };
    let action = [args.action[0], args.action[1]];
    let mut transport = match &args.connect {
        Some(addr) => LineTransport::connect(addr.as_str())?,
        None => LineTransport::new(std::io::stdin(), std::io::stdout()),
    };
    let rewards = bridge::run_agent(&mut transport, &seeds, Duration::from_secs(600), |_, _| action)?;
    for (seed, r) in seeds.iter().zip(rewards) {
        eprintln!("seed {seed}: {} rewards, total {}", r.len(), r.iter().sum::<f64>());
    }
    Ok(ExitCode::SUCCESS)
}
