use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use surveil_core::bcd::{BcdOptions, Scheme};
use surveil_core::config::{db_to_linear, load_config, SystemConfig};
use surveil_core::error::CoreError;
use surveil_core::experiment::{
    run_sweep, trial_trace, write_csv, write_records, Axis, SweepResult, SweepSpec,
};
use surveil_core::metrics::{eaves_indicator, LinkTerms, Powers};

/// Directory used for output files when no explicit path is given.
const OUT_DIR_ENV: &str = "SURVEIL_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "surveil",
    version,
    about = "Monte Carlo simulator for STAR-RIS assisted proactive eavesdropping",
    arg_required_else_help = true,
    after_help = "Reference values (--preset reference): rho_s = 10 dB (P_S = 10, sigma_D^2 = sigma_E^2 = 1), \
C0 = -30 dB at D0 = 1 m, mu = 3.6, N = 8, N_T = N_R = 4, distances 80/40/40/40 m.\n\
The desk preset (default) keeps these but sets C0 = 0 dB and d_SD/d_SR/d_RD/d_RE = 1/2/2/3 m.\n\
Output files go to $SURVEIL_OUT_DIR when set, otherwise to stdout (trial, sweep) or '.' (demo).\n\
Exit status: 0 ok, 1 bad usage, 2 runtime failure."
)]
struct Cli {
    /// Log progress and warnings to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one Monte Carlo trial and print the final SINRs per scheme.
    Trial(TrialArgs),
    /// Sweep rho_e or sigma_si2 and write P_NOP with 95% intervals as CSV.
    Sweep(SweepArgs),
    /// Desk-scale reproduction: the rho_e sweep and the sigma_si2 sweep at rho_e = 10 dB.
    Demo(DemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// Short-range geometry in which jamming and self-interference matter.
    Desk,
    /// Reference path-loss values with 80/40/40/40 m links.
    Reference,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Starting point before the config file and flags are applied.
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// TOML file with any SystemConfig fields.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Surface elements N.
    #[arg(long)]
    n: Option<usize>,
    /// Eavesdropper transmit antennas N_T.
    #[arg(long)]
    n_t: Option<usize>,
    /// Eavesdropper receive antennas N_R.
    #[arg(long)]
    n_r: Option<usize>,
    /// Source power P_S (linear, default 10).
    #[arg(long)]
    p_s: Option<f64>,
    /// Jamming power P_E (linear, default 10).
    #[arg(long, conflicts_with = "rho_e_db")]
    p_e: Option<f64>,
    /// Jamming SNR rho_e = P_E / sigma_E^2 in dB.
    #[arg(long, allow_hyphen_values = true)]
    rho_e_db: Option<f64>,
    /// Noise variance at the suspicious receiver (default 1).
    #[arg(long)]
    sigma_d2: Option<f64>,
    /// Noise variance at the eavesdropper (default 1).
    #[arg(long)]
    sigma_e2: Option<f64>,
    /// Self-interference variance (linear, default 0.1).
    #[arg(long, conflicts_with = "sigma_si2_db")]
    sigma_si2: Option<f64>,
    /// Self-interference variance in dB (default -10).
    #[arg(long, allow_hyphen_values = true)]
    sigma_si2_db: Option<f64>,
    /// Reference channel gain C0 (linear).
    #[arg(long)]
    c0: Option<f64>,
    /// Reference distance D0 in metres (default 1).
    #[arg(long)]
    d0: Option<f64>,
    /// Path-loss exponent (default 3.6).
    #[arg(long)]
    mu: Option<f64>,
    /// Source to suspicious receiver distance (m).
    #[arg(long)]
    d_sd: Option<f64>,
    /// Source to surface distance (m).
    #[arg(long)]
    d_sr: Option<f64>,
    /// Surface to suspicious receiver distance (m).
    #[arg(long)]
    d_rd: Option<f64>,
    /// Surface to eavesdropper distance (m).
    #[arg(long)]
    d_re: Option<f64>,
    /// Master seed (default 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Relative decrease that stops the outer iterations.
    #[arg(long, default_value_t = 1e-3)]
    eps1: f64,
    /// Maximum outer iterations.
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    /// Gaussian randomization draws.
    #[arg(long, default_value_t = 100)]
    randomization: usize,
}

impl ConfigArgs {
    fn system(&self) -> Result<SystemConfig, CoreError> {
        let base = match self.preset {
            Preset::Desk => SystemConfig::desk(),
            Preset::Reference => SystemConfig::default(),
        };
        let mut cfg = match &self.config {
            Some(path) => load_config(path, &base)?,
            None => base,
        };
        macro_rules! set {
            ($($f:ident),*) => {$( if let Some(v) = self.$f { cfg.$f = v; } )*};
        }
        set!(
            n, n_t, n_r, p_s, p_e, sigma_d2, sigma_e2, sigma_si2, c0, d0, mu, d_sd, d_sr, d_rd,
            d_re, seed
        );
        if let Some(db) = self.rho_e_db {
            cfg.set_rho_e_db(db);
        }
        if let Some(db) = self.sigma_si2_db {
            cfg.sigma_si2 = db_to_linear(db);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self) -> Result<BcdOptions, CoreError> {
        if !(self.eps1 > 0.0) {
            return Err(CoreError::InvalidConfig {
                field: "eps1",
                reason: "must be positive".into(),
            });
        }
        let mut opts = BcdOptions {
            eps1: self.eps1,
            n_max: self.n_max,
            randomization: self.randomization,
            ..BcdOptions::default()
        };
        opts.transmit.randomization = self.randomization;
        Ok(opts)
    }
}

#[derive(Args, Debug)]
struct TrialArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Trial index; selects the channel and initialization streams.
    #[arg(long, default_value_t = 0)]
    trial: u64,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL)]
    schemes: Vec<Scheme>,
    /// Also print each scheme's convergence trace as JSON lines.
    #[arg(long)]
    trace: bool,
    /// Output file ('-' for stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Swept parameter.
    #[arg(long)]
    axis: Axis,
    /// Comma-separated axis values in dB.
    #[arg(
        long,
        value_delimiter = ',',
        required = true,
        allow_hyphen_values = true
    )]
    values: Vec<f64>,
    /// Comma-separated schemes.
    #[arg(long, value_delimiter = ',', default_values_t = Scheme::ALL)]
    schemes: Vec<Scheme>,
    /// Trials per point.
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// CSV output ('-' for stdout).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write every trial as JSON lines.
    #[arg(long, value_name = "FILE")]
    records: Option<PathBuf>,
    /// Fill the mean_ms column (the file then differs between runs).
    #[arg(long)]
    timing: bool,
}

#[derive(Args, Debug)]
struct DemoArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Trials per point.
    #[arg(long, default_value_t = 200)]
    trials: u64,
    /// Directory for demo-rho_e.csv and demo-sigma_si2.csv.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidConfig { .. } | CoreError::Parse(_) | CoreError::Unsupported(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = if cli.verbose { "info" } else { "error" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Trial(a) => trial(a),
        Command::Sweep(a) => sweep(a),
        Command::Demo(a) => demo(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// `explicit`, else `$SURVEIL_OUT_DIR/default_name`, else stdout.
fn open_output(explicit: Option<&Path>, default_name: &str) -> Result<Box<dyn Write>, Failure> {
    let path = match explicit {
        Some(p) if p == Path::new("-") => None,
        Some(p) => Some(p.to_path_buf()),
        None => std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)),
    };
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            }
            let f = File::create(&p).map_err(|e| io_failure(&p, e))?;
            log::info!("writing {}", p.display());
            Ok(Box::new(BufWriter::new(f)))
        }
    }
}

fn trial(a: &TrialArgs) -> Result<(), Failure> {
    let cfg = a.config.system()?;
    let opts = a.config.options()?;
    let pw = Powers::from_config(&cfg);
    let mut out = open_output(a.output.as_deref(), &format!("trial-{}.txt", a.trial))?;
    let mut text = String::new();
    for &scheme in &a.schemes {
        let (ch, trace) = trial_trace(&cfg, scheme, a.trial, &opts)?;
        let terms = LinkTerms::evaluate(&ch, &trace.star, &trace.pair)?;
        let (d, e) = (terms.sinr_d(&pw), terms.sinr_e(&pw));
        text += &format!(
            "scheme={scheme} seed={} trial={} sinr_d={d:.6e} sinr_e={e:.6e} indicator={} iterations={} termination={} objective={:.6e}\n",
            cfg.seed,
            a.trial,
            eaves_indicator(e, d),
            trace.iterations.len(),
            trace.termination.as_str(),
            trace.final_objective(),
        );
        if a.trace {
            text += &trace.to_jsonl();
        }
    }
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let mut spec = SweepSpec::new(a.axis, a.values.clone(), a.trials, a.config.system()?);
    spec.schemes = a.schemes.clone();
    spec.options = a.config.options()?;
    spec.record_timing = a.timing;
    let result = run_sweep(&spec)?;
    let out = open_output(a.output.as_deref(), &format!("sweep-{}.csv", a.axis))?;
    write_csv(&result.rows, out)?;
    if let Some(path) = &a.records {
        let f = File::create(path).map_err(|e| io_failure(path, e))?;
        write_records(&result.records, BufWriter::new(f))?;
    }
    Ok(())
}

fn demo(a: &DemoArgs) -> Result<(), Failure> {
    let base = a.config.system()?;
    let opts = a.config.options()?;
    let dir = a
        .out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;

    let mut fig3_base = base.clone();
    fig3_base.set_rho_e_db(10.0);
    let runs = [
        (Axis::RhoE, vec![-5.0, 0.0, 5.0, 10.0, 15.0], base),
        (
            Axis::SigmaSi2,
            vec![-30.0, -20.0, -10.0, 0.0, 10.0],
            fig3_base,
        ),
    ];
    for (axis, values, cfg) in runs {
        let mut spec = SweepSpec::new(axis, values, a.trials, cfg);
        spec.options = opts.clone();
        let result = run_sweep(&spec)?;
        let path = dir.join(format!("demo-{axis}.csv"));
        let f = File::create(&path).map_err(|e| io_failure(&path, e))?;
        write_csv(&result.rows, BufWriter::new(f))?;
        print_table(axis, &result);
        println!("wrote {}\n", path.display());
    }
    Ok(())
}

fn print_table(axis: Axis, result: &SweepResult) {
    let schemes: Vec<Scheme> = Scheme::ALL
        .into_iter()
        .filter(|s| result.rows.iter().any(|r| r.scheme == *s))
        .collect();
    print!("P_NOP vs {axis:<10}");
    for s in &schemes {
        print!("{:>10}", s.as_str());
    }
    println!();
    let mut values: Vec<f64> = result.rows.iter().map(|r| r.value_db).collect();
    values.dedup();
    for v in values {
        print!("{:>9} dB", v);
        for s in &schemes {
            match result.row(v, *s) {
                Some(r) => print!("{:>10.3}", r.p_nop),
                None => print!("{:>10}", "-"),
            }
        }
        println!();
    }
}
