mod ops;
mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use castleforge::config::RunConfig;
use castleforge::io::{self, Certificate, Claim};
use castleforge::Error;
use clap::{Args, Parser, Subcommand};

const EXIT_CLAIM: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;

#[derive(Parser)]
#[command(name = "castleforge", version, about = "Certified castles, tilings and comparison witnesses for free actions")]
struct Cli {
    /// System spec, or a file holding one (`dyadic`, `odometer:2;2`, `fibonacci`, ...).
    #[arg(long, global = true)]
    system: Option<String>,
    /// Result file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Certificate file; defaults to `<out>.cert.json` when `--out` is set.
    #[arg(long, global = true)]
    certificate: Option<PathBuf>,
    /// Fully deterministic run (the only mode; accepted for scripts).
    #[arg(long, global = true)]
    seedless: bool,
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a clopen castle with almost invariant shapes.
    Castle(CastleArgs),
    /// Quasitile a box region of a group.
    Tile(TileArgs),
    /// Greedy subequivalence witness for A ≺ B.
    Subequiv(SubequivArgs),
    /// Absorb a castle's remainder into its reserve levels.
    Match(MatchArgs),
    /// Split a clopen set into m almost equal disjoint pieces.
    Divide(DivideArgs),
    /// Orthogonal almost invariant function pair.
    Gamma(GammaArgs),
    /// Coding tree of an irrational rotation.
    Rotate(RotateArgs),
    /// Re-verify artifacts and certificates.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Banach density window bounds as a table.
    Density(DensityArgs),
    /// Run the operation described by a config file.
    Run { config: PathBuf },
}

#[derive(Args)]
struct CastleArgs {
    #[arg(long = "K", allow_hyphen_values = true)]
    k: String,
    #[arg(long)]
    delta: String,
    #[arg(long)]
    eps: String,
    #[arg(long = "index-bound")]
    index_bound: Option<String>,
}

#[derive(Args)]
struct TileArgs {
    #[arg(long)]
    group: Option<String>,
    #[arg(long = "K", allow_hyphen_values = true)]
    k: String,
    #[arg(long)]
    delta: String,
    #[arg(long)]
    eps: String,
    /// Side length of the region `E = [0, n)^d`.
    #[arg(long = "box")]
    side: String,
    #[arg(long, allow_hyphen_values = true)]
    tile: Option<String>,
    /// Also search a box with property (*) for this constant.
    #[arg(long)]
    c: Option<String>,
    #[arg(long = "index-bound")]
    index_bound: Option<String>,
}

#[derive(Args)]
struct SubequivArgs {
    #[arg(long = "A")]
    a: String,
    #[arg(long = "B")]
    b: String,
    #[arg(long = "F", allow_hyphen_values = true)]
    f: String,
}

#[derive(Args)]
struct MatchArgs {
    /// Castle artifact to complete.
    #[arg(long)]
    castle: PathBuf,
    #[arg(long = "F", allow_hyphen_values = true)]
    f: String,
    #[arg(long)]
    reserve: String,
    #[arg(long = "K", allow_hyphen_values = true)]
    k: Option<String>,
    #[arg(long)]
    delta: Option<String>,
}

#[derive(Args)]
struct DivideArgs {
    #[arg(long = "U")]
    u: String,
    #[arg(long)]
    m: String,
    #[arg(long)]
    eta: String,
}

#[derive(Args)]
struct GammaArgs {
    #[arg(long = "L", allow_hyphen_values = true)]
    l: String,
    #[arg(long)]
    eps: String,
    /// Sets artifact holding the partition.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Use the atoms of this level as the partition.
    #[arg(long = "partition-level")]
    partition_level: Option<String>,
    /// Castle artifact; otherwise the one-tower castle of `--level`.
    #[arg(long)]
    castle: Option<PathBuf>,
    #[arg(long)]
    level: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tile: Option<String>,
}

#[derive(Args)]
struct RotateArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long)]
    depth: String,
    #[arg(long, allow_hyphen_values = true)]
    folner: Option<String>,
    /// `uniform` or `fixed:c1,c2,...`.
    #[arg(long)]
    schedule: Option<String>,
    #[arg(long)]
    samples: Option<String>,
}

#[derive(Args)]
struct DensityArgs {
    #[arg(long = "A")]
    a: String,
    /// Følner indices: `0,1,2` or `0..=12`.
    #[arg(long)]
    windows: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_claim_failure() {
        EXIT_CLAIM
    } else if e.is_precondition() {
        EXIT_PRECONDITION
    } else {
        EXIT_PARSE
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Subcommand flags as config entries.
fn params(command: &Command) -> (&'static str, Vec<(&'static str, Option<String>)>) {
    match command {
        Command::Castle(a) => (
            "castle",
            vec![("K", Some(a.k.clone())), ("delta", Some(a.delta.clone())), ("eps", Some(a.eps.clone())), ("index_bound", a.index_bound.clone())],
        ),
        Command::Tile(a) => (
            "tile",
            vec![
                ("group", a.group.clone()),
                ("K", Some(a.k.clone())),
                ("delta", Some(a.delta.clone())),
                ("eps", Some(a.eps.clone())),
                ("box", Some(a.side.clone())),
                ("tile", a.tile.clone()),
                ("c", a.c.clone()),
                ("index_bound", a.index_bound.clone()),
            ],
        ),
        Command::Subequiv(a) => {
            ("subequiv", vec![("A", Some(a.a.clone())), ("B", Some(a.b.clone())), ("F", Some(a.f.clone()))])
        }
        Command::Match(a) => (
            "match",
            vec![
                ("castle", Some(path_str(&a.castle))),
                ("F", Some(a.f.clone())),
                ("reserve", Some(a.reserve.clone())),
                ("K", a.k.clone()),
                ("delta", a.delta.clone()),
            ],
        ),
        Command::Divide(a) => {
            ("divide", vec![("U", Some(a.u.clone())), ("m", Some(a.m.clone())), ("eta", Some(a.eta.clone()))])
        }
        Command::Gamma(a) => (
            "gamma",
            vec![
                ("L", Some(a.l.clone())),
                ("eps", Some(a.eps.clone())),
                ("partition", a.partition.as_deref().map(path_str)),
                ("partition_level", a.partition_level.clone()),
                ("castle", a.castle.as_deref().map(path_str)),
                ("level", a.level.clone()),
                ("tile", a.tile.clone()),
            ],
        ),
        Command::Rotate(a) => (
            "rotate",
            vec![
                ("alpha", a.alpha.clone()),
                ("depth", Some(a.depth.clone())),
                ("folner", a.folner.clone()),
                ("schedule", a.schedule.clone()),
                ("samples", a.samples.clone()),
            ],
        ),
        Command::Density(a) => ("density", vec![("A", Some(a.a.clone())), ("windows", a.windows.clone())]),
        Command::Verify { .. } | Command::Run { .. } => unreachable!("handled separately"),
    }
}

/// Flags win over the config file.
fn build_config(cli: &Cli) -> castleforge::Result<RunConfig> {
    let mut cfg = match &cli.command {
        Command::Run { config } => {
            let text = fs::read_to_string(config).map_err(|e| Error::Parse(format!("{}: {e}", config.display())))?;
            RunConfig::parse(&text)?
        }
        command => {
            let mut cfg = RunConfig::default();
            let (op, entries) = params(command);
            cfg.set("run", "operation", op)?;
            for (key, value) in entries {
                if let Some(v) = value {
                    cfg.set("params", key, v)?;
                }
            }
            cfg
        }
    };
    if let Some(s) = &cli.system {
        cfg.set("system", "spec", ops::system_text(s)?.trim())?;
    }
    if let Some(p) = &cli.out {
        cfg.set("output", "out", path_str(p))?;
    }
    if let Some(p) = &cli.certificate {
        cfg.set("output", "certificate", path_str(p))?;
    }
    if cli.seedless {
        cfg.set("run", "seedless", "true")?;
    }
    // Re-validate values that came from flags.
    RunConfig::parse(&cfg.canonical())
}

fn print_claims(claims: &[Claim]) {
    for c in claims {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let rel = serde_json::to_value(c.relation).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        let detail = if c.detail.is_empty() { String::new() } else { format!(" ({})", c.detail) };
        println!("  {verdict} {}: {} {rel} {}{detail}", c.name, c.value, c.bound);
    }
}

fn write(path: &Path, text: &str) -> Result<(), u8> {
    fs::write(path, text).map_err(|e| {
        eprintln!("error: cannot write {}: {e}", path.display());
        EXIT_PARSE
    })
}

fn run_operation(cli: &Cli) -> Result<(), u8> {
    let cfg = build_config(cli).map_err(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })?;
    let outcome = ops::execute(&cfg).map_err(|e| {
        eprintln!("error: {e}");
        exit_code(&e)
    })?;
    let op = cfg.operation().unwrap_or_default();
    let out = cfg.path("out");
    match &out {
        Some(p) => write(p, &outcome.output)?,
        None => print!("{}", outcome.output),
    }
    let cert = Certificate::new(op, outcome.digest.clone(), outcome.claims.clone());
    let cert_path = cfg.path("certificate").or_else(|| out.as_ref().map(|p| p.with_extension("cert.json")));
    if let Some(p) = &cert_path {
        write(p, &io::to_canonical(&cert))?;
    }
    // The report goes to stderr when stdout carries the result.
    let report = |line: String| if out.is_some() { println!("{line}") } else { eprintln!("{line}") };
    report(format!("{op}: {}", if cert.pass { "pass" } else { "FAIL" }));
    for n in &outcome.notes {
        report(format!("  {n}"));
    }
    if out.is_some() {
        print_claims(&cert.claims);
    } else {
        for c in cert.claims.iter().filter(|c| !c.pass) {
            eprintln!("  FAIL {}: {} vs {}", c.name, c.value, c.bound);
        }
    }
    if cert.pass {
        Ok(())
    } else {
        Err(EXIT_CLAIM)
    }
}

fn run_verify(files: &[PathBuf], jobs: usize) -> Result<(), u8> {
    let paths: Vec<&Path> = files.iter().map(PathBuf::as_path).collect();
    let mut worst = 0u8;
    for (path, result) in paths.iter().zip(verify::verify_all(&paths, jobs)) {
        let code = match result {
            Err(e) => {
                println!("{}: error: {e}", path.display());
                exit_code(&e)
            }
            Ok(r) => {
                let pass = r.claims.iter().all(|c| c.pass);
                println!("{}: {}", path.display(), if pass { "pass" } else { "FAIL" });
                for n in &r.notes {
                    println!("  {n}");
                }
                print_claims(&r.claims);
                if pass {
                    0
                } else {
                    EXIT_CLAIM
                }
            }
        };
        // Parse errors outrank precondition failures, which outrank claims.
        let rank = |c: u8| match c {
            EXIT_PARSE => 3,
            EXIT_PRECONDITION => 2,
            EXIT_CLAIM => 1,
            _ => 0,
        };
        if rank(code) > rank(worst) {
            worst = code;
        }
    }
    if worst == 0 {
        Ok(())
    } else {
        Err(worst)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify { files } => run_verify(files, cli.jobs),
        _ => run_operation(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
