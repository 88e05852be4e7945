use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use stagewise::bands::{classify, z_star, BandKind, HSpec};
use stagewise::mc::{estimate_risk, REPLICATION_CAP};
use stagewise::report::{bands_report, format_table1, seq_rows, McRow, SeqRow};
use stagewise::seqtest::{table1, GaussianHypotheses};
use stagewise::{Error, SamplerSpec};

#[derive(Parser)]
#[command(name = "stagewise", version, about = "Multistage boundary-crossing samplers and multistage tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo risk of one sampler over a grid of boundaries.
    Simulate(SimulateArgs),
    /// Band classification and risk constants for a cost ratio h.
    Bands(BandsArgs),
    /// Variable-stage test against group-sequential tests.
    Table1(Table1Args),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SamplerKind {
    Geometric,
    Interior,
    Boundary,
    #[value(name = "fixed_group")]
    FixedGroup,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Csv,
    Json,
    Text,
}

/// Options shared by every command. `--config` names a JSON object with the
/// same keys as the long flags (dashes as underscores); flags win.
#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
struct Common {
    /// Replications (per truth for table1); accepts forms like 1e4.
    #[arg(long, value_parser = parse_count)]
    #[serde(default, deserialize_with = "de_count")]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    sampler: Option<SamplerKind>,
    /// Comma-separated, strictly increasing boundaries.
    #[arg(long, value_delimiter = ',')]
    a: Option<Vec<f64>>,
    /// Cost ratio as c*x^p*log^q.
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    /// Quantile for geometric and boundary samplers; boundary solves z* when absent.
    #[arg(long, allow_hyphen_values = true)]
    z: Option<f64>,
    /// Stage count for interior and boundary samplers; taken from h's band when absent.
    #[arg(long)]
    m: Option<u32>,
    /// Stage length for fixed_group.
    #[arg(long)]
    group: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
struct BandsArgs {
    #[arg(long)]
    h: Option<String>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    a: Option<f64>,
    /// Also report m* for this constant cost ratio.
    #[arg(long)]
    d_over_c: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

#[derive(Args, Clone, Debug, Default, Serialize, Deserialize)]
struct Table1Args {
    /// Comma-separated cost ratios d/c.
    #[arg(long, value_delimiter = ',')]
    d_over_c: Option<Vec<f64>>,
    /// Per-stage cost.
    #[arg(long)]
    d: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta1: Option<f64>,
    /// Group sizes 1..=k_max are searched for the best k.
    #[arg(long)]
    k_max: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
}

fn parse_count(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(v >= 0.0 && v.fract() == 0.0 && v <= u64::MAX as f64) {
        return Err(format!("{s:?} is not a nonnegative integer"));
    }
    Ok(v as u64)
}

fn de_count<'de, D: Deserializer<'de>>(de: D) -> Result<Option<u64>, D::Error> {
    match Option::<Value>::deserialize(de)? {
        None | Some(Value::Null) => Ok(None),
        Some(Value::Number(n)) => parse_count(&n.to_string()).map(Some).map_err(serde::de::Error::custom),
        Some(Value::String(s)) => parse_count(&s).map(Some).map_err(serde::de::Error::custom),
        Some(other) => Err(serde::de::Error::custom(format!("reps: {other} is not a count"))),
    }
}

enum Failure {
    /// Exit code 2.
    Config(String),
    /// Exit code 1.
    Runtime(String),
}

impl Failure {
    fn context(self, what: &str) -> Self {
        match self {
            Failure::Config(m) => Failure::Config(format!("{what}: {m}")),
            Failure::Runtime(m) => Failure::Runtime(format!("{what}: {m}")),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_)
            | Error::NoFiniteBand(_)
            | Error::Precondition(_)
            | Error::Parse(_)
            | Error::IterateDomain { .. } => Failure::Config(e.to_string()),
            Error::NotConverged(_) | Error::StageCap(_) | Error::Inactive => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn config(msg: impl Into<String>) -> Failure {
    Failure::Config(msg.into())
}

/// Overlays the flags onto the `--config` file, if any.
fn resolve<T>(flags: T, config_path: Option<&PathBuf>) -> Result<T, Failure>
where
    T: Serialize + for<'de> Deserialize<'de> + Default,
{
    let Some(path) = config_path else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(path).map_err(|e| config(format!("--config {}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text).map_err(|e| config(format!("--config {}: {e}", path.display())))?;
    let Value::Object(mut merged) = file else {
        return Err(config(format!("--config {}: expected a JSON object", path.display())));
    };
    let known = to_object(&T::default())?;
    if let Some(key) = merged.keys().find(|k| !known.contains_key(*k)) {
        return Err(config(format!("--config {}: unknown key {key:?}", path.display())));
    }
    for (k, v) in to_object(&flags)? {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| config(format!("--config {}: {e}", path.display())))
}

fn to_object<T: Serialize>(v: &T) -> Result<Map<String, Value>, Failure> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => Ok(m),
        _ => Err(Failure::Runtime("internal: arguments do not serialize to an object".into())),
    }
}

fn parse_h(s: &str) -> Result<HSpec, Failure> {
    s.parse().map_err(|e: Error| Failure::from(e).context("--h"))
}

struct Run {
    reps: u64,
    seed: u64,
    format: Format,
    out: Option<PathBuf>,
}

fn setup(common: &Common, default_format: Format) -> Result<Run, Failure> {
    let reps = common.reps.unwrap_or(10_000);
    if !(2..=REPLICATION_CAP).contains(&reps) {
        return Err(config(format!("--reps: {reps} must be in [2, {REPLICATION_CAP}]")));
    }
    if let Some(workers) = common.workers {
        if workers == 0 {
            return Err(config("--workers: must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(Run {
        reps,
        seed: common.seed.unwrap_or(0),
        format: common.format.unwrap_or(default_format),
        out: common.out.clone(),
    })
}

fn open_out(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| Failure::Runtime(format!("--out {}: {e}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(run: &Run, rows: &[T]) -> Result<(), Failure> {
    let mut w = open_out(&run.out)?;
    match run.format {
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for row in rows {
                csv.serialize(row).map_err(|e| Failure::Runtime(e.to_string()))?;
            }
            csv.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(w)?;
        }
        Format::Text => return Err(config("--format: text is only available for table1")),
    }
    w.flush()?;
    Ok(())
}

fn simulate(flags: SimulateArgs) -> Result<(), Failure> {
    let args = resolve(flags.clone(), flags.common.config.as_ref())?;
    let run = setup(&args.common, Format::Csv)?;
    let kind = args.sampler.ok_or_else(|| config("--sampler is required"))?;
    let grid = args.a.clone().ok_or_else(|| config("--a is required"))?;
    if grid.is_empty() || grid.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(config("--a: boundaries must be positive and finite"));
    }
    if grid.windows(2).any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
        return Err(config("--a: grid must be strictly increasing"));
    }
    let mu = args.mu.unwrap_or(1.0);
    let h = match (&args.h, kind) {
        (Some(s), _) => parse_h(s)?,
        (None, SamplerKind::Geometric | SamplerKind::FixedGroup) => HSpec::constant(1.0)?,
        (None, _) => return Err(config("--h is required for interior and boundary samplers")),
    };
    let spec = match kind {
        SamplerKind::Geometric => SamplerSpec::geometric(args.z.unwrap_or(0.0), mu),
        SamplerKind::FixedGroup => {
            let group = args.group.ok_or_else(|| config("--group is required for fixed_group"))?;
            SamplerSpec::fixed_group(group, mu)
        }
        SamplerKind::Interior => {
            let band = classify(&h).map_err(|e| Failure::from(e).context("--h"))?;
            let m = args.m.unwrap_or(band.m);
            if band.kind != BandKind::Interior || band.m != m {
                return Err(config(format!(
                    "--m: band mismatch, interior sampler with m = {m} but h = {h} is in band m = {} ({:?})",
                    band.m, band.kind
                )));
            }
            SamplerSpec::interior(m, h, mu)
        }
        SamplerKind::Boundary => {
            let m = match args.m {
                Some(m) => m,
                None => classify(&h).map_err(|e| Failure::from(e).context("--h"))?.m,
            };
            let z = match args.z {
                Some(z) => z,
                None => z_star(m, mu, &h).map_err(|e| Failure::from(e).context("--z (solving z*)"))?,
            };
            SamplerSpec::boundary(m, z, mu)
        }
    }
    .map_err(Failure::from)?;

    let mut rows = Vec::with_capacity(grid.len());
    for (i, &a) in grid.iter().enumerate() {
        eprintln!("simulate [{}/{}] {} a={a}", i + 1, grid.len(), spec.label());
        let est = estimate_risk(&spec, a, &h, run.reps, run.seed)?;
        rows.push(McRow::new(&est));
    }
    emit(&run, &rows)
}

fn bands(flags: BandsArgs) -> Result<(), Failure> {
    let args = resolve(flags.clone(), flags.common.config.as_ref())?;
    let run = setup(&args.common, Format::Json)?;
    let h = parse_h(args.h.as_deref().ok_or_else(|| config("--h is required"))?)?;
    let a = args.a.ok_or_else(|| config("--a is required"))?;
    let report = bands_report(&h, args.mu.unwrap_or(1.0), a, args.d_over_c)?;
    match run.format {
        Format::Json => {
            let mut w = open_out(&run.out)?;
            serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(w)?;
            w.flush()?;
            Ok(())
        }
        _ => emit(&run, &[report]),
    }
}

fn table1_cmd(flags: Table1Args) -> Result<(), Failure> {
    let args = resolve(flags.clone(), flags.common.config.as_ref())?;
    let run = setup(&args.common, Format::Csv)?;
    let ratios = args.d_over_c.clone().unwrap_or_else(|| vec![1.0, 5.0, 10.0]);
    if ratios.is_empty() {
        return Err(config("--d-over-c: at least one ratio is needed"));
    }
    let d = args.d.unwrap_or(0.001);
    let k_max = args.k_max.unwrap_or(100);
    if k_max == 0 {
        return Err(config("--k-max: must be >= 1"));
    }
    let hyp = GaussianHypotheses::new(args.theta0.unwrap_or(-0.25), args.theta1.unwrap_or(0.25))
        .map_err(|e| Failure::from(e).context("--theta0/--theta1"))?;
    let ks: Vec<u64> = (1..=k_max).collect();
    eprintln!("table1: {} ratios, k in 1..={k_max}, {} reps per truth", ratios.len(), run.reps);
    let blocks = table1(hyp, d, &ratios, &ks, run.reps, run.seed)?;
    for b in &blocks {
        eprintln!("table1: d/c = {} best k = {}", b.d_over_c, b.best_k);
    }
    match run.format {
        Format::Text => {
            let mut w = open_out(&run.out)?;
            w.write_all(format_table1(&blocks).as_bytes())?;
            w.flush()?;
            Ok(())
        }
        _ => {
            let rows: Vec<SeqRow> = blocks.iter().flat_map(|b| &b.rows).flat_map(|r| seq_rows(&r.report)).collect();
            emit(&run, &rows)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bands(a) => bands(a),
        Command::Table1(a) => table1_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
