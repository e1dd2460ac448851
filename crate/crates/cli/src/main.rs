use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use iaq::batch::{batch_indexes, recover_index};
use iaq::bench::{self, BenchError, BenchParams, Experiment};
use iaq::dataset::{derive_all_ids, ingest_csv, sample, synthetic, Dataset, Schema};
use iaq::field::{Field, FieldSpec};
use iaq::iaq::format;
use iaq::indexgen::plan::plan_batch;
use iaq::indexgen::{build_family, Direction, FamilyKind, IndexFamily};
use iaq::protocol::deploy::ClientInfo;
use iaq::protocol::{
    client_execute, DeployConfig, Deployment, Endpoint, Fault, Faulty, ProtocolError, TcpEndpoint, TcpServer,
};
use iaq::query::{parse_batch, QueryError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const EXIT_USAGE: u8 = 2;
const EXIT_INSUFFICIENT: u8 = 3;

#[derive(Parser)]
#[command(name = "iaq", version, about = "Private aggregate queries over replicated databases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one index family from a CSV table.
    BuildIndex(BuildIndexArgs),
    /// Batch saved index families into per-server buckets.
    Batch(BatchArgs),
    /// Serve a deployment over TCP, one listener per server.
    Serve(ServeArgs),
    /// Run one or more ';'-separated queries in a single round.
    Query(QueryArgs),
    /// Write a synthetic table and its schema.
    GenSynthetic(GenArgs),
    /// Throughput experiments, written as CSV.
    Bench(BenchArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV table; the built-in hospital sample when omitted.
    #[arg(long, requires = "schema")]
    csv: Option<PathBuf>,
    /// Schema (TOML or JSON) for --csv.
    #[arg(long, requires = "csv")]
    schema: Option<PathBuf>,
    /// prime:<modulus>, prime:m31, prime:128|256|512, gf2e8 or gf2e16.
    #[arg(long)]
    field: Option<FieldSpec>,
}

impl DataArgs {
    fn load(&self, default_field: &FieldSpec) -> Result<Dataset> {
        let spec = self.field.clone().unwrap_or_else(|| default_field.clone());
        match (&self.csv, &self.schema) {
            (Some(csv), Some(schema)) => {
                require_file(schema, "schema")?;
                require_file(csv, "csv")?;
                let schema = Schema::load(schema).map_err(|e| usage(anyhow!(e)))?;
                let ds = ingest_csv(csv, &schema, &spec)?;
                Ok(derive_all_ids(ds)?)
            }
            _ => Ok(sample::dataset(&spec)?),
        }
    }
}

#[derive(Args)]
struct BuildIndexArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Group-by attribute: one index row per distinct value.
    #[arg(long)]
    group: String,
    /// Family name; defaults to the group attribute.
    #[arg(long)]
    keyword: Option<String>,
    /// Record filter such as "admit < 2022-06-01"; repeatable, ANDed.
    #[arg(long = "filter")]
    filters: Vec<String>,
    /// Ordering attribute for a MIN/MAX index.
    #[arg(long, requires = "direction")]
    order: Option<String>,
    #[arg(long, group = "direction")]
    max: bool,
    #[arg(long, group = "direction")]
    min: bool,
    #[arg(long, default_value = "index")]
    out: PathBuf,
}

#[derive(Args)]
struct BatchArgs {
    /// Directory written by build-index.
    #[arg(long, default_value = "index")]
    index_dir: PathBuf,
    /// Family keywords in batch-position order; repeatable.
    #[arg(long = "family", required = true)]
    families: Vec<String>,
    /// Bucket name; defaults to the families joined by '+'.
    #[arg(long)]
    name: Option<String>,
    /// Server coordinates, comma separated; defaults to u, u+1, ... for --servers servers.
    #[arg(long, value_delimiter = ',')]
    coords: Vec<u64>,
    #[arg(long, default_value_t = 4)]
    servers: usize,
    #[arg(long, default_value = "prime:m31")]
    field: FieldSpec,
    #[arg(long, default_value = "buckets")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DeployArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Deployment config; the built-in sample deployment when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Serve only the aggregation-set columns.
    #[arg(long)]
    essential: bool,
    /// Visit only index columns holding a nonzero.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    skip_zero_cols: Option<bool>,
    #[arg(long)]
    parallel: bool,
}

impl DeployArgs {
    fn deployment(&self, servers: Option<usize>) -> Result<Deployment> {
        let mut cfg = match &self.config {
            Some(path) => {
                require_file(path, "config")?;
                DeployConfig::load(path)?
            }
            None => DeployConfig::sample(),
        };
        if let Some(f) = &self.data.field {
            cfg.field = f.clone();
        }
        if let Some(n) = servers {
            cfg.servers = n;
        }
        cfg.essential |= self.essential;
        cfg.parallel |= self.parallel;
        if let Some(skip) = self.skip_zero_cols {
            cfg.skip_zero_cols = skip;
        }
        let ds = self.data.load(&cfg.field)?;
        Ok(Deployment::build(&ds, &cfg)?)
    }
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    deploy: DeployArgs,
    #[arg(long, default_value = "127.0.0.1")]
    bind: String,
    /// First port; server i listens on port + i. 0 picks free ports.
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// Overrides the config's server count.
    #[arg(long)]
    servers: Option<usize>,
    /// Where to write the client info (catalog, coordinates, addresses).
    #[arg(long, default_value = "client.json")]
    info: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// e.g. "SELECT SUM(days) FROM hospital WHERE patient = 3".
    query: String,
    #[command(flatten)]
    deploy: DeployArgs,
    /// Privacy threshold: colluding servers tolerated.
    #[arg(short = 't', long = "t", default_value_t = 1)]
    t: usize,
    /// Run N in-process servers.
    #[arg(long, conflicts_with = "servers")]
    local: Option<usize>,
    /// Remote servers host:port,...; needs --info.
    #[arg(long, value_delimiter = ',', requires = "info")]
    servers: Vec<String>,
    /// Client info written by `serve`.
    #[arg(long)]
    info: Option<PathBuf>,
    /// Simulate the last N servers being down.
    #[arg(long, default_value_t = 0)]
    down: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Hospital,
    Twitter,
    Mimic,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "hospital")]
    preset: Preset,
    #[arg(long, default_value_t = 1000)]
    records: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    /// Plain positional PIR over the records, no index.
    #[value(name = "goldberg")]
    Positional,
}

#[derive(Args)]
struct BenchArgs {
    /// vary-r, vary-p, vary-agg or vary-u.
    #[arg(required_unless_present = "baseline")]
    experiment: Option<Experiment>,
    /// Compare against a positional query over all records instead.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Swept values, comma separated; powers of two by default.
    #[arg(long, value_delimiter = ',')]
    values: Vec<u64>,
    #[arg(long)]
    field: Option<FieldSpec>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    agg: Option<usize>,
    #[arg(long)]
    u: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Fraction of records the baseline's filtered index keeps.
    #[arg(long, default_value_t = 0.1)]
    selectivity: f64,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    skip_zero_cols: Option<bool>,
    #[arg(long)]
    parallel: bool,
    /// Lift the desk-scale caps.
    #[arg(long)]
    full: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also check the sweep's trend; exits 1 when it is violated.
    #[arg(long)]
    check: bool,
}

#[derive(Debug)]
struct Coded {
    code: u8,
    source: anyhow::Error,
}

impl std::fmt::Display for Coded {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl std::error::Error for Coded {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    Coded {
        code: EXIT_USAGE,
        source: e,
    }
    .into()
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(usage(anyhow!("{what} file not found: {}", path.display())));
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if let Some(c) = e.downcast_ref::<Coded>() {
        return c.code;
    }
    if matches!(e.downcast_ref::<BenchError>(), Some(BenchError::Cap { .. } | BenchError::Params(_))) {
        return EXIT_USAGE;
    }
    if e.downcast_ref::<QueryError>().is_some() {
        return EXIT_USAGE;
    }
    if let Some(ProtocolError::InsufficientResponses { .. }) = e.downcast_ref::<ProtocolError>() {
        return EXIT_INSUFFICIENT;
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildIndex(a) => build_index(a),
        Command::Batch(a) => batch(a),
        Command::Serve(a) => serve(a),
        Command::Query(a) => query(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::Bench(a) => run_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn build_index(a: BuildIndexArgs) -> Result<()> {
    let ds = a.data.load(&FieldSpec::mersenne31())?;
    let filters = a
        .filters
        .iter()
        .map(|f| iaq::dataset::filter::Predicate::parse(f).ok_or_else(|| usage(anyhow!("bad filter '{f}'"))))
        .collect::<Result<Vec<_>>>()?;
    let kind = match a.order {
        Some(order_attr) => FamilyKind::Extremum {
            group_attr: a.group.clone(),
            order_attr,
            direction: if a.max { Direction::Max } else { Direction::Min },
            filters,
        },
        None if a.max || a.min => bail!(usage(anyhow!("--max/--min need --order"))),
        None => FamilyKind::Group {
            group_attr: a.group.clone(),
            filters,
        },
    };
    let keyword = a.keyword.unwrap_or(a.group);
    let start = Instant::now();
    let family = build_family(&ds, &keyword, kind)?;
    let elapsed = start.elapsed();
    let written = family.save(&a.out, &ds)?;
    let m = &family.manifest;
    println!(
        "{keyword}: {} p={} r={} nnz={} built in {:.6} s",
        m.filter,
        m.p,
        m.r,
        family.index.ccs().nnz(),
        elapsed.as_secs_f64()
    );
    for (label, row) in m.row_labels.iter().zip(family.index.to_dense()) {
        let bits: String = row.iter().map(|b| char::from(b'0' + *b)).collect();
        println!("  {bits}  {label}");
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn batch(a: BatchArgs) -> Result<()> {
    let field = Field::new(a.field.clone())?;
    let families = a
        .families
        .iter()
        .map(|kw| IndexFamily::load(&a.index_dir, kw).with_context(|| format!("loading family {kw}")))
        .collect::<Result<Vec<_>>>()?;
    let u = families.len() as u64;
    let coords: Vec<u64> = if a.coords.is_empty() {
        (u..u + a.servers as u64).collect()
    } else {
        a.coords.clone()
    };
    let xs = coords.iter().map(|&c| field.from_u64(c)).collect::<Result<Vec<_>, _>>()?;
    let indexes: Vec<_> = families.iter().map(|f| f.index.clone()).collect();
    let start = Instant::now();
    let out = batch_indexes(&field, &indexes, &a.families, &xs)?;
    let elapsed = start.elapsed();
    for w in &out.warnings {
        eprintln!("warning: {w:?}");
    }
    let refs: Vec<_> = out.buckets.iter().collect();
    for (j, fam) in families.iter().enumerate() {
        if recover_index(&field, &refs, j)?.ccs() != fam.index.ccs() {
            bail!("batch position {j} does not recover {}", fam.manifest.keyword);
        }
    }
    let name = a.name.unwrap_or_else(|| a.families.join("+"));
    fs::create_dir_all(&a.out)?;
    for (c, bucket) in coords.iter().zip(&out.buckets) {
        let path = a.out.join(format!("{name}.x{c}.iaqb"));
        let mut w = std::io::BufWriter::new(fs::File::create(&path)?);
        format::write_bucket(&mut w, &field, bucket)?;
        w.flush()?;
        println!("wrote {} (nnz={})", path.display(), bucket.ccs().nnz());
    }
    println!("batched u={u} in {:.6} s; every position recovers its index", elapsed.as_secs_f64());
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct RemoteInfo {
    addresses: Vec<String>,
    #[serde(flatten)]
    client: ClientInfo,
}

fn serve(a: ServeArgs) -> Result<()> {
    let d = a.deploy.deployment(a.servers)?;
    let mut servers = Vec::new();
    for (i, state) in d.servers.iter().enumerate() {
        let port = if a.port == 0 { 0 } else { a.port + i as u16 };
        let server = TcpServer::spawn(state.clone(), (a.bind.as_str(), port))?;
        println!(
            "server {i} x={} listening on {}",
            d.field.to_biguint(state.coord()),
            server.addr()
        );
        servers.push(server);
    }
    let info = RemoteInfo {
        addresses: servers.iter().map(|s| s.addr().to_string()).collect(),
        client: d.client_info(),
    };
    let tmp = a.info.with_extension("tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&info)?)?;
    fs::rename(&tmp, &a.info)?;
    println!("client info in {}", a.info.display());
    for s in servers {
        s.join();
    }
    Ok(())
}

fn query(a: QueryArgs) -> Result<()> {
    let specs = parse_batch(&a.query)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (field, catalog, cfg, mut endpoints, local) = if let Some(path) = &a.info {
        require_file(path, "client info")?;
        let info: RemoteInfo = serde_json::from_str(&fs::read_to_string(path)?)?;
        let addrs = if a.servers.is_empty() { info.addresses.clone() } else { a.servers.clone() };
        let endpoints = addrs
            .iter()
            .map(|addr| Ok(Box::new(TcpEndpoint::new(addr.as_str())?) as Box<dyn Endpoint>))
            .collect::<Result<Vec<_>>>()?;
        let field = Field::new(info.client.field.clone())?;
        let cfg = info.client.share_config(a.t)?;
        (field, info.client.catalog, cfg, endpoints, None)
    } else {
        let d = a.deploy.deployment(a.local)?;
        let cfg = d.share_config(a.t)?;
        let endpoints = d.loopback_endpoints();
        (d.field.clone(), d.catalog.clone(), cfg, endpoints, Some(d))
    };
    let n = endpoints.len();
    for ep in endpoints.iter_mut().skip(n.saturating_sub(a.down)) {
        let inner = std::mem::replace(ep, Box::new(NoEndpoint));
        *ep = Box::new(Faulty::new(inner, field.clone(), Fault::Down));
    }
    let plan = plan_batch(&specs, &catalog)?;
    let out = client_execute(&field, &plan, &cfg, &endpoints, &mut rng)?;
    for (spec, answer) in specs.iter().zip(&out.answers) {
        println!("{spec} = {answer}");
    }
    let t = out.dispatch.timings;
    println!(
        "bucket {} (p={}, u={}), k={}, degree {}, {} of {} servers answered",
        plan.keyword,
        plan.p,
        plan.u,
        plan.k(),
        plan.degree(a.t),
        out.dispatch.points.len(),
        n
    );
    let used: Vec<String> = out.used.iter().map(|x| field.to_biguint(x).to_string()).collect();
    println!("servers used: x = {}", used.join(", "));
    println!("integrity: {:?}", out.verdict);
    print!(
        "timings: share {:.6} s, network {:.6} s",
        t.share.as_secs_f64(),
        t.network.as_secs_f64()
    );
    if let Some(d) = &local {
        let (vspm, dbmul) = d.servers.iter().fold((0u64, 0u64), |(v, m), s| {
            let snap = s.metrics().snapshot();
            (v + snap.vspm_nanos, m + snap.dbmul_nanos)
        });
        print!(", vspm {:.6} s, db-multiply {:.6} s", vspm as f64 * 1e-9, dbmul as f64 * 1e-9);
    }
    println!(", reconstruct {:.6} s", t.reconstruct.as_secs_f64());
    println!(
        "bytes: {} up, {} down",
        out.dispatch.request_bytes.iter().sum::<usize>(),
        out.dispatch.response_bytes.iter().sum::<usize>()
    );
    Ok(())
}

struct NoEndpoint;

impl Endpoint for NoEndpoint {
    fn call(&self, _: &[u8]) -> std::result::Result<Vec<u8>, iaq::protocol::TransportError> {
        Err(iaq::protocol::TransportError::Unavailable)
    }

    fn describe(&self) -> String {
        "none".into()
    }
}

fn gen_synthetic(a: GenArgs) -> Result<()> {
    let records = a.records.max(1);
    let (name, generator) = match a.preset {
        Preset::Hospital => ("hospital", synthetic::hospital((records as u64 / 4).max(1), 10)),
        Preset::Twitter => ("twitter", synthetic::twitter((records as u64 / 10).max(1))),
        Preset::Mimic => ("mimic", synthetic::mimic((records as u64 / 5).max(1))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let table = generator.table(records, &mut rng);
    fs::create_dir_all(&a.out)?;
    let csv = a.out.join(format!("{name}.csv"));
    let schema = a.out.join(format!("{name}.toml"));
    table.write_csv(fs::File::create(&csv)?)?;
    fs::write(&schema, generator.schema()?.to_toml())?;
    println!("wrote {} ({records} records) and {}", csv.display(), schema.display());
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<()> {
    let mut params = BenchParams {
        trials: a.trials,
        seed: a.seed,
        full: a.full,
        ..BenchParams::default()
    };
    if let Some(f) = a.field {
        params.field = f;
    }
    for (dst, src) in [
        (&mut params.r, a.r),
        (&mut params.p, a.p),
        (&mut params.agg, a.agg),
        (&mut params.u, a.u),
        (&mut params.s, a.s),
    ] {
        if let Some(v) = src {
            *dst = v;
        }
    }
    if let Some(skip) = a.skip_zero_cols {
        params.options.skip_zero_cols = skip;
    }
    params.options.parallel = a.parallel;

    if a.baseline.is_some() {
        if a.p.is_none() {
            params.p = 64;
        }
        if a.r.is_none() {
            params.r = 1 << 16;
        }
        let b = bench::baseline(&params, a.selectivity)?;
        println!(
            "p={} r={} selectivity={}: iaq {:.9} s, positional {:.9} s, speedup {:.2}x, same result: {}",
            b.p,
            b.r,
            a.selectivity,
            b.iaq_seconds,
            b.positional_seconds,
            b.speedup(),
            b.same_result
        );
        return Ok(());
    }
    let exp = a.experiment.expect("clap enforces experiment or baseline");
    let values = if a.values.is_empty() { exp.default_range() } else { a.values };
    let rows = bench::run(exp, &values, &params)?;
    match &a.out {
        Some(path) => {
            bench::write_csv(fs::File::create(path)?, &rows)?;
            println!("wrote {}", path.display());
        }
        None => bench::write_csv(std::io::stdout().lock(), &rows)?,
    }
    if a.check {
        let report = bench::check_trend(exp, &rows, 0.10);
        eprintln!("trend {}: {} ({})", exp, if report.ok { "ok" } else { "VIOLATED" }, report.detail);
        if !report.ok {
            anyhow::bail!("trend check failed for {exp}");
        }
    }
    Ok(())
}
