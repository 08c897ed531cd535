use std::fs;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use lbrs::bench::{self, BenchConfig, OutputFormat};
use lbrs::dataset::{gen_data, read_matrix, read_pv, Dataset};
use lbrs::hilbert::GridCell;
use lbrs::protocol::{
    serve_tcp, Client, ClientConfig, Link, ProxyX, ServerY, SessionFile, TcpChannel, TcpConnector,
};
use lbrs::recommender::{DEFAULT_RADIUS, DEFAULT_RATING_MAX};
use lbrs::she::{keygen, KeyGenParams, SecretKeyFile, SheKeys};
use lbrs::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_ABORT: u8 = 3;
const EXIT_ORACLE: u8 = 4;

#[derive(Parser)]
#[command(name = "lbrs", version, about = "Private location-based recommendations over switchable homomorphic encryption")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a key set: public.json and secret.json.
    Keygen {
        /// Modulus size in bits.
        #[arg(long, default_value_t = 1024)]
        bits: u32,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run server Y or proxy X.
    Serve {
        #[arg(long, value_enum)]
        role: Role,
        #[arg(long)]
        listen: String,
        /// Directory for the per-session share files.
        #[arg(long, env = "LBRS_KEY_DIR")]
        keys: Option<PathBuf>,
        /// Address of proxy X (role y only).
        #[arg(long)]
        proxy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Client operations against running servers.
    Client {
        #[command(subcommand)]
        op: ClientOp,
    },
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        pois: usize,
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time the encrypted pipeline, checking every run against the plaintext one.
    Bench {
        /// Comma-separated item counts.
        #[arg(long, value_delimiter = ',', default_value = "10,20,40,80,100")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Modulus size in bits.
        #[arg(long, default_value_t = 1024)]
        bits: u32,
        #[arg(long, default_value_t = 3)]
        users: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u64,
        /// Skip the untimed warm-up run.
        #[arg(long)]
        no_warmup: bool,
        /// Also print published FHE-baseline totals next to ours.
        #[arg(long)]
        external: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Y,
    Proxy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(clap::Args)]
struct Endpoints {
    /// Address of server Y.
    #[arg(long)]
    server: String,
    /// Address of proxy X.
    #[arg(long)]
    proxy: String,
    /// Directory holding secret.json and session.json.
    #[arg(long, env = "LBRS_KEY_DIR")]
    keys: PathBuf,
}

#[derive(Subcommand)]
enum ClientOp {
    /// Start a session and upload every user's matrix from a dataset.
    Init {
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long)]
        data: PathBuf,
    },
    /// Request recommendations for a preference vector at a grid cell.
    Recommend {
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long)]
        pv: PathBuf,
        /// Grid cell as X,Y.
        #[arg(long, value_parser = parse_cell)]
        loc: GridCell,
        #[arg(long, default_value_t = DEFAULT_RADIUS)]
        radius: u64,
        /// Hilbert order; defaults to the one recorded at init.
        #[arg(long)]
        order: Option<u32>,
    },
    /// Send the change between two versions of one user's matrix.
    Update {
        #[command(flatten)]
        endpoints: Endpoints,
        #[arg(long)]
        old: PathBuf,
        #[arg(long)]
        new: PathBuf,
    },
}

/// What the client keeps between invocations.
#[derive(Serialize, Deserialize)]
struct ClientState {
    #[serde(flatten)]
    session: SessionFile,
    order: u32,
}

fn parse_cell(s: &str) -> Result<GridCell, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x = x.trim().parse().map_err(|_| format!("bad x coordinate {x:?}"))?;
    let y = y.trim().parse().map_err(|_| format!("bad y coordinate {y:?}"))?;
    Ok(GridCell::new(x, y))
}

fn resolve(addr: &str) -> lbrs::Result<SocketAddr> {
    addr.to_socket_addrs()?.next().ok_or_else(|| Error::Format(format!("cannot resolve {addr}")))
}

fn security_bits(modulus_bits: u32) -> u32 {
    modulus_bits / 2
}

fn load_keys(dir: &Path) -> lbrs::Result<SheKeys> {
    let file: SecretKeyFile = serde_json::from_slice(&fs::read(dir.join("secret.json"))?)
        .map_err(|e| Error::Format(format!("secret.json: {e}")))?;
    SheKeys::from_secret_file(&file)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> lbrs::Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn connect(e: &Endpoints) -> lbrs::Result<(Box<TcpChannel>, Box<TcpChannel>)> {
    let y = TcpChannel::connect(resolve(&e.server)?, Link::ClientToY, None)?;
    let x = TcpChannel::connect(resolve(&e.proxy)?, Link::ClientToX, None)?;
    Ok((Box::new(y), Box::new(x)))
}

fn resume(e: &Endpoints, radius: u64, order: Option<u32>) -> lbrs::Result<(Client, u32)> {
    let keys = load_keys(&e.keys)?;
    let state: ClientState = serde_json::from_slice(&fs::read(e.keys.join("session.json"))?)
        .map_err(|err| Error::Format(format!("session.json: {err}")))?;
    let order = order.unwrap_or(state.order);
    let (y, x) = connect(e)?;
    let config = ClientConfig { order, radius, rating_max: DEFAULT_RATING_MAX };
    Ok((Client::resume(keys, y, x, config, &state.session, None), order))
}

fn save_session(e: &Endpoints, client: &Client, order: u32) -> lbrs::Result<()> {
    write_json(&e.keys.join("session.json"), &ClientState { session: client.session_file(), order })
}

fn run(cli: Cli) -> lbrs::Result<()> {
    match cli.command {
        Command::Keygen { bits, out_dir, seed } => {
            let params = match seed {
                Some(seed) => KeyGenParams::seeded(security_bits(bits), seed),
                None => KeyGenParams::new(security_bits(bits)),
            };
            let keys = keygen(&params)?;
            fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("public.json"), &keys.public_file())?;
            write_json(&out_dir.join("secret.json"), &keys.secret_file())?;
            println!("wrote {} and {}", out_dir.join("public.json").display(), out_dir.join("secret.json").display());
        }
        Command::Serve { role, listen, keys, proxy, seed } => {
            let listener = std::net::TcpListener::bind(&listen)?;
            println!("listening on {}", listener.local_addr()?);
            match role {
                Role::Proxy => serve_tcp(listener, Arc::new(ProxyX::new(keys)))?,
                Role::Y => {
                    let proxy = proxy.ok_or_else(|| Error::Format("--proxy is required for role y".into()))?;
                    let connector = TcpConnector::new(resolve(&proxy)?, Link::YToX, None);
                    serve_tcp(listener, Arc::new(ServerY::new(Box::new(connector), seed, keys)))?;
                }
            }
        }
        Command::Client { op } => match op {
            ClientOp::Init { endpoints, data } => {
                let dataset = Dataset::read(&data)?;
                let keys = load_keys(&endpoints.keys)?;
                let (y, x) = connect(&endpoints)?;
                let order = dataset.meta.order;
                let config = ClientConfig { order, radius: DEFAULT_RADIUS, rating_max: dataset.meta.rating_max };
                let mut client = Client::new(keys, y, x, config, None);
                client.setup()?;
                save_session(&endpoints, &client, order)?;
                let result = client.initialize(dataset.meta.pois, &dataset.contributions()?);
                save_session(&endpoints, &client, order)?;
                result?;
                println!("session {} initialized with {} items", client.session_id(), dataset.meta.pois);
            }
            ClientOp::Recommend { endpoints, pv, loc, radius, order } => {
                let (mut client, order) = resume(&endpoints, radius, order)?;
                let pv = read_pv(&pv, DEFAULT_RATING_MAX)?;
                let result = client.recommend(&pv, loc);
                save_session(&endpoints, &client, order)?;
                let outcome = result?;
                println!("location index {}", outcome.location);
                println!("item,score");
                for r in &outcome.items {
                    println!("{},{}", r.item, r.score);
                }
            }
            ClientOp::Update { endpoints, old, new } => {
                let (mut client, order) = resume(&endpoints, DEFAULT_RADIUS, None)?;
                let result = client.update(&read_matrix(&old)?, &read_matrix(&new)?);
                save_session(&endpoints, &client, order)?;
                result?;
                println!("update sent");
            }
        },
        Command::GenData { pois, users, seed, out } => {
            gen_data(pois, users, seed)?.write(&out)?;
            println!("wrote dataset to {}", out.display());
        }
        Command::Bench { sizes, reps, format, out, bits, users, seed, radius, no_warmup, external } => {
            let format = match format {
                Format::Table => OutputFormat::Table,
                Format::Csv => OutputFormat::Csv,
            };
            let config = BenchConfig {
                sizes,
                security_bits: security_bits(bits),
                repetitions: reps,
                format,
                users,
                seed,
                radius,
                warmup: !no_warmup,
            };
            let rows = bench::run_bench(&config)?;
            let mut text = bench::render(&rows, format)?;
            if external {
                text.push('\n');
                text.push_str(&bench::render_external(&rows));
            }
            match out {
                Some(path) => fs::write(path, &text)?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Aborted { .. } | Error::Stage { .. } | Error::ProtocolOrder(_) | Error::Wire(_) => EXIT_ABORT,
        Error::OracleMismatch(_) => EXIT_ORACLE,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
