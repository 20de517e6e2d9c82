//! `dpvis`: batch driver over a dpvis workspace directory.
//!
//! Every command prints canonical JSON (or writes it with `--out`). The view
//! commands go through the same functions as the HTTP API, so their output is
//! byte-identical to the corresponding endpoint's response body.

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dpvis_core::data;
use dpvis_core::hmm;
use dpvis_core::json;
use dpvis_core::query::{FilterExpr, SubgroupFile};
use dpvis_core::synth::{self, SynthConfig};
use dpvis_server::error::{Error, Result};
use dpvis_server::views::{self, AggregateParams, PatternParams, QueryBody, DEFAULT_MIN_SUPPORT};
use dpvis_server::workspace::{model_document, MaskName, MaskSpec, TrainOptions};
use dpvis_server::{ServerConfig, Workspace};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "dpvis", version, about = "Disease-progression HMM analytics")]
struct Cli {
    /// Workspace directory holding the dataset, models and subgroups.
    #[arg(long, env = "DPVIS_DATA_DIR", default_value = "dpvis-data", global = true)]
    data_dir: PathBuf,
    /// Workspace state file (default: <data-dir>/workspace.json).
    #[arg(long, global = true)]
    workspace_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset from CSV files and make it current.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset from a known forward-chain model and ingest it.
    Synth(SynthArgs),
    /// Train a model on the current dataset and activate it.
    Train {
        #[arg(long)]
        states: usize,
        #[command(flatten)]
        opts: TrainFlags,
        /// Also write the model document here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store the model without activating it.
        #[arg(long)]
        no_activate: bool,
    },
    /// Cross-validate a range of state counts by held-out log-likelihood.
    Cv {
        /// `A..B` (inclusive), or a comma-separated list.
        #[arg(long, value_parser = parse_states)]
        states: StateList,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        opts: TrainFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List stored models.
    Models,
    /// Make a stored model active.
    Activate { id: String },
    /// Decoded state sequences with posteriors.
    Decode {
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine closed state patterns.
    Mine {
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: usize,
        #[arg(long, default_value_t = 50)]
        top: usize,
        /// Mine raw per-visit labels instead of run-length collapsed ones.
        #[arg(long)]
        no_collapse: bool,
        #[arg(long)]
        subgroup: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a filter or sequence query from a JSON file.
    Query {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        subgroup: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write every aggregate view, optionally scoped to a subgroup.
    ExportAggregates {
        #[arg(long)]
        subgroup: Option<u64>,
        #[arg(long)]
        anchor: Option<usize>,
        /// Time-bin width in months for the by-time pathways.
        #[arg(long)]
        bin: Option<f64>,
        #[arg(long)]
        event: Option<String>,
        #[arg(long, default_value_t = DEFAULT_MIN_SUPPORT)]
        min_support: usize,
        #[arg(long, default_value_t = 50)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage saved subgroups.
    #[command(subcommand)]
    Subgroup(SubgroupCommand),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = dpvis_server::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

#[derive(Subcommand)]
enum SubgroupCommand {
    /// Create a subgroup from a filter JSON file.
    Create {
        #[arg(long)]
        name: String,
        #[arg(long)]
        file: PathBuf,
    },
    List,
    Show { id: u64 },
    Rename {
        id: u64,
        #[arg(long)]
        name: String,
    },
    Delete { id: u64 },
    /// One subgroup per value of a static variable.
    ImportStatic { var: String },
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Import {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args)]
struct IngestArgs {
    /// Directory containing schema.json, visits.csv, statics.csv, events.csv.
    #[arg(long, conflicts_with_all = ["schema", "visits"])]
    dir: Option<PathBuf>,
    #[arg(long, required_unless_present = "dir")]
    schema: Option<PathBuf>,
    #[arg(long, required_unless_present = "dir")]
    visits: Option<PathBuf>,
    #[arg(long)]
    statics: Option<PathBuf>,
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    subjects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Visits per subject.
    #[arg(long, default_value_t = 20)]
    visits: usize,
    /// Months between visits.
    #[arg(long, default_value_t = 1)]
    interval: usize,
    /// Probability that a cell is missing.
    #[arg(long, default_value_t = 0.2)]
    missing: f64,
    /// Also export the CSV files and schema to this directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the generating model here.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskArg {
    Full,
    Forward,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, value_enum)]
    mask: Option<MaskArg>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Months per grid step.
    #[arg(long)]
    time_unit: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Emission variables (comma-separated); all observed dynamic variables by default.
    #[arg(long, value_delimiter = ',')]
    variables: Option<Vec<String>>,
}

impl TrainFlags {
    fn options(&self) -> TrainOptions {
        let d = TrainOptions::default();
        TrainOptions {
            mask: match self.mask {
                Some(MaskArg::Forward) => MaskSpec::Named(MaskName::Forward),
                Some(MaskArg::Full) => MaskSpec::Named(MaskName::Full),
                None => d.mask,
            },
            restarts: self.restarts.unwrap_or(d.restarts),
            seed: self.seed.unwrap_or(d.seed),
            time_unit: self.time_unit.unwrap_or(d.time_unit),
            variables: self.variables.clone().or(d.variables),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            variance_floor: d.variance_floor,
        }
    }
}

#[derive(Clone, Debug)]
struct StateList(Vec<usize>);

fn parse_states(s: &str) -> std::result::Result<StateList, String> {
    let bad = |_| format!("invalid state list `{s}`");
    let states: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(bad)?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(bad)?;
        (a..=b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(bad)).collect::<std::result::Result<_, _>>()?
    };
    if states.is_empty() {
        return Err(format!("empty state list `{s}`"));
    }
    Ok(StateList(states))
}

/// Prints `value` as canonical JSON, or writes it to `out`.
fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            json::write_atomic(path, value)?;
        }
        None => {
            let text = json::to_canonical_string(value).map_err(|e| Error::Workspace(e.to_string()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn ingest(args: &IngestArgs) -> Result<data::Dataset> {
    if let Some(dir) = &args.dir {
        return Ok(data::ingest_dir(dir)?);
    }
    let schema = data::read_schema(args.schema.as_deref().expect("clap enforces --schema"))?;
    let visits = std::fs::File::open(args.visits.as_deref().expect("clap enforces --visits"))?;
    let statics: Box<dyn std::io::Read> = match &args.statics {
        Some(p) => Box::new(std::fs::File::open(p)?),
        None => Box::new(&b"subject_id\n"[..]),
    };
    let events: Box<dyn std::io::Read> = match &args.events {
        Some(p) => Box::new(std::fs::File::open(p)?),
        None => Box::new(&b"subject_id,event_name,age_months\n"[..]),
    };
    Ok(data::ingest_readers(visits, statics, events, &schema)?)
}

fn run(cli: Cli) -> Result<()> {
    let open = || Workspace::open(&cli.data_dir, cli.workspace_file.as_deref());
    match cli.command {
        Command::Ingest(args) => {
            let ds = ingest(&args)?;
            let mut ws = open()?;
            ws.set_dataset(ds)?;
            emit(&views::dataset_info(&ws)?, None)
        }
        Command::Synth(args) => {
            let cfg = SynthConfig {
                n_states: args.states,
                n_subjects: args.subjects,
                visits_per_subject: args.visits,
                visit_interval: args.interval,
                missing_rate: args.missing,
                seed: args.seed,
            };
            if args.states == 0 || !(0.0..1.0).contains(&args.missing) {
                return Err(Error::BadRequest("need --states >= 1 and 0 <= --missing < 1".into()));
            }
            let (ds, truth) = synth::generate(&cfg);
            if let Some(dir) = &args.out {
                data::export_dir(&ds, dir)?;
            }
            if let Some(path) = &args.truth {
                emit(&model_document(&truth)?, Some(path))?;
            }
            let mut ws = open()?;
            ws.set_dataset(ds)?;
            emit(&views::dataset_info(&ws)?, None)
        }
        Command::Train {
            states,
            opts,
            out,
            no_activate,
        } => {
            let mut ws = open()?;
            let cfg = opts.options().config(ws.dataset()?, states)?;
            let model = hmm::train(ws.dataset()?, &cfg)?;
            if let Some(path) = &out {
                emit(&model_document(&model)?, Some(path))?;
            }
            let id = ws.add_model(model)?;
            if !no_activate {
                ws.activate(&id)?;
            }
            let info = ws.model_infos().into_iter().find(|m| m.id == id);
            emit(&info, None)
        }
        Command::Cv {
            states,
            folds,
            opts,
            out,
        } => {
            let ws = open()?;
            let ds = ws.dataset()?;
            let options = opts.options();
            let cfgs = states
                .0
                .iter()
                .map(|&k| options.config(ds, k))
                .collect::<Result<Vec<_>>>()?;
            let table = hmm::cross_validate(ds, &cfgs, folds, options.seed)?;
            emit(&table, out.as_deref())
        }
        Command::Models => {
            let ws = open()?;
            emit(&serde_json::json!({ "active": ws.active, "models": ws.model_infos() }), None)
        }
        Command::Activate { id } => {
            let mut ws = open()?;
            ws.activate(&id)?;
            emit(&serde_json::json!({ "active": id }), None)
        }
        Command::Decode { subject, out } => emit(&views::decode(&open()?, subject.as_deref())?, out.as_deref()),
        Command::Mine {
            min_support,
            top,
            no_collapse,
            subgroup,
            out,
        } => {
            let params = PatternParams {
                min_support,
                top,
                collapse: !no_collapse,
            };
            emit(&views::patterns(&open()?, subgroup, params)?, out.as_deref())
        }
        Command::Query { file, subgroup, out } => {
            let body = QueryBody::parse(&read_text(&file)?)?;
            emit(&views::run_query(&open()?, subgroup, body)?, out.as_deref())
        }
        Command::ExportAggregates {
            subgroup,
            anchor,
            bin,
            event,
            min_support,
            top,
            out,
        } => {
            let params = AggregateParams {
                anchor,
                bin,
                event,
                patterns: PatternParams {
                    min_support,
                    top,
                    collapse: true,
                },
            };
            emit(&views::aggregates(&open()?, subgroup, &params)?, out.as_deref())
        }
        Command::Subgroup(cmd) => subgroup(open()?, cmd),
        Command::Serve { port, host } => {
            let cfg = ServerConfig {
                host,
                port,
                data_dir: cli.data_dir.clone(),
                workspace_file: cli.workspace_file.clone(),
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(dpvis_server::serve(cfg))
        }
    }
}

fn subgroup(mut ws: Workspace, cmd: SubgroupCommand) -> Result<()> {
    match cmd {
        SubgroupCommand::Create { name, file } => {
            let filter: FilterExpr = serde_json::from_str(&read_text(&file)?).map_err(views::invalid_json)?;
            let id = {
                let ctx = ws.eval_context()?;
                let mut store = ws.subgroups.clone();
                let id = store.create(&ctx, &name, filter)?;
                ws.subgroups = store;
                id
            };
            ws.save_state()?;
            emit(ws.subgroups.get(id)?, None)
        }
        SubgroupCommand::List => emit(&ws.subgroups.list().collect::<Vec<_>>(), None),
        SubgroupCommand::Show { id } => emit(ws.subgroups.get(id)?, None),
        SubgroupCommand::Rename { id, name } => {
            ws.subgroups.rename(id, &name)?;
            ws.save_state()?;
            emit(ws.subgroups.get(id)?, None)
        }
        SubgroupCommand::Delete { id } => {
            let removed = ws.subgroups.delete(id)?;
            ws.save_state()?;
            emit(&removed, None)
        }
        SubgroupCommand::ImportStatic { var } => {
            let ids = {
                let ctx = ws.eval_context()?;
                let mut store = ws.subgroups.clone();
                let ids = store.import_from_static(&ctx, &var)?;
                ws.subgroups = store;
                ids
            };
            ws.save_state()?;
            let created = ids.iter().map(|&id| ws.subgroups.get(id)).collect::<std::result::Result<Vec<_>, _>>()?;
            emit(&created, None)
        }
        SubgroupCommand::Export { out } => emit(&ws.subgroups.export(), out.as_deref()),
        SubgroupCommand::Import { file } => {
            let file: SubgroupFile = serde_json::from_str(&read_text(&file)?).map_err(views::invalid_json)?;
            let ids = ws.import_subgroups(file)?;
            emit(&serde_json::json!({ "imported": ids }), None)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json::to_canonical_string(&e.body()).unwrap_or_else(|_| format!("{e}\n"));
            eprint!("{body}");
            ExitCode::FAILURE
        }
    }
}
