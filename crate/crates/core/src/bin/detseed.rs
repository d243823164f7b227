//! `detseed` command-line interface.
//!
//! Exit codes: 0 on success, 1 on runtime or verification failure, 2 on
//! usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use detseed::bases::{basis_matrix, BasisKind};
use detseed::config::KvConfig;
use detseed::init::{etf_head, init_model, InitPlan, ModelSpec};
use detseed::ordering::{
    class_guaranteed_permutation, content_hash_permutation, golden_permutation, seeded_permutation, sobol_permutation,
    SampleKeyTable, StrategyKind,
};
use detseed::tensor::Tensor;
use detseed::train::{multi_seed_experiment, train, Arm, RunSpec};
use detseed::verify::{self, npy};
use detseed::{theory, Error, Result};

#[derive(Parser)]
#[command(name = "detseed", version, about = "Seed-free initialization and bit-reproducible training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structured initialization of a model spec, written as NPY plus digest.
    GenInit(GenInitArgs),
    /// Simplex ETF classifier matrix with a Gram check.
    Etf(EtfArgs),
    /// Per-epoch sample permutation.
    Order(OrderArgs),
    /// Compare two parameter directories bit for bit.
    Verify(VerifyArgs),
    /// Train the toy model from a config file.
    Train(TrainArgs),
    /// Multi-seed variance experiment.
    Experiment(ExperimentArgs),
    /// Numerical theory checks.
    Theory(TheoryArgs),
    /// Write a basis matrix as NPY.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenInitArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "mixed", value_parser = ["mixed", "dct", "hadamard", "hartley", "dst"])]
    plan: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = detseed::init::DEFAULT_FIXUP_ALPHA)]
    fixup_alpha: f64,
}

#[derive(Args)]
struct EtfArgs {
    #[arg(long)]
    classes: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OrderArgs {
    #[arg(long)]
    strategy: StrategyKind,
    #[arg(long)]
    epoch: u64,
    /// Required by `seeded`, rejected by every other strategy.
    #[arg(long)]
    seed: Option<u64>,
    /// Text file, one sample per line: values, then optionally `;` and
    /// class indices. `.npy` files are read as one sample per row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    min_per_class: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Directory for `checkpoint/`, `run.txt` and `history.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "structured-seeded,kaiming")]
    arms: Vec<Arm>,
    /// Directory for `runs.csv` and `summary.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long)]
    check: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    basis: BasisKind,
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    /// Unnormalized rows.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    out: PathBuf,
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    Failed,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io {
            path: parent.to_path_buf(),
            source: e,
        })?;
    }
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn gen_init(a: GenInitArgs) -> Result<Status> {
    let model = ModelSpec::load(&a.model)?;
    let plan = InitPlan::from_name(&a.plan, model.num_stages())?.with_fixup_alpha(a.fixup_alpha);
    let params = init_model(&model, &plan)?;
    let d = verify::save_dir(&params, &a.out)?;
    println!("{}", d.hex);
    Ok(Status::Ok)
}

fn etf(a: EtfArgs) -> Result<Status> {
    let m = etf_head(a.classes, a.dim)?;
    let gram = m.matmul(&m.transpose()?)?;
    let target = -1.0 / (a.classes as f64 - 1.0);
    let (mut diag_err, mut off_err) = (0.0f64, 0.0f64);
    for i in 0..a.classes {
        for j in 0..a.classes {
            let g = gram.get(&[i, j]);
            if i == j {
                diag_err = diag_err.max((g - 1.0).abs());
            } else {
                off_err = off_err.max((g - target).abs());
            }
        }
    }
    let pass = diag_err < 1e-9 && off_err < 1e-9;
    let report = format!(
        "classes = {}\ndim = {}\noff_diagonal_target = {target:.17}\nmax_diagonal_error = {diag_err:.3e}\nmax_off_diagonal_error = {off_err:.3e}\npass = {pass}\n",
        a.classes, a.dim
    );
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    npy::write_npy(&a.out.join("etf.npy"), &m)?;
    write(&a.out.join("gram.txt"), &report)?;
    print!("{report}");
    Ok(if pass { Status::Ok } else { Status::Failed })
}

struct Samples {
    values: Vec<Vec<f32>>,
    labels: Option<Vec<Vec<usize>>>,
}

fn read_samples(path: &Path) -> Result<Samples> {
    if path.extension().is_some_and(|e| e == "npy") {
        let t: Tensor<f64> = npy::read_npy(path)?.into_f64();
        let cols = t.shape()[1..].iter().product::<usize>().max(1);
        let values = t.data().chunks(cols).map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        return Ok(Samples { values, labels: None });
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut any_labels = false;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let (vals, labs) = match line.split_once(';') {
            Some((v, l)) => {
                any_labels = true;
                (v, Some(l))
            }
            None => (line, None),
        };
        let row = vals
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f32>().map_err(|e| err(format!("'{s}': {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let lab = match labs {
            Some(l) => l
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|e| err(format!("label '{s}': {e}"))))
                .collect::<Result<Vec<_>>>()?,
            None => Vec::new(),
        };
        values.push(row);
        labels.push(lab);
    }
    Ok(Samples {
        values,
        labels: any_labels.then_some(labels),
    })
}

fn order(a: OrderArgs) -> Result<Status> {
    let samples = read_samples(&a.data)?;
    let n = samples.values.len();
    let table = || SampleKeyTable::from_samples(&samples.values);
    let schedule = match a.strategy {
        StrategyKind::Golden => golden_permutation(&table(), a.epoch)?,
        StrategyKind::Seeded => seeded_permutation(n, a.seed.expect("checked by caller"), a.epoch)?,
        StrategyKind::Sobol => sobol_permutation(n, a.epoch)?,
        StrategyKind::ContentHash => {
            let raw: Vec<Vec<u8>> = samples
                .values
                .iter()
                .map(|r| r.iter().flat_map(|v| v.to_le_bytes()).collect())
                .collect();
            content_hash_permutation(&raw, a.epoch)?
        }
        StrategyKind::ClassGuaranteed => {
            let labels = samples
                .labels
                .clone()
                .ok_or_else(|| Error::Spec("class-guaranteed ordering needs '; labels' in the data file".into()))?;
            class_guaranteed_permutation(&table().with_labels(labels)?, a.epoch, a.batch_size, a.min_per_class)?
        }
    };
    let text = schedule.to_lines();
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(Status::Ok)
}

fn verify_cmd(a: VerifyArgs) -> Result<Status> {
    let pa = verify::load_dir(&a.a)?;
    let pb = verify::load_dir(&a.b)?;
    let report = verify::compare_runs(&pa, &pb)?;
    print!("{report}");
    Ok(if report.identical { Status::Ok } else { Status::Failed })
}

fn train_cmd(a: TrainArgs) -> Result<Status> {
    let spec = RunSpec::from_kv(KvConfig::load(&a.config)?)?;
    let data = spec.task.generate()?;
    let result = train(&spec, &data)?;
    if let Some(out) = &a.out {
        verify::save_dir(&result.final_params, &out.join("checkpoint"))?;
        write(&out.join("run.txt"), &format!("{}{}", spec.to_text(), result.to_text()))?;
        write(&out.join("history.csv"), &result.history_csv())?;
    }
    print!("{}", result.to_text());
    Ok(Status::Ok)
}

fn experiment_cmd(a: ExperimentArgs) -> Result<Status> {
    let spec = RunSpec::from_kv(KvConfig::load(&a.config)?)?;
    let data = spec.task.generate()?;
    let report = multi_seed_experiment(&spec, &data, &a.seeds, &a.arms)?;
    match &a.out {
        Some(out) => {
            write(&out.join("runs.csv"), &report.runs_csv())?;
            write(&out.join("summary.csv"), &report.summary_csv())?;
            print!("{report}");
        }
        None => print!("{}", report.summary_csv()),
    }
    Ok(Status::Ok)
}

fn theory_cmd(a: TheoryArgs) -> Result<Status> {
    let reports = theory::run_suite(a.check.as_deref())?;
    for r in &reports {
        println!("{r}");
    }
    if let Some(p) = &a.csv {
        write(p, &theory::reports_csv(&reports))?;
    }
    Ok(if reports.iter().all(|r| r.pass) {
        Status::Ok
    } else {
        Status::Failed
    })
}

fn export(a: ExportArgs) -> Result<Status> {
    let m = basis_matrix(a.basis, a.rows, a.cols, !a.raw)?;
    npy::write_npy(&a.out, &m.rows)?;
    Ok(Status::Ok)
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Command::Order(o) = &cli.command {
        match (o.strategy.is_seed_free(), o.seed.is_some()) {
            (true, true) => return usage_error(&format!("strategy '{}' takes no seed", o.strategy)),
            (false, false) => return usage_error("strategy 'seeded' requires --seed"),
            _ => {}
        }
    }
    let result = match cli.command {
        Command::GenInit(a) => gen_init(a),
        Command::Etf(a) => etf(a),
        Command::Order(a) => order(a),
        Command::Verify(a) => verify_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
        Command::Theory(a) => theory_cmd(a),
        Command::Export(a) => export(a),
    };
    match result {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
