//! Command-line front end. Every command reads JSON and writes JSON (CSV for
//! metric tables); failures are reported as one JSON object on stderr.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::belief::{dempster_combine, MassFunction, SimpleSupportMass};
use crate::edl::Activation;
use crate::field::{ClassField, Grid, LabelField};
use crate::fusion::fuse_fields;
use crate::info_volume::{information_volume, ivum, DEFAULT_RHO};
use crate::metrics::{distance_metrics, overlap_metrics};
use crate::trainer::{
    generate_dataset, gradient_check, predict, run_experiment, NetMetrics, TrainConfig,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    FileNotFound(PathBuf),
    Parse {
        file: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    Io(PathBuf, String),
    Invalid(crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            CliError::Usage(m) => json!({"error": "UsageError", "message": m}),
            CliError::FileNotFound(p) => json!({
                "error": "FileNotFound",
                "file": p.display().to_string(),
            }),
            CliError::Parse {
                file,
                line,
                column,
                message,
            } => json!({
                "error": "ParseError",
                "file": file.display().to_string(),
                "line": line,
                "column": column,
                "message": message,
            }),
            CliError::Io(p, m) => json!({
                "error": "IoError",
                "file": p.display().to_string(),
                "message": m,
            }),
            CliError::Invalid(e) => json!({"error": "InvalidInput", "message": e.to_string()}),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Invalid(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "coevid",
    version,
    about = "Evidential fusion, information volume and toy training runs"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Dempster combination of two mass functions.
    FuseDempster {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Voxel-wise pignistic fusion of two evidence fields, scored by IVUM.
    FuseCoev {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Information volume of a mass function. Prints one JSON line per loop
    /// entropy, then the value.
    Iv {
        #[arg(long)]
        mass: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Uncertainty-weighted information volume of a simple-support mass.
    Ivum {
        #[arg(long)]
        mass: PathBuf,
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dice, Jaccard, HD95 and ASD of a predicted mask against ground truth.
    /// With arrays of masks in both files, writes one CSV row per pair.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Seed column value in batch mode.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the synthetic dataset for a configuration.
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pre-training + self-training run. Writes run.json, losses.jsonl,
    /// metrics.csv and predictions.json into the output directory.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Finite-difference check of the training objectives' gradients.
    Gradcheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        lambdas: LambdaArgs,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every combination of comma-separated λ lists and writes a CSV.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        lambdas: LambdaLists,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON file with any subset of the training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    epochs_pre: Option<usize>,
    #[arg(long)]
    epochs_self: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    n_labeled: Option<usize>,
    #[arg(long)]
    n_unlabeled: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    /// Evidence function: relu or softplus.
    #[arg(long)]
    g: Option<Activation>,
}

#[derive(Debug, Args)]
struct LambdaArgs {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    lambda4: Option<f64>,
    #[arg(long)]
    lambda5: Option<f64>,
    #[arg(long)]
    lambda6: Option<f64>,
}

#[derive(Debug, Args)]
struct LambdaLists {
    #[arg(long, value_delimiter = ',')]
    lambda1: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda2: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda3: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda4: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda5: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda6: Vec<f64>,
}

impl ConfigArgs {
    fn load(&self) -> CliResult<TrainConfig> {
        let mut c: TrainConfig = match &self.config {
            Some(path) => read_json(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        set!(seed => seed, rho => rho, phi => phi, eta => eta, epochs_pre => epochs_pre,
             epochs_self => epochs_self, lr => learning_rate, size => image_size,
             n_labeled => n_labeled, n_unlabeled => n_unlabeled, n_test => n_test,
             g => activation);
        Ok(c)
    }
}

impl LambdaArgs {
    fn apply(&self, c: &mut TrainConfig) {
        let flags = [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
        ];
        let fields = [
            &mut c.lambda1,
            &mut c.lambda2,
            &mut c.lambda3,
            &mut c.lambda4,
            &mut c.lambda5,
            &mut c.lambda6,
        ];
        for (field, flag) in fields.into_iter().zip(flags) {
            if let Some(v) = flag {
                *field = v;
            }
        }
    }
}

fn load_config(config: &ConfigArgs, lambdas: &LambdaArgs) -> CliResult<TrainConfig> {
    let mut c = config.load()?;
    lambdas.apply(&mut c);
    c.validate()?;
    Ok(c)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => CliError::FileNotFound(path.to_path_buf()),
        _ => CliError::Io(path.to_path_buf(), e.to_string()),
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse {
        file: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))
        }
        None => io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e.to_string())),
    }
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> CliResult<()> {
    write_bytes(out, &to_json_bytes(value))
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Io(PathBuf::from("<csv>"), e.to_string()))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Io(PathBuf::from("<csv>"), e.to_string()))
}

fn read_simple(path: &Path) -> CliResult<SimpleSupportMass> {
    let m: MassFunction = read_json(path)?;
    Ok(SimpleSupportMass::try_from(&m)?)
}

fn read_class_field(path: &Path) -> CliResult<ClassField> {
    let f: ClassField = read_json(path)?;
    Ok(ClassField::from_vec(f.width, f.height, f.classes, f.data)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Masks {
    One(LabelField),
    Many(Vec<LabelField>),
}

fn read_masks(path: &Path) -> CliResult<Masks> {
    let checked = |m: LabelField| Grid::from_vec(m.width, m.height, m.data);
    Ok(match read_json(path)? {
        Masks::One(m) => Masks::One(checked(m)?),
        Masks::Many(v) => Masks::Many(v.into_iter().map(checked).collect::<crate::Result<_>>()?),
    })
}

/// Undefined surface distances (an empty mask) are reported as missing.
fn score(pred: &LabelField, gt: &LabelField) -> CliResult<(f64, f64, Option<f64>, Option<f64>)> {
    let (dice, jaccard) = overlap_metrics(pred, gt)?;
    match distance_metrics(pred, gt) {
        Ok((h, a)) => Ok((dice, jaccard, Some(h), Some(a))),
        Err(crate::Error::EmptySurface) => Ok((dice, jaccard, None, None)),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    seed: u64,
    stage: &'a str,
    net: &'a str,
    dice: f64,
    jaccard: f64,
    hd95: Option<f64>,
    asd: Option<f64>,
    undefined_surfaces: usize,
}

impl<'a> MetricsRow<'a> {
    fn new(seed: u64, stage: &'a str, net: &'a str, m: &NetMetrics) -> Self {
        Self {
            seed,
            stage,
            net,
            dice: m.dice,
            jaccard: m.jaccard,
            hd95: m.hd95,
            asd: m.asd,
            undefined_surfaces: m.undefined_surfaces,
        }
    }
}

#[derive(Serialize)]
struct EvalRow {
    run_id: usize,
    seed: u64,
    dice: f64,
    jaccard: f64,
    hd95: Option<f64>,
    asd: Option<f64>,
}

#[derive(Serialize)]
struct SweepRow {
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
    lambda4: f64,
    lambda5: f64,
    lambda6: f64,
    seed: u64,
    pretrain_dice: f64,
    dice_net1: f64,
    dice_net2: f64,
    dice_mean: f64,
}

fn cartesian(base: [f64; 6], lists: [&[f64]; 6]) -> Vec<[f64; 6]> {
    let mut cells = vec![base];
    for (k, list) in lists.iter().enumerate() {
        if list.is_empty() {
            continue;
        }
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                list.iter().map(move |&v| {
                    let mut c = cell;
                    c[k] = v;
                    c
                })
            })
            .collect();
    }
    cells
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::FuseDempster { a, b, out } => {
            let ma: MassFunction = read_json(&a)?;
            let mb: MassFunction = read_json(&b)?;
            let fused = dempster_combine(&[ma, mb])?;
            write_json(out.as_deref(), &fused)
        }
        Command::FuseCoev { a, b, rho, out } => {
            let fused = fuse_fields(&read_class_field(&a)?, &read_class_field(&b)?, rho)?;
            write_json(out.as_deref(), &fused)
        }
        Command::Iv { mass, rho, out } => {
            let m: MassFunction = read_json(&mass)?;
            let (value, trace) = information_volume(&m, rho)?;
            let mut lines = Vec::new();
            for (i, e) in trace.entropies.iter().enumerate() {
                let delta = i.checked_sub(1).map(|k| trace.deltas[k]);
                lines.push(json!({"loop": i, "entropy": e, "delta": delta}));
            }
            lines.push(json!({
                "value": value,
                "iterations": trace.iterations,
                "converged": trace.converged,
            }));
            let mut bytes = Vec::new();
            for line in lines {
                bytes.extend(serde_json::to_vec(&line).expect("serializable value"));
                bytes.push(b'\n');
            }
            write_bytes(out.as_deref(), &bytes)
        }
        Command::Ivum { mass, rho, out } => {
            let m = read_simple(&mass)?;
            let value = ivum(&m, rho)?;
            write_json(
                out.as_deref(),
                &json!({"ivum": value, "uncertainty": m.fullset()}),
            )
        }
        Command::Eval {
            pred,
            gt,
            seed,
            out,
        } => match (read_masks(&pred)?, read_masks(&gt)?) {
            (Masks::One(p), Masks::One(g)) => {
                let (dice, jaccard, hd95, asd) = score(&p, &g)?;
                write_json(
                    out.as_deref(),
                    &json!({"dice": dice, "jaccard": jaccard, "hd95": hd95, "asd": asd}),
                )
            }
            (Masks::Many(p), Masks::Many(g)) => {
                if p.len() != g.len() {
                    return Err(CliError::Usage(format!(
                        "{} predictions but {} ground-truth masks",
                        p.len(),
                        g.len()
                    )));
                }
                let mut rows = Vec::with_capacity(p.len());
                for (run_id, (p, g)) in p.iter().zip(&g).enumerate() {
                    let (dice, jaccard, hd95, asd) = score(p, g)?;
                    rows.push(EvalRow {
                        run_id,
                        seed,
                        dice,
                        jaccard,
                        hd95,
                        asd,
                    });
                }
                write_bytes(out.as_deref(), &csv_bytes(&rows)?)
            }
            _ => Err(CliError::Usage(
                "pred and gt must both be single masks or both be arrays".into(),
            )),
        },
        Command::GenData {
            config,
            lambdas,
            out,
        } => {
            let c = load_config(&config, &lambdas)?;
            write_json(out.as_deref(), &generate_dataset(&c))
        }
        Command::Train {
            config,
            lambdas,
            out,
        } => {
            let c = load_config(&config, &lambdas)?;
            let result = run_experiment(&c)?;
            fs::create_dir_all(&out).map_err(|e| CliError::Io(out.clone(), e.to_string()))?;
            let r = &result.report;
            let rows = [
                MetricsRow::new(c.seed, "pretrain", "net1", &r.pretrain_metrics.net1),
                MetricsRow::new(c.seed, "pretrain", "net2", &r.pretrain_metrics.net2),
                MetricsRow::new(c.seed, "final", "net1", &r.final_metrics.net1),
                MetricsRow::new(c.seed, "final", "net2", &r.final_metrics.net2),
            ];
            let predictions: Vec<_> = result
                .dataset
                .test
                .iter()
                .map(|s| {
                    json!({
                        "net1": predict(&result.nets.net1, &s.image),
                        "net2": predict(&result.nets.net2, &s.image),
                    })
                })
                .collect();
            let mut jsonl = Vec::new();
            for record in &r.losses {
                jsonl.extend(serde_json::to_vec(record).expect("serializable value"));
                jsonl.push(b'\n');
            }
            write_json(Some(&out.join("run.json")), r)?;
            write_bytes(Some(&out.join("losses.jsonl")), &jsonl)?;
            write_bytes(Some(&out.join("metrics.csv")), &csv_bytes(&rows)?)?;
            write_json(Some(&out.join("predictions.json")), &predictions)
        }
        Command::Gradcheck {
            config,
            lambdas,
            points,
            out,
        } => {
            let c = load_config(&config, &lambdas)?;
            write_json(out.as_deref(), &gradient_check(&c, points)?)
        }
        Command::Sweep {
            config,
            lambdas,
            out,
        } => {
            let base = config.load()?;
            let lists = [
                &lambdas.lambda1[..],
                &lambdas.lambda2,
                &lambdas.lambda3,
                &lambdas.lambda4,
                &lambdas.lambda5,
                &lambdas.lambda6,
            ];
            let mut rows = Vec::new();
            for cell in cartesian(base.lambdas(), lists) {
                let c = TrainConfig {
                    lambda1: cell[0],
                    lambda2: cell[1],
                    lambda3: cell[2],
                    lambda4: cell[3],
                    lambda5: cell[4],
                    lambda6: cell[5],
                    ..base.clone()
                };
                c.validate()?;
                let r = run_experiment(&c)?.report;
                rows.push(SweepRow {
                    lambda1: c.lambda1,
                    lambda2: c.lambda2,
                    lambda3: c.lambda3,
                    lambda4: c.lambda4,
                    lambda5: c.lambda5,
                    lambda6: c.lambda6,
                    seed: c.seed,
                    pretrain_dice: r.pretrain_metrics.mean_dice(),
                    dice_net1: r.final_metrics.net1.dice,
                    dice_net2: r.final_metrics.net2.dice,
                    dice_mean: r.final_metrics.mean_dice(),
                });
            }
            write_bytes(out.as_deref(), &csv_bytes(&rows)?)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli.command),
        Err(e) => match e.kind() {
            clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                let _ = e.print();
                Ok(())
            }
            _ => Err(CliError::Usage(e.to_string())),
        },
    }
}

/// Entry point for the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
