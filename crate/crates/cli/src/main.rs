//! `cad`: fit, apply and evaluate curvature anomaly detectors from the
//! command line.
//!
//! Exit status is 0 on success, 3 for numeric failures (degenerate scores,
//! zero vectors, single-class data) and 2 for every other error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use cad_core::dataset::{frames_to_points, load_csv, read_gray_frame, standardize, write_csv, write_pgm};
use cad_core::eval::{kfold_cv, DetectorConfig};
use cad_core::geometry::{anomaly_path_with, denoise, landscape, PathOptions};
use cad_core::prototype::{rank, select_for_task, Policy, SelectionReport, Task};
use cad_core::synth::{run_synthetic, Shape};
use cad_core::{fit, CadModel, KernelSpec, LabelKind, LabeledDataset, NeighborSource, Point};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "cad", version, about = "Curvature anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a detector and save it as JSON.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "linear")]
        kernel: KernelSpec,
        #[arg(long)]
        model: PathBuf,
        /// Standardize features; the model stores the statistics.
        #[arg(long)]
        standardize: bool,
        /// Column to drop before fitting.
        #[arg(long)]
        label_col: Option<String>,
    },
    /// Score and label the rows of a CSV with a saved model.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        label_col: Option<String>,
    },
    /// Rasterize the scores of a 2-D model over a grid.
    Landscape {
        #[arg(long)]
        model: PathBuf,
        /// xmin,xmax,ymin,ymax
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        /// NX,NY
        #[arg(long, default_value = "100,100")]
        res: String,
        #[arg(long, value_enum, default_value_t = Source::All)]
        source: Source,
        #[arg(long)]
        output: PathBuf,
    },
    /// Descend from a point toward the normal region.
    Path {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated coordinates.
        #[arg(long, allow_hyphen_values = true)]
        start: String,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        /// Cap on the length of a single step (model coordinates).
        #[arg(long)]
        max_move: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Rank rows as prototypes, best first.
    Rank {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "linear")]
        kernel: KernelSpec,
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Keep the best-ranked rows for a downstream task.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: Task,
        /// top:FRACTION or split
        #[arg(long, default_value = "top:0.5")]
        policy: Policy,
        /// Class column for classification, target column otherwise.
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "linear")]
        kernel: KernelSpec,
        /// Reduced CSV.
        #[arg(long)]
        output: PathBuf,
        /// One selected row index per line.
        #[arg(long)]
        indices: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Denoise a grayscale frame against a directory of reference frames.
    Denoise {
        /// Directory of same-size .pgm/.png frames, read in file name order.
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        noisy: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long, default_value_t = 500)]
        max_iters: usize,
        /// Clean reference for the error trace.
        #[arg(long)]
        clean: Option<PathBuf>,
        /// Write every waypoint as a PGM frame here.
        #[arg(long)]
        dump_frames: Option<PathBuf>,
        /// iter,score,mse per waypoint.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validate a detector on labeled data.
    Bench {
        #[arg(long)]
        input: PathBuf,
        /// Anomaly column (1 anomalous, 0 normal).
        #[arg(long, default_value = "y")]
        label_col: String,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value = "linear")]
        kernel: KernelSpec,
        #[arg(long)]
        standardize: bool,
        #[arg(long)]
        report: PathBuf,
        /// Include wall-clock timings in the report.
        #[arg(long)]
        timings: bool,
    },
    /// Generate a synthetic 2-D dataset with planted outliers.
    Synth {
        #[arg(long, value_parser = parse_shape)]
        shape: Shape,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "y")]
        label_col: String,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    All,
    Normal,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse().map_err(|e: cad_core::Error| e.to_string())
}

fn parse_shape(s: &str) -> Result<Shape, String> {
    s.parse().map_err(|e: cad_core::Error| e.to_string())
}

fn parse_list<const N: usize, T: std::str::FromStr>(s: &str, what: &str) -> Result<[T; N]> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow::anyhow!("bad {what} {s:?}"))?;
    parts
        .try_into()
        .map_err(|_| anyhow::anyhow!("{what} needs {N} comma-separated values, got {s:?}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn load_model(path: &Path) -> Result<CadModel> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    CadModel::from_json(&text).with_context(|| format!("bad model file {}", path.display()))
}

fn load_features(path: &Path, label_col: Option<&str>) -> Result<LabeledDataset> {
    load_csv(path, label_col, LabelKind::None).with_context(|| format!("cannot load {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            input,
            k,
            kernel,
            model,
            standardize: scale,
            label_col,
        } => {
            let data = load_features(&input, label_col.as_deref())?;
            let fitted = if scale {
                let (scaled, params) = standardize(&data)?;
                fit(&scaled, k, &kernel)?.with_standardization(params)
            } else {
                fit(&data, k, &kernel)?
            };
            fs::write(&model, fitted.to_json()? + "\n").with_context(|| format!("cannot write {}", model.display()))?;
            let anomalies = fitted.training_labels().iter().filter(|l| l.is_anomaly()).count();
            println!("fitted {} points, {anomalies} anomalous", data.len());
        }
        Command::Detect {
            model,
            input,
            output,
            label_col,
        } => {
            let model = load_model(&model)?;
            let data = load_features(&input, label_col.as_deref())?;
            let preds = model.predict_many(data.points())?;
            let mut w = csv::Writer::from_writer(create(&output)?);
            w.write_record(["index", "score", "label"])?;
            for (i, p) in preds.iter().enumerate() {
                let label = if p.label.is_anomaly() { "1" } else { "0" };
                w.write_record([i.to_string(), p.score.to_string(), label.to_string()])?;
            }
            w.flush()?;
        }
        Command::Landscape {
            model,
            bounds,
            res,
            source,
            output,
        } => {
            let model = load_model(&model)?;
            let [x0, x1, y0, y1] = parse_list::<4, f64>(&bounds, "bounds")?;
            let [nx, ny] = parse_list::<2, usize>(&res, "resolution")?;
            let source = match source {
                Source::All => NeighborSource::AllPoints,
                Source::Normal => NeighborSource::NormalOnly,
            };
            let field = landscape(&model, [(x0, x1), (y0, y1)], (nx, ny), source)?;
            field.write_csv(create(&output)?)?;
        }
        Command::Path {
            model,
            start,
            step,
            max_iters,
            max_move,
            output,
        } => {
            let model = load_model(&model)?;
            let start: Vec<f64> = start
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad start point {start:?}"))?;
            let opts = PathOptions {
                step,
                max_iters,
                clamp: None,
                max_move,
            };
            let path = anomaly_path_with(&model, &start, &opts)?;
            path.write_csv(create(&output)?)?;
            println!(
                "{} waypoints, terminated by {}",
                path.len(),
                serde_json::to_value(path.terminated_by)?.as_str().unwrap_or_default()
            );
        }
        Command::Rank {
            input,
            k,
            kernel,
            label_col,
            output,
        } => {
            let data = load_features(&input, label_col.as_deref())?;
            let r = rank(&data, k, &kernel)?;
            let mut w = csv::Writer::from_writer(create(&output)?);
            w.write_record(["rank", "index", "score"])?;
            for (pos, &i) in r.order.iter().enumerate() {
                w.write_record([(pos + 1).to_string(), i.to_string(), r.ranking_scores[i].to_string()])?;
            }
            w.flush()?;
        }
        Command::Select {
            input,
            task,
            policy,
            label_col,
            k,
            kernel,
            output,
            indices,
            report,
        } => {
            if task == Task::Classification && label_col.is_none() {
                bail!("classification needs --label-col");
            }
            let kind = if label_col.is_some() { LabelKind::Class } else { LabelKind::None };
            let data = load_csv(&input, label_col.as_deref(), kind)
                .with_context(|| format!("cannot load {}", input.display()))?;
            let selected = select_for_task(&data, task, policy, k, &kernel)?;
            write_csv(&data.subset(&selected), &output, label_col.as_deref().unwrap_or("label"))?;
            if let Some(path) = indices {
                let mut w = create(&path)?;
                for i in &selected {
                    writeln!(w, "{i}")?;
                }
                w.flush()?;
            }
            if let Some(path) = report {
                let r = SelectionReport::new(&data, task, policy, &selected);
                let mut w = create(&path)?;
                serde_json::to_writer_pretty(&mut w, &r)?;
                writeln!(w)?;
                w.flush()?;
            }
            println!("kept {} of {} rows", selected.len(), data.len());
        }
        Command::Denoise {
            frames,
            noisy,
            k,
            step,
            max_iters,
            clean,
            dump_frames,
            output,
        } => {
            let mut paths: Vec<PathBuf> = fs::read_dir(&frames)
                .with_context(|| format!("cannot list {}", frames.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<Result<_, _>>()?;
            paths.retain(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "png")));
            paths.sort();
            if paths.is_empty() {
                bail!("no .pgm or .png frames in {}", frames.display());
            }
            let reference = frames_to_points(&paths)?;
            let noisy = read_gray_frame(&noisy)?;
            let clean: Option<Point> = clean.map(|c| read_gray_frame(&c).map(|f| f.pixels)).transpose()?;
            let out = denoise(&reference, &noisy.pixels, k, step, max_iters, clean.as_ref())?;
            if let Some(dir) = dump_frames {
                fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
                for (i, w) in out.path.waypoints.iter().enumerate() {
                    write_pgm(dir.join(format!("iter_{i:04}.pgm")), w, noisy.width, noisy.height)?;
                }
            }
            if let Some(path) = output {
                let mut w = csv::Writer::from_writer(create(&path)?);
                w.write_record(["iter", "score", "mse"])?;
                for (i, (s, m)) in out.path.scores.iter().zip(&out.mse_trace).enumerate() {
                    w.write_record([i.to_string(), s.to_string(), m.to_string()])?;
                }
                w.flush()?;
            }
            println!(
                "{} waypoints, mse {} -> {}",
                out.path.len(),
                out.mse_trace[0],
                out.mse_trace[out.mse_trace.len() - 1]
            );
        }
        Command::Bench {
            input,
            label_col,
            folds,
            seed,
            k,
            kernel,
            standardize,
            report,
            timings,
        } => {
            let data = load_csv(&input, Some(&label_col), LabelKind::Anomaly)
                .with_context(|| format!("cannot load {}", input.display()))?;
            let config = DetectorConfig { k, kernel, standardize };
            let mut r = kfold_cv(&data, folds, &config, seed)?;
            if !timings {
                r.timings = None;
            }
            let mut w = create(&report)?;
            serde_json::to_writer_pretty(&mut w, &r)?;
            writeln!(w)?;
            w.flush()?;
            println!(
                "train AUC {:.4} +- {:.4}, test AUC {:.4} +- {:.4}",
                r.train_auc.mean, r.train_auc.std, r.test_auc.mean, r.test_auc.std
            );
        }
        Command::Synth {
            shape,
            n,
            noise,
            seed,
            label_col,
            output,
        } => {
            let data = run_synthetic(shape, n, noise, seed)?;
            write_csv(&data, &output, &label_col)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("off")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numeric = e
                .chain()
                .filter_map(|c| c.downcast_ref::<cad_core::Error>())
                .any(cad_core::Error::is_numeric);
            ExitCode::from(if numeric { 3 } else { 2 })
        }
    }
}
