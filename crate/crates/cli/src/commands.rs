use std::fs;
use std::path::{Path, PathBuf};

use pcb_core::metrics::CurveTable;
use pcb_core::rng::PRNG_ID;
use pcb_core::{
    aggregate_seeds, evaluate, generate_synthetic, load_dataset_with, load_model, run_experiment,
    save_dataset, save_model, ClassTextBank, EmbeddingDataset, Error, ExperimentConfig,
    ExperimentResult, LoadOptions, PromptModel, SynthSpec,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::{EvalArgs, RunArgs, SynthArgs, ZeroshotArgs};

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATASET: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) => EXIT_CONFIG,
            e if e.is_dataset_error() => EXIT_DATASET,
            _ => EXIT_RUNTIME,
        };
        let message = match &e {
            Error::Config(m) => m.clone(),
            other => other.to_string(),
        };
        Self { code, message }
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// Errors while writing run outputs are runtime failures, not dataset errors.
fn output_error(e: Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: e.to_string(),
    }
}

fn write_output(path: &Path, contents: &[u8]) -> CmdResult {
    fs::write(path, contents).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("cannot create {}: {e}", path.display()),
    })
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn load(dir: &Path, renormalize: bool) -> CmdResult<(EmbeddingDataset, ClassTextBank)> {
    Ok(load_dataset_with(dir, LoadOptions { renormalize })?)
}

#[derive(Serialize)]
struct Metadata {
    tool: &'static str,
    version: &'static str,
    prng: &'static str,
}

const METADATA: Metadata = Metadata {
    tool: "pcb",
    version: env!("CARGO_PKG_VERSION"),
    prng: PRNG_ID,
};

#[derive(Serialize)]
struct ResultsFile<'a> {
    metadata: &'a Metadata,
    config: &'a ExperimentConfig,
    result: &'a ExperimentResult,
}

#[derive(Serialize)]
struct TimingFile<'a> {
    seed: u64,
    wall_time_ms: &'a [f64],
}

/// Relative dataset paths in a config resolve against the config's directory.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn run(args: &RunArgs) -> CmdResult {
    if args.repeats == 0 {
        return Err(Failure::config("repeats must be at least 1"));
    }
    let text = fs::read_to_string(&args.config).map_err(|e| {
        Failure::config(format!("cannot read config {}: {e}", args.config.display()))
    })?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    // the echoed config carries resolved paths so it stands on its own
    let base = args.config.parent().unwrap_or(Path::new("."));
    cfg.train_data = resolve(base, &cfg.train_data);
    cfg.test_data = resolve(base, &cfg.test_data);
    let (train, bank) = load(&cfg.train_data, cfg.renormalize)?;
    let (test, _) = load(&cfg.test_data, cfg.renormalize)?;

    create_dir(&args.out)?;
    // the output location is not part of the experiment, so it stays out of
    // the echo and results.json does not depend on where it is written
    let configs: Vec<ExperimentConfig> = (0..args.repeats as u64)
        .map(|i| ExperimentConfig {
            seed: cfg.seed.wrapping_add(i),
            out: None,
            ..cfg.clone()
        })
        .collect();
    let runs = configs
        .par_iter()
        .map(|c| run_experiment(c, &train, &test, &bank).map_err(Failure::from))
        .collect::<CmdResult<Vec<_>>>()?;

    for (c, run) in configs.iter().zip(&runs) {
        let dir = if args.repeats == 1 {
            args.out.clone()
        } else {
            args.out.join(format!("seed_{}", c.seed))
        };
        create_dir(&dir)?;
        let results = ResultsFile {
            metadata: &METADATA,
            config: c,
            result: &run.result,
        };
        write_output(&dir.join("results.json"), &to_json(&results))?;
        let curves = CurveTable::from_result(&run.result, &run.wall_times_ms);
        write_output(&dir.join("curves.csv"), curves.to_csv().as_bytes())?;
        write_output(
            &dir.join("timing.json"),
            &to_json(&TimingFile {
                seed: c.seed,
                wall_time_ms: &run.wall_times_ms,
            }),
        )?;
        save_model(&run.model, dir.join("model")).map_err(output_error)?;
    }
    if args.repeats > 1 {
        let results: Vec<ExperimentResult> = runs.into_iter().map(|r| r.result).collect();
        let agg = aggregate_seeds(&results)?;
        write_output(&args.out.join("aggregate.json"), &to_json(&agg))?;
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> CmdResult {
    let spec = SynthSpec {
        num_classes: args.classes,
        dim: args.dim,
        items_per_class: args.per_class.clone(),
        test_per_class: args.test_per_class,
        noise_sigma_image: args.sigma_img,
        noise_sigma_text: args.sigma_txt,
        descriptions_per_class: args.descriptions,
        seed: args.seed,
    };
    let data = generate_synthetic(&spec)?;
    save_dataset(&data.train, &data.bank, args.out.join("train")).map_err(output_error)?;
    save_dataset(&data.test, &data.bank, args.out.join("test")).map_err(output_error)?;
    Ok(())
}

pub fn zeroshot(args: &ZeroshotArgs) -> CmdResult {
    let (test, bank) = load(&args.data, args.renormalize)?;
    let model = PromptModel::zeros(&bank, args.tau, args.aggregation)?;
    println!("{:?}", evaluate(&model, &bank, &test)?);
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CmdResult {
    let (test, bank) = load(&args.data, args.renormalize)?;
    let model = load_model(&args.model).map_err(|e| Failure {
        code: EXIT_DATASET,
        message: e.to_string(),
    })?;
    println!("{:?}", evaluate(&model, &bank, &test)?);
    Ok(())
}
