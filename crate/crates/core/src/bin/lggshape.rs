use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use lggshape::evaluation::{make_folds, FoldPlan};
use lggshape::fsutil::write_atomic;
use lggshape::manifest::read_manifest;
use lggshape::phantoms::generate_phantoms;
use lggshape::pipeline::{self, PipelineConfig, RunStatus, StageReport};
use lggshape::radiogenomics::{self, AssociationOptions, BinningScope, FisherOptions};
use lggshape::shape::SlicePolicy;
use lggshape::tables::{features_tsv, read_features};
use lggshape::trainprep::{plan_manifest, ChannelPolicy};
use lggshape::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lggshape",
    version,
    about = "Tumor shape features and radiogenomic tests for brain MRI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescale, window and z-score every case of a manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, value_names = ["NY", "NX"], default_values_t = [256, 256])]
        target: Vec<usize>,
        #[arg(long, default_value_t = 0.01)]
        plow: f64,
        #[arg(long, default_value_t = 0.99)]
        phigh: f64,
    },
    /// Write the oversampling and augmentation plan.
    Trainprep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "auto")]
        channels: ChannelPolicy,
    },
    /// Keep the largest connected component of a mask.
    Postprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shape features of `<masks>/<case>.gmv` for each manifest case.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        masks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "max_area")]
        policy: SlicePolicy,
    },
    /// Dice of predicted against ground-truth masks.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        folds: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Seeded cross-validation folds over the manifest's cases.
    Folds {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        size: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the ten feature/subtype association tests.
    Associate {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = radiogenomics::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = radiogenomics::HYPOTHESES.len())]
        tests: usize,
        #[arg(long, default_value = "included")]
        scope: BinningScope,
        /// Seed for the Monte Carlo fallback.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every stage end to end.
    Pipeline(PipelineArgs),
    /// Generate a synthetic phantom dataset.
    Phantoms {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, num_args = 2, value_names = ["NY", "NX"])]
    target: Option<Vec<usize>>,
    #[arg(long)]
    plow: Option<f64>,
    #[arg(long)]
    phigh: Option<f64>,
    #[arg(long)]
    policy: Option<SlicePolicy>,
    #[arg(long)]
    channels: Option<ChannelPolicy>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tests: Option<usize>,
    #[arg(long)]
    scope: Option<BinningScope>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    fold_size: Option<usize>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

impl PipelineArgs {
    fn into_config(self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:ident),* $(,)?) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(manifest => manifest, out => out, seed => seed, plow => p_low, phigh => p_high,
             policy => slice_policy, channels => channel_policy, alpha => alpha, tests => tests,
             scope => binning_scope, fold_size => fold_size, workers => workers);
        if let Some(t) = self.target {
            c.target = [t[0], t[1]];
        }
        if self.folds.is_some() {
            c.folds = self.folds;
        }
        if self.truth.is_some() {
            c.truth = self.truth;
        }
        if self.labels.is_some() {
            c.labels = self.labels;
        }
        Ok(c)
    }
}

fn status_of(report: &StageReport) -> RunStatus {
    RunStatus::from_stages([report])
}

fn write_json<T: serde::Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn run(cmd: Command) -> Result<RunStatus> {
    match cmd {
        Command::Preprocess {
            manifest,
            out,
            target,
            plow,
            phigh,
        } => {
            let m = read_manifest(&manifest)?;
            let r = pipeline::preprocess_cases(&m, &out, (target[0], target[1]), plow, phigh)?;
            Ok(status_of(&r))
        }
        Command::Trainprep {
            manifest,
            seed,
            out,
            channels,
        } => {
            let m = read_manifest(&manifest)?;
            let (plan, failures) = plan_manifest(&m, seed, channels);
            for (id, e) in &failures {
                error!("case {id}: {e}");
            }
            write_atomic(&out, plan.to_json().as_bytes())?;
            info!("{} plan entries", plan.entries.len());
            Ok(match failures.len() {
                0 => RunStatus::Success,
                n if n == m.cases.len() => RunStatus::Failed,
                _ => RunStatus::Partial,
            })
        }
        Command::Postprocess { input, out } => {
            pipeline::postprocess_file(&input, &out)?;
            Ok(RunStatus::Success)
        }
        Command::Features {
            manifest,
            masks,
            out,
            policy,
        } => {
            let m = read_manifest(&manifest)?;
            let ids: Vec<String> = m.cases.iter().map(|c| c.case_id.clone()).collect();
            let (report, records) = pipeline::extract_case_features(&ids, &masks, policy);
            write_atomic(&out, features_tsv(&records).as_bytes())?;
            Ok(status_of(&report))
        }
        Command::Evaluate {
            pred,
            truth,
            folds,
            out,
        } => {
            let plan: Option<FoldPlan> = match folds {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::Io {
                        path: p.clone(),
                        source: e,
                    })?;
                    Some(serde_json::from_str(&text)?)
                }
                None => None,
            };
            let ids = pipeline::mask_ids(&pred)?;
            let (report, per_case) = pipeline::dice_cases(&ids, &pred, &truth);
            pipeline::write_dice(&out, &per_case, plan.as_ref())?;
            Ok(status_of(&report))
        }
        Command::Folds {
            manifest,
            k,
            size,
            seed,
            out,
        } => {
            let m = read_manifest(&manifest)?;
            let ids: Vec<String> = m.cases.iter().map(|c| c.case_id.clone()).collect();
            write_json(&out, &make_folds(&ids, k, size, seed)?)?;
            Ok(RunStatus::Success)
        }
        Command::Associate {
            features,
            labels,
            out,
            alpha,
            tests,
            scope,
            seed,
        } => {
            let records = read_features(&features)?;
            let labels = radiogenomics::load_labels(&labels)?;
            let opts = AssociationOptions {
                alpha,
                tests,
                scope,
                fisher: FisherOptions {
                    seed,
                    ..FisherOptions::default()
                },
            };
            pipeline::write_association(&out, &records, &labels, &opts)?;
            Ok(RunStatus::Success)
        }
        Command::Pipeline(args) => {
            let cfg = args.into_config()?;
            let log = pipeline::run_pipeline(&cfg)?;
            for (name, s) in &log.stages {
                info!("{name}: {}/{} ok", s.succeeded, s.attempted);
            }
            Ok(log.status)
        }
        Command::Phantoms { out, seed } => {
            let set = generate_phantoms(&out, seed)?;
            println!("{}", set.manifest_path.display());
            Ok(RunStatus::Success)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            error!("{e}");
            ExitCode::from(1)
        }
    }
}
