use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use domaug::embedding::{load_embedding_file, BuiltinProvider, EmbeddingProvider, FileProvider};
use domaug::pipeline::{self, write_provenance_csv, PipelineConfig};
use domaug::selection::{filter_top_k, kept_count, read_scores_csv, score_candidates, write_scores_csv};
use domaug::{load_dataset, resize_letterbox, save_dataset, DatasetSplit, Error, SplitRole};

#[derive(Parser)]
#[command(name = "domaug", version, about = "Domain-aware augmentation and target-guided candidate filtering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every command that reads a pipeline config.
#[derive(Args)]
struct CommonConfig {
    /// TOML key-value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set box_exchange=gaussian`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shrinkage ratio.
    #[arg(short, long)]
    k: Option<f64>,
    /// mmd | cosine
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    canvas_side: Option<u32>,
}

#[derive(Args)]
struct ConfigArgs {
    #[command(flatten)]
    common: CommonConfig,
    #[arg(long)]
    epochs: Option<u32>,
    /// Candidates generated per epoch (n_a).
    #[arg(long)]
    candidates: Option<usize>,
    /// builtin | file:<template with {epoch}>
    #[arg(long)]
    provider: Option<String>,
}

impl CommonConfig {
    fn load(&self) -> Result<PipelineConfig, Error> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        for pair in &self.overrides {
            config.set_pair(pair)?;
        }
        if let Some(v) = self.k {
            config.k = v;
        }
        if let Some(v) = &self.metric {
            config.set("metric", v)?;
        }
        if let Some(v) = self.canvas_side {
            config.canvas_side = v;
        }
        Ok(config)
    }

    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let config = self.load()?;
        config.validate()?;
        Ok(config)
    }
}

impl ConfigArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<PipelineConfig, Error> {
        let mut config = self.common.load()?;
        if let Some(v) = self.epochs {
            config.epochs = v;
        }
        if let Some(v) = self.candidates {
            config.candidates_per_epoch = v;
        }
        if let Some(v) = &self.provider {
            config.provider = v.clone();
        }
        if seed.is_some() {
            config.seed = seed;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate one batch of augmented candidates.
    Augment {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Epoch index encoded in candidate ids and seeds.
        #[arg(long, default_value_t = 1)]
        epoch: u32,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a candidate directory against the target split (CSV output).
    Score {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Embedding file covering candidate and target ids; builtin embeddings otherwise.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: CommonConfig,
    },
    /// Apply the shrinkage filter to a score CSV.
    Filter {
        #[arg(long)]
        scores: PathBuf,
        #[arg(short, long, default_value_t = 0.8)]
        k: f64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full epoch loop.
    Run {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Summarise a run directory.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn emit_csv(out: Option<&Path>, write: impl FnOnce(&Path) -> Result<(), Error>) -> Result<(), Error> {
    match out {
        Some(path) => write(path),
        None => {
            let tmp = std::env::temp_dir().join(format!("domaug-{}.csv", std::process::id()));
            write(&tmp)?;
            let text = std::fs::read_to_string(&tmp).map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
            let _ = std::fs::remove_file(&tmp);
            print!("{text}");
            Ok(())
        }
    }
}

fn score(candidates: &Path, target: &Path, embeddings: Option<&Path>, out: Option<&Path>, config: &PipelineConfig) -> Result<(), Error> {
    let cands = load_dataset(candidates, SplitRole::Augmented)?;
    let target = load_dataset(target, SplitRole::Target)?;
    let provider: Box<dyn EmbeddingProvider> = match embeddings {
        Some(path) => Box::new(FileProvider::new(load_embedding_file(path)?, 0)),
        None => Box::new(BuiltinProvider),
    };
    let mut missing = Vec::new();
    let mut embed = |split: &DatasetSplit, letterbox: bool| -> Result<Vec<_>, Error> {
        let mut out = Vec::new();
        for img in &split.images {
            let prepared;
            let img = if letterbox {
                prepared = resize_letterbox(img, config.canvas_side)?.image;
                &prepared
            } else {
                img
            };
            match provider.embed(&img.id, img, 0)? {
                Some(v) => out.push(v),
                None => missing.push(img.id.clone()),
            }
        }
        Ok(out)
    };
    let cand_vecs = embed(&cands, false)?;
    let target_vecs = embed(&target, true)?;
    if !missing.is_empty() {
        return Err(Error::MissingEmbeddings { epoch: 0, ids: missing });
    }
    let outcome = score_candidates(&cand_vecs, &target_vecs, config.metric.into())?;
    let n_b = kept_count(outcome.scored.len(), config.k);
    emit_csv(out, |p| write_scores_csv(p, &outcome.scored, n_b))
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Augment {
            source,
            target,
            out,
            seed,
            epoch,
            config,
        } => {
            let config = config.resolve(seed)?;
            let seed = config.seed.unwrap_or(0);
            let source = load_dataset(&source, SplitRole::Source)?;
            let target = load_dataset(&target, SplitRole::Target)?;
            let samples = pipeline::generate_candidates(&source, &target, &config, epoch, seed)?;
            let split = DatasetSplit {
                images: samples.iter().map(|s| s.image.clone()).collect(),
                role: SplitRole::Augmented,
                category_names: target.category_names.clone(),
            };
            let n = save_dataset(&split, &out)?;
            write_provenance_csv(&out.join("provenance.csv"), &samples)?;
            eprintln!("wrote {n} candidates to {}", out.display());
            Ok(())
        }
        Command::Score {
            candidates,
            target,
            embeddings,
            out,
            config,
        } => {
            let config = config.resolve()?;
            score(&candidates, &target, embeddings.as_deref(), out.as_deref(), &config)
        }
        Command::Filter { scores, k, out } => {
            let scored = read_scores_csv(&scores)?;
            let kept = filter_top_k(&scored, k)?;
            eprintln!("kept {} of {}", kept.len(), scored.len());
            emit_csv(out.as_deref(), |p| write_scores_csv(p, &scored, kept.len()))
        }
        Command::Run {
            source,
            target,
            out,
            seed,
            config,
        } => {
            let config = config.resolve(Some(seed))?;
            let source = load_dataset(&source, SplitRole::Source)?;
            let target = load_dataset(&target, SplitRole::Target)?;
            let summary = pipeline::run_loop(&source, &target, &config, &out)?;
            print!("{}", summary.to_csv());
            Ok(())
        }
        Command::Report { run_dir } => {
            let report = pipeline::report(&run_dir)?;
            let csv_path = run_dir.join("report.csv");
            std::fs::write(&csv_path, report.to_csv()).map_err(|e| Error::Io { path: csv_path, source: e })?;
            print!("{}", report.text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind().exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
