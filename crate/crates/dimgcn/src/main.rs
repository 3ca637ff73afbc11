use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dimgcn::checkpoint::Checkpoint;
use dimgcn::config::{DataConfig, RunConfig};
use dimgcn::crop::{MarginPolicy, PATCH_SIDE};
use dimgcn::ddsm::{prepare, PrepareOptions};
use dimgcn::error::{Error, Result};
use dimgcn::recon::export_reconstructions;
use dimgcn::run::{disentangle_checkpoint, eval_checkpoint, eval_dataset, train};
use dimgcn::synth_io::write_dataset;
use dimgcn_core::heads::LatentSubset;
use dimgcn_core::ingest::attributes::{encode_attribute_vector, mass_annotations};
use dimgcn_core::ingest::{ddsm_test_cases, load_test_list, parse_overlay, serialize_overlay, SplitRatios};
use dimgcn_core::synth::generate_dataset;

#[derive(Parser)]
#[command(name = "dimgcn", version, about = "Multi-domain disentangling VAE with an attribute GCN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Synthetic,
    Image,
}

#[derive(Subcommand)]
enum Command {
    /// Print a complete default run configuration.
    DefaultConfig {
        #[arg(long, value_enum, default_value = "synthetic")]
        kind: ConfigKind,
    },
    /// Generate a synthetic dataset with ground-truth latents.
    SynthGen {
        #[arg(long)]
        out: PathBuf,
        /// Take the synthetic section and seed from a run config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long)]
        domains: Option<usize>,
        #[arg(long)]
        held_out: Option<usize>,
        #[arg(long)]
        samples_per_cell: Option<usize>,
    },
    /// Train a model; writes logs and checkpoints to the output directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint on a named dataset (relevant branch only).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
    },
    /// Affine-recovery scores of a synthetic checkpoint.
    DisentangleReport {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Parse a DDSM .OVERLAY file and print its mass annotations as JSON.
    ParseOverlay {
        path: PathBuf,
        /// Print the canonical serialization instead.
        #[arg(long)]
        canonical: bool,
    },
    /// Check a case-level test list (the built-in DDSM list by default).
    TestList { path: Option<PathBuf> },
    /// Crop mass ROIs from a DDSM-style tree into patches plus a manifest.
    PrepareDdsm {
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "ddsm")]
        dataset: String,
        #[arg(long, default_value_t = 0)]
        domain: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pin the built-in DDSM test list to the test split.
        #[arg(long)]
        pin_ddsm_test: bool,
        /// Pin the cases of this list to the test split.
        #[arg(long)]
        test_list: Option<PathBuf>,
        /// Context around each box as a fraction of its side.
        #[arg(long, default_value_t = 0.1)]
        margin: f64,
        #[arg(long)]
        strict: bool,
    },
    /// Export partial reconstructions of an image model as PNG files.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        domain: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        /// Latent subsets such as `s+a+z`, `s+a`, `z`.
        #[arg(long, value_delimiter = ' ', default_value = "s+a+z s+a z")]
        subsets: Vec<String>,
    },
}

fn emit(text: &str) -> Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(v)?))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| dimgcn::Error::Io { path: path.into(), source })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DefaultConfig { kind } => {
            let cfg = match kind {
                ConfigKind::Synthetic => RunConfig::synthetic_default(),
                ConfigKind::Image => RunConfig::image_default(),
            };
            emit(&cfg.to_toml()?)?;
        }
        Command::SynthGen { out, config, seed, classes, domains, held_out, samples_per_cell } => {
            let (mut syn, mut s) = match config {
                Some(p) => match RunConfig::load(&p)?.data {
                    DataConfig::Synthetic { seed, synthetic, .. } => (synthetic, seed),
                    DataConfig::Manifest { .. } => return Err(Error::Format(format!("{} is not a synthetic run", p.display()))),
                },
                None => match RunConfig::synthetic_default().data {
                    DataConfig::Synthetic { seed, synthetic, .. } => (synthetic, seed),
                    DataConfig::Manifest { .. } => unreachable!(),
                },
            };
            s = seed.unwrap_or(s);
            syn.classes = classes.unwrap_or(syn.classes);
            syn.domains = domains.unwrap_or(syn.domains);
            syn.held_out_domains = held_out.unwrap_or(syn.held_out_domains);
            syn.samples_per_cell = samples_per_cell.unwrap_or(syn.samples_per_cell);
            let ds = generate_dataset(&syn, s)?;
            write_dataset(&out, &ds)?;
            let rank = ds.world.rank_report()?;
            println!(
                "wrote {} domains to {}; rank check s={} a={} z={}",
                ds.domains.len(),
                out.display(),
                rank.s.full_column_rank,
                rank.a.full_column_rank,
                rank.z.full_column_rank
            );
        }
        Command::Train { config, out, steps, quiet } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = steps {
                cfg.train.steps = s;
            }
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            let every = cfg.train.log_every.max(1);
            let summary = train(&cfg, &out, |r| {
                if !quiet && r.step % every == 0 {
                    eprintln!("step {:>6}  total {:>12.4}  l_var {:.5}", r.step, r.total, r.l_var);
                }
            })?;
            print_json(&summary)?;
        }
        Command::Eval { checkpoint, dataset } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = eval_checkpoint(&ck, &dataset)?;
            print_json(&serde_json::json!({
                "dataset": dataset,
                "samples": report.samples,
                "auc": report.auc,
                "attributes": report.attributes,
            }))?;
        }
        Command::DisentangleReport { checkpoint } => {
            print_json(&disentangle_checkpoint(&Checkpoint::load(&checkpoint)?)?)?;
        }
        Command::ParseOverlay { path, canonical } => {
            let file = parse_overlay(&read(&path)?)?;
            if canonical {
                emit(&serialize_overlay(&file))?;
            } else {
                let case = dimgcn::ddsm::case_id_from_path(&path).unwrap_or_default();
                let anns = mass_annotations(&case, &file)?;
                let out: Vec<_> = anns
                    .iter()
                    .map(|a| serde_json::json!({ "annotation": a, "attributes": encode_attribute_vector(a) }))
                    .collect();
                print_json(&out)?;
            }
        }
        Command::TestList { path } => {
            let ids = match path {
                Some(p) => load_test_list(&read(&p)?)?,
                None => ddsm_test_cases(),
            };
            println!("{} cases", ids.len());
        }
        Command::PrepareDdsm { root, out, dataset, domain, seed, pin_ddsm_test, test_list, margin, strict } => {
            let mut pinned: Option<BTreeSet<String>> = None;
            if pin_ddsm_test {
                pinned.get_or_insert_with(BTreeSet::new).extend(ddsm_test_cases().iter().map(ToString::to_string));
            }
            if let Some(p) = test_list {
                let ids = load_test_list(&read(&p)?)?;
                pinned.get_or_insert_with(BTreeSet::new).extend(ids.iter().map(ToString::to_string));
            }
            let opts = PrepareOptions {
                dataset,
                domain,
                seed,
                ratios: SplitRatios::default(),
                pinned,
                margin: MarginPolicy::Relative(margin),
                side: PATCH_SIDE,
                strict,
            };
            let s = prepare(&root, &out, &opts)?;
            for (p, why) in &s.skipped {
                eprintln!("skipped {}: {why}", p.display());
            }
            println!(
                "{} overlays, {} cases, {} patches, {} skipped, {} pinned cases not found",
                s.overlays,
                s.cases,
                s.patches,
                s.skipped.len(),
                s.missing_pinned.len()
            );
        }
        Command::Reconstruct { checkpoint, dataset, domain, out, samples, subsets } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let model = ck.restore()?;
            let data = eval_dataset(&ck.config, &dataset)?;
            let n = samples.min(data.len());
            let data = data.select(&(0..n).collect::<Vec<_>>());
            let subsets = subsets.iter().map(|s| LatentSubset::parse(s)).collect::<std::result::Result<Vec<_>, _>>()?;
            let written = export_reconstructions(&model, &data.x, domain, &subsets, &out)?;
            println!("wrote {written} images to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
