use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use opfactor::config::Config;
use opfactor::corpus::{load_corpus, AudioEntry, CorpusManifest, ImageEntry};
use opfactor::protocol::AuthRequest;
use opfactor::report;
use opfactor::server::{self, Limits};
use opfactor::service::Gate;
use opfactor::store::EnrollmentStore;
use opfactor::{pnm, wav};
use opfactor_core::enrollment::{EnrollmentRecord, Reference};
use opfactor_core::eval::{
    calibrate_threshold, distance_matrix, duration_sweep, identity_average_matrix, pairwise_accuracy,
    synth_engine_sound, synth_vehicle_image, DistanceMatrix, EngineProfile, FeatureKind, FleetSpec,
    LabeledSample, MatrixKind, PaletteSpec,
};
use opfactor_core::{audio_signature, color_histogram, AudioSignature, ColorHistogram, Rgb, Verdict};

const EXIT_DENY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "opfactor", version, about = "Opportunistic multi-factor vehicle authentication")]
struct Cli {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long, global = true, env = "OPFACTOR_CONFIG")]
    config: Option<PathBuf>,
    /// Enrollment store directory.
    #[arg(long, global = true, env = "OPFACTOR_STORE", default_value = "opfactor-store")]
    store: PathBuf,
    /// More diagnostics on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register an identity with its RFID tag and reference captures.
    ///
    /// Prints `id, tag, audio refs, visual refs` tab-separated.
    Enroll {
        #[arg(long)]
        id: String,
        #[arg(long)]
        tag: String,
        /// Reference WAV file; repeatable.
        #[arg(long)]
        audio: Vec<PathBuf>,
        /// Reference PPM image (mask from the `.mask.pgm` sidecar); repeatable.
        #[arg(long)]
        image: Vec<PathBuf>,
    },
    /// Append one reference capture to an identity.
    AddRef {
        #[arg(long)]
        id: String,
        #[arg(long, conflicts_with = "image", required_unless_present = "image")]
        audio: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, requires = "image")]
        mask: Option<PathBuf>,
    },
    /// Authenticate one vehicle; exits 1 on deny.
    Verify {
        #[arg(long)]
        tag: String,
        #[arg(long)]
        audio: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, requires = "image")]
        mask: Option<PathBuf>,
        #[arg(long, default_value = "cli")]
        request_id: String,
    },
    /// List enrolled identities.
    List,
    /// Print one enrollment record.
    Show {
        #[arg(long)]
        id: String,
    },
    /// Remove an identity.
    Delete {
        #[arg(long)]
        id: String,
    },
    /// Pairwise distance matrix of a corpus as CSV.
    Matrix {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Average per identity pair instead of per sample.
        #[arg(long)]
        identity_average: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grayscale heatmap of a matrix (PGM, optionally SVG).
    Heatmap {
        /// Matrix CSV as written by `matrix`.
        #[arg(long, conflicts_with = "corpus")]
        matrix: Option<PathBuf>,
        #[command(flatten)]
        corpus: OptionalCorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Pixels per cell side.
        #[arg(long, default_value_t = 16)]
        cell: usize,
    },
    /// Pairwise accuracy of a corpus at a threshold.
    Accuracy {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Defaults to the configured threshold of the feature kind.
        #[arg(long, conflicts_with = "calibrate")]
        threshold: Option<f64>,
        /// Pick the threshold that maximizes accuracy on this corpus.
        #[arg(long)]
        calibrate: bool,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Accuracy of the synthetic fleet per clip duration.
    Sweep {
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 2.0, 1.0])]
        durations: Vec<f64>,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Defaults to the configured audio threshold.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Render a matrix CSV as a Markdown table with threshold markers.
    Table {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        threshold: f64,
    },
    /// Generate synthetic captures.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Run the authentication daemon.
    Serve {
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
    /// Print the effective configuration.
    ShowConfig,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// One engine clip as WAV.
    Clip {
        #[arg(long)]
        fundamental: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
        harmonics: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 44_100)]
        rate: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One vehicle photo as PPM plus its sidecar mask.
    Image {
        /// `r,g,b`
        #[arg(long, value_parser = parse_rgb)]
        color: Rgb,
        #[arg(long, default_value_t = 8.0)]
        noise: f64,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 48)]
        height: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// The default six-engine fleet as WAV files plus `fleet.manifest`.
    Fleet {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// The default four-color palette as PPM files plus `palette.manifest`.
    Palette {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        images: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Debug)]
struct CorpusArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum)]
    kind: Kind,
}

#[derive(Args, Debug)]
struct OptionalCorpusArgs {
    #[arg(long, requires = "kind")]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<Kind>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Audio,
    Visual,
}

impl From<Kind> for FeatureKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Audio => FeatureKind::Audio,
            Kind::Visual => FeatureKind::Visual,
        }
    }
}

fn parse_rgb(s: &str) -> Result<Rgb, String> {
    let parts: Vec<u8> = s
        .split(',')
        .map(|p| p.trim().parse::<u8>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [r, g, b] => Ok(Rgb::new(r, g, b)),
        _ => Err("expected r,g,b".into()),
    }
}

/// Failure that maps to the usage exit code.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&format!("{}\n", serde_json::to_string_pretty(value)?))
}

/// `id<TAB>tag<TAB>audio refs<TAB>visual refs`
fn summary(r: &EnrollmentRecord) -> String {
    format!("{}\t{}\t{}\t{}\n", r.identity_id, r.rfid_tag, r.audio_refs.len(), r.visual_refs.len())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_signature(path: &Path, cfg: &Config) -> Result<AudioSignature> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let clip = wav::decode_wav(&bytes).with_context(|| path.display().to_string())?;
    audio_signature(&clip, &cfg.audio).with_context(|| path.display().to_string())
}

fn read_histogram(path: &Path, mask: Option<&Path>, cfg: &Config) -> Result<ColorHistogram> {
    let img = pnm::load_image(path, mask).with_context(|| path.display().to_string())?;
    color_histogram(&img, cfg.histogram_bins).with_context(|| path.display().to_string())
}

fn open_store(cli: &Cli) -> Result<EnrollmentStore> {
    EnrollmentStore::load(&cli.store).with_context(|| format!("opening store {}", cli.store.display()))
}

fn corpus_samples(args: &CorpusArgs, cfg: &Config) -> Result<Vec<LabeledSample>> {
    load_corpus(&args.corpus, args.kind.into(), &cfg.audio, cfg.histogram_bins)
        .with_context(|| format!("loading corpus {}", args.corpus.display()))
}

fn labels(samples: &[LabeledSample]) -> Vec<String> {
    samples.iter().map(|s| s.label.clone()).collect()
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn default_threshold(kind: Kind, cfg: &Config) -> f64 {
    match kind {
        Kind::Audio => cfg.thresholds.audio_max_distance,
        Kind::Visual => cfg.thresholds.visual_max_distance,
    }
}

fn run(cli: Cli) -> Result<u8> {
    let cfg = Config::load_or_default(cli.config.as_deref()).context("loading configuration")?;
    match &cli.command {
        Command::Enroll { id, tag, audio, image } => {
            if audio.is_empty() && image.is_empty() {
                return Err(usage("enroll needs at least one --audio or --image"));
            }
            let sigs = audio.iter().map(|p| read_signature(p, &cfg)).collect::<Result<Vec<_>>>()?;
            let hists = image.iter().map(|p| read_histogram(p, None, &cfg)).collect::<Result<Vec<_>>>()?;
            let store = EnrollmentStore::open_or_create(&cli.store, cfg.max_refs)
                .with_context(|| format!("opening store {}", cli.store.display()))?;
            emit(&summary(&store.enroll(id, tag, sigs, hists)?))?;
        }
        Command::AddRef { id, audio, image, mask } => {
            let reference = match (audio, image) {
                (Some(a), _) => Reference::Audio(read_signature(a, &cfg)?),
                (None, Some(i)) => Reference::Visual(read_histogram(i, mask.as_deref(), &cfg)?),
                (None, None) => return Err(usage("add-ref needs --audio or --image")),
            };
            emit(&summary(&open_store(&cli)?.add_reference(id, reference)?))?;
        }
        Command::Verify { tag, audio, image, mask, request_id } => {
            let gate = Gate::new(Arc::new(open_store(&cli)?), cfg);
            let req = AuthRequest {
                request_id: request_id.clone(),
                rfid_tag: tag.clone(),
                audio_path: path_string(audio),
                image_path: path_string(image),
                mask_path: path_string(mask),
                ..Default::default()
            };
            req.validate().map_err(usage)?;
            let result = gate.evaluate(&req);
            print_json(&result.response)?;
            if result.response.verdict == Verdict::Deny {
                return Ok(EXIT_DENY);
            }
        }
        Command::List => emit(&open_store(&cli)?.list().iter().map(summary).collect::<String>())?,
        Command::Show { id } => print_json(&open_store(&cli)?.get(id)?)?,
        Command::Delete { id } => emit(&format!("deleted {}", summary(&open_store(&cli)?.delete(id)?)))?,
        Command::Matrix { corpus, identity_average, out } => {
            let samples = corpus_samples(corpus, &cfg)?;
            let mut m = distance_matrix(&samples)?;
            if *identity_average {
                m = identity_average_matrix(&m, &labels(&samples))?;
            }
            let csv = report::matrix_to_csv(&m);
            match out {
                Some(path) => write_file(path, csv)?,
                None => emit(&csv)?,
            }
        }
        Command::Heatmap { matrix, corpus, out, svg, cell } => {
            let m: DistanceMatrix = match (matrix, &corpus.corpus, corpus.kind) {
                (Some(path), _, _) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    report::matrix_from_csv(&text, MatrixKind::SampleLevel)?
                }
                (None, Some(c), Some(kind)) => distance_matrix(&corpus_samples(
                    &CorpusArgs {
                        corpus: c.clone(),
                        kind,
                    },
                    &cfg,
                )?)?,
                _ => return Err(usage("heatmap needs --matrix or --corpus with --kind")),
            };
            write_file(out, report::heatmap_pgm(&m, *cell))?;
            if let Some(svg) = svg {
                write_file(svg, report::heatmap_svg(&m, *cell))?;
            }
        }
        Command::Accuracy { corpus, threshold, calibrate, csv } => {
            let samples = corpus_samples(corpus, &cfg)?;
            let labels = labels(&samples);
            let m = distance_matrix(&samples)?;
            let threshold = match (threshold, calibrate) {
                (_, true) => calibrate_threshold(&m, &labels)?,
                (Some(t), false) => *t,
                (None, false) => default_threshold(corpus.kind, &cfg),
            };
            let r = pairwise_accuracy(&m, &labels, threshold)?;
            if let Some(path) = csv {
                write_file(path, report::accuracy_to_csv(&r))?;
            }
            print_json(&r)?;
        }
        Command::Sweep { durations, clips, seed, threshold, csv } => {
            let mut fleet = FleetSpec::default();
            if let Some(c) = clips {
                fleet.clips_per_profile = *c;
            }
            if let Some(s) = seed {
                fleet.seed = *s;
            }
            let threshold = threshold.unwrap_or(cfg.thresholds.audio_max_distance);
            let rows = duration_sweep(&fleet, durations, &cfg.audio, threshold);
            if let Some(path) = csv {
                write_file(path, report::sweep_to_csv(&rows))?;
            }
            print_json(&rows)?;
        }
        Command::Table { matrix, threshold } => {
            let text = fs::read_to_string(matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let m = report::matrix_from_csv(&text, MatrixKind::IdentityAverage)?;
            emit(&report::marked_table(&m, *threshold))?;
        }
        Command::Synth(cmd) => synth(cmd)?,
        Command::Serve { bind } => {
            let bind = bind.clone().unwrap_or_else(|| cfg.server.bind.clone());
            let limits = Limits {
                max_connections: cfg.server.max_connections,
                max_request_bytes: cfg.server.max_request_bytes,
            };
            let store = open_store(&cli)?;
            let handle = server::spawn(Gate::new(Arc::new(store), cfg), &bind, limits)
                .with_context(|| format!("binding {bind}"))?;
            eprintln!("listening on {}", handle.local_addr());
            handle.join();
        }
        Command::ShowConfig => emit(&cfg.to_toml())?,
    }
    Ok(0)
}

fn synth(cmd: &SynthCommand) -> Result<()> {
    match cmd {
        SynthCommand::Clip { fundamental, harmonics, noise, jitter, duration, rate, seed, out } => {
            let profile = EngineProfile {
                fundamental: *fundamental,
                harmonic_amplitudes: harmonics.clone(),
                noise_level: *noise,
                jitter: *jitter,
            };
            let clip = synth_engine_sound(&profile, *duration, *rate, *seed)?;
            write_file(out, wav::encode_wav(&clip, wav::SampleFormat::F32))?;
        }
        SynthCommand::Image { color, noise, width, height, seed, out } => {
            let img = synth_vehicle_image(*color, *noise, *width, *height, *seed)?;
            pnm::save_image(&img, out).with_context(|| format!("writing {}", out.display()))?;
        }
        SynthCommand::Fleet { out, duration, clips, seed } => {
            let mut fleet = FleetSpec::default();
            if let Some(c) = clips {
                fleet.clips_per_profile = *c;
            }
            if let Some(s) = seed {
                fleet.seed = *s;
            }
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let mut manifest = CorpusManifest::default();
            for (p, (label, profile)) in fleet.profiles.iter().enumerate() {
                for c in 0..fleet.clips_per_profile {
                    let clip = synth_engine_sound(profile, *duration, fleet.sample_rate, fleet.clip_seed(0, p, c))?;
                    let name = format!("{label}-{c:02}.wav");
                    write_file(&out.join(&name), wav::encode_wav(&clip, wav::SampleFormat::F32))?;
                    manifest.audio.push(AudioEntry {
                        label: label.clone(),
                        path: name,
                    });
                }
            }
            write_file(&out.join("fleet.manifest"), manifest.to_toml())?;
        }
        SynthCommand::Palette { out, images, seed } => {
            let mut palette = PaletteSpec::default();
            if let Some(n) = images {
                palette.images_per_color = *n;
            }
            if let Some(s) = seed {
                palette.seed = *s;
            }
            fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let mut manifest = CorpusManifest::default();
            for (ci, (label, color)) in palette.colors.iter().enumerate() {
                for i in 0..palette.images_per_color {
                    let img = synth_vehicle_image(
                        *color,
                        palette.color_noise,
                        palette.width,
                        palette.height,
                        palette.image_seed(ci, i),
                    )?;
                    let name = format!("{label}-{i:02}.ppm");
                    pnm::save_image(&img, &out.join(&name)).with_context(|| format!("writing {name}"))?;
                    manifest.image.push(ImageEntry {
                        label: label.clone(),
                        path: name,
                        mask: None,
                    });
                }
            }
            write_file(&out.join("palette.manifest"), manifest.to_toml())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DATA)
            }
        }
    }
}

