use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use memcarve::carve::{carve_dump, CarveOptions, TileRecord};
use memcarve::eval::{run_accuracy_suite_with, run_on_images, EvalOptions, PadPolicy, Scenario};
use memcarve::image_io::{self, EncodeKind};
use memcarve::model::{default_config, CarveConfig, MemoryDump, PixelFormat};
use memcarve::standin;
use memcarve::synth::{apply_transforms, round_up, synth_dump, JunkSpec, PadFill, PlacementSpec, TransformSpec};

#[derive(Parser)]
#[command(name = "memcarve", version, about = "Recover raw bitmap images from memory dumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract tiles from a dump and write every recovered image.
    Carve(CarveArgs),
    /// Build a synthetic dump with embedded images and a ground-truth sidecar.
    Synth(SynthArgs),
    /// Measure recovery rates under scale, noise, brightness and contrast changes.
    Eval(EvalArgs),
    /// Write the procedural stand-in image set as PPM files.
    Standin(StandinArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Bytes per block when splitting the dump.
    #[arg(long, default_value_t = default_config().block_size)]
    block_size: usize,
    /// Minimum blank-alpha fraction for a tile to count as graphical.
    #[arg(long, default_value_t = default_config().alpha_threshold)]
    th: f64,
    /// Minimum normalized peak of the width component.
    #[arg(long, default_value_t = default_config().theta0)]
    theta0: f64,
    /// Upper bound on the normalized wrap-around column distance.
    #[arg(long, default_value_t = default_config().theta1)]
    theta1: f64,
    /// Minimum ratio between the two largest column distances.
    #[arg(long, default_value_t = default_config().theta2)]
    theta2: f64,
    /// Grey-level difference that counts as a column mismatch.
    #[arg(long, default_value_t = default_config().theta3)]
    theta3: f64,
    /// Smallest tile, in pixels, worth analysing.
    #[arg(long, default_value_t = default_config().min_tile_pixels)]
    min_tile_pixels: usize,
    /// Bare spectral width search: no trend removal, no row-difference refinement.
    #[arg(long)]
    no_refine: bool,
}

impl ConfigArgs {
    fn config(&self) -> Result<CarveConfig> {
        let cfg = CarveConfig {
            block_size: self.block_size,
            alpha_threshold: self.th,
            theta0: self.theta0,
            theta1: self.theta1,
            theta2: self.theta2,
            theta3: self.theta3,
            min_tile_pixels: self.min_tile_pixels,
            refine: !self.no_refine,
        };
        cfg.validate().context("invalid configuration")?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputKind {
    /// Binary PPM (alpha dropped).
    Ppm,
    /// Headerless words in the tile's own channel order.
    Raw,
}

#[derive(Args)]
struct CarveArgs {
    /// Raw dump file.
    dump: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, short)]
    out: PathBuf,
    /// Also emit tiles whose spectral peak is weak, flagged as potential false positives.
    #[arg(long)]
    keep_flagged: bool,
    /// Image file type.
    #[arg(long, value_enum, default_value_t = OutputKind::Ppm)]
    output: OutputKind,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Input images (binary PPM).
    #[arg(required = true)]
    images: Vec<PathBuf>,
    /// Output dump path; ground truth goes to <OUT>.json.
    #[arg(long, short)]
    out: PathBuf,
    /// Dump size in bytes; defaults to just enough for the layout.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill of the padding words around each image.
    #[arg(long, default_value = "zero", value_parser = parse_pad_fill)]
    pad_fill: PadFill,
    /// Leading padding words per image; random below the width if omitted.
    #[arg(long)]
    leading: Option<usize>,
    /// Trailing padding words per image; random below the width if omitted.
    #[arg(long)]
    trailing: Option<usize>,
    /// Gaussian noise σ added to each colour channel.
    #[arg(long)]
    noise: Option<f64>,
    /// Brightness factor in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    brightness: Option<f64>,
    /// Contrast factor in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    contrast: Option<f64>,
    /// Scale ratio in (0, 1].
    #[arg(long)]
    scale: Option<f64>,
    /// Number of junk blocks placed between images.
    #[arg(long, default_value_t = 0)]
    junk: usize,
    /// Pixel layout of the embedded images.
    #[arg(long, default_value = "rgba", value_parser = parse_format)]
    format: PixelFormat,
    #[arg(long, default_value_t = default_config().block_size)]
    block_size: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of images (binary PPM).
    #[arg(required_unless_present = "standin", conflicts_with = "standin")]
    image_dir: Option<PathBuf>,
    /// Use COUNT generated stand-in images instead of a directory.
    #[arg(long, value_name = "COUNT")]
    standin: Option<usize>,
    /// Transform list such as `scale:0.5`, `noise:40` or `scale:0.5,noise:10`; repeatable.
    #[arg(long = "scenario", required = true, value_parser = parse_scenario)]
    scenarios: Vec<Scenario>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Padding fill around embedded images.
    #[arg(long, default_value = "blank", value_parser = parse_pad_policy)]
    pad_fill: PadPolicy,
    /// Count flagged tiles as recovered images.
    #[arg(long)]
    keep_flagged: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct StandinArgs {
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 29)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_pad_fill(s: &str) -> Result<PadFill, String> {
    s.parse()
}

fn parse_pad_policy(s: &str) -> Result<PadPolicy, String> {
    s.parse()
}

fn parse_format(s: &str) -> Result<PixelFormat, String> {
    s.parse()
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

#[derive(Serialize)]
struct Manifest<'a> {
    dump: String,
    dump_size: usize,
    config: &'a CarveConfig,
    tiles: Vec<ManifestEntry<'a>>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    #[serde(flatten)]
    record: &'a TileRecord,
    file: Option<String>,
}

fn carve(args: CarveArgs) -> Result<()> {
    let cfg = args.config.config()?;
    let bytes = std::fs::read(&args.dump).with_context(|| format!("cannot read {}", args.dump.display()))?;
    let dump = MemoryDump::new(bytes, args.dump.display().to_string());
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;

    let report = carve_dump(&dump, &cfg, CarveOptions { keep_flagged: args.keep_flagged });
    let mut files = vec![None; report.records.len()];
    for c in &report.images {
        let (name, kind) = match args.output {
            OutputKind::Ppm => (format!("tile_{}.ppm", c.offset), EncodeKind::Ppm),
            OutputKind::Raw => (
                format!("tile_{}.{}", c.offset, c.image.format.as_str().to_ascii_lowercase()),
                EncodeKind::Raw(c.image.format),
            ),
        };
        image_io::encode(&c.image.to_image(), &args.out.join(&name), kind)?;
        files[c.record] = Some(name);
    }
    let manifest = Manifest {
        dump: args.dump.display().to_string(),
        dump_size: dump.len(),
        config: &cfg,
        tiles: report
            .records
            .iter()
            .zip(files)
            .map(|(record, file)| ManifestEntry { record, file })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    image_io::write_atomic(&args.out.join("manifest.json"), text.as_bytes())?;
    eprintln!(
        "{} tiles, {} images written to {}",
        report.records.len(),
        report.images.len(),
        args.out.display()
    );
    Ok(())
}

fn sidecar_path(dump: &Path) -> PathBuf {
    let mut s = dump.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn synth(args: SynthArgs) -> Result<()> {
    let cfg = CarveConfig {
        block_size: args.block_size,
        ..default_config()
    };
    cfg.validate().context("invalid block size")?;
    let mut transforms = Vec::new();
    if let Some(ratio) = args.scale {
        transforms.push(TransformSpec::Scale { ratio });
    }
    if let Some(factor) = args.brightness {
        transforms.push(TransformSpec::Brightness { factor });
    }
    if let Some(factor) = args.contrast {
        transforms.push(TransformSpec::Contrast { factor });
    }
    if let Some(sigma) = args.noise {
        transforms.push(TransformSpec::Noise { sigma });
    }
    for t in &transforms {
        t.validate()?;
    }

    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    let mut images = Vec::new();
    for path in &args.images {
        let img = image_io::decode(path).with_context(|| format!("cannot decode {}", path.display()))?;
        images.push(apply_transforms(&img, &transforms, rng.random())?);
    }

    // Junk, gap, image, gap, junk, gap, image, ... with everything block aligned.
    let bs = cfg.block_size;
    let mut cursor = bs;
    let mut junk = Vec::new();
    let mut pads = Vec::new();
    let mut offsets = Vec::new();
    for img in &images {
        if args.junk > 0 {
            junk.push(JunkSpec {
                offset: cursor,
                length: args.junk * bs,
                seed: rng.random(),
            });
            cursor += (args.junk + 1) * bs;
        }
        let m = img.width();
        let s = args.leading.unwrap_or_else(|| rng.random_range(0..m));
        let e = args.trailing.unwrap_or_else(|| rng.random_range(0..m));
        offsets.push(cursor);
        pads.push((s, e));
        cursor = round_up(cursor + 4 * (s + e + img.width() * img.height()), bs) + bs;
    }
    let placements: Vec<PlacementSpec> = images
        .iter()
        .zip(&offsets)
        .zip(&pads)
        .map(|((image, &dump_offset), &(leading_pad, trailing_pad))| PlacementSpec {
            image,
            format: args.format,
            leading_pad,
            trailing_pad,
            pad_fill: args.pad_fill,
            dump_offset,
        })
        .collect();
    let size = args.size.unwrap_or(cursor);
    let (dump, truth) = synth_dump(&placements, size, &junk, &cfg, args.seed)?;
    image_io::write_atomic(&args.out, dump.bytes())?;
    let gt = sidecar_path(&args.out);
    image_io::write_atomic(&gt, serde_json::to_string_pretty(&truth)?.as_bytes())?;
    eprintln!("wrote {} ({} bytes) and {}", args.out.display(), dump.len(), gt.display());
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let cfg = args.config.config()?;
    let opts = EvalOptions {
        pad: args.pad_fill,
        carve: CarveOptions { keep_flagged: args.keep_flagged },
        ..EvalOptions::default()
    };
    let report = match (&args.image_dir, args.standin) {
        (Some(dir), None) => run_accuracy_suite_with(dir, &args.scenarios, &cfg, &opts, args.seed)?,
        (None, Some(count)) => {
            if count == 0 {
                bail!("--standin needs at least one image");
            }
            let images = standin::standin_set(count, args.seed);
            run_on_images(&images, &args.scenarios, &cfg, &opts, args.seed)
        }
        _ => unreachable!("clap enforces exactly one image source"),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.table());
    }
    Ok(())
}

fn write_standin(args: StandinArgs) -> Result<()> {
    std::fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    for (name, img) in standin::standin_set(args.count, args.seed) {
        image_io::encode(&img, &args.out.join(format!("{name}.ppm")), EncodeKind::Ppm)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Carve(a) => carve(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
        Command::Standin(a) => write_standin(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
