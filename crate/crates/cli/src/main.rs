mod overlay;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use log::info;

use promptforge::eval::{
    generate_synthetic, load_grid, load_manifest, report_csv, save_manifest, sweep, ManifestEntry,
    SweepCase, SweepConfig, SyntheticSuite,
};
use promptforge::io::{
    infer_grid, load_mask, load_prompt_scheme, load_tensor, save_mask, save_prompt_scheme,
    save_raster, save_tensor, TensorFile,
};
use promptforge::pipeline::PipelineTrace;
use promptforge::segmenter::{BaselineSegmenter, Segmenter, SegmenterAdapter};
use promptforge::{FeatureMap, MaskImage, PipelineConfig, PromptScheme};

#[derive(Parser, Debug)]
#[command(
    name = "promptforge",
    version,
    about = "One-shot point-prompt generation from patch features"
)]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a prompt scheme for one target image
    Prompt(PromptArgs),
    /// Segment an image from a prompt scheme
    Segment(SegmentArgs),
    /// Score one configuration over a set of cases
    Eval(EvalArgs),
    /// Score a grid of configurations and write a CSV report
    Sweep(SweepArgs),
    /// Write a synthetic case set with its manifest
    Synth(SynthArgs),
    /// Write the scheme, trace and per-stage overlays for one target
    Trace(TraceArgs),
}

#[derive(Args, Debug)]
struct PipelineInputs {
    #[arg(long, value_name = "FPT")]
    ref_features: PathBuf,
    #[arg(long, value_name = "PGM")]
    ref_mask: PathBuf,
    #[arg(long, value_name = "FPT")]
    target_features: PathBuf,
    /// Target image size as WxH; inferred from a rank-3 tensor if omitted
    #[arg(long, value_name = "WxH", value_parser = parse_size)]
    target_size: Option<(usize, usize)>,
    /// key = value pipeline configuration
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[command(flatten)]
    inputs: PipelineInputs,
    /// Scheme JSON output
    #[arg(long)]
    out: PathBuf,
    /// Trace JSON output [default: <out>.trace.json]
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SegmentArgs {
    #[arg(long)]
    scheme: PathBuf,
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, default_value = "baseline", value_parser = parse_segmenter)]
    segmenter: SegmenterChoice,
    /// Mask PGM output
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false)]
struct CaseSource {
    #[arg(long, group = "source")]
    manifest: Option<PathBuf>,
    /// Synthetic suite description (key = value)
    #[arg(long, group = "source", value_name = "SPEC")]
    synth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    source: CaseSource,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "baseline", value_parser = parse_segmenter)]
    segmenter: SegmenterChoice,
    /// Per-case CSV output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    source: CaseSource,
    #[arg(long)]
    grid: PathBuf,
    /// May be repeated; one report column per segmenter
    #[arg(long, default_value = "baseline", value_parser = parse_segmenter)]
    segmenter: Vec<SegmenterChoice>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Suite description (key = value); defaults apply otherwise
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cases: Option<usize>,
    /// Noise sigma as a multiple of the cluster separation
    #[arg(long)]
    relative_noise: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    inputs: PipelineInputs,
    /// Grayscale PGM drawn under the prompts
    #[arg(long)]
    image: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug)]
enum SegmenterChoice {
    Baseline,
    Adapter(PathBuf),
}

fn parse_segmenter(s: &str) -> Result<SegmenterChoice, String> {
    match s.split_once(':') {
        None if s == "baseline" => Ok(SegmenterChoice::Baseline),
        Some(("adapter", path)) if !path.is_empty() => Ok(SegmenterChoice::Adapter(path.into())),
        _ => Err(format!(
            "expected `baseline` or `adapter:<cmdfile>`, got `{s}`"
        )),
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w: usize = w.trim().parse().map_err(|e| format!("width: {e}"))?;
    let h: usize = h.trim().parse().map_err(|e| format!("height: {e}"))?;
    if w == 0 || h == 0 {
        return Err("size must be nonzero".into());
    }
    Ok((w, h))
}

fn usage_error(message: impl std::fmt::Display) -> ! {
    Cli::command()
        .error(ErrorKind::InvalidValue, message)
        .exit()
}

fn build_segmenter(choice: &SegmenterChoice) -> anyhow::Result<Box<dyn Segmenter>> {
    Ok(match choice {
        SegmenterChoice::Baseline => Box::new(BaselineSegmenter),
        SegmenterChoice::Adapter(path) => Box::new(
            SegmenterAdapter::from_file(path)
                .with_context(|| format!("adapter {}", path.display()))?,
        ),
    })
}

fn load_config(path: Option<&Path>) -> anyhow::Result<PipelineConfig> {
    match path {
        None => Ok(PipelineConfig::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(PipelineConfig::from_text(&text, &p.display().to_string())?)
        }
    }
}

fn load_suite(path: &Path) -> anyhow::Result<SyntheticSuite> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SyntheticSuite::from_text(
        &text,
        &path.display().to_string(),
    )?)
}

fn load_cases(source: &CaseSource) -> anyhow::Result<Vec<SweepCase>> {
    let cases: Vec<SweepCase> = match (&source.manifest, &source.synth) {
        (Some(m), _) => load_manifest(m)?
            .into_iter()
            .map(SweepCase::Files)
            .collect(),
        (None, Some(s)) => load_suite(s)?
            .all_cases()
            .into_iter()
            .map(SweepCase::Synthetic)
            .collect(),
        (None, None) => unreachable!("clap enforces one source"),
    };
    if cases.is_empty() {
        bail!("no cases to evaluate");
    }
    Ok(cases)
}

struct Loaded {
    reference: FeatureMap,
    ref_mask: MaskImage,
    target: FeatureMap,
    width: usize,
    height: usize,
    config: PipelineConfig,
}

fn load_inputs(inputs: &PipelineInputs) -> anyhow::Result<Loaded> {
    let config = load_config(inputs.config.as_deref())?;
    let violations = promptforge::validate_config(&config);
    if !violations.is_empty() {
        return Err(promptforge::Error::Config(violations).into());
    }
    let (patch, stride) = (config.patch_size, config.stride);
    let ref_mask = load_mask(&inputs.ref_mask)?;
    let reference = promptforge::io::load_feature_map(
        &inputs.ref_features,
        ref_mask.width(),
        ref_mask.height(),
        patch,
        stride,
    )?;
    let tensor = load_tensor(&inputs.target_features)?;
    let grid = match inputs.target_size {
        Some((w, h)) => promptforge::build_patch_grid(w, h, patch, stride)?,
        None => infer_grid(&tensor, patch, stride)?,
    };
    let (width, height) = inputs
        .target_size
        .unwrap_or((grid.image_width(), grid.image_height()));
    let target = FeatureMap::from_tensor(&tensor, grid)?;
    Ok(Loaded {
        reference,
        ref_mask,
        target,
        width,
        height,
        config,
    })
}

fn run_prompt_pipeline(inputs: &PipelineInputs) -> anyhow::Result<(PromptScheme, PipelineTrace)> {
    let l = load_inputs(inputs)?;
    Ok(promptforge::run_pipeline(
        &l.reference,
        &l.ref_mask,
        &l.target,
        l.width,
        l.height,
        &l.config,
    )?)
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_prompt(args: &PromptArgs) -> anyhow::Result<()> {
    let (scheme, trace) = run_prompt_pipeline(&args.inputs)?;
    let trace_path = args.trace_out.clone().unwrap_or_else(|| {
        let mut name = args.out.file_stem().unwrap_or_default().to_os_string();
        name.push(".trace.json");
        args.out.with_file_name(name)
    });
    save_prompt_scheme(&scheme, &args.out)?;
    write_text(&trace_path, &trace.to_json())?;
    info!(
        "{} positive, {} negative prompts",
        scheme.positives().count(),
        scheme.negatives().count()
    );
    Ok(())
}

fn cmd_segment(args: &SegmentArgs) -> anyhow::Result<()> {
    let scheme = load_prompt_scheme(&args.scheme)?;
    let segmenter = build_segmenter(&args.segmenter)?;
    let mask = segmenter.segment(args.image.as_deref(), &scheme)?;
    save_mask(&mask, &args.out)?;
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let cases = load_cases(&args.source)?;
    let config = load_config(args.config.as_deref())?;
    let segmenter = build_segmenter(&args.segmenter)?;
    let grid = [SweepConfig {
        id: "eval".into(),
        config,
    }];
    let record = sweep(&grid, &cases, &[segmenter.as_ref()])?.remove(0);
    let mut scores: Vec<Option<f64>> = vec![None; cases.len()];
    let mut next = record.dice.iter();
    for (i, slot) in scores.iter_mut().enumerate() {
        if !record.failures.iter().any(|(c, _)| *c == i) {
            *slot = next.next().copied();
        }
    }
    let mut csv = String::from("case,dice,error\n");
    for (i, score) in scores.iter().enumerate() {
        match score {
            Some(d) => csv.push_str(&format!("{i},{d:.6},\n")),
            None => {
                let msg = &record
                    .failures
                    .iter()
                    .find(|(c, _)| *c == i)
                    .expect("failed case")
                    .1;
                csv.push_str(&format!("{i},,\"{}\"\n", msg.replace('"', "\"\"")));
            }
        }
    }
    let Some(mean) = record.mean() else {
        bail!("all {} cases failed: {}", cases.len(), record.failures[0].1);
    };
    if let Some(out) = &args.out {
        write_text(out, &csv)?;
    }
    println!(
        "mean dice {mean:.4} over {} of {} cases",
        record.dice.len(),
        cases.len()
    );
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let grid = load_grid(&args.grid).with_context(|| format!("grid {}", args.grid.display()))?;
    let cases = load_cases(&args.source)?;
    let segmenters = args
        .segmenter
        .iter()
        .map(build_segmenter)
        .collect::<anyhow::Result<Vec<_>>>()?;
    let refs: Vec<&dyn Segmenter> = segmenters.iter().map(|s| s.as_ref()).collect();
    let records = sweep(&grid, &cases, &refs)?;
    if records.iter().all(|r| r.dice.is_empty()) {
        let first = records
            .iter()
            .find_map(|r| r.failures.first())
            .map(|(_, e)| e.as_str())
            .unwrap_or("unknown error");
        bail!("no case succeeded under any configuration: {first}");
    }
    let csv = report_csv(&grid, &records, cases.len())?;
    write_text(&args.out, &csv)?;
    info!("{} configurations x {} cases", grid.len(), cases.len());
    Ok(())
}

/// Object pixels at 200, background at 60.
fn render_image(mask: &MaskImage) -> Vec<u8> {
    mask.data()
        .iter()
        .map(|&v| if v == 1 { 200 } else { 60 })
        .collect()
}

fn grid_tensor(map: &FeatureMap) -> anyhow::Result<TensorFile> {
    let g = map.grid();
    let flat = map.to_tensor();
    Ok(TensorFile::new(
        vec![g.rows(), g.cols(), map.dim()],
        flat.into_data(),
    )?)
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<()> {
    let mut suite = match &args.spec {
        Some(p) => load_suite(p)?,
        None => SyntheticSuite::default(),
    };
    if let Some(seed) = args.seed {
        suite.seed = seed;
    }
    if let Some(n) = args.cases {
        suite.cases = n;
    }
    if let Some(f) = args.relative_noise {
        suite = suite.with_relative_noise(f);
    }
    if suite.cases == 0 {
        usage_error("zero cases requested");
    }
    let samples = suite
        .all_cases()
        .iter()
        .map(generate_synthetic::<f32>)
        .collect::<Result<Vec<_>, _>>()?;

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let mut manifest = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let name = |part: &str, ext: &str| PathBuf::from(format!("case{i:03}_{part}.{ext}"));
        let entry = ManifestEntry {
            ref_features: name("ref", "fpt"),
            ref_mask: name("ref_mask", "pgm"),
            target_features: name("target", "fpt"),
            target_image: Some(name("target_image", "pgm")),
            target_mask: name("target_mask", "pgm"),
        };
        let at = |p: &Path| args.out.join(p);
        save_tensor(&grid_tensor(&s.reference)?, at(&entry.ref_features))?;
        save_mask(&s.ref_mask, at(&entry.ref_mask))?;
        save_tensor(&grid_tensor(&s.target)?, at(&entry.target_features))?;
        save_mask(&s.target_mask, at(&entry.target_mask))?;
        let (w, h) = (s.target_mask.width(), s.target_mask.height());
        save_raster(
            w,
            h,
            &render_image(&s.target_mask),
            at(entry.target_image.as_ref().expect("set above")),
        )?;
        manifest.push(entry);
    }
    save_manifest(&manifest, args.out.join("manifest.json"))?;
    info!("wrote {} cases to {}", manifest.len(), args.out.display());
    Ok(())
}

fn cmd_trace(args: &TraceArgs) -> anyhow::Result<()> {
    let (scheme, trace) = run_prompt_pipeline(&args.inputs)?;
    let (w, h) = (scheme.width() as usize, scheme.height() as usize);
    let base = match &args.image {
        Some(p) => {
            let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            let (iw, ih, pixels) = promptforge::io::decode_pgm(&bytes)?;
            if (iw, ih) != (w, h) {
                bail!("image {} is {iw}x{ih}, target is {w}x{h}", p.display());
            }
            pixels
        }
        None => vec![128; w * h],
    };
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    save_prompt_scheme(&scheme, args.out.join("scheme.json"))?;
    write_text(&args.out.join("trace.json"), &trace.to_json())?;
    for (i, record) in trace.stages.iter().enumerate() {
        let pixels = overlay::stamp(&base, w, h, &record.points_after);
        let name = format!("stage{}_{}.pgm", i + 1, record.stage.as_str());
        save_raster(w, h, &pixels, args.out.join(name))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            usage_error("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker pool")?;
    }
    match &cli.command {
        Command::Prompt(a) => cmd_prompt(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Trace(a) => cmd_trace(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PROMPTFORGE_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
