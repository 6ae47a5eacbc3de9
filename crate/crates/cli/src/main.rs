use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mltrack::io::{
    read_config, read_detections, read_dpts, read_trajectories, write_results, SequenceBundle,
};
use mltrack::metrics::clear_mot;
use mltrack::pipeline::{run, run_lp2d, run_with, RunOptions};
use mltrack::synth::{generate, preset, write_scene, ScenarioSpec};
use mltrack::{Error, TrackerConfig};

#[derive(Parser)]
#[command(
    name = "mltrack",
    version,
    about = "Multi-object tracking with detections and dense point tracklets"
)]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a sequence and write MOT results.
    Track(TrackArgs),
    /// Score results against ground truth.
    Eval(EvalArgs),
    /// Write a synthetic scene.
    Synth(SynthArgs),
    /// Rerun tracking with the cluster count forced around the selected one.
    Ksweep(KsweepArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Detections, MOT format.
    #[arg(long)]
    det: PathBuf,
    /// Dense point tracklets: id,frame,x,y,r,g,b.
    #[arg(long, required_unless_present = "lp2d")]
    dpt: Option<PathBuf>,
    /// Tracker configuration, JSON; defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Detections-only baseline.
    #[arg(long)]
    lp2d: bool,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Results, MOT format.
    #[arg(long)]
    out: PathBuf,
    /// Per-batch diagnostics, JSON.
    #[arg(long)]
    diag: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground truth, MOT format.
    #[arg(long)]
    gt: PathBuf,
    /// Results, MOT format.
    #[arg(long)]
    res: PathBuf,
    /// Smallest IoU that counts as a match.
    #[arg(long, default_value_t = 0.5)]
    iou: f64,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// parallel, occlusion, crossing or crowd4.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Scenario description, JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Directory for det.csv, dpt.csv, gt.csv and spec.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct KsweepArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Rows `k,objective,TA`.
    #[arg(long)]
    out_csv: PathBuf,
    /// Ground truth for the TA column.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Every clustering proposal of the default run: `batch,k,run,seed,objective`.
    #[arg(long)]
    proposals: Option<PathBuf>,
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn load(input: &InputArgs) -> Result<(SequenceBundle, TrackerConfig), Error> {
    let config = match &input.config {
        Some(p) => read_config(p)?,
        None => TrackerConfig::default(),
    };
    let detections = read_detections(&input.det)?.items;
    let dpts = match (&input.dpt, input.lp2d) {
        (Some(p), false) => read_dpts(p)?.items,
        _ => Vec::new(),
    };
    let bundle = SequenceBundle {
        detections,
        dpts,
        frame_count: None,
        image_size: None,
    };
    Ok((bundle, config))
}

fn track(args: &TrackArgs) -> Result<(), Error> {
    let (bundle, config) = load(&args.input)?;
    if args.input.lp2d {
        let trajectories = run_lp2d(&bundle, &config)?;
        write_results(&args.out, &trajectories)?;
        if let Some(p) = &args.diag {
            write(
                p,
                &format!("{{\"trajectories\": {}}}\n", trajectories.len()),
            )?;
        }
        return Ok(());
    }
    let (trajectories, diag) = run(&bundle, &config)?;
    write_results(&args.out, &trajectories)?;
    if let Some(p) = &args.diag {
        write(p, &(diag.to_json() + "\n"))?;
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Error> {
    let gt = read_trajectories(&args.gt)?;
    let res = read_trajectories(&args.res)?;
    let report = clear_mot(&gt, &res, args.iou)?;
    print!("{}", report.table());
    if let Some(p) = &args.json {
        let json =
            serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
        write(p, &(json + "\n"))?;
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<(), Error> {
    let mut spec = match (&args.preset, &args.spec) {
        (Some(name), _) => preset(name)?,
        (None, Some(p)) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            ScenarioSpec::from_json(&text)?
        }
        (None, None) => return Err(Error::InvalidInput("need --preset or --spec".into())),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let (bundle, truth) = generate(&spec)?;
    write_scene(&args.out, &spec, &bundle, &truth)
}

fn ksweep(args: &KsweepArgs) -> Result<(), Error> {
    if args.input.lp2d {
        return Err(Error::InvalidInput(
            "ksweep clusters, --lp2d does not apply".into(),
        ));
    }
    let (bundle, config) = load(&args.input)?;
    let gt = args.gt.as_ref().map(read_trajectories).transpose()?;
    let (_, base) = run(&bundle, &config)?;
    if let Some(p) = &args.proposals {
        let mut out = String::from("batch,k,run,seed,objective\n");
        for (b, batch) in base.batches.iter().enumerate() {
            for e in &batch.sweep {
                out += &format!("{b},{},{},{},{}\n", e.k, e.run, e.seed, e.objective);
            }
        }
        write(p, &out)?;
    }
    let selected = base.batches.iter().map(|b| b.selected_k).sum::<usize>() as i64;
    let h = config.k_sweep_halfwidth as i64;
    let mut out = String::from("k,objective,TA\n");
    for offset in -h..=h {
        let k = selected + offset;
        match run_with(
            &bundle,
            &config,
            &RunOptions {
                k_offset: Some(offset),
            },
        ) {
            Ok((trajectories, diag)) => {
                let ta = match &gt {
                    Some(gt) => format!(
                        "{}",
                        clear_mot(gt, &trajectories, config.iou_match_threshold)?.ta
                    ),
                    None => String::new(),
                };
                out += &format!("{k},{},{ta}\n", diag.objective());
            }
            Err(Error::InvalidClusterCount { .. }) => out += &format!("{k},,\n"),
            Err(e) => return Err(e),
        }
    }
    write(&args.out_csv, &out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Track(a) => track(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a),
        Command::Ksweep(a) => ksweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}
