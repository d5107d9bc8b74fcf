use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use sl4slam::evaluation::{ate_stats, parse_tum, AlignMode, DEFAULT_MAX_DT};
use sl4slam::pipeline::{
    export_ply, export_trajectory, run, DatasetSource, InterEdgeMode, SlamConfig, SubmapSource,
};
use sl4slam::retrieval::{verify_pair, VerifyConfig, DEFAULT_TOP_FRACTION};
use sl4slam::simulator::{write_dataset, NoiseProfile, Preset, Simulation};
use sl4slam::submap::load_tokens;

#[derive(Parser)]
#[command(
    name = "sl4slam",
    version,
    about = "Submap alignment on SL(4) with verified loop closures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the backend on a dataset directory.
    Run(RunArgs),
    /// Write a synthetic dataset directory.
    Simulate {
        #[arg(long, default_value = "loop")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// zero | in-model | out-of-model
        #[arg(long, default_value = "in-model")]
        noise: NoiseProfile,
        #[arg(long)]
        out: PathBuf,
    },
    /// Absolute trajectory error between two TUM files.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// sim3 | se3
        #[arg(long, default_value = "sim3")]
        mode: AlignMode,
        #[arg(long, default_value_t = DEFAULT_MAX_DT)]
        max_dt: f64,
    },
    /// Attention match score between two frames' exported tokens.
    VerifyPair {
        /// Query frame queries (N×d).
        query_qtok: PathBuf,
        /// Query frame keys (N×d).
        query_ktok: PathBuf,
        /// Retrieved frame queries (N×d).
        retrieved_qtok: PathBuf,
        /// Retrieved frame keys (N×d).
        retrieved_ktok: PathBuf,
        #[arg(long, default_value_t = 0.85)]
        match_threshold: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_FRACTION)]
        top_fraction: f64,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 16)]
    submap_size: usize,
    #[arg(long, default_value_t = 0.95)]
    retrieval_threshold: f64,
    #[arg(long, default_value_t = 0.85)]
    match_threshold: f64,
    #[arg(long, default_value_t = 0.25)]
    conf_percentile: f64,
    #[arg(long, default_value_t = 50.0)]
    min_disparity: f64,
    #[arg(long, default_value_t = 1e-2)]
    intra_sigma: f64,
    #[arg(long, default_value_t = 1e-3)]
    inter_sigma: f64,
    /// full | identity-affine | point-alignment
    #[arg(long, default_value = "full")]
    inter_mode: InterEdgeMode,
    #[arg(long)]
    no_loop_closure: bool,
    #[arg(long)]
    out: PathBuf,
}

fn run_cmd(a: RunArgs) -> Result<()> {
    let cfg = SlamConfig {
        submap_size: a.submap_size,
        retrieval_threshold: a.retrieval_threshold,
        match_threshold: a.match_threshold,
        conf_percentile: a.conf_percentile,
        min_disparity_px: a.min_disparity,
        intra_sigma: a.intra_sigma,
        inter_sigma: a.inter_sigma,
        inter_mode: a.inter_mode,
        enable_loop_closure: !a.no_loop_closure,
        ..Default::default()
    };
    let mut source = DatasetSource::open(&a.dataset)
        .with_context(|| format!("opening {}", a.dataset.display()))?;
    let name = source.manifest().name.clone();
    let start = Instant::now();
    let out = run(&mut source, cfg, &name)?;
    info!(
        "{} submaps in {:.2?}",
        out.report.regular_submaps,
        start.elapsed()
    );

    fs::create_dir_all(&a.out)?;
    export_trajectory(&out.reconstruction, &a.out.join("trajectory.tum"))?;
    export_ply(&out.reconstruction, &a.out.join("map.ply"))?;
    fs::write(
        a.out.join("report.json"),
        serde_json::to_string_pretty(&out.report)?,
    )?;

    let lc = &out.report.loop_closures;
    println!(
        "frames {}  submaps {} (+{} loop)  closures: {} candidates, {} accepted, {} rejected",
        out.reconstruction.frames.len(),
        out.report.regular_submaps,
        out.report.loop_submaps,
        lc.retrieval_hits,
        lc.accepted,
        lc.rejected
    );
    if let Some(gt) = source.groundtruth() {
        let est = out.reconstruction.trajectory()?;
        let s = ate_stats(&est, &gt, AlignMode::Sim3, DEFAULT_MAX_DT)?;
        println!("ATE (sim3) rmse {:.6} m over {} poses", s.rmse, s.pairs);
    }
    println!("wrote {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let result = match Cli::parse().command {
        Command::Run(a) => run_cmd(a),
        Command::Simulate {
            preset,
            seed,
            noise,
            out,
        } => (|| {
            let sim = Simulation::preset(preset, noise.spec(), seed)?;
            let manifest = write_dataset(&sim, &out, SlamConfig::default().thresholds())?;
            println!(
                "{}: {} frames, {} submaps, {} loop submaps -> {}",
                manifest.name,
                manifest.frame_count,
                manifest.submaps.len(),
                manifest.loop_submaps.len(),
                out.display()
            );
            Ok(())
        })(),
        Command::Eval {
            est,
            gt,
            mode,
            max_dt,
        } => (|| {
            let s = ate_stats(&parse_tum(&est)?, &parse_tum(&gt)?, mode, max_dt)?;
            println!("rmse   {:.6}", s.rmse);
            println!("mean   {:.6}", s.mean);
            println!("median {:.6}", s.median);
            println!("max    {:.6}", s.max);
            println!("pairs  {}", s.pairs);
            Ok(())
        })(),
        Command::VerifyPair {
            query_qtok,
            query_ktok,
            retrieved_qtok,
            retrieved_ktok,
            match_threshold,
            top_fraction,
        } => (|| {
            let query = load_tokens(&query_qtok, &query_ktok)?;
            let retrieved = load_tokens(&retrieved_qtok, &retrieved_ktok)?;
            let cfg = VerifyConfig {
                threshold: match_threshold,
                top_fraction,
                ..Default::default()
            };
            let v = verify_pair(&query, &retrieved, &cfg)?;
            println!(
                "alpha {:.6} {}",
                v.score,
                if v.accepted { "ACCEPT" } else { "REJECT" }
            );
            Ok(())
        })(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
