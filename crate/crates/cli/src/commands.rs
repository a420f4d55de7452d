use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use ddga_core::barycentric::{predict, FixedPointConfig, InterpolationRequest};
use ddga_core::dataset::{build_mask, read_snapshots, write_snapshots, Grid, ParamKind, Rect, TimeAxis};
use ddga_core::ddga::{run, GaConfig, GaHistory, SearchSpace};
use ddga_core::objective::{l2_error_series, write_series_csv, Target};
use ddga_core::pod::{build_database, read_database, write_database};
use ddga_core::surrogate::{
    generate_ensemble, load_manifest, write_manifest, CavityParams, Family, ManifestEntry, PlumeParams, SolverConfig,
};

use crate::error::CliError;
use crate::presets::{BENCH_CELLS, BENCH_SIDE, BENCH_STEPS, BENCH_T_FINAL};

const PRESETS: [&str; 2] = ["series1-velocity", "series2-temperature"];

#[derive(Debug, Parser)]
#[command(name = "ddga", version, about = "Inverse parameter identification on POD-compressed snapshot ensembles")]
pub struct Cli {
    /// `key = value` file of flag defaults; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the surrogate for each parameter value and write SNP1 files plus a manifest.
    Datagen(DatagenArgs),
    /// Compress an ensemble into a ROM1 database.
    Compress(CompressArgs),
    /// Predict the field at an unseen parameter value.
    Predict(PredictArgs),
    /// Recover the parameter behind a target field with the genetic search.
    Optimize(OptimizeArgs),
    /// Write plot-ready CSV series.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyName {
    Plume,
    Cavity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Varied {
    Velocity,
    Temperature,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct DatagenArgs {
    #[arg(long, value_enum)]
    pub family: FamilyName,
    /// Training values of the family parameter.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = ArgAction::Set, allow_negative_numbers = true)]
    pub deltas: Vec<f64>,
    /// Cavity parameter varied by `--deltas`.
    #[arg(long, value_enum)]
    pub vary: Option<Varied>,
    /// Cavity training inlet velocities (m/s); implies `--vary velocity`.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = ArgAction::Set, allow_negative_numbers = true)]
    pub velocities: Vec<f64>,
    /// Cavity training inlet temperatures (°C); implies `--vary temperature`.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = ArgAction::Set, allow_negative_numbers = true)]
    pub temperatures: Vec<f64>,
    /// Held-out values written as `target_<i>.snp`.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = ArgAction::Set, allow_negative_numbers = true)]
    pub target: Vec<f64>,
    #[arg(long, default_value_t = 15.0)]
    pub inlet_temp: f64,
    #[arg(long, default_value_t = 0.57)]
    pub inlet_velocity: f64,
    #[arg(long, default_value_t = 2e-3)]
    pub kappa: f64,
    /// Fraction of the left wall occupied by the inlet.
    #[arg(long, default_value_t = 0.5)]
    pub inlet_height: f64,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    /// Plume width (m).
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = BENCH_CELLS)]
    pub nx: usize,
    #[arg(long, default_value_t = BENCH_CELLS)]
    pub ny: usize,
    #[arg(long, default_value_t = BENCH_SIDE)]
    pub lx: f64,
    #[arg(long, default_value_t = BENCH_SIDE)]
    pub ly: f64,
    /// Snapshot count N_s.
    #[arg(long, default_value_t = BENCH_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = BENCH_T_FINAL)]
    pub t_final: f64,
    /// Existing output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = PRESETS)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CompressArgs {
    /// Ensemble manifest written by `datagen`.
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Per-sample POD order.
    #[arg(long, default_value_t = 60)]
    pub q: usize,
    /// Global spatial order (default: largest admissible).
    #[arg(long)]
    pub r: Option<usize>,
    /// Global temporal order (default: largest admissible).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = PRESETS)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub rom: PathBuf,
    /// Parameter value to predict at.
    #[arg(long, allow_negative_numbers = true)]
    pub delta: f64,
    #[arg(long, default_value_t = 2)]
    pub ne_x: usize,
    #[arg(long, default_value_t = 2)]
    pub ne_t: usize,
    /// Truncation order (default: q).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = PRESETS)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub rom: PathBuf,
    /// Target field (SNP1).
    #[arg(long)]
    pub target: PathBuf,
    /// Cost region `x_min,x_max,y_min,y_max`.
    #[arg(long, value_delimiter = ',', num_args = 4, action = ArgAction::Set, default_values_t = [0.1, 0.9, 0.15, 0.7])]
    pub mask: Vec<f64>,
    #[arg(long, default_value_t = 20)]
    pub pop: usize,
    #[arg(long, default_value_t = 30)]
    pub gens: usize,
    #[arg(long, default_value_t = 0.8)]
    pub pc: f64,
    #[arg(long, default_value_t = 0.1)]
    pub pm: f64,
    #[arg(long, default_value_t = 1)]
    pub elite: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lower bound of the parameter gene (default: smallest training value).
    #[arg(long, allow_negative_numbers = true)]
    pub delta_min: Option<f64>,
    /// Upper bound of the parameter gene (default: largest training value).
    #[arg(long, allow_negative_numbers = true)]
    pub delta_max: Option<f64>,
    #[arg(long, default_value_t = 2)]
    pub ne_min: usize,
    /// Default: min(3, number of training samples).
    #[arg(long)]
    pub ne_max: Option<usize>,
    /// Default: min(4, q).
    #[arg(long)]
    pub m_min: Option<usize>,
    /// Default: q.
    #[arg(long)]
    pub m_max: Option<usize>,
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Existing output directory for `history.csv`, `result.csv` and `predicted.snp`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = PRESETS)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct ReportArgs {
    /// History CSV written by `optimize`.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Predicted field (SNP1); needs `--target`.
    #[arg(long)]
    pub predicted: Option<PathBuf>,
    /// Target field (SNP1).
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Existing output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = PRESETS)]
    pub preset: Option<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn require_dir(dir: &Path) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(usage(format!("output directory {} does not exist", dir.display())))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Datagen(a) => datagen(&a),
        Command::Compress(a) => compress(&a),
        Command::Predict(a) => predict_cmd(&a),
        Command::Optimize(a) => optimize(&a),
        Command::Report(a) => report(&a),
    }
}

pub fn datagen(a: &DatagenArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    let grid = Grid::new(a.nx, a.ny, a.lx, a.ly)?;
    let times = TimeAxis::new(a.steps, a.t_final)?;
    let sources = [!a.deltas.is_empty(), !a.velocities.is_empty(), !a.temperatures.is_empty()];
    if sources.iter().filter(|&&s| s).count() != 1 {
        return Err(usage("give exactly one of --deltas, --velocities, --temperatures"));
    }
    let (family, training) = match a.family {
        FamilyName::Plume => {
            if a.deltas.is_empty() {
                return Err(usage("the plume family takes --deltas"));
            }
            let p = PlumeParams {
                sigma: a.sigma,
                ..PlumeParams::new(0.0)
            };
            (Family::Plume(p), &a.deltas)
        }
        FamilyName::Cavity => {
            let (varied, values) = if !a.velocities.is_empty() {
                (ParamKind::Velocity, &a.velocities)
            } else if !a.temperatures.is_empty() {
                (ParamKind::Temperature, &a.temperatures)
            } else {
                match a.vary {
                    Some(Varied::Velocity) => (ParamKind::Velocity, &a.deltas),
                    Some(Varied::Temperature) => (ParamKind::Temperature, &a.deltas),
                    None => return Err(usage("cavity --deltas needs --vary velocity|temperature")),
                }
            };
            let base = CavityParams {
                diffusivity: a.kappa,
                inlet_height: a.inlet_height,
                ..CavityParams::new(a.inlet_velocity, a.inlet_temp)
            };
            let solver = SolverConfig {
                cfl: a.cfl,
                ..SolverConfig::default()
            };
            (Family::Cavity { base, varied, solver }, values)
        }
    };

    let mut all = training.clone();
    all.extend(&a.target);
    let runs = generate_ensemble(&family, &all, &grid, &times)?;
    let mut entries = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let name = if i < training.len() {
            format!("train_{i}.snp")
        } else {
            format!("target_{}.snp", i - training.len())
        };
        let path = a.out.join(&name);
        write_snapshots(run, &path)?;
        println!("wrote {} ({} = {})", path.display(), run.param().kind.name(), run.param().value);
        if i < training.len() {
            entries.push(ManifestEntry {
                kind: run.param().kind,
                value: run.param().value,
                path: PathBuf::from(name),
            });
        }
    }
    let manifest = a.out.join("manifest.txt");
    write_manifest(&manifest, &entries)?;
    println!("wrote {}", manifest.display());
    Ok(())
}

pub fn compress(a: &CompressArgs) -> Result<(), CliError> {
    let samples = load_manifest(&a.snapshots)?;
    let db = build_database(&samples, a.q, a.r, a.s)?;
    write_database(&db, &a.out)?;
    println!(
        "compressed {} samples: q = {}, r = {}, s = {} -> {}",
        db.n_params(),
        db.q,
        db.r(),
        db.s(),
        a.out.display()
    );
    Ok(())
}

pub fn predict_cmd(a: &PredictArgs) -> Result<(), CliError> {
    let db = read_database(&a.rom)?;
    let cfg = FixedPointConfig {
        epsilon: a.epsilon,
        max_iters: a.max_iters,
    };
    let req = InterpolationRequest {
        delta_new: a.delta,
        ne_x: a.ne_x,
        ne_t: a.ne_t,
        m: a.m.unwrap_or(db.q),
    };
    let (field, res) = predict(&db, &req, &cfg)?;
    write_snapshots(&field, &a.out)?;
    println!(
        "iterations {} final_error {:e} converged {}",
        res.iterations, res.final_error, res.converged
    );
    if !res.converged {
        eprintln!("warning: fixed point did not reach epsilon = {:e}", a.epsilon);
    }
    Ok(())
}

pub fn optimize(a: &OptimizeArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    let db = read_database(&a.rom)?;
    let layout = db.layout.ok_or_else(|| usage("database carries no grid layout"))?;
    let truth = read_snapshots(&a.target)?;
    if *truth.grid() != layout.grid || *truth.times() != layout.times {
        return Err(usage("target grid or time axis differs from the database"));
    }
    let rect = Rect::new(a.mask[0], a.mask[1], a.mask[2], a.mask[3]);
    let mask = build_mask(truth.grid(), rect)?;
    let target = Target::from_field(&truth, mask)?;

    let (lo, hi) = db.hull();
    let space = SearchSpace {
        delta: (a.delta_min.unwrap_or(lo), a.delta_max.unwrap_or(hi)),
        ne: (a.ne_min, a.ne_max.unwrap_or(3.min(db.n_params()))),
        m: (a.m_min.unwrap_or(4.min(db.q)), a.m_max.unwrap_or(db.q)),
    };
    let cfg = GaConfig {
        population_size: a.pop,
        generations: a.gens,
        crossover_prob: a.pc,
        mutation_prob: a.pm,
        elite_count: a.elite,
        seed: a.seed,
        fixed_point: FixedPointConfig {
            epsilon: a.epsilon,
            max_iters: a.max_iters,
        },
        space,
    };
    let out = run(&cfg, &db, &target)?;
    out.history.write_csv(a.out.join("history.csv"))?;
    let b = out.best;
    let line = format!("{},{},{},{},{}", b.delta, b.ne_t, b.ne_x, b.m, out.best_cost);
    let result = a.out.join("result.csv");
    std::fs::write(&result, format!("delta,ne_t,ne_x,m,cost\n{line}\n"))
        .map_err(|e| usage(format!("{}: {e}", result.display())))?;
    let (field, _) = predict(&db, &b.request(), &cfg.fixed_point)?;
    write_snapshots(&field, a.out.join("predicted.snp"))?;
    println!("{line}");
    Ok(())
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    require_dir(&a.out)?;
    if a.history.is_none() && a.predicted.is_none() {
        return Err(usage("report needs --history and/or --predicted with --target"));
    }
    if let Some(path) = &a.history {
        let h = GaHistory::read_csv(path)?;
        let avg: Vec<f64> = h.records.iter().map(|r| r.avg_cost).collect();
        let out = a.out.join("avg_cost.csv");
        write_series_csv(&out, &avg)?;
        println!("wrote {} ({} generations)", out.display(), avg.len());
    }
    if let Some(path) = &a.predicted {
        let target = a.target.as_ref().ok_or_else(|| usage("--predicted needs --target"))?;
        let pred = read_snapshots(path)?;
        let truth = read_snapshots(target)?;
        let errs = l2_error_series(pred.values(), truth.values())?;
        let out = a.out.join("error_series.csv");
        write_series_csv(&out, &errs)?;
        let max = errs.iter().cloned().fold(0.0, f64::max);
        println!("wrote {} (max {max:.4}%)", out.display());
    }
    Ok(())
}
