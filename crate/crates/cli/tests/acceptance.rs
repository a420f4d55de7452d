//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::Command;
use std::time::Instant;

use ddga_cli::presets::{Preset, BENCH_Q};
use ddga_core::barycentric::{
    interpolate_reduced, lagrange_weights, predict, procrustes_align, FixedPointConfig, InterpolationRequest,
};
use ddga_core::dataset::{build_mask, read_snapshots, Grid, Rect, SnapshotMatrix, TimeAxis};
use ddga_core::ddga::{run, GaConfig, GaOutcome, SearchSpace};
use ddga_core::linalg::relative_frobenius;
use ddga_core::objective::{l2_error_series, Target};
use ddga_core::pod::{build_database, pod_factorize_matrix, reconstruct_sample, write_database, RomDatabase};
use ddga_core::surrogate::{analytic_plume, generate_ensemble, solve_cavity, CavityParams, PlumeParams, SolverConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

const PLUME_NODES: [f64; 5] = [0.5, 0.55, 0.6, 0.65, 0.7];
const GA_SEED: u64 = 1;

fn plume_grid() -> (Grid, TimeAxis) {
    (Grid::new(24, 24, 1.04, 1.04).unwrap(), TimeAxis::new(40, 10.0).unwrap())
}

fn plume_samples(deltas: &[f64]) -> Vec<SnapshotMatrix> {
    let (g, t) = plume_grid();
    deltas
        .iter()
        .map(|&d| analytic_plume(&PlumeParams::new(d), &g, &t).unwrap())
        .collect()
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn node_reproduction() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let db = build_database(&plume_samples(&PLUME_NODES), 10, None, None).map_err(|e| e.to_string())?;
    let rom = dir.path().join("plume.rom");
    write_database(&db, &rom).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (k, d) in PLUME_NODES.iter().enumerate() {
        let out = dir.path().join("p.snp");
        let status = Command::new(env!("CARGO_BIN_EXE_ddga"))
            .args(["predict", "--rom"])
            .arg(&rom)
            .args(["--delta", &d.to_string(), "--out"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("predict at {d} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let p = read_snapshots(&out).map_err(|e| e.to_string())?;
        let trained = reconstruct_sample(&db, k, 10).map_err(|e| e.to_string())?;
        worst = worst.max(relative_frobenius(p.values(), trained.values()));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && secs < 5.0,
        format!("worst relative error {worst:.2e} (<= 1e-8), {secs:.2}s (< 5s)"),
    )
}

/// Singular values from the eigenvalues of `YᵀY` or `YYᵀ`, whichever is smaller.
fn oracle_singular_values(y: &DMatrix<f64>) -> Vec<f64> {
    let gram = if y.nrows() >= y.ncols() { y.transpose() * y } else { y * y.transpose() };
    let mut ev: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|l| l.max(0.0)).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev.into_iter().map(f64::sqrt).collect()
}

fn pod_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let rows = rng.random_range(1..=50);
        let cols = rng.random_range(1..=20);
        let y = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        let sigma = oracle_singular_values(&y);
        let scale = y.norm_squared();
        for q in 1..=rows.min(cols) {
            let pair = pod_factorize_matrix(&y, q).map_err(|e| e.to_string())?;
            let err2 = (&y - pair.reconstruct()).norm_squared();
            let tail: f64 = sigma[q..].iter().map(|s| s * s).sum();
            worst = worst.max((err2 - tail).abs() / scale);
            cases += 1;
        }
    }
    check(
        worst <= 1e-10,
        format!("{cases} truncations, worst |error² - tail| / ‖Y‖² = {worst:.2e} (<= 1e-10)"),
    )
}

fn defect(q: &DMatrix<f64>) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - DMatrix::<f64>::identity(n, n)).abs().max()
}

fn orthogonality_and_unity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_q: f64 = 0.0;
    let mut factors = 0;
    for _ in 0..200 {
        let (n, m) = (rng.random_range(2..30), rng.random_range(1..8));
        let m = m.min(n);
        let a = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        worst_q = worst_q.max(defect(&procrustes_align(&a, &b).map_err(|e| e.to_string())?.q));
        factors += 1;
    }
    let db = build_database(&plume_samples(&PLUME_NODES), 10, None, None).map_err(|e| e.to_string())?;
    for i in 0..50 {
        let d = 0.5 + 0.2 * i as f64 / 49.0;
        for (ne, m) in [(2, 10), (3, 6), (5, 4)] {
            let req = InterpolationRequest { delta_new: d, ne_x: ne, ne_t: ne, m };
            let res = interpolate_reduced(&db, &req, &FixedPointConfig::default()).map_err(|e| e.to_string())?;
            for q in res.spatial_alignments.iter().chain(&res.temporal_alignments) {
                worst_q = worst_q.max(defect(q));
                factors += 1;
            }
        }
    }
    let mut worst_w: f64 = 0.0;
    for _ in 0..1000 {
        let size = rng.random_range(2..=5);
        let mut nodes: Vec<f64> = Vec::new();
        while nodes.len() < size {
            let x = rng.random_range(-10.0..10.0);
            if nodes.iter().all(|n: &f64| (n - x).abs() > 1e-3) {
                nodes.push(x);
            }
        }
        let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w = lagrange_weights(&nodes, rng.random_range(lo..=hi)).map_err(|e| e.to_string())?;
        worst_w = worst_w.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    check(
        worst_q <= 1e-10 && worst_w <= 1e-12,
        format!("{factors} factors, max ‖QᵀQ - I‖ = {worst_q:.2e} (<= 1e-10); 1000 node sets, max |Σw - 1| = {worst_w:.2e} (<= 1e-12)"),
    )
}

fn leave_one_out() -> Verdict {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for hold in 1..PLUME_NODES.len() - 1 {
        let train: Vec<f64> = PLUME_NODES
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != hold)
            .map(|(_, &d)| d)
            .collect();
        let db = build_database(&plume_samples(&train), 10, None, None).map_err(|e| e.to_string())?;
        let d = PLUME_NODES[hold];
        let req = InterpolationRequest { delta_new: d, ne_x: 2, ne_t: 2, m: 10 };
        let (pred, _) = predict(&db, &req, &FixedPointConfig::default()).map_err(|e| e.to_string())?;
        let truth = &plume_samples(&[d])[0];
        let err = relative_frobenius(pred.values(), truth.values());
        ok &= err <= 0.05;
        parts.push(format!("{d}: {:.2}%", 100.0 * err));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        ok && secs < 30.0,
        format!("held-out errors {} (<= 5%), {secs:.2}s (< 30s)", parts.join(", ")),
    )
}

struct SeriesRun {
    target: f64,
    outcome: GaOutcome,
    replay_identical: bool,
    max_error_pct: f64,
    secs: f64,
}

struct Series {
    preset: Preset,
    training: Vec<SnapshotMatrix>,
    runs: Vec<SeriesRun>,
}

fn run_series(preset: Preset) -> Result<Series, String> {
    let (g, t) = (Preset::grid(), Preset::times());
    let family = preset.family();
    let training = generate_ensemble(&family, preset.training(), &g, &t).map_err(|e| e.to_string())?;
    let db: RomDatabase = build_database(&training, BENCH_Q, None, None).map_err(|e| e.to_string())?;
    let mask = build_mask(&g, Rect::new(0.1, 0.9, 0.15, 0.7)).map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for &target in preset.targets() {
        let start = Instant::now();
        let truth = family.generate(target, &g, &t).map_err(|e| e.to_string())?;
        let tgt = Target::from_field(&truth, mask.clone()).map_err(|e| e.to_string())?;
        let cfg = GaConfig {
            seed: GA_SEED,
            ..GaConfig::new(SearchSpace {
                delta: db.hull(),
                ne: preset.neighbors(),
                m: (preset.min_order(), BENCH_Q),
            })
        };
        let outcome = run(&cfg, &db, &tgt).map_err(|e| e.to_string())?;
        let (field, _) = predict(&db, &outcome.best.request(), &cfg.fixed_point).map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        let errs = l2_error_series(field.values(), truth.values()).map_err(|e| e.to_string())?;
        let replay = run(&cfg, &db, &tgt).map_err(|e| e.to_string())?;
        runs.push(SeriesRun {
            target,
            replay_identical: replay.history.to_csv() == outcome.history.to_csv(),
            max_error_pct: errs.iter().cloned().fold(0.0, f64::max),
            outcome,
            secs,
        });
    }
    Ok(Series { preset, training, runs })
}

fn recovery(series: &Series, tol: f64) -> Verdict {
    let mut ok = true;
    let parts: Vec<String> = series
        .runs
        .iter()
        .map(|r| {
            let rel = (r.outcome.best.delta - r.target).abs() / r.target;
            ok &= rel <= tol && r.secs < 120.0;
            format!("{} -> {:.4} ({:.2}%, {:.1}s)", r.target, r.outcome.best.delta, 100.0 * rel, r.secs)
        })
        .collect();
    check(
        ok,
        format!("{}: {} (<= {}%, < 120s each)", series.preset.name(), parts.join(", "), 100.0 * tol),
    )
}

fn error_series(all: &[&Series]) -> Verdict {
    let mut ok = true;
    let parts: Vec<String> = all
        .iter()
        .flat_map(|s| &s.runs)
        .map(|r| {
            ok &= r.max_error_pct <= 2.0;
            format!("{}: {:.3}%", r.target, r.max_error_pct)
        })
        .collect();
    check(ok, format!("max per-instant error {} (<= 2%)", parts.join(", ")))
}

fn ga_properties(all: &[&Series]) -> Verdict {
    let mut monotone = true;
    let mut decreasing = true;
    let mut replay = true;
    for r in all.iter().flat_map(|s| &s.runs) {
        let h = &r.outcome.history.records;
        monotone &= h.windows(2).all(|w| w[1].best_cost <= w[0].best_cost);
        decreasing &= h.len() == 30 && h[29].avg_cost < h[0].avg_cost;
        replay &= r.replay_identical;
    }
    check(
        monotone && decreasing && replay,
        format!("best cost nonincreasing: {monotone}; avg cost gen 30 < gen 1: {decreasing}; seeded replay byte-identical: {replay}"),
    )
}

fn surrogate_sanity(all: &[&Series]) -> Verdict {
    let mut worst_excess: f64 = 0.0;
    let mut snapshots = 0;
    for s in all {
        let base = match s.preset.family() {
            ddga_core::surrogate::Family::Cavity { base, .. } => base,
            _ => unreachable!("benchmark series use the cavity"),
        };
        for run in &s.training {
            let mut p = base;
            match s.preset {
                Preset::Series1Velocity => p.inlet_velocity = run.param().value,
                Preset::Series2Temperature => p.inlet_temperature = run.param().value,
            }
            let (lo, hi) = p.bounds();
            for v in run.values().iter() {
                worst_excess = worst_excess.max(lo - v).max(v - hi);
            }
            snapshots += run.values().ncols();
        }
    }
    let uniform = CavityParams {
        theta_hot: 20.0,
        theta_cold: 20.0,
        theta_init: 20.0,
        ..CavityParams::new(0.0, 20.0)
    };
    let field = solve_cavity(&uniform, &Preset::grid(), &Preset::times(), &SolverConfig::default())
        .map_err(|e| e.to_string())?;
    let drift = field.values().iter().map(|v| (v - 20.0).abs()).fold(0.0, f64::max);
    // the maximum principle is checked with zero slack
    check(
        worst_excess <= 0.0 && drift <= 1e-12,
        format!("{snapshots} snapshots, worst bound excess {worst_excess:.2e} (<= 0); U = 0 uniform drift {drift:.2e} (<= 1e-12)"),
    )
}

fn main() {
    let started = Instant::now();
    let mut verdicts: Vec<(&str, Verdict)> = vec![
        ("1 node reproduction", node_reproduction()),
        ("2 POD oracle equivalence", pod_oracle()),
        ("3 orthogonality and partition of unity", orthogonality_and_unity()),
        ("4 leave-one-out interpolation", leave_one_out()),
    ];
    match (run_series(Preset::Series1Velocity), run_series(Preset::Series2Temperature)) {
        (Ok(s1), Ok(s2)) => {
            let both = [&s1, &s2];
            verdicts.push(("5 inverse recovery, velocity series", recovery(&s1, 0.05)));
            verdicts.push(("6 inverse recovery, temperature series", recovery(&s2, 0.06)));
            verdicts.push(("7 error-series threshold", error_series(&both)));
            verdicts.push(("8 GA properties", ga_properties(&both)));
            verdicts.push(("9 surrogate sanity", surrogate_sanity(&both)));
        }
        (a, b) => {
            let msg = a.err().or(b.err()).unwrap_or_default();
            for name in [
                "5 inverse recovery, velocity series",
                "6 inverse recovery, temperature series",
                "7 error-series threshold",
                "8 GA properties",
                "9 surrogate sanity",
            ] {
                verdicts.push((name, Err(format!("series setup failed: {msg}"))));
            }
        }
    }
    let mut failed = 0;
    for (name, v) in &verdicts {
        match v {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        verdicts.len() - failed,
        verdicts.len(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
