//! Named experiment bundles mirroring the two benchmark series.

use ddga_core::dataset::{Grid, ParamKind, TimeAxis};
use ddga_core::surrogate::{CavityParams, Family, SolverConfig};

/// Truncation order used by both benchmark series.
pub const BENCH_Q: usize = 20;
/// Cells per side of the benchmark grid.
pub const BENCH_CELLS: usize = 32;
/// Side of the square cavity (m).
pub const BENCH_SIDE: f64 = 1.04;
pub const BENCH_STEPS: usize = 100;
/// Final time (s).
pub const BENCH_T_FINAL: f64 = 60.0;
pub const SERIES1_INLET_TEMPERATURE: f64 = 15.0;
pub const SERIES2_INLET_VELOCITY: f64 = 0.57;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Inlet temperature fixed, inlet velocity varied.
    Series1Velocity,
    /// Inlet velocity fixed, inlet temperature varied.
    Series2Temperature,
}

impl Preset {
    pub const ALL: [Preset; 2] = [Preset::Series1Velocity, Preset::Series2Temperature];

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::Series1Velocity => "series1-velocity",
            Preset::Series2Temperature => "series2-temperature",
        }
    }

    pub fn kind(self) -> ParamKind {
        match self {
            Preset::Series1Velocity => ParamKind::Velocity,
            Preset::Series2Temperature => ParamKind::Temperature,
        }
    }

    pub fn training(self) -> &'static [f64] {
        match self {
            Preset::Series1Velocity => &[0.51, 0.627, 0.798],
            Preset::Series2Temperature => &[5.0, 10.0, 15.0, 20.0, 25.0],
        }
    }

    pub fn targets(self) -> &'static [f64] {
        match self {
            Preset::Series1Velocity => &[0.54, 0.67, 0.755],
            Preset::Series2Temperature => &[7.5, 17.5, 22.5],
        }
    }

    /// Inclusive range of both neighbor genes.
    pub fn neighbors(self) -> (usize, usize) {
        match self {
            Preset::Series1Velocity => (2, 3),
            Preset::Series2Temperature => (2, 5),
        }
    }

    pub fn min_order(self) -> usize {
        4
    }

    /// Cavity family with the fixed inlet value of this series.
    pub fn family(self) -> Family {
        Family::Cavity {
            base: CavityParams::new(SERIES2_INLET_VELOCITY, SERIES1_INLET_TEMPERATURE),
            varied: self.kind(),
            solver: SolverConfig::default(),
        }
    }

    pub fn grid() -> Grid {
        Grid::new(BENCH_CELLS, BENCH_CELLS, BENCH_SIDE, BENCH_SIDE).expect("benchmark grid is valid")
    }

    pub fn times() -> TimeAxis {
        TimeAxis::new(BENCH_STEPS, BENCH_T_FINAL).expect("benchmark time axis is valid")
    }

    /// Flag defaults this preset contributes to `subcommand`.
    pub fn defaults(self, subcommand: &str) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = match subcommand {
            "datagen" => {
                let mut p = vec![("family", "cavity".to_string()), ("target", list(self.targets()))];
                match self {
                    Preset::Series1Velocity => {
                        p.push(("velocities", list(self.training())));
                        p.push(("inlet-temp", SERIES1_INLET_TEMPERATURE.to_string()));
                    }
                    Preset::Series2Temperature => {
                        p.push(("temperatures", list(self.training())));
                        p.push(("inlet-velocity", SERIES2_INLET_VELOCITY.to_string()));
                    }
                }
                p
            }
            "compress" => vec![("q", BENCH_Q.to_string())],
            "optimize" => vec![
                ("ne-min", self.neighbors().0.to_string()),
                ("ne-max", self.neighbors().1.to_string()),
                ("m-min", self.min_order().to_string()),
            ],
            _ => Vec::new(),
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}
