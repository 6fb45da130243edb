//! Resolved run configuration: built-in defaults, then the environment,
//! then the config file, then flags.

use std::path::{Path, PathBuf};

use bubbletower::constants::default_delta;
use bubbletower::{AnalyticParams, Error};
use serde::{Deserialize, Serialize};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "BUBBLETOWER_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Nodes of the mapped corrector grid.
    pub corrector_nodes: usize,
    /// Nodes per decade of the physical sampling grid.
    pub per_decade: usize,
    /// Nodes of the evolution grid.
    pub sim_nodes: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            corrector_nodes: 2000,
            per_decade: 40,
            sim_nodes: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n: u32,
    pub k: usize,
    pub params: AnalyticParams,
    pub grid: GridConfig,
    /// Relative tolerance of quadratures and ODE steps.
    pub tol: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// Worker cap; `None` leaves the pool at its default size.
    pub threads: Option<usize>,
}

/// What a config file may set. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialConfig {
    pub n: Option<u32>,
    pub k: Option<usize>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub params: PartialParams,
    #[serde(default)]
    pub grid: PartialGrid,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialParams {
    pub sigma: Option<f64>,
    pub alpha_w: Option<f64>,
    pub a: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub r_cut: Option<f64>,
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialGrid {
    pub corrector_nodes: Option<usize>,
    pub per_decade: Option<usize>,
    pub sim_nodes: Option<usize>,
}

impl PartialConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::config(format!("bad config file {}: {e}", path.display())))
    }

    /// Overlay `top` on `self`; keys set in `top` win.
    pub fn overlay(self, top: PartialConfig) -> PartialConfig {
        let p = self.params;
        let q = top.params;
        let g = self.grid;
        let h = top.grid;
        PartialConfig {
            n: top.n.or(self.n),
            k: top.k.or(self.k),
            tol: top.tol.or(self.tol),
            out: top.out.or(self.out),
            seed: top.seed.or(self.seed),
            threads: top.threads.or(self.threads),
            params: PartialParams {
                sigma: q.sigma.or(p.sigma),
                alpha_w: q.alpha_w.or(p.alpha_w),
                a: q.a.or(p.a),
                delta: q.delta.or(p.delta),
                epsilon: q.epsilon.or(p.epsilon),
                r_cut: q.r_cut.or(p.r_cut),
                t0: q.t0.or(p.t0),
            },
            grid: PartialGrid {
                corrector_nodes: h.corrector_nodes.or(g.corrector_nodes),
                per_decade: h.per_decade.or(g.per_decade),
                sim_nodes: h.sim_nodes.or(g.sim_nodes),
            },
        }
    }

    /// Fill the gaps with defaults. `env_out` stands below any explicit
    /// output directory.
    pub fn resolve(self, env_out: Option<PathBuf>) -> RunConfig {
        let n = self.n.unwrap_or(7);
        let base = AnalyticParams::defaults(n);
        let p = self.params;
        let alpha_w = p.alpha_w.unwrap_or(base.alpha_w);
        let grid = GridConfig::default();
        RunConfig {
            n,
            k: self.k.unwrap_or(2),
            params: AnalyticParams {
                sigma: p.sigma.unwrap_or(base.sigma),
                alpha_w,
                a: p.a.unwrap_or(base.a),
                // The default gluing exponent follows the chosen decay exponent.
                delta: p.delta.unwrap_or_else(|| default_delta(n as f64, alpha_w)),
                epsilon: p.epsilon.unwrap_or(base.epsilon),
                r_cut: p.r_cut.unwrap_or(base.r_cut),
                t0: p.t0.unwrap_or(base.t0),
            },
            grid: GridConfig {
                corrector_nodes: self.grid.corrector_nodes.unwrap_or(grid.corrector_nodes),
                per_decade: self.grid.per_decade.unwrap_or(grid.per_decade),
                sim_nodes: self.grid.sim_nodes.unwrap_or(grid.sim_nodes),
            },
            tol: self.tol.unwrap_or(1e-6),
            out: self.out.or(env_out).unwrap_or_else(|| PathBuf::from("bubbletower-out")),
            seed: self.seed.unwrap_or(0),
            threads: self.threads,
        }
    }
}

impl RunConfig {
    /// Everything that does not need the constant table.
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.tol > 0.0 && self.tol < 1e-2) {
            return Err(Error::config(format!("tolerance {} outside (0, 1e-2)", self.tol)));
        }
        if self.grid.corrector_nodes < 100 || self.grid.sim_nodes < 100 || self.grid.per_decade < 16 {
            return Err(Error::config(
                "grids need at least 100 corrector and evolution nodes and 16 nodes per decade",
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::config("thread budget must be at least 1"));
        }
        self.params.validate(self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunConfig {
        PartialConfig {
            k: Some(3),
            params: PartialParams {
                sigma: Some(0.1 + 0.2),
                t0: Some(-1234.5678901234567),
                ..Default::default()
            },
            ..Default::default()
        }
        .resolve(None)
    }

    #[test]
    fn json_and_toml_round_trips_are_lossless() {
        let c = sample();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn upper_layer_wins() {
        let file = PartialConfig {
            n: Some(8),
            k: Some(3),
            ..Default::default()
        };
        let flags = PartialConfig {
            k: Some(4),
            ..Default::default()
        };
        let c = file.overlay(flags).resolve(None);
        assert_eq!((c.n, c.k), (8, 4));
    }

    #[test]
    fn environment_sits_below_explicit_output() {
        let env = Some(PathBuf::from("from-env"));
        assert_eq!(PartialConfig::default().resolve(env.clone()).out, PathBuf::from("from-env"));
        let explicit = PartialConfig {
            out: Some(PathBuf::from("explicit")),
            ..Default::default()
        };
        assert_eq!(explicit.resolve(env).out, PathBuf::from("explicit"));
    }

    #[test]
    fn delta_default_tracks_the_decay_exponent() {
        let c = PartialConfig {
            n: Some(7),
            params: PartialParams {
                alpha_w: Some(0.25),
                ..Default::default()
            },
            ..Default::default()
        }
        .resolve(None);
        assert_eq!(c.params.delta, default_delta(7.0, 0.25));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn ledger_violation_is_a_config_error() {
        let mut c = sample();
        c.params.a = 0.2;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_refused() {
        assert!(toml::from_str::<PartialConfig>("nn = 3").is_err());
        assert!(toml::from_str::<PartialConfig>("[params]\nsigma = 0.1\nbogus = 1").is_err());
    }
}
