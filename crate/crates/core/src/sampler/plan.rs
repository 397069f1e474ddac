use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_JUMP_LENGTH: usize = 10;
pub const DEFAULT_REPEATS: usize = 10;

/// Where resampling is active, as a preset or an explicit window.
///
/// Jump points `p` are resampled when `lo < p <= hi`:
///
/// | preset        | window          |
/// |---------------|-----------------|
/// | `none`        | empty           |
/// | `all`         | `(0, T − λ]`    |
/// | `start:s`     | `(0, s]`        |
/// | `stop:s`      | `(s, T − λ]`    |
/// | `window:lo:hi`| `(lo, hi]`      |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Strategy {
    None,
    All,
    StartAt(usize),
    StopAt(usize),
    Window { lo: usize, hi: usize },
}

impl Strategy {
    /// The four presets compared in the cost table, most to least expensive.
    pub const PRESETS: [Strategy; 4] = [Strategy::All, Strategy::StartAt(150), Strategy::StopAt(100), Strategy::None];

    pub fn window(&self, steps: usize, jump_length: usize) -> Option<(usize, usize)> {
        let top = steps.saturating_sub(jump_length);
        match *self {
            Strategy::None => None,
            Strategy::All => Some((0, top)),
            Strategy::StartAt(s) => Some((0, s)),
            Strategy::StopAt(s) => Some((s, top)),
            Strategy::Window { lo, hi } => Some((lo, hi)),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::None => f.write_str("none"),
            Strategy::All => f.write_str("all"),
            Strategy::StartAt(s) => write!(f, "start:{s}"),
            Strategy::StopAt(s) => write!(f, "stop:{s}"),
            Strategy::Window { lo, hi } => write!(f, "window:{lo}:{hi}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num =
            |v: &str| v.parse::<usize>().map_err(|_| Error::invalid(format!("bad timestep `{v}` in strategy `{s}`")));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["none"] => Ok(Strategy::None),
            ["all"] => Ok(Strategy::All),
            ["start", v] => Ok(Strategy::StartAt(num(v)?)),
            ["stop", v] => Ok(Strategy::StopAt(num(v)?)),
            ["window", lo, hi] => Ok(Strategy::Window { lo: num(lo)?, hi: num(hi)? }),
            _ => Err(Error::invalid(format!(
                "unknown strategy `{s}` (expected none, all, start:<t>, stop:<t> or window:<lo>:<hi>)"
            ))),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleConfig {
    /// λ: timesteps covered by one resample jump.
    #[serde(rename = "lambda")]
    pub jump_length: usize,
    /// r: passes per jump point, counting the base pass.
    pub repeats: usize,
    pub strategy: Strategy,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig { jump_length: DEFAULT_JUMP_LENGTH, repeats: DEFAULT_REPEATS, strategy: Strategy::StopAt(100) }
    }
}

impl ResampleConfig {
    pub fn new(strategy: Strategy) -> Self {
        ResampleConfig { strategy, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResamplePlan {
    #[serde(rename = "T")]
    pub steps: usize,
    #[serde(rename = "lambda")]
    pub jump_length: usize,
    /// Descending.
    pub jump_points: Vec<usize>,
    pub cycles_per_point: usize,
}

impl ResamplePlan {
    /// Plain reverse chain, no resampling.
    pub fn none(steps: usize) -> Self {
        ResamplePlan { steps, jump_length: 1, jump_points: Vec::new(), cycles_per_point: 0 }
    }

    pub fn is_jump_point(&self, p: usize) -> bool {
        self.jump_points.binary_search_by(|q| p.cmp(q)).is_ok()
    }
}

/// Resample at grid points `{λ, 2λ, …, T − λ}` that fall inside the strategy's
/// window, `repeats − 1` extra cycles each.
pub fn build_resample_plan(config: &ResampleConfig, steps: usize) -> Result<ResamplePlan> {
    let lambda = config.jump_length;
    if lambda == 0 {
        return Err(Error::invalid("jump length must be positive"));
    }
    if lambda >= steps {
        return Err(Error::invalid(format!("jump length {lambda} must be < T = {steps}")));
    }
    if config.repeats == 0 {
        return Err(Error::invalid("repeats must be positive"));
    }
    let jump_points = match config.strategy.window(steps, lambda) {
        None => Vec::new(),
        Some((lo, hi)) => {
            let mut pts: Vec<usize> =
                (1..).map(|k| k * lambda).take_while(|&p| p <= steps - lambda).filter(|&p| lo < p && p <= hi).collect();
            pts.reverse();
            pts
        }
    };
    Ok(ResamplePlan { steps, jump_length: lambda, jump_points, cycles_per_point: config.repeats - 1 })
}

/// Denoise, forward-jump and total operation counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCountReport {
    pub n_dn: u64,
    pub n_fwd: u64,
    pub n_total: u64,
}

impl OpCountReport {
    pub fn new(n_dn: u64, n_fwd: u64) -> Self {
        OpCountReport { n_dn, n_fwd, n_total: n_dn + n_fwd }
    }
}

impl fmt::Display for OpCountReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}, {}", self.n_dn, self.n_fwd, self.n_total)
    }
}

/// Closed-form cost of a plan. Each accumulated λ-step jump is one forward op;
/// known-region encodings are not counted.
pub fn count_ops(plan: &ResamplePlan) -> OpCountReport {
    let cycles = (plan.jump_points.len() * plan.cycles_per_point) as u64;
    OpCountReport::new(plan.steps as u64 + cycles * plan.jump_length as u64, cycles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(strategy: Strategy) -> ResamplePlan {
        build_resample_plan(&ResampleConfig::new(strategy), 250).unwrap()
    }

    #[test]
    fn preset_grids() {
        let all = plan(Strategy::All);
        assert_eq!(all.jump_points.len(), 24);
        assert_eq!(all.jump_points.first(), Some(&240));
        assert_eq!(all.jump_points.last(), Some(&10));
        assert_eq!(all.cycles_per_point, 9);

        let start = plan(Strategy::StartAt(150));
        assert_eq!(start.jump_points, (1..=15).rev().map(|k| k * 10).collect::<Vec<_>>());

        let stop = plan(Strategy::StopAt(100));
        assert_eq!(stop.jump_points, (11..=24).rev().map(|k| k * 10).collect::<Vec<_>>());

        assert!(plan(Strategy::None).jump_points.is_empty());
    }

    #[test]
    fn cost_table() {
        assert_eq!(count_ops(&plan(Strategy::All)), OpCountReport::new(2410, 216));
        assert_eq!(count_ops(&plan(Strategy::StartAt(150))), OpCountReport::new(1600, 135));
        assert_eq!(count_ops(&plan(Strategy::StopAt(100))), OpCountReport::new(1510, 126));
        assert_eq!(count_ops(&plan(Strategy::None)), OpCountReport::new(250, 0));
        assert_eq!(count_ops(&plan(Strategy::StopAt(100))).to_string(), "1510, 126, 1636");
    }

    #[test]
    fn bad_configs() {
        let mut cfg = ResampleConfig::new(Strategy::All);
        cfg.jump_length = 250;
        assert!(build_resample_plan(&cfg, 250).is_err());
        cfg.jump_length = 0;
        assert!(build_resample_plan(&cfg, 250).is_err());
        cfg.jump_length = 10;
        cfg.repeats = 0;
        assert!(build_resample_plan(&cfg, 250).is_err());
    }

    #[test]
    fn one_repeat_means_no_extra_cycles() {
        let cfg = ResampleConfig { repeats: 1, ..ResampleConfig::new(Strategy::All) };
        assert_eq!(count_ops(&build_resample_plan(&cfg, 250).unwrap()), OpCountReport::new(250, 0));
    }

    #[test]
    fn strategy_strings() {
        for s in ["none", "all", "start:150", "stop:100", "window:20:80"] {
            assert_eq!(s.parse::<Strategy>().unwrap().to_string(), s);
        }
        for bad in ["", "stop", "stop:x", "halt:3", "window:1"] {
            assert!(bad.parse::<Strategy>().is_err(), "{bad}");
        }
        let json = serde_json::to_string(&ResampleConfig::default()).unwrap();
        assert_eq!(json, r#"{"lambda":10,"repeats":10,"strategy":"stop:100"}"#);
    }

    #[test]
    fn is_jump_point_lookup() {
        let p = plan(Strategy::StopAt(100));
        assert!(p.is_jump_point(110));
        assert!(p.is_jump_point(240));
        assert!(!p.is_jump_point(100));
        assert!(!p.is_jump_point(115));
    }
}
