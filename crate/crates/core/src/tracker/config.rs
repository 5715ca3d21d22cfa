use std::fmt;
use std::str::FromStr;

use crate::appearance::{FeatureKind, DEFAULT_BUDGET, DEFAULT_C};
use crate::edgebox::ProposalConfig;
use crate::error::{Error, Result};
use crate::geometry::LocalSampleConfig;
use crate::imaging::DEFAULT_EDGE_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoreKind {
    Ssvm,
    Ncc,
}

/// Which candidate boxes a stage draws from: the re-ranked proposals, the
/// boxes around the previous estimate, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidateSet {
    E,
    R,
    ER,
}

impl CandidateSet {
    pub const ALL: [CandidateSet; 3] = [CandidateSet::R, CandidateSet::E, CandidateSet::ER];

    pub fn uses_proposals(self) -> bool {
        matches!(self, CandidateSet::E | CandidateSet::ER)
    }

    pub fn uses_local(self) -> bool {
        matches!(self, CandidateSet::R | CandidateSet::ER)
    }
}

impl FromStr for CandidateSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "E" => Ok(CandidateSet::E),
            "R" => Ok(CandidateSet::R),
            "ER" | "E+R" => Ok(CandidateSet::ER),
            _ => Err(format!("expected E, R or ER, got `{s}`")),
        }
    }
}

impl fmt::Display for CandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CandidateSet::E => "E",
            CandidateSet::R => "R",
            CandidateSet::ER => "ER",
        })
    }
}

impl FromStr for CoreKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "ssvm" => Ok(CoreKind::Ssvm),
            "ncc" => Ok(CoreKind::Ncc),
            _ => Err(format!("expected ssvm or ncc, got `{s}`")),
        }
    }
}

impl fmt::Display for CoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoreKind::Ssvm => "ssvm",
            CoreKind::Ncc => "ncc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub proposal: ProposalConfig,
    pub local: LocalSampleConfig,
    /// Size of the re-ranked proposal set.
    pub h: usize,
    pub w_s: f64,
    /// Smoothness bandwidth; `None` uses the diagonal of the initial box.
    pub sigma: Option<f64>,
    pub core: CoreKind,
    pub test_set: CandidateSet,
    pub update_set: CandidateSet,
    /// When off, the top `h` proposals by objectness are used unchanged.
    pub rerank: bool,
    pub feature: FeatureKind,
    pub edge_threshold: f64,
    /// Frames whose longer side exceeds this are downscaled for edges.
    pub max_side: usize,
    /// Grid spacing of the exhaustive local search used when testing on R.
    pub exhaustive_step: f64,
    pub budget: usize,
    pub c: f64,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            proposal: ProposalConfig::default(),
            local: LocalSampleConfig::default(),
            h: 200,
            w_s: 0.1,
            sigma: None,
            core: CoreKind::Ssvm,
            test_set: CandidateSet::E,
            update_set: CandidateSet::ER,
            rerank: true,
            feature: FeatureKind::Pyramid2640,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
            max_side: 640,
            exhaustive_step: 2.0,
            budget: DEFAULT_BUDGET,
            c: DEFAULT_C,
            seed: 0,
        }
    }
}

/// Every key accepted by [`TrackerConfig::set`], in the order [`TrackerConfig::to_text`] writes them.
pub const CONFIG_KEYS: [&str; 22] = [
    "alpha",
    "beta",
    "e_threshold",
    "max_proposals",
    "area_min_ratio",
    "area_max_ratio",
    "local_radius",
    "local_count",
    "H",
    "w_s",
    "sigma",
    "core",
    "test_set",
    "update_set",
    "rerank",
    "feature",
    "edge_threshold",
    "max_side",
    "exhaustive_step",
    "budget",
    "C",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn positive(key: &str, value: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidValue {
            key: key.into(),
            value: value.into(),
            reason: "must be positive".into(),
        })
    }
}

fn fraction(key: &str, value: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidValue {
            key: key.into(),
            value: value.into(),
            reason: "must be in [0, 1]".into(),
        })
    }
}

impl TrackerConfig {
    /// Applies one `key=value` override; unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "alpha" => {
                let v: f64 = parse(key, value)?;
                self.proposal.alpha = if v > 0.0 && v < 1.0 {
                    v
                } else {
                    return Err(Error::InvalidValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "must be in (0, 1)".into(),
                    });
                }
            }
            "beta" => self.proposal.beta = fraction(key, value, parse(key, value)?)?,
            "e_threshold" => self.proposal.e_threshold = parse(key, value)?,
            "max_proposals" => self.proposal.max_proposals = parse(key, value)?,
            "area_min_ratio" => self.proposal.area_min_ratio = positive(key, value, parse(key, value)?)?,
            "area_max_ratio" => self.proposal.area_max_ratio = positive(key, value, parse(key, value)?)?,
            "local_radius" => self.local.radius = positive(key, value, parse(key, value)?)?,
            "local_count" => self.local.count = parse(key, value)?,
            "H" => self.h = parse(key, value)?,
            "w_s" => {
                let v: f64 = parse(key, value)?;
                if v.is_nan() || v < 0.0 {
                    return Err(Error::InvalidValue {
                        key: key.into(),
                        value: value.into(),
                        reason: "must be non-negative".into(),
                    });
                }
                self.w_s = v;
            }
            "sigma" => {
                self.sigma = match value {
                    "auto" => None,
                    _ => Some(positive(key, value, parse(key, value)?)?),
                }
            }
            "core" => self.core = parse(key, value)?,
            "test_set" => self.test_set = parse(key, value)?,
            "update_set" => self.update_set = parse(key, value)?,
            "rerank" => {
                self.rerank = match value {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => {
                        return Err(Error::InvalidValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected on or off".into(),
                        })
                    }
                }
            }
            "feature" => self.feature = parse(key, value)?,
            "edge_threshold" => self.edge_threshold = fraction(key, value, parse(key, value)?)?,
            "max_side" => self.max_side = parse(key, value)?,
            "exhaustive_step" => self.exhaustive_step = positive(key, value, parse(key, value)?)?,
            "budget" => self.budget = parse(key, value)?,
            "C" => self.c = positive(key, value, parse(key, value)?)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Applies a flat `key=value` text: one setting per line, `#` starts a
    /// comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("line {}", i + 1), "expected key=value"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "alpha" => self.proposal.alpha.to_string(),
            "beta" => self.proposal.beta.to_string(),
            "e_threshold" => self.proposal.e_threshold.to_string(),
            "max_proposals" => self.proposal.max_proposals.to_string(),
            "area_min_ratio" => self.proposal.area_min_ratio.to_string(),
            "area_max_ratio" => self.proposal.area_max_ratio.to_string(),
            "local_radius" => self.local.radius.to_string(),
            "local_count" => self.local.count.to_string(),
            "H" => self.h.to_string(),
            "w_s" => self.w_s.to_string(),
            "sigma" => self.sigma.map_or_else(|| "auto".to_string(), |s| s.to_string()),
            "core" => self.core.to_string(),
            "test_set" => self.test_set.to_string(),
            "update_set" => self.update_set.to_string(),
            "rerank" => if self.rerank { "on" } else { "off" }.to_string(),
            "feature" => self.feature.to_string(),
            "edge_threshold" => self.edge_threshold.to_string(),
            "max_side" => self.max_side.to_string(),
            "exhaustive_step" => self.exhaustive_step.to_string(),
            "budget" => self.budget.to_string(),
            "C" => self.c.to_string(),
            "seed" => self.seed.to_string(),
            _ => return None,
        })
    }

    /// Every setting as `key=value` lines; [`TrackerConfig::apply_text`] on
    /// a default config reproduces `self`.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("listed key")))
            .collect()
    }
}
