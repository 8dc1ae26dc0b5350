//! Scenario files: the structured-text format describing a swarm.
//!
//! A scenario has one `[config]` section, one `[node NAME]` section per
//! robot, `[link A B]` sections for the peer-to-peer links, and `[feature
//! NAME]` sections for the environment features robots stamp. Lines are
//! `key = value`; `#` starts a comment. See `docs/formats.md` for the full
//! key list.

use crate::chain::{ChainConfig, GenesisMode};
use crate::quality::{
    fit_density_models, CalibrationSet, DataType, DensityModel, FeatureClass, LinearModel,
};
use crate::NodeId;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: malformed section header '{text}'")]
    BadSection { line: usize, text: String },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    BadLine { line: usize, text: String },
    #[error("line {line}: key '{key}': {reason}")]
    BadValue {
        line: usize,
        key: String,
        reason: String,
    },
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { key: String, section: String },
    #[error("link references unknown node '{0}'")]
    UnknownLinkNode(String),
    #[error("scenario has no nodes")]
    NoNodes,
    #[error("invalid chain config: {0}")]
    Config(#[from] crate::chain::ConfigError),
    #[error("density model file {path}: {reason}")]
    ModelFile { path: PathBuf, reason: String },
}

/// How a node behaves for the whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Stamps claim `counterfeit_factor` times the real density.
    CounterfeitData,
    /// Dedicates half the mining budget.
    LazyMiner,
    /// Requests data, never provides any.
    DataLeech,
}

impl Behavior {
    pub fn as_str(&self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::CounterfeitData => "counterfeit_data",
            Behavior::LazyMiner => "lazy_miner",
            Behavior::DataLeech => "data_leech",
        }
    }

    fn parse(s: &str) -> Option<Behavior> {
        match s {
            "honest" => Some(Behavior::Honest),
            "counterfeit_data" => Some(Behavior::CounterfeitData),
            "lazy_miner" => Some(Behavior::LazyMiner),
            "data_leech" => Some(Behavior::DataLeech),
            _ => None,
        }
    }
}

/// `type:max_size:min_res:max_res` template for requests and availability.
#[derive(Debug, Clone, PartialEq)]
pub struct IoTemplate {
    pub data_type: DataType,
    pub max_size: u64,
    pub min_res: f64,
    pub max_res: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub hash_rate: f64,
    pub position: (f64, f64),
    pub behavior: Behavior,
    /// Epoch intervals [start, end) when the node is online; `None` end
    /// means forever.
    pub online: Vec<(u64, Option<u64>)>,
    pub channels: u32,
    /// On-chain stamp payload size in bytes.
    pub sample_bytes: u64,
    pub needs: Vec<IoTemplate>,
    pub provides: Vec<IoTemplate>,
}

impl NodeSpec {
    pub fn online_at(&self, epoch: u64) -> bool {
        self.online
            .iter()
            .any(|(start, end)| epoch >= *start && end.is_none_or(|e| epoch < e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    /// Bytes per second.
    pub bandwidth: f64,
    /// Seconds.
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSpec {
    pub name: String,
    pub class: FeatureClass,
    pub data_type: DataType,
    pub position: (f64, f64),
    /// Horizontal extent, planar features only.
    pub extent_m: Option<f64>,
}

/// Simulation knobs that sit outside the chain consensus config.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Bytes/second of intake per hash/second of the fastest node.
    pub bytes_per_hash_unit: f64,
    /// Minimum capacity for a node to act as a stamp validator.
    pub validator_threshold: f64,
    pub validators_per_stamp: usize,
    /// Seconds of link time an epoch's transfer phase may use.
    pub transfer_window: f64,
    /// Meters within which a node senses a feature.
    pub sense_range: f64,
    /// Density multiplier counterfeit nodes apply to their stamps.
    pub counterfeit_factor: f64,
    /// Number of randomized shards per epoch.
    pub randomized_shards: usize,
    /// Multiplicative noise on bandwidth probes at admission.
    pub probe_noise: f64,
    /// Error radius attached to stamp locations.
    pub stamp_location_error: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            bytes_per_hash_unit: 1.0,
            validator_threshold: 0.2,
            validators_per_stamp: 3,
            transfer_window: 10.0,
            sense_range: 50.0,
            counterfeit_factor: 3.0,
            randomized_shards: 2,
            probe_noise: 0.0,
            stamp_location_error: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub chain: ChainConfig,
    pub sim: SimConfig,
    pub nodes: BTreeMap<NodeId, NodeSpec>,
    /// Undirected links keyed by the lexicographically ordered endpoint pair.
    pub links: BTreeMap<(NodeId, NodeId), LinkSpec>,
    pub features: Vec<FeatureSpec>,
    pub density: DensityModel,
}

impl Scenario {
    pub fn link(&self, a: &NodeId, b: &NodeId) -> Option<&LinkSpec> {
        let key = if a <= b {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        self.links.get(&key)
    }

    pub fn from_file(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Scenario::parse(&text, &name, path.parent())
    }

    pub fn parse(
        text: &str,
        name: &str,
        base_dir: Option<&Path>,
    ) -> Result<Scenario, ScenarioError> {
        let mut scenario = Scenario {
            name: name.to_string(),
            chain: ChainConfig::default(),
            sim: SimConfig::default(),
            nodes: BTreeMap::new(),
            links: BTreeMap::new(),
            features: Vec::new(),
            density: DensityModel::default(),
        };
        let mut section = Section::Config;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                section = parse_section(line, line_no, &mut scenario)?;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ScenarioError::BadLine {
                    line: line_no,
                    text: line.to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            apply_key(&mut scenario, &section, key, value, line_no, base_dir)?;
        }

        if scenario.nodes.is_empty() {
            return Err(ScenarioError::NoNodes);
        }
        for (a, b) in scenario.links.keys() {
            for end in [a, b] {
                let known = scenario.nodes.contains_key(end)
                    || scenario.chain.infrastructure.contains(end);
                if !known {
                    return Err(ScenarioError::UnknownLinkNode(end.to_string()));
                }
            }
        }
        scenario.chain.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone)]
enum Section {
    Config,
    Node(NodeId),
    Link(NodeId, NodeId),
    Feature(usize),
}

fn parse_section(
    line: &str,
    line_no: usize,
    scenario: &mut Scenario,
) -> Result<Section, ScenarioError> {
    let bad = || ScenarioError::BadSection {
        line: line_no,
        text: line.to_string(),
    };
    let inner = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')).ok_or_else(bad)?;
    let words: Vec<&str> = inner.split_whitespace().collect();
    match words.as_slice() {
        ["config"] => Ok(Section::Config),
        ["node", name] => {
            let id = NodeId::new(*name);
            scenario.nodes.entry(id.clone()).or_insert_with(|| NodeSpec {
                id: id.clone(),
                hash_rate: 1000.0,
                position: (0.0, 0.0),
                behavior: Behavior::Honest,
                online: vec![(0, None)],
                channels: 16,
                sample_bytes: 1080,
                needs: Vec::new(),
                provides: Vec::new(),
            });
            Ok(Section::Node(id))
        }
        ["link", a, b] => {
            let (a, b) = (NodeId::new(*a), NodeId::new(*b));
            let key = if a <= b { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
            scenario.links.entry(key.clone()).or_insert(LinkSpec {
                bandwidth: 1_000_000.0,
                latency: 0.01,
            });
            Ok(Section::Link(key.0, key.1))
        }
        ["feature", name] => {
            scenario.features.push(FeatureSpec {
                name: name.to_string(),
                class: FeatureClass::Planar,
                data_type: DataType::Pointcloud,
                position: (0.0, 0.0),
                extent_m: None,
            });
            Ok(Section::Feature(scenario.features.len() - 1))
        }
        _ => Err(bad()),
    }
}

fn bad_value(line: usize, key: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::BadValue {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(
    value: &str,
    line: usize,
    key: &str,
) -> Result<T, ScenarioError> {
    value
        .parse::<T>()
        .map_err(|_| bad_value(line, key, format!("cannot parse '{value}'")))
}

fn parse_intervals(value: &str, line: usize, key: &str) -> Result<Vec<(u64, Option<u64>)>, ScenarioError> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((start, end)) = part.split_once("..") else {
            return Err(bad_value(line, key, format!("interval '{part}' needs '..'")));
        };
        let start: u64 = parse_num(start.trim(), line, key)?;
        let end = end.trim();
        let end = if end.is_empty() {
            None
        } else {
            Some(parse_num::<u64>(end, line, key)?)
        };
        out.push((start, end));
    }
    if out.is_empty() {
        return Err(bad_value(line, key, "empty interval list"));
    }
    Ok(out)
}

fn parse_template(value: &str, line: usize, key: &str) -> Result<IoTemplate, ScenarioError> {
    let parts: Vec<&str> = value.split(':').collect();
    if parts.len() != 4 {
        return Err(bad_value(line, key, "expected type:max_size:min_res:max_res"));
    }
    let data_type = DataType::parse(parts[0])
        .ok_or_else(|| bad_value(line, key, format!("unknown data type '{}'", parts[0])))?;
    Ok(IoTemplate {
        data_type,
        max_size: parse_num(parts[1], line, key)?,
        min_res: parse_num(parts[2], line, key)?,
        max_res: parse_num(parts[3], line, key)?,
    })
}

fn parse_position(value: &str, line: usize, key: &str) -> Result<(f64, f64), ScenarioError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 2 {
        return Err(bad_value(line, key, "expected 'x y'"));
    }
    Ok((parse_num(parts[0], line, key)?, parse_num(parts[1], line, key)?))
}

fn apply_key(
    scenario: &mut Scenario,
    section: &Section,
    key: &str,
    value: &str,
    line: usize,
    base_dir: Option<&Path>,
) -> Result<(), ScenarioError> {
    match section {
        Section::Config => apply_config_key(scenario, key, value, line, base_dir),
        Section::Node(id) => {
            let spec = scenario.nodes.get_mut(id).expect("section created the node");
            match key {
                "hash_rate" => spec.hash_rate = parse_num(value, line, key)?,
                "position" => spec.position = parse_position(value, line, key)?,
                "behavior" => {
                    spec.behavior = Behavior::parse(value)
                        .ok_or_else(|| bad_value(line, key, format!("unknown behavior '{value}'")))?
                }
                "online" => spec.online = parse_intervals(value, line, key)?,
                "channels" => spec.channels = parse_num(value, line, key)?,
                "sample_bytes" => spec.sample_bytes = parse_num(value, line, key)?,
                "needs" => spec.needs.push(parse_template(value, line, key)?),
                "provides" => spec.provides.push(parse_template(value, line, key)?),
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        key: key.to_string(),
                        section: format!("node {id}"),
                    })
                }
            }
            Ok(())
        }
        Section::Link(a, b) => {
            let spec = scenario
                .links
                .get_mut(&(a.clone(), b.clone()))
                .expect("section created the link");
            match key {
                "bandwidth" => spec.bandwidth = parse_num(value, line, key)?,
                "latency" => spec.latency = parse_num(value, line, key)?,
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        key: key.to_string(),
                        section: format!("link {a} {b}"),
                    })
                }
            }
            Ok(())
        }
        Section::Feature(idx) => {
            let spec = &mut scenario.features[*idx];
            match key {
                "class" => {
                    spec.class = FeatureClass::parse(value)
                        .ok_or_else(|| bad_value(line, key, format!("unknown class '{value}'")))?
                }
                "type" => {
                    spec.data_type = DataType::parse(value)
                        .ok_or_else(|| bad_value(line, key, format!("unknown type '{value}'")))?
                }
                "position" => spec.position = parse_position(value, line, key)?,
                "extent" => spec.extent_m = Some(parse_num(value, line, key)?),
                _ => {
                    return Err(ScenarioError::UnknownKey {
                        key: key.to_string(),
                        section: format!("feature {}", spec.name),
                    })
                }
            }
            Ok(())
        }
    }
}

fn apply_config_key(
    scenario: &mut Scenario,
    key: &str,
    value: &str,
    line: usize,
    base_dir: Option<&Path>,
) -> Result<(), ScenarioError> {
    let chain = &mut scenario.chain;
    let sim = &mut scenario.sim;
    match key {
        "genesis" => {
            chain.genesis_mode = match value {
                "longevous" => GenesisMode::Longevous,
                "ad_hoc" => GenesisMode::AdHoc,
                _ => return Err(bad_value(line, key, "expected 'longevous' or 'ad_hoc'")),
            }
        }
        "infrastructure" => {
            chain.infrastructure = value.split_whitespace().map(NodeId::new).collect()
        }
        "min_live_nodes" => chain.min_live_nodes = parse_num(value, line, key)?,
        "demurrage_window" => chain.demurrage_window = parse_num(value, line, key)?,
        "epoch_allowance" => chain.epoch_allowance = parse_num(value, line, key)?,
        "penalty_factor" => chain.penalty_factor = parse_num(value, line, key)?,
        "difficulty_bits" => chain.pow_difficulty_bits = parse_num(value, line, key)?,
        "pow_timeout" => chain.pow_timeout = parse_num(value, line, key)?,
        "fee_base" => chain.fee_base = parse_num(value, line, key)?,
        "fee_per_byte" => chain.fee_per_byte = parse_num(value, line, key)?,
        "alpha" => chain.alpha = parse_num(value, line, key)?,
        "beta" => chain.beta = parse_num(value, line, key)?,
        "stamp_tolerance" => chain.stamp_tolerance = parse_num(value, line, key)?,
        "min_proofs" => chain.window_min_proofs = parse_num(value, line, key)?,
        "shard_grid" => chain.shard_grid_m = parse_num(value, line, key)?,
        "bytes_per_hash_unit" => sim.bytes_per_hash_unit = parse_num(value, line, key)?,
        "validator_threshold" => sim.validator_threshold = parse_num(value, line, key)?,
        "validators_per_stamp" => sim.validators_per_stamp = parse_num(value, line, key)?,
        "transfer_window" => sim.transfer_window = parse_num(value, line, key)?,
        "sense_range" => sim.sense_range = parse_num(value, line, key)?,
        "counterfeit_factor" => sim.counterfeit_factor = parse_num(value, line, key)?,
        "randomized_shards" => sim.randomized_shards = parse_num(value, line, key)?,
        "probe_noise" => sim.probe_noise = parse_num(value, line, key)?,
        "stamp_location_error" => sim.stamp_location_error = parse_num(value, line, key)?,
        "density_model" => {
            let path = match base_dir {
                Some(dir) => dir.join(value),
                None => PathBuf::from(value),
            };
            scenario.density = load_model_file(&path)?;
        }
        _ => {
            return Err(ScenarioError::UnknownKey {
                key: key.to_string(),
                section: "config".to_string(),
            })
        }
    }
    Ok(())
}

/// Model files as written by the calibrate command:
///
/// ```text
/// planar = <intercept> <slope>
/// revolute = <intercept> <slope>
/// composite 16 = 4:1117 5.5:578 8:273 9.8:150
/// ```
pub fn load_model_file(path: &Path) -> Result<DensityModel, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_model_text(&text).map_err(|reason| ScenarioError::ModelFile {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn parse_model_text(text: &str) -> Result<DensityModel, String> {
    let mut model = DensityModel::default();
    let mut composite = BTreeMap::new();
    let mut saw_composite = false;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (lhs, rhs) = line.split_once('=').ok_or_else(|| format!("bad line '{line}'"))?;
        let lhs: Vec<&str> = lhs.split_whitespace().collect();
        let rhs = rhs.trim();
        let parse_pair = |s: &str| -> Result<LinearModel, String> {
            let parts: Vec<&str> = s.split_whitespace().collect();
            if parts.len() != 2 {
                return Err(format!("expected 'intercept slope', got '{s}'"));
            }
            Ok(LinearModel {
                intercept: parts[0].parse().map_err(|_| format!("bad number '{}'", parts[0]))?,
                slope: parts[1].parse().map_err(|_| format!("bad number '{}'", parts[1]))?,
            })
        };
        match lhs.as_slice() {
            ["planar"] => model.planar = parse_pair(rhs)?,
            ["revolute"] => model.revolute = parse_pair(rhs)?,
            ["composite", ch] => {
                let channels: u32 = ch.parse().map_err(|_| format!("bad channel count '{ch}'"))?;
                let mut knots = Vec::new();
                for pair in rhs.split_whitespace() {
                    let (d, p) = pair
                        .split_once(':')
                        .ok_or_else(|| format!("knot '{pair}' needs 'distance:points'"))?;
                    knots.push((
                        d.parse::<f64>().map_err(|_| format!("bad distance '{d}'"))?,
                        p.parse::<f64>().map_err(|_| format!("bad points '{p}'"))?,
                    ));
                }
                if knots.len() < 2 {
                    return Err(format!("composite {channels} needs at least 2 knots"));
                }
                knots.sort_by(|a, b| a.0.total_cmp(&b.0));
                composite.insert(channels, knots);
                saw_composite = true;
            }
            _ => return Err(format!("unknown model key '{}'", lhs.join(" "))),
        }
    }
    if saw_composite {
        model.composite = composite;
    }
    Ok(model)
}

/// Render a model in the file format `load_model_file` reads.
pub fn render_model_text(model: &DensityModel) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "planar = {:.6} {:.6}\n",
        model.planar.intercept, model.planar.slope
    ));
    out.push_str(&format!(
        "revolute = {:.6} {:.6}\n",
        model.revolute.intercept, model.revolute.slope
    ));
    for (channels, knots) in &model.composite {
        let knot_text: Vec<String> = knots.iter().map(|(d, p)| format!("{d}:{p}")).collect();
        out.push_str(&format!("composite {channels} = {}\n", knot_text.join(" ")));
    }
    out
}

/// Fit models from calibration points and keep everything else default.
pub fn model_from_calibration(cal: &CalibrationSet) -> Result<DensityModel, String> {
    let mut merged = CalibrationSet::reference();
    if !cal.planar.is_empty() {
        merged.planar = cal.planar.clone();
    }
    if !cal.revolute.is_empty() {
        merged.revolute = cal.revolute.clone();
    }
    if !cal.composite.is_empty() {
        merged.composite = cal.composite.clone();
    }
    fit_density_models(&merged).map_err(|e| e.to_string())
}
