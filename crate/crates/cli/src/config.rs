//! TOML experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use lip_core::lottery::{rounds_for_sparsity, FitConfig, ImpConfig};
use lip_core::priors::NetworkSpec;
use lip_core::tasks::Degradation;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Current config schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// Source string selecting the built-in synthetic fixtures.
pub const BUILTIN_SYNTHETIC: &str = "builtin:synthetic";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Dense DIP fit.
    Fit,
    /// Single-image IMP.
    Imp,
    /// IMP over several images with shared weights.
    ImpMulti,
    /// Re-fit a saved ticket on a (possibly different) task.
    EvalTicket,
    /// Random / profile / SNIP / SynFlow masks at one sparsity.
    BaselinePrune,
    /// Dense vs sparse learning curves on four targets.
    FourTargets,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Fit => "fit",
            ExperimentKind::Imp => "imp",
            ExperimentKind::ImpMulti => "imp-multi",
            ExperimentKind::EvalTicket => "eval-ticket",
            ExperimentKind::BaselinePrune => "baseline-prune",
            ExperimentKind::FourTargets => "four-targets",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    #[default]
    HourglassDesk,
    HourglassFull,
    Hourglass,
    DeepDecoder,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub preset: Preset,
    /// Channels per scale (hourglass) or `k` (deep decoder).
    pub width: Option<usize>,
    pub depth: Option<usize>,
    pub skip: Option<usize>,
    pub code_channels: Option<usize>,
    /// Full architecture; overrides everything above.
    pub spec: Option<NetworkSpec>,
}

impl NetworkConfig {
    /// The architecture, with the output channels set by the data.
    pub fn spec(&self, out_channels: usize) -> NetworkSpec {
        let spec = match (&self.spec, self.preset) {
            (Some(spec), _) => spec.clone(),
            (None, Preset::HourglassFull) => NetworkSpec::hourglass_full_scale(),
            (None, Preset::HourglassDesk) => NetworkSpec::hourglass_desk(),
            (None, Preset::Hourglass) => NetworkSpec::hourglass(
                self.depth.unwrap_or(4),
                self.width.unwrap_or(32),
                self.skip.unwrap_or(4),
                self.code_channels.unwrap_or(32),
            ),
            (None, Preset::DeepDecoder) => NetworkSpec::deep_decoder(self.width.unwrap_or(64), self.depth.unwrap_or(6)),
        };
        spec.with_out_channels(out_channels)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// A directory of images, or `builtin:synthetic`.
    pub source: String,
    /// Restrict to these image names (file stems or fixture names).
    pub images: Option<Vec<String>>,
    /// Side length of generated fixtures.
    pub size: usize,
    pub fixture_seed: u64,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self { source: BUILTIN_SYNTHETIC.into(), images: None, size: 64, fixture_seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMethod {
    Random,
    Profile,
    Snip,
    Synflow,
}

impl PruneMethod {
    pub fn name(self) -> &'static str {
        match self {
            PruneMethod::Random => "random",
            PruneMethod::Profile => "profile",
            PruneMethod::Snip => "snip",
            PruneMethod::Synflow => "synflow",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpSection {
    /// Pruning rounds after the dense round.
    pub rounds: Option<usize>,
    /// Alternative to `rounds`: prune until this sparsity is reached.
    pub target_sparsity: Option<f64>,
    pub prune_fraction: f64,
    pub rewind_fraction: f64,
    pub early_stop_k: Option<usize>,
    /// Methods fitted at every round's sparsity for comparison.
    pub baselines: Vec<PruneMethod>,
}

impl Default for ImpSection {
    fn default() -> Self {
        let d = ImpConfig::default();
        Self {
            rounds: None,
            target_sparsity: None,
            prune_fraction: d.prune_fraction,
            rewind_fraction: d.rewind_fraction,
            early_stop_k: None,
            baselines: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSection {
    pub method: PruneMethod,
    pub sparsity: f64,
    /// Mask whose per-layer ratios the `profile` method copies.
    pub profile_mask: Option<PathBuf>,
    pub synflow_rounds: usize,
}

impl Default for PruneSection {
    fn default() -> Self {
        Self { method: PruneMethod::Random, sparsity: 0.79, profile_mask: None, synflow_rounds: lip_core::pruning::SYNFLOW_ROUNDS }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourTargetsSection {
    /// Sparsity of the SNIP and random nets; defaults to the ticket's.
    pub sparsity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// Must agree with the subcommand when given.
    pub kind: Option<ExperimentKind>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub network: NetworkConfig,
    #[serde(default = "Degradation::denoise")]
    pub task: Degradation,
    pub input: InputConfig,
    pub fit: FitConfig,
    pub imp: ImpSection,
    pub prune: PruneSection,
    /// Ticket directory written by `imp` (for `eval-ticket` and `four-targets`).
    pub ticket: Option<PathBuf>,
    /// Round of the ticket to use; the last saved round by default.
    pub ticket_round: Option<usize>,
    pub four_targets: FourTargetsSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: None,
            seeds: vec![0],
            out: None,
            network: NetworkConfig::default(),
            task: Degradation::denoise(),
            input: InputConfig::default(),
            fit: FitConfig::default(),
            imp: ImpSection::default(),
            prune: PruneSection::default(),
            ticket: None,
            ticket_round: None,
            four_targets: FourTargetsSection::default(),
        }
    }
}

/// Parses a config file. Unknown keys and type errors are reported with
/// their location in the file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    parse_config(&text, path)
}

pub fn parse_config(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| CliError::ConfigParse { file: origin.to_path_buf(), message: e.to_string() })
}

fn core_field(field: &str) -> impl FnOnce(lip_core::Error) -> CliError + '_ {
    move |e| CliError::field(field, e.to_string())
}

fn check_sparsity(field: &str, s: f64) -> Result<()> {
    if (0.0..1.0).contains(&s) {
        Ok(())
    } else {
        Err(CliError::field(field, format!("sparsity must lie in [0, 1), got {s}")))
    }
}

fn check_exists(field: &str, path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::field(field, format!("{} does not exist", path.display())))
    }
}

impl ExperimentConfig {
    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::field("schema_version", format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if let Some(k) = self.kind {
            if k != kind {
                return Err(CliError::field("kind", format!("config is for `{}` but `{}` was requested", k.name(), kind.name())));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::field("seeds", "at least one seed is required"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::field("seeds", "seeds must be distinct"));
        }
        if self.input.source != BUILTIN_SYNTHETIC {
            let p = Path::new(&self.input.source);
            check_exists("input.source", p)?;
            if !p.is_dir() {
                return Err(CliError::field("input.source", format!("{} is not a directory", p.display())));
            }
        }
        if self.input.size == 0 {
            return Err(CliError::field("input.size", "must be positive"));
        }
        if matches!(&self.input.images, Some(v) if v.is_empty()) {
            return Err(CliError::field("input.images", "an empty selection would use no images"));
        }
        if self.fit.iterations == 0 {
            return Err(CliError::field("fit.iterations", "a fit needs at least one iteration"));
        }
        if !(self.fit.adam.lr > 0.0) {
            return Err(CliError::field("fit.adam.lr", format!("learning rate must be positive, got {}", self.fit.adam.lr)));
        }
        if self.fit.metric_every == Some(0) {
            return Err(CliError::field("fit.metric_every", "must be positive"));
        }
        self.task.validate().map_err(core_field("task"))?;
        self.network.spec(3).validate().map_err(core_field("network"))?;

        match kind {
            ExperimentKind::Imp | ExperimentKind::ImpMulti => {
                if self.imp.rounds.is_some() && self.imp.target_sparsity.is_some() {
                    return Err(CliError::field("imp.target_sparsity", "give either `rounds` or `target_sparsity`, not both"));
                }
                if let Some(s) = self.imp.target_sparsity {
                    check_sparsity("imp.target_sparsity", s)?;
                }
                if self.imp.early_stop_k == Some(0) {
                    return Err(CliError::field("imp.early_stop_k", "must be at least 1"));
                }
                if kind == ExperimentKind::ImpMulti && !self.imp.baselines.is_empty() {
                    return Err(CliError::field("imp.baselines", "baselines are only fitted by single-image IMP"));
                }
                if self.imp.baselines.contains(&PruneMethod::Profile) {
                    return Err(CliError::field("imp.baselines", "`profile` needs a reference mask; use the prune command"));
                }
                self.imp_config().validate().map_err(core_field("imp"))?;
            }
            ExperimentKind::BaselinePrune => {
                check_sparsity("prune.sparsity", self.prune.sparsity)?;
                if self.prune.synflow_rounds == 0 {
                    return Err(CliError::field("prune.synflow_rounds", "must be at least 1"));
                }
                match (&self.prune.profile_mask, self.prune.method) {
                    (Some(p), _) => check_exists("prune.profile_mask", p)?,
                    (None, PruneMethod::Profile) => {
                        return Err(CliError::field("prune.profile_mask", "the profile method needs a reference mask"))
                    }
                    (None, _) => {}
                }
            }
            ExperimentKind::EvalTicket | ExperimentKind::FourTargets => match &self.ticket {
                Some(t) => check_exists("ticket", t)?,
                None => return Err(CliError::field("ticket", "a ticket directory is required")),
            },
            ExperimentKind::Fit => {}
        }
        if let Some(s) = self.four_targets.sparsity {
            check_sparsity("four_targets.sparsity", s)?;
        }
        Ok(())
    }

    /// Fit settings with the task's default code jitter filled in.
    pub fn fit_config(&self) -> FitConfig {
        let mut cfg = self.fit.clone();
        if cfg.jitter_std.is_none() {
            cfg.jitter_std = Some(default_jitter(&self.task));
        }
        cfg
    }

    pub fn imp_config(&self) -> ImpConfig {
        let rounds = match (self.imp.rounds, self.imp.target_sparsity) {
            (Some(r), _) => r,
            (None, Some(s)) => rounds_for_sparsity(s),
            (None, None) => ImpConfig::default().rounds,
        };
        ImpConfig {
            rounds,
            prune_fraction: self.imp.prune_fraction,
            rewind_fraction: self.imp.rewind_fraction,
            fit: self.fit_config(),
            early_stop_k: self.imp.early_stop_k,
            ..ImpConfig::default()
        }
    }

    /// SHA-256 of the effective configuration. The output directory is
    /// excluded; it does not influence results.
    pub fn hash(&self, kind: ExperimentKind) -> String {
        let mut canonical = self.clone();
        canonical.kind = Some(kind);
        canonical.out = None;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Code jitter of the reference setup: `1/30` except for inpainting.
pub fn default_jitter(task: &Degradation) -> f32 {
    match task {
        Degradation::Inpaint { .. } => 0.0,
        _ => 1.0 / 30.0,
    }
}
