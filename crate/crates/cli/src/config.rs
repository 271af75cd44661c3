//! Run configuration. A single TOML file with dotted keys; every key has a
//! default and unknown keys are rejected.

use std::path::{Path, PathBuf};

use baymeta_core::bayescore::{AnomalyReference, NiwPrior};
use baymeta_core::diffnet::{Activation, EmbeddingNet};
use baymeta_core::episodes::TaskFamily;
use baymeta_core::fedsim::Participation;
use baymeta_core::metalearn::HyperParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SEED_ENV: &str = "BAYMETA_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Centralized,
    CentralizedContrastive,
    Federated,
    FederatedContrastive,
    Protomaml,
    CoresetNn,
    Checks,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::CentralizedContrastive => "centralized_contrastive",
            Mode::Federated => "federated",
            Mode::FederatedContrastive => "federated_contrastive",
            Mode::Protomaml => "protomaml",
            Mode::CoresetNn => "coreset_nn",
            Mode::Checks => "checks",
        }
    }

    pub fn is_federated(self) -> bool {
        matches!(self, Mode::Federated | Mode::FederatedContrastive)
    }

    pub fn is_contrastive(self) -> bool {
        matches!(self, Mode::CentralizedContrastive | Mode::FederatedContrastive)
    }
}

/// Isotropic NIW prior on the embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorSpec {
    pub kappa0: f64,
    /// `Λ0 = lambda0_scale · I`.
    pub lambda0_scale: f64,
    /// Defaults to `d + 2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu0: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            kappa0: 0.01,
            lambda0_scale: 1.0,
            nu0: None,
        }
    }
}

/// Embedding network; the input width comes from `tasks.input_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSpec {
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub layer_norm: bool,
    pub norm_eps: f64,
}

impl Default for NetSpec {
    fn default() -> Self {
        let net = EmbeddingNet::default();
        NetSpec {
            hidden_dims: net.hidden_dims,
            output_dim: net.output_dim,
            activation: net.activation,
            layer_norm: net.layer_norm,
            norm_eps: net.norm_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSpec {
    pub test_episodes: usize,
    /// Pool scores across episodes instead of averaging per-episode metrics.
    pub pooled: bool,
    pub histogram_bins: usize,
    pub coreset_fraction: f64,
    /// Value of the `task_family` column in the metrics CSV.
    pub family_label: String,
}

impl Default for EvalSpec {
    fn default() -> Self {
        EvalSpec {
            test_episodes: 300,
            pooled: false,
            histogram_bins: 20,
            coreset_fraction: 0.25,
            family_label: "synthetic".into(),
        }
    }
}

/// `"all"`, an integer count, or a fraction in `(0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParticipationSpec {
    Count(usize),
    Fraction(f64),
    Keyword(String),
}

impl Default for ParticipationSpec {
    fn default() -> Self {
        ParticipationSpec::Keyword("all".into())
    }
}

impl ParticipationSpec {
    pub fn resolve(&self) -> Result<Participation, CliError> {
        match self {
            ParticipationSpec::Count(k) => Ok(Participation::Count(*k)),
            ParticipationSpec::Fraction(f) => Ok(Participation::Fraction(*f)),
            ParticipationSpec::Keyword(s) if s == "all" => Ok(Participation::All),
            ParticipationSpec::Keyword(s) => Err(CliError::config(
                "fed.participation",
                format!("expected \"all\", a count or a fraction, got {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FedSpec {
    /// Number of clients, one task each. Defaults to `tasks.num_tasks`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clients: Option<usize>,
    pub participation: ParticipationSpec,
    pub rounds: usize,
    /// Estimate the global gradient norm every this many rounds; 0 disables
    /// the stationarity diagnostics.
    pub checkpoint_every: usize,
    pub checkpoint_samples: usize,
    /// Episodes per client and probe point for the constant estimates.
    pub probe_samples: usize,
}

impl Default for FedSpec {
    fn default() -> Self {
        FedSpec {
            clients: None,
            participation: ParticipationSpec::default(),
            rounds: 100,
            checkpoint_every: 0,
            checkpoint_samples: 200,
            probe_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub hp: HyperParams,
    pub prior: PriorSpec,
    pub reference: AnomalyReference,
    pub net: NetSpec,
    pub tasks: TaskFamily,
    pub eval: EvalSpec,
    pub fed: FedSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::default(),
            seed: 42,
            output_dir: PathBuf::from("runs/baymeta"),
            hp: HyperParams::default(),
            prior: PriorSpec::default(),
            reference: AnomalyReference::default(),
            net: NetSpec::default(),
            tasks: TaskFamily::default(),
            eval: EvalSpec::default(),
            fed: FedSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads, applies the seed override from the environment and validates.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<(), CliError> {
        if let Some(v) = value {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| CliError::config(SEED_ENV, format!("not an unsigned integer: {v:?}")))?;
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the effective configuration.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Task family as used by this mode: federated runs have one task per
    /// client.
    pub fn family(&self) -> TaskFamily {
        let mut f = self.tasks.clone();
        if self.mode.is_federated() {
            if let Some(c) = self.fed.clients {
                f.num_tasks = c;
            }
        }
        f
    }

    pub fn embedding_net(&self) -> EmbeddingNet {
        EmbeddingNet {
            input_dim: self.tasks.input_dim,
            hidden_dims: self.net.hidden_dims.clone(),
            output_dim: self.net.output_dim,
            activation: self.net.activation,
            layer_norm: self.net.layer_norm,
            norm_eps: self.net.norm_eps,
        }
    }

    pub fn niw_prior(&self) -> Result<NiwPrior, CliError> {
        let d = self.net.output_dim;
        let nu0 = self.prior.nu0.unwrap_or(d as f64 + 2.0);
        Ok(NiwPrior::isotropic(d, self.prior.kappa0, self.prior.lambda0_scale, nu0)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.hp.validate()?;
        self.family().validate()?;
        self.embedding_net().validate()?;
        self.niw_prior()?;
        AnomalyReference::new(self.reference.scale_value, self.reference.dof)?;
        if self.eval.test_episodes == 0 {
            return Err(CliError::config("eval.test_episodes", "must be >= 1"));
        }
        if !(self.eval.coreset_fraction > 0.0 && self.eval.coreset_fraction <= 1.0) {
            return Err(CliError::config("eval.coreset_fraction", "must be in (0, 1]"));
        }
        if self.fed.clients == Some(0) {
            return Err(CliError::config("fed.clients", "must be >= 1"));
        }
        if self.mode.is_federated() {
            self.fed.participation.resolve()?.size(self.family().num_tasks)?;
            if self.fed.checkpoint_every > 0 && self.fed.checkpoint_samples == 0 {
                return Err(CliError::config("fed.checkpoint_samples", "must be >= 1"));
            }
            if self.fed.checkpoint_every > 0 && self.fed.probe_samples < 2 {
                return Err(CliError::config("fed.probe_samples", "must be >= 2"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.hp.alpha, 5e-4);
        assert_eq!(cfg.hp.beta, 1e-4);
        assert_eq!(cfg.hp.gamma, 1.0);
        assert_eq!(cfg.hp.tau, 0.07);
        assert_eq!(cfg.hp.lambda, 0.1);
        assert_eq!(cfg.prior.kappa0, 0.01);
        assert_eq!(cfg.niw_prior().unwrap().nu0(), 10.0);
        assert_eq!(cfg.reference.dof, 2.0);
        assert_eq!(cfg.reference.scale_value, 100.0);
        assert_eq!(cfg.seed, 42);
        cfg.validate().unwrap();
    }

    #[test]
    fn dotted_keys_and_tables_agree() {
        let a = RunConfig::parse("hp.alpha = 0.01\nfed.participation = 3\ntasks.counts.k = 4\n").unwrap();
        let b = RunConfig::parse("[hp]\nalpha = 0.01\n[fed]\nparticipation = 3\n[tasks.counts]\nk = 4\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fed.participation.resolve().unwrap(), Participation::Count(3));
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        for (text, key) in [
            ("hp.alpah = 1.0", "alpah"),
            ("tasks.shfit = 2.0", "shfit"),
            ("bogus = 1", "bogus"),
            ("reference.nu = 3.0", "nu"),
            ("tasks.counts.kk = 3", "kk"),
        ] {
            let err = RunConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(key), "{text}: {err}");
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let text = "mode = \"federated\"\nseed = 7\nhp.alpha = 0.001\nprior.nu0 = 12.5\nfed.clients = 3\nfed.participation = 0.5\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        let d = RunConfig::default();
        assert_eq!(RunConfig::parse(&d.to_toml()).unwrap(), d);
    }

    #[test]
    fn seed_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_seed_override(Some("123")).unwrap();
        assert_eq!(cfg.seed, 123);
        assert!(cfg.apply_seed_override(Some("abc")).is_err());
    }

    #[test]
    fn invalid_values_name_the_key() {
        let cfg = RunConfig::parse("hp.alpha = -1.0").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("hp.alpha"));
        let cfg = RunConfig::parse("mode = \"federated\"\nfed.participation = \"some\"").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("fed.participation"));
    }
}
