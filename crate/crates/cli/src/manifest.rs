use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use seedner_core::{
    GenerationPlan, InjectionProfile, LabelSpace, ProviderConfig, SizeLadder, ValidationPolicy,
};

/// Where generation requests go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProviderSpec {
    OpenaiCompatible(ProviderConfig),
    Mock(InjectionProfile),
}

/// One experiment: which organic data seeds the prompts, who answers them,
/// and where results go. Relative paths are resolved against the directory
/// holding the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub language: String,
    pub organic_path: PathBuf,
    pub provider: ProviderSpec,
    pub plan: GenerationPlan,
    #[serde(default)]
    pub ladder: SizeLadder,
    #[serde(default)]
    pub label_space: LabelSpace,
    #[serde(default)]
    pub validation: ValidationPolicy,
    pub output_dir: PathBuf,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading manifest {}", path.display()))?;
        let mut manifest: ExperimentManifest = serde_json::from_str(&text)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.organic_path = resolve(base, &manifest.organic_path);
        manifest.output_dir = resolve(base, &manifest.output_dir);
        manifest.plan.language = manifest.language.clone();
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.language.trim().is_empty() {
            bail!("manifest language is empty");
        }
        self.plan.validate()?;
        self.ladder.validate()?;
        match &self.provider {
            ProviderSpec::OpenaiCompatible(config) => config.validate()?,
            ProviderSpec::Mock(profile) => profile.validate()?,
        }
        Ok(())
    }

    /// Applies the `--seed` override to every seeded stage.
    pub fn reseed(&mut self, seed: u64) {
        self.plan.rng_seed = seed;
        self.ladder.rng_seed = seed;
        if let ProviderSpec::Mock(profile) = &mut self.provider {
            profile.rng_seed = seed;
        }
    }

    pub fn responses_path(&self) -> PathBuf {
        self.output_dir.join("responses.jsonl")
    }

    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join("harvest_report.json")
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.output_dir.join("synthetic.jsonl")
    }

    /// Copies the effective manifest into the output directory.
    pub fn record(&self) -> Result<()> {
        fs::create_dir_all(&self.output_dir)
            .with_context(|| format!("creating {}", self.output_dir.display()))?;
        let path = self.output_dir.join("manifest.json");
        let body = serde_json::to_string_pretty(self)?;
        fs::write(&path, body + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"{
        "language": "Danish",
        "organic_path": "data/da_train.jsonl",
        "provider": {"type": "mock", "well_formatted": 0.6, "unequal_lengths": 0.2,
                     "run_on_incomplete": 0.1, "empty_or_continuation": 0.1, "rng_seed": 5},
        "plan": {"m": 10, "n": 20, "k": 50, "rng_seed": 5},
        "label_space": ["O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC"],
        "output_dir": "runs/da"
    }"#;

    #[test]
    fn loads_and_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, MANIFEST).unwrap();
        let m = ExperimentManifest::load(&path).unwrap();
        assert_eq!(m.organic_path, dir.path().join("data/da_train.jsonl"));
        assert_eq!(m.output_dir, dir.path().join("runs/da"));
        assert_eq!(m.plan.language, "Danish");
        assert_eq!(m.plan.compile_cap, 5000);
        assert_eq!(m.ladder, SizeLadder::default());
        assert!(matches!(m.provider, ProviderSpec::Mock(ref p) if p.rng_seed == 5));
    }

    #[test]
    fn http_provider_defaults() {
        let json = r#"{"type": "openai_compatible", "model_name": "llama", "endpoint_url": "http://localhost:8000/v1", "api_key_env": null}"#;
        let spec: ProviderSpec = serde_json::from_str(json).unwrap();
        let ProviderSpec::OpenaiCompatible(config) = spec else {
            panic!()
        };
        assert_eq!(config.temperature, 0.8);
        assert_eq!(config.top_p, 0.8);
        assert_eq!(config.max_new_tokens, 8192);
        assert_eq!(config.api_key_env, None);
    }

    #[test]
    fn rejects_invalid_profile() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.json");
        fs::write(&path, MANIFEST.replace("0.6", "0.7")).unwrap();
        assert!(ExperimentManifest::load(&path).is_err());
    }
}
