use std::path::{Path, PathBuf};

use actvocab_core::encode::Representation;
use actvocab_core::sampler::SamplingMode;
use actvocab_core::vocab::VocabScheme;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_KS: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];

fn default_sampling() -> Vec<String> {
    vec!["1a".into(), "1b".into()]
}

fn default_schemes() -> Vec<String> {
    vec!["2a".into(), "2b".into()]
}

fn default_representations() -> Vec<String> {
    ["3a", "3b", "3c", "3d"].map(String::from).to_vec()
}

fn default_ks() -> Vec<usize> {
    DEFAULT_KS.to_vec()
}

fn default_memory() -> f64 {
    1.0
}

fn default_workers() -> usize {
    1
}

/// Experiment grid as read from TOML. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_sampling")]
    pub sampling: Vec<String>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    #[serde(default = "default_representations")]
    pub representations: Vec<String>,
    #[serde(default = "default_ks")]
    pub k: Vec<usize>,
    #[serde(default = "default_memory")]
    pub memory_gb: f64,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Split indices to evaluate; empty means every split in the manifest.
    #[serde(default)]
    pub splits: Vec<usize>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

/// One point of the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellSpec {
    pub sampling: SamplingMode,
    pub scheme: VocabScheme,
    pub representation: Representation,
    pub k: usize,
}

impl CellSpec {
    /// Table-style variables triple, e.g. `3d-2a-1a`.
    pub fn variables(&self) -> String {
        format!("{}-{}-{}", self.representation.tag(), self.scheme.tag(), self.sampling.tag())
    }
}

impl ExperimentConfig {
    pub fn new(manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            manifest: manifest.into(),
            sampling: default_sampling(),
            schemes: default_schemes(),
            representations: default_representations(),
            k: default_ks(),
            memory_gb: default_memory(),
            seed: 0,
            output_dir: output_dir.into(),
            splits: Vec::new(),
            workers: default_workers(),
        }
    }

    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).context("parsing experiment config")?;
        if let Some(base) = base {
            if cfg.manifest.is_relative() {
                cfg.manifest = base.join(&cfg.manifest);
            }
            if cfg.output_dir.is_relative() {
                cfg.output_dir = base.join(&cfg.output_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text, path.parent())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.k.contains(&0) {
            bail!("K values must be positive and non-empty");
        }
        if !(self.memory_gb.is_finite() && self.memory_gb > 0.0) {
            bail!("memory_gb must be positive");
        }
        if self.workers == 0 {
            bail!("workers must be at least 1");
        }
        if self.sampling.is_empty() || self.schemes.is_empty() || self.representations.is_empty() {
            bail!("sampling, schemes and representations must be non-empty");
        }
        self.cells()?;
        Ok(())
    }

    /// Every grid cell, ordered sampling × scheme × representation × K.
    pub fn cells(&self) -> Result<Vec<CellSpec>> {
        let mut out = Vec::new();
        for s in &self.sampling {
            let sampling: SamplingMode = s.parse()?;
            for sc in &self.schemes {
                let scheme: VocabScheme = sc.parse()?;
                for r in &self.representations {
                    let representation: Representation = r.parse()?;
                    for &k in &self.k {
                        out.push(CellSpec {
                            sampling,
                            scheme,
                            representation,
                            k,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_full_grid() {
        let cfg = ExperimentConfig::parse("manifest = \"m.txt\"\noutput_dir = \"out\"\n", Some(Path::new("/x"))).unwrap();
        assert_eq!(cfg.k, vec![4, 8, 16, 32, 64, 128, 256]);
        assert_eq!(cfg.cells().unwrap().len(), 112);
        assert_eq!(cfg.manifest, PathBuf::from("/x/m.txt"));
    }

    #[test]
    fn binary_variants_at_one_k() {
        let text = "manifest = \"m\"\noutput_dir = \"o\"\nrepresentations = [\"3d\"]\nk = [32]\n";
        let cells = ExperimentConfig::parse(text, None).unwrap().cells().unwrap();
        assert_eq!(cells.len(), 4);
        let vars: Vec<String> = cells.iter().map(CellSpec::variables).collect();
        assert_eq!(vars, ["3d-2a-1a", "3d-2b-1a", "3d-2a-1b", "3d-2b-1b"]);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "manifest = \"m\"\noutput_dir = \"o\"\nk = [0]\n",
            "manifest = \"m\"\noutput_dir = \"o\"\nsampling = [\"1c\"]\n",
            "manifest = \"m\"\noutput_dir = \"o\"\nmemory_gb = -1.0\n",
            "manifest = \"m\"\noutput_dir = \"o\"\nbogus = 1\n",
            "output_dir = \"o\"\n",
        ] {
            assert!(ExperimentConfig::parse(bad, None).is_err(), "{bad}");
        }
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = ExperimentConfig::new("m.txt", "out");
        assert_eq!(ExperimentConfig::parse(&cfg.to_toml(), None).unwrap(), cfg);
    }
}
