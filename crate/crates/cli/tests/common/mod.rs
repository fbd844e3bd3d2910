#![allow(dead_code)]

use cte_cli::PipelineConfig;
use std::path::{Path, PathBuf};

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// The bundled fixture config, ignoring the process environment, writing to `out`.
pub fn fixture_config(out: &Path) -> PipelineConfig {
    config_with(out, &[])
}

/// As [`fixture_config`] with `CTE_SECTION__KEY` style overrides.
pub fn config_with(out: &Path, overrides: &[(&str, &str)]) -> PipelineConfig {
    let path = repo_root().join("config/fixture.toml");
    let text = std::fs::read_to_string(&path).unwrap();
    let env = overrides.iter().map(|(k, v)| (k.to_string(), v.to_string()));
    let mut cfg = PipelineConfig::from_str_with_env(&text, path.parent().unwrap(), env).unwrap();
    cfg.run.out = out.to_path_buf();
    cfg
}

/// A one-game config over the fixture platformer, small enough for quick CLI checks.
pub fn tiny_config_text() -> String {
    let fixtures = repo_root().join("fixtures/platformer");
    format!(
        r#"
[run]
seed = 7
out = "out"

[[games]]
name = "platformer"
path = "{}"
physics = true

[gmm]
k_values = [4, 8, 12]

[autoencoder]
epochs = 1
conv1 = 4
conv2 = 8
context_dense = 32
affordance_dense = 8
edge_dense = 8
ablation = false

[dbscan]
eps_from = "pairwise"
eps_hi_pct = 25.0
min_pts = [3, 10]

[generator]
variants = ["symbol", "two_step", "continuous"]
hidden = 16
layers = 1
history = 16
epochs = 2
batch_size = 4

[generate]
count = 3

[translator]
hidden = 16
epochs = 5
"#,
        fixtures.display().to_string().replace('\\', "/")
    )
}
