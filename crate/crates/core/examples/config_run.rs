//! Drives a run from a TOML config, the same path the `train` subcommand
//! takes, and prints the head of the metrics CSV it writes.

use gapsparse::cli::run_config;
use gapsparse::config::ExperimentConfig;

const CONFIG: &str = r#"
[run]
method = "gmp"
seed = 13
run_id = "gmp-demo"
output_dir = "OUT"

[model]
layers = [8, 24, 24, 3]

[data]
source = "synthetic"
teacher = [8, 12, 3]
samples = 600

[sparsity]
ratio = 0.8
exempt_layers = [2]

[optimizer]
lr = 0.05
momentum = 0.9
schedule = "cosine"
batch_size = 32

[baseline]
epochs = 10
gmp_start = 1
gmp_end = 7
gmp_interval = 2
"#;

fn main() -> gapsparse::Result<()> {
    let dir = std::env::temp_dir().join(format!("gapsparse-config-{}", std::process::id()));
    let cfg = ExperimentConfig::parse(&CONFIG.replace("OUT", &dir.display().to_string()))?;
    let (record, metrics, ckpt) = run_config(&cfg)?;
    println!("val accuracy {:.2}%", 100.0 * record.final_eval.accuracy);
    println!("checkpoint {}", ckpt.display());
    for line in std::fs::read_to_string(&metrics)?.lines().take(6) {
        println!("{line}");
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
