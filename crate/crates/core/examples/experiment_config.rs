//! The JSON experiment layer without the binary: run a config, write the
//! artifacts and render the charts.

use gradnorm_al::experiment::{plot_dir, run_jobs, write_artifacts, ExperimentConfig};

const CONFIG: &str = r#"{
  "dataset": {"kind": "gaussian_mixture", "classes": 4, "per_class": 300, "dim": 10, "separation": 2.0, "eval_count": 200},
  "model": {"kind": "mlp", "hidden": [32, 32]},
  "al": {"cycles": 5, "budget": 50, "strategies": ["expected-gradnorm", "entropy-gradnorm", "random"]},
  "probes": {"a2": true, "overlap": true},
  "seeds": [0, 1, 2],
  "output_dir": "target/example-experiment"
}"#;

fn main() -> gradnorm_al::Result<()> {
    let config = ExperimentConfig::from_json(CONFIG)?;
    println!("config hash {}", config.hash()?);
    let results = run_jobs(&config, std::path::Path::new("."), &config.probes)?;
    let files = write_artifacts(&config.output_dir, &config, &results)?;
    println!("wrote {}", files.join(", "));
    for svg in plot_dir(&config.output_dir)? {
        println!("rendered {}", config.output_dir.join(svg).display());
    }
    Ok(())
}
