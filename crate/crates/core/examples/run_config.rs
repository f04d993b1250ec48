// Drives the experiment runner from a TOML config, as the CLI does, and
// lists the files it writes.

use std::path::PathBuf;

use soap_tails::experiment::{Command, Context, ExperimentSpec, Overrides};
use soap_tails::Result;

const CONFIG: &str = r#"
[distribution]
kind = "hyperexponential"
probs = [0.5, 0.5]
rates = [2.0, 0.5]

[system]
rho = 0.6

[policies]
list = ["fcfs", "fb", "step:2", "gittins"]

[sim]
n_jobs = 100000
replications = 2
seed = 11
min_tail_samples = 1000
"#;

pub fn run_example() -> Result<Vec<PathBuf>> {
    let spec = ExperimentSpec::parse(CONFIG)?;
    let out = std::env::temp_dir().join(format!("soap-tails-run-config-{}", std::process::id()));
    let ov = Overrides {
        out: Some(out.clone()),
        ..Overrides::default()
    };
    let mut files = Vec::new();
    for cmd in [Command::Rank, Command::AnalyzeLight, Command::Simulate] {
        files.extend(Context::new(cmd, spec.clone(), PathBuf::from("."), &ov).run()?);
    }
    for f in &files {
        println!("{}", f.display());
    }
    let compare = std::fs::read_to_string(out.join("compare.csv"))?;
    for line in compare.lines().filter(|l| !l.starts_with('#')) {
        println!("{line}");
    }
    Ok(files)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
