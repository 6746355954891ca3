#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BASE: &str = r#"
seed = 42
n_samples = 600
train_samples = 1500
s = 4
latent = 2
mode = "chi2"
alpha = 0.01

[model]
a = [[0.6, 0.2], [-0.1, 0.5]]
b = [[1.0], [0.5]]
c = [[1.0, 0.0], [0.0, 1.0]]

[noise]
process_std = 0.05
measurement_std = 0.1

[fault]
kind = "sensor_step"
onset = 300
magnitude = [1.0, 0.0]

[verify]
random_models = 3

[bench]
amplitudes = [0.0, 0.25, 0.5, 1.0]
trials = 6
"#;

pub fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn fsfd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsfd")).args(args).env("SOURCE_DATE_EPOCH", "1700000000").output().unwrap()
}

pub fn fsfd_in(config: &Path, out: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"];
    args.extend_from_slice(extra);
    fsfd(&args)
}

pub fn noise_free(text: &str) -> String {
    text.replace("process_std = 0.05", "process_std = 0.0").replace("measurement_std = 0.1", "measurement_std = 0.0")
}
