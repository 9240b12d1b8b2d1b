use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Experiment;
use crate::CliError;

/// Version of every file layout written by this crate.
pub const FORMAT_VERSION: u32 = 1;

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn seed_label(exp: &Experiment) -> String {
    exp.config.seed.map_or_else(|| "none".into(), |s| s.to_string())
}

/// Comment line opening every CSV file.
pub fn csv_header(exp: &Experiment, kind: &str, columns: &[&str]) -> String {
    format!(
        "# bsp-lab {kind} v{FORMAT_VERSION} config_hash={} seed={}\n{}\n",
        exp.hash,
        seed_label(exp),
        columns.join(",")
    )
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format: String,
    config_hash: &'a str,
    seed: Option<u64>,
    result: &'a T,
}

pub fn json_document<T: Serialize>(exp: &Experiment, kind: &str, result: &T) -> String {
    let env = Envelope {
        format: format!("bsp-lab/{kind}/v{FORMAT_VERSION}"),
        config_hash: &exp.hash,
        seed: exp.config.seed,
        result,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("results serialize");
    s.push('\n');
    s
}

pub fn write(exp: &Experiment, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let dir = exp.out_dir();
    std::fs::create_dir_all(&dir).map_err(io(&dir))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io(&path))?;
    Ok(path)
}

pub fn write_json<T: Serialize>(exp: &Experiment, name: &str, kind: &str, result: &T) -> Result<PathBuf, CliError> {
    write(exp, name, &json_document(exp, kind, result))
}

/// Appends one CSV row; fields must not contain commas.
pub fn push_row(buf: &mut String, fields: &[&dyn std::fmt::Display]) {
    for (i, f) in fields.iter().enumerate() {
        if i > 0 {
            buf.push(',');
        }
        let _ = write!(buf, "{f}");
    }
    buf.push('\n');
}
