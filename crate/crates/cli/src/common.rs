use std::path::{Path, PathBuf};
use std::process::ExitCode;

use lact_core::io::{self, ViewMode};
use lact_core::Image;
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] lact_core::Error),

    #[error(transparent)]
    Nn(#[from] lact_nn::Error),

    #[error(transparent)]
    Train(#[from] lact_train::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        let code = match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if e.is_data_error() => 3,
            CliError::Core(lact_core::Error::NonFinite { .. }) => 4,
            CliError::Core(_) => 2,
            CliError::Nn(lact_nn::Error::NonFinite { .. }) => 4,
            CliError::Nn(lact_nn::Error::Data(e)) if e.is_data_error() => 3,
            CliError::Nn(lact_nn::Error::CheckpointMismatch(_) | lact_nn::Error::Json(_)) => 3,
            CliError::Nn(_) => 2,
            CliError::Train(e) if e.is_numeric() => 4,
            CliError::Train(e) if e.is_data_error() => 3,
            CliError::Train(_) => 2,
        };
        ExitCode::from(code)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Starts from the defaults, then overlays a JSON config file when given.
/// Flags are applied by the caller afterwards.
pub fn load_layered<T: Default + DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| lact_core::Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", p.display())))
        }
    }
}

/// Prints the resolved configuration. Returns `true` when the caller should
/// stop (`--print-config`).
pub fn announce<T: Serialize>(command: &str, config: &T, seed: Option<u64>, print_only: bool) -> bool {
    let json = serde_json::to_string_pretty(config).expect("configs serialize");
    if print_only {
        println!("{json}");
        return true;
    }
    println!("{command} config:\n{json}");
    match seed {
        Some(s) => println!("seed: {s}"),
        None => println!("seed: none"),
    }
    false
}

/// Writes `.laim` natively, `.pgm` / `.png` as a min-max windowed view.
pub fn write_output_image(path: &Path, image: &Image) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| lact_core::Error::io(dir, e))?;
    }
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    match ext.as_str() {
        "pgm" | "png" => {
            let mode: ViewMode = ext.parse()?;
            let (lo, hi) = image.min_max();
            io::export_view(image, path, mode, (lo as f64, hi as f64))?;
        }
        _ => io::write_image(path, image)?,
    }
    Ok(())
}

/// Parses `"1..7"`, `"1..=7"`, `"3"` or `"1,4,7"` into level numbers.
pub fn parse_levels(s: &str) -> CliResult<Vec<usize>> {
    let bad = || usage(format!("expected levels like 1..7 or 1,3,5, got {s:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let levels: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (num(a)?, num(b)?);
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<CliResult<_>>()?
    };
    if levels.is_empty() || levels.iter().any(|l| !(1..=7).contains(l)) {
        return Err(usage(format!("levels must lie in 1..7, got {s:?}")));
    }
    Ok(levels)
}

/// Parses `"lo:hi:step"` into the list of values.
pub fn parse_steps(s: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("expected lo:hi:step, got {s:?}"));
    let parts: Vec<f64> = s
        .split(':')
        .map(|t| t.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let [lo, hi, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0 && lo <= hi) {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| lo + k as f64 * step).collect())
}

/// `foo/bar.lack` with suffix `_log.csv` becomes `foo/bar_log.csv`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}
