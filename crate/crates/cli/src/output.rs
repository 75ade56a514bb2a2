use std::path::Path;

use imitation_core::State;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Matrix rows of a system state, one per action.
pub fn rows(x: &State) -> Vec<Vec<f64>> {
    x.matrix().rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Pretty JSON with a trailing newline.
pub fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}
