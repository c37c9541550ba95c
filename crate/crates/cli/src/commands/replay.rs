use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;

use crate::manifest::{diff_csv, diff_json, RunManifest, MANIFEST_FILE};
use crate::{EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

/// Paths in the manifest are resolved against the current directory, so run
/// replays from where the original command ran.
#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// A manifest file or the run directory holding one.
    pub manifest: PathBuf,
    /// Where the rerun writes; defaults to `<run dir>-replay`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// `args` with the output directory replaced by `out`.
fn redirect(args: &[String], out: &Path) -> Vec<String> {
    let mut v = Vec::with_capacity(args.len() + 2);
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--out-dir" {
            it.next();
        } else if !a.starts_with("--out-dir=") {
            v.push(a.clone());
        }
    }
    v.push("--out-dir".into());
    v.push(out.display().to_string());
    v
}

/// Compares every recorded output with its counterpart in the rerun.
/// Returns the differences found.
pub fn compare_outputs(original: &RunManifest, orig_dir: &Path, new_dir: &Path) -> Result<Vec<String>> {
    let mut diffs = Vec::new();
    for out in &original.outputs {
        let name = out.file_name().with_context(|| format!("bad output path {}", out.display()))?;
        let (a, b) = (orig_dir.join(name), new_dir.join(name));
        let diff = match out.extension().and_then(|e| e.to_str()) {
            Some("csv") => diff_csv(&a, &b)?,
            Some("json") => diff_json(&a, &b)?,
            _ => (std::fs::read(&a)? != std::fs::read(&b)?).then(|| "contents differ".to_string()),
        };
        if let Some(d) = diff {
            diffs.push(format!("{}: {d}", name.to_string_lossy()));
        }
    }
    Ok(diffs)
}

fn replay(a: &ReplayArgs) -> Result<i32> {
    let path = if a.manifest.is_dir() { a.manifest.join(MANIFEST_FILE) } else { a.manifest.clone() };
    let original = RunManifest::load(&path)?;
    if original.command == "replay" {
        bail!("cannot replay a replay");
    }
    let orig_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = a.out_dir.clone().unwrap_or_else(|| {
        let mut s = orig_dir.clone().into_os_string();
        s.push("-replay");
        PathBuf::from(s)
    });
    if out == orig_dir {
        bail!("the replay must write to a different directory");
    }
    let mut argv = vec!["babnd".to_string()];
    argv.extend(redirect(&original.args, &out));
    let code = crate::run(argv);
    if code != original.exit_code {
        println!("exit code {code} differs from recorded {}", original.exit_code);
        return Ok(EXIT_FAILURE);
    }
    if code == EXIT_USAGE {
        return Ok(EXIT_USAGE);
    }
    let diffs = compare_outputs(&original, &orig_dir, &out)?;
    for d in &diffs {
        println!("mismatch {d}");
    }
    if diffs.is_empty() {
        println!("replay of {} matches ({} outputs)", path.display(), original.outputs.len());
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_FAILURE)
    }
}

pub fn run(a: &ReplayArgs) -> i32 {
    match replay(a) {
        Ok(c) => c,
        Err(e) => {
            crate::report_error(&e);
            EXIT_USAGE
        }
    }
}
