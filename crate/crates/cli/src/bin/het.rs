//! het: translate a source package directory into a runpack.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use minihello::frontend::load_package_dir;
use minihello::{compile, translate};

/// Translate a directory of .hlo sources into a .rpk runpack.
///
/// Exit status: 0 on success, 1 when the sources have errors (no runpack is
/// written), 2 on I/O failure.
#[derive(Parser, Debug)]
#[command(name = "het", version)]
struct Args {
    /// Package directory; every .hlo file in it is translated together.
    package_dir: PathBuf,

    /// Output path. Defaults to `<package>.rpk` in the current directory.
    #[arg(short = 'o', long = "out", value_name = "PATH")]
    out: Option<PathBuf>,

    /// Do not print warnings.
    #[arg(short, long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(path) => {
            if !args.quiet {
                eprintln!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Diagnostics(text)) => {
            eprintln!("{text}");
            ExitCode::from(1)
        }
        Err(Failure::Io(text)) => {
            eprintln!("het: {text}");
            ExitCode::from(2)
        }
    }
}

enum Failure {
    Diagnostics(String),
    Io(String),
}

fn run(args: &Args) -> Result<PathBuf, Failure> {
    let dir = &args.package_dir;
    if !dir.is_dir() {
        return Err(Failure::Io(format!("{}: not a directory", dir.display())));
    }
    let units = load_package_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    if units.is_empty() {
        return Err(Failure::Diagnostics(format!("{}: no sources found", dir.display())));
    }
    let pkg = translate(&units).map_err(|e| Failure::Diagnostics(e.to_string()))?;
    if !args.quiet {
        for w in &pkg.warnings {
            eprintln!("{w}");
        }
    }
    let image = compile(&pkg).map_err(|e| Failure::Diagnostics(e.to_string()))?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.rpk", image.name)));
    write_atomic(&out, &image.serialize()).map_err(|e| Failure::Io(format!("{}: {e}", out.display())))?;
    Ok(out)
}

/// Writes to a temporary file next to `path`, then renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
