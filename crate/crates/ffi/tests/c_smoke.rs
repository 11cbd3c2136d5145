//! Compiles a C program against the generated header and links it with the
//! static library. Skipped when no C compiler is installed.

use std::path::{Path, PathBuf};
use std::process::Command;

fn deps_dir() -> PathBuf {
    // cargo test rebuilds the archive next to this binary but does not uplift it
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler `{cc}`");
        return;
    }
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = deps_dir().join("libadahessian_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let exe = Path::new(env!("CARGO_TARGET_TMPDIR")).join("adahessian_c_smoke");

    let build = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(build.status.success(), "{}", String::from_utf8_lossy(&build.stderr));

    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
