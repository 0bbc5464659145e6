//! Compiles a small C program against the generated header and the static library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "fraclap.h"

int main(void) {
    double r[2] = {1.0, 1.0}, t[4];
    size_t n = 0;
    if (fl_thresholds(r, 2, t, 4, &n) != FL_STATUS_OK || n != 3 || t[2] != 8.0) return 1;
    double bad[1] = {0.0}, theta[1] = {0.5}, v;
    if (fl_symbol(bad, 1, theta, &v) != FL_STATUS_INVALID_ARGUMENT) return 2;
    if (fl_last_error_message() == NULL) return 3;
    FlModel *m = NULL;
    double one[1] = {1.0};
    if (fl_model_torus_new(one, 1, 64, FL_GRID_PLAIN, &m) != FL_STATUS_OK) return 4;
    size_t sites = fl_model_sites(m);
    double f[128] = {0}, g[128];
    f[0] = 1.0;
    if (fl_evolve(m, 2.0, f, g) != FL_STATUS_OK) return 5;
    double s = 0;
    for (size_t i = 0; i < 2 * sites; i++) s += g[i] * g[i];
    fl_model_free(m);
    if (fabs(s - 1.0) > 1e-12) return 6;
    printf("ok %s\n", fl_version());
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // .../target/<profile>/deps/c_header-xxxx
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let lib = target_dir().join("libfraclap_ffi.a");
    assert!(lib.exists(), "static library missing at {}", lib.display());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile_dir();
    let src = dir.join("probe.c");
    let bin = dir.join("probe");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler runs");
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "probe exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}

fn tempfile_dir() -> PathBuf {
    let d = std::env::temp_dir().join(format!("fraclap-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}
