//! Compiles a small C program against the generated header and static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include "csgd.h"

int main(void) {
    CsgdGraph *g = NULL;
    CsgdSchedule *s = NULL;
    CsgdSimulation *sim = NULL;
    double l2 = 0, smax = 0, ce = 0, w[6];
    size_t written = 0;
    const double points[] = {1.0, 2.0, 3.0};
    if (csgd_graph_new("path:3", &g) != CSGD_STATUS_OK) return 1;
    if (csgd_graph_spectrum(g, &l2, &smax) != CSGD_STATUS_OK) return 2;
    if (fabs(l2 - 1.0) > 1e-9 || fabs(smax - 3.0) > 1e-9) return 3;
    if (csgd_graph_new("ring:x", &g) != CSGD_STATUS_GRAPH) return 4;
    char msg[128];
    if (csgd_last_error_message(msg, sizeof msg) == 0) return 5;
    if (csgd_schedule_new(1.0, 0.2, 0.28, 0.9, 1.0, &s) != CSGD_STATUS_OK) return 6;
    if (csgd_simulation_new_quadratic(g, s, points, 1, 1, NULL, 3, &sim) != CSGD_STATUS_OK) return 7;
    csgd_graph_free(g);
    csgd_schedule_free(s);
    if (csgd_simulation_step(sim, 5000) != CSGD_STATUS_OK) return 8;
    if (csgd_simulation_parameters(sim, w, 6, &written) != CSGD_STATUS_OK || written != 3) return 9;
    if (csgd_simulation_consensus_error(sim, &ce) != CSGD_STATUS_OK) return 10;
    printf("%f %f %f %g\n", w[0], w[1], w[2], ce);
    for (int i = 0; i < 3; i++) if (fabs(w[i] - 2.0) > 0.1) return 11;
    csgd_simulation_free(sim);
    return 0;
}
"#;

fn which(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok()
}

#[test]
fn c_program_links_and_runs() {
    if !which("cc") {
        eprintln!("skipping: no C compiler");
        return;
    }
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    // target/<profile>/deps/<test binary>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcsgd_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout)
    );
}
