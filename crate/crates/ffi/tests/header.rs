//! The generated header must compile as C, and a C caller must be able to
//! link against the static library when it has been built.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "stbpu.h"

int main(void) {
    StbpuConfig *cfg = NULL;
    StbpuTrace *trace = NULL;
    StbpuReport *rep = NULL;
    StbpuSummary s;
    if (stbpu_config_new("stbpu", true, &cfg) != STBPU_STATUS_OK) return 1;
    if (stbpu_trace_synth("loop", 0, 1, &trace) != STBPU_STATUS_OK) return 2;
    if (stbpu_simulate(cfg, trace, 0.05, 1, &rep) != STBPU_STATUS_OK) return 3;
    if (stbpu_report_summary(rep, &s) != STBPU_STATUS_OK) return 4;
    if (stbpu_config_new("bogus", false, &cfg) != STBPU_STATUS_INVALID_ARGUMENT) return 5;
    if (strlen(stbpu_last_error()) == 0) return 6;
    printf("%llu %.4f\n", (unsigned long long)s.branches, s.oae);
    stbpu_report_free(rep);
    stbpu_trace_free(trace);
    stbpu_config_free(cfg);
    return 0;
}
"#;

fn include_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include")
}

fn cc() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok().map(|_| cc)
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(include_dir().join("stbpu.h")).unwrap();
    for name in ["stbpu_config_new", "stbpu_simulate", "stbpu_last_error", "STBPU_STATUS_PANIC", "typedef struct StbpuTrace StbpuTrace"] {
        assert!(h.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_compiles_and_runs() {
    let Some(cc) = cc() else {
        eprintln!("no C compiler; skipped");
        return;
    };
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("stbpu-header");
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let obj = dir.join("main.o");
    let st = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-c"])
        .arg("-I")
        .arg(include_dir())
        .arg(&src)
        .arg("-o")
        .arg(&obj)
        .status()
        .unwrap();
    assert!(st.success(), "header does not compile as C99");

    // target/<profile>/deps/<test> → target/<profile>
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(Path::parent).unwrap().join("libstbpu_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; link step skipped", lib.display());
        return;
    }
    let bin = dir.join("main");
    let st = Command::new(&cc)
        .arg(&obj)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "link failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "C caller exited with {:?}", out.status.code());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("8000 "), "{text}");
}
