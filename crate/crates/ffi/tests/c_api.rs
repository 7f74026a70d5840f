use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use talentgraph_ffi::*;

fn last_error() -> String {
    let p = tg_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_str().unwrap().to_string()
}

fn cstr(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

#[test]
fn similarity_point_values() {
    let mut w = f64::NAN;
    unsafe {
        assert_eq!(tg_similarity(0.0, 2.0, 0.2, &mut w), TgStatus::Ok);
        assert_eq!(w, 0.0);
        assert_eq!(tg_similarity(1.0, 2.0, 0.2, &mut w), TgStatus::Ok);
        assert!((w - (0.8 - (-2.0f64).exp())).abs() < 1e-12);
        assert_eq!(tg_similarity(0.05, 2.0, 0.2, &mut w), TgStatus::Ok);
        assert_eq!(w, 0.0);
    }
    assert!(tg_last_error_message().is_null());
    assert_eq!(tg_last_error_length(), 0);
}

#[test]
fn errors_are_reported_per_thread() {
    let mut w = 0.0;
    let status = unsafe { tg_similarity(1.5, 2.0, 0.2, &mut w) };
    assert_eq!(status, TgStatus::Validation);
    let msg = last_error();
    assert!(msg.contains("1.5"), "{msg}");
    assert_eq!(tg_last_error_length(), msg.len());

    std::thread::spawn(|| assert!(tg_last_error_message().is_null()))
        .join()
        .unwrap();

    assert_eq!(unsafe { tg_similarity(0.5, 2.0, 0.2, ptr::null_mut()) }, TgStatus::NullArgument);
    assert_eq!(unsafe { tg_similarity(0.5, -1.0, 0.2, &mut w) }, TgStatus::Validation);
}

#[test]
fn null_handles_are_harmless() {
    unsafe {
        tg_run_close(ptr::null_mut());
        tg_graph_free(ptr::null_mut());
        tg_model_free(ptr::null_mut());
        assert_eq!(tg_graph_node_count(ptr::null()), 0);
        assert_eq!(tg_model_selection_count(ptr::null()), 0);
        assert_eq!(tg_run_warning_count(ptr::null()), 0);
        let mut n = 0;
        assert_eq!(tg_graph_edge_count(ptr::null(), 0, &mut n), TgStatus::NullArgument);
    }
    let v = unsafe { CStr::from_ptr(tg_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn missing_files_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.ckpt");
    let mut model = ptr::null_mut();
    let status = unsafe { tg_model_load(cstr(&ckpt).as_ptr(), &mut model) };
    assert_eq!(status, TgStatus::MissingInput);
    assert!(model.is_null());
    assert!(last_error().contains("model.ckpt"));

    let mut run = ptr::null_mut();
    let run_dir = dir.path().join("run");
    unsafe {
        assert_eq!(tg_run_open(cstr(&run_dir).as_ptr(), ptr::null(), &mut run), TgStatus::Ok);
        let stage = CString::new("evaluate").unwrap();
        assert_eq!(tg_run_stage(run, stage.as_ptr()), TgStatus::MissingInput);
        assert!(last_error().contains("model.ckpt"));
        let bogus = CString::new("deploy").unwrap();
        assert_eq!(tg_run_stage(run, bogus.as_ptr()), TgStatus::Validation);
        tg_run_close(run);
    }
}

#[test]
fn run_directory_lock_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let path = cstr(dir.path());
    let (mut a, mut b) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(tg_run_open(path.as_ptr(), ptr::null(), &mut a), TgStatus::Ok);
        assert_eq!(tg_run_open(path.as_ptr(), ptr::null(), &mut b), TgStatus::Locked);
        assert!(b.is_null());
        tg_run_close(a);
        assert_eq!(tg_run_open(path.as_ptr(), ptr::null(), &mut b), TgStatus::Ok);
        tg_run_close(b);
    }
}

#[test]
fn stages_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        r#"{"synth": {"num_candidates": 60, "num_selections": 2}, "graph": {"theta": 0.999}, "train": {"epochs": 5}}"#,
    )
    .unwrap();
    let mut run = ptr::null_mut();
    unsafe {
        let status = tg_run_open(cstr(dir.path()).as_ptr(), cstr(&config).as_ptr(), &mut run);
        assert_eq!(status, TgStatus::Ok, "{}", last_error());
        for stage in ["synth", "embed", "build-graph"] {
            let s = CString::new(stage).unwrap();
            assert_eq!(tg_run_stage(run, s.as_ptr()), TgStatus::Ok, "{stage}: {}", last_error());
        }
        assert_eq!(tg_run_warning_count(run), 1);
        let w = CStr::from_ptr(tg_run_warning(run, 0)).to_str().unwrap();
        assert!(w.starts_with("build-graph: graph has no edges"), "{w}");
        assert!(tg_run_warning(run, 1).is_null());
        let s = CString::new("train").unwrap();
        assert_eq!(tg_run_stage(run, s.as_ptr()), TgStatus::Ok, "{}", last_error());
        tg_run_close(run);

        let mut graph = ptr::null_mut();
        assert_eq!(tg_graph_load(cstr(&dir.path().join("graph.jsonl")).as_ptr(), &mut graph), TgStatus::Ok);
        assert_eq!(tg_graph_node_count(graph), 60);
        for c in 0..5 {
            let mut n = usize::MAX;
            assert_eq!(tg_graph_edge_count(graph, c, &mut n), TgStatus::Ok);
            assert_eq!(n, 0);
        }
        let mut n = 0;
        assert_eq!(tg_graph_edge_count(graph, 5, &mut n), TgStatus::Validation);
        tg_graph_free(graph);

        let mut model = ptr::null_mut();
        assert_eq!(tg_model_load(cstr(&dir.path().join("model.ckpt")).as_ptr(), &mut model), TgStatus::Ok);
        assert_eq!(tg_model_selection_count(model), 2);
        assert_eq!(tg_model_is_ordinal(model), 0);
        assert!(tg_model_parameter_count(model) > 0);
        tg_model_free(model);
    }
}

fn target_dir() -> PathBuf {
    // tests/<name>-<hash> lives in target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = target_dir().join("libtalentgraph_ffi.a");
    if !lib.exists() {
        eprintln!("{} not built; skipping", lib.display());
        return;
    }
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        r#"
#include <math.h>
#include <stdio.h>
#include "talentgraph.h"

int main(void) {
    double w = -1.0;
    if (tg_similarity(1.0, 2.0, 0.2, &w) != TG_STATUS_OK) return 1;
    if (fabs(w - (0.8 - exp(-2.0))) > 1e-12) return 2;
    if (tg_similarity(2.0, 2.0, 0.2, &w) != TG_STATUS_VALIDATION) return 3;
    if (tg_last_error_message() == NULL || tg_last_error_length() == 0) return 4;
    TgModel *m = NULL;
    if (tg_model_load("/nonexistent/model.ckpt", &m) != TG_STATUS_MISSING_INPUT || m != NULL) return 5;
    printf("%s\n", tg_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("probe");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C probe failed to build");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "probe exited with {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
