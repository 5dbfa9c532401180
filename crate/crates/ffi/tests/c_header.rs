use std::path::{Path, PathBuf};
use std::process::Command;

fn target_dir() -> PathBuf {
    // <target>/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/evbench.h")).unwrap();
    for name in [
        "evb_version",
        "evb_last_error_message",
        "evb_event_stream_load",
        "evb_event_stream_from_arrays",
        "evb_event_stream_len",
        "evb_event_stream_free",
        "evb_voxel_grid_build",
        "evb_voxel_grid_data",
        "evb_voxel_grid_free",
        "evb_mse",
        "evb_ssim",
        "EVB_STATUS_NULL_POINTER = 1",
        "typedef struct EvbEventStream EvbEventStream;",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
}

#[test]
fn c_program_links_against_the_static_library() {
    let lib = target_dir().join("libevbench_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), format!("{} 5x3x4 1.000 2", evbench::VERSION));
}
