//! The generated C header must stand alone under a plain C compiler.

use std::process::Command;

#[test]
fn generated_header_is_valid_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/norst.h");
    assert!(
        std::path::Path::new(header).exists(),
        "header not generated at {header}"
    );
    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok());
    let Some(cc) = cc else {
        eprintln!("no C compiler available; skipping syntax check");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use_header.c");
    std::fs::write(
        &src,
        format!("#include \"{header}\"\nint main(void) {{ return (int)NorstStatus_Ok; }}\n"),
    )
    .unwrap();
    let out = Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror"])
        .arg(&src)
        .output()
        .expect("compiler invocation");
    assert!(
        out.status.success(),
        "header failed C compilation:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
