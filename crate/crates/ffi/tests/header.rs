//! The generated header compiles as C and as C++ and declares every export.

use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/zr_stefan.h")
}

fn compiles_with(compiler: &str, lang: &str) -> Option<bool> {
    let dir = tempfile::tempdir().expect("temp dir");
    let src = dir.path().join(if lang == "c" { "probe.c" } else { "probe.cpp" });
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ ZrsThermo *h = 0; double x; \
             ZrsStatus s = zrs_thermo_new(ZRS_RATE_LINEAR, 0.0, 1.0, &h); \
             s = zrs_thermo_phi(h, 0.5, &x); zrs_thermo_free(h); return (int)s; }}\n",
            header().display()
        ),
    )
    .unwrap();
    let status = Command::new(compiler).args(["-fsyntax-only", "-Wall", "-Werror"]).arg(&src).status().ok()?;
    Some(status.success())
}

#[test]
fn header_is_valid_c_and_cpp() {
    for (compiler, lang) in [("cc", "c"), ("c++", "cpp")] {
        match compiles_with(compiler, lang) {
            Some(ok) => assert!(ok, "{compiler} rejected the header"),
            None => eprintln!("{compiler} not available; skipping"),
        }
    }
}

#[test]
fn header_declares_all_exports() {
    let text = std::fs::read_to_string(header()).unwrap();
    let lib = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = lib
        .split("pub extern \"C\" fn ")
        .skip(1)
        .map(|s| s.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(text.contains(&format!("{name}(")), "{name} missing from header");
    }
    for code in ["ZRS_STATUS_OK", "ZRS_STATUS_NULL_POINTER", "ZRS_STATUS_PANIC"] {
        assert!(text.contains(code));
    }
}
