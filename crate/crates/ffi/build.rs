//! Regenerates `include/zr_stefan.h` from the exported items.

fn main() {
    let dir = std::env::var("CARGO_MANIFEST_DIR").expect("set by cargo");
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let config = cbindgen::Config::from_file(format!("{dir}/cbindgen.toml")).expect("cbindgen.toml parses");
    match cbindgen::generate_with_config(&dir, config) {
        Ok(bindings) => {
            bindings.write_to_file(format!("{dir}/include/zr_stefan.h"));
        }
        // A syntax error in the crate is reported by rustc itself.
        Err(e) => println!("cargo:warning=header not regenerated: {e}"),
    }
}
