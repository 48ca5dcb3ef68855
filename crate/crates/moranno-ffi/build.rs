use std::env;
use std::path::PathBuf;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");

    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let config = cbindgen::Config::from_file(crate_dir.join("cbindgen.toml"))
        .expect("cbindgen.toml should parse");
    let header = cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation should succeed");

    // The checked-in copy under include/ is what C consumers compile
    // against; OUT_DIR gets one too so builds work from a clean tree.
    let out = PathBuf::from(env::var("OUT_DIR").unwrap());
    header.write_to_file(out.join("moranno.h"));
    header.write_to_file(crate_dir.join("include").join("moranno.h"));
}
