fn main() {
    let crate_dir = std::env::var("CARGO_MANIFEST_DIR").unwrap();
    let mut config = cbindgen::Config::default();
    config.language = cbindgen::Language::C;
    config.header = Some("/* C interface for the qntr quasi-Newton trust-region kernel. */".into());
    config.include_guard = Some("QNTR_H".into());
    config.cpp_compat = true;
    config.documentation = true;
    match cbindgen::Builder::new().with_crate(&crate_dir).with_config(config).generate() {
        Ok(bindings) => {
            bindings.write_to_file(format!("{crate_dir}/include/qntr.h"));
        }
        Err(e) => {
            // header generation must not break plain cargo builds
            println!("cargo:warning=cbindgen failed: {e}");
        }
    }
    println!("cargo:rerun-if-changed=src/lib.rs");
}
