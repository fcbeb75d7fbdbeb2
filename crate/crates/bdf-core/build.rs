fn main() {
    // Prefer pkg-config (knows the openblas-pthread search path on Debian);
    // fall back to a bare -lopenblas for other layouts.
    if pkg_config::probe_library("openblas").is_err() {
        println!("cargo:rustc-link-lib=dylib=openblas");
    }
}
