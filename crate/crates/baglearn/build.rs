fn main() {
    // ndarray's "blas" feature leaves choosing the BLAS implementation to the
    // final link; use the system OpenBLAS.
    println!("cargo:rustc-link-lib=dylib=openblas");
}
