//! Benchmark-only crate. The measurements live in `benches/`; this
//! library exists so cargo has a crate to attach them to.
