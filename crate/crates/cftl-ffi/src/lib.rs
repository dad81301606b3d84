//! C ABI surface for the cftl library (placeholder while the core lands).
