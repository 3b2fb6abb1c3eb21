//! Helpers for the plain-text artifact formats.
//!
//! All real values are serialized in scientific notation with 17 significant
//! digits, which round-trips every finite f64 exactly. Writers emit keys in
//! a fixed order so identical inputs produce byte-identical files.

use std::fmt::Write as _;

/// One f64 with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// JSON array of floats, 17 significant digits each.
pub fn fmt_f64_slice(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 26 + 2);
    s.push('[');
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v:.16e}");
    }
    s.push(']');
    s
}

/// JSON array of integers.
pub fn fmt_usize_slice(values: &[usize]) -> String {
    let mut s = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{v}");
    }
    s.push(']');
    s
}

/// JSON array of booleans.
pub fn fmt_bool_slice(values: &[bool]) -> String {
    let mut s = String::from("[");
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(if *v { "true" } else { "false" });
    }
    s.push(']');
    s
}
