//! JSON and CSV rendering. Both the CLI and the service go through here, so
//! identical requests produce identical bytes.

use serde::Serialize;

/// Pretty JSON with a trailing newline. Non-finite numbers become `null`.
pub fn render_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable output");
    s.push('\n');
    s
}

/// Shortest round-trip decimal; `NaN` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        x.to_string()
    }
}

pub fn opt(x: Option<f64>) -> String {
    num(x.unwrap_or(f64::NAN))
}

/// CSV with LF line endings.
pub fn render_csv<I, R>(header: &[&str], rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
