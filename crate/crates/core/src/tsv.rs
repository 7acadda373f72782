//! Minimal TSV reading/writing shared by the file formats.
//!
//! Fields are never quoted. Tabs, newlines, carriage returns and backslashes
//! inside text fields are written as `\t`, `\n`, `\r` and `\\`.

/// Escapes a text field for a TSV cell.
pub fn escape(field: &str) -> String {
    if !field.contains(['\t', '\n', '\r', '\\']) {
        return field.to_string();
    }
    let mut out = String::with_capacity(field.len() + 4);
    for c in field.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape(field: &str) -> String {
    if !field.contains('\\') {
        return field.to_string();
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// A data row with its 1-based line number.
pub type Row = (usize, Vec<String>);

/// Splits `lines` into rows after checking the header. Returns 1-based line
/// numbers with each row; blank lines are skipped.
pub fn parse_table(
    lines: &[String],
    header: &[&str],
) -> Result<Vec<Row>, (usize, String)> {
    let first = lines
        .first()
        .ok_or((1, "missing header line".to_string()))?;
    let got: Vec<&str> = first.trim_end_matches('\r').split('\t').collect();
    if got != header {
        return Err((1, format!("expected header {:?}, found {:?}", header, got)));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(unescape).collect();
        if fields.len() != header.len() {
            return Err((
                i + 1,
                format!("expected {} fields, found {}", header.len(), fields.len()),
            ));
        }
        rows.push((i + 1, fields));
    }
    Ok(rows)
}

/// Like [`parse_table`] but maps columns by name, allowing any column order
/// and extra columns. Missing required columns are an error.
pub fn parse_named(
    lines: &[String],
    required: &[&str],
) -> Result<Vec<Row>, (usize, String)> {
    let first = lines
        .first()
        .ok_or((1, "missing header line".to_string()))?;
    let cols: Vec<&str> = first.trim_end_matches('\r').split('\t').collect();
    let mut index = Vec::with_capacity(required.len());
    for name in required {
        match cols.iter().position(|c| c == name) {
            Some(i) => index.push(i),
            None => return Err((1, format!("missing column {name:?}"))),
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.iter().enumerate().skip(1) {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols.len() {
            return Err((
                i + 1,
                format!("expected {} fields, found {}", cols.len(), fields.len()),
            ));
        }
        rows.push((i + 1, index.iter().map(|&j| unescape(fields[j])).collect()));
    }
    Ok(rows)
}
