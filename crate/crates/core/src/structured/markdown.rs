//! GitHub-style pipe tables with a lossless cell encoding.
//!
//! Cells are written as `| cell |`. Inside a cell, `\` becomes `\\`, `|`
//! becomes `\|`, a newline becomes `<br>`, and a literal `<br>` is written
//! `\<br>`, so parsing recovers every cell exactly.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TableError {
    #[error("table needs at least one column")]
    NoColumns,
    #[error("row {row} has {found} cells, header has {expected}")]
    Arity { row: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn escape_cell(cell: &str) -> String {
    let mut out = String::with_capacity(cell.len() + 2);
    let mut rest = cell;
    while let Some(c) = rest.chars().next() {
        if rest.starts_with("<br>") {
            out.push_str("\\<br>");
            rest = &rest[4..];
            continue;
        }
        match c {
            '\\' => out.push_str("\\\\"),
            '|' => out.push_str("\\|"),
            '\n' => out.push_str("<br>"),
            c => out.push(c),
        }
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn render_row(cells: &[String], out: &mut String) {
    out.push('|');
    for cell in cells {
        out.push(' ');
        out.push_str(&escape_cell(cell));
        out.push_str(" |");
    }
}

pub fn render_markdown_table(header: &[String], rows: &[Vec<String>]) -> Result<String, TableError> {
    if header.is_empty() {
        return Err(TableError::NoColumns);
    }
    if let Some((row, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != header.len()) {
        return Err(TableError::Arity {
            row,
            expected: header.len(),
            found: r.len(),
        });
    }
    let mut out = String::new();
    render_row(header, &mut out);
    out.push('\n');
    out.push('|');
    for _ in header {
        out.push_str(" --- |");
    }
    for row in rows {
        out.push('\n');
        render_row(row, &mut out);
    }
    Ok(out)
}

fn parse_row(line: &str, lineno: usize) -> Result<Vec<String>, TableError> {
    let err = |message: &str| TableError::Parse {
        line: lineno,
        message: message.to_string(),
    };
    let body = line
        .strip_prefix('|')
        .ok_or_else(|| err("row must start with '|'"))?;
    let mut cells = Vec::new();
    let mut raw = String::new();
    let mut chars = body.chars().peekable();
    let mut closed = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let next = chars.next().ok_or_else(|| err("dangling escape"))?;
                raw.push('\\');
                raw.push(next);
            }
            '|' => {
                cells.push(std::mem::take(&mut raw));
                closed = chars.peek().is_none();
            }
            c => raw.push(c),
        }
    }
    if !closed || !raw.is_empty() {
        return Err(err("row must end with '|'"));
    }
    cells
        .into_iter()
        .map(|cell| {
            let inner = cell
                .strip_prefix(' ')
                .and_then(|c| c.strip_suffix(' '))
                .ok_or_else(|| err("cell must be padded by single spaces"))?;
            unescape_cell(inner).ok_or_else(|| err("bad escape"))
        })
        .collect()
}

fn unescape_cell(cell: &str) -> Option<String> {
    let mut out = String::with_capacity(cell.len());
    let mut rest = cell;
    while let Some(c) = rest.chars().next() {
        if c == '\\' {
            let next = rest[1..].chars().next()?;
            match next {
                '\\' | '|' | '<' => out.push(next),
                _ => return None,
            }
            rest = &rest[1 + next.len_utf8()..];
        } else if rest.starts_with("<br>") {
            out.push('\n');
            rest = &rest[4..];
        } else {
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    Some(out)
}

/// Inverse of [`render_markdown_table`].
pub fn parse_markdown_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>), TableError> {
    let mut lines = text.split('\n');
    let header = parse_row(lines.next().unwrap_or_default(), 1)?;
    if header.is_empty() {
        return Err(TableError::NoColumns);
    }
    let delimiter = lines.next().ok_or(TableError::Parse {
        line: 2,
        message: "missing delimiter row".into(),
    })?;
    let expected: String = std::iter::once("|")
        .chain(std::iter::repeat_n(" --- |", header.len()))
        .collect();
    if delimiter != expected {
        return Err(TableError::Parse {
            line: 2,
            message: "malformed delimiter row".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = parse_row(line, i + 3)?;
        if row.len() != header.len() {
            return Err(TableError::Arity {
                row: i,
                expected: header.len(),
                found: row.len(),
            });
        }
        rows.push(row);
    }
    Ok((header, rows))
}
