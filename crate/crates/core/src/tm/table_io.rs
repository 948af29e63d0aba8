//! Plain-text table files:
//!
//! ```text
//! ctm-table v1
//! n_states,n_symbols,budget,formalism,total,halted
//! output,count
//! ...
//! checksum,<sha256 hex of every preceding byte>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::census::{OutputFrequencyTable, SpaceId};
use crate::error::{Error, Result};

pub const TABLE_HEADER: &str = "ctm-table v1";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

pub fn table_to_string(table: &OutputFrequencyTable) -> String {
    let s = &table.space;
    let mut body = format!(
        "{TABLE_HEADER}\n{},{},{},{},{},{}\n",
        s.n_states, s.n_symbols, s.budget, s.formalism, table.total_machines, table.halted_machines
    );
    for (output, count) in table.sorted_rows() {
        let _ = writeln!(body, "{output},{count}");
    }
    let sum = sha256_hex(body.as_bytes());
    let _ = writeln!(body, "checksum,{sum}");
    body
}

fn bad(msg: impl Into<String>) -> Error {
    Error::TableFormat(msg.into())
}

fn field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse().map_err(|_| bad(format!("bad {what}: {s:?}")))
}

pub fn table_from_str(text: &str) -> Result<OutputFrequencyTable> {
    let header = text.lines().next().ok_or_else(|| bad("empty table file"))?;
    if header != TABLE_HEADER {
        return match header.strip_prefix("ctm-table ") {
            Some(v) => Err(Error::VersionMismatch {
                expected: "v1".into(),
                found: v.to_string(),
            }),
            None => Err(bad(format!("missing header, found {header:?}"))),
        };
    }
    let trimmed = text.strip_suffix('\n').ok_or_else(|| bad("missing final newline"))?;
    let cut = trimmed.rfind('\n').ok_or_else(|| bad("missing checksum line"))? + 1;
    let (body, last) = trimmed.split_at(cut);
    let recorded = last
        .strip_prefix("checksum,")
        .ok_or_else(|| bad("missing checksum line"))?;
    let computed = sha256_hex(body.as_bytes());
    if recorded != computed {
        return Err(Error::ChecksumMismatch {
            recorded: recorded.to_string(),
            computed,
        });
    }

    let mut lines = body.lines().skip(1);
    let meta: Vec<&str> = lines
        .next()
        .ok_or_else(|| bad("missing metadata line"))?
        .split(',')
        .collect();
    if meta.len() != 6 {
        return Err(bad(format!("metadata has {} fields, expected 6", meta.len())));
    }
    let space = SpaceId {
        n_states: field(meta[0], "n_states")?,
        n_symbols: field(meta[1], "n_symbols")?,
        budget: field(meta[2], "budget")?,
        formalism: meta[3].to_string(),
    };
    let total_machines = field(meta[4], "total")?;
    let halted_machines = field(meta[5], "halted")?;

    let mut counts = BTreeMap::new();
    let mut prev: Option<(u64, String)> = None;
    for (i, line) in lines.enumerate() {
        let (output, count) = line.split_once(',').ok_or_else(|| bad(format!("row {i}: {line:?}")))?;
        if output.is_empty() || !output.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad(format!("row {i}: bad output {output:?}")));
        }
        let count: u64 = field(count, "count")?;
        if let Some((pc, po)) = &prev {
            if count > *pc || (count == *pc && output <= po.as_str()) {
                return Err(bad(format!("row {i}: rows out of order")));
            }
        }
        if counts.insert(output.to_string(), count).is_some() {
            return Err(bad(format!("row {i}: duplicate output {output}")));
        }
        prev = Some((count, output.to_string()));
    }
    let table = OutputFrequencyTable {
        space,
        total_machines,
        halted_machines,
        counts,
    };
    table.check_consistent()?;
    Ok(table)
}

pub fn persist_table(table: &OutputFrequencyTable, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    // Write then rename so readers never see a half-written table.
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(name);
    fs::write(&tmp, table_to_string(table))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_table(path: &Path) -> Result<OutputFrequencyTable> {
    table_from_str(&fs::read_to_string(path)?)
}

/// Checksum recorded on the last line of a table file.
pub fn table_checksum(table: &OutputFrequencyTable) -> String {
    let text = table_to_string(table);
    let body_len = text.trim_end().rfind('\n').map_or(0, |i| i + 1);
    sha256_hex(&text.as_bytes()[..body_len])
}
