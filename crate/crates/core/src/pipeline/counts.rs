//! Count-histogram text files: one `k,frequency` pair per line, with an
//! optional header and `#` comments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const COUNT_HEADER: &str = "k,frequency";

pub fn parse_count_histogram(text: &str) -> Result<BTreeMap<u64, u64>> {
    let mut out = BTreeMap::new();
    let mut seen_data = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if !seen_data && line.replace(' ', "") == COUNT_HEADER {
            seen_data = true;
            continue;
        }
        seen_data = true;
        let bad = |what: &str| Error::Format(format!("line {}: {what}: {raw:?}", i + 1));
        let (k, f) = line
            .split_once(',')
            .ok_or_else(|| bad("expected `k,frequency`"))?;
        let k: u64 = k
            .trim()
            .parse()
            .map_err(|_| bad("count is not a non-negative integer"))?;
        let f: u64 = f
            .trim()
            .parse()
            .map_err(|_| bad("frequency is not a non-negative integer"))?;
        if out.insert(k, f).is_some() {
            return Err(bad("duplicate count"));
        }
    }
    Ok(out)
}

pub fn format_count_histogram(h: &BTreeMap<u64, u64>) -> String {
    let mut s = String::from(COUNT_HEADER);
    s.push('\n');
    for (k, f) in h {
        writeln!(s, "{k},{f}").unwrap();
    }
    s
}
