//! On-disk formats: the bits JSONL input, generic JSONL emission, CSV
//! emission for plot-ready grids, and content hashing for audit trails.

use crate::collect::fnv1a64;
use crate::error::{Error, Result};
use crate::moments::CorrectnessMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::path::Path;

/// One line of the bits input: per-example repeat outcomes for one policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitsRecord {
    pub example_id: String,
    pub policy: String,
    pub bits: Vec<u8>,
}

/// Parse newline-delimited bits records, grouping rows into one matrix per
/// policy (first-appearance order). Blank lines are skipped; every
/// diagnostic carries its 1-based line number.
pub fn parse_bits_jsonl(text: &str) -> Result<Vec<CorrectnessMatrix>> {
    struct Group {
        ids: Vec<String>,
        bits: Vec<Vec<u8>>,
        seen: HashSet<String>,
        first_line: usize,
        k: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Group> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: BitsRecord = serde_json::from_str(raw).map_err(|e| Error::Input {
            line,
            msg: format!("malformed record: {e}"),
        })?;
        if rec.bits.is_empty() {
            return Err(Error::Input {
                line,
                msg: format!("example '{}' has no bits", rec.example_id),
            });
        }
        if let Some(&bad) = rec.bits.iter().find(|&&b| b > 1) {
            return Err(Error::Input {
                line,
                msg: format!("bit value {bad} is not 0 or 1"),
            });
        }
        let group = groups.entry(rec.policy.clone()).or_insert_with(|| {
            order.push(rec.policy.clone());
            Group {
                ids: Vec::new(),
                bits: Vec::new(),
                seen: HashSet::new(),
                first_line: line,
                k: rec.bits.len(),
            }
        });
        if rec.bits.len() != group.k {
            return Err(Error::Input {
                line,
                msg: format!(
                    "policy '{}' has {} repeats here but {} at line {}",
                    rec.policy,
                    rec.bits.len(),
                    group.k,
                    group.first_line
                ),
            });
        }
        if !group.seen.insert(rec.example_id.clone()) {
            return Err(Error::Input {
                line,
                msg: format!(
                    "duplicate example '{}' for policy '{}'",
                    rec.example_id, rec.policy
                ),
            });
        }
        group.ids.push(rec.example_id);
        group.bits.push(rec.bits);
    }
    if order.is_empty() {
        return Err(Error::Input {
            line: 0,
            msg: "input contains no records".into(),
        });
    }
    order
        .into_iter()
        .map(|policy| {
            let g = groups.remove(&policy).expect("grouped above");
            CorrectnessMatrix::new(policy, g.ids, g.bits)
        })
        .collect()
}

pub fn read_bits_jsonl(path: &Path) -> Result<Vec<CorrectnessMatrix>> {
    parse_bits_jsonl(&std::fs::read_to_string(path)?)
}

pub fn matrices_to_jsonl(matrices: &[CorrectnessMatrix]) -> Result<String> {
    let mut out = String::new();
    for m in matrices {
        for (id, bits) in m.example_ids.iter().zip(&m.bits) {
            let rec = BitsRecord {
                example_id: id.clone(),
                policy: m.policy_id.clone(),
                bits: bits.clone(),
            };
            out.push_str(&serde_json::to_string(&rec)?);
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_bits_jsonl(path: &Path, matrices: &[CorrectnessMatrix]) -> Result<()> {
    std::fs::write(path, matrices_to_jsonl(matrices)?)?;
    Ok(())
}

/// Serialize records one per line (transcripts, failure manifests).
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn csv_field(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn csv_to_string(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    out.push_str(&header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|f| csv_field(f)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    std::fs::write(path, csv_to_string(header, rows))?;
    Ok(())
}

/// Stable 64-bit content hash (FNV-1a), hex-encoded, for audit trails.
pub fn content_hash_hex(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a64(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{"example_id":"a","policy":"p1","bits":[1,0,1]}
{"example_id":"b","policy":"p1","bits":[0,1,1]}
{"example_id":"a","policy":"p2","bits":[1,1]}

{"example_id":"b","policy":"p2","bits":[1,0]}
"#;

    #[test]
    fn parses_and_groups_by_policy_in_first_appearance_order() {
        let mats = parse_bits_jsonl(SAMPLE).unwrap();
        assert_eq!(mats.len(), 2);
        assert_eq!(mats[0].policy_id, "p1");
        assert_eq!(mats[0].k_repeats(), 3);
        assert_eq!(mats[0].bits, vec![vec![1, 0, 1], vec![0, 1, 1]]);
        assert_eq!(mats[1].policy_id, "p2");
        assert_eq!(mats[1].example_ids, vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn round_trips_through_jsonl() {
        let mats = parse_bits_jsonl(SAMPLE).unwrap();
        let text = matrices_to_jsonl(&mats).unwrap();
        let again = parse_bits_jsonl(&text).unwrap();
        assert_eq!(mats, again);
    }

    fn expect_line(input: &str, want_line: usize, want_frag: &str) {
        match parse_bits_jsonl(input) {
            Err(Error::Input { line, msg }) => {
                assert_eq!(line, want_line, "{msg}");
                assert!(msg.contains(want_frag), "msg {msg:?} lacks {want_frag:?}");
            }
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_carry_line_numbers() {
        expect_line("not json\n", 1, "malformed");
        expect_line(
            "{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[1]}\nnot json\n",
            2,
            "malformed",
        );
        expect_line(
            "{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[]}\n",
            1,
            "no bits",
        );
        expect_line(
            "{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[2]}\n",
            1,
            "not 0 or 1",
        );
        expect_line(
            "{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[1,1]}\n{\"example_id\":\"b\",\"policy\":\"p\",\"bits\":[1]}\n",
            2,
            "repeats",
        );
        expect_line(
            "{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[1]}\n{\"example_id\":\"a\",\"policy\":\"p\",\"bits\":[0]}\n",
            2,
            "duplicate",
        );
        expect_line("", 0, "no records");
        expect_line("\n  \n", 0, "no records");
    }

    #[test]
    fn csv_escapes_only_where_needed() {
        let text = csv_to_string(
            &["policy", "mu"],
            &[
                vec!["plain".into(), "0.5".into()],
                vec!["has,comma".into(), "0.25".into()],
                vec!["has\"quote".into(), "1".into()],
            ],
        );
        assert_eq!(
            text,
            "policy,mu\nplain,0.5\n\"has,comma\",0.25\n\"has\"\"quote\",1\n"
        );
    }

    #[test]
    fn content_hash_is_stable() {
        assert_eq!(content_hash_hex(b""), "cbf29ce484222325");
        assert_eq!(content_hash_hex(b"foobar"), "85944171f73967e8");
        assert_ne!(content_hash_hex(b"a"), content_hash_hex(b"b"));
    }

    #[test]
    fn file_round_trip_via_tempdir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bits.jsonl");
        let mats = parse_bits_jsonl(SAMPLE).unwrap();
        write_bits_jsonl(&path, &mats).unwrap();
        let again = read_bits_jsonl(&path).unwrap();
        assert_eq!(mats, again);
    }
}
