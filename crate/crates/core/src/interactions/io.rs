use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{IdMaps, Interaction, InteractionStore};
use crate::error::{Error, Result};

/// Header names of the columns to read. `rating` and `timestamp` are used
/// only when present in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMap {
    pub user: String,
    pub item: String,
    pub rating: String,
    pub timestamp: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            user: "user".into(),
            item: "item".into(),
            rating: "rating".into(),
            timestamp: "timestamp".into(),
        }
    }
}

fn sniff_delimiter(path: &Path) -> Result<u8> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut first = String::new();
    BufReader::new(file)
        .read_line(&mut first)
        .map_err(|e| Error::io(path, e))?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

fn parse_int(field: &str, line: usize, column: &str) -> Result<i64> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column `{column}`: `{field}` is not an integer"),
    })
}

/// Reads a delimited file (tab or comma, detected from the header line) into a
/// deduplicated store with contiguous ids assigned in order of first appearance.
pub fn load_tsv(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<InteractionStore> {
    let path = path.as_ref();
    let delimiter = sniff_delimiter(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let user_col = col(&schema.user).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column `{}`", schema.user),
    })?;
    let item_col = col(&schema.item).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column `{}`", schema.item),
    })?;
    let rating_col = col(&schema.rating);
    let ts_col = col(&schema.timestamp);

    let mut ids = IdMaps::default();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: Vec<Interaction> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |c: usize, name: &str| {
            record.get(c).filter(|s| !s.is_empty()).ok_or_else(|| Error::Parse {
                line,
                message: format!("missing value for `{name}`"),
            })
        };
        let user = ids.users.intern(field(user_col, &schema.user)?);
        let item = ids.items.intern(field(item_col, &schema.item)?);
        let mut it = Interaction::new(user, item);
        if let Some(c) = rating_col {
            it.rating = Some(parse_int(field(c, &schema.rating)?, line, &schema.rating)?);
        }
        if let Some(c) = ts_col {
            it.timestamp = Some(parse_int(field(c, &schema.timestamp)?, line, &schema.timestamp)?);
        }
        match seen.get(&(user, item)) {
            Some(&k) => {
                if rows[k].rating != it.rating {
                    return Err(Error::Data(format!(
                        "line {line}: duplicate pair ({}, {}) with conflicting rating",
                        field(user_col, &schema.user)?,
                        field(item_col, &schema.item)?
                    )));
                }
            }
            None => {
                seen.insert((user, item), rows.len());
                rows.push(it);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyStore);
    }
    let (nu, ni) = (ids.users.len(), ids.items.len());
    InteractionStore::with_ids(nu, ni, rows, Arc::new(ids))
}

/// Sibling path holding hidden labels: `data.tsv` → `data.truth`.
pub fn truth_path(path: impl AsRef<Path>) -> PathBuf {
    path.as_ref().with_extension("truth")
}

fn ext_user(store: &InteractionStore, u: usize) -> String {
    store.ids().users.external(u).map(str::to_owned).unwrap_or_else(|| u.to_string())
}

fn ext_item(store: &InteractionStore, i: usize) -> String {
    store.ids().items.external(i).map(str::to_owned).unwrap_or_else(|| i.to_string())
}

/// Writes `user\titem[\trating][\ttimestamp]` with external ids.
pub fn write_tsv(store: &InteractionStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let ratings = !store.is_empty() && store.has_ratings();
    let stamps = !store.is_empty() && store.has_timestamps();
    let mut out = String::from("user\titem");
    if ratings {
        out.push_str("\trating");
    }
    if stamps {
        out.push_str("\ttimestamp");
    }
    out.push('\n');
    for it in store.interactions() {
        out.push_str(&ext_user(store, it.user));
        out.push('\t');
        out.push_str(&ext_item(store, it.item));
        if ratings {
            out.push_str(&format!("\t{}", it.rating.unwrap_or_default()));
        }
        if stamps {
            out.push_str(&format!("\t{}", it.timestamp.unwrap_or_default()));
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `user\titem\tobserved\ttruth` for every observed pair carrying a
/// hidden label and every hidden positive.
pub fn write_truth(store: &InteractionStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut rows: Vec<(usize, usize, u8, u8)> = store
        .interactions()
        .iter()
        .filter_map(|it| it.truth.map(|t| (it.user, it.item, 1, t as u8)))
        .collect();
    rows.extend(store.hidden_positives().iter().map(|&(u, i)| (u, i, 0, 1)));
    rows.sort_unstable();
    let mut out = String::from("user\titem\tobserved\ttruth\n");
    for (u, i, o, t) in rows {
        out.push_str(&format!("{}\t{}\t{o}\t{t}\n", ext_user(store, u), ext_item(store, i)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Attaches hidden labels from a truth file. Rows naming ids unknown to the
/// store are ignored.
pub fn load_truth(store: &InteractionStore, path: impl AsRef<Path>) -> Result<InteractionStore> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.split('\t').collect::<Vec<_>>() == ["user", "item", "observed", "truth"] => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header user\\titem\\tobserved\\ttruth".into(),
            })
        }
    }
    let mut labels: HashMap<(usize, usize), bool> = HashMap::new();
    let mut hidden = Vec::new();
    for (k, line) in lines {
        let line_no = k + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 4 columns, found {}", cols.len()),
            });
        }
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(Error::Parse {
                line: line_no,
                message: format!("expected 0/1, found `{s}`"),
            }),
        };
        let (observed, truth) = (flag(cols[2])?, flag(cols[3])?);
        let (Some(u), Some(i)) = (store.ids().users.internal(cols[0]), store.ids().items.internal(cols[1])) else {
            continue;
        };
        if observed {
            labels.insert((u, i), truth);
        } else if truth {
            hidden.push((u, i));
        }
    }
    let rows = store
        .interactions()
        .iter()
        .map(|it| {
            let mut it = it.clone();
            if let Some(&t) = labels.get(&(it.user, it.item)) {
                it.truth = Some(t);
            }
            it
        })
        .collect();
    store.subset(rows)?.with_hidden_positives(hidden)
}
