//! Line-delimited history snapshots.
//!
//! ```text
//! # recloop-history v1
//! users=100 items=100 n=1 quota=per_user mode=no_repeat seed=7 horizon=50
//! s,u,i,a,r,p
//! 1,0,17,1,3.25,0.01
//! ```
//!
//! One record per recommended pair, columns `s,u,i,a,r,p` in that order.
//! Indices are zero-based, steps one-based. Floats use the shortest
//! representation that parses back to the same bits. Propensity tables and
//! fitted parameters are not part of the snapshot.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::history::{HistoryConfig, InteractionHistory, Observation, StepQuota};

const MAGIC: &str = "# recloop-history v1";
const COLUMNS: &str = "s,u,i,a,r,p";

pub fn write_snapshot<W: Write>(history: &InteractionHistory, mut out: W) -> std::io::Result<()> {
    let c = history.config();
    let (quota, n) = match c.quota {
        StepQuota::PerUser(n) => ("per_user", n),
        StepQuota::Total(n) => ("total", n),
    };
    let mode = if c.no_repeat { "no_repeat" } else { "repeat" };
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "users={} items={} n={} quota={} mode={} seed={} horizon={}",
        c.users,
        c.items,
        n,
        quota,
        mode,
        c.seed,
        history.horizon()
    )?;
    writeln!(out, "{COLUMNS}")?;
    for o in history.observations() {
        writeln!(
            out,
            "{},{},{},1,{},{}",
            o.step, o.user, o.item, o.rating, o.propensity
        )?;
    }
    Ok(())
}

pub fn snapshot_string(history: &InteractionHistory) -> String {
    let mut buf = Vec::new();
    write_snapshot(history, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("snapshot is ASCII")
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Snapshot {
        line,
        reason: reason.into(),
    }
}

fn field<T: std::str::FromStr>(line: usize, raw: &str, name: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| parse_err(line, format!("bad value {raw:?} for {name}")))
}

pub fn read_snapshot<R: BufRead>(input: R) -> Result<InteractionHistory> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n + 1, l)),
            Some((n, Err(e))) => Err(parse_err(n + 1, e.to_string())),
            None => Err(parse_err(0, format!("missing {what}"))),
        }
    };

    let (n, magic) = next("magic line")?;
    if magic.trim_end() != MAGIC {
        return Err(parse_err(n, "not a recloop history snapshot"));
    }
    let (n, header) = next("header")?;
    let mut users = None;
    let mut items = None;
    let mut per_step = None;
    let mut quota = None;
    let mut no_repeat = None;
    let mut seed = None;
    let mut horizon = None;
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| parse_err(n, format!("expected key=value, got {kv:?}")))?;
        match k {
            "users" => users = Some(field::<usize>(n, v, k)?),
            "items" => items = Some(field::<usize>(n, v, k)?),
            "n" => per_step = Some(field::<usize>(n, v, k)?),
            "quota" => quota = Some(v.to_string()),
            "mode" => {
                no_repeat = Some(match v {
                    "no_repeat" => true,
                    "repeat" => false,
                    _ => return Err(parse_err(n, format!("unknown mode {v:?}"))),
                })
            }
            "seed" => seed = Some(field::<u64>(n, v, k)?),
            "horizon" => horizon = Some(field::<usize>(n, v, k)?),
            _ => return Err(parse_err(n, format!("unknown header key {k:?}"))),
        }
    }
    let missing = |name: &str| parse_err(n, format!("header lacks {name}"));
    let per_step = per_step.ok_or_else(|| missing("n"))?;
    let quota = match quota.as_deref() {
        Some("per_user") => StepQuota::PerUser(per_step),
        Some("total") => StepQuota::Total(per_step),
        Some(other) => return Err(parse_err(n, format!("unknown quota {other:?}"))),
        None => return Err(missing("quota")),
    };
    let config = HistoryConfig {
        users: users.ok_or_else(|| missing("users"))?,
        items: items.ok_or_else(|| missing("items"))?,
        quota,
        no_repeat: no_repeat.ok_or_else(|| missing("mode"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    };
    let horizon = horizon.ok_or_else(|| missing("horizon"))?;

    let (n, columns) = next("column line")?;
    if columns.trim_end() != COLUMNS {
        return Err(parse_err(n, format!("expected columns {COLUMNS:?}")));
    }

    let mut observations = Vec::new();
    for (idx, line) in lines {
        let n = idx + 1;
        let line = line.map_err(|e| parse_err(n, e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(parse_err(n, format!("expected 6 columns, got {}", cols.len())));
        }
        if cols[3] != "1" {
            return Err(parse_err(n, "records must have a=1"));
        }
        observations.push(Observation {
            step: field(n, cols[0], "s")?,
            user: field(n, cols[1], "u")?,
            item: field(n, cols[2], "i")?,
            rating: field(n, cols[4], "r")?,
            propensity: field(n, cols[5], "p")?,
        });
    }
    if observations.iter().any(|o| o.step == 0 || o.step > horizon) {
        return Err(parse_err(0, "record step outside 1..=horizon"));
    }
    InteractionHistory::from_observations(config, horizon, &observations)
}
