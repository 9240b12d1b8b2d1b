use std::path::Path;

use bsp_core::mechanism::{execute, execute_sampled, Bid, BidId, BlockOutcome, MechanismParams, Owner};
use bsp_core::rational::{format_rational, parse_rational, serde_rational, Rational};
use serde::Serialize;

use crate::config::{missing, Experiment};
use crate::output::write_json;
use crate::{CliError, RunOutcome};

pub const MEMPOOL_COLUMNS: [&str; 5] = ["id", "owner", "value", "amount", "fake"];

fn parse_owner(s: &str) -> Option<Owner> {
    match s {
        "miner" => Some(Owner::Miner),
        _ => s
            .strip_prefix("user:")
            .unwrap_or(s)
            .parse()
            .ok()
            .map(Owner::User),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "" | "0" | "false" | "no" => Some(false),
        "1" | "true" | "yes" => Some(true),
        _ => None,
    }
}

/// Parses a mempool CSV. Lines starting with `#` and blank lines are skipped;
/// the first remaining line must be the column header.
pub fn parse_mempool(text: &str, params: &MechanismParams, name: &str) -> Result<Vec<Bid>, CliError> {
    let err = |line: usize, msg: String| CliError::Config(format!("{name}:{line}: {msg}"));
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = rows.next().ok_or_else(|| err(1, "empty mempool".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != MEMPOOL_COLUMNS {
        return Err(err(hline, format!("header must be `{}`", MEMPOOL_COLUMNS.join(","))));
    }
    let mut bids: Vec<Bid> = Vec::new();
    for (line, row) in rows {
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != MEMPOOL_COLUMNS.len() {
            return Err(err(line, format!("expected 5 fields, found {}", f.len())));
        }
        let id: u32 = f[0].parse().map_err(|_| err(line, format!("bad id `{}`", f[0])))?;
        let owner = parse_owner(f[1]).ok_or_else(|| err(line, format!("bid {id}: bad owner `{}`", f[1])))?;
        let number = |field: &str, s: &str| -> Result<Rational, CliError> {
            parse_rational(s).map_err(|e| err(line, format!("bid {id}: {field}: {e}")))
        };
        let value = number("value", f[2])?;
        let amount = number("amount", f[3])?;
        let fake = parse_bool(f[4]).ok_or_else(|| err(line, format!("bid {id}: bad fake flag `{}`", f[4])))?;
        if bids.iter().any(|b| b.id == BidId(id)) {
            return Err(err(line, format!("duplicate bid id {id}")));
        }
        let bid = Bid {
            id: BidId(id),
            owner,
            value,
            amount,
            fake,
        };
        bid.check(&params.tick).map_err(|e| err(line, e.to_string()))?;
        bids.push(bid);
    }
    Ok(bids)
}

#[derive(Debug, Serialize)]
struct BlockOutput {
    #[serde(with = "serde_rational")]
    payment: Rational,
    #[serde(with = "serde_rational")]
    miner_revenue: Rational,
    #[serde(with = "serde_rational")]
    burn: Rational,
    #[serde(with = "serde_rational")]
    q: Rational,
    trivial: bool,
    outcome: BlockOutcome,
}

/// Runs the mechanism once on a mempool file.
pub fn run_block(exp: &Experiment) -> Result<RunOutcome, CliError> {
    let cfg = exp.config.block.as_ref().ok_or_else(|| missing("block"))?;
    let params = exp.mechanism()?;
    let path = exp.resolve(&cfg.mempool);
    let text = std::fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| Path::new(n).display().to_string());
    let bids = parse_mempool(&text, &params, &name)?;
    let outcome = if cfg.sample {
        execute_sampled(&bids, &params, exp.seed("sampled confirmation")?)
    } else {
        execute(&bids, &params)
    }
    .map_err(|e| CliError::Config(format!("block: {e}")))?;
    let doc = BlockOutput {
        payment: outcome.payment,
        miner_revenue: outcome.miner_revenue,
        burn: outcome.expected_burn,
        q: outcome.confirm_prob,
        trivial: outcome.trivial,
        outcome,
    };
    let mut out = RunOutcome::new(false);
    out.summary.push(format!(
        "payment {}, revenue {}, burn {}, q {}{}",
        format_rational(&doc.payment),
        format_rational(&doc.miner_revenue),
        format_rational(&doc.burn),
        format_rational(&doc.q),
        if doc.trivial { ", TRIVIAL (no confirmations)" } else { "" }
    ));
    if let Some(c) = &doc.outcome.confirmed {
        out.summary
            .push(format!("confirmed bids {:?}", c.iter().map(|b| b.0).collect::<Vec<_>>()));
    }
    out.files.push(write_json(exp, "block.json", "block", &doc)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use bsp_core::rational::{int, ratio};

    fn params() -> MechanismParams {
        MechanismParams {
            block_size: 5,
            payment_index: 4,
            collusion_size: 1,
            theta: ratio(1, 2),
            gamma: int(1),
            tick: ratio(1, 10),
            kappa: int(10),
        }
    }

    #[test]
    fn reference_block() {
        let text = "id,owner,value,amount,fake\n1,user:1,9,9,\n2,2,7,7,0\n3,user:3,5,5,false\n4,user:4,4,4,\n5,user:5,2,2,\n";
        let bids = parse_mempool(text, &params(), "m.csv").unwrap();
        let o = execute(&bids, &params()).unwrap();
        assert_eq!(o.payment, int(2));
        assert_eq!(o.miner_revenue, int(1));
        assert_eq!(o.expected_burn, int(3));
        assert_eq!(o.confirm_prob, ratio(1, 2));
    }

    #[test]
    fn errors_name_the_line_and_bid() {
        let text = "# pool\nid,owner,value,amount,fake\n1,user:1,9,9,\n7,user:2,1,1.05,\n";
        let e = parse_mempool(text, &params(), "m.csv").unwrap_err().to_string();
        assert!(e.starts_with("m.csv:4:"), "{e}");
        assert!(e.contains("#7"), "{e}");
        let e = parse_mempool("id,owner\n", &params(), "m.csv").unwrap_err().to_string();
        assert!(e.starts_with("m.csv:1:"), "{e}");
        let e = parse_mempool("id,owner,value,amount,fake\n1,bob,1,1,\n", &params(), "m.csv")
            .unwrap_err()
            .to_string();
        assert!(e.contains("bad owner"), "{e}");
    }
}
