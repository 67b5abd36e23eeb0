//! Line-oriented MDP text format.
//!
//! ```text
//! # comments run from '#' to end of line
//! n m gamma
//! s a cost k s1 p1 s2 p2 ... sk pk
//! ```
//!
//! One line per allowed `(s, a)` pair, 0-indexed. Reals are written with 17
//! significant digits so that a load reproduces the saved values exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mdp::{validate_mdp, Mdp, MdpBuilder};

/// 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_text(mdp: &Mdp) -> String {
    let mut out = String::with_capacity(32 + mdp.nonzeros() * 30);
    let _ = writeln!(out, "{} {} {}", mdp.n(), mdp.m(), fmt_real(mdp.gamma()));
    for s in 0..mdp.n() {
        for pair in mdp.pair_range(s) {
            let a = mdp.allowed_action_at(pair);
            let k = mdp.row(pair).count();
            let _ = write!(out, "{s} {a} {} {k}", fmt_real(mdp.pair_cost(pair)));
            for (d, p) in mdp.row(pair) {
                let _ = write!(out, " {d} {}", fmt_real(p));
            }
            out.push('\n');
        }
    }
    out
}

pub fn save(mdp: &Mdp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(mdp)).map_err(|e| Error::io(path, e))
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        msg: format!("missing {what}"),
    })?;
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Parses the text format without validating probabilities or action sets.
pub fn parse_unchecked(text: &str) -> Result<Mdp> {
    let mut builder: Option<MdpBuilder> = None;
    let mut last_line = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace().peekable();
        if toks.peek().is_none() {
            continue;
        }
        match builder.as_mut() {
            None => {
                let n: usize = field(toks.next(), line, "n")?;
                let m: usize = field(toks.next(), line, "m")?;
                let gamma: f64 = field(toks.next(), line, "gamma")?;
                if toks.next().is_some() {
                    return Err(Error::Parse {
                        line,
                        msg: "trailing tokens after header".into(),
                    });
                }
                builder = Some(MdpBuilder::new(n, m, gamma));
            }
            Some(b) => {
                let s: usize = field(toks.next(), line, "state")?;
                let a: usize = field(toks.next(), line, "action")?;
                let cost: f64 = field(toks.next(), line, "cost")?;
                let k: usize = field(toks.next(), line, "nonzero count")?;
                let mut row = Vec::with_capacity(k);
                for j in 0..k {
                    let d: usize = field(toks.next(), line, &format!("destination {}", j + 1))?;
                    let p: f64 = field(toks.next(), line, &format!("probability {}", j + 1))?;
                    row.push((d, p));
                }
                if toks.next().is_some() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("more than {k} destinations"),
                    });
                }
                b.add(s, a, cost, row).map_err(|e| Error::Parse {
                    line,
                    msg: e.to_string(),
                })?;
            }
        }
    }
    builder.map(MdpBuilder::build_unchecked).ok_or(Error::Parse {
        line: last_line.max(1),
        msg: "missing header `n m gamma`".into(),
    })
}

/// Parses and validates.
pub fn parse(text: &str) -> Result<Mdp> {
    let mdp = parse_unchecked(text)?;
    let report = validate_mdp(&mdp);
    if report.is_ok() {
        Ok(mdp)
    } else {
        Err(Error::InvalidMdp(report))
    }
}

pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Mdp> {
    parse(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate_garnet, make_mdp, Fixture, GarnetSpec};

    #[test]
    fn garnet_round_trips_exactly() {
        let mdp = generate_garnet(&GarnetSpec {
            n: 12,
            m: 3,
            branching: 4,
            cost_lo: -1.0,
            cost_hi: 2.0,
            gamma: 0.95,
            seed: 5,
        })
        .unwrap();
        let text = to_text(&mdp);
        let back = parse(&text).unwrap();
        assert_eq!(to_text(&back), text);
        assert_eq!(back.gamma(), mdp.gamma());
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# swap\n2 1 0.5\n\n0 0 1 1 1 1.0 # to 1\n1 0 0 1 0 1\n";
        let mdp = parse(text).unwrap();
        assert_eq!(to_text(&mdp), to_text(&make_mdp(Fixture::MdpA).unwrap()));
    }

    #[test]
    fn truncated_line_reports_line_number() {
        let text = "2 1 0.5\n0 0 1 1 1 1.0\n1 0 0 2 0";
        match parse(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_state_is_a_violation() {
        let text = "2 1 0.5\n0 0 1 1 1 1.0\n";
        assert!(matches!(parse(text), Err(Error::InvalidMdp(_))));
    }

    #[test]
    fn empty_input_is_parse_error() {
        assert!(matches!(parse("# nothing\n"), Err(Error::Parse { .. })));
    }
}
