//! Columnar text dump of a simulated tree.
//!
//! ```text
//! # barlab-tree p=1 n=3 seed=42
//! label,generation,x,eps
//! 1,0,0,
//! 2,1,1.2316,0.2316
//! ...
//! ```
//!
//! One row per cell of `T_n` in label order. The `eps` column is omitted when
//! noise was not recorded and left empty for the ancestors `k < 2^p`. Values
//! use Rust's shortest round-trip float formatting, so a dump reloads bit for
//! bit.

use std::io::{BufRead, Write};

use super::SimulatedTree;
use crate::error::{Error, Result};
use crate::tree::TreeShape;

const MAGIC: &str = "# barlab-tree";

pub fn write_tree<W: Write>(tree: &SimulatedTree, mut w: W) -> Result<()> {
    let shape = tree.shape();
    writeln!(w, "{MAGIC} p={} n={} seed={}", shape.p(), shape.n(), tree.master_seed())?;
    let eps = tree.noise();
    if eps.is_some() {
        writeln!(w, "label,generation,x,eps")?;
    } else {
        writeln!(w, "label,generation,x")?;
    }
    let first_noisy = 1u64 << shape.p();
    for k in 1..=shape.len() {
        let g = 63 - k.leading_zeros();
        let x = tree.x(k);
        match eps {
            Some(e) if k >= first_noisy => writeln!(w, "{k},{g},{x},{}", e[k as usize])?,
            Some(_) => writeln!(w, "{k},{g},{x},")?,
            None => writeln!(w, "{k},{g},{x}")?,
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

pub fn read_tree<R: BufRead>(r: R) -> Result<SimulatedTree> {
    let mut lines = r.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let first = first?;
    let meta =
        first.strip_prefix(MAGIC).ok_or_else(|| parse_err(1, format!("expected header starting with '{MAGIC}'")))?;
    let (mut p, mut n, mut seed) = (None, None, 0u64);
    for field in meta.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| parse_err(1, format!("bad header field '{field}'")))?;
        let bad = |_| parse_err(1, format!("bad value in header field '{field}'"));
        match key {
            "p" => p = Some(value.parse::<u32>().map_err(bad)?),
            "n" => n = Some(value.parse::<u32>().map_err(bad)?),
            "seed" => seed = value.parse::<u64>().map_err(bad)?,
            _ => return Err(parse_err(1, format!("unknown header field '{key}'"))),
        }
    }
    let p = p.ok_or_else(|| parse_err(1, "header lacks p"))?;
    let n = n.ok_or_else(|| parse_err(1, "header lacks n"))?;
    let shape = TreeShape::new(n, p).map_err(|e| parse_err(1, e.to_string()))?;

    let (_, columns) = lines.next().ok_or_else(|| parse_err(2, "missing column header"))?;
    let columns = columns?;
    let with_noise = match columns.trim() {
        "label,generation,x,eps" => true,
        "label,generation,x" => false,
        other => return Err(parse_err(2, format!("unexpected columns '{other}'"))),
    };

    let len = shape.len() as usize + 1;
    let mut x = vec![0.0; len];
    let mut eps = if with_noise { Some(vec![0.0; len]) } else { None };
    let first_noisy = 1u64 << p;
    let mut expected = 1u64;
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if expected > shape.len() {
            return Err(parse_err(line_no, "more rows than the header's tree size"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        let want = if with_noise { 4 } else { 3 };
        if fields.len() != want {
            return Err(parse_err(line_no, format!("expected {want} fields, got {}", fields.len())));
        }
        let label: u64 = fields[0].trim().parse().map_err(|_| parse_err(line_no, "bad label"))?;
        if label != expected {
            return Err(parse_err(line_no, format!("expected label {expected}, got {label}")));
        }
        let g: u32 = fields[1].trim().parse().map_err(|_| parse_err(line_no, "bad generation"))?;
        if g != 63 - label.leading_zeros() {
            return Err(parse_err(line_no, format!("generation {g} does not match label {label}")));
        }
        let v: f64 = fields[2].trim().parse().map_err(|_| parse_err(line_no, "bad value"))?;
        if !v.is_finite() {
            return Err(parse_err(line_no, "non-finite value"));
        }
        x[label as usize] = v;
        if let Some(e) = eps.as_mut() {
            let raw = fields[3].trim();
            if label >= first_noisy {
                e[label as usize] = raw.parse().map_err(|_| parse_err(line_no, "bad noise value"))?;
            } else if !raw.is_empty() {
                return Err(parse_err(line_no, "ancestor rows carry no noise"));
            }
        }
        expected += 1;
    }
    if expected != shape.len() + 1 {
        return Err(parse_err(0, format!("expected {} rows, found {}", shape.len(), expected - 1)));
    }
    SimulatedTree::from_parts(shape, x, eps, seed)
}
