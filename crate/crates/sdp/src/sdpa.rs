//! SDPA sparse format (`.dat-s`) import and export.
//!
//! SDPA solves `max <F0, Y>` subject to `<F_i, Y> = c_i`, `Y` PSD, which is
//! our primal with `Y = X`, `F_i = A_i`, `c_i = b_i` and `F0 = -C`.  Free
//! scalars are split into nonnegative pairs stored in a trailing diagonal
//! block; a `*free-pairs <block>` comment lets [`read_sdpa`] fold them back.

use crate::error::SdpError;
use crate::problem::{Constraint, Entry, SdpProblem};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

pub fn write_sdpa<W: Write>(p: &SdpProblem, mut out: W) -> Result<(), SdpError> {
    p.validate()?;
    if p.objective.log_det.is_some() {
        return Err(SdpError::LogDetNotExportable);
    }
    let nf = p.num_free();
    let nblocks = p.blocks.len() + usize::from(nf > 0);
    let free_blk = p.blocks.len() + 1;
    let mut s = String::new();
    let _ = writeln!(s, "* {} constraints, {} PSD blocks, {} free scalars", p.num_constraints(), p.blocks.len(), nf);
    if nf > 0 {
        let _ = writeln!(s, "*free-pairs {free_blk}");
    }
    let _ = writeln!(s, "{}", p.num_constraints());
    let _ = writeln!(s, "{nblocks}");
    let mut sizes: Vec<String> = p.blocks.iter().map(|b| b.size.to_string()).collect();
    if nf > 0 {
        sizes.push(format!("-{}", 2 * nf));
    }
    let _ = writeln!(s, "{}", sizes.join(" "));
    let rhs: Vec<String> = p.constraints.iter().map(|c| format!("{:.16e}", c.rhs)).collect();
    let _ = writeln!(s, "{}", rhs.join(" "));
    let emit = |s: &mut String, mat: usize, entries: &[Entry], free: &[(usize, f64)], sign: f64| {
        for e in entries {
            if e.value != 0.0 {
                let _ = writeln!(s, "{} {} {} {} {:.16e}", mat, e.block + 1, e.row + 1, e.col + 1, sign * e.value);
            }
        }
        for &(k, v) in free {
            if v != 0.0 {
                let _ = writeln!(s, "{} {} {} {} {:.16e}", mat, free_blk, 2 * k + 1, 2 * k + 1, sign * v);
                let _ = writeln!(s, "{} {} {} {} {:.16e}", mat, free_blk, 2 * k + 2, 2 * k + 2, -sign * v);
            }
        }
    };
    emit(&mut s, 0, &p.objective.entries, &p.objective.free, -1.0);
    for (i, c) in p.constraints.iter().enumerate() {
        emit(&mut s, i + 1, &c.entries, &c.free, 1.0);
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn read_sdpa<R: BufRead>(input: R) -> Result<SdpProblem, SdpError> {
    let mut free_blk: Option<usize> = None;
    // Header tokens gathered in order: m, nblocks, sizes..., rhs...
    let mut header: Vec<(usize, String)> = Vec::new();
    let mut data: Vec<(usize, String)> = Vec::new();
    let mut need_header: Option<usize> = None;
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if let Some(rest) = trimmed.strip_prefix("*free-pairs") {
            let v = rest.trim().parse::<usize>().map_err(|_| SdpError::Format {
                line: lineno,
                msg: "bad free-pairs annotation".into(),
            })?;
            free_blk = Some(v);
            continue;
        }
        if trimmed.is_empty() || trimmed.starts_with('*') || trimmed.starts_with('"') {
            continue;
        }
        let cleaned: String =
            trimmed.chars().map(|c| if matches!(c, ',' | '{' | '}' | '(' | ')') { ' ' } else { c }).collect();
        let tokens: Vec<String> = cleaned.split_whitespace().map(str::to_string).collect();
        let header_done = match need_header {
            Some(n) => header.len() >= n,
            None => false,
        };
        if header_done {
            data.push((lineno, cleaned));
            continue;
        }
        // m and nblocks lines may carry trailing comments; take one token each.
        let consumed_before = header.len();
        if consumed_before < 2 {
            let tok = tokens.first().cloned().unwrap_or_default();
            header.push((lineno, tok));
        } else {
            for t in tokens {
                header.push((lineno, t));
            }
        }
        if header.len() >= 2 && need_header.is_none() {
            let m = parse_usize(&header[0])?;
            let nb = parse_usize(&header[1])?;
            need_header = Some(2 + nb + m);
        }
    }
    let Some(need) = need_header else {
        return Err(SdpError::Format { line: 0, msg: "missing header".into() });
    };
    if header.len() < need {
        return Err(SdpError::Format { line: header.last().map(|h| h.0).unwrap_or(0), msg: "truncated header".into() });
    }
    if header.len() > need {
        return Err(SdpError::Format { line: header[need].0, msg: "unexpected header token".into() });
    }
    let m = parse_usize(&header[0])?;
    let nb = parse_usize(&header[1])?;
    let mut block_sizes: Vec<i64> = Vec::with_capacity(nb);
    for h in &header[2..2 + nb] {
        let v: i64 = h.1.parse().map_err(|_| SdpError::Format { line: h.0, msg: format!("bad block size `{}`", h.1) })?;
        if v == 0 {
            return Err(SdpError::Format { line: h.0, msg: "zero block size".into() });
        }
        block_sizes.push(v);
    }
    let mut rhs = Vec::with_capacity(m);
    for h in &header[2 + nb..] {
        rhs.push(parse_f64(h)?);
    }

    // Map SDPA blocks to ours.
    enum Target {
        Psd(usize),
        Diag(Vec<usize>),
        Free,
    }
    let mut p = SdpProblem::new();
    let mut targets = Vec::with_capacity(nb);
    for (k, &sz) in block_sizes.iter().enumerate() {
        if Some(k + 1) == free_blk {
            if sz > 0 || sz % 2 != 0 {
                return Err(SdpError::Format { line: 0, msg: "free-pairs block must be diagonal of even size".into() });
            }
            for f in 0..(-sz / 2) {
                p.add_free(format!("x{f}"));
            }
            targets.push(Target::Free);
        } else if sz > 0 {
            targets.push(Target::Psd(p.add_block(format!("blk{}", k + 1), sz as usize)));
        } else {
            let ids = (0..(-sz) as usize).map(|d| p.add_block(format!("blk{}_{}", k + 1, d + 1), 1)).collect();
            targets.push(Target::Diag(ids));
        }
    }
    let mut obj = crate::problem::Objective::default();
    let mut cons: Vec<Constraint> = rhs.iter().map(|&r| Constraint { entries: vec![], free: vec![], rhs: r }).collect();
    for (lineno, text) in data {
        let t: Vec<&str> = text.split_whitespace().collect();
        if t.len() != 5 {
            return Err(SdpError::Format { line: lineno, msg: "expected `mat blk i j value`".into() });
        }
        let bad = |what: &str| SdpError::Format { line: lineno, msg: format!("bad {what}") };
        let mat: usize = t[0].parse().map_err(|_| bad("matrix index"))?;
        let blk: usize = t[1].parse().map_err(|_| bad("block index"))?;
        let i: usize = t[2].parse().map_err(|_| bad("row index"))?;
        let j: usize = t[3].parse().map_err(|_| bad("column index"))?;
        let v: f64 = t[4].parse().map_err(|_| bad("value"))?;
        if mat > m || blk == 0 || blk > nb || i == 0 || j == 0 {
            return Err(SdpError::Format { line: lineno, msg: "index out of range".into() });
        }
        let size = block_sizes[blk - 1].unsigned_abs() as usize;
        if i > size || j > size {
            return Err(SdpError::Format { line: lineno, msg: "entry outside its block".into() });
        }
        // F0 = -C.
        let val = if mat == 0 { -v } else { v };
        match &targets[blk - 1] {
            Target::Psd(b) => {
                let e = Entry::new(*b, i - 1, j - 1, val);
                if mat == 0 {
                    obj.entries.push(e);
                } else {
                    cons[mat - 1].entries.push(e);
                }
            }
            Target::Diag(ids) => {
                if i != j {
                    return Err(SdpError::Format { line: lineno, msg: "off-diagonal entry in diagonal block".into() });
                }
                let e = Entry::new(ids[i - 1], 0, 0, val);
                if mat == 0 {
                    obj.entries.push(e);
                } else {
                    cons[mat - 1].entries.push(e);
                }
            }
            Target::Free => {
                if i != j {
                    return Err(SdpError::Format { line: lineno, msg: "off-diagonal entry in diagonal block".into() });
                }
                // Only the positive half of each pair carries the coefficient.
                if (i - 1) % 2 == 0 {
                    let k = (i - 1) / 2;
                    if mat == 0 {
                        obj.free.push((k, val));
                    } else {
                        cons[mat - 1].free.push((k, val));
                    }
                }
            }
        }
    }
    p.objective = obj;
    p.constraints = cons;
    p.validate()?;
    Ok(p)
}

fn parse_usize(h: &(usize, String)) -> Result<usize, SdpError> {
    h.1.parse().map_err(|_| SdpError::Format { line: h.0, msg: format!("expected integer, found `{}`", h.1) })
}

fn parse_f64(h: &(usize, String)) -> Result<f64, SdpError> {
    h.1.parse().map_err(|_| SdpError::Format { line: h.0, msg: format!("expected number, found `{}`", h.1) })
}
