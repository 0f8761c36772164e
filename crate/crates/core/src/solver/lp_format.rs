//! Reader and writer for a CPLEX-style LP text format.
//!
//! The writer emits every variable in the objective (zero coefficients
//! included) so column order survives a round trip, and prints numbers with
//! Rust's shortest round-trip formatting. The reader accepts the subset the
//! writer produces plus the usual spelling variants of section headers and
//! relations; each constraint must sit on one line.
//!
//! ```text
//! \ comment
//! Maximize
//!  obj: 3 x + 2 y + 0 b + 5
//! Subject To
//!  c1: x + y <= 4
//! Bounds
//!  0 <= x <= 10
//!  y free
//!  0 <= b <= 1
//! Binaries
//!  b
//! End
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::{LinearProgram, MixedIntegerProgram, Relation, Sense, VarId};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct LpFormatError {
    pub line: usize,
    pub message: String,
}

fn err(line: usize, message: impl Into<String>) -> LpFormatError {
    LpFormatError {
        line,
        message: message.into(),
    }
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn push_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut first = true;
    for (a, name) in terms {
        if first {
            if a < 0.0 {
                let _ = write!(out, "- {} {}", fmt_num(-a), name);
            } else {
                let _ = write!(out, "{} {}", fmt_num(a), name);
            }
            first = false;
        } else if a < 0.0 {
            let _ = write!(out, " - {} {}", fmt_num(-a), name);
        } else {
            let _ = write!(out, " + {} {}", fmt_num(a), name);
        }
    }
    if first {
        out.push('0');
    }
}

fn valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !is_keyword(&name.to_ascii_lowercase())
}

fn is_keyword(lower: &str) -> bool {
    section_header(lower).is_some()
        || matches!(lower, "free" | "inf" | "infinity")
        || lower.starts_with("general")
        || lower.starts_with("semi")
        || lower == "sos"
}

/// Names as written: invalid or duplicate names fall back to `x<index>` /
/// `c<index>`.
fn output_names<'a>(names: impl Iterator<Item = &'a str>, prefix: &str) -> Vec<String> {
    let mut seen = HashMap::new();
    names
        .enumerate()
        .map(|(i, n)| {
            let candidate = if valid_name(n) {
                n.to_string()
            } else {
                format!("{prefix}{i}")
            };
            let candidate = if seen.contains_key(&candidate) {
                format!("{prefix}{i}_")
            } else {
                candidate
            };
            seen.insert(candidate.clone(), ());
            candidate
        })
        .collect()
}

pub fn write(mip: &MixedIntegerProgram) -> String {
    let lp = &mip.lp;
    let vnames = output_names(lp.variables.iter().map(|v| v.name.as_str()), "x");
    let cnames = output_names(lp.constraints.iter().map(|c| c.name.as_str()), "c");
    let mut out = String::new();
    out.push_str("\\ written by coplan\n");
    out.push_str(match lp.sense {
        Sense::Maximize => "Maximize\n",
        Sense::Minimize => "Minimize\n",
    });
    out.push_str(" obj: ");
    push_terms(
        &mut out,
        lp.variables
            .iter()
            .zip(&vnames)
            .map(|(v, n)| (v.objective, n.clone())),
    );
    if lp.objective_offset != 0.0 {
        if lp.objective_offset < 0.0 {
            let _ = write!(out, " - {}", fmt_num(-lp.objective_offset));
        } else {
            let _ = write!(out, " + {}", fmt_num(lp.objective_offset));
        }
    }
    out.push_str("\nSubject To\n");
    for (c, name) in lp.constraints.iter().zip(&cnames) {
        let _ = write!(out, " {name}: ");
        push_terms(&mut out, c.terms.iter().map(|&(j, a)| (a, vnames[j].clone())));
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in lp.variables.iter().zip(&vnames) {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lower), fmt_num(v.upper));
        }
    }
    if !mip.binaries.is_empty() {
        out.push_str("Binaries\n");
        for &b in &mip.binaries {
            let _ = writeln!(out, " {}", vnames[b]);
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    End,
}

fn section_header(line: &str) -> Option<(Section, Option<Sense>)> {
    let lower = line.trim().to_ascii_lowercase();
    let collapsed: String = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    Some(match collapsed.as_str() {
        "maximize" | "maximise" | "maximum" | "max" => (Section::Objective, Some(Sense::Maximize)),
        "minimize" | "minimise" | "minimum" | "min" => (Section::Objective, Some(Sense::Minimize)),
        "subject to" | "such that" | "st" | "s.t." => (Section::Constraints, None),
        "bounds" | "bound" => (Section::Bounds, None),
        "binaries" | "binary" | "bin" => (Section::Binaries, None),
        "end" => (Section::End, None),
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Rel(RelTok),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RelTok {
    Le,
    Ge,
    Eq,
}

fn lex(text: &str, line: usize) -> Result<Vec<Tok>, LpFormatError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        match c {
            b' ' | b'\t' | b'\r' => i += 1,
            b'+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            b'-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            b':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            b'<' | b'>' | b'=' => {
                let next = bytes.get(i + 1).copied();
                let (rel, len) = match (c, next) {
                    (b'<', Some(b'=')) | (b'=', Some(b'<')) => (RelTok::Le, 2),
                    (b'>', Some(b'=')) | (b'=', Some(b'>')) => (RelTok::Ge, 2),
                    (b'<', _) => (RelTok::Le, 1),
                    (b'>', _) => (RelTok::Ge, 1),
                    _ => (RelTok::Eq, 1),
                };
                toks.push(Tok::Rel(rel));
                i += len;
            }
            b'0'..=b'9' | b'.' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut k = i + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        i = k;
                    }
                }
                let s = &text[start..i];
                let v: f64 = s
                    .parse()
                    .map_err(|_| err(line, format!("malformed number '{s}'")))?;
                toks.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
                {
                    i += 1;
                }
                let word = &text[start..i];
                match word.to_ascii_lowercase().as_str() {
                    "inf" | "infinity" => toks.push(Tok::Num(f64::INFINITY)),
                    _ => toks.push(Tok::Name(word.to_string())),
                }
            }
            _ => {
                return Err(err(
                    line,
                    format!("unexpected character '{}'", text[i..].chars().next().unwrap_or('?')),
                ))
            }
        }
    }
    Ok(toks)
}

struct Builder {
    lp: LinearProgram,
    index: HashMap<String, VarId>,
    binaries: Vec<VarId>,
}

impl Builder {
    fn var(&mut self, name: &str) -> VarId {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        let j = self.lp.add_variable(name, 0.0, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), j);
        j
    }
}

/// Linear expression: `[sign] [coef] [name]` terms. Bare numbers become the
/// constant.
fn parse_expr(
    toks: &[Tok],
    b: &mut Builder,
    line: usize,
) -> Result<(Vec<(VarId, f64)>, f64), LpFormatError> {
    let mut terms: Vec<(VarId, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut i = 0;
    let mut first = true;
    while i < toks.len() {
        let mut sign = 1.0;
        let mut saw_sign = false;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            saw_sign = true;
            i += 1;
        }
        if !first && !saw_sign {
            return Err(err(line, "missing operator between terms"));
        }
        first = false;
        let coef = match toks.get(i) {
            Some(Tok::Num(v)) => {
                i += 1;
                Some(*v)
            }
            _ => None,
        };
        match toks.get(i) {
            Some(Tok::Name(n)) => {
                let j = b.var(n);
                let a = sign * coef.unwrap_or(1.0);
                if !a.is_finite() {
                    return Err(err(line, "non-finite coefficient"));
                }
                match terms.iter_mut().find(|(k, _)| *k == j) {
                    Some(t) => t.1 += a,
                    None => terms.push((j, a)),
                }
                i += 1;
            }
            _ => match coef {
                Some(v) if v.is_finite() => constant += sign * v,
                Some(_) => return Err(err(line, "non-finite constant")),
                None => return Err(err(line, "expected a term")),
            },
        }
    }
    Ok((terms, constant))
}

fn parse_signed_number(toks: &[Tok]) -> Option<f64> {
    match toks {
        [Tok::Num(v)] => Some(*v),
        [Tok::Plus, Tok::Num(v)] => Some(*v),
        [Tok::Minus, Tok::Num(v)] => Some(-*v),
        _ => None,
    }
}

fn split_label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Name(n), Tok::Colon, rest @ ..] => (Some(n.clone()), rest),
        _ => (None, toks),
    }
}

fn parse_constraint(toks: &[Tok], b: &mut Builder, line: usize) -> Result<(), LpFormatError> {
    let (label, body) = split_label(toks);
    let pos = body
        .iter()
        .position(|t| matches!(t, Tok::Rel(_)))
        .ok_or_else(|| err(line, "constraint without relation"))?;
    let Tok::Rel(rel) = body[pos] else { unreachable!() };
    let rhs = parse_signed_number(&body[pos + 1..])
        .filter(|v| v.is_finite())
        .ok_or_else(|| err(line, "right-hand side must be one finite number"))?;
    let (terms, constant) = parse_expr(&body[..pos], b, line)?;
    let relation = match rel {
        RelTok::Le => Relation::Le,
        RelTok::Ge => Relation::Ge,
        RelTok::Eq => Relation::Eq,
    };
    let name = label.unwrap_or_else(|| format!("c{}", b.lp.constraints.len()));
    b.lp.add_constraint(name, terms, relation, rhs - constant);
    Ok(())
}

fn parse_bound(toks: &[Tok], b: &mut Builder, line: usize) -> Result<(), LpFormatError> {
    let bad = || err(line, "unrecognized bound");
    if let [Tok::Name(n), Tok::Name(kw)] = toks {
        if kw.eq_ignore_ascii_case("free") {
            let j = b.var(n);
            b.lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
            return Ok(());
        }
        return Err(bad());
    }
    let rels: Vec<usize> = toks
        .iter()
        .enumerate()
        .filter(|(_, t)| matches!(t, Tok::Rel(_)))
        .map(|(i, _)| i)
        .collect();
    let rel_at = |i: usize| match toks[i] {
        Tok::Rel(r) => r,
        _ => unreachable!(),
    };
    match rels.as_slice() {
        [r] => {
            let (lhs, rhs) = (&toks[..*r], &toks[*r + 1..]);
            let rel = rel_at(*r);
            let (name, value, name_left) = match (lhs, parse_signed_number(rhs)) {
                ([Tok::Name(n)], Some(v)) => (n.clone(), v, true),
                (_, _) => match (parse_signed_number(lhs), rhs) {
                    (Some(v), [Tok::Name(n)]) => (n.clone(), v, false),
                    _ => return Err(bad()),
                },
            };
            let j = b.var(&name);
            let v = &mut b.lp.variables[j];
            // Normalize to "name REL value".
            let rel = match (rel, name_left) {
                (r, true) => r,
                (RelTok::Le, false) => RelTok::Ge,
                (RelTok::Ge, false) => RelTok::Le,
                (RelTok::Eq, false) => RelTok::Eq,
            };
            match rel {
                RelTok::Le => v.upper = value,
                RelTok::Ge => v.lower = value,
                RelTok::Eq => {
                    v.lower = value;
                    v.upper = value;
                }
            }
            Ok(())
        }
        [r1, r2] if *r2 == r1 + 2 => {
            let lo = parse_signed_number(&toks[..*r1]).ok_or_else(bad)?;
            let hi = parse_signed_number(&toks[r2 + 1..]).ok_or_else(bad)?;
            let Tok::Name(n) = &toks[r1 + 1] else {
                return Err(bad());
            };
            if rel_at(*r1) != RelTok::Le || rel_at(*r2) != RelTok::Le {
                return Err(err(line, "double bounds must use <="));
            }
            let j = b.var(n);
            b.lp.set_bounds(j, lo, hi);
            Ok(())
        }
        _ => Err(bad()),
    }
}

pub fn parse(text: &str) -> Result<MixedIntegerProgram, LpFormatError> {
    let mut b = Builder {
        lp: LinearProgram::new(Sense::Maximize),
        index: HashMap::new(),
        binaries: Vec::new(),
    };
    let mut section = Section::Preamble;
    let mut objective: Vec<Tok> = Vec::new();
    let mut objective_line = 0;
    let mut saw_objective = false;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('\\') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        if let Some((next, sense)) = section_header(content) {
            if next == Section::Objective {
                if saw_objective {
                    return Err(err(line, "duplicate objective section"));
                }
                saw_objective = true;
                objective_line = line;
            }
            if let Some(s) = sense {
                b.lp.sense = s;
            }
            section = next;
            continue;
        }
        let lower = content.trim().to_ascii_lowercase();
        if lower.starts_with("general") || lower.starts_with("semi") || lower == "sos" {
            return Err(err(line, "only binary integer variables are supported"));
        }
        match section {
            Section::Preamble => return Err(err(line, "expected Maximize or Minimize")),
            Section::End => return Err(err(line, "content after End")),
            Section::Objective => objective.extend(lex(content, line)?),
            Section::Constraints => {
                let toks = lex(content, line)?;
                parse_constraint(&toks, &mut b, line)?;
            }
            Section::Bounds => {
                let toks = lex(content, line)?;
                parse_bound(&toks, &mut b, line)?;
            }
            Section::Binaries => {
                for word in content.split_whitespace() {
                    if !valid_name(word) {
                        return Err(err(line, format!("invalid binary name '{word}'")));
                    }
                    let j = b.var(word);
                    if !b.binaries.contains(&j) {
                        b.binaries.push(j);
                    }
                }
            }
        }
    }
    if !saw_objective {
        return Err(err(1, "missing objective section"));
    }
    if section != Section::End {
        return Err(err(text.lines().count().max(1), "missing End"));
    }

    // The objective may reference variables first; resolve it against the
    // final index but keep its order as the column order.
    let (_, body) = split_label(&objective);
    let body = body.to_vec();
    let mut ordered = Builder {
        lp: LinearProgram::new(b.lp.sense),
        index: HashMap::new(),
        binaries: Vec::new(),
    };
    let (obj_terms, constant) = parse_expr(&body, &mut ordered, objective_line)?;
    for v in &b.lp.variables {
        ordered.var(&v.name);
    }
    let remap: Vec<VarId> = b.lp.variables.iter().map(|v| ordered.index[&v.name]).collect();
    for (old, v) in b.lp.variables.iter().enumerate() {
        let new = remap[old];
        ordered.lp.variables[new].lower = v.lower;
        ordered.lp.variables[new].upper = v.upper;
    }
    for (j, a) in obj_terms {
        ordered.lp.variables[j].objective = a;
    }
    ordered.lp.objective_offset = constant;
    for c in b.lp.constraints {
        let terms = c.terms.iter().map(|&(j, a)| (remap[j], a)).collect();
        ordered.lp.add_constraint(c.name, terms, c.relation, c.rhs);
    }
    let binaries: Vec<VarId> = b.binaries.iter().map(|&j| remap[j]).collect();
    for &j in &binaries {
        let v = &mut ordered.lp.variables[j];
        v.lower = v.lower.max(0.0);
        v.upper = v.upper.min(1.0);
    }
    for v in &ordered.lp.variables {
        if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
            return Err(err(0, format!("inconsistent bounds for {}", v.name)));
        }
    }
    Ok(MixedIntegerProgram::new(ordered.lp, binaries))
}
