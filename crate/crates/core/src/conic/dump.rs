//! Plain-text program listing for external verification.
//!
//! ```text
//! # dlmc conic program
//! vars <n>
//! var <index> <name> <lower|-inf> <upper|+inf> <linear cost> <quadratic coef>
//! eq <index> <tag> rhs <value> : <coef>*x<var> ...
//! le <index> <tag> rhs <value> : <coef>*x<var> ...
//! soc <index> <tag> dim <d>
//!   head <constant> : <coef>*x<var> ...
//!   tail <constant> : <coef>*x<var> ...
//! ```

use std::io::{self, Write};

use super::{Affine, ConicProgram};

fn terms(w: &mut impl Write, t: &[(super::VarId, f64)]) -> io::Result<()> {
    for (v, c) in t {
        write!(w, " {c:+.17e}*x{}", v.0)?;
    }
    writeln!(w)
}

fn affine(w: &mut impl Write, label: &str, e: &Affine) -> io::Result<()> {
    write!(w, "  {label} {:+.17e} :", e.constant)?;
    terms(w, &e.terms)
}

pub(super) fn write<W: Write>(p: &ConicProgram, w: &mut W) -> io::Result<()> {
    writeln!(w, "# dlmc conic program")?;
    writeln!(w, "vars {}", p.var_count())?;
    let mut quad = vec![0.0; p.var_count()];
    for &(v, c) in &p.quadratic {
        quad[v.0] += c;
    }
    for (i, v) in p.vars.iter().enumerate() {
        let lo = v.lower.map_or("-inf".to_string(), |x| format!("{x:e}"));
        let hi = v.upper.map_or("+inf".to_string(), |x| format!("{x:e}"));
        writeln!(w, "var {i} {} {lo} {hi} {:e} {:e}", v.name, p.linear[i], quad[i])?;
    }
    for (i, r) in p.equalities.iter().enumerate() {
        write!(w, "eq {i} {:?} rhs {:+.17e} :", r.tag, r.rhs)?;
        terms(w, &r.terms)?;
    }
    for (i, r) in p.inequalities.iter().enumerate() {
        write!(w, "le {i} {:?} rhs {:+.17e} :", r.tag, r.rhs)?;
        terms(w, &r.terms)?;
    }
    for (i, c) in p.cones.iter().enumerate() {
        writeln!(w, "soc {i} {:?} dim {}", c.tag, 1 + c.tail.len())?;
        affine(w, "head", &c.head)?;
        for t in &c.tail {
            affine(w, "tail", t)?;
        }
    }
    Ok(())
}
