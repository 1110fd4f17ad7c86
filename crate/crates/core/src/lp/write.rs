use std::io::{self, Write};

use super::{LinearProgram, Sense};

/// LP-format names may not contain spaces or start with a digit; the names
/// built in this crate only need `:`, `[`, `]` and `@` replaced.
fn lp_name(name: &str) -> String {
    let mut out: String = name
        .chars()
        .map(|c| match c {
            ':' | '[' | ']' | '@' | ' ' | '-' | '+' => '_',
            c => c,
        })
        .collect();
    if out.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        out.insert(0, '_');
    }
    out
}

fn write_terms<W: Write>(
    out: &mut W,
    terms: impl Iterator<Item = (f64, String)>,
) -> io::Result<()> {
    let mut first = true;
    let mut width = 0;
    for (c, name) in terms {
        if c == 0.0 {
            continue;
        }
        let sign = if c < 0.0 { " -" } else if first { "" } else { " +" };
        let piece = format!("{sign} {} {name}", c.abs());
        width += piece.len();
        if width > 200 {
            writeln!(out)?;
            width = piece.len();
        }
        write!(out, "{piece}")?;
        first = false;
    }
    if first {
        write!(out, " 0")?;
    }
    Ok(())
}

/// Writes `lp` in CPLEX LP text format, for cross-checking with external
/// solvers. The secondary objective is not representable and is omitted.
pub fn write_lp_format<W: Write>(lp: &LinearProgram, out: &mut W) -> io::Result<()> {
    let names: Vec<String> = lp.variables().iter().map(|v| lp_name(&v.name)).collect();
    writeln!(out, "\\ generated by market-core")?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    write_terms(
        out,
        lp.objective().iter().zip(&names).map(|(&c, n)| (c, n.clone())),
    )?;
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for con in lp.constraints() {
        write!(out, " {}:", lp_name(&con.name))?;
        write_terms(out, con.coeffs.iter().map(|&(j, a)| (a, names[j].clone())))?;
        let op = match con.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(out, " {op} {}", con.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for (v, name) in lp.variables().iter().zip(&names) {
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => writeln!(out, " {name} free")?,
            (true, true) if v.lower == v.upper => writeln!(out, " {name} = {}", v.lower)?,
            (true, true) => writeln!(out, " {} <= {name} <= {}", v.lower, v.upper)?,
            (true, false) => {
                if v.lower != 0.0 {
                    writeln!(out, " {name} >= {}", v.lower)?
                }
            }
            (false, true) => writeln!(out, " -inf <= {name} <= {}", v.upper)?,
        }
    }
    writeln!(out, "End")
}
