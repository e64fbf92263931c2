use std::fmt::Write;

use super::{is_finite_bound, LinearProgram, ObjSense, RowSense};

fn term(out: &mut String, first: bool, coef: f64, name: &str) {
    if coef < 0.0 {
        let _ = write!(out, " - {} {}", -coef, name);
    } else if first {
        let _ = write!(out, " {} {}", coef, name);
    } else {
        let _ = write!(out, " + {} {}", coef, name);
    }
}

/// Renders the program in the CPLEX LP text format.
pub fn write_lp_format(lp: &LinearProgram) -> String {
    let mut out = String::new();
    out.push_str(match lp.sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, first, c, &lp.names[j]);
            first = false;
        }
    }
    if first {
        let _ = write!(out, " 0 {}", lp.names.first().map_or("x0", String::as_str));
    }
    out.push_str("\nSubject To\n");
    for (r, row) in lp.rows.iter().enumerate() {
        let _ = write!(out, " c{r}:");
        let mut first = true;
        for &(j, a) in &row.coefs {
            if a != 0.0 {
                term(&mut out, first, a, &lp.names[j]);
                first = false;
            }
        }
        if first {
            let _ = write!(out, " 0 {}", lp.names.first().map_or("x0", String::as_str));
        }
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let name = &lp.names[j];
        match (is_finite_bound(l), is_finite_bound(u)) {
            (true, true) if l == u => {
                let _ = writeln!(out, " {name} = {l}");
            }
            (true, true) => {
                let _ = writeln!(out, " {l} <= {name} <= {u}");
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {l}");
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {u}");
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::INF;

    #[test]
    fn renders_sections() {
        let mut lp = LinearProgram::new(ObjSense::Maximize);
        let x = lp.add_named_var("x", 0.0, 10.0, 1.0);
        let y = lp.add_named_var("y", -INF, INF, -2.0);
        lp.add_row(vec![(x, 1.0), (y, -1.0)], RowSense::Le, 3.0);
        let text = write_lp_format(&lp);
        assert!(text.starts_with("Maximize\n obj: 1 x - 2 y\n"));
        assert!(text.contains(" c0: 1 x - 1 y <= 3\n"));
        assert!(text.contains(" 0 <= x <= 10\n"));
        assert!(text.contains(" y free\n"));
        assert!(text.ends_with("End\n"));
    }
}
