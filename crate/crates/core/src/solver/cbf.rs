//! Reading and writing [`ConicProgram`]s in the Conic Benchmark Format (CBF,
//! version 3), so a relaxation can be handed to MOSEK, SCS, etc.
//!
//! Scalar variables are written free ones first, then nonnegative ones; all
//! rows become one `L=` cone with `b = -rhs`. CBF PSD coefficients describe a
//! symmetric matrix, so an off-diagonal coefficient `c` on `X[i, j]` is
//! written as `c / 2`.

use std::fmt::Write as _;

use crate::conic::{ConicProgram, Sense, Var};
use crate::error::{ParseError, Result, RoaError};

pub fn write(p: &ConicProgram) -> String {
    let mut s = String::new();
    let scalar = |v: Var| match v {
        Var::Free(j) => Some(j),
        Var::Nonneg(j) => Some(p.n_free + j),
        Var::Psd { .. } => None,
    };
    let psd_val = |row: usize, col: usize, c: f64| if row == col { c } else { 0.5 * c };

    s.push_str("VER\n3\n\n");
    let sense = match p.sense {
        Sense::Minimize => "MIN",
        Sense::Maximize => "MAX",
    };
    writeln!(s, "OBJSENSE\n{sense}\n").unwrap();

    let chunks: Vec<(&str, usize)> = [("F", p.n_free), ("L+", p.n_nonneg)]
        .into_iter()
        .filter(|c| c.1 > 0)
        .collect();
    writeln!(s, "VAR\n{} {}", p.n_free + p.n_nonneg, chunks.len()).unwrap();
    for (k, n) in &chunks {
        writeln!(s, "{k} {n}").unwrap();
    }
    s.push('\n');

    if !p.psd_orders.is_empty() {
        writeln!(s, "PSDVAR\n{}", p.psd_orders.len()).unwrap();
        for n in &p.psd_orders {
            writeln!(s, "{n}").unwrap();
        }
        s.push('\n');
    }

    if !p.rows.is_empty() {
        writeln!(s, "CON\n{} 1\nL= {}\n", p.rows.len(), p.rows.len()).unwrap();
    }

    let mut obja = Vec::new();
    let mut objf = Vec::new();
    for &(v, c) in &p.objective {
        match v {
            Var::Psd { block, row, col } => objf.push(format!("{block} {row} {col} {:e}", psd_val(row, col, c))),
            _ => obja.push(format!("{} {c:e}", scalar(v).unwrap())),
        }
    }
    let mut acoord = Vec::new();
    let mut fcoord = Vec::new();
    let mut bcoord = Vec::new();
    for (i, r) in p.rows.iter().enumerate() {
        for &(v, c) in &r.terms {
            match v {
                Var::Psd { block, row, col } => {
                    fcoord.push(format!("{i} {block} {row} {col} {:e}", psd_val(row, col, c)))
                }
                _ => acoord.push(format!("{i} {} {c:e}", scalar(v).unwrap())),
            }
        }
        if r.rhs != 0.0 {
            bcoord.push(format!("{i} {:e}", -r.rhs));
        }
    }
    for (name, lines) in [
        ("OBJFCOORD", objf),
        ("OBJACOORD", obja),
        ("FCOORD", fcoord),
        ("ACOORD", acoord),
        ("BCOORD", bcoord),
    ] {
        if lines.is_empty() {
            continue;
        }
        writeln!(s, "{name}\n{}", lines.len()).unwrap();
        for l in lines {
            s.push_str(&l);
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

fn bad(msg: impl Into<String>) -> RoaError {
    RoaError::Parse(ParseError::Problem(format!("CBF: {}", msg.into())))
}

/// Parses the subset of CBF produced by [`write`].
pub fn read(src: &str) -> Result<ConicProgram> {
    let mut lines = src
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let mut p = ConicProgram::new(Sense::Minimize);
    let mut n_rows = 0usize;

    fn nums<'a>(line: Option<&'a str>, what: &str) -> Result<Vec<&'a str>> {
        line.map(|l| l.split_whitespace().collect())
            .ok_or_else(|| bad(format!("unexpected end of input in {what}")))
    }
    fn int(s: &str) -> Result<usize> {
        s.parse().map_err(|_| bad(format!("expected an integer, got `{s}`")))
    }
    fn real(s: &str) -> Result<f64> {
        s.parse().map_err(|_| bad(format!("expected a number, got `{s}`")))
    }

    let scalar_var = |p: &ConicProgram, j: usize| -> Result<Var> {
        if j < p.n_free {
            Ok(Var::Free(j))
        } else if j < p.n_free + p.n_nonneg {
            Ok(Var::Nonneg(j - p.n_free))
        } else {
            Err(bad(format!("scalar variable {j} out of range")))
        }
    };
    let psd_coef = |row: usize, col: usize, v: f64| if row == col { v } else { 2.0 * v };

    while let Some(head) = lines.next() {
        match head {
            "VER" => {
                let v = nums(lines.next(), head)?;
                if v.first().map(|s| int(s)).transpose()? != Some(3) {
                    return Err(bad("only version 3 is supported"));
                }
            }
            "OBJSENSE" => {
                p.sense = match lines.next() {
                    Some("MIN") => Sense::Minimize,
                    Some("MAX") => Sense::Maximize,
                    other => return Err(bad(format!("bad objective sense {other:?}"))),
                };
            }
            "VAR" => {
                let h = nums(lines.next(), head)?;
                let chunks = int(h.get(1).ok_or_else(|| bad("VAR header"))?)?;
                for _ in 0..chunks {
                    let c = nums(lines.next(), head)?;
                    let n = int(c.get(1).ok_or_else(|| bad("VAR chunk"))?)?;
                    match c[0] {
                        "F" if p.n_nonneg == 0 => p.n_free += n,
                        "L+" => p.n_nonneg += n,
                        k => return Err(bad(format!("unsupported variable cone `{k}`"))),
                    }
                }
            }
            "PSDVAR" => {
                let n = int(nums(lines.next(), head)?[0])?;
                for _ in 0..n {
                    let o = int(nums(lines.next(), head)?[0])?;
                    p.add_psd(o);
                }
            }
            "CON" => {
                let h = nums(lines.next(), head)?;
                n_rows = int(h[0])?;
                let chunks = int(h.get(1).ok_or_else(|| bad("CON header"))?)?;
                for _ in 0..chunks {
                    let c = nums(lines.next(), head)?;
                    if c[0] != "L=" {
                        return Err(bad(format!("unsupported constraint cone `{}`", c[0])));
                    }
                }
                for _ in 0..n_rows {
                    p.add_row(Vec::new(), 0.0);
                }
            }
            "OBJACOORD" | "OBJFCOORD" | "ACOORD" | "FCOORD" | "BCOORD" => {
                let nnz = int(nums(lines.next(), head)?[0])?;
                for _ in 0..nnz {
                    let f = nums(lines.next(), head)?;
                    let row = |k: usize| -> Result<usize> {
                        let i = int(f[k])?;
                        if i < n_rows {
                            Ok(i)
                        } else {
                            Err(bad(format!("row {i} out of range")))
                        }
                    };
                    let need = match head {
                        "OBJACOORD" | "BCOORD" => 2,
                        "OBJFCOORD" | "ACOORD" => 3 + usize::from(head == "OBJFCOORD"),
                        _ => 5,
                    };
                    if f.len() != need {
                        return Err(bad(format!("{head} entry needs {need} fields")));
                    }
                    match head {
                        "OBJACOORD" => {
                            let v = scalar_var(&p, int(f[0])?)?;
                            p.objective.push((v, real(f[1])?));
                        }
                        "OBJFCOORD" => {
                            let (b, i, j) = (int(f[0])?, int(f[1])?, int(f[2])?);
                            p.objective.push((Var::psd(b, i, j), psd_coef(i, j, real(f[3])?)));
                        }
                        "ACOORD" => {
                            let r = row(0)?;
                            let v = scalar_var(&p, int(f[1])?)?;
                            p.rows[r].terms.push((v, real(f[2])?));
                        }
                        "FCOORD" => {
                            let r = row(0)?;
                            let (b, i, j) = (int(f[1])?, int(f[2])?, int(f[3])?);
                            p.rows[r].terms.push((Var::psd(b, i, j), psd_coef(i, j, real(f[4])?)));
                        }
                        _ => {
                            let r = row(0)?;
                            p.rows[r].rhs = -real(f[1])?;
                        }
                    }
                }
            }
            other => return Err(bad(format!("unsupported section `{other}`"))),
        }
    }
    p.validate()?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConicProgram {
        let mut p = ConicProgram::new(Sense::Maximize);
        p.add_free(2);
        p.add_nonneg(1);
        let b = p.add_psd(3);
        p.add_row(
            vec![(Var::Free(0), 1.5), (Var::psd(b, 2, 0), 2.0), (Var::Nonneg(0), -1.0)],
            0.25,
        );
        p.add_row(vec![(Var::Free(1), 1.0), (Var::psd(b, 1, 1), 1.0)], 0.0);
        p.objective = vec![(Var::Free(0), 1.0), (Var::psd(b, 1, 0), 0.1)];
        p
    }

    #[test]
    fn write_layout() {
        let text = write(&sample());
        assert!(text.contains("OBJSENSE\nMAX"));
        assert!(text.contains("VAR\n3 2\nF 2\nL+ 1"));
        assert!(text.contains("CON\n2 1\nL= 2"));
        // off-diagonal entries are halved
        assert!(text.contains("0 0 2 0 1e0"));
        assert!(text.contains("BCOORD\n1\n0 -2.5e-1"));
    }

    #[test]
    fn round_trip() {
        let sorted = |mut p: ConicProgram| {
            p.objective.sort_by(|a, b| a.0.cmp(&b.0));
            for r in &mut p.rows {
                r.terms.sort_by(|a, b| a.0.cmp(&b.0));
            }
            p
        };
        let p = sample();
        let q = read(&write(&p)).unwrap();
        assert_eq!(sorted(p), sorted(q));
    }

    #[test]
    fn rejects_unknown_sections() {
        assert!(read("VER\n3\nINT\n1\n0\n").is_err());
        assert!(read("VER\n2\n").is_err());
    }

    #[test]
    fn solution_is_preserved() {
        let mut p = ConicProgram::new(Sense::Minimize);
        let b = p.add_psd(2);
        p.add_row(vec![(Var::psd(b, 0, 0), 1.0)], 1.0);
        p.add_row(vec![(Var::psd(b, 1, 1), 1.0)], 1.0);
        p.objective = vec![(Var::psd(b, 1, 0), 1.0)];
        let q = read(&write(&p)).unwrap();
        let opts = crate::solver::SolverOptions::default();
        let a = crate::solver::solve(&p, &opts).unwrap();
        let c = crate::solver::solve(&q, &opts).unwrap();
        assert!((a.primal_objective - c.primal_objective).abs() < 1e-12);
    }
}
