//! Trace CSV. Header:
//!
//! ```text
//! t,run,x_0,...,xhat_0,...,gamma_0,...,u_0,...,cost
//! ```
//!
//! `gamma_<n>` is `1` when link `n` delivered the state behind `xhat` at
//! `t` (the known initial state counts as delivered). Indices are
//! zero-based; `u_0..` runs over the remote input first.

use std::io::{self, Write};

use dncs_core::simulator::TraceRow;

pub fn header(states: usize, links: usize, inputs: usize) -> String {
    let mut cols = vec!["t".to_string(), "run".to_string()];
    cols.extend((0..states).map(|i| format!("x_{i}")));
    cols.extend((0..states).map(|i| format!("xhat_{i}")));
    cols.extend((0..links).map(|n| format!("gamma_{n}")));
    cols.extend((0..inputs).map(|j| format!("u_{j}")));
    cols.push("cost".to_string());
    cols.join(",")
}

pub fn write_csv<W: Write>(
    out: &mut W,
    rows: &[TraceRow<f64>],
    states: usize,
    links: usize,
    inputs: usize,
) -> io::Result<()> {
    writeln!(out, "{}", header(states, links, inputs))?;
    for r in rows {
        write!(out, "{},{}", r.t, r.run)?;
        for v in r.x.iter().chain(r.x_hat.iter()) {
            write!(out, ",{v}")?;
        }
        for &g in &r.gamma {
            write!(out, ",{}", u8::from(g))?;
        }
        for v in r.u.iter() {
            write!(out, ",{v}")?;
        }
        writeln!(out, ",{}", r.cost)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn header_order() {
        assert_eq!(
            header(2, 1, 3),
            "t,run,x_0,x_1,xhat_0,xhat_1,gamma_0,u_0,u_1,u_2,cost"
        );
    }

    #[test]
    fn one_row() {
        let row = TraceRow {
            t: 3,
            run: 1,
            x: dvector![0.5],
            x_hat: dvector![0.25],
            gamma: vec![false],
            u: dvector![-1.0, 0.0],
            cost: 2.0,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, &[row], 1, 1, 2).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "t,run,x_0,xhat_0,gamma_0,u_0,u_1,cost\n3,1,0.5,0.25,0,-1,0,2\n"
        );
    }
}
