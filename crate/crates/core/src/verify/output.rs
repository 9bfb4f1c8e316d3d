//! CSV views of a [`MonteCarloReport`](super::MonteCarloReport).

use std::io::Write;

use super::montecarlo::{CovarianceCheck, TailTable};
use super::rates::RatePoint;
use crate::error::Result;

pub fn write_tails_csv<W: Write>(tables: &[TailTable], mut w: W) -> Result<()> {
    writeln!(w, "n,delta,count,R,p_hat,ci_lo,ci_hi")?;
    for t in tables {
        for r in &t.rows {
            writeln!(w, "{},{},{},{},{},{},{}", t.n, r.delta, r.count, r.total, r.p_hat, r.ci_lo, r.ci_hi)?;
        }
    }
    Ok(())
}

pub fn write_rates_csv<W: Write>(points: &[RatePoint], mut w: W) -> Result<()> {
    writeln!(w, "x,b_N,p_hat,R_hat,censored,I_theory")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.x, p.b_n, p.p_hat, p.r_hat, p.censored, p.i_theory)?;
    }
    Ok(())
}

pub fn write_cov_csv<W: Write>(cov: &CovarianceCheck, mut w: W) -> Result<()> {
    writeln!(w, "i,j,empirical,theory")?;
    for (i, (er, tr)) in cov.empirical.iter().zip(&cov.theory).enumerate() {
        for (j, (e, t)) in er.iter().zip(tr).enumerate() {
            writeln!(w, "{i},{j},{e},{t}")?;
        }
    }
    Ok(())
}
