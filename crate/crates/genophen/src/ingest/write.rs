//! Writers for the five input tables.
//!
//! The synthetic generator and the round-trip tests share these. Floats are
//! written with Rust's shortest round-trip formatting, so parsing a written
//! file reproduces the in-memory values exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DayWeather, FeatureTable, GenotypeTable, Observation};
use crate::error::Result;

pub fn write_genotypes(table: &GenotypeTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "snp_id\tchrom\tpos\tcontext")?;
    for h in &table.hybrids {
        write!(out, "\t{h}")?;
    }
    writeln!(out)?;
    for (s, snp) in table.snps.iter().enumerate() {
        write!(out, "{}\t{}\t{}\t{}", snp.id, snp.chromosome, snp.position, snp.context)?;
        for h in 0..table.hybrids.len() {
            write!(out, "\t{}", table.call(h, s))?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_weather_daily(
    weather: &BTreeMap<String, Vec<DayWeather>>,
    path: &Path,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "env_id\tdate\tsrad\tvp\tprcp\ttmax\ttmin\twind")?;
    for (env, days) in weather {
        for d in days {
            writeln!(
                out,
                "{env}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                d.date.format("%Y-%m-%d"),
                d.srad,
                d.vp,
                d.prcp,
                d.tmax,
                d.tmin,
                d.wind
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "env_id")?;
    for n in &table.names {
        write!(out, "\t{n}")?;
    }
    writeln!(out)?;
    for (env, row) in &table.rows {
        write!(out, "{env}")?;
        for v in row {
            if v.is_nan() {
                write!(out, "\tNA")?;
            } else {
                write!(out, "\t{v}")?;
            }
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_phenotypes(observations: &[Observation], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "env_id\thybrid_id\tyield")?;
    for obs in observations {
        writeln!(out, "{}\t{}\t{}", obs.env_id, obs.hybrid_id, obs.yield_value)?;
    }
    out.flush()?;
    Ok(())
}
