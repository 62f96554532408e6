//! Parsers for the five tab-separated input tables.
//!
//! Schemas (headers are mandatory, all files UTF-8, tab-separated):
//!
//! ```text
//! genotypes.tsv   snp_id  chrom  pos  context  <hybrid_1> ... <hybrid_H>
//! weather.tsv     env_id  date  srad  vp  prcp  tmax  tmin  wind
//! soil.tsv        env_id  <19 numeric feature columns>
//! management.tsv  env_id  <5 numeric feature columns>
//! phenotypes.tsv  env_id  hybrid_id  yield
//! ```
//!
//! Malformed rows are reported with their path and 1-based line number.
//! Soil cells may be empty or `NA` (missing, imputed later); every other
//! numeric cell must parse finite.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::{
    validate_env_id, DayWeather, FeatureTable, GenotypeTable, Observation, SnpDescriptor,
    MANAGEMENT_FEATURES, SOIL_FEATURES,
};
use crate::error::{Error, Result};

struct TsvFile {
    path: std::path::PathBuf,
    lines: Vec<String>,
}

impl TsvFile {
    fn open(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Data(format!("cannot read {}: {e}", path.display()))
        })?;
        Ok(TsvFile {
            path: path.to_path_buf(),
            lines: text.lines().map(String::from).collect(),
        })
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn header(&self) -> Result<Vec<&str>> {
        match self.lines.first() {
            Some(h) if !h.trim().is_empty() => Ok(h.split('\t').collect()),
            _ => Err(self.err(1, "missing header line")),
        }
    }

    /// Data rows as `(line_number, fields)`, each checked for column count.
    fn rows(&self, expected_cols: usize) -> Result<Vec<(usize, Vec<&str>)>> {
        let mut out = Vec::new();
        for (i, line) in self.lines.iter().enumerate().skip(1) {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != expected_cols {
                return Err(self.err(
                    i + 1,
                    format!("expected {expected_cols} columns, found {}", fields.len()),
                ));
            }
            out.push((i + 1, fields));
        }
        Ok(out)
    }

    fn parse_f64(&self, line: usize, col_name: &str, field: &str) -> Result<f64> {
        let v: f64 = field
            .parse()
            .map_err(|_| self.err(line, format!("column {col_name:?}: invalid number {field:?}")))?;
        if !v.is_finite() {
            return Err(self.err(line, format!("column {col_name:?}: non-finite value")));
        }
        Ok(v)
    }
}

/// Parse `genotypes.tsv`. Each row is one SNP; hybrid columns hold single
/// IUPAC letters.
pub fn parse_genotypes(path: &Path) -> Result<GenotypeTable> {
    let file = TsvFile::open(path)?;
    let header = file.header()?;
    if header.len() < 5 || header[..4] != ["snp_id", "chrom", "pos", "context"] {
        return Err(file.err(
            1,
            "genotype header must start with: snp_id, chrom, pos, context, then hybrid ids",
        ));
    }
    let hybrids: Vec<String> = header[4..].iter().map(|s| s.to_string()).collect();
    let rows = file.rows(header.len())?;

    let mut snps = Vec::with_capacity(rows.len());
    // Calls arrive SNP-major; the table stores hybrids x snps.
    let mut calls_by_snp: Vec<Vec<u8>> = Vec::with_capacity(rows.len());
    for (line, fields) in rows {
        let chromosome: u32 = fields[1]
            .parse()
            .map_err(|_| file.err(line, format!("invalid chromosome {:?}", fields[1])))?;
        let position: u64 = fields[2]
            .parse()
            .map_err(|_| file.err(line, format!("invalid position {:?}", fields[2])))?;
        snps.push(SnpDescriptor {
            id: fields[0].to_string(),
            chromosome,
            position,
            context: fields[3].to_string(),
        });
        let mut row_calls = Vec::with_capacity(hybrids.len());
        for (h, cell) in fields[4..].iter().enumerate() {
            let mut chars = cell.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(file.err(
                    line,
                    format!("column {:?}: call must be a single letter, got {cell:?}", hybrids[h]),
                ));
            };
            if !super::CALL_ALPHABET.contains(&c) {
                return Err(file.err(
                    line,
                    format!("column {:?}: letter {c:?} outside the IUPAC alphabet", hybrids[h]),
                ));
            }
            row_calls.push(c as u8);
        }
        calls_by_snp.push(row_calls);
    }

    let mut calls = vec![0u8; hybrids.len() * snps.len()];
    for (s, row) in calls_by_snp.iter().enumerate() {
        for (h, &c) in row.iter().enumerate() {
            calls[h * snps.len() + s] = c;
        }
    }
    GenotypeTable::new(snps, hybrids, calls)
}

/// Parse `weather.tsv` into per-environment day sequences. Within each
/// environment, dates must be strictly increasing in file order.
pub fn parse_weather_daily(path: &Path) -> Result<BTreeMap<String, Vec<DayWeather>>> {
    let file = TsvFile::open(path)?;
    let header = file.header()?;
    let expected = ["env_id", "date", "srad", "vp", "prcp", "tmax", "tmin", "wind"];
    if header != expected {
        return Err(file.err(1, format!("weather header must be {expected:?}")));
    }
    let mut out: BTreeMap<String, Vec<DayWeather>> = BTreeMap::new();
    for (line, fields) in file.rows(8)? {
        let env_id = fields[0].to_string();
        validate_env_id(&env_id).map_err(|e| file.err(line, e.to_string()))?;
        let date = NaiveDate::parse_from_str(fields[1], "%Y-%m-%d")
            .map_err(|_| file.err(line, format!("invalid date {:?} (want YYYY-MM-DD)", fields[1])))?;
        let day = DayWeather {
            date,
            srad: file.parse_f64(line, "srad", fields[2])?,
            vp: file.parse_f64(line, "vp", fields[3])?,
            prcp: file.parse_f64(line, "prcp", fields[4])?,
            tmax: file.parse_f64(line, "tmax", fields[5])?,
            tmin: file.parse_f64(line, "tmin", fields[6])?,
            wind: file.parse_f64(line, "wind", fields[7])?,
        };
        if day.tmax < day.tmin {
            return Err(file.err(line, format!("tmax {} below tmin {}", day.tmax, day.tmin)));
        }
        let days = out.entry(env_id).or_default();
        if let Some(prev) = days.last() {
            if day.date <= prev.date {
                return Err(file.err(
                    line,
                    format!("dates must be strictly increasing per environment, {} after {}", day.date, prev.date),
                ));
            }
        }
        days.push(day);
    }
    Ok(out)
}

fn parse_feature_table(
    path: &Path,
    expected_features: usize,
    allow_missing: bool,
) -> Result<FeatureTable> {
    let file = TsvFile::open(path)?;
    let header = file.header()?;
    if header.first() != Some(&"env_id") {
        return Err(file.err(1, "first column must be env_id"));
    }
    if header.len() != expected_features + 1 {
        return Err(file.err(
            1,
            format!(
                "expected env_id plus {expected_features} feature columns, found {}",
                header.len() - 1
            ),
        ));
    }
    let names: Vec<String> = header[1..].iter().map(|s| s.to_string()).collect();
    let mut rows = BTreeMap::new();
    for (line, fields) in file.rows(header.len())? {
        let env_id = fields[0].to_string();
        validate_env_id(&env_id).map_err(|e| file.err(line, e.to_string()))?;
        let mut values = Vec::with_capacity(names.len());
        for (j, cell) in fields[1..].iter().enumerate() {
            if allow_missing && (cell.is_empty() || *cell == "NA") {
                values.push(f64::NAN);
            } else {
                values.push(file.parse_f64(line, &names[j], cell)?);
            }
        }
        if rows.insert(env_id.clone(), values).is_some() {
            return Err(file.err(line, format!("duplicate environment id {env_id:?}")));
        }
    }
    Ok(FeatureTable { names, rows })
}

/// Parse `soil.tsv` (19 features; empty or `NA` cells are missing).
pub fn parse_soil(path: &Path) -> Result<FeatureTable> {
    parse_feature_table(path, SOIL_FEATURES, true)
}

/// Parse `management.tsv` (5 features; no missing cells allowed).
pub fn parse_management(path: &Path) -> Result<FeatureTable> {
    parse_feature_table(path, MANAGEMENT_FEATURES, false)
}

/// Parse `phenotypes.tsv`.
pub fn parse_phenotypes(path: &Path) -> Result<Vec<Observation>> {
    let file = TsvFile::open(path)?;
    let header = file.header()?;
    if header != ["env_id", "hybrid_id", "yield"] {
        return Err(file.err(1, "phenotype header must be: env_id, hybrid_id, yield"));
    }
    let mut out = Vec::new();
    for (line, fields) in file.rows(3)? {
        validate_env_id(fields[0]).map_err(|e| file.err(line, e.to_string()))?;
        out.push(Observation {
            env_id: fields[0].to_string(),
            hybrid_id: fields[1].to_string(),
            yield_value: file.parse_f64(line, "yield", fields[2])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn genotypes_well_formed() {
        let f = write_tmp(
            "snp_id\tchrom\tpos\tcontext\th1\th2\th3\n\
             s1\t1\t100\tACGTA\tA\tK\tG\n\
             s2\t7\t23\tTTCTT\tC\tC\tY\n",
        );
        let table = parse_genotypes(f.path()).unwrap();
        assert_eq!(table.shape(), (3, 2));
        assert_eq!(table.call(1, 0), 'K');
        assert_eq!(table.snps[1].reference_base(), 'C');
    }

    #[test]
    fn genotypes_bad_letter_names_row_and_column() {
        let f = write_tmp(
            "snp_id\tchrom\tpos\tcontext\th1\th2\n\
             s1\t1\t100\tACGTA\tA\tZ\n",
        );
        let err = parse_genotypes(f.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "row in {err:?}");
        assert!(err.contains("h2"), "column in {err:?}");
    }

    #[test]
    fn genotypes_duplicate_snp_id() {
        let f = write_tmp(
            "snp_id\tchrom\tpos\tcontext\th1\n\
             s1\t1\t100\tACGTA\tA\n\
             s1\t2\t200\tGGAGG\tC\n",
        );
        assert!(parse_genotypes(f.path()).is_err());
    }

    #[test]
    fn weather_parses_and_orders() {
        let f = write_tmp(
            "env_id\tdate\tsrad\tvp\tprcp\ttmax\ttmin\twind\n\
             loc1_2015\t2015-05-01\t200\t900\t0\t25\t11\t3.2\n\
             loc1_2015\t2015-05-02\t210\t950\t1.5\t26\t12\t2.8\n",
        );
        let map = parse_weather_daily(f.path()).unwrap();
        assert_eq!(map["loc1_2015"].len(), 2);

        let f = write_tmp(
            "env_id\tdate\tsrad\tvp\tprcp\ttmax\ttmin\twind\n\
             loc1_2015\t2015-05-02\t200\t900\t0\t25\t11\t3.2\n\
             loc1_2015\t2015-05-01\t210\t950\t1.5\t26\t12\t2.8\n",
        );
        assert!(parse_weather_daily(f.path()).is_err(), "out-of-order dates");

        let f = write_tmp(
            "env_id\tdate\tsrad\tvp\tprcp\ttmax\ttmin\twind\n\
             loc1_2015\t2015-05-01\t200\t900\t0\t10\t11\t3.2\n",
        );
        assert!(parse_weather_daily(f.path()).is_err(), "tmax < tmin");
    }

    #[test]
    fn soil_missing_cells_and_count() {
        let names: Vec<String> = (0..19).map(|i| format!("f{i}")).collect();
        let mut content = format!("env_id\t{}\n", names.join("\t"));
        let mut row = vec!["1.5".to_string(); 19];
        row[3] = "NA".into();
        content.push_str(&format!("a_2015\t{}\n", row.join("\t")));
        let f = write_tmp(&content);
        let table = parse_soil(f.path()).unwrap();
        assert_eq!(table.missing_cells(), vec![("a_2015".to_string(), "f3".to_string())]);

        // 18 features is a schema violation.
        let mut short = format!("env_id\t{}\n", names[..18].join("\t"));
        short.push_str(&format!("a_2015\t{}\n", vec!["1"; 18].join("\t")));
        assert!(parse_soil(write_tmp(&short).path()).is_err());
    }

    #[test]
    fn management_rejects_missing() {
        let content = "env_id\tirrigation\tfert_n\tfert_p\tfert_k\tdensity\n\
                       a_2015\t1\t2\tNA\t4\t5\n";
        assert!(parse_management(write_tmp(content).path()).is_err());
    }

    #[test]
    fn phenotypes_roundtrip() {
        let f = write_tmp("env_id\thybrid_id\tyield\na_2015\th1\t182.5\n");
        let obs = parse_phenotypes(f.path()).unwrap();
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].yield_value, 182.5);

        let f = write_tmp("env_id\thybrid_id\tyield\na_2015\th1\tnan\n");
        assert!(parse_phenotypes(f.path()).is_err());
    }
}
