//! CSV input and output.
//!
//! Floating-point values are written with 17 significant digits so that
//! reading a file back reproduces the in-memory values exactly.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::design::{CohortData, Family};
use crate::error::{DlimError, Result};
use crate::sampler::PosteriorDraws;

/// A CSV file held as text, parsed column by column on demand.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub source: String,
    pub headers: Vec<String>,
    rows: Vec<Vec<String>>,
    lines: Vec<u64>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<RawTable> {
        let source = path.display().to_string();
        let file = File::open(path).map_err(|e| DlimError::InvalidData(format!("cannot open {source}: {e}")))?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| DlimError::InvalidData(format!("{source}: {e}")))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(DlimError::InvalidData(format!("{source}: missing header row")));
        }
        let mut rows = Vec::new();
        let mut lines = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| DlimError::InvalidData(format!("{source}: {e}")))?;
            let line = record.position().map_or(0, |p| p.line());
            rows.push(record.iter().map(|f| f.trim().to_string()).collect());
            lines.push(line);
        }
        Ok(RawTable {
            source,
            headers,
            rows,
            lines,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Numeric matrix of the chosen columns; missing or malformed cells are
    /// reported with their line and column.
    pub fn numeric(&self, columns: &[usize]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.rows.len(), columns.len());
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &c) in columns.iter().enumerate() {
                let cell = row.get(c).map(String::as_str).unwrap_or("");
                let where_ = || format!("{}: line {}, column '{}'", self.source, self.lines[i], self.headers[c]);
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    return Err(DlimError::InvalidData(format!("{}: missing value", where_())));
                }
                out[(i, j)] = cell
                    .parse::<f64>()
                    .map_err(|_| DlimError::InvalidData(format!("{}: '{cell}' is not a number", where_())))?;
                if !out[(i, j)].is_finite() {
                    return Err(DlimError::InvalidData(format!("{}: value is not finite", where_())));
                }
            }
        }
        Ok(out)
    }

    pub fn all_numeric(&self) -> Result<DMatrix<f64>> {
        self.numeric(&(0..self.headers.len()).collect::<Vec<_>>())
    }

    /// Column positions for a list like `y`, `age,income` or `pm_w1..pm_w37`
    /// (an inclusive range by header position).
    pub fn resolve(&self, spec: &str) -> Result<Vec<usize>> {
        let find = |name: &str| {
            self.headers.iter().position(|h| h == name).ok_or_else(|| {
                DlimError::InvalidData(format!("{}: no column named '{name}'", self.source))
            })
        };
        let mut out = Vec::new();
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once("..") {
                Some((a, b)) => {
                    let (a, b) = (find(a.trim())?, find(b.trim())?);
                    if b < a {
                        return Err(DlimError::InvalidData(format!(
                            "{}: column range '{item}' runs backwards",
                            self.source
                        )));
                    }
                    out.extend(a..=b);
                }
                None => out.push(find(item)?),
            }
        }
        if out.is_empty() {
            return Err(DlimError::InvalidData(format!("{}: empty column list '{spec}'", self.source)));
        }
        Ok(out)
    }
}

/// Parses `role:columns` (or `role=columns`) entries.
pub fn parse_roles(entries: &[String]) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for entry in entries {
        let (role, cols) = entry
            .split_once(':')
            .or_else(|| entry.split_once('='))
            .ok_or_else(|| DlimError::InvalidConfig(format!("role '{entry}' must look like exposure:col1..col37")))?;
        let role = role.trim().to_ascii_lowercase();
        let role = match role.as_str() {
            "y" | "response" | "outcome" => "response",
            "x" | "exposure" | "exposures" => "exposure",
            "m" | "modifier" | "modifiers" => "modifiers",
            "z" | "covariate" | "covariates" => "covariates",
            other => return Err(DlimError::InvalidConfig(format!("unknown column role '{other}'"))),
        };
        if map.insert(role.to_string(), cols.trim().to_string()).is_some() {
            return Err(DlimError::InvalidConfig(format!("column role '{role}' given twice")));
        }
    }
    Ok(map)
}

/// Fit input plus the modifier names used in reports.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: CohortData,
    pub modifier_names: Vec<String>,
}

pub struct DataSources<'a> {
    pub response: Option<&'a Path>,
    pub exposure: Option<&'a Path>,
    pub modifiers: Option<&'a Path>,
    pub covariates: Option<&'a Path>,
    pub combined: Option<&'a Path>,
    pub roles: &'a [String],
    pub family: Family,
    pub scale_modifiers: bool,
}

fn min_max_scale(m: &mut DMatrix<f64>, names: &[String]) -> Result<()> {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let (lo, hi) = (col.min(), col.max());
        if hi <= lo {
            return Err(DlimError::InvalidData(format!("modifier '{}' is constant", names[j])));
        }
        col.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    }
    Ok(())
}

/// Loads cohort data; covariates get a leading intercept column.
pub fn load_cohort(src: &DataSources<'_>) -> Result<LoadedData> {
    let (y, x, mut m, names, cov) = if let Some(path) = src.combined {
        let table = RawTable::read(path)?;
        let roles = parse_roles(src.roles)?;
        let role = |r: &str| {
            roles
                .get(r)
                .ok_or_else(|| DlimError::InvalidConfig(format!("combined data needs a '{r}' role")))
        };
        let y_cols = table.resolve(role("response")?)?;
        if y_cols.len() != 1 {
            return Err(DlimError::InvalidConfig("the response role must name one column".into()));
        }
        let m_cols = table.resolve(role("modifiers")?)?;
        let names = m_cols.iter().map(|&c| table.headers[c].clone()).collect();
        let cov = match roles.get("covariates") {
            Some(spec) => Some(table.numeric(&table.resolve(spec)?)?),
            None => None,
        };
        (
            table.numeric(&y_cols)?,
            table.numeric(&table.resolve(role("exposure")?)?)?,
            table.numeric(&m_cols)?,
            names,
            cov,
        )
    } else {
        fn need(p: Option<&Path>, what: &str) -> Result<RawTable> {
            RawTable::read(p.ok_or_else(|| DlimError::InvalidConfig(format!("missing --{what} file")))?)
        }
        let y = need(src.response, "response")?;
        if y.headers.len() != 1 {
            return Err(DlimError::InvalidData(format!("{}: expected one response column", y.source)));
        }
        let mt = need(src.modifiers, "modifiers")?;
        let cov = match src.covariates {
            Some(p) => Some(RawTable::read(p)?.all_numeric()?),
            None => None,
        };
        (
            y.all_numeric()?,
            need(src.exposure, "exposure")?.all_numeric()?,
            mt.all_numeric()?,
            mt.headers.clone(),
            cov,
        )
    };
    let n = y.nrows();
    if src.scale_modifiers {
        min_max_scale(&mut m, &names)?;
    }
    let p = 1 + cov.as_ref().map_or(0, |c| c.ncols());
    let mut z = DMatrix::from_element(n, p, 1.0);
    if let Some(c) = &cov {
        if c.nrows() != n {
            return Err(DlimError::mismatch("covariate rows", n, c.nrows()));
        }
        z.columns_mut(1, c.ncols()).copy_from(c);
    }
    let data = CohortData::new(DVector::from_column_slice(y.as_slice()), x, m, z, src.family)?;
    Ok(LoadedData {
        data,
        modifier_names: names,
    })
}

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| DlimError::InvalidData(format!("cannot write {}: {e}", path.display())))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let io_err = |e: csv::Error| DlimError::InvalidData(format!("cannot write {}: {e}", path.display()));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush()
        .map_err(|e| DlimError::InvalidData(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| DlimError::InvalidData(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| DlimError::InvalidData(format!("cannot write {}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    write_csv(path, header, (0..m.nrows()).map(|i| m.row(i).iter().map(|&v| fmt_f64(v)).collect()))
}

pub fn draws_header(draws: &PosteriorDraws) -> Vec<String> {
    let mut h = vec!["iter".to_string()];
    h.extend((1..=draws.theta.ncols()).map(|j| format!("theta_{j}")));
    h.extend((1..=draws.gamma.ncols()).map(|j| format!("gamma_{j}")));
    h.push("sigma2".into());
    h.extend((1..=draws.a.ncols()).map(|j| format!("a_{j}")));
    h.extend((1..=draws.eta.ncols()).map(|j| format!("eta_{j}")));
    h
}

/// One row per stored draw; `sigma2` is `NA` for the binomial family.
pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    let rows = (0..draws.len()).map(|s| {
        let mut row = vec![draws.iterations[s].to_string()];
        row.extend(draws.theta.row(s).iter().map(|&v| fmt_f64(v)));
        row.extend(draws.gamma.row(s).iter().map(|&v| fmt_f64(v)));
        row.push(draws.sigma2.as_ref().map_or("NA".to_string(), |v| fmt_f64(v[s])));
        row.extend(draws.a.row(s).iter().map(|&v| fmt_f64(v)));
        row.extend(draws.eta.row(s).iter().map(|&v| v.to_string()));
        row
    });
    write_csv(path, &draws_header(draws), rows)
}

fn count_prefix(headers: &[String], prefix: &str) -> usize {
    headers.iter().filter(|h| h.starts_with(prefix)).count()
}

/// Reads a draw file; acceptance bookkeeping is not stored there and comes back as zeros.
pub fn read_draws(path: &Path, chain_id: usize) -> Result<(Vec<String>, PosteriorDraws)> {
    let table = RawTable::read(path)?;
    let h = &table.headers;
    let (jk, p, l) = (count_prefix(h, "theta_"), count_prefix(h, "gamma_"), count_prefix(h, "a_"));
    let expected_len = 1 + jk + p + 1 + 2 * l;
    if h.first().map(String::as_str) != Some("iter") || h.len() != expected_len || count_prefix(h, "eta_") != l {
        return Err(DlimError::InvalidData(format!("{}: not a draws file (unexpected header)", table.source)));
    }
    let block = |start: usize, len: usize| table.numeric(&(start..start + len).collect::<Vec<_>>());
    let iters = block(0, 1)?;
    let theta = block(1, jk)?;
    let gamma = block(1 + jk, p)?;
    let sigma_col = 1 + jk + p;
    let sigma2 = if table.rows.iter().all(|r| r[sigma_col].eq_ignore_ascii_case("na")) {
        None
    } else {
        Some(block(sigma_col, 1)?.iter().copied().collect())
    };
    let a = block(sigma_col + 1, l)?;
    let eta_f = block(sigma_col + 1 + l, l)?;
    Ok((
        h.clone(),
        PosteriorDraws {
            chain_id,
            seed: 0,
            iterations: iters.iter().map(|&v| v as usize).collect(),
            theta,
            gamma,
            sigma2,
            a,
            eta: eta_f.map(|v| u8::from(v != 0.0)),
            accept_count: vec![0; l],
            attempt_count: vec![0; l],
            blocked_deaths: 0,
            final_zeta: vec![0.0; l],
        },
    ))
}
