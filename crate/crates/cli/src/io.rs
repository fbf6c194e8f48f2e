//! Reading and writing condition data files and their sidecars.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use jcglasso::{CellStatus, ConditionDataset, DMatrix, DVector};

use crate::CliError;

/// Floats are written with 17 significant digits, which round-trips `f64`.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.16e}")
    }
}

fn parse_bound(tok: &str) -> Option<f64> {
    match tok.trim() {
        "-inf" | "-Inf" => Some(f64::NEG_INFINITY),
        "+inf" | "inf" | "Inf" | "+Inf" => Some(f64::INFINITY),
        t => t.parse::<f64>().ok().filter(|v| v.is_finite()),
    }
}

fn input_err(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {msg}", path.display()))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, CliError> {
    let file = File::open(path).map_err(|e| input_err(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Covariate,
    Response,
}

pub fn read_roles(path: &Path) -> Result<Vec<(String, Role)>, CliError> {
    let mut rdr = csv_reader(path)?;
    let mut out: Vec<(String, Role)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input_err(path, e))?;
        let line = record_line(&rec);
        if rec.len() != 2 {
            return Err(input_err(path, format!("line {line}: expected `variable,role`")));
        }
        let role = match &rec[1] {
            "covariate" => Role::Covariate,
            "response" => Role::Response,
            other => {
                return Err(input_err(
                    path,
                    format!("line {line}, column 2: role must be `covariate` or `response`, got `{other}`"),
                ))
            }
        };
        if out.iter().any(|(v, _)| v == &rec[0]) {
            return Err(input_err(
                path,
                format!("line {line}: variable `{}` listed twice", &rec[0]),
            ));
        }
        out.push((rec[0].to_string(), role));
    }
    Ok(out)
}

/// `(variable, condition) -> (lower, upper)`.
pub type Limits = HashMap<(String, String), (f64, f64)>;

pub fn read_limits(path: &Path) -> Result<Limits, CliError> {
    let mut rdr = csv_reader(path)?;
    let mut out = Limits::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input_err(path, e))?;
        let line = record_line(&rec);
        if rec.len() != 4 {
            return Err(input_err(
                path,
                format!("line {line}: expected `variable,condition,lower,upper`"),
            ));
        }
        let lower = parse_bound(&rec[2])
            .ok_or_else(|| input_err(path, format!("line {line}, column 3: cannot parse `{}`", &rec[2])))?;
        let upper = parse_bound(&rec[3])
            .ok_or_else(|| input_err(path, format!("line {line}, column 4: cannot parse `{}`", &rec[3])))?;
        out.insert((rec[0].to_string(), rec[1].to_string()), (lower, upper));
    }
    Ok(out)
}

pub fn condition_name(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| input_err(path, "cannot derive a condition name from the file name"))
}

/// Raw cells of one data file: `None` marks `NA`.
struct RawTable {
    header: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

fn read_table(path: &Path) -> Result<RawTable, CliError> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| input_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| input_err(path, e))?;
        let line = record_line(&rec);
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, tok)| {
                if tok == "NA" {
                    return Ok(None);
                }
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| input_err(path, format!("line {line}, column {}: cannot parse `{tok}`", c + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(RawTable { header, rows })
}

pub struct InputSpec<'a> {
    pub data: &'a [PathBuf],
    pub roles: &'a Path,
    pub limits: Option<&'a Path>,
    pub censor_at_limits: bool,
}

pub fn read_datasets(spec: &InputSpec<'_>) -> Result<Vec<ConditionDataset>, CliError> {
    if spec.data.is_empty() {
        return Err(CliError::Input("no data files given".into()));
    }
    let roles = read_roles(spec.roles)?;
    let limits = spec.limits.map(read_limits).transpose()?;
    if spec.censor_at_limits && limits.is_none() {
        return Err(CliError::Input(
            "--censor-at-limits needs a limits file (--limits)".into(),
        ));
    }

    let mut names = BTreeMap::new();
    let mut out = Vec::with_capacity(spec.data.len());
    let mut order: Option<Vec<String>> = None;
    for path in spec.data {
        let cond = condition_name(path)?;
        if names.insert(cond.clone(), ()).is_some() {
            return Err(input_err(path, format!("condition `{cond}` appears twice")));
        }
        let table = read_table(path)?;
        for (v, _) in &roles {
            if !table.header.contains(v) {
                return Err(input_err(
                    path,
                    format!("variable `{v}` from the roles file is missing"),
                ));
            }
        }
        for h in &table.header {
            if !roles.iter().any(|(v, _)| v == h) {
                return Err(input_err(path, format!("variable `{h}` has no role")));
            }
        }
        // covariates first, each group in the column order of the first file
        let variables = order
            .get_or_insert_with(|| {
                let role_of = |h: &String| roles.iter().find(|(v, _)| v == h).map(|(_, r)| *r);
                let mut ordered: Vec<String> = table
                    .header
                    .iter()
                    .filter(|h| role_of(h) == Some(Role::Covariate))
                    .cloned()
                    .collect();
                ordered.extend(
                    table
                        .header
                        .iter()
                        .filter(|h| role_of(h) == Some(Role::Response))
                        .cloned(),
                );
                ordered
            })
            .clone();
        let q = roles.iter().filter(|(_, r)| *r == Role::Covariate).count();
        let d = variables.len();
        let col_of: Vec<usize> = variables
            .iter()
            .map(|v| table.header.iter().position(|h| h == v).expect("checked above"))
            .collect();

        let mut lower = DVector::from_element(d, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(d, f64::INFINITY);
        if let Some(lim) = &limits {
            for (j, v) in variables.iter().enumerate() {
                match lim.get(&(v.clone(), cond.clone())) {
                    Some(&(l, u)) => {
                        lower[j] = l;
                        upper[j] = u;
                    }
                    None if spec.censor_at_limits => {
                        return Err(CliError::Input(format!(
                            "no limits for variable `{v}` in condition `{cond}`"
                        )));
                    }
                    None => {}
                }
            }
        }

        let n = table.rows.len();
        let mut x = DMatrix::zeros(n, q);
        let mut y = DMatrix::zeros(n, d - q);
        let mut status = vec![CellStatus::Observed; n * d];
        for (i, row) in table.rows.iter().enumerate() {
            for (j, &c) in col_of.iter().enumerate() {
                let (value, st) = match row[c] {
                    None => (f64::NAN, CellStatus::MissingAtRandom),
                    Some(v) if spec.censor_at_limits && v == upper[j] => (v, CellStatus::RightCensored),
                    Some(v) if spec.censor_at_limits && v == lower[j] => (v, CellStatus::LeftCensored),
                    Some(v) => (v, CellStatus::Observed),
                };
                status[i * d + j] = st;
                if j < q {
                    x[(i, j)] = value;
                } else {
                    y[(i, j - q)] = value;
                }
            }
        }
        let ds = ConditionDataset::new(cond.clone(), variables, x, y, status, lower, upper)
            .map_err(|e| input_err(path, e))?;
        out.push(ds);
    }
    Ok(out)
}

/// Writes `<condition>.csv` per dataset plus `roles.csv` and `limits.csv`,
/// returning the data file paths.
pub fn write_datasets(dir: &Path, datasets: &[ConditionDataset]) -> Result<Vec<PathBuf>, CliError> {
    let io_err = |p: &Path, e: csv::Error| CliError::Internal(format!("{}: {e}", p.display()));
    let mut paths = Vec::with_capacity(datasets.len());
    for ds in datasets {
        let path = dir.join(format!("{}.csv", ds.name));
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(&ds.variables).map_err(|e| io_err(&path, e))?;
        for i in 0..ds.n() {
            let row: Vec<String> = (0..ds.dim())
                .map(|j| match ds.status(i, j) {
                    CellStatus::MissingAtRandom => "NA".to_string(),
                    _ => fmt_f64(ds.value(i, j)),
                })
                .collect();
            w.write_record(&row).map_err(|e| io_err(&path, e))?;
        }
        w.flush().map_err(|e| CliError::Internal(e.to_string()))?;
        paths.push(path);
    }

    let Some(first) = datasets.first() else {
        return Ok(paths);
    };
    let roles_path = dir.join("roles.csv");
    let mut w = csv::Writer::from_path(&roles_path).map_err(|e| io_err(&roles_path, e))?;
    w.write_record(["variable", "role"])
        .map_err(|e| io_err(&roles_path, e))?;
    for (j, v) in first.variables.iter().enumerate() {
        let role = if j < first.q() { "covariate" } else { "response" };
        w.write_record([v.as_str(), role]).map_err(|e| io_err(&roles_path, e))?;
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))?;

    let limits_path = dir.join("limits.csv");
    let mut w = csv::Writer::from_path(&limits_path).map_err(|e| io_err(&limits_path, e))?;
    w.write_record(["variable", "condition", "lower", "upper"])
        .map_err(|e| io_err(&limits_path, e))?;
    for ds in datasets {
        for (j, v) in ds.variables.iter().enumerate() {
            w.write_record([v.clone(), ds.name.clone(), fmt_f64(ds.lower[j]), fmt_f64(ds.upper[j])])
                .map_err(|e| io_err(&limits_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 40.0, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(parse_bound(&fmt_f64(f64::INFINITY)), Some(f64::INFINITY));
        assert_eq!(parse_bound(&fmt_f64(f64::NEG_INFINITY)), Some(f64::NEG_INFINITY));
    }
}
