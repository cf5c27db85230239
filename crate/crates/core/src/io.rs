//! CSV ingest and export.
//!
//! Subjects file: `id,time,event` with `event` in {0, 1}.
//! Longitudinal file: `id,obs_time,z1,...,zp`. Rows may come in any order;
//! they are joined on `id` and sorted by `obs_time`.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

struct Table {
    file: String,
    header: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let file = file_label(path);
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.iter().all(str::is_empty) {
                continue;
            }
            rows.push((line, rec));
        }
        Ok(Self { file, header, rows })
    }

    fn err(&self, row: usize, column: &str, message: impl Into<String>) -> Error {
        Error::Ingest {
            file: self.file.clone(),
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn require_header(&self, expected: &[&str]) -> Result<()> {
        for (k, name) in expected.iter().enumerate() {
            match self.header.get(k) {
                Some(h) if h == name => {}
                other => {
                    return Err(self.err(
                        1,
                        name,
                        format!("expected column '{name}' at position {}, found {:?}", k + 1, other),
                    ))
                }
            }
        }
        Ok(())
    }

    fn cell<'a>(&self, row: usize, rec: &'a csv::StringRecord, k: usize) -> Result<&'a str> {
        rec.get(k).ok_or_else(|| self.err(row, &self.header[k], "missing cell"))
    }

    fn number(&self, row: usize, rec: &csv::StringRecord, k: usize) -> Result<f64> {
        let raw = self.cell(row, rec, k)?;
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.err(row, &self.header[k], format!("non-numeric value '{raw}'"))),
        }
    }
}

/// Reads and joins the two files. `tau` defaults to the largest follow-up time.
pub fn ingest(subjects_csv: &Path, longitudinal_csv: &Path, tau: Option<f64>) -> Result<Dataset> {
    let subj = Table::read(subjects_csv)?;
    subj.require_header(&["id", "time", "event"])?;
    let long = Table::read(longitudinal_csv)?;
    long.require_header(&["id", "obs_time"])?;
    let p = long.header.len() - 2;
    if p == 0 {
        return Err(long.err(1, "z1", "no covariate columns"));
    }
    for (k, name) in long.header[2..].iter().enumerate() {
        if name.is_empty() {
            return Err(long.err(1, &format!("z{}", k + 1), "empty covariate column name"));
        }
    }

    let mut order = Vec::with_capacity(subj.rows.len());
    let mut base: HashMap<String, (f64, bool)> = HashMap::new();
    for (row, rec) in &subj.rows {
        let id = subj.cell(*row, rec, 0)?.to_string();
        if id.is_empty() {
            return Err(subj.err(*row, "id", "empty id"));
        }
        let time = subj.number(*row, rec, 1)?;
        let event = match subj.cell(*row, rec, 2)? {
            "0" => false,
            "1" => true,
            other => return Err(subj.err(*row, "event", format!("event must be 0 or 1, found '{other}'"))),
        };
        if base.insert(id.clone(), (time, event)).is_some() {
            return Err(subj.err(*row, "id", format!("duplicate subject id '{id}'")));
        }
        order.push(id);
    }
    if order.is_empty() {
        return Err(subj.err(1, "id", "subjects file has no rows"));
    }

    let mut obs: HashMap<&str, Vec<(f64, Vec<f64>)>> = HashMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    for (row, rec) in &long.rows {
        if rec.len() != p + 2 {
            return Err(long.err(*row, "obs_time", format!("{} cells, expected {}", rec.len(), p + 2)));
        }
        let id = long.cell(*row, rec, 0)?;
        let Some((key, _)) = base.get_key_value(id) else {
            return Err(long.err(*row, "id", format!("unknown subject id '{id}'")));
        };
        let t = long.number(*row, rec, 1)?;
        if !seen.insert((id.to_string(), t.to_bits())) {
            return Err(long.err(
                *row,
                "obs_time",
                format!("duplicate observation time {t} for subject '{id}'"),
            ));
        }
        let z = (0..p)
            .map(|k| long.number(*row, rec, k + 2))
            .collect::<Result<Vec<_>>>()?;
        obs.entry(key.as_str()).or_default().push((t, z));
    }
    if obs.is_empty() {
        return Err(long.err(1, "id", "no longitudinal rows match a subject"));
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in &order {
        let (time, event) = base[id];
        let mut rows = obs.remove(id.as_str()).unwrap_or_default();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let times = rows.iter().map(|r| r.0).collect();
        let flat = rows.into_iter().flat_map(|r| r.1).collect();
        subjects.push(SubjectRecord::from_flat(id.clone(), time, event, times, flat, p)?);
    }
    let tau = match tau {
        Some(t) => t,
        None => subjects.iter().map(|s| s.follow_up_time).fold(0.0, f64::max),
    };
    Dataset::new(subjects, tau, p)
}

/// Writes the dataset in the ingest layout; `ingest` of the result reproduces it
/// when `tau` is passed explicitly.
pub fn export(data: &Dataset, subjects_csv: &Path, longitudinal_csv: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(subjects_csv)?;
    w.write_record(["id", "time", "event"])?;
    for s in data.subjects() {
        w.write_record([
            s.id.clone(),
            s.follow_up_time.to_string(),
            u8::from(s.event).to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(longitudinal_csv)?;
    let mut header = vec!["id".to_string(), "obs_time".to_string()];
    header.extend((1..=data.dim()).map(|k| format!("z{k}")));
    w.write_record(&header)?;
    for s in data.subjects() {
        for (k, t) in s.obs_times().iter().enumerate() {
            let mut row = vec![s.id.clone(), t.to_string()];
            row.extend(s.covariate(k).iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn joins_and_sorts() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "id,time,event\na,0.5,1\nb,0.8,0\n");
        let l = write(dir.path(), "l.csv", "id,obs_time,z1\nb,0.3,2\na,0.4,1.5\na,0.1,-1\n");
        let d = ingest(&s, &l, None).unwrap();
        assert_eq!(d.n(), 2);
        assert_eq!(d.tau(), 0.8);
        assert_eq!(d.subjects()[0].obs_times(), &[0.1, 0.4]);
        assert_eq!(d.subjects()[0].covariate(1), &[1.5]);
        assert!(!d.subjects()[1].event);
    }

    #[test]
    fn diagnostics_name_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "id,time,event\na,0.5,1\n");
        let cases = [
            (
                "id,obs_time,z1\na,0.1,1\nzz,0.2,1\n",
                "unknown subject id 'zz'",
                3,
                "id",
            ),
            ("id,obs_time,z1\na,0.1,x\n", "non-numeric", 2, "z1"),
            ("id,obs_time,z1\na,0.1,1\na,0.1,2\n", "duplicate", 3, "obs_time"),
        ];
        for (body, msg, line, col) in cases {
            let l = write(dir.path(), "l.csv", body);
            match ingest(&s, &l, None).unwrap_err() {
                Error::Ingest {
                    row, column, message, ..
                } => {
                    assert!(message.contains(msg), "{message}");
                    assert_eq!(row, line);
                    assert_eq!(column, col);
                }
                e => panic!("unexpected {e}"),
            }
        }
        let l = write(dir.path(), "l.csv", "id,obs_time,z1\n");
        assert!(matches!(ingest(&s, &l, None), Err(Error::Ingest { .. })));
    }

    #[test]
    fn export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.csv", "id,time,event\na,0.5,1\nb,0.8,0\nc,0.3,1\n");
        let l = write(
            dir.path(),
            "l.csv",
            "id,obs_time,z1,z2\nb,0.3,2,0.1\na,0.4,1.5,3\na,0.1,-1,0.25\n",
        );
        let d = ingest(&s, &l, Some(1.0)).unwrap();
        let (s2, l2) = (dir.path().join("s2.csv"), dir.path().join("l2.csv"));
        export(&d, &s2, &l2).unwrap();
        assert_eq!(ingest(&s2, &l2, Some(1.0)).unwrap(), d);
    }
}
