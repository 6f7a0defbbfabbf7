use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::path::IrregularSeries;

/// `data.csv` -> `data_labels.csv` in the same directory.
pub fn labels_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_labels.csv"))
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line: line as usize, message: message.into() }
}

fn open(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(parse_err(1, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    Ok(rdr)
}

struct Cell {
    time: f64,
    channel: usize,
    value: Option<f64>,
}

/// Reads long-format `sample_id,time,channel,value` rows (an empty value
/// marks a missing cell), plus labels
/// from the sibling `<stem>_labels.csv` when it exists. Samples keep
/// their order of first appearance.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let mut rdr = open(path, &["sample_id", "time", "channel", "value"])?;
    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, Vec<Cell>> = HashMap::new();
    let mut seen: HashMap<(String, u64, usize), u64> = HashMap::new();
    let mut n_channels = 0;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", rec.len())));
        }
        let id = rec[0].to_string();
        let time: f64 = rec[1].parse().map_err(|_| parse_err(line, format!("bad time {:?}", &rec[1])))?;
        let channel: usize = rec[2].parse().map_err(|_| parse_err(line, format!("bad channel {:?}", &rec[2])))?;
        // An empty value records a timestamp whose cell is missing.
        let value: Option<f64> = if rec[3].is_empty() {
            None
        } else {
            Some(rec[3].parse().map_err(|_| parse_err(line, format!("bad value {:?}", &rec[3])))?)
        };
        if !time.is_finite() || !value.map_or(true, f64::is_finite) {
            return Err(parse_err(line, "non-finite time or value"));
        }
        let key = (id.clone(), time.to_bits(), channel);
        if let Some(first) = seen.insert(key, line) {
            return Err(parse_err(line, format!("duplicate (sample, time, channel) triple, first seen on line {first}")));
        }
        n_channels = n_channels.max(channel + 1);
        if !cells.contains_key(&id) {
            order.push(id.clone());
        }
        cells.entry(id).or_default().push(Cell { time, channel, value });
    }
    if order.is_empty() {
        return Err(Error::InvalidArgument(format!("{} has no data rows", path.display())));
    }

    let labels_path = labels_path_for(path);
    let labels = if labels_path.exists() { Some(load_labels(&labels_path)?) } else { None };
    let mut samples = Vec::with_capacity(order.len());
    for id in &order {
        let rows = &cells[id];
        let times: Vec<f64> = {
            let set: BTreeMap<u64, f64> = rows.iter().map(|c| (ordered_bits(c.time), c.time)).collect();
            set.into_values().collect()
        };
        let index: HashMap<u64, usize> = times.iter().enumerate().map(|(i, t)| (t.to_bits(), i)).collect();
        let mut values = vec![0.0; times.len() * n_channels];
        let mut mask = vec![false; times.len() * n_channels];
        for c in rows {
            if let Some(v) = c.value {
                let k = index[&c.time.to_bits()] * n_channels + c.channel;
                values[k] = v;
                mask[k] = true;
            }
        }
        let label = match &labels {
            Some(map) => Some(
                *map.get(id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no label for sample {id:?}")))?,
            ),
            None => None,
        };
        samples.push(IrregularSeries::new(times, values, mask, n_channels, label)?);
    }
    let n_classes = labels.as_ref().map_or(0, |m| m.values().max().map_or(0, |l| l + 1));
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(&name, samples, n_channels, n_classes, &format!("csv:{}", path.display()))
}

/// Maps `f64` to a `u64` with the same total order.
fn ordered_bits(x: f64) -> u64 {
    let b = x.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn load_labels(path: &Path) -> Result<HashMap<String, usize>> {
    let mut rdr = open(path, &["sample_id", "label"])?;
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", rec.len())));
        }
        let label: usize = rec[1].parse().map_err(|_| parse_err(line, format!("bad label {:?}", &rec[1])))?;
        if out.insert(rec[0].to_string(), label).is_some() {
            return Err(parse_err(line, format!("duplicate label for sample {:?}", &rec[0])));
        }
    }
    Ok(out)
}

/// Writes observed cells; a timestamp with no observed cell gets one row
/// with an empty value so it survives the round trip. Samples are named
/// by index. Labels go to
/// the sibling file when the dataset has them.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    writeln!(out, "sample_id,time,channel,value")?;
    for (s, series) in ds.samples.iter().enumerate() {
        for (i, t) in series.times.iter().enumerate() {
            let mut any = false;
            for c in 0..series.n_channels {
                if series.observed(i, c) {
                    writeln!(out, "{s},{t:?},{c},{:?}", series.value(i, c))?;
                    any = true;
                }
            }
            if !any {
                writeln!(out, "{s},{t:?},0,")?;
            }
        }
    }
    out.flush()?;
    if ds.samples.iter().any(|s| s.label.is_some()) {
        let mut out = std::io::BufWriter::new(File::create(labels_path_for(path))?);
        writeln!(out, "sample_id,label")?;
        for (s, series) in ds.samples.iter().enumerate() {
            if let Some(l) = series.label {
                writeln!(out, "{s},{l}")?;
            }
        }
        out.flush()?;
    }
    Ok(())
}
