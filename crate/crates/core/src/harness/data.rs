use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gp::{sample_prior, Dataset, Sample};
use crate::kernel::{Hyperparams, SpaceTime};

use super::config::SynthConfig;

pub const CSV_HEADER: [&str; 5] = ["sensor_id", "x_m", "y_m", "timestamp_s", "value"];

/// Reads a sensor CSV. Provenance is `(sensor_id, data row index)`;
/// timestamps are shifted so the earliest record is at zero.
pub fn ingest_csv(path: &Path) -> Result<Dataset> {
    let shown = path.display().to_string();
    let perr = |line: usize, msg: String| Error::Parse {
        path: shown.clone(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(perr(1, "file is empty".into()));
    }
    if header != CSV_HEADER {
        return Err(perr(1, format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), header.join(","))));
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        if rec.len() != 5 {
            return Err(perr(line, format!("expected 5 fields, found {}", rec.len())));
        }
        let sensor: u32 = rec[0].parse().map_err(|_| perr(line, format!("sensor_id `{}` is not a non-negative integer", &rec[0])))?;
        let mut num = [0.0; 4];
        for (k, name) in CSV_HEADER[1..].iter().enumerate() {
            let v: f64 = rec[k + 1].parse().map_err(|_| perr(line, format!("{name} `{}` is not a number", &rec[k + 1])))?;
            if !v.is_finite() {
                return Err(perr(line, format!("{name} is not finite")));
            }
            num[k] = v;
        }
        let row = u32::try_from(idx).map_err(|_| perr(line, "too many rows".into()))?;
        rows.push((line, sensor, row, num));
    }
    if rows.is_empty() {
        return Err(perr(2, "file has a header but no data rows".into()));
    }
    let t0 = rows.iter().map(|r| r.3[2]).fold(f64::INFINITY, f64::min);
    let mut ds = Dataset::new();
    for (line, sensor, row, [x, y, t, v]) in rows {
        ds.insert(Sample {
            position: vec![x, y],
            timestamp: t - t0,
            value: v,
            key: (sensor, row),
        })
        .map_err(|e| perr(line, e.to_string()))?;
    }
    Ok(ds)
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for s in ds.samples() {
        w.write_record([
            s.key.0.to_string(),
            s.position[0].to_string(),
            s.position[1].to_string(),
            s.timestamp.to_string(),
            s.value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Samples a GP prior (with measurement noise) at every sensor of the
/// `sensors_x × sensors_y` grid and `n_times` evenly spaced times. Rows are
/// time-major; sensor ids start at 1.
pub fn synth_field(cfg: &SynthConfig, h: &Hyperparams) -> Result<Dataset> {
    let sensors: Vec<[f64; 2]> = cfg.sensors_y.iter().flat_map(|&y| cfg.sensors_x.iter().map(move |&x| [x, y])).collect();
    let times: Vec<f64> = (0..cfg.n_times)
        .map(|k| {
            if cfg.n_times == 1 {
                0.0
            } else {
                cfg.duration_s * k as f64 / (cfg.n_times - 1) as f64
            }
        })
        .collect();
    let mut pts = Vec::with_capacity(sensors.len() * times.len());
    let mut ids = Vec::with_capacity(pts.capacity());
    for &t in &times {
        for (s, p) in sensors.iter().enumerate() {
            pts.push(SpaceTime::new(p.to_vec(), t));
            ids.push(s as u32 + 1);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let values = sample_prior(&pts, h, cfg.mean, true, &mut rng)?;
    let mut ds = Dataset::new();
    for (row, ((p, id), v)) in pts.into_iter().zip(ids).zip(values).enumerate() {
        ds.insert(Sample {
            position: p.pos,
            timestamp: p.t,
            value: v,
            key: (id, row as u32),
        })?;
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub rows: usize,
    pub sensors: usize,
    pub locations: usize,
    pub time_span_s: f64,
    pub value_min: f64,
    pub value_max: f64,
    pub value_mean: f64,
    pub value_std: f64,
}

pub fn summarize(ds: &Dataset) -> DatasetSummary {
    let n = ds.len();
    let sensors: BTreeSet<u32> = ds.provenance.iter().map(|k| k.0).collect();
    let locations: BTreeSet<(u64, u64)> = ds.positions.iter().map(|p| (p[0].to_bits(), p[1].to_bits())).collect();
    let mean = ds.mean_value().unwrap_or(f64::NAN);
    let var = ds.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    let tmax = ds.timestamps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tmin = ds.timestamps.iter().copied().fold(f64::INFINITY, f64::min);
    DatasetSummary {
        rows: n,
        sensors: sensors.len(),
        locations: locations.len(),
        time_span_s: if n > 0 { tmax - tmin } else { 0.0 },
        value_min: ds.values.iter().copied().fold(f64::INFINITY, f64::min),
        value_max: ds.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        value_mean: mean,
        value_std: var.sqrt(),
    }
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "rows:        {}", self.rows)?;
        writeln!(f, "sensors:     {}", self.sensors)?;
        writeln!(f, "locations:   {}", self.locations)?;
        writeln!(f, "time span:   {} s", self.time_span_s)?;
        writeln!(f, "value range: [{}, {}]", self.value_min, self.value_max)?;
        write!(f, "value mean:  {} (std {})", self.value_mean, self.value_std)
    }
}
