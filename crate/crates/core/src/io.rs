//! File formats.
//!
//! IMU log: CSV with header `t,foot,gx,gy,gz,ax,ay,az` (s, `L`/`R`, rad/s,
//! m/s²), both feet in one file. Range log: CSV with header `t,d` (s, m).
//! Floats are written in Rust's shortest round-trip form, so writing and
//! parsing is lossless.
//!
//! Outputs: a trajectory CSV and optional GeoJSON per variant, the summary
//! table as JSON, and observability reports as JSON.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::fusion::RangeSample;
use crate::pipeline::{FilterRun, ObservabilityReport, RunConfig, RunOutput, TrajectoryRecord};
use crate::strapdown::ImuSample;
use crate::Foot;

pub const IMU_HEADER: [&str; 8] = ["t", "foot", "gx", "gy", "gz", "ax", "ay", "az"];
pub const RANGE_HEADER: [&str; 2] = ["t", "d"];
pub const TRAJECTORY_HEADER: [&str; 13] = [
    "t",
    "foot",
    "variant",
    "lat_deg",
    "lon_deg",
    "height",
    "v_north",
    "v_up",
    "v_east",
    "roll_deg",
    "yaw_deg",
    "pitch_deg",
    "stance",
];

/// Both feet's IMU streams, each strictly increasing in time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ImuLog {
    pub left: Vec<ImuSample>,
    pub right: Vec<ImuSample>,
}

impl ImuLog {
    pub fn foot(&self, foot: Foot) -> &[ImuSample] {
        match foot {
            Foot::Left => &self.left,
            Foot::Right => &self.right,
        }
    }
}

fn io_error(path: &str, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_string(),
        source,
    }
}

fn csv_error(path: &str, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_error(path, source),
        kind => Error::Parse {
            path: path.to_string(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| io_error(&path.display().to_string(), e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(&path.display().to_string(), e))
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str], path: &str) -> Result<()> {
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("expected header {}, found {}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// One CSV record, with its line number for error messages.
struct Fields<'a> {
    record: &'a csv::StringRecord,
    path: &'a str,
    line: u64,
}

impl Fields<'_> {
    fn error(&self, message: String) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            message,
        }
    }

    fn text(&self, i: usize, name: &str) -> Result<&str> {
        self.record
            .get(i)
            .map(str::trim)
            .ok_or_else(|| self.error(format!("missing field {name}")))
    }

    fn number(&self, i: usize, name: &str) -> Result<f64> {
        let s = self.text(i, name)?;
        let x: f64 = s
            .parse()
            .map_err(|_| self.error(format!("field {name}: {s:?} is not a number")))?;
        if !x.is_finite() {
            return Err(self.error(format!("field {name} is not finite")));
        }
        Ok(x)
    }
}

fn records<R: Read>(
    source: R,
    header: &[&str],
    path: &str,
    mut each: impl FnMut(&Fields) -> Result<()>,
) -> Result<usize> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    check_header(&mut reader, header, path)?;
    let mut record = csv::StringRecord::new();
    let mut n = 0;
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => return Err(csv_error(path, e)),
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(Error::Parse {
                path: path.to_string(),
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        each(&Fields {
            record: &record,
            path,
            line,
        })?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data {
            path: path.to_string(),
            message: "no samples".into(),
        });
    }
    Ok(n)
}

/// Parses an IMU log. Timestamps must increase strictly per foot.
pub fn parse_imu<R: Read>(source: R, path: &str) -> Result<ImuLog> {
    let mut log = ImuLog::default();
    records(source, &IMU_HEADER, path, |f| {
        let t = f.number(0, "t")?;
        let tag = f.text(1, "foot")?;
        let foot = Foot::from_tag(tag).ok_or_else(|| f.error(format!("unknown foot {tag:?}")))?;
        let v = |i: usize| -> Result<Vector3<f64>> {
            Ok(Vector3::new(
                f.number(i, IMU_HEADER[i])?,
                f.number(i + 1, IMU_HEADER[i + 1])?,
                f.number(i + 2, IMU_HEADER[i + 2])?,
            ))
        };
        let sample = ImuSample {
            t,
            foot,
            gyro: v(2)?,
            accel: v(5)?,
        };
        let stream = match foot {
            Foot::Left => &mut log.left,
            Foot::Right => &mut log.right,
        };
        if let Some(prev) = stream.last() {
            if t <= prev.t {
                return Err(f.error(format!("{} foot time {t} does not follow {}", foot.tag(), prev.t)));
            }
        }
        stream.push(sample);
        Ok(())
    })?;
    for foot in Foot::BOTH {
        if log.foot(foot).is_empty() {
            return Err(Error::Data {
                path: path.to_string(),
                message: format!("no samples for the {} foot", foot.tag()),
            });
        }
    }
    Ok(log)
}

/// Writes both feet interleaved by time, left first on ties.
pub fn write_imu<W: Write>(sink: W, log: &ImuLog, path: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let e = |e| csv_error(path, e);
    w.write_record(IMU_HEADER).map_err(e)?;
    let (mut i, mut j) = (0, 0);
    while i < log.left.len() || j < log.right.len() {
        let take_left = j >= log.right.len() || (i < log.left.len() && log.left[i].t <= log.right[j].t);
        let s = if take_left {
            i += 1;
            &log.left[i - 1]
        } else {
            j += 1;
            &log.right[j - 1]
        };
        w.write_record([
            s.t.to_string(),
            s.foot.tag().to_string(),
            s.gyro.x.to_string(),
            s.gyro.y.to_string(),
            s.gyro.z.to_string(),
            s.accel.x.to_string(),
            s.accel.y.to_string(),
            s.accel.z.to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|s| io_error(path, s))
}

/// Parses a range log; the lever arms come from the run configuration.
pub fn parse_range<R: Read>(
    source: R,
    path: &str,
    lever_l: &Vector3<f64>,
    lever_r: &Vector3<f64>,
) -> Result<Vec<RangeSample>> {
    let mut out: Vec<RangeSample> = Vec::new();
    records(source, &RANGE_HEADER, path, |f| {
        let t = f.number(0, "t")?;
        let d = f.number(1, "d")?;
        if d <= 0.0 {
            return Err(f.error(format!("range {d} must be positive")));
        }
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(f.error(format!("time {t} does not follow {}", prev.t)));
            }
        }
        out.push(RangeSample {
            t,
            d,
            lever_l: *lever_l,
            lever_r: *lever_r,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_range<W: Write>(sink: W, ranges: &[RangeSample], path: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let e = |e| csv_error(path, e);
    w.write_record(RANGE_HEADER).map_err(e)?;
    for r in ranges {
        w.write_record([r.t.to_string(), r.d.to_string()]).map_err(e)?;
    }
    w.flush().map_err(|s| io_error(path, s))
}

pub fn read_imu(path: &Path) -> Result<ImuLog> {
    parse_imu(open(path)?, &path.display().to_string())
}

pub fn read_range(path: &Path, lever_l: &Vector3<f64>, lever_r: &Vector3<f64>) -> Result<Vec<RangeSample>> {
    parse_range(open(path)?, &path.display().to_string(), lever_l, lever_r)
}

pub fn write_imu_file(path: &Path, log: &ImuLog) -> Result<()> {
    write_imu(create(path)?, log, &path.display().to_string())
}

pub fn write_range_file(path: &Path, ranges: &[RangeSample]) -> Result<()> {
    write_range(create(path)?, ranges, &path.display().to_string())
}

/// Loads the replay inputs named by the configuration.
pub fn load_inputs(cfg: &RunConfig) -> Result<(ImuLog, Vec<RangeSample>)> {
    let imu = cfg
        .io
        .imu
        .as_deref()
        .ok_or_else(|| Error::Config("no IMU log given".into()))?;
    let log = read_imu(Path::new(imu))?;
    let ranges = match cfg.io.range.as_deref() {
        Some(p) => read_range(Path::new(p), &cfg.gait.lever_l, &cfg.gait.lever_r)?,
        None => Vec::new(),
    };
    Ok((log, ranges))
}

pub fn write_trajectory<W: Write>(sink: W, records: &[TrajectoryRecord], path: &str) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let e = |e| csv_error(path, e);
    w.write_record(TRAJECTORY_HEADER).map_err(e)?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.foot.tag().to_string(),
            r.variant.tag().to_string(),
            r.position.latitude.to_degrees().to_string(),
            r.position.longitude.to_degrees().to_string(),
            r.position.height.to_string(),
            r.velocity.x.to_string(),
            r.velocity.y.to_string(),
            r.velocity.z.to_string(),
            r.attitude.roll.to_degrees().to_string(),
            r.attitude.yaw.to_degrees().to_string(),
            r.attitude.pitch.to_degrees().to_string(),
            u8::from(r.stance).to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|s| io_error(path, s))
}

/// A FeatureCollection with one LineString per foot and variant, coordinates
/// as `[lon, lat, height]` in degrees and metres.
pub fn geojson(runs: &[FilterRun]) -> serde_json::Value {
    let mut features = Vec::new();
    for run in runs {
        for foot in Foot::BOTH {
            let coordinates: Vec<[f64; 3]> = run
                .trajectory
                .iter()
                .filter(|r| r.foot == foot)
                .map(|r| {
                    [
                        r.position.longitude.to_degrees(),
                        r.position.latitude.to_degrees(),
                        r.position.height,
                    ]
                })
                .collect();
            features.push(json!({
                "type": "Feature",
                "properties": { "foot": foot.tag(), "variant": run.variant.tag() },
                "geometry": { "type": "LineString", "coordinates": coordinates },
            }));
        }
    }
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(format!("cannot serialize: {e}")))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json(value)?;
    let mut w = create(path)?;
    let p = path.display().to_string();
    w.write_all(text.as_bytes())
        .and_then(|_| w.write_all(b"\n"))
        .and_then(|_| w.flush())
        .map_err(|e| io_error(&p, e))
}

/// Parses and validates a run configuration. Missing fields take defaults.
pub fn parse_config(text: &str, path: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|e| io_error(&path.display().to_string(), e))?;
    parse_config(&text, &path.display().to_string())
}

pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(path, cfg)
}

/// Writes per-variant trajectories (and GeoJSON if asked) plus
/// `summary.json`. Returns the files written.
pub fn write_run_outputs(dir: &Path, output: &RunOutput, with_geojson: bool) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(&dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for run in &output.runs {
        let path = dir.join(format!("trajectory-{}.csv", run.variant.tag()));
        write_trajectory(create(&path)?, &run.trajectory, &path.display().to_string())?;
        written.push(path);
    }
    if with_geojson {
        let path = dir.join("trajectory.geojson");
        write_json(&path, &geojson(&output.runs))?;
        written.push(path);
    }
    let path = dir.join("summary.json");
    write_json(&path, &output.summaries)?;
    written.push(path);
    Ok(written)
}

/// Writes the simulated input logs as `imu.csv` and `range.csv`.
pub fn write_logs(dir: &Path, log: &ImuLog, ranges: &[RangeSample]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(&dir.display().to_string(), e))?;
    let (imu, range) = (dir.join("imu.csv"), dir.join("range.csv"));
    write_imu_file(&imu, log)?;
    write_range_file(&range, ranges)?;
    Ok(vec![imu, range])
}

pub fn write_observability(dir: &Path, reports: &[ObservabilityReport]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(&dir.display().to_string(), e))?;
    let mut written = Vec::new();
    for r in reports {
        let path = dir.join(format!("observability-{}.json", r.foot.tag()));
        write_json(&path, r)?;
        written.push(path);
    }
    Ok(written)
}
