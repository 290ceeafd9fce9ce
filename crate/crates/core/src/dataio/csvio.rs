use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{DataError, TimeSeriesTable};

/// Column roles in a CSV file, as stored in the schema JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub timestamp: String,
    pub sensors: Vec<String>,
    pub actuators: Vec<String>,
    /// Optional integer class column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Schema {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let f = File::open(path)?;
        Ok(serde_json::from_reader(f)?)
    }
}

/// Sensor and actuator tables sharing one time index.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedData {
    pub sensors: TimeSeriesTable,
    pub actuators: TimeSeriesTable,
    pub labels: Option<Vec<usize>>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<LoadedData, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Reads a headed CSV. Empty or unparseable numeric cells become missing.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<LoadedData, DataError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(DataError::NoRows);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = find(&schema.timestamp)?;
    let sensor_cols = schema.sensors.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let act_cols = schema.actuators.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let label_col = schema.label.as_deref().map(find).transpose()?;

    let mut timestamps = Vec::new();
    let mut sensor_vals = Vec::new();
    let mut act_vals = Vec::new();
    let mut labels = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let raw_ts = rec.get(ts_col).unwrap_or("").trim();
        timestamps.push(parse_timestamp(raw_ts).ok_or_else(|| DataError::BadTimestamp {
            row,
            value: raw_ts.to_string(),
        })?);
        sensor_vals.extend(sensor_cols.iter().map(|&c| parse_cell(rec.get(c))));
        act_vals.extend(act_cols.iter().map(|&c| parse_cell(rec.get(c))));
        if let Some(c) = label_col {
            let raw = rec.get(c).unwrap_or("").trim();
            labels.push(raw.parse::<usize>().map_err(|_| DataError::BadLabel {
                row,
                value: raw.to_string(),
            })?);
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::NoRows);
    }
    let sensors = TimeSeriesTable::new(timestamps.clone(), schema.sensors.clone(), sensor_vals)?;
    let actuators = TimeSeriesTable::new(timestamps, schema.actuators.clone(), act_vals)?;
    let deviation = sensors.spacing_deviation();
    if deviation > 0.01 {
        log::warn!("sampling interval varies by up to {:.1}% of the median step", deviation * 100.0);
    }
    Ok(LoadedData {
        sensors,
        actuators,
        labels: label_col.map(|_| labels),
    })
}

fn parse_cell(cell: Option<&str>) -> f64 {
    cell.and_then(|s| s.trim().parse::<f64>().ok())
        .filter(|v| v.is_finite())
        .unwrap_or(f64::NAN)
}

/// Epoch seconds, RFC 3339, or a naive `YYYY-MM-DD[ T]HH:MM[:SS]` (read as UTC).
fn parse_timestamp(s: &str) -> Option<f64> {
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp() as f64 + f64::from(dt.timestamp_subsec_nanos()) * 1e-9);
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
        .map(|dt| dt.and_utc().timestamp() as f64)
}

/// Writes sensors, actuators and optional labels in `schema`'s column order.
/// Timestamps are written as epoch seconds; missing cells are left empty.
pub fn write_csv<W: Write>(writer: W, data: &LoadedData, schema: &Schema) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![schema.timestamp.clone()];
    header.extend(data.sensors.feature_names().iter().cloned());
    header.extend(data.actuators.feature_names().iter().cloned());
    let label_name = schema.label.as_ref().filter(|_| data.labels.is_some());
    if let Some(l) = label_name {
        header.push(l.clone());
    }
    w.write_record(&header)?;
    let fmt = |t: &TimeSeriesTable, r: usize, c: usize| {
        if t.is_missing(r, c) {
            String::new()
        } else {
            t.value(r, c).to_string()
        }
    };
    for r in 0..data.sensors.n_rows() {
        let mut rec = vec![data.sensors.timestamps()[r].to_string()];
        rec.extend((0..data.sensors.n_features()).map(|c| fmt(&data.sensors, r, c)));
        rec.extend((0..data.actuators.n_features()).map(|c| fmt(&data.actuators, r, c)));
        if let (Some(_), Some(labels)) = (label_name, &data.labels) {
            rec.push(labels[r].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> Schema {
        Schema {
            timestamp: "time".into(),
            sensors: vec!["Tair".into(), "Rhair".into()],
            actuators: vec!["co2_vip".into()],
            label: None,
        }
    }

    #[test]
    fn literal_cells_are_ingested() {
        let csv = "time,Tair,Rhair,co2_vip\n0,21.5,80,1\n300,21.75,,0\n600,22,79.5,1\n";
        let d = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(d.sensors.n_rows(), 3);
        assert_eq!(d.sensors.value(0, 0), 21.5);
        assert_eq!(d.sensors.value(1, 0), 21.75);
        assert!(d.sensors.is_missing(1, 1));
        assert_eq!(d.sensors.value(2, 1), 79.5);
        assert_eq!(d.actuators.column(0), vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn iso_timestamps() {
        let csv = "time,Tair,Rhair,co2_vip\n2020-01-01T00:00:00Z,1,2,3\n2020-01-01 00:05:00,1,2,3\n";
        let d = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(d.sensors.timestamps(), &[1_577_836_800.0, 1_577_837_100.0]);
    }

    #[test]
    fn empty_file_has_no_rows() {
        let err = read_csv("".as_bytes(), &schema()).unwrap_err();
        assert_eq!(err.to_string(), "no rows");
        let err = read_csv("time,Tair,Rhair,co2_vip\n".as_bytes(), &schema()).unwrap_err();
        assert_eq!(err.to_string(), "no rows");
    }

    #[test]
    fn missing_column_is_named() {
        let err = read_csv("time,Tair,co2_vip\n0,1,2\n".as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn(c) if c == "Rhair"));
    }

    #[test]
    fn non_monotone_reports_first_violation() {
        let csv = "time,Tair,Rhair,co2_vip\n0,1,1,1\n300,1,1,1\n300,1,1,1\n100,1,1,1\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(matches!(err, DataError::NonMonotone { row: 2, .. }), "{err}");
    }

    #[test]
    fn labels_column() {
        let mut s = schema();
        s.label = Some("label".into());
        let csv = "time,Tair,Rhair,co2_vip,label\n0,1,1,1,2\n300,1,1,1,0\n";
        let d = read_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.labels, Some(vec![2, 0]));
    }

    proptest! {
        #[test]
        fn write_then_read_is_bit_exact(
            cells in proptest::collection::vec(prop_oneof![4 => any::<f64>().prop_filter("finite", |v| v.is_finite()), 1 => Just(f64::NAN)], 3..30)
        ) {
            let n = cells.len() / 3;
            let s = schema();
            let ts: Vec<f64> = (0..n).map(|i| 1.6e9 + 300.0 * i as f64).collect();
            let sensors = TimeSeriesTable::new(ts.clone(), s.sensors.clone(), cells[..2 * n].to_vec()).unwrap();
            let actuators = TimeSeriesTable::new(ts, s.actuators.clone(), cells[2 * n..3 * n].to_vec()).unwrap();
            let data = LoadedData { sensors, actuators, labels: None };
            let mut buf = Vec::new();
            write_csv(&mut buf, &data, &s).unwrap();
            let back = read_csv(buf.as_slice(), &s).unwrap();
            prop_assert_eq!(back.sensors.missing_mask(), data.sensors.missing_mask());
            for (a, b) in back.sensors.values().iter().zip(data.sensors.values()) {
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
            let mut again = Vec::new();
            write_csv(&mut again, &back, &s).unwrap();
            prop_assert_eq!(buf, again);
        }
    }
}
