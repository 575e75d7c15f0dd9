use std::fs::File;
use std::io::Write;
use std::path::Path;

use csv::StringRecord;

use super::{HourlyRecord, Trace, TraceError};

/// Column names used when reading a trace CSV.
///
/// Price and availability columns are discovered as `{prefix}1`, `{prefix}2`, ...
/// until the first missing index.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub day: String,
    pub hour: String,
    pub load: String,
    pub price_prefix: String,
    pub avail_prefix: String,
    pub t_chw: String,
    pub t_cond: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            day: "day".into(),
            hour: "hour".into(),
            load: "load_kwh_th".into(),
            price_prefix: "price_".into(),
            avail_prefix: "avail_".into(),
            t_chw: "t_chw".into(),
            t_cond: "t_cond".into(),
        }
    }
}

struct Layout {
    day: usize,
    hour: usize,
    load: usize,
    prices: Vec<(usize, String)>,
    avail: Vec<(usize, String)>,
    temps: Option<(usize, usize)>,
}

fn schema_err(row: usize, column: &str, message: impl Into<String>) -> TraceError {
    TraceError::Schema {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

impl Layout {
    fn resolve(headers: &StringRecord, map: &ColumnMap) -> Result<Self, TraceError> {
        let find = |name: &str| headers.iter().position(|h| h.trim() == name);
        let require = |name: &str| find(name).ok_or_else(|| schema_err(0, name, "missing column"));

        let mut prices = Vec::new();
        while let Some(idx) = find(&format!("{}{}", map.price_prefix, prices.len() + 1)) {
            prices.push((idx, format!("{}{}", map.price_prefix, prices.len() + 1)));
        }
        if prices.is_empty() {
            return Err(schema_err(
                0,
                &format!("{}1", map.price_prefix),
                "missing column",
            ));
        }
        let mut avail = Vec::with_capacity(prices.len());
        for i in 1..=prices.len() {
            let name = format!("{}{i}", map.avail_prefix);
            avail.push((require(&name)?, name));
        }
        let temps = match (find(&map.t_chw), find(&map.t_cond)) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            (Some(_), None) => return Err(schema_err(0, &map.t_cond, "missing column")),
            (None, Some(_)) => return Err(schema_err(0, &map.t_chw, "missing column")),
        };
        Ok(Self {
            day: require(&map.day)?,
            hour: require(&map.hour)?,
            load: require(&map.load)?,
            prices,
            avail,
            temps,
        })
    }
}

fn field<'a>(
    rec: &'a StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<&'a str, TraceError> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| schema_err(row, column, "missing value"))
}

fn parse_num<T: std::str::FromStr>(
    rec: &StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<T, TraceError> {
    let raw = field(rec, idx, row, column)?;
    raw.parse()
        .map_err(|_| schema_err(row, column, format!("cannot parse `{raw}`")))
}

fn parse_flag(
    rec: &StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<bool, TraceError> {
    match field(rec, idx, row, column)? {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(schema_err(
            row,
            column,
            format!("expected 0 or 1, got `{other}`"),
        )),
    }
}

/// Reads and validates a trace CSV. Rows are numbered from 1 (first data row).
pub fn load_trace(path: &Path, map: &ColumnMap) -> Result<Trace, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file);
    let layout = Layout::resolve(reader.headers()?, map)?;

    let mut records = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let row = i + 1;
        let rec = result?;
        let temps = match layout.temps {
            Some((a, b)) => (
                Some(parse_num(&rec, a, row, &map.t_chw)?),
                Some(parse_num(&rec, b, row, &map.t_cond)?),
            ),
            None => (None, None),
        };
        let record = HourlyRecord {
            day: parse_num(&rec, layout.day, row, &map.day)?,
            hour: parse_num(&rec, layout.hour, row, &map.hour)?,
            load: parse_num(&rec, layout.load, row, &map.load)?,
            prices: layout
                .prices
                .iter()
                .map(|(idx, name)| parse_num(&rec, *idx, row, name))
                .collect::<Result<_, _>>()?,
            availability: layout
                .avail
                .iter()
                .map(|(idx, name)| parse_flag(&rec, *idx, row, name))
                .collect::<Result<_, _>>()?,
            t_chw: temps.0,
            t_cond: temps.1,
        };
        record.validate(row)?;
        records.push(record);
    }
    let source = path.display().to_string();
    Trace::new(records, source)
}

/// Writes `day,hour,load_kwh_th,price_1..M,avail_1..M[,t_chw,t_cond]`.
///
/// Floats use the shortest representation that parses back to the same value.
pub fn write_trace<W: Write>(trace: &Trace, out: W) -> Result<(), TraceError> {
    let m = trace.num_sources();
    let temps = trace.has_temperatures();
    let mut writer = csv::Writer::from_writer(out);

    let mut header = vec!["day".to_string(), "hour".into(), "load_kwh_th".into()];
    header.extend((1..=m).map(|i| format!("price_{i}")));
    header.extend((1..=m).map(|i| format!("avail_{i}")));
    if temps {
        header.extend(["t_chw".to_string(), "t_cond".into()]);
    }
    writer.write_record(&header)?;

    let mut row = Vec::with_capacity(header.len());
    for rec in trace.records() {
        row.clear();
        row.push(rec.day.to_string());
        row.push(rec.hour.to_string());
        row.push(rec.load.to_string());
        row.extend(rec.prices.iter().map(f64::to_string));
        row.extend(
            rec.availability
                .iter()
                .map(|&a| if a { "1" } else { "0" }.to_string()),
        );
        if temps {
            row.push(rec.t_chw.unwrap_or_default().to_string());
            row.push(rec.t_cond.unwrap_or_default().to_string());
        }
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|source| TraceError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}
