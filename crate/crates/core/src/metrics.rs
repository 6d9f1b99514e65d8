//! Line-oriented metrics: one record per line of space-separated `key=value`
//! pairs. Values never contain whitespace.

use std::fmt::{self, Display};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    fields: Vec<(String, String)>,
}

impl MetricsRecord {
    pub fn new(kind: &str) -> Self {
        Self::default().with("type", kind)
    }

    pub fn with(mut self, key: &str, value: impl Display) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        let v = value.to_string().replace(char::is_whitespace, "_");
        self.fields.push((key.to_string(), v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }

    pub fn fields(&self) -> &[(String, String)] {
        &self.fields
    }

    pub fn parse(line: &str) -> Option<Self> {
        let fields = line
            .split_whitespace()
            .map(|kv| kv.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
            .collect::<Option<Vec<_>>>()?;
        Some(Self { fields })
    }
}

impl fmt::Display for MetricsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.fields.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// Append-only metrics sink. `None` path keeps records in memory only.
#[derive(Debug)]
pub struct MetricsWriter {
    file: Option<File>,
    records: Vec<MetricsRecord>,
}

impl MetricsWriter {
    pub fn in_memory() -> Self {
        Self {
            file: None,
            records: Vec::new(),
        }
    }

    pub fn append_to(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            file: Some(file),
            records: Vec::new(),
        })
    }

    pub fn write(&mut self, record: MetricsRecord) -> io::Result<()> {
        if let Some(f) = &mut self.file {
            writeln!(f, "{record}")?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn records(&self) -> &[MetricsRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MetricsRecord> {
        self.records
    }
}

pub fn read_metrics(path: &Path) -> io::Result<Vec<MetricsRecord>> {
    let f = File::open(path)?;
    BufReader::new(f)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|l| {
            let l = l?;
            MetricsRecord::parse(&l)
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad metrics line `{l}`")))
        })
        .collect()
}
