use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optical transition that produced a photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Line {
    #[serde(rename = "X")]
    Exciton,
    #[serde(rename = "XX")]
    Biexciton,
    #[serde(rename = "P")]
    PShell,
}

impl Line {
    pub const ALL: [Line; 3] = [Line::Exciton, Line::Biexciton, Line::PShell];

    pub fn label(self) -> &'static str {
        match self {
            Line::Exciton => "X",
            Line::Biexciton => "XX",
            Line::PShell => "P",
        }
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Line {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(Line::Exciton),
            "XX" => Ok(Line::Biexciton),
            "P" => Ok(Line::PShell),
            other => Err(Error::Parse(format!("unknown line label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonRecord {
    /// Emission time in ps from the start of the experiment.
    pub time_ps: f64,
    pub line: Line,
    pub wavelength_nm: f64,
}

/// Everything needed to regenerate a stream bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamMeta {
    pub seed: u64,
    pub emitter_digest: String,
    pub drive_digest: String,
    pub temperature_k: f64,
    pub rep_rate_mhz: f64,
    pub n_pulses: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonStream {
    pub records: Vec<PhotonRecord>,
    pub meta: StreamMeta,
}

impl PhotonStream {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.records.windows(2).all(|w| w[0].time_ps <= w[1].time_ps)
    }

    /// Duration of the experiment in seconds (pulse count over repetition rate).
    pub fn duration_s(&self) -> f64 {
        self.meta.n_pulses as f64 / (self.meta.rep_rate_mhz * 1e6)
    }

    pub fn count(&self, line: Line) -> usize {
        self.records.iter().filter(|r| r.line == line).count()
    }

    pub fn with_records(&self, records: Vec<PhotonRecord>) -> Self {
        Self {
            records,
            meta: self.meta.clone(),
        }
    }

    /// Write `time_ps,line,wavelength_nm` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "time_ps,line,wavelength_nm")?;
        for r in &self.records {
            writeln!(w, "{:.3},{},{:.6}", r.time_ps, r.line, r.wavelength_nm)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(reader: R, meta: StreamMeta) -> Result<Self> {
        let mut records = Vec::new();
        let mut header_seen = false;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "time_ps,line,wavelength_nm" {
                    return Err(Error::Parse(format!(
                        "line {}: expected header `time_ps,line,wavelength_nm`",
                        lineno + 1
                    )));
                }
                header_seen = true;
                continue;
            }
            let mut parts = line.split(',');
            let (Some(t), Some(l), Some(wl), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(Error::Parse(format!("line {}: expected 3 columns", lineno + 1)));
            };
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))
            };
            records.push(PhotonRecord {
                time_ps: parse(t)?,
                line: l.parse()?,
                wavelength_nm: parse(wl)?,
            });
        }
        let stream = Self { records, meta };
        if !stream.is_sorted() {
            return Err(Error::Unsorted("photon stream"));
        }
        Ok(stream)
    }

    pub fn meta_toml(&self) -> String {
        toml::to_string(&self.meta).expect("stream metadata serializes")
    }

    pub fn parse_meta(text: &str) -> Result<StreamMeta> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> StreamMeta {
        StreamMeta {
            seed: 1,
            emitter_digest: "abc".into(),
            drive_digest: "def".into(),
            temperature_k: 4.0,
            rep_rate_mhz: 20.0,
            n_pulses: 2,
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = PhotonStream {
            records: vec![
                PhotonRecord {
                    time_ps: 12.5,
                    line: Line::Biexciton,
                    wavelength_nm: 1298.5,
                },
                PhotonRecord {
                    time_ps: 1500.25,
                    line: Line::Exciton,
                    wavelength_nm: 1301.28,
                },
            ],
            meta: meta(),
        };
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = PhotonStream::read_csv(&buf[..], meta()).unwrap();
        assert_eq!(back, s);
        assert_eq!(PhotonStream::parse_meta(&s.meta_toml()).unwrap(), meta());
    }

    #[test]
    fn unsorted_csv_rejected() {
        let text = "time_ps,line,wavelength_nm\n10,X,1300\n5,X,1300\n";
        assert_eq!(
            PhotonStream::read_csv(text.as_bytes(), meta()),
            Err(Error::Unsorted("photon stream"))
        );
    }
}
