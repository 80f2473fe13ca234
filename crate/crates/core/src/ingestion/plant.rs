//! Assembly-line simulator: robots with waveform-driven sensor channels.

use std::collections::BTreeSet;

use super::record::{parse_micros, Micros, SensorRecord};
#[cfg(test)]
use super::record::MICROS;

/// Sample rate in thousandths of a hertz.
pub type MilliHz = u64;

pub const MAX_RATE: MilliHz = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Constant(Micros),
    /// Evaluated at the midpoint of each sample interval.
    Sine {
        mean: Micros,
        amplitude: Micros,
        period_ms: u64,
    },
    /// `slope` per second from zero until `hold` is reached.
    RampThenHold { slope: Micros, hold: Micros },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub name: String,
    pub unit: String,
    pub rate: MilliHz,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobotFault {
    StuckAt(Micros),
    /// Records with offset in `[from_ms, to_ms)` are suppressed.
    Dropout { from_ms: u64, to_ms: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotSpec {
    pub id: String,
    pub channels: Vec<ChannelSpec>,
    pub fault: Option<RobotFault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSpec {
    pub id: String,
    pub robots: Vec<RobotSpec>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("line {line}: {msg}")]
pub struct PlantError {
    pub line: usize,
    pub msg: String,
}

impl ChannelSpec {
    pub fn sample_count(&self, duration_ms: u64) -> u64 {
        (self.rate as u128 * duration_ms as u128 / 1_000_000) as u64
    }

    /// Offset of sample `k` from the line start.
    pub fn sample_offset(&self, k: u64) -> u64 {
        (k as u128 * 1_000_000 / self.rate as u128) as u64
    }

    pub fn value_at(&self, k: u64) -> Micros {
        match self.waveform {
            Waveform::Constant(v) => v,
            Waveform::Sine {
                mean,
                amplitude,
                period_ms,
            } => {
                let mid_ms = (k as f64 + 0.5) * 1_000_000.0 / self.rate as f64;
                let phase = std::f64::consts::TAU * mid_ms / period_ms as f64;
                mean + (amplitude as f64 * phase.sin()).round() as i64
            }
            Waveform::RampThenHold { slope, hold } => {
                let raw = (slope as i128 * k as i128 * 1000).div_euclid(self.rate as i128);
                let raw = raw.clamp(i64::MIN as i128, i64::MAX as i128) as i64;
                if slope >= 0 {
                    raw.min(hold)
                } else {
                    raw.max(hold)
                }
            }
        }
    }
}

impl LineSpec {
    /// Every record the line emits over `duration_ms`, timestamped from
    /// `start_ms`, ordered by time then by position in the spec.
    pub fn records(&self, duration_ms: u64, start_ms: u64) -> Vec<SensorRecord> {
        let mut out = Vec::new();
        for robot in &self.robots {
            for ch in &robot.channels {
                for k in 0..ch.sample_count(duration_ms) {
                    let offset = ch.sample_offset(k);
                    let value = match robot.fault {
                        Some(RobotFault::Dropout { from_ms, to_ms }) if (from_ms..to_ms).contains(&offset) => continue,
                        Some(RobotFault::StuckAt(v)) => v,
                        _ => ch.value_at(k),
                    };
                    out.push(SensorRecord {
                        ts_ms: start_ms + offset,
                        line: self.id.clone(),
                        robot: robot.id.clone(),
                        channel: ch.name.clone(),
                        value,
                    });
                }
            }
        }
        out.sort_by_key(|r| r.ts_ms);
        out
    }
}

/// Records of all lines, merged by timestamp (stable on spec order).
pub fn plant_records(lines: &[LineSpec], duration_ms: u64, start_ms: u64) -> Vec<SensorRecord> {
    let mut out: Vec<SensorRecord> = lines.iter().flat_map(|l| l.records(duration_ms, start_ms)).collect();
    out.sort_by_key(|r| r.ts_ms);
    out
}

fn parse_rate(s: &str) -> Option<MilliHz> {
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 3 || int.is_empty() || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = int.parse().ok()?;
    let frac: u64 = if frac.is_empty() { 0 } else { frac.parse::<u64>().ok()? * 10u64.pow(3 - frac.len() as u32) };
    whole.checked_mul(1000)?.checked_add(frac)
}

/// Parses a plant description:
///
/// ```text
/// line L1
/// robot R1 [stuck <v> | dropout <fromMs> <toMs>]
/// channel <name> <unit> <rateHz> const <v>
/// channel <name> <unit> <rateHz> sine <mean> <amplitude> <periodMs>
/// channel <name> <unit> <rateHz> ramp <slopePerSecond> <holdAt>
/// ```
pub fn parse_plant(text: &str) -> Result<Vec<LineSpec>, PlantError> {
    let mut lines: Vec<LineSpec> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let err = |msg: String| PlantError { line: n, msg };
        let words: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        let Some((&head, args)) = words.split_first() else {
            continue;
        };
        let micros = |s: &str| parse_micros(s).ok_or_else(|| err(format!("bad number {s:?}")));
        let int = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad integer {s:?}")));
        match (head, args) {
            ("line", [id]) => {
                if lines.iter().any(|l| l.id == *id) {
                    return Err(err(format!("duplicate line {id}")));
                }
                lines.push(LineSpec {
                    id: id.to_string(),
                    robots: Vec::new(),
                });
            }
            ("robot", [id, fault @ ..]) => {
                let line = lines.last_mut().ok_or_else(|| err("robot before any line".into()))?;
                let fault = match fault {
                    [] => None,
                    ["stuck", v] => Some(RobotFault::StuckAt(micros(v)?)),
                    ["dropout", a, b] => {
                        let (from_ms, to_ms) = (int(a)?, int(b)?);
                        if from_ms > to_ms {
                            return Err(err("dropout window ends before it starts".into()));
                        }
                        Some(RobotFault::Dropout { from_ms, to_ms })
                    }
                    _ => return Err(err("expected `stuck <v>` or `dropout <from> <to>`".into())),
                };
                line.robots.push(RobotSpec {
                    id: id.to_string(),
                    channels: Vec::new(),
                    fault,
                });
            }
            ("channel", [name, unit, rate, wave @ ..]) => {
                let rate = parse_rate(rate).ok_or_else(|| err(format!("bad rate {rate:?}")))?;
                if rate == 0 || rate > MAX_RATE {
                    return Err(err("rate must be in (0, 1000] Hz".into()));
                }
                let waveform = match wave {
                    ["const", v] => Waveform::Constant(micros(v)?),
                    ["sine", m, a, p] => {
                        let period_ms = int(p)?;
                        if period_ms == 0 {
                            return Err(err("sine period must be positive".into()));
                        }
                        Waveform::Sine {
                            mean: micros(m)?,
                            amplitude: micros(a)?,
                            period_ms,
                        }
                    }
                    ["ramp", s, h] => Waveform::RampThenHold {
                        slope: micros(s)?,
                        hold: micros(h)?,
                    },
                    _ => return Err(err("expected const, sine or ramp waveform".into())),
                };
                let robot = lines
                    .last_mut()
                    .and_then(|l| l.robots.last_mut())
                    .ok_or_else(|| err("channel before any robot".into()))?;
                if robot.channels.iter().any(|c| c.name == *name) {
                    return Err(err(format!("duplicate channel {name}")));
                }
                robot.channels.push(ChannelSpec {
                    name: name.to_string(),
                    unit: unit.to_string(),
                    rate,
                    waveform,
                });
            }
            _ => return Err(err(format!("unrecognised statement {:?}", raw.trim()))),
        }
    }
    for l in &lines {
        if l.robots.is_empty() {
            return Err(PlantError {
                line: 0,
                msg: format!("line {} has no robots", l.id),
            });
        }
        let ids: BTreeSet<&str> = l.robots.iter().map(|r| r.id.as_str()).collect();
        if ids.len() != l.robots.len() {
            return Err(PlantError {
                line: 0,
                msg: format!("line {} repeats a robot id", l.id),
            });
        }
    }
    Ok(lines)
}

/// Expected record count: samples per channel minus dropout suppressions.
pub fn expected_records(lines: &[LineSpec], duration_ms: u64) -> u64 {
    let mut total = 0;
    for r in lines.iter().flat_map(|l| &l.robots) {
        for ch in &r.channels {
            let n = ch.sample_count(duration_ms);
            total += match r.fault {
                Some(RobotFault::Dropout { from_ms, to_ms }) => {
                    (0..n).filter(|&k| !(from_ms..to_ms).contains(&ch.sample_offset(k))).count() as u64
                }
                _ => n,
            };
        }
    }
    total
}
