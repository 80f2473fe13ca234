use serde::Deserialize;
use serde_json::value::RawValue;

/// Fixed-point value with six fractional digits, stored as an integer count
/// of millionths.
pub type Micros = i64;

pub const MICROS: i64 = 1_000_000;

pub fn format_micros(v: Micros) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    format!("{sign}{}.{:06}", a / MICROS as u64, a % MICROS as u64)
}

/// Exact decimal parse with at most six fractional digits.
pub fn parse_micros(s: &str) -> Option<Micros> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    let all_digits = |t: &str| t.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int) || !all_digits(frac) || frac.len() > 6 || (body.contains('.') && frac.is_empty()) {
        return None;
    }
    let whole: i64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_val: i64 = if frac.is_empty() {
        0
    } else {
        frac.parse::<i64>().ok()? * 10i64.pow(6 - frac.len() as u32)
    };
    let mag = whole.checked_mul(MICROS)?.checked_add(frac_val)?;
    Some(if neg { -mag } else { mag })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SensorRecord {
    pub ts_ms: u64,
    pub line: String,
    pub robot: String,
    pub channel: String,
    pub value: Micros,
}

impl SensorRecord {
    /// `{"ts":..,"line":..,"robot":..,"ch":..,"v":..}` with six fractional
    /// digits in `v`.
    pub fn to_json_line(&self) -> String {
        let s = |t: &str| serde_json::to_string(t).expect("string serializes");
        format!(
            "{{\"ts\":{},\"line\":{},\"robot\":{},\"ch\":{},\"v\":{}}}",
            self.ts_ms,
            s(&self.line),
            s(&self.robot),
            s(&self.channel),
            format_micros(self.value)
        )
    }

    pub fn parse_json_line(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Wire<'a> {
            ts: u64,
            line: String,
            robot: String,
            ch: String,
            #[serde(borrow)]
            v: &'a RawValue,
        }
        let w: Wire<'_> = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let value = parse_micros(w.v.get()).ok_or_else(|| format!("bad value {}", w.v.get()))?;
        Ok(SensorRecord {
            ts_ms: w.ts,
            line: w.line,
            robot: w.robot,
            channel: w.ch,
            value,
        })
    }

    /// Aggregation key `line,robot,channel`.
    pub fn group_key(&self) -> String {
        format!("{},{},{}", self.line, self.robot, self.channel)
    }
}
