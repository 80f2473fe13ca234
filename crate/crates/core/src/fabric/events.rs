use std::fmt;

/// Ordered, append-only log of everything the fabric and daemons did.
///
/// Lines never contain host paths, so two runs in different storage roots
/// produce comparable logs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    lines: Vec<String>,
}

impl EventLog {
    pub fn record(&mut self, now: u64, what: impl fmt::Display) {
        self.lines.push(format!("{now:>10} {what}"));
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Lines recorded at or after index `from`, newline-terminated.
    pub fn render_from(&self, from: usize) -> String {
        let mut out = String::new();
        for line in self.lines.iter().skip(from) {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}
