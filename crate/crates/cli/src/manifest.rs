//! Line-oriented `key=value` run manifest.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;

pub const FORMAT: &str = "gaussian-sr-manifest 1";

#[derive(Default)]
pub struct Manifest {
    lines: Vec<String>,
}

impl Manifest {
    pub fn new() -> Self {
        let mut m = Self::default();
        m.set("format", FORMAT);
        m
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        let value = value.to_string().replace('\n', " ");
        self.lines.push(format!("{key}={value}"));
    }

    pub fn render(&self) -> String {
        let mut out = self.lines.join("\n");
        out.push('\n');
        out
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.render())
    }
}

/// Parses a manifest back into ordered pairs. Blank lines and `#` comments are skipped.
#[cfg(test)]
pub fn parse(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut m = Manifest::new();
        m.set("factor", 4);
        m.set("path", "a=b.png");
        m.set("note", "two\nlines");
        let parsed = parse(&m.render());
        assert_eq!(parsed[0], ("format".into(), FORMAT.into()));
        assert_eq!(parsed[1], ("factor".into(), "4".into()));
        assert_eq!(parsed[2], ("path".into(), "a=b.png".into()));
        assert_eq!(parsed[3], ("note".into(), "two lines".into()));
    }
}
