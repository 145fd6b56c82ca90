//! Run configuration: `key = value` pairs grouped under `[section]` headers
//! (TOML syntax; strings quoted). Every lookup records the resolved value so
//! the effective parameters can be written into output headers.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt;

use toml::{Spanned, Value};

/// Configuration problem with the line it refers to (0 when not tied to a line).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub msg: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "config line {}: {}", self.line, self.msg)
        } else {
            write!(f, "config: {}", self.msg)
        }
    }
}

impl std::error::Error for ConfigError {}

type Section = BTreeMap<String, Spanned<Value>>;

#[derive(Debug, Default)]
pub struct Config {
    source: String,
    sections: BTreeMap<String, Section>,
    resolved: RefCell<BTreeMap<String, String>>,
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].matches('\n').count() + 1
}

impl Config {
    pub fn parse(source: &str) -> Result<Self, ConfigError> {
        let sections: BTreeMap<String, Section> = toml::from_str(source).map_err(|e| ConfigError {
            line: e.span().map_or(0, |s| line_of(source, s.start)),
            msg: e.message().trim().to_string(),
        })?;
        Ok(Self {
            source: source.to_string(),
            sections,
            resolved: RefCell::default(),
        })
    }

    fn raw(&self, section: &str, key: &str) -> Option<&Spanned<Value>> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn line(&self, v: &Spanned<Value>) -> usize {
        line_of(&self.source, v.span().start)
    }

    pub fn error_at(&self, section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.raw(section, key).map_or(0, |v| self.line(v)),
            msg: format!("[{section}] {key}: {}", msg.into()),
        }
    }

    fn record(&self, section: &str, key: &str, value: String) {
        self.resolved.borrow_mut().insert(format!("{section}.{key}"), value);
    }

    /// Records a value that did not come from the file (e.g. a command-line override).
    pub fn set_resolved(&self, section: &str, key: &str, value: impl ToString) {
        self.record(section, key, value.to_string());
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.raw(section, key).is_some()
    }

    pub fn opt_f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(v) = self.raw(section, key) else {
            return Ok(None);
        };
        let x = match v.get_ref() {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            _ => return Err(self.error_at(section, key, "expected a number")),
        };
        if !x.is_finite() {
            return Err(self.error_at(section, key, "value must be finite"));
        }
        self.record(section, key, format!("{x}"));
        Ok(Some(x))
    }

    pub fn f64_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.opt_f64(section, key)? {
            Some(x) => Ok(x),
            None => {
                self.record(section, key, format!("{default}"));
                Ok(default)
            }
        }
    }

    /// Strictly positive number, with a default when absent.
    pub fn positive_or(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let x = self.f64_or(section, key, default)?;
        if x > 0.0 {
            Ok(x)
        } else {
            Err(self.error_at(section, key, format!("must be positive, got {x}")))
        }
    }

    pub fn usize_or(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.raw(section, key) {
            None => {
                self.record(section, key, default.to_string());
                Ok(default)
            }
            Some(v) => match v.get_ref() {
                Value::Integer(i) if *i > 0 => {
                    self.record(section, key, i.to_string());
                    Ok(*i as usize)
                }
                _ => Err(self.error_at(section, key, "expected a positive integer")),
            },
        }
    }

    /// Non-negative integer, with a default when absent.
    pub fn count_or(&self, section: &str, key: &str, default: u32) -> Result<u32, ConfigError> {
        match self.raw(section, key) {
            None => {
                self.record(section, key, default.to_string());
                Ok(default)
            }
            Some(v) => match v.get_ref() {
                Value::Integer(i) if (0..=u32::MAX as i64).contains(i) => {
                    self.record(section, key, i.to_string());
                    Ok(*i as u32)
                }
                _ => Err(self.error_at(section, key, "expected a non-negative integer")),
            },
        }
    }

    pub fn opt_str(&self, section: &str, key: &str) -> Result<Option<String>, ConfigError> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => match v.get_ref() {
                Value::String(s) => {
                    self.record(section, key, s.clone());
                    Ok(Some(s.clone()))
                }
                _ => Err(self.error_at(section, key, "expected a quoted string")),
            },
        }
    }

    pub fn str_or(&self, section: &str, key: &str, default: &str) -> Result<String, ConfigError> {
        match self.opt_str(section, key)? {
            Some(s) => Ok(s),
            None => {
                self.record(section, key, default.to_string());
                Ok(default.to_string())
            }
        }
    }

    pub fn bool_or(&self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(section, key) {
            None => {
                self.record(section, key, default.to_string());
                Ok(default)
            }
            Some(v) => match v.get_ref() {
                Value::Boolean(b) => {
                    self.record(section, key, b.to_string());
                    Ok(*b)
                }
                _ => Err(self.error_at(section, key, "expected true or false")),
            },
        }
    }

    /// Array of numbers (empty when absent).
    pub fn f64_list(&self, section: &str, key: &str) -> Result<Vec<f64>, ConfigError> {
        let Some(v) = self.raw(section, key) else {
            return Ok(Vec::new());
        };
        let Value::Array(items) = v.get_ref() else {
            return Err(self.error_at(section, key, "expected an array of numbers"));
        };
        let xs = items
            .iter()
            .map(|it| match it {
                Value::Float(x) => Ok(*x),
                Value::Integer(i) => Ok(*i as f64),
                _ => Err(self.error_at(section, key, "expected an array of numbers")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.record(
            section,
            key,
            format!("[{}]", xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")),
        );
        Ok(xs)
    }

    /// Keys present in the file that no lookup touched.
    pub fn unused_keys(&self) -> Vec<(String, usize)> {
        let resolved = self.resolved.borrow();
        let mut out = Vec::new();
        for (name, section) in &self.sections {
            for (key, v) in section {
                if !resolved.contains_key(&format!("{name}.{key}")) {
                    out.push((format!("[{name}] {key}"), self.line(v)));
                }
            }
        }
        out.sort_by_key(|(_, line)| *line);
        out
    }

    /// Every parameter read so far, as `section.key = value`, sorted.
    pub fn resolved(&self) -> Vec<(String, String)> {
        self.resolved
            .borrow()
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_sections_and_defaults() {
        let c = Config::parse("[electron]\nenergy_kev = 60\n\n[mask]\npreset = \"disk\"\nlowpass = false\n").unwrap();
        assert_eq!(c.f64_or("electron", "energy_kev", 1.0).unwrap(), 60.0);
        assert_eq!(c.f64_or("light", "wavelength_nm", 500.0).unwrap(), 500.0);
        assert_eq!(c.opt_str("mask", "preset").unwrap().as_deref(), Some("disk"));
        assert!(!c.bool_or("mask", "lowpass", true).unwrap());
        let r = c.resolved();
        assert!(r.contains(&("light.wavelength_nm".into(), "500".into())));
        assert!(c.unused_keys().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let c = Config::parse("[electron]\n\nenergy_kev = -5\n").unwrap();
        let e = c.positive_or("electron", "energy_kev", 60.0).unwrap_err();
        assert_eq!(e.line, 3);
        let e = Config::parse("[a]\nx = 1\ny = \n").unwrap_err();
        assert_eq!(e.line, 3);
        let c = Config::parse("[a]\nx = \"text\"\n").unwrap();
        assert_eq!(c.opt_f64("a", "x").unwrap_err().line, 2);
        let c = Config::parse("[a]\nx = 1\n").unwrap();
        c.f64_list("a", "x").unwrap_err();
    }

    #[test]
    fn unused_keys_are_reported() {
        let c = Config::parse("[a]\nx = 1\ntypo = 2\n").unwrap();
        c.f64_or("a", "x", 0.0).unwrap();
        assert_eq!(c.unused_keys(), vec![("[a] typo".to_string(), 3)]);
    }
}
