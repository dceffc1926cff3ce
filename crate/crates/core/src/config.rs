//! Flat `key = value` configuration text.
//!
//! `[section]` headers prefix the keys that follow (`[schedule]` then `a = 1`
//! yields `schedule.a`). `#` starts a comment. Command-line `--key=value`
//! flags override file entries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("{origin}: key `{key}`: cannot parse `{value}`: {reason}")]
    Value {
        origin: Origin,
        key: String,
        value: String,
        reason: String,
    },
    #[error("unknown key `{key}` ({origin})")]
    UnknownKey { origin: Origin, key: String },
    #[error("missing required key `{0}`")]
    Missing(String),
    #[error("override `{0}` is not of the form --key=value")]
    BadOverride(String),
}

/// Where a value came from, for error messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(l) => write!(f, "line {l}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, (String, Origin)>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    reason: "unterminated section header".into(),
                })?;
                let name = name.trim();
                if name.is_empty() || name.contains(char::is_whitespace) {
                    return Err(ConfigError::Syntax {
                        line,
                        reason: format!("invalid section name `{name}`"),
                    });
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                reason: format!("expected `key = value`, found `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line,
                    reason: format!("invalid key `{key}`"),
                });
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let value = value.trim().trim_matches('"').to_string();
            if entries.insert(full.clone(), (value, Origin::Line(line))).is_some() {
                return Err(ConfigError::Duplicate { line, key: full });
            }
        }
        Ok(Config { entries })
    }

    /// Applies `--key=value` flags; later flags win.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, flags: &[S]) -> Result<(), ConfigError> {
        for flag in flags {
            let flag = flag.as_ref();
            let (key, value) = flag
                .strip_prefix("--")
                .and_then(|f| f.split_once('='))
                .filter(|(k, _)| !k.is_empty())
                .ok_or_else(|| ConfigError::BadOverride(flag.to_string()))?;
            self.set(key, value);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries
            .insert(key.to_string(), (value.trim().to_string(), Origin::Override));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn origin(&self, key: &str) -> Option<Origin> {
        self.entries.get(key).map(|(_, o)| *o)
    }

    /// Parses `key` if present.
    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        let Some((value, origin)) = self.entries.get(key) else {
            return Ok(None);
        };
        value.parse().map(Some).map_err(|e: T::Err| ConfigError::Value {
            origin: *origin,
            key: key.to_string(),
            value: value.clone(),
            reason: e.to_string(),
        })
    }

    pub fn parsed_or<T>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    /// Errors on the first key not in `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), ConfigError> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, (_, origin))) => Err(ConfigError::UnknownKey {
                origin: *origin,
                key: k.clone(),
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let c = Config::parse(
            "experiment = synthetic-quadratic # trailing\n\n[schedule]\n a = 1\nb=0.2\n[oracle]\nmode = single\n",
        )
        .unwrap();
        assert_eq!(c.get("experiment"), Some("synthetic-quadratic"));
        assert_eq!(c.get("schedule.b"), Some("0.2"));
        assert_eq!(c.get("oracle.mode"), Some("single"));
        assert_eq!(c.origin("schedule.a"), Some(Origin::Line(4)));
    }

    #[test]
    fn errors_cite_line_and_key() {
        assert_eq!(
            Config::parse("a = 1\nnonsense\n").unwrap_err(),
            ConfigError::Syntax {
                line: 2,
                reason: "expected `key = value`, found `nonsense`".into()
            }
        );
        assert!(matches!(
            Config::parse("a = 1\na = 2").unwrap_err(),
            ConfigError::Duplicate { line: 2, .. }
        ));
        let c = Config::parse("\n[schedule]\nb = fast\n").unwrap();
        let err = c.parsed::<f64>("schedule.b").unwrap_err();
        assert!(err.to_string().starts_with("line 3: key `schedule.b`"), "{err}");
    }

    #[test]
    fn overrides_win() {
        let mut c = Config::parse("seed = 1\n").unwrap();
        c.apply_overrides(&["--seed=7", "--schedule.a=0.5"]).unwrap();
        assert_eq!(c.parsed::<u64>("seed").unwrap(), Some(7));
        assert_eq!(c.get("schedule.a"), Some("0.5"));
        assert_eq!(c.origin("seed"), Some(Origin::Override));
        assert!(c.apply_overrides(&["seed=3"]).is_err());
    }

    #[test]
    fn unknown_keys() {
        let c = Config::parse("seed = 1\nsede = 2\n").unwrap();
        assert_eq!(
            c.reject_unknown(&["seed"]).unwrap_err(),
            ConfigError::UnknownKey {
                origin: Origin::Line(2),
                key: "sede".into()
            }
        );
    }
}
