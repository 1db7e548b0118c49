//! The line-oriented run-configuration format.
//!
//! Grammar (documented in docs/config.md):
//! - `[section]` headers, `key = value` lines, `#` comment lines, blanks;
//! - keys are unique within their section; unknown or unconsumed keys are
//!   rejected after a command has read everything it understands;
//! - list values are whitespace-separated numbers, with `;` separating
//!   tuples where a key takes several of them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    consumed: std::cell::RefCell<BTreeSet<(String, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RawConfig::default();
        let mut section = String::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("line {}: unterminated section", ln + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError(format!("line {}: empty section name", ln + 1)));
                }
                section = name.to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    ln + 1
                )));
            };
            if section.is_empty() {
                return Err(ConfigError(format!(
                    "line {}: `key = value` before any [section]",
                    ln + 1
                )));
            }
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            let entry = cfg.sections.get_mut(&section).unwrap();
            if entry.insert(key.clone(), value).is_some() {
                return Err(ConfigError(format!(
                    "line {}: duplicate key `{key}` in [{section}]",
                    ln + 1
                )));
            }
        }
        Ok(cfg)
    }

    /// Apply a `section.key=value` override.
    pub fn set_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("override `{spec}` is not `section.key=value`")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| ConfigError(format!("override `{spec}` is missing `section.`")))?;
        self.sections
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        let v = self.sections.get(section)?.get(key)?;
        self.consumed
            .borrow_mut()
            .insert((section.to_string(), key.to_string()));
        Some(v.as_str())
    }

    pub fn get_str(&self, section: &str, key: &str, default: &str) -> String {
        self.get(section, key).unwrap_or(default).to_string()
    }

    pub fn require(&self, section: &str, key: &str) -> Result<&str, ConfigError> {
        self.get(section, key)
            .ok_or_else(|| ConfigError(format!("missing required key `{key}` in [{section}]")))
    }

    pub fn get_f64(&self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e| ConfigError(format!("[{section}] {key} = `{s}`: {e}"))),
        }
    }

    pub fn get_usize(&self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e| ConfigError(format!("[{section}] {key} = `{s}`: {e}"))),
        }
    }

    pub fn get_u32(&self, section: &str, key: &str, default: u32) -> Result<u32, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e| ConfigError(format!("[{section}] {key} = `{s}`: {e}"))),
        }
    }

    pub fn get_u64(&self, section: &str, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(section, key) {
            None => Ok(default),
            Some(s) => s
                .parse()
                .map_err(|e| ConfigError(format!("[{section}] {key} = `{s}`: {e}"))),
        }
    }

    /// Whitespace-separated float list.
    pub fn get_f64_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(s) => {
                let v: Result<Vec<f64>, _> = s.split_whitespace().map(|t| t.parse()).collect();
                v.map(Some)
                    .map_err(|e| ConfigError(format!("[{section}] {key} = `{s}`: {e}")))
            }
        }
    }

    /// Semicolon-separated tuples of whitespace-separated floats.
    pub fn get_tuple_list(
        &self,
        section: &str,
        key: &str,
    ) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some(s) => {
                let mut out = Vec::new();
                for chunk in s.split(';') {
                    let chunk = chunk.trim();
                    if chunk.is_empty() {
                        continue;
                    }
                    let v: Result<Vec<f64>, _> =
                        chunk.split_whitespace().map(|t| t.parse()).collect();
                    out.push(v.map_err(|e| {
                        ConfigError(format!("[{section}] {key} chunk `{chunk}`: {e}"))
                    })?);
                }
                Ok(Some(out))
            }
        }
    }

    /// Reject undocumented keys: typos and misplaced keys must not pass
    /// silently. Keys a command did not consume are fine as long as they are
    /// in the documented vocabulary (one config may drive several commands
    /// of a pipeline).
    pub fn finish(&self) -> Result<(), ConfigError> {
        let consumed = self.consumed.borrow();
        let mut unknown = String::new();
        for (section, keys) in &self.sections {
            for key in keys.keys() {
                let known = KNOWN_KEYS
                    .iter()
                    .any(|(s, k)| *s == section.as_str() && *k == key.as_str());
                if !known && !consumed.contains(&(section.clone(), key.clone())) {
                    let _ = write!(unknown, " [{section}] {key};");
                }
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(format!("unknown keys:{unknown}")))
        }
    }
}

/// The documented configuration vocabulary (see docs/config.md).
const KNOWN_KEYS: &[(&str, &str)] = &[
    ("run", "out"),
    ("domain", "preset"),
    ("domain", "nx"),
    ("domain", "ny"),
    ("domain", "x0"),
    ("domain", "y0"),
    ("domain", "width"),
    ("domain", "height"),
    ("domain", "a"),
    ("domain", "b"),
    ("domain", "c"),
    ("domain", "refine"),
    ("domain", "vertices"),
    ("domain", "target_h"),
    ("polygon", "preset"),
    ("polygon", "scale"),
    ("polygon", "vertices"),
    ("tension", "model"),
    ("tension", "singular_points"),
    ("tension", "base_weight"),
    ("tension", "singular_radius"),
    ("boundary", "preset"),
    ("boundary", "p0"),
    ("boundary", "vertices"),
    ("boundary", "values"),
    ("boundary", "sample_density"),
    ("schedule", "m_max"),
    ("schedule", "c_base"),
    ("schedule", "eps_base"),
    ("schedule", "moll_base"),
    ("solver", "kkt_scale"),
    ("solver", "constraint_tol"),
    ("solver", "energy_tol"),
    ("solver", "max_iterations"),
    ("solver", "boundary_layer_factor"),
    ("solver", "init"),
    ("sampler", "region"),
    ("sampler", "a"),
    ("sampler", "b"),
    ("sampler", "c"),
    ("sampler", "epsilon"),
    ("sampler", "sites"),
    ("sampler", "boundary"),
    ("sampler", "burn_in"),
    ("sampler", "samples"),
    ("sampler", "thinning"),
    ("sampler", "seed"),
    ("compare", "field_a"),
    ("compare", "field_b"),
    ("compare", "mesh_a"),
    ("compare", "mesh_b"),
    ("diagnose", "field"),
    ("diagnose", "mesh"),
    ("diagnose", "facet_tol"),
    ("diagnose", "jump_tol"),
    ("diagnose", "radii"),
    ("diagnose", "margin"),
    ("diagnose", "window"),
    ("diagnose", "direction"),
    ("diagnose", "c0"),
    ("diagnose", "c1"),
    ("tension-eval", "points"),
    ("tension-eval", "order"),
    ("tension-eval", "penalized_stage"),
    ("output", "raster"),
    ("output", "raster_width"),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_values() {
        let cfg = RawConfig::parse(
            "# comment\n[domain]\npreset = unit-square\nnx = 64\n\n[solver]\ninit = zero\n",
        )
        .unwrap();
        assert_eq!(cfg.get("domain", "preset"), Some("unit-square"));
        assert_eq!(cfg.get_usize("domain", "nx", 0).unwrap(), 64);
        assert_eq!(cfg.get("solver", "init"), Some("zero"));
        cfg.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let cfg = RawConfig::parse("[domain]\npreset = unit-square\ntypo = 3\n").unwrap();
        assert_eq!(cfg.get("domain", "preset"), Some("unit-square"));
        assert!(cfg.finish().is_err());
        assert!(RawConfig::parse("[a]\nx = 1\nx = 2\n").is_err());
        assert!(RawConfig::parse("x = 1\n").is_err());
    }

    #[test]
    fn overrides_replace_values() {
        let mut cfg = RawConfig::parse("[solver]\ninit = zero\n").unwrap();
        cfg.set_override("solver.init=upper").unwrap();
        cfg.set_override("sampler.seed=9").unwrap();
        assert_eq!(cfg.get("solver", "init"), Some("upper"));
        assert_eq!(cfg.get_u64("sampler", "seed", 0).unwrap(), 9);
        cfg.finish().unwrap();
    }

    #[test]
    fn tuple_lists() {
        let cfg = RawConfig::parse("[tension]\nsingular_points = 0.1 0.2 0.5 1.0 ; -0.3 0 0.7 2\n")
            .unwrap();
        let t = cfg.get_tuple_list("tension", "singular_points").unwrap().unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0], vec![0.1, 0.2, 0.5, 1.0]);
    }
}
