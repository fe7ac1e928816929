//! Experiment configuration: TOML sections `[modulation]`, `[link]`,
//! `[analysis]` and optional `[compare]`.

use nlilab::egn::KappaSet;
use nlilab::experiment::ModulationSpec;
use nlilab::ssfm::LinkConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_windows")]
    pub windows: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Shaping block lengths listed by `shape-info`.
    #[serde(default)]
    pub block_lengths: Vec<usize>,
    #[serde(default = "default_calibration_dbm")]
    pub calibration_launch_dbm: Vec<f64>,
    #[serde(default = "default_calibration_seeds")]
    pub calibration_seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_file: Option<String>,
    #[serde(default)]
    pub auto_calibrate: bool,
    /// Slots of the independent stream the predictions read moments from.
    #[serde(default = "default_slots")]
    pub moment_slots: usize,
    #[serde(default = "default_rates")]
    pub symbol_rates_gbd: Vec<f64>,
    #[serde(default = "default_spans")]
    pub span_counts: Vec<usize>,
    /// When set, `windows` derives the channel count from this band.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wdm_bandwidth_ghz: Option<f64>,
}

fn default_slots() -> usize {
    1_000_000
}
fn default_windows() -> Vec<usize> {
    (0..=8).map(|k| 1 << k).collect()
}
fn default_seeds() -> Vec<u64> {
    vec![1]
}
fn default_calibration_dbm() -> Vec<f64> {
    vec![-4.0, -2.0, 0.0]
}
fn default_calibration_seeds() -> Vec<u64> {
    vec![1, 2]
}
fn default_rates() -> Vec<f64> {
    vec![5.5, 22.0, 88.0]
}
fn default_spans() -> Vec<usize> {
    vec![1, 20, 72]
}

impl Default for Analysis {
    fn default() -> Self {
        toml::from_str("").expect("defaults deserialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub formats: Vec<ModulationSpec>,
}

/// Fully resolved configuration; its TOML form is the effective-config
/// echo and parses back to an equal value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub modulation: ModulationSpec,
    pub link: LinkConfig,
    pub analysis: Analysis,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    modulation: ModulationSpec,
    #[serde(default)]
    link: toml::Table,
    #[serde(default)]
    analysis: Analysis,
    compare: Option<CompareSection>,
}

/// Calibrated coefficients as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFile {
    pub spm: KappaSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xpm: Option<KappaSet>,
}

/// Line number (1-based) of `key` inside `[section]`, or of the section
/// header when `key` is `None` or absent.
pub fn anchor(text: &str, section: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        if current != section {
            continue;
        }
        if let Some(k) = key {
            let name = t.split('=').next().unwrap_or("").trim();
            if t.contains('=') && name == k {
                return Some(i + 1);
            }
        }
    }
    header
}

fn located(text: &str, section: &str, key: Option<&str>, msg: String) -> String {
    match anchor(text, section, key) {
        Some(line) => format!("line {line}: [{section}] {msg}"),
        None => format!("[{section}] {msg}"),
    }
}

fn resolve_link(table: toml::Table) -> Result<LinkConfig, String> {
    let mut table = table;
    let preset = match table.remove("preset") {
        None => "desk".to_string(),
        Some(toml::Value::String(s)) => s,
        Some(v) => return Err(format!("preset must be a string, got {v}")),
    };
    let base = match preset.as_str() {
        "desk" => LinkConfig::desk(),
        "high-dispersion" => LinkConfig::high_dispersion(),
        other => return Err(format!("unknown preset '{other}' (expected desk or high-dispersion)")),
    };
    let mut merged = toml::Table::try_from(&base).map_err(|e| e.to_string())?;
    for (k, v) in table {
        if !merged.contains_key(&k) {
            return Err(format!("unknown key '{k}'"));
        }
        merged.insert(k, v);
    }
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| e.message().to_string())
}

impl ExperimentConfig {
    /// Parses and validates; error messages carry the offending line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
            match line {
                Some(l) => format!("line {l}: {}", e.message()),
                None => e.message().to_string(),
            }
        })?;
        let link_key = raw.link.keys().find(|k| k.as_str() != "preset").cloned();
        let link = resolve_link(raw.link).map_err(|m| {
            let key = m
                .split('\'')
                .nth(1)
                .map(str::to_string)
                .or(link_key.clone());
            located(text, "link", key.as_deref(), m)
        })?;
        let cfg = Self {
            modulation: raw.modulation,
            link,
            analysis: raw.analysis,
            compare: raw.compare,
        };
        cfg.validate(text)?;
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<(), String> {
        self.modulation.validate().map_err(|e| {
            let key = if e.to_string().contains("entropy") {
                Some("entropy")
            } else if e.to_string().contains("block length") {
                Some("n")
            } else {
                Some("kind")
            };
            located(text, "modulation", key, e.to_string())
        })?;
        self.link.validate().map_err(|e| located(text, "link", None, e.to_string()))?;
        if self.link.launch_dbm.is_empty() {
            return Err(located(text, "link", Some("launch_dbm"), "launch sweep is empty".into()));
        }
        let a = &self.analysis;
        let check = |ok: bool, key: &str, msg: &str| -> Result<(), String> {
            if ok {
                Ok(())
            } else {
                Err(located(text, "analysis", Some(key), msg.into()))
            }
        };
        check(a.slots > 0, "slots", "slots must be positive")?;
        check(a.moment_slots > 0, "moment_slots", "moment_slots must be positive")?;
        check(
            !a.windows.is_empty() && a.windows.iter().all(|&w| w > 0),
            "windows",
            "window grid must be nonempty and positive",
        )?;
        check(
            a.windows.windows(2).all(|p| p[1] > p[0]),
            "windows",
            "window grid must be strictly ascending",
        )?;
        check(!a.seeds.is_empty(), "seeds", "at least one seed is required")?;
        check(
            !a.calibration_launch_dbm.is_empty(),
            "calibration_launch_dbm",
            "calibration sweep is empty",
        )?;
        check(!a.calibration_seeds.is_empty(), "calibration_seeds", "at least one calibration seed is required")?;
        check(
            a.symbol_rates_gbd.iter().all(|&r| r > 0.0),
            "symbol_rates_gbd",
            "symbol rates must be positive",
        )?;
        check(a.span_counts.iter().all(|&s| s > 0), "span_counts", "span counts must be positive")?;
        check(a.block_lengths.iter().all(|&n| n > 0), "block_lengths", "block lengths must be positive")?;
        if let Some(c) = &self.compare {
            if c.formats.is_empty() {
                return Err(located(text, "compare", Some("formats"), "format list is empty".into()));
            }
            for f in &c.formats {
                f.validate()
                    .map_err(|e| located(text, "compare", Some("formats"), e.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Formats for `compare`: the `[compare]` list, else the modulation.
    pub fn compare_formats(&self) -> Vec<ModulationSpec> {
        self.compare
            .as_ref()
            .map_or_else(|| vec![self.modulation.clone()], |c| c.formats.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
[modulation]
kind = "ess1d"
n = 5
entropy = 1.6

[link]
spans = 3

[analysis]
slots = 1000
"#;

    #[test]
    fn parses_with_defaults() {
        let c = ExperimentConfig::parse(BASIC).unwrap();
        assert_eq!(c.link.spans, 3);
        assert_eq!(c.link.symbol_rate, 5.5e9);
        assert_eq!(c.analysis.slots, 1000);
        assert_eq!(c.analysis.windows[8], 256);
        assert_eq!(c.compare_formats().len(), 1);
    }

    #[test]
    fn echo_round_trips() {
        let c = ExperimentConfig::parse(BASIC).unwrap();
        let again = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        let quiet = BASIC.replace("spans = 3", "spans = 3\nnoise_figure_db = -inf");
        let c = ExperimentConfig::parse(&quiet).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn errors_name_the_line() {
        let e = ExperimentConfig::parse(&BASIC.replace("entropy = 1.6", "entropy = 2.5")).unwrap_err();
        assert!(e.starts_with("line 5:"), "{e}");
        let e = ExperimentConfig::parse(&BASIC.replace("spans = 3", "spanz = 3")).unwrap_err();
        assert!(e.starts_with("line 8:") && e.contains("spanz"), "{e}");
        let e = ExperimentConfig::parse(&BASIC.replace("slots = 1000", "slots = \"x\"")).unwrap_err();
        assert!(e.starts_with("line 11:"), "{e}");
        let e = ExperimentConfig::parse(&format!("{BASIC}windows = [4, 2]\n")).unwrap_err();
        assert!(e.starts_with("line 12:"), "{e}");
        let e = ExperimentConfig::parse(&BASIC.replace("spans = 3", "samples_per_symbol = 2")).unwrap_err();
        assert!(e.starts_with("line 7:") && e.contains("aliasing"), "{e}");
    }

    #[test]
    fn presets() {
        let hd = BASIC.replace("spans = 3", "preset = \"high-dispersion\"");
        assert_eq!(ExperimentConfig::parse(&hd).unwrap().link.symbol_rate, 22e9);
        let bad = BASIC.replace("spans = 3", "preset = \"lab\"");
        assert!(ExperimentConfig::parse(&bad).unwrap_err().contains("unknown preset"));
    }

    #[test]
    fn anchors() {
        let t = "[a]\nx = 1\n[b]\nx = 2\n";
        assert_eq!(anchor(t, "b", Some("x")), Some(4));
        assert_eq!(anchor(t, "b", Some("y")), Some(3));
        assert_eq!(anchor(t, "c", None), None);
    }
}
