//! Run configuration: flat `key = value` text with optional `[section]`
//! headers, or the same keys as a JSON object (flat or one level of sections).

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use multibeam::experiments::{default_spacing_range, StudyKind};
use multibeam::metrics::Projection;
use multibeam::LatticeKind;
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{location}unknown key `{key}`")]
    UnknownKey { key: String, location: Location },
    #[error("{location}`{key}`: {message}")]
    Invalid {
        key: String,
        message: String,
        location: Location,
    },
    #[error("invalid JSON config: {0}")]
    Json(String),
}

/// Where a value came from, for error messages.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Location {
    Line(usize),
    Field(String),
    #[default]
    Override,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Line(n) => write!(f, "line {n}: "),
            Location::Field(name) => write!(f, "field {name}: "),
            Location::Override => write!(f, "override: "),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Waist {
    Optimize,
    /// w/L_a
    Ratio(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Detuning {
    Resonant,
    Value(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub lattice: LatticeKind,
    pub spacing: f64,
    pub atoms: usize,
    pub waist: Waist,
    pub na: f64,
    pub detuning: Detuning,
    pub projection: Projection,
    pub spectral_resolution: usize,
    pub bz_resolution: usize,
    pub study: Option<StudyKind>,
    /// Require the spacing (and spacing grid) to sit inside the single-shell window.
    pub window_check: bool,
    pub grid: Option<Vec<f64>>,
    pub apertures: Vec<f64>,
    /// Outer a/λ range of the scaling study; defaults to the lattice's window interior.
    pub spacing_range: Option<(f64, f64)>,
    pub seeds: Vec<u64>,
    pub shift: [f64; 3],
    /// Position disorder δr/a.
    pub disorder: f64,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
    #[serde(skip)]
    origins: Origins,
}

/// Where each key was last set; ignored by comparisons.
#[derive(Clone, Debug, Default)]
struct Origins(BTreeMap<&'static str, Location>);

impl PartialEq for Origins {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lattice: LatticeKind::Triangular,
            spacing: 1.76,
            atoms: 149,
            waist: Waist::Optimize,
            na: 1.0,
            detuning: Detuning::Resonant,
            projection: Projection::FilteredMirror,
            spectral_resolution: 256,
            bz_resolution: 201,
            study: None,
            window_check: false,
            grid: None,
            apertures: Vec::new(),
            spacing_range: None,
            seeds: (0..20).collect(),
            shift: [0.0; 3],
            disorder: 0.0,
            format: None,
            output: None,
            origins: Origins::default(),
        }
    }
}

const SECTIONS: &[&str] = &["lattice", "mode", "solver", "study", "output"];

/// Canonical key for an accepted spelling.
fn canonical(key: &str) -> Option<&'static str> {
    let k = key.trim().to_ascii_lowercase();
    let k = k.rsplit('.').next().unwrap_or("");
    Some(match k {
        "lattice" | "kind" => "lattice",
        "a" | "spacing" => "a",
        "n" | "atoms" => "atoms",
        "w" | "waist" => "waist",
        "na" => "na",
        "delta" | "detuning" => "detuning",
        "projection" => "projection",
        "nk" | "spectral_resolution" => "nk",
        "bz" | "bz_resolution" => "bz_resolution",
        "study" => "study",
        "grid" => "grid",
        "apertures" => "apertures",
        "spacing_range" => "spacing_range",
        "seeds" => "seeds",
        "shift" => "shift",
        "disorder" | "dr" => "disorder",
        "format" => "format",
        "output" => "output",
        _ => return None,
    })
}

fn invalid(key: &str, message: impl Into<String>, location: &Location) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
        location: location.clone(),
    }
}

fn number<T: FromStr>(key: &str, v: &str, loc: &Location) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| invalid(key, format!("expected a number, got `{}`", v.trim()), loc))
}

fn list(key: &str, v: &str, loc: &Location) -> Result<Vec<f64>, ConfigError> {
    let v = v.trim();
    if v.is_empty() {
        return Ok(Vec::new());
    }
    // lo:hi:step, inclusive of hi up to rounding
    if v.contains(':') {
        let p: Vec<f64> = v
            .split(':')
            .map(|s| number(key, s, loc))
            .collect::<Result<_, _>>()?;
        if p.len() != 3 || !(p[2] > 0.0) || p[1] < p[0] {
            return Err(invalid(
                key,
                "range must be lo:hi:step with step > 0 and hi ≥ lo",
                loc,
            ));
        }
        let n = ((p[1] - p[0]) / p[2] + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| tidy(p[0] + i as f64 * p[2])).collect());
    }
    v.split(',').map(|s| number(key, s, loc)).collect()
}

/// Drops the accumulated rounding of a generated grid value.
pub(crate) fn tidy(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

fn seeds(v: &str, loc: &Location) -> Result<Vec<u64>, ConfigError> {
    let v = v.trim();
    if let Some((a, b)) = v.split_once("..") {
        let a: u64 = number("seeds", a, loc)?;
        let b: u64 = number("seeds", b, loc)?;
        if b <= a {
            return Err(invalid("seeds", "empty seed range", loc));
        }
        return Ok((a..b).collect());
    }
    if v.contains(',') {
        return v.split(',').map(|s| number("seeds", s, loc)).collect();
    }
    let n: u64 = number("seeds", v, loc)?;
    Ok((0..n).collect())
}

fn study(v: &str, loc: &Location) -> Result<(Option<StudyKind>, bool), ConfigError> {
    let s = v.trim().to_ascii_lowercase().replace('-', "_");
    Ok(match s.as_str() {
        "none" | "" => (None, false),
        "spacing" => (Some(StudyKind::Spacing), false),
        "spacing_window" => (Some(StudyKind::Spacing), true),
        "na" => (Some(StudyKind::Na), false),
        "n_scaling" | "scaling" => (Some(StudyKind::NScaling), false),
        "waist" => (Some(StudyKind::Waist), false),
        "shift_lateral" | "lateral" => (Some(StudyKind::ShiftLateral), false),
        "shift_axial" | "axial" => (Some(StudyKind::ShiftAxial), false),
        "disorder" => (Some(StudyKind::Disorder), false),
        _ => {
            return Err(invalid(
                "study",
                format!("unknown study `{}`", v.trim()),
                loc,
            ))
        }
    })
}

impl RunConfig {
    pub fn spacing_range(&self) -> (f64, f64) {
        self.spacing_range
            .unwrap_or_else(|| default_spacing_range(self.lattice))
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str, loc: &Location) -> Result<(), ConfigError> {
        let Some(k) = canonical(key) else {
            return Err(ConfigError::UnknownKey {
                key: key.trim().to_string(),
                location: loc.clone(),
            });
        };
        let v = value.trim();
        match k {
            "lattice" => {
                self.lattice = v
                    .parse()
                    .map_err(|_| invalid(k, format!("unknown lattice `{v}`"), loc))?;
            }
            "a" => self.spacing = number(k, v, loc)?,
            "atoms" => self.atoms = number(k, v, loc)?,
            "waist" => {
                self.waist = if v.eq_ignore_ascii_case("optimize") {
                    Waist::Optimize
                } else {
                    Waist::Ratio(number(k, v, loc)?)
                }
            }
            "na" => self.na = number(k, v, loc)?,
            "detuning" => {
                self.detuning = if v.eq_ignore_ascii_case("resonant") {
                    Detuning::Resonant
                } else {
                    Detuning::Value(number(k, v, loc)?)
                }
            }
            "projection" => {
                self.projection = match v.to_ascii_lowercase().as_str() {
                    "filtered" | "filtered_mirror" => Projection::FilteredMirror,
                    "original" | "original_mirror" => Projection::OriginalMirror,
                    _ => {
                        return Err(invalid(
                            k,
                            format!("expected filtered or original, got `{v}`"),
                            loc,
                        ))
                    }
                }
            }
            "nk" => self.spectral_resolution = number(k, v, loc)?,
            "bz_resolution" => self.bz_resolution = number(k, v, loc)?,
            "study" => (self.study, self.window_check) = study(v, loc)?,
            "grid" => {
                let g = list(k, v, loc)?;
                self.grid = if g.is_empty() { None } else { Some(g) };
            }
            "apertures" => self.apertures = list(k, v, loc)?,
            "spacing_range" => {
                let r = list(k, v, loc)?;
                if r.len() != 2 {
                    return Err(invalid(k, "expected lo,hi", loc));
                }
                self.spacing_range = Some((r[0], r[1]));
            }
            "seeds" => self.seeds = seeds(v, loc)?,
            "shift" => {
                let s = list(k, v, loc)?;
                if s.len() != 3 {
                    return Err(invalid(k, "expected three components x,y,z", loc));
                }
                self.shift = [s[0], s[1], s[2]];
            }
            "disorder" => self.disorder = number(k, v, loc)?,
            "format" => {
                self.format = Some(match v.to_ascii_lowercase().as_str() {
                    "csv" => Format::Csv,
                    "json" => Format::Json,
                    _ => return Err(invalid(k, format!("expected csv or json, got `{v}`"), loc)),
                })
            }
            "output" => {
                self.output = if v.is_empty() {
                    None
                } else {
                    Some(PathBuf::from(v))
                }
            }
            _ => unreachable!("canonical keys are exhaustive"),
        }
        self.origins.0.insert(k, loc.clone());
        Ok(())
    }

    /// Checks every field against the library's preconditions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |k: &str, m: String| {
            let loc = self
                .origins
                .0
                .get(k)
                .cloned()
                .unwrap_or_else(|| Location::Field(k.to_string()));
            Err(invalid(k, m, &loc))
        };
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            return bad(
                "a",
                format!("spacing must be positive, got {}", self.spacing),
            );
        }
        if self.atoms == 0 {
            return bad("atoms", "N must be at least 1".into());
        }
        for na in std::iter::once(&self.na).chain(&self.apertures) {
            if !(*na > 0.0 && *na <= 1.0) {
                return bad("na", format!("must lie in (0, 1], got {na}"));
            }
        }
        if let Waist::Ratio(r) = self.waist {
            if !(r > 0.0 && r.is_finite()) {
                return bad("waist", format!("w/L_a must be positive, got {r}"));
            }
        }
        if let Detuning::Value(d) = self.detuning {
            if !d.is_finite() {
                return bad("detuning", "must be finite".into());
            }
        }
        if self.spectral_resolution < 8 {
            return bad(
                "nk",
                format!("need at least 8, got {}", self.spectral_resolution),
            );
        }
        if self.bz_resolution < 8 {
            return bad(
                "bz_resolution",
                format!("need at least 8, got {}", self.bz_resolution),
            );
        }
        if !(self.disorder >= 0.0 && self.disorder.is_finite()) {
            return bad(
                "disorder",
                format!("must be non-negative, got {}", self.disorder),
            );
        }
        if self.shift.iter().any(|s| !s.is_finite()) {
            return bad("shift", "components must be finite".into());
        }
        let (lo, hi) = self.spacing_range();
        if !(lo > 0.0 && hi > lo) {
            return bad("spacing_range", "needs 0 < lo < hi".into());
        }
        if let Some(g) = &self.grid {
            if g.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("grid", "values must be strictly increasing".into());
            }
        }
        if self.window_check {
            let (wlo, whi) = self.lattice.single_shell_window();
            let outside = |a: f64| a <= wlo || a >= whi;
            if outside(self.spacing) {
                return bad(
                    "a",
                    format!(
                        "{} outside the single-shell window ({wlo:.4}, {whi:.4})",
                        self.spacing
                    ),
                );
            }
            if let Some(a) = self.grid.iter().flatten().find(|a| outside(**a)) {
                return bad(
                    "grid",
                    format!("{a} outside the single-shell window ({wlo:.4}, {whi:.4})"),
                );
            }
        }
        Ok(())
    }

    /// Canonical `key = value` lines, re-parseable by [`apply_text`].
    pub fn emit(&self) -> Vec<(String, String)> {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = vec![
            ("lattice", self.lattice.to_string()),
            ("a", self.spacing.to_string()),
            ("atoms", self.atoms.to_string()),
            (
                "waist",
                match self.waist {
                    Waist::Optimize => "optimize".into(),
                    Waist::Ratio(r) => r.to_string(),
                },
            ),
            ("na", self.na.to_string()),
            (
                "detuning",
                match self.detuning {
                    Detuning::Resonant => "resonant".into(),
                    Detuning::Value(d) => d.to_string(),
                },
            ),
            (
                "projection",
                match self.projection {
                    Projection::FilteredMirror => "filtered".into(),
                    Projection::OriginalMirror => "original".into(),
                },
            ),
            ("nk", self.spectral_resolution.to_string()),
            ("bz_resolution", self.bz_resolution.to_string()),
            (
                "study",
                match (self.study, self.window_check) {
                    (None, _) => "none".into(),
                    (Some(StudyKind::Spacing), true) => "spacing_window".into(),
                    (Some(k), _) => serde_json::to_value(k)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_string))
                        .unwrap_or_default(),
                },
            ),
            ("grid", self.grid.as_deref().map(join).unwrap_or_default()),
            ("apertures", join(&self.apertures)),
            ("seeds", emit_seeds(&self.seeds)),
            ("shift", join(&self.shift)),
            ("disorder", self.disorder.to_string()),
        ];
        if let Some((lo, hi)) = self.spacing_range {
            out.push(("spacing_range", format!("{lo},{hi}")));
        }
        if let Some(f) = self.format {
            out.push((
                "format",
                if f == Format::Csv {
                    "csv".into()
                } else {
                    "json".into()
                },
            ));
        }
        if let Some(p) = &self.output {
            out.push(("output", p.display().to_string()));
        }
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn emit_text(&self) -> String {
        self.emit()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn emit_seeds(s: &[u64]) -> String {
    let contiguous = s.windows(2).all(|w| w[1] == w[0] + 1);
    match s {
        [] => String::new(),
        [first, ..] if contiguous => format!("{}..{}", first, s[s.len() - 1] + 1),
        _ => s
            .iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(","),
    }
}

/// Parses a config file (key = value text or JSON) and validates it.
#[cfg(test)]
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    apply_text(&mut cfg, text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Applies a config text on top of an existing configuration without
/// validating.
pub fn apply_text(cfg: &mut RunConfig, text: &str) -> Result<(), ConfigError> {
    if text.trim_start().starts_with('{') {
        return apply_json(cfg, text);
    }
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax {
                    line: line_no,
                    message: format!("unterminated section header `{line}`"),
                })?
                .trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    message: format!("unknown section `{name}`"),
                });
            }
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        cfg.set(k, v, &Location::Line(line_no))?;
    }
    Ok(())
}

fn apply_json(cfg: &mut RunConfig, text: &str) -> Result<(), ConfigError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ConfigError::Json("top level must be an object".into()))?;
    let mut apply = |name: &str, v: &serde_json::Value| -> Result<(), ConfigError> {
        let s = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Array(items) => items
                .iter()
                .map(|x| match x {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            serde_json::Value::Null => String::new(),
            serde_json::Value::Object(_) => {
                return Err(invalid(
                    name,
                    "nested objects are only allowed for sections",
                    &Location::Field(name.into()),
                ))
            }
        };
        cfg.set(name, &s, &Location::Field(name.to_string()))
    };
    for (k, v) in obj {
        match v {
            serde_json::Value::Object(inner) if SECTIONS.contains(&k.as_str()) => {
                for (ik, iv) in inner {
                    apply(&format!("{k}.{ik}"), iv)?;
                }
            }
            _ => apply(k, v)?,
        }
    }
    Ok(())
}
