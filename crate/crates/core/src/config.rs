//! Simulation configuration and its text format.
//!
//! Configs are TOML files with four sections plus two optional experiment
//! sections:
//!
//! ```toml
//! [physics]
//! rho_f = 1.0
//! delta_rho = 0.0
//! nu = 1.0
//! kappa = 5.0
//!
//! [numerics]
//! scheme = "dlm"              # dlm | feibm | dlm_fixed_point
//! coupling_form = "l2_pairing" # l2_pairing | h1_product
//! dt = 0.1
//! t_final = 2.0
//! h_x = "1/32"                # number or "a/b"
//! h_s = "1/16"
//!
//! [geometry]
//! preset = "ellipse_codim1"
//! semi_axes = [0.4, 0.2]
//! center = [0.5, 0.5]
//!
//! [output]
//! vtk_times = [0.1, 2.0]
//! ```
//!
//! Every key is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assembly::CouplingForm;
use crate::error::{Error, Result};
use crate::mesh::{BoundarySpec, Point};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Semi-implicit distributed-Lagrange-multiplier scheme.
    #[default]
    Dlm,
    /// Classical FE-IBM: explicit force, pointwise structure update.
    Feibm,
    /// DLM with fixed-point iteration on the lagged coupling operator.
    DlmFixedPoint,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Dlm => "dlm",
            Scheme::Feibm => "feibm",
            Scheme::DlmFixedPoint => "dlm_fixed_point",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryPreset {
    /// Closed elliptic curve relaxing to a circle.
    #[default]
    EllipseCodim1,
    /// Stretched disk: reference disk of equal area placed as an ellipse.
    EllipseCodim0,
    RectangleCodim1,
    /// Stretched square: reference square of equal area placed as a rectangle.
    RectangleCodim0,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPreset {
    #[default]
    Walls,
    QuarterSymmetry,
}

impl BoundaryPreset {
    pub fn spec(&self) -> BoundarySpec {
        match self {
            BoundaryPreset::Walls => BoundarySpec::walls(),
            BoundaryPreset::QuarterSymmetry => BoundarySpec::quarter_symmetry(),
        }
    }
}

/// How `X^{-1}` is chosen for the first inertia term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreviousPositionInit {
    /// `X^{-1} = X^0`: structure starts at rest.
    #[default]
    Initial,
    /// `X^{-1} = 0`.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub preset: GeometryPreset,
    pub semi_axes: [f64; 2],
    pub center: Point,
    pub rect_size: [f64; 2],
    pub domain_origin: Point,
    pub domain_side: f64,
    pub bc: BoundaryPreset,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            preset: GeometryPreset::EllipseCodim1,
            semi_axes: [0.4, 0.2],
            center: [0.5, 0.5],
            rect_size: [0.4, 0.2],
            domain_origin: [0.0, 0.0],
            domain_side: 1.0,
            bc: BoundaryPreset::Walls,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub rho_f: f64,
    pub delta_rho: f64,
    pub nu: f64,
    pub kappa: f64,
    pub scheme: Scheme,
    pub coupling_form: CouplingForm,
    pub dt: f64,
    pub t_final: f64,
    pub h_x: f64,
    pub h_s: f64,
    pub tol_lin: f64,
    pub eps_fp: f64,
    pub max_fp_iterations: usize,
    pub x_prev_init: PreviousPositionInit,
    pub geometry: GeometryConfig,
    pub blowup_threshold: f64,
    pub vtk_times: Vec<f64>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            rho_f: 1.0,
            delta_rho: 0.0,
            nu: 1.0,
            kappa: 5.0,
            scheme: Scheme::Dlm,
            coupling_form: CouplingForm::L2Pairing,
            dt: 0.1,
            t_final: 2.0,
            h_x: 1.0 / 32.0,
            h_s: 1.0 / 16.0,
            tol_lin: 1e-10,
            eps_fp: 1e-8,
            max_fp_iterations: 50,
            x_prev_init: PreviousPositionInit::Initial,
            geometry: GeometryConfig::default(),
            blowup_threshold: 10.0,
            vtk_times: Vec::new(),
        }
    }
}

impl SimulationConfig {
    /// Number of time steps, `round(T / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Coarse fluid cells per side.
    pub fn fluid_cells(&self) -> usize {
        (self.geometry.domain_side / self.h_x).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        let non_negative = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be non-negative and finite, got {v}")))
            }
        };
        positive("physics.rho_f", self.rho_f)?;
        non_negative("physics.delta_rho", self.delta_rho)?;
        positive("physics.nu", self.nu)?;
        non_negative("physics.kappa", self.kappa)?;
        positive("numerics.dt", self.dt)?;
        non_negative("numerics.t_final", self.t_final)?;
        positive("numerics.h_x", self.h_x)?;
        positive("numerics.h_s", self.h_s)?;
        positive("numerics.tol_lin", self.tol_lin)?;
        non_negative("numerics.eps_fp", self.eps_fp)?;
        if self.max_fp_iterations == 0 {
            return Err(Error::config("numerics.max_fp_iterations", "must be at least 1"));
        }
        positive("output.blowup_threshold", self.blowup_threshold)?;
        let steps = self.t_final / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config(
                "numerics.dt",
                format!("t_final = {} is not a multiple of dt = {}", self.t_final, self.dt),
            ));
        }
        let g = &self.geometry;
        positive("geometry.domain_side", g.domain_side)?;
        let cells = g.domain_side / self.h_x;
        if cells.round() < 1.0 || (cells - cells.round()).abs() > 1e-6 {
            return Err(Error::config(
                "numerics.h_x",
                format!("h_x = {} does not divide the domain side {}", self.h_x, g.domain_side),
            ));
        }
        positive("geometry.semi_axes", g.semi_axes[0].min(g.semi_axes[1]))?;
        positive("geometry.rect_size", g.rect_size[0].min(g.rect_size[1]))?;
        for t in &self.vtk_times {
            non_negative("output.vtk_times", *t)?;
        }
        Ok(())
    }
}

/// A size given either as a number or as a fraction string like `"1/32"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Size {
    Number(f64),
    Text(String),
}

impl Size {
    fn value(&self, key: &str) -> Result<f64> {
        match self {
            Size::Number(v) => Ok(*v),
            Size::Text(s) => parse_fraction(s).ok_or_else(|| Error::config(key, format!("cannot parse `{s}` as a size"))),
        }
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

fn sizes<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let raw = Vec::<Size>::deserialize(d)?;
    raw.iter()
        .map(|s| match s {
            Size::Number(v) => Ok(*v),
            Size::Text(t) => parse_fraction(t).ok_or_else(|| serde::de::Error::custom(format!("cannot parse `{t}` as a size"))),
        })
        .collect()
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhysicsSection {
    rho_f: Option<f64>,
    delta_rho: Option<f64>,
    nu: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NumericsSection {
    scheme: Option<Scheme>,
    coupling_form: Option<CouplingForm>,
    dt: Option<f64>,
    t_final: Option<f64>,
    h_x: Option<Size>,
    h_s: Option<Size>,
    tol_lin: Option<f64>,
    eps_fp: Option<f64>,
    max_fp_iterations: Option<usize>,
    x_prev_init: Option<PreviousPositionInit>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometrySection {
    preset: Option<GeometryPreset>,
    semi_axes: Option<[f64; 2]>,
    center: Option<[f64; 2]>,
    rect_size: Option<[f64; 2]>,
    domain_origin: Option<[f64; 2]>,
    domain_side: Option<f64>,
    bc: Option<BoundaryPreset>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    vtk_times: Option<Vec<f64>>,
    blowup_threshold: Option<f64>,
}

/// Parameter lists for a stability map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub dt: Vec<f64>,
    #[serde(deserialize_with = "sizes")]
    pub h_x: Vec<f64>,
    #[serde(deserialize_with = "sizes")]
    pub h_s: Vec<f64>,
    pub delta_rho: Vec<f64>,
}

/// Overrides for convergence studies; `None` selects the built-in protocol.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub levels: Option<Vec<f64>>,
    pub reference_dt: Option<f64>,
    pub t_final: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    physics: Option<PhysicsSection>,
    numerics: Option<NumericsSection>,
    geometry: Option<GeometrySection>,
    output: Option<OutputSection>,
    sweep: Option<SweepSpec>,
    convergence: Option<ConvergenceSpec>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("physics", &["rho_f", "delta_rho", "nu", "kappa"]),
    (
        "numerics",
        &[
            "scheme",
            "coupling_form",
            "dt",
            "t_final",
            "h_x",
            "h_s",
            "tol_lin",
            "eps_fp",
            "max_fp_iterations",
            "x_prev_init",
        ],
    ),
    (
        "geometry",
        &["preset", "semi_axes", "center", "rect_size", "domain_origin", "domain_side", "bc"],
    ),
    ("output", &["vtk_times", "blowup_threshold"]),
    ("sweep", &["dt", "h_x", "h_s", "delta_rho"]),
    ("convergence", &["levels", "reference_dt", "t_final"]),
];

/// A parsed file: the simulation config, optional experiment sections, and
/// warnings about keys that have no effect.
#[derive(Clone, Debug)]
pub struct ParsedConfig {
    pub config: SimulationConfig,
    pub sweep: Option<SweepSpec>,
    pub convergence: Option<ConvergenceSpec>,
    pub warnings: Vec<String>,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ParsedConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ParsedConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
    for (section, value) in &table {
        let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == section) else {
            return Err(Error::config(section.clone(), "unknown section or top-level key"));
        };
        let toml::Value::Table(inner) = value else {
            return Err(Error::config(section.clone(), "expected a [section]"));
        };
        for key in inner.keys() {
            if !keys.contains(&key.as_str()) {
                return Err(Error::config(format!("{section}.{key}"), "unknown key"));
            }
        }
    }
    // key names are known; remaining errors are type errors inside a section
    let mut file = ConfigFile::default();
    macro_rules! section {
        ($name:literal, $field:ident) => {
            if let Some(v) = table.get($name) {
                file.$field = Some(v.clone().try_into().map_err(|e: toml::de::Error| {
                    Error::config(format!("{}", $name), e.message().to_string())
                })?);
            }
        };
    }
    section!("physics", physics);
    section!("numerics", numerics);
    section!("geometry", geometry);
    section!("output", output);
    section!("sweep", sweep);
    section!("convergence", convergence);

    let mut warnings = Vec::new();
    let mut c = SimulationConfig::default();
    let phys = file.physics.unwrap_or_default();
    c.rho_f = phys.rho_f.unwrap_or(c.rho_f);
    c.delta_rho = phys.delta_rho.unwrap_or(c.delta_rho);
    c.nu = phys.nu.unwrap_or(c.nu);
    c.kappa = phys.kappa.unwrap_or(c.kappa);

    let num = file.numerics.unwrap_or_default();
    c.scheme = num.scheme.unwrap_or(c.scheme);
    if let Some(form) = num.coupling_form {
        if c.scheme == Scheme::Feibm {
            warnings.push("numerics.coupling_form is ignored by the feibm scheme".to_string());
        }
        c.coupling_form = form;
    }
    c.dt = num.dt.unwrap_or(c.dt);
    c.t_final = num.t_final.unwrap_or(c.t_final);
    if let Some(h) = &num.h_x {
        c.h_x = h.value("numerics.h_x")?;
    }
    if let Some(h) = &num.h_s {
        c.h_s = h.value("numerics.h_s")?;
    }
    c.tol_lin = num.tol_lin.unwrap_or(c.tol_lin);
    c.eps_fp = num.eps_fp.unwrap_or(c.eps_fp);
    c.max_fp_iterations = num.max_fp_iterations.unwrap_or(c.max_fp_iterations);
    c.x_prev_init = num.x_prev_init.unwrap_or(c.x_prev_init);
    if c.scheme != Scheme::DlmFixedPoint && (num.eps_fp.is_some() || num.max_fp_iterations.is_some()) {
        warnings.push("fixed-point settings are ignored unless scheme = \"dlm_fixed_point\"".to_string());
    }

    let geo = file.geometry.unwrap_or_default();
    let g = &mut c.geometry;
    g.preset = geo.preset.unwrap_or(g.preset);
    g.semi_axes = geo.semi_axes.unwrap_or(g.semi_axes);
    g.center = geo.center.unwrap_or(g.center);
    g.rect_size = geo.rect_size.unwrap_or(g.rect_size);
    g.domain_origin = geo.domain_origin.unwrap_or(g.domain_origin);
    g.domain_side = geo.domain_side.unwrap_or(g.domain_side);
    g.bc = geo.bc.unwrap_or(g.bc);

    let out = file.output.unwrap_or_default();
    c.vtk_times = out.vtk_times.unwrap_or_default();
    c.blowup_threshold = out.blowup_threshold.unwrap_or(c.blowup_threshold);

    c.validate()?;
    Ok(ParsedConfig {
        config: c,
        sweep: file.sweep,
        convergence: file.convergence,
        warnings,
    })
}

/// Writes a config back in the file format; parsing the result reproduces
/// the config exactly.
pub fn config_to_toml(c: &SimulationConfig) -> String {
    let file = ConfigFile {
        physics: Some(PhysicsSection {
            rho_f: Some(c.rho_f),
            delta_rho: Some(c.delta_rho),
            nu: Some(c.nu),
            kappa: Some(c.kappa),
        }),
        numerics: Some(NumericsSection {
            scheme: Some(c.scheme),
            coupling_form: (c.scheme != Scheme::Feibm).then_some(c.coupling_form),
            dt: Some(c.dt),
            t_final: Some(c.t_final),
            h_x: Some(Size::Number(c.h_x)),
            h_s: Some(Size::Number(c.h_s)),
            tol_lin: Some(c.tol_lin),
            eps_fp: (c.scheme == Scheme::DlmFixedPoint).then_some(c.eps_fp),
            max_fp_iterations: (c.scheme == Scheme::DlmFixedPoint).then_some(c.max_fp_iterations),
            x_prev_init: Some(c.x_prev_init),
        }),
        geometry: Some(GeometrySection {
            preset: Some(c.geometry.preset),
            semi_axes: Some(c.geometry.semi_axes),
            center: Some(c.geometry.center),
            rect_size: Some(c.geometry.rect_size),
            domain_origin: Some(c.geometry.domain_origin),
            domain_side: Some(c.geometry.domain_side),
            bc: Some(c.geometry.bc),
        }),
        output: Some(OutputSection {
            vtk_times: Some(c.vtk_times.clone()),
            blowup_threshold: Some(c.blowup_threshold),
        }),
        sweep: None,
        convergence: None,
    };
    toml::to_string(&file).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_sizes_accept_fractions() {
        let p = parse_config_str("[sweep]\ndt = [0.1]\nh_x = [\"1/32\"]\nh_s = [\"1/8\", 0.25]\ndelta_rho = [0.0]\n").unwrap();
        let s = p.sweep.unwrap();
        assert_eq!(s.h_x, vec![1.0 / 32.0]);
        assert_eq!(s.h_s, vec![0.125, 0.25]);
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let p = parse_config_str("[numerics]\nscheme = \"dlm\"\n[geometry]\npreset = \"ellipse_codim1\"\n").unwrap();
        let c = p.config;
        assert_eq!(c.rho_f, 1.0);
        assert_eq!(c.nu, 1.0);
        assert_eq!(c.kappa, 5.0);
        assert_eq!(c.dt, 0.1);
        assert_eq!(c.t_final, 2.0);
        assert_eq!(c.h_x, 1.0 / 32.0);
        assert_eq!(c.h_s, 1.0 / 16.0);
        assert_eq!(c.delta_rho, 0.0);
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn negative_kappa_names_the_key() {
        let err = parse_config_str("[physics]\nkappa = -1.0\n").unwrap_err();
        assert!(err.to_string().contains("kappa"), "{err}");
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = parse_config_str("[physics]\nkapa = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("physics.kapa"), "{err}");
        let err = parse_config_str("[plotting]\ncolor = 1\n").unwrap_err();
        assert!(err.to_string().contains("plotting"), "{err}");
    }

    #[test]
    fn feibm_with_coupling_form_warns() {
        let p = parse_config_str("[numerics]\nscheme = \"feibm\"\ncoupling_form = \"h1_product\"\n").unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert!(p.warnings[0].contains("coupling_form"));
    }

    #[test]
    fn fractions_and_echo_round_trip() {
        let p = parse_config_str("[numerics]\nh_x = \"1/8\"\nh_s = 0.1\ndt = 0.05\nt_final = 1.0\n").unwrap();
        assert_eq!(p.config.h_x, 0.125);
        assert_eq!(p.config.fluid_cells(), 8);
        let echo = config_to_toml(&p.config);
        let again = parse_config_str(&echo).unwrap();
        assert_eq!(again.config, p.config);
    }

    #[test]
    fn h_x_must_divide_domain() {
        let err = parse_config_str("[numerics]\nh_x = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("h_x"));
    }
}
