//! Built-in models: planar rocket, planar aerial manipulator, quadrotor.

mod manipulator;
mod quadrotor;
mod rocket;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use manipulator::{Manipulator, ManipulatorSection, MANIPULATOR_CHART};
pub use quadrotor::{attitude, Hemisphere, Quadrotor, SphereSection};
pub use rocket::{Rocket, RocketSection, ROCKET_CHART};

use crate::bundle::{ShapeDomain, ShapePoint, Trivialization};
use crate::error::{Error, Result};
use crate::model::{MechanicalSystem, SystemModel};

/// Default chart-switch hysteresis on the sphere.
pub const HYSTERESIS: f64 = 0.6;

/// Overlapping trivializations covering the shape space.
#[derive(Debug, Clone)]
pub struct Atlas {
    pub trivializations: Vec<Trivialization>,
    pub hysteresis: f64,
}

impl Atlas {
    pub fn single(triv: Trivialization) -> Self {
        Self { trivializations: vec![triv], hysteresis: HYSTERESIS }
    }

    /// One trivialization per built-in section of `sys`.
    pub fn of(sys: &dyn MechanicalSystem) -> Self {
        Self { trivializations: sys.sections().into_iter().map(Trivialization::new).collect(), hysteresis: HYSTERESIS }
    }

    pub fn len(&self) -> usize {
        self.trivializations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trivializations.is_empty()
    }

    /// Chart to start in at `s`: the first whose domain keeps at least the
    /// hysteresis margin, else the one with the largest margin.
    pub fn initial_index(&self, s: &ShapePoint) -> usize {
        let margins: Vec<f64> = self.trivializations.iter().map(|t| t.section.domain().margin(s)).collect();
        if let Some(i) = margins.iter().position(|m| *m > self.switch_margin()) {
            return i;
        }
        argmax(&margins)
    }

    /// Keep `active` until `s` enters its hysteresis zone around the
    /// excluded set, then move to the chart with the largest margin.
    pub fn switch_rule(&self, active: usize, s: &ShapePoint) -> usize {
        let dom = self.trivializations[active].section.domain();
        if dom.margin(s) > self.switch_margin() {
            return active;
        }
        let margins: Vec<f64> = self.trivializations.iter().map(|t| t.section.domain().margin(s)).collect();
        argmax(&margins)
    }

    /// Chordal distance to a pole equivalent to `|s3| > h` leaving the band.
    fn switch_margin(&self) -> f64 {
        // |s + e3|² = 2 (1 + s3); s3 = -h gives the threshold.
        (2.0 * (1.0 - self.hysteresis)).sqrt()
    }

    pub fn covers(&self, s: &ShapePoint) -> bool {
        self.trivializations.iter().any(|t| t.section.domain().contains(s))
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |best, (i, x)| if *x > v[best] { i } else { best })
}

/// Whether any section of the atlas has a restricted domain.
pub fn has_excluded_sets(atlas: &Atlas) -> bool {
    atlas.trivializations.iter().any(|t| t.section.domain() != ShapeDomain::Full)
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter { name: name.into(), value })
    }
}

pub fn make_rocket(m: f64, j: f64, r: f64, g_grav: f64) -> Result<Rocket> {
    Ok(Rocket::new(positive("m", m)?, positive("J", j)?, positive("r", r)?, positive("g_grav", g_grav)?))
}

pub fn make_manipulator(m_g: f64, m_q: f64, l_g: f64, l_q: f64, g_grav: f64) -> Result<Manipulator> {
    Ok(Manipulator::new(
        positive("m_g", m_g)?,
        positive("m_q", m_q)?,
        positive("l_g", l_g)?,
        positive("l_q", l_q)?,
        positive("g_grav", g_grav)?,
    ))
}

pub fn make_quadrotor(m: f64, j_xx: f64, j_zz: f64, g_grav: f64) -> Result<(Quadrotor, Atlas)> {
    let q = Quadrotor::new(positive("m", m)?, positive("J_xx", j_xx)?, positive("J_zz", j_zz)?, positive("g_grav", g_grav)?);
    let atlas = Atlas::of(&q);
    Ok((q, atlas))
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub system: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

struct Params {
    map: BTreeMap<String, f64>,
}

impl Params {
    fn take(&mut self, name: &str, default: f64) -> f64 {
        self.map.remove(name).unwrap_or(default)
    }

    fn finish(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Model(format!("unknown parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Build the model and its atlas.
    pub fn build(&self) -> Result<(SystemModel, Atlas)> {
        let mut p = Params { map: self.params.clone() };
        let sys: SystemModel = match self.system.as_str() {
            "rocket" => {
                let d = Rocket::default();
                let mut r = make_rocket(p.take("m", d.m), p.take("J", d.j), p.take("r", d.r), p.take("g_grav", d.g_grav))?;
                if let Some(c) = p.map.remove("section_offset") {
                    if !c.is_finite() {
                        return Err(Error::InvalidParameter { name: "section_offset".into(), value: c });
                    }
                    r.section_offset = Some(c);
                }
                let cols = p.take("force_columns", 2.0);
                if ![1.0, 2.0, 3.0].contains(&cols) {
                    return Err(Error::InvalidParameter { name: "force_columns".into(), value: cols });
                }
                r.force_columns = cols as usize;
                Arc::new(r)
            }
            "manipulator" => {
                let d = Manipulator::default();
                let mut m = make_manipulator(
                    p.take("m_g", d.m_g),
                    p.take("m_q", d.m_q),
                    p.take("l_g", d.l_g),
                    p.take("l_q", d.l_q),
                    p.take("g_grav", d.g_grav),
                )?;
                m.j_q = positive("J_q", p.take("J_q", d.j_q))?;
                Arc::new(m)
            }
            "quadrotor" => {
                let d = Quadrotor::default();
                let (q, _) = make_quadrotor(p.take("m", d.m), p.take("J_xx", d.j_xx), p.take("J_zz", d.j_zz), p.take("g_grav", d.g_grav))?;
                Arc::new(q)
            }
            other => return Err(Error::Model(format!("unknown system `{other}`"))),
        };
        p.finish()?;
        let atlas = Atlas::of(sys.as_ref());
        Ok((sys, atlas))
    }
}

/// Parse a model description from JSON text.
pub fn load_model_str(text: &str) -> Result<(SystemModel, Atlas)> {
    let mf: ModelFile = serde_json::from_str(text)?;
    mf.build()
}

pub fn load_model(path: &Path) -> Result<(SystemModel, Atlas)> {
    ModelFile::load(path)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn rejects_nonpositive_parameters() {
        assert!(matches!(make_rocket(0.0, 0.2, 0.5, 9.81), Err(Error::InvalidParameter { .. })));
        assert!(make_manipulator(1.0, -0.3, 0.2, 0.4, 9.81).is_err());
        assert!(make_quadrotor(1.0, 0.01, 0.02, f64::NAN).is_err());
    }

    #[test]
    fn model_files() {
        let (sys, atlas) = load_model_str(r#"{"system":"rocket","params":{"m":2.0}}"#).unwrap();
        assert_eq!(sys.name(), "rocket");
        assert_eq!(atlas.len(), 1);
        assert!(load_model_str(r#"{"system":"rocket","params":{"mass":2.0}}"#).is_err());
        assert!(load_model_str(r#"{"system":"rocket","extra":1}"#).is_err());
        assert!(load_model_str(r#"{"system":"blimp"}"#).is_err());
        let (_, atlas) = load_model_str(r#"{"system":"quadrotor"}"#).unwrap();
        assert_eq!(atlas.len(), 2);
    }

    #[test]
    fn quadrotor_switch_rule_has_hysteresis() {
        let (_, atlas) = make_quadrotor(1.0, 0.01, 0.02, 9.81).unwrap();
        let at = |z: f64| ShapePoint::sphere(Vector3::new((1.0 - z * z).sqrt(), 0.0, z));
        assert_eq!(atlas.initial_index(&at(0.9)), 0);
        assert_eq!(atlas.initial_index(&at(-0.9)), 1);
        assert_eq!(atlas.switch_rule(0, &at(-0.5)), 0);
        assert_eq!(atlas.switch_rule(0, &at(-0.61)), 1);
        assert_eq!(atlas.switch_rule(1, &at(0.5)), 1);
        assert_eq!(atlas.switch_rule(1, &at(0.61)), 0);
        assert!(atlas.covers(&at(-1.0)) && atlas.covers(&at(1.0)));
    }
}
