use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    compute_link_inertia, JointSpec, KinematicTemplate, LinkShape, LinkSpec, ModelError,
    RobotModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

impl Interval {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// Uniform draw; a degenerate interval always yields `min` exactly.
    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        self.min + (self.max - self.min) * u
    }

    fn check(&self, name: &str, lower_bound: f64, strict: bool) -> Result<(), ModelError> {
        let err = |reason: String| ModelError::Range {
            name: name.to_string(),
            reason,
        };
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(err("bounds must be finite".into()));
        }
        if self.min > self.max {
            return Err(err(format!("min {} > max {}", self.min, self.max)));
        }
        if (strict && self.min <= lower_bound) || self.min < lower_bound {
            return Err(err(format!("min {} below admissible bound {lower_bound}", self.min)));
        }
        Ok(())
    }
}

/// Ranges for the properties varied across a fleet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationRanges {
    /// Cylinder diameter or box side, meters.
    pub diameter: Interval,
    /// COM displacement as a fraction of link length.
    pub com_fraction: Interval,
    pub mu_c: Interval,
    pub mu_v: Interval,
    /// Uniform material density, kg/m³; link mass follows from the volume.
    pub density: Interval,
    pub shapes: Vec<LinkShape>,
}

impl Default for VariationRanges {
    fn default() -> Self {
        Self {
            diameter: Interval::new(0.04, 0.12),
            com_fraction: Interval::new(-0.2, 0.2),
            mu_c: Interval::new(0.0, 0.5),
            mu_v: Interval::new(0.0, 0.5),
            density: Interval::new(500.0, 3000.0),
            shapes: vec![LinkShape::Cylinder, LinkShape::Box],
        }
    }
}

impl VariationRanges {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.diameter.check("diameter", 0.0, true)?;
        self.density.check("density", 0.0, true)?;
        self.mu_c.check("mu_c", 0.0, false)?;
        self.mu_v.check("mu_v", 0.0, false)?;
        self.com_fraction.check("com_fraction", -0.5, false)?;
        if self.com_fraction.max > 0.5 {
            return Err(ModelError::Range {
                name: "com_fraction".into(),
                reason: format!("max {} above 0.5", self.com_fraction.max),
            });
        }
        if self.shapes.is_empty() {
            return Err(ModelError::Range {
                name: "shapes".into(),
                reason: "no admissible shape".into(),
            });
        }
        Ok(())
    }
}

/// Draws one robot. The result is a pure function of the arguments.
pub fn generate_robot(
    seed: u64,
    template: &KinematicTemplate,
    ranges: &VariationRanges,
) -> Result<RobotModel, ModelError> {
    template.validate()?;
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut links = Vec::with_capacity(template.dof());
    for &length in &template.link_lengths {
        let shape = ranges.shapes[rng.random_range(0..ranges.shapes.len())];
        let diameter = ranges.diameter.draw(&mut rng);
        let density = ranges.density.draw(&mut rng);
        let fraction = ranges.com_fraction.draw(&mut rng);
        let mass = density * shape.area(diameter) * length;
        // Offset taken from the absolute COM position, so `0.5 * length +
        // com_offset` reproduces that position bit for bit.
        let com_z = (0.5 + fraction) * length;
        let com_offset = com_z - 0.5 * length;
        let inertia = compute_link_inertia(shape, diameter, length, mass, com_offset)?;
        links.push(LinkSpec {
            shape,
            diameter,
            length,
            mass,
            com_offset,
            inertia,
        });
    }
    let joints = (0..template.dof())
        .map(|_| {
            let mu_c = ranges.mu_c.draw(&mut rng);
            let mu_v = ranges.mu_v.draw(&mut rng);
            JointSpec { mu_c, mu_v }
        })
        .collect();

    let model = RobotModel {
        id: 0,
        template: template.clone(),
        links,
        joints,
        generation_seed: seed,
    };
    model.validate()?;
    Ok(model)
}

/// Per-robot seed derived from a run seed (splitmix64 finalizer).
pub fn robot_seed(base_seed: u64, index: u64) -> u64 {
    let mut z = base_seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates `count` robots with ids `0..count`.
pub fn generate_fleet(
    count: usize,
    base_seed: u64,
    template: &KinematicTemplate,
    ranges: &VariationRanges,
) -> Result<Vec<RobotModel>, ModelError> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_robot(robot_seed(base_seed, i), template, ranges).map(|m| m.with_id(i)))
        .collect()
}
