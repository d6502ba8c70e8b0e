//! Ground profiles: height as a piecewise function of world x, plus the
//! surface material under any point.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::{MaterialTable, SurfaceKind, SurfaceMaterial};
use crate::{Error, Result};

/// How knot heights are interpolated between knot abscissae.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interp {
    /// Piecewise-linear (undulating ground).
    Linear,
    /// Piecewise-constant, each knot holding until the next (steps, stairs).
    Hold,
}

/// Terrain family, used for curriculum bookkeeping and logging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Flat,
    Rough,
    Discretized,
    Stairs,
    Route,
}

/// A 1-D ground profile with per-interval surface materials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Terrain {
    pub kind: TerrainKind,
    /// Curriculum difficulty this terrain was generated for (0 = flat).
    pub difficulty: u8,
    /// `(x, height)` knots, strictly increasing in x. Height is clamped to
    /// the first/last knot outside their span.
    knots: Vec<(f64, f64)>,
    interp: Interp,
    /// `(start_x, material)`; entry `i` covers `[start_x_i, start_x_{i+1})`.
    /// The first entry also covers everything to its left.
    materials: Vec<(f64, SurfaceMaterial)>,
}

impl Terrain {
    fn validated(self) -> Result<Self> {
        if self.knots.is_empty() {
            return Err(Error::invalid("terrain needs at least one knot"));
        }
        for w in self.knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("terrain knots must strictly increase in x"));
            }
        }
        if self.knots.iter().any(|&(x, h)| !x.is_finite() || !h.is_finite()) {
            return Err(Error::invalid("terrain knots must be finite"));
        }
        if self.materials.is_empty() {
            return Err(Error::invalid("terrain needs at least one material span"));
        }
        for w in self.materials.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("material spans must strictly increase in x"));
            }
        }
        if self.materials.iter().any(|(_, m)| !(m.gain > 0.0)) {
            return Err(Error::invalid("material gains must be positive"));
        }
        Ok(self)
    }

    /// Uniform flat ground at height 0 of a single material.
    pub fn flat(material: SurfaceMaterial) -> Terrain {
        Terrain {
            kind: TerrainKind::Flat,
            difficulty: 0,
            knots: vec![(0.0, 0.0)],
            interp: Interp::Hold,
            materials: vec![(0.0, material)],
        }
        .validated()
        .expect("flat terrain is always valid")
    }

    /// Undulating ground: linear knots every ~0.3 m with heights uniform in
    /// `±amplitude`, flat in a lead-in region around the start pose.
    pub fn rough(
        amplitude: f64,
        difficulty: u8,
        extent: f64,
        material: SurfaceMaterial,
        rng: &mut ChaCha8Rng,
    ) -> Result<Terrain> {
        if !(amplitude >= 0.0 && extent > 2.0) {
            return Err(Error::invalid("rough terrain needs amplitude ≥ 0 and extent > 2"));
        }
        let mut knots = vec![(-extent, 0.0), (1.0, 0.0)];
        let mut x = 1.0;
        while x < extent {
            x += 0.3;
            knots.push((x, rng.random_range(-amplitude..=amplitude)));
        }
        Terrain {
            kind: TerrainKind::Rough,
            difficulty,
            knots,
            interp: Interp::Linear,
            materials: vec![(0.0, material)],
        }
        .validated()
    }

    /// Random height steps (piecewise-constant), flat lead-in included.
    pub fn discretized(
        step_height: f64,
        difficulty: u8,
        extent: f64,
        material: SurfaceMaterial,
        rng: &mut ChaCha8Rng,
    ) -> Result<Terrain> {
        if !(step_height >= 0.0 && extent > 2.0) {
            return Err(Error::invalid("discretized terrain needs height ≥ 0 and extent > 2"));
        }
        let mut knots = vec![(-extent, 0.0)];
        let mut x = 1.0;
        while x < extent {
            knots.push((x, rng.random_range(-step_height..=step_height)));
            x += rng.random_range(0.4..0.8);
        }
        Terrain {
            kind: TerrainKind::Discretized,
            difficulty,
            knots,
            interp: Interp::Hold,
            materials: vec![(0.0, material)],
        }
        .validated()
    }

    /// Stairs: repeated up-plateau-down pyramids with the given rise/run.
    pub fn stairs(
        rise: f64,
        run: f64,
        difficulty: u8,
        extent: f64,
        material: SurfaceMaterial,
    ) -> Result<Terrain> {
        if !(rise >= 0.0 && run > 0.05 && extent > 2.0) {
            return Err(Error::invalid("stairs need rise ≥ 0, run > 0.05, extent > 2"));
        }
        let mut knots = vec![(-extent, 0.0)];
        let mut x = 1.0;
        // 4 up, 2 flat, 4 down, 2 flat; repeat.
        let pattern: [i32; 12] = [1, 1, 1, 1, 0, 0, -1, -1, -1, -1, 0, 0];
        let mut level = 0.0;
        let mut i = 0;
        while x < extent {
            level += pattern[i % pattern.len()] as f64 * rise;
            knots.push((x, level));
            x += run;
            i += 1;
        }
        Terrain {
            kind: TerrainKind::Stairs,
            difficulty,
            knots,
            interp: Interp::Hold,
            materials: vec![(0.0, material)],
        }
        .validated()
    }

    /// Flat walkway whose surface material changes along x.
    ///
    /// `segments` are `(kind, length_m)` laid end to end starting at x = 0;
    /// the first material also covers x < 0.
    pub fn route(segments: &[(SurfaceKind, f64)], table: &MaterialTable) -> Result<Terrain> {
        if segments.is_empty() {
            return Err(Error::invalid("route needs at least one segment"));
        }
        let mut materials = Vec::with_capacity(segments.len());
        let mut x = 0.0;
        for &(kind, len) in segments {
            if !(len.is_finite() && len > 0.0) {
                return Err(Error::invalid(format!("route segment length {len} must be > 0")));
            }
            materials.push((x, table.material(kind)));
            x += len;
        }
        Terrain {
            kind: TerrainKind::Route,
            difficulty: 0,
            knots: vec![(0.0, 0.0)],
            interp: Interp::Hold,
            materials,
        }
        .validated()
    }

    /// Total route length for [`Terrain::route`] terrains (last material
    /// start is the beginning of the final segment, so callers track the
    /// end separately); provided for convenience on any terrain as the
    /// rightmost material boundary.
    pub fn last_material_start(&self) -> f64 {
        self.materials.last().map(|&(x, _)| x).unwrap_or(0.0)
    }

    /// Ground height under world x.
    pub fn height_at(&self, x: f64) -> f64 {
        let k = &self.knots;
        if x <= k[0].0 {
            return k[0].1;
        }
        if x >= k[k.len() - 1].0 {
            return k[k.len() - 1].1;
        }
        // Index of the first knot with abscissa > x; the segment starts
        // at the knot before it.
        let hi = k.partition_point(|&(kx, _)| kx <= x);
        let (x0, h0) = k[hi - 1];
        match self.interp {
            Interp::Hold => h0,
            Interp::Linear => {
                let (x1, h1) = k[hi];
                h0 + (h1 - h0) * (x - x0) / (x1 - x0)
            }
        }
    }

    /// Surface material under world x.
    pub fn material_at(&self, x: f64) -> SurfaceMaterial {
        let m = &self.materials;
        let hi = m.partition_point(|&(mx, _)| mx <= x);
        if hi == 0 {
            m[0].1
        } else {
            m[hi - 1].1
        }
    }
}
