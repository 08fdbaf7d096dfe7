use crate::error::Result;
use crate::routing::{Instance, Point};

/// Uniform min-max map into the unit square. Both axes share the larger
/// range, so tour-length ratios are preserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitScaling {
    pub origin: Point,
    pub scale: f64,
}

impl UnitScaling {
    pub fn fit(coords: &[Point]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in coords {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let range = (hi[0] - lo[0]).max(hi[1] - lo[1]);
        UnitScaling {
            origin: lo,
            scale: if range > 0.0 { range } else { 1.0 },
        }
    }

    pub fn forward(&self, p: Point) -> Point {
        [(p[0] - self.origin[0]) / self.scale, (p[1] - self.origin[1]) / self.scale]
    }

    pub fn inverse(&self, p: Point) -> Point {
        [p[0] * self.scale + self.origin[0], p[1] * self.scale + self.origin[1]]
    }

    pub fn forward_all(&self, coords: &[Point]) -> Vec<Point> {
        coords.iter().map(|&p| self.forward(p)).collect()
    }
}

/// Copy of `inst` with coordinates scaled into `[0, 1]^2`, plus the map
/// back to original units. The metric is kept.
pub fn scale_to_unit(inst: &Instance) -> Result<(Instance, UnitScaling)> {
    let s = UnitScaling::fit(inst.coords());
    Ok((inst.with_coords(s.forward_all(inst.coords()))?, s))
}
