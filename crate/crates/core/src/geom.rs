//! Convex cells on one- and two-dimensional leaves.
//!
//! Cells at a given tiling level are stored in that level's picture
//! coordinates (relative to a window origin), so all geometry here runs at
//! O(delta) magnitudes regardless of how deep the level is.

use crate::error::Error;
use crate::Result;

/// A convex cell: an interval for one-dimensional leaves, a convex polygon
/// (counter-clockwise vertex list) for two-dimensional ones.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Interval { lo: f64, hi: f64 },
    Polygon(Polygon),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    /// CCW vertices; implicitly closed.
    pub verts: Vec<[f64; 2]>,
}

impl Cell {
    pub fn dim(&self) -> usize {
        match self {
            Cell::Interval { .. } => 1,
            Cell::Polygon(_) => 2,
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        Cell::Interval { lo, hi }
    }

    /// Axis-aligned box (used for windows and clip domains).
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        match lo.len() {
            1 => Cell::interval(lo[0], hi[0]),
            2 => Cell::Polygon(Polygon {
                verts: vec![
                    [lo[0], lo[1]],
                    [hi[0], lo[1]],
                    [hi[0], hi[1]],
                    [lo[0], hi[1]],
                ],
            }),
            d => panic!("unsupported leaf dimension {d}"),
        }
    }

    /// Regular polygon approximation of a ball, CCW. Used for disk-like
    /// level-zero domains on two-dimensional leaves.
    pub fn regular_polygon(center: [f64; 2], circumradius: f64, sides: usize) -> Self {
        let verts = (0..sides)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / sides as f64;
                [center[0] + circumradius * th.cos(), center[1] + circumradius * th.sin()]
            })
            .collect();
        Cell::Polygon(Polygon { verts })
    }

    pub fn volume(&self) -> f64 {
        match self {
            Cell::Interval { lo, hi } => (hi - lo).max(0.0),
            Cell::Polygon(p) => p.area(),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Cell::Interval { lo, hi } => (hi - lo).max(0.0),
            Cell::Polygon(p) => p.diameter(),
        }
    }

    pub fn centroid(&self) -> Vec<f64> {
        match self {
            Cell::Interval { lo, hi } => vec![0.5 * (lo + hi)],
            Cell::Polygon(p) => p.centroid().to_vec(),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Cell::Interval { lo, hi } => hi <= lo,
            Cell::Polygon(p) => p.verts.len() < 3 || p.area() <= 0.0,
        }
    }

    pub fn contains(&self, pt: &[f64], tol: f64) -> bool {
        match self {
            Cell::Interval { lo, hi } => pt[0] >= lo - tol && pt[0] <= hi + tol,
            Cell::Polygon(p) => p.signed_inner_distance([pt[0], pt[1]]) >= -tol,
        }
    }

    /// Signed distance from `pt` to the boundary, positive inside.
    pub fn boundary_distance(&self, pt: &[f64]) -> f64 {
        match self {
            Cell::Interval { lo, hi } => (pt[0] - lo).min(hi - pt[0]),
            Cell::Polygon(p) => p.signed_inner_distance([pt[0], pt[1]]),
        }
    }

    /// `self` contained in `other`, with slack `tol` on other's boundary.
    pub fn contained_in(&self, other: &Cell, tol: f64) -> bool {
        match (self, other) {
            (Cell::Interval { lo, hi }, Cell::Interval { lo: l2, hi: h2 }) => {
                *lo >= l2 - tol && *hi <= h2 + tol
            }
            (Cell::Polygon(a), Cell::Polygon(b)) => a
                .verts
                .iter()
                .all(|v| b.signed_inner_distance(*v) >= -tol),
            _ => panic!("dimension mismatch"),
        }
    }

    pub fn intersects(&self, other: &Cell, tol: f64) -> bool {
        match (self, other) {
            (Cell::Interval { lo, hi }, Cell::Interval { lo: l2, hi: h2 }) => {
                hi.min(*h2) - lo.max(*l2) > tol
            }
            (Cell::Polygon(a), Cell::Polygon(b)) => {
                let mut c = a.clone();
                for i in 0..b.verts.len() {
                    let p = b.verts[i];
                    let q = b.verts[(i + 1) % b.verts.len()];
                    c = c.clip_halfplane(p, q);
                    if c.verts.len() < 3 {
                        return false;
                    }
                }
                c.area() > tol * tol
            }
            _ => panic!("dimension mismatch"),
        }
    }

    /// Image under a diagonal/block linear map given per-axis factors
    /// plus an optional rotation angle applied blockwise. For the models in
    /// this crate the unstable action is diagonal in the chart frame, so
    /// per-axis scaling is all that is needed.
    pub fn scale_axes(&self, factors: &[f64]) -> Cell {
        match self {
            Cell::Interval { lo, hi } => {
                let (a, b) = (lo * factors[0], hi * factors[0]);
                Cell::interval(a.min(b), a.max(b))
            }
            Cell::Polygon(p) => {
                let verts: Vec<[f64; 2]> = p
                    .verts
                    .iter()
                    .map(|v| [v[0] * factors[0], v[1] * factors[1]])
                    .collect();
                Cell::Polygon(Polygon { verts }.ensure_ccw())
            }
        }
    }

    pub fn translate(&self, shift: &[f64]) -> Cell {
        match self {
            Cell::Interval { lo, hi } => Cell::interval(lo + shift[0], hi + shift[0]),
            Cell::Polygon(p) => Cell::Polygon(Polygon {
                verts: p.verts.iter().map(|v| [v[0] + shift[0], v[1] + shift[1]]).collect(),
            }),
        }
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Cell::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            Cell::Polygon(p) => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in &p.verts {
                    for k in 0..2 {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo.to_vec(), hi.to_vec())
            }
        }
    }

    pub fn intersect(&self, other: &Cell) -> Cell {
        match (self, other) {
            (Cell::Interval { lo, hi }, Cell::Interval { lo: l2, hi: h2 }) => {
                let l = lo.max(*l2);
                let h = hi.min(*h2);
                Cell::interval(l, h.max(l))
            }
            (Cell::Polygon(a), Cell::Polygon(b)) => {
                let mut c = a.clone();
                for i in 0..b.verts.len() {
                    let p = b.verts[i];
                    let q = b.verts[(i + 1) % b.verts.len()];
                    c = c.clip_halfplane(p, q);
                }
                Cell::Polygon(c)
            }
            _ => panic!("dimension mismatch"),
        }
    }
}

impl Polygon {
    pub fn area(&self) -> f64 {
        let n = self.verts.len();
        if n < 3 {
            return 0.0;
        }
        let mut s = 0.0;
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            s += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * s
    }

    fn ensure_ccw(mut self) -> Self {
        if self.area() < 0.0 {
            self.verts.reverse();
        }
        self
    }

    pub fn centroid(&self) -> [f64; 2] {
        let n = self.verts.len();
        let a = self.area();
        if a.abs() < 1e-300 {
            // degenerate: fall back to vertex mean
            let mut c = [0.0, 0.0];
            for v in &self.verts {
                c[0] += v[0];
                c[1] += v[1];
            }
            return [c[0] / n as f64, c[1] / n as f64];
        }
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let p = self.verts[i];
            let q = self.verts[(i + 1) % n];
            let w = p[0] * q[1] - q[0] * p[1];
            cx += (p[0] + q[0]) * w;
            cy += (p[1] + q[1]) * w;
        }
        [cx / (6.0 * a), cy / (6.0 * a)]
    }

    pub fn diameter(&self) -> f64 {
        let mut d2: f64 = 0.0;
        for i in 0..self.verts.len() {
            for j in i + 1..self.verts.len() {
                let dx = self.verts[i][0] - self.verts[j][0];
                let dy = self.verts[i][1] - self.verts[j][1];
                d2 = d2.max(dx * dx + dy * dy);
            }
        }
        d2.sqrt()
    }

    /// Distance to the boundary, positive inside, negative outside
    /// (outside value is -distance to nearest edge segment).
    pub fn signed_inner_distance(&self, pt: [f64; 2]) -> f64 {
        let n = self.verts.len();
        let mut inside = true;
        let mut min_edge = f64::INFINITY;
        for i in 0..n {
            let a = self.verts[i];
            let b = self.verts[(i + 1) % n];
            let ex = b[0] - a[0];
            let ey = b[1] - a[1];
            let cross = ex * (pt[1] - a[1]) - ey * (pt[0] - a[0]);
            if cross < 0.0 {
                inside = false;
            }
            // distance to segment
            let len2 = ex * ex + ey * ey;
            let t = if len2 > 0.0 {
                (((pt[0] - a[0]) * ex + (pt[1] - a[1]) * ey) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let dx = pt[0] - (a[0] + t * ex);
            let dy = pt[1] - (a[1] + t * ey);
            min_edge = min_edge.min((dx * dx + dy * dy).sqrt());
        }
        if inside {
            min_edge
        } else {
            -min_edge
        }
    }

    /// Keep the side to the left of the directed line `a -> b`.
    pub fn clip_halfplane(&self, a: [f64; 2], b: [f64; 2]) -> Polygon {
        let side = |p: [f64; 2]| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        let n = self.verts.len();
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..n {
            let cur = self.verts[i];
            let nxt = self.verts[(i + 1) % n];
            let sc = side(cur);
            let sn = side(nxt);
            if sc >= 0.0 {
                out.push(cur);
            }
            if (sc > 0.0 && sn < 0.0) || (sc < 0.0 && sn > 0.0) {
                let t = sc / (sc - sn);
                out.push([cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1])]);
            }
        }
        Polygon { verts: out }
    }

    /// Clip by the perpendicular bisector, keeping the side of `site`.
    pub fn clip_bisector(&self, site: [f64; 2], other: [f64; 2]) -> Polygon {
        let mx = 0.5 * (site[0] + other[0]);
        let my = 0.5 * (site[1] + other[1]);
        // direction along the bisector chosen so that `site` lies on the
        // left of the directed line (left normal = site - other)
        let dx = site[1] - other[1];
        let dy = other[0] - site[0];
        self.clip_halfplane([mx, my], [mx + dx, my + dy])
    }
}

/// Least-squares slope of y against x with residual, used by the
/// dimension estimators.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::DegenerateFit(format!(
            "need at least two points, got {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx < 1e-300 {
        return Err(Error::DegenerateFit("zero variance in abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut resid = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let e = y - (slope * x + intercept);
        resid += e * e;
    }
    Ok((slope, intercept, (resid / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_basics() {
        let c = Cell::interval(-0.5, 1.5);
        assert_eq!(c.volume(), 2.0);
        assert_eq!(c.diameter(), 2.0);
        assert_eq!(c.centroid(), vec![0.5]);
        assert!(c.contains(&[0.0], 0.0));
        assert!(!c.contains(&[2.0], 0.0));
        assert!((c.boundary_distance(&[1.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn polygon_area_and_clip() {
        let sq = Cell::boxed(&[0.0, 0.0], &[2.0, 2.0]);
        assert!((sq.volume() - 4.0).abs() < 1e-12);
        if let Cell::Polygon(p) = &sq {
            // clip to x <= 1 (left of upward line at x=1)
            let clipped = p.clip_halfplane([1.0, 0.0], [1.0, 1.0]);
            assert!((clipped.area() - 2.0).abs() < 1e-12);
            let c = p.centroid();
            assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
        } else {
            panic!();
        }
    }

    #[test]
    fn bisector_clip_makes_voronoi_halves() {
        let sq = match Cell::boxed(&[0.0, 0.0], &[1.0, 1.0]) {
            Cell::Polygon(p) => p,
            _ => unreachable!(),
        };
        let cell = sq.clip_bisector([0.25, 0.5], [0.75, 0.5]);
        assert!((cell.area() - 0.5).abs() < 1e-12);
        assert!(cell.signed_inner_distance([0.25, 0.5]) > 0.2);
        assert!(cell.signed_inner_distance([0.75, 0.5]) < 0.0);
    }

    #[test]
    fn fit_recovers_slope() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let (s, b, r) = linear_fit(&xs, &ys).unwrap();
        assert!((s - 2.5).abs() < 1e-12);
        assert!((b + 1.0).abs() < 1e-12);
        assert!(r < 1e-12);
    }
}
