//! Level-indexed local tilings of unstable leaves.
//!
//! A level-n tiling is built from a maximal delta-separated site set in the
//! n-th forward image of the level-zero domain, with cells given by Voronoi
//! regions intersected with a ball around their site. The ball intersection
//! bounds boundary cells, so the ball sandwich holds for every atom rather
//! than only interior ones; interior cells are untouched by it.
//!
//! Shallow levels are built globally. Deeper levels are built on demand as
//! windows around a requested atom: the window origin is the atom's site,
//! carried as an exact field coordinate, and the candidate grid and its
//! hashed insertion order are anchored at that origin. A window is a
//! faithful tiling of its own patch, and every property the engine asserts
//! is local to a window, so games and trees can descend to levels far
//! beyond anything a global enumeration could reach.

pub mod verify;

use std::sync::Arc;

use num_rational::BigRational;

use crate::dynamics::LeafModel;
use crate::error::Error;
use crate::exact::{ExactTorusPoint, FieldElt};
use crate::geom::Cell;
use crate::Result;

pub use verify::{PropertyCheck, PropertyReport, VerifyOptions};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct TilingParams {
    /// Mesh of the separated site sets.
    pub delta: f64,
    /// Sandwich slack in (0,1).
    pub tau: f64,
    /// Seed for the hashed candidate insertion order.
    pub seed: u64,
    /// Candidate grid points per delta along each axis.
    pub grid_refine: u32,
}

impl Default for TilingParams {
    fn default() -> Self {
        TilingParams { delta: 0.05, tau: 0.01, seed: 1, grid_refine: 20 }
    }
}

/// Distortion data for the Jacobian-ratio bound along nearby orbit
/// segments. Linear models have Holder constant zero, hence ratio one.
#[derive(Clone, Debug)]
pub struct DistortionParams {
    pub holder_const: f64,
    pub holder_exp: f64,
    pub scale: f64,
}

/// K = exp(l * c^theta / (sigma1^theta - 1)); exactly 1 when l = 0.
pub fn distortion_bound(p: &DistortionParams, sigma1: f64) -> f64 {
    assert!(p.holder_const >= 0.0 && p.holder_exp > 0.0 && p.holder_exp <= 1.0);
    assert!(sigma1 > 1.0);
    (p.holder_const * p.scale.powf(p.holder_exp) / (sigma1.powf(p.holder_exp) - 1.0)).exp()
}

/// Smallest integer a with (1+tau)/sigma1^a < (1-tau)/4.
pub fn compute_a_star(sigma1: f64, tau: f64) -> u32 {
    let target = 4.0 * (1.0 + tau) / (1.0 - tau);
    let mut a = 1u32;
    let mut pw = sigma1;
    while pw <= target {
        a += 1;
        pw *= sigma1;
        assert!(a < 10_000, "expansion rate too close to one");
    }
    a
}

/// Density floor c(a): the guaranteed volume fraction of a parent atom
/// that survives a descent by b levels followed by a more, minimized over
/// admissible choices. Cvol = 1 on flat leaves.
pub fn density_constant(
    u: usize,
    sigma1: f64,
    sigma2: f64,
    tau: f64,
    a_star: u32,
    a: u32,
    distortion: f64,
) -> Result<f64> {
    if a <= a_star {
        return Err(Error::InvalidParams(format!("a={a} must exceed a_star={a_star}")));
    }
    let second = (1.0 - tau) / (2.0 * (1.0 + tau)) - 2.0 / sigma1.powi(a_star as i32);
    if second <= 0.0 {
        return Err(Error::InvalidParams(
            "separation threshold violated: (1-tau)/(2(1+tau)) <= 2/sigma1^a*".into(),
        ));
    }
    let first = (1.0 - tau) / (2.0 * sigma2.powi(a as i32) * (1.0 + tau));
    Ok((1.0 / distortion.powi(2)) * first.powi(u as i32) * second.powi(u as i32))
}

// ---------------------------------------------------------------------------
// Origins, atoms, windows
// ---------------------------------------------------------------------------

/// Anchor of a level picture: a point on the leaf with exact level-zero
/// coordinates. Picture coordinates at level n are `L^n (t - origin)`.
pub struct Origin {
    pub level: u32,
    /// Exact level-zero leaf coordinates, one ring element per coordinate.
    pub leaf: Vec<FieldElt>,
    /// Cached `x^{-level}` in the coordinate ring.
    pub x_neg_level: FieldElt,
    /// Domain bounds in this picture (propagated; +-inf when far away).
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
}

/// One tile: a cell in its level picture together with its site.
#[derive(Clone)]
pub struct Atom {
    pub level: u32,
    pub id: u64,
    /// Cell in the level picture, relative to `origin`.
    pub cell: Cell,
    /// Site in the same picture.
    pub site: Vec<f64>,
    pub origin: Arc<Origin>,
}

impl std::fmt::Debug for Atom {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Atom")
            .field("level", &self.level)
            .field("id", &self.id)
            .field("site", &self.site)
            .field("cell", &self.cell)
            .finish()
    }
}

impl Atom {
    /// Exact level-zero leaf coordinates of the site.
    pub fn site_exact<M: LeafModel>(&self, model: &M) -> Vec<FieldElt> {
        let field = model.field();
        self.site
            .iter()
            .zip(&self.origin.leaf)
            .map(|(&s, o)| {
                let off = field.scale(
                    &self.origin.x_neg_level,
                    &BigRational::from_float(s).expect("finite site"),
                );
                field.add(o, &off)
            })
            .collect()
    }

    /// log of the diameter of the pulled-back atom (level-zero scale).
    pub fn pullback_diam_log<M: LeafModel>(&self, model: &M) -> f64 {
        let moduli = model.coord_log_moduli();
        match &self.cell {
            Cell::Interval { lo, hi } => (hi - lo).ln() - self.level as f64 * moduli[0],
            Cell::Polygon(p) => {
                let n = self.level as f64;
                let mut best = f64::NEG_INFINITY;
                for i in 0..p.verts.len() {
                    for j in i + 1..p.verts.len() {
                        let dx = (p.verts[i][0] - p.verts[j][0]).abs();
                        let dy = (p.verts[i][1] - p.verts[j][1]).abs();
                        let lx = if dx > 0.0 { dx.ln() - n * moduli[0] } else { f64::NEG_INFINITY };
                        let ly = if dy > 0.0 { dy.ln() - n * moduli[1] } else { f64::NEG_INFINITY };
                        let (a, b) = (lx.max(ly), lx.min(ly));
                        let v = if b == f64::NEG_INFINITY {
                            a
                        } else {
                            a + 0.5 * (1.0 + (2.0 * (b - a)).exp()).ln()
                        };
                        best = best.max(v);
                    }
                }
                best
            }
        }
    }

    /// log of the volume of the pulled-back atom (level-zero scale).
    pub fn pullback_volume_log<M: LeafModel>(&self, model: &M) -> f64 {
        self.cell.volume().ln() - self.level as f64 * model.unstable_log_det_abs()
    }
}

/// A locally built piece of one tiling level.
pub struct Window {
    pub level: u32,
    pub origin: Arc<Origin>,
    /// Sites in picture coordinates, sorted (by position for u = 1,
    /// lexicographically by grid index for u = 2).
    pub sites: Vec<Vec<f64>>,
    pub cells: Vec<Cell>,
    pub ids: Vec<u64>,
    /// Region (picture coords) within which cells are authoritative.
    pub trust_lo: Vec<f64>,
    pub trust_hi: Vec<f64>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn atom(&self, idx: usize) -> Atom {
        Atom {
            level: self.level,
            id: self.ids[idx],
            cell: self.cells[idx].clone(),
            site: self.sites[idx].clone(),
            origin: self.origin.clone(),
        }
    }

    /// Index of the cell containing the picture point; errors for points on
    /// a shared cell boundary or outside the trusted/tiled region.
    pub fn locate(&self, pt: &[f64], delta: f64) -> Result<usize> {
        for k in 0..pt.len() {
            if pt[k] < self.trust_lo[k] || pt[k] > self.trust_hi[k] {
                return Err(Error::OutsideDomain { level: self.level });
            }
            if pt[k] < self.origin.domain_lo[k] - delta || pt[k] > self.origin.domain_hi[k] + delta
            {
                return Err(Error::OutsideDomain { level: self.level });
            }
        }
        let eps = 1e-9 * delta;
        let mut best = f64::NEG_INFINITY;
        let mut arg = usize::MAX;
        if pt.len() == 1 {
            // sites sorted by position: only neighbors can contain the point
            let j = self.sites.partition_point(|s| s[0] < pt[0]);
            for i in j.saturating_sub(2)..(j + 2).min(self.len()) {
                let d = self.cells[i].boundary_distance(pt);
                if d > best {
                    best = d;
                    arg = i;
                }
            }
        } else {
            for (i, c) in self.cells.iter().enumerate() {
                let d = c.boundary_distance(pt);
                if d > best {
                    best = d;
                    arg = i;
                }
            }
        }
        if arg == usize::MAX || best < -eps {
            return Err(Error::OutsideDomain { level: self.level });
        }
        if best.abs() <= eps {
            return Err(Error::OnBoundary { level: self.level });
        }
        Ok(arg)
    }
}

/// Children of one atom a fixed number of levels deeper.
pub struct ChildSet {
    pub window: Window,
    /// Indices of cells fully contained in the parent's image.
    pub contained: Vec<usize>,
}

impl ChildSet {
    pub fn contained_atoms(&self) -> Vec<Atom> {
        self.contained.iter().map(|&i| self.window.atom(i)).collect()
    }
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn zigzag(i: i64) -> u64 {
    ((i << 1) ^ (i >> 63)) as u64
}

fn candidate_hash(seed: u64, level: u32, id: u64) -> u64 {
    splitmix64(seed ^ splitmix64(level as u64 ^ 0xa076_1d64_78bd_642f) ^ splitmix64(id))
}

// ---------------------------------------------------------------------------
// Tiling
// ---------------------------------------------------------------------------

pub struct Tiling<M: LeafModel> {
    pub model: Arc<M>,
    pub base: ExactTorusPoint,
    pub params: TilingParams,
    a_star: u32,
    d0: Cell,
    global: Vec<Window>,
}

/// Largest candidate count a single window build may request.
const MAX_CANDIDATES: u64 = 60_000_000;

impl<M: LeafModel> Tiling<M> {
    /// Build a tiling with global levels `0..=global_depth`.
    pub fn build(
        model: Arc<M>,
        base: ExactTorusPoint,
        params: TilingParams,
        global_depth: u32,
    ) -> Result<Self> {
        let u = model.unstable_dim();
        if !(params.delta > 0.0 && params.delta < 0.5) {
            return Err(Error::InvalidParams(format!("delta {} out of range", params.delta)));
        }
        if !(params.tau > 0.0 && params.tau < 1.0) {
            return Err(Error::InvalidParams(format!("tau {} out of range", params.tau)));
        }
        if params.grid_refine < 8 {
            return Err(Error::InvalidParams("grid_refine below 8".into()));
        }
        if u == 2 {
            // the clip polygon's apothem must dominate the grid covering
            // radius: (1+tau) cos(pi/24) >= 1 + sqrt(2)/(2 refine)
            let need = (1.0 + (2f64).sqrt() / (2.0 * params.grid_refine as f64))
                / (std::f64::consts::PI / 24.0).cos()
                - 1.0;
            if params.tau < need {
                return Err(Error::InvalidParams(format!(
                    "tau {} too small for a {}-refined grid on a 2d leaf (need >= {:.4})",
                    params.tau, params.grid_refine, need
                )));
            }
        }
        if model.exact_frame().is_none() {
            return Err(Error::ExactUnsupported(
                "model has no exact frame (complex expanding spectrum)".into(),
            ));
        }
        let delta = params.delta;
        let d0 = if u == 1 {
            Cell::interval(-delta / 2.0, delta / 2.0)
        } else {
            Cell::regular_polygon([0.0, 0.0], delta / 2.0, 24)
        };
        let a_star = compute_a_star(model.expansion_min(), params.tau);
        let mut t = Tiling { model, base, params, a_star, d0, global: Vec::new() };
        for n in 0..=global_depth {
            let w = t.build_global_level(n)?;
            t.global.push(w);
        }
        Ok(t)
    }

    pub fn a_star(&self) -> u32 {
        self.a_star
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    pub fn tau(&self) -> f64 {
        self.params.tau
    }

    pub fn d0(&self) -> &Cell {
        &self.d0
    }

    pub fn global_depth(&self) -> u32 {
        self.global.len() as u32 - 1
    }

    pub fn global_window(&self, n: u32) -> Result<&Window> {
        self.global.get(n as usize).ok_or(Error::TilingDepthExceeded {
            needed: n,
            available: self.global.len() as u32 - 1,
        })
    }

    pub fn atoms_at_level(&self, n: u32) -> Result<Vec<Atom>> {
        let w = self.global_window(n)?;
        Ok((0..w.len()).map(|i| w.atom(i)).collect())
    }

    /// Atom of a globally built level containing the leaf point with the
    /// given level-zero coordinates.
    pub fn atom_containing(&self, leaf_coord: &[f64], n: u32) -> Result<Atom> {
        let w = self.global_window(n)?;
        let pic: Vec<f64> = self.model.picture_forward(leaf_coord, n as i32);
        let idx = w.locate(&pic, self.params.delta)?;
        Ok(w.atom(idx))
    }

    /// Density floor for this tiling's parameters (flat leaf, unit
    /// distortion for linear models).
    pub fn density_floor(&self, a: u32) -> Result<f64> {
        density_constant(
            self.model.unstable_dim(),
            self.model.expansion_min(),
            self.model.expansion_max(),
            self.params.tau,
            self.a_star,
            a,
            1.0,
        )
    }

    fn base_origin(&self) -> Arc<Origin> {
        let field = self.model.field();
        let u = self.model.unstable_dim();
        let (dlo, dhi) = self.d0.bbox();
        Arc::new(Origin {
            level: 0,
            leaf: vec![field.zero(); u],
            x_neg_level: field.from_f64(1.0),
            domain_lo: dlo,
            domain_hi: dhi,
        })
    }

    fn global_origin(&self, n: u32) -> Arc<Origin> {
        let field = self.model.field();
        let u = self.model.unstable_dim();
        let mut x_neg = field.from_f64(1.0);
        for _ in 0..n {
            x_neg = field.mul_x_inv(&x_neg);
        }
        let domain = self.model.scale_cell(&self.d0, n as i32);
        let (dlo, dhi) = domain.bbox();
        Arc::new(Origin {
            level: n,
            leaf: vec![field.zero(); u],
            x_neg_level: x_neg,
            domain_lo: dlo,
            domain_hi: dhi,
        })
    }

    fn build_global_level(&self, n: u32) -> Result<Window> {
        let u = self.model.unstable_dim();
        let delta = self.params.delta;
        if n == 0 {
            return Ok(Window {
                level: 0,
                origin: self.base_origin(),
                sites: vec![vec![0.0; u]],
                cells: vec![self.d0.clone()],
                ids: vec![0],
                trust_lo: vec![f64::NEG_INFINITY; u],
                trust_hi: vec![f64::INFINITY; u],
            });
        }
        let domain = self.model.scale_cell(&self.d0, n as i32);
        if domain.diameter() < delta {
            return Err(Error::DegenerateDomain { level: n, diam: domain.diameter(), delta });
        }
        let (dlo, dhi) = domain.bbox();
        let poly = match &domain {
            Cell::Polygon(_) => Some(&domain),
            _ => None,
        };
        self.build_window(self.global_origin(n), n, &dlo, &dhi, poly)
    }

    /// Children of `parent` exactly `dl` levels deeper, built in a window
    /// re-centered at the parent's site.
    pub fn enumerate_within(&self, parent: &Atom, dl: u32) -> Result<ChildSet> {
        let window = self.child_window(parent, dl)?;
        let image = self.parent_image(parent, dl);
        let tol = 1e-9 * self.params.delta;
        let contained = (0..window.len())
            .filter(|&i| window.cells[i].contained_in(&image, tol))
            .collect();
        Ok(ChildSet { window, contained })
    }

    /// Parent cell mapped into the child picture (re-centered at the
    /// parent's site).
    pub fn parent_image(&self, parent: &Atom, dl: u32) -> Cell {
        let rel: Vec<f64> = parent.site.iter().map(|s| -s).collect();
        self.model.scale_cell(&parent.cell.translate(&rel), dl as i32)
    }

    fn child_window(&self, parent: &Atom, dl: u32) -> Result<Window> {
        let field = self.model.field();
        let u = self.model.unstable_dim();
        let delta = self.params.delta;
        let level = parent.level + dl;

        let leaf = parent.site_exact(self.model.as_ref());
        let mut x_neg = parent.origin.x_neg_level.clone();
        for _ in 0..dl {
            x_neg = field.mul_x_inv(&x_neg);
        }
        // domain bounds propagate: shift by the site, scale per axis
        let ones = vec![1.0; u];
        let factors = self.model.picture_forward(&ones, dl as i32);
        let mut domain_lo = vec![f64::NEG_INFINITY; u];
        let mut domain_hi = vec![f64::INFINITY; u];
        for k in 0..u {
            let a = shift_scale(parent.origin.domain_lo[k], parent.site[k], factors[k]);
            let b = shift_scale(parent.origin.domain_hi[k], parent.site[k], factors[k]);
            domain_lo[k] = a.min(b);
            domain_hi[k] = a.max(b);
        }
        let origin = Arc::new(Origin { level, leaf, x_neg_level: x_neg, domain_lo, domain_hi });

        let image = self.parent_image(parent, dl);
        let (mut lo, mut hi) = image.bbox();
        for k in 0..u {
            lo[k] -= 1e-9 * delta;
            hi[k] += 1e-9 * delta;
        }
        self.build_window(origin, level, &lo, &hi, None)
    }

    /// Descend: a child atom `m` levels below, fully inside `parent`,
    /// chosen as the site farthest from the parent image's boundary
    /// (lowest id on ties).
    pub fn descend(&self, parent: &Atom, m: u32) -> Result<Atom> {
        let cs = self.enumerate_within(parent, m)?;
        let image = self.parent_image(parent, m);
        match deepest_inside(&cs, &image) {
            Some(i) => Ok(cs.window.atom(i)),
            None => Err(Error::NoChild { level: parent.level, m }),
        }
    }

    /// Build a window of the given level around a prescribed leaf point
    /// (level-zero dyadic coordinates). Returns the window and the index
    /// of the cell containing the point.
    pub fn window_at_coord(&self, leaf_coord: &[f64], level: u32) -> Result<(Window, usize)> {
        let field = self.model.field();
        let u = self.model.unstable_dim();
        let delta = self.params.delta;
        let leaf: Vec<FieldElt> = leaf_coord.iter().map(|&c| field.from_f64(c)).collect();
        let mut x_neg = field.from_f64(1.0);
        for _ in 0..level {
            x_neg = field.mul_x_inv(&x_neg);
        }
        // exact domain bounds in this picture (only near edges are finite
        // in f64; far ends saturate)
        let mut domain_lo = vec![f64::NEG_INFINITY; u];
        let mut domain_hi = vec![f64::INFINITY; u];
        let (dlo, dhi) = self.d0.bbox();
        for k in 0..u {
            let lo_e = field.sub(&field.from_f64(dlo[k]), &leaf[k]);
            let hi_e = field.sub(&field.from_f64(dhi[k]), &leaf[k]);
            let a = self
                .model
                .eval_coord_hp(&self.model.field().mul_x_pow(&lo_e, level as i64), k)
                .to_f64();
            let b = self
                .model
                .eval_coord_hp(&self.model.field().mul_x_pow(&hi_e, level as i64), k)
                .to_f64();
            domain_lo[k] = a.min(b);
            domain_hi[k] = a.max(b);
        }
        let origin = Arc::new(Origin { level, leaf, x_neg_level: x_neg, domain_lo, domain_hi });
        let lo = vec![-2.0 * delta; u];
        let hi = vec![2.0 * delta; u];
        let w = self.build_window(origin, level, &lo, &hi, None)?;
        let idx = w.locate(&vec![0.0; u], delta)?;
        Ok((w, idx))
    }

    // -- the window builder -------------------------------------------------

    fn build_window(
        &self,
        origin: Arc<Origin>,
        level: u32,
        lo: &[f64],
        hi: &[f64],
        domain_poly: Option<&Cell>,
    ) -> Result<Window> {
        let u = self.model.unstable_dim();
        let delta = self.params.delta;
        let h = delta / self.params.grid_refine as f64;
        let margin = 3.0 * delta;

        let mut ilo = vec![0i64; u];
        let mut ihi = vec![0i64; u];
        let mut count: u64 = 1;
        for k in 0..u {
            let a = (lo[k] - margin).max(origin.domain_lo[k]);
            let b = (hi[k] + margin).min(origin.domain_hi[k]);
            if b < a {
                return Ok(Window {
                    level,
                    origin,
                    sites: Vec::new(),
                    cells: Vec::new(),
                    ids: Vec::new(),
                    trust_lo: lo.to_vec(),
                    trust_hi: hi.to_vec(),
                });
            }
            ilo[k] = (a / h).ceil() as i64;
            ihi[k] = (b / h).floor() as i64;
            count = count.saturating_mul((ihi[k] - ilo[k] + 1).max(0) as u64);
        }
        if count > MAX_CANDIDATES {
            return Err(Error::InvalidParams(format!(
                "window at level {level} needs {count} grid candidates (limit {MAX_CANDIDATES})"
            )));
        }

        match u {
            1 => Ok(self.build_window_1d(origin, level, h, ilo[0], ihi[0], lo, hi)),
            2 => Ok(self.build_window_2d(origin, level, h, &ilo, &ihi, lo, hi, domain_poly)),
            d => Err(Error::InvalidParams(format!("unsupported leaf dimension {d}"))),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_window_1d(
        &self,
        origin: Arc<Origin>,
        level: u32,
        h: f64,
        ilo: i64,
        ihi: i64,
        lo: &[f64],
        hi: &[f64],
    ) -> Window {
        let delta = self.params.delta;
        let seed = self.params.seed;
        let n_cand = (ihi - ilo + 1).max(0) as usize;
        let mut order: Vec<(u64, i64)> = Vec::with_capacity(n_cand);
        for i in ilo..=ihi {
            order.push((candidate_hash(seed, level, zigzag(i)), i));
        }
        order.sort_unstable();
        let block = (self.params.grid_refine as i64) - 1;
        let mut blocked = vec![false; n_cand];
        let mut accepted: Vec<i64> = Vec::new();
        for &(_, i) in &order {
            let idx = (i - ilo) as usize;
            if blocked[idx] {
                continue;
            }
            accepted.push(i);
            let from = (i - block).max(ilo);
            let to = (i + block).min(ihi);
            for j in from..=to {
                blocked[(j - ilo) as usize] = true;
            }
        }
        accepted.sort_unstable();
        let sites_pos: Vec<f64> = accepted.iter().map(|&i| i as f64 * h).collect();
        let keep_lo = lo[0] - delta - 2.0 * h;
        let keep_hi = hi[0] + delta + 2.0 * h;
        let mut sites = Vec::new();
        let mut cells = Vec::new();
        let mut ids = Vec::new();
        for (j, &x) in sites_pos.iter().enumerate() {
            if x < keep_lo || x > keep_hi {
                continue;
            }
            let left = if j > 0 { 0.5 * (sites_pos[j - 1] + x) } else { f64::NEG_INFINITY };
            let right = if j + 1 < sites_pos.len() {
                0.5 * (x + sites_pos[j + 1])
            } else {
                f64::INFINITY
            };
            sites.push(vec![x]);
            cells.push(Cell::interval(left.max(x - delta), right.min(x + delta)));
            ids.push(zigzag(accepted[j]));
        }
        Window {
            level,
            origin,
            sites,
            cells,
            ids,
            trust_lo: vec![lo[0] - delta],
            trust_hi: vec![hi[0] + delta],
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn build_window_2d(
        &self,
        origin: Arc<Origin>,
        level: u32,
        h: f64,
        ilo: &[i64],
        ihi: &[i64],
        lo: &[f64],
        hi: &[f64],
        domain_poly: Option<&Cell>,
    ) -> Window {
        let delta = self.params.delta;
        let seed = self.params.seed;
        let wdt = (ihi[0] - ilo[0] + 1).max(0) as usize;
        let hgt = (ihi[1] - ilo[1] + 1).max(0) as usize;
        let id_of = |ix: i64, iy: i64| -> u64 {
            debug_assert!(ix.unsigned_abs() < (1 << 30) && iy.unsigned_abs() < (1 << 30));
            (zigzag(ix) << 32) | zigzag(iy)
        };
        let mut order: Vec<(u64, i64, i64)> = Vec::new();
        for ix in ilo[0]..=ihi[0] {
            let x = ix as f64 * h;
            for iy in ilo[1]..=ihi[1] {
                let y = iy as f64 * h;
                if let Some(p) = domain_poly {
                    if !p.contains(&[x, y], 0.0) {
                        continue;
                    }
                }
                order.push((candidate_hash(seed, level, id_of(ix, iy)), ix, iy));
            }
        }
        order.sort_unstable();
        let r = self.params.grid_refine as i64;
        let r2 = r * r;
        let mut blocked = vec![false; wdt * hgt];
        let slot = |ix: i64, iy: i64| ((ix - ilo[0]) as usize) * hgt + (iy - ilo[1]) as usize;
        let mut accepted: Vec<(i64, i64)> = Vec::new();
        for &(_, ix, iy) in &order {
            if blocked[slot(ix, iy)] {
                continue;
            }
            accepted.push((ix, iy));
            for dx in -r..=r {
                let jx = ix + dx;
                if jx < ilo[0] || jx > ihi[0] {
                    continue;
                }
                for dy in -r..=r {
                    if dx * dx + dy * dy >= r2 {
                        continue;
                    }
                    let jy = iy + dy;
                    if jy < ilo[1] || jy > ihi[1] {
                        continue;
                    }
                    blocked[slot(jx, jy)] = true;
                }
            }
        }
        accepted.sort_unstable();
        let pos: Vec<[f64; 2]> =
            accepted.iter().map(|&(ix, iy)| [ix as f64 * h, iy as f64 * h]).collect();
        let bucket = 2.0 * delta + 2.0 * h;
        let key = |p: [f64; 2]| -> (i64, i64) {
            ((p[0] / bucket).floor() as i64, (p[1] / bucket).floor() as i64)
        };
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> =
            std::collections::HashMap::new();
        for (i, p) in pos.iter().enumerate() {
            buckets.entry(key(*p)).or_default().push(i);
        }
        // cells start from the clip polygon (24-gon inscribed in the
        // (1+tau)delta ball) and are cut by neighbor bisectors
        let clip_r = (1.0 + self.params.tau) * delta;
        let keep = |p: [f64; 2]| -> bool {
            p[0] >= lo[0] - delta - 2.0 * h
                && p[0] <= hi[0] + delta + 2.0 * h
                && p[1] >= lo[1] - delta - 2.0 * h
                && p[1] <= hi[1] + delta + 2.0 * h
        };
        let mut sites = Vec::new();
        let mut cells = Vec::new();
        let mut ids = Vec::new();
        for (i, p) in pos.iter().enumerate() {
            if !keep(*p) {
                continue;
            }
            let mut cell = match Cell::regular_polygon(*p, clip_r, 24) {
                Cell::Polygon(poly) => poly,
                _ => unreachable!(),
            };
            let (kx, ky) = key(*p);
            for bx in kx - 1..=kx + 1 {
                for by in ky - 1..=ky + 1 {
                    if let Some(list) = buckets.get(&(bx, by)) {
                        for &j in list {
                            if j == i {
                                continue;
                            }
                            let q = pos[j];
                            let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                            if d2 <= (2.0 * clip_r + 2.0 * h).powi(2) {
                                cell = cell.clip_bisector(*p, q);
                            }
                        }
                    }
                }
            }
            sites.push(p.to_vec());
            cells.push(Cell::Polygon(cell));
            ids.push(id_of(accepted[i].0, accepted[i].1));
        }
        Window {
            level,
            origin,
            sites,
            cells,
            ids,
            trust_lo: vec![lo[0] - delta, lo[1] - delta],
            trust_hi: vec![hi[0] + delta, hi[1] + delta],
        }
    }

    /// Structured text dump of the globally built levels.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "tiling model={} delta={:.17e} tau={:.17e} seed={} a_star={}\n",
            self.model.name(),
            self.params.delta,
            self.params.tau,
            self.params.seed,
            self.a_star
        ));
        for w in &self.global {
            for i in 0..w.len() {
                match &w.cells[i] {
                    Cell::Interval { lo, hi } => {
                        out.push_str(&format!(
                            "level={} id={} site={:.17e} lo={:.17e} hi={:.17e}\n",
                            w.level, w.ids[i], w.sites[i][0], lo, hi
                        ));
                    }
                    Cell::Polygon(p) => {
                        let mut half = String::new();
                        for e in 0..p.verts.len() {
                            let a = p.verts[e];
                            let b = p.verts[(e + 1) % p.verts.len()];
                            let nx = a[1] - b[1];
                            let ny = b[0] - a[0];
                            let c = nx * a[0] + ny * a[1];
                            half.push_str(&format!(" {:.10e},{:.10e},{:.10e}", nx, ny, c));
                        }
                        out.push_str(&format!(
                            "level={} id={} site={:.17e},{:.17e} halfspaces{}\n",
                            w.level, w.ids[i], w.sites[i][0], w.sites[i][1], half
                        ));
                    }
                }
            }
        }
        out
    }
}

/// Pick the child whose site lies deepest inside the image cell; ties go
/// to the lowest id.
pub fn deepest_inside(cs: &ChildSet, image: &Cell) -> Option<usize> {
    let mut best: Option<(f64, u64, usize)> = None;
    for &i in &cs.contained {
        let d = image.boundary_distance(&cs.window.sites[i]);
        let id = cs.window.ids[i];
        let better = match &best {
            None => true,
            Some((bd, bid, _)) => d > *bd + 1e-15 || ((d - *bd).abs() <= 1e-15 && id < *bid),
        };
        if better {
            best = Some((d, id, i));
        }
    }
    best.map(|(_, _, i)| i)
}

fn shift_scale(end: f64, site: f64, factor: f64) -> f64 {
    if end.is_finite() {
        (end - site) * factor
    } else if (end > 0.0) == (factor > 0.0) {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Voronoi cells on a line from explicit sites, optionally clipped.
/// Shared by tests as an independently checkable construction.
pub fn line_cells_from_sites(sites: &[f64], clip: Option<(f64, f64)>) -> Vec<Cell> {
    let mut s = sites.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    (0..s.len())
        .map(|j| {
            let left = if j > 0 { 0.5 * (s[j - 1] + s[j]) } else { f64::NEG_INFINITY };
            let right = if j + 1 < s.len() { 0.5 * (s[j] + s[j + 1]) } else { f64::INFINITY };
            let (lo, hi) = match clip {
                Some((a, b)) => (left.max(a), right.min(b)),
                None => (left, right),
            };
            Cell::interval(lo, hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{preset_cat2, preset_cat4_nonconformal};

    fn cat2_tiling(depth: u32) -> Tiling<crate::dynamics::ToralModel> {
        let model = Arc::new(preset_cat2().unwrap());
        Tiling::build(
            model,
            ExactTorusPoint::from_f64s(&[0.0, 0.0]),
            TilingParams::default(),
            depth,
        )
        .unwrap()
    }

    #[test]
    fn toy_line_voronoi_matches_hand_computation() {
        // sites 0.5 and 1.5 on the doubled domain [0,2): cells [0,1) and
        // [1,2); pulled back by 1/2 they are [0,0.5) and [0.5,1)
        let cells = line_cells_from_sites(&[0.5, 1.5], Some((0.0, 2.0)));
        assert_eq!(cells[0], Cell::interval(0.0, 1.0));
        assert_eq!(cells[1], Cell::interval(1.0, 2.0));
        let pulled: Vec<Cell> = cells.iter().map(|c| c.scale_axes(&[0.5])).collect();
        assert_eq!(pulled[0], Cell::interval(0.0, 0.5));
        assert_eq!(pulled[1], Cell::interval(0.5, 1.0));
    }

    #[test]
    fn a_star_for_cat2() {
        // threshold 4(1+tau)/(1-tau) = 4.0808..; lambda^2 = 6.85 exceeds it
        assert_eq!(compute_a_star((3.0 + 5f64.sqrt()) / 2.0, 0.01), 2);
        // doubling map needs three levels: 2^2 = 4 < 4.08 <= 2^3
        assert_eq!(compute_a_star(2.0, 0.01), 3);
    }

    #[test]
    fn level_zero_is_single_atom() {
        let t = cat2_tiling(0);
        let atoms = t.atoms_at_level(0).unwrap();
        assert_eq!(atoms.len(), 1);
        assert_eq!(atoms[0].cell, *t.d0());
    }

    #[test]
    fn ball_sandwich_holds_for_every_cell_at_level_three() {
        let t = cat2_tiling(3);
        let delta = t.delta();
        for atom in t.atoms_at_level(3).unwrap() {
            let (lo, hi) = match atom.cell {
                Cell::Interval { lo, hi } => (lo, hi),
                _ => unreachable!(),
            };
            let z = atom.site[0];
            assert!(z - lo >= delta / 2.0 - 1e-12 && hi - z >= delta / 2.0 - 1e-12);
            assert!(z - lo <= delta + 1e-12 && hi - z <= delta + 1e-12);
        }
    }

    #[test]
    fn cells_disjoint_and_separated() {
        let t = cat2_tiling(4);
        for n in 1..=4 {
            let atoms = t.atoms_at_level(n).unwrap();
            for w in atoms.windows(2) {
                let (_, hi0) = match w[0].cell {
                    Cell::Interval { lo, hi } => (lo, hi),
                    _ => unreachable!(),
                };
                let (lo1, _) = match w[1].cell {
                    Cell::Interval { lo, hi } => (lo, hi),
                    _ => unreachable!(),
                };
                assert!(hi0 <= lo1 + 1e-12);
                assert!(w[1].site[0] - w[0].site[0] >= t.delta() * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn atom_containing_basics() {
        let t = cat2_tiling(3);
        let atoms = t.atoms_at_level(2).unwrap();
        let mid = &atoms[atoms.len() / 2];
        // the site itself locates its own atom
        let lam = t.model.expansion_min();
        let back = mid.site[0] / lam.powi(2);
        let found = t.atom_containing(&[back], 2).unwrap();
        assert_eq!(found.id, mid.id);
        // far outside the domain
        assert!(matches!(
            t.atom_containing(&[10.0], 2),
            Err(Error::OutsideDomain { .. })
        ));
        // a shared boundary point is rejected
        let (_, hi) = match mid.cell {
            Cell::Interval { lo, hi } => (lo, hi),
            _ => unreachable!(),
        };
        assert!(matches!(
            t.atom_containing(&[hi / lam.powi(2)], 2),
            Err(Error::OnBoundary { .. })
        ));
    }

    #[test]
    fn descend_finds_contained_child() {
        let t = cat2_tiling(2);
        let parent = t.atoms_at_level(1).unwrap()[1].clone();
        let m = t.a_star() + 1;
        let child = t.descend(&parent, m).unwrap();
        assert_eq!(child.level, parent.level + m);
        // containment in picture coordinates
        let image = t.parent_image(&parent, m);
        assert!(child.cell.contained_in(&image, 1e-9));
    }

    #[test]
    fn descend_works_from_deep_windows() {
        let t = cat2_tiling(2);
        let mut atom = t.atoms_at_level(2).unwrap()[0].clone();
        // walk down well past the global depth
        for _ in 0..6 {
            atom = t.descend(&atom, 3).unwrap();
        }
        assert_eq!(atom.level, 2 + 18);
        // pullback diameter obeys the contraction bound at exact constants
        let c_log = (2.0 * (1.0 + t.tau()) * t.delta()).ln();
        let bound = c_log - atom.level as f64 * t.model.log_expansion_min();
        assert!(atom.pullback_diam_log(t.model.as_ref()) <= bound + 1e-9);
    }

    #[test]
    fn windows_are_deterministic() {
        let t = cat2_tiling(2);
        let parent = t.atoms_at_level(2).unwrap()[3].clone();
        let a = t.enumerate_within(&parent, 3).unwrap();
        let b = t.enumerate_within(&parent, 3).unwrap();
        assert_eq!(a.window.ids, b.window.ids);
        assert_eq!(a.window.sites, b.window.sites);
        assert_eq!(a.contained, b.contained);
        assert!(!a.contained.is_empty());
    }

    #[test]
    fn opening_window_contains_requested_point() {
        let t = cat2_tiling(2);
        let (w, idx) = t.window_at_coord(&[0.0078125], 9).unwrap();
        assert!(w.cells[idx].contains(&[0.0], 0.0));
        assert_eq!(w.level, 9);
    }

    #[test]
    fn distortion_examples() {
        // constant Jacobian: ratio exactly one
        let k = distortion_bound(
            &DistortionParams { holder_const: 0.0, holder_exp: 1.0, scale: 0.1 },
            2.0,
        );
        assert_eq!(k, 1.0);
        let k2 = distortion_bound(
            &DistortionParams { holder_const: 1.0, holder_exp: 1.0, scale: 0.1 },
            2.0,
        );
        assert!((k2 - 0.1f64.exp()).abs() < 1e-12);
        let k3 = distortion_bound(
            &DistortionParams { holder_const: 1.0, holder_exp: 1.0, scale: 1e-12 },
            2.0,
        );
        assert!((k3 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn density_floor_matches_closed_form() {
        let lam: f64 = (3.0 + 5f64.sqrt()) / 2.0;
        // independent evaluation of the floor at a=3 for the flat 1d leaf
        let expect = (0.99 / (2.0 * 1.01 * lam.powi(3))) * (0.99 / 2.02 - 2.0 / lam.powi(2));
        let got = density_constant(1, lam, lam, 0.01, 2, 3, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.005416).abs() < 5e-7);
        // decreasing in a
        let g4 = density_constant(1, lam, lam, 0.01, 2, 4, 1.0).unwrap();
        assert!(g4 < got);
        // invalid when a <= a_star
        assert!(density_constant(1, lam, lam, 0.01, 2, 2, 1.0).is_err());
    }

    #[test]
    fn two_dimensional_level_builds_and_sandwiches() {
        let model = Arc::new(preset_cat4_nonconformal().unwrap());
        let params = TilingParams { delta: 0.05, tau: 0.05, seed: 7, grid_refine: 20 };
        let t = Tiling::build(model, ExactTorusPoint::from_f64s(&[0.0; 4]), params, 1).unwrap();
        let atoms = t.atoms_at_level(1).unwrap();
        assert!(atoms.len() > 3);
        let delta = t.delta();
        let tau = t.tau();
        for a in &atoms {
            let inner = a.cell.boundary_distance(&a.site);
            assert!(inner >= (1.0 - tau) * delta / 2.0 - 1e-9, "inner {inner}");
            if let Cell::Polygon(p) = &a.cell {
                for v in &p.verts {
                    let d = ((v[0] - a.site[0]).powi(2) + (v[1] - a.site[1]).powi(2)).sqrt();
                    assert!(d <= (1.0 + tau) * delta + 1e-9, "outer {d}");
                }
            }
        }
    }
}
