//! The avoidance strategy and its supporting machinery.
//!
//! The target is a small product rectangle around a point y: a transversal
//! ball thickened by unstable balls, both of radius c/2. Its k-th preimage
//! meets the current atom in at most one component once atoms are small
//! enough; those components are the obstacles. Alice's move descends `a`
//! levels while staying disjoint from a guaranteed fraction of the active
//! obstacles, by a two-candidate dichotomy: a site far from the atom's
//! center, or the child atom containing the center. Over the r turns of a
//! step every active obstacle is cleared.
//!
//! All orbit positions that feed obstacle geometry are computed from exact
//! coordinates (rational torus orbits plus ring-valued leaf offsets), so
//! the final "the limit point's orbit avoids the target" verdicts remain
//! meaningful at depths where f64 orbit iteration has long lost track.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::LeafModel;
use crate::error::Error;
use crate::exact::{BigFloat, ExactTorusPoint, FieldElt};
use crate::game::{
    atom_center, modified_play, GamePolicy, LimitPoint, ModifiedTranscript, Player,
};
use crate::geom::Cell;
use crate::tiling::{deepest_inside, Atom, ChildSet, Tiling};
use crate::Result;

// ---------------------------------------------------------------------------
// Target rectangles
// ---------------------------------------------------------------------------

/// Product neighborhood of y: transversal c/2-ball thickened by unstable
/// c/2-balls, in the eigenframe at y.
pub struct TargetRectangle {
    pub y: ExactTorusPoint,
    pub y_f64: Vec<f64>,
    /// ln(c)
    pub c_log: f64,
    /// c/2 at high precision (c itself may underflow f64).
    c_half_hp: BigFloat,
}

impl TargetRectangle {
    /// Target with an f64-representable width.
    pub fn new(y: ExactTorusPoint, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite());
        let y_f64 = y.to_f64s();
        TargetRectangle {
            y,
            y_f64,
            c_log: c.ln(),
            c_half_hp: BigFloat::from_f64(c / 2.0),
        }
    }

    /// Target with width `coeff * rate^(-neg_pow)` where `rate` is the
    /// model's extreme expansion rate; survives far below f64 range.
    pub fn from_log_scale<M: LeafModel>(
        model: &M,
        y: ExactTorusPoint,
        coeff: f64,
        neg_pow: u32,
    ) -> Self {
        let frame = model.exact_frame().expect("exact frame required");
        let prec = frame.prec;
        // rate^(-neg_pow), using the largest-modulus coordinate root
        let top = frame
            .roots
            .iter()
            .max_by(|a, b| a.abs().cmp_val(&b.abs()))
            .expect("at least one root");
        let mut inv = BigFloat::from_f64(1.0).div(top, prec).abs();
        let mut acc = BigFloat::from_f64(coeff / 2.0);
        let mut p = neg_pow;
        while p > 0 {
            if p & 1 == 1 {
                acc = acc.mul_round(&inv, prec);
            }
            inv = inv.mul_round(&inv, prec);
            p >>= 1;
        }
        let c_log = coeff.ln() - neg_pow as f64 * model.expansion_max().ln();
        let y_f64 = y.to_f64s();
        TargetRectangle { y, y_f64, c_log, c_half_hp: acc }
    }

    pub fn c_half_hp(&self) -> &BigFloat {
        &self.c_half_hp
    }
}

// ---------------------------------------------------------------------------
// Parameters and the derivation ledger
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AliceMode {
    /// The two-candidate dichotomy with the guaranteed avoidance count.
    Dichotomy,
    /// Avoid every active obstacle outright; used when obstacles are not
    /// small relative to atoms (fixed-size targets), verified empirically.
    Greedy,
}

#[derive(Clone, Debug)]
pub struct AliceParams {
    pub delta: f64,
    pub tau: f64,
    pub a: u32,
    pub b: u32,
    pub eta: f64,
    pub r: u32,
    pub n1_min: u32,
    /// ln of the largest admissible target width.
    pub c_max_log: f64,
    /// The component-uniqueness scale L.
    pub cap_l: f64,
    pub mode: AliceMode,
}

#[derive(Clone, Debug)]
pub struct LedgerEntry {
    pub name: &'static str,
    pub formula: String,
    pub threshold: f64,
    pub chosen: f64,
    pub margin: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ParamLedger {
    pub entries: Vec<LedgerEntry>,
}

impl ParamLedger {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{:<18} {:<58} threshold={:.6e} chosen={:.6e} margin={:+.6e}\n",
                e.name, e.formula, e.threshold, e.chosen, e.margin
            ));
        }
        out
    }
}

/// Smallest integer m with sigma^m > bound (strict).
fn min_power_exceeding(sigma: f64, bound: f64) -> u32 {
    let mut m = 0u32;
    let mut pw = 1.0f64;
    while pw <= bound {
        m += 1;
        pw *= sigma;
        assert!(m < 100_000, "rate too close to one");
    }
    m
}

/// Derive the avoidance parameters for a given Bob gap:
/// the separation gap a, the per-step turn count r, the minimal opening
/// level, and the admissible target width.
pub fn derive_params<M: LeafModel>(
    model: &M,
    tiling: &Tiling<M>,
    b: u32,
    eta: f64,
    cap_l: f64,
) -> Result<(AliceParams, ParamLedger)> {
    if b <= tiling.a_star() {
        return Err(Error::InvalidParams(format!(
            "b={b} must exceed a_star={}",
            tiling.a_star()
        )));
    }
    if !(eta > 0.0 && eta < 0.25) {
        return Err(Error::InvalidParams(format!("eta {eta} must lie in (0, 1/4)")));
    }
    if !(cap_l > 0.0) {
        return Err(Error::InvalidParams("L must be positive".into()));
    }
    let delta = tiling.delta();
    let tau = tiling.tau();
    let s1 = model.expansion_min();
    let s2 = model.expansion_max();
    let mut ledger = ParamLedger::default();

    // a: smallest integer with sigma1^a > (13 + 11 tau)/(1 - tau)
    let a_bound = (13.0 + 11.0 * tau) / (1.0 - tau);
    let a = min_power_exceeding(s1, a_bound);
    let a_threshold = a_bound.ln() / s1.ln();
    ledger.entries.push(LedgerEntry {
        name: "gap-a",
        formula: "a > log((13+11 tau)/(1-tau)) / log sigma1".into(),
        threshold: a_threshold,
        chosen: a as f64,
        margin: a as f64 - a_threshold,
    });
    if a <= tiling.a_star() {
        return Err(Error::InvalidParams(format!(
            "derived a={a} does not exceed a_star={}",
            tiling.a_star()
        )));
    }

    // r: smallest integer with (1-eta)^r (a+b) r < 1
    let mut r = 1u32;
    loop {
        let v = (1.0 - eta).powi(r as i32) * ((a + b) as f64) * r as f64;
        if v < 1.0 {
            break;
        }
        r += 1;
        if r > 1_000_000 {
            return Err(Error::InvalidParams("per-step turn count diverged".into()));
        }
    }
    let r_value = (1.0 - eta).powi(r as i32) * ((a + b) as f64) * r as f64;
    ledger.entries.push(LedgerEntry {
        name: "turns-r",
        formula: "(1-eta)^r (a+b) r < 1".into(),
        threshold: 1.0,
        chosen: r as f64,
        margin: 1.0 - r_value,
    });

    // n1: smallest level with 2(1+tau) delta / sigma1^(n1-(a+b)r) <= L/100
    let n1_bound = 2.0 * (1.0 + tau) * delta * 100.0 / cap_l;
    let mut m = 0u32;
    let mut pw = 1.0f64;
    while pw < n1_bound {
        m += 1;
        pw *= s1;
        assert!(m < 100_000);
    }
    let n1_min = (a + b) * r + m;
    let n1_threshold = (a + b) as f64 * r as f64 + n1_bound.ln() / s1.ln();
    ledger.entries.push(LedgerEntry {
        name: "opening-n1",
        formula: "2(1+tau) delta sigma1^{-(n1-(a+b)r)} <= L/100".into(),
        threshold: n1_threshold,
        chosen: n1_min as f64,
        margin: n1_min as f64 - n1_threshold,
    });

    // c: largest admissible target width (log scale)
    let c_pow = n1_min + (a + b) * r + a;
    let c_max_log = ((1.0 - tau) * delta / 2.0).ln() - c_pow as f64 * s2.ln();
    ledger.entries.push(LedgerEntry {
        name: "width-c",
        formula: "c <= (1-tau) delta / (2 sigma2^{n1+(a+b)r+a})".into(),
        threshold: c_max_log,
        chosen: c_max_log,
        margin: 0.0,
    });

    Ok((
        AliceParams {
            delta,
            tau,
            a,
            b,
            eta,
            r,
            n1_min,
            c_max_log,
            cap_l,
            mode: AliceMode::Dichotomy,
        },
        ledger,
    ))
}

/// ln of the admissible target width for an explicit opening level.
pub fn width_bound_log<M: LeafModel>(
    model: &M,
    delta: f64,
    tau: f64,
    n1: u32,
    a: u32,
    b: u32,
    r: u32,
) -> f64 {
    ((1.0 - tau) * delta / 2.0).ln()
        - (n1 + (a + b) * r + a) as f64 * model.expansion_max().ln()
}

// ---------------------------------------------------------------------------
// Orbit evaluation
// ---------------------------------------------------------------------------

/// Incremental exact-orbit evaluator for one leaf point: rational torus
/// orbit of the base plus ring-valued leaf offsets.
pub struct OrbitWork<'m, M: LeafModel> {
    model: &'m M,
    base_orbit: Vec<ExactTorusPoint>,
    coord_pows: Vec<Vec<FieldElt>>, // coord_pows[k][i] = x^k * coord_i
}

impl<'m, M: LeafModel> OrbitWork<'m, M> {
    pub fn new(model: &'m M, base: ExactTorusPoint, coords: Vec<FieldElt>) -> Self {
        OrbitWork { model, base_orbit: vec![base], coord_pows: vec![coords] }
    }

    fn ensure(&mut self, k: u32) {
        while self.base_orbit.len() <= k as usize {
            let next = self.model.forward_torus(self.base_orbit.last().unwrap());
            self.base_orbit.push(next);
        }
        let field = self.model.field();
        while self.coord_pows.len() <= k as usize {
            let next: Vec<FieldElt> =
                self.coord_pows.last().unwrap().iter().map(|e| field.mul_x(e)).collect();
            self.coord_pows.push(next);
        }
    }

    /// High-precision ambient position of the k-th forward image.
    pub fn position_hp(&mut self, k: u32) -> Vec<BigFloat> {
        self.ensure(k);
        let coords: Vec<BigFloat> = self.coord_pows[k as usize]
            .iter()
            .enumerate()
            .map(|(i, e)| self.model.eval_coord_hp(e, i))
            .collect();
        self.model.embed_hp(&self.base_orbit[k as usize], &coords)
    }
}

/// All integer translates of `pos - y` worth testing (componentwise
/// centered representative plus +-1 shifts).
fn translate_offsets(n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::new();
        for base in &out {
            for d in [-1.0, 0.0, 1.0] {
                let mut v = base.clone();
                v.push(d);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// Is f^k(point) inside the target rectangle? Exact (high-precision)
/// membership for a point given by exact coordinates.
pub fn point_in_target<M: LeafModel>(
    model: &M,
    base: &ExactTorusPoint,
    coords: &[FieldElt],
    target: &TargetRectangle,
    k: u32,
) -> bool {
    let mut work = OrbitWork::new(model, base.clone(), coords.to_vec());
    let pos = work.position_hp(k);
    position_in_target(model, &pos, target)
}

fn position_in_target<M: LeafModel>(
    model: &M,
    pos: &[BigFloat],
    target: &TargetRectangle,
) -> bool {
    let frame = model.exact_frame().expect("exact frame required");
    let prec = frame.prec;
    let n = model.ambient_dim();
    let y_hp: Vec<BigFloat> =
        target.y.coords.iter().map(|c| BigFloat::from_rational(c, prec)).collect();
    let diff0: Vec<BigFloat> = pos
        .iter()
        .zip(&y_hp)
        .map(|(p, y)| p.sub(y).fract_centered())
        .collect();
    let c_half = target.c_half_hp();
    for off in translate_offsets(n) {
        let diff: Vec<BigFloat> = diff0
            .iter()
            .zip(&off)
            .map(|(d, o)| d.add(&BigFloat::from_f64(*o)))
            .collect();
        // cheap reject in f64 space first
        let dref: Vec<f64> = diff.iter().map(|d| d.to_f64()).collect();
        let (ucoarse, tcoarse) = frame.deviation_f64(&dref);
        let cbound = target.c_log.exp().max(1e-12) * 0.5 + 1e-9;
        if tcoarse > cbound + 1e-9 {
            continue;
        }
        if ucoarse.iter().map(|u| u * u).sum::<f64>().sqrt() > cbound + 1e-9 {
            continue;
        }
        let (udev, tdev) = frame.deviation_hp(&diff);
        if tdev.cmp_val(c_half) != std::cmp::Ordering::Less && n > model.unstable_dim() {
            continue;
        }
        let mut u2 = BigFloat::zero();
        for u in &udev {
            u2 = u2.add(&u.mul_round(u, prec));
        }
        let c2 = c_half.mul_round(c_half, prec);
        if u2.cmp_val(&c2) == std::cmp::Ordering::Less {
            return true;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Obstacles
// ---------------------------------------------------------------------------

/// One component of the k-th preimage of the target meeting an atom,
/// expressed in the atom's picture coordinates.
#[derive(Clone, Debug)]
pub struct Obstacle {
    pub k: u32,
    /// Center in the reference atom's picture.
    pub center: Vec<f64>,
    /// ln of the half-width along each unstable coordinate, same picture.
    pub half_log: Vec<f64>,
    /// ln(c/2): half-width in forward (iterate-k) coordinates.
    pub c_half_log: f64,
}

impl Obstacle {
    /// ln of the component's diameter in level-zero leaf scale.
    pub fn pullback_diam_log(&self, level: u32, moduli: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (h, m) in self.half_log.iter().zip(moduli) {
            best = best.max(h - level as f64 * m);
        }
        // diameter = 2 * halfwidth (the component is a ball image)
        best + std::f64::consts::LN_2
    }

    /// Conservative per-axis interval test against a picture cell.
    /// Ambiguity within the floating tolerance counts as intersecting.
    pub fn intersects_cell(&self, cell: &Cell, tol: f64) -> bool {
        let (lo, hi) = cell.bbox();
        for i in 0..self.center.len() {
            let w = self.half_log[i].exp(); // may be 0 (underflow) or inf
            if w.is_infinite() {
                continue;
            }
            if self.center[i] + w < lo[i] - tol || self.center[i] - w > hi[i] + tol {
                return false;
            }
        }
        true
    }

    pub fn disjoint_from_cell(&self, cell: &Cell, tol: f64) -> bool {
        !self.intersects_cell(cell, tol)
    }

    /// Map into the picture of a child window re-centered at `site` and
    /// `dl` levels deeper.
    pub fn to_child_picture<M: LeafModel>(&self, model: &M, site: &[f64], dl: u32) -> Obstacle {
        let shifted: Vec<f64> =
            self.center.iter().zip(site).map(|(c, s)| c - s).collect();
        let center = model.picture_forward(&shifted, dl as i32);
        let moduli = model.coord_log_moduli();
        let half_log = self
            .half_log
            .iter()
            .zip(&moduli)
            .map(|(h, m)| h + dl as f64 * m)
            .collect();
        Obstacle { k: self.k, center, half_log, c_half_log: self.c_half_log }
    }
}

/// Enumerate the preimage components meeting `atom` for iterates in
/// `[k_lo, k_hi)`. At most one component per iterate may appear once the
/// smallness preconditions hold; a second one is an error.
pub fn enumerate_obstacles<M: LeafModel>(
    tiling: &Tiling<M>,
    target: &TargetRectangle,
    atom: &Atom,
    k_lo: u32,
    k_hi: u32,
    cap_l: f64,
) -> Result<Vec<Obstacle>> {
    let model = tiling.model.as_ref();
    let frame = model.exact_frame().expect("exact frame required");
    let prec = frame.prec;
    let n = model.ambient_dim();
    let u = model.unstable_dim();
    let moduli = model.coord_log_moduli();
    let level = atom.level;
    let (clo, chi) = atom.cell.bbox();

    let mut work = OrbitWork::new(model, tiling.base.clone(), atom.origin.leaf.clone());
    let y_hp: Vec<BigFloat> =
        target.y.coords.iter().map(|c| BigFloat::from_rational(c, prec)).collect();
    let offsets = translate_offsets(n);
    let mut out: Vec<Obstacle> = Vec::new();

    for k in k_lo..k_hi {
        if k >= level {
            return Err(Error::InvalidParams(format!(
                "iterate {k} is not below the atom level {level}"
            )));
        }
        // forward-image smallness guard: diam(f^k(atom)) <= L/100
        let span_log: f64 = (0..u)
            .map(|i| ((chi[i] - clo[i]).max(1e-300)).ln() + (k as f64 - level as f64) * moduli[i])
            .fold(f64::NEG_INFINITY, f64::max);
        if span_log > (cap_l / 100.0).ln() + 1e-9 {
            return Err(Error::InvalidParams(format!(
                "forward image at iterate {k} exceeds L/100 (log {span_log:.2})"
            )));
        }

        let pos = work.position_hp(k);
        let diff0: Vec<BigFloat> = pos
            .iter()
            .zip(&y_hp)
            .map(|(p, y)| p.sub(y).fract_centered())
            .collect();
        let diff0_f: Vec<f64> = diff0.iter().map(|d| d.to_f64()).collect();

        let mut found: Option<Obstacle> = None;
        for off in &offsets {
            let dref: Vec<f64> = diff0_f.iter().zip(off).map(|(d, o)| d + o).collect();
            let (ucoarse, tcoarse) = frame.deviation_f64(&dref);
            // transversal reject: anything macroscopically away from the
            // transversal slab cannot produce a component
            if n > u && tcoarse > target.c_log.exp().max(0.0) * 0.5 + 1e-9 {
                continue;
            }
            // unstable reach: the window center must be within the cell's
            // forward image plus the window width (log-space per axis)
            let mut reach_ok = true;
            for i in 0..u {
                let span = (chi[i] - clo[i]).max(1e-300).ln()
                    + (k as f64 - level as f64) * moduli[i];
                let pos_rel = ucoarse[i]
                    + model.picture_forward(&atom.site, (k as i64 - level as i64) as i32)[i];
                // |pos_rel| must be <= e^span + c/2 (+ slack)
                let bound = span.exp() + (target.c_log - std::f64::consts::LN_2).exp() + 1e-12;
                if pos_rel.abs() > bound * (1.0 + 1e-9) + 1e-12 {
                    reach_ok = false;
                    break;
                }
            }
            if !reach_ok {
                continue;
            }
            // confirm transversal membership at high precision
            let diff: Vec<BigFloat> = diff0
                .iter()
                .zip(off)
                .map(|(d, o)| d.add(&BigFloat::from_f64(*o)))
                .collect();
            let (udev, tdev) = frame.deviation_hp(&diff);
            if n > u && tdev.cmp_val(target.c_half_hp()) != std::cmp::Ordering::Less {
                continue;
            }
            // picture-space window: center_i = lambda_i^{level-k} (-udev_i)
            let mut center = vec![0.0f64; u];
            let mut half_log = vec![0.0f64; u];
            for i in 0..u {
                let mut pw = BigFloat::from_f64(1.0);
                // root_i^{level-k} by square-and-multiply
                let mut base = frame.roots[i].clone();
                let mut e = (level - k) as u64;
                while e > 0 {
                    if e & 1 == 1 {
                        pw = pw.mul_round(&base, prec);
                    }
                    base = base.mul_round(&base, prec);
                    e >>= 1;
                }
                center[i] = udev[i].neg().mul_round(&pw, prec).to_f64();
                half_log[i] =
                    target.c_log - std::f64::consts::LN_2 + (level - k) as f64 * moduli[i];
            }
            let ob = Obstacle {
                k,
                center,
                half_log,
                c_half_log: target.c_log - std::f64::consts::LN_2,
            };
            if ob.intersects_cell(&atom.cell, 0.0) {
                if found.is_some() {
                    return Err(Error::MultipleComponents { k });
                }
                found = Some(ob);
            }
        }
        if let Some(ob) = found {
            out.push(ob);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// The avoidance move
// ---------------------------------------------------------------------------

fn ceil_count(x: f64) -> usize {
    let r = x.round();
    if (x - r).abs() < 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Alice's move: a child `a` levels down, disjoint from a guaranteed
/// share of the active obstacles.
///
/// Obstacles must be given in the parent atom's picture. In dichotomy
/// mode the returned atom avoids at least ceil(eta N) of them; in greedy
/// mode it avoids all of them or errors.
pub fn avoidance_move<M: LeafModel>(
    tiling: &Tiling<M>,
    parent: &Atom,
    children: &ChildSet,
    obstacles: &[Obstacle],
    params: &AliceParams,
) -> Result<Atom> {
    let model = tiling.model.as_ref();
    let delta = params.delta;
    let tau = params.tau;
    let a = params.a;
    let tol = 1e-12 * delta;
    let image = tiling.parent_image(parent, a);

    if children.contained.is_empty() {
        return Err(Error::NoChild { level: parent.level, m: a });
    }
    if obstacles.is_empty() {
        let i = deepest_inside(children, &image).expect("children exist");
        return Ok(children.window.atom(i));
    }

    // obstacles in the child picture (re-centered at the parent's site)
    let obs: Vec<Obstacle> = obstacles
        .iter()
        .map(|o| o.to_child_picture(model, &parent.site, a))
        .collect();

    match params.mode {
        AliceMode::Greedy => {
            let mut best: Option<(f64, u64, usize)> = None;
            for &i in &children.contained {
                let cell = &children.window.cells[i];
                if obs.iter().all(|o| o.disjoint_from_cell(cell, tol)) {
                    let d = image.boundary_distance(&children.window.sites[i]);
                    let id = children.window.ids[i];
                    let better = match &best {
                        None => true,
                        Some((bd, bid, _)) => d > *bd || (d == *bd && id < *bid),
                    };
                    if better {
                        best = Some((d, id, i));
                    }
                }
            }
            match best {
                Some((_, _, i)) => Ok(children.window.atom(i)),
                None => Err(Error::NoAvoidingChild { total: obs.len() }),
            }
        }
        AliceMode::Dichotomy => {
            let n_level = parent.level;
            let moduli = model.coord_log_moduli();
            // hypothesis: each obstacle is smaller (in level-zero scale)
            // than the separation threshold at the child level
            let s2_log = model.expansion_max().ln();
            let thresh_log =
                ((1.0 - tau) * delta / 2.0).ln() - (n_level + a) as f64 * s2_log;
            for o in &obs {
                let d = o.pullback_diam_log(n_level + a, &moduli);
                if d > thresh_log + 1e-9 {
                    return Err(Error::InvalidParams(format!(
                        "obstacle at iterate {} too large for the dichotomy \
                         (log diameter {d:.2} vs threshold {thresh_log:.2})",
                        o.k
                    )));
                }
            }
            let need = ceil_count(params.eta * obs.len() as f64).max(1);

            // candidate one: the contained child whose site lies farthest
            // from the parent's center (picture origin after re-centering)
            let far = children
                .contained
                .iter()
                .copied()
                .max_by(|&i, &j| {
                    let ni: f64 =
                        children.window.sites[i].iter().map(|s| s * s).sum::<f64>();
                    let nj: f64 =
                        children.window.sites[j].iter().map(|s| s * s).sum::<f64>();
                    ni.partial_cmp(&nj)
                        .unwrap()
                        .then(children.window.ids[j].cmp(&children.window.ids[i]))
                })
                .expect("children exist");
            // its distance from the center in parent scale
            let far_dist_parent: f64 = model
                .picture_forward(&children.window.sites[far], -(a as i32))
                .iter()
                .map(|s| s * s)
                .sum::<f64>()
                .sqrt();
            let far_floor = (1.0 - tau) * delta / 2.0
                - 2.0 * (1.0 + tau) * delta / model.expansion_min().powi(a as i32);
            if far_dist_parent < far_floor - 1e-9 {
                return Err(Error::DichotomyFailure { need, total: obs.len() });
            }
            let far_avoided = obs
                .iter()
                .filter(|o| o.disjoint_from_cell(&children.window.cells[far], tol))
                .count();
            if far_avoided >= need {
                return Ok(children.window.atom(far));
            }

            // candidate two: the child containing the parent's center
            let zeros = vec![0.0; model.unstable_dim()];
            let center_idx = match children.window.locate(&zeros, delta) {
                Ok(i) => i,
                Err(_) => {
                    // center on a cell boundary: nearest site wins
                    children
                        .contained
                        .iter()
                        .copied()
                        .min_by(|&i, &j| {
                            let ni: f64 =
                                children.window.sites[i].iter().map(|s| s * s).sum::<f64>();
                            let nj: f64 =
                                children.window.sites[j].iter().map(|s| s * s).sum::<f64>();
                            ni.partial_cmp(&nj).unwrap()
                        })
                        .expect("children exist")
                }
            };
            if !children.contained.contains(&center_idx) {
                return Err(Error::DichotomyFailure { need, total: obs.len() });
            }
            let center_avoided = obs
                .iter()
                .filter(|o| o.disjoint_from_cell(&children.window.cells[center_idx], tol))
                .count();
            if center_avoided >= need {
                return Ok(children.window.atom(center_idx));
            }
            Err(Error::DichotomyFailure { need, total: obs.len() })
        }
    }
}

// ---------------------------------------------------------------------------
// Adversaries
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BobKind {
    Random,
    CenterSeeking,
    ObstacleHugging,
}

impl BobKind {
    pub fn name(&self) -> &'static str {
        match self {
            BobKind::Random => "random",
            BobKind::CenterSeeking => "center-seeking",
            BobKind::ObstacleHugging => "obstacle-hugging",
        }
    }

    pub fn parse(s: &str) -> Option<BobKind> {
        match s {
            "random" => Some(BobKind::Random),
            "center-seeking" => Some(BobKind::CenterSeeking),
            "obstacle-hugging" => Some(BobKind::ObstacleHugging),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// The winning-game runner
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct WinningConfig {
    pub params: AliceParams,
    pub steps: u32,
    /// Bob's opening level.
    pub n1: u32,
}

#[derive(Debug)]
pub struct WinningOutcome {
    pub transcript: ModifiedTranscript,
    /// Active obstacle count at the end of each step (0 = cleared).
    pub step_residual: Vec<usize>,
    /// The final atom meets no preimage component for k below this bound.
    pub final_disjoint_to: u32,
    pub final_disjoint: bool,
    pub limit: LimitPoint,
    /// f^k(limit) stays outside the target for all k <= this value.
    pub orbit_clear_to: u32,
    pub orbit_clear: bool,
}

/// Play a full avoidance game against the chosen adversary and verify the
/// outcome: the final atom's disjointness from every enumerated preimage
/// component and the limit point's orbit staying clear of the target.
pub fn run_winning_game<M: LeafModel>(
    tiling: &Tiling<M>,
    target: &TargetRectangle,
    cfg: &WinningConfig,
    bob_kind: BobKind,
    seed: u64,
) -> Result<WinningOutcome> {
    let model = tiling.model.clone();
    let p = cfg.params.clone();
    let ab = p.a + p.b;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Bob's opening: an atom at level n1 around a seeded interior point
    let (dlo, dhi) = tiling.d0().bbox();
    let u = model.unstable_dim();
    let start = loop {
        let coord: Vec<f64> =
            (0..u).map(|k| rng.gen_range(0.55 * dlo[k]..0.55 * dhi[k])).collect();
        match tiling.window_at_coord(&coord, cfg.n1) {
            Ok((w, idx)) => break (w.atom(idx), coord),
            Err(Error::OnBoundary { .. }) => continue,
            Err(e) => return Err(e),
        }
    };
    let (opening, opening_coord) = start;

    // waiting rounds carry the level to the anchored regime
    let wait = if cfg.n1 >= p.n1_min {
        0
    } else {
        (p.n1_min - cfg.n1 + ab - 1) / ab
    };
    let rounds = (wait + cfg.steps * p.r) as usize;

    let step_residual: std::cell::RefCell<Vec<usize>> = std::cell::RefCell::new(Vec::new());
    let alice_turn = std::cell::Cell::new(0u32);
    let rng_bob = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed ^ 0xb0b));

    let p_alice = p.clone();
    let target_ref = &*target;
    let residual_ref = &step_residual;
    let alice_turn_ref = &alice_turn;
    let mut alice = move |t: &ModifiedTranscript,
                          cs: &ChildSet,
                          tl: &Tiling<M>|
          -> Atom {
        let parent = t.current();
        let turn = alice_turn_ref.get();
        alice_turn_ref.set(turn + 1);
        if turn < wait {
            let image = tl.parent_image(parent, p_alice.a);
            let i = deepest_inside(cs, &image).expect("children exist");
            return cs.window.atom(i);
        }
        let stepped = turn - wait;
        let j = stepped / p_alice.r;
        let k_lo = j * p_alice.r * ab;
        let k_hi = (j + 1) * p_alice.r * ab;
        let active =
            enumerate_obstacles(tl, target_ref, parent, k_lo, k_hi, p_alice.cap_l)
                .expect("obstacle enumeration");
        let atom = avoidance_move(tl, parent, cs, &active, &p_alice)
            .expect("avoidance move");
        // end of step: record how many of this step's obstacles still
        // meet the chosen atom
        if (stepped + 1) % p_alice.r == 0 {
            let rest =
                enumerate_obstacles(tl, target_ref, &atom, k_lo, k_hi, p_alice.cap_l)
                    .expect("obstacle enumeration");
            residual_ref.borrow_mut().push(rest.len());
        }
        atom
    };

    let p_bob = p.clone();
    let mut bob = move |t: &ModifiedTranscript, cs: &ChildSet, tl: &Tiling<M>| -> Atom {
        let parent = t.current();
        match bob_kind {
            BobKind::Random => {
                let mut rng = rng_bob.borrow_mut();
                let pick = rng.gen_range(0..cs.contained.len());
                cs.window.atom(cs.contained[pick])
            }
            BobKind::CenterSeeking => {
                // forward image of each candidate site pulled toward y
                let k_probe = parent.level / 2;
                let mut best: Option<(f64, u64, usize)> = None;
                for &i in &cs.contained {
                    let atom = cs.window.atom(i);
                    let coords = atom.site_exact(tl.model.as_ref());
                    let mut w = OrbitWork::new(tl.model.as_ref(), tl.base.clone(), coords);
                    let pos: Vec<f64> =
                        w.position_hp(k_probe).iter().map(|x| x.to_f64()).collect();
                    let d = crate::dynamics::torus_distance(&pos, &target_ref.y_f64);
                    let id = cs.window.ids[i];
                    let better = match &best {
                        None => true,
                        Some((bd, bid, _)) => d < *bd || (d == *bd && id < *bid),
                    };
                    if better {
                        best = Some((d, id, i));
                    }
                }
                cs.window.atom(best.expect("children exist").2)
            }
            BobKind::ObstacleHugging => {
                // prefer a child meeting an active obstacle
                let turn = alice_turn_ref.get();
                let stepped = turn.saturating_sub(wait);
                let j = stepped / p_bob.r;
                let ab2 = p_bob.a + p_bob.b;
                let k_lo = j * p_bob.r * ab2;
                let k_hi = (j + 1) * p_bob.r * ab2;
                let active = if turn >= wait {
                    enumerate_obstacles(tl, target_ref, parent, k_lo, k_hi, p_bob.cap_l)
                        .unwrap_or_default()
                } else {
                    Vec::new()
                };
                let obs: Vec<Obstacle> = active
                    .iter()
                    .map(|o| o.to_child_picture(tl.model.as_ref(), &parent.site, p_bob.b))
                    .collect();
                let tol = 1e-12 * tl.delta();
                let hit = cs.contained.iter().copied().find(|&i| {
                    obs.iter().any(|o| o.intersects_cell(&cs.window.cells[i], tol))
                });
                match hit {
                    Some(i) => cs.window.atom(i),
                    None => {
                        let mut rng = rng_bob.borrow_mut();
                        let pick = rng.gen_range(0..cs.contained.len());
                        cs.window.atom(cs.contained[pick])
                    }
                }
            }
        }
    };

    let transcript = modified_play(
        tiling,
        &mut alice,
        &mut bob,
        p.a,
        p.b,
        opening,
        opening_coord,
        rounds,
        &GamePolicy::default(),
    )?;

    // verification: the final atom meets no component up to the horizon
    let horizon = (cfg.steps + 1) * p.r * ab;
    let final_atom = transcript.current().clone();
    let remaining =
        enumerate_obstacles(tiling, target, &final_atom, 0, horizon.min(final_atom.level), p.cap_l)?;
    let final_disjoint = remaining.is_empty();

    // and the limit point's orbit stays clear
    let limit = atom_center(tiling, &final_atom);
    let orbit_horizon = 2 * p.r * ab;
    let mut orbit_clear = true;
    let mut work = OrbitWork::new(tiling.model.as_ref(), tiling.base.clone(), limit.exact.clone());
    for k in 0..=orbit_horizon {
        let pos = work.position_hp(k);
        if position_in_target(tiling.model.as_ref(), &pos, target) {
            orbit_clear = false;
            break;
        }
    }

    Ok(WinningOutcome {
        transcript,
        step_residual: step_residual.into_inner(),
        final_disjoint_to: horizon,
        final_disjoint,
        limit,
        orbit_clear_to: orbit_horizon,
        orbit_clear,
    })
}

// ---------------------------------------------------------------------------
// Interleaving across countably many targets
// ---------------------------------------------------------------------------

/// Which target plays at turn k (1-based): the lane t with
/// k = 2^{t-1} (mod 2^t); lanes beyond the target count are idle.
pub fn interleave_slot(turn: u64, t_count: usize) -> Option<usize> {
    debug_assert!(turn >= 1);
    let t = turn.trailing_zeros() as usize + 1;
    if t <= t_count {
        Some(t - 1)
    } else {
        None
    }
}

/// Effective Bob gap seen by lane t (1-based) in the interleaved game.
pub fn lane_gap(a: u32, b: u32, t: usize) -> u32 {
    b + ((1u32 << t) - 1) * (a + b)
}

struct Lane {
    params: AliceParams,
    turns: u32,
}

#[derive(Debug)]
pub struct InterleavedOutcome {
    pub transcript: ModifiedTranscript,
    pub limit: LimitPoint,
    /// Per target: orbit of the limit point verified clear up to this k.
    pub orbit_clear_to: Vec<u32>,
    pub orbit_clear: Vec<bool>,
}

/// Run the interleaved avoidance game against finitely many targets: at
/// turn k lane t = (2-adic valuation of k) + 1 plays its own avoidance
/// schedule at its effective gap; turns beyond the last lane make a
/// neutral descend-by-a move.
pub fn run_interleaved_game<M: LeafModel>(
    tiling: &Tiling<M>,
    targets: &[TargetRectangle],
    base_params: &AliceParams,
    n1: u32,
    total_turns: u32,
    seed: u64,
) -> Result<InterleavedOutcome> {
    assert!(!targets.is_empty());
    let a = base_params.a;
    let b = base_params.b;
    let mut lanes: Vec<Lane> = (1..=targets.len())
        .map(|t| {
            let mut p = base_params.clone();
            p.b = lane_gap(a, b, t);
            Lane { params: p, turns: 0 }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = tiling.model.unstable_dim();
    let (dlo, dhi) = tiling.d0().bbox();
    let (opening, opening_coord) = loop {
        let coord: Vec<f64> =
            (0..u).map(|k| rng.gen_range(0.55 * dlo[k]..0.55 * dhi[k])).collect();
        match tiling.window_at_coord(&coord, n1) {
            Ok((w, idx)) => break (w.atom(idx), coord),
            Err(Error::OnBoundary { .. }) => continue,
            Err(e) => return Err(e),
        }
    };

    let mut transcript = ModifiedTranscript {
        a,
        b,
        opening_coord,
        moves: vec![crate::game::ModifiedMove { player: Player::Bob, atom: opening }],
    };

    for turn in 1..=total_turns {
        // Bob: neutral random descend by b (the adversary is immaterial
        // for the schedule demonstration)
        if turn > 1 {
            let current = transcript.current().clone();
            let cs = tiling.enumerate_within(&current, b)?;
            if cs.contained.is_empty() {
                return Err(Error::NoChild { level: current.level, m: b });
            }
            let pick = rng.gen_range(0..cs.contained.len());
            let atom = cs.window.atom(cs.contained[pick]);
            transcript.moves.push(crate::game::ModifiedMove { player: Player::Bob, atom });
        }
        let current = transcript.current().clone();
        let cs = tiling.enumerate_within(&current, a)?;
        if cs.contained.is_empty() {
            return Err(Error::NoChild { level: current.level, m: a });
        }
        let atom = match interleave_slot(turn as u64, targets.len()) {
            None => {
                let image = tiling.parent_image(&current, a);
                let i = deepest_inside(&cs, &image).expect("children exist");
                cs.window.atom(i)
            }
            Some(lane_idx) => {
                let lane = &mut lanes[lane_idx];
                let p = &lane.params;
                let ab_lane = a + p.b;
                let j = lane.turns / p.r;
                lane.turns += 1;
                let k_lo = j * p.r * ab_lane;
                let k_hi = (j + 1) * p.r * ab_lane;
                if current.level <= k_hi + 2 {
                    // not yet anchored deep enough for this lane: neutral
                    let image = tiling.parent_image(&current, a);
                    let i = deepest_inside(&cs, &image).expect("children exist");
                    cs.window.atom(i)
                } else {
                    let active = enumerate_obstacles(
                        tiling,
                        &targets[lane_idx],
                        &current,
                        k_lo,
                        k_hi.min(current.level),
                        p.cap_l,
                    )?;
                    avoidance_move(tiling, &current, &cs, &active, p)?
                }
            }
        };
        transcript.moves.push(crate::game::ModifiedMove { player: Player::Alice, atom });
    }

    let final_atom = transcript.current().clone();
    let limit = atom_center(tiling, &final_atom);
    let mut orbit_clear_to = Vec::new();
    let mut orbit_clear = Vec::new();
    for (idx, target) in targets.iter().enumerate() {
        let lane = &lanes[idx];
        let horizon = (lane.turns / lane.params.r.max(1)).max(1) * lane.params.r
            * (a + lane.params.b);
        let horizon = horizon.min(final_atom.level.saturating_sub(2));
        let mut clear = true;
        let mut work =
            OrbitWork::new(tiling.model.as_ref(), tiling.base.clone(), limit.exact.clone());
        for k in 0..=horizon {
            let pos = work.position_hp(k);
            if position_in_target(tiling.model.as_ref(), &pos, target) {
                clear = false;
                break;
            }
        }
        orbit_clear_to.push(horizon);
        orbit_clear.push(clear);
    }

    Ok(InterleavedOutcome { transcript, limit, orbit_clear_to, orbit_clear })
}

// ---------------------------------------------------------------------------
// Component-uniqueness check for the chosen (L, c)
// ---------------------------------------------------------------------------

/// Empirical check that unstable L-balls meet the target in a single
/// component: no two admissible lattice translates put their unstable
/// window within L of each other.
pub fn verify_single_component<M: LeafModel>(
    model: &M,
    target: &TargetRectangle,
    cap_l: f64,
    samples: u32,
    seed: u64,
) -> bool {
    let frame = model.exact_frame().expect("exact frame required");
    let n = model.ambient_dim();
    let u = model.unstable_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = target.c_log.exp().max(0.0);
    for _ in 0..samples {
        // a point of the rectangle: y plus small frame offsets
        let mut p = target.y_f64.clone();
        for x in p.iter_mut() {
            *x = (*x + 1e-3 * c * rng.gen_range(-0.5..0.5)).rem_euclid(1.0);
        }
        let mut hits = 0;
        for off in translate_offsets(n) {
            let diff: Vec<f64> = p
                .iter()
                .zip(&target.y_f64)
                .zip(&off)
                .map(|((a, y), o)| {
                    let d = a - y;
                    let centered = d - d.round();
                    centered + o
                })
                .collect();
            let (udev, tdev) = frame.deviation_f64(&diff);
            if n > u && tdev > c / 2.0 + 1e-12 {
                continue;
            }
            let unorm = udev.iter().map(|x| x * x).sum::<f64>().sqrt();
            if unorm <= cap_l + c {
                hits += 1;
            }
        }
        if hits > 1 {
            return false;
        }
    }
    true
}

// ---------------------------------------------------------------------------

/// Deterministic per-(seed, kind) sub-seeds for batch runs.
pub fn batch_seed(seed0: u64, kind: BobKind, index: u64) -> u64 {
    let k = match kind {
        BobKind::Random => 1u64,
        BobKind::CenterSeeking => 2,
        BobKind::ObstacleHugging => 3,
    };
    seed0 ^ (k << 56) ^ index.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Memoized obstacle enumeration keyed by (atom id, level, k-range); used
/// by tree builds that revisit nodes.
pub struct ObstacleCache {
    map: HashMap<(u64, u32, u32, u32), Vec<Obstacle>>,
}

impl ObstacleCache {
    pub fn new() -> Self {
        ObstacleCache { map: HashMap::new() }
    }

    pub fn get_or_insert<M: LeafModel>(
        &mut self,
        tiling: &Tiling<M>,
        target: &TargetRectangle,
        atom: &Atom,
        k_lo: u32,
        k_hi: u32,
        cap_l: f64,
    ) -> Result<Vec<Obstacle>> {
        let key = (atom.id, atom.level, k_lo, k_hi);
        if let Some(v) = self.map.get(&key) {
            return Ok(v.clone());
        }
        let v = enumerate_obstacles(tiling, target, atom, k_lo, k_hi, cap_l)?;
        self.map.insert(key, v.clone());
        Ok(v)
    }
}

impl Default for ObstacleCache {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{preset_cat2, ToralModel};
    use crate::tiling::TilingParams;
    use std::sync::Arc;

    fn cat2_tiling(depth: u32) -> Tiling<ToralModel> {
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
    fn derived_parameters_match_independent_arithmetic() {
        let t = cat2_tiling(1);
        let model = t.model.clone();
        let (p, ledger) = derive_params(model.as_ref(), &t, 3, 0.2, 0.01).unwrap();
        // gap: threshold log(13.2424../0.99)/log lambda ~ 2.684 -> 3
        assert_eq!(p.a, 3);
        // turns: smallest r with 0.8^r * 6r < 1 -> 22
        assert_eq!(p.r, 22);
        // opening level: (a+b) r = 132 plus the smallest m with
        // lambda^m >= 2 * 1.01 * 0.05 * 100/0.01 = 1010 -> m = 8
        assert_eq!(p.n1_min, 140);
        assert_eq!(ledger.entries.len(), 4);
        for e in &ledger.entries {
            assert!(e.margin >= 0.0, "{} margin {}", e.name, e.margin);
        }
        // c bound matches the closed form in logs
        let lam = (3.0 + 5f64.sqrt()) / 2.0;
        let expect = (0.99f64 * 0.05 / 2.0).ln() - (140.0 + 132.0 + 3.0) * lam.ln();
        assert!((p.c_max_log - expect).abs() < 1e-9);
    }

    #[test]
    fn interleave_schedule_follows_dyadic_valuation() {
        // turns 1..8 with three targets: y1 y2 y1 y3 y1 y2 y1 neutral
        let got: Vec<Option<usize>> = (1..=8).map(|k| interleave_slot(k, 3)).collect();
        assert_eq!(
            got,
            vec![
                Some(0),
                Some(1),
                Some(0),
                Some(2),
                Some(0),
                Some(1),
                Some(0),
                None
            ]
        );
        // one target: odd turns play it, with doubled effective gap
        assert_eq!(interleave_slot(5, 1), Some(0));
        assert_eq!(interleave_slot(2, 1), None);
        assert_eq!(lane_gap(3, 3, 1), 3 + 6);
    }

    #[test]
    fn fixed_point_target_produces_obstacle_every_iterate() {
        let t = cat2_tiling(2);
        let target = TargetRectangle::new(
            ExactTorusPoint::from_f64s(&[0.0, 0.0]),
            1e-9,
        );
        // an atom containing the fixed point's leaf coordinate 0, deep
        // enough that iterates 0..5 are all below its level
        let (w, idx) = t.window_at_coord(&[0.0], 12).unwrap();
        let atom = w.atom(idx);
        let obs = enumerate_obstacles(&t, &target, &atom, 0, 6, 0.01).unwrap();
        assert_eq!(obs.len(), 6, "one component per iterate through the fixed point");
        // each component contains the picture coordinate of leaf point 0
        let field = t.model.field();
        let zero_rel = field.sub(&field.zero(), &atom.origin.leaf[0]);
        let zero_pic = t
            .model
            .eval_coord_f64(&field.mul_x_pow(&zero_rel, atom.level as i64), 0);
        for o in &obs {
            let wdt = o.half_log[0].exp();
            assert!(
                (o.center[0] - zero_pic).abs() <= wdt + 1e-9 * t.delta(),
                "component at k={} misses the fixed point",
                o.k
            );
        }
    }

    #[test]
    fn obstacle_regions_agree_with_sampled_membership() {
        let t = cat2_tiling(2);
        let target =
            TargetRectangle::new(ExactTorusPoint::from_f64s(&[0.0, 0.0]), 2e-4);
        let (w, idx) = t.window_at_coord(&[0.0], 14).unwrap();
        let atom = w.atom(idx);
        let field = t.model.field();
        for k in [5u32, 8] {
            let obs = enumerate_obstacles(&t, &target, &atom, k, k + 1, 0.05).unwrap();
            let (lo, hi) = atom.cell.bbox();
            let diam = hi[0] - lo[0];
            let n_samples = 400;
            for s in 0..=n_samples {
                let pic = lo[0] + diam * s as f64 / n_samples as f64;
                let coord = field.add(
                    &atom.origin.leaf[0],
                    &field.scale(
                        &atom.origin.x_neg_level,
                        &num_rational::BigRational::from_float(pic).unwrap(),
                    ),
                );
                let inside =
                    point_in_target(t.model.as_ref(), &t.base, &[coord], &target, k);
                let in_region = obs.iter().any(|o| {
                    (pic - o.center[0]).abs() < o.half_log[0].exp()
                });
                assert_eq!(
                    inside, in_region,
                    "k={k} sample at {pic}: membership {inside} vs region {in_region}"
                );
            }
        }
    }

    #[test]
    fn avoidance_with_no_obstacles_is_any_descend() {
        let t = cat2_tiling(2);
        let parent = t.atoms_at_level(2).unwrap()[2].clone();
        let children = t.enumerate_within(&parent, 3).unwrap();
        let (p, _) = derive_params(t.model.as_ref(), &t, 3, 0.2, 0.01).unwrap();
        let atom = avoidance_move(&t, &parent, &children, &[], &p).unwrap();
        assert_eq!(atom.level, parent.level + 3);
    }

    #[test]
    fn avoidance_respects_planted_obstacles() {
        let t = cat2_tiling(2);
        let parent = t.atoms_at_level(2).unwrap()[2].clone();
        let children = t.enumerate_within(&parent, 3).unwrap();
        let (p, _) = derive_params(t.model.as_ref(), &t, 3, 0.2, 0.01).unwrap();
        let tiny = (1e-30f64).ln();
        // one planted obstacle at the parent's center
        let one = vec![Obstacle {
            k: 0,
            center: vec![parent.site[0]],
            half_log: vec![tiny],
            c_half_log: tiny,
        }];
        let atom = avoidance_move(&t, &parent, &children, &one, &p).unwrap();
        let moved = one[0].to_child_picture(t.model.as_ref(), &parent.site, 3);
        assert!(moved.disjoint_from_cell(&atom.cell, 0.0));

        // four planted obstacles spread across the parent: at least
        // ceil(eta*4) = 1 avoided
        let (lo, hi) = parent.cell.bbox();
        let obs: Vec<Obstacle> = (0..4)
            .map(|i| Obstacle {
                k: i,
                center: vec![lo[0] + (hi[0] - lo[0]) * (0.2 + 0.2 * i as f64)],
                half_log: vec![tiny],
                c_half_log: tiny,
            })
            .collect();
        let atom = avoidance_move(&t, &parent, &children, &obs, &p).unwrap();
        let avoided = obs
            .iter()
            .map(|o| o.to_child_picture(t.model.as_ref(), &parent.site, 3))
            .filter(|o| o.disjoint_from_cell(&atom.cell, 0.0))
            .count();
        assert!(avoided >= 1);
    }

    #[test]
    fn winning_games_clear_all_obstacles() {
        let t = cat2_tiling(2);
        let model = t.model.clone();
        let (mut p, _) = derive_params(model.as_ref(), &t, 3, 0.2, 0.01).unwrap();
        // practical scale-down: two turns per step; the opening level
        // follows the same smallness condition at the reduced r
        p.r = 2;
        p.n1_min = 20;
        let n1 = 20;
        let c_log = width_bound_log(model.as_ref(), t.delta(), t.tau(), n1, p.a, p.b, p.r);
        let target = TargetRectangle::from_log_scale(
            model.as_ref(),
            ExactTorusPoint::from_f64s(&[0.0, 0.0]),
            (1.0 - t.tau()) * t.delta() / 2.0,
            n1 + (p.a + p.b) * p.r + p.a,
        );
        assert!((target.c_log - c_log).abs() < 1e-9);
        let cfg = WinningConfig { params: p, steps: 1, n1 };
        for (kind, seed) in [
            (BobKind::Random, 11u64),
            (BobKind::CenterSeeking, 12),
            (BobKind::ObstacleHugging, 13),
        ] {
            let out = run_winning_game(&t, &target, &cfg, kind, seed).unwrap();
            assert!(out.final_disjoint, "{kind:?} final atom meets a component");
            assert!(out.orbit_clear, "{kind:?} orbit enters the target");
            assert!(out.step_residual.iter().all(|&x| x == 0));
        }
    }

    #[test]
    fn component_condition_holds_for_small_widths() {
        let model = preset_cat2().unwrap();
        let target = TargetRectangle::new(ExactTorusPoint::from_f64s(&[0.0, 0.0]), 1e-8);
        assert!(verify_single_component(&model, &target, 0.01, 50, 7));
    }
}
