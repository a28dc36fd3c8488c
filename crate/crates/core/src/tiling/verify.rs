//! Property verification for built tilings: the three local-tiling
//! conditions, the descent/covering/diameter properties used by the games,
//! and the empirical two-stage density floor.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::LeafModel;
use crate::geom::Cell;

use super::{Tiling, Window};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Levels 0..=depth are checked (must be globally built).
    pub depth: u32,
    /// Descent property checked for gaps a_star < m <= msg0_max_m.
    pub msg0_max_m: u32,
    /// Number of sampled open sets for the open-set property.
    pub msg1_samples: u32,
    /// Gaps used by the density check.
    pub nu2_a: u32,
    pub nu2_b: u32,
    /// Full scan (every parent) versus early-exit once the floor is met.
    pub nu2_full: bool,
    pub seed: u64,
}

impl VerifyOptions {
    pub fn standard(depth: u32, a_star: u32) -> Self {
        VerifyOptions {
            depth,
            msg0_max_m: (depth.saturating_sub(1)).min(8).max(a_star + 1),
            msg1_samples: 50,
            nu2_a: a_star + 1,
            nu2_b: a_star + 1,
            nu2_full: true,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    /// Worst slack observed; positive means the property held with room.
    pub margin: f64,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<24} {}  margin={:+.3e}  {}\n",
                c.name,
                if c.pass { "PASS" } else { "FAIL" },
                c.margin,
                c.detail
            ));
        }
        out
    }
}

/// Indices of the window cells fully contained in `image`.
fn contained_indices(w: &Window, image: &Cell, tol: f64) -> Vec<usize> {
    match image {
        Cell::Interval { lo, hi } => {
            let from = w.sites.partition_point(|s| s[0] < lo - tol);
            let mut out = Vec::new();
            for i in from..w.len() {
                if w.sites[i][0] > hi + tol {
                    break;
                }
                if w.cells[i].contained_in(image, tol) {
                    out.push(i);
                }
            }
            out
        }
        Cell::Polygon(_) => (0..w.len())
            .filter(|&i| w.cells[i].contained_in(image, tol))
            .collect(),
    }
}

pub fn verify_properties<M: LeafModel>(t: &Tiling<M>, opts: &VerifyOptions) -> PropertyReport {
    let mut checks = Vec::new();
    let delta = t.delta();
    let tau = t.tau();
    let model = t.model.as_ref();
    let u = model.unstable_dim();
    let depth = opts.depth.min(t.global_depth());

    // ---- condition 1: ball sandwich around the site, every atom --------
    {
        let mut worst = f64::INFINITY;
        let mut failures = 0usize;
        let mut count = 0usize;
        for n in 0..=depth {
            let w = t.global_window(n).unwrap();
            for i in 0..w.len() {
                count += 1;
                let site = &w.sites[i];
                let inner = w.cells[i].boundary_distance(site);
                let inner_margin = inner - (1.0 - tau) * delta / 2.0;
                let outer = match &w.cells[i] {
                    Cell::Interval { lo, hi } => (site[0] - lo).max(hi - site[0]),
                    Cell::Polygon(p) => p
                        .verts
                        .iter()
                        .map(|v| {
                            ((v[0] - site[0]).powi(2) + (v[1] - site[1]).powi(2)).sqrt()
                        })
                        .fold(0.0f64, f64::max),
                };
                let outer_margin = (1.0 + tau) * delta - outer;
                let m = inner_margin.min(outer_margin);
                worst = worst.min(m);
                if m < -1e-12 {
                    failures += 1;
                }
            }
        }
        checks.push(PropertyCheck {
            name: "sandwich".into(),
            pass: failures == 0,
            margin: worst,
            detail: format!("{count} atoms, {failures} violations"),
        });
    }

    // ---- condition 2: pairwise essential disjointness -------------------
    {
        let mut worst = f64::INFINITY;
        let mut failures = 0usize;
        for n in 1..=depth {
            let w = t.global_window(n).unwrap();
            if u == 1 {
                for i in 1..w.len() {
                    let hi0 = match w.cells[i - 1] {
                        Cell::Interval { hi, .. } => hi,
                        _ => unreachable!(),
                    };
                    let lo1 = match w.cells[i] {
                        Cell::Interval { lo, .. } => lo,
                        _ => unreachable!(),
                    };
                    let m = lo1 - hi0;
                    worst = worst.min(m);
                    if m < -1e-12 {
                        failures += 1;
                    }
                }
            } else {
                // neighbors share at most an edge: overlap area must vanish
                for i in 0..w.len() {
                    for j in i + 1..w.len() {
                        let ds: f64 = w.sites[i]
                            .iter()
                            .zip(&w.sites[j])
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        if ds > (4.0 * delta) * (4.0 * delta) {
                            continue;
                        }
                        if w.cells[i].intersects(&w.cells[j], 1e-6 * delta) {
                            failures += 1;
                        }
                    }
                }
                worst = worst.min(0.0);
            }
        }
        checks.push(PropertyCheck {
            name: "disjointness".into(),
            pass: failures == 0,
            margin: worst,
            detail: format!("{failures} overlapping pairs"),
        });
    }

    // ---- condition 3: covering of the domain, atoms meet the domain ----
    {
        let mut worst = f64::INFINITY;
        let mut failures = 0usize;
        for n in 1..=depth {
            let w = t.global_window(n).unwrap();
            let domain = model.scale_cell(t.d0(), n as i32);
            if u == 1 {
                let (dlo, dhi) = domain.bbox();
                // union of closures covers the domain: no gaps, ends reach
                let mut cover_hi = f64::NEG_INFINITY;
                let mut started = false;
                for i in 0..w.len() {
                    let (lo, hi) = match w.cells[i] {
                        Cell::Interval { lo, hi } => (lo, hi),
                        _ => unreachable!(),
                    };
                    if hi < dlo[0] || lo > dhi[0] {
                        failures += 1; // atom fails to meet the domain
                        continue;
                    }
                    if !started {
                        worst = worst.min(dlo[0] - lo + delta); // slack at left end
                        if lo > dlo[0] + 1e-12 {
                            failures += 1;
                        }
                        started = true;
                    } else if lo > cover_hi + 1e-12 {
                        failures += 1;
                        worst = worst.min(cover_hi - lo);
                    }
                    cover_hi = cover_hi.max(hi);
                }
                if cover_hi < dhi[0] - 1e-12 {
                    failures += 1;
                }
                worst = worst.min(cover_hi - dhi[0] + delta);
            } else {
                // sampled covering: every sampled domain point lies in the
                // closure of some cell
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64) << 8);
                let (dlo, dhi) = domain.bbox();
                let mut tested = 0;
                while tested < 200 {
                    let p = [
                        rng.gen_range(dlo[0]..dhi[0]),
                        rng.gen_range(dlo[1]..dhi[1]),
                    ];
                    if !domain.contains(&p, 0.0) {
                        continue;
                    }
                    tested += 1;
                    let hit = w
                        .cells
                        .iter()
                        .any(|c| c.boundary_distance(&p) >= -1e-9 * delta);
                    if !hit {
                        failures += 1;
                    }
                }
                worst = worst.min(0.0);
            }
        }
        checks.push(PropertyCheck {
            name: "covering".into(),
            pass: failures == 0,
            margin: worst,
            detail: format!("{failures} covering defects"),
        });
    }

    // ---- descent: every atom has a child m levels down, m > a_star -----
    {
        let tol = 1e-9 * delta;
        let mut failures = 0usize;
        let mut tested = 0usize;
        for n in 0..=depth {
            for m in (t.a_star() + 1)..=opts.msg0_max_m {
                if n + m > depth {
                    continue;
                }
                let wp = t.global_window(n).unwrap();
                let wc = t.global_window(n + m).unwrap();
                for i in 0..wp.len() {
                    tested += 1;
                    let image = model.scale_cell(&wp.cells[i], m as i32);
                    if contained_indices(wc, &image, tol).is_empty() {
                        failures += 1;
                    }
                }
            }
        }
        checks.push(PropertyCheck {
            name: "descent".into(),
            pass: failures == 0,
            margin: if failures == 0 { 1.0 } else { -(failures as f64) },
            detail: format!("{tested} (atom, gap) pairs"),
        });
    }

    // ---- open sets contain atoms ----------------------------------------
    {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d73_6731);
        let mut ok = 0usize;
        let mut tried = 0usize;
        let sigma = model.log_expansion_min();
        let c_log = (2.0 * (1.0 + tau) * delta).ln();
        'outer: for _ in 0..opts.msg1_samples {
            // an open ball inside the level-zero domain
            let (dlo, dhi) = t.d0().bbox();
            let mut center = vec![0.0; u];
            for k in 0..u {
                center[k] = rng.gen_range(0.35 * dlo[k]..0.35 * dhi[k]);
            }
            let radius = delta * 10f64.powf(rng.gen_range(-1.7f64..-0.7));
            // smallest level whose atoms are smaller than the radius
            let mut n = 0u32;
            while c_log - (n as f64) * sigma >= radius.ln() {
                n += 1;
                if n > depth {
                    continue 'outer;
                }
            }
            tried += 1;
            // nudge off boundaries if needed
            let mut pt = center.clone();
            for _ in 0..5 {
                match t.atom_containing(&pt, n) {
                    Ok(atom) => {
                        // pullback cell sits inside the ball around center
                        let pull = model.scale_cell(&atom.cell, -(n as i32));
                        let (plo, phi) = pull.bbox();
                        let mut inside = true;
                        for k in 0..u {
                            if (plo[k] - center[k]).abs() > radius
                                || (phi[k] - center[k]).abs() > radius
                            {
                                inside = false;
                            }
                        }
                        if inside {
                            ok += 1;
                        }
                        break;
                    }
                    Err(_) => {
                        for x in pt.iter_mut() {
                            *x += 1e-7 * delta * (rng.gen_range(0.0f64..1.0) - 0.5);
                        }
                    }
                }
            }
        }
        checks.push(PropertyCheck {
            name: "open-sets".into(),
            pass: ok == tried && (tried > 0 || opts.msg1_samples == 0),
            margin: (ok as f64) - (tried as f64),
            detail: format!("{ok}/{tried} sampled open sets contained an atom"),
        });
    }

    // ---- diameter decay at exact constants ------------------------------
    {
        let sigma = model.log_expansion_min();
        let c_log = (2.0 * (1.0 + tau) * delta).ln();
        let mut worst = f64::INFINITY;
        let mut failures = 0usize;
        for n in 0..=depth {
            let w = t.global_window(n).unwrap();
            for i in 0..w.len() {
                let d = w.atom(i).pullback_diam_log(model);
                let bound = c_log - (n as f64) * sigma;
                let m = bound - d;
                worst = worst.min(m);
                if m < -1e-12 {
                    failures += 1;
                }
            }
        }
        checks.push(PropertyCheck {
            name: "diameter-decay".into(),
            pass: failures == 0,
            margin: worst,
            detail: format!("{failures} atoms above the bound (log slack)"),
        });
    }

    // ---- positive volumes ------------------------------------------------
    {
        let mut min_vol = f64::INFINITY;
        for n in 0..=depth {
            let w = t.global_window(n).unwrap();
            for c in &w.cells {
                min_vol = min_vol.min(c.volume());
            }
        }
        checks.push(PropertyCheck {
            name: "positive-volume".into(),
            pass: min_vol > 0.0,
            margin: min_vol,
            detail: format!("smallest cell volume {min_vol:.3e}"),
        });
    }

    // ---- two-stage density floor ----------------------------------------
    {
        let a = opts.nu2_a;
        let b = opts.nu2_b;
        let floor = t.density_floor(a);
        match floor {
            Err(e) => checks.push(PropertyCheck {
                name: "density-floor".into(),
                pass: false,
                margin: f64::NEG_INFINITY,
                detail: format!("floor computation failed: {e}"),
            }),
            Ok(floor) => {
                let tol = 1e-9 * delta;
                let det_log = model.unstable_log_det_abs();
                let scale = (-(det_log) * (a + b) as f64).exp();
                let mut worst_ratio = f64::INFINITY;
                let mut tested = 0usize;
                let mut failures = 0usize;
                let top = if depth >= a + b { depth - a - b } else { 0 };
                'nu2: for n in 0..=top {
                    if n + a + b > depth {
                        break;
                    }
                    let wp = t.global_window(n).unwrap();
                    let wb = t.global_window(n + b).unwrap();
                    let wa = t.global_window(n + a + b).unwrap();
                    for i in 0..wp.len() {
                        tested += 1;
                        let vol_parent = wp.cells[i].volume();
                        let image_b = model.scale_cell(&wp.cells[i], b as i32);
                        let kids = contained_indices(wb, &image_b, tol);
                        let mut sum = 0.0f64;
                        let mut complete = true;
                        for &j in &kids {
                            let image_a = model.scale_cell(&wb.cells[j], a as i32);
                            let gkids = contained_indices(wa, &image_a, tol);
                            let min_vol = gkids
                                .iter()
                                .map(|&g| wa.cells[g].volume())
                                .fold(f64::INFINITY, f64::min);
                            if min_vol.is_finite() {
                                sum += min_vol;
                            } else {
                                // a child with no grandchild would break the
                                // descent property; surfaced there
                                complete = false;
                            }
                            if !opts.nu2_full && sum * scale / vol_parent >= floor {
                                break;
                            }
                        }
                        let ratio = sum * scale / vol_parent;
                        worst_ratio = worst_ratio.min(ratio);
                        if ratio < floor || !complete {
                            failures += 1;
                            if !opts.nu2_full {
                                break 'nu2;
                            }
                        }
                    }
                }
                checks.push(PropertyCheck {
                    name: "density-floor".into(),
                    pass: failures == 0 && (tested > 0 || depth < a + b),
                    margin: worst_ratio - floor,
                    detail: format!(
                        "{tested} parents, worst ratio {worst_ratio:.5}, floor {floor:.6}"
                    ),
                });
            }
        }
    }

    PropertyReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::preset_cat2;
    use crate::exact::ExactTorusPoint;
    use crate::tiling::TilingParams;
    use std::sync::Arc;

    #[test]
    fn small_cat2_tiling_satisfies_all_properties() {
        let model = Arc::new(preset_cat2().unwrap());
        let t = Tiling::build(
            model,
            ExactTorusPoint::from_f64s(&[0.0, 0.0]),
            TilingParams::default(),
            6,
        )
        .unwrap();
        let opts = VerifyOptions::standard(6, t.a_star());
        let report = verify_properties(&t, &opts);
        assert!(report.all_pass(), "{}", report.render());
    }

    #[test]
    fn depth_zero_is_vacuous_but_valid() {
        let model = Arc::new(preset_cat2().unwrap());
        let t = Tiling::build(
            model,
            ExactTorusPoint::from_f64s(&[0.0, 0.0]),
            TilingParams::default(),
            0,
        )
        .unwrap();
        let mut opts = VerifyOptions::standard(0, t.a_star());
        opts.msg1_samples = 0;
        let report = verify_properties(&t, &opts);
        // diameter bound at level zero: diam(D0) = delta <= 2(1+tau)delta
        assert!(report.all_pass(), "{}", report.render());
    }
}
