//! Explicit models and exact unstable-leaf charts.
//!
//! A model is an integer matrix acting on the torus (unimodular and
//! hyperbolic/partially hyperbolic) or an expanding self-map of the circle.
//! The eigen-splitting gives the unstable chart frame; leaf coordinates in
//! that frame carry the adapted metric in which the chart is an isometry.
//! For every shipped preset the unstable frame is orthonormal in the
//! ambient metric as well, so adapted and ambient leaf distances coincide.

use std::sync::Arc;
use std::sync::Mutex;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::exact::{refine_real_root, BigFloat, ExactTorusPoint, FieldElt, NumberField, ROOT_PREC};
use crate::geom::Cell;
use crate::error::Error;
use crate::Result;

// ---------------------------------------------------------------------------
// Integer matrices and the characteristic polynomial
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct IntMatrix {
    pub n: usize,
    /// Row-major entries.
    pub a: Vec<i64>,
}

impl IntMatrix {
    pub fn new(n: usize, a: Vec<i64>) -> Self {
        assert_eq!(a.len(), n * n);
        IntMatrix { n, a }
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n = rows.len();
        let mut a = Vec::with_capacity(n * n);
        for r in rows {
            assert_eq!(r.len(), n);
            a.extend_from_slice(r);
        }
        IntMatrix { n, a }
    }

    pub fn identity(n: usize) -> Self {
        let mut a = vec![0; n * n];
        for i in 0..n {
            a[i * n + i] = 1;
        }
        IntMatrix { n, a }
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.a[i * self.n + j]
    }

    pub fn apply_f64(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) as f64 * x[j]).sum())
            .collect()
    }
}

/// Big-integer square matrix used by the characteristic-polynomial
/// recursion; entries can exceed i64 for powers of larger matrices.
#[derive(Clone, Debug)]
struct BigMatrix {
    n: usize,
    a: Vec<BigInt>,
}

impl BigMatrix {
    fn from_int(m: &IntMatrix) -> Self {
        BigMatrix { n: m.n, a: m.a.iter().map(|&v| BigInt::from(v)).collect() }
    }

    fn identity(n: usize) -> Self {
        let mut a = vec![BigInt::zero(); n * n];
        for i in 0..n {
            a[i * n + i] = BigInt::from(1);
        }
        BigMatrix { n, a }
    }

    fn mul(&self, other: &BigMatrix) -> BigMatrix {
        let n = self.n;
        let mut a = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let v = &self.a[i * n + k];
                if v.is_zero() {
                    continue;
                }
                for j in 0..n {
                    a[i * n + j] += v * &other.a[k * n + j];
                }
            }
        }
        BigMatrix { n, a }
    }

    fn add_diag(&mut self, s: &BigInt) {
        for i in 0..self.n {
            self.a[i * self.n + i] += s;
        }
    }

    fn trace(&self) -> BigInt {
        (0..self.n).map(|i| self.a[i * self.n + i].clone()).sum()
    }
}

/// Characteristic polynomial of an integer matrix by the exact
/// trace recursion, along with the adjugate expansion matrices:
/// `adj(xI - M) = sum_k x^{n-1-k} B_k`.
/// Returns `(low_coeffs a_0..a_{n-1} of monic p, adjugate matrices B_0..B_{n-1})`.
fn charpoly_and_adjugate(m: &IntMatrix) -> (Vec<BigInt>, Vec<BigMatrix>) {
    let n = m.n;
    let mb = BigMatrix::from_int(m);
    let mut bs: Vec<BigMatrix> = Vec::with_capacity(n);
    let mut coeffs = vec![BigInt::zero(); n]; // a_0 .. a_{n-1}
    let mut b = BigMatrix::identity(n);
    for k in 1..=n {
        bs.push(b.clone());
        let mb_b = mb.mul(&b);
        let a_coeff = -mb_b.trace() / BigInt::from(k as i64);
        coeffs[n - k] = a_coeff.clone();
        b = mb_b;
        b.add_diag(&a_coeff);
    }
    // b now equals M*B_{n-1} + a_0 I which must vanish
    debug_assert!(b.a.iter().all(|v| v.is_zero()), "trace recursion must terminate at zero");
    (coeffs, bs)
}

/// All complex roots of a monic polynomial with the given low coefficients,
/// by simultaneous (Durand–Kerner) iteration. Deterministic.
fn poly_roots(low_coeffs: &[BigInt]) -> Vec<Complex64> {
    let n = low_coeffs.len();
    let c: Vec<f64> = low_coeffs.iter().map(|v| v.to_f64().unwrap()).collect();
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(1.0, 0.0);
        for k in (0..n).rev() {
            acc = acc * z + Complex64::new(c[k], 0.0);
        }
        acc
    };
    let bound = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = Complex64::new(0.4, 0.9) / Complex64::new(0.4, 0.9).norm() * 1.0;
    let mut zs: Vec<Complex64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64;
            Complex64::new(th.cos(), th.sin()) * (0.5 * bound) + seed * 0.01
        })
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= zs[i] - zs[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let step = eval(zs[i]) / denom;
            zs[i] -= step;
            max_step = max_step.max(step.norm() / (1.0 + zs[i].norm()));
        }
        if max_step < 1e-14 {
            break;
        }
    }
    zs
}

// ---------------------------------------------------------------------------
// Unstable action blocks
// ---------------------------------------------------------------------------

/// Restriction of the map to one invariant block of the unstable space,
/// expressed in the chart frame.
#[derive(Clone, Debug, PartialEq)]
pub enum Block {
    /// One real eigen-direction; `rate` keeps its sign.
    Real { rate: f64 },
    /// Conjugate pair acting as scaling by `scale` composed with rotation
    /// by `angle` on a two-dimensional block.
    Pair { scale: f64, angle: f64 },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Real { .. } => 1,
            Block::Pair { .. } => 2,
        }
    }

    pub fn modulus(&self) -> f64 {
        match self {
            Block::Real { rate } => rate.abs(),
            Block::Pair { scale, .. } => *scale,
        }
    }
}

// ---------------------------------------------------------------------------
// High-precision frame
// ---------------------------------------------------------------------------

/// Exact eigen data for models whose expanding spectrum is real and simple:
/// refined roots, unit eigenvectors, coordinate covectors and the projector
/// onto the non-expanding subspace. Everything at `ROOT_PREC` bits.
pub struct ExactFrame {
    pub prec: u32,
    /// One root per unstable coordinate (signed eigenvalue).
    pub roots: Vec<BigFloat>,
    /// Ambient components of the unit eigenvectors.
    pub unit_vecs: Vec<Vec<BigFloat>>,
    /// Covectors extracting the coordinate along each unit eigenvector.
    pub covecs: Vec<Vec<BigFloat>>,
    /// Rows of the projector onto the non-expanding invariant subspace.
    pub proj_complement: Vec<Vec<BigFloat>>,
    /// f64 shadows for fast filtering.
    pub unit_vecs_f64: Vec<Vec<f64>>,
    pub covecs_f64: Vec<Vec<f64>>,
    pub proj_complement_f64: Vec<Vec<f64>>,
}

impl ExactFrame {
    /// Unstable coordinates and transversal norm of an ambient difference
    /// vector, f64 path.
    pub fn deviation_f64(&self, diff: &[f64]) -> (Vec<f64>, f64) {
        let u = self.covecs_f64.len();
        let coords: Vec<f64> = (0..u)
            .map(|i| self.covecs_f64[i].iter().zip(diff).map(|(c, d)| c * d).sum())
            .collect();
        let n = diff.len();
        let mut t2 = 0.0;
        for i in 0..n {
            let r: f64 = self.proj_complement_f64[i]
                .iter()
                .zip(diff)
                .map(|(p, d)| p * d)
                .sum();
            t2 += r * r;
        }
        (coords, t2.sqrt())
    }

    /// Same at high precision.
    pub fn deviation_hp(&self, diff: &[BigFloat]) -> (Vec<BigFloat>, BigFloat) {
        let prec = self.prec;
        let u = self.covecs.len();
        let coords: Vec<BigFloat> = (0..u)
            .map(|i| {
                let mut acc = BigFloat::zero();
                for (c, d) in self.covecs[i].iter().zip(diff) {
                    acc = acc.add(&c.mul_round(d, prec));
                }
                acc.round(prec)
            })
            .collect();
        let n = diff.len();
        let mut t2 = BigFloat::zero();
        for i in 0..n {
            let mut r = BigFloat::zero();
            for (p, d) in self.proj_complement[i].iter().zip(diff) {
                r = r.add(&p.mul_round(d, prec));
            }
            t2 = t2.add(&r.mul_round(&r, prec));
        }
        (coords, t2.sqrt(prec))
    }
}

// ---------------------------------------------------------------------------
// Leaf model trait
// ---------------------------------------------------------------------------

/// Abstract interface the tiling/game/strategy/fractal engines run on.
/// Instantiated by integer toral automorphisms and expanding circle maps.
pub trait LeafModel: Send + Sync + 'static {
    fn name(&self) -> &str;
    fn ambient_dim(&self) -> usize;
    fn unstable_dim(&self) -> usize;
    /// Integer matrix of the torus map (1x1 `[d]` for the circle).
    fn int_matrix(&self) -> &IntMatrix;
    fn expansion_min(&self) -> f64;
    fn expansion_max(&self) -> f64;
    fn blocks(&self) -> &[Block];
    fn field(&self) -> &NumberField;
    fn exact_frame(&self) -> Option<&ExactFrame>;
    fn invertible(&self) -> bool;

    fn log_expansion_min(&self) -> f64 {
        self.expansion_min().ln()
    }

    /// log|eigenvalue| per unstable coordinate.
    fn coord_log_moduli(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.unstable_dim());
        for b in self.blocks() {
            match b {
                Block::Real { rate } => v.push(rate.abs().ln()),
                Block::Pair { scale, .. } => {
                    v.push(scale.ln());
                    v.push(scale.ln());
                }
            }
        }
        v
    }

    /// log|det| of the unstable action.
    fn unstable_log_det_abs(&self) -> f64 {
        self.coord_log_moduli().iter().sum()
    }

    /// Apply the unstable action `k` times to picture coordinates
    /// (negative `k` applies the inverse). Magnitudes must stay in f64
    /// range; callers keep `|k|` small.
    fn picture_forward(&self, w: &[f64], k: i32) -> Vec<f64> {
        let mut out = Vec::with_capacity(w.len());
        let mut idx = 0;
        for b in self.blocks() {
            match b {
                Block::Real { rate } => {
                    out.push(w[idx] * rate.powi(k));
                    idx += 1;
                }
                Block::Pair { scale, angle } => {
                    let s = scale.powi(k);
                    let th = angle * k as f64;
                    let (x, y) = (w[idx], w[idx + 1]);
                    out.push(s * (x * th.cos() - y * th.sin()));
                    out.push(s * (x * th.sin() + y * th.cos()));
                    idx += 2;
                }
            }
        }
        out
    }

    /// Image of a cell under `k` applications of the unstable action.
    /// Requires a rotation-free action (diagonal in the chart frame),
    /// which holds for all instantiated models.
    fn scale_cell(&self, cell: &Cell, k: i32) -> Cell {
        let factors: Vec<f64> = self
            .blocks()
            .iter()
            .flat_map(|b| match b {
                Block::Real { rate } => vec![rate.powi(k)],
                Block::Pair { .. } => panic!("cell scaling requires a diagonal unstable action"),
            })
            .collect();
        cell.scale_axes(&factors)
    }

    /// One application of the torus map to an exact point.
    fn forward_torus(&self, x: &ExactTorusPoint) -> ExactTorusPoint {
        let m = self.int_matrix();
        x.forward(&m.a, m.n)
    }

    /// Evaluate a leaf coordinate (ring element) at the coordinate's root,
    /// with precision adapted to the element's coefficient size.
    fn eval_coord_hp(&self, e: &FieldElt, coord: usize) -> BigFloat {
        let frame = self.exact_frame().expect("model has no exact frame");
        let mut bits: u64 = 0;
        for c in &e.c {
            bits = bits.max(c.numer().magnitude().bits() + c.denom().magnitude().bits());
        }
        let prec = (bits as u32 + 256).min(frame.prec);
        assert!(
            bits as u32 + 200 <= frame.prec,
            "leaf coordinate needs more precision than the frame provides"
        );
        self.field().eval(e, &frame.roots[coord], prec)
    }

    fn eval_coord_f64(&self, e: &FieldElt, coord: usize) -> f64 {
        self.eval_coord_hp(e, coord).to_f64()
    }

    /// Ambient high-precision position of `base + sum_i coord_i * v_i`,
    /// reduced mod 1 componentwise.
    fn embed_hp(&self, base: &ExactTorusPoint, coord_vals: &[BigFloat]) -> Vec<BigFloat> {
        let frame = self.exact_frame().expect("model has no exact frame");
        let n = self.ambient_dim();
        let prec = frame.prec;
        (0..n)
            .map(|i| {
                let mut acc = BigFloat::from_rational(&base.coords[i], prec);
                for (t, v) in coord_vals.iter().zip(&frame.unit_vecs) {
                    acc = acc.add(&t.mul_round(&v[i], prec));
                }
                acc.fract_mod1().round(prec)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Toral models
// ---------------------------------------------------------------------------

/// An integer unimodular hyperbolic (or partially hyperbolic) torus map
/// with its eigen-splitting.
pub struct ToralModel {
    name: String,
    matrix: IntMatrix,
    pub eigenvalues: Vec<Complex64>,
    /// Unit basis of the expanding subspace (columns, ambient coords).
    pub unstable_basis: Vec<Vec<f64>>,
    /// Basis of the non-expanding subspace.
    pub complement_basis: Vec<Vec<f64>>,
    pub expansion_min: f64,
    pub expansion_max: f64,
    blocks: Vec<Block>,
    field: NumberField,
    frame: Option<ExactFrame>,
}

impl std::fmt::Debug for ToralModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToralModel")
            .field("name", &self.name)
            .field("matrix", &self.matrix)
            .field("unstable_dim", &self.unstable_basis.len())
            .field("expansion_min", &self.expansion_min)
            .field("expansion_max", &self.expansion_max)
            .finish()
    }
}

const EIG_TOL: f64 = 1e-5;

/// Split an integer matrix into expanding / non-expanding data.
///
/// Errors with `NotUnimodular` when `|det| != 1` and `NotHyperbolic` when
/// no eigenvalue has modulus above one.
pub fn eigen_split(rows: &[Vec<i64>]) -> Result<ToralModel> {
    eigen_split_named(rows, "custom")
}

pub fn eigen_split_named(rows: &[Vec<i64>], name: &str) -> Result<ToralModel> {
    let m = IntMatrix::from_rows(rows);
    let n = m.n;
    let (low_coeffs, adj) = charpoly_and_adjugate(&m);
    let det = {
        // p(0) = a_0, det(M) = (-1)^n a_0
        let a0 = low_coeffs[0].to_i64().unwrap_or(i64::MAX);
        if n % 2 == 0 {
            a0
        } else {
            -a0
        }
    };
    if det.abs() != 1 {
        return Err(Error::NotUnimodular { det });
    }
    let mut roots = poly_roots(&low_coeffs);
    // deterministic order: by modulus, then by real part, then imaginary
    roots.sort_by(|a, b| {
        a.norm()
            .partial_cmp(&b.norm())
            .unwrap()
            .then(a.re.partial_cmp(&b.re).unwrap())
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
    let expanding: Vec<Complex64> = roots.iter().copied().filter(|z| z.norm() > 1.0 + EIG_TOL).collect();
    if expanding.is_empty() {
        return Err(Error::NotHyperbolic);
    }

    // assemble blocks from the expanding roots (conjugates pair up)
    let mut used = vec![false; expanding.len()];
    let mut blocks = Vec::new();
    let mut block_roots: Vec<Complex64> = Vec::new();
    for i in 0..expanding.len() {
        if used[i] {
            continue;
        }
        let z = expanding[i];
        if z.im.abs() < EIG_TOL * (1.0 + z.re.abs()) {
            used[i] = true;
            blocks.push(Block::Real { rate: polish_real_root(&low_coeffs, z.re) });
            block_roots.push(Complex64::new(z.re, 0.0));
        } else {
            // find the conjugate partner
            let mut partner = None;
            for j in i + 1..expanding.len() {
                if !used[j] && (expanding[j] - z.conj()).norm() < 1e-4 * (1.0 + z.norm()) {
                    partner = Some(j);
                    break;
                }
            }
            let j = partner.ok_or_else(|| {
                Error::EigenSolve("unpaired complex expanding eigenvalue".into())
            })?;
            used[i] = true;
            used[j] = true;
            let zz = if z.im > 0.0 { z } else { z.conj() };
            blocks.push(Block::Pair { scale: zz.norm(), angle: zz.im.atan2(zz.re) });
            block_roots.push(zz);
        }
    }
    let u: usize = blocks.iter().map(|b| b.dim()).sum();
    let sigma_min = blocks.iter().map(|b| b.modulus()).fold(f64::INFINITY, f64::min);
    let sigma_max = blocks.iter().map(|b| b.modulus()).fold(0.0f64, f64::max);

    // eigenvectors of the expanding blocks via the adjugate expansion
    let mut unstable_basis: Vec<Vec<f64>> = Vec::new();
    for (b, z) in blocks.iter().zip(&block_roots) {
        match b {
            Block::Real { rate } => {
                let v = real_adjugate_column(&adj, &m, *rate)?;
                unstable_basis.push(v);
            }
            Block::Pair { .. } => {
                let (p, q) = complex_adjugate_column(&adj, &m, *z)?;
                unstable_basis.push(p);
                unstable_basis.push(q);
            }
        }
    }

    // complement basis from the non-expanding roots
    let mut complement_basis: Vec<Vec<f64>> = Vec::new();
    let mut used_c = vec![false; n];
    let others: Vec<Complex64> = roots
        .iter()
        .copied()
        .filter(|z| z.norm() <= 1.0 + EIG_TOL)
        .collect();
    for i in 0..others.len() {
        if used_c[i] {
            continue;
        }
        let z = others[i];
        if z.im.abs() < EIG_TOL * (1.0 + z.re.abs()) {
            used_c[i] = true;
            if let Ok(v) = real_adjugate_column(&adj, &m, z.re) {
                complement_basis.push(v);
            }
        } else {
            for j in i + 1..others.len() {
                if !used_c[j] && (others[j] - z.conj()).norm() < 1e-4 * (1.0 + z.norm()) {
                    used_c[j] = true;
                    break;
                }
            }
            used_c[i] = true;
            if z.im > 0.0 {
                if let Ok((p, q)) = complex_adjugate_column(&adj, &m, z) {
                    complement_basis.push(p);
                    complement_basis.push(q);
                }
            }
        }
    }

    let field = NumberField::new(low_coeffs.clone())?;

    // exact frame only when every expanding block is real
    let all_real = blocks.iter().all(|b| matches!(b, Block::Real { .. }));
    let frame = if all_real {
        Some(build_exact_frame(&low_coeffs, &adj, &m, &blocks)?)
    } else {
        None
    };

    let model = ToralModel {
        name: name.to_string(),
        matrix: m,
        eigenvalues: roots,
        unstable_basis,
        complement_basis,
        expansion_min: sigma_min,
        expansion_max: sigma_max,
        blocks,
        field,
        frame,
    };
    debug_assert_eq!(model.unstable_basis.len(), u);
    model.check_invariants()?;
    Ok(model)
}

fn polish_real_root(low_coeffs: &[BigInt], seed: f64) -> f64 {
    let c: Vec<f64> = low_coeffs.iter().map(|v| v.to_f64().unwrap()).collect();
    let n = c.len();
    let mut x = seed;
    for _ in 0..12 {
        let mut p = 1.0;
        for k in (0..n).rev() {
            p = p * x + c[k];
        }
        let mut d = n as f64;
        for k in (1..n).rev() {
            d = d * x + k as f64 * c[k];
        }
        if d.abs() < 1e-300 {
            break;
        }
        let step = p / d;
        x -= step;
        if step.abs() < 1e-15 * (1.0 + x.abs()) {
            break;
        }
    }
    x
}

/// Real eigenvector as the dominant column of `adj(lambda I - M)`,
/// normalized to unit length with a deterministic sign.
fn real_adjugate_column(adj: &[BigMatrix], m: &IntMatrix, lambda: f64) -> Result<Vec<f64>> {
    let n = m.n;
    let mut cols = vec![vec![0.0f64; n]; n];
    let mut pw = 1.0;
    // adj(xI - M) = sum_k x^{n-1-k} B_k -> evaluate powers from the top
    for k in (0..n).rev() {
        for i in 0..n {
            for j in 0..n {
                cols[j][i] += pw * adj[k].a[i * n + j].to_f64().unwrap();
            }
        }
        pw *= lambda;
    }
    let best = cols
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let na: f64 = a.iter().map(|v| v * v).sum();
            let nb: f64 = b.iter().map(|v| v * v).sum();
            na.partial_cmp(&nb).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let mut v = cols[best].clone();
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-10 {
        return Err(Error::EigenSolve(format!("vanishing adjugate at eigenvalue {lambda}")));
    }
    for x in v.iter_mut() {
        *x /= norm;
    }
    // deterministic sign: first component of significant size positive
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-9) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
    // residual check
    let mv = m.apply_f64(&v);
    let resid: f64 = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b) * (a - lambda * b))
        .sum::<f64>()
        .sqrt();
    if resid > 1e-12 * (1.0 + lambda.abs()) {
        return Err(Error::EigenSolve(format!(
            "eigenvector residual {resid:.3e} exceeds tolerance at eigenvalue {lambda}"
        )));
    }
    Ok(v)
}

/// Real/imaginary parts of a complex eigenvector, jointly scaled so the
/// block action stays a rotation-scaling in this basis.
fn complex_adjugate_column(
    adj: &[BigMatrix],
    m: &IntMatrix,
    z: Complex64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = m.n;
    let mut cols = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    let mut pw = Complex64::new(1.0, 0.0);
    for k in (0..n).rev() {
        for i in 0..n {
            for j in 0..n {
                cols[j][i] += pw * adj[k].a[i * n + j].to_f64().unwrap();
            }
        }
        pw *= z;
    }
    let best = cols
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let na: f64 = a.iter().map(|v| v.norm_sqr()).sum();
            let nb: f64 = b.iter().map(|v| v.norm_sqr()).sum();
            na.partial_cmp(&nb).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap();
    let v = &cols[best];
    let scale: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if scale < 1e-10 {
        return Err(Error::EigenSolve(format!("vanishing adjugate at eigenvalue {z}")));
    }
    let p: Vec<f64> = v.iter().map(|c| c.re / scale).collect();
    let q: Vec<f64> = v.iter().map(|c| c.im / scale).collect();
    Ok((p, q))
}

fn build_exact_frame(
    low_coeffs: &[BigInt],
    adj: &[BigMatrix],
    m: &IntMatrix,
    blocks: &[Block],
) -> Result<ExactFrame> {
    let n = m.n;
    let prec = ROOT_PREC;
    let mut roots = Vec::new();
    let mut unit_vecs = Vec::new();
    let mut covecs = Vec::new();
    for b in blocks {
        let rate = match b {
            Block::Real { rate } => *rate,
            Block::Pair { .. } => unreachable!(),
        };
        let root = refine_real_root(low_coeffs, rate, prec)?;
        // adj(xI - M) evaluated at the refined root
        let mut mat = vec![vec![BigFloat::zero(); n]; n]; // [i][j]
        let mut pw = BigFloat::from_f64(1.0);
        for k in (0..n).rev() {
            for i in 0..n {
                for j in 0..n {
                    let c = BigFloat::from_bigint(adj[k].a[i * n + j].clone());
                    mat[i][j] = mat[i][j].add(&c.mul_round(&pw, prec));
                }
            }
            pw = pw.mul_round(&root, prec);
        }
        // dominant column -> right eigenvector; dominant row -> left
        let col_norm = |j: usize| -> f64 {
            (0..n).map(|i| mat[i][j].to_f64().powi(2)).sum::<f64>()
        };
        let row_norm = |i: usize| -> f64 {
            (0..n).map(|j| mat[i][j].to_f64().powi(2)).sum::<f64>()
        };
        let bc = (0..n)
            .max_by(|&a, &b| col_norm(a).partial_cmp(&col_norm(b)).unwrap())
            .unwrap();
        let br = (0..n)
            .max_by(|&a, &b| row_norm(a).partial_cmp(&row_norm(b)).unwrap())
            .unwrap();
        let v: Vec<BigFloat> = (0..n).map(|i| mat[i][bc].clone()).collect();
        let l: Vec<BigFloat> = (0..n).map(|j| mat[br][j].clone()).collect();
        // norm and biorthogonal scaling
        let mut nrm2 = BigFloat::zero();
        for x in &v {
            nrm2 = nrm2.add(&x.mul_round(x, prec));
        }
        let nrm = nrm2.sqrt(prec);
        let mut lv = BigFloat::zero();
        for (a, b2) in l.iter().zip(&v) {
            lv = lv.add(&a.mul_round(b2, prec));
        }
        if lv.is_zero() {
            return Err(Error::EigenSolve("degenerate left/right eigenvector pairing".into()));
        }
        // unit vector, deterministic sign
        let mut unit: Vec<BigFloat> = v.iter().map(|x| x.div(&nrm, prec)).collect();
        let mut flip = false;
        for x in &unit {
            let f = x.to_f64();
            if f.abs() > 1e-9 {
                flip = f < 0.0;
                break;
            }
        }
        if flip {
            for x in unit.iter_mut() {
                *x = x.neg();
            }
        }
        // covector: c = l * (nrm / (l . v)), then sign matched to the flip
        let factor = nrm.div(&lv, prec);
        let mut cov: Vec<BigFloat> = l.iter().map(|x| x.mul_round(&factor, prec)).collect();
        if flip {
            for x in cov.iter_mut() {
                *x = x.neg();
            }
        }
        roots.push(root);
        unit_vecs.push(unit);
        covecs.push(cov);
    }
    // projector onto the complement: I - sum_t v_t c_t^T
    let mut proj = vec![vec![BigFloat::zero(); n]; n];
    for i in 0..n {
        proj[i][i] = BigFloat::from_f64(1.0);
    }
    for (v, c) in unit_vecs.iter().zip(&covecs) {
        for i in 0..n {
            for j in 0..n {
                proj[i][j] = proj[i][j].sub(&v[i].mul_round(&c[j], prec)).round(prec);
            }
        }
    }
    let unit_vecs_f64: Vec<Vec<f64>> = unit_vecs
        .iter()
        .map(|v| v.iter().map(|x| x.to_f64()).collect())
        .collect();
    let covecs_f64: Vec<Vec<f64>> = covecs
        .iter()
        .map(|v| v.iter().map(|x| x.to_f64()).collect())
        .collect();
    let proj_complement_f64: Vec<Vec<f64>> = proj
        .iter()
        .map(|v| v.iter().map(|x| x.to_f64()).collect())
        .collect();
    Ok(ExactFrame {
        prec,
        roots,
        unit_vecs,
        covecs,
        proj_complement: proj,
        unit_vecs_f64,
        covecs_f64,
        proj_complement_f64,
    })
}

impl ToralModel {
    fn check_invariants(&self) -> Result<()> {
        if !(1.0 < self.expansion_min && self.expansion_min <= self.expansion_max) {
            return Err(Error::InvariantViolated(format!(
                "expansion rates out of order: {}..{}",
                self.expansion_min, self.expansion_max
            )));
        }
        // the action must sandwich every vector between the extreme rates;
        // with diagonal/rotation-scaling blocks this is structural, checked
        // here on random directions
        let u = self.unstable_dim();
        let mut w = vec![0.0; u];
        for trial in 0..8u32 {
            for (i, x) in w.iter_mut().enumerate() {
                *x = ((trial as f64 + 1.3) * (i as f64 + 0.7)).sin();
            }
            let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let lw = self.picture_forward(&w, 1);
            let ln: f64 = lw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let ratio = ln / norm;
            if ratio < self.expansion_min * (1.0 - 1e-9) || ratio > self.expansion_max * (1.0 + 1e-9)
            {
                return Err(Error::InvariantViolated(format!(
                    "expansion sandwich failed: ratio {ratio}"
                )));
            }
        }
        Ok(())
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.matrix
    }
}

impl LeafModel for ToralModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn ambient_dim(&self) -> usize {
        self.matrix.n
    }
    fn unstable_dim(&self) -> usize {
        self.unstable_basis.len()
    }
    fn int_matrix(&self) -> &IntMatrix {
        &self.matrix
    }
    fn expansion_min(&self) -> f64 {
        self.expansion_min
    }
    fn expansion_max(&self) -> f64 {
        self.expansion_max
    }
    fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    fn field(&self) -> &NumberField {
        &self.field
    }
    fn exact_frame(&self) -> Option<&ExactFrame> {
        self.frame.as_ref()
    }
    fn invertible(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Expanding circle maps
// ---------------------------------------------------------------------------

/// The degree-d self-cover `x -> d x mod 1` of the circle. Forward-only.
pub struct CircleExpandingModel {
    pub degree: i64,
    matrix: IntMatrix,
    blocks: Vec<Block>,
    field: NumberField,
    frame: ExactFrame,
}

impl CircleExpandingModel {
    pub fn new(degree: i64) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidParams(format!(
                "circle map degree must be at least 2, got {degree}"
            )));
        }
        let matrix = IntMatrix::new(1, vec![degree]);
        // charpoly x - d
        let field = NumberField::new(vec![BigInt::from(-degree)])?;
        let root = BigFloat::from_f64(degree as f64);
        let one = BigFloat::from_f64(1.0);
        let frame = ExactFrame {
            prec: ROOT_PREC,
            roots: vec![root],
            unit_vecs: vec![vec![one.clone()]],
            covecs: vec![vec![one]],
            proj_complement: vec![vec![BigFloat::zero()]],
            unit_vecs_f64: vec![vec![1.0]],
            covecs_f64: vec![vec![1.0]],
            proj_complement_f64: vec![vec![0.0]],
        };
        Ok(CircleExpandingModel {
            degree,
            matrix,
            blocks: vec![Block::Real { rate: degree as f64 }],
            field,
            frame,
        })
    }
}

impl LeafModel for CircleExpandingModel {
    fn name(&self) -> &str {
        "doubling"
    }
    fn ambient_dim(&self) -> usize {
        1
    }
    fn unstable_dim(&self) -> usize {
        1
    }
    fn int_matrix(&self) -> &IntMatrix {
        &self.matrix
    }
    fn expansion_min(&self) -> f64 {
        self.degree as f64
    }
    fn expansion_max(&self) -> f64 {
        self.degree as f64
    }
    fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    fn field(&self) -> &NumberField {
        &self.field
    }
    fn exact_frame(&self) -> Option<&ExactFrame> {
        Some(&self.frame)
    }
    fn invertible(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Charts and leaf points
// ---------------------------------------------------------------------------

/// Isometric chart of the unstable leaf through a base point: leaf
/// coordinate `w` maps to the torus point `base + B_u w` (mod 1).
pub struct LeafChart<M: LeafModel> {
    pub model: Arc<M>,
    pub base: ExactTorusPoint,
    /// Cached forward orbit of the base, `orbit[k] = M^k base`.
    orbit: Mutex<Vec<ExactTorusPoint>>,
}

impl<M: LeafModel> LeafChart<M> {
    pub fn new(model: Arc<M>, base: ExactTorusPoint) -> Arc<Self> {
        assert_eq!(base.dim(), model.ambient_dim());
        let orbit = Mutex::new(vec![base.clone()]);
        Arc::new(LeafChart { model, base, orbit })
    }

    /// `M^k base`, cached.
    pub fn base_at(&self, k: u32) -> ExactTorusPoint {
        let mut orbit = self.orbit.lock().unwrap();
        while orbit.len() <= k as usize {
            let next = self.model.forward_torus(orbit.last().unwrap());
            orbit.push(next);
        }
        orbit[k as usize].clone()
    }

    /// Torus position of a leaf coordinate, f64 path.
    pub fn torus_position(&self, w: &[f64]) -> Vec<f64> {
        let n = self.model.ambient_dim();
        let frame = self.model.exact_frame().expect("chart requires an exact frame");
        let mut pos = self.base.to_f64s();
        for (t, v) in w.iter().zip(&frame.unit_vecs_f64) {
            for i in 0..n {
                pos[i] += t * v[i];
            }
        }
        pos.iter().map(|x| x.rem_euclid(1.0)).collect()
    }
}

/// A point on an unstable leaf, given by chart coordinates.
pub struct LeafPoint<M: LeafModel> {
    pub chart: Arc<LeafChart<M>>,
    pub coord: Vec<f64>,
}

impl<M: LeafModel> LeafPoint<M> {
    pub fn torus_position(&self) -> Vec<f64> {
        self.chart.torus_position(&self.coord)
    }
}

/// Forward image of a leaf point: the chart moves to the base's image and
/// the coordinate is expanded by the unstable action.
pub fn leaf_forward<M: LeafModel>(p: &LeafPoint<M>, k: u32) -> LeafPoint<M> {
    let model = p.chart.model.clone();
    let new_base = p.chart.base_at(k);
    let chart = LeafChart::new(model, new_base);
    let coord = p.chart.model.picture_forward(&p.coord, k as i32);
    LeafPoint { chart, coord }
}

/// Distance on the torus: minimum over integer translates of the
/// Euclidean distance.
pub fn torus_distance(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut acc = 0.0;
    for (a, b) in p.iter().zip(q) {
        let d = (a - b).rem_euclid(1.0);
        let d = d.min(1.0 - d);
        acc += d * d;
    }
    acc.sqrt()
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

pub fn preset_cat2() -> Result<ToralModel> {
    eigen_split_named(&[vec![2, 1], vec![1, 1]], "cat2")
}

/// Block-diagonal pairing of the 2-torus cat matrix with its square:
/// a four-dimensional model with a non-conformal two-dimensional
/// expanding subspace.
pub fn preset_cat4_nonconformal() -> Result<ToralModel> {
    eigen_split_named(
        &[
            vec![2, 1, 0, 0],
            vec![1, 1, 0, 0],
            vec![0, 0, 5, 3],
            vec![0, 0, 3, 2],
        ],
        "cat4_nonconformal",
    )
}

pub fn preset_doubling() -> Result<CircleExpandingModel> {
    CircleExpandingModel::new(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> f64 {
        // oracle: roots of t^2 - 3t + 1 by the quadratic formula
        (3.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn cat2_split() {
        let m = preset_cat2().unwrap();
        assert_eq!(m.unstable_dim(), 1);
        assert!((m.expansion_min - golden()).abs() < 1e-12);
        assert!((m.expansion_max - golden()).abs() < 1e-12);
        // unit eigenvector satisfies Mv = lambda v to tight tolerance
        let v = &m.unstable_basis[0];
        let mv = m.matrix().apply_f64(v);
        let resid: f64 = mv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - golden() * b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-12);
    }

    #[test]
    fn cat4_split_nonconformal() {
        let m = preset_cat4_nonconformal().unwrap();
        assert_eq!(m.unstable_dim(), 2);
        let lam = golden();
        assert!((m.expansion_min - lam).abs() < 1e-10);
        assert!((m.expansion_max - lam * lam).abs() < 1e-9);
        // the two unstable directions live in complementary blocks, hence
        // are orthonormal in the ambient metric
        let dot: f64 = m.unstable_basis[0]
            .iter()
            .zip(&m.unstable_basis[1])
            .map(|(a, b)| a * b)
            .sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn shear_is_not_hyperbolic() {
        let err = eigen_split(&[vec![1, 1], vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::NotHyperbolic));
    }

    #[test]
    fn non_unimodular_rejected() {
        let err = eigen_split(&[vec![2, 0], vec![0, 1]]).unwrap_err();
        assert!(matches!(err, Error::NotUnimodular { det: 2 }));
    }

    #[test]
    fn leaf_forward_fixed_point_and_scaling() {
        let m = Arc::new(preset_cat2().unwrap());
        let chart = LeafChart::new(m.clone(), ExactTorusPoint::from_f64s(&[0.0, 0.0]));
        let p = LeafPoint { chart: chart.clone(), coord: vec![0.0] };
        let q = leaf_forward(&p, 5);
        assert_eq!(q.coord, vec![0.0]);
        assert_eq!(q.torus_position(), vec![0.0, 0.0]);

        let p1 = LeafPoint { chart, coord: vec![1.0] };
        let q1 = leaf_forward(&p1, 1);
        assert!((q1.coord[0] - golden()).abs() < 1e-12);
    }

    #[test]
    fn block_diag_forward_acts_diagonally() {
        let m = Arc::new(preset_cat4_nonconformal().unwrap());
        let w = vec![1.0, 1.0];
        let lw = m.picture_forward(&w, 1);
        let lam = golden();
        assert!((lw[0] - lam).abs() < 1e-10);
        assert!((lw[1] - lam * lam).abs() < 1e-9);
    }

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_distance(&[0.3, 0.4], &[0.3, 0.4]), 0.0);
        assert!((torus_distance(&[0.0, 0.0], &[0.5, 0.0]) - 0.5).abs() < 1e-15);
        let d = torus_distance(&[0.1, 0.9], &[0.9, 0.1]);
        assert!((d - (0.2f64 * 0.2 + 0.2 * 0.2).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn roundtrip_forward_matches_matrix_orbit() {
        let m = Arc::new(preset_cat2().unwrap());
        // dyadic base point: both routes are exact
        let base = ExactTorusPoint::from_f64s(&[0.375, 0.6015625]);
        let chart = LeafChart::new(m.clone(), base.clone());
        let w = 0.0078125f64;
        let p = LeafPoint { chart, coord: vec![w] };
        for k in [1u32, 7, 23, 50] {
            let fwd = leaf_forward(&p, k);
            let via_leaf = fwd.torus_position();
            // matrix route: exact orbit of the base plus the expanded offset
            let mut bk = base.clone();
            for _ in 0..k {
                bk = m.forward_torus(&bk);
            }
            let frame = m.exact_frame().unwrap();
            let lamk = m.field().mul_x_pow(&m.field().from_f64(w), k as i64);
            let off = m.eval_coord_hp(&lamk, 0);
            let bf = bk.to_f64s();
            let expect: Vec<f64> = (0..2)
                .map(|i| (bf[i] + off.to_f64() * frame.unit_vecs_f64[0][i]).rem_euclid(1.0))
                .collect();
            let d = torus_distance(&via_leaf, &expect);
            assert!(d < 1e-9 * m.expansion_min().powi(k as i32).max(1.0) * 1e-3 + 1e-9,
                "k={k} d={d}");
        }
    }

    #[test]
    fn expansion_sandwich_on_random_vectors() {
        let m = preset_cat4_nonconformal().unwrap();
        let (s1, s2) = (m.expansion_min(), m.expansion_max());
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..50 {
            let w = vec![next(), next()];
            let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            for k in 1..=30i32 {
                let lw = m.picture_forward(&w, k);
                let ln: f64 = lw.iter().map(|x| x * x).sum::<f64>().sqrt();
                let rel = ln / norm;
                assert!(rel >= s1.powi(k) * (1.0 - 1e-9));
                assert!(rel <= s2.powi(k) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn circle_model_basics() {
        let c = preset_doubling().unwrap();
        assert_eq!(c.expansion_min(), 2.0);
        assert!(!c.invertible());
        let x = ExactTorusPoint::from_f64s(&[0.3]);
        let y = c.forward_torus(&x);
        assert!((y.to_f64s()[0] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn circle_degree_one_rejected() {
        assert!(CircleExpandingModel::new(1).is_err());
    }
}
