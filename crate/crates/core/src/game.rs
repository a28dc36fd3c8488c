//! Referees and transcripts for the two nested games.
//!
//! The classic game nests balls with radii scaled by alpha and beta; the
//! modified game nests tiling atoms with levels advanced by the integer
//! gaps a and b. Strategies are pure functions from the transcript so far
//! (plus, in the modified game, the referee-enumerated legal children) to
//! a move; all validation lives in the referee, so a strategy cannot
//! corrupt the game state. Transcripts replay deterministically.

use crate::dynamics::LeafModel;
use crate::error::Error;
use crate::exact::FieldElt;
use crate::tiling::{Atom, ChildSet, Tiling};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Player {
    Bob,
    Alice,
}

impl Player {
    pub fn name(&self) -> &'static str {
        match self {
            Player::Bob => "bob",
            Player::Alice => "alice",
        }
    }
}

// ---------------------------------------------------------------------------
// Classic game
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn contains_ball(&self, other: &Ball, tol: f64) -> bool {
        let d2: f64 = self
            .center
            .iter()
            .zip(&other.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        d2.sqrt() <= self.radius - other.radius + tol
    }
}

#[derive(Clone, Debug)]
pub struct ClassicMove {
    pub player: Player,
    pub ball: Ball,
}

#[derive(Clone, Debug)]
pub struct ClassicTranscript {
    pub alpha: f64,
    pub beta: f64,
    pub moves: Vec<ClassicMove>,
}

impl ClassicTranscript {
    pub fn current(&self) -> &Ball {
        &self.moves.last().expect("non-empty transcript").ball
    }
}

/// Referee for the ball game: Bob opens, players alternate, radii follow
/// the exact recurrence and every ball nests in the previous one.
pub fn classic_play(
    alice: &mut dyn FnMut(&ClassicTranscript) -> Ball,
    bob: &mut dyn FnMut(&ClassicTranscript) -> Ball,
    alpha: f64,
    beta: f64,
    start: Ball,
    rounds: usize,
) -> Result<ClassicTranscript> {
    if !(alpha > 0.0 && alpha < 1.0 && beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParams(format!(
            "alpha {alpha} and beta {beta} must lie in (0,1)"
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidParams("rounds must be at least 1".into()));
    }
    let mut t = ClassicTranscript {
        alpha,
        beta,
        moves: vec![ClassicMove { player: Player::Bob, ball: start }],
    };
    for k in 1..=rounds {
        if k > 1 {
            let prev = t.current().clone();
            let ball = bob(&t);
            validate_classic(&prev, &ball, beta, Player::Bob, t.moves.len())?;
            t.moves.push(ClassicMove { player: Player::Bob, ball });
        }
        let prev = t.current().clone();
        let ball = alice(&t);
        validate_classic(&prev, &ball, alpha, Player::Alice, t.moves.len())?;
        t.moves.push(ClassicMove { player: Player::Alice, ball });
    }
    Ok(t)
}

fn validate_classic(
    prev: &Ball,
    ball: &Ball,
    factor: f64,
    player: Player,
    turn: usize,
) -> Result<()> {
    let want = factor * prev.radius;
    if (ball.radius - want).abs() > 1e-12 * want {
        return Err(Error::IllegalMove {
            player: player.name(),
            turn,
            reason: format!("radius {} instead of {}", ball.radius, want),
        });
    }
    if !prev.contains_ball(ball, 1e-12 * prev.radius) {
        return Err(Error::IllegalMove {
            player: player.name(),
            turn,
            reason: "ball not contained in the previous one".into(),
        });
    }
    Ok(())
}

/// Center of the final ball once its diameter is below tolerance.
pub fn classic_limit_point(t: &ClassicTranscript, tol: f64) -> Result<Vec<f64>> {
    let b = t.current();
    if 2.0 * b.radius >= tol {
        return Err(Error::NotConverged {
            diam_log: (2.0 * b.radius).ln(),
            tol_log: tol.ln(),
        });
    }
    Ok(b.center.clone())
}

// ---------------------------------------------------------------------------
// Modified game
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct ModifiedMove {
    pub player: Player,
    pub atom: Atom,
}

#[derive(Clone, Debug)]
pub struct ModifiedTranscript {
    pub a: u32,
    pub b: u32,
    /// Level-zero leaf coordinate around which the opening atom was built.
    pub opening_coord: Vec<f64>,
    pub moves: Vec<ModifiedMove>,
}

impl ModifiedTranscript {
    pub fn current(&self) -> &Atom {
        &self.moves.last().expect("non-empty transcript").atom
    }

    /// Alice's k-th move sits at level n1 + k a + (k-1) b, Bob's k-th at
    /// n1 + (k-1)(a+b).
    pub fn level_arithmetic_ok(&self) -> bool {
        let n1 = self.moves[0].atom.level;
        let (a, b) = (self.a, self.b);
        let mut alice_k = 0u32;
        for (i, m) in self.moves.iter().enumerate() {
            let expect = match m.player {
                Player::Bob => {
                    if i == 0 {
                        n1
                    } else {
                        n1 + alice_k * (a + b)
                    }
                }
                Player::Alice => {
                    alice_k += 1;
                    n1 + alice_k * a + (alice_k - 1) * b
                }
            };
            if m.atom.level != expect {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug)]
pub struct GamePolicy {
    /// Build windows past the globally built depth on demand.
    pub auto_extend: bool,
}

impl Default for GamePolicy {
    fn default() -> Self {
        GamePolicy { auto_extend: true }
    }
}

/// A strategy sees the transcript so far and the referee-enumerated legal
/// children, and returns its move.
pub type AtomStrategy<'s, M> = dyn FnMut(&ModifiedTranscript, &ChildSet, &Tiling<M>) -> Atom + 's;

/// Referee for the tiling game. `start` is Bob's opening atom; one round
/// is one Bob move (except the first, given by `start`) plus one Alice
/// move.
#[allow(clippy::too_many_arguments)]
pub fn modified_play<M: LeafModel>(
    tiling: &Tiling<M>,
    alice: &mut AtomStrategy<'_, M>,
    bob: &mut AtomStrategy<'_, M>,
    a: u32,
    b: u32,
    start: Atom,
    opening_coord: Vec<f64>,
    rounds: usize,
    policy: &GamePolicy,
) -> Result<ModifiedTranscript> {
    if a <= tiling.a_star() || b <= tiling.a_star() {
        return Err(Error::InvalidParams(format!(
            "gaps a={a}, b={b} must exceed a_star={}",
            tiling.a_star()
        )));
    }
    if rounds == 0 {
        return Err(Error::InvalidParams("rounds must be at least 1".into()));
    }
    let mut t = ModifiedTranscript {
        a,
        b,
        opening_coord,
        moves: vec![ModifiedMove { player: Player::Bob, atom: start }],
    };
    for k in 1..=rounds {
        if k > 1 {
            step(tiling, &mut t, bob, Player::Bob, b, policy)?;
        }
        step(tiling, &mut t, alice, Player::Alice, a, policy)?;
    }
    Ok(t)
}

fn step<M: LeafModel>(
    tiling: &Tiling<M>,
    t: &mut ModifiedTranscript,
    strat: &mut AtomStrategy<'_, M>,
    player: Player,
    gap: u32,
    policy: &GamePolicy,
) -> Result<()> {
    let current = t.current().clone();
    if !policy.auto_extend && current.level + gap > tiling.global_depth() {
        return Err(Error::TilingDepthExceeded {
            needed: current.level + gap,
            available: tiling.global_depth(),
        });
    }
    let children = tiling.enumerate_within(&current, gap)?;
    if children.contained.is_empty() {
        return Err(Error::NoChild { level: current.level, m: gap });
    }
    let atom = strat(t, &children, tiling);
    validate_modified(tiling, &current, &children, &atom, gap, player, t.moves.len())?;
    t.moves.push(ModifiedMove { player, atom });
    Ok(())
}

fn validate_modified<M: LeafModel>(
    tiling: &Tiling<M>,
    current: &Atom,
    children: &ChildSet,
    atom: &Atom,
    gap: u32,
    player: Player,
    turn: usize,
) -> Result<()> {
    if atom.level != current.level + gap {
        return Err(Error::IllegalMove {
            player: player.name(),
            turn,
            reason: format!("level {} instead of {}", atom.level, current.level + gap),
        });
    }
    let known = children
        .contained
        .iter()
        .any(|&i| children.window.ids[i] == atom.id && children.window.sites[i] == atom.site);
    if !known {
        return Err(Error::IllegalMove {
            player: player.name(),
            turn,
            reason: format!("atom id {} is not a legal contained child", atom.id),
        });
    }
    let image = tiling.parent_image(current, gap);
    if !atom.cell.contained_in(&image, 1e-9 * tiling.delta()) {
        return Err(Error::IllegalMove {
            player: player.name(),
            turn,
            reason: "cell escapes the previous atom".into(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Limit points
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LimitPoint {
    /// Level-zero leaf coordinates (f64 view of the exact value).
    pub leaf_coord: Vec<f64>,
    /// Exact ring coordinates.
    pub exact: Vec<FieldElt>,
    /// log-diameter of the final atom's pullback.
    pub diam_log: f64,
}

/// Centroid of the final atom's pullback; within `tol` of the game's
/// true intersection point when the final diameter is below `tol`.
pub fn limit_point<M: LeafModel>(
    tiling: &Tiling<M>,
    t: &ModifiedTranscript,
    tol: f64,
) -> Result<LimitPoint> {
    let atom = t.current();
    let diam_log = atom.pullback_diam_log(tiling.model.as_ref());
    if diam_log >= tol.ln() {
        return Err(Error::NotConverged { diam_log, tol_log: tol.ln() });
    }
    Ok(atom_center(tiling, atom))
}

/// Exact pullback centroid of an atom.
pub fn atom_center<M: LeafModel>(tiling: &Tiling<M>, atom: &Atom) -> LimitPoint {
    let model = tiling.model.as_ref();
    let field = model.field();
    let centroid = atom.cell.centroid();
    let exact: Vec<FieldElt> = centroid
        .iter()
        .zip(&atom.origin.leaf)
        .map(|(&c, o)| {
            let off = field.scale(
                &atom.origin.x_neg_level,
                &num_rational::BigRational::from_float(c).expect("finite"),
            );
            field.add(o, &off)
        })
        .collect();
    let leaf_coord: Vec<f64> = exact
        .iter()
        .enumerate()
        .map(|(i, e)| model.eval_coord_f64(e, i))
        .collect();
    LimitPoint {
        leaf_coord,
        exact,
        diam_log: atom.pullback_diam_log(model),
    }
}

// ---------------------------------------------------------------------------
// Replay and text transcripts
// ---------------------------------------------------------------------------

/// Compact move record used for replay and the text format.
#[derive(Clone, Debug, PartialEq)]
pub struct MoveRecord {
    pub player: Player,
    pub level: u32,
    pub id: u64,
}

pub fn records_of(t: &ModifiedTranscript) -> Vec<MoveRecord> {
    t.moves
        .iter()
        .map(|m| MoveRecord { player: m.player, level: m.atom.level, id: m.atom.id })
        .collect()
}

/// Re-derive every window along the recorded path and check that each
/// recorded move names a legal contained child. Returns the rebuilt
/// transcript; any mismatch is an illegal-move error.
pub fn replay<M: LeafModel>(
    tiling: &Tiling<M>,
    a: u32,
    b: u32,
    opening_coord: &[f64],
    records: &[MoveRecord],
) -> Result<ModifiedTranscript> {
    if records.is_empty() {
        return Err(Error::InvalidParams("empty transcript".into()));
    }
    let (w, idx) = tiling.window_at_coord(opening_coord, records[0].level)?;
    let opening = w.atom(idx);
    if opening.id != records[0].id {
        return Err(Error::IllegalMove {
            player: "bob",
            turn: 0,
            reason: format!(
                "opening atom id {} does not match recorded {}",
                opening.id, records[0].id
            ),
        });
    }
    let mut t = ModifiedTranscript {
        a,
        b,
        opening_coord: opening_coord.to_vec(),
        moves: vec![ModifiedMove { player: Player::Bob, atom: opening }],
    };
    for (turn, rec) in records.iter().enumerate().skip(1) {
        let current = t.current().clone();
        let gap = rec.level.checked_sub(current.level).ok_or(Error::IllegalMove {
            player: rec.player.name(),
            turn,
            reason: "level decreased".into(),
        })?;
        let expected_gap = match rec.player {
            Player::Alice => a,
            Player::Bob => b,
        };
        if gap != expected_gap {
            return Err(Error::IllegalMove {
                player: rec.player.name(),
                turn,
                reason: format!("level gap {gap}, expected {expected_gap}"),
            });
        }
        let children = tiling.enumerate_within(&current, gap)?;
        let found = children
            .contained
            .iter()
            .find(|&&i| children.window.ids[i] == rec.id)
            .copied();
        match found {
            Some(i) => {
                let atom = children.window.atom(i);
                t.moves.push(ModifiedMove { player: rec.player, atom });
            }
            None => {
                return Err(Error::IllegalMove {
                    player: rec.player.name(),
                    turn,
                    reason: format!("recorded atom id {} is not a legal child", rec.id),
                });
            }
        }
    }
    Ok(t)
}

/// One-line-per-move text export.
pub fn render_modified(t: &ModifiedTranscript) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "modified-game a={} b={} opening={}\n",
        t.a,
        t.b,
        t.opening_coord
            .iter()
            .map(|c| format!("{c:.17e}"))
            .collect::<Vec<_>>()
            .join(",")
    ));
    for (i, m) in t.moves.iter().enumerate() {
        let cell = match &m.atom.cell {
            crate::geom::Cell::Interval { lo, hi } => format!("lo={lo:.17e} hi={hi:.17e}"),
            crate::geom::Cell::Polygon(p) => format!("verts={}", p.verts.len()),
        };
        out.push_str(&format!(
            "turn={} player={} level={} id={} site={} {}\n",
            i,
            m.player.name(),
            m.atom.level,
            m.atom.id,
            m.atom
                .site
                .iter()
                .map(|c| format!("{c:.17e}"))
                .collect::<Vec<_>>()
                .join(","),
            cell
        ));
    }
    out
}

/// Parse the text export back into replayable records.
pub fn parse_modified(text: &str) -> Result<(u32, u32, Vec<f64>, Vec<MoveRecord>)> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::InvalidParams("empty transcript".into()))?;
    let mut a = None;
    let mut b = None;
    let mut opening = None;
    for tok in head.split_whitespace() {
        if let Some(v) = tok.strip_prefix("a=") {
            a = v.parse::<u32>().ok();
        } else if let Some(v) = tok.strip_prefix("b=") {
            b = v.parse::<u32>().ok();
        } else if let Some(v) = tok.strip_prefix("opening=") {
            opening = v
                .split(',')
                .map(|c| c.parse::<f64>().ok())
                .collect::<Option<Vec<f64>>>();
        }
    }
    let (a, b, opening) = match (a, b, opening) {
        (Some(a), Some(b), Some(o)) => (a, b, o),
        _ => return Err(Error::InvalidParams("malformed transcript header".into())),
    };
    let mut records = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut player = None;
        let mut level = None;
        let mut id = None;
        for tok in line.split_whitespace() {
            if let Some(v) = tok.strip_prefix("player=") {
                player = match v {
                    "bob" => Some(Player::Bob),
                    "alice" => Some(Player::Alice),
                    _ => None,
                };
            } else if let Some(v) = tok.strip_prefix("level=") {
                level = v.parse::<u32>().ok();
            } else if let Some(v) = tok.strip_prefix("id=") {
                id = v.parse::<u64>().ok();
            }
        }
        match (player, level, id) {
            (Some(p), Some(l), Some(i)) => records.push(MoveRecord { player: p, level: l, id: i }),
            _ => return Err(Error::InvalidParams(format!("malformed move line: {line}"))),
        }
    }
    Ok((a, b, opening, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::preset_cat2;
    use crate::exact::ExactTorusPoint;
    use crate::tiling::{deepest_inside, TilingParams};
    use std::sync::Arc;

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

    fn recenter_strategy(factor: f64) -> impl FnMut(&ClassicTranscript) -> Ball {
        move |t: &ClassicTranscript| {
            let prev = t.current();
            Ball { center: prev.center.clone(), radius: factor * prev.radius }
        }
    }

    #[test]
    fn classic_radius_recurrence() {
        let mut alice = recenter_strategy(0.5);
        let mut bob = recenter_strategy(0.5);
        let start = Ball { center: vec![0.25, 0.75], radius: 1.0 };
        let t = classic_play(&mut alice, &mut bob, 0.5, 0.5, start, 4).unwrap();
        assert_eq!(t.moves.len(), 8);
        // Bob's k-th ball has radius r1 (alpha beta)^{k-1}
        let bob_balls: Vec<f64> = t
            .moves
            .iter()
            .filter(|m| m.player == Player::Bob)
            .map(|m| m.ball.radius)
            .collect();
        assert!((bob_balls[3] - 0.25f64.powi(3)).abs() < 1e-15);
        // Alice's radius is always alpha times the preceding one
        for w in t.moves.windows(2) {
            if w[1].player == Player::Alice {
                assert!((w[1].ball.radius - 0.5 * w[0].ball.radius).abs() < 1e-15);
            }
        }
        let lp = classic_limit_point(&t, 1e-1).unwrap();
        assert_eq!(lp, vec![0.25, 0.75]);
        assert!(classic_limit_point(&t, 1e-6).is_err());
    }

    #[test]
    fn classic_rejects_wrong_radius() {
        let mut alice = recenter_strategy(0.5);
        let mut bob = recenter_strategy(0.4); // wrong: must be beta = 0.5
        let start = Ball { center: vec![0.0], radius: 1.0 };
        let err = classic_play(&mut alice, &mut bob, 0.5, 0.5, start, 3).unwrap_err();
        assert!(matches!(err, Error::IllegalMove { player: "bob", .. }));
    }

    fn neutral<M: crate::dynamics::LeafModel>(
    ) -> impl FnMut(&ModifiedTranscript, &ChildSet, &Tiling<M>) -> Atom {
        |t: &ModifiedTranscript, cs: &ChildSet, tl: &Tiling<M>| {
            let parent = t.current();
            let image = tl.parent_image(parent, cs.window.level - parent.level);
            let i = deepest_inside(cs, &image).expect("children exist");
            cs.window.atom(i)
        }
    }

    #[test]
    fn modified_game_levels_and_nesting() {
        let t = cat2_tiling(3);
        let (w, idx) = t.window_at_coord(&[0.004], 3).unwrap();
        let start = w.atom(idx);
        let mut alice = neutral();
        let mut bob = neutral();
        let tr = modified_play(
            &t,
            &mut alice,
            &mut bob,
            3,
            3,
            start,
            vec![0.004],
            6,
            &GamePolicy::default(),
        )
        .unwrap();
        assert!(tr.level_arithmetic_ok());
        assert_eq!(tr.current().level, 3 + 6 * 3 + 5 * 3);
        // final diameter obeys the decay bound at exact constants
        let model = t.model.as_ref();
        let bound = (2.0 * (1.0 + t.tau()) * t.delta()).ln()
            - tr.current().level as f64 * model.log_expansion_min();
        assert!(tr.current().pullback_diam_log(model) <= bound + 1e-9);
        // limit point: converges at a loose tolerance, not at an absurd one
        let lp = limit_point(&t, &tr, 1e-3).unwrap();
        assert_eq!(lp.leaf_coord.len(), 1);
        assert!(limit_point(&t, &tr, 1e-30).is_err());
    }

    #[test]
    fn modified_rejects_foreign_atom() {
        let t = cat2_tiling(3);
        let (w, idx) = t.window_at_coord(&[0.004], 3).unwrap();
        let start = w.atom(idx);
        let foreign = start.clone();
        let mut alice = move |_t: &ModifiedTranscript,
                              _cs: &ChildSet,
                              _tl: &Tiling<crate::dynamics::ToralModel>| {
            foreign.clone() // wrong level, not a child
        };
        let mut bob = neutral();
        let err = modified_play(
            &t,
            &mut alice,
            &mut bob,
            3,
            3,
            start,
            vec![0.004],
            2,
            &GamePolicy::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::IllegalMove { player: "alice", .. }));
    }

    #[test]
    fn depth_guard_without_extension() {
        let t = cat2_tiling(3);
        let (w, idx) = t.window_at_coord(&[0.004], 3).unwrap();
        let start = w.atom(idx);
        let mut alice = neutral();
        let mut bob = neutral();
        let err = modified_play(
            &t,
            &mut alice,
            &mut bob,
            3,
            3,
            start,
            vec![0.004],
            2,
            &GamePolicy { auto_extend: false },
        )
        .unwrap_err();
        assert!(matches!(err, Error::TilingDepthExceeded { .. }));
    }

    #[test]
    fn transcripts_replay_identically() {
        let t = cat2_tiling(2);
        let (w, idx) = t.window_at_coord(&[-0.0078125], 4).unwrap();
        let start = w.atom(idx);
        let mut alice = neutral();
        let mut bob = neutral();
        let tr = modified_play(
            &t,
            &mut alice,
            &mut bob,
            3,
            4,
            start,
            vec![-0.0078125],
            4,
            &GamePolicy::default(),
        )
        .unwrap();
        let text = render_modified(&tr);
        let (a, b, opening, records) = parse_modified(&text).unwrap();
        let rt = replay(&t, a, b, &opening, &records).unwrap();
        assert_eq!(records_of(&rt), records_of(&tr));
        for (x, y) in rt.moves.iter().zip(&tr.moves) {
            assert_eq!(x.atom.site, y.atom.site);
            assert_eq!(x.atom.cell, y.atom.cell);
        }
        // tampered record fails replay
        let mut bad = records.clone();
        bad[2].id ^= 2;
        assert!(replay(&t, a, b, &opening, &bad).is_err());
    }

    #[test]
    fn winning_sets_are_reachable_from_any_opening() {
        // openings anywhere in the level-zero domain admit complete games
        // whose limit point stays inside the opening atom
        let t = cat2_tiling(2);
        let mut rng_state = 12345u64;
        let mut next01 = move || {
            rng_state =
                rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut completed = 0;
        for _ in 0..100 {
            let coord = 0.8 * t.delta() * next01();
            let (w, idx) = match t.window_at_coord(&[coord], 5) {
                Ok(x) => x,
                Err(_) => continue, // boundary hit: skip this opening
            };
            let start = w.atom(idx);
            let mut alice = neutral();
            let mut bob = neutral();
            let tr = modified_play(
                &t,
                &mut alice,
                &mut bob,
                3,
                3,
                start.clone(),
                vec![coord],
                3,
                &GamePolicy::default(),
            )
            .unwrap();
            let lp = limit_point(&t, &tr, 1e-2).unwrap();
            // the limit point lies in the opening atom's pullback
            let pull = t.model.scale_cell(&start.cell, -(start.level as i32));
            let shifted = lp.leaf_coord[0] - coord; // same origin: opening coord
            assert!(pull.contains(&[shifted], 1e-9));
            completed += 1;
        }
        assert!(completed >= 95, "only {completed}/100 openings completed");
    }
}
