//! Column jumps: trigger detection, classification, rates and state updates.
//!
//! For a horizontally adjacent pair `A = (x, y)`, `B = (x+1, y)`:
//!
//! * a right trigger is `V[x][y] = 1, H[x][y] = 0, V[x+1][y] = 0`;
//! * a left trigger is `V[x][y] = 0, H[x][y] = 1, V[x+1][y] = 1`.
//!
//! A right jump moves the run of vertical arrows that starts at `A` one
//! column to the right, up to the first vertex `C` above `A` that is not of
//! type `Vert`. A left jump moves the run of horizontal-crossing rows above
//! `A` one column to the left, up to the first vertex `C` that is not of
//! type `Horiz`. Scans go upward for both directions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{State, VertexType};
use crate::weights::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Right,
    Left,
}

impl Direction {
    pub fn letter(self) -> &'static str {
        match self {
            Direction::Right => "R",
            Direction::Left => "L",
        }
    }

    pub fn reverse(self) -> Self {
        match self {
            Direction::Right => Direction::Left,
            Direction::Left => Direction::Right,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Right => "right",
            Direction::Left => "left",
        })
    }
}

/// A jump opportunity at the pair `(x, y)`, `(x+1, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trigger {
    pub x: usize,
    pub y: usize,
    pub dir: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JumpKind {
    R1,
    R2,
    R3,
    R4,
    L1,
    L2,
    L3,
    L4,
}

impl JumpKind {
    pub const ALL: [JumpKind; 8] = [
        JumpKind::R1,
        JumpKind::R2,
        JumpKind::R3,
        JumpKind::R4,
        JumpKind::L1,
        JumpKind::L2,
        JumpKind::L3,
        JumpKind::L4,
    ];

    /// Position in [`JumpKind::ALL`].
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// 1..=4 within its direction.
    pub fn number(self) -> u8 {
        (self.index() % 4) as u8 + 1
    }

    pub fn direction(self) -> Direction {
        if self.index() < 4 {
            Direction::Right
        } else {
            Direction::Left
        }
    }

    /// The kind of the jump that undoes this one (`Ri <-> Li`).
    pub fn reverse(self) -> Self {
        Self::ALL[(self.index() + 4) % 8]
    }

    /// Types of `(A, B)` before the jump.
    pub fn pair(self) -> (VertexType, VertexType) {
        use VertexType::*;
        match self {
            JumpKind::R1 => (CornerWN, Empty),
            JumpKind::R2 => (Vert, Empty),
            JumpKind::R3 => (CornerWN, CornerSE),
            JumpKind::R4 => (Vert, CornerSE),
            JumpKind::L1 => (Horiz, CornerWN),
            JumpKind::L2 => (CornerSE, CornerWN),
            JumpKind::L3 => (Horiz, Cross),
            JumpKind::L4 => (CornerSE, Cross),
        }
    }

    pub fn from_pair(dir: Direction, a: VertexType, b: VertexType) -> Option<Self> {
        let candidates = match dir {
            Direction::Right => &Self::ALL[..4],
            Direction::Left => &Self::ALL[4..],
        };
        candidates.iter().copied().find(|k| k.pair() == (a, b))
    }

    pub fn from_parts(dir: Direction, number: u8) -> Option<Self> {
        if !(1..=4).contains(&number) {
            return None;
        }
        let offset = if dir == Direction::Right { 0 } else { 4 };
        Some(Self::ALL[offset + number as usize - 1])
    }
}

impl fmt::Display for JumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.direction().letter(), self.number())
    }
}

/// Rate of a jump kind. With `a, b, c, c', v, h` the weights of empty,
/// cross, corner SE, corner WN, vert, horiz:
///
/// | kind | rate |
/// |------|------|
/// | R1, L4 | `sqrt(h v / (a b))` |
/// | R2, L3 | `c c' / sqrt(a b v h)` |
/// | R3, L2 | `sqrt(a b v h) / (c c')` |
/// | R4, L1 | `sqrt(a b / (h v))` |
pub fn jump_rate(kind: JumpKind, w: &WeightVector) -> f64 {
    let ab = w.w_empty * w.w_cross;
    let hv = w.w_horiz * w.w_vert;
    let cc = w.w_corner_se * w.w_corner_wn;
    match kind {
        JumpKind::R1 | JumpKind::L4 => (hv / ab).sqrt(),
        JumpKind::R2 | JumpKind::L3 => cc / (ab * hv).sqrt(),
        JumpKind::R3 | JumpKind::L2 => (ab * hv).sqrt() / cc,
        JumpKind::R4 | JumpKind::L1 => (ab / hv).sqrt(),
    }
}

/// The eight rates, precomputed. Individual entries can be overridden to
/// build perturbed dynamics for sensitivity checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTable(pub [f64; 8]);

impl RateTable {
    pub fn from_weights(w: &WeightVector) -> Self {
        Self(JumpKind::ALL.map(|k| jump_rate(k, w)))
    }

    #[inline]
    pub fn get(&self, kind: JumpKind) -> f64 {
        self.0[kind.index()]
    }

    /// Copy with one rate multiplied by `factor`.
    pub fn scaled(&self, kind: JumpKind, factor: f64) -> Self {
        let mut out = *self;
        out.0[kind.index()] *= factor;
        out
    }
}

/// A resolved jump: trigger, kind, and the terminal row `y_top` of `C`.
/// `span` is the circular distance from `y` to `y_top`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Move {
    pub trigger: Trigger,
    pub kind: JumpKind,
    pub y_top: usize,
    pub span: usize,
}

impl Move {
    /// Rows `y, y+1, ..., y_top-1` (circular) whose vertical edges move.
    pub fn rows(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let y = self.trigger.y;
        (0..self.span).map(move |i| (y + i) % n)
    }
}

/// Which direction, if any, the pair at `(x, y)` triggers.
pub fn trigger_at(s: &State, x: usize, y: usize) -> Option<Direction> {
    let xr = s.geometry().right(x);
    match (s.v(x, y), s.h(x, y), s.v(xr, y)) {
        (true, false, false) => Some(Direction::Right),
        (false, true, true) => Some(Direction::Left),
        _ => None,
    }
}

/// Appends the triggers of the column pair `(x, x+1)` in increasing `y`.
pub(crate) fn column_triggers(s: &State, x: usize, out: &mut Vec<Trigger>) {
    let xr = s.geometry().right(x);
    for i in 0..s.words_per_column() {
        let vl = s.v_word(x, i);
        let h = s.h_word(x, i);
        let vr = s.v_word(xr, i);
        let right = vl & !h & !vr;
        let left = !vl & h & vr;
        let mut bits = right | left;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            let dir = if right >> b & 1 == 1 {
                Direction::Right
            } else {
                Direction::Left
            };
            out.push(Trigger {
                x,
                y: i * 64 + b,
                dir,
            });
            bits &= bits - 1;
        }
    }
}

/// All triggers of `s` in lexicographic `(x, y)` order.
pub fn find_triggers(s: &State) -> Result<Vec<Trigger>> {
    s.geometry().check_dynamics_flux(s.flux())?;
    let mut out = Vec::new();
    for x in 0..s.geometry().m {
        column_triggers(s, x, &mut out);
    }
    Ok(out)
}

fn not_a_trigger(t: Trigger) -> Error {
    Error::NotATrigger {
        x: t.x,
        y: t.y,
        dir: t.dir.to_string(),
    }
}

fn check_trigger(s: &State, t: Trigger) -> Result<()> {
    let g = s.geometry();
    if t.x >= g.m || t.y >= g.n || trigger_at(s, t.x, t.y) != Some(t.dir) {
        return Err(not_a_trigger(t));
    }
    Ok(())
}

pub fn classify(s: &State, t: Trigger) -> Result<JumpKind> {
    check_trigger(s, t)?;
    let a = s.vertex_type(t.x, t.y);
    let b = s.vertex_type(s.geometry().right(t.x), t.y);
    Ok(JumpKind::from_pair(t.dir, a, b).expect("trigger pattern forces an admissible pair"))
}

/// Scans upward from the trigger row to the terminal vertex `C`.
pub fn resolve_move(s: &State, t: Trigger) -> Result<Move> {
    let kind = classify(s, t)?;
    let g = s.geometry();
    let run_type = match t.dir {
        Direction::Right => VertexType::Vert,
        Direction::Left => VertexType::Horiz,
    };
    let mut j = t.y;
    for span in 1..g.n {
        j = g.up(j);
        if s.vertex_type(t.x, j) != run_type {
            return Ok(Move {
                trigger: t,
                kind,
                y_top: j,
                span,
            });
        }
    }
    Err(Error::ScanDiverged { x: t.x, y: t.y })
}

fn check_move(s: &State, m: &Move) -> Result<()> {
    let fresh = resolve_move(s, m.trigger).map_err(|e| Error::StaleMove(e.to_string()))?;
    if fresh != *m {
        return Err(Error::StaleMove(format!("expected {fresh:?}, got {m:?}")));
    }
    Ok(())
}

/// Applies a resolved move in place.
pub fn apply_move_in_place(s: &mut State, m: &Move) -> Result<()> {
    check_move(s, m)?;
    apply_unchecked(s, m);
    Ok(())
}

/// Applies a move that is known to have been resolved against `s`.
pub(crate) fn apply_unchecked(s: &mut State, m: &Move) {
    let g = s.geometry();
    let Trigger { x, y, dir } = m.trigger;
    let xr = g.right(x);
    let right = dir == Direction::Right;
    for j in m.rows(g.n) {
        s.set_v(x, j, !right);
        s.set_v(xr, j, right);
    }
    s.set_h(x, y, right);
    s.set_h(x, m.y_top, !right);
}

pub fn apply_move(s: &State, m: &Move) -> Result<State> {
    let mut out = s.clone();
    apply_move_in_place(&mut out, m)?;
    Ok(out)
}

/// Rate from the dual-state recipe: the square root of the ratio of the
/// weights of `A`, `B` and of their dual types after and before the move.
pub fn rate_via_dual(s: &State, t: Trigger, w: &WeightVector) -> Result<f64> {
    let m = resolve_move(s, t)?;
    let xr = s.geometry().right(t.x);
    let before = [s.vertex_type(t.x, t.y), s.vertex_type(xr, t.y)];
    let mut after_state = s.clone();
    apply_unchecked(&mut after_state, &m);
    let after = [
        after_state.vertex_type(t.x, t.y),
        after_state.vertex_type(xr, t.y),
    ];
    let product = |types: [VertexType; 2]| -> f64 {
        types
            .iter()
            .map(|&t| w.get(t) * w.get(t.complement()))
            .product()
    };
    Ok((product(after) / product(before)).sqrt())
}

/// Every available move with its rate, in trigger order.
pub fn enumerate_moves(s: &State, rates: &RateTable) -> Result<Vec<(Move, f64)>> {
    find_triggers(s)?
        .into_iter()
        .map(|t| {
            let m = resolve_move(s, t)?;
            Ok((m, rates.get(m.kind)))
        })
        .collect()
}

/// Total exit rate of `s`.
pub fn outflow(s: &State, rates: &RateTable) -> Result<f64> {
    let mut total = 0.0;
    for t in find_triggers(s)? {
        total += rates.get(classify(s, t)?);
    }
    Ok(total)
}

/// One line of a JSON-lines move log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub t: f64,
    pub x: usize,
    pub y: usize,
    pub dir: String,
    pub kind: u8,
    pub span: usize,
}

impl MoveRecord {
    pub fn new(t: f64, m: &Move) -> Self {
        Self {
            t,
            x: m.trigger.x,
            y: m.trigger.y,
            dir: m.trigger.dir.letter().to_string(),
            kind: m.kind.number(),
            span: m.span,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{FluxPair, TorusGeometry};

    fn canonical(m: usize, n: usize, k1: usize, k2: usize) -> State {
        State::canonical(TorusGeometry::new(m, n).unwrap(), FluxPair::new(k1, k2)).unwrap()
    }

    #[test]
    fn kind_tables() {
        for k in JumpKind::ALL {
            assert_eq!(k.reverse().reverse(), k);
            assert_ne!(k.direction(), k.reverse().direction());
            let (a, b) = k.pair();
            assert_eq!(JumpKind::from_pair(k.direction(), a, b), Some(k));
            assert_eq!(JumpKind::from_parts(k.direction(), k.number()), Some(k));
        }
        assert_eq!(
            JumpKind::from_pair(Direction::Right, VertexType::CornerWN, VertexType::CornerSE),
            Some(JumpKind::R3)
        );
        assert_eq!(JumpKind::R2.to_string(), "R2");
    }

    #[test]
    fn rate_examples() {
        let one = WeightVector::ones();
        for k in JumpKind::ALL {
            assert_eq!(jump_rate(k, &one), 1.0);
        }
        let w = WeightVector::new([1.0, 1.0, 1.0, 1.0, 4.0, 1.0]).unwrap();
        assert!((jump_rate(JumpKind::R1, &w) - 2.0).abs() < 1e-15);
        assert!((jump_rate(JumpKind::R4, &w) - 0.5).abs() < 1e-15);
        let w = WeightVector::new([1.3, 0.2, 2.5, 0.7, 3.1, 1.9]).unwrap();
        for i in 0..4 {
            let r = jump_rate(JumpKind::ALL[i], &w);
            let l = jump_rate(JumpKind::ALL[i + 4], &w);
            assert!((r * l - 1.0).abs() < 1e-14);
        }
        assert!((jump_rate(JumpKind::R2, &w) * jump_rate(JumpKind::L2, &w) - 1.0).abs() < 1e-14);
        assert_eq!(jump_rate(JumpKind::R2, &w), jump_rate(JumpKind::L3, &w));
    }

    #[test]
    fn canonical_2x2_triggers() {
        let s = canonical(2, 2, 1, 1);
        let t = find_triggers(&s).unwrap();
        assert_eq!(
            t,
            vec![
                Trigger {
                    x: 0,
                    y: 1,
                    dir: Direction::Right
                },
                Trigger {
                    x: 1,
                    y: 0,
                    dir: Direction::Left
                },
            ]
        );
        assert_eq!(classify(&s, t[0]).unwrap(), JumpKind::R2);
        assert_eq!(classify(&s, t[1]).unwrap(), JumpKind::L3);
        assert!(matches!(
            classify(
                &s,
                Trigger {
                    x: 0,
                    y: 0,
                    dir: Direction::Right
                }
            ),
            Err(Error::NotATrigger { .. })
        ));
        assert_eq!(
            outflow(&s, &RateTable::from_weights(&WeightVector::ones())).unwrap(),
            2.0
        );
    }

    #[test]
    fn flux_precondition() {
        let s = canonical(3, 3, 2, 0);
        assert!(matches!(
            find_triggers(&s),
            Err(Error::FluxOutOfRange { .. })
        ));
        let s = canonical(3, 3, 3, 1);
        assert!(matches!(
            find_triggers(&s),
            Err(Error::FluxOutOfRange { .. })
        ));
    }

    #[test]
    fn canonical_2x2_right_move() {
        let s = canonical(2, 2, 1, 1);
        let t = Trigger {
            x: 0,
            y: 1,
            dir: Direction::Right,
        };
        let m = resolve_move(&s, t).unwrap();
        assert_eq!(m.y_top, 0);
        assert_eq!(m.span, 1);
        let s2 = apply_move(&s, &m).unwrap();
        assert_eq!(s2.validate().unwrap(), FluxPair::new(1, 1));
        let occupied_h: Vec<_> = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .filter(|&(x, y)| s2.h(x, y))
            .collect();
        let occupied_v: Vec<_> = (0..2)
            .flat_map(|x| (0..2).map(move |y| (x, y)))
            .filter(|&(x, y)| s2.v(x, y))
            .collect();
        assert_eq!(occupied_h, vec![(0, 1), (1, 0)]);
        assert_eq!(occupied_v, vec![(0, 0), (1, 1)]);
        assert_eq!(s2.vertex_type(0, 0), VertexType::CornerWN);
        assert_eq!(s2.vertex_type(1, 0), VertexType::CornerSE);
        assert_eq!(s2.vertex_type(0, 1), VertexType::CornerSE);
        assert_eq!(s2.vertex_type(1, 1), VertexType::CornerWN);

        // The same pair is now the reverse left trigger.
        let back = Trigger {
            x: 0,
            y: 1,
            dir: Direction::Left,
        };
        assert_eq!(classify(&s2, back).unwrap(), JumpKind::R2.reverse());
        let mb = resolve_move(&s2, back).unwrap();
        assert_eq!(mb.span, 1);
        assert_eq!(apply_move(&s2, &mb).unwrap(), s);

        // Moves are single-use.
        assert!(matches!(apply_move(&s2, &m), Err(Error::StaleMove(_))));
    }

    #[test]
    fn dual_recipe_matches_worked_r1_case() {
        // A single staircase path on a 3x3 torus, turning north at A = (0, 1).
        let g = TorusGeometry::new(3, 3).unwrap();
        let mut h = vec![vec![false; 3]; 3];
        let mut v = vec![vec![false; 3]; 3];
        h[2][1] = true; // (2,1) -> (0,1)
        v[0][1] = true; // (0,1) -> (0,2)
        h[0][2] = true; // (0,2) -> (1,2)
        v[1][2] = true; // (1,2) -> (1,0)
        h[1][0] = true; // (1,0) -> (2,0)
        v[2][0] = true; // (2,0) -> (2,1)
        let s = State::from_layers(g, &h, &v).unwrap();
        let t = Trigger {
            x: 0,
            y: 1,
            dir: Direction::Right,
        };
        assert_eq!(classify(&s, t).unwrap(), JumpKind::R1);
        let w = WeightVector::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let expected = (6.0f64 * 5.0 / (2.0 * 1.0)).sqrt();
        assert!((rate_via_dual(&s, t, &w).unwrap() - expected).abs() < 1e-12);
        assert!((jump_rate(JumpKind::R1, &w) - expected).abs() < 1e-12);
    }

    #[test]
    fn move_record_shape() {
        let s = canonical(2, 2, 1, 1);
        let m = resolve_move(
            &s,
            Trigger {
                x: 1,
                y: 0,
                dir: Direction::Left,
            },
        )
        .unwrap();
        let rec = MoveRecord::new(0.5, &m);
        let line = serde_json::to_string(&rec).unwrap();
        assert_eq!(line, r#"{"t":0.5,"x":1,"y":0,"dir":"L","kind":3,"span":1}"#);
    }
}
