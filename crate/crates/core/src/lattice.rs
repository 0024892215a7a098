//! Torus geometry, arrow configurations and the six vertex types.
//!
//! A state stores two edge layers. `H[x][y]` is the arrow on the horizontal
//! edge `(x, y) -> (x+1, y)` and `V[x][y]` the arrow on the vertical edge
//! `(x, y) -> (x, y+1)`, all indices circular. Each layer is bit-packed per
//! column: column `x` occupies `words_per_column` consecutive `u64` words
//! with bit `y % 64` of word `y / 64` holding row `y`.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGeometry {
    /// Number of columns.
    pub m: usize,
    /// Number of rows.
    pub n: usize,
}

impl TorusGeometry {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::OutOfRange(format!(
                "torus dimensions must be positive, got {m}x{n}"
            )));
        }
        Ok(Self { m, n })
    }

    pub fn vertices(&self) -> usize {
        self.m * self.n
    }

    #[inline]
    pub fn right(&self, x: usize) -> usize {
        if x + 1 == self.m {
            0
        } else {
            x + 1
        }
    }

    #[inline]
    pub fn left(&self, x: usize) -> usize {
        if x == 0 {
            self.m - 1
        } else {
            x - 1
        }
    }

    #[inline]
    pub fn up(&self, y: usize) -> usize {
        if y + 1 == self.n {
            0
        } else {
            y + 1
        }
    }

    #[inline]
    pub fn down(&self, y: usize) -> usize {
        if y == 0 {
            self.n - 1
        } else {
            y - 1
        }
    }

    /// Checks `0 <= k1 <= N` and `0 <= k2 <= M`.
    pub fn check_flux(&self, flux: FluxPair) -> Result<()> {
        if flux.k1 > self.n || flux.k2 > self.m {
            return Err(Error::OutOfRange(format!(
                "flux (k1={}, k2={}) needs k1 <= N={} and k2 <= M={}",
                flux.k1, flux.k2, self.n, self.m
            )));
        }
        Ok(())
    }

    /// Checks the range where the jump dynamics is defined:
    /// `1 <= k1 <= N-1` and `1 <= k2 <= M-1`.
    pub fn check_dynamics_flux(&self, flux: FluxPair) -> Result<()> {
        if flux.k1 == 0 || flux.k1 >= self.n || flux.k2 == 0 || flux.k2 >= self.m {
            return Err(Error::FluxOutOfRange {
                m: self.m,
                n: self.n,
                k1: flux.k1,
                k2: flux.k2,
            });
        }
        Ok(())
    }

    /// Whether the 64-bit canonical encoding can hold a state of this size.
    pub fn fits_code(&self) -> bool {
        2 * self.m * self.n <= 64
    }

    fn words_per_column(&self) -> usize {
        self.n.div_ceil(64)
    }
}

/// `k1` horizontal arrows cross every vertical cut, `k2` vertical arrows
/// cross every horizontal cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FluxPair {
    pub k1: usize,
    pub k2: usize,
}

impl FluxPair {
    pub fn new(k1: usize, k2: usize) -> Self {
        Self { k1, k2 }
    }
}

impl fmt::Display for FluxPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k1, self.k2)
    }
}

/// The six conserving vertex types.
///
/// Discriminants follow the weight listing order
/// `w(empty), w(cross), w(corner SE), w(corner WN), w(vert), w(horiz)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum VertexType {
    /// No arrows.
    Empty = 0,
    /// All four edges occupied.
    Cross = 1,
    /// South-in, east-out.
    CornerSE = 2,
    /// West-in, north-out.
    CornerWN = 3,
    /// South-in, north-out.
    Vert = 4,
    /// West-in, east-out.
    Horiz = 5,
}

impl VertexType {
    pub const ALL: [VertexType; 6] = [
        VertexType::Empty,
        VertexType::Cross,
        VertexType::CornerSE,
        VertexType::CornerWN,
        VertexType::Vert,
        VertexType::Horiz,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    /// Classifies the incident quadruple `(left-in, bottom-in, right-out, top-out)`.
    /// Returns `None` when in-degree and out-degree differ.
    #[inline]
    pub fn from_quadruple(
        left_in: bool,
        bottom_in: bool,
        right_out: bool,
        top_out: bool,
    ) -> Option<Self> {
        use VertexType::*;
        match (left_in, bottom_in, right_out, top_out) {
            (false, false, false, false) => Some(Empty),
            (true, true, true, true) => Some(Cross),
            (true, false, true, false) => Some(Horiz),
            (false, true, false, true) => Some(Vert),
            (true, false, false, true) => Some(CornerWN),
            (false, true, true, false) => Some(CornerSE),
            _ => None,
        }
    }

    /// `(left-in, bottom-in, right-out, top-out)`.
    pub fn quadruple(self) -> (bool, bool, bool, bool) {
        use VertexType::*;
        match self {
            Empty => (false, false, false, false),
            Cross => (true, true, true, true),
            Horiz => (true, false, true, false),
            Vert => (false, true, false, true),
            CornerWN => (true, false, false, true),
            CornerSE => (false, true, true, false),
        }
    }

    /// Type of the same vertex in the dual (complemented) state.
    pub fn complement(self) -> Self {
        use VertexType::*;
        match self {
            Empty => Cross,
            Cross => Empty,
            Horiz => Vert,
            Vert => Horiz,
            CornerWN => CornerSE,
            CornerSE => CornerWN,
        }
    }

    /// Type of the image vertex under the 180 degree rotation with arrow reversal.
    pub fn flipped(self) -> Self {
        use VertexType::*;
        match self {
            CornerWN => CornerSE,
            CornerSE => CornerWN,
            other => other,
        }
    }

    /// Symbol used in the literature for this vertex.
    pub fn symbol(self) -> &'static str {
        use VertexType::*;
        match self {
            Empty => "∅",
            Cross => "+",
            Horiz => "—",
            Vert => "|",
            CornerWN => "⌐ᵣ",
            CornerSE => "⌐ₗ",
        }
    }

    pub fn name(self) -> &'static str {
        use VertexType::*;
        match self {
            Empty => "Empty",
            Cross => "Cross",
            Horiz => "Horiz",
            Vert => "Vert",
            CornerWN => "CornerWN",
            CornerSE => "CornerSE",
        }
    }
}

impl fmt::Display for VertexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Number of vertices of each type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TypeCounts(pub [usize; 6]);

impl TypeCounts {
    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub(crate) fn add(&mut self, t: VertexType) {
        self.0[t.index()] += 1;
    }

    pub(crate) fn remove(&mut self, t: VertexType) {
        self.0[t.index()] -= 1;
    }
}

impl Index<VertexType> for TypeCounts {
    type Output = usize;
    fn index(&self, t: VertexType) -> &usize {
        &self.0[t.index()]
    }
}

/// `N(X, Y)`: number of horizontally adjacent pairs with left vertex of type
/// `X` and right vertex of type `Y`, including pairs across the seam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts(pub [[usize; 6]; 6]);

impl PairCounts {
    pub fn get(&self, left: VertexType, right: VertexType) -> usize {
        self.0[left.index()][right.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }
}

/// Two bit-packed edge layers without any validity guarantee.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Layers {
    wpc: usize,
    h: Vec<u64>,
    v: Vec<u64>,
}

impl Layers {
    fn zeros(geom: TorusGeometry) -> Self {
        let wpc = geom.words_per_column();
        Self {
            wpc,
            h: vec![0; wpc * geom.m],
            v: vec![0; wpc * geom.m],
        }
    }

    #[inline]
    fn slot(&self, x: usize, y: usize) -> (usize, u64) {
        (x * self.wpc + y / 64, 1u64 << (y % 64))
    }

    #[inline]
    fn h(&self, x: usize, y: usize) -> bool {
        let (i, b) = self.slot(x, y);
        self.h[i] & b != 0
    }

    #[inline]
    fn v(&self, x: usize, y: usize) -> bool {
        let (i, b) = self.slot(x, y);
        self.v[i] & b != 0
    }

    #[inline]
    fn set_h(&mut self, x: usize, y: usize, on: bool) {
        let (i, b) = self.slot(x, y);
        if on {
            self.h[i] |= b;
        } else {
            self.h[i] &= !b;
        }
    }

    #[inline]
    fn set_v(&mut self, x: usize, y: usize, on: bool) {
        let (i, b) = self.slot(x, y);
        if on {
            self.v[i] |= b;
        } else {
            self.v[i] &= !b;
        }
    }

    fn h_column_count(&self, x: usize) -> usize {
        self.h[x * self.wpc..(x + 1) * self.wpc]
            .iter()
            .map(|w| w.count_ones() as usize)
            .sum()
    }

    fn quadruple(&self, geom: &TorusGeometry, x: usize, y: usize) -> (bool, bool, bool, bool) {
        (
            self.h(geom.left(x), y),
            self.v(x, geom.down(y)),
            self.h(x, y),
            self.v(x, y),
        )
    }

    /// Checks conservation everywhere and flux uniformity, returning the flux.
    fn validate(&self, geom: &TorusGeometry) -> Result<FluxPair> {
        for x in 0..geom.m {
            for y in 0..geom.n {
                let (l, b, r, t) = self.quadruple(geom, x, y);
                let ins = l as u8 + b as u8;
                let outs = r as u8 + t as u8;
                if ins != outs {
                    return Err(Error::NonConserving { x, y, ins, outs });
                }
            }
        }
        let k1 = self.h_column_count(0);
        for x in 1..geom.m {
            let c = self.h_column_count(x);
            if c != k1 {
                return Err(Error::FluxNotUniform(format!(
                    "column {x} carries {c} horizontal arrows, column 0 carries {k1}"
                )));
            }
        }
        let row_count = |y: usize| (0..geom.m).filter(|&x| self.v(x, y)).count();
        let k2 = row_count(0);
        for y in 1..geom.n {
            let c = row_count(y);
            if c != k2 {
                return Err(Error::FluxNotUniform(format!(
                    "row {y} carries {c} vertical arrows, row 0 carries {k2}"
                )));
            }
        }
        Ok(FluxPair { k1, k2 })
    }
}

/// A vertex-conserving arrow configuration on the torus.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct State {
    geom: TorusGeometry,
    flux: FluxPair,
    layers: Layers,
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "State {{ {}x{}, flux {}, ",
            self.geom.m, self.geom.n, self.flux
        )?;
        write!(f, "H: {:?}, V: {:?} }}", self.h_rows(), self.v_rows())
    }
}

impl State {
    /// Builds a state from boolean layers indexed `[x][y]`; validates.
    pub fn from_layers(geom: TorusGeometry, h: &[Vec<bool>], v: &[Vec<bool>]) -> Result<Self> {
        let layers = layers_from_bools(geom, h, v)?;
        let flux = layers.validate(&geom)?;
        Ok(Self { geom, flux, layers })
    }

    /// Deterministic member of the flux class: rows `0..k1` fully horizontal,
    /// columns `0..k2` fully vertical.
    pub fn canonical(geom: TorusGeometry, flux: FluxPair) -> Result<Self> {
        geom.check_flux(flux)?;
        let mut layers = Layers::zeros(geom);
        for x in 0..geom.m {
            for y in 0..geom.n {
                layers.set_h(x, y, y < flux.k1);
                layers.set_v(x, y, x < flux.k2);
            }
        }
        let checked = layers.validate(&geom)?;
        debug_assert_eq!(checked, flux);
        Ok(Self { geom, flux, layers })
    }

    /// The all-empty state.
    pub fn empty(geom: TorusGeometry) -> Self {
        Self {
            geom,
            flux: FluxPair::new(0, 0),
            layers: Layers::zeros(geom),
        }
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geom
    }

    pub fn flux(&self) -> FluxPair {
        self.flux
    }

    #[inline]
    pub fn h(&self, x: usize, y: usize) -> bool {
        self.layers.h(x, y)
    }

    #[inline]
    pub fn v(&self, x: usize, y: usize) -> bool {
        self.layers.v(x, y)
    }

    pub(crate) fn set_h(&mut self, x: usize, y: usize, on: bool) {
        self.layers.set_h(x, y, on);
    }

    pub(crate) fn set_v(&mut self, x: usize, y: usize, on: bool) {
        self.layers.set_v(x, y, on);
    }

    pub(crate) fn words_per_column(&self) -> usize {
        self.layers.wpc
    }

    #[inline]
    pub(crate) fn h_word(&self, x: usize, i: usize) -> u64 {
        self.layers.h[x * self.layers.wpc + i]
    }

    #[inline]
    pub(crate) fn v_word(&self, x: usize, i: usize) -> u64 {
        self.layers.v[x * self.layers.wpc + i]
    }

    /// `(left-in, bottom-in, right-out, top-out)` at `(x, y)`.
    pub fn quadruple(&self, x: usize, y: usize) -> (bool, bool, bool, bool) {
        self.layers.quadruple(&self.geom, x, y)
    }

    #[inline]
    pub fn vertex_type(&self, x: usize, y: usize) -> VertexType {
        let (l, b, r, t) = self.quadruple(x, y);
        VertexType::from_quadruple(l, b, r, t).expect("State is vertex-conserving")
    }

    /// Re-runs the full validation and returns the flux.
    pub fn validate(&self) -> Result<FluxPair> {
        let flux = self.layers.validate(&self.geom)?;
        if flux != self.flux {
            return Err(Error::FluxNotUniform(format!(
                "recorded flux {} differs from recomputed {}",
                self.flux, flux
            )));
        }
        Ok(flux)
    }

    /// 180 degree rotation with all arrows reversed.
    pub fn flip(&self) -> Self {
        let TorusGeometry { m, n } = self.geom;
        let mut layers = Layers::zeros(self.geom);
        for a in 0..m {
            for b in 0..n {
                let hx = (2 * m - 1 - a) % m;
                let hy = (n - b) % n;
                layers.set_h(a, b, self.layers.h(hx, hy));
                let vx = (m - a) % m;
                let vy = (2 * n - 1 - b) % n;
                layers.set_v(a, b, self.layers.v(vx, vy));
            }
        }
        Self {
            geom: self.geom,
            flux: self.flux,
            layers,
        }
    }

    /// Complement of the edge set.
    pub fn dual(&self) -> Self {
        let TorusGeometry { m, n } = self.geom;
        let mut layers = self.layers.clone();
        let tail = if n % 64 == 0 {
            u64::MAX
        } else {
            (1u64 << (n % 64)) - 1
        };
        for x in 0..m {
            for i in 0..layers.wpc {
                let mask = if i + 1 == layers.wpc { tail } else { u64::MAX };
                let j = x * layers.wpc + i;
                layers.h[j] = !layers.h[j] & mask;
                layers.v[j] = !layers.v[j] & mask;
            }
        }
        Self {
            geom: self.geom,
            flux: FluxPair::new(n - self.flux.k1, m - self.flux.k2),
            layers,
        }
    }

    pub fn count_types(&self) -> TypeCounts {
        let mut counts = TypeCounts::default();
        for x in 0..self.geom.m {
            for y in 0..self.geom.n {
                counts.add(self.vertex_type(x, y));
            }
        }
        counts
    }

    /// All horizontal pair counts at once.
    pub fn pair_counts(&self) -> PairCounts {
        let mut counts = PairCounts::default();
        for x in 0..self.geom.m {
            let xr = self.geom.right(x);
            for y in 0..self.geom.n {
                let a = self.vertex_type(x, y);
                let b = self.vertex_type(xr, y);
                counts.0[a.index()][b.index()] += 1;
            }
        }
        counts
    }

    pub fn count_hpairs(&self, left: VertexType, right: VertexType) -> usize {
        let mut count = 0;
        for x in 0..self.geom.m {
            let xr = self.geom.right(x);
            for y in 0..self.geom.n {
                if self.vertex_type(x, y) == left && self.vertex_type(xr, y) == right {
                    count += 1;
                }
            }
        }
        count
    }

    /// Canonical 64-bit encoding: H bits then V bits, x-major then y.
    /// `None` when `2*M*N > 64`.
    pub fn code(&self) -> Option<u64> {
        if !self.geom.fits_code() {
            return None;
        }
        let n = self.geom.n;
        let base = self.geom.m * n;
        // 2MN <= 64 implies N <= 32: one word per column.
        let mut code = 0u64;
        for x in 0..self.geom.m {
            code |= self.layers.h[x] << (x * n);
            code |= self.layers.v[x] << (base + x * n);
        }
        Some(code)
    }

    /// Decodes and validates a canonical encoding.
    pub fn from_code(geom: TorusGeometry, code: u64) -> Result<Self> {
        let layers = layers_from_code(geom, code)?;
        let flux = layers.validate(&geom)?;
        Ok(Self { geom, flux, layers })
    }

    /// Decodes a canonical encoding known to be valid with the given flux.
    pub(crate) fn from_code_trusted(geom: TorusGeometry, flux: FluxPair, code: u64) -> Self {
        let layers = layers_from_code(geom, code).expect("geometry fits the encoding");
        let state = Self { geom, flux, layers };
        debug_assert_eq!(state.validate(), Ok(flux));
        state
    }

    /// H layer as `[x][y]` 0/1 values.
    pub fn h_rows(&self) -> Vec<Vec<u8>> {
        (0..self.geom.m)
            .map(|x| (0..self.geom.n).map(|y| self.h(x, y) as u8).collect())
            .collect()
    }

    /// V layer as `[x][y]` 0/1 values.
    pub fn v_rows(&self) -> Vec<Vec<u8>> {
        (0..self.geom.m)
            .map(|x| (0..self.geom.n).map(|y| self.v(x, y) as u8).collect())
            .collect()
    }
}

fn layers_from_bools(geom: TorusGeometry, h: &[Vec<bool>], v: &[Vec<bool>]) -> Result<Layers> {
    for (name, layer) in [("H", h), ("V", v)] {
        if layer.len() != geom.m || layer.iter().any(|col| col.len() != geom.n) {
            return Err(Error::OutOfRange(format!(
                "layer {name} must have dimensions {}x{}",
                geom.m, geom.n
            )));
        }
    }
    let mut layers = Layers::zeros(geom);
    for x in 0..geom.m {
        for y in 0..geom.n {
            layers.set_h(x, y, h[x][y]);
            layers.set_v(x, y, v[x][y]);
        }
    }
    Ok(layers)
}

fn layers_from_code(geom: TorusGeometry, code: u64) -> Result<Layers> {
    if !geom.fits_code() {
        return Err(Error::TooLarge(format!(
            "{}x{} torus needs {} bits, the encoding holds 64",
            geom.m,
            geom.n,
            2 * geom.m * geom.n
        )));
    }
    let n = geom.n;
    let base = geom.m * n;
    if base * 2 < 64 && code >> (2 * base) != 0 {
        return Err(Error::OutOfRange(format!(
            "code {code:#x} has bits beyond {}",
            2 * base
        )));
    }
    let col_mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut layers = Layers::zeros(geom);
    for x in 0..geom.m {
        layers.h[x] = (code >> (x * n)) & col_mask;
        layers.v[x] = (code >> (base + x * n)) & col_mask;
    }
    Ok(layers)
}

/// Validates raw boolean layers and returns their flux.
pub fn validate_layers(geom: TorusGeometry, h: &[Vec<bool>], v: &[Vec<bool>]) -> Result<FluxPair> {
    layers_from_bools(geom, h, v)?.validate(&geom)
}

/// Classifies the vertex at `(x, y)` of raw layers.
pub fn raw_vertex_type(
    geom: TorusGeometry,
    h: &[Vec<bool>],
    v: &[Vec<bool>],
    x: usize,
    y: usize,
) -> Result<VertexType> {
    let layers = layers_from_bools(geom, h, v)?;
    if x >= geom.m || y >= geom.n {
        return Err(Error::OutOfRange(format!(
            "vertex ({x}, {y}) outside {}x{}",
            geom.m, geom.n
        )));
    }
    let (l, b, r, t) = layers.quadruple(&geom, x, y);
    VertexType::from_quadruple(l, b, r, t).ok_or(Error::NonConserving {
        x,
        y,
        ins: l as u8 + b as u8,
        outs: r as u8 + t as u8,
    })
}

/// JSON state file: `{"M":.., "N":.., "H":[[..]..], "V":[[..]..]}`, outer index x.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "H")]
    pub h: Vec<Vec<u8>>,
    #[serde(rename = "V")]
    pub v: Vec<Vec<u8>>,
}

impl From<&State> for StateFile {
    fn from(s: &State) -> Self {
        Self {
            m: s.geom.m,
            n: s.geom.n,
            h: s.h_rows(),
            v: s.v_rows(),
        }
    }
}

impl StateFile {
    pub fn into_state(self) -> Result<State> {
        let geom = TorusGeometry::new(self.m, self.n)?;
        let h = bits_field("H", &self.h, geom)?;
        let v = bits_field("V", &self.v, geom)?;
        State::from_layers(geom, &h, &v)
    }
}

fn bits_field(name: &str, layer: &[Vec<u8>], geom: TorusGeometry) -> Result<Vec<Vec<bool>>> {
    if layer.len() != geom.m {
        return Err(Error::Parse {
            location: name.to_string(),
            message: format!("expected {} columns, found {}", geom.m, layer.len()),
        });
    }
    layer
        .iter()
        .enumerate()
        .map(|(x, col)| {
            if col.len() != geom.n {
                return Err(Error::Parse {
                    location: format!("{name}[{x}]"),
                    message: format!("expected {} rows, found {}", geom.n, col.len()),
                });
            }
            col.iter()
                .enumerate()
                .map(|(y, &b)| match b {
                    0 => Ok(false),
                    1 => Ok(true),
                    other => Err(Error::Parse {
                        location: format!("{name}[{x}][{y}]"),
                        message: format!("expected 0 or 1, found {other}"),
                    }),
                })
                .collect()
        })
        .collect()
}

/// Compact JSON encoding of a state.
pub fn encode_state(s: &State) -> String {
    serde_json::to_string(&StateFile::from(s)).expect("state file serializes")
}

/// Parses and validates a JSON state.
pub fn decode_state(text: &str) -> Result<State> {
    let file: StateFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    file.into_state()
}
