//! Exact enumeration of fixed-flux state spaces, Gibbs vectors and the
//! sparse generator of the jump dynamics.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{self, Direction, RateTable};
use crate::error::{Error, Result};
use crate::lattice::{FluxPair, State, TorusGeometry};
use crate::weights::{state_log_weight, WeightVector};

/// States of one flux class, sorted by canonical encoding.
#[derive(Debug, Clone)]
pub struct StateSpace {
    geom: TorusGeometry,
    flux: FluxPair,
    codes: Vec<u64>,
    index: HashMap<u64, usize>,
}

impl StateSpace {
    fn from_codes(geom: TorusGeometry, flux: FluxPair, mut codes: Vec<u64>) -> Self {
        codes.sort_unstable();
        codes.dedup();
        let index = codes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self {
            geom,
            flux,
            codes,
            index,
        }
    }

    pub fn geometry(&self) -> TorusGeometry {
        self.geom
    }

    pub fn flux(&self) -> FluxPair {
        self.flux
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[u64] {
        &self.codes
    }

    pub fn state(&self, i: usize) -> State {
        State::from_code_trusted(self.geom, self.flux, self.codes[i])
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (0..self.len()).map(|i| self.state(i))
    }

    pub fn index_of_code(&self, code: u64) -> Option<usize> {
        self.index.get(&code).copied()
    }

    pub fn index_of(&self, s: &State) -> Option<usize> {
        s.code().and_then(|c| self.index_of_code(c))
    }
}

fn check_encodable(geom: TorusGeometry) -> Result<()> {
    if !geom.fits_code() {
        return Err(Error::TooLarge(format!(
            "{}x{} torus needs {} bits; enumeration supports 2*M*N <= 64",
            geom.m,
            geom.n,
            2 * geom.m * geom.n
        )));
    }
    Ok(())
}

/// All states of flux `(k1, k2)`.
///
/// Depth-first over columns. With `h_in` the horizontal cut entering
/// column `x` and `v` its vertical edges, conservation fixes the outgoing cut
/// row by row as `h_in ^ v[y-1] ^ v[y]`, and rules out the two patterns
/// `(in, in, no out)` and `(no in, out)`. Partial row sums of `v` are pruned
/// against `k2`, and the last outgoing cut must close onto the first.
pub fn enumerate_states(geom: TorusGeometry, flux: FluxPair) -> Result<StateSpace> {
    check_encodable(geom)?;
    geom.check_flux(flux)?;
    let n = geom.n;
    let full = (1u64 << n) - 1;
    let mut search = ColumnSearch {
        geom,
        k2: flux.k2,
        full,
        first_cut: 0,
        row_counts: vec![0; n],
        code: 0,
        out: Vec::new(),
    };
    for h0 in 0..=full {
        if h0.count_ones() as usize == flux.k1 {
            search.first_cut = h0;
            search.descend(0, h0);
        }
    }
    Ok(StateSpace::from_codes(geom, flux, search.out))
}

struct ColumnSearch {
    geom: TorusGeometry,
    k2: usize,
    full: u64,
    first_cut: u64,
    row_counts: Vec<usize>,
    code: u64,
    out: Vec<u64>,
}

impl ColumnSearch {
    fn descend(&mut self, x: usize, h_in: u64) {
        let TorusGeometry { m, n } = self.geom;
        if x == m {
            if h_in == self.first_cut && self.row_counts.iter().all(|&c| c == self.k2) {
                self.out.push(self.code);
            }
            return;
        }
        let remaining_after = m - x - 1;
        for v in 0..=self.full {
            // Bit y of `below` is V[x][y-1].
            let below = ((v << 1) | (v >> (n - 1))) & self.full;
            let bad = (h_in & below & !v) | (!h_in & !below & v);
            if bad & self.full != 0 {
                continue;
            }
            let h_out = (h_in ^ below ^ v) & self.full;
            if x + 1 == m && h_out != self.first_cut {
                continue;
            }
            let feasible = (0..n).all(|y| {
                let c = self.row_counts[y] + (v >> y & 1) as usize;
                c <= self.k2 && c + remaining_after >= self.k2
            });
            if !feasible {
                continue;
            }
            for y in 0..n {
                self.row_counts[y] += (v >> y & 1) as usize;
            }
            let saved = self.code;
            self.code |= h_out << (x * n);
            self.code |= v << (m * n + x * n);
            self.descend(x + 1, h_out);
            self.code = saved;
            for y in 0..n {
                self.row_counts[y] -= (v >> y & 1) as usize;
            }
        }
    }
}

/// Filters all `2^(2MN)` edge subsets through validation and groups them by flux.
pub fn enumerate_bruteforce(geom: TorusGeometry) -> Result<BTreeMap<FluxPair, StateSpace>> {
    let bits = 2 * geom.m * geom.n;
    if bits > 18 {
        return Err(Error::TooLarge(format!(
            "brute force over 2^{bits} subsets; limit is 2^18"
        )));
    }
    let mut classes: BTreeMap<FluxPair, Vec<u64>> = BTreeMap::new();
    for code in 0..(1u64 << bits) {
        if let Ok(s) = State::from_code(geom, code) {
            classes.entry(s.flux()).or_default().push(code);
        }
    }
    Ok(classes
        .into_iter()
        .map(|(flux, codes)| (flux, StateSpace::from_codes(geom, flux, codes)))
        .collect())
}

/// Log-weights of every state of the space, in space order.
pub fn log_weights(space: &StateSpace, w: &WeightVector) -> Vec<f64> {
    space.states().map(|s| state_log_weight(&s, w)).collect()
}

/// Normalized Gibbs vector, computed with log-sum-exp.
pub fn gibbs_distribution(space: &StateSpace, w: &WeightVector) -> Result<Vec<f64>> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    let logs = log_weights(space, w);
    Ok(normalize_log(&logs))
}

/// `log Z` of the space.
pub fn log_partition_function(space: &StateSpace, w: &WeightVector) -> Result<f64> {
    if space.is_empty() {
        return Err(Error::EmptySpace);
    }
    Ok(log_sum_exp(&log_weights(space, w)))
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logs);
    logs.iter().map(|l| (l - lse).exp()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Full,
    RightOnly,
    LeftOnly,
}

impl GeneratorMode {
    pub fn admits(self, dir: Direction) -> bool {
        match self {
            GeneratorMode::Full => true,
            GeneratorMode::RightOnly => dir == Direction::Right,
            GeneratorMode::LeftOnly => dir == Direction::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorMode::Full => "full",
            GeneratorMode::RightOnly => "right_only",
            GeneratorMode::LeftOnly => "left_only",
        }
    }
}

/// Sparse rate matrix. Off-diagonal rows are sorted by column and hold only
/// positive rates; the diagonal makes every row sum to zero.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl GeneratorMatrix {
    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Off-diagonal entry `Q[i][j]` (zero when absent).
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    /// Positive off-diagonal entries as `(i, j, rate)`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, r)| (i, j, r)))
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Largest `|sum_j Q[i][j]|` relative to the largest exit rate.
    pub fn max_row_sum_error(&self) -> f64 {
        let scale = self
            .diag
            .iter()
            .fold(0.0f64, |a, d| a.max(d.abs()))
            .max(1.0);
        self.rows
            .iter()
            .zip(&self.diag)
            .map(|(row, d)| (row.iter().map(|e| e.1).sum::<f64>() + d).abs() / scale)
            .fold(0.0, f64::max)
    }

    /// `pi Q`, accumulated per column with compensated summation.
    pub fn left_apply(&self, pi: &[f64]) -> Vec<f64> {
        assert_eq!(pi.len(), self.size());
        let mut acc = vec![Neumaier::default(); self.size()];
        for (i, row) in self.rows.iter().enumerate() {
            acc[i].add(pi[i] * self.diag[i]);
            for &(j, r) in row {
                acc[j].add(pi[i] * r);
            }
        }
        acc.into_iter().map(|a| a.total()).collect()
    }

    /// Entrywise sum of two generators over the same space.
    pub fn sum(&self, other: &GeneratorMatrix) -> GeneratorMatrix {
        assert_eq!(self.size(), other.size());
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| {
                let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
                for &(j, r) in a.iter().chain(b) {
                    *merged.entry(j).or_default() += r;
                }
                merged.into_iter().collect()
            })
            .collect();
        let diag = self
            .diag
            .iter()
            .zip(&other.diag)
            .map(|(a, b)| a + b)
            .collect();
        GeneratorMatrix { rows, diag }
    }

    /// Matrix Market coordinate format, 1-based, diagonal included.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let nnz = self.nnz_offdiag() + self.diag.iter().filter(|d| **d != 0.0).count();
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.size(), self.size(), nnz)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut wrote_diag = self.diag[i] == 0.0;
            for &(j, r) in row {
                if !wrote_diag && j > i {
                    writeln!(out, "{} {} {:e}", i + 1, i + 1, self.diag[i])?;
                    wrote_diag = true;
                }
                writeln!(out, "{} {} {:e}", i + 1, j + 1, r)?;
            }
            if !wrote_diag {
                writeln!(out, "{} {} {:e}", i + 1, i + 1, self.diag[i])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

/// Builds `Q[i][j] = sum of rates of moves (admitted by `mode`) taking i to j`.
/// Rows are built in parallel and merged in index order.
pub fn build_generator(
    space: &StateSpace,
    rates: &RateTable,
    mode: GeneratorMode,
) -> Result<GeneratorMatrix> {
    space.geometry().check_dynamics_flux(space.flux())?;
    let rows: Vec<Vec<(usize, f64)>> = (0..space.len())
        .into_par_iter()
        .map(|i| generator_row(space, rates, mode, i))
        .collect::<Result<_>>()?;
    let diag = rows
        .iter()
        .map(|row| -row.iter().map(|e| e.1).sum::<f64>())
        .collect();
    Ok(GeneratorMatrix { rows, diag })
}

fn generator_row(
    space: &StateSpace,
    rates: &RateTable,
    mode: GeneratorMode,
    i: usize,
) -> Result<Vec<(usize, f64)>> {
    let s = space.state(i);
    let mut row: BTreeMap<usize, f64> = BTreeMap::new();
    for t in dynamics::find_triggers(&s)? {
        if !mode.admits(t.dir) {
            continue;
        }
        let m = dynamics::resolve_move(&s, t)?;
        let mut target = s.clone();
        dynamics::apply_unchecked(&mut target, &m);
        let j = space
            .index_of(&target)
            .ok_or(Error::ClosureViolation { from: i })?;
        debug_assert_ne!(j, i, "a column move always changes the state");
        *row.entry(j).or_default() += rates.get(m.kind);
    }
    Ok(row.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConnectivityReport {
    pub strongly_connected: bool,
    pub components: usize,
}

/// Strong connectivity of the positive-rate digraph.
pub fn check_connectivity(q: &GeneratorMatrix) -> ConnectivityReport {
    let mut graph = DiGraph::<(), ()>::with_capacity(q.size(), q.nnz_offdiag());
    let nodes: Vec<_> = (0..q.size()).map(|_| graph.add_node(())).collect();
    for (i, j, _) in q.edges() {
        graph.add_edge(nodes[i], nodes[j], ());
    }
    let components = kosaraju_scc(&graph).len();
    ConnectivityReport {
        strongly_connected: components <= 1,
        components,
    }
}
