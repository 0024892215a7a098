//! Vertex weights, state weights and the weight gauge transforms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{State, VertexType};

/// Six vertex weights, indexed by [`VertexType`].
///
/// Field order: empty, cross, corner SE, corner WN, vert, horiz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w_empty: f64,
    pub w_cross: f64,
    pub w_corner_se: f64,
    pub w_corner_wn: f64,
    pub w_vert: f64,
    pub w_horiz: f64,
}

const FIELD_NAMES: [&str; 6] = [
    "w_empty",
    "w_cross",
    "w_corner_se",
    "w_corner_wn",
    "w_vert",
    "w_horiz",
];

impl WeightVector {
    /// Checked constructor: all six values must be strictly positive and finite.
    pub fn new(values: [f64; 6]) -> Result<Self> {
        for (name, &value) in FIELD_NAMES.iter().zip(values.iter()) {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::NonPositiveWeight { name, value });
            }
        }
        Ok(Self::new_unchecked(values))
    }

    /// No positivity check. Only meant for inspecting raw parametrized weights;
    /// rates and Gibbs measures are meaningless for such vectors.
    pub fn new_unchecked(values: [f64; 6]) -> Self {
        let [w_empty, w_cross, w_corner_se, w_corner_wn, w_vert, w_horiz] = values;
        Self {
            w_empty,
            w_cross,
            w_corner_se,
            w_corner_wn,
            w_vert,
            w_horiz,
        }
    }

    pub fn ones() -> Self {
        Self::new_unchecked([1.0; 6])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.w_empty,
            self.w_cross,
            self.w_corner_se,
            self.w_corner_wn,
            self.w_vert,
            self.w_horiz,
        ]
    }

    pub fn is_positive(&self) -> bool {
        self.to_array().iter().all(|&w| w > 0.0 && w.is_finite())
    }

    #[inline]
    pub fn get(&self, t: VertexType) -> f64 {
        self.to_array()[t.index()]
    }

    pub fn log_weights(&self) -> [f64; 6] {
        self.to_array().map(f64::ln)
    }
}

impl fmt::Display for WeightVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "{},{},{},{},{},{}", a[0], a[1], a[2], a[3], a[4], a[5])
    }
}

/// Parses `e,x,se,wn,v,h`.
impl FromStr for WeightVector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(Error::Parse {
                location: "weights".into(),
                message: format!("expected 6 comma-separated values, found {}", parts.len()),
            });
        }
        let mut values = [0.0; 6];
        for (i, p) in parts.iter().enumerate() {
            values[i] = p.parse().map_err(|e| Error::Parse {
                location: format!("weights[{i}]"),
                message: format!("{p:?}: {e}"),
            })?;
        }
        WeightVector::new(values)
    }
}

/// `ln w(s) = sum_X N_s(X) ln w_X`.
pub fn state_log_weight(s: &State, w: &WeightVector) -> f64 {
    let counts = s.count_types();
    let logs = w.log_weights();
    VertexType::ALL
        .iter()
        .map(|&t| counts[t] as f64 * logs[t.index()])
        .sum()
}

/// The four weight rescalings that leave every fixed-flux Gibbs measure unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GaugeKind {
    /// Scale cross, corner WN, horiz.
    Horizontal = 1,
    /// Scale cross, corner WN, vert.
    Vertical = 2,
    /// Scale all six.
    Global = 3,
    /// Scale corner WN by C and corner SE by 1/C.
    Corner = 4,
}

impl GaugeKind {
    pub const ALL: [GaugeKind; 4] = [
        GaugeKind::Horizontal,
        GaugeKind::Vertical,
        GaugeKind::Global,
        GaugeKind::Corner,
    ];

    pub fn from_number(k: u8) -> Result<Self> {
        match k {
            1 => Ok(GaugeKind::Horizontal),
            2 => Ok(GaugeKind::Vertical),
            3 => Ok(GaugeKind::Global),
            4 => Ok(GaugeKind::Corner),
            _ => Err(Error::OutOfRange(format!(
                "gauge kind must be 1..=4, got {k}"
            ))),
        }
    }
}

pub fn gauge_apply(w: &WeightVector, kind: GaugeKind, c: f64) -> Result<WeightVector> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::OutOfRange(format!(
            "gauge constant must be positive, got {c}"
        )));
    }
    let mut out = *w;
    match kind {
        GaugeKind::Horizontal => {
            out.w_cross *= c;
            out.w_corner_wn *= c;
            out.w_horiz *= c;
        }
        GaugeKind::Vertical => {
            out.w_cross *= c;
            out.w_corner_wn *= c;
            out.w_vert *= c;
        }
        GaugeKind::Global => {
            out = WeightVector::new_unchecked(w.to_array().map(|x| x * c));
        }
        GaugeKind::Corner => {
            out.w_corner_wn *= c;
            out.w_corner_se /= c;
        }
    }
    Ok(out)
}

/// Weights from the spectral parametrization `(u, q)`:
///
/// ```text
/// d = 1 - u/sqrt(q)
/// empty = 1, cross = (u - sqrt q)/d, horiz = (u - 1/sqrt q)/d,
/// vert = (1 - sqrt(q) u)/d, corner WN = (1 - q)/d, corner SE = (1 - 1/q) u/d
/// ```
///
/// In checked mode a vector with any non-positive entry is rejected; with
/// `unchecked` the raw values are returned for inspection.
pub fn weights_from_uq(u: f64, q: f64, unchecked: bool) -> Result<WeightVector> {
    if !(q > 0.0 && q.is_finite()) || !u.is_finite() {
        return Err(Error::OutOfRange(format!(
            "need finite u and q > 0, got u={u}, q={q}"
        )));
    }
    let sq = q.sqrt();
    let d = 1.0 - u / sq;
    if d == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    let values = [
        1.0,
        (u - sq) / d,
        (1.0 - 1.0 / q) * u / d,
        (1.0 - q) / d,
        (1.0 - sq * u) / d,
        (u - 1.0 / sq) / d,
    ];
    if unchecked {
        Ok(WeightVector::new_unchecked(values))
    } else {
        WeightVector::new(values)
    }
}

/// `w(WN) w(SE) - w(cross) w(empty) - w(horiz) w(vert)`; zero at the free-fermion point.
pub fn free_fermion_defect(w: &WeightVector) -> f64 {
    w.w_corner_wn * w.w_corner_se - w.w_cross * w.w_empty - w.w_horiz * w.w_vert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{FluxPair, TorusGeometry};

    fn wv(a: [f64; 6]) -> WeightVector {
        WeightVector::new(a).unwrap()
    }

    #[test]
    fn checked_constructor_rejects_nonpositive() {
        assert!(matches!(
            WeightVector::new([1.0, 0.0, 1.0, 1.0, 1.0, 1.0]),
            Err(Error::NonPositiveWeight {
                name: "w_cross",
                ..
            })
        ));
        assert!(WeightVector::new([1.0, 1.0, 1.0, 1.0, 1.0, f64::NAN]).is_err());
    }

    #[test]
    fn parse_weight_flag() {
        let w: WeightVector = "1,2,3,4,5,6".parse().unwrap();
        assert_eq!(w.w_corner_wn, 4.0);
        assert_eq!(w.get(VertexType::Horiz), 6.0);
        assert!("1,2,3".parse::<WeightVector>().is_err());
        assert!("1,2,3,4,5,-6".parse::<WeightVector>().is_err());
    }

    #[test]
    fn log_weight_examples() {
        let g = TorusGeometry::new(2, 2).unwrap();
        let s = State::canonical(g, FluxPair::new(1, 1)).unwrap();
        assert_eq!(state_log_weight(&s, &WeightVector::ones()), 0.0);
        let w = wv([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!((state_log_weight(&s, &w) - 60f64.ln()).abs() < 1e-12);
        assert!((state_log_weight(&s.flip(), &w) - state_log_weight(&s, &w)).abs() < 1e-12);
    }

    #[test]
    fn gauge_examples() {
        let one = WeightVector::ones();
        let g3 = gauge_apply(&one, GaugeKind::Global, 2.0).unwrap();
        assert_eq!(g3.to_array(), [2.0; 6]);
        let g4 = gauge_apply(&one, GaugeKind::Corner, 3.0).unwrap();
        assert_eq!(g4.w_corner_wn, 3.0);
        assert!((g4.w_corner_se - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(g4.w_cross, 1.0);
        let g1 = gauge_apply(&one, GaugeKind::Horizontal, 5.0).unwrap();
        assert_eq!(g1.to_array(), [1.0, 5.0, 1.0, 5.0, 1.0, 5.0]);
        let g2 = gauge_apply(&one, GaugeKind::Vertical, 5.0).unwrap();
        assert_eq!(g2.to_array(), [1.0, 5.0, 1.0, 5.0, 5.0, 1.0]);
        assert!(gauge_apply(&one, GaugeKind::Global, 0.0).is_err());
        assert!(GaugeKind::from_number(5).is_err());
    }

    #[test]
    fn defect_examples() {
        assert_eq!(free_fermion_defect(&WeightVector::ones()), -1.0);
        assert_eq!(
            free_fermion_defect(&wv([1.0, 1.0, 1.0, 2.0, 1.0, 1.0])),
            0.0
        );
        assert_eq!(
            free_fermion_defect(&wv([1.0, 2.0, 1.0, 1.0, 1.0, 1.0])),
            -2.0
        );
    }

    #[test]
    fn defect_gauge_covariance() {
        let w = wv([1.3, 0.7, 2.1, 0.4, 1.9, 0.8]);
        let d = free_fermion_defect(&w);
        let d4 = free_fermion_defect(&gauge_apply(&w, GaugeKind::Corner, 7.0).unwrap());
        assert!((d4 - d).abs() < 1e-12);
        let d3 = free_fermion_defect(&gauge_apply(&w, GaugeKind::Global, 3.0).unwrap());
        assert!((d3 - 9.0 * d).abs() < 1e-12);
    }

    /// Direct substitution, written independently of the implementation.
    fn uq_oracle(u: f64, q: f64) -> [f64; 6] {
        let s = q.sqrt();
        let d = 1.0 - u / s;
        let cross = (u - s) / d;
        let horiz = (u - 1.0 / s) / d;
        let vert = (1.0 - s * u) / d;
        let wn = (1.0 - q) / d;
        let se = (1.0 - 1.0 / q) * u / d;
        [1.0, cross, se, wn, vert, horiz]
    }

    #[test]
    fn uq_examples() {
        assert!(matches!(
            weights_from_uq(3.0, 4.0, false),
            Err(Error::NonPositiveWeight { .. })
        ));
        let raw = weights_from_uq(3.0, 4.0, true).unwrap();
        assert!((raw.w_cross + 2.0).abs() < 1e-15);

        // u = sqrt(q) zeroes the cross numerator and the denominator together.
        assert_eq!(
            weights_from_uq(2.0, 4.0, false).unwrap_err(),
            Error::DegenerateDenominator
        );

        // q = 1/4, u = -1: d = 3.
        let raw = weights_from_uq(-1.0, 0.25, true).unwrap();
        let frozen = [1.0, -0.5, 1.0, 0.25, 0.5, -1.0];
        assert_eq!(uq_oracle(-1.0, 0.25), frozen);
        for (a, b) in raw.to_array().iter().zip(frozen) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!(!raw.is_positive());

        assert_eq!(
            weights_from_uq(2.0, 4.0, true).unwrap_err(),
            Error::DegenerateDenominator
        );
        assert!(weights_from_uq(1.0, -1.0, true).is_err());
    }

    #[test]
    fn uq_grid_never_all_positive() {
        let mut positive = 0;
        for i in 0..200 {
            for j in 1..200 {
                let u = -10.0 + 0.1 * i as f64;
                let q = 0.05 * j as f64;
                if let Ok(w) = weights_from_uq(u, q, true) {
                    let o = uq_oracle(u, q);
                    for (a, b) in w.to_array().iter().zip(o) {
                        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
                    }
                    if w.is_positive() {
                        positive += 1;
                    }
                }
            }
        }
        assert_eq!(positive, 0);
    }
}
