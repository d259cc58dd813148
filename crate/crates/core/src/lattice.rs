//! Finite subsets of Z^d: l^1 cubes, translates, boundary pairs and distances.
//!
//! Every set keeps its points sorted lexicographically so that downstream
//! matrix assembly, sweeps and CSV output are deterministic.

use crate::error::{CoreError, Result};

pub const MAX_DIMENSION: usize = 3;

/// A point of Z^d, d <= 3.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticePoint {
    coords: Vec<i64>,
}

impl std::fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.coords)
    }
}

impl LatticePoint {
    pub fn new(coords: Vec<i64>) -> Result<Self> {
        let d = coords.len();
        if d == 0 || d > MAX_DIMENSION {
            return Err(CoreError::DimensionUnsupported(d));
        }
        Ok(Self { coords })
    }

    pub fn origin(dim: usize) -> Result<Self> {
        Self::new(vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    pub fn norm1(&self) -> i64 {
        self.coords.iter().map(|c| c.abs()).sum()
    }

    pub fn dist1(&self, other: &Self) -> i64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Inner product with a real vector, in fixed coordinate order.
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.coords.iter().zip(v).map(|(c, w)| *c as f64 * w).sum()
    }

    /// Nearest neighbours in Z^d (2d of them).
    pub fn neighbors(&self) -> Vec<LatticePoint> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for i in 0..self.dim() {
            for step in [-1i64, 1] {
                let mut c = self.coords.clone();
                c[i] += step;
                out.push(LatticePoint { coords: c });
            }
        }
        out
    }
}

/// A finite subset of Z^d, sorted lexicographically, no duplicates.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct LatticeSet {
    points: Vec<LatticePoint>,
    dim: usize,
}

/// One boundary pair (w, w') with w inside, w' outside, ||w - w'||_1 = 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundaryPair {
    pub inner: LatticePoint,
    pub outer: LatticePoint,
}

/// Inner boundary, outer boundary, and the full pair list of X relative to Y.
#[derive(Clone, Debug)]
pub struct Boundaries {
    pub inner: LatticeSet,
    pub outer: LatticeSet,
    pub pairs: Vec<BoundaryPair>,
}

impl LatticeSet {
    pub fn new(mut points: Vec<LatticePoint>, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIMENSION {
            return Err(CoreError::DimensionUnsupported(dim));
        }
        for p in &points {
            if p.dim() != dim {
                return Err(CoreError::Domain(format!(
                    "point {:?} has dimension {} in a {}-dimensional set",
                    p,
                    p.dim(),
                    dim
                )));
            }
        }
        points.sort();
        points.dedup();
        Ok(Self { points, dim })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(Vec::new(), dim)
    }

    pub fn singleton(p: LatticePoint) -> Self {
        let dim = p.dim();
        Self {
            points: vec![p],
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[LatticePoint] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LatticePoint> {
        self.points.iter()
    }

    pub fn contains(&self, p: &LatticePoint) -> bool {
        self.points.binary_search(p).is_ok()
    }

    /// Index of `p` in the deterministic ordering.
    pub fn index_of(&self, p: &LatticePoint) -> Option<usize> {
        self.points.binary_search(p).ok()
    }

    pub fn is_subset_of(&self, other: &LatticeSet) -> bool {
        self.points.iter().all(|p| other.contains(p))
    }

    pub fn translate(&self, by: &LatticePoint) -> LatticeSet {
        let points = self.points.iter().map(|p| p.add(by)).collect();
        // Translation preserves lexicographic order.
        LatticeSet {
            points,
            dim: self.dim,
        }
    }

    pub fn union(&self, other: &LatticeSet) -> LatticeSet {
        let mut points = self.points.clone();
        points.extend(other.points.iter().cloned());
        points.sort();
        points.dedup();
        LatticeSet {
            points,
            dim: self.dim,
        }
    }

    pub fn difference(&self, other: &LatticeSet) -> LatticeSet {
        let points = self
            .points
            .iter()
            .filter(|p| !other.contains(p))
            .cloned()
            .collect();
        LatticeSet {
            points,
            dim: self.dim,
        }
    }

    pub fn remove(&self, p: &LatticePoint) -> LatticeSet {
        let points = self.points.iter().filter(|q| *q != p).cloned().collect();
        LatticeSet {
            points,
            dim: self.dim,
        }
    }

    /// Exact minimum of ||x - y||_1 over pairs. Errors on empty input.
    pub fn dist1(&self, other: &LatticeSet) -> Result<i64> {
        if self.is_empty() || other.is_empty() {
            return Err(CoreError::Domain(
                "dist1 requires nonempty sets".to_string(),
            ));
        }
        let mut best = i64::MAX;
        for x in &self.points {
            for y in &other.points {
                best = best.min(x.dist1(y));
            }
        }
        Ok(best)
    }

    /// Boundary of X = self relative to Y: requires X ⊆ Y.
    pub fn boundaries(&self, enclosing: &LatticeSet) -> Result<Boundaries> {
        if !self.is_subset_of(enclosing) {
            return Err(CoreError::Domain(
                "boundaries requires X to be a subset of Y".to_string(),
            ));
        }
        let mut pairs = Vec::new();
        for x in &self.points {
            for y in x.neighbors() {
                if enclosing.contains(&y) && !self.contains(&y) {
                    pairs.push(BoundaryPair {
                        inner: x.clone(),
                        outer: y,
                    });
                }
            }
        }
        let inner = LatticeSet::new(pairs.iter().map(|p| p.inner.clone()).collect(), self.dim)?;
        let outer = LatticeSet::new(pairs.iter().map(|p| p.outer.clone()).collect(), self.dim)?;
        Ok(Boundaries {
            inner,
            outer,
            pairs,
        })
    }
}

/// Closed l^1 ball {y : ||y - center||_1 <= l}.
pub fn cube(l: i64, center: &LatticePoint) -> LatticeSet {
    assert!(l >= 0, "cube radius must be nonnegative");
    let d = center.dim();
    let mut points = Vec::new();
    let mut coords = vec![0i64; d];
    enumerate_ball(d, 0, l, &mut coords, &mut points);
    let translated: Vec<LatticePoint> = points.iter().map(|p| p.add(center)).collect();
    LatticeSet::new(translated, d).expect("cube construction cannot fail")
}

fn enumerate_ball(
    d: usize,
    axis: usize,
    budget: i64,
    coords: &mut Vec<i64>,
    out: &mut Vec<LatticePoint>,
) {
    if axis == d {
        out.push(LatticePoint::new(coords.clone()).expect("dimension checked by caller"));
        return;
    }
    for c in -budget..=budget {
        coords[axis] = c;
        enumerate_ball(d, axis + 1, budget - c.abs(), coords, out);
    }
}

/// Cube centered at the origin, Q_l.
pub fn cube_at_origin(l: i64, dim: usize) -> Result<LatticeSet> {
    Ok(cube(l, &LatticePoint::origin(dim)?))
}
