//! Prompt points and their refinement in pixel space.
//!
//! Hard negatives are geometrically negatives: they are excluded around
//! positives and sparsified together with background negatives, but keep
//! their own class so callers can drop either kind.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptClass {
    Positive,
    Negative,
    HardNegative,
}

impl PromptClass {
    pub fn is_negative(self) -> bool {
        !matches!(self, PromptClass::Positive)
    }

    /// Same side of the foreground/background split.
    pub fn same_side(self, other: PromptClass) -> bool {
        self.is_negative() == other.is_negative()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptPoint {
    pub x: u32,
    pub y: u32,
    pub class: PromptClass,
}

impl PromptPoint {
    pub fn new(x: u32, y: u32, class: PromptClass) -> Self {
        Self { x, y, class }
    }

    pub fn distance_sq(&self, other: &PromptPoint) -> u64 {
        let dx = self.x.abs_diff(other.x) as u64;
        let dy = self.y.abs_diff(other.y) as u64;
        dx * dx + dy * dy
    }

    pub fn distance(&self, other: &PromptPoint) -> f64 {
        (self.distance_sq(other) as f64).sqrt()
    }

    fn within(&self, other: &PromptPoint, radius: f64) -> bool {
        self.distance_sq(other) as f64 <= radius * radius
    }
}

/// Labelled point set for one target image.
///
/// Points are kept in insertion order; a point repeating an existing
/// `(x, y, class)` triple is dropped. Equality compares the per-class
/// sequences, which is what the JSON form preserves.
#[derive(Clone, Debug)]
pub struct PromptScheme {
    width: u32,
    height: u32,
    points: Vec<PromptPoint>,
}

impl PromptScheme {
    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            points: Vec::new(),
        }
    }

    pub fn new(
        width: u32,
        height: u32,
        points: impl IntoIterator<Item = PromptPoint>,
    ) -> Result<Self> {
        let mut scheme = Self::empty(width, height);
        for p in points {
            scheme.push(p)?;
        }
        Ok(scheme)
    }

    /// Appends a point; returns `Ok(false)` if it was a duplicate.
    pub fn push(&mut self, point: PromptPoint) -> Result<bool> {
        if point.x >= self.width || point.y >= self.height {
            return Err(Error::InvalidValue(format!(
                "prompt point ({}, {}) outside {}x{} image",
                point.x, point.y, self.width, self.height
            )));
        }
        if self.points.contains(&point) {
            return Ok(false);
        }
        self.points.push(point);
        Ok(true)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn points(&self) -> &[PromptPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn of_class(&self, class: PromptClass) -> impl Iterator<Item = &PromptPoint> + '_ {
        self.points.iter().filter(move |p| p.class == class)
    }

    pub fn count(&self, class: PromptClass) -> usize {
        self.of_class(class).count()
    }

    pub fn positives(&self) -> impl Iterator<Item = &PromptPoint> + '_ {
        self.of_class(PromptClass::Positive)
    }

    pub fn negatives(&self) -> impl Iterator<Item = &PromptPoint> + '_ {
        self.points.iter().filter(|p| p.class.is_negative())
    }

    /// Keeps the points for which `keep` returns true, preserving order.
    pub fn retain(&self, mut keep: impl FnMut(&PromptPoint) -> bool) -> PromptScheme {
        PromptScheme {
            width: self.width,
            height: self.height,
            points: self.points.iter().copied().filter(|p| keep(p)).collect(),
        }
    }
}

impl PartialEq for PromptScheme {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && [
                PromptClass::Positive,
                PromptClass::Negative,
                PromptClass::HardNegative,
            ]
            .into_iter()
            .all(|c| self.of_class(c).eq(other.of_class(c)))
    }
}

impl Eq for PromptScheme {}

/// How a radius fraction maps to pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RadiusBase {
    #[default]
    Min,
    Max,
    GeometricMean,
}

impl RadiusBase {
    pub fn base_length(self, width: u32, height: u32) -> f64 {
        let (w, h) = (width as f64, height as f64);
        match self {
            RadiusBase::Min => w.min(h),
            RadiusBase::Max => w.max(h),
            RadiusBase::GeometricMean => (w * h).sqrt(),
        }
    }
}

/// Radius as a fraction of the image size, in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct RadiusSpec(f64);

impl RadiusSpec {
    pub const ZERO: RadiusSpec = RadiusSpec(0.0);

    pub fn new(fraction: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&fraction) {
            Ok(Self(fraction))
        } else {
            Err(Error::InvalidValue(format!(
                "radius fraction {fraction} outside [0, 1]"
            )))
        }
    }

    /// Unchecked; used by config parsing, which validates separately.
    pub(crate) fn raw(fraction: f64) -> Self {
        Self(fraction)
    }

    pub fn fraction(self) -> f64 {
        self.0
    }

    pub fn resolve(self, width: u32, height: u32, base: RadiusBase) -> f64 {
        self.0 * base.base_length(width, height)
    }
}

/// `fraction x min(width, height)` in pixels.
pub fn resolve_radius(spec: RadiusSpec, width: u32, height: u32) -> f64 {
    spec.resolve(width, height, RadiusBase::Min)
}

/// Drops every negative (plain or hard) that lies within `radius` of some
/// positive, closed ball. Positives are untouched.
pub fn exclusive_sampling(scheme: &PromptScheme, radius: f64) -> PromptScheme {
    let positives: Vec<PromptPoint> = scheme.positives().copied().collect();
    scheme.retain(|p| !p.class.is_negative() || positives.iter().all(|pos| !pos.within(p, radius)))
}

/// Thins one side of the scheme so that no two retained points on that side
/// are within `radius` of each other.
///
/// Candidates are visited in descending order of their mean distance to the
/// opposite side (ties by `(y, x)`), and a point is accepted unless an
/// already accepted point sits within `radius`. `Negative` and
/// `HardNegative` select the same side. Radius 0 is the identity.
pub fn sparse_sampling(scheme: &PromptScheme, class: PromptClass, radius: f64) -> PromptScheme {
    if radius <= 0.0 {
        return scheme.clone();
    }
    let opposite: Vec<&PromptPoint> = scheme
        .points()
        .iter()
        .filter(|p| !p.class.same_side(class))
        .collect();
    let mut candidates: Vec<(usize, f64)> = scheme
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| p.class.same_side(class))
        .map(|(i, p)| {
            let mean = if opposite.is_empty() {
                0.0
            } else {
                opposite.iter().map(|o| o.distance(p)).sum::<f64>() / opposite.len() as f64
            };
            (i, mean)
        })
        .collect();

    let points = scheme.points();
    candidates.sort_by(|&(ia, ma), &(ib, mb)| {
        let (a, b) = (&points[ia], &points[ib]);
        mb.partial_cmp(&ma)
            .unwrap_or(Ordering::Equal)
            .then(a.y.cmp(&b.y))
            .then(a.x.cmp(&b.x))
            .then(ia.cmp(&ib))
    });

    let mut accepted: Vec<usize> = Vec::new();
    for (i, _) in candidates {
        if accepted
            .iter()
            .all(|&a| !points[a].within(&points[i], radius))
        {
            accepted.push(i);
        }
    }
    let keep: HashSet<usize> = accepted.into_iter().collect();
    let mut index = 0;
    scheme.retain(|p| {
        let i = index;
        index += 1;
        !p.class.same_side(class) || keep.contains(&i)
    })
}

/// Adds hard negatives to the scheme.
///
/// Hard points within `radius_exclusive` of a positive are rejected (the
/// exclusion rule applied to the incoming points only), as are points that
/// repeat the coordinates of a negative already present.
pub fn merge_hard_negatives(
    scheme: &PromptScheme,
    hard: &[PromptPoint],
    radius_exclusive: f64,
) -> Result<PromptScheme> {
    let positives: Vec<PromptPoint> = scheme.positives().copied().collect();
    let mut merged = scheme.clone();
    let mut occupied: HashSet<(u32, u32)> = scheme.negatives().map(|p| (p.x, p.y)).collect();
    for h in hard {
        let point = PromptPoint::new(h.x, h.y, PromptClass::HardNegative);
        if positives
            .iter()
            .any(|pos| pos.within(&point, radius_exclusive))
        {
            continue;
        }
        if occupied.insert((point.x, point.y)) {
            merged.push(point)?;
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use PromptClass::*;

    fn scheme(points: &[(u32, u32, PromptClass)]) -> PromptScheme {
        PromptScheme::new(
            200,
            200,
            points.iter().map(|&(x, y, c)| PromptPoint::new(x, y, c)),
        )
        .unwrap()
    }

    #[test]
    fn resolve_radius_examples() {
        assert_eq!(
            resolve_radius(RadiusSpec::new(0.25).unwrap(), 400, 400),
            100.0
        );
        assert_eq!(resolve_radius(RadiusSpec::ZERO, 123, 77), 0.0);
        assert_eq!(
            resolve_radius(RadiusSpec::new(0.125).unwrap(), 200, 400),
            25.0
        );
        assert!(RadiusSpec::new(1.5).is_err());
        assert!(RadiusSpec::new(-0.1).is_err());
        assert_eq!(
            RadiusSpec::new(0.5)
                .unwrap()
                .resolve(100, 400, RadiusBase::Max),
            200.0
        );
        assert_eq!(
            RadiusSpec::new(0.5)
                .unwrap()
                .resolve(100, 400, RadiusBase::GeometricMean),
            100.0
        );
    }

    #[test]
    fn scheme_dedupes_and_checks_bounds() {
        let s = scheme(&[(1, 1, Positive), (1, 1, Positive), (1, 1, Negative)]);
        assert_eq!(s.len(), 2);
        assert!(PromptScheme::new(10, 10, [PromptPoint::new(10, 0, Positive)]).is_err());
    }

    #[test]
    fn exclusive_removes_close_negative() {
        let s = scheme(&[(10, 10, Positive), (12, 10, Negative)]);
        assert_eq!(exclusive_sampling(&s, 5.0).count(Negative), 0);
    }

    #[test]
    fn exclusive_keeps_far_negative() {
        let s = scheme(&[(10, 10, Positive), (100, 100, Negative)]);
        assert_eq!(exclusive_sampling(&s, 5.0).count(Negative), 1);
    }

    #[test]
    fn exclusive_is_closed_ball() {
        let s = scheme(&[(0, 0, Positive), (3, 4, Negative), (3, 4, HardNegative)]);
        assert_eq!(exclusive_sampling(&s, 5.0).len(), 1);
        assert_eq!(exclusive_sampling(&s, 4.999).len(), 3);
    }

    #[test]
    fn sparse_keeps_farthest_negative() {
        let s = scheme(&[(0, 0, Negative), (3, 0, Negative), (10, 0, Positive)]);
        let out = sparse_sampling(&s, Negative, 5.0);
        let negs: Vec<_> = out.negatives().copied().collect();
        assert_eq!(negs, vec![PromptPoint::new(0, 0, Negative)]);
        assert_eq!(out.count(Positive), 1);
    }

    #[test]
    fn sparse_radius_zero_is_identity() {
        let s = scheme(&[
            (0, 0, Negative),
            (0, 0, HardNegative),
            (1, 0, Positive),
            (2, 0, Positive),
        ]);
        assert_eq!(sparse_sampling(&s, Positive, 0.0), s);
        assert_eq!(sparse_sampling(&s, Negative, 0.0), s);
    }

    #[test]
    fn sparse_single_point_kept() {
        let s = scheme(&[(5, 5, Positive)]);
        assert_eq!(sparse_sampling(&s, Positive, 50.0), s);
    }

    #[test]
    fn sparse_treats_hard_as_negative_side() {
        let s = scheme(&[(0, 0, Negative), (2, 0, HardNegative), (50, 0, Positive)]);
        let out = sparse_sampling(&s, Negative, 5.0);
        assert_eq!(out.negatives().count(), 1);
        assert_eq!(out.count(Negative), 1);
    }

    #[test]
    fn sparse_ties_break_by_row_then_column() {
        // no opposite class: all means are zero
        let s = scheme(&[(4, 1, Positive), (1, 1, Positive), (1, 0, Positive)]);
        let out = sparse_sampling(&s, Positive, 10.0);
        assert_eq!(out.points(), &[PromptPoint::new(1, 0, Positive)]);
    }

    #[test]
    fn merge_empty_hard_is_identity() {
        let s = scheme(&[(10, 10, Positive), (100, 100, Negative)]);
        assert_eq!(merge_hard_negatives(&s, &[], 5.0).unwrap(), s);
    }

    #[test]
    fn merge_rejects_hard_near_positive() {
        let s = scheme(&[(10, 10, Positive)]);
        let out = merge_hard_negatives(&s, &[PromptPoint::new(11, 10, HardNegative)], 5.0).unwrap();
        assert_eq!(out.count(HardNegative), 0);
    }

    #[test]
    fn merge_adds_far_hard_point() {
        let s = scheme(&[(10, 10, Positive), (150, 10, Negative)]);
        let hard = [
            PromptPoint::new(100, 100, HardNegative),
            PromptPoint::new(150, 10, HardNegative),
        ];
        let out = merge_hard_negatives(&s, &hard, 5.0).unwrap();
        assert_eq!(
            out.of_class(HardNegative).copied().collect::<Vec<_>>(),
            vec![PromptPoint::new(100, 100, HardNegative)]
        );
        assert_eq!(out.count(Negative), 1);
    }
}
