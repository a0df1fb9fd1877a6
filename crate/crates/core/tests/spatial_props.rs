mod common;

use common::*;
use promptforge::eval::dice;
use promptforge::segmenter::baseline_segment;
use promptforge::spatial::{
    exclusive_sampling, merge_hard_negatives, resolve_radius, sparse_sampling,
};
use promptforge::{MaskImage, PromptClass, PromptPoint, PromptScheme, RadiusBase, RadiusSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use PromptClass::{HardNegative as Hard, Negative as Neg, Positive as Pos};

fn scheme(w: u32, h: u32, points: &[(u32, u32, PromptClass)]) -> PromptScheme {
    PromptScheme::new(
        w,
        h,
        points.iter().map(|&(x, y, c)| PromptPoint::new(x, y, c)),
    )
    .unwrap()
}

/// Greedy thinning written out independently of the library.
fn brute_sparse(s: &PromptScheme, class: PromptClass, radius: f64) -> Vec<PromptPoint> {
    if radius == 0.0 {
        return s.points().to_vec();
    }
    let side = |c: PromptClass| (c == Pos) == (class == Pos);
    let opp: Vec<PromptPoint> = s
        .points()
        .iter()
        .filter(|p| !side(p.class))
        .copied()
        .collect();
    let mut cand: Vec<(f64, PromptPoint)> = s
        .points()
        .iter()
        .filter(|p| side(p.class))
        .map(|p| {
            let m = if opp.is_empty() {
                0.0
            } else {
                opp.iter().map(|o| dist(p, o)).sum::<f64>() / opp.len() as f64
            };
            (m, *p)
        })
        .collect();
    cand.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.y.cmp(&b.1.y))
            .then(a.1.x.cmp(&b.1.x))
    });
    let mut acc: Vec<PromptPoint> = Vec::new();
    for (_, p) in cand {
        if acc.iter().all(|a| dist(a, &p) > radius) {
            acc.push(p);
        }
    }
    s.points()
        .iter()
        .filter(|p| !side(p.class) || acc.contains(p))
        .copied()
        .collect()
}

#[test]
fn radius_examples() {
    assert_eq!(
        resolve_radius(RadiusSpec::new(0.25).unwrap(), 400, 400),
        100.0
    );
    assert_eq!(resolve_radius(RadiusSpec::new(0.0).unwrap(), 31, 77), 0.0);
    assert_eq!(
        resolve_radius(RadiusSpec::new(0.125).unwrap(), 200, 400),
        25.0
    );
    let spec = RadiusSpec::new(0.5).unwrap();
    assert_eq!(spec.resolve(100, 400, RadiusBase::Max), 200.0);
    assert_eq!(spec.resolve(100, 400, RadiusBase::GeometricMean), 100.0);
    assert!(RadiusSpec::new(1.5).is_err());
    assert!(RadiusSpec::new(-0.1).is_err());
}

#[test]
fn exclusive_examples() {
    let s = scheme(200, 200, &[(10, 10, Pos), (12, 10, Neg)]);
    assert_eq!(exclusive_sampling(&s, 5.0).count(Neg), 0);
    let s = scheme(200, 200, &[(10, 10, Pos), (100, 100, Neg)]);
    assert_eq!(exclusive_sampling(&s, 5.0).count(Neg), 1);
    // closed ball: exactly on the radius is removed
    let s = scheme(200, 200, &[(10, 10, Pos), (13, 14, Hard)]);
    assert_eq!(exclusive_sampling(&s, 5.0).count(Hard), 0);
}

#[test]
fn fifty_random_points_match_pairwise_filter() {
    let mut r = rng(21);
    for _ in 0..100 {
        let mut pts = Vec::new();
        for _ in 0..50 {
            pts.push(PromptPoint::new(
                r.random_range(0..100),
                r.random_range(0..100),
                random_class(&mut r),
            ));
        }
        let s = PromptScheme::new(100, 100, pts).unwrap();
        let radius = r.random_range(0.0..30.0);
        assert_eq!(
            exclusive_sampling(&s, radius).points(),
            brute_exclusive(&s, radius).as_slice()
        );
    }
}

#[test]
fn sparse_examples() {
    let s = scheme(20, 5, &[(0, 0, Neg), (3, 0, Neg), (10, 0, Pos)]);
    let out = sparse_sampling(&s, Neg, 5.0);
    assert_eq!(
        out.points(),
        &[PromptPoint::new(0, 0, Neg), PromptPoint::new(10, 0, Pos)]
    );
    assert_eq!(sparse_sampling(&s, Neg, 0.0), s);
    let single = scheme(20, 5, &[(4, 4, Pos), (0, 0, Neg)]);
    assert_eq!(sparse_sampling(&single, Pos, 50.0), single);
    // hard negatives are thinned with the negatives
    let s = scheme(20, 5, &[(0, 0, Neg), (2, 0, Hard), (10, 0, Pos)]);
    assert_eq!(sparse_sampling(&s, Neg, 5.0).count(Hard), 0);
}

#[test]
fn merge_examples() {
    let s = scheme(100, 100, &[(50, 50, Pos), (5, 5, Neg)]);
    assert_eq!(merge_hard_negatives(&s, &[], 5.0).unwrap(), s);
    let near = [PromptPoint::new(51, 50, Hard)];
    assert_eq!(merge_hard_negatives(&s, &near, 5.0).unwrap(), s);
    let far = [PromptPoint::new(90, 90, Hard)];
    let merged = merge_hard_negatives(&s, &far, 5.0).unwrap();
    assert_eq!(merged.of_class(Hard).collect::<Vec<_>>(), vec![&far[0]]);
    let dup = [PromptPoint::new(5, 5, Hard)];
    assert_eq!(merge_hard_negatives(&s, &dup, 5.0).unwrap(), s);
}

#[test]
fn baseline_examples() {
    let m = baseline_segment(&scheme(10, 1, &[(0, 0, Pos), (9, 0, Neg)])).unwrap();
    assert_eq!(m.data(), &[1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
    let m = baseline_segment(&scheme(9, 9, &[(4, 4, Pos)])).unwrap();
    assert_eq!(m.count_ones(), 81);
    let m = baseline_segment(&scheme(16, 8, &[(3, 4, Pos), (12, 4, Neg)])).unwrap();
    assert_eq!(m, MaskImage::from_fn(16, 8, |x, _| x < 8));
}

#[test]
fn dice_examples() {
    let a = MaskImage::from_fn(4, 4, |x, _| x < 1);
    assert_eq!(dice(&a, &a).unwrap(), 1.0);
    let b = MaskImage::from_fn(4, 4, |x, _| x == 3);
    assert_eq!(dice(&a, &b).unwrap(), 0.0);
    let c = MaskImage::from_fn(4, 4, |x, y| x < 1 && y < 2 || x == 1 && y < 2);
    assert_eq!(dice(&a, &c).unwrap(), 0.5);
    assert_eq!(
        dice(&MaskImage::zeros(3, 3), &MaskImage::zeros(3, 3)).unwrap(),
        1.0
    );
    assert!(dice(&a, &MaskImage::zeros(3, 4)).is_err());
}

fn per_pixel_baseline(s: &PromptScheme) -> MaskImage {
    MaskImage::from_fn(s.width() as usize, s.height() as usize, |x, y| {
        let here = PromptPoint::new(x as u32, y as u32, Pos);
        let best = |neg: bool| {
            s.points()
                .iter()
                .filter(|p| p.class.is_negative() == neg)
                .map(|p| here.distance_sq(p))
                .min()
                .unwrap_or(u64::MAX)
        };
        best(false) < best(true)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exclusive_post_state_and_idempotence(seed in any::<u64>(), radius in 0.0f64..40.0) {
        let mut r = rng(seed);
        let s = random_scheme(&mut r, 80, 60, 60);
        let out = exclusive_sampling(&s, radius);
        for p in out.positives() {
            for n in out.negatives() {
                prop_assert!(dist(p, n) > radius);
            }
        }
        prop_assert_eq!(out.count(Pos), s.count(Pos));
        prop_assert_eq!(exclusive_sampling(&out, radius), out.clone());
        prop_assert_eq!(out.points().to_vec(), brute_exclusive(&s, radius));
    }

    #[test]
    fn sparse_post_state_and_idempotence(seed in any::<u64>(), radius in 0.0f64..30.0, positive in any::<bool>()) {
        let mut r = rng(seed);
        let s = random_scheme(&mut r, 80, 60, 60);
        let class = if positive { Pos } else { Neg };
        let out = sparse_sampling(&s, class, radius);
        prop_assert_eq!(out.points().to_vec(), brute_sparse(&s, class, radius));
        let side: Vec<&PromptPoint> = out.points().iter().filter(|p| p.class.same_side(class)).collect();
        if radius > 0.0 {
            for (i, a) in side.iter().enumerate() {
                for b in &side[i + 1..] {
                    prop_assert!(dist(a, b) > radius);
                }
            }
        }
        for p in s.points().iter().filter(|p| !p.class.same_side(class)) {
            prop_assert!(out.points().contains(p));
        }
        prop_assert!(out.points().iter().all(|p| s.points().contains(p)));
        prop_assert_eq!(sparse_sampling(&out, class, radius), out.clone());
    }

    #[test]
    fn merge_respects_exclusion(seed in any::<u64>(), radius in 0.0f64..30.0) {
        let mut r = rng(seed);
        let s = random_scheme(&mut r, 80, 60, 30);
        let hard: Vec<PromptPoint> = (0..r.random_range(0..20))
            .map(|_| PromptPoint::new(r.random_range(0..80), r.random_range(0..60), Hard))
            .collect();
        let out = merge_hard_negatives(&s, &hard, radius).unwrap();
        prop_assert_eq!(out.positives().collect::<Vec<_>>(), s.positives().collect::<Vec<_>>());
        for p in out.points().iter().filter(|p| !s.points().contains(p)) {
            prop_assert_eq!(p.class, Hard);
            prop_assert!(hard.contains(p));
            prop_assert!(s.positives().all(|q| dist(p, q) > radius));
            prop_assert!(!s.negatives().any(|n| (n.x, n.y) == (p.x, p.y)));
        }
    }

    #[test]
    fn baseline_matches_pixel_oracle_and_is_order_free(seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_scheme(&mut r, 24, 18, 12);
        prop_assume!(s.count(Pos) > 0);
        let m = baseline_segment(&s).unwrap();
        prop_assert_eq!(&m, &per_pixel_baseline(&s));
        let mut pts = s.points().to_vec();
        pts.shuffle(&mut r);
        let shuffled = PromptScheme::new(24, 18, pts).unwrap();
        prop_assert_eq!(baseline_segment(&shuffled).unwrap(), m);
    }

    #[test]
    fn baseline_monotone_in_prompts(seed in any::<u64>(), x in 0u32..24, y in 0u32..18) {
        let mut r = rng(seed);
        let s = random_scheme(&mut r, 24, 18, 12);
        prop_assume!(s.count(Pos) > 0);
        let m = baseline_segment(&s).unwrap();
        let mut with_neg = s.clone();
        with_neg.push(PromptPoint::new(x, y, Neg)).unwrap();
        let shrunk = baseline_segment(&with_neg).unwrap();
        let mut with_pos = s.clone();
        with_pos.push(PromptPoint::new(x, y, Pos)).unwrap();
        let grown = baseline_segment(&with_pos).unwrap();
        for i in 0..m.data().len() {
            prop_assert!(shrunk.data()[i] <= m.data()[i]);
            prop_assert!(grown.data()[i] >= m.data()[i]);
        }
    }

    #[test]
    fn dice_symmetric_and_bounded(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = MaskImage::from_fn(9, 7, |_, _| r.random_bool(0.4));
        let b = MaskImage::from_fn(9, 7, |_, _| r.random_bool(0.4));
        let d = dice(&a, &b).unwrap();
        prop_assert_eq!(d, dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        let inter = a.data().iter().zip(b.data()).filter(|(x, y)| **x == 1 && **y == 1).count() as f64;
        let total = (a.count_ones() + b.count_ones()) as f64;
        let expected = if total == 0.0 { 1.0 } else { 2.0 * inter / total };
        prop_assert!((d - expected).abs() < 1e-12);
    }
}
