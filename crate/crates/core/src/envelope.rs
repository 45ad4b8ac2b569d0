//! Lower convex envelope of a finite point set.

use crate::rational::Rational;

/// Lower hull of `points` (any order), left to right.
pub fn lower_hull(points: &[(Rational, Rational)]) -> Vec<(Rational, Rational)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    pts.dedup_by(|b, a| a.0 == b.0);
    let mut hull: Vec<(Rational, Rational)> = Vec::with_capacity(pts.len());
    for p in pts {
        while hull.len() >= 2 {
            let (a, b) = (&hull[hull.len() - 2], &hull[hull.len() - 1]);
            let cross = (&b.0 - &a.0) * (&p.1 - &a.1) - (&b.1 - &a.1) * (&p.0 - &a.0);
            if cross <= Rational::from_integer(0.into()) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Value of the lower convex envelope of `points` at `x`, or `None` when `x`
/// lies outside their range.
pub fn lowc(points: &[(Rational, Rational)], x: &Rational) -> Option<Rational> {
    let hull = lower_hull(points);
    eval_hull(&hull, x)
}

pub fn eval_hull(hull: &[(Rational, Rational)], x: &Rational) -> Option<Rational> {
    let first = hull.first()?;
    if x < &first.0 || x > &hull.last()?.0 {
        return None;
    }
    if hull.len() == 1 {
        return Some(first.1.clone());
    }
    for w in hull.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if x >= &a.0 && x <= &b.0 {
            return Some(&a.1 + (&b.1 - &a.1) * (x - &a.0) / (&b.0 - &a.0));
        }
    }
    None
}
