//! Local reference trajectory: a window of N+1 points sampled along the
//! global polyline at the sampling speed, advanced one sample per planning
//! step whenever the last solve ended close enough to the window's final
//! point.

use thiserror::Error;

use crate::real::{real, Real};
use crate::vec3::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum ReferenceError {
    #[error("polyline has no points")]
    EmptyPolyline,
}

/// Window of reference positions `points[0..=N]`; velocity and acceleration
/// references are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceWindow<T> {
    pub points: Vec<Vec3<T>>,
    /// Arc-length offset of `points[0]` along the polyline.
    pub arc_offset: T,
}

/// Arc-length parameterization of a polyline.
#[derive(Debug, Clone)]
pub struct Polyline<T> {
    points: Vec<Vec3<T>>,
    cum: Vec<T>,
}

impl<T: Real> Polyline<T> {
    pub fn new(points: &[Vec3<T>]) -> Result<Self, ReferenceError> {
        if points.is_empty() {
            return Err(ReferenceError::EmptyPolyline);
        }
        let mut cum = Vec::with_capacity(points.len());
        let mut acc = T::zero();
        cum.push(acc);
        for w in points.windows(2) {
            acc += (w[1] - w[0]).norm();
            cum.push(acc);
        }
        Ok(Self { points: points.to_vec(), cum })
    }

    pub fn total_length(&self) -> T {
        *self.cum.last().unwrap()
    }

    /// Point at arc length `s`, clamped to `[0, total_length]`.
    pub fn point_at(&self, s: T) -> Vec3<T> {
        let s = s.max(T::zero()).min(self.total_length());
        // find segment: cum[i] <= s <= cum[i+1]
        let mut i = match self
            .cum
            .binary_search_by(|c| c.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        if i + 1 >= self.points.len() {
            if self.points.len() == 1 {
                return self.points[0];
            }
            i = self.points.len() - 2;
        }
        let seg = self.cum[i + 1] - self.cum[i];
        if seg <= T::zero() {
            return self.points[i];
        }
        let t = (s - self.cum[i]) / seg;
        self.points[i] + (self.points[i + 1] - self.points[i]) * t
    }

    /// Arc offset of the point on the polyline closest to `p` (earliest on
    /// ties).
    pub fn project(&self, p: Vec3<T>) -> T {
        let mut best_d = T::infinity();
        let mut best_s = T::zero();
        if self.points.len() == 1 {
            return T::zero();
        }
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b - a;
            let len_sq = ab.norm_sq();
            let t = if len_sq > T::zero() {
                ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one())
            } else {
                T::zero()
            };
            let q = a + ab * t;
            let d = (p - q).norm_sq();
            if d < best_d {
                best_d = d;
                best_s = self.cum[i] + ab.norm() * t;
            }
        }
        best_s
    }
}

/// Samples `N+1` points starting at `start_offset`, stepping `v_samp * h`
/// of arc length per point and clamping at the polyline end.
pub fn sample_window<T: Real>(
    polyline: &Polyline<T>,
    start_offset: T,
    v_samp: T,
    h: T,
    n: usize,
) -> ReferenceWindow<T> {
    let step = v_samp * h;
    let points = (0..=n)
        .map(|k| polyline.point_at(start_offset + real::<T>(k as f64) * step))
        .collect();
    ReferenceWindow { points, arc_offset: start_offset.min(polyline.total_length()) }
}

/// Advance rule: if the achieved final position ended within `thresh_dist`
/// of the window's final reference point, the window slides forward by one
/// sample; otherwise it is reused unchanged.
pub fn advance_window<T: Real>(
    prev: &ReferenceWindow<T>,
    achieved_final_position: Vec3<T>,
    thresh_dist: T,
    polyline: &Polyline<T>,
    v_samp: T,
    h: T,
    n: usize,
) -> ReferenceWindow<T> {
    let last = *prev.points.last().expect("window has N+1 points");
    if (achieved_final_position - last).norm() <= thresh_dist {
        let next_offset = (prev.arc_offset + v_samp * h).min(polyline.total_length());
        sample_window(polyline, next_offset, v_samp, h, n)
    } else {
        prev.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> Polyline<f64> {
        Polyline::new(&[Vec3::zero(), Vec3::new(10.0, 0.0, 0.0)]).unwrap()
    }

    #[test]
    fn straight_line_sampling() {
        let line = straight();
        let w = sample_window(&line, 0.0, 2.0, 0.1, 3);
        assert_eq!(w.points.len(), 4);
        for (k, p) in w.points.iter().enumerate() {
            let expected = 0.2 * k as f64;
            assert!((p.x - expected).abs() < 1e-12, "{} vs {expected}", p.x);
            assert_eq!(p.y, 0.0);
        }
    }

    #[test]
    fn start_at_end_clamps_to_goal() {
        let line = straight();
        let w = sample_window(&line, 10.0, 2.0, 0.1, 5);
        for p in &w.points {
            assert_eq!(*p, Vec3::new(10.0, 0.0, 0.0));
        }
    }

    #[test]
    fn single_point_polyline() {
        let line = Polyline::new(&[Vec3::new(1.0, 2.0, 3.0)]).unwrap();
        let w = sample_window(&line, 0.0, 2.0, 0.1, 4);
        assert!(w.points.iter().all(|&p| p == Vec3::new(1.0, 2.0, 3.0)));
    }

    #[test]
    fn empty_polyline_rejected() {
        assert_eq!(
            Polyline::<f64>::new(&[]).unwrap_err(),
            ReferenceError::EmptyPolyline
        );
    }

    #[test]
    fn advance_when_achieved_matches_final() {
        let line = straight();
        let w0 = sample_window(&line, 0.0, 2.0, 0.1, 3);
        let achieved = *w0.points.last().unwrap();
        let w1 = advance_window(&w0, achieved, 0.4, &line, 2.0, 0.1, 3);
        assert!((w1.arc_offset - 0.2).abs() < 1e-12);
        assert!((w1.points[0].x - 0.2).abs() < 1e-12);
    }

    #[test]
    fn frozen_when_achieved_far() {
        let line = straight();
        let w0 = sample_window(&line, 1.0, 2.0, 0.1, 3);
        let far = *w0.points.last().unwrap() + Vec3::new(1.0, 0.0, 0.0);
        let w1 = advance_window(&w0, far, 0.4, &line, 2.0, 0.1, 3);
        assert_eq!(w1, w0);
    }

    #[test]
    fn advance_at_clamped_end_is_fixed_point() {
        let line = straight();
        let w0 = sample_window(&line, 10.0, 2.0, 0.1, 3);
        let w1 = advance_window(&w0, *w0.points.last().unwrap(), 0.4, &line, 2.0, 0.1, 3);
        assert_eq!(w1.points, w0.points);
    }

    #[test]
    fn offsets_monotone_and_spacing_bounded() {
        let line: Polyline<f64> = Polyline::new(&[
            Vec3::zero(),
            Vec3::new(2.0, 0.0, 0.0),
            Vec3::new(2.0, 3.0, 0.0),
            Vec3::new(5.0, 3.0, 4.0),
        ])
        .unwrap();
        let (v_samp, h, n) = (1.7, 0.1, 5);
        let mut w = sample_window(&line, 0.0, v_samp, h, n);
        let mut prev_offset = w.arc_offset;
        for _ in 0..100 {
            // consecutive point spacing along the line is at most v_samp*h
            for pair in w.points.windows(2) {
                let d = (pair[1] - pair[0]).norm();
                assert!(d <= v_samp * h + 1e-9);
            }
            // every point lies on the polyline
            for &p in &w.points {
                let q = line.point_at(line.project(p));
                assert!((p - q).norm() <= 1e-9);
            }
            w = advance_window(&w, *w.points.last().unwrap(), 0.4, &line, v_samp, h, n);
            assert!(w.arc_offset >= prev_offset - 1e-12);
            prev_offset = w.arc_offset;
        }
        // eventually clamps at the goal
        assert!((w.arc_offset - line.total_length()).abs() < 1e-9);
    }

    #[test]
    fn projection_finds_nearest_segment() {
        let line: Polyline<f64> = Polyline::new(&[
            Vec3::zero(),
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(4.0, 4.0, 0.0),
        ])
        .unwrap();
        let s = line.project(Vec3::new(2.0, 1.0, 0.0));
        assert!((s - 2.0).abs() < 1e-12);
        let s = line.project(Vec3::new(5.0, 3.0, 0.0));
        assert!((s - 7.0).abs() < 1e-12);
    }
}
