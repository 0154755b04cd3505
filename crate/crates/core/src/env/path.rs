//! Reference paths through the synthetic intersection.
//!
//! World frame: x east, y north, origin at the intersection centre. The ego
//! approaches northbound in the lane centred on `x = LANE_WIDTH / 2`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::config::Maneuver;

pub const LANE_WIDTH: f64 = 3.5;
pub const APPROACH_LENGTH: f64 = 60.0;
pub const EXIT_LENGTH: f64 = 60.0;
/// Distance of the path start behind the ego spawn point, leaving room for
/// the rear vehicle.
pub const LEAD_IN: f64 = 10.0;
pub const RIGHT_TURN_RADIUS: f64 = 8.0;
pub const LEFT_TURN_RADIUS: f64 = 10.0;
const SAMPLE_SPACING: f64 = 0.5;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Result of projecting a point onto the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point, m.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel, m.
    pub d: f64,
    /// Path heading at the foot point, rad.
    pub heading: f64,
    pub segment: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    points: Vec<(f64, f64)>,
    /// Cumulative arc length at each point.
    s: Vec<f64>,
    /// Heading of the segment starting at each point.
    headings: Vec<f64>,
    maneuver: Maneuver,
}

impl ReferencePath {
    pub fn for_maneuver(maneuver: Maneuver) -> Self {
        let x0 = LANE_WIDTH / 2.0;
        let y_start = -LANE_WIDTH - APPROACH_LENGTH - LEAD_IN;
        let mut pts = Vec::new();
        match maneuver {
            Maneuver::Straight => {
                let y_end = LANE_WIDTH + EXIT_LENGTH;
                push_line(&mut pts, (x0, y_start), (x0, y_end));
            }
            Maneuver::Right => {
                let r = RIGHT_TURN_RADIUS;
                let y_turn = -x0 - r;
                let centre = (x0 + r, y_turn);
                push_line(&mut pts, (x0, y_start), (x0, y_turn));
                push_arc(&mut pts, centre, r, PI, FRAC_PI_2);
                let exit_start = (centre.0, centre.1 + r);
                push_line(&mut pts, exit_start, (exit_start.0 + EXIT_LENGTH, exit_start.1));
            }
            Maneuver::Left => {
                let r = LEFT_TURN_RADIUS;
                let y_turn = x0 - r;
                let centre = (x0 - r, y_turn);
                push_line(&mut pts, (x0, y_start), (x0, y_turn));
                push_arc(&mut pts, centre, r, 0.0, FRAC_PI_2);
                let exit_start = (centre.0, centre.1 + r);
                push_line(&mut pts, exit_start, (exit_start.0 - EXIT_LENGTH, exit_start.1));
            }
        }
        Self::from_points(pts, maneuver)
    }

    /// Builds a path from a polyline; consecutive duplicate points are dropped.
    pub fn from_points(raw: Vec<(f64, f64)>, maneuver: Maneuver) -> Self {
        let mut points: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for p in raw {
            if points
                .last()
                .is_none_or(|q| (p.0 - q.0).hypot(p.1 - q.1) > 1e-9)
            {
                points.push(p);
            }
        }
        assert!(points.len() >= 2, "a path needs at least two distinct points");
        let mut s = Vec::with_capacity(points.len());
        let mut headings = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        s.push(0.0);
        for w in points.windows(2) {
            let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            acc += dx.hypot(dy);
            s.push(acc);
            headings.push(dy.atan2(dx));
        }
        let last = *headings.last().unwrap();
        headings.push(last);
        Self {
            points,
            s,
            headings,
            maneuver,
        }
    }

    pub fn maneuver(&self) -> Maneuver {
        self.maneuver
    }

    pub fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.s
    }

    pub fn headings(&self) -> &[f64] {
        &self.headings
    }

    fn segment_at(&self, s: f64) -> usize {
        match self.s.binary_search_by(|v| v.total_cmp(&s)) {
            Ok(i) => i.min(self.points.len() - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`; extrapolates linearly beyond either end.
    pub fn position_at(&self, s: f64) -> (f64, f64) {
        let i = self.segment_at(s);
        let h = self.headings[i];
        let ds = s - self.s[i];
        let (x, y) = self.points[i];
        (x + ds * h.cos(), y + ds * h.sin())
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.headings[self.segment_at(s)]
    }

    /// Projects `(x, y)` onto the path. With a `hint` segment only a window
    /// around it is searched.
    pub fn project(&self, x: f64, y: f64, hint: Option<usize>) -> Projection {
        let n_seg = self.points.len() - 1;
        let (lo, hi) = match hint {
            Some(h) => (h.saturating_sub(40), (h + 80).min(n_seg)),
            None => (0, n_seg),
        };
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in lo..hi {
            let (ax, ay) = self.points[i];
            let (bx, by) = self.points[i + 1];
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let mut t = ((x - ax) * dx + (y - ay) * dy) / len2;
            // The first and last segments extend to infinity.
            if i > 0 {
                t = t.max(0.0);
            }
            if i + 1 < n_seg {
                t = t.min(1.0);
            }
            let (fx, fy) = (ax + t * dx, ay + t * dy);
            let dist2 = (x - fx).powi(2) + (y - fy).powi(2);
            if dist2 < best.0 {
                best = (dist2, i, t);
            }
        }
        let (_, i, t) = best;
        let (ax, ay) = self.points[i];
        let h = self.headings[i];
        let seg_len = self.s[i + 1] - self.s[i];
        let s = self.s[i] + t * seg_len;
        let d = -(x - ax) * h.sin() + (y - ay) * h.cos();
        Projection {
            s,
            d,
            heading: h,
            segment: i,
        }
    }
}

fn push_line(pts: &mut Vec<(f64, f64)>, a: (f64, f64), b: (f64, f64)) {
    let len = (b.0 - a.0).hypot(b.1 - a.1);
    let n = (len / SAMPLE_SPACING).ceil().max(1.0) as usize;
    for k in 0..=n {
        let t = k as f64 / n as f64;
        pts.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
    }
}

/// Arc from polar angle `from` to `to` (radians about `centre`).
fn push_arc(pts: &mut Vec<(f64, f64)>, centre: (f64, f64), r: f64, from: f64, to: f64) {
    let sweep = to - from;
    let n = ((sweep.abs() * r) / SAMPLE_SPACING).ceil().max(1.0) as usize;
    for k in 0..=n {
        let a = from + sweep * k as f64 / n as f64;
        pts.push((centre.0 + r * a.cos(), centre.1 + r * a.sin()));
    }
}
