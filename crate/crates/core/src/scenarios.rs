//! Random reference paths: eight control points with bounded turning,
//! interpolated by a centripetal Catmull-Rom spline and resampled at a fixed
//! arc-length spacing.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::State;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const NUM_CONTROL_POINTS: usize = 8;
pub const MIN_STEP: f64 = 4.0;
pub const MAX_STEP: f64 = 5.0;
pub const DEFAULT_SPACING: f64 = 0.2;

/// Parameter subdivisions per spline segment for the arc-length table.
const ARC_TABLE_SIZE: usize = 512;

pub type Point = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPointSet {
    pub points: Vec<Point>,
    pub seed: u64,
}

impl ControlPointSet {
    pub fn segment_headings(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]))
            .collect()
    }

    pub fn chord_length(&self) -> f64 {
        self.points.windows(2).map(|w| dist(w[0], w[1])).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub states: Vec<State>,
    pub initial_state: State,
    pub ds: f64,
}

impl ReferenceTrajectory {
    /// Wraps explicit states; the vehicle starts on the first one at rest.
    pub fn from_states(states: Vec<State>, ds: f64) -> Result<Self> {
        let first = *states
            .first()
            .ok_or_else(|| Error::InvalidConfig("empty reference trajectory".into()))?;
        Ok(Self {
            initial_state: State::new(first.px, first.py, first.theta, 0.0, 0.0),
            states,
            ds,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.states.iter().map(State::position).collect()
    }

    /// `idx,px,py,theta`
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "idx,px,py,theta")?;
        for (i, s) in self.states.iter().enumerate() {
            writeln!(w, "{i},{},{},{}", s.px, s.py, s.theta)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut states = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<trajectory csv>", e))?;
            if n == 0 {
                if line.trim() != "idx,px,py,theta" {
                    return Err(Error::Parse(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 fields", n + 1)));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {s:?}: {e}", n + 1)))
            };
            let idx: usize = f[0]
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            if idx != states.len() {
                return Err(Error::Parse(format!(
                    "line {}: index {idx} out of order",
                    n + 1
                )));
            }
            states.push(State::new(num(f[1])?, num(f[2])?, num(f[3])?, 0.0, 0.0));
        }
        let ds = if states.len() > 1 {
            states
                .windows(2)
                .map(|w| dist(w[0].position(), w[1].position()))
                .sum::<f64>()
                / (states.len() - 1) as f64
        } else {
            0.0
        };
        Self::from_states(states, ds)
    }
}

fn dist(a: Point, b: Point) -> f64 {
    (b[0] - a[0]).hypot(b[1] - a[1])
}

pub fn generate_control_points(seed: u64) -> ControlPointSet {
    let mut rng = SplitMix64::new(seed);
    let mut points = vec![[0.0, 0.0]];
    let mut heading = rng.uniform(0.0, TAU);
    for k in 1..NUM_CONTROL_POINTS {
        if k > 1 {
            heading += rng.uniform(-FRAC_PI_2, FRAC_PI_2);
        }
        let step = rng.uniform(MIN_STEP, MAX_STEP);
        let [x, y] = points[k - 1];
        points.push([x + step * heading.cos(), y + step * heading.sin()]);
    }
    ControlPointSet { points, seed }
}

/// One centripetal Catmull-Rom segment between `p[1]` and `p[2]`.
struct Segment {
    p: [Point; 4],
    t: [f64; 4],
}

impl Segment {
    fn new(p: [Point; 4]) -> Result<Self> {
        let mut t = [0.0; 4];
        for k in 1..4 {
            let gap = dist(p[k - 1], p[k]).sqrt();
            if gap == 0.0 {
                return Err(Error::InvalidConfig("coincident control points".into()));
            }
            t[k] = t[k - 1] + gap;
        }
        Ok(Self { p, t })
    }

    /// Position and derivative at local parameter `s` in [0, 1].
    fn eval(&self, s: f64) -> (Point, Point) {
        let [p0, p1, p2, p3] = self.p;
        let [t0, t1, t2, t3] = self.t;
        let t = t1 + s * (t2 - t1);

        let lerp = |a: Point, b: Point, ta: f64, tb: f64| -> (Point, Point) {
            let w = (t - ta) / (tb - ta);
            let v = [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
            let dv = [(b[0] - a[0]) / (tb - ta), (b[1] - a[1]) / (tb - ta)];
            (v, dv)
        };
        // Interpolation with moving endpoints: d/dt of lerp(a(t), b(t)).
        let blend = |(a, da): (Point, Point), (b, db): (Point, Point), ta: f64, tb: f64| {
            let w = (t - ta) / (tb - ta);
            let v = [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])];
            let dv = [
                (b[0] - a[0]) / (tb - ta) + (1.0 - w) * da[0] + w * db[0],
                (b[1] - a[1]) / (tb - ta) + (1.0 - w) * da[1] + w * db[1],
            ];
            (v, dv)
        };

        let a1 = lerp(p0, p1, t0, t1);
        let a2 = lerp(p1, p2, t1, t2);
        let a3 = lerp(p2, p3, t2, t3);
        let b1 = blend(a1, a2, t0, t2);
        let b2 = blend(a2, a3, t1, t3);
        blend(b1, b2, t1, t2)
    }
}

fn segments(points: &[Point]) -> Result<Vec<Segment>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "need at least two control points".into(),
        ));
    }
    let reflect = |a: Point, b: Point| [2.0 * a[0] - b[0], 2.0 * a[1] - b[1]];
    let mut ext = Vec::with_capacity(n + 2);
    ext.push(reflect(points[0], points[1]));
    ext.extend_from_slice(points);
    ext.push(reflect(points[n - 1], points[n - 2]));
    ext.windows(4)
        .map(|w| Segment::new([w[0], w[1], w[2], w[3]]))
        .collect()
}

/// Centripetal Catmull-Rom through all control points, resampled at
/// `round(total_len / ds)` equal arc-length steps. Headings follow the spline
/// tangent and are unwrapped.
pub fn spline_resample(cps: &ControlPointSet, ds: f64) -> Result<ReferenceTrajectory> {
    if !(ds > 0.0 && ds.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "spacing must be positive, got {ds}"
        )));
    }
    let segs = segments(&cps.points)?;

    // Cumulative arc length over the whole spline, tabulated per segment.
    let mut table = Vec::with_capacity(segs.len() * ARC_TABLE_SIZE + 1);
    let mut acc = 0.0;
    table.push(0.0);
    for seg in &segs {
        let mut prev = seg.eval(0.0).0;
        for i in 1..=ARC_TABLE_SIZE {
            let pt = seg.eval(i as f64 / ARC_TABLE_SIZE as f64).0;
            acc += dist(prev, pt);
            table.push(acc);
            prev = pt;
        }
    }
    let total = acc;
    let last = table.len() - 1;
    let count = ((total / ds).round() as usize).max(1);

    let mut samples: Vec<(Point, Point)> = Vec::with_capacity(count + 1);
    for c in 0..=count {
        let target = total * c as f64 / count as f64;
        let i = table.partition_point(|&l| l < target).clamp(1, last);
        let frac = ((target - table[i - 1]) / (table[i] - table[i - 1])).clamp(0.0, 1.0);
        let pos = i - 1;
        let (k, j) = if pos == last - 1 && frac == 1.0 {
            (segs.len() - 1, ARC_TABLE_SIZE as f64)
        } else {
            (pos / ARC_TABLE_SIZE, (pos % ARC_TABLE_SIZE) as f64 + frac)
        };
        samples.push(segs[k].eval(j / ARC_TABLE_SIZE as f64));
    }
    samples[0].0 = cps.points[0];
    samples[count].0 = cps.points[cps.points.len() - 1];

    let mut states = Vec::with_capacity(samples.len());
    let mut last_theta: Option<f64> = None;
    for (pos, tangent) in samples {
        let raw = tangent[1].atan2(tangent[0]);
        let theta = match last_theta {
            None => raw,
            Some(prev) => prev + wrap_angle(raw - prev),
        };
        last_theta = Some(theta);
        states.push(State::new(pos[0], pos[1], theta, 0.0, 0.0));
    }
    ReferenceTrajectory::from_states(states, ds)
}

/// Reference trajectory for a seed at spacing `ds`.
pub fn generate_scenario(seed: u64, ds: f64) -> Result<ReferenceTrajectory> {
    spline_resample(&generate_control_points(seed), ds)
}

/// Wraps to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}
