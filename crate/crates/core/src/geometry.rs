//! Interpersonal geometry in the horizontal plane: body-space coordinate
//! transforms, direct gaze angles, interpersonal distance, and visual shared
//! space (overlap of field-of-view triangles).
//!
//! Conventions: y is vertical and ignored here except for pass-through; the
//! horizontal plane is x-z; yaw is degrees about the vertical axis with the
//! forward direction `(sin yaw, cos yaw)` in (x, z).

use thiserror::Error;

use crate::recording::{DevicePose, FrameWindow, UserFrame};

/// Horizontal field of view of the headset, degrees.
pub const FOV_APEX_DEG: f64 = 104.0;
/// Areas below this are treated as no overlap (square meters).
pub const AREA_EPS: f64 = 1e-9;
/// Heads closer than this horizontally have no defined gaze direction (meters).
pub const COINCIDENT_EPS: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("window has fewer than 2 frames for user {0}")]
    WindowTooSparse(String),
    #[error("head positions coincide in the horizontal plane")]
    CoincidentHeads,
}

/// Wrap an angle in degrees to (-180, 180].
pub fn wrap_angle_deg(a: f64) -> f64 {
    let mut r = a % 360.0;
    if r <= -180.0 {
        r += 360.0;
    } else if r > 180.0 {
        r -= 360.0;
    }
    r
}

/// Signed shortest rotation from `from` to `to`, in (-180, 180] degrees.
pub fn shortest_angle_delta(from: f64, to: f64) -> f64 {
    wrap_angle_deg(to - from)
}

/// Unit heading vector (x, z) for a yaw angle in degrees.
pub fn heading_dir(yaw_deg: f64) -> (f64, f64) {
    let r = yaw_deg.to_radians();
    (r.sin(), r.cos())
}

/// Yaw angle of the direction from `from` to `to` in the horizontal plane.
pub fn bearing_deg(from: (f64, f64), to: (f64, f64)) -> f64 {
    wrap_angle_deg((to.0 - from.0).atan2(to.1 - from.1).to_degrees())
}

/// One user's device series re-expressed in body-space coordinates.
///
/// Every pose is rotated so the head's yaw heading becomes the forward (+z)
/// axis. With `centered`, the head's horizontal position is subtracted so the
/// head sits at the horizontal origin; otherwise horizontal translation is
/// preserved.
#[derive(Debug, Clone)]
pub struct BodySpaceWindow {
    pub user_id: String,
    pub centered: bool,
    pub timestamps: Vec<f64>,
    pub root: Vec<DevicePose>,
    pub head: Vec<DevicePose>,
    pub left_hand: Vec<DevicePose>,
    pub right_hand: Vec<DevicePose>,
}

fn to_body_space(pose: &DevicePose, head: &DevicePose, centered: bool) -> DevicePose {
    let (cx, cz) = if centered { (head.x, head.z) } else { (0.0, 0.0) };
    let dx = pose.x - cx;
    let dz = pose.z - cz;
    let r = head.yaw.to_radians();
    let (s, c) = (r.sin(), r.cos());
    DevicePose {
        x: dx * c - dz * s,
        y: pose.y,
        z: dx * s + dz * c,
        roll: pose.roll,
        pitch: pose.pitch,
        yaw: wrap_angle_deg(pose.yaw - head.yaw),
    }
}

/// Re-express one user's window in body-space coordinates.
pub fn body_space_transform(
    window: &FrameWindow<'_>,
    user_id: &str,
    centered: bool,
) -> Result<BodySpaceWindow, GeometryError> {
    let frames = window
        .frames_of(user_id)
        .ok_or_else(|| GeometryError::WindowTooSparse(user_id.to_string()))?;
    if frames.len() < 2 {
        return Err(GeometryError::WindowTooSparse(user_id.to_string()));
    }
    let mut out = BodySpaceWindow {
        user_id: user_id.to_string(),
        centered,
        timestamps: Vec::with_capacity(frames.len()),
        root: Vec::with_capacity(frames.len()),
        head: Vec::with_capacity(frames.len()),
        left_hand: Vec::with_capacity(frames.len()),
        right_hand: Vec::with_capacity(frames.len()),
    };
    for f in frames {
        out.timestamps.push(f.timestamp);
        out.root.push(to_body_space(&f.root, &f.head, centered));
        out.head.push(to_body_space(&f.head, &f.head, centered));
        out.left_hand
            .push(to_body_space(&f.left_hand, &f.head, centered));
        out.right_hand
            .push(to_body_space(&f.right_hand, &f.head, centered));
    }
    Ok(out)
}

/// Angular velocity series from raw yaw samples, degrees per second.
///
/// Uses the signed shortest-angle difference between consecutive samples, so
/// wraparound at +/-180 is handled; the series is invariant under adding a
/// constant to all samples.
pub fn yaw_velocity_series(samples: &[(f64, f64)]) -> Result<Vec<f64>, GeometryError> {
    if samples.len() < 2 {
        return Err(GeometryError::WindowTooSparse("yaw series".to_string()));
    }
    Ok(samples
        .windows(2)
        .map(|p| {
            let dt = p[1].0 - p[0].0;
            shortest_angle_delta(p[0].1, p[1].1) / dt
        })
        .collect())
}

/// Plain finite-difference velocity series for non-wrapping values.
pub fn velocity_series(samples: &[(f64, f64)]) -> Result<Vec<f64>, GeometryError> {
    if samples.len() < 2 {
        return Err(GeometryError::WindowTooSparse("value series".to_string()));
    }
    Ok(samples
        .windows(2)
        .map(|p| (p[1].1 - p[0].1) / (p[1].0 - p[0].0))
        .collect())
}

/// Unsigned horizontal angle between A's forward heading and the direction
/// from A's head to B's head, in [0, 180] degrees.
pub fn direct_gaze_angle(a_head: &DevicePose, b_head: &DevicePose) -> Result<f64, GeometryError> {
    let dx = b_head.x - a_head.x;
    let dz = b_head.z - a_head.z;
    if (dx * dx + dz * dz).sqrt() < COINCIDENT_EPS {
        return Err(GeometryError::CoincidentHeads);
    }
    let bearing = bearing_deg((a_head.x, a_head.z), (b_head.x, b_head.z));
    Ok(shortest_angle_delta(a_head.yaw, bearing).abs())
}

/// Euclidean distance between the two head positions in the horizontal plane.
pub fn interpersonal_distance(a_head: &DevicePose, b_head: &DevicePose) -> f64 {
    let dx = b_head.x - a_head.x;
    let dz = b_head.z - a_head.z;
    (dx * dx + dz * dz).sqrt()
}

/// Isosceles field-of-view triangle in the horizontal plane. The apex sits at
/// the head, the two equal sides have length `side`, and the apex angle is
/// the headset's horizontal field of view.
#[derive(Debug, Clone, Copy)]
pub struct FovTriangle {
    pub apex: (f64, f64),
    pub heading_deg: f64,
    pub side: f64,
    pub apex_angle_deg: f64,
}

impl FovTriangle {
    pub fn from_pose(head: &DevicePose, side: f64) -> Self {
        Self {
            apex: (head.x, head.z),
            heading_deg: head.yaw,
            side,
            apex_angle_deg: FOV_APEX_DEG,
        }
    }

    /// Vertices in counter-clockwise order.
    pub fn vertices(&self) -> [[f64; 2]; 3] {
        let half = self.apex_angle_deg / 2.0;
        let (lx, lz) = heading_dir(self.heading_deg - half);
        let (rx, rz) = heading_dir(self.heading_deg + half);
        let a = [self.apex.0, self.apex.1];
        let l = [self.apex.0 + self.side * lx, self.apex.1 + self.side * lz];
        let r = [self.apex.0 + self.side * rx, self.apex.1 + self.side * rz];
        let ccw = [a, r, l];
        if signed_area(&ccw) >= 0.0 {
            ccw
        } else {
            [a, l, r]
        }
    }

    /// Closed-form area: half * side^2 * sin(apex angle).
    pub fn area(&self) -> f64 {
        0.5 * self.side * self.side * self.apex_angle_deg.to_radians().sin()
    }
}

fn signed_area(poly: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((poly[1][0] - poly[0][0]) * (poly[2][1] - poly[0][1])
        - (poly[2][0] - poly[0][0]) * (poly[1][1] - poly[0][1]))
}

/// Shoelace area of a simple polygon (absolute value).
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += poly[i][0] * poly[j][1] - poly[j][0] * poly[i][1];
    }
    (acc / 2.0).abs()
}

fn cross_edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Clip `subject` to the inside of a counter-clockwise convex polygon.
pub fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut result = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if result.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let input = std::mem::take(&mut result);
        let m = input.len();
        for j in 0..m {
            let s = input[j];
            let e = input[(j + 1) % m];
            let sc = cross_edge(a, b, s);
            let ec = cross_edge(a, b, e);
            let s_in = sc >= 0.0;
            let e_in = ec >= 0.0;
            match (s_in, e_in) {
                (true, true) => result.push(e),
                (true, false) | (false, true) => {
                    let denom = sc - ec;
                    if denom.abs() > 1e-30 {
                        let t = sc / denom;
                        result.push([s[0] + (e[0] - s[0]) * t, s[1] + (e[1] - s[1]) * t]);
                    }
                    if e_in {
                        result.push(e);
                    }
                }
                (false, false) => {}
            }
        }
    }
    result
}

/// Overlap area of the two users' field-of-view triangles, square meters.
///
/// Computed by convex polygon clipping followed by the shoelace formula.
/// The two triangles are put in a canonical order before clipping so the
/// result is exactly symmetric in its arguments; degenerate overlaps below
/// `AREA_EPS` collapse to zero.
pub fn visual_shared_space(a_head: &DevicePose, b_head: &DevicePose, vs_l: f64) -> f64 {
    let ta = FovTriangle::from_pose(a_head, vs_l);
    let tb = FovTriangle::from_pose(b_head, vs_l);
    let key = |t: &FovTriangle| (t.apex.0, t.apex.1, t.heading_deg);
    let (ka, kb) = (key(&ta), key(&tb));
    let swap = match ka.0.total_cmp(&kb.0) {
        std::cmp::Ordering::Equal => match ka.1.total_cmp(&kb.1) {
            std::cmp::Ordering::Equal => ka.2.total_cmp(&kb.2) == std::cmp::Ordering::Greater,
            ord => ord == std::cmp::Ordering::Greater,
        },
        ord => ord == std::cmp::Ordering::Greater,
    };
    let (first, second) = if swap { (tb, ta) } else { (ta, tb) };
    let overlap = clip_convex(&first.vertices(), &second.vertices());
    let area = polygon_area(&overlap);
    if area < AREA_EPS {
        0.0
    } else {
        area
    }
}

/// Per-frame series of the three dyadic measures for a pair of users.
#[derive(Debug, Clone)]
pub struct PairSeries {
    pub timestamps: Vec<f64>,
    pub gaze_ab: Vec<f64>,
    pub gaze_ba: Vec<f64>,
    pub distance: Vec<f64>,
    /// One series per requested view length, in input order.
    pub shared_space: Vec<Vec<f64>>,
}

/// Compute gaze/distance/shared-space series for users `a` and `b` over the
/// frames they share in a window (matched by timestamp).
pub fn pair_series(
    a_frames: &[UserFrame],
    b_frames: &[UserFrame],
    vs_lengths: &[f64],
) -> Result<PairSeries, GeometryError> {
    let mut out = PairSeries {
        timestamps: Vec::new(),
        gaze_ab: Vec::new(),
        gaze_ba: Vec::new(),
        distance: Vec::new(),
        shared_space: vec![Vec::new(); vs_lengths.len()],
    };
    let (mut i, mut j) = (0usize, 0usize);
    while i < a_frames.len() && j < b_frames.len() {
        let (ta, tb) = (a_frames[i].timestamp, b_frames[j].timestamp);
        if (ta - tb).abs() <= crate::recording::TIME_EPS {
            let (ha, hb) = (&a_frames[i].head, &b_frames[j].head);
            out.timestamps.push(ta);
            out.gaze_ab.push(direct_gaze_angle(ha, hb)?);
            out.gaze_ba.push(direct_gaze_angle(hb, ha)?);
            out.distance.push(interpersonal_distance(ha, hb));
            for (k, &l) in vs_lengths.iter().enumerate() {
                out.shared_space[k].push(visual_shared_space(ha, hb, l));
            }
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    if out.timestamps.len() < 2 {
        return Err(GeometryError::WindowTooSparse("pair".to_string()));
    }
    Ok(out)
}
