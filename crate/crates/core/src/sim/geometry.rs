//! Ray casting and footprint distance queries against the obstacle set.

use super::world::{Obstacle, WorldModel};
use super::Pose2D;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

/// Distance along the ray `origin + t·(cos a, sin a)` to segment `p–q`.
pub fn ray_segment(ox: f64, oy: f64, angle: f64, p: Point, q: Point) -> Option<f64> {
    let (dy, dx) = angle.sin_cos();
    let ex = q.x - p.x;
    let ey = q.y - p.y;
    let denom = dx * ey - dy * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let wx = p.x - ox;
    let wy = p.y - oy;
    let t = (wx * ey - wy * ex) / denom;
    let u = (wx * dy - wy * dx) / denom;
    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some(t)
    } else {
        None
    }
}

fn box_edges(min: Point, max: Point) -> [(Point, Point); 4] {
    let a = min;
    let b = Point { x: max.x, y: min.y };
    let c = max;
    let d = Point { x: min.x, y: max.y };
    [(a, b), (b, c), (c, d), (d, a)]
}

fn inside_box(x: f64, y: f64, min: Point, max: Point) -> bool {
    x >= min.x && x <= max.x && y >= min.y && y <= max.y
}

/// Nearest hit over every obstacle and the world bounds.
pub fn ray_distance(world: &WorldModel, ox: f64, oy: f64, angle: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut take = |d: Option<f64>| {
        if let Some(d) = d {
            best = Some(best.map_or(d, |b: f64| b.min(d)));
        }
    };
    for ob in world.solids() {
        match ob {
            Obstacle::Segment { x1, y1, x2, y2 } => {
                take(ray_segment(ox, oy, angle, Point { x: x1, y: y1 }, Point { x: x2, y: y2 }))
            }
            Obstacle::Box { min_x, min_y, max_x, max_y } => {
                let (min, max) = (Point { x: min_x, y: min_y }, Point { x: max_x, y: max_y });
                if inside_box(ox, oy, min, max) {
                    take(Some(0.0));
                } else {
                    for (p, q) in box_edges(min, max) {
                        take(ray_segment(ox, oy, angle, p, q));
                    }
                }
            }
        }
    }
    best
}

/// Simulated range reading: `rays` rays evenly spanning the cone around
/// `mount.theta`, minimum hit clamped to `[min_range, max_range]`, no hit
/// reads `max_range`.
pub fn raycast_range(
    world: &WorldModel,
    mount: Pose2D,
    field_of_view: f64,
    min_range: f64,
    max_range: f64,
    rays: usize,
) -> f64 {
    let n = rays.max(1);
    let nearest = (0..n)
        .filter_map(|i| {
            let offset = if n == 1 { 0.0 } else { field_of_view * (i as f64 / (n - 1) as f64 - 0.5) };
            ray_distance(world, mount.x, mount.y, mount.theta + offset)
        })
        .fold(f64::INFINITY, f64::min);
    if nearest.is_finite() {
        nearest.clamp(min_range, max_range)
    } else {
        max_range
    }
}

/// Closest point on segment `p–q` to `c`.
pub fn closest_on_segment(c: Point, p: Point, q: Point) -> Point {
    let ex = q.x - p.x;
    let ey = q.y - p.y;
    let len2 = ex * ex + ey * ey;
    if len2 == 0.0 {
        return p;
    }
    let t = (((c.x - p.x) * ex + (c.y - p.y) * ey) / len2).clamp(0.0, 1.0);
    Point { x: p.x + t * ex, y: p.y + t * ey }
}

fn closest_on_obstacle(c: Point, ob: &Obstacle) -> Point {
    match *ob {
        Obstacle::Segment { x1, y1, x2, y2 } => closest_on_segment(c, Point { x: x1, y: y1 }, Point { x: x2, y: y2 }),
        Obstacle::Box { min_x, min_y, max_x, max_y } => {
            Point { x: c.x.clamp(min_x, max_x), y: c.y.clamp(min_y, max_y) }
        }
    }
}

/// Contact points of a disc of radius `r` centred at `c`: the closest point
/// of each obstacle strictly closer than `r`.
pub fn contacts(world: &WorldModel, c: Point, r: f64) -> Vec<Point> {
    world
        .solids()
        .filter_map(|ob| {
            let p = closest_on_obstacle(c, &ob);
            let d = ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt();
            (d < r).then_some(p)
        })
        .collect()
}

/// Distance from `c` to the nearest obstacle (infinite for an empty world).
pub fn clearance(world: &WorldModel, c: Point) -> f64 {
    world
        .solids()
        .map(|ob| {
            let p = closest_on_obstacle(c, &ob);
            ((p.x - c.x).powi(2) + (p.y - c.y).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wall_at(x: f64) -> WorldModel {
        WorldModel { obstacles: vec![Obstacle::Segment { x1: x, y1: -5.0, x2: x, y2: 5.0 }], bounds: None }
    }

    #[test]
    fn empty_world_reads_max() {
        let w = WorldModel::default();
        assert_eq!(raycast_range(&w, Pose2D::default(), 0.5, 0.02, 4.0, 9), 4.0);
    }

    #[test]
    fn perpendicular_wall_reads_boresight_distance() {
        // boresight ray is the shortest to a perpendicular wall: d / cos(0)
        let r = raycast_range(&wall_at(1.0), Pose2D::default(), 0.5, 0.02, 4.0, 9);
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn close_obstacle_clamps_to_min() {
        let r = raycast_range(&wall_at(0.01), Pose2D::default(), 0.5, 0.02, 4.0, 9);
        assert_eq!(r, 0.02);
    }

    #[test]
    fn edge_ray_catches_offset_box() {
        // box beyond boresight but within the cone edge at +0.25 rad
        let w = WorldModel {
            obstacles: vec![Obstacle::Box { min_x: 2.0, min_y: 0.45, max_x: 2.5, max_y: 0.6 }],
            bounds: None,
        };
        let r = raycast_range(&w, Pose2D::default(), 0.5, 0.02, 4.0, 9);
        // edge ray (+0.25 rad) crosses x = 2 at y = 2·tan(0.25) ≈ 0.511, inside
        // the box face; the next ray in (+0.1875) only reaches the bottom face
        // further out.
        let expect = 2.0 / 0.25f64.cos();
        let next = 0.45 / 0.1875f64.sin();
        assert!(next > expect);
        assert!((r - expect).abs() < 1e-12, "{r} vs {expect}");
    }

    #[test]
    fn contact_queries() {
        let w = wall_at(1.0);
        assert!(contacts(&w, Point { x: 0.85, y: 0.0 }, 0.2).len() == 1);
        assert!(contacts(&w, Point { x: 0.79, y: 0.0 }, 0.2).is_empty());
        assert!((clearance(&w, Point { x: 0.3, y: 2.0 }) - 0.7).abs() < 1e-12);
    }
}
