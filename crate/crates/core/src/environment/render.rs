//! Grid raycaster with billboard sprites.

use super::{EnvState, ItemKind};
use crate::frame::Frame;

const CEILING: [f32; 3] = [0.32, 0.31, 0.30];
const ACID: [f32; 3] = [0.22, 0.48, 0.12];
const BRICK: [f32; 3] = [0.55, 0.30, 0.20];
const MORTAR: [f32; 3] = [0.62, 0.60, 0.55];
const PACK_BOX: [f32; 3] = [0.95, 0.95, 0.93];
const PACK_CROSS: [f32; 3] = [0.05, 0.75, 0.10];
const JAR: [f32; 3] = [0.85, 0.08, 0.06];
const JAR_RIM: [f32; 3] = [0.45, 0.03, 0.03];

/// Billboard width and height in cells.
fn sprite_size(kind: ItemKind) -> (f64, f64) {
    match kind {
        ItemKind::HealthPack => (0.5, 0.4),
        ItemKind::Mine => (0.4, 0.55),
    }
}

fn fog(distance: f64) -> f32 {
    (1.0 / (1.0 + 0.12 * distance)) as f32
}

fn shade(c: [f32; 3], f: f32) -> [f32; 3] {
    [c[0] * f, c[1] * f, c[2] * f]
}

/// Brick pattern at wall coordinates `u` (along the wall) and `v` (height,
/// 0 at the top). Four courses per cell, alternate courses offset.
fn brick(u: f64, v: f64, cell: i64) -> [f32; 3] {
    let course = (v * 4.0).floor();
    let row_v = v * 4.0 - course;
    let shifted = u * 2.0 + if course as i64 % 2 == 0 { 0.0 } else { 0.5 };
    let col_u = shifted - shifted.floor();
    if row_v < 0.12 || col_u < 0.06 {
        return MORTAR;
    }
    // Per-brick tint so walls carry texture.
    let id = (cell * 31 + course as i64 * 7 + shifted.floor() as i64).rem_euclid(5);
    shade(BRICK, 0.85 + 0.06 * id as f32)
}

/// Renders the agent's view. The horizon is the middle row, the eye sits at
/// half the wall height.
pub fn render(state: &EnvState) -> Frame {
    let cfg = state.config();
    let (h, w) = (cfg.frame_height, cfg.frame_width);
    let mut frame = Frame::filled(h, w, 0.0);
    let half_fov = (cfg.field_of_view_degrees.to_radians() / 2.0).tan();
    let focal = (w as f64 / 2.0) / half_fov;
    let horizon = h as f64 / 2.0;
    let (px, py) = state.position();
    let (dir_x, dir_y) = (state.heading().cos(), state.heading().sin());
    // The camera plane points to the agent's right.
    let (plane_x, plane_y) = (dir_y * half_fov, -dir_x * half_fov);

    for y in 0..h {
        let row = y as f64 + 0.5;
        let (base, dist) = if row < horizon {
            (CEILING, 0.5 * focal / (horizon - row))
        } else {
            (ACID, 0.5 * focal / (row - horizon))
        };
        let c = shade(base, fog(dist));
        for x in 0..w {
            frame.set_pixel(y, x, c);
        }
    }

    let mut depth = vec![f64::INFINITY; w];
    for (x, zbuf) in depth.iter_mut().enumerate() {
        let camera = 2.0 * (x as f64 + 0.5) / w as f64 - 1.0;
        let (rx, ry) = (dir_x + plane_x * camera, dir_y + plane_y * camera);
        let Some(hit) = cast(state, px, py, rx, ry) else { continue };
        *zbuf = hit.distance;
        let line = focal / hit.distance;
        let top = horizon - line / 2.0;
        let y0 = top.max(0.0).floor() as usize;
        let y1 = ((horizon + line / 2.0).min(h as f64).ceil() as usize).min(h);
        let f = fog(hit.distance) * if hit.side { 0.75 } else { 1.0 };
        for y in y0..y1 {
            let v = ((y as f64 + 0.5 - top) / line).clamp(0.0, 0.999_999);
            frame.set_pixel(y, x, shade(brick(hit.u, v, hit.cell), f));
        }
    }

    // Sprites, far to near, clipped against the wall depth buffer.
    let inv_det = 1.0 / (plane_x * dir_y - dir_x * plane_y);
    let mut visible: Vec<(f64, f64, ItemKind)> = state
        .items()
        .iter()
        .filter_map(|it| {
            let (sx, sy) = (it.x - px, it.y - py);
            let tx = inv_det * (dir_y * sx - dir_x * sy);
            let ty = inv_det * (-plane_y * sx + plane_x * sy);
            (ty > 0.05).then_some((ty, tx, it.kind))
        })
        .collect();
    visible.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (depth_z, tx, kind) in visible {
        let (sw, sh) = sprite_size(kind);
        let center = (w as f64 / 2.0) * (1.0 + tx / depth_z);
        let width = focal * sw / depth_z;
        let height = focal * sh / depth_z;
        let bottom = horizon + 0.5 * focal / depth_z;
        let top = bottom - height;
        let left = center - width / 2.0;
        let x0 = left.max(0.0).floor() as usize;
        let x1 = ((left + width).min(w as f64).ceil().max(0.0) as usize).min(w);
        let y0 = top.max(0.0).floor() as usize;
        let y1 = (bottom.min(h as f64).ceil().max(0.0) as usize).min(h);
        let f = fog(depth_z);
        for (x, &zbuf) in depth.iter().enumerate().take(x1).skip(x0) {
            if depth_z >= zbuf {
                continue;
            }
            let u = (x as f64 + 0.5 - left) / width;
            if !(0.0..1.0).contains(&u) {
                continue;
            }
            for y in y0..y1 {
                let v = (y as f64 + 0.5 - top) / height;
                if !(0.0..1.0).contains(&v) {
                    continue;
                }
                if let Some(c) = sprite_texel(kind, u, v) {
                    frame.set_pixel(y, x, shade(c, f));
                }
            }
        }
    }
    frame
}

/// Texel of a sprite at `(u, v)` in `[0, 1)²` with `v = 0` at the top, or
/// `None` where the sprite is transparent.
fn sprite_texel(kind: ItemKind, u: f64, v: f64) -> Option<[f32; 3]> {
    match kind {
        ItemKind::HealthPack => {
            let (du, dv) = ((u - 0.5).abs(), (v - 0.5).abs());
            let cross = (du < 0.1 && dv < 0.32) || (dv < 0.12 && du < 0.3);
            Some(if cross { PACK_CROSS } else { PACK_BOX })
        }
        ItemKind::Mine => {
            let half = if v < 0.18 { 0.22 } else { 0.5 - 0.3 * (v - 0.6).powi(2) };
            if (u - 0.5).abs() > half {
                return None;
            }
            Some(if v < 0.18 { JAR_RIM } else { JAR })
        }
    }
}

struct Hit {
    /// Perpendicular distance to the camera plane.
    distance: f64,
    /// Position along the wall face in `[0, 1)`.
    u: f64,
    /// True for faces perpendicular to the y axis.
    side: bool,
    cell: i64,
}

/// Digital differential analyzer over the cell grid.
fn cast(state: &EnvState, px: f64, py: f64, rx: f64, ry: f64) -> Option<Hit> {
    let (mut cx, mut cy) = (px.floor() as i64, py.floor() as i64);
    let dx = if rx == 0.0 { f64::INFINITY } else { (1.0 / rx).abs() };
    let dy = if ry == 0.0 { f64::INFINITY } else { (1.0 / ry).abs() };
    let (step_x, mut side_x) = if rx < 0.0 {
        (-1, (px - cx as f64) * dx)
    } else {
        (1, (cx as f64 + 1.0 - px) * dx)
    };
    let (step_y, mut side_y) = if ry < 0.0 {
        (-1, (py - cy as f64) * dy)
    } else {
        (1, (cy as f64 + 1.0 - py) * dy)
    };
    let limit = 4 * (state.config().room_width + state.config().room_height + 4);
    for _ in 0..limit {
        let side = if side_x < side_y {
            side_x += dx;
            cx += step_x;
            false
        } else {
            side_y += dy;
            cy += step_y;
            true
        };
        if state.is_wall(cx, cy) {
            let distance = if side { side_y - dy } else { side_x - dx }.max(1e-6);
            let along = if side { px + distance * rx } else { py + distance * ry };
            return Some(Hit {
                distance,
                u: along - along.floor(),
                side,
                cell: cx * 131 + cy,
            });
        }
    }
    None
}
