//! Voronoi cells clipped to the unit square, and welding of independently
//! computed polygons into a conforming vertex/loop structure.

use std::collections::HashMap;

use crate::polybasis::Vec2;

use super::polygon_geometry;

/// Keep the part of `poly` where `(x - origin) . normal <= 0`.
pub(crate) fn clip_half_plane(poly: &[Vec2], origin: Vec2, normal: Vec2) -> Vec<Vec2> {
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let dp = (p - origin).dot(&normal);
        let dq = (q - origin).dot(&normal);
        if dp <= 0.0 {
            out.push(p);
        }
        if (dp < 0.0 && dq > 0.0) || (dp > 0.0 && dq < 0.0) {
            let t = dp / (dp - dq);
            out.push(p + (q - p) * t);
        }
    }
    out
}

pub(crate) fn unit_square() -> Vec<Vec2> {
    vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(1.0, 1.0),
        Vec2::new(0.0, 1.0),
    ]
}

/// Voronoi cell of every seed, clipped to the unit square.
pub(crate) fn voronoi_cells(seeds: &[Vec2]) -> Vec<Vec<Vec2>> {
    let mut cells = Vec::with_capacity(seeds.len());
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    for (i, &s) in seeds.iter().enumerate() {
        order.sort_by(|&a, &b| {
            let da = (seeds[a] - s).norm_squared();
            let db = (seeds[b] - s).norm_squared();
            da.total_cmp(&db).then(a.cmp(&b))
        });
        let mut cell = unit_square();
        for &j in &order {
            if j == i {
                continue;
            }
            let d = seeds[j] - s;
            let reach = cell.iter().map(|v| (v - s).norm()).fold(0.0, f64::max);
            if d.norm() > 2.0 * reach {
                break;
            }
            cell = clip_half_plane(&cell, s + d * 0.5, d);
            if cell.len() < 3 {
                break;
            }
        }
        cells.push(cell);
    }
    cells
}

pub(crate) fn lloyd_step(seeds: &[Vec2]) -> Vec<Vec2> {
    voronoi_cells(seeds)
        .iter()
        .zip(seeds)
        .map(|(c, s)| if c.len() < 3 { *s } else { polygon_geometry(c).1 })
        .collect()
}

/// Merge coincident points (within `tol`), drop collapsed edges, and split
/// polygon edges at vertices that lie on them, so that neighbouring polygons
/// share full edges.
pub(crate) fn weld_polygons(polys: &[Vec<Vec2>], tol: f64) -> (Vec<Vec2>, Vec<Vec<usize>>) {
    let cell = tol * 4.0;
    let key = |p: Vec2| ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut verts: Vec<Vec2> = Vec::new();
    let mut find_or_insert = |p: Vec2, verts: &mut Vec<Vec2>| -> usize {
        let (kx, ky) = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = grid.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if (verts[id] - p).norm() <= tol {
                            return id;
                        }
                    }
                }
            }
        }
        verts.push(p);
        grid.entry((kx, ky)).or_default().push(verts.len() - 1);
        verts.len() - 1
    };

    let mut loops: Vec<Vec<usize>> = Vec::with_capacity(polys.len());
    for poly in polys {
        let mut lp: Vec<usize> = Vec::with_capacity(poly.len());
        for p in poly {
            let p = snap_to_square(*p, tol);
            let id = find_or_insert(p, &mut verts);
            if lp.last() != Some(&id) {
                lp.push(id);
            }
        }
        while lp.len() > 1 && lp.first() == lp.last() {
            lp.pop();
        }
        loops.push(lp);
    }

    // Insert vertices that sit in the interior of another polygon's edge.
    let bucket = 1.0 / (verts.len() as f64).sqrt().max(1.0);
    let bkey = |p: Vec2| ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64);
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, v) in verts.iter().enumerate() {
        buckets.entry(bkey(*v)).or_default().push(i);
    }
    for lp in loops.iter_mut() {
        let n = lp.len();
        let mut out = Vec::with_capacity(n + 2);
        for i in 0..n {
            let a = lp[i];
            let b = lp[(i + 1) % n];
            out.push(a);
            let pa = verts[a];
            let pb = verts[b];
            let len = (pb - pa).norm();
            let lo = pa.inf(&pb);
            let hi = pa.sup(&pb);
            let (k0, k1) = (bkey(lo - Vec2::repeat(tol)), bkey(hi + Vec2::repeat(tol)));
            let mut on_edge: Vec<(f64, usize)> = Vec::new();
            for kx in k0.0..=k1.0 {
                for ky in k0.1..=k1.1 {
                    if let Some(ids) = buckets.get(&(kx, ky)) {
                        for &id in ids {
                            if id == a || id == b {
                                continue;
                            }
                            let p = verts[id];
                            let t = (p - pa).dot(&(pb - pa)) / (len * len);
                            if t <= 0.0 || t >= 1.0 {
                                continue;
                            }
                            let dist = ((pb - pa).perp(&(p - pa)) / len).abs();
                            if dist <= tol {
                                on_edge.push((t, id));
                            }
                        }
                    }
                }
            }
            on_edge.sort_by(|x, y| x.0.total_cmp(&y.0));
            out.extend(on_edge.into_iter().map(|(_, id)| id));
        }
        *lp = out;
    }

    // Drop vertices no polygon references.
    let mut used = vec![usize::MAX; verts.len()];
    let mut compact = Vec::new();
    for lp in loops.iter_mut() {
        for v in lp.iter_mut() {
            if used[*v] == usize::MAX {
                used[*v] = compact.len();
                compact.push(verts[*v]);
            }
            *v = used[*v];
        }
    }
    (compact, loops)
}

fn snap_to_square(p: Vec2, tol: f64) -> Vec2 {
    let snap = |c: f64| {
        if c.abs() <= tol {
            0.0
        } else if (c - 1.0).abs() <= tol {
            1.0
        } else {
            c
        }
    };
    Vec2::new(snap(p.x), snap(p.y))
}
