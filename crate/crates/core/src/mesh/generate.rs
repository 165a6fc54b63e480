use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::polybasis::Vec2;

use super::voronoi::{lloyd_step, voronoi_cells, weld_polygons};
use super::{MeshError, MeshFamily, PolygonalMesh};

const LLOYD_ITERATIONS: usize = 3;
const DISTORTION: f64 = 0.1;

/// Generate a mesh of the unit square with about `n` elements per side.
/// Output is fully determined by `(family, n, seed)`; `seed` only affects the
/// Voronoi families and defaults to 0.
pub fn generate_mesh(family: MeshFamily, n: usize, seed: Option<u64>) -> Result<PolygonalMesh, MeshError> {
    let min = match family {
        MeshFamily::Hexagon => 2,
        _ => 1,
    };
    if n < min {
        return Err(MeshError::TooCoarse { family, n, min });
    }
    let seed = seed.unwrap_or(0);
    let (vertices, loops) = match family {
        MeshFamily::Quad => structured(n, |p, _, _| p, false),
        MeshFamily::Triangle => structured(n, |p, _, _| p, true),
        MeshFamily::DistortedQuad => structured(n, |p, i, j| distort(p, i, j, n), false),
        MeshFamily::Hexagon => voronoi_mesh(&hexagon_seeds(n), n),
        MeshFamily::VoronoiRandom => voronoi_mesh(&random_seeds(n, seed), n),
        MeshFamily::VoronoiCvt => {
            let mut seeds = random_seeds(n, seed);
            for _ in 0..LLOYD_ITERATIONS {
                seeds = lloyd_step(&seeds);
            }
            voronoi_mesh(&seeds, n)
        }
    };
    PolygonalMesh::from_loops(vertices, loops, Some(family), n, false)
}

fn structured(
    n: usize,
    map: impl Fn(Vec2, usize, usize) -> Vec2,
    split: bool,
) -> (Vec<Vec2>, Vec<Vec<usize>>) {
    let np = n + 1;
    let mut vertices = Vec::with_capacity(np * np);
    for j in 0..np {
        for i in 0..np {
            let p = Vec2::new(i as f64 / n as f64, j as f64 / n as f64);
            vertices.push(map(p, i, j));
        }
    }
    let id = |i: usize, j: usize| j * np + i;
    let mut loops = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if split {
                loops.push(vec![a, b, c]);
                loops.push(vec![a, c, d]);
            } else {
                loops.push(vec![a, b, c, d]);
            }
        }
    }
    (vertices, loops)
}

/// Sinusoidal vertex perturbation of amplitude `0.1 / n`. Boundary vertices
/// only slide along their side; corners stay fixed.
fn distort(p: Vec2, i: usize, j: usize, n: usize) -> Vec2 {
    let amp = DISTORTION / n as f64;
    let tau = std::f64::consts::TAU;
    let (fi, fj) = (i as f64, j as f64);
    let mut dx = amp * (tau * (3.0 * fi + 5.0 * fj) / 7.0).sin();
    let mut dy = amp * (tau * (5.0 * fi + 3.0 * fj) / 7.0 + 0.5).cos();
    if i == 0 || i == n {
        dx = 0.0;
    }
    if j == 0 || j == n {
        dy = 0.0;
    }
    Vec2::new(p.x + dx, p.y + dy)
}

/// Staggered lattice whose Voronoi diagram is a hexagonal tiling; odd rows
/// carry seeds on the left and right sides so that boundary cells are halves.
fn hexagon_seeds(n: usize) -> Vec<Vec2> {
    let nf = n as f64;
    let mut seeds = Vec::new();
    for j in 0..n {
        let y = (j as f64 + 0.5) / nf;
        if j % 2 == 0 {
            for i in 0..n {
                seeds.push(Vec2::new((i as f64 + 0.5) / nf, y));
            }
        } else {
            for i in 0..=n {
                seeds.push(Vec2::new(i as f64 / nf, y));
            }
        }
    }
    seeds
}

fn random_seeds(n: usize, seed: u64) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * n)
        .map(|_| Vec2::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

fn voronoi_mesh(seeds: &[Vec2], n: usize) -> (Vec<Vec2>, Vec<Vec<usize>>) {
    let cells: Vec<Vec<Vec2>> = voronoi_cells(seeds)
        .into_iter()
        .filter(|c| c.len() >= 3)
        .collect();
    weld_polygons(&cells, 1e-9 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::validate_mesh;

    #[test]
    fn all_families_cover_the_square() {
        for family in MeshFamily::ALL {
            for n in [2, 4, 8] {
                let m = generate_mesh(family, n, Some(0)).unwrap();
                assert!(
                    (m.total_area() - 1.0).abs() < 1e-10,
                    "{family} N={n}: area {}",
                    m.total_area()
                );
                let r = validate_mesh(&m).unwrap();
                assert!(r.min_rho() > 0.0 && r.min_edge() > 0.0, "{family} N={n}");
                for e in &m.elements {
                    let pts = m.element_points(e.id);
                    let k = pts.len();
                    for i in 0..k {
                        assert!((pts[(i + 1) % k] - pts[i]).norm() <= e.diameter + 1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn counts() {
        assert_eq!(
            generate_mesh(MeshFamily::Triangle, 4, None).unwrap().n_elements(),
            32
        );
        assert_eq!(
            generate_mesh(MeshFamily::VoronoiCvt, 8, Some(0))
                .unwrap()
                .n_elements(),
            64
        );
        assert_eq!(
            generate_mesh(MeshFamily::VoronoiRandom, 8, Some(3))
                .unwrap()
                .n_elements(),
            64
        );
    }

    #[test]
    fn hexagon_needs_two_per_side() {
        assert!(matches!(
            generate_mesh(MeshFamily::Hexagon, 1, None),
            Err(MeshError::TooCoarse { min: 2, .. })
        ));
        let m = generate_mesh(MeshFamily::Hexagon, 8, None).unwrap();
        let hexes = m.elements.iter().filter(|e| e.n_vertices() == 6).count();
        assert!(hexes > m.n_elements() / 2);
    }

    #[test]
    fn deterministic_and_refining() {
        for family in MeshFamily::ALL {
            let a = generate_mesh(family, 4, Some(7)).unwrap();
            let b = generate_mesh(family, 4, Some(7)).unwrap();
            assert_eq!(a, b);
            let fine = generate_mesh(family, 8, Some(7)).unwrap();
            assert!(fine.h < a.h, "{family}: {} !< {}", fine.h, a.h);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn generated_meshes_are_valid(k in 0usize..6, n in 2usize..12, seed in 0u64..1000) {
            let family = MeshFamily::ALL[k];
            let m = generate_mesh(family, n, Some(seed)).unwrap();
            proptest::prop_assert!((m.total_area() - 1.0).abs() < 1e-10);
            proptest::prop_assert!(validate_mesh(&m).is_ok());
            for e in &m.elements {
                let (area, _, _) = crate::mesh::polygon_geometry(&m.element_points(e.id));
                proptest::prop_assert!((area - e.area).abs() <= 1e-12 * e.area);
            }
        }
    }
}
