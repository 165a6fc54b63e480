//! Global numbering of the velocity, temperature and pressure spaces.
//!
//! Scalar "entities" are the mesh vertices followed by the mesh edges
//! (one midpoint value per edge). Velocity stores both components of every
//! entity, then two divergence moments per element; temperature stores one
//! value per entity, then one cell average per element; pressure stores
//! three `P_1` coefficients per element.

use crate::mesh::PolygonalMesh;
use crate::polybasis::Vec2;
use crate::projection::LocalGeometry;

/// Rule used to take interpolation moments of analytic fields.
const INTERPOLATION_DEGREE: usize = 12;

#[derive(Debug, Clone)]
struct Entities {
    n_vertices: usize,
    n_edges: usize,
    /// Per element: global entity ids in local scalar order
    /// (loop vertices, then loop edges).
    local: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl Entities {
    fn new(mesh: &PolygonalMesh) -> Self {
        let nv = mesh.n_vertices();
        let local = mesh
            .elements
            .iter()
            .map(|el| {
                el.vertex_loop
                    .iter()
                    .copied()
                    .chain(el.edges.iter().map(|&e| nv + e))
                    .collect()
            })
            .collect();
        let mut boundary = vec![false; nv + mesh.n_edges()];
        for (i, e) in mesh.edges.iter().enumerate() {
            if e.boundary {
                boundary[e.vertices[0]] = true;
                boundary[e.vertices[1]] = true;
                boundary[nv + i] = true;
            }
        }
        Entities {
            n_vertices: nv,
            n_edges: mesh.n_edges(),
            local,
            boundary,
        }
    }

    fn count(&self) -> usize {
        self.n_vertices + self.n_edges
    }
}

#[derive(Debug, Clone)]
pub struct VelocityDofLayout {
    entities: Entities,
    local_to_global: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl VelocityDofLayout {
    pub fn ndofs(&self) -> usize {
        self.boundary.len()
    }

    /// Global ids of the local DOFs of `element`, in projector order.
    pub fn element_dofs(&self, element: usize) -> &[usize] {
        &self.local_to_global[element]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    /// Number of scalar entities (vertices + edges) flagged as boundary.
    pub fn boundary_entities(&self) -> usize {
        self.entities.boundary.iter().filter(|&&b| b).count()
    }

    pub fn n_entities(&self) -> usize {
        self.entities.count()
    }

    /// Global id of component `c` of scalar entity `entity`.
    pub fn entity_dof(&self, c: usize, entity: usize) -> usize {
        c * self.entities.count() + entity
    }
}

#[derive(Debug, Clone)]
pub struct TemperatureDofLayout {
    local_to_global: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl TemperatureDofLayout {
    pub fn ndofs(&self) -> usize {
        self.boundary.len()
    }

    pub fn element_dofs(&self, element: usize) -> &[usize] {
        &self.local_to_global[element]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }
}

#[derive(Debug, Clone)]
pub struct PressureDofLayout {
    n_elements: usize,
    /// `int_E m_beta` for every pressure DOF: the zero-mean constraint row.
    mean_row: Vec<f64>,
}

impl PressureDofLayout {
    pub const LOCAL: usize = 3;

    pub fn ndofs(&self) -> usize {
        Self::LOCAL * self.n_elements
    }

    pub fn element_dofs(&self, element: usize) -> std::ops::Range<usize> {
        Self::LOCAL * element..Self::LOCAL * (element + 1)
    }

    pub fn mean_row(&self) -> &[f64] {
        &self.mean_row
    }
}

#[derive(Debug, Clone)]
pub struct DofLayouts {
    pub velocity: VelocityDofLayout,
    pub temperature: TemperatureDofLayout,
    pub pressure: PressureDofLayout,
}

pub fn build_dof_maps(mesh: &PolygonalMesh) -> DofLayouts {
    let entities = Entities::new(mesh);
    let ne = entities.count();
    let nel = mesh.n_elements();

    let mut v_boundary = entities.boundary.clone();
    v_boundary.extend_from_slice(&entities.boundary);
    v_boundary.extend(std::iter::repeat_n(false, 2 * nel));
    let v_local = entities
        .local
        .iter()
        .enumerate()
        .map(|(e, loc)| {
            let mut g: Vec<usize> = loc.to_vec();
            g.extend(loc.iter().map(|&i| ne + i));
            g.push(2 * ne + 2 * e);
            g.push(2 * ne + 2 * e + 1);
            g
        })
        .collect();

    let mut t_boundary = entities.boundary.clone();
    t_boundary.extend(std::iter::repeat_n(false, nel));
    let t_local = entities
        .local
        .iter()
        .enumerate()
        .map(|(e, loc)| {
            let mut g = loc.clone();
            g.push(ne + e);
            g
        })
        .collect();

    // int_E m_(1,0) = int_E m_(0,1) = 0 about the centroid
    let mut mean_row = vec![0.0; PressureDofLayout::LOCAL * nel];
    for el in &mesh.elements {
        mean_row[PressureDofLayout::LOCAL * el.id] = el.area;
    }

    DofLayouts {
        velocity: VelocityDofLayout {
            entities,
            local_to_global: v_local,
            boundary: v_boundary,
        },
        temperature: TemperatureDofLayout {
            local_to_global: t_local,
            boundary: t_boundary,
        },
        pressure: PressureDofLayout {
            n_elements: nel,
            mean_row,
        },
    }
}

/// Local temperature-type DOFs of `field`: vertex and midpoint values, then
/// the cell average.
pub fn interpolate_scalar(field: impl Fn(Vec2) -> f64, geo: &LocalGeometry) -> Vec<f64> {
    let mut dofs: Vec<f64> = geo.node_points().into_iter().map(&field).collect();
    let rule = geo
        .rule(INTERPOLATION_DEGREE)
        .expect("element passed projector build");
    dofs.push(rule.integrate(&field) / geo.area);
    dofs
}

/// Local velocity DOFs of `field` given its analytic divergence.
pub fn interpolate_velocity(
    field: impl Fn(Vec2) -> Vec2,
    divergence: impl Fn(Vec2) -> f64,
    geo: &LocalGeometry,
) -> Vec<f64> {
    let nodes = geo.node_points();
    let mut dofs: Vec<f64> = nodes.iter().map(|&p| field(p).x).collect();
    dofs.extend(nodes.iter().map(|&p| field(p).y));
    let rule = geo
        .rule(INTERPOLATION_DEGREE)
        .expect("element passed projector build");
    let b1 = geo.basis(1);
    for a in 1..3 {
        let m = rule.integrate(|x| divergence(x) * b1.eval(x)[a]);
        dofs.push(geo.h / geo.area * m);
    }
    dofs
}

/// Global DOF vector of a scalar field.
pub fn interpolate_scalar_global(
    field: impl Fn(Vec2) -> f64,
    mesh: &PolygonalMesh,
    layout: &TemperatureDofLayout,
    geometries: &[LocalGeometry],
) -> Vec<f64> {
    let mut out = vec![0.0; layout.ndofs()];
    for el in &mesh.elements {
        let local = interpolate_scalar(&field, &geometries[el.id]);
        scatter(&mut out, layout.element_dofs(el.id), &local);
    }
    out
}

/// Global DOF vector of a velocity field.
pub fn interpolate_velocity_global(
    field: impl Fn(Vec2) -> Vec2,
    divergence: impl Fn(Vec2) -> f64,
    mesh: &PolygonalMesh,
    layout: &VelocityDofLayout,
    geometries: &[LocalGeometry],
) -> Vec<f64> {
    let mut out = vec![0.0; layout.ndofs()];
    for el in &mesh.elements {
        let local = interpolate_velocity(&field, &divergence, &geometries[el.id]);
        scatter(&mut out, layout.element_dofs(el.id), &local);
    }
    out
}

/// Element-wise L2 projection of `field` onto `P_1`.
pub fn interpolate_pressure_global(
    field: impl Fn(Vec2) -> f64,
    layout: &PressureDofLayout,
    geometries: &[LocalGeometry],
) -> Vec<f64> {
    let mut out = vec![0.0; layout.ndofs()];
    for geo in geometries {
        let rule = geo
            .rule(INTERPOLATION_DEGREE)
            .expect("element passed projector build");
        let b1 = geo.basis(1);
        let mass = crate::polybasis::poly_mass_matrix(&b1, &rule);
        let rhs =
            nalgebra::DVector::from_iterator(3, (0..3).map(|a| rule.integrate(|x| field(x) * b1.eval(x)[a])));
        let c = mass.lu().solve(&rhs).expect("P1 mass matrix is SPD");
        for (k, i) in layout.element_dofs(geo.id).enumerate() {
            out[i] = c[k];
        }
    }
    out
}

pub fn gather(global: &[f64], ids: &[usize]) -> Vec<f64> {
    ids.iter().map(|&i| global[i]).collect()
}

fn scatter(global: &mut [f64], ids: &[usize], local: &[f64]) {
    for (&i, &v) in ids.iter().zip(local) {
        global[i] = v;
    }
}

/// Zero every entry flagged in `mask`.
pub fn apply_dirichlet(dofs: &mut [f64], mask: &[bool]) {
    for (d, &b) in dofs.iter_mut().zip(mask) {
        if b {
            *d = 0.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSolution {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
}

impl DiscreteSolution {
    pub fn zeros(layouts: &DofLayouts) -> Self {
        DiscreteSolution {
            u: vec![0.0; layouts.velocity.ndofs()],
            p: vec![0.0; layouts.pressure.ndofs()],
            t: vec![0.0; layouts.temperature.ndofs()],
        }
    }
}
