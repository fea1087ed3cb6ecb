//! Reference-element bases, quadrature and degree-of-freedom maps for the
//! discrete spaces: MINI velocity (P1 + cubic bubble), P1 pressure, RT0
//! Darcy velocity, P0 Darcy pressure, vector P1 displacement and the P0
//! interface multiplier.

use thiserror::Error;

use crate::mesh::{BoundaryLabel, InterfaceGeometry, Point, SubMesh};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ElementError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature rule of degree {degree} fails monomial x^{a} y^{b}: error {err:e}")]
    Inexact { degree: usize, a: usize, b: usize, err: f64 },
}

/// Three-point Gauss-Legendre rule on `[0, 1]` as (abscissa, weight).
pub const GAUSS3_LINE: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Quadrature on the reference triangle in barycentric coordinates. Weights
/// sum to the reference area 1/2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Exact integral of `l1^a l2^b l3^c` over the reference triangle.
pub fn reference_monomial_integral(a: usize, b: usize, c: usize) -> f64 {
    factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 2)
}

fn orbit_s21(a: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let c = 1.0 - 2.0 * a;
    for p in [[a, a, c], [a, c, a], [c, a, a]] {
        pts.push(p);
        wts.push(w);
    }
}

fn orbit_s111(a: f64, b: f64, w: f64, pts: &mut Vec<[f64; 3]>, wts: &mut Vec<f64>) {
    let c = 1.0 - a - b;
    for p in [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
        pts.push(p);
        wts.push(w);
    }
}

/// Symmetric rule exact to `degree` on triangles, `degree` in 1..=6.
pub fn quadrature_rule(degree: usize) -> Result<QuadratureRule, ElementError> {
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match degree {
        1 => {
            points.push([1.0 / 3.0; 3]);
            weights.push(0.5);
        }
        2 => orbit_s21(1.0 / 6.0, 1.0 / 6.0, &mut points, &mut weights),
        3 | 4 => {
            orbit_s21(
                0.445_948_490_915_964_886_318_329_253_883,
                0.111_690_794_839_005_732_847_503_504_216_6,
                &mut points,
                &mut weights,
            );
            orbit_s21(
                0.091_576_213_509_770_743_459_571_463_402_2,
                0.054_975_871_827_660_933_819_163_162_450_1,
                &mut points,
                &mut weights,
            );
        }
        5 => {
            let r15 = 15f64.sqrt();
            points.push([1.0 / 3.0; 3]);
            weights.push(9.0 / 80.0);
            orbit_s21((6.0 + r15) / 21.0, (155.0 + r15) / 2400.0, &mut points, &mut weights);
            orbit_s21((6.0 - r15) / 21.0, (155.0 - r15) / 2400.0, &mut points, &mut weights);
        }
        6 => {
            orbit_s21(
                0.249_286_745_170_910_421_291_638_553_107,
                0.058_393_137_863_189_683_012_644_805_692_79,
                &mut points,
                &mut weights,
            );
            orbit_s21(
                0.063_089_014_491_502_228_340_331_602_870_82,
                0.025_422_453_185_103_408_460_468_404_553_43,
                &mut points,
                &mut weights,
            );
            orbit_s111(
                0.053_145_049_844_816_947_353_249_671_631_4,
                0.310_352_451_033_784_405_416_607_733_956_6,
                0.041_425_537_809_186_787_596_776_728_210_22,
                &mut points,
                &mut weights,
            );
        }
        _ => {
            return Err(ElementError::InvalidArgument(format!(
                "unsupported quadrature degree {degree}, expected 1..=6"
            )))
        }
    }
    let rule = QuadratureRule { points, weights, degree };
    rule.check_exactness(1e-13)?;
    Ok(rule)
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Verifies exactness on every monomial `l1^a l2^b`, `a + b <= degree`.
    pub fn check_exactness(&self, tol: f64) -> Result<(), ElementError> {
        for a in 0..=self.degree {
            for b in 0..=self.degree - a {
                let approx: f64 = self
                    .points
                    .iter()
                    .zip(&self.weights)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                    .sum();
                let exact = reference_monomial_integral(a, b, 0);
                let err = (approx - exact).abs() / exact;
                if err > tol {
                    return Err(ElementError::Inexact { degree: self.degree, a, b, err });
                }
            }
        }
        Ok(())
    }
}

/// Affine triangle with barycentric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub vertices: [Point; 3],
    pub area: f64,
    /// Physical gradients of the barycentric coordinates.
    pub grads: [[f64; 2]; 3],
}

impl TriangleGeometry {
    pub fn new(vertices: [Point; 3]) -> Self {
        let [a, b, c] = vertices;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        // grad l_i = rot(opposite edge) / (2 area)
        let g = |p: Point, q: Point| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
        TriangleGeometry {
            vertices,
            area: 0.5 * det,
            grads: [g(b, c), g(c, a), g(a, b)],
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.vertices;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    pub fn barycentric(&self, x: Point) -> [f64; 3] {
        let a = self.vertices[0];
        let l1 = self.grads[1][0] * (x[0] - a[0]) + self.grads[1][1] * (x[1] - a[1]);
        let l2 = self.grads[2][0] * (x[0] - a[0]) + self.grads[2][1] * (x[1] - a[1]);
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn centroid(&self) -> Point {
        self.point([1.0 / 3.0; 3])
    }

    /// Length of local edge `k` (opposite vertex `k`).
    pub fn edge_length(&self, k: usize) -> f64 {
        crate::mesh::dist(self.vertices[(k + 1) % 3], self.vertices[(k + 2) % 3])
    }
}

/// P1 basis values and (constant) physical gradients.
pub fn eval_p1(geom: &TriangleGeometry, bary: [f64; 3]) -> ([f64; 3], [[f64; 2]; 3]) {
    (bary, geom.grads)
}

/// Cubic bubble `27 l1 l2 l3`, equal to one at the barycenter.
pub fn eval_bubble(geom: &TriangleGeometry, bary: [f64; 3]) -> (f64, [f64; 2]) {
    let [l1, l2, l3] = bary;
    let g = geom.grads;
    let value = 27.0 * l1 * l2 * l3;
    let grad = [
        27.0 * (l2 * l3 * g[0][0] + l1 * l3 * g[1][0] + l1 * l2 * g[2][0]),
        27.0 * (l2 * l3 * g[0][1] + l1 * l3 * g[1][1] + l1 * l2 * g[2][1]),
    ];
    (value, grad)
}

/// RT0 basis on a triangle: `phi_k = s_k (x - x_k) / (2 area)`, normalised
/// so the outward flux through local edge `k` is `s_k` and zero through the
/// others. `signs[k]` is +1 when the global edge normal is outward for this
/// triangle. Returns values and the constant divergences.
pub fn eval_rt0(geom: &TriangleGeometry, signs: [f64; 3], x: Point) -> ([[f64; 2]; 3], [f64; 3]) {
    let scale = 1.0 / (2.0 * geom.area);
    let mut vals = [[0.0; 2]; 3];
    let mut divs = [0.0; 3];
    for k in 0..3 {
        let v = geom.vertices[k];
        vals[k] = [
            signs[k] * scale * (x[0] - v[0]),
            signs[k] * scale * (x[1] - v[1]),
        ];
        divs[k] = signs[k] / geom.area;
    }
    (vals, divs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// MINI velocity, two components of P1 + bubble.
    VectorP1Bubble,
    ScalarP1,
    Rt0,
    ScalarP0,
    VectorP1,
    /// One constant per porous interface edge.
    InterfaceP0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Space {
    pub kind: SpaceKind,
    pub dof_count: usize,
}

impl Space {
    pub fn new(kind: SpaceKind, mesh: &SubMesh, interface: Option<&InterfaceGeometry>) -> Self {
        let dof_count = match kind {
            SpaceKind::VectorP1Bubble => 2 * (mesh.n_nodes() + mesh.n_triangles()),
            SpaceKind::ScalarP1 => mesh.n_nodes(),
            SpaceKind::Rt0 => mesh.n_edges(),
            SpaceKind::ScalarP0 => mesh.n_triangles(),
            SpaceKind::VectorP1 => 2 * mesh.n_nodes(),
            SpaceKind::InterfaceP0 => interface.map_or(0, |g| g.n_multipliers()),
        };
        Space { kind, dof_count }
    }
}

/// Which boundary labels carry homogeneous essential conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialRules {
    /// Fluid walls: all vertex dofs of the velocity (bubbles are never constrained).
    pub velocity_wall: Vec<BoundaryLabel>,
    /// Darcy no-flow edges: RT0 flux dofs.
    pub darcy_no_flow: Vec<BoundaryLabel>,
    /// Clamped displacement: both components at every vertex.
    pub displacement_clamped: Vec<BoundaryLabel>,
}

impl Default for EssentialRules {
    fn default() -> Self {
        EssentialRules {
            velocity_wall: vec![BoundaryLabel::GammaF],
            darcy_no_flow: vec![BoundaryLabel::GammaPNeumann],
            displacement_clamped: vec![
                BoundaryLabel::GammaPDirichlet,
                BoundaryLabel::GammaPNeumann,
                BoundaryLabel::OutletP,
            ],
        }
    }
}

/// Local-to-global tables plus the essential-dof mask with prescribed values.
///
/// Local ordering per triangle:
/// - `VectorP1Bubble`: `[ux_v0, ux_v1, ux_v2, ux_b, uy_v0, uy_v1, uy_v2, uy_b]`
/// - `VectorP1`: `[x_v0, x_v1, x_v2, y_v0, y_v1, y_v2]`
/// - `ScalarP1`: vertices; `Rt0`: local edges; `ScalarP0`: the triangle.
/// `InterfaceP0` has one "cell" per porous interface edge.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub space: Space,
    stride: usize,
    cells: Vec<usize>,
    /// RT0 orientation signs per triangle, empty for other kinds.
    signs: Vec<[f64; 3]>,
    essential: Vec<Option<f64>>,
}

impl DofMap {
    pub fn kind(&self) -> SpaceKind {
        self.space.kind
    }

    pub fn n_dofs(&self) -> usize {
        self.space.dof_count
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len() / self.stride
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c * self.stride..(c + 1) * self.stride]
    }

    pub fn rt0_signs(&self, t: usize) -> [f64; 3] {
        self.signs[t]
    }

    pub fn essential(&self) -> &[Option<f64>] {
        &self.essential
    }

    pub fn is_essential(&self, dof: usize) -> bool {
        self.essential[dof].is_some()
    }

    pub fn n_essential(&self) -> usize {
        self.essential.iter().filter(|e| e.is_some()).count()
    }
}

/// Builds the dof map of `kind` on `mesh`, constraining dofs per `rules`.
pub fn build_dofmap(
    kind: SpaceKind,
    mesh: &SubMesh,
    interface: Option<&InterfaceGeometry>,
    rules: &EssentialRules,
) -> Result<DofMap, ElementError> {
    let space = Space::new(kind, mesh, interface);
    let n = mesh.n_nodes();
    let nt = mesh.n_triangles();
    let mut essential = vec![None; space.dof_count];
    let mut signs = Vec::new();
    let (stride, cells) = match kind {
        SpaceKind::VectorP1Bubble => {
            let mut cells = Vec::with_capacity(8 * nt);
            for (t, tri) in mesh.triangles().iter().enumerate() {
                for c in 0..2 {
                    let off = c * (n + nt);
                    cells.extend(tri.iter().map(|&v| off + v));
                    cells.push(off + n + t);
                }
            }
            for be in mesh.boundary_edges() {
                if rules.velocity_wall.contains(&be.label) {
                    for &v in &be.nodes {
                        essential[v] = Some(0.0);
                        essential[n + nt + v] = Some(0.0);
                    }
                }
            }
            (8, cells)
        }
        SpaceKind::ScalarP1 => (3, mesh.triangles().iter().flatten().copied().collect()),
        SpaceKind::VectorP1 => {
            let mut cells = Vec::with_capacity(6 * nt);
            for tri in mesh.triangles() {
                cells.extend(tri.iter().copied());
                cells.extend(tri.iter().map(|&v| n + v));
            }
            for be in mesh.boundary_edges() {
                if rules.displacement_clamped.contains(&be.label) {
                    for &v in &be.nodes {
                        essential[v] = Some(0.0);
                        essential[n + v] = Some(0.0);
                    }
                }
            }
            (6, cells)
        }
        SpaceKind::Rt0 => {
            let mut cells = Vec::with_capacity(3 * nt);
            for t in 0..nt {
                let edges = mesh.triangle_edges(t);
                let mut s = [0.0; 3];
                for k in 0..3 {
                    s[k] = if mesh.edge_triangles(edges[k]).0 == t { 1.0 } else { -1.0 };
                }
                cells.extend(edges);
                signs.push(s);
            }
            for (b, be) in mesh.boundary_edges().iter().enumerate() {
                if rules.darcy_no_flow.contains(&be.label) {
                    essential[mesh.boundary_edge_id(b)] = Some(0.0);
                }
            }
            (3, cells)
        }
        SpaceKind::ScalarP0 => (1, (0..nt).collect()),
        SpaceKind::InterfaceP0 => {
            if interface.is_none() {
                return Err(ElementError::InvalidArgument(
                    "interface multiplier space needs an interface geometry".into(),
                ));
            }
            (1, (0..space.dof_count).collect())
        }
    };
    Ok(DofMap { space, stride, cells, signs, essential })
}

/// Value and gradient of a MINI velocity field on triangle `t`:
/// `(u, grad)` with `grad[c][d] = d u_c / d x_d`.
pub fn eval_mini_field(
    dofs: &DofMap,
    coeffs: &[f64],
    t: usize,
    geom: &TriangleGeometry,
    bary: [f64; 3],
) -> ([f64; 2], [[f64; 2]; 2]) {
    let cell = dofs.cell(t);
    let (bv, bg) = eval_bubble(geom, bary);
    let mut u = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for c in 0..2 {
        for k in 0..3 {
            let a = coeffs[cell[4 * c + k]];
            u[c] += a * bary[k];
            g[c][0] += a * geom.grads[k][0];
            g[c][1] += a * geom.grads[k][1];
        }
        let a = coeffs[cell[4 * c + 3]];
        u[c] += a * bv;
        g[c][0] += a * bg[0];
        g[c][1] += a * bg[1];
    }
    (u, g)
}

/// Value and gradient of a vector P1 field on triangle `t`.
pub fn eval_vector_p1_field(
    dofs: &DofMap,
    coeffs: &[f64],
    t: usize,
    geom: &TriangleGeometry,
    bary: [f64; 3],
) -> ([f64; 2], [[f64; 2]; 2]) {
    let cell = dofs.cell(t);
    let mut u = [0.0; 2];
    let mut g = [[0.0; 2]; 2];
    for c in 0..2 {
        for k in 0..3 {
            let a = coeffs[cell[3 * c + k]];
            u[c] += a * bary[k];
            g[c][0] += a * geom.grads[k][0];
            g[c][1] += a * geom.grads[k][1];
        }
    }
    (u, g)
}

/// Value of a scalar P1 field on triangle `t`.
pub fn eval_scalar_p1_field(dofs: &DofMap, coeffs: &[f64], t: usize, bary: [f64; 3]) -> f64 {
    let cell = dofs.cell(t);
    (0..3).map(|k| coeffs[cell[k]] * bary[k]).sum()
}

/// Value of an RT0 field on triangle `t` at physical point `x`.
pub fn eval_rt0_field(
    dofs: &DofMap,
    coeffs: &[f64],
    t: usize,
    geom: &TriangleGeometry,
    x: Point,
) -> [f64; 2] {
    let cell = dofs.cell(t);
    let (vals, _) = eval_rt0(geom, dofs.rt0_signs(t), x);
    let mut u = [0.0; 2];
    for k in 0..3 {
        u[0] += coeffs[cell[k]] * vals[k][0];
        u[1] += coeffs[cell[k]] * vals[k][1];
    }
    u
}
