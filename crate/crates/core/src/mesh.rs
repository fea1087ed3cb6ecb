//! Triangulations of the fluid and porous subdomains, boundary labels, the
//! ASCII mesh format, and the interface pairing used to integrate coupling
//! terms on possibly non-matching grids.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

pub type Point = [f64; 2];

/// Default relative tolerance for interface pairing.
pub const DEFAULT_PAIRING_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("triangle {tri}: negative area ({area:e})")]
    NegativeArea { tri: usize, area: f64 },
    #[error("triangle {tri}: node index {node} out of range")]
    NodeOutOfRange { tri: usize, node: usize },
    #[error("boundary edge {edge} ({a}, {b}) is not an edge of exactly one triangle")]
    DanglingBoundaryEdge { edge: usize, a: usize, b: usize },
    #[error("boundary edge {edge} ({a}, {b}) is listed more than once")]
    DuplicateBoundaryEdge { edge: usize, a: usize, b: usize },
    #[error("topological boundary edge ({a}, {b}) carries no label")]
    UnlabeledBoundary { a: usize, b: usize },
    #[error("interface geometry mismatch: {0}")]
    GeometryMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionTag {
    Fluid,
    Porous,
}

impl RegionTag {
    pub fn keyword(self) -> &'static str {
        match self {
            RegionTag::Fluid => "fluid",
            RegionTag::Porous => "porous",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        match s {
            "fluid" => Some(RegionTag::Fluid),
            "porous" => Some(RegionTag::Porous),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryLabel {
    /// No-slip fluid wall.
    GammaF,
    /// Porous boundary with prescribed (zero) pressure.
    GammaPDirichlet,
    /// Porous no-flow boundary.
    GammaPNeumann,
    Interface,
    /// Fluid inlet with prescribed normal traction `-p_in n`.
    InletF,
    /// Porous outlet with prescribed pressure `p_out`.
    OutletP,
}

impl BoundaryLabel {
    pub const ALL: [BoundaryLabel; 6] = [
        BoundaryLabel::GammaF,
        BoundaryLabel::GammaPDirichlet,
        BoundaryLabel::GammaPNeumann,
        BoundaryLabel::Interface,
        BoundaryLabel::InletF,
        BoundaryLabel::OutletP,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BoundaryLabel::GammaF => "GAMMA_F",
            BoundaryLabel::GammaPDirichlet => "GAMMA_P_D",
            BoundaryLabel::GammaPNeumann => "GAMMA_P_N",
            BoundaryLabel::Interface => "INTERFACE",
            BoundaryLabel::InletF => "INLET_F",
            BoundaryLabel::OutletP => "OUTLET_P",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.keyword() == s)
    }

    /// True for the external porous boundary, where the displacement is clamped.
    pub fn is_porous_external(self) -> bool {
        matches!(
            self,
            BoundaryLabel::GammaPDirichlet | BoundaryLabel::GammaPNeumann | BoundaryLabel::OutletP
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub label: BoundaryLabel,
}

/// Axis-aligned rectangle `(x0, x1) x (y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// Structure of a mesh produced by [`build_structured_mesh`], kept for
/// index-arithmetic point location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredGrid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl StructuredGrid {
    pub fn hx(&self) -> f64 {
        (self.rect.x1 - self.rect.x0) / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        (self.rect.y1 - self.rect.y0) / self.ny as f64
    }

    /// Triangle containing `p` (points on shared edges go to either side).
    pub fn locate(&self, p: Point) -> usize {
        let sx = (p[0] - self.rect.x0) / self.hx();
        let sy = (p[1] - self.rect.y0) / self.hy();
        let i = (sx.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (sy.floor().max(0.0) as usize).min(self.ny - 1);
        let xi = sx - i as f64;
        let eta = sy - j as f64;
        let cell = j * self.nx + i;
        if eta <= xi {
            2 * cell
        } else {
            2 * cell + 1
        }
    }
}

/// Triangulation of one subdomain.
///
/// Triangles are counterclockwise. Local edge `k` of a triangle is the edge
/// opposite its local vertex `k`.
#[derive(Debug, Clone)]
pub struct SubMesh {
    region: RegionTag,
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<(usize, Option<usize>)>,
    bedge_edge: Vec<usize>,
    edge_bedge: Vec<Option<usize>>,
    grid: Option<StructuredGrid>,
}

impl PartialEq for SubMesh {
    fn eq(&self, other: &Self) -> bool {
        self.region == other.region
            && self.nodes == other.nodes
            && self.triangles == other.triangles
            && self.boundary_edges == other.boundary_edges
    }
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

impl SubMesh {
    /// Builds a mesh and checks every invariant.
    pub fn new(
        region: RegionTag,
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self, MeshError> {
        for (t, tri) in triangles.iter().enumerate() {
            for &n in tri {
                if n >= nodes.len() {
                    return Err(MeshError::NodeOutOfRange { tri: t, node: n });
                }
            }
            let area = signed_area(nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
            if area <= 0.0 {
                return Err(MeshError::NegativeArea { tri: t, area });
            }
        }

        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * triangles.len());
        let mut edges = Vec::new();
        let mut edge_tris: Vec<(usize, Option<usize>)> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut local = [0usize; 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let a = tri[(k + 1) % 3];
                let b = tri[(k + 2) % 3];
                let key = edge_key(a, b);
                let id = match lookup.get(&key) {
                    Some(&id) => {
                        let entry = &mut edge_tris[id];
                        if entry.1.is_some() {
                            return Err(MeshError::InvalidArgument(format!(
                                "edge ({a}, {b}) shared by more than two triangles"
                            )));
                        }
                        entry.1 = Some(t);
                        id
                    }
                    None => {
                        let id = edges.len();
                        edges.push([key.0, key.1]);
                        edge_tris.push((t, None));
                        lookup.insert(key, id);
                        id
                    }
                };
                *slot = id;
            }
            tri_edges.push(local);
        }

        let mut edge_bedge = vec![None; edges.len()];
        let mut bedge_edge = Vec::with_capacity(boundary_edges.len());
        for (i, be) in boundary_edges.iter().enumerate() {
            let [a, b] = be.nodes;
            let id = lookup.get(&edge_key(a, b)).copied();
            match id {
                Some(id) if edge_tris[id].1.is_none() => {
                    if edge_bedge[id].is_some() {
                        return Err(MeshError::DuplicateBoundaryEdge { edge: i, a, b });
                    }
                    edge_bedge[id] = Some(i);
                    bedge_edge.push(id);
                }
                _ => return Err(MeshError::DanglingBoundaryEdge { edge: i, a, b }),
            }
        }
        for (id, e) in edges.iter().enumerate() {
            if edge_tris[id].1.is_none() && edge_bedge[id].is_none() {
                return Err(MeshError::UnlabeledBoundary { a: e[0], b: e[1] });
            }
        }

        Ok(SubMesh {
            region,
            nodes,
            triangles,
            boundary_edges,
            edges,
            tri_edges,
            edge_tris,
            bedge_edge,
            edge_bedge,
            grid: None,
        })
    }

    pub fn region(&self) -> RegionTag {
        self.region
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unique edges as sorted node pairs.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Global edge ids of a triangle; entry `k` is opposite local vertex `k`.
    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    /// Triangles adjacent to an edge; the second is `None` on the boundary.
    pub fn edge_triangles(&self, e: usize) -> (usize, Option<usize>) {
        self.edge_tris[e]
    }

    /// Global edge id of a boundary edge.
    pub fn boundary_edge_id(&self, b: usize) -> usize {
        self.bedge_edge[b]
    }

    /// Boundary edge index of a global edge, if it lies on the boundary.
    pub fn edge_boundary_index(&self, e: usize) -> Option<usize> {
        self.edge_bedge[e]
    }

    /// The triangle owning a boundary edge.
    pub fn boundary_edge_triangle(&self, b: usize) -> usize {
        self.edge_tris[self.bedge_edge[b]].0
    }

    pub fn grid(&self) -> Option<&StructuredGrid> {
        self.grid.as_ref()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Point; 3] {
        let tri = self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_vertices(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Diagonal of the bounding box.
    pub fn diameter(&self) -> f64 {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    /// Largest edge length.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[a, b]| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Outward unit normal of boundary edge `b` with respect to its triangle.
    pub fn boundary_normal(&self, b: usize) -> Point {
        let [a, c] = self.boundary_edges[b].nodes;
        let t = self.boundary_edge_triangle(b);
        let (pa, pc) = (self.nodes[a], self.nodes[c]);
        let tri = self.triangles[t];
        let opp = tri.iter().copied().find(|&n| n != a && n != c).unwrap();
        outward_normal(pa, pc, self.nodes[opp])
    }

    pub fn boundary_edge_length(&self, b: usize) -> f64 {
        let [a, c] = self.boundary_edges[b].nodes;
        dist(self.nodes[a], self.nodes[c])
    }

    /// Boundary edge indices carrying `label`.
    pub fn edges_with_label(&self, label: BoundaryLabel) -> Vec<usize> {
        (0..self.boundary_edges.len())
            .filter(|&b| self.boundary_edges[b].label == label)
            .collect()
    }

    /// Reassigns boundary labels; `f` receives the edge midpoint and the
    /// current label and returns the new one.
    pub fn relabel(mut self, f: impl Fn(Point, BoundaryLabel) -> BoundaryLabel) -> Self {
        for be in &mut self.boundary_edges {
            let [a, b] = be.nodes;
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            be.label = f(mid, be.label);
        }
        self
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Unit normal of segment `a`-`b` pointing away from `opp`.
pub(crate) fn outward_normal(a: Point, b: Point, opp: Point) -> Point {
    let len = dist(a, b);
    let mut n = [(b[1] - a[1]) / len, -(b[0] - a[0]) / len];
    let mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
    if n[0] * (opp[0] - mid[0]) + n[1] * (opp[1] - mid[1]) > 0.0 {
        n = [-n[0], -n[1]];
    }
    n
}

/// Uniform `nx x ny` grid with each cell split along its lower-left to
/// upper-right diagonal. Nodes are ordered lexicographically, x fastest.
/// Boundary edges run counterclockwise (bottom, right, top, left) and are
/// labeled `GammaF` for fluid meshes and `GammaPNeumann` for porous ones.
pub fn build_structured_mesh(
    rect: Rect,
    nx: usize,
    ny: usize,
    region: RegionTag,
) -> Result<SubMesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::InvalidArgument(format!(
            "cell counts must be positive, got nx={nx}, ny={ny}"
        )));
    }
    if !(rect.x1 > rect.x0 && rect.y1 > rect.y0) {
        return Err(MeshError::InvalidArgument("degenerate rectangle".into()));
    }
    let grid = StructuredGrid { rect, nx, ny };
    let (hx, hy) = (grid.hx(), grid.hy());
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        let y = if j == ny { rect.y1 } else { rect.y0 + j as f64 * hy };
        for i in 0..=nx {
            let x = if i == nx { rect.x1 } else { rect.x0 + i as f64 * hx };
            nodes.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (n00, n10, n01, n11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([n00, n10, n11]);
            triangles.push([n00, n11, n01]);
        }
    }
    let label = match region {
        RegionTag::Fluid => BoundaryLabel::GammaF,
        RegionTag::Porous => BoundaryLabel::GammaPNeumann,
    };
    let mut bedges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        bedges.push([id(i, 0), id(i + 1, 0)]);
    }
    for j in 0..ny {
        bedges.push([id(nx, j), id(nx, j + 1)]);
    }
    for i in (0..nx).rev() {
        bedges.push([id(i + 1, ny), id(i, ny)]);
    }
    for j in (0..ny).rev() {
        bedges.push([id(0, j + 1), id(0, j)]);
    }
    let boundary_edges = bedges
        .into_iter()
        .map(|nodes| BoundaryEdge { nodes, label })
        .collect();
    let mut mesh = SubMesh::new(region, nodes, triangles, boundary_edges)?;
    mesh.grid = Some(grid);
    Ok(mesh)
}

/// Parses the line-oriented `fpsi-mesh 1` format.
pub fn import_mesh(text: &str) -> Result<SubMesh, MeshError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let parse_err = |line: usize, message: String| MeshError::Parse { line, message };

    let (l1, header) = lines.next().ok_or_else(|| parse_err(1, "empty document".into()))?;
    if header.split_whitespace().collect::<Vec<_>>() != ["fpsi-mesh", "1"] {
        return Err(parse_err(l1, format!("expected `fpsi-mesh 1`, found `{header}`")));
    }
    let (l2, counts) = lines
        .next()
        .ok_or_else(|| parse_err(l1 + 1, "missing count line".into()))?;
    let fields: Vec<&str> = counts.split_whitespace().collect();
    if fields.len() != 4 {
        return Err(parse_err(l2, "expected `<region> <n_nodes> <n_tris> <n_bedges>`".into()));
    }
    let region = RegionTag::from_keyword(fields[0])
        .ok_or_else(|| parse_err(l2, format!("unknown region tag `{}`", fields[0])))?;
    let count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| parse_err(l2, format!("malformed count `{s}`")))
    };
    let (n_nodes, n_tris, n_bedges) = (count(fields[1])?, count(fields[2])?, count(fields[3])?);

    let mut last_line = l2;
    let mut next_fields = |what: &str, n: usize| -> Result<(usize, Vec<String>), MeshError> {
        let (ln, l) = lines
            .next()
            .ok_or_else(|| parse_err(last_line + 1, format!("unexpected end of document, expected {what}")))?;
        last_line = ln;
        let f: Vec<String> = l.split_whitespace().map(str::to_owned).collect();
        if f.len() != n {
            return Err(parse_err(ln, format!("expected {n} fields for {what}, found {}", f.len())));
        }
        Ok((ln, f))
    };

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, f) = next_fields("a node", 2)?;
        let mut p = [0.0; 2];
        for d in 0..2 {
            p[d] = f[d]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(ln, format!("malformed coordinate `{}`", f[d])))?;
        }
        nodes.push(p);
    }
    let mut tri_lines = Vec::with_capacity(n_tris);
    let mut triangles = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (ln, f) = next_fields("a triangle", 3)?;
        let mut t = [0usize; 3];
        for k in 0..3 {
            t[k] = f[k]
                .parse()
                .map_err(|_| parse_err(ln, format!("malformed node index `{}`", f[k])))?;
        }
        tri_lines.push(ln);
        triangles.push(t);
    }
    let mut bedge_lines = Vec::with_capacity(n_bedges);
    let mut bedges = Vec::with_capacity(n_bedges);
    for _ in 0..n_bedges {
        let (ln, f) = next_fields("a boundary edge", 3)?;
        let mut e = [0usize; 2];
        for k in 0..2 {
            e[k] = f[k]
                .parse()
                .map_err(|_| parse_err(ln, format!("malformed node index `{}`", f[k])))?;
            if e[k] >= n_nodes {
                return Err(parse_err(ln, format!("node index {} out of range", e[k])));
            }
        }
        let label = BoundaryLabel::from_keyword(&f[2])
            .ok_or_else(|| parse_err(ln, format!("unknown boundary label `{}`", f[2])))?;
        bedge_lines.push(ln);
        bedges.push(BoundaryEdge { nodes: e, label });
    }
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing content after declared entities".into()));
    }

    SubMesh::new(region, nodes, triangles, bedges).map_err(|e| match e {
        MeshError::NegativeArea { tri, .. } => {
            parse_err(tri_lines[tri], format!("triangle {tri} has negative area"))
        }
        MeshError::NodeOutOfRange { tri, node } => {
            parse_err(tri_lines[tri], format!("node index {node} out of range"))
        }
        MeshError::DanglingBoundaryEdge { edge, a, b } => parse_err(
            bedge_lines[edge],
            format!("dangling boundary edge ({a}, {b}): not an edge of exactly one triangle"),
        ),
        MeshError::DuplicateBoundaryEdge { edge, a, b } => {
            parse_err(bedge_lines[edge], format!("duplicate boundary edge ({a}, {b})"))
        }
        MeshError::UnlabeledBoundary { a, b } => parse_err(
            last_line,
            format!("boundary edge ({a}, {b}) is missing from the boundary list"),
        ),
        other => other,
    })
}

/// Canonical writer for the `fpsi-mesh 1` format.
pub fn export_mesh(mesh: &SubMesh) -> String {
    let mut out = String::new();
    writeln!(out, "fpsi-mesh 1").unwrap();
    writeln!(
        out,
        "{} {} {} {}",
        mesh.region.keyword(),
        mesh.n_nodes(),
        mesh.n_triangles(),
        mesh.boundary_edges.len()
    )
    .unwrap();
    for p in &mesh.nodes {
        writeln!(out, "{} {}", p[0], p[1]).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    for be in &mesh.boundary_edges {
        writeln!(out, "{} {} {}", be.nodes[0], be.nodes[1], be.label.keyword()).unwrap();
    }
    out
}

/// One piece of the common refinement of the fluid and porous interface
/// edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceSegment {
    pub a: Point,
    pub b: Point,
    /// Boundary edge index in the fluid mesh.
    pub fluid_edge: usize,
    pub fluid_triangle: usize,
    /// Boundary edge index in the porous mesh.
    pub porous_edge: usize,
    pub porous_triangle: usize,
    /// Index of the owning porous edge among the porous interface edges;
    /// this is the multiplier dof.
    pub multiplier: usize,
    /// Outward normal of the porous region; `n_f = -n_p`.
    pub normal_p: Point,
    /// Unit tangent, orthogonal to the normal.
    pub tangent: Point,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        dist(self.a, self.b)
    }

    pub fn normal_f(&self) -> Point {
        [-self.normal_p[0], -self.normal_p[1]]
    }

    /// Three-point Gauss rule mapped onto the segment: (point, weight).
    pub fn gauss_points(&self) -> [(Point, f64); 3] {
        let len = self.length();
        let at = |s: f64| {
            [
                self.a[0] + s * (self.b[0] - self.a[0]),
                self.a[1] + s * (self.b[1] - self.a[1]),
            ]
        };
        let g = crate::elements::GAUSS3_LINE;
        [
            (at(g[0].0), g[0].1 * len),
            (at(g[1].0), g[1].1 * len),
            (at(g[2].0), g[2].1 * len),
        ]
    }
}

/// Common refinement of the interface traces of the two meshes.
#[derive(Debug, Clone)]
pub struct InterfaceGeometry {
    pub segments: Vec<InterfaceSegment>,
    /// Porous boundary edges labeled `Interface`, in multiplier-dof order.
    pub porous_edges: Vec<usize>,
    /// Fluid boundary edges labeled `Interface`.
    pub fluid_edges: Vec<usize>,
}

impl InterfaceGeometry {
    pub fn n_multipliers(&self) -> usize {
        self.porous_edges.len()
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(InterfaceSegment::length).sum()
    }
}

fn collinear_within(edges: &[(Point, Point)], tol: f64) -> bool {
    let Some(&(p0, p1)) = edges.first() else {
        return true;
    };
    let len = dist(p0, p1);
    let d = [(p1[0] - p0[0]) / len, (p1[1] - p0[1]) / len];
    let off = |q: Point| ((q[0] - p0[0]) * d[1] - (q[1] - p0[1]) * d[0]).abs();
    edges.iter().all(|&(a, b)| off(a) <= tol && off(b) <= tol)
}

/// Builds the common refinement of the `Interface` edges of both meshes.
///
/// `tol` is relative to the larger of the two mesh diameters. Non-matching
/// grids are accepted only when the interface is a straight line.
pub fn pair_interface(
    fluid: &SubMesh,
    porous: &SubMesh,
    tol: f64,
) -> Result<InterfaceGeometry, MeshError> {
    let abs_tol = tol * fluid.diameter().max(porous.diameter());
    let fluid_edges = fluid.edges_with_label(BoundaryLabel::Interface);
    let porous_edges = porous.edges_with_label(BoundaryLabel::Interface);
    if fluid_edges.is_empty() || porous_edges.is_empty() {
        return Err(MeshError::GeometryMismatch(
            "both meshes need at least one INTERFACE edge".into(),
        ));
    }
    let ends = |m: &SubMesh, b: usize| {
        let [i, j] = m.boundary_edges[b].nodes;
        (m.nodes[i], m.nodes[j])
    };
    let fl: Vec<(Point, Point)> = fluid_edges.iter().map(|&b| ends(fluid, b)).collect();
    let po: Vec<(Point, Point)> = porous_edges.iter().map(|&b| ends(porous, b)).collect();

    let straight = {
        let mut all = fl.clone();
        all.extend_from_slice(&po);
        collinear_within(&all, abs_tol)
    };

    let mut segments = Vec::new();
    let mut fluid_cover = vec![0.0; fluid_edges.len()];
    let mut porous_cover = vec![0.0; porous_edges.len()];
    for (m, (&pb, &(p0, p1))) in porous_edges.iter().zip(&po).enumerate() {
        let plen = dist(p0, p1);
        let d = [(p1[0] - p0[0]) / plen, (p1[1] - p0[1]) / plen];
        let normal_p = porous.boundary_normal(pb);
        let tangent = [normal_p[1], -normal_p[0]];
        let mut pieces: Vec<(f64, f64, usize)> = Vec::new();
        for (k, &(f0, f1)) in fl.iter().enumerate() {
            let off = |q: Point| ((q[0] - p0[0]) * d[1] - (q[1] - p0[1]) * d[0]).abs();
            if off(f0) > abs_tol || off(f1) > abs_tol {
                continue;
            }
            let s0 = (f0[0] - p0[0]) * d[0] + (f0[1] - p0[1]) * d[1];
            let s1 = (f1[0] - p0[0]) * d[0] + (f1[1] - p0[1]) * d[1];
            let lo = s0.min(s1).max(0.0);
            let hi = s0.max(s1).min(plen);
            if hi - lo > abs_tol {
                pieces.push((lo, hi, k));
            }
        }
        pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (lo, hi, k) in pieces {
            // Snap endpoints that coincide with mesh vertices.
            let snap = |s: f64| -> Point {
                if s.abs() <= abs_tol {
                    return p0;
                }
                if (s - plen).abs() <= abs_tol {
                    return p1;
                }
                let (f0, f1) = fl[k];
                for f in [f0, f1] {
                    let sf = (f[0] - p0[0]) * d[0] + (f[1] - p0[1]) * d[1];
                    if (sf - s).abs() <= abs_tol {
                        return f;
                    }
                }
                [p0[0] + s * d[0], p0[1] + s * d[1]]
            };
            let (a, b) = (snap(lo), snap(hi));
            if !straight && (dist(a, fl[k].0).min(dist(a, fl[k].1)) > abs_tol
                || dist(b, fl[k].0).min(dist(b, fl[k].1)) > abs_tol)
            {
                return Err(MeshError::GeometryMismatch(
                    "non-matching grids on a curved interface are not supported".into(),
                ));
            }
            let fb = fluid_edges[k];
            segments.push(InterfaceSegment {
                a,
                b,
                fluid_edge: fb,
                fluid_triangle: fluid.boundary_edge_triangle(fb),
                porous_edge: pb,
                porous_triangle: porous.boundary_edge_triangle(pb),
                multiplier: m,
                normal_p,
                tangent,
            });
            porous_cover[m] += hi - lo;
            fluid_cover[k] += hi - lo;
        }
    }

    for (m, &(p0, p1)) in po.iter().enumerate() {
        let gap = (dist(p0, p1) - porous_cover[m]).abs();
        if gap > abs_tol.max(1e-14 * dist(p0, p1)) * 4.0 {
            return Err(MeshError::GeometryMismatch(format!(
                "porous interface edge {} is not covered by fluid interface edges (gap {gap:e})",
                porous_edges[m]
            )));
        }
    }
    for (k, &(f0, f1)) in fl.iter().enumerate() {
        let gap = (dist(f0, f1) - fluid_cover[k]).abs();
        if gap > abs_tol.max(1e-14 * dist(f0, f1)) * 4.0 {
            return Err(MeshError::GeometryMismatch(format!(
                "fluid interface edge {} is not covered by porous interface edges (gap {gap:e})",
                fluid_edges[k]
            )));
        }
    }

    Ok(InterfaceGeometry {
        segments,
        porous_edges,
        fluid_edges,
    })
}
