//! Discrete charts: structured interval and rectangle meshes, plus periodic tori.
//!
//! Vertex coordinates are global chart coordinates. On a torus the chart is the
//! fundamental domain `[0,a)×[0,b)` and cell geometry is recovered by unwrapping
//! each cell relative to its first vertex.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global shape of the chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Interval,
    Rectangle,
    Torus2,
}

/// A validated mesh of a one-chart manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    dimension: usize,
    topology: Topology,
    coords: Vec<f64>,
    cells: Vec<Vec<usize>>,
    boundary: Vec<usize>,
    period: Option<Vec<f64>>,
    edges: Vec<(usize, usize)>,
}

/// A maximal chain of collinear mesh edges, used for sign analysis along grid lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLine {
    pub vertices: Vec<usize>,
    /// True when the chain closes on itself (periodic direction of a torus).
    pub closed: bool,
}

impl Mesh {
    /// Builds a mesh from raw parts and checks every invariant.
    ///
    /// `period` is required for `torus2` and ignored otherwise.
    pub fn new(
        dimension: usize,
        topology: Topology,
        vertices: Vec<Vec<f64>>,
        cells: Vec<Vec<usize>>,
        boundary: Vec<usize>,
        period: Option<Vec<f64>>,
    ) -> Result<Mesh> {
        if dimension != 1 && dimension != 2 {
            return Err(Error::InvalidMesh(format!("dimension {dimension} not supported")));
        }
        let expected_dim = match topology {
            Topology::Interval => 1,
            Topology::Rectangle | Topology::Torus2 => 2,
        };
        if expected_dim != dimension {
            return Err(Error::InvalidMesh(format!("topology {topology:?} requires dimension {expected_dim}")));
        }
        let mut coords = Vec::with_capacity(vertices.len() * dimension);
        for (i, v) in vertices.iter().enumerate() {
            if v.len() != dimension {
                return Err(Error::InvalidMesh(format!("vertex {i} has {} coordinates", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidMesh(format!("vertex {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(v);
        }
        let period = match topology {
            Topology::Torus2 => {
                let p = period.ok_or_else(|| Error::InvalidMesh("torus2 mesh needs a period".into()))?;
                if p.len() != 2 || p.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::InvalidMesh("period must be two positive numbers".into()));
                }
                Some(p)
            }
            _ => None,
        };
        let mut boundary = boundary;
        boundary.sort_unstable();
        boundary.dedup();
        let mut mesh = Mesh { dimension, topology, coords, cells, boundary, period, edges: Vec::new() };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&mut self) -> Result<()> {
        let n = self.n_vertices();
        if n < 2 {
            return Err(Error::InvalidMesh("fewer than two vertices".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidMesh("no cells".into()));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            let ok_len = match self.dimension {
                1 => cell.len() == 2,
                _ => cell.len() == 3 || cell.len() == 4,
            };
            if !ok_len {
                return Err(Error::InvalidMesh(format!("cell {c} has {} vertices", cell.len())));
            }
            if let Some(&bad) = cell.iter().find(|&&v| v >= n) {
                return Err(Error::InvalidMesh(format!("cell {c} references vertex {bad}")));
            }
        }
        if let Some(&bad) = self.boundary.iter().find(|&&v| v >= n) {
            return Err(Error::InvalidMesh(format!("boundary references vertex {bad}")));
        }

        self.edges = self.collect_edges();

        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidMesh(format!("vertex graph is disconnected at vertex {v}")));
        }

        let geometric = self.geometric_boundary();
        match self.topology {
            Topology::Torus2 => {
                if !self.boundary.is_empty() {
                    return Err(Error::InvalidMesh("torus2 mesh must have an empty boundary".into()));
                }
                if !geometric.is_empty() {
                    return Err(Error::InvalidMesh("torus2 cells leave unmatched facets".into()));
                }
            }
            _ => {
                if self.boundary.is_empty() {
                    return Err(Error::InvalidMesh("bounded chart needs boundary vertices".into()));
                }
                if geometric != self.boundary {
                    return Err(Error::InvalidMesh(
                        "boundary set differs from the geometric boundary of the cells".into(),
                    ));
                }
            }
        }

        let mut total = 0.0;
        for c in 0..self.cells.len() {
            let v = self.cell_volume(c);
            if !(v > 0.0) {
                return Err(Error::InvalidMesh(format!("cell {c} is degenerate")));
            }
            total += v;
        }
        let chart = self.chart_volume();
        if ((total - chart) / chart).abs() > 1e-10 {
            return Err(Error::InvalidMesh(format!("cell volumes sum to {total:.17e}, chart volume is {chart:.17e}")));
        }
        Ok(())
    }

    fn collect_edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for cell in &self.cells {
            let k = cell.len();
            let pairs: Vec<(usize, usize)> =
                if k == 2 { vec![(cell[0], cell[1])] } else { (0..k).map(|i| (cell[i], cell[(i + 1) % k])).collect() };
            for (a, b) in pairs {
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            }
        }
        set.into_iter().collect()
    }

    /// Vertices lying on facets that belong to exactly one cell.
    fn geometric_boundary(&self) -> Vec<usize> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for cell in &self.cells {
            let k = cell.len();
            if k == 2 {
                for &v in cell {
                    *count.entry(vec![v]).or_default() += 1;
                }
            } else {
                for i in 0..k {
                    let (a, b) = (cell[i], cell[(i + 1) % k]);
                    *count.entry(vec![a.min(b), a.max(b)]).or_default() += 1;
                }
            }
        }
        let mut out = BTreeSet::new();
        for (facet, c) in count {
            if c == 1 {
                out.extend(facet);
            }
        }
        out.into_iter().collect()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn n_vertices(&self) -> usize {
        self.coords.len() / self.dimension
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Sorted boundary vertex indices.
    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn period(&self) -> Option<&[f64]> {
        self.period.as_deref()
    }

    /// Unique undirected edges `(u, v)` with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary.binary_search(&v).is_ok()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Chart displacement from vertex `from` to vertex `to`, using the
    /// periodic image in `(-p/2, p/2]` on a torus.
    pub fn displacement(&self, from: usize, to: usize) -> [f64; 2] {
        let a = self.vertex(from);
        let b = self.vertex(to);
        let mut d = [0.0; 2];
        for k in 0..self.dimension {
            let mut x = b[k] - a[k];
            if let Some(p) = &self.period {
                let p = p[k];
                while x > 0.5 * p + 1e-12 * p {
                    x -= p;
                }
                while x <= -0.5 * p + 1e-12 * p {
                    x += p;
                }
            }
            d[k] = x;
        }
        d
    }

    /// Unwrapped coordinates of a cell's vertices, relative to the chart origin.
    pub fn cell_coords(&self, c: usize) -> Vec<[f64; 2]> {
        let cell = &self.cells[c];
        let first = self.vertex(cell[0]);
        let base = [first[0], if self.dimension > 1 { first[1] } else { 0.0 }];
        cell.iter()
            .map(|&v| {
                let d = self.displacement(cell[0], v);
                [base[0] + d[0], base[1] + d[1]]
            })
            .collect()
    }

    /// Euclidean chart volume of one cell.
    pub fn cell_volume(&self, c: usize) -> f64 {
        let p = self.cell_coords(c);
        match p.len() {
            2 => (p[1][0] - p[0][0]).abs(),
            _ => {
                let mut s = 0.0;
                for i in 0..p.len() {
                    let j = (i + 1) % p.len();
                    s += p[i][0] * p[j][1] - p[j][0] * p[i][1];
                }
                0.5 * s.abs()
            }
        }
    }

    /// Volume of the chart: bounding box for bounded charts, period cell for tori.
    pub fn chart_volume(&self) -> f64 {
        if let Some(p) = &self.period {
            return p.iter().product();
        }
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(a, b)| b - a).product()
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dimension;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for i in 0..self.n_vertices() {
            for (k, &x) in self.vertex(i).iter().enumerate() {
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        (lo, hi)
    }

    /// Longest mesh edge in chart units.
    pub fn max_edge_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(u, v)| {
                let d = self.displacement(u, v);
                (d[0] * d[0] + d[1] * d[1]).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Chart distance from a point to the boundary of the bounding box.
    /// Infinite on a torus.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        if self.period.is_some() {
            return f64::INFINITY;
        }
        let (lo, hi) = self.bounding_box();
        (0..self.dimension).map(|k| (x[k] - lo[k]).min(hi[k] - x[k])).fold(f64::INFINITY, f64::min)
    }

    /// Index of the vertex closest to `x` (ties to the lowest index).
    pub fn nearest_vertex(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.n_vertices() {
            let v = self.vertex(i);
            let mut d2 = 0.0;
            for k in 0..self.dimension {
                let mut dx = x[k] - v[k];
                if let Some(p) = &self.period {
                    dx -= p[k] * (dx / p[k]).round();
                }
                d2 += dx * dx;
            }
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }

    /// Decomposes the edge set into maximal chains of collinear edges.
    ///
    /// At every vertex, an incident edge continues into the incident edge
    /// pointing in the opposite direction (cosine below -0.999), if any.
    pub fn grid_lines(&self) -> Vec<GridLine> {
        let n = self.n_vertices();
        let mut incident: Vec<Vec<(usize, [f64; 2])>> = vec![Vec::new(); n];
        for (e, &(u, v)) in self.edges.iter().enumerate() {
            let d = self.displacement(u, v);
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            let d = [d[0] / len, d[1] / len];
            incident[u].push((e, d));
            incident[v].push((e, [-d[0], -d[1]]));
        }
        let continuation = |vertex: usize, edge: usize| -> Option<usize> {
            let dir = incident[vertex].iter().find(|(e, _)| *e == edge)?.1;
            incident[vertex]
                .iter()
                .filter(|(e, _)| *e != edge)
                .find(|(_, d)| d[0] * dir[0] + d[1] * dir[1] < -0.999)
                .map(|(e, _)| *e)
        };
        let other = |edge: usize, vertex: usize| -> usize {
            let (a, b) = self.edges[edge];
            if a == vertex {
                b
            } else {
                a
            }
        };
        let mut used = vec![false; self.edges.len()];
        let mut lines = Vec::new();
        for start in 0..self.edges.len() {
            if used[start] {
                continue;
            }
            used[start] = true;
            let (a, b) = self.edges[start];
            // Walk forward from b, then backward from a.
            let mut forward = vec![a, b];
            let mut closed = false;
            let (mut vtx, mut edge) = (b, start);
            while let Some(next) = continuation(vtx, edge) {
                if next == start {
                    closed = true;
                    break;
                }
                if used[next] {
                    break;
                }
                used[next] = true;
                vtx = other(next, vtx);
                edge = next;
                forward.push(vtx);
            }
            if closed {
                forward.pop();
                lines.push(GridLine { vertices: forward, closed: true });
                continue;
            }
            let mut backward = Vec::new();
            let (mut vtx, mut edge) = (a, start);
            while let Some(next) = continuation(vtx, edge) {
                if used[next] {
                    break;
                }
                used[next] = true;
                vtx = other(next, vtx);
                edge = next;
                backward.push(vtx);
            }
            backward.reverse();
            backward.extend(forward);
            lines.push(GridLine { vertices: backward, closed: false });
        }
        lines
    }
}

/// Uniform mesh of `[0, length]` with `n_vertices` vertices.
pub fn build_interval_mesh(n_vertices: usize, length: f64) -> Result<Mesh> {
    if n_vertices < 3 {
        return Err(Error::InvalidMesh(format!("need at least 3 vertices, got {n_vertices}")));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(Error::InvalidMesh(format!("length must be positive, got {length}")));
    }
    let h = length / (n_vertices - 1) as f64;
    let vertices = (0..n_vertices).map(|i| vec![if i + 1 == n_vertices { length } else { i as f64 * h }]).collect();
    let cells = (0..n_vertices - 1).map(|i| vec![i, i + 1]).collect();
    Mesh::new(1, Topology::Interval, vertices, cells, vec![0, n_vertices - 1], None)
}

/// Structured quadrilateral grid on `[0,a]×[0,b]` with `nx×ny` grid points.
///
/// For `Torus2` the last row and column are identified with the first, leaving
/// `(nx-1)(ny-1)` distinct vertices. Vertex `(i, j)` has index `j*stride + i`.
pub fn build_rect_mesh(nx: usize, ny: usize, a: f64, b: f64, topology: Topology) -> Result<Mesh> {
    if nx < 3 || ny < 3 {
        return Err(Error::InvalidMesh(format!("grid {nx}x{ny} is degenerate, need at least 3x3")));
    }
    if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
        return Err(Error::InvalidMesh(format!("extents must be positive, got {a} x {b}")));
    }
    let hx = a / (nx - 1) as f64;
    let hy = b / (ny - 1) as f64;
    let coord = |i: usize, n: usize, h: f64, len: f64| if i + 1 == n { len } else { i as f64 * h };
    match topology {
        Topology::Rectangle => {
            let idx = |i: usize, j: usize| j * nx + i;
            let mut vertices = Vec::with_capacity(nx * ny);
            let mut boundary = Vec::new();
            for j in 0..ny {
                for i in 0..nx {
                    vertices.push(vec![coord(i, nx, hx, a), coord(j, ny, hy, b)]);
                    if i == 0 || j == 0 || i + 1 == nx || j + 1 == ny {
                        boundary.push(idx(i, j));
                    }
                }
            }
            let mut cells = Vec::with_capacity((nx - 1) * (ny - 1));
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
            Mesh::new(2, Topology::Rectangle, vertices, cells, boundary, None)
        }
        Topology::Torus2 => {
            let (mx, my) = (nx - 1, ny - 1);
            let idx = |i: usize, j: usize| (j % my) * mx + (i % mx);
            let mut vertices = Vec::with_capacity(mx * my);
            for j in 0..my {
                for i in 0..mx {
                    vertices.push(vec![i as f64 * hx, j as f64 * hy]);
                }
            }
            let mut cells = Vec::with_capacity(mx * my);
            for j in 0..my {
                for i in 0..mx {
                    cells.push(vec![idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)]);
                }
            }
            Mesh::new(2, Topology::Torus2, vertices, cells, Vec::new(), Some(vec![a, b]))
        }
        Topology::Interval => Err(Error::InvalidMesh("interval topology needs build_interval_mesh".into())),
    }
}
