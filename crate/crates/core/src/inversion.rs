//! Recovery of the spectrum and signed eigenfunctions from a local Weyl table.
//!
//! Amplitudes `|e_j| = √E_j` lose the sign. Signs come back by splitting the
//! mesh into nodal domains, linking domains that share a codimension-one
//! interface, and two-colouring the resulting graph.
//!
//! Nodal lines generically pass between vertices, so a zero threshold alone
//! does not separate domains. Along every grid line a Viterbi pass picks the
//! sign pattern with the smallest discrete curvature of `s·a`; edges where the
//! chosen sign flips are treated as crossing the nodal set.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{normalize_sign, LocalWeylTable};
use crate::mesh::{GridLine, Mesh};

/// Default relative zero threshold.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Default simplicity gap on frequencies.
pub const DEFAULT_GAP_TOL: f64 = 1e-6;

/// Default link count for adjacency: one in 1D, two in 2D.
pub fn default_min_links(mesh: &Mesh) -> usize {
    if mesh.dimension() == 1 {
        1
    } else {
        2
    }
}

/// Spectrum and unsigned amplitudes `√E_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<Vec<f64>>,
}

/// Reads off the jumps of `N(x, λ)`; negative entries above `-1e-12` are clamped.
pub fn extract_spectrum(table: &LocalWeylTable) -> Result<Spectrum> {
    let mut amplitudes = Vec::with_capacity(table.jump_fields.len());
    for (j, field) in table.jump_fields.iter().enumerate() {
        let mut amp = Vec::with_capacity(field.len());
        for (x, &e) in field.iter().enumerate() {
            if !e.is_finite() || e < -1e-12 {
                return Err(Error::CorruptTable(format!("E_{j}({x}) = {e:e} is negative or not finite")));
            }
            amp.push(e.max(0.0).sqrt());
        }
        amplitudes.push(amp);
    }
    Ok(Spectrum { frequencies: table.jump_frequencies.clone(), amplitudes })
}

/// Result of the simplicity check.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimplicityDiagnostics {
    /// Index pairs `(j, j+1)` whose frequency gap is below `gap_tol`.
    pub close_pairs: Vec<(usize, usize)>,
    /// Jumps whose integral `Σ E_j w` is off from 1 by more than 0.01, with the integral.
    pub multiplicity_flags: Vec<(usize, f64)>,
}

impl SimplicityDiagnostics {
    pub fn is_simple(&self) -> bool {
        self.close_pairs.is_empty() && self.multiplicity_flags.is_empty()
    }
}

/// Flags frequency gaps below `gap_tol`.
pub fn check_frequency_gaps(frequencies: &[f64], gap_tol: f64) -> Vec<(usize, usize)> {
    frequencies.windows(2).enumerate().filter(|(_, w)| w[1] - w[0] < gap_tol).map(|(j, _)| (j, j + 1)).collect()
}

/// Frequency-gap and jump-integral tests for a simple spectrum.
pub fn check_simplicity(table: &LocalWeylTable, gap_tol: f64) -> SimplicityDiagnostics {
    let close_pairs = check_frequency_gaps(&table.jump_frequencies, gap_tol);
    let multiplicity_flags = (0..table.jump_fields.len())
        .map(|j| (j, table.jump_integral(j)))
        .filter(|(_, s)| (s - 1.0).abs() > 0.01)
        .collect();
    SimplicityDiagnostics { close_pairs, multiplicity_flags }
}

/// Connected nodal domains of one amplitude field.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalPartition {
    /// Domain id per vertex, `None` for nodal vertices. Ids are numbered by the
    /// lowest vertex they contain.
    pub labels: Vec<Option<usize>>,
    pub m: usize,
    pub zero_tol: f64,
    /// Mesh edges between non-nodal vertices whose line pass put a sign change on them.
    pub crossing_edges: Vec<(usize, usize)>,
    /// Collinear paths `u – z – w` with `z` the only nodal vertex between `u` and `w`.
    pub nodal_bridges: Vec<(usize, usize)>,
}

/// Best sign pattern along one grid line (first vertex `+1`).
///
/// Minimises `Σ_i |w⁻ s_{i-1}a_{i-1} − (w⁻+w⁺) s_i a_i + w⁺ s_{i+1}a_{i+1}|`
/// with `w± = 1/h±`, the second difference of the signed amplitude.
pub fn line_signs(mesh: &Mesh, line: &GridLine, amplitude: &[f64]) -> Vec<i8> {
    let v = &line.vertices;
    let n = v.len();
    if n < 3 {
        return vec![1; n];
    }
    let a: Vec<f64> = v.iter().map(|&i| amplitude[i]).collect();
    let spacing = |i: usize, j: usize| {
        let d = mesh.displacement(v[i], v[j]);
        1.0 / (d[0] * d[0] + d[1] * d[1]).sqrt()
    };
    let inv_h: Vec<f64> = (0..n - 1).map(|i| spacing(i, i + 1)).collect();
    let inv_h_wrap = if line.closed { spacing(n - 1, 0) } else { 0.0 };
    let term = |i: usize, sp: f64, si: f64, sn: f64| -> f64 {
        let (prev, next) = if line.closed { ((i + n - 1) % n, (i + 1) % n) } else { (i - 1, i + 1) };
        let wm = if i == 0 { inv_h_wrap } else { inv_h[i - 1] };
        let wp = if i == n - 1 { inv_h_wrap } else { inv_h[i] };
        (wm * sp * a[prev] - (wm + wp) * si * a[i] + wp * sn * a[next]).abs()
    };
    let sign = |b: usize| if b == 0 { 1.0 } else { -1.0 };
    let starts: &[usize] = if line.closed { &[0, 1] } else { &[0] };
    let mut best: Option<(f64, Vec<i8>)> = None;
    for &s1_fixed in starts {
        // State at step i: (sign of i-1, sign of i); s_0 = +1.
        let mut cost = [[f64::INFINITY; 2]; 2];
        for s1 in 0..2 {
            if line.closed && s1 != s1_fixed {
                continue;
            }
            cost[0][s1] = 0.0;
        }
        let mut back: Vec<[[u8; 2]; 2]> = Vec::with_capacity(n);
        for i in 1..n - 1 {
            let mut next = [[f64::INFINITY; 2]; 2];
            let mut bp = [[0u8; 2]; 2];
            for sp in 0..2 {
                for si in 0..2 {
                    let c = cost[sp][si];
                    if !c.is_finite() {
                        continue;
                    }
                    for sn in 0..2 {
                        let t = c + term(i, sign(sp), sign(si), sign(sn));
                        if t < next[si][sn] {
                            next[si][sn] = t;
                            bp[si][sn] = sp as u8;
                        }
                    }
                }
            }
            back.push(bp);
            cost = next;
        }
        let mut end = (0, 0, f64::INFINITY);
        for sp in 0..2 {
            for sl in 0..2 {
                let mut c = cost[sp][sl];
                if line.closed && c.is_finite() {
                    c += term(n - 1, sign(sp), sign(sl), 1.0);
                    c += term(0, sign(sl), 1.0, sign(s1_fixed));
                }
                if c < end.2 {
                    end = (sp, sl, c);
                }
            }
        }
        let mut bits = vec![0usize; n];
        bits[n - 1] = end.1;
        bits[n - 2] = end.0;
        for i in (1..n - 1).rev() {
            let prev = back[i - 1][bits[i]][bits[i + 1]] as usize;
            bits[i - 1] = prev;
        }
        let signs: Vec<i8> = bits.iter().map(|&b| if b == 0 { 1 } else { -1 }).collect();
        if best.as_ref().is_none_or(|(c, _)| end.2 < *c) {
            best = Some((end.2, signs));
        }
    }
    best.expect("at least one start").1
}

/// Splits the mesh into nodal domains of `amplitude`.
pub fn nodal_partition(amplitude: &[f64], mesh: &Mesh, zero_tol: f64) -> Result<NodalPartition> {
    let n = mesh.n_vertices();
    if amplitude.len() != n {
        return Err(Error::DimensionMismatch(format!("field has {} values, mesh has {n}", amplitude.len())));
    }
    if let Some(x) = amplitude.iter().position(|a| !(*a >= 0.0)) {
        return Err(Error::InvalidArgument(format!("amplitude at vertex {x} is negative or NaN")));
    }
    let max = amplitude.iter().cloned().fold(0.0, f64::max);
    let nodal: Vec<bool> = amplitude.iter().map(|&a| a <= zero_tol * max).collect();
    if nodal.iter().all(|&z| z) {
        return Err(Error::DegenerateField);
    }

    let mut same = Vec::new();
    let mut crossing_edges = Vec::new();
    let mut nodal_bridges = Vec::new();
    for line in mesh.grid_lines() {
        let s = line_signs(mesh, &line, amplitude);
        let v = &line.vertices;
        let len = v.len();
        let n_edges = if line.closed { len } else { len - 1 };
        for k in 0..n_edges {
            let (i, j) = (k, (k + 1) % len);
            let (u, w) = (v[i], v[j]);
            if nodal[u] || nodal[w] {
                // u – z – w through a single nodal vertex z.
                if !nodal[u] && nodal[w] {
                    let far = if line.closed || k + 2 < len { Some(v[(k + 2) % len]) } else { None };
                    if let Some(far) = far {
                        if !nodal[far] && far != u {
                            nodal_bridges.push((u, far));
                        }
                    }
                }
                continue;
            }
            if s[i] != s[j] {
                crossing_edges.push((u.min(w), u.max(w)));
            } else {
                same.push((u, w));
            }
        }
    }

    // Union-find over non-crossing edges.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for (u, w) in same {
        let (ru, rw) = (find(&mut parent, u), find(&mut parent, w));
        if ru != rw {
            parent[ru.max(rw)] = ru.min(rw);
        }
    }
    let mut id_of_root = vec![usize::MAX; n];
    let mut labels = vec![None; n];
    let mut m = 0;
    for x in 0..n {
        if nodal[x] {
            continue;
        }
        let r = find(&mut parent, x);
        if id_of_root[r] == usize::MAX {
            id_of_root[r] = m;
            m += 1;
        }
        labels[x] = Some(id_of_root[r]);
    }
    crossing_edges.sort_unstable();
    crossing_edges.dedup();
    Ok(NodalPartition { labels, m, zero_tol, crossing_edges, nodal_bridges })
}

/// Undirected graph on domain ids.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DomainGraph {
    pub m: usize,
    pub neighbors: Vec<Vec<usize>>,
    /// Link count per domain pair `(i, j)`, `i < j`, including pairs below the threshold.
    pub links: BTreeMap<(usize, usize), usize>,
}

impl DomainGraph {
    pub fn from_edges(m: usize, edges: &[(usize, usize)]) -> DomainGraph {
        let mut neighbors = vec![Vec::new(); m];
        let mut links = BTreeMap::new();
        for &(a, b) in edges {
            neighbors[a].push(b);
            neighbors[b].push(a);
            links.insert((a.min(b), a.max(b)), 1);
        }
        for n in &mut neighbors {
            n.sort_unstable();
            n.dedup();
        }
        DomainGraph { m, neighbors, links }
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].binary_search(&b).is_ok()
    }
}

/// Domains are adjacent when at least `min_links` crossing edges or single-vertex
/// nodal bridges join them.
pub fn adjacency_graph(partition: &NodalPartition, min_links: usize) -> DomainGraph {
    let mut links: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut bridges = partition.nodal_bridges.clone();
    for b in &mut bridges {
        *b = (b.0.min(b.1), b.0.max(b.1));
    }
    bridges.sort_unstable();
    bridges.dedup();
    for &(u, w) in partition.crossing_edges.iter().chain(&bridges) {
        if let (Some(a), Some(b)) = (partition.labels[u], partition.labels[w]) {
            if a != b {
                *links.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
    }
    let mut neighbors = vec![Vec::new(); partition.m];
    for (&(a, b), &c) in &links {
        if c >= min_links.max(1) {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    DomainGraph { m: partition.m, neighbors, links }
}

/// Alternating signs per domain with the breadth-first trace `S(0) ⊆ S(1) ⊆ …`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignAssignment {
    pub signs: Vec<i8>,
    pub trace: Vec<Vec<usize>>,
}

/// Two-colours the domain graph starting from `δ = +1` on domain 0.
pub fn propagate_signs(graph: &DomainGraph) -> Result<SignAssignment> {
    let m = graph.m;
    if m == 0 {
        return Err(Error::DegenerateField);
    }
    let mut signs = vec![0i8; m];
    let mut parent = vec![usize::MAX; m];
    let mut depth = vec![0usize; m];
    signs[0] = 1;
    let mut assigned = vec![0usize];
    let mut trace = vec![assigned.clone()];
    let mut frontier = VecDeque::from([0usize]);
    while !frontier.is_empty() {
        let mut next = VecDeque::new();
        for &x in &frontier {
            for &y in &graph.neighbors[x] {
                if signs[y] == 0 {
                    signs[y] = -signs[x];
                    parent[y] = x;
                    depth[y] = depth[x] + 1;
                    next.push_back(y);
                } else if signs[y] == signs[x] {
                    return Err(Error::OddCycle { cycle: odd_cycle(x, y, &parent, &depth) });
                }
            }
        }
        if next.is_empty() {
            break;
        }
        assigned.extend(next.iter().copied());
        let mut s = assigned.clone();
        s.sort_unstable();
        trace.push(s);
        frontier = next;
    }
    let unreached: Vec<usize> = (0..m).filter(|&d| signs[d] == 0).collect();
    if !unreached.is_empty() {
        return Err(Error::Disconnected { unreached });
    }
    Ok(SignAssignment { signs, trace })
}

fn odd_cycle(a: usize, b: usize, parent: &[usize], depth: &[usize]) -> Vec<usize> {
    let (mut x, mut y) = (a, b);
    let mut left = vec![x];
    let mut right = vec![y];
    while depth[x] > depth[y] {
        x = parent[x];
        left.push(x);
    }
    while depth[y] > depth[x] {
        y = parent[y];
        right.push(y);
    }
    while x != y {
        x = parent[x];
        y = parent[y];
        left.push(x);
        right.push(y);
    }
    right.pop();
    right.reverse();
    left.extend(right);
    left
}

/// `ẽ(x) = δ_{label(x)}·a(x)`, zero on nodal vertices, with the global sign
/// convention of the forward solver.
pub fn recover_eigenfunction(amplitude: &[f64], partition: &NodalPartition, signs: &SignAssignment) -> Vec<f64> {
    let mut e: Vec<f64> = amplitude
        .iter()
        .zip(&partition.labels)
        .map(|(&a, l)| match l {
            Some(d) => signs.signs[*d] as f64 * a,
            None => 0.0,
        })
        .collect();
    normalize_sign(&mut e);
    e
}

/// Step-one parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Options {
    pub zero_tol: f64,
    /// `None` selects the dimension default.
    pub adjacency_min_links: Option<usize>,
    pub gap_tol: f64,
}

impl Default for Step1Options {
    fn default() -> Self {
        Step1Options { zero_tol: DEFAULT_ZERO_TOL, adjacency_min_links: None, gap_tol: DEFAULT_GAP_TOL }
    }
}

/// Per-mode record of step one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeRecovery {
    pub domains: usize,
    pub signs: SignAssignment,
    pub crossing_edges: usize,
}

/// Recovered spectrum and signed eigenfunctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step1Output {
    pub frequencies: Vec<f64>,
    pub fields: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub modes: Vec<ModeRecovery>,
    pub simplicity: SimplicityDiagnostics,
}

/// Runs the whole of step one on a table; fails on a non-simple spectrum or
/// on the first mode whose domain graph cannot be two-coloured.
pub fn recover_signed_eigenfunctions(table: &LocalWeylTable, mesh: &Mesh, opts: Step1Options) -> Result<Step1Output> {
    let simplicity = check_simplicity(table, opts.gap_tol);
    if !simplicity.is_simple() {
        return Err(Error::NotSimple {
            close_pairs: simplicity.close_pairs,
            multiplicities: simplicity.multiplicity_flags,
        });
    }
    let spec = extract_spectrum(table)?;
    let min_links = opts.adjacency_min_links.unwrap_or_else(|| default_min_links(mesh));
    let mut fields = Vec::with_capacity(spec.amplitudes.len());
    let mut modes = Vec::with_capacity(spec.amplitudes.len());
    for (j, amp) in spec.amplitudes.iter().enumerate() {
        let wrap = |e: Error| Error::Numeric(format!("mode {j}: {e}"));
        let part = nodal_partition(amp, mesh, opts.zero_tol).map_err(wrap)?;
        let graph = adjacency_graph(&part, min_links);
        let signs = propagate_signs(&graph).map_err(wrap)?;
        fields.push(recover_eigenfunction(amp, &part, &signs));
        modes.push(ModeRecovery { domains: part.m, signs, crossing_edges: part.crossing_edges.len() });
    }
    Ok(Step1Output { frequencies: spec.frequencies, fields, weights: table.weights.clone(), modes, simplicity })
}
