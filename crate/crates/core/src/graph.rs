//! Simple undirected connected graphs, built-in topologies, the Zachary
//! karate club dataset and induced-subgraph decompositions.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;

const KARATE_EDGES: &str = include_str!("../data/karate.edges");
const KARATE_FACTIONS: &str = include_str!("../data/karate_factions.txt");

/// Undirected, connected, simple graph. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphRepr", into = "GraphRepr")]
pub struct Graph {
    n: usize,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<GraphRepr> for Graph {
    type Error = Error;

    fn try_from(repr: GraphRepr) -> Result<Self> {
        Graph::from_edge_list(&repr.edges, repr.n)
    }
}

impl From<Graph> for GraphRepr {
    fn from(g: Graph) -> Self {
        GraphRepr {
            n: g.n,
            edges: g.edges(),
        }
    }
}

impl Graph {
    /// Builds a graph from an edge list. Duplicate and reversed pairs collapse
    /// into a single undirected edge.
    pub fn from_edge_list(edges: &[(usize, usize)], n: usize) -> Result<Graph> {
        let g = Graph::from_edge_list_unchecked(edges, n)?;
        if let Some(isolated) = (0..n).find(|&i| g.neighbors[i].is_empty()) {
            return Err(Error::IsolatedVertex(isolated));
        }
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    /// Same as [`Graph::from_edge_list`] but skips the connectivity and
    /// isolated-vertex checks. Index and self-loop checks still apply.
    pub fn from_edge_list_unchecked(edges: &[(usize, usize)], n: usize) -> Result<Graph> {
        if n < 2 {
            return Err(Error::BadSize {
                topology: "graph".into(),
                reason: format!("need at least 2 vertices, got {n}"),
            });
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(Error::IndexOutOfRange { index, n });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            sets[i].insert(j);
            sets[j].insert(i);
        }
        Ok(Graph {
            n,
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Edges as ascending `(i, j)` pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency(&self) -> SquareMatrix {
        let mut a = SquareMatrix::zeros(self.n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            for &j in nb {
                a[(i, j)] = 1.0;
            }
        }
        a
    }

    pub fn laplacian(&self) -> SquareMatrix {
        let mut l = self.adjacency();
        l.scale(-1.0);
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as f64;
        }
        l
    }

    /// Row-stochastic matrix D⁻¹A.
    pub fn random_walk_matrix(&self) -> SquareMatrix {
        let mut p = SquareMatrix::zeros(self.n);
        for (i, nb) in self.neighbors.iter().enumerate() {
            let w = 1.0 / nb.len() as f64;
            for &j in nb {
                p[(i, j)] = w;
            }
        }
        p
    }

    /// Breadth-first traversal from vertex 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n
    }

    /// True when the graph admits a proper two-colouring.
    pub fn is_bipartite(&self) -> bool {
        let mut colour: Vec<Option<bool>> = vec![None; self.n];
        for start in 0..self.n {
            if colour[start].is_some() {
                continue;
            }
            colour[start] = Some(false);
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                let cv = colour[v].unwrap();
                for &w in &self.neighbors[v] {
                    match colour[w] {
                        None => {
                            colour[w] = Some(!cv);
                            queue.push_back(w);
                        }
                        Some(cw) if cw == cv => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }

    pub fn builtin(topology: &Topology) -> Result<Graph> {
        topology.build()
    }

    pub fn karate() -> Graph {
        Graph::from_edge_list_text(KARATE_EDGES).expect("embedded karate edge list is valid")
    }

    /// Parses the edge-list text format: whitespace-separated 0-indexed pairs,
    /// one per line, `#` starts a comment. The vertex count is the largest
    /// index plus one.
    pub fn from_edge_list_text(text: &str) -> Result<Graph> {
        let edges = parse_edge_list(text)?;
        let n = edges.iter().map(|&(i, j)| i.max(j) + 1).max().unwrap_or(0);
        Graph::from_edge_list(&edges, n)
    }

    pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
        Graph::from_edge_list_text(&std::fs::read_to_string(path)?)
    }

    pub fn to_edge_list_text(&self) -> String {
        self.edges()
            .iter()
            .map(|(i, j)| format!("{i} {j}\n"))
            .collect()
    }

    pub fn induced_subgraph(&self, vertices: &[usize]) -> Result<SubgraphDecomposition> {
        SubgraphDecomposition::new(self, vertices)
    }

    /// Random connected graph: a random recursive tree on `n` vertices plus
    /// every remaining pair independently with probability `p`.
    pub fn random_connected<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Result<Graph> {
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.gen_range(0..i), i));
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p.clamp(0.0, 1.0)) {
                    edges.push((i, j));
                }
            }
        }
        Graph::from_edge_list(&edges, n)
    }
}

fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| {
            s.parse::<usize>().map_err(|_| {
                Error::Config(format!("edge list line {}: bad vertex `{s}`", lineno + 1))
            })
        };
        if fields.len() != 2 {
            return Err(Error::Config(format!(
                "edge list line {}: expected two vertices, got `{line}`",
                lineno + 1
            )));
        }
        edges.push((parse(fields[0])?, parse(fields[1])?));
    }
    Ok(edges)
}

/// Built-in topologies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Topology {
    Line(usize),
    Ring(usize),
    Star(usize),
    Complete(usize),
    CompleteBipartite(usize, usize),
    Karate,
}

impl Topology {
    /// Resolves a topology name and size. `karate` forces 34 vertices and
    /// `complete_bipartite` needs its part sizes through [`Topology::from_str`].
    pub fn from_name(name: &str, n: usize) -> Result<Topology> {
        let t = match name {
            "line" | "path" => Topology::Line(n),
            "ring" | "cycle" => Topology::Ring(n),
            "star" => Topology::Star(n),
            "complete" => Topology::Complete(n),
            "karate" => {
                if n != 34 {
                    return Err(bad_size("karate", format!("karate has 34 vertices, got {n}")));
                }
                Topology::Karate
            }
            other => return Err(Error::UnknownTopology(other.to_string())),
        };
        Ok(t)
    }

    pub fn vertex_count(&self) -> usize {
        match *self {
            Topology::Line(n) | Topology::Ring(n) | Topology::Star(n) | Topology::Complete(n) => n,
            Topology::CompleteBipartite(p, q) => p + q,
            Topology::Karate => 34,
        }
    }

    pub fn build(&self) -> Result<Graph> {
        let name = self.to_string();
        let edges: Vec<(usize, usize)> = match *self {
            Topology::Line(n) => {
                check_min(&name, n, 2)?;
                (0..n - 1).map(|i| (i, i + 1)).collect()
            }
            Topology::Ring(n) => {
                check_min(&name, n, 3)?;
                (0..n).map(|i| (i, (i + 1) % n)).collect()
            }
            Topology::Star(n) => {
                check_min(&name, n, 2)?;
                (1..n).map(|i| (0, i)).collect()
            }
            Topology::Complete(n) => {
                check_min(&name, n, 2)?;
                (0..n)
                    .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                    .collect()
            }
            Topology::CompleteBipartite(p, q) => {
                if p == 0 || q == 0 {
                    return Err(bad_size(&name, "both parts must be non-empty".into()));
                }
                (0..p)
                    .flat_map(|i| (p..p + q).map(move |j| (i, j)))
                    .collect()
            }
            Topology::Karate => return Ok(Graph::karate()),
        };
        Graph::from_edge_list(&edges, self.vertex_count())
    }
}

fn check_min(name: &str, n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(bad_size(name, format!("need at least {min} vertices, got {n}")))
    } else {
        Ok(())
    }
}

fn bad_size(topology: &str, reason: String) -> Error {
    Error::BadSize {
        topology: topology.to_string(),
        reason,
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Topology::Line(n) => write!(f, "line:{n}"),
            Topology::Ring(n) => write!(f, "ring:{n}"),
            Topology::Star(n) => write!(f, "star:{n}"),
            Topology::Complete(n) => write!(f, "complete:{n}"),
            Topology::CompleteBipartite(p, q) => write!(f, "complete_bipartite:{p},{q}"),
            Topology::Karate => write!(f, "karate"),
        }
    }
}

/// Parses `line:5`, `ring:6`, `star:5`, `complete:4`,
/// `complete_bipartite:2,3` and `karate` (optionally `karate:34`).
impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Topology> {
        let (name, arg) = match s.split_once(':') {
            Some((name, arg)) => (name.trim(), Some(arg.trim())),
            None => (s.trim(), None),
        };
        let parse_n = |a: &str| {
            a.parse::<usize>()
                .map_err(|_| bad_size(name, format!("bad vertex count `{a}`")))
        };
        match (name, arg) {
            ("karate", None) => Ok(Topology::Karate),
            ("complete_bipartite", Some(a)) => {
                let (p, q) = a
                    .split_once(',')
                    .ok_or_else(|| bad_size(name, format!("expected `p,q`, got `{a}`")))?;
                Ok(Topology::CompleteBipartite(parse_n(p.trim())?, parse_n(q.trim())?))
            }
            ("line" | "path" | "ring" | "cycle" | "star" | "complete" | "karate", Some(a)) => {
                Topology::from_name(name, parse_n(a)?)
            }
            ("line" | "path" | "ring" | "cycle" | "star" | "complete" | "complete_bipartite", None) => {
                Err(bad_size(name, "missing size".into()))
            }
            (other, _) => Err(Error::UnknownTopology(other.to_string())),
        }
    }
}

/// Internal/external structure of an induced subgraph. All per-vertex arrays
/// are indexed by position in `vertex_set`, which is ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgraphDecomposition {
    pub vertex_set: Vec<usize>,
    /// Internal edges in local indices, `(a, b)` with `a < b`.
    pub internal_edges: Vec<(usize, usize)>,
    pub internal_degrees: Vec<usize>,
    pub total_degrees: Vec<usize>,
    pub external_degrees: Vec<usize>,
    /// `(internal vertex, external vertex)` pairs in original indices.
    pub boundary_edges: Vec<(usize, usize)>,
}

impl SubgraphDecomposition {
    pub fn new(g: &Graph, vertices: &[usize]) -> Result<SubgraphDecomposition> {
        if vertices.is_empty() {
            return Err(Error::EmptySubset);
        }
        let n = g.n();
        if let Some(&index) = vertices.iter().find(|&&v| v >= n) {
            return Err(Error::IndexOutOfRange { index, n });
        }
        let vertex_set: Vec<usize> = vertices.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let mut local = vec![usize::MAX; n];
        for (a, &v) in vertex_set.iter().enumerate() {
            local[v] = a;
        }

        let m = vertex_set.len();
        let mut internal_edges = Vec::new();
        let mut internal_degrees = vec![0; m];
        let mut boundary_edges = Vec::new();
        for (a, &v) in vertex_set.iter().enumerate() {
            for &w in g.neighbors(v) {
                let b = local[w];
                if b == usize::MAX {
                    boundary_edges.push((v, w));
                } else {
                    internal_degrees[a] += 1;
                    if a < b {
                        internal_edges.push((a, b));
                    }
                }
            }
        }
        let total_degrees: Vec<usize> = vertex_set.iter().map(|&v| g.degree(v)).collect();
        let external_degrees = total_degrees
            .iter()
            .zip(&internal_degrees)
            .map(|(d, din)| d - din)
            .collect();

        let dec = SubgraphDecomposition {
            vertex_set,
            internal_edges,
            internal_degrees,
            total_degrees,
            external_degrees,
            boundary_edges,
        };
        if m > 1 && !dec.internal_graph_unchecked().is_connected() {
            return Err(Error::InducedDisconnected);
        }
        Ok(dec)
    }

    pub fn size(&self) -> usize {
        self.vertex_set.len()
    }

    /// True for single-vertex clusters.
    pub fn is_degenerate(&self) -> bool {
        self.size() == 1
    }

    /// The induced subgraph relabelled to `0..size`. `None` for a single vertex.
    pub fn internal_graph(&self) -> Option<Graph> {
        if self.is_degenerate() {
            None
        } else {
            Some(self.internal_graph_unchecked())
        }
    }

    fn internal_graph_unchecked(&self) -> Graph {
        Graph::from_edge_list_unchecked(&self.internal_edges, self.size().max(2))
            .expect("local indices are in range")
    }

    /// A_in = S A Sᵀ.
    pub fn internal_adjacency(&self) -> SquareMatrix {
        let mut a = SquareMatrix::zeros(self.size());
        for &(i, j) in &self.internal_edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Internal neighbours of each local vertex, in local indices.
    pub fn internal_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.size()];
        for &(i, j) in &self.internal_edges {
            nb[i].push(j);
            nb[j].push(i);
        }
        for list in &mut nb {
            list.sort_unstable();
        }
        nb
    }

    /// External neighbours of each local vertex, in original indices.
    pub fn external_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.size()];
        for &(v, w) in &self.boundary_edges {
            let a = self.vertex_set.binary_search(&v).expect("boundary edge starts inside");
            nb[a].push(w);
        }
        nb
    }

    /// Selection x′ = S x.
    pub fn select(&self, x: &[f64]) -> Vec<f64> {
        self.vertex_set.iter().map(|&v| x[v]).collect()
    }
}

/// A labelled vertex partition, one `vertex label` pair per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
}

impl Partition {
    pub fn parse(text: &str, n: usize) -> Result<Partition> {
        let mut labels = vec![None; n];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Config(format!("partition line {}: `{line}`", lineno + 1));
            if fields.len() != 2 {
                return Err(bad());
            }
            let v: usize = fields[0].parse().map_err(|_| bad())?;
            let label: usize = fields[1].parse().map_err(|_| bad())?;
            if v >= n {
                return Err(Error::IndexOutOfRange { index: v, n });
            }
            labels[v] = Some(label);
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(v, l)| l.ok_or_else(|| Error::Config(format!("partition misses vertex {v}"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Partition { labels })
    }

    pub fn read(path: impl AsRef<Path>, n: usize) -> Result<Partition> {
        Partition::parse(&std::fs::read_to_string(path)?, n)
    }

    /// The two-faction split of the karate club: label 0 is the group of
    /// vertex 0, label 1 the group of vertex 33.
    pub fn karate_factions() -> Partition {
        Partition::parse(KARATE_FACTIONS, 34).expect("embedded partition is valid")
    }

    /// Distinct labels, ascending.
    pub fn label_set(&self) -> Vec<usize> {
        self.labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn members(&self, label: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&v| self.labels[v] == label).collect()
    }

    pub fn to_text(&self) -> String {
        self.labels
            .iter()
            .enumerate()
            .map(|(v, l)| format!("{v} {l}\n"))
            .collect()
    }
}
