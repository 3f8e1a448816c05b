use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::multiview::{LandmarkScheme, ViewId};

/// Symmetric-normalized adjacency `D^{-1/2} A D^{-1/2}`.
pub fn normalize_adjacency(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: a.ncols(),
            context: "adjacency columns",
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidArgument(format!("adjacency entry ({i}, {j}) = {v} is not 0/1")));
            }
            if v != a[(j, i)] {
                return Err(Error::InvalidArgument(format!("adjacency is not symmetric at ({i}, {j})")));
            }
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d = a.row(i).sum();
            if d == 0.0 {
                Err(Error::IsolatedNode(i))
            } else {
                Ok(1.0 / d.sqrt())
            }
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j]))
}

/// Landmark graph with self-loops and its cached normalized adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkGraph {
    adjacency: DMatrix<f64>,
    normalized: DMatrix<f64>,
}

impl LandmarkGraph {
    /// Graph on `n` nodes with the given undirected edges plus self-loops.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut a = DMatrix::identity(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        Self::from_adjacency(a)
    }

    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self> {
        if (0..adjacency.nrows()).any(|i| adjacency[(i, i)] != 1.0) {
            return Err(Error::InvalidArgument("adjacency needs a self-loop on every node".into()));
        }
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(Self { adjacency, normalized })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn normalized(&self) -> &DMatrix<f64> {
        &self.normalized
    }
}

/// The global graph, one graph per view, and the view-to-global averaging maps.
#[derive(Debug, Clone, PartialEq)]
pub struct VcGcnGraphs {
    pub global: LandmarkGraph,
    pub views: [LandmarkGraph; 3],
    /// `44 × k^v` matrices; `Σ_v combine[v] · F^v` averages per-view features.
    pub combine: [DMatrix<f64>; 3],
    pub scheme: LandmarkScheme,
}

impl VcGcnGraphs {
    pub fn from_scheme(scheme: &LandmarkScheme) -> Result<Self> {
        let n = scheme.len();
        let global = LandmarkGraph::new(n, scheme.edges())?;
        let views = ViewId::ALL
            .map(|v| LandmarkGraph::new(scheme.view_subset(v).len(), &scheme.view_edges(v)))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let counts: Vec<usize> = (0..n).map(|i| scheme.views_of(i).len()).collect();
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::UncoveredLandmark { index: i, name: scheme.name(i).to_string() });
        }
        let combine = ViewId::ALL.map(|v| {
            let subset = scheme.view_subset(v);
            let mut m = DMatrix::zeros(n, subset.len());
            for (pos, &i) in subset.iter().enumerate() {
                m[(i, pos)] = 1.0 / counts[i] as f64;
            }
            m
        });
        let views: [LandmarkGraph; 3] = views.try_into().expect("three views");
        Ok(Self {
            global,
            views,
            combine,
            scheme: scheme.clone(),
        })
    }
}

/// Global node features: each canonical node averages its per-view features.
pub fn combine_local_to_global(per_view: &[DMatrix<f64>; 3], scheme: &LandmarkScheme) -> Result<DMatrix<f64>> {
    let channels = per_view[0].ncols();
    for view in ViewId::ALL {
        let f = &per_view[view.index()];
        let expected = scheme.view_subset(view).len();
        if f.nrows() != expected {
            return Err(Error::DimensionMismatch { expected, actual: f.nrows(), context: "nodes in view features" });
        }
        if f.ncols() != channels {
            return Err(Error::DimensionMismatch { expected: channels, actual: f.ncols(), context: "view feature channels" });
        }
    }
    let mut out = DMatrix::zeros(scheme.len(), channels);
    for i in 0..scheme.len() {
        let views = scheme.views_of(i);
        if views.is_empty() {
            return Err(Error::UncoveredLandmark { index: i, name: scheme.name(i).to_string() });
        }
        for &v in &views {
            let pos = scheme.view_position(v, i).expect("listed view");
            let row = per_view[v.index()].row(pos).into_owned();
            let mut target = out.row_mut(i);
            target += row;
        }
        let mut target = out.row_mut(i);
        target /= views.len() as f64;
    }
    Ok(out)
}
