//! Canonical 44-point landmark scheme with per-view visibility tables and
//! landmark-graph edges.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::camera::ViewId;
use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 44;

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkScheme {
    names: Vec<String>,
    /// Canonical indices visible in each view, in per-view order.
    views: [Vec<usize>; 3],
    /// Undirected edges between canonical indices (self-loops implied).
    edges: Vec<(usize, usize)>,
    /// Root landmark for root-aligned errors ("top of nose").
    root: usize,
}

impl LandmarkScheme {
    pub fn new(
        names: Vec<String>,
        views: [Vec<usize>; 3],
        edges: Vec<(usize, usize)>,
        root: usize,
    ) -> Result<Self> {
        let scheme = Self {
            names,
            views,
            edges,
            root,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.names.len();
        if n == 0 {
            return Err(Error::InvalidArgument("landmark scheme is empty".into()));
        }
        let mut covered = vec![false; n];
        for view in ViewId::ALL {
            let subset = &self.views[view.index()];
            let mut seen = BTreeSet::new();
            for &i in subset {
                if i >= n {
                    return Err(Error::InvalidArgument(format!(
                        "{view} view lists landmark {i} but the scheme has {n}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidArgument(format!(
                        "{view} view lists landmark {i} twice"
                    )));
                }
                covered[i] = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::UncoveredLandmark {
                index: i,
                name: self.names[i].clone(),
            });
        }
        for &(a, b) in &self.edges {
            if a >= n || b >= n || a == b {
                return Err(Error::InvalidArgument(format!("invalid edge ({a}, {b})")));
            }
        }
        if self.root >= n {
            return Err(Error::InvalidArgument(format!("root {} out of range", self.root)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Canonical indices visible in `view`, in per-view order (size `k^v`).
    pub fn view_subset(&self, view: ViewId) -> &[usize] {
        &self.views[view.index()]
    }

    /// Position of canonical landmark `index` within the view subset.
    pub fn view_position(&self, view: ViewId, index: usize) -> Option<usize> {
        self.views[view.index()].iter().position(|&i| i == index)
    }

    /// Views containing canonical landmark `index`, in front/left/right order.
    pub fn views_of(&self, index: usize) -> Vec<ViewId> {
        ViewId::ALL
            .into_iter()
            .filter(|v| self.views[v.index()].contains(&index))
            .collect()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Edges of the subgraph induced by a view, in per-view positions.
    pub fn view_edges(&self, view: ViewId) -> Vec<(usize, usize)> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| Some((self.view_position(view, a)?, self.view_position(view, b)?)))
            .collect()
    }

    /// Relabels canonical landmarks: new index `perm[old]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: perm.len(),
                context: "landmark permutation",
            });
        }
        let mut names = vec![String::new(); n];
        for (old, &new) in perm.iter().enumerate() {
            names[new] = self.names[old].clone();
        }
        let views = std::array::from_fn(|v| self.views[v].iter().map(|&i| perm[i]).collect());
        let edges = self.edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        Self::new(names, views, edges, perm[self.root])
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# landmark scheme: landmark <index> <name> <views>; edge <a> <b>; root <index>\n");
        for (i, name) in self.names.iter().enumerate() {
            let views: Vec<&str> = self.views_of(i).iter().map(|v| v.name()).collect();
            let _ = writeln!(out, "landmark {i} {name} {}", views.join(","));
        }
        for view in ViewId::ALL {
            // per-view order is explicit so that k^v orderings round-trip
            let order: Vec<String> = self.views[view.index()].iter().map(|i| i.to_string()).collect();
            let _ = writeln!(out, "order {view} {}", order.join(" "));
        }
        for (a, b) in &self.edges {
            let _ = writeln!(out, "edge {a} {b}");
        }
        let _ = writeln!(out, "root {}", self.root);
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut names: Vec<(usize, String)> = Vec::new();
        let mut membership: [Vec<usize>; 3] = Default::default();
        let mut orders: [Option<Vec<usize>>; 3] = Default::default();
        let mut edges = Vec::new();
        let mut root = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let err = |m: &str| Error::Parse {
                line: line_no,
                message: m.to_string(),
            };
            let num = |s: &str| s.parse::<usize>().map_err(|_| err(&format!("bad index {s:?}")));
            match tok[0] {
                "landmark" if tok.len() == 4 => {
                    let idx = num(tok[1])?;
                    names.push((idx, tok[2].to_string()));
                    for v in tok[3].split(',') {
                        let view: ViewId = v.parse().map_err(|_| err(&format!("bad view {v:?}")))?;
                        membership[view.index()].push(idx);
                    }
                }
                "order" if tok.len() >= 2 => {
                    let view: ViewId = tok[1].parse().map_err(|_| err("bad view"))?;
                    orders[view.index()] = Some(tok[2..].iter().map(|s| num(s)).collect::<Result<_>>()?);
                }
                "edge" if tok.len() == 3 => edges.push((num(tok[1])?, num(tok[2])?)),
                "root" if tok.len() == 2 => root = Some(num(tok[1])?),
                _ => return Err(err(&format!("unrecognized record {line:?}"))),
            }
        }
        names.sort_by_key(|(i, _)| *i);
        if names.iter().enumerate().any(|(pos, (i, _))| pos != *i) {
            return Err(Error::Format("landmark indices must be 0..n without gaps".into()));
        }
        let views = std::array::from_fn(|v| {
            orders[v].clone().unwrap_or_else(|| membership[v].clone())
        });
        for v in 0..3 {
            let a: BTreeSet<_> = views[v].iter().collect();
            let b: BTreeSet<_> = membership[v].iter().collect();
            if a != b {
                return Err(Error::Format(format!(
                    "{} view order disagrees with landmark membership",
                    ViewId::ALL[v]
                )));
            }
        }
        let root = root.ok_or_else(|| Error::Format("scheme has no root record".into()))?;
        Self::new(names.into_iter().map(|(_, n)| n).collect(), views, edges, root)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Name and `(yaw°, pitch°)` direction on the unit head sphere, plus the views
/// that see it. Yaw turns from `+z` toward `+x` (the subject's left).
pub(crate) struct LandmarkSpec {
    pub name: &'static str,
    pub yaw: f64,
    pub pitch: f64,
    pub views: &'static [ViewId],
}

const F: &[ViewId] = &[ViewId::Front];
const FL: &[ViewId] = &[ViewId::Front, ViewId::Left];
const FR: &[ViewId] = &[ViewId::Front, ViewId::Right];
const L: &[ViewId] = &[ViewId::Left];
const R: &[ViewId] = &[ViewId::Right];

macro_rules! lm {
    ($name:expr, $yaw:expr, $pitch:expr, $views:expr) => {
        LandmarkSpec {
            name: $name,
            yaw: $yaw,
            pitch: $pitch,
            views: $views,
        }
    };
}

pub(crate) const DEFAULT_LANDMARKS: [LandmarkSpec; LANDMARK_COUNT] = [
    lm!("brow_r_outer", -35.0, 22.0, F),
    lm!("brow_r_mid", -22.0, 25.0, F),
    lm!("brow_r_inner", -9.0, 22.0, F),
    lm!("brow_l_inner", 9.0, 22.0, F),
    lm!("brow_l_mid", 22.0, 25.0, F),
    lm!("brow_l_outer", 35.0, 22.0, F),
    lm!("eye_r_outer", -30.0, 10.0, F),
    lm!("eye_r_top", -20.0, 14.0, F),
    lm!("eye_r_inner", -10.0, 10.0, F),
    lm!("eye_r_bottom", -20.0, 6.0, F),
    lm!("eye_l_inner", 10.0, 10.0, F),
    lm!("eye_l_top", 20.0, 14.0, F),
    lm!("eye_l_outer", 30.0, 10.0, F),
    lm!("eye_l_bottom", 20.0, 6.0, F),
    lm!("nose_top", 0.0, 14.0, F),
    lm!("nose_mid", 0.0, 4.0, F),
    lm!("nose_tip", 0.0, -6.0, F),
    lm!("nose_ala_r", -7.0, -9.0, F),
    lm!("nose_ala_l", 7.0, -9.0, F),
    lm!("nose_base", 0.0, -12.0, F),
    lm!("mouth_r", -14.0, -24.0, F),
    lm!("lip_upper_r", -6.0, -21.0, F),
    lm!("lip_upper", 0.0, -20.0, F),
    lm!("lip_upper_l", 6.0, -21.0, F),
    lm!("mouth_l", 14.0, -24.0, F),
    lm!("lip_lower", 0.0, -28.0, F),
    lm!("chin", 0.0, -42.0, F),
    lm!("forehead", 0.0, 40.0, F),
    lm!("cheek_r", -45.0, -2.0, FR),
    lm!("jaw_r_upper", -55.0, -18.0, FR),
    lm!("jaw_r_mid", -45.0, -32.0, FR),
    lm!("jaw_r_lower", -28.0, -42.0, FR),
    lm!("cheek_l", 45.0, -2.0, FL),
    lm!("jaw_l_upper", 55.0, -18.0, FL),
    lm!("jaw_l_mid", 45.0, -32.0, FL),
    lm!("jaw_l_lower", 28.0, -42.0, FL),
    lm!("ear_r_top", -90.0, 8.0, R),
    lm!("ear_r_front", -82.0, -3.0, R),
    lm!("ear_r_lobe", -90.0, -14.0, R),
    lm!("ear_r_back", -98.0, -3.0, R),
    lm!("ear_l_top", 90.0, 8.0, L),
    lm!("ear_l_front", 82.0, -3.0, L),
    lm!("ear_l_lobe", 90.0, -14.0, L),
    lm!("ear_l_back", 98.0, -3.0, L),
];

/// Contour chains: brows, eye rings, nose, lip ring, jawline, ears.
const DEFAULT_EDGES: &[(usize, usize)] = &[
    (0, 1), (1, 2), (3, 4), (4, 5), (2, 14), (3, 14),
    (6, 7), (7, 8), (8, 9), (9, 6), (10, 11), (11, 12), (12, 13), (13, 10),
    (1, 7), (4, 11), (8, 14), (10, 14),
    (14, 15), (15, 16), (16, 19), (17, 19), (18, 19), (16, 17), (16, 18),
    (20, 21), (21, 22), (22, 23), (23, 24), (24, 25), (25, 20), (19, 22),
    (25, 26), (27, 14), (27, 1), (27, 4),
    (28, 29), (29, 30), (30, 31), (31, 26), (28, 6),
    (32, 33), (33, 34), (34, 35), (35, 26), (32, 12),
    (20, 30), (24, 34),
    (36, 37), (37, 38), (38, 39), (39, 36), (37, 29),
    (40, 41), (41, 42), (42, 43), (43, 40), (41, 33),
];

impl Default for LandmarkScheme {
    fn default() -> Self {
        let names = DEFAULT_LANDMARKS.iter().map(|l| l.name.to_string()).collect();
        let views = std::array::from_fn(|v| {
            DEFAULT_LANDMARKS
                .iter()
                .enumerate()
                .filter(|(_, l)| l.views.contains(&ViewId::ALL[v]))
                .map(|(i, _)| i)
                .collect()
        });
        let root = DEFAULT_LANDMARKS
            .iter()
            .position(|l| l.name == "nose_top")
            .expect("nose_top present");
        Self::new(names, views, DEFAULT_EDGES.to_vec(), root).expect("default scheme is valid")
    }
}
