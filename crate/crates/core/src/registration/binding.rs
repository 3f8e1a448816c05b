use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::multiview::LandmarkScheme;

/// Template vertex id for every canonical landmark, in scheme order.
///
/// Text form: one `name vertex_id` record per line; `#` starts a comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkBinding {
    pub vertex_ids: Vec<usize>,
}

impl LandmarkBinding {
    pub fn new(vertex_ids: Vec<usize>, scheme: &LandmarkScheme) -> Result<Self> {
        if vertex_ids.len() != scheme.len() {
            return Err(Error::DimensionMismatch {
                expected: scheme.len(),
                actual: vertex_ids.len(),
                context: "bound landmarks",
            });
        }
        Ok(Self { vertex_ids })
    }

    pub fn check_template(&self, template: &Mesh) -> Result<()> {
        let n = template.vertices.len();
        match self.vertex_ids.iter().find(|&&v| v >= n) {
            Some(v) => Err(Error::InvalidArgument(format!("bound vertex {v} outside a {n}-vertex template"))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self, scheme: &LandmarkScheme) -> String {
        let mut out = String::from("# landmark binding: name vertex_id\n");
        for (i, v) in self.vertex_ids.iter().enumerate() {
            let _ = writeln!(out, "{} {v}", scheme.name(i));
        }
        out
    }

    pub fn parse(text: &str, scheme: &LandmarkScheme) -> Result<Self> {
        let mut found: HashMap<usize, usize> = HashMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: n + 1, message };
            let mut parts = line.split_whitespace();
            let (Some(name), Some(id), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `name vertex_id`, got {line:?}")));
            };
            let index = scheme.index_of(name).ok_or_else(|| err(format!("unknown landmark {name:?}")))?;
            let id: usize = id.parse().map_err(|_| err(format!("bad vertex id {id:?}")))?;
            if found.insert(index, id).is_some() {
                return Err(err(format!("landmark {name} bound twice")));
            }
        }
        let vertex_ids = (0..scheme.len())
            .map(|i| {
                found
                    .get(&i)
                    .copied()
                    .ok_or_else(|| Error::Format(format!("landmark {} has no binding", scheme.name(i))))
            })
            .collect::<Result<_>>()?;
        Ok(Self { vertex_ids })
    }

    pub fn load(path: impl AsRef<Path>, scheme: &LandmarkScheme) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?, scheme)
    }

    pub fn save(&self, path: impl AsRef<Path>, scheme: &LandmarkScheme) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text(scheme)).map_err(|e| Error::io(path, e))
    }
}
