//! Partitioning of a flat descriptor into named component slices.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Bytes used by one stored value.
pub const VALUE_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Component {
    pub name: String,
    pub dims: usize,
}

/// Ordered list of descriptor components. `total_dims` is always the sum of
/// the component dims.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComponentLayout {
    components: Vec<Component>,
    total_dims: usize,
}

impl ComponentLayout {
    pub fn new(components: Vec<(String, usize)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("layout needs at least one component".into()));
        }
        let mut out = Vec::with_capacity(components.len());
        for (name, dims) in components {
            if dims == 0 {
                return Err(Error::InvalidArgument(format!("component {name} has zero dims")));
            }
            if name.is_empty() || name.contains([',', ':', ' ', '\t']) {
                return Err(Error::InvalidArgument(format!("bad component name {name:?}")));
            }
            if out.iter().any(|c: &Component| c.name == name) {
                return Err(Error::InvalidArgument(format!("duplicate component {name}")));
            }
            out.push(Component { name, dims });
        }
        let total_dims = out.iter().map(|c| c.dims).sum();
        Ok(Self {
            components: out,
            total_dims,
        })
    }

    /// Dense Trajectory layout: traj 30, HOG 96, HOF 108, MBHx 96, MBHy 96.
    pub fn dense_trajectory() -> Self {
        Self::new(vec![
            ("traj".into(), 30),
            ("hog".into(), 96),
            ("hof".into(), 108),
            ("mbhx".into(), 96),
            ("mbhy".into(), 96),
        ])
        .expect("static layout is valid")
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn total_dims(&self) -> usize {
        self.total_dims
    }

    /// Size of one stored record in bytes.
    pub fn record_bytes(&self) -> usize {
        self.total_dims * VALUE_BYTES
    }

    /// Size of one stored record in gigabytes (1024³ bytes).
    pub fn record_gb(&self) -> f64 {
        self.record_bytes() as f64 / (1024.0 * 1024.0 * 1024.0)
    }

    /// Column ranges of each component within a record.
    pub fn ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.components
            .iter()
            .map(|c| {
                let r = start..start + c.dims;
                start += c.dims;
                r
            })
            .collect()
    }
}

impl Default for ComponentLayout {
    fn default() -> Self {
        Self::dense_trajectory()
    }
}

impl fmt::Display for ComponentLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.components.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", c.name, c.dims)?;
        }
        Ok(())
    }
}

impl FromStr for ComponentLayout {
    type Err = Error;

    /// Parses `name:dims,name:dims,...`.
    fn from_str(s: &str) -> Result<Self> {
        let mut comps = Vec::new();
        for part in s.trim().split(',') {
            let (name, dims) = part
                .split_once(':')
                .ok_or_else(|| Error::InvalidArgument(format!("bad layout entry {part:?}")))?;
            let dims: usize = dims
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad dims in {part:?}")))?;
            comps.push((name.trim().to_string(), dims));
        }
        Self::new(comps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_426() {
        let l = ComponentLayout::default();
        assert_eq!(l.total_dims(), 426);
        assert_eq!(l.record_bytes(), 1704);
        let dims: Vec<_> = l.components().iter().map(|c| c.dims).collect();
        assert_eq!(dims, vec![30, 96, 108, 96, 96]);
        assert_eq!(l.ranges()[2], 126..234);
    }

    #[test]
    fn parse_roundtrip() {
        let l = ComponentLayout::default();
        let s = l.to_string();
        assert_eq!(s, "traj:30,hog:96,hof:108,mbhx:96,mbhy:96");
        assert_eq!(s.parse::<ComponentLayout>().unwrap(), l);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(ComponentLayout::new(vec![]).is_err());
        assert!(ComponentLayout::new(vec![("a".into(), 0)]).is_err());
        assert!(ComponentLayout::new(vec![("a".into(), 1), ("a".into(), 2)]).is_err());
        assert!("a:x".parse::<ComponentLayout>().is_err());
    }
}
