use serde::{Deserialize, Serialize};

use crate::error::SetError;

/// Norm selector for a coefficient group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "NormRepr", into = "NormRepr")]
pub enum Norm {
    One,
    Two,
    Inf,
}

impl Norm {
    /// Dual norm of `v`: ∞ pairs with 1, 2 with itself.
    pub fn dual(self, v: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::Inf => v.map(f64::abs).sum(),
            Norm::Two => v.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::One => v.map(f64::abs).fold(0.0, f64::max),
        }
    }

    /// Primal norm of `v`.
    pub fn eval(self, v: impl Iterator<Item = f64>) -> f64 {
        match self {
            Norm::One => v.map(f64::abs).sum(),
            Norm::Two => v.map(|x| x * x).sum::<f64>().sqrt(),
            Norm::Inf => v.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NormRepr {
    Num(u8),
    Text(String),
}

impl TryFrom<NormRepr> for Norm {
    type Error = String;

    fn try_from(r: NormRepr) -> Result<Self, String> {
        match r {
            NormRepr::Num(1) => Ok(Norm::One),
            NormRepr::Num(2) => Ok(Norm::Two),
            NormRepr::Text(s) if matches!(s.as_str(), "inf" | "Inf" | "infinity") => Ok(Norm::Inf),
            NormRepr::Text(s) if s == "1" => Ok(Norm::One),
            NormRepr::Text(s) if s == "2" => Ok(Norm::Two),
            NormRepr::Num(k) => Err(format!("unsupported norm p = {k}")),
            NormRepr::Text(s) => Err(format!("unsupported norm p = {s:?}")),
        }
    }
}

impl From<Norm> for NormRepr {
    fn from(n: Norm) -> Self {
        match n {
            Norm::One => NormRepr::Num(1),
            Norm::Two => NormRepr::Num(2),
            Norm::Inf => NormRepr::Text("inf".into()),
        }
    }
}

/// Coefficient positions bound together by one norm constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormGroup {
    pub indices: Vec<usize>,
    pub p: Norm,
}

impl NormGroup {
    pub fn new(indices: Vec<usize>, p: Norm) -> Self {
        NormGroup { indices, p }
    }

    pub fn singleton(i: usize, p: Norm) -> Self {
        NormGroup { indices: vec![i], p }
    }

    pub fn range(start: usize, len: usize, p: Norm) -> Self {
        NormGroup { indices: (start..start + len).collect(), p }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub(crate) fn shifted(&self, offset: usize) -> Self {
        NormGroup {
            indices: self.indices.iter().map(|i| i + offset).collect(),
            p: self.p,
        }
    }
}

/// Checks that `groups` partition `0..m` with strictly increasing indices.
pub(crate) fn validate_groups(groups: &[NormGroup], m: usize) -> Result<(), SetError> {
    let mut seen = vec![false; m];
    for (k, g) in groups.iter().enumerate() {
        if g.indices.is_empty() {
            return Err(SetError::InvalidGroups(format!("group {k} is empty")));
        }
        if g.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SetError::InvalidGroups(format!(
                "group {k} indices are not strictly increasing"
            )));
        }
        for &i in &g.indices {
            if i >= m {
                return Err(SetError::InvalidGroups(format!(
                    "group {k} references coefficient {i} but there are {m}"
                )));
            }
            if seen[i] {
                return Err(SetError::InvalidGroups(format!(
                    "coefficient {i} appears in more than one group"
                )));
            }
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(SetError::InvalidGroups(format!("coefficient {i} is not covered by any group")));
    }
    Ok(())
}
