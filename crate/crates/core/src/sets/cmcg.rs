use serde::{Deserialize, Serialize};

use super::ccg::{Ccg, CcgData, Constraint, Membership};
use super::norm::NormGroup;
use crate::error::SetError;
use crate::numeric::{unvec, vec_of, Matrix, Vector};

/// Matrix-valued generator set `{C + Σ_k β_k G⁽ᵏ⁾}` stored over `vec(Θ)`
/// (column-major) as an ordinary [`Ccg`].
#[derive(Debug, Clone)]
pub struct Cmcg {
    shape: (usize, usize),
    inner: Ccg,
}

impl Cmcg {
    pub fn new(
        center: Matrix,
        generators: &[Matrix],
        groups: Vec<NormGroup>,
        constraint: Option<Constraint>,
    ) -> Result<Self, SetError> {
        let (n, p) = center.shape();
        let mut g = Matrix::zeros(n * p, generators.len());
        for (k, gk) in generators.iter().enumerate() {
            if gk.shape() != (n, p) {
                return Err(SetError::DimensionMismatch {
                    context: "generator matrix size",
                    expected: n * p,
                    found: gk.len(),
                });
            }
            g.set_column(k, &vec_of(gk));
        }
        let inner = Ccg::new(vec_of(&center), g, groups, constraint)?;
        Ok(Cmcg { shape: (n, p), inner })
    }

    /// Wraps a set over `vec(Θ)`.
    pub fn from_vectorized(shape: (usize, usize), inner: Ccg) -> Result<Self, SetError> {
        if inner.dim() != shape.0 * shape.1 {
            return Err(SetError::DimensionMismatch {
                context: "vectorized dimension",
                expected: shape.0 * shape.1,
                found: inner.dim(),
            });
        }
        Ok(Cmcg { shape, inner })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    pub fn inner(&self) -> &Ccg {
        &self.inner
    }

    pub fn into_inner(self) -> Ccg {
        self.inner
    }

    pub fn num_generators(&self) -> usize {
        self.inner.num_generators()
    }

    pub fn center_matrix(&self) -> Matrix {
        self.unvec(self.inner.center())
    }

    pub fn generator_matrix(&self, k: usize) -> Matrix {
        let col = self.inner.generators().column(k);
        unvec(col.as_slice(), self.shape.0, self.shape.1)
    }

    pub fn generator_matrices(&self) -> Vec<Matrix> {
        (0..self.num_generators()).map(|k| self.generator_matrix(k)).collect()
    }

    pub fn vec(&self, theta: &Matrix) -> Vector {
        debug_assert_eq!(theta.shape(), self.shape);
        vec_of(theta)
    }

    pub fn unvec(&self, v: &Vector) -> Matrix {
        unvec(v.as_slice(), self.shape.0, self.shape.1)
    }

    /// Support along a matrix direction, `max ⟨L, Θ⟩_F`.
    pub fn support(&self, l: &Matrix) -> Result<f64, SetError> {
        self.inner.support(&vec_of(l))
    }

    pub fn contains(&self, theta: &Matrix, tol: f64) -> Result<Membership, SetError> {
        if theta.shape() != self.shape {
            return Err(SetError::DimensionMismatch {
                context: "parameter matrix",
                expected: self.shape.0 * self.shape.1,
                found: theta.len(),
            });
        }
        self.inner.contains_point(&vec_of(theta), tol)
    }
}

impl Serialize for Cmcg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut data = CcgData::from(&self.inner);
        data.shape = Some(self.shape);
        data.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Cmcg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let data = CcgData::deserialize(d)?;
        let shape = data.shape.ok_or_else(|| D::Error::custom("missing shape"))?;
        let inner = Ccg::try_from(data).map_err(D::Error::custom)?;
        Cmcg::from_vectorized(shape, inner).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::Norm;

    #[test]
    fn round_trip_generators() {
        let c = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let g1 = Matrix::from_row_slice(2, 3, &[0.1, 0.0, 0.0, 0.0, 0.2, 0.3]);
        let g2 = Matrix::from_row_slice(2, 3, &[0.0, -1.0, 0.5, 0.25, 0.0, 0.0]);
        let groups = vec![NormGroup::range(0, 2, Norm::Two)];
        let s = Cmcg::new(c.clone(), &[g1.clone(), g2.clone()], groups, None).unwrap();
        assert_eq!(s.center_matrix(), c);
        assert_eq!(s.generator_matrix(0), g1);
        assert_eq!(s.generator_matrix(1), g2);
        let txt = serde_json::to_string(&s).unwrap();
        let back: Cmcg = serde_json::from_str(&txt).unwrap();
        assert_eq!(back.shape(), (2, 3));
        assert_eq!(back.generator_matrices(), s.generator_matrices());
    }

    #[test]
    fn matrix_support_matches_frobenius_pairing() {
        let c = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let g = Matrix::from_row_slice(1, 2, &[2.0, 0.0]);
        let s = Cmcg::new(c, &[g], vec![NormGroup::singleton(0, Norm::Inf)], None).unwrap();
        let l = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!((s.support(&l).unwrap() - 2.0).abs() < 1e-15);
        assert!(s.contains(&Matrix::from_row_slice(1, 2, &[2.5, -1.0]), 1e-9).unwrap().member);
    }
}
