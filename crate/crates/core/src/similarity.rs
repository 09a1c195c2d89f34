use thiserror::Error;

use crate::types::FeatureVector;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector has zero norm")]
    ZeroNorm,
}

/// `a·b / (‖a‖₂ ‖b‖₂)`.
pub fn cosine_similarity(a: &FeatureVector, b: &FeatureVector) -> Result<f64, SimilarityError> {
    if a.dim() != b.dim() {
        return Err(SimilarityError::DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(SimilarityError::ZeroNorm);
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok(dot / (na * nb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn basic_values() {
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(), 0.0);
        // dot = 2 + 2 + 4 = 8, norms 3 and 3
        let s = cosine_similarity(&fv(&[1.0, 2.0, 2.0]), &fv(&[2.0, 1.0, 2.0])).unwrap();
        assert!((s - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            cosine_similarity(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(SimilarityError::DimensionMismatch { left: 1, right: 2 })
        );
        assert_eq!(cosine_similarity(&fv(&[0.0, 0.0]), &fv(&[1.0, 2.0])), Err(SimilarityError::ZeroNorm));
    }

    fn nonzero_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1e3f64..1e3, d).prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0))
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded((a, b) in (1usize..24).prop_flat_map(|d| (nonzero_vec(d), nonzero_vec(d)))) {
            let (a, b) = (fv(&a), fv(&b));
            let ab = cosine_similarity(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine_similarity(&b, &a).unwrap());
            prop_assert!(ab.abs() <= 1.0 + 1e-9);
        }

        #[test]
        fn scaling(a in (1usize..24).prop_flat_map(nonzero_vec), s in 1e-3f64..1e3) {
            let a = fv(&a);
            let pos = cosine_similarity(&a, &a.scaled(s).unwrap()).unwrap();
            let neg = cosine_similarity(&a, &a.scaled(-s).unwrap()).unwrap();
            prop_assert!((pos - 1.0).abs() < 1e-9);
            prop_assert!((neg + 1.0).abs() < 1e-9);
        }
    }
}
