use super::labels::{pair_relations, SIGN_CLASSES};
use super::SignError;

const EPS: f64 = 1e-12;

fn bce(p: f64, y: u8) -> f64 {
    if y == 1 {
        -p.max(EPS).ln()
    } else {
        -(1.0 - p).max(EPS).ln()
    }
}

/// Corner BCE summed over the eight corners, minimised over the global flip
/// of the labels.
pub fn loss_l1(pred: &[f64; 8], labels: &[u8; 8]) -> f64 {
    let a: f64 = pred.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum();
    let b: f64 = pred.iter().zip(labels).map(|(&p, &y)| bce(p, 1 - y)).sum();
    a.min(b)
}

/// BCE between predicted pair relations and `y_i ⊕ y_j`, summed over the 28 pairs.
pub fn loss_l2(pred: &[f64; 28], labels: &[u8; 8]) -> f64 {
    pred.iter().zip(pair_relations(labels)).map(|(&p, r)| bce(p, r)).sum()
}

/// Cross-entropy of a 128-way distribution against the canonical class.
pub fn loss_l3(dist: &[f64], class: usize) -> Result<f64, SignError> {
    if class >= SIGN_CLASSES {
        return Err(SignError::BadClass(class));
    }
    if dist.len() != SIGN_CLASSES {
        return Err(SignError::ShapeMismatch(format!("expected {SIGN_CLASSES} classes, got {}", dist.len())));
    }
    Ok(-dist[class].max(EPS).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::super::labels::class_of;
    use proptest::prelude::*;

    #[test]
    fn exact_and_flipped_predictions_are_free() {
        let y = [1, 0, 0, 1, 1, 0, 1, 0u8];
        let p = y.map(f64::from);
        assert!(loss_l1(&p, &y) < 1e-9 * 8.0 + 1e-10);
        assert_eq!(loss_l1(&p.map(|v| 1.0 - v), &y), loss_l1(&p, &y));
        let rel = pair_relations(&y).map(f64::from);
        assert!(loss_l2(&rel, &y) < 1e-9);
    }

    #[test]
    fn uniform_predictions() {
        let y = [1, 0, 0, 1, 1, 0, 1, 0u8];
        assert!((loss_l1(&[0.5; 8], &y) - 8.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let u = vec![1.0 / 128.0; 128];
        assert!((loss_l3(&u, 5).unwrap() - (128f64).ln()).abs() < 1e-12);
        assert!(matches!(loss_l3(&u, 128), Err(SignError::BadClass(128))));
        assert_eq!(class_of(&y), class_of(&y.map(|b| 1 - b)));
    }

    proptest! {
        #[test]
        fn losses_are_flip_invariant(p in prop::array::uniform8(0.0f64..1.0), q in prop::collection::vec(0.0f64..1.0, 28), bits in prop::array::uniform8(0u8..2)) {
            let f = bits.map(|b| 1 - b);
            prop_assert_eq!(loss_l1(&p, &bits), loss_l1(&p, &f));
            let q: [f64; 28] = q.try_into().unwrap();
            prop_assert_eq!(loss_l2(&q, &bits), loss_l2(&q, &f));
            let d = vec![1.0 / 128.0; 128];
            prop_assert_eq!(loss_l3(&d, class_of(&bits)).unwrap(), loss_l3(&d, class_of(&f)).unwrap());
        }
    }
}
