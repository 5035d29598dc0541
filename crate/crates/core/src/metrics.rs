use crate::{Error, Result};

/// Uncompressed size over compressed size.
pub fn compression_ratio(uncompressed_bytes: u64, compressed_bytes: u64) -> Result<f64> {
    if compressed_bytes == 0 {
        return Err(Error::InvalidArgument(
            "compressed size must be positive".into(),
        ));
    }
    Ok(uncompressed_bytes as f64 / compressed_bytes as f64)
}

/// Sample Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Middle element after sorting (mean of the two middle ones for even counts).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 {
        0.5 * (v[mid - 1] + v[mid])
    } else {
        v[mid]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ratio() {
        assert_eq!(compression_ratio(100, 25).unwrap(), 4.0);
        assert_eq!(compression_ratio(77, 77).unwrap(), 1.0);
        assert!(compression_ratio(10, 0).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 4.0, 2.0, 8.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() < 1e-15);
        // 5 / sqrt(2 * 38/3), evaluated with exact rationals
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 7.0]).unwrap();
        assert!((r - 0.993_399_267_798_782_8).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(pearson(&[1.0], &[2.0]).is_err());
        assert!(pearson(&[1.0, 2.0], &[2.0]).is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    proptest! {
        #[test]
        fn pearson_symmetric_and_affine(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40),
            a in 0.01f64..100.0,
            b in -100f64..100.0,
        ) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let (Ok(xy), Ok(yx)) = (pearson(&x, &y), pearson(&y, &x)) {
                prop_assert!((xy - yx).abs() <= 1e-12);
                prop_assert!((-1.0..=1.0).contains(&xy));
                let scaled: Vec<f64> = x.iter().map(|v| a * v + b).collect();
                let r = pearson(&scaled, &y).unwrap();
                prop_assert!((r - xy).abs() <= 1e-9);
            }
        }
    }
}
