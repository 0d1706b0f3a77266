use crate::error::{Error, Result};

/// Segment start offsets with hop `round((1 - overlap) * segment_length)`.
/// When the hops do not land exactly on the end, one more segment is
/// right-aligned to the end so every sample is covered.
pub fn segment_offsets(total: usize, segment_length: usize, overlap: f64) -> Result<Vec<usize>> {
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!(
            "overlap {overlap} outside [0, 1)"
        )));
    }
    if segment_length == 0 || segment_length > total {
        return Err(Error::InvalidArgument(format!(
            "segment length {segment_length} invalid for waveform of length {total}"
        )));
    }
    let hop = (((1.0 - overlap) * segment_length as f64).round() as usize).max(1);
    let mut offsets: Vec<usize> = (0..)
        .map(|i| i * hop)
        .take_while(|&o| o + segment_length <= total)
        .collect();
    let last = total - segment_length;
    if *offsets.last().expect("offset 0 always fits") != last {
        offsets.push(last);
    }
    Ok(offsets)
}

pub fn segment_waveform<T>(
    waveform: &[T],
    segment_length: usize,
    overlap: f64,
) -> Result<Vec<(usize, &[T])>> {
    Ok(segment_offsets(waveform.len(), segment_length, overlap)?
        .into_iter()
        .map(|o| (o, &waveform[o..o + segment_length]))
        .collect())
}

/// Zero mean, unit population standard deviation. The variance is floored
/// at 1e-12 so constant input maps to zeros.
pub fn normalize_segment(segment: &[f32]) -> Vec<f32> {
    if segment.is_empty() {
        return Vec::new();
    }
    let n = segment.len() as f64;
    let mean = segment.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = segment
        .iter()
        .map(|&v| (f64::from(v) - mean).powi(2))
        .sum::<f64>()
        / n;
    let inv = 1.0 / var.max(1e-12).sqrt();
    segment
        .iter()
        .map(|&v| ((f64::from(v) - mean) * inv) as f32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offsets_examples() {
        assert_eq!(segment_offsets(100, 40, 0.5).unwrap(), vec![0, 20, 40, 60]);
        assert_eq!(segment_offsets(120, 40, 0.0).unwrap(), vec![0, 40, 80]);
        assert_eq!(segment_offsets(50, 50, 0.5).unwrap(), vec![0]);
        // tail is right-aligned
        assert_eq!(
            segment_offsets(110, 40, 0.5).unwrap(),
            vec![0, 20, 40, 60, 70]
        );
    }

    #[test]
    fn offset_errors() {
        assert!(segment_offsets(10, 20, 0.5).is_err());
        assert!(segment_offsets(10, 5, 1.0).is_err());
        assert!(segment_offsets(10, 0, 0.0).is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_segment(&[1.0, 1.0, 1.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(normalize_segment(&[0.0, 2.0]), vec![-1.0, 1.0]);
    }
}
