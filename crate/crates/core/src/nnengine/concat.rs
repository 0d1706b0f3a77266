use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Stacks tensors of equal length along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let Some(first) = parts.first() else {
        return Ok(Tensor::zeros(0, 0));
    };
    let len = first.length();
    if let Some(bad) = parts.iter().find(|p| p.length() != len) {
        return Err(Error::shape("concat_channels length", len, bad.length()));
    }
    let total: usize = parts.iter().map(|p| p.channels()).sum();
    let mut out = Tensor::zeros(len, total);
    for t in 0..len {
        let row = out.row_mut(t);
        let mut at = 0;
        for p in parts {
            let src = p.row(t);
            row[at..at + src.len()].copy_from_slice(src);
            at += src.len();
        }
    }
    Ok(out)
}

/// Backward of [`concat_channels`]: slices a gradient back into parts.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let total: usize = widths.iter().sum();
    if total != grad.channels() {
        return Err(Error::shape(
            "split_channels widths",
            grad.channels(),
            total,
        ));
    }
    let mut out: Vec<Tensor<T>> = widths
        .iter()
        .map(|&w| Tensor::zeros(grad.length(), w))
        .collect();
    for t in 0..grad.length() {
        let row = grad.row(t);
        let mut at = 0;
        for (part, &w) in out.iter_mut().zip(widths) {
            part.row_mut(t).copy_from_slice(&row[at..at + w]);
            at += w;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_shapes_add() {
        let a = Tensor::<f64>::from_fn(5, 3, |t, c| (t + c) as f64);
        let b = Tensor::<f64>::from_fn(5, 5, |t, c| (t * c) as f64);
        let c = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), (5, 8));
        assert_eq!(c.get(2, 4), b.get(2, 1));
        let parts = split_channels(&c, &[3, 5]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn length_mismatch() {
        let a = Tensor::<f64>::zeros(5, 1);
        let b = Tensor::<f64>::zeros(4, 1);
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
