use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn check_window(size: usize, stride: usize) -> Result<()> {
    if size == 0 || stride == 0 {
        return Err(Error::Config(format!(
            "pool size and stride must be >= 1 (got {size}, {stride})"
        )));
    }
    Ok(())
}

fn pooled_length(length: usize, size: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = length + 2 * padding;
    if padded < size {
        return Err(Error::shape(
            "pool input length",
            format!(">= {size}"),
            padded,
        ));
    }
    Ok((padded - size) / stride + 1)
}

/// Source row of every pooled value, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub input_length: usize,
    pub channels: usize,
    pub argmax: Vec<usize>,
}

/// Max pooling; padded positions never win. Ties go to the first index.
pub fn maxpool1d<T: Scalar>(
    input: &Tensor<T>,
    size: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor<T>, MaxPoolCache)> {
    check_window(size, stride)?;
    let (len, ch) = input.shape();
    let out_len = pooled_length(len, size, stride, padding)?;
    let mut out = Tensor::zeros(out_len, ch);
    let mut argmax = vec![0usize; out_len * ch];
    for t in 0..out_len {
        let start = t * stride;
        let lo = start.saturating_sub(padding);
        let hi = (start + size).saturating_sub(padding).min(len);
        if lo >= hi {
            return Err(Error::Config(format!(
                "max-pool window {t} covers only padding (padding {padding} >= size {size})"
            )));
        }
        for c in 0..ch {
            let mut best = lo;
            let mut best_v = input.get(lo, c);
            for s in lo + 1..hi {
                let v = input.get(s, c);
                if v > best_v {
                    best_v = v;
                    best = s;
                }
            }
            out.set(t, c, best_v);
            argmax[t * ch + c] = best;
        }
    }
    Ok((
        out,
        MaxPoolCache {
            input_length: len,
            channels: ch,
            argmax,
        },
    ))
}

pub fn maxpool1d_backward<T: Scalar>(
    cache: &MaxPoolCache,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let ch = cache.channels;
    grad_out.expect_shape((cache.argmax.len() / ch.max(1), ch), "maxpool1d_backward")?;
    let mut g = Tensor::zeros(cache.input_length, ch);
    for t in 0..grad_out.length() {
        for c in 0..ch {
            let src = cache.argmax[t * ch + c];
            let v = g.get(src, c) + grad_out.get(t, c);
            g.set(src, c, v);
        }
    }
    Ok(g)
}

/// Average pooling without padding. Trailing samples that do not fill a
/// window are dropped (floor semantics), so an odd length `n` pooled with
/// size 2 / stride 2 yields `n / 2` outputs.
pub fn avgpool1d<T: Scalar>(input: &Tensor<T>, size: usize, stride: usize) -> Result<Tensor<T>> {
    check_window(size, stride)?;
    let (len, ch) = input.shape();
    let out_len = pooled_length(len, size, stride, 0)?;
    let inv = T::of(1.0 / size as f64);
    let mut out = Tensor::zeros(out_len, ch);
    for t in 0..out_len {
        let row = out.row_mut(t);
        for s in t * stride..t * stride + size {
            for (o, &x) in row.iter_mut().zip(input.row(s)) {
                *o += x;
            }
        }
        row.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

pub fn avgpool1d_backward<T: Scalar>(
    input_length: usize,
    size: usize,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_window(size, stride)?;
    let ch = grad_out.channels();
    let out_len = pooled_length(input_length, size, stride, 0)?;
    grad_out.expect_shape((out_len, ch), "avgpool1d_backward")?;
    let inv = T::of(1.0 / size as f64);
    let mut g = Tensor::zeros(input_length, ch);
    for t in 0..out_len {
        for s in t * stride..t * stride + size {
            let src = grad_out.row(t);
            for (gi, &go) in g.row_mut(s).iter_mut().zip(src) {
                *gi += go * inv;
            }
        }
    }
    Ok(g)
}
