//! Layer helpers shared by the two networks.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ParamCursor, ParamSet, Tensor, Var};
use crate::error::Result;

/// Fan-in scaled normal kernel: variance `2 / fan_in`.
pub(crate) fn kaiming(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| normal.sample(rng))
}

pub(crate) fn conv_layout(out: &mut Vec<(String, Vec<usize>)>, name: &str, cin: usize, cout: usize, k: usize) {
    out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
    out.push((format!("{name}.bias"), vec![cout]));
}

pub(crate) fn linear_layout(out: &mut Vec<(String, Vec<usize>)>, name: &str, n_in: usize, n_out: usize) {
    out.push((format!("{name}.weight"), vec![n_out, n_in]));
    out.push((format!("{name}.bias"), vec![n_out]));
}

/// Kaiming weights and zero biases for a layout of `.weight`/`.bias` pairs.
pub(crate) fn init_layout(layout: &[(String, Vec<usize>)], rng: &mut impl Rng) -> ParamSet {
    let mut params = ParamSet::new();
    for (name, shape) in layout {
        let tensor = if name.ends_with(".weight") {
            let fan_in: usize = shape[1..].iter().product();
            kaiming(shape, fan_in, rng)
        } else {
            Tensor::zeros(shape.clone())
        };
        params.push(name.clone(), tensor);
    }
    params
}

pub(crate) fn conv<'t>(
    x: &Var<'t>,
    params: &mut ParamCursor<'_, 't>,
    name: &str,
    stride: usize,
    pad: usize,
) -> Result<Var<'t>> {
    let w = params.take(&format!("{name}.weight"))?;
    let b = params.take(&format!("{name}.bias"))?;
    x.conv2d(w, Some(b), stride, pad)
}

pub(crate) fn linear<'t>(x: &Var<'t>, params: &mut ParamCursor<'_, 't>, name: &str) -> Result<Var<'t>> {
    let w = params.take(&format!("{name}.weight"))?;
    let b = params.take(&format!("{name}.bias"))?;
    x.linear(w, b)
}
