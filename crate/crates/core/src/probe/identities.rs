//! Closed-form energy identities: the softmax head as a product of experts,
//! and the RBM energy.

use crate::error::{shape_err, Result};
use crate::tensor::{softmax, Tensor};

/// Max absolute difference between `softmax(β·g)` and the normalized product
/// of experts `Π_k exp(g_k)^{β_lk}`.
///
/// `beta` is `[L, K]`, `g` has length `K`. Normalizing each expert first
/// (`p_k = exp(g_k) / Σ_j exp(g_j)`) would scale row `l` by
/// `Z_F^{-Σ_k β_lk}`, which cancels in the final normalization only when all
/// rows of `beta` have the same sum, so the experts enter unnormalized.
pub fn poe_deviation(beta: &Tensor, g: &[f64]) -> Result<f64> {
    let k = match *beta.shape() {
        [_, k] if k == g.len() => k,
        _ => {
            return shape_err(format!(
                "beta {:?} does not match {} neuron responses",
                beta.shape(),
                g.len()
            ))
        }
    };
    let rows: Vec<&[f64]> = beta.data().chunks_exact(k).collect();

    let logits: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().zip(g).map(|(b, x)| b * x).sum())
        .collect();
    let direct = softmax(&logits);

    let experts: Vec<f64> = g.iter().map(|x| x.exp()).collect();
    let unnormalized: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().zip(&experts).map(|(b, e)| e.powf(*b)).product())
        .collect();
    let z_prime: f64 = unnormalized.iter().sum();

    Ok(direct
        .iter()
        .zip(&unnormalized)
        .map(|(d, u)| (d - u / z_prime).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// `[V, H]`
    pub weights: Tensor,
    pub visible_bias: Vec<f64>,
    pub hidden_bias: Vec<f64>,
}

impl RbmParams {
    pub fn new(weights: Tensor, visible_bias: Vec<f64>, hidden_bias: Vec<f64>) -> Result<Self> {
        match *weights.shape() {
            [v, h] if v == visible_bias.len() && h == hidden_bias.len() => Ok(Self {
                weights,
                visible_bias,
                hidden_bias,
            }),
            _ => shape_err(format!(
                "RBM weights {:?} need {} visible and {} hidden biases",
                weights.shape(),
                visible_bias.len(),
                hidden_bias.len()
            )),
        }
    }
}

/// `E(x, f) = −(b_Hᵀf + xᵀW f + b_Vᵀx)`.
pub fn rbm_energy(params: &RbmParams, x: &[f64], f: &[f64]) -> Result<f64> {
    let (v, h) = (params.visible_bias.len(), params.hidden_bias.len());
    if x.len() != v || f.len() != h {
        return shape_err(format!(
            "RBM is {v}×{h}, got visible {} and hidden {}",
            x.len(),
            f.len()
        ));
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let bilinear: f64 = params
        .weights
        .data()
        .chunks_exact(h)
        .zip(x)
        .map(|(row, xi)| xi * dot(row, f))
        .sum();
    Ok(-(dot(&params.hidden_bias, f) + bilinear + dot(&params.visible_bias, x)))
}
