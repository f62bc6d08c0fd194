/// `γ_L(β) = −β²/(2L) − β⁴/24` for space-time white noise.
pub fn gamma_white_closed(beta: f64, length: f64) -> f64 {
    -beta * beta / (2.0 * length) - beta.powi(4) / 24.0
}

/// `E Y_λ^{-2} = 1 + λ²/12` for `Y_λ = ∫_0^1 e^{λW}`.
pub fn ey_minus2_closed(lambda: f64) -> f64 {
    1.0 + lambda * lambda / 12.0
}

/// `γ_L(β)` assembled from the negative second moment: `−(β²/2L) E Y_{β√L}^{-2}`.
pub fn gamma_white_from_ey(beta: f64, length: f64) -> f64 {
    -beta * beta / (2.0 * length) * ey_minus2_closed(beta * length.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((gamma_white_closed(1.0, 1.0) + 13.0 / 24.0).abs() < 1e-15);
        assert_eq!(gamma_white_closed(0.0, 3.0), 0.0);
        assert!((gamma_white_closed(1.0, 1e6) - (-1.0 / 24.0 - 5e-7)).abs() < 1e-15);
        assert_eq!(ey_minus2_closed(0.0), 1.0);
        assert!((ey_minus2_closed(1.0) - 13.0 / 12.0).abs() < 1e-15);
        assert!((ey_minus2_closed(2.0) - 4.0 / 3.0).abs() < 1e-15);
        for (b, l) in [(1.0, 1.0), (0.7, 3.0), (2.0, 0.5)] {
            assert!((gamma_white_from_ey(b, l) - gamma_white_closed(b, l)).abs() < 1e-14);
        }
    }
}
