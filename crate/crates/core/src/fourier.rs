//! Truncated Fourier series on the periodic unit cell.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// One `cos`/`sin` pair attached to an integer wave vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub wave: Vec<i64>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// `constant + Σ cos·cos(2π k·y) + sin·sin(2π k·y)`.
///
/// Every field built this way is exactly 1-periodic in each coordinate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierField {
    #[serde(default)]
    pub constant: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<Mode>,
}

impl FourierField {
    pub fn constant(c: f64) -> Self {
        FourierField {
            constant: c,
            modes: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    /// Appends a mode; builder style.
    pub fn with_mode(mut self, wave: &[i64], cos: f64, sin: f64) -> Self {
        self.modes.push(Mode {
            wave: wave.to_vec(),
            cos,
            sin,
        });
        self
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        let mut s = self.constant;
        for m in &self.modes {
            let theta = TAU * phase(&m.wave, y);
            if m.cos != 0.0 {
                s += m.cos * theta.cos();
            }
            if m.sin != 0.0 {
                s += m.sin * theta.sin();
            }
        }
        s
    }

    /// Analytic gradient with respect to `y`.
    pub fn grad(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        for m in &self.modes {
            let theta = TAU * phase(&m.wave, y);
            let amp = -m.cos * theta.sin() + m.sin * theta.cos();
            for (gk, &k) in g.iter_mut().zip(&m.wave) {
                *gk += TAU * k as f64 * amp;
            }
        }
        g
    }

    /// True when every coefficient vanishes, i.e. the field is identically zero.
    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    pub(crate) fn check_dimension(&self, d: usize) -> Result<(), String> {
        for m in &self.modes {
            if m.wave.len() != d {
                return Err(format!(
                    "mode with wave vector {:?} does not match dimension {d}",
                    m.wave
                ));
            }
        }
        let finite = self.constant.is_finite()
            && self.modes.iter().all(|m| m.cos.is_finite() && m.sin.is_finite());
        if !finite {
            return Err("non-finite Fourier coefficient".into());
        }
        Ok(())
    }
}

fn phase(wave: &[i64], y: &[f64]) -> f64 {
    wave.iter().zip(y).map(|(&k, &yk)| k as f64 * yk).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_matches_closed_form() {
        let f = FourierField::constant(1.5).with_mode(&[1], 0.5, -2.0);
        let y = 0.3;
        let expect = 1.5 + 0.5 * (TAU * y).cos() - 2.0 * (TAU * y).sin();
        assert!((f.eval(&[y]) - expect).abs() < 1e-15);
    }

    #[test]
    fn periodic_in_each_axis() {
        let f = FourierField::zero().with_mode(&[2, -1], 0.3, 0.7);
        let a = f.eval(&[0.2, 0.45]);
        let b = f.eval(&[1.2, -0.55]);
        assert!((a - b).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let f = FourierField::constant(1.0)
            .with_mode(&[1, 2], 0.4, 0.1)
            .with_mode(&[0, 1], -0.2, 0.9);
        let y = [0.17, 0.61];
        let g = f.grad(&y);
        let h = 1e-6;
        for k in 0..2 {
            let mut yp = y;
            let mut ym = y;
            yp[k] += h;
            ym[k] -= h;
            let fd = (f.eval(&yp) - f.eval(&ym)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "axis {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn json_shape() {
        let f = FourierField::constant(1.0).with_mode(&[1], 0.0, 1.0);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"constant":1.0,"modes":[{"wave":[1],"cos":0.0,"sin":1.0}]}"#);
        let back: FourierField = serde_json::from_str(r#"{"constant": 2}"#).unwrap();
        assert_eq!(back, FourierField::constant(2.0));
    }
}
