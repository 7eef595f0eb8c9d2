//! Problem definition: periodic coefficients, initial data and run parameters.

use crate::error::{Error, HypothesisViolation, Result};
use crate::fourier::FourierField;
use serde::{Deserialize, Serialize};

/// Macroscopic initial profile of one species on the periodic box `[0, L)^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    /// Gaussian bump, periodized over the box.
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    Constant { value: f64 },
    /// Fourier series in the box-scaled coordinate `x / L`.
    Fourier { field: FourierField },
}

fn one() -> f64 {
    1.0
}

impl InitialProfile {
    pub fn eval(&self, x: &[f64], box_length: f64) -> f64 {
        match self {
            InitialProfile::Constant { value } => *value,
            InitialProfile::Fourier { field } => {
                let y: Vec<f64> = x.iter().map(|xi| xi / box_length).collect();
                field.eval(&y)
            }
            InitialProfile::Gaussian {
                center,
                width,
                amplitude,
            } => {
                // Enough periodic images to cover ten widths on either side.
                let reach = (10.0 * width / box_length).ceil() as i64 + 1;
                let d = x.len();
                let mut total = 0.0;
                let mut shift = vec![-reach; d];
                loop {
                    let mut r2 = 0.0;
                    for k in 0..d {
                        let dx = x[k] - center[k] - shift[k] as f64 * box_length;
                        r2 += dx * dx;
                    }
                    total += (-r2 / (2.0 * width * width)).exp();
                    let mut k = 0;
                    while k < d {
                        shift[k] += 1;
                        if shift[k] <= reach {
                            break;
                        }
                        shift[k] = -reach;
                        k += 1;
                    }
                    if k == d {
                        break;
                    }
                }
                amplitude * total
            }
        }
    }

    /// Whether the profile is nonnegative everywhere (conservative check).
    pub fn is_nonnegative(&self) -> bool {
        match self {
            InitialProfile::Constant { value } => *value >= 0.0,
            InitialProfile::Gaussian { amplitude, .. } => *amplitude >= 0.0,
            InitialProfile::Fourier { field } => {
                let osc: f64 = field.modes.iter().map(|m| m.cos.hypot(m.sin)).sum();
                field.constant >= osc
            }
        }
    }
}

/// Coefficients of the `N`-species system on the unit cell together with
/// initial data and the run parameters of a validation study.
///
/// `b[α][k]`, `diffusion[α][k][l]` and `pi[α][β]` are indexed by species first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub dimension: usize,
    pub species: usize,
    pub rho: Vec<FourierField>,
    pub b: Vec<Vec<FourierField>>,
    #[serde(rename = "D")]
    pub diffusion: Vec<Vec<Vec<FourierField>>>,
    #[serde(rename = "Pi")]
    pub pi: Vec<Vec<FourierField>>,
    pub initial_data: Vec<InitialProfile>,
    pub final_time: f64,
    pub epsilons: Vec<f64>,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProblemSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(e.to_string()))?;
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem spec serializes")
    }

    /// Structural consistency of array shapes and run parameters; the
    /// pointwise hypotheses are checked at sampling time.
    pub fn check_shape(&self) -> Result<()> {
        let shape = |msg: String| Error::Hypothesis(HypothesisViolation::Shape(msg));
        let (d, n) = (self.dimension, self.species);
        if !(1..=2).contains(&d) {
            return Err(Error::InvalidGrid(format!("unsupported dimension {d}")));
        }
        if n == 0 {
            return Err(shape("at least one species is required".into()));
        }
        let count = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(shape(format!("{what} has {got} entries, expected {want}")))
            }
        };
        count("rho", self.rho.len(), n)?;
        count("b", self.b.len(), n)?;
        count("D", self.diffusion.len(), n)?;
        count("Pi", self.pi.len(), n)?;
        count("initial_data", self.initial_data.len(), n)?;
        let mut fields: Vec<&FourierField> = self.rho.iter().collect();
        for a in 0..n {
            count("b[α]", self.b[a].len(), d)?;
            count("D[α]", self.diffusion[a].len(), d)?;
            count("Pi[α]", self.pi[a].len(), n)?;
            for row in &self.diffusion[a] {
                count("D[α][k]", row.len(), d)?;
                fields.extend(row);
            }
            fields.extend(&self.b[a]);
            fields.extend(&self.pi[a]);
            if let InitialProfile::Gaussian { center, width, .. } = &self.initial_data[a] {
                count("gaussian center", center.len(), d)?;
                if !(*width > 0.0) {
                    return Err(shape(format!("gaussian width {width} must be positive")));
                }
            }
        }
        for f in fields {
            f.check_dimension(d).map_err(shape)?;
        }
        if !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return Err(Error::InvalidInput(format!(
                "final_time {} must be positive",
                self.final_time
            )));
        }
        if self.epsilons.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(Error::InvalidInput("epsilons must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn gaussian_is_periodized() {
        let g = InitialProfile::Gaussian {
            center: vec![0.0],
            width: 0.2,
            amplitude: 1.0,
        };
        let a = g.eval(&[0.1], 1.0);
        let b = g.eval(&[0.9], 1.0);
        assert!((a - b).abs() < 1e-14);
        assert!(a > (-0.125f64).exp());
    }

    #[test]
    fn round_trip_is_exact() {
        for spec in fixtures::all() {
            let text = spec.to_json();
            let back = ProblemSpec::from_json(&text).unwrap();
            assert_eq!(back, spec);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut spec = fixtures::constant_decoupled();
        spec.rho.push(FourierField::constant(1.0));
        assert!(matches!(
            spec.check_shape(),
            Err(Error::Hypothesis(HypothesisViolation::Shape(_)))
        ));
        let mut spec = fixtures::constant_decoupled();
        spec.dimension = 3;
        assert!(matches!(spec.check_shape(), Err(Error::InvalidGrid(_))));
    }
}
