use serde::{Deserialize, Serialize};

use crate::num::Real;

/// Late-time analytic densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AsymptoticPdf<T> {
    /// Equal mixture of gaussians in `y = atanh r_z` with means `±4α²t` and
    /// variance `4α²t`.
    YPair { alpha: T },
    /// Single gaussian in `Y = atanh r²` with mean `6α²t` and variance `4α²t`.
    YRadial { alpha: T },
}

fn ln_gauss<T: Real>(x: T, mean: T, var: T) -> T {
    let d = x - mean;
    -(d * d) / (T::lit(2.0) * var) - T::lit(0.5) * (T::TAU() * var).ln()
}

impl<T: Real> AsymptoticPdf<T> {
    pub fn mean_and_variance(&self, t: T) -> (T, T) {
        match *self {
            AsymptoticPdf::YPair { alpha } => {
                let a2 = alpha * alpha;
                (T::lit(4.0) * a2 * t, T::lit(4.0) * a2 * t)
            }
            AsymptoticPdf::YRadial { alpha } => {
                let a2 = alpha * alpha;
                (T::lit(6.0) * a2 * t, T::lit(4.0) * a2 * t)
            }
        }
    }

    pub fn ln_density(&self, x: T, t: T) -> T {
        let (m, v) = self.mean_and_variance(t);
        match self {
            AsymptoticPdf::YPair { .. } => {
                let a = ln_gauss(x, m, v);
                let b = ln_gauss(x, -m, v);
                let hi = a.max(b);
                hi + ((a - hi).exp() + (b - hi).exp()).ln() - T::LN_2()
            }
            AsymptoticPdf::YRadial { .. } => ln_gauss(x, m, v),
        }
    }

    pub fn density(&self, x: T, t: T) -> T {
        self.ln_density(x, t).exp()
    }
}
