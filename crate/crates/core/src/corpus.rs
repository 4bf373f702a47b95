//! Built-in positive test functions on the ball and the mollified-indicator
//! generator.

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{BallGrid, Point};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Builtin {
    Const1,
    Bump1,
    Gauss,
    Aniso,
    Ridge,
}

impl Builtin {
    pub const ALL: [Builtin; 5] = [
        Builtin::Const1,
        Builtin::Bump1,
        Builtin::Gauss,
        Builtin::Aniso,
        Builtin::Ridge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Const1 => "const1",
            Builtin::Bump1 => "bump1",
            Builtin::Gauss => "gauss",
            Builtin::Aniso => "aniso",
            Builtin::Ridge => "ridge",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| Error::Unknown {
                kind: "corpus item",
                name: name.to_string(),
            })
    }

    /// Value at `x`; coordinates past the dimension must be zero.
    pub fn eval(self, x: &Point) -> f64 {
        let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        match self {
            Builtin::Const1 => 1.0,
            Builtin::Bump1 => 2.0 - r2,
            Builtin::Gauss => {
                let d2 = (x[0] - 0.3).powi(2) + x[1] * x[1] + x[2] * x[2];
                (-4.0 * d2).exp() + 0.1
            }
            Builtin::Aniso => (3.0 * x[0]).exp(),
            Builtin::Ridge => {
                let d = (x[1] * x[1] + x[2] * x[2]).sqrt();
                1.0 + (1.0 - 4.0 * d).max(0.0)
            }
        }
    }

    /// Whether the function depends on `|x|` only.
    pub fn is_radial(self) -> bool {
        matches!(self, Builtin::Const1 | Builtin::Bump1)
    }

    pub fn field(self, grid: Arc<BallGrid>) -> Result<ScalarField> {
        ScalarField::from_fn(grid, |x| self.eval(x))
    }
}

/// Cubic smoothstep cutoff: 1 on `s <= 1`, 0 on `s >= 2`.
pub fn cutoff(s: f64) -> f64 {
    let t = (s - 1.0).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

/// `f_j(x) = cutoff(j dist(x, E))` for a set `E` given by its distance
/// function. Converges to the indicator of the closure of `E` as `j` grows.
pub fn mollified_indicator<D>(grid: Arc<BallGrid>, j: f64, dist: D) -> Result<ScalarField>
where
    D: Fn(&Point) -> f64 + Sync,
{
    if !(j > 0.0) {
        return Err(Error::InvalidArgument(format!("mollification scale j = {j} must be > 0")));
    }
    ScalarField::from_fn(grid, |x| cutoff(j * dist(x).max(0.0)))
}

/// Distance to the closed ball of radius `r` centred at `c`.
pub fn ball_distance(c: Point, r: f64) -> impl Fn(&Point) -> f64 + Sync {
    move |x: &Point| {
        let d = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt();
        (d - r).max(0.0)
    }
}
