use alloc::format;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Point;
use crate::error::{contract, Result};
use crate::grad::{Tape, Var};

/// Largest correlation magnitude the head can emit.
pub const RHO_LIMIT: f64 = 1.0 - 1e-6;

const LN_TWO_PI: f64 = 1.837_877_066_409_345_5;

/// One bivariate normal over a 2-D displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianParams {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl GaussianParams {
    /// From a `(mu_x, mu_y, sigma_x, sigma_y, rho)` row.
    pub fn from_row(row: &[f64]) -> Self {
        Self {
            mu_x: row[0],
            mu_y: row[1],
            sigma_x: row[2],
            sigma_y: row[3],
            rho: row[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_x > 0.0 && self.sigma_y > 0.0 && libm::fabs(self.rho) < 1.0) || !self.mu_x.is_finite() || !self.mu_y.is_finite() {
            return contract(format!("invalid Gaussian parameters {self:?}"));
        }
        Ok(())
    }

    /// Negative log-density at `p`.
    pub fn nll(&self, p: Point) -> f64 {
        let dx = (p[0] - self.mu_x) / self.sigma_x;
        let dy = (p[1] - self.mu_y) / self.sigma_y;
        let om = 1.0 - self.rho * self.rho;
        LN_TWO_PI
            + libm::log(self.sigma_x)
            + libm::log(self.sigma_y)
            + 0.5 * libm::log(om)
            + (dx * dx + dy * dy - 2.0 * self.rho * dx * dy) / (2.0 * om)
    }
}

/// Draw via the Cholesky factor of the 2x2 covariance.
pub fn sample_bivariate<R: Rng + ?Sized>(g: &GaussianParams, rng: &mut R) -> Point {
    let u: f64 = StandardNormal.sample(rng);
    let v: f64 = StandardNormal.sample(rng);
    let x = g.mu_x + g.sigma_x * u;
    let y = g.mu_y + g.sigma_y * (g.rho * u + libm::sqrt(1.0 - g.rho * g.rho) * v);
    [x, y]
}

/// Mean negative log-density of `target [.., 2]` under `gaussian [.., 5]`.
pub fn bivariate_nll(tape: &mut Tape, gaussian: Var, target: Var) -> Result<Var> {
    let mu = tape.slice(gaussian, 0, 2)?;
    let sx = tape.slice(gaussian, 2, 1)?;
    let sy = tape.slice(gaussian, 3, 1)?;
    let rho = tape.slice(gaussian, 4, 1)?;
    let d = tape.sub(target, mu)?;
    let dx = tape.slice(d, 0, 1)?;
    let dy = tape.slice(d, 1, 1)?;
    let nx = tape.div(dx, sx)?;
    let ny = tape.div(dy, sy)?;
    let nx2 = tape.mul(nx, nx)?;
    let ny2 = tape.mul(ny, ny)?;
    let nxy = tape.mul(nx, ny)?;
    let rnxy = tape.mul(rho, nxy)?;
    let rnxy = tape.scale(rnxy, -2.0)?;
    let q = tape.add(nx2, ny2)?;
    let q = tape.add(q, rnxy)?;
    let r2 = tape.mul(rho, rho)?;
    let om = tape.affine(r2, -1.0, 1.0)?;
    let two_om = tape.scale(om, 2.0)?;
    let quad = tape.div(q, two_om)?;
    let lsx = tape.log(sx)?;
    let lsy = tape.log(sy)?;
    let lom = tape.log(om)?;
    let lom = tape.scale(lom, 0.5)?;
    let logs = tape.add(lsx, lsy)?;
    let logs = tape.add(logs, lom)?;
    let per_point = tape.add(quad, logs)?;
    let m = tape.mean(per_point)?;
    tape.affine(m, 1.0, LN_TWO_PI)
}
