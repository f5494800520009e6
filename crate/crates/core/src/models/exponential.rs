use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Result};
use crate::rng::stream;

/// `n` i.i.d. draws from an exponential distribution with rate `alpha`.
pub fn exponential_simulate(alpha: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("rate must be > 0, got {alpha}")));
    }
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let dist = Exp::new(alpha).map_err(|e| invalid(e.to_string()))?;
    let mut rng = stream(seed, &[]);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}
