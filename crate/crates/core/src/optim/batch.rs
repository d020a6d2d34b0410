use rayon::prelude::*;

use crate::env::{Environment, Sample};
use crate::error::{Error, Result};
use crate::mechanism::{loss_value, run_ama_with, AmaParams, LossSpec};
use crate::rng::{derive_seed, stream};

/// Seeded batch of type profiles; profile `i` is drawn from its own stream `(stream, i)`.
#[derive(Clone, Debug)]
pub struct ProfileBatch {
    pub stream: u64,
    pub samples: Vec<Sample>,
}

impl ProfileBatch {
    pub fn draw(env: &Environment, master: u64, path: &[u64], count: usize) -> Result<Self> {
        let id = derive_seed(master, path);
        let samples = (0..count as u64)
            .into_par_iter()
            .map(|i| env.sample(&mut stream(id, &[i])))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProfileBatch { stream: id, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn wrap(&self, index: usize, err: Error) -> Error {
        Error::Profile {
            stream: self.stream,
            index: index as u64,
            source: Box::new(err),
        }
    }
}

/// Exact (unregularized) loss of every profile in the batch, in batch order.
pub fn profile_losses(env: &Environment, params: &AmaParams, loss: LossSpec, batch: &ProfileBatch) -> Result<Vec<f64>> {
    batch
        .samples
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            run_ama_with(env.mdp(), env.marginals(), params, &sample.profile)
                .and_then(|out| loss_value(loss, &out, sample.loss_cost(loss)))
                .map_err(|e| batch.wrap(i, e))
        })
        .collect()
}

pub fn mean_loss(env: &Environment, params: &AmaParams, loss: LossSpec, batch: &ProfileBatch) -> Result<f64> {
    Ok(summarize(&profile_losses(env, params, loss, batch)?).0)
}

/// Sample mean and standard error `std / sqrt(len)` with the unbiased sample deviation.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        let (m, se) = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&[7.0]), (7.0, 0.0));
    }
}
