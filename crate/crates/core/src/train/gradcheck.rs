use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    build_reduced, init_params, model_backward, model_forward, Mode, ModelParams, ModelSpec,
};
use crate::optim::{weighted_ce_loss, WeightedCrossEntropySpec};
use crate::rng::{Purpose, StreamKey};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub batch: usize,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            seed: 0,
            batch: 3,
            step: 1e-5,
            tolerance: 1e-5,
        }
    }
}

/// Error over all parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupError {
    pub name: String,
    /// `‖analytic − numeric‖ / ‖numeric‖`, or the absolute norm when the
    /// numeric gradient is below `1e-8`.
    pub error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation flipped a ReLU, pooling winner or
    /// dropout decision, where the loss is not differentiable.
    pub skipped: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub seed: u64,
    pub groups: Vec<GroupError>,
    pub max_error: f64,
    pub passed: bool,
}

/// A fixed double-precision problem: the reduced stack, random weights and
/// nonzero biases, a random batch with both classes and fixed dropout keys.
pub struct GradCheckProblem {
    pub spec: ModelSpec,
    pub params: ModelParams<f64>,
    pub inputs: Tensor<f64>,
    pub targets: Tensor<f64>,
    pub keys: Vec<StreamKey>,
    pub loss: WeightedCrossEntropySpec,
}

impl GradCheckProblem {
    pub fn new(seed: u64, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::Config(
                "gradient check needs at least one sample".into(),
            ));
        }
        let spec = build_reduced();
        let mut params = init_params::<f64>(&spec, seed)?;
        let mut rng = StreamKey::new(seed, 0, 1).rng(Purpose::Test);
        let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
        for (name, t) in names.iter().zip(params.tensors_mut()) {
            if name.ends_with(".bias") {
                for v in t.data_mut() {
                    *v = rng.gen_range(0.05..0.2) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
            }
        }
        let [h, w, c] = spec.input;
        let inputs = Tensor::new(
            &[batch, h, w, c],
            (0..batch * h * w * c)
                .map(|_| rng.gen_range(0.0..1.0))
                .collect(),
        )?;
        let mut onehot = vec![0.0; batch * 2];
        for n in 0..batch {
            onehot[n * 2 + n % 2] = 1.0;
        }
        let targets = Tensor::new(&[batch, 2], onehot)?;
        let keys = (0..batch as u64)
            .map(|i| StreamKey::new(seed, 1, i))
            .collect();
        Ok(GradCheckProblem {
            spec,
            params,
            inputs,
            targets,
            keys,
            loss: WeightedCrossEntropySpec::default(),
        })
    }

    /// Loss and activation-pattern digest at `params`.
    pub fn loss_at(&self, params: &ModelParams<f64>) -> Result<(f64, u64)> {
        let (probs, cache) =
            model_forward(params, &self.spec, &self.inputs, Mode::Train, &self.keys)?;
        let out = weighted_ce_loss(&probs, &self.targets, &self.loss)?;
        Ok((out.loss, cache.pattern_digest()))
    }

    /// Backpropagated gradient at the problem's parameters.
    pub fn analytic(&self) -> Result<ModelParams<f64>> {
        let (probs, cache) = model_forward(
            &self.params,
            &self.spec,
            &self.inputs,
            Mode::Train,
            &self.keys,
        )?;
        let out = weighted_ce_loss(&probs, &self.targets, &self.loss)?;
        model_backward(&self.params, &self.spec, &cache, &out.d_logits)
    }
}

/// Checks backpropagation against central differences on a fresh problem.
pub fn gradient_check(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let problem = GradCheckProblem::new(cfg.seed, cfg.batch)?;
    let grads = problem.analytic()?;
    compare(&problem, &grads, cfg)
}

/// Compares `grads` against central differences of `problem`'s loss.
pub fn compare(
    problem: &GradCheckProblem,
    grads: &ModelParams<f64>,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let (_, base_digest) = problem.loss_at(&problem.params)?;
    let analytic = grads.named_tensors();
    // Per layer: (name, analytic, numeric) over all of its tensors.
    let mut layers: Vec<(String, Vec<f64>, Vec<Option<f64>>)> = Vec::new();
    for (g, (name, bp)) in analytic.iter().enumerate() {
        let fd: Vec<Option<f64>> = (0..bp.len())
            .into_par_iter()
            .map(|j| -> Result<Option<f64>> {
                let mut probe = problem.params.clone();
                let orig = probe.tensors()[g].data()[j];
                probe.tensors_mut()[g].data_mut()[j] = orig + cfg.step;
                let (plus, d1) = problem.loss_at(&probe)?;
                probe.tensors_mut()[g].data_mut()[j] = orig - cfg.step;
                let (minus, d2) = problem.loss_at(&probe)?;
                if d1 != base_digest || d2 != base_digest {
                    return Ok(None);
                }
                Ok(Some((plus - minus) / (2.0 * cfg.step)))
            })
            .collect::<Result<_>>()?;
        let layer = name.split('.').next().unwrap_or(name).to_string();
        match layers.last_mut() {
            Some((last, a, n)) if *last == layer => {
                a.extend_from_slice(bp.data());
                n.extend(fd);
            }
            _ => layers.push((layer, bp.data().to_vec(), fd)),
        }
    }
    let mut groups = Vec::with_capacity(layers.len());
    for (name, bp, fd) in layers {
        let mut diff2 = 0.0;
        let mut num2 = 0.0;
        let mut checked = 0;
        for (a, n) in bp.iter().zip(&fd) {
            if let Some(n) = n {
                diff2 += (a - n) * (a - n);
                num2 += n * n;
                checked += 1;
            }
        }
        let error = if num2.sqrt() < 1e-8 {
            diff2.sqrt()
        } else {
            diff2.sqrt() / num2.sqrt()
        };
        groups.push(GroupError {
            name,
            error,
            checked,
            skipped: bp.len() - checked,
        });
    }
    let max_error = groups.iter().map(|g| g.error).fold(0.0, f64::max);
    let passed = groups
        .iter()
        .all(|g| g.checked > 0 && g.error <= cfg.tolerance)
        && max_error.is_finite();
    Ok(GradCheckReport {
        seed: cfg.seed,
        groups,
        max_error,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backprop_matches_finite_differences() {
        for seed in [1, 2, 3] {
            let r = gradient_check(&GradCheckConfig {
                seed,
                ..Default::default()
            })
            .unwrap();
            assert_eq!(r.groups.len(), 10);
            assert!(r.passed, "seed {seed}: {:#?}", r.groups);
        }
    }

    #[test]
    fn impossible_tolerance_fails() {
        let r = gradient_check(&GradCheckConfig {
            seed: 1,
            tolerance: 1e-16,
            ..Default::default()
        })
        .unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn sign_flip_is_detected() {
        let cfg = GradCheckConfig::default();
        let problem = GradCheckProblem::new(4, 3).unwrap();
        let mut grads = problem.analytic().unwrap();
        for v in grads.tensors_mut()[4].data_mut() {
            *v = -*v;
        }
        let r = compare(&problem, &grads, &cfg).unwrap();
        assert!(!r.passed);
        let bad: Vec<&str> = r
            .groups
            .iter()
            .filter(|g| g.error > cfg.tolerance)
            .map(|g| g.name.as_str())
            .collect();
        assert_eq!(bad, ["conv2_1"]);
        assert!(r.groups[2].error > 1.0);
    }

    #[test]
    fn saturated_output_uses_absolute_error() {
        let cfg = GradCheckConfig::default();
        let mut problem = GradCheckProblem::new(5, 2).unwrap();
        let mut onehot = vec![0.0; 4];
        onehot[1] = 1.0;
        onehot[3] = 1.0;
        problem.targets = Tensor::new(&[2, 2], onehot).unwrap();
        let bias = problem.params.tensors_mut().into_iter().last().unwrap();
        bias.data_mut().copy_from_slice(&[-40.0, 40.0]);
        let grads = problem.analytic().unwrap();
        let largest = grads
            .tensors()
            .iter()
            .flat_map(|t| t.data())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(largest < 1e-8, "{largest}");
        let r = compare(&problem, &grads, &cfg).unwrap();
        assert!(r.passed, "{:#?}", r.groups);
        assert!(problem.loss_at(&problem.params).unwrap().0 < 1e-20);
    }
}
