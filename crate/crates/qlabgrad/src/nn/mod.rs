//! Minimal neural-network stack: an MLP with exact backpropagation, dataset
//! handling (IDX files and synthetic blobs), and the minibatch oracle adapter
//! that lets every optimizer in the crate train real models.

mod batch;
mod data;
mod idx;
mod mlp;

pub use batch::MinibatchOracle;
pub use data::{synth_dataset, Dataset, Split};
pub use idx::load_idx;
pub use mlp::{ForwardCache, Mlp, MlpSpec};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_gradient;
    use crate::param::ParamVector;
    use crate::oracle::LossOracle;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Backprop matches central differences across random architectures,
    /// parameter points, and batches.
    #[test]
    fn backprop_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
        for case in 0..20 {
            let hidden_layers = rng.random_range(1..=3);
            let mut widths = vec![rng.random_range(2..=5)];
            for _ in 0..hidden_layers {
                widths.push(rng.random_range(2..=6));
            }
            let k = rng.random_range(2..=4);
            widths.push(k);

            let n = rng.random_range(4..=16);
            let batch = rng.random_range(1..=(n.min(8)));
            let d = widths[0];
            let data = synth_dataset(case, n, d, k, 0.5).unwrap();
            let mlp = Mlp::seeded(&MlpSpec::new(widths.clone()).unwrap(), case * 31 + 1);
            let base = mlp.flatten();
            let mut oracle = MinibatchOracle::new(mlp, data, batch, case).unwrap();

            // Central differences are invalid across a ReLU kink, and a bias
            // probe crosses one whenever some pre-activation lies within the
            // step of zero (~1e-5 odds per unit-sample). A parameter jiggle
            // moves off the kink; a genuine backprop bug fails every attempt.
            let mut passed = false;
            let mut last = String::new();
            for attempt in 0..4u64 {
                let mut jiggle = ChaCha12Rng::seed_from_u64(case * 101 + attempt);
                let theta = if attempt == 0 {
                    base.clone()
                } else {
                    ParamVector::new(
                        base.iter()
                            .map(|v| v + jiggle.random_range(-1e-3..1e-3))
                            .collect(),
                    )
                };
                let report = check_gradient(&mut oracle, &theta, 1e-5).unwrap();
                if report.pass {
                    passed = true;
                    break;
                }
                last = format!(
                    "rel err {} at coord {}",
                    report.max_rel_err, report.worst_coord
                );
            }
            assert!(passed, "case {case} widths {widths:?} batch {batch}: {last}");
        }
    }

    /// A fixed epoch seed fixes the whole batch order, so two training-style
    /// walks over the data see identical bindings and losses.
    #[test]
    fn training_walks_are_bit_reproducible() {
        let walk = || {
            let data = synth_dataset(3, 48, 3, 3, 0.2).unwrap();
            let mlp = Mlp::seeded(&MlpSpec::new(vec![3, 6, 3]).unwrap(), 9);
            let mut theta = mlp.flatten();
            let mut oracle = MinibatchOracle::new(mlp, data, 8, 5).unwrap();
            let mut losses = Vec::new();
            for step in 0..24 {
                if step > 0 {
                    oracle.next_batch();
                }
                let eval = oracle.eval_full(&theta).unwrap();
                losses.push(eval.loss.to_bits());
                theta = theta.sub_scaled(&eval.gradient, 0.05);
            }
            losses
        };
        assert_eq!(walk(), walk());
    }
}
