//! Network definitions: the seventeen-block generator with feature taps and
//! the patch discriminator, plus their parameter storage and checkpoints.

pub mod checkpoint;
pub mod discriminator;
pub mod generator;
pub(crate) mod layers;
pub mod params;

pub use discriminator::{patch_map_len, Discriminator, DiscriminatorConfig, DiscriminatorRole};
pub use generator::{Depth, Generator, GeneratorConfig, GeneratorRun, GeneratorVars};
pub use params::{Param, ParamKind, ParamStore, INIT_STD};

use crate::tensor::Tensor;

/// Activations of one generator block, `[C, H', W']`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    pub values: Tensor<T>,
    /// 1-based index of the block that produced it.
    pub layer_index: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;
    use crate::imaging::Image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> GeneratorConfig {
        GeneratorConfig { base_filters: 4, residual_blocks: 9 }
    }

    fn noise(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _| rng.gen::<f64>()).unwrap()
    }

    #[test]
    fn generator_has_seventeen_named_blocks() {
        let g = Generator::<f32>::new(GeneratorConfig::default(), 0).unwrap();
        let names = g.block_names();
        assert_eq!(names.len(), 17);
        assert_eq!(&names[..4], &["enc1", "enc2", "enc3", "enc4"]);
        assert_eq!(names[4], "res1");
        assert_eq!(names[12], "res9");
        assert_eq!(&names[13..], &["dec1", "dec2", "dec3", "dec4"]);
        assert_eq!(g.tap_layers(), [1, 2, 3]);
        assert_eq!(g.content_tap(), 16);
    }

    #[test]
    fn tap_and_content_shapes_for_64_with_eight_filters() {
        let g = Generator::<f32>::new(GeneratorConfig { base_filters: 8, residual_blocks: 9 }, 1).unwrap();
        let run = g.run(&noise(64, 64, 2)).unwrap();
        let shapes: Vec<&[usize]> = run.taps.iter().map(|t| t.values.shape()).collect();
        assert_eq!(shapes, vec![&[8, 64, 64][..], &[16, 32, 32], &[32, 16, 16]]);
        assert_eq!(run.taps.iter().map(|t| t.layer_index).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(run.content_features.values.shape(), &[8, 64, 64]);
        assert_eq!(run.content_features.layer_index, 16);
        assert!(run.taps.iter().all(|t| t.values.is_finite()));
    }

    #[test]
    fn shape_law_holds_for_every_block() {
        let f = 2;
        let g = Generator::<f32>::new(GeneratorConfig { base_filters: f, residual_blocks: 9 }, 3).unwrap();
        for side in [64usize, 128, 400] {
            let mut tape = Tape::new();
            let bound = g.params().bind(&mut tape, false);
            let x = tape.constant(noise(side, side, 4).to_tensor());
            let vars = g.forward(&mut tape, &bound, x, Depth::Full).unwrap();
            let out = tape.value(vars.output.unwrap());
            assert_eq!(out.shape(), &[1, side, side]);
            let expect = [(f, side), (2 * f, side / 2), (4 * f, side / 4)];
            for (v, (c, s)) in vars.taps.iter().zip(expect) {
                assert_eq!(tape.value(*v).shape(), &[c, s, s], "side {side}");
            }
            assert_eq!(tape.value(vars.content.unwrap()).shape(), &[f, side, side]);
        }
    }

    #[test]
    fn non_square_inputs_keep_their_shape() {
        let g = Generator::<f32>::new(small(), 0).unwrap();
        let out = g.run(&noise(24, 40, 1)).unwrap().translated;
        assert_eq!((out.height(), out.width()), (24, 40));
    }

    #[test]
    fn indivisible_input_names_the_divisor() {
        let g = Generator::<f32>::new(small(), 0).unwrap();
        let err = g.run(&noise(60, 64, 0)).unwrap_err().to_string();
        assert!(err.contains("divisible by 8"), "{err}");
    }

    #[test]
    fn outputs_lie_in_tanh_range() {
        let mut g = Generator::<f32>::new(small(), 5).unwrap();
        // Large weights push the pre-activation far into saturation.
        for v in g.params_mut().values_mut() {
            for x in v.data_mut() {
                *x *= 50.0;
            }
        }
        let x = noise(32, 32, 6).to_tensor::<f32>();
        let y = g.translate_tensor(&x).unwrap();
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn patch_map_sizes() {
        assert_eq!(patch_map_len(400), Some(48));
        assert_eq!(patch_map_len(64), Some(6));
        assert_eq!(patch_map_len(128), Some(14));
        assert_eq!(patch_map_len(16), None);
        let d = Discriminator::<f32>::new(DiscriminatorRole::Content, DiscriminatorConfig { base_filters: 2 }, 0).unwrap();
        assert_eq!(d.run(&noise(64, 64, 0)).unwrap().shape(), &[1, 6, 6]);
        assert_eq!(d.run(&noise(128, 64, 0)).unwrap().shape(), &[1, 14, 6]);
        assert!(matches!(d.run(&noise(16, 16, 0)), Err(crate::Error::Dimension(_))));
    }

    #[test]
    fn discriminator_default_schedule() {
        assert_eq!(DiscriminatorConfig::default().filter_schedule(), [64, 128, 256, 512, 1]);
        let d = Discriminator::<f32>::new(DiscriminatorRole::DomainRealism, DiscriminatorConfig::default(), 0).unwrap();
        let w: Vec<_> = d.params().iter().filter(|p| p.kind == ParamKind::Weight).map(|p| p.value.shape().to_vec()).collect();
        assert_eq!(w, vec![vec![64, 1, 4, 4], vec![128, 64, 4, 4], vec![256, 128, 4, 4], vec![512, 256, 4, 4], vec![1, 512, 4, 4]]);
        let norms = d.params().iter().filter(|p| p.kind == ParamKind::NormScale).count();
        assert_eq!(norms, 3);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let a = Generator::<f32>::new(small(), 11).unwrap();
        let b = Generator::<f32>::new(small(), 11).unwrap();
        let c = Generator::<f32>::new(small(), 12).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.params().fingerprint(), b.params().fingerprint());
        assert_ne!(a.params().fingerprint(), c.params().fingerprint());
        let mut d = c.clone();
        d.init_parameters(11);
        assert_eq!(d.params(), a.params());
    }

    #[test]
    fn init_statistics() {
        let g = Generator::<f64>::new(GeneratorConfig { base_filters: 16, residual_blocks: 1 }, 7).unwrap();
        let w = &g.params().by_name("res1.conv1.weight").unwrap().value;
        assert!(w.numel() >= 10_000);
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let sd = (w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - INIT_STD).abs() <= 0.002, "sd {sd}");
        assert!(mean.abs() < 0.002);
        for p in g.params().iter() {
            match p.kind {
                ParamKind::NormScale => assert!(p.value.data().iter().all(|v| *v == 1.0)),
                ParamKind::NormShift | ParamKind::Bias => assert!(p.value.data().iter().all(|v| *v == 0.0)),
                ParamKind::Weight => {}
            }
        }
    }

    #[test]
    fn zeroed_residual_block_is_identity() {
        let mut g = Generator::<f64>::new(small(), 2).unwrap();
        g.zero_residual_block(4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<f64> = (0..16 * 8 * 8).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = Tensor::from_vec(&[16, 8, 8], data).unwrap();
        let y = g.residual_block_forward(4, &x).unwrap();
        assert_eq!(y, x);
        let untouched = g.residual_block_forward(5, &x).unwrap();
        assert_ne!(untouched, x);
    }

    #[test]
    fn every_parameter_receives_a_finite_gradient() {
        let g = Generator::<f64>::new(GeneratorConfig { base_filters: 2, residual_blocks: 2 }, 3).unwrap();
        let d = Discriminator::<f64>::new(DiscriminatorRole::Content, DiscriminatorConfig { base_filters: 2 }, 4).unwrap();
        let mut tape = Tape::new();
        let gp = g.params().bind(&mut tape, true);
        let dp = d.params().bind(&mut tape, true);
        let x = tape.constant(noise(32, 32, 1).to_tensor());
        let vars = g.forward(&mut tape, &gp, x, Depth::Full).unwrap();
        let scores = d.forward(&mut tape, &dp, vars.output.unwrap()).unwrap();
        let sq = tape.square(scores);
        let loss = tape.mean(sq);
        let mut grads = tape.backward(loss).unwrap();
        for (p, v) in g.params().iter().zip(&gp).chain(d.params().iter().zip(&dp)) {
            let grad = grads.take(*v).unwrap_or_else(|| panic!("no gradient for {}", p.name));
            assert!(grad.is_finite(), "{}", p.name);
            assert!(grad.data().iter().any(|v| *v != 0.0), "zero gradient for {}", p.name);
        }
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        let g = Generator::<f32>::new(small(), 21).unwrap();
        checkpoint::save_generator(&path, &g).unwrap();
        let back: Generator<f32> = checkpoint::load_generator(&path, Some(small())).unwrap();
        assert_eq!(back.params(), g.params());
        let err = checkpoint::load_generator::<f32>(&path, Some(GeneratorConfig { base_filters: 8, residual_blocks: 9 }))
            .unwrap_err()
            .to_string();
        assert!(err.contains("architecture mismatch"), "{err}");
        assert!(checkpoint::load_generator::<f64>(&path, None).is_err());
        std::fs::write(&path, b"garbage").unwrap();
        assert!(checkpoint::load_generator::<f32>(&path, None).is_err());
    }

    #[test]
    fn archive_rejects_truncation() {
        let mut a = checkpoint::TensorArchive::<f32>::new(serde_json::json!({"k": 1}));
        a.push("x", Tensor::full(&[2, 3], 1.5));
        let bytes = a.to_bytes();
        assert_eq!(checkpoint::TensorArchive::<f32>::from_bytes(&bytes).unwrap(), a);
        assert!(checkpoint::TensorArchive::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn translate_image_pads_and_crops_any_size() {
        let g = Generator::<f32>::new(small(), 4).unwrap();
        for (h, w) in [(20, 13), (9, 30), (16, 16)] {
            let img = crate::imaging::Image::from_fn(h, w, |y, x| ((y * 7 + x * 3) % 11) as f64 / 10.0).unwrap();
            let out = g.translate_image(&img).unwrap();
            assert_eq!((out.height(), out.width()), (h, w));
            assert_eq!(out, g.translate_image(&img).unwrap());
        }
    }
}
