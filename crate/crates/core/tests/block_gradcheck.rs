mod common;

use common::{gaussian, naive_conv, rng};
use sphere::losses::{GramMode, LossTerms};
use sphere::network::{Activation, AuxSpec, Conv2d, FeatureMap, Network, SphereBlock};
use sphere::oracle::principal_projection;
use sphere::verify::{block_cases, check_block, BLOCK_STEP, BLOCK_TOLERANCE};

fn image(b: usize, c: usize, hw: usize, seed: u64) -> FeatureMap {
    FeatureMap::from_matrix(&gaussian(b, c * hw * hw, &mut rng(seed)), c, hw, hw).unwrap()
}

#[test]
fn every_block_parameter_matches_finite_differences() {
    for seed in [2, 11] {
        for (label, block, x, terms) in block_cases(seed).unwrap() {
            let (grads, _) = block.backward(&x, &terms).unwrap();
            assert!(grads.norm() > 1e-3, "{label}: gradient too small to be informative");
            for (param, err) in check_block(&block, &x, &terms, BLOCK_STEP).unwrap() {
                assert!(err <= BLOCK_TOLERANCE, "{label} {param}: {err:e}");
            }
        }
    }
}

#[test]
fn conv_matches_naive_loop() {
    let mut r = rng(5);
    let conv = Conv2d::new(3, 4, 3, &mut r);
    let conv = Conv2d::from_parts(3, 4, 3, 1, conv.weight.clone(), vec![0.1, -0.2, 0.3, 0.05]).unwrap();
    let x = image(2, 3, 7, 6);
    let got = conv.forward(&x).unwrap();
    let want = naive_conv(x.data(), 2, 3, 7, 7, &conv.weight, &conv.bias, 4, 3, 1);
    assert_eq!(got.shape(), (2, 4, 7, 7));
    for (a, b) in got.data().iter().zip(&want) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
}

#[test]
fn delta_kernel_is_identity() {
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let conv = Conv2d::from_parts(1, 1, 3, 1, k, vec![0.0]).unwrap();
    let x = image(1, 1, 3, 7);
    assert_eq!(conv.forward(&x).unwrap().data(), x.data());
}

#[test]
fn ones_kernel_center_sums_nine() {
    let conv = Conv2d::from_parts(1, 1, 3, 1, vec![1.0; 9], vec![0.0]).unwrap();
    let x = FeatureMap::new(1, 1, 3, 3, vec![1.0; 9]).unwrap();
    let y = conv.forward(&x).unwrap();
    assert_eq!(y.data()[4], 9.0);
    assert_eq!(y.data()[0], 4.0);
}

#[test]
fn default_projection_width() {
    let block = SphereBlock::conv(3, 8, Activation::LeakyRelu(0.01), false, AuxSpec::default(), &mut rng(1)).unwrap();
    let out = block.forward(&image(2, 3, 8, 2)).unwrap();
    assert_eq!((out.z.rows(), out.z.cols()), (2, 256));
    assert_eq!(out.yp.shape(), (2, 8, 4, 4));
}

#[test]
fn identical_samples_give_identical_rows() {
    let block = SphereBlock::conv(2, 4, Activation::Tanh, false, AuxSpec { enabled: true, depth: 1, d_proj: 6 }, &mut rng(3)).unwrap();
    let one = image(1, 2, 6, 4);
    let x = FeatureMap::concat(&[one.clone(), one.clone(), one]).unwrap();
    let z = block.forward(&x).unwrap().z;
    assert_eq!(z.row(0), z.row(1));
    assert_eq!(z.row(1), z.row(2));
}

#[test]
fn forward_is_bitwise_deterministic() {
    let block = SphereBlock::conv(2, 4, Activation::Sigmoid, true, AuxSpec { enabled: true, depth: 2, d_proj: 5 }, &mut rng(8)).unwrap();
    let x = image(3, 2, 6, 9);
    assert_eq!(block.forward(&x).unwrap(), block.forward(&x).unwrap());
    let terms = LossTerms::default();
    assert_eq!(block.backward(&x, &terms).unwrap(), block.backward(&x, &terms).unwrap());
}

#[test]
fn stationary_at_principal_projection() {
    let x = gaussian(10, 6, &mut rng(21));
    let oracle = principal_projection(&x, 3).unwrap();
    let vm = sphere::numerics::svd(&x).unwrap().v.leading_columns(3);
    let mut block = SphereBlock::linear(6, 3, &mut rng(1));
    block.params_mut()[0].copy_from_slice(vm.data());
    let terms = LossTerms { oja: false, sphere: true, orth: false, lambda: 0.0, gram: GramMode::Raw };
    let fm = FeatureMap::from_matrix(&x, 6, 1, 1).unwrap();
    let (grads, bundle) = block.backward(&fm, &terms).unwrap();
    assert!(grads.norm() <= 1e-6, "{}", grads.norm());
    assert!((bundle.sphere - oracle.min_loss).abs() <= 1e-9 * (1.0 + oracle.min_loss));
}

#[test]
fn skip_path_changes_output_but_adds_no_parameters() {
    let mut r = rng(4);
    let with = SphereBlock::conv(2, 4, Activation::Relu, true, AuxSpec { enabled: true, depth: 1, d_proj: 4 }, &mut r).unwrap();
    let mut without = with.clone();
    if let sphere::network::MainBlock::Conv(m) = &mut without.main {
        m.skip = false;
    }
    let x = image(4, 2, 6, 5);
    assert_ne!(with.forward_main(&x).unwrap(), without.forward_main(&x).unwrap());
    let names_with: Vec<String> = with.params().into_iter().map(|(n, _)| n).collect();
    let names_without: Vec<String> = without.params().into_iter().map(|(n, _)| n).collect();
    assert_eq!(names_with, names_without);
    let (g, _) = with.backward(&x, &LossTerms::default()).unwrap();
    assert_eq!(g.names, names_with);
}

#[test]
fn batch_of_one_rejected() {
    let block = SphereBlock::conv(2, 4, Activation::Relu, false, AuxSpec { enabled: true, depth: 1, d_proj: 4 }, &mut rng(4)).unwrap();
    assert!(block.backward(&image(1, 2, 6, 5), &LossTerms::default()).is_err());
}

#[test]
fn later_blocks_do_not_affect_earlier_ones() {
    let mut r = rng(12);
    let b1 = SphereBlock::conv(2, 4, Activation::Tanh, false, AuxSpec { enabled: true, depth: 1, d_proj: 4 }, &mut r).unwrap();
    let b2 = SphereBlock::conv(4, 6, Activation::Tanh, false, AuxSpec { enabled: true, depth: 1, d_proj: 4 }, &mut r).unwrap();
    let mut net = Network::new(vec![b1, b2]);
    let x = image(4, 2, 8, 13);
    let terms = LossTerms::default();
    let before = net.blocks[0].backward(&x, &terms).unwrap();
    let sum_before = net.block_checksum(0);
    for p in net.blocks[1].params_mut() {
        for v in p.iter_mut() {
            *v += 0.25;
        }
    }
    assert_eq!(net.blocks[0].backward(&x, &terms).unwrap(), before);
    assert_eq!(net.block_checksum(0), sum_before);
}

#[test]
fn flatten_round_trips() {
    let x = image(3, 2, 5, 14);
    let back = FeatureMap::from_matrix(&x.flatten(), 2, 5, 5).unwrap();
    assert_eq!(back, x);
}
