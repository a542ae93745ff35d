use fsad_core::data::{batch_tensor, generate_synthetic_corpus, Image, SynthConfig};
use fsad_core::models::checkpoint::blob_path;
use fsad_core::models::{
    discriminate_prior, load_checkpoint, save_checkpoint, sin_score, ModelBundle, Network, LOCAL_CHANNELS,
    LOCAL_SIDE, PROB_EPS,
};
use fsad_core::nn::{Mode, Parameterized, Tensor};
use fsad_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn frames(n: usize, seed: u64) -> Vec<Image> {
    let cfg = SynthConfig { n_patients: 1, frames_per_patient: n, rng_seed: seed, ..Default::default() };
    generate_synthetic_corpus(&cfg).unwrap().into_iter().map(|f| f.pixels).collect()
}

fn batch(imgs: &[Image]) -> Tensor<f32> {
    batch_tensor(&imgs.iter().collect::<Vec<_>>()).unwrap()
}

#[test]
fn encoder_shape_chain() {
    let mut b = ModelBundle::<f32>::new(24, 1);
    for n in [1, 2, 5] {
        let enc = b.encoder.encode(&batch(&frames(n, 2)), Mode::Eval).unwrap();
        assert_eq!(enc.embedding.shape(), [24, n]);
        assert_eq!(enc.local_map.shape(), [LOCAL_CHANNELS, n, LOCAL_SIDE, LOCAL_SIDE]);
        let sides: Vec<usize> = b.encoder.block_shapes().iter().map(|s| s[2]).collect();
        assert_eq!(sides, [32, 16, 8, 4]);
    }
    assert!(matches!(b.encoder.encode(&Tensor::zeros(&[3, 1, 32, 32]), Mode::Eval), Err(Error::Shape(_))));
}

#[test]
fn evaluation_mode_is_pure() {
    let imgs = frames(1, 3);
    let twice = [imgs[0].clone(), imgs[0].clone()];
    let mut b = ModelBundle::<f32>::new(16, 4);
    let before = b.digest(&Network::ALL);
    let e = b.encoder.encode(&batch(&twice), Mode::Eval).unwrap().embedding;
    let z = e.data();
    for r in 0..16 {
        assert_eq!(z[2 * r], z[2 * r + 1]);
    }
    assert_eq!(b.encoder.encode(&batch(&twice), Mode::Eval).unwrap().embedding, e);
    assert_eq!(b.digest(&Network::ALL), before, "evaluation changed batch-norm statistics");
    b.encoder.encode(&batch(&frames(3, 5)), Mode::Train).unwrap();
    assert_ne!(b.digest(&[Network::Encoder]), before);
}

#[test]
fn seeded_initialization_is_reproducible() {
    let x = batch(&frames(2, 6));
    let run = || ModelBundle::<f32>::new(32, 7).encoder.encode(&x, Mode::Eval).unwrap().embedding;
    assert_eq!(run(), run());
    let other = ModelBundle::<f32>::new(32, 8).encoder.encode(&x, Mode::Eval).unwrap().embedding;
    assert_ne!(run(), other);
}

#[test]
fn score_network_heads() {
    let mut b = ModelBundle::<f64>::new(8, 9);
    let e = [0.3, -1.0, 0.2, 0.9, -0.4, 0.0, 1.5, -2.0];
    assert_eq!(sin_score(&mut b.sin, &e).unwrap(), sin_score(&mut b.sin, &e).unwrap());
    b.sin.zero_readout();
    assert_eq!(sin_score(&mut b.sin, &e).unwrap(), 0.0);
}

#[test]
fn prior_discriminator_outputs() {
    let mut b = ModelBundle::<f64>::new(8, 10);
    let huge = [1e6; 8];
    let p = discriminate_prior(&mut b.prior, &huge).unwrap();
    assert!((PROB_EPS..=1.0 - PROB_EPS).contains(&p));
    let neg = discriminate_prior(&mut b.prior, &[-1e6; 8]).unwrap();
    assert!((PROB_EPS..=1.0 - PROB_EPS).contains(&neg));
    b.prior.zero_out();
    assert_eq!(discriminate_prior(&mut b.prior, &huge).unwrap(), 0.5);
}

#[test]
fn seeded_heads_match_pinned_values() {
    let x = batch(&frames(2, 11));
    let mut b = ModelBundle::<f32>::new(32, 12);
    let z = b.encoder.encode(&x, Mode::Eval).unwrap().embedding;
    let col: Vec<f32> = (0..32).map(|r| z.data()[r * 2]).collect();
    let s = sin_score(&mut b.sin, &col).unwrap();
    let p = discriminate_prior(&mut b.prior, &col).unwrap();
    let pinned = [GOLDEN_Z0, GOLDEN_Z1, GOLDEN_SIN, GOLDEN_PRIOR];
    for (got, want) in [col[0], col[1], s, p].into_iter().zip(pinned) {
        assert!((got - want).abs() <= 1e-5 * want.abs().max(1.0), "{got:e} vs pinned {want:e}");
    }
}

const GOLDEN_Z0: f32 = 3.706373e-1;
const GOLDEN_Z1: f32 = 3.8979113e-1;
const GOLDEN_SIN: f32 = 1.2234557e-1;
const GOLDEN_PRIOR: f32 = 5.681101e-1;

#[test]
fn checkpoint_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut b = ModelBundle::<f32>::new(16, 13);
    b.encoder.encode(&batch(&frames(3, 14)), Mode::Train).unwrap();
    b.state.encoder_trained = true;
    b.state.threshold = Some(0.125);
    let path = dir.path().join("ckpt.json");
    let manifest = save_checkpoint(&b, "abc", &path).unwrap();
    let (back, read) = load_checkpoint(&path).unwrap();
    assert_eq!(read, manifest);
    assert_eq!(back.digest(&Network::ALL), b.digest(&Network::ALL));
    assert_eq!(back.state, b.state);
    assert_eq!(back.trainable_len(), b.trainable_len());

    let copy = dir.path().join("again.json");
    save_checkpoint(&back, "abc", &copy).unwrap();
    assert_eq!(std::fs::read(blob_path(&path)).unwrap(), std::fs::read(blob_path(&copy)).unwrap());

    let mut bytes = std::fs::read(blob_path(&path)).unwrap();
    bytes[10] ^= 1;
    std::fs::write(blob_path(&path), bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Contract(_))));
    assert!(matches!(load_checkpoint(&dir.path().join("none.json")), Err(Error::MissingInput(_))));
}

/// Fixed random weights that turn a network output into a scalar head.
fn head_weights(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Forward pass of one network followed by a fixed linear head. With
/// `backprop` the head's gradient is pushed back into the parameters.
fn network_head(b: &mut ModelBundle<f64>, net: Network, x: &Tensor<f64>, w: &[Vec<f64>], backprop: bool) -> f64 {
    let z = b.embed_dim;
    let n = x.dim(1);
    match net {
        Network::Encoder => {
            let e = b.encoder.encode(x, Mode::Train).unwrap();
            if backprop {
                let d_emb = Tensor::from_vec(e.embedding.shape(), w[0].clone());
                let d_map = Tensor::from_vec(e.local_map.shape(), w[1].clone());
                b.encoder.backward(&d_emb, Some(&d_map));
            }
            dot(e.embedding.data(), &w[0]) + dot(e.local_map.data(), &w[1])
        }
        Network::GlobalDiscriminator | Network::LocalDiscriminator => {
            let map = Tensor::from_vec(&[LOCAL_CHANNELS, n, LOCAL_SIDE, LOCAL_SIDE], w[2].clone());
            let pos = Tensor::from_vec(&[z, n], w[3].clone());
            let neg = Tensor::from_vec(&[z, n], w[4].clone());
            let s = if net == Network::GlobalDiscriminator {
                b.global.score_pairs(&map, &pos, &neg).unwrap()
            } else {
                b.local.score_pairs(&map, &pos, &neg).unwrap()
            };
            let (wp, wn) = w[5].split_at(s.positive.len());
            let (wn, _) = wn.split_at(s.negative.len());
            if backprop {
                if net == Network::GlobalDiscriminator {
                    b.global.backward(wp, wn);
                } else {
                    b.local.backward(wp, wn);
                }
            }
            dot(&s.positive, wp) + dot(&s.negative, wn)
        }
        Network::PriorDiscriminator => {
            let v = Tensor::from_vec(&[z, n], w[3].clone());
            let logits = b.prior.logits(&v).unwrap();
            if backprop {
                b.prior.backward(&w[5][..n]);
            }
            dot(&logits, &w[5][..n])
        }
        Network::ScoreNetwork => {
            let v = Tensor::from_vec(&[z, n], w[3].clone());
            let s = b.sin.score(&v, Mode::Train).unwrap();
            if backprop {
                b.sin.backward(&w[5][..n]);
            }
            dot(&s, &w[5][..n])
        }
    }
}

#[test]
fn gradient_flow_per_network() {
    let (z, n) = (32, 3);
    let imgs = frames(n, 21);
    let x: Tensor<f64> = batch_tensor(&imgs.iter().collect::<Vec<_>>()).unwrap();
    let base = ModelBundle::<f64>::new(z, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let regions = LOCAL_SIDE * LOCAL_SIDE;
    let w = vec![
        head_weights(z * n, &mut rng),
        head_weights(LOCAL_CHANNELS * n * regions, &mut rng),
        head_weights(LOCAL_CHANNELS * n * regions, &mut rng),
        head_weights(z * n, &mut rng),
        head_weights(z * n, &mut rng),
        head_weights(2 * n * regions * n, &mut rng),
    ];
    // Leaky rectifiers make the head piecewise smooth; a step this large can
    // straddle a kink, in which case the difference quotient is off even
    // though backpropagation is exact.
    let h = 1e-3;
    for net in Network::ALL {
        let mut graded = base.clone();
        network_head(&mut graded, net, &x, &w, true);
        let coords: Vec<(usize, usize)> = base
            .network(net)
            .iter()
            .enumerate()
            .filter(|(_, p)| p.trainable)
            .flat_map(|(i, p)| (0..p.len()).map(move |j| (i, j)))
            .collect();
        for _ in 0..10 {
            let (pi, j) = coords[rng.gen_range(0..coords.len())];
            let eval = |by: f64| {
                let mut b = base.clone();
                b.network_mut(net)[pi].value[j] += by;
                network_head(&mut b, net, &x, &w, false)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = graded.network(net)[pi].grad[j];
            let scale = analytic.abs().max(numeric.abs());
            let err = if scale < 1e-10 { 0.0 } else { (analytic - numeric).abs() / scale };
            let name = &base.network(net)[pi].name;
            assert!(err < 1e-3, "{net:?} {name}[{j}]: backprop {analytic:e} vs numeric {numeric:e}");
        }
    }
}
