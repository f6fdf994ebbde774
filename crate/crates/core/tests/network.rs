use wfcodec_core::losses::{kl_divergence, l1_recon, wl_loss};
use wfcodec_core::net::{init_weights, sample_latent, GaussianLatent, ModelConfig, WeightStore, WfVae};
use wfcodec_core::{ChunkPlan, Rng, Shape, VideoTensor};

fn config() -> ModelConfig {
    ModelConfig::new(8, 8, 4).unwrap().with_blocks(1)
}

fn model(seed: u64) -> WfVae {
    WfVae::new(config(), init_weights(&config(), &mut Rng::new(seed)).unwrap()).unwrap()
}

fn clip(seed: u64, t: usize) -> VideoTensor {
    VideoTensor::random_normal(&mut Rng::new(seed), Shape::new(3, t, 16, 16).unwrap(), 0.0, 1.0).unwrap()
}

#[test]
fn weight_file_roundtrip_gives_identical_forward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.wfwt");
    let m = model(42);
    m.weights().save(&path).unwrap();
    let loaded = WfVae::new(config(), WeightStore::load(&path).unwrap()).unwrap();
    let v = clip(1, 9);
    let a = m.forward(&v, &mut Rng::new(5), &ChunkPlan::Direct).unwrap();
    let b = loaded.forward(&v, &mut Rng::new(5), &ChunkPlan::Direct).unwrap();
    assert_eq!(a.reconstruction, b.reconstruction);
    assert_eq!(a.latent, b.latent);
}

#[test]
fn forward_is_deterministic_and_feeds_losses() {
    let m = model(3);
    let v = clip(2, 9);
    let a = m.forward(&v, &mut Rng::new(9), &ChunkPlan::Direct).unwrap();
    let b = m.forward(&v, &mut Rng::new(9), &ChunkPlan::Direct).unwrap();
    assert_eq!(a.reconstruction, b.reconstruction);
    assert_eq!(a.reconstruction.shape(), v.shape());
    assert!(l1_recon(&v, &a.reconstruction).unwrap().is_finite());
    assert!(wl_loss(&a.w2_hat, &a.w2, &a.w3_hat, &a.w3).unwrap() >= 0.0);
    assert!(kl_divergence(&a.latent).unwrap() >= 0.0);
    let c = m.forward(&v, &mut Rng::new(10), &ChunkPlan::Direct).unwrap();
    assert_ne!(a.reconstruction, c.reconstruction);
}

#[test]
fn streamed_forward_matches_direct() {
    let m = model(4);
    let v = clip(3, 13);
    let d = m.forward(&v, &mut Rng::new(1), &ChunkPlan::Direct).unwrap();
    let s = m.forward(&v, &mut Rng::new(1), &ChunkPlan::Explicit(vec![1, 3, 5, 4])).unwrap();
    assert_eq!(s.reconstruction, d.reconstruction);
    assert_eq!(s.w2_hat, d.w2_hat);
    assert_eq!(s.w3_hat, d.w3_hat);
}

#[test]
fn first_reconstructed_frame_is_causal() {
    let m = model(5);
    let v = clip(4, 9);
    let mut u = v.clone();
    for t in 1..9 {
        u.set(0, t, 3, 3, 10.0);
        u.set(2, t, 7, 1, -4.0);
    }
    let a = m.forward(&v, &mut Rng::new(2), &ChunkPlan::Direct).unwrap();
    let b = m.forward(&u, &mut Rng::new(2), &ChunkPlan::Direct).unwrap();
    assert_eq!(a.reconstruction.slice_time(0, 1).unwrap(), b.reconstruction.slice_time(0, 1).unwrap());
    assert_ne!(a.reconstruction, b.reconstruction);
}

#[test]
fn sample_variance_matches_logvar() {
    let logvar = 0.8f32;
    let g = GaussianLatent::new(
        VideoTensor::new(1, 1, 1, 1, 0.3).unwrap(),
        VideoTensor::new(1, 1, 1, 1, logvar).unwrap(),
    )
    .unwrap();
    let mut rng = Rng::new(11);
    let draws: Vec<f64> = (0..10_000).map(|_| sample_latent(&g, &mut rng).unwrap().data()[0] as f64).collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    let expect = (logvar as f64).exp();
    assert!((var - expect).abs() / expect < 0.05, "{var} vs {expect}");
}

#[test]
fn missing_weight_is_reported() {
    let store = init_weights(&config(), &mut Rng::new(1)).unwrap();
    let mut partial = WeightStore::new();
    for (name, p) in store.iter().filter(|(n, _)| *n != "dec.up1.weight") {
        partial.insert(name, p.dims.clone(), p.data.clone()).unwrap();
    }
    let err = WfVae::new(config(), partial).unwrap_err();
    assert!(err.to_string().contains("dec.up1.weight"));
}
