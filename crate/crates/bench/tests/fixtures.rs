use wfcodec_bench::{clip, layer_stack, model};
use wfcodec_core::causal::run_layer_stack;
use wfcodec_core::ChunkPlan;

#[test]
fn fixtures_are_consistent() {
    let x = clip(3, 9, 16, 16, 1);
    assert_eq!(x, clip(3, 9, 16, 16, 1));
    let layers = layer_stack(8, 2);
    let d = run_layer_stack(&layers, &x, &ChunkPlan::Direct).unwrap();
    assert_eq!(run_layer_stack(&layers, &x, &ChunkPlan::Canonical(4)).unwrap(), d);
    let m = model(8, 3);
    let v = clip(3, 5, 16, 16, 4);
    assert_eq!(m.encode(&v, &ChunkPlan::Direct).unwrap().latent.shape().time, 2);
}
