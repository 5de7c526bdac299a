use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vitderm_core::model::{HeadInput, ViTConfig, ViTModel};
use vitderm_core::tensor::{Graph, Mode, Tensor};

fn forward_shapes(config: ViTConfig, batch: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>, usize) {
    let s = config.image_size;
    let model = ViTModel::init(config, 0).unwrap();
    let images = Tensor::full(&[batch, s, s, 3], 0.5);
    let mut g = Graph::new();
    let b = model.bind(&mut g, |_| false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model
        .forward(&mut g, &b, &images, Mode::Eval, true, &mut rng)
        .unwrap();
    let probs = g.value(out.probs);
    for row in probs.data().chunks(7) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    (
        g.shape(out.tokens).to_vec(),
        g.shape(out.head_input).to_vec(),
        probs.shape().to_vec(),
        out.attention.len(),
    )
}

#[test]
fn small_config_tensor_shapes() {
    let mut c = ViTConfig::tiny();
    c.image_size = 32;
    c.patch_size = 16;
    c.depth = 2;
    let (tokens, head, probs, att) = forward_shapes(c.clone(), 3);
    assert_eq!(tokens, vec![3, 5, 8]);
    assert_eq!(head, vec![3, 5 * 8]);
    assert_eq!(probs, vec![3, 7]);
    assert_eq!(att, 3);

    c.head_input = HeadInput::ClassToken;
    let (_, head, _, _) = forward_shapes(c, 2);
    assert_eq!(head, vec![2, 8]);
}

#[test]
#[ignore = "full L16 forward pass; slow and memory-heavy"]
fn l16_forward_shapes() {
    let (tokens, head, probs, _) = forward_shapes(ViTConfig::preset("L16").unwrap(), 1);
    assert_eq!(tokens, vec![1, 197, 1024]);
    assert_eq!(head, vec![1, 197 * 1024]);
    assert_eq!(probs, vec![1, 7]);
}
