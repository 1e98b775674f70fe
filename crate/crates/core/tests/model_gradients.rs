use ocrl_core::autodiff::{grad_check, BoundParams, Tensor};
use ocrl_core::color::ColorSpace;
use ocrl_core::model::{slot_noise, ConvSpec, ModelConfig, SlotModel};

fn tiny_config() -> ModelConfig {
    ModelConfig {
        image_size: 16,
        input_space: ColorSpace::Rgb,
        encoder: vec![ConvSpec::new(8, 3, 1), ConvSpec::new(8, 3, 2)],
        encoder_dim: 16,
        num_slots: 3,
        slot_dim: 16,
        mlp_hidden: 16,
        sa_iterations: 3,
        decoder: vec![ConvSpec::new(8, 3, 2)],
        decoder_out_kernel: 3,
        broadcast_grid: [8, 8],
        target_space: ColorSpace::RgbS,
    }
}

#[test]
fn full_model_matches_finite_differences() {
    let config = tiny_config();
    let model = SlotModel::<f64>::new(config.clone(), 3).unwrap();
    let images = Tensor::<f64>::from_fn(&[2, 16, 16, 3], |i| ((i * 37) % 101) as f64 / 100.0);
    let target = Tensor::<f64>::from_fn(&[2, 16, 16, 4], |i| ((i * 13) % 89) as f64 / 88.0);
    let noise = slot_noise::<f64>(&config, 2, 11);

    let report = grad_check(
        |g, vars| {
            let bound = BoundParams::from_vars(vars.to_vec());
            let x = g.constant(images.clone());
            let n = g.constant(noise.clone());
            let y = g.constant(target.clone());
            let pass = model.forward(g, &bound, x, n)?;
            model.loss(g, pass.combined, y)
        },
        model.params().tensors(),
        64,
        1e-4,
        5,
    )
    .unwrap();
    let worst = report.probes.iter().filter(|p| p.differentiable).max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)).unwrap();
    assert!(
        report.passed(1e-4),
        "max relative error {} at {}",
        report.max_rel_error(),
        model.params().names()[worst.tensor]
    );
}
