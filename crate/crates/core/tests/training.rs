use conceptual_vae::sprite::{generate_dataset, Dataset, DatasetConfig};
use conceptual_vae::tensor::ParamStore;
use conceptual_vae::vae::{train, ArchConfig, Model, ModelKind, Objective, TrainConfig, Trainer};

fn data() -> Dataset {
    let config = DatasetConfig { image_size: 16, train: 16, dev: 8, test: 4, seed: 5, ..DatasetConfig::main() };
    generate_dataset(&config).unwrap()
}

fn model(data: &Dataset) -> Model {
    let arch = ArchConfig { image_size: 16, filters: 4, dense_width: 16, ..ArchConfig::paper() };
    Model::new(ModelKind::Conceptual, arch, data.config.vocabulary(), 1).unwrap()
}

fn config() -> TrainConfig {
    TrainConfig { objective: Objective::Conceptual, epochs: 2, batch_size: 4, seed: 2, ..TrainConfig::default() }
}

/// Names of parameters whose values differ between the two stores.
fn changed(a: &ParamStore, b: &ParamStore) -> Vec<String> {
    a.ids().filter(|&id| a.get(id) != b.get(id)).map(|id| a.name(id).to_string()).collect()
}

#[test]
fn zero_scales_freeze_their_parameter_groups() {
    let data = data();
    let start = model(&data);
    let tc = TrainConfig { prior_lr_scale: 0.0, decoder_lr_scale: 0.0, select_best: false, ..config() };
    let out = train(start.clone(), &data.train, Some(&data.dev), &tc).unwrap();
    let moved = changed(start.params(), out.model.params());
    assert!(moved.iter().any(|n| n.starts_with("enc.")));
    assert!(moved.iter().all(|n| n.starts_with("enc.")), "{moved:?}");
}

#[test]
fn unit_scales_move_every_group() {
    let data = data();
    let start = model(&data);
    let tc = TrainConfig { select_best: false, ..config() };
    let out = train(start.clone(), &data.train, Some(&data.dev), &tc).unwrap();
    let moved = changed(start.params(), out.model.params());
    for group in ["enc.", "dec.", "prior."] {
        assert!(moved.iter().any(|n| n.starts_with(group)), "{group} unchanged");
    }
}

#[test]
fn invalid_scales_are_rejected() {
    for tc in [
        TrainConfig { prior_lr_scale: -1.0, ..config() },
        TrainConfig { decoder_lr_scale: f64::NAN, ..config() },
    ] {
        assert!(tc.validate().is_err());
    }
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let data = data();
    let full = train(model(&data), &data.train, Some(&data.dev), &config()).unwrap();

    let mut first = Trainer::new(model(&data), TrainConfig { epochs: 1, ..config() }).unwrap();
    first.run(&data.train, Some(&data.dev)).unwrap();
    let mut second = Trainer::resume(&first.checkpoint(), config()).unwrap();
    second.run(&data.train, Some(&data.dev)).unwrap();
    let resumed = second.finish();

    assert_eq!(resumed.best_epoch, full.best_epoch);
    assert_eq!(resumed.metrics, full.metrics);
    assert!(changed(full.model.params(), resumed.model.params()).is_empty());
}

#[test]
fn resume_rejects_a_different_config() {
    let data = data();
    let mut t = Trainer::new(model(&data), TrainConfig { epochs: 1, ..config() }).unwrap();
    t.run(&data.train, Some(&data.dev)).unwrap();
    let other = TrainConfig { prior_lr_scale: 0.5, ..config() };
    assert!(Trainer::resume(&t.checkpoint(), other).is_err());
}
