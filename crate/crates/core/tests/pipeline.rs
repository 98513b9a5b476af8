use paas_core::embed::{self, Augment, TrainConfig};
use paas_core::experiment::{self, ExperimentConfig, Method};
use paas_core::svm::SvmModel;
use paas_core::synth::{Channel, DatasetManifest};

fn small_experiment(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig {
        profiles: "builtin:matched-pair".into(),
        width: 32,
        height: 32,
        count_per_profile: 6,
        seed: 4,
        train: TrainConfig {
            epochs: 5,
            learning_rate: 1e-3,
            input_side: 16,
            augment: Augment {
                resize_to: 18,
                crop_to: 16,
                horizontal_flip: true,
            },
            channels: vec![4, 8],
            hidden: 8,
            embedding_dim: 4,
            ..TrainConfig::default()
        },
        channels: vec![Channel::Dolp],
        base_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn reloaded_checkpoints_score_like_the_trained_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_experiment(dir.path());
    experiment::run_synth(&cfg).unwrap();
    let trained = experiment::run_train(&cfg).unwrap();
    let t = &trained[0];

    let (model, train_cfg) = embed::load_embedding(cfg.embed_checkpoint(Channel::Dolp)).unwrap();
    let head = SvmModel::load(cfg.svm_checkpoint(Channel::Dolp)).unwrap();
    assert_eq!(model, t.model);
    assert_eq!(train_cfg, cfg.train);

    let manifest = DatasetManifest::load(cfg.manifest_path()).unwrap();
    let fresh =
        experiment::evaluate_pipeline(&t.model, &cfg.train, &t.head, &manifest, Channel::Dolp)
            .unwrap();
    let loaded =
        experiment::evaluate_pipeline(&model, &train_cfg, &head, &manifest, Channel::Dolp).unwrap();
    assert_eq!(fresh.scores, loaded.scores);

    let rows = experiment::run_eval(&cfg).unwrap();
    assert_eq!(rows.len(), Method::ALL.len());
    let paas = experiment::find_row(&rows, Channel::Dolp, Method::Paas).unwrap();
    assert_eq!(paas.eer, fresh.row.metrics.eer);
}
