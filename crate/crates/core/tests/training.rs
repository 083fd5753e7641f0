use gda_hin::extractor::HgtConfig;
use gda_hin::hin::{
    generate_synthetic_pair, restrict_to_shared, Domain, DomainPair, Laplacian, LaplacianBlock,
    SyntheticConfig,
};
use gda_hin::trainer::{
    accuracy, classifier_loss, evaluate, phase1_loss, phase2_loss, train, train_phase1,
    train_phase2, Ablation, Checkpoint, LossComponents, Model, Phase, PseudoLabelSet, TrainConfig,
    Trainer,
};
use gda_hin::{Error, Matrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_pair(seed: u64) -> DomainPair {
    let cfg = SyntheticConfig {
        papers: 40,
        authors: 24,
        venues: 6,
        source_private: 15,
        target_private: 12,
        dim_paper: 6,
        dim_author: 6,
        dim_venue: 6,
        dim_source_private: 5,
        dim_target_private: 4,
        ..SyntheticConfig::default()
    };
    generate_synthetic_pair(&cfg, seed).unwrap()
}

fn tiny_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs_phase1: epochs,
        epochs_phase2: epochs,
        hgt: HgtConfig {
            num_layers: 2,
            num_heads: 2,
            hidden_dim: 8,
            dropout: 0.1,
        },
        disc_hidden: 8,
        pseudo_threshold: 0.3,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    }
}

fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn comps(cls: f64, recon1: f64, recon2: f64, nda1: f64, nda2: f64, da: f64) -> LossComponents {
    LossComponents {
        cls,
        recon1,
        recon2,
        nda1,
        nda2,
        da,
    }
}

fn unit_weights() -> TrainConfig {
    TrainConfig {
        alpha: 1.0,
        beta: 1.0,
        gamma: 1.0,
        ..TrainConfig::default()
    }
}

#[test]
fn phase_losses_are_weighted_sums() {
    let c1 = comps(1.0, 0.5, 0.0, 0.2, 0.0, 0.3);
    assert!((phase1_loss(&c1, &unit_weights()) - 2.0).abs() < 1e-12);
    let zero = TrainConfig {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        ..TrainConfig::default()
    };
    assert_eq!(phase1_loss(&c1, &zero), 1.0);
    assert_eq!(
        phase1_loss(&LossComponents::default(), &unit_weights()),
        0.0
    );

    // (cls, recon1, recon2, nda, da) = (1, 0.5, 0.5, 0.4, 0.3) sums to 2.7
    let c2 = comps(1.0, 0.5, 0.5, 0.25, 0.15, 0.3);
    assert!((phase2_loss(&c2, &unit_weights()) - 2.7).abs() < 1e-12);
    let with_recon2_off = comps(1.0, 0.5, 0.0, 0.2, 0.0, 0.3);
    assert_eq!(
        phase2_loss(&with_recon2_off, &unit_weights()),
        phase1_loss(&with_recon2_off, &unit_weights())
    );
    let alpha2 = TrainConfig {
        alpha: 2.0,
        ..unit_weights()
    };
    let gap = phase2_loss(&c2, &alpha2) - phase2_loss(&c2, &unit_weights());
    assert!((gap - (c2.recon1 + c2.recon2)).abs() < 1e-12);
}

#[test]
fn classifier_loss_examples() {
    let none: [(&Matrix, &LaplacianBlock); 0] = [];
    let confident = Matrix::from_shape_vec((1, 4), vec![800.0, 0.0, 0.0, 0.0]).unwrap();
    assert!(classifier_loss(&confident, &[0], &none, 0.0).unwrap().abs() < 1e-12);
    let uniform = Matrix::zeros((1, 4));
    assert!((classifier_loss(&uniform, &[2], &none, 0.0).unwrap() - 4f64.ln()).abs() < 1e-12);

    // cross-entropy ln 4 plus ζ·tr(HᵀLH) with tr = 2: a single unit edge,
    // h = (1, 0) gives (1 − 0)² = 1 per column over two columns.
    let lap = LaplacianBlock::new(Laplacian::from_edges(2, [(0, 1, 1.0)]), Laplacian::zeros(0));
    let h = Matrix::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
    let v = classifier_loss(&uniform, &[2], &[(&h, &lap)], 0.25).unwrap();
    assert!((v - (4f64.ln() + 0.5)).abs() < 1e-12);

    assert!(matches!(
        classifier_loss(&uniform, &[4], &none, 0.0),
        Err(Error::Contract(_))
    ));
}

#[test]
fn logged_totals_match_weighted_components() {
    let pair = tiny_pair(1);
    let cfg = TrainConfig {
        alpha: 0.7,
        beta: 0.3,
        gamma: 0.2,
        ..tiny_config(5)
    };
    let out = train(&pair, &cfg, false).unwrap();
    assert_eq!(out.trace.len(), 10);
    for r in &out.trace {
        let want = match r.phase {
            Phase::One => phase1_loss(&r.components, &cfg),
            Phase::Two => phase2_loss(&r.components, &cfg),
        };
        assert!((r.total - want).abs() < 1e-6, "{r:?}");
    }
    assert!(out
        .trace
        .iter()
        .any(|r| r.phase == Phase::Two && r.components.recon2 > 0.0));
}

#[test]
fn same_seed_same_trace() {
    let pair = tiny_pair(2);
    let a = train(&pair, &tiny_config(6), false).unwrap();
    let b = train(&pair, &tiny_config(6), false).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model.store, b.model.store);
    let other = TrainConfig {
        seed: 1,
        ..tiny_config(6)
    };
    assert_ne!(train(&pair, &other, false).unwrap().trace, a.trace);
}

#[test]
fn zero_epochs_keep_the_initialisation() {
    let pair = tiny_pair(3);
    let cfg = tiny_config(0);
    let p1 = train_phase1(&pair, &cfg).unwrap();
    assert!(p1.trace.is_empty());
    let fresh = Model::build(
        &restrict_to_shared(&pair.without_target_labels()),
        &cfg,
        &mut init_rng(cfg.seed),
    )
    .unwrap();
    assert_eq!(
        p1.target_probs,
        fresh.predict_proba(Domain::Target).unwrap()
    );

    // phase II with no steps: phase I tensors carried over, private ones added
    let trained = train_phase1(&pair, &tiny_config(3)).unwrap();
    let p2 = train_phase2(&pair, &trained, &cfg).unwrap();
    assert!(p2.trace.is_empty());
    for (name, value) in trained.model.store.iter() {
        let id = p2.model.store.get_id(name).unwrap();
        assert_eq!(p2.model.store.value(id), value, "{name}");
    }
    assert!(p2.model.store.len() > trained.model.store.len());
    assert!(p2.model.store.get_id("completion.T~F.w_hat").is_some());
}

#[test]
fn w_s_phase_two_is_phase_one_training_with_pseudo_labels() {
    let pair = tiny_pair(4);
    let cfg = TrainConfig {
        ablation: Ablation::WS,
        ..tiny_config(5)
    };
    let p1 = train_phase1(&pair, &cfg).unwrap();
    let p2 = train_phase2(&pair, &p1, &cfg).unwrap();
    assert!(!p2.pseudo.is_empty());
    for r in &p2.trace {
        assert_eq!((r.components.recon2, r.components.nda2), (0.0, 0.0));
    }

    // Same labelled set and dropout stream, driven by the phase-one objective.
    let restricted = restrict_to_shared(&pair.without_target_labels());
    let mut model = Model::build(&restricted, &cfg, &mut init_rng(cfg.seed)).unwrap();
    model.store.warm_start_from(&p1.model.store);
    let mut dropout = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout.set_stream(3);
    let mut t = Trainer::new(
        model,
        Phase::One,
        p2.pseudo.clone(),
        cfg.epochs_phase2,
        dropout,
    );
    let trace = t.run(cfg.epochs_phase2).unwrap();
    for (a, b) in trace.iter().zip(&p2.trace) {
        assert_eq!(a.components, b.components);
        assert_eq!(a.total, b.total);
    }
    assert_eq!(t.model.store, p2.model.store);
}

#[test]
fn one_step_updates_agree_between_objectives_without_private_pairs() {
    let pair = restrict_to_shared(&tiny_pair(5).without_target_labels());
    let cfg = tiny_config(1);
    let pseudo = PseudoLabelSet {
        labels: vec![
            gda_hin::trainer::PseudoLabel {
                node: 0,
                class: 1,
                confidence: 0.95,
            },
            gda_hin::trainer::PseudoLabel {
                node: 3,
                class: 2,
                confidence: 0.92,
            },
        ],
    };
    let run = |phase| {
        let model = Model::build(&pair, &cfg, &mut init_rng(7)).unwrap();
        let mut t = Trainer::new(
            model,
            phase,
            pseudo.clone(),
            1,
            ChaCha8Rng::seed_from_u64(8),
        );
        t.step().unwrap();
        t.model.store
    };
    assert_eq!(run(Phase::One), run(Phase::Two));
}

#[test]
fn zero_shift_training_beats_chance_by_thirty_points() {
    let syn = SyntheticConfig {
        shift: 0.0,
        density: 1.0,
        ..SyntheticConfig::default()
    };
    let pair = generate_synthetic_pair(&syn, 0).unwrap();
    let cfg = TrainConfig {
        epochs_phase2: 0,
        ..TrainConfig::default()
    };
    let p1 = train_phase1(&pair, &cfg).unwrap();
    let acc = evaluate(&p1.model, &pair).unwrap();
    assert!(acc >= 0.25 + 0.30, "accuracy {acc}");
}

#[test]
fn target_labels_never_reach_training() {
    let pair = tiny_pair(6);
    let mut scrambled = pair.clone();
    if let Some(l) = scrambled.target.labels.as_mut() {
        l.iter_mut().for_each(|y| *y = (*y + 1) % 4);
    }
    let a = train(&pair, &tiny_config(4), false).unwrap();
    let b = train(&scrambled, &tiny_config(4), false).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.model.store, b.model.store);
    let mut unlabelled = pair.clone();
    unlabelled.target.labels = None;
    assert_eq!(
        train(&unlabelled, &tiny_config(4), false).unwrap().trace,
        a.trace
    );
}

#[test]
fn evaluate_needs_labels_and_counts_correctly() {
    let pair = tiny_pair(7);
    let out = train(&pair, &tiny_config(2), false).unwrap();
    let acc = evaluate(&out.model, &pair).unwrap();
    let predicted = out.model.predict(Domain::Target).unwrap();
    let labels = pair.target.labels.as_ref().unwrap();
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    assert_eq!(acc, hits as f64 / labels.len() as f64);
    assert_eq!(accuracy(labels, labels).unwrap(), 1.0);
    let mut blind = pair.clone();
    blind.target.labels = None;
    assert!(matches!(
        evaluate(&out.model, &blind),
        Err(Error::Contract(_))
    ));
}

#[test]
fn checkpoint_round_trip_restores_predictions() {
    let pair = tiny_pair(8);
    let dir = tempfile::tempdir().unwrap();
    for phase_one_only in [true, false] {
        let out = train(&pair, &tiny_config(3), phase_one_only).unwrap();
        let path = dir.path().join("ckpt.txt");
        Checkpoint::from_model(&out.model, &pair.schema, out.phase)
            .save(&path)
            .unwrap();
        let restored = Checkpoint::load(&path).unwrap().restore(&pair).unwrap();
        assert_eq!(restored.store, out.model.store);
        assert_eq!(
            restored.predict_proba(Domain::Target).unwrap(),
            out.model.predict_proba(Domain::Target).unwrap()
        );
    }
    let mut other = pair.clone();
    other.schema.num_classes = 5;
    let out = train(&pair, &tiny_config(1), true).unwrap();
    let ckpt = Checkpoint::from_model(&out.model, &pair.schema, out.phase);
    assert!(matches!(ckpt.restore(&other), Err(Error::Schema(_))));
}

#[test]
fn non_finite_loss_reports_divergence() {
    let pair = restrict_to_shared(&tiny_pair(9).without_target_labels());
    let cfg = tiny_config(1);
    let mut model = Model::build(&pair, &cfg, &mut init_rng(0)).unwrap();
    let id = model.store.get_id("cls.w").unwrap();
    model.store.value_mut(id)[[0, 0]] = f64::NAN;
    let mut t = Trainer::new(
        model,
        Phase::One,
        PseudoLabelSet::default(),
        1,
        ChaCha8Rng::seed_from_u64(0),
    );
    assert!(matches!(
        t.step(),
        Err(Error::Diverged { phase: 1, step: 0 })
    ));
}
