use sonoseg::clvae::{self, PairedData, TrainConfig};
use sonoseg::config::RunConfig;
use sonoseg::dataset::{self, DatasetManifest, Split, MANIFEST_NAME};
use sonoseg::eval;
use sonoseg::simulator::{synth_echo, PointTarget};
use sonoseg::Parallelism;

fn small() -> RunConfig {
    RunConfig {
        n_theta: 15,
        n_phi: 10,
        scenes: 4,
        frames_per_scene: 3,
        ref_bursts: 1,
        width: 10,
        height: 10,
        epochs: 3,
        hidden1: 24,
        hidden2: 12,
        latent_dim: 4,
        ..Default::default()
    }
}

#[test]
fn dataset_train_eval_round_trip() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let m = dataset::gen_dataset(&cfg, 5, dir.path(), Parallelism::Rayon).unwrap();
    assert_eq!(m.entries.len(), 12);

    let reread = DatasetManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
    assert_eq!(reread.entries, m.entries);
    assert_eq!(reread.digest, m.digest);

    let train = m.load_pairs(Split::Train).unwrap();
    let test = m.load_pairs(Split::Test).unwrap();
    assert!(!train.is_empty() && !test.is_empty());
    assert_eq!(train.len() + test.len(), 12);

    let out = tempfile::tempdir().unwrap();
    let tc = cfg.train_config(5);
    let run = clvae::train(&train, &tc, Some(out.path())).unwrap();
    assert_eq!(run.epochs.len(), 3);
    for s in &run.steps {
        assert!(s.identity_error(tc.alpha) <= 1e-12);
    }

    let csv = std::fs::read_to_string(out.path().join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("epoch,l_re,d_kl,l_mse,total"));
    assert_eq!(lines.count(), 3);

    let reloaded = clvae::ModelParams::load(&out.path().join("final.clv")).unwrap();
    let a = eval::miou(&test, &run.params).unwrap();
    let b = eval::miou(&test, &reloaded).unwrap();
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.miou));
    for x in &test.us {
        let p = clvae::infer(&reloaded, x).unwrap();
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }
}

#[test]
fn overfits_a_single_pair() {
    let mut seg = vec![0.0; 64];
    for r in 2..6 {
        for c in 3..6 {
            seg[r * 8 + c] = 1.0;
        }
    }
    let us: Vec<f64> = seg.iter().map(|&v| 0.1 + 0.8 * v).collect();
    let data = PairedData {
        width: 8,
        height: 8,
        seg: vec![seg],
        us: vec![us],
        names: vec!["only".into()],
    };
    let cfg = TrainConfig {
        epochs: 300,
        hidden: [32, 16],
        latent_dim: 4,
        checkpoint_every: 0,
        ..Default::default()
    };
    let run = clvae::train(&data, &cfg, None).unwrap();
    let report = eval::miou(&data, &run.params).unwrap();
    assert_eq!(report.miou, 1.0, "{report:?}");
}

#[test]
fn heatmaps_identical_across_parallelism() {
    let cfg = RunConfig {
        noise_std: 0.01,
        ..Default::default()
    };
    let e = cfg.emission();
    let mut scene = cfg.scene_base();
    scene.points.push(PointTarget::at(-12.0, 20.0, 1.7, 1.0));
    let w = synth_echo(&scene, 0, &e, &cfg.geometry(), 2, 3).unwrap();
    let times = e.emission_times(2);
    let seq = cfg
        .frontend(Parallelism::Sequential)
        .unwrap()
        .heatmaps(&w, &times)
        .unwrap();
    let par = cfg
        .frontend(Parallelism::Rayon)
        .unwrap()
        .heatmaps(&w, &times)
        .unwrap();
    assert_eq!(seq, par);
}

#[test]
fn env_override_reaches_builders() {
    let mut cfg = RunConfig::default();
    cfg.apply_env([("SONOSEG_GRID_N_THETA".to_string(), "17".to_string())])
        .unwrap();
    assert_eq!(cfg.grid().n_theta, 17);
}
