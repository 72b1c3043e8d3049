use mi_updates::data::*;
use mi_updates::seed::rng;
use proptest::prelude::*;
use rand::Rng;

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    (1usize..6, 1usize..5, 0usize..30, any::<u64>()).prop_map(|(dim, classes, n, seed)| {
        let mut r = rng(seed);
        let features = (0..n * dim).map(|_| r.random_range(-1e6..1e6)).collect();
        let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
        Dataset::from_flat(features, dim, labels, classes, format!("tag-{seed}")).unwrap()
    })
}

proptest! {
    #[test]
    fn snapshot_round_trip(d in dataset_strategy()) {
        let back = Dataset::from_snapshot_bytes(&d.to_snapshot_bytes()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn json_round_trip(d in dataset_strategy()) {
        let back: Dataset = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn mixture_origins_follow_alpha(seed in any::<u64>(), alpha in 0.0f64..=1.0) {
        let src = ClassGaussians::random(3, 2, 1.0, 1.0, 1).unwrap();
        let tgt = ClassGaussians::random(3, 2, 1.0, 1.0, 2).unwrap();
        let mix = MixtureSpec::new(&src, &tgt, alpha).unwrap();
        let (data, origins) = mixture_sample_traced(&mix, 2000, seed).unwrap();
        prop_assert_eq!(data.len(), 2000);
        let frac = origins.iter().filter(|&&o| o).count() as f64 / 2000.0;
        let se = (alpha * (1.0 - alpha) / 2000.0).sqrt();
        prop_assert!((frac - alpha).abs() <= 5.0 * se + 1e-12);
    }
}

#[test]
fn mixture_boundaries_reproduce_components() {
    let src = ClassGaussians::random(3, 4, 1.0, 1.0, 1).unwrap();
    let tgt = ClassGaussians::random(3, 4, 1.0, 1.0, 2).unwrap();
    let seed = 99;
    let from_src = src.stream(seed).draw(50).unwrap();
    let mix0 = mixture_sample(&MixtureSpec::new(&src, &tgt, 0.0).unwrap(), 50, seed).unwrap();
    assert_eq!(mix0.features(), from_src.features());
    let target_seed = mi_updates::seed::child(seed, mi_updates::seed::stream::TARGET_DATA);
    let from_tgt = tgt.stream(target_seed).draw(50).unwrap();
    let mix1 = mixture_sample(&MixtureSpec::new(&src, &tgt, 1.0).unwrap(), 50, seed).unwrap();
    assert_eq!(mix1.features(), from_tgt.features());
}

#[test]
fn snapshot_file_round_trip() {
    let d = synth_gaussian_classes(
        &[
            GaussianClassSpec { mean: vec![0.0, 0.0], sigma: 1.0, count: 10 },
            GaussianClassSpec { mean: vec![1.0, 1.0], sigma: 1.0, count: 10 },
        ],
        7,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.mids");
    d.save_snapshot(&path).unwrap();
    assert_eq!(Dataset::load_snapshot(&path).unwrap(), d);
    assert!(Dataset::load_snapshot(dir.path().join("missing")).is_err());
}

#[test]
fn csv_loader_is_pure_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    std::fs::write(&path, "f1,label,f2\n0.5,cat,1\n-1,dog,2\n3,cat,0.25\n2,bird,1\n").unwrap();
    let a = load_csv(&path, "label").unwrap();
    let b = load_csv(&path, "label").unwrap();
    assert_eq!(a, b);
    assert_eq!(a.labels(), &[0, 1, 0, 2]);
    assert_eq!(a.num_classes(), 3);
    assert_eq!(a.dim(), 2);
    assert_eq!(a.row(2), &[3.0, 0.25]);
}

#[test]
fn idx_loader_scales_pixels() {
    let mut images = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 1];
    images.extend([0u8, 255, 51, 102]);
    let mut labels = vec![0, 0, 8, 1, 0, 0, 0, 2];
    labels.extend([3u8, 1]);
    let d = parse_idx(&images, &labels).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.dim(), 2);
    assert_eq!(d.row(0), &[0.0, 1.0]);
    assert_eq!(d.row(1), &[0.2, 0.4]);
    assert_eq!(d.labels(), &[3, 1]);
    assert!(d.labels().iter().all(|&y| y < d.num_classes()));
}
