use one2all_demo::Demo;

#[test]
fn samples_grow_with_the_factor() {
    let demo = Demo::new(2000, 4, 12, 5).unwrap();
    assert_eq!(demo.points().len(), 4000);
    assert_eq!(demo.prefixes(), 12);
    let mut prev: Vec<u32> = Vec::new();
    for factor in [0.5, 2.0, 8.0, 32.0, 1e9] {
        let s = demo.sample(3, factor).unwrap();
        assert!(prev.iter().all(|i| s.contains(i)));
        prev = s;
    }
    assert_eq!(prev.len(), 2000);
    assert!(demo.sample(3, -1.0).is_err());
    assert!(demo.sample(0, 1.0).is_err());
}

#[test]
fn probabilities_and_scores() {
    let demo = Demo::new(1500, 3, 10, 1).unwrap();
    let pi = demo.probabilities(2).unwrap();
    assert_eq!(pi.len(), 1500);
    assert!(pi.iter().all(|p| *p > 0.0 && *p <= 1.0));
    let scores = demo.prefix_scores();
    assert_eq!(scores.len(), 10);
    let s = demo.sweet_spot();
    assert!((1..=10).contains(&s));
    assert_eq!(demo.centroids(4).unwrap().len(), 8);
}

#[test]
fn cluster_returns_json() {
    let demo = Demo::new(3000, 5, 10, 2).unwrap();
    let text = demo.cluster(5, 0.2).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["centroids"].as_array().unwrap().len(), 10);
    assert!(v["cost"].as_f64().unwrap() > 0.0);
    assert!(!v["report"]["log"].as_array().unwrap().is_empty());
    assert!(demo.cluster(5, 1.5).is_err());
}
