mod common {
    pub mod fusion_grid;
}

use ascnet::fusion::*;
use proptest::prelude::*;

fn pm(systems: &[&[f64]], m: usize) -> ProbMatrix {
    let n = systems[0].len() / m;
    let probs = systems.iter().flat_map(|s| s.iter().copied()).collect();
    ProbMatrix::new(
        probs,
        (0..systems.len()).map(|s| format!("s{s}")).collect(),
        (0..n).map(|i| format!("x{i}")).collect(),
        m,
    )
    .unwrap()
}

fn system(name: &str, ids: &[&str], probs: &[f64], m: usize) -> SystemPredictions {
    SystemPredictions {
        name: name.into(),
        sample_ids: ids.iter().map(|s| s.to_string()).collect(),
        devices: vec!["A".into(); ids.len()],
        truth: vec![0; ids.len()],
        probs: probs.to_vec(),
        n_classes: m,
    }
}

#[test]
fn single_system_is_identity() {
    let p = [0.1, 0.2, 0.7, 0.0, 0.5, 0.5];
    assert_eq!(prod_fusion(&pm(&[&p], 3)), p.to_vec());
}

#[test]
fn two_system_example() {
    let f = prod_fusion(&pm(&[&[0.6, 0.4], &[0.5, 0.5]], 2));
    assert!((f[0] - 0.15).abs() < 1e-12 && (f[1] - 0.10).abs() < 1e-12, "{f:?}");
    assert_eq!(predict_label(&f, 2), vec![0]);
}

#[test]
fn uniform_systems() {
    let u = [0.1; 10];
    for v in prod_fusion(&pm(&[&u, &u], 10)) {
        assert!((v - 0.005).abs() < 1e-12);
    }
}

#[test]
fn ties_go_to_lowest_index() {
    assert_eq!(predict_label(&[0.2, 0.2, 0.1], 3), vec![0]);
    assert_eq!(predict_label(&[0.1, 0.3, 0.3], 3), vec![1]);
    // 0.1 · 0.4 and 0.2 · 0.2 are equal as rationals.
    let f = prod_fusion(&pm(&[&[0.2, 0.1, 0.6, 0.1], &[0.2, 0.4, 0.05, 0.35]], 4));
    assert_eq!(predict_label(&f, 4), vec![0]);
}

#[test]
fn zeros_are_floored() {
    let f = prod_fusion(&pm(&[&[1.0, 0.0], &[0.0, 1.0]], 2));
    assert!(f.iter().all(|&v| v > 0.0 && v < 1e-11));
    assert_eq!(predict_label(&f, 2), vec![0]);
}

#[test]
fn invalid_rows_rejected() {
    let bad = ProbMatrix::new(vec![0.5, 0.6], vec!["a".into()], vec!["x".into()], 2);
    assert!(matches!(bad, Err(FusionError::InvalidProbabilities(_))));
    let neg = ProbMatrix::new(vec![1.5, -0.5], vec!["a".into()], vec!["x".into()], 2);
    assert!(matches!(neg, Err(FusionError::InvalidProbabilities(_))));
}

#[test]
fn device_accuracy_rows() {
    let devices: Vec<String> = ["A", "A", "A", "A", "B", "B"].iter().map(|s| s.to_string()).collect();
    let r = accuracy_by_device(&[0, 1, 2, 0, 1, 0], &[0, 1, 2, 1, 1, 1], &devices, 3).unwrap();
    assert_eq!(r.per_device_acc, vec![("A".to_string(), 75.0), ("B".to_string(), 50.0)]);
    assert_eq!(r.average_acc, 62.5);
    let row_sums: Vec<u64> = r.confusion.iter().map(|row| row.iter().sum()).collect();
    assert_eq!(row_sums, vec![1, 4, 1]);
    assert_eq!(r.confusion[1][0], 2);
}

#[test]
fn all_correct_is_hundred() {
    let devices: Vec<String> = ["S2", "C"].iter().map(|s| s.to_string()).collect();
    let r = accuracy_by_device(&[3, 4], &[3, 4], &devices, 10).unwrap();
    assert!(r.per_device_acc.iter().all(|d| d.1 == 100.0));
    assert_eq!(r.average_acc, 100.0);
}

#[test]
fn report_row_order() {
    let order = ["S6", "zz", "B", "S1", "A", "S4", "C", "S3", "S5", "S2"];
    let devices: Vec<String> = order.iter().map(|s| s.to_string()).collect();
    let r = accuracy_by_device(&[0; 10], &[0; 10], &devices, 2).unwrap();
    let names: Vec<&str> = r.per_device_acc.iter().map(|d| d.0.as_str()).collect();
    assert_eq!(names, ["A", "B", "C", "S1", "S2", "S3", "S4", "S5", "S6", "zz"]);
    let text = r.to_text("t");
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("Average"));
    assert!(r.to_csv().ends_with("Average,100.0000\n"));
}

#[test]
fn length_mismatch_errors() {
    assert!(matches!(accuracy_by_device(&[0], &[0, 1], &["A".into()], 2), Err(FusionError::LengthMismatch(_))));
    let a = system("a", &["x", "y"], &[0.5, 0.5, 0.5, 0.5], 2);
    let b = system("b", &["p", "q"], &[0.5, 0.5, 0.5, 0.5], 2);
    assert!(matches!(ProbMatrix::from_systems(&[a.clone(), b]), Err(FusionError::LengthMismatch(_))));
    let c = system("c", &["x"], &[0.5, 0.5], 2);
    assert!(matches!(ProbMatrix::from_systems(&[a, c]), Err(FusionError::LengthMismatch(_))));
}

#[test]
fn systems_align_by_sample_id() {
    let a = system("a", &["x", "y"], &[0.9, 0.1, 0.2, 0.8], 2);
    let b = system("b", &["y", "x"], &[0.3, 0.7, 0.6, 0.4], 2);
    let m = ProbMatrix::from_systems(&[a, b]).unwrap();
    assert_eq!(m.row(1, 0), &[0.6, 0.4]);
    assert_eq!(m.row(1, 1), &[0.3, 0.7]);
}

#[test]
fn csv_round_trip_and_single_file_fusion() {
    let mut a = system("a", &["x", "y", "z"], &[0.9, 0.1, 0.2, 0.8, 0.55, 0.45], 2);
    a.devices = vec!["A".into(), "S1".into(), "S1".into()];
    a.truth = vec![0, 1, 1];
    let back = SystemPredictions::from_csv("a", &a.to_csv()).unwrap();
    assert_eq!(back.sample_ids, a.sample_ids);
    for (x, y) in back.probs.iter().zip(&a.probs) {
        assert!((x - y).abs() < 1e-9);
    }
    let (_, fused) = fuse_systems(std::slice::from_ref(&back)).unwrap();
    let direct = accuracy_by_device(&predict_label(&back.probs, 2), &back.truth, &back.devices, 2).unwrap();
    assert_eq!(fused, direct);
    assert!(SystemPredictions::from_csv("bad", "sample_id,device_id,true_label,p_1,p_0\n").is_err());
}

#[test]
fn exhaustive_grid_matches_exact_arithmetic() {
    let out = common::fusion_grid::run();
    assert_eq!(out.value_triples, 9261);
    assert!(out.max_value_err < 1e-9, "{out:?}");
    assert_eq!(out.argmax_mismatches, 0, "{out:?}");
    assert_eq!(out.argmax_points, 1771 * 1772 * 1773 / 6);
    println!("{out:?}");
}

fn rows(s: usize, n: usize, m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, s * n * m).prop_map(move |v| {
        v.chunks(m).flat_map(|r| {
            let t: f64 = r.iter().sum();
            r.iter().map(move |x| x / t).collect::<Vec<_>>()
        }).collect()
    })
}

fn matrix(v: Vec<f64>, s: usize, n: usize, m: usize) -> ProbMatrix {
    ProbMatrix::new(v, (0..s).map(|i| format!("s{i}")).collect(), (0..n).map(|i| format!("{i}")).collect(), m).unwrap()
}

proptest! {
    #[test]
    fn permutation_invariant(v in rows(3, 4, 5), perm in Just(vec![2usize, 0, 1]).prop_shuffle()) {
        let a = matrix(v.clone(), 3, 4, 5);
        let mut w = Vec::new();
        for &s in &perm {
            w.extend_from_slice(&v[s * 20..(s + 1) * 20]);
        }
        let b = matrix(w, 3, 4, 5);
        for (x, y) in prod_fusion(&a).iter().zip(prod_fusion(&b)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn log_space_agrees_with_direct_product(v in rows(4, 3, 6)) {
        let pm = matrix(v.clone(), 4, 3, 6);
        let f = prod_fusion(&pm);
        for i in 0..3 {
            for k in 0..6 {
                let direct: f64 = (0..4).map(|s| v[(s * 3 + i) * 6 + k]).product::<f64>() / 4.0;
                prop_assert!((f[i * 6 + k] - direct).abs() <= 1e-9 * direct);
            }
        }
    }

    #[test]
    fn argmax_ignores_positive_rescaling(v in rows(3, 5, 4), c in 1e-3f64..1e3) {
        let f = prod_fusion(&matrix(v, 3, 5, 4));
        let scaled: Vec<f64> = f.iter().map(|x| x * c).collect();
        prop_assert_eq!(predict_label(&f, 4), predict_label(&scaled, 4));
    }

    #[test]
    fn self_fusion_keeps_decision(v in rows(1, 6, 4), s in 2usize..5) {
        let single = predict_label(&prod_fusion(&matrix(v.clone(), 1, 6, 4)), 4);
        let copies: Vec<f64> = (0..s).flat_map(|_| v.iter().copied()).collect();
        prop_assert_eq!(predict_label(&prod_fusion(&matrix(copies, s, 6, 4)), 4), single);
    }
}
