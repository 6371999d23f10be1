//! End-to-end runs of the experiment harness on small synthetic datasets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabdistill::dataio::{Dataset, PreparedDataset, Targets};
use tabdistill::harness::{run_prepared, ExperimentConfig, MethodName, MetricName};

fn prepared(d: Dataset) -> PreparedDataset {
    PreparedDataset {
        raw_rows: d.n_rows(),
        dataset: d,
        dropped_rows: 0,
        target_scaling: None,
        positive_class: None,
    }
}

/// Two noisy interleaved bands in three features, about 30% positives.
fn classification(n: usize, seed: u64) -> PreparedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0));
    let y = x
        .rows()
        .into_iter()
        .map(|r| {
            let s = (3.0 * r[0]).sin() + r[1] * r[1] - 0.3 + rng.gen_range(-0.3..0.3);
            usize::from(s > 0.5)
        })
        .collect();
    prepared(Dataset::from_matrix(x, Some(Targets::Classes(y)), 2).unwrap())
}

fn regression(n: usize, seed: u64) -> PreparedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Array2<f64> = Array2::from_shape_fn((n, 2), |_| rng.gen_range(0.0..1.0));
    let y = x.rows().into_iter().map(|r| (0.5 * r[0] + 0.5 * r[1] * r[1]).clamp(0.0, 1.0)).collect();
    prepared(Dataset::from_matrix(x, Some(Targets::Continuous(y)), 0).unwrap())
}

const TEACHER: &str = "[teacher]\nhidden = [16, 8]\nepochs = 25\nbatch_size = 32\nlearning_rate = 0.01\npatience = 5\n";

fn config(body: &str) -> ExperimentConfig {
    let c = ExperimentConfig::from_toml(&format!("name = \"t\"\nmanifest = \"unused.toml\"\n{body}\n{TEACHER}")).unwrap();
    c.validate().unwrap();
    c
}

fn all_methods() -> ExperimentConfig {
    config(
        "methods = [\"standard\", \"vanilla_st\", \"label_smoothing\", \"probability_shift\", \"mixed_labels\",\n\
         \"matching_logits\", \"profweight\", \"data_augmentation\", \"undersample\", \"oversample\"]\n\
         metrics = [\"accuracy\", \"f1\"]\nseeds = [0, 1]\ndepths = [2, 3, 4]\nmin_samples_leaf = 5\n\
         [split]\ntrain = 0.5\nvalid = 0.15\ntest = 0.15\nunlabeled = 0.2\n\
         [distill]\nresample_ratio = 0.45\nalpha_grid = [0.0, 0.5, 1.0]\nfraction_grid = [0.0, 0.5]\n",
    )
}

#[test]
fn every_method_fills_every_cell() {
    let c = all_methods();
    let r = run_prepared(&c, &classification(600, 1), "bands").unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.cells.len(), 10 * 3 * 2);
    for cell in &r.cells {
        let s = cell.summary.expect("cell present");
        assert_eq!(s.n, 2);
        assert!(s.std >= 0.0);
        assert!((0.0..=1.0).contains(&s.mean), "{cell:?}");
    }
    assert_eq!(r.teachers.len(), 2);
    assert_eq!(r.alphas.len(), 2);
    assert!(r.alphas.iter().all(|a| a.alphas.len() == 3));
    assert_eq!(r.fraction_sweeps.len(), 2);
    // a learnable problem: the deepest standard tree beats the majority rate
    assert!(r.mean(MethodName::Standard, 4, MetricName::Accuracy).unwrap() > 0.75);
}

#[test]
fn reruns_are_identical_and_seeds_are_isolated() {
    let c = all_methods();
    let data = classification(400, 2);
    let a = run_prepared(&c, &data, "bands").unwrap();
    let b = run_prepared(&c, &data, "bands").unwrap();
    assert_eq!(a.to_json(), b.to_json());

    let mut alone = c.clone();
    alone.seeds = vec![1];
    let single = run_prepared(&alone, &data, "bands").unwrap();
    for cell in &single.cells {
        let full = a.cell(cell.method, cell.depth, cell.metric).unwrap();
        let from_full: Vec<_> = full.values.iter().filter(|(s, _)| *s == 1).collect();
        assert_eq!(from_full, cell.values.iter().collect::<Vec<_>>());
    }
    assert_eq!(single.teachers[0], a.teachers[1]);
}

#[test]
fn single_cell_report() {
    let c = config(
        "methods = [\"standard\"]\nmetrics = [\"accuracy\"]\nseeds = [7]\ndepths = [3]\n\
         [split]\ntrain = 0.8\ntest = 0.2\n",
    );
    let r = run_prepared(&c, &classification(200, 3), "bands").unwrap();
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.cells[0].summary.unwrap().std, 0.0);
    assert!(r.teachers.is_empty());
}

#[test]
fn zero_fraction_student_equals_standard() {
    let c = config(
        "methods = [\"standard\", \"data_augmentation\"]\nmetrics = [\"mse\", \"leaf_entropy\", \"within_0.05\"]\n\
         seeds = [0, 1]\ndepths = [4, 5, 6, 7]\nmin_samples_leaf = 10\n\
         [split]\ntrain = 0.1\ntest = 0.1\nunlabeled = 0.8\n[distill]\nfraction_grid = [0.0]\n",
    );
    let r = run_prepared(&c, &regression(2000, 4), "smooth").unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    for &d in &[4, 5, 6, 7] {
        for m in [MetricName::Mse, MetricName::LeafEntropy, MetricName::Within(0.05)] {
            assert_eq!(
                r.cell(MethodName::Standard, d, m).unwrap().values,
                r.cell(MethodName::DataAugmentation, d, m).unwrap().values
            );
        }
    }
    assert!(r.fraction_sweeps.iter().all(|s| s.sweep.fraction == 0.0));
}

#[test]
fn teacher_failure_is_isolated() {
    // a classification-only metric on a regression dataset is rejected up front
    let c = config(
        "methods = [\"standard\"]\nmetrics = [\"accuracy\"]\nseeds = [0]\ndepths = [2]\n[split]\ntrain = 0.8\ntest = 0.2\n",
    );
    assert!(run_prepared(&c, &regression(100, 5), "r").is_err());

    // a diverging teacher voids the distilled cells but keeps the baseline
    let mut c = config(
        "methods = [\"standard\", \"vanilla_st\"]\nmetrics = [\"accuracy\"]\nseeds = [0]\ndepths = [2]\n\
         [split]\ntrain = 0.6\nvalid = 0.2\ntest = 0.2\n",
    );
    c.teacher.learning_rate = 1e200;
    let r = run_prepared(&c, &classification(200, 6), "bands").unwrap();
    assert!(r.mean(MethodName::Standard, 2, MetricName::Accuracy).is_some());
    assert!(r.mean(MethodName::VanillaSt, 2, MetricName::Accuracy).is_none());
    assert!(r.failures.iter().any(|f| f.stage == "teacher"));
    assert!(r.to_markdown().contains(tabdistill::harness::MISSING));
}
