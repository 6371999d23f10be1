use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tabdistill::teacher::{Architecture, OutputKind, Supervision, TeacherNet};

const H: f64 = 1e-6;
pub const TOL: f64 = 1e-4;
/// Denominator floor, so parameters with a true gradient of ~0 are judged
/// on absolute error.
const FLOOR: f64 = 1e-6;

fn loss_with_mask_seed(net: &TeacherNet, x: &Array2<f64>, y: Supervision<'_>, mask_seed: Option<u64>) -> f64 {
    match mask_seed {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            net.gradients(x.view(), y, Some(&mut rng)).unwrap().0
        }
        None => net.loss(x.view(), y).unwrap(),
    }
}

/// Worst relative gap between backpropagated and central-difference
/// gradients over every parameter.
pub fn worst_gradient_error(arch: &Architecture, seed: u64, n: usize, mask_seed: Option<u64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = TeacherNet::init(arch, seed).unwrap();
    // zero initial biases put rows with an all-dead layer exactly on a relu
    // kink of the next layer; jitter every parameter off that point
    let jittered: Vec<f64> = net.parameters().iter().map(|p| p + rng.gen_range(-0.3..0.3)).collect();
    net.set_parameters(&jittered);
    let x = Array2::from_shape_fn((n, arch.input), |_| rng.gen_range(-2.0..2.0));
    let classes: Vec<usize>;
    let values: Vec<f64>;
    let y = match arch.output {
        OutputKind::Classifier { classes: k } => {
            classes = (0..n).map(|_| rng.gen_range(0..k)).collect();
            Supervision::Classes(&classes)
        }
        OutputKind::Regressor => {
            values = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Supervision::Values(&values)
        }
    };
    let analytic = match mask_seed {
        Some(s) => {
            let mut r = ChaCha8Rng::seed_from_u64(s);
            net.gradients(x.view(), y, Some(&mut r)).unwrap().1.flatten()
        }
        None => net.gradients::<ChaCha8Rng>(x.view(), y, None).unwrap().1.flatten(),
    };
    let base = net.parameters();
    assert_eq!(base.len(), analytic.len());
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + H;
        probe.set_parameters(&p);
        let up = loss_with_mask_seed(&probe, &x, y, mask_seed);
        p[i] = base[i] - H;
        probe.set_parameters(&p);
        let down = loss_with_mask_seed(&probe, &x, y, mask_seed);
        let numeric = (up - down) / (2.0 * H);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    worst
}
