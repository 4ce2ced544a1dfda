use rand::Rng;
use wdsm::net::{MlpLayout, MlpParams, Sample};
use wdsm::seed;

fn random_batch<R: Rng>(rng: &mut R, n: usize) -> Vec<Sample<f64>> {
    (0..n)
        .map(|_| Sample {
            x_t: rng.random_range(-5.0..5.0),
            sigma: 10f64.powf(rng.random_range(-2.0..1.7)),
            target: rng.random_range(-3.0..3.0),
            weight: rng.random_range(0.0..4.0),
        })
        .collect()
}

fn loss(p: &MlpParams<f64>, batch: &[Sample<f64>]) -> f64 {
    p.loss_and_grad(batch).unwrap().0
}

fn max_relative_error(p: &MlpParams<f64>, batch: &[Sample<f64>], h: f64) -> f64 {
    let (_, grad) = p.loss_and_grad(batch).unwrap();
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst = 0.0f64;
    #[allow(clippy::needless_range_loop)]
    for i in 0..p.len() {
        let mut plus = p.clone();
        plus.as_mut_slice()[i] += h;
        let mut minus = p.clone();
        minus.as_mut_slice()[i] -= h;
        let fd = (loss(&plus, batch) - loss(&minus, batch)) / (2.0 * h);
        let denom = grad[i].abs().max(1e-3 * scale).max(1e-8);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}

#[test]
fn every_coordinate_of_a_25_parameter_gradient() {
    let layout = MlpLayout::for_param_count(25).unwrap();
    let mut rng = seed::stream(11, "grad-batch", 0);
    for s in 0..5 {
        let p = MlpParams::init(&layout, s);
        let batch = random_batch(&mut rng, 8);
        let err = max_relative_error(&p, &batch, 1e-5);
        assert!(err < 1e-5, "seed {s}: {err}");
    }
}

#[test]
fn random_layouts_and_batches() {
    let mut rng = seed::stream(12, "grad-layout", 0);
    for s in 0..100 {
        let depth = rng.random_range(1..=3);
        let hidden = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        let p = MlpParams::init(&MlpLayout::new(hidden).unwrap(), s);
        let n = rng.random_range(1..=16);
        let batch = random_batch(&mut rng, n);
        let err = max_relative_error(&p, &batch, 1e-5);
        assert!(err < 1e-4, "draw {s}: {err}");
    }
}

#[test]
fn single_precision_network_tracks_double() {
    let layout = MlpLayout::for_param_count(25).unwrap();
    let p64 = MlpParams::<f64>::init(&layout, 4);
    let p32 = MlpParams::<f32>::from_vec(&layout, p64.as_slice().iter().map(|&v| v as f32).collect()).unwrap();
    for (x, s) in [(0.3, 0.5), (-2.0, 10.0), (4.0, 0.02)] {
        let a = p64.forward(x, s).unwrap();
        let b = p32.forward(x as f32, s as f32).unwrap() as f64;
        assert!((a - b).abs() < 1e-5 * (1.0 + a.abs()));
    }
}
