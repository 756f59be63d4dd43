mod common;

use common::*;
use losmix::convolution::conv_pdf;
use losmix::dist::CountDistSpec;
use losmix::mixture::*;
use losmix::LosError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn with_pi(pi: f64) -> MixtureModel {
    let base = reference_model();
    MixtureModel::new(pi, base.short, base.long).unwrap()
}

fn grid() -> Vec<f64> {
    (1..200).map(|i| i as f64 * 0.1).collect()
}

#[test]
fn extreme_mixing_reduces_to_one_component() {
    let all_long = with_pi(1.0);
    let all_short = with_pi(0.0);
    for y in grid() {
        assert_eq!(mix_pdf(&all_long, y).unwrap(), conv_pdf(&all_long.long, y).unwrap());
        assert_eq!(mix_pdf(&all_short, y).unwrap(), all_short.short.pdf(y));
        assert_eq!(mix_cdf(&all_long, y).unwrap(), all_long.long.cdf(y).unwrap());
        assert_eq!(mix_cdf(&all_short, y).unwrap(), all_short.short.cdf(y));
    }
    assert_eq!(mix_mean(&all_long).unwrap(), all_long.long.mean().unwrap());
    assert_eq!(mix_mean(&all_short).unwrap(), all_short.short.mean());
}

#[test]
fn hand_combined_density() {
    let m = reference_model();
    let y = 4.5;
    let oracle = 0.7 * lognormal_pdf(y, -1.0, 0.5) + 0.3 * negbin_normal_oracle(2.0, 0.4, 4.0, 1.0, y);
    assert!((mix_pdf(&m, y).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn loglik_of_a_single_point() {
    let m = reference_model();
    let d = LosData::from_y(vec![2.25]).unwrap();
    assert!((mix_loglik(&m, &d).unwrap() - mix_pdf(&m, 2.25).unwrap().ln()).abs() < 1e-13);
}

#[test]
fn loglik_transcription() {
    let m = reference_model();
    let y = [0.2, 0.45, 3.1, 6.8, 12.4];
    // Σ log[ (1 − π) f_S(y) + π f_L(y) ] with f_L summed term by term.
    let oracle: f64 = y
        .iter()
        .map(|&v| (0.7 * lognormal_pdf(v, -1.0, 0.5) + 0.3 * negbin_normal_oracle(2.0, 0.4, 4.0, 1.0, v)).ln())
        .sum();
    let lib = mix_loglik(&m, &LosData::from_y(y.to_vec()).unwrap()).unwrap();
    assert!((lib - oracle).abs() < 1e-10, "{lib} vs {oracle}");
}

#[test]
fn loglik_is_additive_and_order_free() {
    let m = reference_model();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let a = m.sample(300, &mut rng).unwrap();
    let b = m.sample(200, &mut rng).unwrap();
    let la = mix_loglik(&m, &LosData::from_y(a.clone()).unwrap()).unwrap();
    let lb = mix_loglik(&m, &LosData::from_y(b.clone()).unwrap()).unwrap();
    let mut ab = a.clone();
    ab.extend(&b);
    let lab = mix_loglik(&m, &LosData::from_y(ab.clone()).unwrap()).unwrap();
    assert!((lab - (la + lb)).abs() < 1e-9 * lab.abs());
    ab.shuffle(&mut rng);
    let shuffled = mix_loglik(&m, &LosData::from_y(ab).unwrap()).unwrap();
    assert!((shuffled - lab).abs() < 1e-9 * lab.abs());
}

#[test]
fn loglik_is_bit_reproducible() {
    let m = reference_model();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let d = LosData::from_y(m.sample(5000, &mut rng).unwrap()).unwrap();
    let first = mix_loglik(&m, &d).unwrap();
    for _ in 0..3 {
        assert_eq!(mix_loglik(&m, &d).unwrap().to_bits(), first.to_bits());
    }
}

#[test]
fn non_positive_stay_names_the_row() {
    let m = reference_model();
    match LosData::from_y(vec![1.0, 2.0, -0.5]).and_then(|d| mix_loglik(&m, &d)) {
        Err(LosError::DataDomain { row, .. }) => assert_eq!(row, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn mean_is_linear() {
    let m = reference_model();
    let expect = 0.3 * 7.0 + 0.7 * (-1.0f64 + 0.125).exp();
    assert!((mix_mean(&m).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn cdf_far_tail_and_normalization() {
    let zoo_models: Vec<MixtureModel> = count_zoo()
        .into_iter()
        .flat_map(|c| cont_zoo().into_iter().map(move |e| (c.clone(), e)))
        .map(|(c, e)| MixtureModel::new(0.4, lognormal(0.2, 0.6), long(c, e)).unwrap())
        .collect();
    for m in &zoo_models {
        let far = m.mean().unwrap() + 50.0 * m.variance().unwrap().sqrt();
        assert!((mix_cdf(m, far).unwrap() - 1.0).abs() < 1e-6);
        // Log-space for the short component, unit cells for the lag atoms.
        let short = simpson(|u| m.short.pdf(u.exp()) * u.exp(), -30.0, far.ln(), 20_000);
        let mut long_mass = simpson(|y| m.long.pdf(y).unwrap(), -60.0, 0.0, 4000);
        let mut a = 0.0;
        while a < far {
            long_mass += simpson(|y| m.long.pdf(y).unwrap(), a, a + 1.0, 400);
            a += 1.0;
        }
        let mass = (1.0 - m.pi) * short + m.pi * long_mass;
        assert!((mass - 1.0).abs() < 2e-6, "{m:?}: {mass}");
    }
}

#[test]
fn long_fraction_of_samples() {
    let m = reference_model();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (_, is_long) = m.sample_labeled(1_000_000, &mut rng).unwrap();
    let frac = is_long.iter().filter(|b| **b).count() as f64 / 1e6;
    assert!((frac - 0.3).abs() < 0.002, "{frac}");
}

#[test]
fn samples_match_the_cdf() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for pi in [0.0, 0.3, 1.0] {
        let m = with_pi(pi);
        let x = mix_sample(&m, 100_000, &mut rng).unwrap();
        let table = m.long.table().unwrap();
        let d = ks_oracle(&x, |y| m.cdf_with(y, &table));
        assert!(d < 0.01, "pi={pi}: {d}");
    }
}

#[test]
fn json_round_trip() {
    let m = MixtureModel::new(0.25, lognormal(-0.5, 0.4), long(CountDistSpec::cmp(2.0, 1.3).unwrap(), lognormal(1.0, 0.3))).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    let back: MixtureModel = serde_json::from_str(&text).unwrap();
    assert_eq!(back, m);
    let bad = text.replace("0.25", "1.5");
    assert!(serde_json::from_str::<MixtureModel>(&bad).is_err());
}

#[test]
fn pi_outside_unit_interval_is_rejected() {
    let base = reference_model();
    assert!(MixtureModel::new(-0.1, base.short, base.long.clone()).is_err());
    assert!(MixtureModel::new(1.1, base.short, base.long).is_err());
}

#[test]
fn short_component_must_be_lognormal() {
    let base = reference_model();
    assert!(MixtureModel::new(0.3, normal(0.0, 1.0), base.long).is_err());
}
