mod common;

use common::*;
use losmix::convolution::*;
use losmix::dist::{ContDistSpec, ContFamily, CountDistSpec};
use losmix::gof::{kolmogorov_distance, EcdfView};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::ln_gamma;

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Negative binomial lag plus Gaussian recovery, written with gamma functions.
fn negbin_gauss_closed_form(r: f64, p: f64, m: f64, sigma: f64, y: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..2000u32 {
        let kf = k as f64;
        let gauss = (-(y - kf - m).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        let ln_coef = ln_gamma(r + kf) - ln_gamma(r) - ln_gamma(kf + 1.0);
        total += gauss * (ln_coef + r * p.ln() + kf * (1.0 - p).ln()).exp();
    }
    total
}

#[test]
fn matches_brute_force_for_every_pair() {
    for count in count_zoo() {
        for cont in cont_zoo() {
            let model = long(count.clone(), cont);
            for y in grid(100, 0.05, 25.0) {
                let lib = conv_pdf(&model, y).unwrap();
                let oracle = conv_pdf_oracle(&count, &cont, y);
                assert!((lib - oracle).abs() < 1e-10, "{count:?} {cont:?} y={y}: {lib} vs {oracle}");
            }
        }
    }
}

#[test]
fn negbin_gaussian_closed_form() {
    for (r, p, m, sigma) in [(2.0, 0.4, 4.0, 1.0), (0.7, 0.2, 1.5, 0.6), (5.0, 0.8, 3.0, 2.0)] {
        // The default tolerance drops up to 1e-10 of lag mass; a 1e-12 match needs less.
        let model = ConvolutiveLongStay::with_tol(CountDistSpec::negbin(r, p).unwrap(), normal(m, sigma), 1e-15).unwrap();
        for y in grid(100, -2.0, 30.0) {
            let lib = conv_pdf(&model, y).unwrap();
            let closed = negbin_gauss_closed_form(r, p, m, sigma, y);
            let product = negbin_normal_oracle(r, p, m, sigma, y);
            assert!((lib - closed).abs() < 1e-12, "y={y}: {lib} vs {closed}");
            assert!((lib - product).abs() < 1e-12);
        }
    }
}

#[test]
fn degenerate_lag_collapses_to_recovery_law() {
    let e = normal(4.0, 1.0);
    let at_zero = long(CountDistSpec::binomial(0, 0.5).unwrap(), e);
    assert_eq!(conv_pdf(&at_zero, 4.0).unwrap(), e.pdf(4.0));
    assert!((conv_pdf(&at_zero, 4.0).unwrap() - 0.398_942_3).abs() < 1e-7);

    let ln = lognormal(0.0, 1.0);
    let n0 = long(CountDistSpec::binomial(0, 0.5).unwrap(), ln);
    assert!((conv_pdf(&n0, 1.0).unwrap() - 0.398_942_3).abs() < 1e-7);

    let at_three = long(CountDistSpec::multinomial(vec![0.0, 0.0, 0.0, 1.0]).unwrap(), e);
    let at_four = long(CountDistSpec::binomial(4, 1.0).unwrap(), ln);
    for y in grid(50, 0.1, 12.0) {
        assert_eq!(conv_pdf(&at_three, y).unwrap(), e.pdf(y - 3.0));
        assert_eq!(conv_pdf(&at_four, y).unwrap(), ln.pdf(y - 4.0));
    }
    let pois0 = long(CountDistSpec::poisson(0.0).unwrap(), normal(2.5, 0.7));
    assert_eq!(conv_mean(&pois0).unwrap(), 2.5);
    assert_eq!(conv_cdf(&long(CountDistSpec::binomial(0, 0.5).unwrap(), normal(0.0, 1.0)), 0.0).unwrap(), 0.5);
}

#[test]
fn poisson_gaussian_example() {
    let model = long(CountDistSpec::poisson(2.0).unwrap(), normal(3.0, 0.8));
    let mut oracle = 0.0;
    let mut pk = (-2.0f64).exp();
    for k in 0..=60 {
        if k > 0 {
            pk *= 2.0 / k as f64;
        }
        oracle += normal_pdf(5.0 - k as f64, 3.0, 0.8) * pk;
    }
    assert!((conv_pdf(&model, 5.0).unwrap() - oracle).abs() < 1e-12);
    let integral = simpson(|y| conv_pdf(&model, y).unwrap(), -5.0, 5.0, 20_000);
    assert!((conv_cdf(&model, 5.0).unwrap() - integral).abs() < 1e-9);
}

#[test]
fn lognormal_terms_vanish_beyond_y() {
    let model = long(CountDistSpec::poisson(3.0).unwrap(), lognormal(0.0, 0.5));
    assert_eq!(conv_pdf(&model, 0.0).unwrap(), 0.0);
    assert_eq!(conv_pdf(&model, -1.0).unwrap(), 0.0);
    assert!(conv_pdf(&model, 0.5).unwrap() > 0.0);
}

#[test]
fn negative_y_with_gaussian_recovery() {
    let model = long(CountDistSpec::poisson(1.0).unwrap(), normal(0.5, 1.0));
    let v = conv_pdf(&model, -1.0).unwrap();
    assert!(v > 0.0);
    assert!((v - conv_pdf_oracle(&model.count, &model.cont, -1.0)).abs() < 1e-12);
}

#[test]
fn densities_integrate_to_one() {
    for count in count_zoo() {
        for cont in cont_zoo() {
            let model = long(count.clone(), cont);
            let mean = conv_mean(&model).unwrap();
            let sd = model.variance().unwrap().sqrt();
            let lo = match cont.family {
                ContFamily::Normal => mean - 50.0 * sd,
                ContFamily::LogNormal => 0.0,
            };
            let hi = mean + 50.0 * sd;
            // Lag atoms make the density piecewise smooth; integrate unit cells.
            let start = lo.floor();
            let mut mass = 0.0;
            let mut a = start;
            while a < hi {
                mass += simpson(|y| model.pdf(y).unwrap(), a, a + 1.0, 400);
                a += 1.0;
            }
            assert!((mass - 1.0).abs() < model.trunc_tol + 1e-6, "{count:?} {cont:?}: {mass}");
        }
    }
}

#[test]
fn cdf_is_monotone_and_bounded() {
    for count in count_zoo() {
        for cont in cont_zoo() {
            let model = long(count.clone(), cont);
            let mut prev = 0.0;
            for y in grid(200, -3.0, 40.0) {
                let c = conv_cdf(&model, y).unwrap();
                assert!((0.0..=1.0).contains(&c) && c >= prev - 1e-15);
                prev = c;
            }
            let far = model.mean().unwrap() + 50.0 * model.variance().unwrap().sqrt();
            assert!((conv_cdf(&model, far).unwrap() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn means() {
    let m = long(CountDistSpec::negbin(2.0, 0.4).unwrap(), normal(4.0, 1.0));
    assert!((conv_mean(&m).unwrap() - 7.0).abs() < 1e-12);
    let m = long(CountDistSpec::poisson(2.0).unwrap(), lognormal(0.0, 0.5));
    assert!((conv_mean(&m).unwrap() - (2.0 + 0.125f64.exp())).abs() < 1e-12);
    assert!((conv_mean(&m).unwrap() - 3.1331).abs() < 1e-4);
}

#[test]
fn sampler_mean_and_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = long(CountDistSpec::negbin(2.0, 0.4).unwrap(), normal(4.0, 1.0));
    let x = conv_sample(&m, 1_000_000, &mut rng).unwrap();
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    assert!((mean - 7.0).abs() < 0.02, "{mean}");

    for count in count_zoo() {
        for cont in cont_zoo() {
            let model = long(count.clone(), cont);
            let x = conv_sample(&model, 100_000, &mut rng).unwrap();
            let table = model.table().unwrap();
            let d = kolmogorov_distance(&EcdfView::new(&x).unwrap(), |y| model.cdf_with(y, &table)).unwrap();
            assert!(d < 0.01, "{count:?} {cont:?}: {d}");
        }
    }
}

#[test]
fn degenerate_sample_is_location() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let m = long(CountDistSpec::binomial(0, 0.5).unwrap(), ContDistSpec::normal(2.0, 1e-9).unwrap());
    let x = conv_sample(&m, 1, &mut rng).unwrap();
    assert!((x[0] - 2.0).abs() < 1e-6);
}

#[test]
fn invalid_tolerance_is_rejected() {
    let c = CountDistSpec::poisson(1.0).unwrap();
    assert!(ConvolutiveLongStay::with_tol(c.clone(), normal(0.0, 1.0), 0.0).is_err());
    assert!(ConvolutiveLongStay::with_tol(c, normal(0.0, 1.0), 0.01).is_err());
}
