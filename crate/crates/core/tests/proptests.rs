mod common;

use common::*;
use losmix::covariates::{FeatureSchema, FieldSpec, FieldValue, Link, Target};
use losmix::data_io::{read_csv, write_csv, StayRecord};
use losmix::dist::CountDistSpec;
use losmix::estimation::{fit, FitConfig, InitStrategy, Layout, Method};
use losmix::gof::{kolmogorov_distance, EcdfView};
use losmix::mixture::{LosData, MixtureModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TARGETS: [Target; 9] = [
    Target::Pi,
    Target::MuS,
    Target::SigmaS,
    Target::P,
    Target::R,
    Target::Lambda,
    Target::Nu,
    Target::M,
    Target::Sigma,
];

fn count_law() -> impl Strategy<Value = CountDistSpec> {
    prop_oneof![
        (0.3..20.0f64, 0.05..0.95f64).prop_map(|(r, p)| CountDistSpec::negbin(r, p).unwrap()),
        (0.1..15.0f64).prop_map(|l| CountDistSpec::poisson(l).unwrap()),
        (0.2..8.0f64, 0.5..2.5f64).prop_map(|(l, n)| CountDistSpec::cmp(l, n).unwrap()),
        (1u64..30, 0.05..0.95f64).prop_map(|(n, p)| CountDistSpec::binomial(n, p).unwrap()),
        prop::collection::vec(0.01..1.0f64, 2..6).prop_map(|w| {
            let s: f64 = w.iter().sum();
            CountDistSpec::multinomial(w.iter().map(|v| v / s).collect()).unwrap()
        }),
    ]
}

fn model() -> impl Strategy<Value = MixtureModel> {
    (0.05..0.95f64, -2.0..1.0f64, 0.2..1.0f64, count_law(), any::<bool>(), 1.0..6.0f64, 0.2..1.5f64).prop_map(
        |(pi, mu_s, sigma_s, count, ln, m, sigma)| {
            let cont = if ln { lognormal(m.ln(), sigma / m) } else { normal(m, sigma) };
            MixtureModel::new(pi, lognormal(mu_s, sigma_s), long(count, cont)).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn default_links_land_in_the_domain(eta in -1e6..1e6f64, i in 0usize..TARGETS.len()) {
        let t = TARGETS[i];
        prop_assert!(t.contains(t.default_link().apply(eta)), "{t:?} at {eta}");
        prop_assert!(Target::SigmaS.contains(Link::Softplus.apply(eta)));
    }

    #[test]
    fn distance_is_a_permutation_invariant_fraction(
        x in prop::collection::vec(0.01..50.0f64, 1..200),
        seed in any::<u64>(),
        m in model(),
    ) {
        let table = m.long.table().unwrap();
        let cdf = |v: f64| m.cdf_with(v, &table);
        let d = kolmogorov_distance(&EcdfView::new(&x).unwrap(), cdf).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        let mut y = x.clone();
        rand::seq::SliceRandom::shuffle(y.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(kolmogorov_distance(&EcdfView::new(&y).unwrap(), cdf).unwrap(), d);
    }

    #[test]
    fn loglik_ignores_row_order(m in model(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Normal recovery periods can push a long stay below zero.
        let y: Vec<f64> = m.sample(150, &mut rng).unwrap().into_iter().filter(|v| *v > 0.0).collect();
        let a = m.loglik(&LosData::from_y(y.clone()).unwrap()).unwrap();
        let mut z = y;
        z.reverse();
        let b = m.loglik(&LosData::from_y(z).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn long_stay_cdf_is_monotone(m in model(), mut y in prop::collection::vec(-5.0..60.0f64, 2..60)) {
        let table = m.long.table().unwrap();
        y.sort_by(f64::total_cmp);
        let f: Vec<f64> = y.iter().map(|v| m.long.cdf_with(*v, &table)).collect();
        prop_assert!(f.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        prop_assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn layout_round_trips(m in model()) {
        let layout = Layout::full(&m, &[]);
        let theta = layout.pack(&m);
        let back = layout.unpack(&theta, &m).unwrap();
        prop_assert_eq!(theta.len(), layout.dim());
        let again = layout.pack(&back);
        for (a, b) in theta.iter().zip(&again) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} vs {b}");
        }
        for t in m.targets() {
            let (u, v) = (m.get(t).unwrap(), back.get(t).unwrap());
            prop_assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0), "{t:?}: {u} vs {v}");
        }
    }

    #[test]
    fn csv_round_trip_is_lossless(
        rows in prop::collection::vec((1e-6..1e4f64, any::<f64>().prop_filter("finite", |v| v.is_finite()), "[ -~]{0,12}"), 0..40),
    ) {
        let schema = FeatureSchema {
            fields: vec![FieldSpec::numeric("x"), FieldSpec::categorical("ward")],
            ..Default::default()
        };
        let records: Vec<StayRecord> = rows
            .iter()
            .enumerate()
            .filter(|(_, (_, _, s))| !s.trim().is_empty() && s.trim() == s.as_str() && s.as_str() != "NA")
            .enumerate()
            .map(|(i, (_, (y, x, s)))| StayRecord {
                row: i + 1,
                los_days: Some(*y),
                features: vec![FieldValue::Numeric(*x), FieldValue::Category(s.clone())],
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stays.csv");
        write_csv(&path, &schema, &records).unwrap();
        let back = read_csv(&path, &schema).unwrap();
        prop_assert_eq!(back, records);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn em_traces_never_descend(seed in any::<u64>(), two_d in any::<bool>(), accelerate in any::<bool>()) {
        let truth = reference_model();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = truth.sample(120, &mut rng).unwrap().into_iter().filter(|v| *v > 0.0).collect();
        let data = LosData::from_y(y).unwrap();
        let config = FitConfig {
            method: if two_d { Method::Em2d } else { Method::Em },
            init: InitStrategy::UserSupplied,
            max_iters: 60,
            accelerate,
            ..Default::default()
        };
        let r = fit(&data, &truth, &config).unwrap();
        prop_assert!(r.loglik_trace.windows(2).all(|w| w[1] - w[0] >= -1e-9), "{:?}", r.loglik_trace);
    }
}
