mod common;

use advrate::counting::{balanced_split, estimate_rate, CounterConfig};
use advrate::verifier::{adversarial_rate, Dnf, OutputAtom, VerifierConfig};
use advrate::{Activation, InputBox, Layer, Network};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick() -> CounterConfig {
    CounterConfig {
        splits: 3,
        trials: 5,
        balance_samples: 64,
        leaf_epsilon: 1.0 / 64.0,
        ..Default::default()
    }
}

#[test]
fn identity_estimate_is_within_factor_two() {
    let net = advrate::io::load_network(fixture("identity_net.json")).unwrap();
    let p = &advrate::properties::load_properties(fixture("identity_query.json")).unwrap().properties[0];
    let cfg = CounterConfig { splits: 3, trials: 11, ..Default::default() };
    let est = estimate_rate(&net, p, &cfg).unwrap();
    assert!((0.25..=1.0).contains(&est.median_rate), "{est:?}");
}

#[test]
fn half_split_is_exact_on_the_boundary_dimension() {
    let net = Network::new(
        2,
        vec![Layer::new(vec![vec![0.0, 1.0]], vec![0.0], Activation::Linear).unwrap()],
    )
    .unwrap();
    let post = Dnf::atom(OutputAtom::gt(vec![1.0], 0.5));
    let bx = InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (dim, l, r) = balanced_split(&net, &post, &bx, &mut rng, 1000).unwrap();
    assert_eq!(dim, 0);
    assert_eq!(l.volume() + r.volume(), bx.volume());
}

prop_compose! {
    fn random_query()(seed in any::<u64>(), act in prop_oneof![Just(Activation::Relu), Just(Activation::Tanh)])
                     -> (Network, advrate::verifier::Property) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, 2, &[8], 3, act);
        let post = random_post(&mut rng, 3);
        (net, property(random_box(&mut rng, 2, 1.0), post))
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn estimates_are_deterministic_and_bounded((net, p) in random_query(), seed in any::<u64>()) {
        let cfg = CounterConfig { seed, ..quick() };
        let a = estimate_rate(&net, &p, &cfg).unwrap();
        prop_assert_eq!(&a, &estimate_rate(&net, &p, &cfg).unwrap());
        prop_assert!(a.trial_rates.iter().all(|r| (0.0..=1.0).contains(r)));
        prop_assert_eq!(a.trial_rates.len(), cfg.trials);
    }

    #[test]
    fn zero_rate_is_preserved((net, p) in random_query(), seed in any::<u64>()) {
        let exact = adversarial_rate(&net, &p, &VerifierConfig::with_epsilon(1.0 / 64.0)).unwrap();
        prop_assume!(exact.rate_upper == 0.0);
        let est = estimate_rate(&net, &p, &CounterConfig { seed, ..quick() }).unwrap();
        prop_assert!(est.trial_rates.iter().all(|r| *r == 0.0));
        prop_assert_eq!(est.median_rate, 0.0);
    }

    #[test]
    fn tautology_gives_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, 3, &[6], 2, Activation::Relu);
        let p = property(random_box(&mut rng, 3, 1.0), Dnf::atom(OutputAtom::ge(vec![0.0, 0.0], -1.0)));
        let est = estimate_rate(&net, &p, &CounterConfig { seed, ..quick() }).unwrap();
        prop_assert!(est.trial_rates.iter().all(|r| *r == 1.0));
    }
}
