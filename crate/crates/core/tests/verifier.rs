mod common;

use advrate::io::load_network;
use advrate::properties::load_properties;
use advrate::verifier::{
    adversarial_rate, classify_box, decide, extract_counterexamples, BoxClass, Dnf, OutputAtom,
    Verdict, VerifierConfig,
};
use advrate::{Activation, InputBox};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(epsilon: f64) -> VerifierConfig {
    VerifierConfig::with_epsilon(epsilon)
}

#[test]
fn fig1_query_is_sat_and_accepts_known_witness() {
    let net = load_network(fixture("fig1_net.json")).unwrap();
    let fam = load_properties(fixture("fig1_query.json")).unwrap();
    let p = &fam.properties[0];
    let d = decide(&net, p, &cfg(1.0 / 256.0)).unwrap();
    let Verdict::Sat { witness } = d.verdict else { panic!("expected SAT, got {:?}", d.verdict) };
    assert!(p.is_witness(&net, &witness));
    assert!(p.is_witness(&net, &[2.0, -1.0]));
    assert_eq!(net.forward(&[2.0, -1.0]).unwrap(), vec![11.0]);

    let report = adversarial_rate(&net, p, &cfg(1.0 / 64.0)).unwrap();
    let cex = extract_counterexamples(&net, p, &report, 20);
    assert!(!cex.is_empty());
    for x in cex {
        assert!(net.forward(&x).unwrap()[0] >= 10.0);
    }
}

#[test]
fn fig2_query_is_unsat_without_splitting() {
    let net = load_network(fixture("fig2_net.json")).unwrap();
    let fam = load_properties(fixture("fig2_query.json")).unwrap();
    let p = &fam.properties[0];
    let d = decide(&net, p, &cfg(1.0 / 256.0)).unwrap();
    assert_eq!(d.verdict, Verdict::Unsat);
    assert_eq!(d.splits, 0);
    let r = adversarial_rate(&net, p, &VerifierConfig::default()).unwrap();
    assert_eq!(r.adversarial_rate, 0.0);
    assert_eq!(r.safe_volume, 1.0);
}

#[test]
fn identity_rate_and_witnesses() {
    let net = load_network(fixture("identity_net.json")).unwrap();
    let p = &load_properties(fixture("identity_query.json")).unwrap().properties[0];
    let r = adversarial_rate(&net, p, &cfg(1.0 / 1024.0)).unwrap();
    let tol = 1.0 / 512.0;
    assert!((r.rate_lower - 0.5).abs() <= tol && (r.rate_upper - 0.5).abs() <= tol, "{r:?}");
    let cex = extract_counterexamples(&net, p, &r, 3);
    assert!((cex[0][0] - 0.75).abs() <= 1.0 / 1024.0, "{cex:?}");

    let low = property(
        InputBox::from_bounds(&[(0.0, 0.4)]).unwrap(),
        Dnf::atom(OutputAtom::ge(vec![1.0], 0.5)),
    );
    assert_eq!(decide(&net, &low, &cfg(1.0 / 256.0)).unwrap().verdict, Verdict::Unsat);
    let r = adversarial_rate(&net, &low, &cfg(1.0 / 256.0)).unwrap();
    assert!(extract_counterexamples(&net, &low, &r, 5).is_empty());

    let high = property(
        InputBox::from_bounds(&[(0.6, 0.9)]).unwrap(),
        Dnf::atom(OutputAtom::ge(vec![1.0], 0.5)),
    );
    assert_eq!(classify_box(&net, &high.post, &high.pre).unwrap(), BoxClass::Violating);
}

#[test]
fn worker_count_does_not_change_reports() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let net = random_net(&mut rng, 3, &[16, 16], 4, Activation::Relu);
    let p = property(random_box(&mut rng, 3, 1.0), Dnf::atom(OutputAtom::Argmax(1)));
    let one = VerifierConfig { workers: 1, ..cfg(1.0 / 64.0) };
    let four = VerifierConfig { workers: 4, ..cfg(1.0 / 64.0) };
    assert_eq!(adversarial_rate(&net, &p, &one).unwrap(), adversarial_rate(&net, &p, &four).unwrap());
    assert_eq!(decide(&net, &p, &one).unwrap(), decide(&net, &p, &four).unwrap());
}

#[test]
fn truncated_reports_still_conserve_volume() {
    let net = advrate::Network::new(
        2,
        vec![advrate::Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Linear).unwrap()],
    )
    .unwrap();
    let p = property(
        InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
        Dnf::atom(OutputAtom::ge(vec![1.0], 1.0)),
    );
    let r = adversarial_rate(&net, &p, &VerifierConfig { max_boxes: 100, ..cfg(1.0 / 1024.0) }).unwrap();
    assert!(!r.complete);
    assert!((r.total_volume() - 1.0).abs() <= 1e-9, "{r:?}");
    assert!(r.rate_lower <= r.rate_upper);
}

prop_compose! {
    fn small_query()(seed in any::<u64>(), input in 1usize..4, width in 2usize..10, depth in 1usize..3,
                     act in prop_oneof![Just(Activation::Relu), Just(Activation::Tanh), Just(Activation::Swish)])
                    -> (advrate::Network, advrate::verifier::Property, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_net(&mut rng, input, &vec![width; depth], 3, act);
        let post = random_post(&mut rng, 3);
        let pre = random_box(&mut rng, input, 1.5);
        (net, property(pre, post), rng)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn monte_carlo_lies_in_bracket((net, p, mut rng) in small_query()) {
        let r = adversarial_rate(&net, &p, &cfg(1.0 / 64.0)).unwrap();
        prop_assert!((r.total_volume() - 1.0).abs() <= 1e-9);
        let n = 20_000;
        let mc = monte_carlo(&net, &p, n, &mut rng);
        let band = 3.0 * (mc * (1.0 - mc) / n as f64).sqrt() + 1.0 / n as f64;
        prop_assert!(r.rate_lower - band <= mc && mc <= r.rate_upper + band,
            "mc {mc} outside [{}, {}]", r.rate_lower, r.rate_upper);
    }

    #[test]
    fn labelled_boxes_are_sound((net, p, mut rng) in small_query()) {
        let r = adversarial_rate(&net, &p, &cfg(1.0 / 32.0)).unwrap();
        for b in &r.violating_boxes {
            for _ in 0..200 {
                prop_assert!(p.post.holds(&naive_forward(&net, &b.sample(&mut rng))));
            }
        }
        for _ in 0..50 {
            let b = random_sub_box(&p.pre, &mut rng);
            let class = classify_box(&net, &p.post, &b).unwrap();
            if class == BoxClass::Unknown {
                continue;
            }
            for _ in 0..200 {
                let hit = p.post.holds(&naive_forward(&net, &b.sample(&mut rng)));
                prop_assert_eq!(hit, class == BoxClass::Violating);
            }
        }
    }

    #[test]
    fn finer_epsilon_never_grows_unknown((net, p, _rng) in small_query()) {
        let coarse = adversarial_rate(&net, &p, &cfg(1.0 / 16.0)).unwrap();
        let fine = adversarial_rate(&net, &p, &cfg(1.0 / 32.0)).unwrap();
        prop_assert!(fine.unknown_volume <= coarse.unknown_volume + 1e-12);
        prop_assert!(fine.rate_lower >= coarse.rate_lower - 1e-12);
        prop_assert!(fine.rate_upper <= coarse.rate_upper + 1e-12);
    }

    #[test]
    fn decisions_agree_with_rates((net, p, _rng) in small_query()) {
        let c = cfg(1.0 / 32.0);
        let r = adversarial_rate(&net, &p, &c).unwrap();
        match decide(&net, &p, &c).unwrap().verdict {
            Verdict::Sat { witness } => prop_assert!(p.is_witness(&net, &witness)),
            Verdict::Unsat => prop_assert_eq!(r.rate_upper, 0.0),
            Verdict::Unknown { .. } => prop_assert!(r.rate_lower == 0.0 && r.unknown_volume > 0.0),
        }
        for x in extract_counterexamples(&net, &p, &r, 8) {
            prop_assert!(p.is_witness(&net, &x));
        }
    }
}

fn random_sub_box(pre: &InputBox, rng: &mut ChaCha8Rng) -> InputBox {
    use rand::Rng;
    let scale = 0.5f64.powi(rng.gen_range(1..6));
    let bounds: Vec<(f64, f64)> = pre
        .dims()
        .iter()
        .map(|d| {
            let w = d.width() * scale;
            let lo = rng.gen_range(d.lo..=d.hi - w);
            (lo, lo + w)
        })
        .collect();
    InputBox::from_bounds(&bounds).unwrap()
}
