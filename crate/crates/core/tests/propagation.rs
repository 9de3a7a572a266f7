mod common;

use advrate::interval::propagate_layers;
use advrate::io::load_network;
use advrate::{propagate, propagate_functional, Activation, InputBox, Interval, Layer, Network};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn iv(lo: f64, hi: f64) -> Interval {
    Interval::new(lo, hi).unwrap()
}

#[test]
fn fig2_hidden_and_output_bounds_are_exact() {
    let net = load_network(fixture("fig2_net.json")).unwrap();
    let unit = InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
    let layers = propagate_layers(&net, &unit).unwrap();
    assert_eq!(layers[0].pre_activation, vec![iv(-1.0, 5.0), iv(-1.0, 3.0)]);
    assert_eq!(layers[0].post_activation, vec![iv(0.0, 5.0), iv(0.0, 3.0)]);
    assert_eq!(propagate(&net, &unit).unwrap(), vec![iv(-5.0, 9.0)]);
    assert_eq!(propagate_functional(&net, &unit, &[1.0], 10.0).unwrap(), iv(-15.0, -1.0));
}

#[test]
fn fig1_forward_and_unit_box() {
    let net = load_network(fixture("fig1_net.json")).unwrap();
    let layers = propagate_layers(&net, &InputBox::point(&[2.0, -1.0])).unwrap();
    assert_eq!(layers[0].pre_activation, vec![iv(11.0, 11.0), iv(-5.0, -5.0)]);
    assert_eq!(layers[0].post_activation, vec![iv(11.0, 11.0), iv(0.0, 0.0)]);
    assert_eq!(net.forward(&[2.0, -1.0]).unwrap(), vec![11.0]);

    let unit = InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
    let out = propagate(&net, &unit).unwrap();
    assert_eq!(out, vec![iv(0.0, 14.0)]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let x = unit.sample(&mut rng);
        assert!(out[0].contains(naive_forward(&net, &x)[0]));
    }
}

#[test]
fn correlated_outputs_cancel_in_functional_bounds() {
    let hidden = Layer::new(vec![vec![1.0, -2.0]], vec![0.5], Activation::Relu).unwrap();
    let out = Layer::new(vec![vec![1.0], vec![1.0]], vec![0.0, 0.0], Activation::Linear).unwrap();
    let net = Network::new(2, vec![hidden, out]).unwrap();
    let bx = InputBox::from_bounds(&[(-1.0, 1.0), (-1.0, 1.0)]).unwrap();
    assert_eq!(propagate_functional(&net, &bx, &[1.0, -1.0], 0.0).unwrap(), iv(0.0, 0.0));
    let y = propagate(&net, &bx).unwrap();
    assert!(y[0].hi - y[1].lo > 0.0);
}

#[test]
fn functional_bounds_tighter_than_naive_on_random_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = random_net(&mut rng, 8, &[32, 32], 4, Activation::Relu);
    let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for _ in 0..200 {
        let bx = random_box(&mut rng, 8, 1.0);
        let f = propagate_functional(&net, &bx, &c, 0.3).unwrap();
        let naive = naive_propagate(&net, &bx);
        let (mut lo, mut hi) = (-0.3, -0.3);
        for (cj, &(l, u)) in c.iter().zip(&naive) {
            lo += (cj * l).min(cj * u);
            hi += (cj * l).max(cj * u);
        }
        assert!(interval_contains(&iv(lo, hi), (f.lo, f.hi), 1e-9), "{f:?} vs [{lo}, {hi}]");
    }
}

#[test]
fn propagation_matches_naive_interval_arithmetic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for act in [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Swish] {
        let net = random_net(&mut rng, 6, &[16, 16], 3, act);
        for _ in 0..50 {
            let bx = random_box(&mut rng, 6, 2.0);
            let ours = propagate(&net, &bx).unwrap();
            for (o, (l, u)) in ours.iter().zip(naive_propagate(&net, &bx)) {
                assert!((o.lo - l).abs() <= 1e-12 * (1.0 + l.abs()), "{act:?} lo {} vs {l}", o.lo);
                assert!((o.hi - u).abs() <= 1e-12 * (1.0 + u.abs()), "{act:?} hi {} vs {u}", o.hi);
            }
        }
    }
}

fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Relu),
        Just(Activation::Tanh),
        Just(Activation::Sigmoid),
        Just(Activation::Swish),
        Just(Activation::Linear),
        (0.01f64..0.3).prop_map(|s| Activation::leaky(s).unwrap()),
    ]
}

prop_compose! {
    fn net_and_box()(seed in any::<u64>(), input in 1usize..6, depth in 1usize..3, width in 1usize..12,
                     output in 1usize..5, act in activation())
                    -> (Network, InputBox, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = vec![width; depth];
        let net = random_net(&mut rng, input, &hidden, output, act);
        let bx = random_box(&mut rng, input, 3.0);
        (net, bx, rng)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn sampled_outputs_lie_in_bounds((net, bx, mut rng) in net_and_box()) {
        let bounds = propagate(&net, &bx).unwrap();
        for _ in 0..10_000 {
            let y = naive_forward(&net, &bx.sample(&mut rng));
            for (b, v) in bounds.iter().zip(&y) {
                prop_assert!(b.lo - 1e-9 <= *v && *v <= b.hi + 1e-9, "{v} outside {b:?}");
            }
        }
    }

    #[test]
    fn sub_boxes_have_nested_bounds((net, bx, mut rng) in net_and_box()) {
        let inner: Vec<(f64, f64)> = bx.dims().iter().map(|d| {
            let a = rng.gen_range(d.lo..=d.hi);
            let b = rng.gen_range(d.lo..=d.hi);
            (a.min(b), a.max(b))
        }).collect();
        let inner = InputBox::from_bounds(&inner).unwrap();
        let outer = propagate(&net, &bx).unwrap();
        for (i, o) in propagate(&net, &inner).unwrap().iter().zip(&outer) {
            prop_assert!(interval_contains(o, (i.lo, i.hi), 1e-9), "{i:?} not in {o:?}");
        }
    }

    #[test]
    fn halves_refine_the_parent((net, bx, _rng) in net_and_box(), dim_pick in any::<prop::sample::Index>()) {
        let dim = dim_pick.index(bx.dim_count());
        let (l, r) = bx.bisect(dim);
        let parent = propagate(&net, &bx).unwrap();
        let left = propagate(&net, &l).unwrap();
        let right = propagate(&net, &r).unwrap();
        for ((p, a), b) in parent.iter().zip(&left).zip(&right) {
            let h = a.hull(b);
            prop_assert!(interval_contains(p, (h.lo, h.hi), 1e-9), "{h:?} not in {p:?}");
        }
    }

    #[test]
    fn point_box_collapses_to_forward((net, bx, mut rng) in net_and_box()) {
        let x = bx.sample(&mut rng);
        let y = net.forward(&x).unwrap();
        for (b, v) in propagate(&net, &InputBox::point(&x)).unwrap().iter().zip(&y) {
            prop_assert!((b.lo - v).abs() <= 1e-9 && (b.hi - v).abs() <= 1e-9);
        }
        for (a, b) in naive_forward(&net, &x).iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn functional_within_naive_bounds((net, bx, mut rng) in net_and_box()) {
        let c: Vec<f64> = (0..net.output_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = propagate_functional(&net, &bx, &c, 0.0).unwrap();
        let y = propagate(&net, &bx).unwrap();
        let lo: f64 = c.iter().zip(&y).map(|(c, i)| (c * i.lo).min(c * i.hi)).sum();
        let hi: f64 = c.iter().zip(&y).map(|(c, i)| (c * i.lo).max(c * i.hi)).sum();
        prop_assert!(interval_contains(&iv(lo, hi), (f.lo, f.hi), 1e-9));
        for _ in 0..200 {
            let v: f64 = c.iter().zip(net.forward(&bx.sample(&mut rng)).unwrap()).map(|(c, y)| c * y).sum();
            prop_assert!(f.lo - 1e-9 <= v && v <= f.hi + 1e-9);
        }
    }
}
