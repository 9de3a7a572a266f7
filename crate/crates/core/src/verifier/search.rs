use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BoxClass, CompiledPost, Dnf, Property, VerifierConfig};
use crate::error::{Error, Result};
use crate::interval::{InputBox, Interval, Scratch};
use crate::network::Network;

/// Classifies one box against the unsafe event `post`.
pub fn classify_box(net: &Network, post: &Dnf, bx: &InputBox) -> Result<BoxClass> {
    if bx.dim_count() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            got: bx.dim_count(),
        });
    }
    let compiled = CompiledPost::new(net, post)?;
    let mut scratch = Scratch::default();
    let (lo, hi) = scratch.hidden(net, &bx.lower(), &bx.upper());
    Ok(compiled.classify(lo, hi))
}

/// Partition of the precondition into safe, violating and unresolved volume.
///
/// Volumes are fractions of the searched region measured over its
/// non-degenerate dimensions, so they always sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub property: String,
    pub epsilon: f64,
    pub safe_volume: f64,
    pub violating_volume: f64,
    pub unknown_volume: f64,
    pub rate_lower: f64,
    pub rate_upper: f64,
    /// Unknown volume counts as unsafe.
    pub adversarial_rate: f64,
    /// False when the box budget ran out before the search finished.
    pub complete: bool,
    pub boxes_classified: usize,
    pub violating_box_count: usize,
    pub unknown_box_count: usize,
    pub violating_boxes: Vec<InputBox>,
    pub unknown_boxes: Vec<InputBox>,
    pub counterexamples: Vec<Vec<f64>>,
}

impl RegionReport {
    pub fn total_volume(&self) -> f64 {
        self.safe_volume + self.violating_volume + self.unknown_volume
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Sat { witness: Vec<f64> },
    Unsat,
    Unknown { residual_volume: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub boxes_classified: usize,
    pub splits: usize,
}

/// Decides whether some input in the precondition produces the unsafe event.
pub fn decide(net: &Network, prop: &Property, cfg: &VerifierConfig) -> Result<Decision> {
    let search = Search::new(net, prop, cfg)?;
    search.run_pool(|| search.decide(vec![prop.pre.clone()]))
}

/// Normalized volume of the precondition on which the unsafe event holds,
/// bracketed by `[rate_lower, rate_upper]`.
pub fn adversarial_rate(net: &Network, prop: &Property, cfg: &VerifierConfig) -> Result<RegionReport> {
    adversarial_rate_partitioned(net, prop, std::slice::from_ref(&prop.pre), cfg)
}

/// Like [`adversarial_rate`], but the search starts from `seeds`, disjoint
/// sub-boxes of the precondition. Widths are still normalized by the full
/// precondition, so a seed is refined exactly as it would be inside a larger
/// run, and the reported volumes are fractions of the seeds' total volume.
pub fn adversarial_rate_partitioned(
    net: &Network,
    prop: &Property,
    seeds: &[InputBox],
    cfg: &VerifierConfig,
) -> Result<RegionReport> {
    let search = Search::new(net, prop, cfg)?;
    for s in seeds {
        if !s.is_subset_of(&prop.pre) {
            return Err(Error::Contract(format!(
                "seed box is not inside the precondition of `{}`",
                prop.name
            )));
        }
    }
    if seeds.is_empty() {
        return Err(Error::Contract("no seed boxes".into()));
    }
    search.run_pool(|| Ok(search.rate(seeds)))
}

/// Up to `k` concrete witnesses from a report: centers of violating boxes,
/// largest first, then any other witnesses the search recorded. Every point
/// is re-checked against the network.
pub fn extract_counterexamples(
    net: &Network,
    prop: &Property,
    report: &RegionReport,
    k: usize,
) -> Vec<Vec<f64>> {
    let mut boxes: Vec<&InputBox> = report.violating_boxes.iter().collect();
    boxes.sort_by(|a, b| free_volume(b).total_cmp(&free_volume(a)));
    let mut out: Vec<Vec<f64>> = Vec::new();
    let candidates = boxes
        .into_iter()
        .map(InputBox::center)
        .chain(report.counterexamples.iter().cloned());
    for x in candidates {
        if out.len() >= k {
            break;
        }
        if !out.contains(&x) && prop.is_witness(net, &x) {
            out.push(x);
        }
    }
    out
}

fn free_volume(b: &InputBox) -> f64 {
    b.dims()
        .iter()
        .map(Interval::width)
        .filter(|w| *w > 0.0)
        .product()
}

/// What happened to one box in one round.
#[derive(Debug, Clone, Copy)]
enum Outcome {
    Safe,
    Violating { witness: bool },
    Split(usize),
    Unresolved { witness: bool },
}

/// Boxes stored flat as `[lo_0..lo_n, hi_0..hi_n]`, with a normalized volume
/// per box.
struct Frontier {
    n: usize,
    bounds: Vec<f64>,
    volumes: Vec<f64>,
}

impl Frontier {
    fn new(n: usize) -> Self {
        Frontier {
            n,
            bounds: Vec::new(),
            volumes: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.volumes.len()
    }

    fn get(&self, i: usize) -> &[f64] {
        &self.bounds[2 * self.n * i..2 * self.n * (i + 1)]
    }

    fn split_off(&mut self, at: usize) -> Frontier {
        Frontier {
            n: self.n,
            bounds: self.bounds.split_off(2 * self.n * at),
            volumes: self.volumes.split_off(at),
        }
    }

    fn push(&mut self, b: &[f64], volume: f64) {
        self.bounds.extend_from_slice(b);
        self.volumes.push(volume);
    }

    fn push_halves(&mut self, b: &[f64], dim: usize, volume: f64) {
        let n = self.n;
        let mid = 0.5 * (b[dim] + b[n + dim]);
        let start = self.bounds.len();
        self.bounds.extend_from_slice(b);
        self.bounds[start + n + dim] = mid;
        let start = self.bounds.len();
        self.bounds.extend_from_slice(b);
        self.bounds[start + dim] = mid;
        self.volumes.push(0.5 * volume);
        self.volumes.push(0.5 * volume);
    }

    fn to_box(&self, i: usize) -> InputBox {
        let b = self.get(i);
        let (lo, hi) = b.split_at(self.n);
        let dims = lo
            .iter()
            .zip(hi)
            .map(|(&l, &h)| Interval { lo: l, hi: h })
            .collect();
        InputBox::new(dims).expect("frontier boxes stay well-formed")
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Rate,
    Decide,
}

struct Search<'a> {
    net: &'a Network,
    prop: &'a Property,
    post: CompiledPost,
    /// Precondition widths; zero marks a pinned dimension.
    ref_width: Vec<f64>,
    cfg: &'a VerifierConfig,
}

const PAR_THRESHOLD: usize = 64;

impl<'a> Search<'a> {
    fn new(net: &'a Network, prop: &'a Property, cfg: &'a VerifierConfig) -> Result<Self> {
        cfg.validate()?;
        prop.validate_for(net)?;
        let post = CompiledPost::new(net, &prop.post)?;
        let ref_width = prop.pre.dims().iter().map(Interval::width).collect();
        Ok(Search {
            net,
            prop,
            post,
            ref_width,
            cfg,
        })
    }

    fn run_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        if self.cfg.workers == 0 {
            return f();
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(f)
    }

    fn normalized_volume(&self, b: &InputBox) -> f64 {
        b.dims()
            .iter()
            .zip(&self.ref_width)
            .filter(|(_, r)| **r > 0.0)
            .map(|(d, r)| d.width() / r)
            .product()
    }

    fn seed_frontier(&self, seeds: &[InputBox]) -> Frontier {
        let n = self.net.input_dim();
        let mut frontier = Frontier::new(n);
        let vols: Vec<f64> = seeds.iter().map(|s| self.normalized_volume(s)).collect();
        let total: f64 = vols.iter().sum();
        for (s, v) in seeds.iter().zip(&vols) {
            let mut flat = s.lower();
            flat.extend(s.upper());
            let share = if total > 0.0 {
                v / total
            } else {
                1.0 / seeds.len() as f64
            };
            frontier.push(&flat, share);
        }
        frontier
    }

    /// Widest dimension by normalized width, lowest index on ties.
    fn widest(&self, b: &[f64]) -> (usize, f64) {
        let n = self.ref_width.len();
        let mut best = (0, 0.0);
        for (d, &r) in self.ref_width.iter().enumerate() {
            if r > 0.0 {
                let w = (b[n + d] - b[d]) / r;
                if w > best.1 {
                    best = (d, w);
                }
            }
        }
        best
    }

    fn concrete_at_center(&self, b: &[f64]) -> bool {
        let n = self.ref_width.len();
        let center: Vec<f64> = (0..n).map(|d| 0.5 * (b[d] + b[n + d])).collect();
        self.prop.post.holds(&self.net.eval(&center))
    }

    fn examine(&self, b: &[f64], scratch: &mut Scratch, mode: Mode) -> Outcome {
        let n = self.ref_width.len();
        let (lo, hi) = scratch.hidden(self.net, &b[..n], &b[n..]);
        match self.post.classify(lo, hi) {
            BoxClass::Safe => Outcome::Safe,
            BoxClass::Violating => Outcome::Violating {
                witness: self.concrete_at_center(b),
            },
            BoxClass::Unknown => {
                let (dim, width) = self.widest(b);
                let splittable = width > self.cfg.epsilon;
                let witness = match mode {
                    Mode::Decide => self.concrete_at_center(b),
                    Mode::Rate if !splittable => self.concrete_at_center(b),
                    Mode::Rate => false,
                };
                if mode == Mode::Decide && witness {
                    Outcome::Unresolved { witness }
                } else if splittable {
                    Outcome::Split(dim)
                } else {
                    Outcome::Unresolved { witness }
                }
            }
        }
    }

    fn examine_all(&self, frontier: &Frontier, count: usize, mode: Mode) -> Vec<Outcome> {
        if count < PAR_THRESHOLD {
            let mut scratch = Scratch::default();
            (0..count)
                .map(|i| self.examine(frontier.get(i), &mut scratch, mode))
                .collect()
        } else {
            (0..count)
                .into_par_iter()
                .with_min_len(16)
                .map_init(Scratch::default, |scratch, i| {
                    self.examine(frontier.get(i), scratch, mode)
                })
                .collect()
        }
    }

    fn center_of(&self, frontier: &Frontier, i: usize) -> Vec<f64> {
        let n = frontier.n;
        let b = frontier.get(i);
        (0..n).map(|d| 0.5 * (b[d] + b[n + d])).collect()
    }

    fn rate(&self, seeds: &[InputBox]) -> RegionReport {
        let cap = self.cfg.max_stored;
        let mut report = RegionReport {
            property: self.prop.name.clone(),
            epsilon: self.cfg.epsilon,
            safe_volume: 0.0,
            violating_volume: 0.0,
            unknown_volume: 0.0,
            rate_lower: 0.0,
            rate_upper: 0.0,
            adversarial_rate: 0.0,
            complete: true,
            boxes_classified: 0,
            violating_box_count: 0,
            unknown_box_count: 0,
            violating_boxes: Vec::new(),
            unknown_boxes: Vec::new(),
            counterexamples: Vec::new(),
        };
        let mut work = Work::new(self.seed_frontier(seeds));
        while let Some(frontier) = work.next_chunk() {
            let count = frontier.len().min(self.cfg.max_boxes - report.boxes_classified);
            let outcomes = self.examine_all(&frontier, count, Mode::Rate);
            report.boxes_classified += count;
            let mut next = Frontier::new(frontier.n);
            for (i, outcome) in outcomes.into_iter().enumerate() {
                let v = frontier.volumes[i];
                match outcome {
                    Outcome::Safe => report.safe_volume += v,
                    Outcome::Violating { witness } => {
                        report.violating_volume += v;
                        report.violating_box_count += 1;
                        if report.violating_boxes.len() < cap {
                            report.violating_boxes.push(frontier.to_box(i));
                        }
                        if witness && report.counterexamples.len() < cap {
                            report.counterexamples.push(self.center_of(&frontier, i));
                        }
                    }
                    Outcome::Split(dim) => next.push_halves(frontier.get(i), dim, v),
                    Outcome::Unresolved { witness } => {
                        report.unknown_volume += v;
                        report.unknown_box_count += 1;
                        if report.unknown_boxes.len() < cap {
                            report.unknown_boxes.push(frontier.to_box(i));
                        }
                        if witness && report.counterexamples.len() < cap {
                            report.counterexamples.push(self.center_of(&frontier, i));
                        }
                    }
                }
            }
            work.push(next);
            if count < frontier.len() {
                // out of budget: whatever is left stays unresolved
                report.complete = false;
                let rest = std::iter::once((&frontier, count)).chain(work.pending().map(|f| (f, 0)));
                for (f, from) in rest {
                    for i in from..f.len() {
                        report.unknown_volume += f.volumes[i];
                        report.unknown_box_count += 1;
                        if report.unknown_boxes.len() < cap {
                            report.unknown_boxes.push(f.to_box(i));
                        }
                    }
                }
                break;
            }
        }
        report.rate_lower = report.violating_volume;
        report.rate_upper = (report.violating_volume + report.unknown_volume).min(1.0);
        report.adversarial_rate = report.rate_upper;
        report
    }

    fn decide(&self, seeds: Vec<InputBox>) -> Result<Decision> {
        let mut work = Work::new(self.seed_frontier(&seeds));
        let mut classified = 0usize;
        let mut splits = 0usize;
        let mut residual = 0.0;
        while let Some(frontier) = work.next_chunk() {
            let count = frontier.len().min(self.cfg.max_boxes - classified);
            let outcomes = self.examine_all(&frontier, count, Mode::Decide);
            classified += count;
            let mut next = Frontier::new(frontier.n);
            for (i, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Outcome::Safe => {}
                    Outcome::Violating { witness } | Outcome::Unresolved { witness }
                        if witness =>
                    {
                        return Ok(Decision {
                            verdict: super::Verdict::Sat {
                                witness: self.center_of(&frontier, i),
                            },
                            boxes_classified: classified,
                            splits,
                        });
                    }
                    Outcome::Violating { .. } => {
                        // rounding made the center miss; refine around it
                        let (dim, width) = self.widest(frontier.get(i));
                        if width > 0.0 {
                            next.push_halves(frontier.get(i), dim, frontier.volumes[i]);
                            splits += 1;
                        } else {
                            residual += frontier.volumes[i];
                        }
                    }
                    Outcome::Split(dim) => {
                        next.push_halves(frontier.get(i), dim, frontier.volumes[i]);
                        splits += 1;
                    }
                    Outcome::Unresolved { .. } => residual += frontier.volumes[i],
                }
            }
            work.push(next);
            if count < frontier.len() {
                residual += frontier.volumes[count..].iter().sum::<f64>();
                residual += work.pending().flat_map(|f| f.volumes.iter()).sum::<f64>();
                break;
            }
        }
        let verdict = if residual > 0.0 {
            super::Verdict::Unknown {
                residual_volume: residual,
            }
        } else {
            super::Verdict::Unsat
        };
        Ok(Decision {
            verdict,
            boxes_classified: classified,
            splits,
        })
    }
}

/// Boxes examined per round; larger frontiers wait on a stack so memory
/// stays bounded by depth times chunk size.
const CHUNK: usize = 1 << 15;

struct Work {
    stack: Vec<Frontier>,
}

impl Work {
    fn new(seed: Frontier) -> Self {
        Work { stack: vec![seed] }
    }

    fn next_chunk(&mut self) -> Option<Frontier> {
        let mut f = self.stack.pop()?;
        if f.len() > CHUNK {
            let rest = f.split_off(CHUNK);
            self.stack.push(rest);
        }
        Some(f)
    }

    fn push(&mut self, f: Frontier) {
        if f.len() > 0 {
            self.stack.push(f);
        }
    }

    fn pending(&self) -> impl Iterator<Item = &Frontier> {
        self.stack.iter().rev()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, Layer};
    use crate::verifier::OutputAtom;

    fn identity() -> Network {
        Network::new(
            1,
            vec![Layer::new(vec![vec![1.0]], vec![0.0], Activation::Linear).unwrap()],
        )
        .unwrap()
    }

    fn fig2() -> Network {
        Network::new(
            2,
            vec![
                Layer::new(
                    vec![vec![5.0, -1.0], vec![-1.0, 3.0]],
                    vec![0.0, 0.0],
                    Activation::Relu,
                )
                .unwrap(),
                Layer::new(vec![vec![-1.0, 3.0]], vec![0.0], Activation::Linear).unwrap(),
            ],
        )
        .unwrap()
    }

    fn half_query(lo: f64, hi: f64) -> Property {
        Property::new(
            "y>=0.5",
            InputBox::from_bounds(&[(lo, hi)]).unwrap(),
            Dnf::atom(OutputAtom::ge(vec![1.0], 0.5)),
        )
        .unwrap()
    }

    #[test]
    fn classify_examples() {
        let q = Dnf::atom(OutputAtom::ge(vec![1.0], 10.0));
        let sq = InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap();
        assert_eq!(classify_box(&fig2(), &q, &sq).unwrap(), BoxClass::Safe);
        let q = Dnf::atom(OutputAtom::ge(vec![1.0], 0.5));
        let b = InputBox::from_bounds(&[(0.6, 0.9)]).unwrap();
        assert_eq!(classify_box(&identity(), &q, &b).unwrap(), BoxClass::Violating);
        let b = InputBox::from_bounds(&[(0.0, 1.0)]).unwrap();
        assert_eq!(classify_box(&identity(), &q, &b).unwrap(), BoxClass::Unknown);
        assert!(classify_box(&fig2(), &q, &b).is_err());
    }

    #[test]
    fn strictness_at_boundary() {
        let b = InputBox::from_bounds(&[(0.5, 1.0)]).unwrap();
        let ge = Dnf::atom(OutputAtom::ge(vec![1.0], 0.5));
        let gt = Dnf::atom(OutputAtom::gt(vec![1.0], 0.5));
        assert_eq!(classify_box(&identity(), &ge, &b).unwrap(), BoxClass::Violating);
        assert_eq!(classify_box(&identity(), &gt, &b).unwrap(), BoxClass::Unknown);
    }

    #[test]
    fn decide_unsat_after_splits() {
        let d = decide(&identity(), &half_query(0.0, 0.4), &VerifierConfig::default()).unwrap();
        assert_eq!(d.verdict, Verdict::Unsat);
        let d = decide(
            &fig2(),
            &Property::new(
                "a>=10",
                InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
                Dnf::atom(OutputAtom::ge(vec![1.0], 10.0)),
            )
            .unwrap(),
            &VerifierConfig::default(),
        )
        .unwrap();
        assert_eq!(d.verdict, Verdict::Unsat);
        assert_eq!(d.splits, 0);
        assert_eq!(d.boxes_classified, 1);
    }

    #[test]
    fn rate_on_identity() {
        let cfg = VerifierConfig::with_epsilon(1.0 / 1024.0);
        let r = adversarial_rate(&identity(), &half_query(0.0, 1.0), &cfg).unwrap();
        assert!(r.complete);
        assert!((r.total_volume() - 1.0).abs() < 1e-12);
        assert!((r.rate_lower - 0.5).abs() <= 1.0 / 512.0, "{}", r.rate_lower);
        assert!((r.rate_upper - 0.5).abs() <= 1.0 / 512.0, "{}", r.rate_upper);
        let cx = extract_counterexamples(&identity(), &half_query(0.0, 1.0), &r, 3);
        assert_eq!(cx[0], vec![0.75]);
        assert!(cx.iter().all(|x| x[0] >= 0.5));
    }

    #[test]
    fn budget_truncation_conserves_volume() {
        let cfg = VerifierConfig {
            epsilon: 1.0 / 1024.0,
            max_boxes: 5,
            ..Default::default()
        };
        let r = adversarial_rate(&identity(), &half_query(0.0, 1.0), &cfg).unwrap();
        assert!(!r.complete);
        assert_eq!(r.boxes_classified, 5);
        assert!((r.total_volume() - 1.0).abs() < 1e-12);
        assert!(r.rate_lower <= r.rate_upper);
        let d = decide(&identity(), &half_query(0.0, 0.5), &cfg).unwrap();
        assert!(matches!(d.verdict, Verdict::Unknown { residual_volume } if residual_volume > 0.0));
    }

    #[test]
    fn pinned_dimensions_are_not_split() {
        // y = x0 + x1 with x1 pinned at 0.25
        let net = Network::new(
            2,
            vec![Layer::new(vec![vec![1.0, 1.0]], vec![0.0], Activation::Linear).unwrap()],
        )
        .unwrap();
        let prop = Property::new(
            "pinned",
            InputBox::from_bounds(&[(0.0, 1.0), (0.25, 0.25)]).unwrap(),
            Dnf::atom(OutputAtom::ge(vec![1.0], 0.75)),
        )
        .unwrap();
        let r = adversarial_rate(&net, &prop, &VerifierConfig::with_epsilon(1.0 / 1024.0)).unwrap();
        assert!((r.rate_lower - 0.5).abs() <= 1.0 / 512.0);
        assert!(r.violating_boxes.iter().all(|b| b.dims()[1].is_point()));
    }

    #[test]
    fn partitioned_run_matches_split_geometry() {
        let prop = half_query(0.0, 1.0);
        let cfg = VerifierConfig::with_epsilon(1.0 / 64.0);
        let whole = adversarial_rate(&identity(), &prop, &cfg).unwrap();
        let halves = [
            InputBox::from_bounds(&[(0.0, 0.5)]).unwrap(),
            InputBox::from_bounds(&[(0.5, 1.0)]).unwrap(),
        ];
        let joint = adversarial_rate_partitioned(&identity(), &prop, &halves, &cfg).unwrap();
        assert!((whole.rate_upper - joint.rate_upper).abs() < 1e-12);
        let parts: Vec<f64> = halves
            .iter()
            .map(|h| {
                adversarial_rate_partitioned(&identity(), &prop, std::slice::from_ref(h), &cfg)
                    .unwrap()
                    .rate_upper
            })
            .collect();
        assert!((0.5 * (parts[0] + parts[1]) - joint.rate_upper).abs() < 1e-12);
        let outside = InputBox::from_bounds(&[(0.5, 1.5)]).unwrap();
        assert!(adversarial_rate_partitioned(&identity(), &prop, &[outside], &cfg).is_err());
    }

    #[test]
    fn worker_count_does_not_change_report() {
        let net = fig2();
        let prop = Property::new(
            "a>=5",
            InputBox::from_bounds(&[(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            Dnf::atom(OutputAtom::ge(vec![1.0], 5.0)),
        )
        .unwrap();
        let mut cfg = VerifierConfig::with_epsilon(1.0 / 256.0);
        cfg.workers = 1;
        let a = adversarial_rate(&net, &prop, &cfg).unwrap();
        cfg.workers = 4;
        let b = adversarial_rate(&net, &prop, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
