//! Random instance generators and oracle comparisons shared by the property
//! tests and the acceptance run.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dpvis_core::analytics::{self, Scope};
use dpvis_core::hmm::{
    self, DecodedSubject, DecodedVisit, Decoding, EmissionKind, EmissionParams, GridSequence, HmmConfig, HmmModel,
    TransitionMask,
};
use dpvis_core::patterns::{self, StateSequence};
use dpvis_core::query::{self, EdgeConstraint, EdgeOrder, NodeAt, NodeConstraint, SequenceQuery, TimeWindow};
use dpvis_core::{layout, synth, Dataset};
use dpvis_testkit as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn distribution(rng: &mut impl Rng, allowed: &[bool]) -> Vec<f64> {
    let raw: Vec<f64> = allowed
        .iter()
        .map(|&a| if a { rng.random_range(0.05..1.0) } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random model with 1..=3 states, up to two Bernoulli and one Gaussian
/// variable, and a random transition mask.
pub fn random_model(rng: &mut impl Rng) -> HmmModel {
    let k = rng.random_range(1..=3);
    let n_bern = rng.random_range(1..=2);
    let n_gauss = rng.random_range(0..=1);
    let mut kinds = BTreeMap::new();
    for v in 0..n_bern {
        kinds.insert(format!("b{v}"), EmissionKind::Bernoulli);
    }
    for v in 0..n_gauss {
        kinds.insert(format!("g{v}"), EmissionKind::Gaussian);
    }
    let mask: Vec<Vec<u8>> = (0..k)
        .map(|i| (0..k).map(|j| u8::from(i == j || rng.random_bool(0.6))).collect())
        .collect();
    let config = HmmConfig::new(k, kinds.clone()).with_mask(TransitionMask::from_rows(mask.clone()));
    let emissions = kinds
        .iter()
        .map(|(name, kind)| {
            let params = match kind {
                EmissionKind::Bernoulli => EmissionParams::Bernoulli {
                    p: (0..k).map(|_| rng.random_range(0.05..0.95)).collect(),
                },
                EmissionKind::Gaussian => EmissionParams::Gaussian {
                    mean: (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    var: (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
                },
            };
            (name.clone(), params)
        })
        .collect();
    let model = HmmModel {
        config,
        pi: distribution(rng, &vec![true; k]),
        trans: mask
            .iter()
            .map(|row| distribution(rng, &row.iter().map(|&m| m == 1).collect::<Vec<_>>()))
            .collect(),
        emissions,
        train_loglik: 0.0,
    };
    model.validate().expect("generated model is valid");
    model
}

/// Random grid of 1..=6 steps; some steps are unvisited and some cells missing.
pub fn random_grid(rng: &mut impl Rng, model: &HmmModel) -> GridSequence {
    let t = rng.random_range(1..=6);
    let kinds: Vec<EmissionKind> = model.config.emissions.values().copied().collect();
    let mut visit_steps = Vec::new();
    let steps = (0..t)
        .map(|step| {
            if step > 0 && rng.random_bool(0.25) {
                return vec![None; kinds.len()];
            }
            visit_steps.push(step);
            kinds
                .iter()
                .map(|kind| {
                    (!rng.random_bool(0.2)).then(|| match kind {
                        EmissionKind::Bernoulli => f64::from(u8::from(rng.random_bool(0.5))),
                        EmissionKind::Gaussian => rng.random_range(-3.0..3.0),
                    })
                })
                .collect()
        })
        .collect();
    GridSequence {
        subject_id: "s".into(),
        origin: 0,
        steps,
        visit_steps,
    }
}

/// Emission likelihood table computed directly from the densities.
fn likelihoods(model: &HmmModel, seq: &GridSequence) -> Vec<Vec<f64>> {
    let k = model.n_states();
    seq.steps
        .iter()
        .map(|obs| {
            (0..k)
                .map(|s| {
                    obs.iter()
                        .zip(model.emissions.values())
                        .map(|(x, e)| match (x, e) {
                            (None, _) => 1.0,
                            (Some(x), EmissionParams::Bernoulli { p }) => oracle::hmm::bernoulli(p[s], *x),
                            (Some(x), EmissionParams::Gaussian { mean, var }) => {
                                oracle::hmm::gaussian(mean[s], var[s], *x)
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect()
}

/// Log-likelihood, posteriors and Viterbi path against path enumeration.
pub fn check_inference(model: &HmmModel, seq: &GridSequence, tol: f64) -> Result<(), String> {
    let expected = oracle::hmm::enumerate(&model.pi, &model.trans, &likelihoods(model, seq));
    let got = hmm::posteriors(model, seq);
    if (got.loglik - expected.loglik).abs() > tol {
        return Err(format!("loglik {} vs enumerated {}", got.loglik, expected.loglik));
    }
    for (t, (g, e)) in got.gamma.iter().zip(&expected.posteriors).enumerate() {
        for (s, (a, b)) in g.iter().zip(e).enumerate() {
            if (a - b).abs() > tol {
                return Err(format!("posterior[{t}][{s}] {a} vs enumerated {b}"));
            }
        }
    }
    let path = hmm::viterbi(model, seq);
    if path != expected.best_path {
        return Err(format!("viterbi {path:?} vs enumerated {:?}", expected.best_path));
    }
    Ok(())
}

/// Up to 10 sequences over 4 states, each of length 1..=8.
pub fn random_sequences(rng: &mut impl Rng) -> Vec<StateSequence> {
    let n = rng.random_range(1..=10);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=8);
            StateSequence {
                subject_id: format!("s{i}"),
                states: (0..len).map(|_| rng.random_range(0..4)).collect(),
            }
        })
        .collect()
}

/// Closed pattern set and ranked output against brute-force enumeration.
pub fn check_patterns(seqs: &[StateSequence], min_support: usize, top_n: usize) -> Result<(), String> {
    let plain: Vec<Vec<usize>> = seqs.iter().map(|s| s.states.clone()).collect();
    let expected = oracle::patterns::closed_patterns(&plain, min_support);
    let got: BTreeMap<Vec<usize>, usize> = patterns::mine_closed(seqs, min_support)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| (p.states, p.support))
        .collect();
    if got != expected {
        let missing: Vec<_> = expected.iter().filter(|(p, _)| !got.contains_key(*p)).collect();
        let extra: Vec<_> = got.iter().filter(|(p, _)| !expected.contains_key(*p)).collect();
        return Err(format!("closed sets differ on {plain:?} (min {min_support}): missing {missing:?}, extra {extra:?}"));
    }
    let mut ranked: Vec<(Vec<usize>, usize)> = expected.into_iter().filter(|(p, _)| p.len() >= 2).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_n);
    let top: Vec<(Vec<usize>, usize)> = patterns::mine_patterns(seqs, min_support, top_n)
        .map_err(|e| e.to_string())?
        .into_iter()
        .map(|p| (p.states, p.support))
        .collect();
    if top != ranked {
        return Err(format!("ranked output differs: {top:?} vs {ranked:?}"));
    }
    Ok(())
}

fn random_posterior(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    distribution(rng, &vec![true; k])
}

/// Subject with up to 8 visits over 4 states and a query of up to 4 nodes.
pub fn random_query_instance(rng: &mut impl Rng) -> (DecodedSubject, SequenceQuery) {
    let n = rng.random_range(1..=8);
    let mut age = rng.random_range(0.0..24.0f64).round();
    let visits = (0..n)
        .map(|_| {
            age += rng.random_range(1..=24) as f64;
            let mut posterior = random_posterior(rng, 4);
            let state = rng.random_range(0..4);
            // Make the labelled state likely, as Viterbi labels usually are.
            posterior[state] += 1.0;
            let total: f64 = posterior.iter().sum();
            posterior.iter_mut().for_each(|p| *p /= total);
            DecodedVisit { age, state, posterior }
        })
        .collect();
    let m = rng.random_range(1..=4);
    let nodes = (0..m)
        .map(|_| {
            let lo = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0..120) as f64 };
            let time_window = if rng.random_bool(0.5) {
                TimeWindow::at_least(lo)
            } else {
                TimeWindow::new(lo, lo + rng.random_range(0..150) as f64)
            };
            NodeConstraint {
                state: rng.random_range(0..4),
                time_window,
                node_at: [NodeAt::Any, NodeAt::Any, NodeAt::Begin, NodeAt::End][rng.random_range(0..4)],
                min_posterior: [0.0, 0.0, 0.3, 0.5, 0.75][rng.random_range(0..5)],
            }
        })
        .collect();
    let edges = (1..m)
        .map(|_| EdgeConstraint {
            max_gap: rng.random_bool(0.4).then(|| rng.random_range(0..60) as f64),
            order: if rng.random_bool(0.3) { EdgeOrder::NextVisit } else { EdgeOrder::Eventually },
        })
        .collect();
    (
        DecodedSubject {
            subject_id: "s".into(),
            visits,
            loglik: 0.0,
        },
        SequenceQuery { nodes, edges },
    )
}

pub fn naive_match(subject: &DecodedSubject, q: &SequenceQuery) -> bool {
    use oracle::query::{Edge, Node, Position, Visit};
    let visits: Vec<Visit> = subject
        .visits
        .iter()
        .map(|v| Visit {
            age: v.age,
            state: v.state,
            posterior: v.posterior.clone(),
        })
        .collect();
    let nodes: Vec<Node> = q
        .nodes
        .iter()
        .map(|n| Node {
            state: n.state,
            min_age: n.time_window.min,
            max_age: n.time_window.max,
            position: match n.node_at {
                NodeAt::Any => Position::Any,
                NodeAt::Begin => Position::First,
                NodeAt::End => Position::Last,
            },
            min_posterior: n.min_posterior,
        })
        .collect();
    let edges: Vec<Edge> = q
        .edges
        .iter()
        .map(|e| Edge {
            max_gap: e.max_gap,
            consecutive: e.order == EdgeOrder::NextVisit,
        })
        .collect();
    oracle::query::naive_match(&visits, &nodes, &edges)
}

pub fn check_query(subject: &DecodedSubject, q: &SequenceQuery) -> Result<(), String> {
    let got = query::match_sequence(subject, q).map_err(|e| e.to_string())?;
    let expected = naive_match(subject, q);
    if got != expected {
        return Err(format!("match_sequence {got} vs naive {expected} for {q:?} on {subject:?}"));
    }
    Ok(())
}

/// A stricter variant of `q`: raised posterior thresholds, narrowed windows,
/// tighter gaps, or an extra node.
pub fn tighten(rng: &mut impl Rng, q: &SequenceQuery) -> SequenceQuery {
    let mut t = q.clone();
    match rng.random_range(0..4) {
        0 => {
            let i = rng.random_range(0..t.nodes.len());
            t.nodes[i].min_posterior = (t.nodes[i].min_posterior + 0.2).min(1.0);
        }
        1 => {
            let i = rng.random_range(0..t.nodes.len());
            let w = &mut t.nodes[i].time_window;
            w.min += 12.0;
            w.max = Some(w.max.map_or(w.min + 120.0, |m| m.max(w.min)));
        }
        2 if !t.edges.is_empty() => {
            let i = rng.random_range(0..t.edges.len());
            t.edges[i].max_gap = Some(t.edges[i].max_gap.map_or(24.0, |g| g / 2.0));
        }
        _ => {
            t.nodes.push(NodeConstraint::state(rng.random_range(0..4)));
            t.edges.push(EdgeConstraint::default());
        }
    }
    t
}

/// The worked example query: state 8 at the first visit
/// before 80 months, later state 10 at the last visit after 120 months,
/// both with posterior at least 0.75.
pub fn example_query_json() -> &'static str {
    r#"{
      "type": "sequence_matches",
      "query": {
        "nodes": [
          {"state": 8, "time_window": {"min": 0, "max": 80}, "node_at": "begin", "min_posterior": 0.75},
          {"state": 10, "time_window": {"min": 120, "max": null}, "node_at": "end", "min_posterior": 0.75}
        ],
        "edges": [{"order": "eventually", "max_gap": null}]
      }
    }"#
}

/// A synthetic dataset decoded with its generating model.
pub fn decoded_synthetic(k: usize, n_subjects: usize, seed: u64) -> (Dataset, Decoding) {
    let mut cfg = synth::SynthConfig::new(k, n_subjects, seed);
    cfg.visits_per_subject = 1 + (seed % 12) as usize;
    cfg.visit_interval = 1 + (seed % 7) as usize;
    let (ds, truth) = synth::generate(&cfg);
    let decoding = Decoding {
        model_id: None,
        n_states: k,
        subjects: hmm::decode(&truth, &ds),
    };
    (ds, decoding)
}

/// Sankey flow conservation, chord totals and KDE mass over a decoded set.
pub fn check_aggregations(ds: &Dataset, decoding: &Decoding, scope: &Scope) -> Result<(), String> {
    let k = decoding.n_states;
    let scoped: Vec<&DecodedSubject> = decoding
        .subjects
        .iter()
        .filter(|d| scope.contains(&d.subject_id))
        .collect();
    let visits: usize = scoped.iter().map(|d| d.visits.len()).sum();

    let chord = analytics::chord_matrix(decoding, scope);
    let pairs: u64 = chord.pairs.iter().flatten().sum();
    if pairs as usize != visits - scoped.len() {
        return Err(format!("chord pairs {pairs} != visits {visits} - subjects {}", scoped.len()));
    }
    if chord.node_sizes.iter().sum::<u64>() as usize != visits {
        return Err("chord node sizes do not sum to the visit count".into());
    }

    let by_visit = analytics::sankey_by_visit(decoding, scope, Some(k - 1)).map_err(|e| e.to_string())?;
    let by_time = analytics::sankey_by_time(decoding, scope, 12.0).map_err(|e| e.to_string())?;
    for (name, s) in [("by_visit", &by_visit), ("by_time", &by_time)] {
        for (c, col) in s.columns.iter().enumerate() {
            let mut incoming = col.entries.clone();
            if c > 0 {
                for row in &s.links[c - 1] {
                    for (to, n) in row.iter().enumerate() {
                        incoming[to] += n;
                    }
                }
            }
            if incoming != col.stacks {
                return Err(format!("{name} column {c}: inflow {incoming:?} != stacks {:?}", col.stacks));
            }
            if c + 1 < s.columns.len() {
                let outgoing: Vec<u64> = s.links[c].iter().map(|row| row.iter().sum()).collect();
                let next_entries: u64 = s.columns[c + 1].entries.iter().sum();
                let stay: u64 = outgoing.iter().sum();
                if outgoing.iter().zip(&col.stacks).any(|(o, s)| o > s)
                    || stay + next_entries != s.columns[c + 1].stacks.iter().sum::<u64>()
                {
                    return Err(format!("{name} column {c}: outflow {outgoing:?} exceeds {:?}", col.stacks));
                }
            }
        }
    }
    if by_visit.columns.first().map_or(0, |c| c.stacks.iter().sum::<u64>()) as usize != scoped.len() {
        return Err("by_visit first column does not hold every subject".into());
    }
    let bip = analytics::bipartite(decoding, ds, scope, synth::ONSET_EVENT).map_err(|e| e.to_string())?;
    let bip_total: u64 = bip.links.iter().flatten().sum::<u64>() + bip.no_event.iter().sum::<u64>();
    if bip_total as usize != scoped.len() {
        return Err(format!("bipartite accounts for {bip_total} of {} subjects", scoped.len()));
    }

    match analytics::event_kde(ds, scope, synth::ONSET_EVENT, analytics::DEFAULT_KDE_STEPS) {
        Ok(dual) => {
            for curve in std::iter::once(&dual.population).chain(&dual.subgroup) {
                let mass = curve.integral();
                if (mass - 1.0).abs() > 1e-3 {
                    return Err(format!("KDE integral {mass}"));
                }
            }
        }
        Err(analytics::AnalyticsError::EmptyAges) => {}
        Err(e) => return Err(e.to_string()),
    }
    Ok(())
}

/// Every aggregation over `ids` equals the aggregation over a dataset and
/// decoding physically restricted to `ids`.
pub fn check_scoping(ds: &Dataset, decoding: &Decoding, ids: &BTreeSet<String>) -> Result<(), String> {
    let scope = Scope::subjects(ids.clone());
    let rds = ds.restrict(ids);
    let rdec = Decoding {
        model_id: decoding.model_id.clone(),
        n_states: decoding.n_states,
        subjects: decoding.subjects.iter().filter(|d| ids.contains(&d.subject_id)).cloned().collect(),
    };
    let all = Scope::all();
    let same = |what: &str, a: String, b: String| if a == b { Ok(()) } else { Err(format!("{what} differs under scoping")) };
    // Debug output prints floats exactly, so equal renderings mean equal values.
    let json = |v: &dyn std::fmt::Debug| format!("{v:?}");
    same(
        "chord",
        json(&analytics::chord_matrix(decoding, &scope)),
        json(&analytics::chord_matrix(&rdec, &all)),
    )?;
    same(
        "sankey_by_visit",
        json(&analytics::sankey_by_visit(decoding, &scope, None)),
        json(&analytics::sankey_by_visit(&rdec, &all, None)),
    )?;
    same(
        "sankey_by_time",
        json(&analytics::sankey_by_time(decoding, &scope, 6.0)),
        json(&analytics::sankey_by_time(&rdec, &all, 6.0)),
    )?;
    same(
        "bipartite",
        json(&analytics::bipartite(decoding, ds, &scope, synth::ONSET_EVENT)),
        json(&analytics::bipartite(&rdec, &rds, &all, synth::ONSET_EVENT)),
    )?;
    same(
        "feature_summary",
        json(&analytics::feature_summary(decoding, ds, &scope)),
        json(&analytics::feature_summary(&rdec, &rds, &all)),
    )?;
    let sub = analytics::event_kde(ds, &scope, synth::ONSET_EVENT, 128).ok().and_then(|d| d.subgroup);
    let pop = analytics::event_kde(&rds, &all, synth::ONSET_EVENT, 128).ok().map(|d| d.population);
    same("kde", json(&sub), json(&pop))?;
    same(
        "waterfall",
        json(&layout::waterfall(decoding, &scope, &layout::WaterfallParams::default())),
        json(&layout::waterfall(&rdec, &all, &layout::WaterfallParams::default())),
    )?;
    Ok(())
}

/// `n` random points over `lanes` lanes with x in [0, 240).
pub fn random_points(rng: &mut impl Rng, n: usize, lanes: usize) -> Vec<(f64, usize)> {
    (0..n)
        .map(|_| (rng.random_range(0.0..240.0), rng.random_range(0..lanes)))
        .collect()
}

pub fn check_beeswarm(points: &[(f64, usize)], radius: f64) -> Result<(), String> {
    let ys = layout::beeswarm(points, radius).map_err(|e| e.to_string())?;
    let mut by_lane: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (&(x, lane), &y) in points.iter().zip(&ys) {
        by_lane.entry(lane).or_default().push((x, y));
    }
    for dots in by_lane.values_mut() {
        dots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for i in 0..dots.len() {
            for j in i + 1..dots.len() {
                if dots[j].0 - dots[i].0 >= 2.0 * radius {
                    break;
                }
                let d = (dots[i].0 - dots[j].0).hypot(dots[i].1 - dots[j].1);
                if d < 2.0 * radius {
                    return Err(format!("dots {:?} and {:?} are {d} apart", dots[i], dots[j]));
                }
            }
        }
    }
    Ok(())
}

/// Polylines with strictly increasing x, like subject trajectories.
pub fn random_polylines(rng: &mut impl Rng, n: usize) -> Vec<Vec<layout::Point>> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(2..=6);
            let mut x = rng.random_range(0.0..30.0);
            (0..len)
                .map(|_| {
                    x += rng.random_range(1.0..30.0);
                    [x, rng.random_range(0..4) as f64 * 10.0 + rng.random_range(-2.0..2.0)]
                })
                .collect()
        })
        .collect()
}

/// Every input vertex reappears bitwise, in order, and no x moves.
pub fn check_bundle(input: &[Vec<layout::Point>], params: &layout::BundleParams) -> Result<(), String> {
    let out = layout::bundle(input, params).map_err(|e| e.to_string())?;
    for (i, (line, bundled)) in input.iter().zip(&out).enumerate() {
        if bundled.first().map(|p| p.map(f64::to_bits)) != line.first().map(|p| p.map(f64::to_bits))
            || bundled.last().map(|p| p.map(f64::to_bits)) != line.last().map(|p| p.map(f64::to_bits))
        {
            return Err(format!("polyline {i}: endpoints moved"));
        }
        let mut it = bundled.iter();
        for v in line {
            if !it.any(|p| p[0].to_bits() == v[0].to_bits() && p[1].to_bits() == v[1].to_bits()) {
                return Err(format!("polyline {i}: vertex {v:?} lost"));
            }
        }
        // Control points sit between their segment's vertices in x.
        for w in bundled.windows(2) {
            let seg = line.windows(2).any(|s| {
                let (lo, hi) = (s[0][0].min(s[1][0]), s[0][0].max(s[1][0]));
                (lo..=hi).contains(&w[0][0]) && (lo..=hi).contains(&w[1][0])
            });
            if !seg {
                return Err(format!("polyline {i}: control point x outside its segment"));
            }
        }
    }
    Ok(())
}
