//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use edgetrack::appearance::{
    intersection_kernel, ncc_response_map, ncc_score, pyramid_feature, FeatureKind, NccTemplate, SsvmModel, BINS,
};
use edgetrack::eval::{
    mixed_corpus, synth_sequence, write_report, write_trajectory, MetricReport, Motion, SceneSpec, Sequence,
};
use edgetrack::geometry::{iou, BoundingBox};
use edgetrack::imaging::{Frame, Plane};
use edgetrack::rerank::select_by_objectness;
use edgetrack::tracker::{track_sequence, CandidateSet, TrackResult, Tracker, TrackerConfig};

/// Outcome of one criterion: a short measurement summary, or the reason
/// it failed.
type Outcome = Result<String, String>;

/// Predictions, ground truth, and the hand-derived distances and overlaps
/// on the frames that have ground truth.
type MetricCase = (Vec<Option<BoundingBox>>, Vec<Option<BoundingBox>>, Vec<f64>, Vec<f64>);

/// Name, optional runtime cap in seconds, and the check itself.
type Criterion = (&'static str, Option<u64>, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, elapsed: Duration, detail: Outcome) -> Outcome {
    let detail = detail?;
    check(
        elapsed < limit,
        format!("{detail}; {:.1}s of {}s allowed", elapsed.as_secs_f64(), limit.as_secs()),
    )
}

fn gts(seq: &Sequence) -> Vec<Option<BoundingBox>> {
    (0..seq.len()).map(|i| seq.gt(i)).collect()
}

fn track(seq: &Sequence, cfg: &TrackerConfig) -> TrackResult {
    track_sequence(seq, &seq.gt(0).unwrap(), cfg, |_| {}).unwrap()
}

fn auc(seq: &Sequence, cfg: &TrackerConfig) -> f64 {
    let r = track(seq, cfg);
    MetricReport::from_boxes(&seq.name, &r.boxes, &gts(seq), 0.0).unwrap().auc
}

fn cfg_with(test_set: CandidateSet, update_set: CandidateSet) -> TrackerConfig {
    TrackerConfig {
        test_set,
        update_set,
        ..TrackerConfig::default()
    }
}

fn random_plane(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Plane {
    Plane::new(w, h, (0..w * h).map(|_| rng.random_range(0.0..255.0)).collect())
}

fn random_frame(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Frame {
    Frame::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
}

fn naive_kernel(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += if a[i] < b[i] { a[i] } else { b[i] };
    }
    s
}

/// Curve values by enumeration over the threshold lists.
fn enumerate_curves(distances: &[f64], overlaps: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let n = distances.len() as f64;
    let mut precision = Vec::new();
    for t in 0..=50 {
        let mut hits = 0;
        for &d in distances {
            if d <= t as f64 {
                hits += 1;
            }
        }
        precision.push(hits as f64 / n);
    }
    let mut success = Vec::new();
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        let mut hits = 0;
        for &o in overlaps {
            if o > t {
                hits += 1;
            }
        }
        success.push(hits as f64 / n);
    }
    let mut area = 0.0;
    for v in &success {
        area += v;
    }
    (precision, success, area / 21.0)
}

fn oracle_equivalences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    let mut worst_ncc: f64 = 0.0;
    for _ in 0..50 {
        let g = random_plane(64, 64, &mut rng);
        let src = random_plane(64, 64, &mut rng);
        let tb = BoundingBox::new(rng.random_range(0..=48) as f64, rng.random_range(0..=48) as f64, 16.0, 16.0);
        let t = NccTemplate::new(&src, &tb).unwrap();
        let map = ncc_response_map(&g, &t).unwrap();
        for y in 0..map.height {
            for x in 0..map.width {
                let direct = ncc_score(&g, &BoundingBox::new(x as f64, y as f64, 16.0, 16.0), &t);
                worst_ncc = worst_ncc.max((map.at(x, y) - direct).abs());
            }
        }
    }
    if worst_ncc > 1e-6 {
        return Err(format!("NCC map differs from direct scores by {worst_ncc:.2e}"));
    }

    let frame = random_frame(120, 90, &mut rng);
    let boxes: Vec<BoundingBox> = (0..40)
        .map(|_| {
            BoundingBox::new(
                rng.random_range(0.0..60.0),
                rng.random_range(0.0..40.0),
                rng.random_range(12.0..50.0),
                rng.random_range(12.0..40.0),
            )
        })
        .collect();
    let feats: Vec<_> = boxes
        .iter()
        .map(|b| std::sync::Arc::new(pyramid_feature(&frame, b, FeatureKind::Pyramid2640)))
        .collect();
    let mut worst_kernel: f64 = 0.0;
    for a in &feats {
        for b in &feats {
            worst_kernel = worst_kernel.max((intersection_kernel(a, b) - naive_kernel(a, b)).abs());
        }
    }
    if worst_kernel > 1e-9 {
        return Err(format!("intersection kernel off by {worst_kernel:.2e}"));
    }

    let mut model = SsvmModel::new(20, 100.0, 3);
    for frame_index in 0..6 {
        let k = frame_index * 6;
        let negatives = (k + 1..k + 6).map(|i| (boxes[i], feats[i].clone())).collect();
        model.update(frame_index, (boxes[k], feats[k].clone()), negatives);
    }
    let mut worst_score: f64 = 0.0;
    for x in &feats {
        let mut naive = 0.0;
        for sv in model.support_vectors() {
            naive += sv.beta * naive_kernel(&sv.feature, x);
        }
        worst_score = worst_score.max((model.score(x) - naive).abs());
    }
    if worst_score > 1e-9 {
        return Err(format!("SSVM score off by {worst_score:.2e}"));
    }

    // 4-frame cases with hand-derived distances and overlaps
    let g = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
    let cases: Vec<MetricCase> = vec![
        (
            vec![Some(g), Some(g.translate(5.0, 0.0)), Some(g.translate(20.0, 0.0)), Some(g.translate(0.0, 60.0))],
            vec![Some(g); 4],
            vec![0.0, 5.0, 20.0, 60.0],
            vec![1.0, 1.0 / 3.0, 0.0, 0.0],
        ),
        (
            vec![Some(g.translate(3.0, 4.0)), None, Some(g), Some(g.translate(30.0, 40.0))],
            vec![Some(g), Some(g), None, Some(g)],
            vec![5.0, f64::INFINITY, 50.0],
            vec![(7.0 * 6.0) / (200.0 - 42.0), 0.0, 0.0],
        ),
        (
            vec![Some(g.translate(10.0, 0.0)), Some(g.translate(2.5, 0.0)), Some(g.translate(50.0, 0.0)), Some(g)],
            vec![Some(g); 4],
            vec![10.0, 2.5, 50.0, 0.0],
            vec![0.0, 75.0 / 125.0, 0.0, 1.0],
        ),
    ];
    for (i, (pred, gt, d, o)) in cases.iter().enumerate() {
        let r = MetricReport::compute("case", pred, gt, 0.0).unwrap();
        let (precision, success, area) = enumerate_curves(d, o);
        if r.precision != precision || r.success != success || r.auc != area || r.precision_score_20 != precision[20] {
            return Err(format!("metric case {i} differs from enumeration"));
        }
    }
    Ok(format!(
        "ncc {worst_ncc:.1e}, kernel {worst_kernel:.1e}, ssvm {worst_score:.1e} over {} SVs, 3 metric cases exact",
        model.support_vectors().len()
    ))
}

fn feature_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let f = random_frame(160, 120, &mut rng);
        let b = BoundingBox::new(
            rng.random_range(0.0..80.0),
            rng.random_range(0.0..60.0),
            rng.random_range(10.0..80.0),
            rng.random_range(10.0..60.0),
        );
        let full = pyramid_feature(&f, &b, FeatureKind::Pyramid2640);
        let gray = pyramid_feature(&f, &b, FeatureKind::Gray480);
        if full.len() != 2640 || gray.len() != 480 {
            return Err(format!("dimensions {} and {}", full.len(), gray.len()));
        }
        for (feat, channels) in [(&full, 3), (&gray, 1)] {
            let block = channels * BINS;
            for d in 0..block {
                let avg = (1..5).map(|c| feat[c * block + d]).sum::<f64>() / 4.0;
                worst = worst.max((feat[d] - avg).abs());
            }
        }
    }
    check(worst <= 1e-9, format!("2640 and 480 dims, level-1/level-2 gap {worst:.1e}"))
}

fn proposal_recall() -> Outcome {
    let cfg = TrackerConfig::default();
    // per scene: frames evaluated, pool hits, re-ranked hits, objectness-order hits
    let counts: Vec<[usize; 4]> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let spec = SceneSpec {
                frames: 3,
                clutter: 1.0,
                texture_seed: seed,
                ..SceneSpec::default()
            };
            let seq = synth_sequence(&spec, seed).unwrap();
            let frames = seq.load_frames().unwrap();
            let (mut tracker, _) = Tracker::init(&frames[0], &seq.gt(0).unwrap(), &cfg).unwrap();
            let mut c = [0; 4];
            for (i, f) in frames.iter().enumerate().skip(1) {
                let gt = seq.gt(i).unwrap();
                let out = tracker.step(f).unwrap();
                let hit = |ps: &[edgetrack::edgebox::Proposal]| ps.iter().any(|p| iou(&p.bbox, &gt) >= 0.7) as usize;
                c[0] += 1;
                c[1] += hit(&out.pool);
                c[2] += hit(&out.proposals);
                c[3] += hit(&select_by_objectness(&out.pool, cfg.h));
            }
            c
        })
        .collect();
    let total = counts.iter().fold([0; 4], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2], a[3] + c[3]]);
    let frac = |k: usize| total[k] as f64 / total[0] as f64;
    let (pool, reranked, objectness) = (frac(1), frac(2), frac(3));
    check(
        pool >= 0.90 && reranked >= 0.85 && reranked >= objectness - 0.05,
        format!(
            "pool {:.1}%, re-ranked top-200 {:.1}%, objectness top-200 {:.1}% over {} frames",
            100.0 * pool,
            100.0 * reranked,
            100.0 * objectness,
            total[0]
        ),
    )
}

fn fast_motion() -> Outcome {
    let spec = SceneSpec {
        name: "teleport".into(),
        frames: 50,
        motion: Motion::Teleport {
            distance: 200.0,
            jitter: 50.0,
        },
        ..SceneSpec::default()
    };
    let seq = synth_sequence(&spec, 4).unwrap();
    let hit_rate = |cfg: &TrackerConfig| {
        let r = track(&seq, cfg);
        let hits = (1..seq.len()).filter(|&i| iou(&r.boxes[i], &seq.gt(i).unwrap()) >= 0.5).count();
        hits as f64 / (seq.len() - 1) as f64
    };
    let proposals = hit_rate(&TrackerConfig::default());
    let local = hit_rate(&TrackerConfig {
        test_set: CandidateSet::R,
        ..TrackerConfig::default()
    });
    check(
        proposals >= 0.80 && local < 0.50,
        format!(
            "IoU >= 0.5 on {:.0}% of frames with test=E, {:.0}% with test=R",
            100.0 * proposals,
            100.0 * local
        ),
    )
}

fn candidate_set_ordering() -> Outcome {
    let corpus: Vec<Sequence> = mixed_corpus(10, 30)
        .iter()
        .enumerate()
        .map(|(i, spec)| synth_sequence(spec, 50 + i as u64).unwrap())
        .collect();
    let mean_auc = |cfg: &TrackerConfig| corpus.par_iter().map(|s| auc(s, cfg)).sum::<f64>() / corpus.len() as f64;
    let best = mean_auc(&cfg_with(CandidateSet::E, CandidateSet::ER));
    let mut detail = format!("update=ER/test=E {best:.3}");
    let mut ok = true;
    for update in CandidateSet::ALL {
        let a = mean_auc(&cfg_with(CandidateSet::R, update));
        detail.push_str(&format!(", update={update}/test=R {a:.3}"));
        ok &= best >= a - 0.01;
    }
    check(ok, detail)
}

fn low_frame_rate() -> Outcome {
    // the subsampled scene is the same trajectory seen at every 20th frame
    let full = SceneSpec {
        name: "smooth".into(),
        frames: 150,
        ..SceneSpec::default()
    };
    let sub = SceneSpec {
        name: "smooth+20".into(),
        frames: 50,
        motion: Motion::SubsampleEquivalent { speed: 3.0, stride: 20 },
        ..SceneSpec::default()
    };
    let (full, sub) = (synth_sequence(&full, 6).unwrap(), synth_sequence(&sub, 6).unwrap());
    let degradation = |cfg: &TrackerConfig| {
        let (a, b) = rayon::join(|| auc(&full, cfg), || auc(&sub, cfg));
        (a, b, (a - b) / a)
    };
    let (ef, es, ed) = degradation(&TrackerConfig::default());
    let (rf, rs, rd) = degradation(&cfg_with(CandidateSet::R, CandidateSet::ER));
    check(
        ed <= 0.30 && rd >= 0.60,
        format!(
            "test=E AUC {ef:.3} -> {es:.3} ({:.0}% drop), test=R {rf:.3} -> {rs:.3} ({:.0}% drop)",
            100.0 * ed,
            100.0 * rd
        ),
    )
}

fn performance_budget() -> Outcome {
    let spec = SceneSpec {
        frames: 12,
        ..SceneSpec::default()
    };
    let seq = synth_sequence(&spec, 7).unwrap();
    let r = track(&seq, &TrackerConfig::default());
    let steps = &r.logs[1..];
    let proposal = steps
        .iter()
        .map(|l| l.timings.edges + l.timings.pool + l.timings.rerank)
        .fold(0.0, f64::max);
    let step = steps.iter().map(|l| l.timings.total()).fold(0.0, f64::max);
    check(
        proposal <= 500.0 && step <= 2000.0,
        format!("worst proposal stage {proposal:.0} ms, worst full step {step:.0} ms on 640x360"),
    )
}

fn determinism() -> Outcome {
    let spec = SceneSpec {
        frames: 10,
        ..SceneSpec::default()
    };
    let cfg = TrackerConfig {
        seed: 17,
        ..TrackerConfig::default()
    };
    let run = |dir: &std::path::Path| {
        let seq = synth_sequence(&spec, 8).unwrap();
        let r = track(&seq, &cfg);
        write_trajectory(&dir.join("trajectory.txt"), &r.boxes).unwrap();
        let report = MetricReport::from_boxes("synth", &r.boxes, &gts(&seq), 0.0).unwrap();
        write_report(dir, &report, true).unwrap();
        ["trajectory.txt", "synth.csv", "synth.svg"].map(|f| std::fs::read(dir.join(f)).unwrap())
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (x, y) = (run(a.path()), run(b.path()));
    check(x == y, format!("trajectory, report and plot identical ({} bytes)", x.iter().map(Vec::len).sum::<usize>()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalences", Some(10), oracle_equivalences),
        ("feature contract", None, feature_contract),
        ("proposal recall", Some(120), proposal_recall),
        ("fast motion", Some(180), fast_motion),
        ("candidate-set ordering", None, candidate_set_ordering),
        ("low frame rate", None, low_frame_rate),
        ("performance budget", None, performance_budget),
        ("determinism", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let outcome = match limit {
            Some(s) => within(Duration::from_secs(*s), clock.elapsed(), outcome),
            None => outcome.map(|d| format!("{d}; {:.1}s", clock.elapsed().as_secs_f64())),
        };
        match outcome {
            Ok(d) => println!("criterion {}: PASS {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
