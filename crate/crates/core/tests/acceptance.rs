//! Acceptance gate: every criterion runs at its stated tolerance and time
//! budget and prints one PASS/FAIL line. Runs without the libtest harness so
//! the criteria execute one after another and the timings are not shared
//! with concurrently running tests.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use salt::activation::{LogitVolume, ProbVolume, SaltHead};
use salt::harness::{train, TrainConfig};
use salt::loss::HybridLoss;
use salt::metrics::{bootstrap_ci, hierarchical_confusion, nsd, BitCodec, ConfusionCounts, DEFAULT_ITERATIONS};
use salt::tree::fixtures::{flat, random_tree, t1};
use salt::tree::LabelTree;
use salt::volume::{Dims, LabelVolume, Mask, Spacing};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_logits(rng: &mut ChaCha8Rng, channels: usize, dims: Dims, sigma: f64) -> LogitVolume {
    let normal = Normal::new(0.0, sigma).unwrap();
    LogitVolume::new(
        channels,
        dims,
        (0..channels * dims.len()).map(|_| normal.sample(rng)).collect(),
    )
    .unwrap()
}

fn linear(p: &ProbVolume) -> ProbVolume {
    p.to_linear()
}

/// 1. On a flat tree the activation is the ordinary softmax over the leaves.
fn flat_tree_is_softmax() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dims = Dims::new(6, 5, 4);
    let mut worst = 0.0f64;
    for k in [2, 5, 50] {
        let tree = flat(k);
        let logits = random_logits(&mut rng, k + 1, dims, 3.0);
        let p = linear(&SaltHead::new(tree).forward(&logits).unwrap());
        for v in 0..dims.len() {
            // independent softmax over channels 1..=k; channel 0 is the root
            let m = (1..=k).map(|c| logits.get(c, v)).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = (1..=k).map(|c| (logits.get(c, v) - m).exp()).sum();
            for c in 1..=k {
                let expect = (logits.get(c, v) - m).exp() / z;
                worst = worst.max((p.get(c, v) - expect).abs());
            }
            worst = worst.max((p.get(0, v) - 1.0).abs());
        }
    }
    check(
        worst <= 1e-12,
        format!("max |SALT - softmax| = {worst:.2e} over K in {{2, 5, 50}}"),
    )
}

/// 2. Leaf probabilities sum to one and every parent equals the sum of its children.
fn probabilities_are_consistent() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dims = Dims::new(3, 3, 2);
    let (mut leaf_err, mut parent_err) = (0.0f64, 0.0f64);
    let mut largest = 0;
    for _ in 0..200 {
        let n = rng.random_range(1..=200);
        let tree = random_tree(&mut rng, n, 8);
        assert!(tree.height() <= 8);
        largest = largest.max(tree.len());
        let logits = random_logits(&mut rng, tree.len(), dims, 4.0);
        let p = linear(&SaltHead::new(tree.clone()).forward(&logits).unwrap());
        for v in 0..dims.len() {
            let s: f64 = tree.leaves().map(|l| p.get(l, v)).sum();
            leaf_err = leaf_err.max((s - 1.0).abs());
            for node in 0..tree.len() {
                if tree.is_leaf(node) {
                    continue;
                }
                let s: f64 = tree.children(node).iter().map(|&c| p.get(c, v)).sum();
                parent_err = parent_err.max((p.get(node, v) - s).abs());
            }
        }
    }
    check(
        leaf_err <= 1e-9 && parent_err <= 1e-9,
        format!("200 trees (up to {largest} nodes): leaf-sum error {leaf_err:.2e}, parent-sum error {parent_err:.2e}"),
    )
}

/// 3. Analytic hybrid-loss gradient agrees with central finite differences.
fn loss_gradient_matches_finite_differences() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let dims = Dims::new(2, 2, 2);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let instances = 120;
    for _ in 0..instances {
        let n = rng.random_range(2..=12);
        let tree = random_tree(&mut rng, n, 4);
        let loss = HybridLoss::new(&tree);
        let leaves: Vec<u16> = tree.leaves().map(|l| l as u16).collect();
        let labels = LabelVolume::from_fn(dims, Spacing::default(), |_, _, _| {
            leaves[rng.random_range(0..leaves.len())]
        });
        let mut logits = random_logits(&mut rng, tree.len(), dims, 1.0);
        let (_, grad) = loss.value_and_grad(&logits, &labels).unwrap();
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..logits.as_slice().len() {
            let orig = logits.as_slice()[i];
            logits.as_mut_slice()[i] = orig + h;
            let up = loss.value(&logits, &labels).unwrap().total;
            logits.as_mut_slice()[i] = orig - h;
            let down = loss.value(&logits, &labels).unwrap().total;
            logits.as_mut_slice()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff2 += (grad.as_slice()[i] - fd).powi(2);
            norm2 += fd * fd;
        }
        worst = worst.max(diff2.sqrt() / norm2.sqrt().max(1e-300));
    }
    check(
        worst < 1e-5,
        format!("{instances} random instances: worst relative error ||g - g_fd|| / ||g_fd|| = {worst:.2e}"),
    )
}

/// Counts for `class` from merged descendant masks, walking parents directly.
fn brute_counts(gt: &LabelVolume, pred: &LabelVolume, tree: &LabelTree, class: usize) -> ConfusionCounts {
    let inside = |label: u16| {
        let mut node = label as usize;
        loop {
            if node == class {
                return true;
            }
            match tree.parent(node) {
                Some(p) => node = p,
                None => return false,
            }
        }
    };
    let mut c = ConfusionCounts::default();
    for (&g, &p) in gt.as_slice().iter().zip(pred.as_slice()) {
        match (inside(g), inside(p)) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

/// 4. Bitwise hierarchical counts equal brute-force merged-mask counts.
fn bitwise_dice_is_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dims = Dims::cube(16);
    let mut max_bits = 0;
    let mut classes = 0;
    let mut mismatches = 0;
    for t in 0..50 {
        // the first tree is large enough that its codes exceed 64 bits
        let n = if t == 0 { 200 } else { rng.random_range(2..=120) };
        let tree = random_tree(&mut rng, n, 8);
        let codec = BitCodec::new(&tree);
        max_bits = max_bits.max(codec.total_bits());
        let leaves: Vec<u16> = tree.leaves().map(|l| l as u16).collect();
        let mut draw = || {
            LabelVolume::from_fn(dims, Spacing::default(), |_, _, _| {
                leaves[rng.random_range(0..leaves.len())]
            })
        };
        let gt = draw();
        let pred = draw();
        for class in 1..tree.len() {
            let fast = hierarchical_confusion(&gt, &pred, &codec, class).unwrap();
            if fast != brute_counts(&gt, &pred, &tree, class) {
                mismatches += 1;
            }
            classes += 1;
        }
    }
    check(
        mismatches == 0 && max_bits > 64,
        format!("50 trees, {classes} classes, widest code {max_bits} bits: {mismatches} TP/FP/FN mismatches"),
    )
}

/// 5. Uniform logits on the thorax tree.
fn t1_uniform_posteriors() -> Outcome {
    let tree = t1();
    let dims = Dims::cube(1);
    let logits = LogitVolume::zeros(tree.len(), dims);
    let p = linear(&SaltHead::new(tree.clone()).forward(&logits).unwrap());
    let expected = [
        ("background", 1.0 / 2.0),
        ("other_body", 1.0 / 4.0),
        ("mediastinum", 1.0 / 12.0),
        ("other_thx", 1.0 / 12.0),
        ("lung_left", 1.0 / 24.0),
        ("lung_right", 1.0 / 24.0),
    ];
    let mut worst = 0.0f64;
    for (name, value) in expected {
        worst = worst.max((p.get(tree.find(name).unwrap(), 0) - value).abs());
    }
    let lung_left = tree.find("lung_left").unwrap() as u16;
    let labels = LabelVolume::filled(dims, Spacing::default(), lung_left);
    let ce = HybridLoss::new(&tree).value(&logits, &labels).unwrap().ce;
    let exact = 2f64.ln() + 4f64.ln() + 12f64.ln() + 24f64.ln();
    let ce_exact = (ce - exact).abs();
    let ce_literal = (ce - 7.742402).abs();
    check(
        worst <= 1e-9 && ce_exact <= 1e-9 && ce_literal <= 1e-6,
        format!(
            "leaf posterior error {worst:.2e}; CE(lung_left) = {ce:.9} (vs ln 2+ln 4+ln 12+ln 24: {ce_exact:.2e}, vs 7.742402: {ce_literal:.2e})"
        ),
    )
}

/// 6. Default configuration trains to the target Dice, reproducibly.
fn toy_training_reaches_target() -> Outcome {
    let config = TrainConfig::default();
    let tree = t1();
    let started = Instant::now();
    let first = match train(&config, &tree) {
        Ok(o) => o,
        Err(e) => return check(false, format!("training failed: {e}")),
    };
    let elapsed = started.elapsed();
    let second = train(&config, &tree).expect("second run");
    let reached = first
        .validation
        .iter()
        .find(|v| v.mean_leaf_dice >= 0.85)
        .map(|v| v.step);
    let best = first.validation.iter().map(|v| v.mean_leaf_dice).fold(0.0, f64::max);
    let identical = first.losses == second.losses && first.model == second.model;
    let pass = reached.is_some_and(|s| s <= 500) && elapsed < Duration::from_secs(300) && identical;
    check(
        pass,
        format!(
            "{} steps in {:.1}s; mean leaf Dice reached 0.85 at step {}; best {best:.4}; second run identical: {identical}",
            first.losses.len(),
            elapsed.as_secs_f64(),
            reached.map_or("never".to_string(), |s| s.to_string()),
        ),
    )
}

fn face_surface(mask: &Mask) -> Vec<[i64; 3]> {
    let d = mask.dims();
    let mut out = Vec::new();
    let at = |x: i64, y: i64, z: i64| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < d.x
            && (y as usize) < d.y
            && (z as usize) < d.z
            && *mask.get(x as usize, y as usize, z as usize)
    };
    for z in 0..d.z as i64 {
        for y in 0..d.y as i64 {
            for x in 0..d.x as i64 {
                if at(x, y, z)
                    && [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                        .iter()
                        .any(|&(dx, dy, dz)| !at(x + dx, y + dy, z + dz))
                {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

/// All-pairs NSD.
fn brute_nsd(a: &Mask, b: &Mask, s: Spacing, tau: f64) -> f64 {
    let (sa, sb) = (face_surface(a), face_surface(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let close = |p: &[i64; 3], others: &[[i64; 3]]| {
        others.iter().any(|q| {
            let d2: f64 = (0..3).map(|k| ((p[k] - q[k]) as f64 * s.0[k]).powi(2)).sum();
            d2 <= tau * tau
        })
    };
    let n = sa.iter().filter(|p| close(p, &sb)).count() + sb.iter().filter(|p| close(p, &sa)).count();
    n as f64 / (sa.len() + sb.len()) as f64
}

/// 7. Normalized surface Dice.
fn nsd_behaves() -> Outcome {
    let s = Spacing::isotropic(1.5);
    let dims = Dims::cube(12);
    let block = |lo: [usize; 3], hi: [usize; 3]| {
        Mask::from_fn(dims, s, |x, y, z| {
            (lo[0]..hi[0]).contains(&x) && (lo[1]..hi[1]).contains(&y) && (lo[2]..hi[2]).contains(&z)
        })
    };
    let a = block([2, 2, 2], [7, 7, 7]);
    let identical = nsd(&a, &a, s, 3.0).unwrap();
    let shifted = nsd(&a, &block([3, 2, 2], [8, 7, 7]), s, 3.0).unwrap();
    let far = nsd(&block([0, 0, 0], [3, 3, 3]), &block([9, 9, 9], [12, 12, 12]), s, 3.0).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let trials = 60;
    for t in 0..trials {
        let d = Dims::new(
            rng.random_range(1..=12),
            rng.random_range(1..=12),
            rng.random_range(1..=12),
        );
        let spacing = Spacing([
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..2.5),
            rng.random_range(0.5..2.5),
        ]);
        let density = [0.1, 0.5, 0.9][t % 3];
        let mut draw = || Mask::from_fn(d, spacing, |_, _, _| rng.random_bool(density));
        let (g, p) = (draw(), draw());
        let tau = [1.0, 2.0, 3.0, 4.5][t % 4];
        if nsd(&g, &p, spacing, tau).unwrap() != brute_nsd(&g, &p, spacing, tau) {
            mismatches += 1;
        }
    }
    check(
        identical == 1.0 && shifted == 1.0 && far == 0.0 && mismatches == 0,
        format!(
            "identical {identical}, 1-voxel shift {shifted}, far disjoint {far}; {mismatches}/{trials} differ from all-pairs oracle"
        ),
    )
}

/// 8. Bootstrap confidence intervals.
fn bootstrap_behaves() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut problems = Vec::new();
    let constant = bootstrap_ci(&[0.73; 12], DEFAULT_ITERATIONS, 5).unwrap();
    if constant != (0.73, 0.73) {
        problems.push(format!("constant scores gave {constant:?}"));
    }
    for trial in 0..50 {
        let n = rng.random_range(2..40);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mean = scores.iter().sum::<f64>() / n as f64;
        let seed = rng.random();
        let (lo, hi) = bootstrap_ci(&scores, DEFAULT_ITERATIONS, seed).unwrap();
        if (lo, hi) != bootstrap_ci(&scores, DEFAULT_ITERATIONS, seed).unwrap() {
            problems.push(format!("trial {trial}: not deterministic"));
        }
        if !(lo <= mean && mean <= hi) {
            problems.push(format!("trial {trial}: [{lo}, {hi}] misses mean {mean}"));
        }
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{DEFAULT_ITERATIONS} iterations, 2.5/97.5 percentiles: deterministic, constant input {constant:?}, 50/50 intervals bracket the mean")
        } else {
            problems.join("; ")
        },
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, fn() -> Outcome); 8] = [
        ("flat tree equals softmax", Duration::from_secs(1), flat_tree_is_softmax),
        (
            "probability consistency on random trees",
            Duration::from_secs(30),
            probabilities_are_consistent,
        ),
        (
            "hybrid loss gradient vs finite differences",
            Duration::from_secs(120),
            loss_gradient_matches_finite_differences,
        ),
        (
            "bitwise hierarchical Dice is exact",
            Duration::from_secs(60),
            bitwise_dice_is_exact,
        ),
        (
            "thorax tree uniform posteriors and CE",
            Duration::from_secs(60),
            t1_uniform_posteriors,
        ),
        (
            "toy training reaches Dice 0.85",
            Duration::from_secs(600),
            toy_training_reaches_target,
        ),
        ("normalized surface Dice", Duration::from_secs(60), nsd_behaves),
        (
            "bootstrap confidence intervals",
            Duration::from_secs(60),
            bootstrap_behaves,
        ),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = run();
        let elapsed = started.elapsed();
        let in_time = elapsed < *budget;
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {} [{:.2}s of {}s]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
