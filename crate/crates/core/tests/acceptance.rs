//! Acceptance suite. Runs every criterion at its pinned tolerance and prints
//! one PASS/FAIL line each; exits non-zero when any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use modeconn::alignment::{align_networks, correlation_signature, solve_assignment, BlockPermutation, CostVariant};
use modeconn::bounds::{compute_bounds, tight_instance, tightness_probe, BoundLoss};
use modeconn::curve::{evaluate_curve, evaluate_linear, uniform_grid, BezierCurve, CurveTrainConfig};
use modeconn::harness::data::{generate, SyntheticKind, SyntheticSpec};
use modeconn::harness::io::Manifest;
use modeconn::harness::{ExperimentConfig, Run};
use modeconn::nn::{backward, train_sgd, Activation, Dataset, LossKind, Network, NetworkSpec, SgdConfig};
use modeconn::pam::{bvn_decompose, project_matrix, sum_deviation, BvnRule, CurveObjective, PamConfig, PamProblem};
use modeconn::rng::{self, Rng};
use modeconn::robust::{adversarial_train, pgd_attack, robust_curve_report, PgdConfig};
use modeconn::strategy::{CurveContext, CurveRegistry};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(r: &mut Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(r))
}

/// One-sided sign test; ties are dropped.
fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut binom = 1.0f64;
    let mut tail = 0.0;
    for k in 0..=n {
        if k >= wins {
            tail += binom;
        }
        binom = binom * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

// ---------------------------------------------------------------------------
// 1. assignment oracle

fn lex_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                rec(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Lexicographically first permutation among those within rounding of the optimum.
fn brute_force(cost: &Array2<f64>, perms: &[Vec<usize>]) -> (Vec<usize>, f64) {
    let value = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum::<f64>();
    let best = perms.iter().map(|p| value(p)).fold(f64::INFINITY, f64::min);
    let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
    let p = perms.iter().find(|p| value(p) <= best + 1e-9 * scale).unwrap();
    (p.clone(), best)
}

fn criterion_1() -> Outcome {
    let mut r = rng::rng(101);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for n in 2..=8 {
        let perms = lex_permutations(n);
        for k in 0..200 {
            // Every third instance uses small integers so that ties occur.
            let cost = if k % 3 == 0 {
                Array2::from_shape_fn((n, n), |_| r.random_range(0..4) as f64)
            } else {
                Array2::from_shape_fn((n, n), |_| r.random_range(-5.0..5.0))
            };
            let got = solve_assignment(&cost).unwrap();
            let (perm, best) = brute_force(&cost, &perms);
            let gap = (got.total_cost - best).abs();
            worst = worst.max(gap);
            if gap > 1e-12 || got.perm != perm {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("{failures}/1400 mismatches, worst cost gap {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// 2. symmetry

fn random_spec(r: &mut Rng) -> NetworkSpec {
    let depth = r.random_range(1..=4);
    let residual = depth >= 3 && r.random_bool(0.3);
    let width = r.random_range(2..=10);
    let mut widths = vec![r.random_range(1..=5)];
    for _ in 0..depth {
        widths.push(if residual { width } else { r.random_range(2..=10) });
    }
    widths.push(r.random_range(1..=4));
    let act = [Activation::Relu, Activation::Tanh, Activation::HuberizedRelu { delta: 0.5 }][r.random_range(0..3)];
    let spec = NetworkSpec::new(widths, act).unwrap();
    if residual {
        spec.with_residual(2).unwrap()
    } else {
        spec
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut r = rng::rng(202);
    let mut worst_perm = 0.0f64;
    let mut worst_align = 0.0f64;
    for _ in 0..100 {
        let spec = random_spec(&mut r);
        let net = Network::init(&spec, &mut r).unwrap();
        let other = Network::init(&spec, &mut r).unwrap();
        let x = gaussian(&mut r, 32, spec.input_dim());
        let p = BlockPermutation::random(&spec, &mut r);
        let moved = p.apply(&net).unwrap();
        worst_perm = worst_perm.max(max_abs_diff(&net.logits(x.view()).unwrap(), &moved.logits(x.view()).unwrap()));
        let a = align_networks(&net, &other, x.view(), CostVariant::CorrPost, spec.is_residual()).unwrap();
        worst_align =
            worst_align.max(max_abs_diff(&other.logits(x.view()).unwrap(), &a.aligned.logits(x.view()).unwrap()));
    }
    outcome(
        worst_perm < 1e-9 && worst_align < 1e-9,
        format!("max deviation {worst_perm:.1e} (permutation), {worst_align:.1e} (alignment)"),
    )
}

// ---------------------------------------------------------------------------
// 3. gradients

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / norm(a).max(norm(b)).max(1e-8)
}

fn central_difference(f: impl Fn(&[f64]) -> f64, at: &[f64], h: f64) -> Vec<f64> {
    let mut x = at.to_vec();
    (0..at.len())
        .map(|i| {
            x[i] = at[i] + h;
            let up = f(&x);
            x[i] = at[i] - h;
            let down = f(&x);
            x[i] = at[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn smooth_spec(r: &mut Rng) -> NetworkSpec {
    let depth = r.random_range(1..=3);
    let mut widths = vec![r.random_range(1..=4)];
    for _ in 0..depth {
        widths.push(r.random_range(2..=6));
    }
    widths.push(r.random_range(2..=4));
    let act = [Activation::Tanh, Activation::Identity, Activation::HuberizedRelu { delta: 2.0 }][r.random_range(0..3)];
    NetworkSpec::new(widths, act).unwrap()
}

fn random_batch(r: &mut Rng, spec: &NetworkSpec, n: usize) -> (Array2<f64>, Vec<usize>) {
    let x = gaussian(r, n, spec.input_dim());
    let y = (0..n).map(|_| r.random_range(0..spec.output_dim())).collect();
    (x, y)
}

fn flat_grad(g: &modeconn::nn::Gradients) -> Vec<f64> {
    g.flatten()
}

fn criterion_3() -> Outcome {
    let mut r = rng::rng(303);
    let mut errors = Vec::new();
    let h = 1e-5;
    // Network parameters.
    for k in 0..150 {
        let spec = smooth_spec(&mut r);
        let net = Network::init(&spec, &mut r).unwrap();
        let (x, y) = random_batch(&mut r, &spec, 8);
        let kind = if k % 2 == 0 { LossKind::CrossEntropy } else { LossKind::Mse };
        let (_, g) = backward(&net, x.view(), &y, kind).unwrap();
        let f = |w: &[f64]| {
            let n = Network::from_flat(&spec, w).unwrap();
            modeconn::nn::loss(n.logits(x.view()).unwrap().view(), &y, kind).unwrap()
        };
        errors.push(rel_error(&flat_grad(&g), &central_difference(f, &net.flatten(), h)));
    }
    // Curve control point.
    for _ in 0..100 {
        let spec = smooth_spec(&mut r);
        let a = Network::init(&spec, &mut r).unwrap();
        let b = Network::init(&spec, &mut r).unwrap();
        let c = Network::init(&spec, &mut r).unwrap();
        let curve = BezierCurve::new(a.clone(), b.clone(), c.clone()).unwrap();
        let (x, y) = random_batch(&mut r, &spec, 8);
        let t: f64 = r.random_range(0.05..0.95);
        let (_, g) = curve.control_gradient(t, x.view(), &y, LossKind::CrossEntropy).unwrap();
        let f = |w: &[f64]| {
            let ctrl = Network::from_flat(&spec, w).unwrap();
            let cv = BezierCurve::new(a.clone(), b.clone(), ctrl).unwrap();
            let net = cv.point(t).unwrap();
            modeconn::nn::loss(net.logits(x.view()).unwrap().view(), &y, LossKind::CrossEntropy).unwrap()
        };
        errors.push(rel_error(&flat_grad(&g), &central_difference(f, &c.flatten(), h)));
    }
    // Relaxed permutation blocks.
    for _ in 0..60 {
        let spec = smooth_spec(&mut r);
        let a = Network::init(&spec, &mut r).unwrap();
        let b = Network::init(&spec, &mut r).unwrap();
        let phi = Network::init(&spec, &mut r).unwrap();
        let (x, y) = random_batch(&mut r, &spec, 8);
        let nodes = [r.random_range(0.1..0.9), r.random_range(0.1..0.9)];
        let obj = CurveObjective {
            theta1: &a,
            theta2: &b,
            x: x.view(),
            labels: &y,
            nodes: &nodes,
            loss: LossKind::CrossEntropy,
        };
        let d: Vec<Array2<f64>> = (1..=spec.n_hidden())
            .map(|l| Array2::from_shape_fn((spec.width(l), spec.width(l)), |_| r.random_range(0.0..1.0)))
            .collect();
        let g = obj.gradient(&d, &phi, true).unwrap();
        let analytic: Vec<f64> = g.d.iter().flat_map(|m| m.iter().copied()).collect();
        let flat: Vec<f64> = d.iter().flat_map(|m| m.iter().copied()).collect();
        let unflatten = |v: &[f64]| {
            let mut out = Vec::new();
            let mut at = 0;
            for m in &d {
                out.push(Array2::from_shape_vec(m.raw_dim(), v[at..at + m.len()].to_vec()).unwrap());
                at += m.len();
            }
            out
        };
        let f = |v: &[f64]| obj.value(&unflatten(v), &phi).unwrap();
        errors.push(rel_error(&analytic, &central_difference(f, &flat, h)));
        let fphi = |w: &[f64]| obj.value(&d, &Network::from_flat(&spec, w).unwrap()).unwrap();
        errors.push(rel_error(&g.phi.flatten(), &central_difference(fphi, &phi.flatten(), h)));
    }
    let worst = errors.iter().copied().fold(0.0, f64::max);
    let bad = errors.iter().filter(|&&e| !(e < 1e-4)).count();
    outcome(bad == 0 && errors.len() >= 300, format!("{} cases, worst relative error {worst:.1e}", errors.len()))
}

// ---------------------------------------------------------------------------
// 4. permutation recovery

fn criterion_4() -> Outcome {
    let spec = NetworkSpec::new(vec![4, 16, 16, 16, 3], Activation::Relu).unwrap();
    let mut recovered = 0;
    for trial in 0..100 {
        let mut r = rng::substream(trial, "recovery");
        let theta1 = Network::init(&spec, &mut r).unwrap();
        let q = BlockPermutation::random(&spec, &mut r);
        let theta2 = q.apply(&theta1).unwrap();
        let x = gaussian(&mut r, 2048, 4);
        let a = align_networks(&theta1, &theta2, x.view(), CostVariant::CorrPost, false).unwrap();
        if q.then(&a.permutation).is_identity() && a.aligned == theta1 {
            recovered += 1;
        }
    }
    outcome(recovered >= 95, format!("{recovered}/100 recovered exactly"))
}

// ---------------------------------------------------------------------------
// Shared spirals pairs for criteria 5, 6, 7 and 11.

struct Spirals {
    data: Dataset,
    pairs: Vec<(Network, Network)>,
}

fn spirals() -> Spirals {
    let spec = SyntheticSpec {
        kind: SyntheticKind::Spirals,
        n: 1200,
        noise: 0.05,
        n_classes: 3,
    };
    let mut data = generate(&spec, &mut rng::substream(0, "data")).unwrap();
    data.assign_splits(0.2, 0.2, &mut rng::substream(0, "splits")).unwrap();
    let net_spec = NetworkSpec::new(vec![2, 32, 32, 32, 32, 3], Activation::Relu).unwrap();
    let train = |s: u64| {
        let init = Network::init(&net_spec, &mut rng::substream(s, "init")).unwrap();
        let cfg = SgdConfig {
            epochs: 60,
            lr: 0.05,
            momentum: 0.9,
            seed: s,
            ..SgdConfig::default()
        };
        train_sgd(&init, &data, &cfg).unwrap().0
    };
    let pairs = (0..10u64).map(|k| (train(2 * k), train(2 * k + 1))).collect();
    Spirals { data, pairs }
}

fn criterion_5(s: &Spirals) -> Outcome {
    let (vx, vy) = s.data.validation();
    let (ax, _) = s.data.alignment();
    let grid = uniform_grid(21);
    let registry = CurveRegistry::default();
    // [mean, min] for unaligned, aligned, pam-unaligned.
    let mut stats = vec![[[0.0; 2]; 3]; s.pairs.len()];
    for (k, (a, b)) in s.pairs.iter().enumerate() {
        let curve = CurveTrainConfig {
            epochs: 30,
            seed: k as u64,
            ..CurveTrainConfig::default()
        };
        let pam = PamConfig {
            nu_p: 1e3,
            nu_phi: 1e3,
            perm_epochs: 20,
            perm_lr: 1.0,
            curve_epochs: 30,
            seed: k as u64,
            ..PamConfig::default()
        };
        let ctx = CurveContext {
            theta1: a,
            theta2: b,
            data: &s.data,
            align_x: ax.view(),
            variant: CostVariant::CorrPost,
            curve: &curve,
            pam: &pam,
            attack: None,
        };
        for (m, mode) in ["unaligned", "aligned", "pam-unaligned"].iter().enumerate() {
            let fit = registry.get(mode).unwrap().fit(&ctx).unwrap();
            let met = evaluate_curve(&fit.curve, vx.view(), &vy, &grid, None).unwrap();
            stats[k][m] = [met.mean_accuracy(), met.min_accuracy];
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, label) in [(1, "aligned"), (2, "pam-unaligned")] {
        for (i, metric) in ["mean", "min"].iter().enumerate() {
            let (mut wins, mut losses, mut ok) = (0, 0, 0);
            for st in &stats {
                let (x, base) = (st[m][i], st[0][i]);
                ok += usize::from(x >= base);
                wins += usize::from(x > base);
                losses += usize::from(x < base);
            }
            let p = sign_test(wins, losses);
            pass &= ok >= 8 && p < 0.05;
            parts.push(format!("{label} {metric} {ok}/10 p={p:.4}"));
        }
    }
    outcome(pass, parts.join(", "))
}

fn criterion_6(s: &Spirals) -> Outcome {
    let (vx, vy) = s.data.validation();
    let (ax, _) = s.data.alignment();
    let grid = uniform_grid(21);
    let mut ok = 0;
    let mut bars = Vec::new();
    for (a, b) in &s.pairs {
        let al = align_networks(a, b, ax.view(), CostVariant::CorrPost, false).unwrap();
        let u = evaluate_linear(a, b, vx.view(), &vy, &grid, None).unwrap().max_barrier;
        let v = evaluate_linear(a, &al.aligned, vx.view(), &vy, &grid, None).unwrap().max_barrier;
        ok += usize::from(v <= u);
        bars.push(format!("{v:.2}/{u:.2}"));
    }
    outcome(ok >= 8, format!("{ok}/10 pairs, aligned/unaligned barriers {}", bars.join(" ")))
}

fn criterion_7(s: &Spirals) -> Outcome {
    let (vx, vy) = s.data.validation();
    let (ax, _) = s.data.alignment();
    let grid = uniform_grid(21);
    let (mut ordered, mut valid) = (0, 0);
    for (a, b) in &s.pairs {
        let p = align_networks(a, b, ax.view(), CostVariant::L2Pre, false).unwrap().permutation;
        let rep = compute_bounds(a, b, Some(&p), vx.view(), &vy, &grid, BoundLoss::CrossEntropy).unwrap();
        ordered += usize::from(rep.b_a <= rep.b_u && rep.b_a_sharp <= rep.b_u_sharp);
        let above = |bound: &[f64], loss: &[f64]| bound.iter().zip(loss).all(|(b, l)| l <= b);
        valid += usize::from(
            above(&rep.b_u_t, &rep.realized_loss_u)
                && above(&rep.b_a_t, &rep.realized_loss_a)
                && above(&rep.b_u_t_sharp, &rep.realized_loss_u)
                && above(&rep.b_a_t_sharp, &rep.realized_loss_a),
        );
    }
    let mut r = rng::rng(707);
    let mut worst_gap = 0.0f64;
    let mut min_slack = f64::INFINITY;
    for scale in [1.0, 0.5] {
        let x = gaussian(&mut r, 64, 3);
        let inst = tight_instance(&x, scale, 0.7).unwrap();
        let probe = tightness_probe(&inst.theta1, &inst.theta2, inst.x.view(), inst.targets.view(), &grid).unwrap();
        worst_gap = worst_gap.max(probe.max_gap());
        min_slack = min_slack.min(probe.min_slack);
    }
    outcome(
        ordered == 10 && valid == 10 && worst_gap < 1e-6 && min_slack > -1e-9,
        format!("B_a <= B_u {ordered}/10, bounds above losses {valid}/10, tight instance gap {worst_gap:.1e}"),
    )
}

// ---------------------------------------------------------------------------
// 8. PAM descent

fn xor_data(seed: u64) -> Dataset {
    let mut r = rng::substream(seed, "pam-data");
    let x = Array2::from_shape_fn((120, 2), |_| r.random_range(-1.0..1.0));
    let y = (0..120).map(|i| usize::from(x[[i, 0]] * x[[i, 1]] > 0.0)).collect();
    Dataset::new(x, y, 2).unwrap()
}

fn criterion_8() -> Outcome {
    let spec = NetworkSpec::new(vec![2, 8, 8, 2], Activation::Relu).unwrap();
    let mut monotone = 0;
    let mut selections = 0;
    let mut selection_violations = 0;
    for seed in 0..10u64 {
        let data = xor_data(seed);
        let train = |s: u64| {
            let init = Network::init(&spec, &mut rng::substream(s, "init")).unwrap();
            let cfg = SgdConfig {
                epochs: 40,
                lr: 0.05,
                momentum: 0.9,
                seed: s,
                ..SgdConfig::default()
            };
            train_sgd(&init, &data, &cfg).unwrap().0
        };
        let (a, b) = (train(2 * seed), train(2 * seed + 1));
        let cfg = PamConfig {
            full_batch: true,
            outer_iters: 4,
            perm_epochs: 10,
            curve_epochs: 20,
            n_samples: 16,
            nu_p: 10.0,
            nu_phi: 10.0,
            perm_lr: 1.0,
            seed,
            ..PamConfig::default()
        };
        let problem = PamProblem::new(&a, &b, &data, &cfg).unwrap();
        let mut p = BlockPermutation::identity(&spec);
        let mut phi = Network::zeros(&spec);
        let mut prev = problem.objective(&phi, &p).unwrap();
        let mut ok = true;
        for iter in 0..cfg.outer_iters {
            let before = problem.objective(&phi, &p).unwrap();
            let ps = problem.perm_subproblem(&phi, &p, iter).unwrap();
            selections += 1;
            // Hard assertion: the chosen candidate never raises the objective.
            assert!(ps.objective + ps.proximal <= before, "selection raised the objective: {} > {before}", ps.objective + ps.proximal);
            assert!(ps.scores.iter().all(|(_, v)| ps.objective + ps.proximal <= *v));
            if ps.objective > before {
                selection_violations += 1;
            }
            let perm_total = ps.objective + ps.proximal;
            ok &= perm_total <= prev;
            p = ps.perm;
            let fs = problem.phi_subproblem(&phi, &p, iter).unwrap();
            let phi_total = fs.objective + fs.proximal + ps.proximal;
            ok &= phi_total <= perm_total;
            phi = fs.phi;
            prev = fs.objective;
            ok &= prev <= phi_total;
        }
        monotone += usize::from(ok);
    }
    outcome(
        monotone == 10 && selection_violations == 0,
        format!("non-increasing logs {monotone}/10, {selections} selections without increase"),
    )
}

// ---------------------------------------------------------------------------
// 9. Birkhoff machinery

fn random_doubly_stochastic(r: &mut Rng, n: usize) -> Array2<f64> {
    let k = r.random_range(1..=2 * n);
    let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut d = Array2::zeros((n, n));
    for w in weights {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(r);
        for (i, &j) in p.iter().enumerate() {
            d[[i, j]] += w / total;
        }
    }
    d
}

fn criterion_9() -> Outcome {
    let mut r = rng::rng(909);
    let mut worst_residual = 0.0f64;
    for _ in 0..100 {
        let m = Array2::from_shape_fn((16, 16), |_| r.random_range(0.0..1.0));
        worst_residual = worst_residual.max(sum_deviation(&project_matrix(&m, 20)));
    }
    let mut worst_recon = 0.0f64;
    for n in 1..=6 {
        for _ in 0..20 {
            let d = random_doubly_stochastic(&mut r, n);
            let dec = bvn_decompose(&d, usize::MAX, BvnRule::MaxTrace).unwrap();
            worst_recon = worst_recon.max(max_abs_diff(&dec.reconstruct(), &d));
        }
    }
    let mut first_matches = 0;
    for k in 0..100 {
        let n = 2 + k % 15;
        let d = project_matrix(&Array2::from_shape_fn((n, n), |_| r.random_range(0.0..1.0)), 20).mapv(|v| v.max(0.0));
        let dec = bvn_decompose(&d, 10, BvnRule::MaxTrace).unwrap();
        let nearest = solve_assignment(&d.mapv(|v| -v)).unwrap().perm;
        first_matches += usize::from(dec.terms[0].perm == nearest);
    }
    outcome(
        worst_residual < 1e-4 && worst_recon < 1e-8 && first_matches == 100,
        format!("residual {worst_residual:.1e}, reconstruction {worst_recon:.1e}, first term {first_matches}/100"),
    )
}

// ---------------------------------------------------------------------------
// 10. robust barrier

fn attack_is_valid(x: ArrayView2<f64>, adv: &Array2<f64>, cfg: &PgdConfig) -> bool {
    let (clo, chi) = cfg.clip_range.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    adv.iter().zip(x.iter()).all(|(&a, &x0)| {
        let lo = (x0 - cfg.epsilon).max(clo);
        let hi = (x0 + cfg.epsilon).min(chi);
        lo <= a && a <= hi
    })
}

fn criterion_10() -> Outcome {
    let spec = SyntheticSpec {
        kind: SyntheticKind::Moons,
        n: 1000,
        noise: 0.1,
        n_classes: 2,
    };
    let mut data = generate(&spec, &mut rng::substream(0, "data")).unwrap();
    data.assign_splits(0.2, 0.2, &mut rng::substream(0, "splits")).unwrap();
    let net_spec = NetworkSpec::new(vec![2, 32, 32, 2], Activation::Relu).unwrap();
    let range = data.feature_range();
    let lo = range.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = range.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let pgd = PgdConfig {
        clip_range: Some((lo, hi)),
        ..PgdConfig::scaled_to(&data, 0.05)
    };
    let (vx, vy) = data.validation();
    let (ax, _) = data.alignment();
    let grid = uniform_grid(21);
    let registry = CurveRegistry::default();
    let (mut ok, mut attacks, mut invalid) = (0, 0, 0);
    let mut bars = Vec::new();
    for k in 0..10u64 {
        let train = |s: u64| {
            let init = Network::init(&net_spec, &mut rng::substream(s, "init")).unwrap();
            let cfg = SgdConfig {
                epochs: 40,
                lr: 0.05,
                momentum: 0.9,
                seed: s,
                ..SgdConfig::default()
            };
            adversarial_train(&init, &data, &cfg, &PgdConfig { seed: s, ..pgd.clone() }).unwrap()
        };
        let (a, b) = (train(2 * k), train(2 * k + 1));
        let curve = CurveTrainConfig {
            epochs: 30,
            seed: k,
            ..CurveTrainConfig::default()
        };
        let pam = PamConfig::default();
        let ctx = CurveContext {
            theta1: &a,
            theta2: &b,
            data: &data,
            align_x: ax.view(),
            variant: CostVariant::CorrPost,
            curve: &curve,
            pam: &pam,
            attack: Some(&pgd),
        };
        let mut barrier = [0.0; 2];
        for (m, mode) in ["unaligned", "aligned"].iter().enumerate() {
            let fit = registry.get(mode).unwrap().fit(&ctx).unwrap();
            let (_, robust) = robust_curve_report(&fit.curve, vx.view(), &vy, &grid, &pgd).unwrap();
            barrier[m] = robust.max_barrier;
            for &t in &grid {
                let net = fit.curve.point(t).unwrap();
                let adv = pgd_attack(&net, vx.view(), &vy, &pgd, &mut rng::rng(pgd.seed)).unwrap();
                attacks += 1;
                invalid += usize::from(!attack_is_valid(vx.view(), &adv, &pgd));
            }
        }
        ok += usize::from(barrier[1] <= barrier[0]);
        bars.push(format!("{:.3}/{:.3}", barrier[1], barrier[0]));
    }
    outcome(
        ok >= 8 && invalid == 0,
        format!("{ok}/10 pairs, {invalid}/{attacks} invalid attacks, robust barriers {}", bars.join(" ")),
    )
}

// ---------------------------------------------------------------------------
// 11. correlation signature

fn criterion_11(s: &Spirals) -> Outcome {
    let (ax, _) = s.data.alignment();
    let (vx, _) = s.data.validation();
    let mut ok = 0;
    for (a, b) in &s.pairs {
        let al = align_networks(a, b, ax.view(), CostVariant::CorrPost, false).unwrap();
        let before = correlation_signature(a, b, ax.view()).unwrap();
        let after = correlation_signature(a, &al.aligned, ax.view()).unwrap();
        let held = correlation_signature(a, &al.aligned, vx.view()).unwrap();
        let held_before = correlation_signature(a, b, vx.view()).unwrap();
        ok += usize::from(
            after.iter().zip(&before).all(|(x, y)| x >= y) && held.iter().zip(&held_before).all(|(x, y)| x >= y),
        );
    }
    outcome(ok == 10, format!("{ok}/10 pairs improve at every layer"))
}

// ---------------------------------------------------------------------------
// 12. reproducibility

const REPRO_CONFIG: &str = r#"
seed = 12
n_pairs = 2

[data]
kind = "moons"
n = 300

[network]
hidden = [8, 8]

[train]
epochs = 8

[curve]
epochs = 4

[pam]
outer_iters = 1
perm_epochs = 2
curve_epochs = 2
"#;

fn criterion_12() -> Outcome {
    let cfg = ExperimentConfig::from_toml(REPRO_CONFIG, &[]).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let run_a = Run::new(cfg.clone(), dir_a.path());
    let run_b = Run::new(cfg, dir_b.path());
    type Stage = fn(&Run) -> modeconn::Result<Manifest>;
    let stages: [(&str, Stage); 5] = [
        ("gen-data", Run::gen_data),
        ("train", Run::train),
        ("align", Run::align),
        ("curve-pam-aligned", |r| r.curve("pam-aligned")),
        ("bounds", Run::bounds),
    ];
    let mut identical = 0;
    for (name, stage) in stages {
        let first = stage(&run_a).unwrap();
        let again = stage(&run_a).unwrap();
        let elsewhere = stage(&run_b).unwrap();
        let same = first == again && first.outputs == elsewhere.outputs;
        if !same {
            eprintln!("stage {name} differs between reruns");
        }
        identical += usize::from(same);
    }
    outcome(identical == 5, format!("{identical}/5 stages hash-identical"))
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |id: usize, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let took = start.elapsed();
        let pass = o.pass && took <= budget;
        all &= pass;
        println!(
            "criterion {id:>2} {name:<26} {}  {} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64()
        );
    };
    let secs = Duration::from_secs;
    report(1, "assignment oracle", secs(5), &mut criterion_1);
    report(2, "symmetry exactness", secs(10), &mut criterion_2);
    report(3, "gradient suite", secs(60), &mut criterion_3);
    report(4, "permutation recovery", secs(120), &mut criterion_4);
    let start = Instant::now();
    let s = spirals();
    let training = start.elapsed();
    println!("trained 10 spirals pairs in {:.1}s", training.as_secs_f64());
    report(5, "ordering", secs(1800) - training, &mut || criterion_5(&s));
    report(6, "linear barrier", secs(300) - training, &mut || criterion_6(&s));
    report(7, "loss bounds", secs(300) - training, &mut || criterion_7(&s));
    report(8, "PAM descent", secs(600), &mut criterion_8);
    report(9, "Birkhoff machinery", secs(30), &mut criterion_9);
    report(10, "robust barrier", secs(1800), &mut criterion_10);
    report(11, "correlation signature", secs(120) - training, &mut || criterion_11(&s));
    report(12, "reproducibility", secs(120), &mut criterion_12);
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
