//! Proximal alternating minimization over a curve's control parameters `φ`
//! and the block permutation `P` applied to the second endpoint.
//!
//! The curve is `r(t) = (1−t)θ₁ + tPθ₂ + 2(1−t)t φ`, a quadratic Bezier
//! curve with control `(θ₁ + Pθ₂)/2 + φ`. The permutation step relaxes `P`
//! to doubly stochastic blocks, then picks the best of the previous
//! permutation, the nearest permutation to the relaxed optimum and samples
//! from its Birkhoff–von Neumann decomposition.

mod birkhoff;
mod bvn;
mod relaxed;

pub use birkhoff::{project_birkhoff, project_matrix, sum_deviation, DoublyStochasticBlock};
pub use bvn::{bvn_decompose, sample_permutations, BvnDecomposition, BvnRule, BvnTerm};
pub use relaxed::{curve_point, midpoint_nodes, relaxed_apply, relaxed_grad, CurveObjective, ObjectiveGrad};

use std::collections::HashSet;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::alignment::BlockPermutation;
use crate::curve::BezierCurve;
use crate::nn::{Dataset, Gradients, LossKind, Network};
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PamConfig {
    pub nu_p: f64,
    pub nu_phi: f64,
    pub perm_epochs: usize,
    pub curve_epochs: usize,
    pub proj_iters: usize,
    pub bvn_truncate: usize,
    pub n_samples: usize,
    pub outer_iters: usize,
    /// Samples used to score permutation candidates (and to log objectives).
    pub selection_batch: usize,
    pub seed: u64,
    pub perm_lr: f64,
    pub phi_lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    /// Learning-rate factor applied per outer iteration.
    pub anneal: f64,
    /// Deterministic mode: every step uses the whole training split and the
    /// fixed quadrature nodes; the curve step backtracks to ensure descent.
    pub full_batch: bool,
    pub quadrature_points: usize,
    pub bvn_rule: BvnRule,
    pub loss: LossKind,
}

impl Default for PamConfig {
    fn default() -> Self {
        PamConfig {
            nu_p: 1.0,
            nu_phi: 1.0,
            perm_epochs: 20,
            curve_epochs: 250,
            proj_iters: 20,
            bvn_truncate: 10,
            n_samples: 32,
            outer_iters: 1,
            selection_batch: 2048,
            seed: 0,
            perm_lr: 0.1,
            phi_lr: 0.05,
            batch_size: 64,
            momentum: 0.9,
            anneal: 0.5,
            full_batch: false,
            quadrature_points: 8,
            bvn_rule: BvnRule::MaxTrace,
            loss: LossKind::CrossEntropy,
        }
    }
}

impl PamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("nu_p", self.nu_p),
            ("nu_phi", self.nu_phi),
            ("perm_lr", self.perm_lr),
            ("phi_lr", self.phi_lr),
            ("anneal", self.anneal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("pam.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("proj_iters", self.proj_iters),
            ("bvn_truncate", self.bvn_truncate),
            ("selection_batch", self.selection_batch),
            ("batch_size", self.batch_size),
            ("quadrature_points", self.quadrature_points),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("pam.{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("pam.momentum {} not in [0, 1)", self.momentum)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Perm,
    Phi,
}

/// One half-step of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamRecord {
    pub iter: usize,
    pub phase: Phase,
    /// Curve objective on the selection samples after the half-step.
    pub objective: f64,
    /// Proximal penalties accumulated within the current outer iteration.
    pub proximal_term: f64,
    pub selected_candidate: Option<String>,
}

impl PamRecord {
    pub fn total(&self) -> f64 {
        self.objective + self.proximal_term
    }
}

#[derive(Debug, Clone)]
pub struct PermStep {
    pub perm: BlockPermutation,
    /// Objective at the selected permutation.
    pub objective: f64,
    /// `‖P − P_k‖² / (2ν_P)`.
    pub proximal: f64,
    pub selected: String,
    pub relaxed: DoublyStochasticBlock,
    /// Scores of every distinct candidate: (label, proximal objective).
    pub scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone)]
pub struct PhiStep {
    pub phi: Network,
    pub objective: f64,
    /// `‖φ − φ_k‖² / (2ν_φ)`.
    pub proximal: f64,
}

/// Fixed data of a PAM run.
pub struct PamProblem<'a> {
    pub theta1: &'a Network,
    pub theta2: &'a Network,
    pub config: &'a PamConfig,
    train_x: Array2<f64>,
    train_y: Vec<usize>,
    sel_x: Array2<f64>,
    sel_y: Vec<usize>,
    nodes: Vec<f64>,
}

fn perm_mats(p: &BlockPermutation) -> Vec<Array2<f64>> {
    (1..=p.perms.len()).map(|l| p.matrix(l)).collect()
}

impl<'a> PamProblem<'a> {
    pub fn new(theta1: &'a Network, theta2: &'a Network, data: &Dataset, config: &'a PamConfig) -> Result<Self> {
        config.validate()?;
        theta1.check_same_spec(theta2)?;
        let (train_x, train_y) = data.train();
        if train_y.is_empty() {
            return Err(Error::Empty("training split".into()));
        }
        let (sel_x, sel_y) = if config.full_batch || config.selection_batch >= train_y.len() {
            (train_x.clone(), train_y.clone())
        } else {
            let mut idx: Vec<usize> = (0..train_y.len()).collect();
            idx.shuffle(&mut rng::substream(config.seed, "pam-selection"));
            idx.truncate(config.selection_batch);
            idx.sort_unstable();
            (train_x.select(Axis(0), &idx), idx.iter().map(|&i| train_y[i]).collect())
        };
        Ok(PamProblem {
            theta1,
            theta2,
            config,
            train_x,
            train_y,
            sel_x,
            sel_y,
            nodes: midpoint_nodes(config.quadrature_points),
        })
    }

    fn selection_objective(&self) -> CurveObjective<'_> {
        CurveObjective {
            theta1: self.theta1,
            theta2: self.theta2,
            x: self.sel_x.view(),
            labels: &self.sel_y,
            nodes: &self.nodes,
            loss: self.config.loss,
        }
    }

    /// `Q(φ, P)` on the selection samples.
    pub fn objective(&self, phi: &Network, p: &BlockPermutation) -> Result<f64> {
        self.selection_objective().value_moved(&p.apply(self.theta2)?, phi)
    }

    /// Batches of one epoch; `None` stands for the deterministic full pass.
    fn batches(&self, r: &mut rng::Rng) -> Vec<Option<(Array2<f64>, Vec<usize>, f64)>> {
        if self.config.full_batch {
            return vec![None];
        }
        let mut order: Vec<usize> = (0..self.train_y.len()).collect();
        order.shuffle(r);
        order
            .chunks(self.config.batch_size)
            .map(|c| {
                let t: f64 = r.random();
                Some((self.train_x.select(Axis(0), c), c.iter().map(|&i| self.train_y[i]).collect(), t))
            })
            .collect()
    }

    fn gradient(
        &self,
        batch: &Option<(Array2<f64>, Vec<usize>, f64)>,
        d: &[Array2<f64>],
        phi: &Network,
        want_d: bool,
    ) -> Result<ObjectiveGrad> {
        match batch {
            None => self.selection_objective().gradient(d, phi, want_d),
            Some((x, y, t)) => CurveObjective {
                theta1: self.theta1,
                theta2: self.theta2,
                x: x.view(),
                labels: y,
                nodes: std::slice::from_ref(t),
                loss: self.config.loss,
            }
            .gradient(d, phi, want_d),
        }
    }

    /// `argmin_P Q(φ, P) + ‖P − P_k‖²/(2ν_P)` over the candidate set.
    pub fn perm_subproblem(&self, phi: &Network, p_k: &BlockPermutation, iter: usize) -> Result<PermStep> {
        let cfg = self.config;
        let spec = &self.theta1.spec;
        p_k.validate(spec)?;
        let lr = cfg.perm_lr * cfg.anneal.powi(iter as i32);
        let anchor = perm_mats(p_k);
        let mut d = anchor.clone();
        let mut r = rng::substream(cfg.seed, &format!("pam-perm-{iter}"));
        for _ in 0..cfg.perm_epochs {
            for batch in self.batches(&mut r) {
                let g = self.gradient(&batch, &d, phi, true)?;
                if !g.value.is_finite() {
                    return Err(Error::NonFinite("permutation subproblem loss".into()));
                }
                // Implicit step on the proximal term: stable for any ν_P.
                let keep = 1.0 / (1.0 + lr / cfg.nu_p);
                for ((dl, gl), al) in d.iter_mut().zip(&g.d).zip(&anchor) {
                    dl.scaled_add(-lr, gl);
                    dl.scaled_add(lr / cfg.nu_p, al);
                    *dl *= keep;
                }
                d = project_birkhoff(&d, cfg.proj_iters)?.mats;
            }
        }
        let relaxed = DoublyStochasticBlock { mats: d };
        let projection = relaxed.hungarian_projection()?;
        let decomps = relaxed
            .mats
            .iter()
            .map(|m| bvn_decompose(&m.mapv(|v| v.max(0.0)), cfg.bvn_truncate, cfg.bvn_rule))
            .collect::<Result<Vec<_>>>()?;
        let samples = sample_permutations(
            &decomps,
            spec,
            cfg.n_samples,
            rng::substream_seed(cfg.seed, &format!("pam-bvn-{iter}")),
        )?;

        let mut candidates: Vec<(String, BlockPermutation)> = vec![("projection".into(), projection)];
        candidates.extend(samples.into_iter().enumerate().map(|(k, p)| (format!("sample_{k}"), p)));
        let base = self.objective(phi, p_k)?;
        let mut best = (String::from("prev"), p_k.clone(), base, 0.0);
        let mut scores = vec![("prev".to_string(), base)];
        let mut seen: HashSet<BlockPermutation> = HashSet::from([p_k.clone()]);
        for (label, cand) in candidates {
            if !seen.insert(cand.clone()) {
                continue;
            }
            let prox = cand.sq_distance(p_k) / (2.0 * cfg.nu_p);
            let q = self.objective(phi, &cand)?;
            scores.push((label.clone(), q + prox));
            if q + prox < best.2 + best.3 {
                best = (label, cand, q, prox);
            }
        }
        Ok(PermStep {
            perm: best.1,
            objective: best.2,
            proximal: best.3,
            selected: best.0,
            relaxed,
            scores,
        })
    }

    /// `argmin_φ Q(φ, P) + ‖φ − φ_k‖²/(2ν_φ)` by (stochastic) gradient steps.
    pub fn phi_subproblem(&self, phi_k: &Network, p: &BlockPermutation, iter: usize) -> Result<PhiStep> {
        let cfg = self.config;
        let d = perm_mats(p);
        let moved2 = p.apply(self.theta2)?;
        let mut lr = cfg.phi_lr * cfg.anneal.powi(iter as i32);
        let mut phi = phi_k.clone();
        let prox_of = |phi: &Network| phi.sq_distance(phi_k) / (2.0 * cfg.nu_phi);
        let sel = self.selection_objective();
        if cfg.full_batch {
            let mut current = sel.value_moved(&moved2, &phi)?;
            for _ in 0..cfg.curve_epochs {
                let g = sel.gradient(&d, &phi, false)?;
                let mut accepted = false;
                for _ in 0..40 {
                    let trial = prox_step(&phi, &g.phi, phi_k, lr, cfg.nu_phi);
                    let value = sel.value_moved(&moved2, &trial)? + prox_of(&trial);
                    if value.is_finite() && value <= current {
                        phi = trial;
                        current = value;
                        accepted = true;
                        break;
                    }
                    lr *= 0.5;
                }
                if !accepted {
                    break;
                }
            }
        } else {
            let mut r = rng::substream(cfg.seed, &format!("pam-phi-{iter}"));
            let mut velocity = Gradients::zeros_like(&phi);
            let base_lr = lr;
            for epoch in 0..cfg.curve_epochs {
                lr = 0.5 * base_lr * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.curve_epochs as f64).cos());
                for batch in self.batches(&mut r) {
                    let g = self.gradient(&batch, &d, &phi, false)?;
                    if !g.value.is_finite() {
                        return Err(Error::NonFinite("curve subproblem loss".into()));
                    }
                    velocity.scale(cfg.momentum);
                    velocity.add_scaled(1.0, &g.phi);
                    phi = prox_step(&phi, &velocity, phi_k, lr, cfg.nu_phi);
                }
            }
        }
        Ok(PhiStep {
            objective: sel.value_moved(&moved2, &phi)?,
            proximal: prox_of(&phi),
            phi,
        })
    }
}

/// `argmin_ψ ⟨g, ψ⟩ + ‖ψ − φ‖²/(2·lr) + ‖ψ − φ_k‖²/(2ν)`.
fn prox_step(phi: &Network, g: &Gradients, phi_k: &Network, lr: f64, nu: f64) -> Network {
    let mut out = phi.clone();
    out.add_scaled_grad(-lr, g);
    out.add_scaled_net(lr / nu, phi_k);
    let keep = 1.0 / (1.0 + lr / nu);
    for w in &mut out.weights {
        *w *= keep;
    }
    for b in &mut out.biases {
        *b *= keep;
    }
    out
}

#[derive(Debug, Clone)]
pub struct PamResult {
    /// Bezier form: endpoints `θ₁`, `Pθ₂`, control `(θ₁ + Pθ₂)/2 + φ`.
    pub curve: BezierCurve,
    pub permutation: BlockPermutation,
    pub phi: Network,
    pub initial_objective: f64,
    pub log: Vec<PamRecord>,
}

pub fn to_bezier(theta1: &Network, theta2: &Network, p: &BlockPermutation, phi: &Network) -> Result<BezierCurve> {
    let moved = p.apply(theta2)?;
    let control = Network::combine(&[(0.5, theta1), (0.5, &moved), (1.0, phi)])?;
    BezierCurve::new(theta1.clone(), moved, control)
}

/// Alternate permutation and curve steps `outer_iters` times starting from
/// `p_init` and `φ = 0`.
pub fn run_pam(theta1: &Network, theta2: &Network, p_init: &BlockPermutation, data: &Dataset, cfg: &PamConfig) -> Result<PamResult> {
    let problem = PamProblem::new(theta1, theta2, data, cfg)?;
    let mut p = p_init.clone();
    p.validate(&theta1.spec)?;
    let mut phi = Network::zeros(&theta1.spec);
    let initial_objective = problem.objective(&phi, &p)?;
    let mut log = Vec::new();
    for iter in 0..cfg.outer_iters {
        let ps = problem.perm_subproblem(&phi, &p, iter)?;
        p = ps.perm;
        log.push(PamRecord {
            iter,
            phase: Phase::Perm,
            objective: ps.objective,
            proximal_term: ps.proximal,
            selected_candidate: Some(ps.selected),
        });
        let fs = problem.phi_subproblem(&phi, &p, iter)?;
        phi = fs.phi;
        log.push(PamRecord {
            iter,
            phase: Phase::Phi,
            objective: fs.objective,
            proximal_term: ps.proximal + fs.proximal,
            selected_candidate: None,
        });
    }
    Ok(PamResult {
        curve: to_bezier(theta1, theta2, &p, &phi)?,
        permutation: p,
        phi,
        initial_objective,
        log,
    })
}
