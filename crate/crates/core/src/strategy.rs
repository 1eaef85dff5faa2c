//! Curve-finding strategies behind one trait, registered by name.

use std::collections::BTreeMap;

use ndarray::ArrayView2;

use crate::alignment::{align_networks, BlockPermutation, CostVariant};
use crate::curve::{train_curve, BezierCurve, CurveLog, CurveTrainConfig};
use crate::nn::{Dataset, Network};
use crate::pam::{run_pam, PamConfig, PamRecord};
use crate::robust::PgdConfig;
use crate::{Error, Result};

/// Inputs shared by every strategy.
pub struct CurveContext<'a> {
    pub theta1: &'a Network,
    pub theta2: &'a Network,
    pub data: &'a Dataset,
    /// Samples used for neuron alignment.
    pub align_x: ArrayView2<'a, f64>,
    pub variant: CostVariant,
    pub curve: &'a CurveTrainConfig,
    pub pam: &'a PamConfig,
    /// Adversarial curve training when set.
    pub attack: Option<&'a PgdConfig>,
}

#[derive(Debug, Clone)]
pub struct CurveFit {
    pub curve: BezierCurve,
    /// Permutation applied to `θ₂` before the curve was fit.
    pub permutation: BlockPermutation,
    pub train_log: Option<CurveLog>,
    pub pam_log: Option<PamLog>,
}

#[derive(Debug, Clone)]
pub struct PamLog {
    pub initial_objective: f64,
    pub records: Vec<PamRecord>,
}

pub trait CurveStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, ctx: &CurveContext<'_>) -> Result<CurveFit>;
}

fn alignment(ctx: &CurveContext<'_>) -> Result<BlockPermutation> {
    let residual = ctx.theta1.spec.is_residual();
    Ok(align_networks(ctx.theta1, ctx.theta2, ctx.align_x, ctx.variant, residual)?.permutation)
}

fn fit_bezier(ctx: &CurveContext<'_>, p: BlockPermutation) -> Result<CurveFit> {
    let moved = p.apply(ctx.theta2)?;
    let init = BezierCurve::init_linear(ctx.theta1, &moved)?;
    let (curve, log) = train_curve(&init, ctx.data, ctx.curve, ctx.attack)?;
    Ok(CurveFit {
        curve,
        permutation: p,
        train_log: Some(log),
        pam_log: None,
    })
}

fn fit_pam(ctx: &CurveContext<'_>, p: BlockPermutation) -> Result<CurveFit> {
    if ctx.attack.is_some() {
        return Err(Error::Unsupported("PAM curves are trained on clean data only".into()));
    }
    let res = run_pam(ctx.theta1, ctx.theta2, &p, ctx.data, ctx.pam)?;
    Ok(CurveFit {
        curve: res.curve,
        permutation: res.permutation,
        train_log: None,
        pam_log: Some(PamLog {
            initial_objective: res.initial_objective,
            records: res.log,
        }),
    })
}

pub struct Unaligned;
pub struct Aligned;
pub struct PamUnaligned;
pub struct PamAligned;

impl CurveStrategy for Unaligned {
    fn name(&self) -> &'static str {
        "unaligned"
    }
    fn fit(&self, ctx: &CurveContext<'_>) -> Result<CurveFit> {
        fit_bezier(ctx, BlockPermutation::identity(&ctx.theta1.spec))
    }
}

impl CurveStrategy for Aligned {
    fn name(&self) -> &'static str {
        "aligned"
    }
    fn fit(&self, ctx: &CurveContext<'_>) -> Result<CurveFit> {
        fit_bezier(ctx, alignment(ctx)?)
    }
}

impl CurveStrategy for PamUnaligned {
    fn name(&self) -> &'static str {
        "pam-unaligned"
    }
    fn fit(&self, ctx: &CurveContext<'_>) -> Result<CurveFit> {
        fit_pam(ctx, BlockPermutation::identity(&ctx.theta1.spec))
    }
}

impl CurveStrategy for PamAligned {
    fn name(&self) -> &'static str {
        "pam-aligned"
    }
    fn fit(&self, ctx: &CurveContext<'_>) -> Result<CurveFit> {
        fit_pam(ctx, alignment(ctx)?)
    }
}

pub struct CurveRegistry {
    strategies: BTreeMap<&'static str, Box<dyn CurveStrategy>>,
}

impl Default for CurveRegistry {
    fn default() -> Self {
        let mut r = CurveRegistry::empty();
        r.register(Box::new(Unaligned));
        r.register(Box::new(Aligned));
        r.register(Box::new(PamUnaligned));
        r.register(Box::new(PamAligned));
        r
    }
}

impl CurveRegistry {
    pub fn empty() -> Self {
        CurveRegistry {
            strategies: BTreeMap::new(),
        }
    }

    /// Replaces any strategy registered under the same name.
    pub fn register(&mut self, s: Box<dyn CurveStrategy>) {
        self.strategies.insert(s.name(), s);
    }

    pub fn get(&self, name: &str) -> Result<&dyn CurveStrategy> {
        self.strategies.get(name).map(|s| s.as_ref()).ok_or_else(|| {
            Error::Config(format!("unknown curve mode `{name}`; expected one of: {}", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.strategies.keys().copied().collect()
    }
}

/// Row order of reports.
pub const MODES: [&str; 4] = ["unaligned", "pam-unaligned", "pam-aligned", "aligned"];
