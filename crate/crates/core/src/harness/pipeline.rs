//! Pipeline stages. Each stage reads verified artifacts of earlier stages
//! from the run directory, writes its own artifacts and records a manifest.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::config::{DataKind, ExperimentConfig, SeedConvention};
use super::data::{generate, read_csv, write_csv};
use super::io::{
    artifact_ref, read_json, read_model, read_table, write_json, write_jsonl, write_model, write_table, ArtifactRef,
    CurveFile, Manifest, PermutationFile, FORMAT_VERSION,
};
use crate::alignment::{align_networks, correlation_signature, CostVariant};
use crate::bounds::{compute_bounds, BoundReport};
use crate::curve::{evaluate_curve, plane_grid, uniform_grid, CurveMetrics, CurveTrainConfig};
use crate::nn::{train_sgd, Dataset, Network, SgdConfig};
use crate::pam::PamConfig;
use crate::robust::{adversarial_train, robust_evaluate, PgdConfig};
use crate::rng::{substream, substream_seed};
use crate::strategy::{CurveContext, CurveRegistry, MODES};
use crate::{Error, Result};

/// A configured run rooted at one output directory.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub dir: PathBuf,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl Run {
    pub fn new(cfg: ExperimentConfig, dir: impl Into<PathBuf>) -> Self {
        Run { cfg, dir: dir.into() }
    }

    fn rel(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    fn seed(&self, name: &str) -> u64 {
        substream_seed(self.cfg.seed, name)
    }

    fn finish(&self, stage: &str, inputs: Vec<ArtifactRef>, outputs: &[String]) -> Result<Manifest> {
        let outputs = outputs
            .iter()
            .map(|o| artifact_ref(&self.dir, Path::new(o)))
            .collect::<Result<Vec<_>>>()?;
        let m = Manifest {
            format_version: FORMAT_VERSION,
            stage: stage.to_string(),
            config_hash: self.cfg.hash(),
            seed: self.cfg.seed,
            inputs,
            outputs,
        };
        write_json(&Manifest::path(&self.dir, stage), &m)?;
        Ok(m)
    }

    /// Verified reference to an artifact produced by `stage`.
    fn input(&self, stage: &str, rel: &str) -> Result<ArtifactRef> {
        let m = Manifest::load(&self.dir, stage)?;
        let a = m
            .output(Path::new(rel))
            .ok_or_else(|| Error::MissingArtifact(self.rel(rel)))?
            .clone();
        super::io::verify_artifact(&self.dir, &a)?;
        Ok(a)
    }

    fn model_path(j: usize) -> String {
        format!("models/model_{j}.json")
    }

    pub fn n_models(&self) -> usize {
        2 * self.cfg.n_pairs
    }

    // ---- data -------------------------------------------------------------

    pub fn gen_data(&self) -> Result<Manifest> {
        let (data, inputs) = match self.cfg.data.kind {
            DataKind::Csv => {
                let src = self.cfg.data.path.clone().expect("validated");
                let d = read_csv(&src, None)?;
                let abs = std::path::absolute(&src)?;
                (d, vec![ArtifactRef {
                    sha256: super::io::sha256_file(&abs)?,
                    path: abs,
                }])
            }
            _ => {
                let spec = self.cfg.data.synthetic().expect("synthetic kind");
                (generate(&spec, &mut substream(self.cfg.seed, "data"))?, vec![])
            }
        };
        std::fs::create_dir_all(&self.dir)?;
        write_csv(&data, &self.rel("data.csv"))?;
        self.finish("gen-data", inputs, &["data.csv".into()])
    }

    /// The dataset with split tags drawn from the experiment seed.
    pub fn load_data(&self) -> Result<(Dataset, ArtifactRef)> {
        let a = self.input("gen-data", "data.csv")?;
        let classes = match self.cfg.data.kind {
            DataKind::Csv => None,
            _ => Some(self.cfg.data.classes()),
        };
        let mut d = read_csv(&self.rel("data.csv"), classes)?;
        d.assign_splits(self.cfg.data.validation_frac, self.cfg.data.alignment_frac, &mut substream(self.cfg.seed, "splits"))?;
        Ok((d, a))
    }

    fn eval_split(data: &Dataset) -> (Array2<f64>, Vec<usize>) {
        let (x, y) = data.validation();
        if y.is_empty() {
            data.train()
        } else {
            (x, y)
        }
    }

    fn align_split(data: &Dataset) -> Array2<f64> {
        let (x, y) = data.alignment();
        if y.is_empty() {
            data.train().0
        } else {
            x
        }
    }

    /// Attack used for robust training and evaluation.
    pub fn pgd(&self, data: &Dataset, name: &str) -> PgdConfig {
        self.cfg.robust.pgd(data.max_feature_span(), self.seed(name))
    }

    // ---- training ---------------------------------------------------------

    pub fn train(&self) -> Result<Manifest> {
        let (data, data_ref) = self.load_data()?;
        let spec = self.cfg.network.spec(data.n_features(), data.n_classes)?;
        let mut outputs = Vec::new();
        for j in 1..=self.n_models() {
            let init = Network::init(&spec, &mut substream(self.cfg.seed, &format!("init-{j}")))?;
            let sgd = SgdConfig {
                seed: self.seed(&format!("train-{j}")),
                ..self.cfg.train.clone()
            };
            let net = if self.cfg.robust.enabled {
                adversarial_train(&init, &data, &sgd, &self.pgd(&data, &format!("attack-train-{j}")))?
            } else {
                train_sgd(&init, &data, &sgd)?.0
            };
            let rel = Self::model_path(j);
            write_model(&self.rel(&rel), &net)?;
            outputs.push(rel);
        }
        self.finish("train", vec![data_ref], &outputs)
    }

    /// Endpoints of pair `k` (0-based) with their verified references.
    pub fn load_pair(&self, k: usize) -> Result<(Network, Network, Vec<ArtifactRef>)> {
        let (a, b) = (Self::model_path(2 * k + 1), Self::model_path(2 * k + 2));
        let refs = vec![self.input("train", &a)?, self.input("train", &b)?];
        Ok((read_model(&self.rel(&a))?, read_model(&self.rel(&b))?, refs))
    }

    // ---- alignment --------------------------------------------------------

    pub fn align(&self) -> Result<Manifest> {
        let (data, data_ref) = self.load_data()?;
        let ax = Self::align_split(&data);
        let mut inputs = vec![data_ref];
        let mut outputs = Vec::new();
        for k in 0..self.cfg.n_pairs {
            let (a, b, refs) = self.load_pair(k)?;
            inputs.extend(refs);
            let al = align_networks(&a, &b, ax.view(), self.cfg.alignment.variant, a.spec.is_residual())?;
            let file = PermutationFile {
                format_version: FORMAT_VERSION,
                signature_before: correlation_signature(&a, &b, ax.view())?,
                signature_after: correlation_signature(&a, &al.aligned, ax.view())?,
                permutation: al.permutation,
                cost_per_layer: al.cost_per_layer,
            };
            let rel = format!("alignments/pair_{k}.json");
            write_json(&self.rel(&rel), &file)?;
            outputs.push(rel);
        }
        self.finish("align", inputs, &outputs)
    }

    // ---- curves -----------------------------------------------------------

    fn curve_dir(conv: SeedConvention) -> String {
        format!("curves/{}", conv.name())
    }

    fn curve_stage(mode: &str, conv: SeedConvention) -> String {
        format!("curve-{mode}-{}", conv.name())
    }

    /// Seeds of the curve and PAM streams for pair `k` under a convention.
    fn curve_seed(&self, k: usize, mode: &str, conv: SeedConvention, what: &str) -> u64 {
        match conv {
            SeedConvention::Table => self.seed(&format!("{what}-{k}-{mode}")),
            SeedConvention::Figure => self.seed(&format!("{what}-{k}")),
        }
    }

    /// Train one curve class for pair `k` with the given curve settings.
    pub fn fit_curve(
        &self,
        data: &Dataset,
        k: usize,
        mode: &str,
        curve_cfg: &CurveTrainConfig,
        conv: SeedConvention,
    ) -> Result<(crate::strategy::CurveFit, Vec<ArtifactRef>)> {
        let (a, b, refs) = self.load_pair(k)?;
        let ax = Self::align_split(data);
        let curve = CurveTrainConfig {
            seed: self.curve_seed(k, mode, conv, "curve"),
            ..curve_cfg.clone()
        };
        let pam = PamConfig {
            seed: self.curve_seed(k, mode, conv, "pam"),
            ..self.cfg.pam.clone()
        };
        let attack = self.cfg.robust.enabled.then(|| self.pgd(data, &format!("attack-curve-{k}")));
        let registry = CurveRegistry::default();
        let ctx = CurveContext {
            theta1: &a,
            theta2: &b,
            data,
            align_x: ax.view(),
            variant: self.cfg.alignment.variant,
            curve: &curve,
            pam: &pam,
            attack: attack.as_ref(),
        };
        Ok((registry.get(mode)?.fit(&ctx)?, refs))
    }

    /// Clean metrics, plus robust metrics when robust mode is on.
    pub fn curve_metrics(&self, data: &Dataset, curve: &crate::curve::BezierCurve) -> Result<(CurveMetrics, Option<CurveMetrics>)> {
        let (x, y) = Self::eval_split(data);
        let grid = uniform_grid(self.cfg.eval.grid_points);
        let clean = evaluate_curve(curve, x.view(), &y, &grid, None)?;
        let robust = if self.cfg.robust.enabled {
            Some(evaluate_curve(curve, x.view(), &y, &grid, Some(&self.pgd(data, "attack-eval")))?)
        } else {
            None
        };
        Ok((clean, robust))
    }

    pub fn curve(&self, mode: &str) -> Result<Manifest> {
        CurveRegistry::default().get(mode)?;
        let conv = self.cfg.eval.seed_convention;
        let (data, data_ref) = self.load_data()?;
        let mut inputs = vec![data_ref];
        let mut outputs = Vec::new();
        let dir = Self::curve_dir(conv);
        for k in 0..self.cfg.n_pairs {
            let (fit, refs) = self.fit_curve(&data, k, mode, &self.cfg.curve, conv)?;
            inputs.extend(refs);
            let base = format!("{dir}/pair_{k}/{mode}");
            write_json(&self.rel(&format!("{base}.json")), &CurveFile::new(mode, &fit.curve, &fit.permutation))?;
            outputs.push(format!("{base}.json"));
            let (clean, robust) = self.curve_metrics(&data, &fit.curve)?;
            let mut header = vec!["t", "loss", "accuracy"];
            if robust.is_some() {
                header.extend(["robust_loss", "robust_accuracy"]);
            }
            let rows = (0..clean.t_grid.len())
                .map(|i| {
                    let mut r = vec![fmt(clean.t_grid[i]), fmt(clean.loss[i]), fmt(clean.accuracy[i])];
                    if let Some(rb) = &robust {
                        r.extend([fmt(rb.loss[i]), fmt(rb.accuracy[i])]);
                    }
                    r
                })
                .collect::<Vec<_>>();
            write_table(&self.rel(&format!("{base}.csv")), &header, &rows)?;
            outputs.push(format!("{base}.csv"));
            if let Some(log) = &fit.pam_log {
                #[derive(Serialize)]
                struct Header {
                    format_version: u32,
                    initial_objective: f64,
                }
                let mut lines = vec![serde_json::to_value(Header {
                    format_version: FORMAT_VERSION,
                    initial_objective: log.initial_objective,
                })?];
                for r in &log.records {
                    lines.push(serde_json::to_value(r)?);
                }
                write_jsonl(&self.rel(&format!("{base}.pam.jsonl")), &lines)?;
                outputs.push(format!("{base}.pam.jsonl"));
            }
        }
        self.finish(&Self::curve_stage(mode, conv), inputs, &outputs)
    }

    // ---- bounds -----------------------------------------------------------

    pub fn bounds(&self) -> Result<Manifest> {
        let (data, data_ref) = self.load_data()?;
        let ax = Self::align_split(&data);
        let (x, y) = Self::eval_split(&data);
        let grid = uniform_grid(self.cfg.bounds.grid_points);
        let mut inputs = vec![data_ref];
        let mut outputs = Vec::new();
        for k in 0..self.cfg.n_pairs {
            let (a, b, refs) = self.load_pair(k)?;
            inputs.extend(refs);
            let variant = self.cfg.bounds.variant;
            let p = align_networks(&a, &b, ax.view(), variant, a.spec.is_residual())?.permutation;
            let mut report = compute_bounds(&a, &b, Some(&p), x.view(), &y, &grid, self.cfg.bounds.loss)?;
            report.heuristic = variant != CostVariant::L2Pre;
            let base = format!("bounds/pair_{k}");
            write_json(&self.rel(&format!("{base}.json")), &BoundFile::new(report.clone()))?;
            let rows = (0..grid.len())
                .map(|i| {
                    vec![
                        fmt(grid[i]),
                        fmt(report.b_u_t[i]),
                        fmt(report.b_a_t[i]),
                        fmt(report.realized_loss_u[i]),
                        fmt(report.realized_loss_a[i]),
                    ]
                })
                .collect::<Vec<_>>();
            write_table(&self.rel(&format!("{base}.csv")), &["t", "B_u", "B_a", "loss_u", "loss_a"], &rows)?;
            outputs.extend([format!("{base}.json"), format!("{base}.csv")]);
        }
        self.finish("bounds", inputs, &outputs)
    }

    // ---- attacks ----------------------------------------------------------

    pub fn attack(&self) -> Result<Manifest> {
        let (data, data_ref) = self.load_data()?;
        let (x, y) = Self::eval_split(&data);
        let pgd = self.pgd(&data, "attack-eval");
        let mut inputs = vec![data_ref];
        let mut rows = Vec::new();
        for j in 1..=self.n_models() {
            let rel = Self::model_path(j);
            inputs.push(self.input("train", &rel)?);
            let net = read_model(&self.rel(&rel))?;
            let (cl, ca) = crate::nn::evaluate(&net, x.view(), &y, pgd.loss)?;
            let (rl, ra) = robust_evaluate(&net, x.view(), &y, &pgd)?;
            rows.push(vec![j.to_string(), fmt(pgd.epsilon), fmt(cl), fmt(ca), fmt(rl), fmt(ra)]);
        }
        let rel = "attack/models.csv";
        write_table(
            &self.rel(rel),
            &["model", "epsilon", "clean_loss", "clean_accuracy", "robust_loss", "robust_accuracy"],
            &rows,
        )?;
        self.finish("attack", inputs, &[rel.into()])
    }

    // ---- plane ------------------------------------------------------------

    pub fn plane(&self) -> Result<Manifest> {
        let conv = self.cfg.eval.seed_convention;
        let mode = self.cfg.plane.mode.clone();
        let stage = Self::curve_stage(&mode, conv);
        let (data, data_ref) = self.load_data()?;
        let (x, y) = Self::eval_split(&data);
        let mut inputs = vec![data_ref];
        let mut outputs = Vec::new();
        for k in 0..self.cfg.n_pairs {
            let rel = format!("{}/pair_{k}/{mode}.json", Self::curve_dir(conv));
            inputs.push(self.input(&stage, &rel)?);
            let (curve, _) = read_json::<CurveFile>(&self.rel(&rel))?.into_curve()?;
            let grid = plane_grid(&curve.theta1, &curve.theta2, &curve.control, x.view(), &y, self.cfg.plane.resolution, self.cfg.plane.margin)?;
            let base = format!("plane/pair_{k}_{mode}");
            let rows = grid
                .points
                .iter()
                .map(|p| vec![fmt(p.u), fmt(p.v), fmt(p.loss), fmt(p.accuracy)])
                .collect::<Vec<_>>();
            write_table(&self.rel(&format!("{base}.csv")), &["u", "v", "loss", "accuracy"], &rows)?;
            let anchors = grid.anchors.iter().map(|&(u, v)| vec![u, v]).collect::<Vec<_>>();
            write_json(
                &self.rel(&format!("{base}.anchors.json")),
                &serde_json::json!({ "format_version": FORMAT_VERSION, "anchors": anchors }),
            )?;
            outputs.extend([format!("{base}.csv"), format!("{base}.anchors.json")]);
        }
        self.finish("plane", inputs, &outputs)
    }

    // ---- report -----------------------------------------------------------

    /// Aggregate every curve class trained under `conv` into one table.
    pub fn report(&self, conv: SeedConvention) -> Result<(Manifest, Vec<ReportRow>)> {
        let mut inputs = Vec::new();
        let mut rows = Vec::new();
        for mode in MODES {
            let stage = Self::curve_stage(mode, conv);
            if !Manifest::path(&self.dir, &stage).exists() {
                continue;
            }
            let (mut means, mut mins) = (Vec::new(), Vec::new());
            for k in 0..self.cfg.n_pairs {
                let rel = format!("{}/pair_{k}/{mode}.csv", Self::curve_dir(conv));
                inputs.push(self.input(&stage, &rel)?);
                let acc = read_accuracy_column(&self.rel(&rel))?;
                means.push(acc.iter().sum::<f64>() / acc.len() as f64);
                mins.push(acc.iter().copied().fold(f64::INFINITY, f64::min));
            }
            let (mean_acc, mean_acc_std) = mean_std(&means);
            let (min_acc, min_acc_std) = mean_std(&mins);
            rows.push(ReportRow {
                mode: mode.to_string(),
                n_pairs: self.cfg.n_pairs,
                mean_acc,
                mean_acc_std,
                min_acc,
                min_acc_std,
            });
        }
        if rows.is_empty() {
            return Err(Error::MissingArtifact(self.rel(&Self::curve_dir(conv))));
        }
        let csv = format!("report/report_{}.csv", conv.name());
        let table = rows
            .iter()
            .map(|r| {
                vec![
                    r.mode.clone(),
                    r.n_pairs.to_string(),
                    fmt(r.mean_acc),
                    fmt(r.mean_acc_std),
                    fmt(r.min_acc),
                    fmt(r.min_acc_std),
                ]
            })
            .collect::<Vec<_>>();
        write_table(
            &self.rel(&csv),
            &["mode", "n_pairs", "mean_acc", "mean_acc_std", "min_acc", "min_acc_std"],
            &table,
        )?;
        let md = format!("report/report_{}.md", conv.name());
        let mut text = String::from("| curve | mean accuracy | min accuracy |\n|---|---|---|\n");
        for r in &rows {
            text += &format!(
                "| {} | {:.2} ± {:.2} | {:.2} ± {:.2} |\n",
                r.mode,
                100.0 * r.mean_acc,
                100.0 * r.mean_acc_std,
                100.0 * r.min_acc,
                100.0 * r.min_acc_std
            );
        }
        std::fs::write(self.rel(&md), text)?;
        let m = self.finish(&format!("report-{}", conv.name()), inputs, &[csv, md])?;
        Ok((m, rows))
    }

    // ---- sweep ------------------------------------------------------------

    /// Curve classes over the learning-rate × batch-size grid; one summary
    /// row per (class, lr, batch size) averaged over pairs.
    pub fn sweep(&self) -> Result<(Manifest, Vec<SweepRow>)> {
        let registry = CurveRegistry::default();
        for m in &self.cfg.sweep.modes {
            registry.get(m)?;
        }
        let conv = self.cfg.eval.seed_convention;
        let (data, data_ref) = self.load_data()?;
        let mut inputs = vec![data_ref];
        let mut per_pair = Vec::new();
        let mut summary = Vec::new();
        for mode in &self.cfg.sweep.modes {
            for &lr in &self.cfg.sweep.lrs {
                for &batch_size in &self.cfg.sweep.batch_sizes {
                    let cfg = CurveTrainConfig {
                        lr,
                        batch_size,
                        ..self.cfg.curve.clone()
                    };
                    let (mut means, mut mins) = (Vec::new(), Vec::new());
                    for k in 0..self.cfg.n_pairs {
                        let (fit, refs) = self.fit_curve(&data, k, mode, &cfg, conv)?;
                        if mode == &self.cfg.sweep.modes[0] && lr == self.cfg.sweep.lrs[0] && batch_size == self.cfg.sweep.batch_sizes[0] {
                            inputs.extend(refs);
                        }
                        let (clean, _) = self.curve_metrics(&data, &fit.curve)?;
                        per_pair.push(vec![
                            mode.clone(),
                            fmt(lr),
                            batch_size.to_string(),
                            k.to_string(),
                            fmt(clean.mean_accuracy()),
                            fmt(clean.min_accuracy),
                        ]);
                        means.push(clean.mean_accuracy());
                        mins.push(clean.min_accuracy);
                    }
                    summary.push(SweepRow {
                        mode: mode.clone(),
                        lr,
                        batch_size,
                        mean_acc: mean_std(&means).0,
                        min_acc: mean_std(&mins).0,
                    });
                }
            }
        }
        write_table(
            &self.rel("sweep/pairs.csv"),
            &["mode", "lr", "batch_size", "pair", "mean_acc", "min_acc"],
            &per_pair,
        )?;
        let rows = summary
            .iter()
            .map(|r| vec![r.mode.clone(), fmt(r.lr), r.batch_size.to_string(), fmt(r.mean_acc), fmt(r.min_acc)])
            .collect::<Vec<_>>();
        write_table(&self.rel("sweep/summary.csv"), &["mode", "lr", "batch_size", "mean_acc", "min_acc"], &rows)?;
        let m = self.finish("sweep", inputs, &["sweep/pairs.csv".into(), "sweep/summary.csv".into()])?;
        Ok((m, summary))
    }

    /// Every stage in order.
    pub fn run_all(&self) -> Result<()> {
        self.gen_data()?;
        self.train()?;
        self.align()?;
        for mode in MODES {
            self.curve(mode)?;
        }
        self.bounds()?;
        self.attack()?;
        self.plane()?;
        self.report(self.cfg.eval.seed_convention)?;
        Ok(())
    }
}

fn read_accuracy_column(path: &Path) -> Result<Vec<f64>> {
    let (header, rows) = read_table(path)?;
    let malformed = |reason: String| Error::Malformed {
        path: path.to_path_buf(),
        reason,
    };
    let col = header
        .iter()
        .position(|h| h == "accuracy")
        .ok_or_else(|| malformed("no accuracy column".into()))?;
    let acc = rows
        .iter()
        .map(|r| r.get(col).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| malformed("bad accuracy value".into())))
        .collect::<Result<Vec<_>>>()?;
    if acc.is_empty() {
        return Err(malformed("empty metrics table".into()));
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: String,
    pub n_pairs: usize,
    pub mean_acc: f64,
    pub mean_acc_std: f64,
    pub min_acc: f64,
    pub min_acc_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: String,
    pub lr: f64,
    pub batch_size: usize,
    pub mean_acc: f64,
    pub min_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub report: BoundReport,
}

impl BoundFile {
    pub fn new(report: BoundReport) -> Self {
        BoundFile {
            format_version: FORMAT_VERSION,
            report,
        }
    }
}
