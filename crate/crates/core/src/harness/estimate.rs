//! Per-window estimation: ARMA-GARCH filters, residual laws, one-step forecasts
//! and in-sample goodness of fit.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Model, RunConfig};
use crate::data::{windows, ReturnPanel, Window, WindowSpec};
use crate::error::Result;
use crate::forecast::{MarginalForecast, StdLaw};
use crate::gof::{ad_test, ks_test, GofResult};
use crate::nts::{beta_bound, correlation, fit_std_mnts, GridSettings, MntsParams, NtsDist, StdNtsParams};
use crate::timeseries::{
    fit_arma_garch, forecast_one_step, ArmaGarchParams, FitError, FitOptions, GarchFit, Innovation, InnovationFamily,
    Presample,
};

/// Serializable description of a standardized residual law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LawSpec {
    Normal,
    StudentT { nu: f64 },
    Nts { alpha: f64, theta: f64, beta: f64 },
}

impl LawSpec {
    pub fn build(&self, grid: &GridSettings) -> Result<StdLaw> {
        Ok(match *self {
            LawSpec::Normal => StdLaw::Normal,
            LawSpec::StudentT { nu } => StdLaw::StudentT { nu },
            LawSpec::Nts { alpha, theta, beta } => {
                StdLaw::Nts(Arc::new(NtsDist::standard(StdNtsParams::new(alpha, theta, beta)?, grid)?))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            LawSpec::Normal => "normal",
            LawSpec::StudentT { .. } => "student-t",
            LawSpec::Nts { .. } => "stdNTS",
        }
    }
}

/// One-day-ahead forecast of one asset under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetForecast {
    pub mu: f64,
    pub sigma: f64,
    pub law: LawSpec,
    /// VaR forecast (loss units).
    pub var: f64,
    /// AVaR forecast (loss units).
    pub avar: f64,
    /// Realized next-day return, when inside the sample.
    pub realized: Option<f64>,
    /// Forecast CDF at the realized return.
    pub pit: Option<f64>,
}

impl AssetForecast {
    pub fn marginal(&self, grid: &GridSettings) -> Result<MarginalForecast> {
        MarginalForecast::new(self.mu, self.sigma, self.law.build(grid)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchEstimate {
    pub params: ArmaGarchParams,
    pub loglik: f64,
    pub converged: bool,
    /// `false` when parameters were carried over from an earlier window.
    pub refit: bool,
}

/// Everything a model needs on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEstimate {
    pub model: Model,
    /// Per asset.
    pub forecasts: Vec<AssetForecast>,
    /// Pearson correlation of the standardized residuals.
    pub residual_corr: Vec<Vec<f64>>,
    /// Fitted standard MNTS law (AGNTS only).
    pub mnts: Option<MntsParams>,
    /// Per-asset Kolmogorov-Smirnov and Anderson-Darling results of the residuals.
    pub ks: Vec<GofResult>,
    pub ad: Vec<GofResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    pub window: Window,
    /// Last date inside the window (the decision date).
    pub date: NaiveDate,
    /// Date of the realized return, when inside the sample.
    pub target_date: Option<NaiveDate>,
    pub normal_fits: Option<Vec<GarchEstimate>>,
    pub t_fits: Option<Vec<GarchEstimate>>,
    pub models: BTreeMap<Model, ModelEstimate>,
    /// Failures and warnings; never empty when a model is missing.
    pub defects: Vec<String>,
}

fn fit_family(
    panel: &ReturnPanel,
    w: &Window,
    family: InnovationFamily,
    anchor: Option<&[GarchEstimate]>,
    defects: &mut Vec<String>,
) -> Option<Vec<GarchFit>> {
    let opts = FitOptions::default();
    let mut fits = Vec::with_capacity(panel.n_assets());
    for a in 0..panel.n_assets() {
        let block = w.block(panel, a);
        if let Some(prev) = anchor {
            fits.push(GarchFit::from_params(prev[a].params, block, Presample::from_data(block)));
            continue;
        }
        match fit_arma_garch(block, family, &opts) {
            Ok(f) => fits.push(f),
            Err(FitError::NotConverged(f)) => {
                defects.push(format!("{}: {family:?} fit did not converge, best-effort parameters used", panel.asset_ids[a]));
                fits.push(*f);
            }
            Err(FitError::Failed(e)) => {
                defects.push(format!("{}: {family:?} fit failed: {e}", panel.asset_ids[a]));
                return None;
            }
        }
    }
    Some(fits)
}

fn summarize(fits: &[GarchFit], refit: bool) -> Vec<GarchEstimate> {
    fits.iter()
        .map(|f| GarchEstimate { params: f.params, loglik: f.loglik, converged: f.convergence.converged, refit })
        .collect()
}

fn model_estimate(
    model: Model,
    fits: &[GarchFit],
    laws: Vec<LawSpec>,
    mnts: Option<MntsParams>,
    target: Option<Vec<f64>>,
    epsilon: f64,
    grid: &GridSettings,
) -> Result<ModelEstimate> {
    let residuals: Vec<Vec<f64>> = fits.iter().map(|f| f.residuals.clone()).collect();
    let mut forecasts = Vec::with_capacity(fits.len());
    let mut ks = Vec::with_capacity(fits.len());
    let mut ad = Vec::with_capacity(fits.len());
    for (a, (fit, law)) in fits.iter().zip(laws).enumerate() {
        let fc = forecast_one_step(fit);
        let std_law = law.build(grid)?;
        let mf = MarginalForecast::new(fc.mu_next, fc.sigma_next, std_law)?;
        let realized = target.as_ref().map(|t| t[a]);
        forecasts.push(AssetForecast {
            mu: fc.mu_next,
            sigma: fc.sigma_next,
            law,
            var: mf.var(epsilon)?,
            avar: mf.avar(epsilon)?,
            realized,
            pit: realized.map(|r| mf.cdf(r)),
        });
        ks.push(ks_test(&residuals[a], |z| mf.law.cdf(z), law.label())?);
        ad.push(ad_test(&residuals[a], |z| mf.law.cdf(z), law.label())?);
    }
    Ok(ModelEstimate { model, forecasts, residual_corr: correlation(&residuals), mnts, ks, ad })
}

/// Estimates every configured model on window `w`. With `anchor`, ARMA-GARCH
/// and MNTS parameters are taken from that earlier window and only the filter
/// is rerun on the new data.
pub fn estimate_window(
    panel: &ReturnPanel,
    w: &Window,
    cfg: &RunConfig,
    anchor: Option<&WindowEstimate>,
) -> WindowEstimate {
    let grid = GridSettings::default();
    let mut defects = Vec::new();
    let need_normal = cfg.models.contains(&Model::AgNormal);
    let need_t = cfg.models.iter().any(|m| m.uses_t_filter());
    let target = w.target.map(|t| panel.row(t));

    let anchor_normal = anchor.and_then(|a| a.normal_fits.as_deref());
    let anchor_t = anchor.and_then(|a| a.t_fits.as_deref());
    let normal = if need_normal {
        fit_family(panel, w, InnovationFamily::Normal, anchor_normal, &mut defects)
    } else {
        None
    };
    let student = if need_t { fit_family(panel, w, InnovationFamily::StudentT, anchor_t, &mut defects) } else { None };

    let mut models = BTreeMap::new();
    for &model in &cfg.models {
        let result = match model {
            Model::AgNormal => normal.as_ref().map(|fits| {
                let laws = vec![LawSpec::Normal; fits.len()];
                model_estimate(model, fits, laws, None, target.clone(), cfg.epsilon, &grid)
            }),
            Model::Agt => student.as_ref().map(|fits| {
                let laws = fits
                    .iter()
                    .map(|f| match f.params.dist {
                        Innovation::StudentT { nu } => LawSpec::StudentT { nu },
                        Innovation::Normal => LawSpec::Normal,
                    })
                    .collect();
                model_estimate(model, fits, laws, None, target.clone(), cfg.epsilon, &grid)
            }),
            Model::Agnts => student.as_ref().map(|fits| {
                let carried = anchor.and_then(|a| a.models.get(&Model::Agnts)).and_then(|m| m.mnts.clone());
                let mnts = match carried {
                    Some(p) => Ok(p),
                    None => {
                        let residuals: Vec<Vec<f64>> = fits.iter().map(|f| f.residuals.clone()).collect();
                        fit_std_mnts(&residuals, &cfg.nts).map(|f| f.params)
                    }
                };
                mnts.and_then(|p| {
                    let laws = p.beta.iter().map(|&beta| LawSpec::Nts { alpha: p.alpha, theta: p.theta, beta }).collect();
                    model_estimate(model, fits, laws, Some(p), target.clone(), cfg.epsilon, &grid)
                })
            }),
        };
        match result {
            Some(Ok(est)) => {
                models.insert(model, est);
            }
            Some(Err(e)) => defects.push(format!("{model}: estimation failed: {e}")),
            None => defects.push(format!("{model}: residual filter unavailable")),
        }
    }
    if let Some(m) = models.get(&Model::Agnts) {
        if let Some(p) = &m.mnts {
            let bound = beta_bound(p.alpha, p.theta);
            if p.beta.iter().any(|b| b.abs() >= cfg.nts.boundary_fraction * bound * (1.0 - 1e-6)) {
                defects.push("AGNTS: a skewness parameter sits on its admissible boundary".into());
            }
        }
    }

    WindowEstimate {
        window: *w,
        date: panel.dates[w.end - 1],
        target_date: w.target.map(|t| panel.dates[t]),
        normal_fits: normal.as_ref().map(|f| summarize(f, anchor_normal.is_none())),
        t_fits: student.as_ref().map(|f| summarize(f, anchor_t.is_none())),
        models,
        defects,
    }
}

/// SHA-256 over the panel's identifiers, dates and returns.
pub(crate) fn panel_fingerprint(panel: &ReturnPanel) -> String {
    let mut h = Sha256::new();
    for id in &panel.asset_ids {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    for d in &panel.dates {
        h.update(d.to_string().as_bytes());
    }
    for r in &panel.returns {
        for v in r {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    key: String,
    estimate: WindowEstimate,
}

fn checkpoint_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("window_{index:06}.json"))
}

fn load_checkpoint(dir: &Path, index: usize, key: &str) -> Option<WindowEstimate> {
    let s = std::fs::read_to_string(checkpoint_path(dir, index)).ok()?;
    let c: Checkpoint = serde_json::from_str(&s).ok()?;
    (c.key == key).then_some(c.estimate)
}

fn save_checkpoint(dir: &Path, key: &str, e: &WindowEstimate) -> Result<()> {
    let c = Checkpoint { key: key.to_string(), estimate: e.clone() };
    let tmp = dir.join(format!(".window_{:06}.tmp", e.window.index));
    std::fs::write(&tmp, serde_json::to_vec(&c)?)?;
    std::fs::rename(tmp, checkpoint_path(dir, e.window.index))?;
    Ok(())
}

/// Estimates every window of the panel. Windows whose index is a multiple of
/// `refit_every` are re-estimated; the others reuse the parameters of the
/// preceding such window. With `checkpoint_dir`, finished windows are written
/// as JSON and reloaded on the next call with the same data and settings.
pub fn estimate_windows(panel: &ReturnPanel, cfg: &RunConfig, checkpoint_dir: Option<&Path>) -> Result<Vec<WindowEstimate>> {
    cfg.validate()?;
    let spec = WindowSpec::new(cfg.window.length, cfg.window.step)?;
    let ws = windows(panel.len(), spec)?;
    let key = format!("{}:{}", cfg.estimation_hash()?, panel_fingerprint(panel));
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir)?;
    }
    let k = cfg.refit_every;
    let run = |w: &Window, anchor: Option<&WindowEstimate>| -> Result<WindowEstimate> {
        if let Some(dir) = checkpoint_dir {
            if let Some(e) = load_checkpoint(dir, w.index, &key) {
                return Ok(e);
            }
        }
        let e = estimate_window(panel, w, cfg, anchor);
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(dir, &key, &e)?;
        }
        Ok(e)
    };

    let anchors: Vec<WindowEstimate> =
        ws.par_iter().filter(|w| w.index % k == 0).map(|w| run(w, None)).collect::<Result<_>>()?;
    if k == 1 {
        return Ok(anchors);
    }
    let by_index: BTreeMap<usize, &WindowEstimate> = anchors.iter().map(|e| (e.window.index, e)).collect();
    let mut all: Vec<WindowEstimate> = ws
        .par_iter()
        .filter(|w| w.index % k != 0)
        .map(|w| run(w, by_index.get(&(w.index - w.index % k)).copied()))
        .collect::<Result<_>>()?;
    all.extend(anchors.iter().cloned());
    all.sort_by_key(|e| e.window.index);
    Ok(all)
}

/// Marginal forecasts of one `(model, asset)` pair across windows with a realized return.
pub fn forecast_series(estimates: &[WindowEstimate], model: Model, asset: usize) -> Vec<(NaiveDate, AssetForecast)> {
    estimates
        .iter()
        .filter_map(|e| {
            let d = e.target_date?;
            let f = e.models.get(&model)?.forecasts.get(asset)?;
            f.realized.is_some().then(|| (d, f.clone()))
        })
        .collect()
}

