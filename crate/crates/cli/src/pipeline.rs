//! Orchestration of one command: load, estimate, decompose, write.

use anyhow::{bail, Context, Result};
use lpdecomp::clustering::{self, IrfDataset};
use lpdecomp::dataset::{build_designs, load_csv, HorizonDesign, Stamp, TimeSeriesFrame};
use lpdecomp::diagnostics::{self, moving_average};
use lpdecomp::exact::ExactWeights;
use lpdecomp::forest_lp::{self, AveragedIrf, ForestLp, IrfMatrix};
use lpdecomp::inference::{self, HacBand};
use lpdecomp::linear::{self, LinearLpFit};
use lpdecomp::proximity;
use lpdecomp::stats;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, opt, Bundle, Check, Manifest, Table};
use crate::svg::{LineChart, Series};

/// Tolerance of every floating-point self-check.
pub const TOLERANCE: f64 = 1e-8;
/// Contexts probed by the forest duality check.
const DUALITY_QUERIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    FitLinear,
    FitForest,
    Decompose,
    Concentration,
    Robustness,
    Cluster,
    Verify,
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FitLinear => "fit-linear",
            Command::FitForest => "fit-forest",
            Command::Decompose => "decompose",
            Command::Concentration => "concentration",
            Command::Robustness => "robustness",
            Command::Cluster => "cluster",
            Command::Verify => "verify",
            Command::Run => "run",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Plan {
    linear: bool,
    forest: bool,
    decompose: bool,
    concentration: bool,
    robustness: bool,
    cluster: bool,
    verify: bool,
}

fn plan(cmd: Command, cfg: &RunConfig) -> Result<Plan> {
    let est = cfg.estimator;
    let p = match cmd {
        Command::FitLinear => Plan { linear: true, ..Plan::default() },
        Command::FitForest => Plan { forest: true, ..Plan::default() },
        Command::Decompose => Plan { linear: true, decompose: true, ..Plan::default() },
        Command::Concentration => Plan { linear: est.linear(), forest: est.forest(), concentration: true, ..Plan::default() },
        Command::Robustness => Plan { linear: est.linear(), forest: est.forest(), robustness: true, ..Plan::default() },
        Command::Cluster => Plan { forest: true, cluster: true, ..Plan::default() },
        Command::Verify => Plan {
            linear: est.linear(),
            forest: est.forest(),
            decompose: est.linear(),
            verify: true,
            ..Plan::default()
        },
        Command::Run => Plan {
            linear: est.linear(),
            forest: est.forest(),
            decompose: est.linear() && cfg.diagnostics.influence,
            concentration: true,
            robustness: true,
            cluster: cfg.clustering.enabled,
            verify: false,
        },
    };
    if p.cluster && cfg.clustering.k < 1 {
        bail!("clustering needs k >= 1");
    }
    Ok(p)
}

/// Data and designs shared by every stage.
pub struct Prepared {
    pub frame: TimeSeriesFrame,
    pub designs: Vec<HorizonDesign>,
    /// Standard deviation of the shock over the context sample.
    pub shock_sd: f64,
    /// The configured dose converted to shock units.
    pub delta: f64,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let mut frame = load_csv(&cfg.data.path, &cfg.data.date_column)
        .with_context(|| format!("loading {}", cfg.data.path.display()))?;
    if let Some(range) = &cfg.data.subsample {
        frame = frame.subsample(range)?;
    }
    prepare_frame(cfg, frame)
}

pub fn prepare_frame(cfg: &RunConfig, frame: TimeSeriesFrame) -> Result<Prepared> {
    let designs = build_designs(&frame, &cfg.spec)?;
    let last = designs.last().context("specification yields no horizons")?;
    let shock_sd = stats::variance(&last.shock()).sqrt();
    if shock_sd.is_nan() || shock_sd <= 0.0 {
        bail!("shock `{}` is constant on the estimation sample", cfg.spec.shock);
    }
    Ok(Prepared { frame, designs, shock_sd, delta: cfg.dosage.delta * shock_sd })
}

fn labels(dates: &[Stamp]) -> Vec<String> {
    dates.iter().map(Stamp::to_string).collect()
}

fn level_label(level: f64) -> String {
    let s = format!("{:.4}", level * 100.0);
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn exact_check(name: String, ok: bool) -> Check {
    Check::new(name, if ok { 0.0 } else { 1.0 }, 0.0)
}

/// Moving averages aligned with the input, blank where undefined.
fn ma_columns(x: &[f64], windows: &[usize]) -> Result<Vec<Vec<String>>> {
    windows
        .iter()
        .map(|&w| {
            if w > x.len() {
                return Ok(vec![String::new(); x.len()]);
            }
            let m = moving_average(x, w)?;
            let mut col = vec![String::new(); w - 1];
            col.extend(m.into_iter().map(num));
            Ok(col)
        })
        .collect()
}

fn write_chart(b: &mut Bundle, cfg: &RunConfig, rel_path: &str, chart: LineChart) -> Result<()> {
    if cfg.output.charts {
        b.write(rel_path, chart.render().as_bytes())?;
    }
    Ok(())
}

struct LinearStage {
    fits: Vec<LinearLpFit>,
}

struct ForestStage {
    fit: ForestLp,
    average: AveragedIrf,
    matrix: IrfMatrix,
}

#[derive(Serialize)]
struct Sample {
    horizon: usize,
    n_obs: usize,
    first: String,
    last: String,
}

/// Runs `cmd` and writes its bundle to the configured output directory.
pub fn execute(cfg: &RunConfig, cmd: Command) -> Result<Manifest> {
    cfg.validate()?;
    let plan = plan(cmd, cfg)?;
    let prep = prepare(cfg)?;
    let mut b = Bundle::create(&cfg.output.dir)?;
    b.record("sample_policy", cfg.spec.sample_policy())?;
    b.record("shock_sd", prep.shock_sd)?;
    b.record("delta_shock_units", prep.delta)?;
    let samples: Vec<Sample> = prep
        .designs
        .iter()
        .map(|d| Sample {
            horizon: d.horizon,
            n_obs: d.n_obs(),
            first: d.dates.first().map(Stamp::to_string).unwrap_or_default(),
            last: d.dates.last().map(Stamp::to_string).unwrap_or_default(),
        })
        .collect();
    b.record("samples", samples)?;

    let lin = if plan.linear { Some(linear_stage(cfg, &prep, &mut b)?) } else { None };
    let forest = if plan.forest {
        Some(forest_stage(cfg, &prep, lin.as_ref(), &mut b)?)
    } else {
        None
    };
    if plan.decompose {
        if let Some(l) = &lin {
            decompose_stage(&prep, l, &mut b)?;
        }
    }
    if plan.concentration {
        concentration_stage(cfg, &prep, lin.as_ref(), forest.as_ref(), &mut b)?;
    }
    if plan.robustness {
        robustness_stage(cfg, &prep, lin.as_ref(), forest.as_ref(), &mut b)?;
    }
    if plan.cluster {
        let f = forest.as_ref().context("clustering needs a forest fit")?;
        cluster_stage(cfg, &prep, f, &mut b)?;
    }
    if plan.verify {
        verify_stage(&prep, lin.as_ref(), forest.as_ref(), &mut b)?;
        let report = Table {
            header: vec!["check".into(), "violation".into(), "tolerance".into(), "passed".into()],
            rows: b
                .checks()
                .iter()
                .map(|c| vec![c.name.clone(), num(c.violation), num(c.tolerance), c.passed.to_string()])
                .collect(),
        };
        b.table("verify.csv", &report)?;
    }
    b.finish(cmd.name(), &cfg.to_toml()?)
}

fn linear_stage(cfg: &RunConfig, prep: &Prepared, b: &mut Bundle) -> Result<LinearStage> {
    let fits = linear::fit_linear_path(&prep.designs)?;
    let hac_opts = cfg.inference.hac();
    let hac: Vec<HacBand> = prep
        .designs
        .iter()
        .zip(&fits)
        .map(|(d, f)| inference::newey_west_se(d, f, &hac_opts))
        .collect::<lpdecomp::Result<_>>()?;
    let levels = &cfg.inference.levels;
    let mut header: Vec<String> = ["horizon", "n_obs", "beta", "response", "se", "bandwidth"].map(String::from).to_vec();
    for &l in levels {
        header.push(format!("lower_{}", level_label(l)));
        header.push(format!("upper_{}", level_label(l)));
    }
    let mut irf = Table { header, rows: Vec::new() };
    let mut bands = Vec::new();
    for (f, h) in fits.iter().zip(&hac) {
        let mut row = vec![
            f.horizon.to_string(),
            f.weights.len().to_string(),
            num(f.beta),
            num(f.beta * prep.delta),
            num(h.se),
            h.bandwidth.to_string(),
        ];
        let mut per_level = Vec::new();
        for &l in levels {
            let band = inference::confidence_band(f.beta, h.se, l)?;
            row.push(num(band.lower));
            row.push(num(band.upper));
            per_level.push(band);
        }
        bands.push(per_level);
        irf.push(row);
    }
    b.table("linear/irf.csv", &irf)?;
    b.record("linear_beta", fits.iter().map(|f| f.beta).collect::<Vec<_>>())?;
    b.record("linear_se", hac.iter().map(|h| h.se).collect::<Vec<_>>())?;

    let horizons: Vec<String> = fits.iter().map(|f| f.horizon.to_string()).collect();
    let beta: Vec<f64> = fits.iter().map(|f| f.beta).collect();
    let band = levels.first().map(|_| {
        (bands.iter().map(|v| v[0].lower).collect(), bands.iter().map(|v| v[0].upper).collect())
    });
    write_chart(
        b,
        cfg,
        "charts/linear_irf.svg",
        LineChart {
            title: format!("Linear impulse response of {} to {}", cfg.spec.target, cfg.spec.shock),
            x_labels: horizons,
            series: vec![Series::new("beta", &beta)],
            band,
            zero_line: true,
        },
    )?;

    for (d, f) in prep.designs.iter().zip(&fits) {
        let (c, curve) = linear::contributions(f);
        let purified = linear::purify_shock(d)?;
        let shock = d.shock();
        let mut header: Vec<String> =
            ["date", "shock", "weight", "purified_shock", "contribution", "cumulative_contribution"].map(String::from).to_vec();
        header.extend(cfg.diagnostics.ma_windows.iter().map(|w| format!("weight_ma{w}")));
        let ma = ma_columns(&f.weights, &cfg.diagnostics.ma_windows)?;
        let mut t = Table { header, rows: Vec::new() };
        for i in 0..f.weights.len() {
            let mut row = vec![
                f.dates[i].to_string(),
                num(shock[i]),
                num(f.weights[i]),
                num(purified.s_star[i]),
                num(c[i]),
                num(curve.cumulative[i]),
            ];
            row.extend(ma.iter().map(|col| col[i].clone()));
            t.push(row);
        }
        let h = f.horizon;
        b.table(&format!("linear/weights_h{h:02}.csv"), &t)?;
        b.check(Check::new(format!("linear.h{h:02}.sum_contributions_equals_beta"), rel(curve.terminal(), f.beta), TOLERANCE));
        let sw: f64 = f.weights.iter().sum();
        b.check(Check::new(format!("linear.h{h:02}.weights_sum_to_zero"), sw.abs(), TOLERANCE));

        let dates = labels(&f.dates);
        write_chart(
            b,
            cfg,
            &format!("charts/evidence_h{h:02}.svg"),
            LineChart {
                title: format!("Cumulative contributions, h = {h}"),
                x_labels: dates.clone(),
                series: vec![Series::new("cumulative contribution", &curve.cumulative)],
                band: None,
                zero_line: true,
            },
        )?;
        let mut series = vec![Series::new("weight", &f.weights)];
        for (w, col) in cfg.diagnostics.ma_windows.iter().zip(&ma) {
            series.push(Series::with_gaps(format!("{w}-period moving average"), col.iter().map(|s| s.parse().ok()).collect()));
        }
        write_chart(
            b,
            cfg,
            &format!("charts/weights_h{h:02}.svg"),
            LineChart { title: format!("Weights, h = {h}"), x_labels: dates, series, band: None, zero_line: true },
        )?;
    }
    Ok(LinearStage { fits })
}

fn forest_stage(
    cfg: &RunConfig,
    prep: &Prepared,
    lin: Option<&LinearStage>,
    b: &mut Bundle,
) -> Result<ForestStage> {
    let params = forest_lp::resolve_params(&cfg.spec, &cfg.forest.params(), cfg.forest.contemporaneous);
    let fit = forest_lp::fit_forest_lp(&prep.designs, &params)?;
    let average = forest_lp::unconditional_irf(&fit, prep.delta);
    let (lo, hi) = cfg.inference.tree_band;
    let band = if params.n_trees >= 10 { Some(forest_lp::tree_band(&fit, prep.delta, lo, hi)?) } else { None };

    let mut irf = Table::new(&["horizon", "irf", "band_lower", "band_upper", "delta"]);
    for h in 0..fit.horizons() {
        irf.push(vec![
            h.to_string(),
            num(average.irf[h]),
            opt(band.as_ref().map(|x| x.lower[h])),
            opt(band.as_ref().map(|x| x.upper[h])),
            num(prep.delta),
        ]);
    }
    b.table("forest/irf.csv", &irf)?;
    b.record("forest_irf", &average.irf)?;
    b.record("forest_features", &fit.forests[0].feature_names)?;
    b.record("forest_always_split", &params.always_split)?;
    if let Some(x) = &band {
        b.record("forest_band", (x.lower_pct, x.upper_pct, &x.lower, &x.upper))?;
    }

    let mut series = vec![Series::new("forest", &average.irf)];
    if let Some(l) = lin {
        let resp: Vec<f64> = l.fits.iter().map(|f| f.beta * prep.delta).collect();
        series.push(Series::new("linear", &resp));
    }
    write_chart(
        b,
        cfg,
        "charts/forest_irf.svg",
        LineChart {
            title: format!("Forest impulse response of {} to {}", cfg.spec.target, cfg.spec.shock),
            x_labels: (0..fit.horizons()).map(|h| h.to_string()).collect(),
            series,
            band: band.as_ref().map(|x| (x.lower.clone(), x.upper.clone())),
            zero_line: true,
        },
    )?;

    for (h, d) in prep.designs.iter().enumerate() {
        let forest = &fit.forests[h];
        let w = average.weights_f64(h);
        let y = d.y_slice();
        let c: Vec<f64> = w.iter().zip(y).map(|(a, b)| a * b).collect();
        let mut cum = 0.0;
        let ma = ma_columns(&w, &cfg.diagnostics.ma_windows)?;
        let mut header: Vec<String> = ["date", "weight", "contribution", "cumulative_contribution"].map(String::from).to_vec();
        header.extend(cfg.diagnostics.ma_windows.iter().map(|w| format!("weight_ma{w}")));
        let mut t = Table { header, rows: Vec::new() };
        for i in 0..w.len() {
            cum += c[i];
            let mut row = vec![d.dates[i].to_string(), num(w[i]), num(c[i]), num(cum)];
            row.extend(ma.iter().map(|col| col[i].clone()));
            t.push(row);
        }
        b.table(&format!("forest/weights_h{h:02}.csv"), &t)?;
        let ok = average.weights[h].dot(forest.targets()) == average.exact[h];
        b.check(exact_check(format!("forest.h{h:02}.weights_reproduce_irf"), ok));
        b.check(exact_check(format!("forest.h{h:02}.irf_weights_sum_to_zero"), average.weights[h].sum().is_zero()));
    }

    for tau in 0..cfg.forest.scenario_exports.min(fit.n_contexts()) {
        let s = forest_lp::scenario_irf(&fit, &fit.context(tau), prep.delta);
        let mut t = Table::new(&["horizon", "date", "w_delta", "w_zero", "w_irf"]);
        for (h, sw) in s.weights.iter().enumerate() {
            let (a, z, i) = (sw.w_delta.to_f64(), sw.w_zero.to_f64(), sw.w_irf.to_f64());
            for r in 0..a.len() {
                t.push(vec![h.to_string(), prep.designs[h].dates[r].to_string(), num(a[r]), num(z[r]), num(i[r])]);
            }
        }
        b.table(&format!("forest/scenario_{}.csv", fit.context_dates[tau]), &t)?;
    }

    let matrix = {
        let m = forest_lp::conditional_irf_matrix(&fit, prep.delta);
        let mut header = vec!["date".to_string()];
        header.extend((0..fit.horizons()).map(|h| format!("h{h}")));
        let mut t = Table { header, rows: Vec::new() };
        for (tau, row) in m.values.iter().enumerate() {
            let mut r = vec![m.dates[tau].to_string()];
            r.extend(row.iter().map(|&v| num(v)));
            t.push(r);
        }
        b.table("forest/irf_matrix.csv", &t)?;
        m
    };
    Ok(ForestStage { fit, average, matrix })
}

fn decompose_stage(prep: &Prepared, lin: &LinearStage, b: &mut Bundle) -> Result<()> {
    for (d, f) in prep.designs.iter().zip(&lin.fits) {
        let h = f.horizon;
        let emb = proximity::embed(&d.x, d.shock_col)?;
        let cd = proximity::cosine_decomposition(&emb, prep.delta, None)?;
        let w = proximity::proximity_weights(&emb, prep.delta, None)?;
        let mut t = Table::new(&["date", "weight", "cos_theta", "norm_f"]);
        for i in 0..w.len() {
            t.push(vec![d.dates[i].to_string(), num(w[i]), num(cd.cos_theta[i]), num(cd.norm_f[i])]);
        }
        b.table(&format!("proximity/h{h:02}.csv"), &t)?;
        let scale = max_abs(&f.weights).max(f64::MIN_POSITIVE);
        b.check(Check::new(format!("proximity.h{h:02}.matches_primal_weights"), max_abs_diff(&w, &f.weights) / scale, TOLERANCE));
        b.check(Check::new(
            format!("proximity.h{h:02}.cosine_recombination"),
            max_abs_diff(&cd.recombined_weights(), &w) / scale,
            TOLERANCE,
        ));

        let inf = diagnostics::influence_split(d, f)?;
        let mut t = Table::new(&[
            "date",
            "weight",
            "fitted",
            "residual",
            "systematic",
            "residual_part",
            "leverage",
            "loo_influence",
        ]);
        for i in 0..f.weights.len() {
            t.push(vec![
                d.dates[i].to_string(),
                num(f.weights[i]),
                num(f.fitted[i]),
                num(f.residuals[i]),
                num(inf.systematic[i]),
                num(inf.residual_part[i]),
                num(inf.leverage[i]),
                num(inf.loo_influence[i]),
            ]);
        }
        b.table(&format!("influence/h{h:02}.csv"), &t)?;
        let sys: f64 = inf.systematic.iter().sum();
        let res: f64 = inf.residual_part.iter().sum();
        b.check(Check::new(format!("influence.h{h:02}.fitted_part_equals_beta"), rel(sys, f.beta), TOLERANCE));
        b.check(Check::new(format!("influence.h{h:02}.residual_part_sums_to_zero"), res.abs(), TOLERANCE));
        b.check(Check::new(format!("influence.h{h:02}.leave_one_out_identity"), inf.max_identity_violation, TOLERANCE));
    }
    Ok(())
}

fn forest_contributions(prep: &Prepared, f: &ForestStage, h: usize) -> (Vec<f64>, Vec<f64>) {
    let w = f.average.weights_f64(h);
    let c = w.iter().zip(prep.designs[h].y_slice()).map(|(a, b)| a * b).collect();
    (w, c)
}

fn concentration_stage(
    cfg: &RunConfig,
    prep: &Prepared,
    lin: Option<&LinearStage>,
    forest: Option<&ForestStage>,
    b: &mut Bundle,
) -> Result<()> {
    let q = cfg.diagnostics.concentration_q;
    let horizons = prep.designs.len();
    let mut header = vec!["specification".to_string(), "measure".to_string()];
    header.extend((0..horizons).map(|h| format!("h{h}")));
    let mut t = Table { header, rows: Vec::new() };
    let mut push = |spec: &str, measure: &str, values: Vec<f64>| {
        let mut row = vec![spec.to_string(), measure.to_string()];
        row.extend(values.into_iter().map(num));
        t.push(row);
    };
    if let Some(l) = lin {
        let rep = diagnostics::concentration_report(&l.fits, q, cfg.spec.common_sample)?;
        b.record("linear_wc_horizon_invariant", rep.wc_horizon_invariant)?;
        b.record("linear_wc", rep.wc())?;
        b.record("linear_cc", rep.cc())?;
        push("linear", "WC", rep.wc());
        push("linear", "CC", rep.cc());
    }
    if let Some(f) = forest {
        let mut wc = Vec::new();
        let mut cc = Vec::new();
        for h in 0..horizons {
            let (w, c) = forest_contributions(prep, f, h);
            wc.push(diagnostics::concentration(&w, q)?.share);
            cc.push(diagnostics::concentration(&c, q)?.share);
        }
        b.record("forest_wc", &wc)?;
        b.record("forest_cc", &cc)?;
        push("forest", "WC", wc);
        push("forest", "CC", cc);
    }
    b.table("concentration.csv", &t)?;
    Ok(())
}

fn robustness_stage(
    cfg: &RunConfig,
    prep: &Prepared,
    lin: Option<&LinearStage>,
    forest: Option<&ForestStage>,
    b: &mut Bundle,
) -> Result<()> {
    let dg = &cfg.diagnostics;
    let mut t = Table::new(&[
        "estimator",
        "horizon",
        "beta",
        "trimmed_beta",
        "lower_threshold",
        "upper_threshold",
        "n_trimmed",
    ]);
    let mut push = |name: &str, h: usize, r: &diagnostics::TrimResult| {
        t.push(vec![
            name.into(),
            h.to_string(),
            num(r.beta),
            num(r.trimmed_beta),
            opt(r.lower_threshold),
            opt(r.upper_threshold),
            r.trimmed.len().to_string(),
        ]);
    };
    if let Some(l) = lin {
        for f in &l.fits {
            let r = diagnostics::trimmed_irf(f.beta, &f.weights, &f.contributions, dg.trim_lower, dg.trim_upper, dg.trim_on.into())?;
            push("linear", f.horizon, &r);
        }
    }
    if let Some(fs) = forest {
        for h in 0..prep.designs.len() {
            let (w, c) = forest_contributions(prep, fs, h);
            let r = diagnostics::trimmed_irf(fs.average.irf[h], &w, &c, dg.trim_lower, dg.trim_upper, dg.trim_on.into())?;
            push("forest", h, &r);
        }
    }
    b.table("robustness/trimmed.csv", &t)?;

    if let Some(range) = &dg.robustness_subsample {
        let sub = prep.frame.subsample(range)?;
        let designs = build_designs(&sub, &cfg.spec).with_context(|| format!("subsample `{range}`"))?;
        let mut t = Table::new(&["estimator", "horizon", "full_sample", "subsample"]);
        if let Some(l) = lin {
            let fits = linear::fit_linear_path(&designs)?;
            for (full, s) in l.fits.iter().zip(&fits) {
                t.push(vec!["linear".into(), s.horizon.to_string(), num(full.beta), num(s.beta)]);
            }
        }
        if let Some(fs) = forest {
            let params = fs.fit.params.clone();
            let fit = forest_lp::fit_forest_lp(&designs, &params)?;
            // same dose in shock units as the full-sample run
            let path = forest_lp::unconditional_path(&fit, prep.delta);
            for (h, v) in path.iter().enumerate() {
                t.push(vec!["forest".into(), h.to_string(), num(fs.average.irf[h]), num(*v)]);
            }
        }
        b.table("robustness/subsample.csv", &t)?;
    }

    if let (Some(omega), Some(l)) = (dg.window, lin) {
        for (d, f) in prep.designs.iter().zip(&l.fits) {
            let wp = diagnostics::window_paths(d, f, omega)?;
            let mut t = Table::new(&["date", "cumulative_contribution", "expanding", "rolling"]);
            for i in 0..wp.dates.len() {
                t.push(vec![wp.dates[i].to_string(), num(wp.cumulative[i]), opt(wp.expanding[i]), opt(wp.rolling[i])]);
            }
            let h = f.horizon;
            b.table(&format!("robustness/windows_h{h:02}.csv"), &t)?;
            write_chart(
                b,
                cfg,
                &format!("charts/windows_h{h:02}.svg"),
                LineChart {
                    title: format!("Evidence curve and window estimates, h = {h}"),
                    x_labels: labels(&wp.dates),
                    series: vec![
                        Series::new("cumulative contribution", &wp.cumulative),
                        Series::with_gaps("expanding", wp.expanding.clone()),
                        Series::with_gaps(format!("rolling ({omega})"), wp.rolling.clone()),
                    ],
                    band: None,
                    zero_line: true,
                },
            )?;
        }
    }
    Ok(())
}

fn cluster_stage(cfg: &RunConfig, prep: &Prepared, f: &ForestStage, b: &mut Bundle) -> Result<()> {
    let data = IrfDataset::from_matrix(&f.matrix);
    let opts = cfg.clustering.options();
    let result = clustering::kmeans(&data, &opts)?;
    let mut t = Table::new(&["date", "cluster"]);
    for (d, a) in data.dates.iter().zip(&result.assignments) {
        t.push(vec![d.to_string(), a.to_string()]);
    }
    b.table("cluster/assignments.csv", &t)?;

    let kmax = 5.min(data.len().saturating_sub(1));
    if kmax >= 2 {
        let scores = clustering::silhouette_scores(&data, &opts, 2..=kmax)?;
        let mut t = Table::new(&["k", "silhouette"]);
        for (k, s) in &scores {
            t.push(vec![k.to_string(), num(*s)]);
        }
        b.table("cluster/silhouette.csv", &t)?;
    }

    let clusters = clustering::cluster_irf(&f.fit, prep.delta, &result.assignments, result.k)?;
    let horizons = f.fit.horizons();
    let mut header = vec!["cluster".to_string(), "members".to_string(), "share".to_string()];
    header.extend((0..horizons).map(|h| format!("h{h}")));
    let mut t = Table { header, rows: Vec::new() };
    for (c, irf) in clusters.iter().enumerate() {
        let mut row = vec![c.to_string(), irf.members.to_string(), num(result.shares[c])];
        row.extend(irf.irf.iter().map(|&v| num(v)));
        t.push(row);
        let mut wt = Table::new(&["horizon", "date", "weight"]);
        for h in 0..horizons {
            for (d, w) in prep.designs[h].dates.iter().zip(irf.weights_f64(h)) {
                wt.push(vec![h.to_string(), d.to_string(), num(w)]);
            }
        }
        b.table(&format!("cluster/weights_c{c}.csv"), &wt)?;
    }
    b.table("cluster/irf.csv", &t)?;
    b.record("cluster_sizes", &result.sizes)?;
    b.record("cluster_irf", clusters.iter().map(|c| c.irf.clone()).collect::<Vec<_>>())?;
    let combined = clustering::share_weighted_irf(&clusters);
    b.check(exact_check("cluster.share_weighted_equals_unconditional".into(), combined == f.average.exact));

    write_chart(
        b,
        cfg,
        "charts/cluster_irf.svg",
        LineChart {
            title: format!("Cluster impulse responses (k = {})", result.k),
            x_labels: (0..horizons).map(|h| h.to_string()).collect(),
            series: clusters.iter().enumerate().map(|(c, irf)| Series::new(format!("cluster {c}"), &irf.irf)).collect(),
            band: None,
            zero_line: true,
        },
    )?;
    Ok(())
}

fn convex(w: &ExactWeights) -> bool {
    w.numer.iter().all(|n| !n.is_negative()) && w.sum() == num_rational::BigRational::from_integer(1.into())
}

fn verify_stage(prep: &Prepared, lin: Option<&LinearStage>, forest: Option<&ForestStage>, b: &mut Bundle) -> Result<()> {
    if let Some(l) = lin {
        for (d, f) in prep.designs.iter().zip(&l.fits) {
            let h = f.horizon;
            let fwl = linear::purify_shock(d)?.weights();
            let scale = max_abs(&f.weights).max(f64::MIN_POSITIVE);
            b.check(Check::new(format!("fwl.h{h:02}.purified_weights"), max_abs_diff(&fwl, &f.weights) / scale, TOLERANCE));
            let dual = proximity::dual_coefficients(&d.x, &d.y);
            let bscale = max_abs(&f.coefficients).max(1.0);
            b.check(Check::new(format!("dual.h{h:02}.coefficients"), max_abs_diff(&dual.coefficients, &f.coefficients) / bscale, TOLERANCE));
        }
    }
    if let Some(fs) = forest {
        let fit = &fs.fit;
        let n = fit.n_contexts();
        let step = (n / DUALITY_QUERIES).max(1);
        let mut mismatches = 0usize;
        let mut non_convex = 0usize;
        let mut irf_sums = 0usize;
        for tau in (0..n).step_by(step).take(DUALITY_QUERIES) {
            let s = forest_lp::scenario_irf(fit, &fit.context(tau), prep.delta);
            for (h, sw) in s.weights.iter().enumerate() {
                let forest = &fit.forests[h];
                if sw.w_irf.dot(forest.targets()) != s.exact[h] {
                    mismatches += 1;
                }
                let mut hi = fit.context(tau);
                hi[fit.shock_col] = prep.delta;
                if sw.w_delta.dot(forest.targets()) != forest.predict_exact(&hi) {
                    mismatches += 1;
                }
                if !convex(&sw.w_delta) || !convex(&sw.w_zero) {
                    non_convex += 1;
                }
                if !sw.w_irf.sum().is_zero() {
                    irf_sums += 1;
                }
                // the rounded weights must also sum to one
                let fsum: f64 = sw.w_delta.to_f64().iter().sum();
                if (fsum - 1.0).abs() > 1e-12 {
                    non_convex += 1;
                }
            }
        }
        b.check(Check::new("forest.duality_mismatches", mismatches as f64, 0.0));
        b.check(Check::new("forest.non_convex_scenario_weights", non_convex as f64, 0.0));
        b.check(Check::new("forest.irf_weights_not_summing_to_zero", irf_sums as f64, 0.0));
    }
    Ok(())
}
