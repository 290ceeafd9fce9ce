use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::json;

use serra_core::cluster::{
    actuator_profiles, command_map, k_selection_report, label_frames, write_k_selection_csv, ClusterAssignment, KMeansConfig,
    Kernel,
};
use serra_core::dataio::{
    generate_rolling_window, load_csv, preprocess, split_data, synth_dataset, write_csv, FillPolicy, LoadedData, ScalingParams,
    Schema, SynthConfig, WindowedDataset,
};
use serra_core::report::bar_chart;
use serra_core::sim::{compare_policies, ConstantController, Controller, ReplayController, SimConfig, TftController};
use serra_core::tft::{Checkpoint, ModelConfig, TftModel};
use serra_core::train::{self, evaluate as eval_report, LrSchedule, Optimizer, TrainConfig};
use serra_core::xai::{
    fine_tune_feature_selection, kernel_shap, lime_explain, mean_abs, retune_feature_importance, select_background,
    stratified_probe, vsn_global_importance, Attribution, Granularity, LimeConfig, Scope, ShapConfig, TrainStats,
};

use crate::args::*;
use crate::manifest::Run;

fn out_dir(c: &Common, cmd: &str) -> PathBuf {
    c.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cmd))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

/// Loaded, gap-filled sensor and actuator tables with labels from `--labels`
/// or the schema's label column.
fn load_data(run: &mut Run, d: &DataArgs) -> Result<LoadedData> {
    let data = d.data.as_deref().ok_or_else(|| anyhow!("--data is required"))?;
    let schema_path = match &d.schema {
        Some(p) => p.clone(),
        None => data.parent().unwrap_or(Path::new(".")).join("schema.json"),
    };
    let schema = Schema::from_json_file(&schema_path).with_context(|| format!("reading schema {}", schema_path.display()))?;
    run.input(data);
    run.input(&schema_path);
    let mut loaded = load_csv(data, &schema).with_context(|| format!("loading {}", data.display()))?;
    let gap = loaded.sensors.spacing_deviation();
    if gap > 0.0 {
        log::warn!("sampling interval is not uniform (max relative deviation {gap:.3})");
    }
    loaded.sensors = preprocess(&loaded.sensors, FillPolicy::default())?;
    if loaded.actuators.n_features() > 0 {
        loaded.actuators = preprocess(&loaded.actuators, FillPolicy::default())?;
    }
    if let Some(p) = &d.labels {
        run.input(p);
        loaded.labels = Some(read_labels(p, loaded.sensors.n_rows())?);
    }
    Ok(loaded)
}

fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| anyhow!("{} has no `label` column", path.display()))?;
    let labels = rdr
        .records()
        .enumerate()
        .map(|(i, r)| {
            let r = r?;
            r[col].trim().parse::<usize>().with_context(|| format!("bad label on row {}", i + 1))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != n {
        bail!("{} has {} labels for {n} data rows", path.display(), labels.len());
    }
    Ok(labels)
}

fn labels_of(loaded: &LoadedData) -> Result<&[usize]> {
    loaded
        .labels
        .as_deref()
        .ok_or_else(|| anyhow!("no labels: add a label column to the schema or pass --labels (e.g. from `cluster`)"))
}

/// Time-ordered raw train/test windows and the number of training windows.
fn raw_split(loaded: &LoadedData, w: usize, ratio: f64) -> Result<(WindowedDataset, WindowedDataset)> {
    let ds = generate_rolling_window(&loaded.sensors, labels_of(loaded)?, w)?;
    Ok(split_data(&ds, ratio)?)
}

fn scaled_split(loaded: &LoadedData, w: usize, ratio: f64, scaling: &ScalingParams) -> Result<(WindowedDataset, WindowedDataset)> {
    let (tr, te) = raw_split(loaded, w, ratio)?;
    Ok((scaling.transform(&tr)?, scaling.transform(&te)?))
}

fn load_model(run: &mut Run, p: Option<&Path>) -> Result<(TftModel, Checkpoint, ScalingParams)> {
    let p = p.ok_or_else(|| anyhow!("--model is required"))?;
    run.input(p);
    let (model, ckpt) = TftModel::load(p).with_context(|| format!("loading model {}", p.display()))?;
    let scaling = ckpt.scaling.clone().ok_or_else(|| anyhow!("checkpoint {} has no scaling parameters", p.display()))?;
    Ok((model, ckpt, scaling))
}

fn train_config(f: &FitArgs, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let optimizer = match f.optimizer.as_deref() {
        None | Some("adam") => Optimizer::Adam,
        Some("sgd-momentum") | Some("sgd") => Optimizer::SgdMomentum,
        Some(o) => bail!("unknown optimizer `{o}` (adam, sgd-momentum)"),
    };
    let schedule = match f.schedule.as_deref() {
        None | Some("constant") => LrSchedule::Constant,
        Some("cosine") => LrSchedule::Cosine,
        Some(s) => bail!("unknown schedule `{s}` (constant, cosine)"),
    };
    let cfg = TrainConfig {
        epochs: f.epochs.unwrap_or(d.epochs),
        batch_size: f.batch.unwrap_or(d.batch_size),
        lr: f.lr.unwrap_or(d.lr),
        optimizer,
        schedule,
        seed,
        class_weighting: f.class_weighting,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn synth(cli: SynthArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "synth")?;
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_rows: a.n.unwrap_or(d.n_rows),
        n_features: a.features.unwrap_or(d.n_features),
        n_classes: a.classes.unwrap_or(d.n_classes),
        seed: a.common.seed.unwrap_or(d.seed),
        noise: a.noise.unwrap_or(d.noise),
        window: a.window.unwrap_or(d.window),
        n_actuators: a.actuators.unwrap_or(d.n_actuators),
    };
    let mut run = Run::start("synth", out_dir(&a.common, "synth"), &a, Some(cfg.seed))?;
    let out = synth_dataset(&cfg)?;
    let schema = Schema {
        timestamp: "timestamp".into(),
        sensors: out.sensors.feature_names().to_vec(),
        actuators: out.actuators.feature_names().to_vec(),
        label: Some("label".into()),
    };
    let csv_path = run.output("synth.csv");
    write_csv(fs::File::create(&csv_path)?, &out.as_loaded(), &schema)?;
    write_json(&run.output("schema.json"), &schema)?;
    let names = out.sensors.feature_names();
    write_json(
        &run.output("truth.json"),
        &json!({
            "causal_features": out.causal_features,
            "causal_names": out.causal_features.iter().map(|&i| &names[i]).collect::<Vec<_>>(),
            "lag": out.lag,
            "thresholds": out.thresholds,
            "class_histogram": out.class_histogram,
            "rule_accuracy": out.rule_accuracy,
            "actuator_classes": out.actuator_classes,
            "config": cfg,
        }),
    )?;
    println!(
        "wrote {} rows to {} (rule accuracy {:.4})",
        cfg.n_rows,
        csv_path.display(),
        out.rule_accuracy
    );
    run.finish()
}

pub fn cluster(cli: ClusterArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "cluster")?;
    let kernel = match a.kernel.as_deref() {
        None | Some("rbf") => Kernel::Rbf { gamma: a.gamma },
        Some("linear") => Kernel::Linear,
        Some(k) => bail!("unknown kernel `{k}` (rbf, linear)"),
    };
    let d = KMeansConfig::default();
    let cfg = KMeansConfig {
        k: a.classes.unwrap_or(d.k),
        kernel,
        seed: a.common.seed.unwrap_or(d.seed),
        restarts: a.restarts.unwrap_or(d.restarts),
        ..d
    };
    let mut run = Run::start("cluster", out_dir(&a.common, "cluster"), &a, Some(cfg.seed))?;
    let loaded = load_data(&mut run, &a.data)?;
    let act = &loaded.actuators;
    if act.n_features() == 0 {
        bail!("the schema lists no actuator columns");
    }
    let asg = ClusterAssignment::fit(act, &cfg)?;
    asg.save(&run.output("assignment.json"))?;
    let n = act.n_features();
    let k_hi = a.k_max.unwrap_or(10).min(n).min(16);
    let k_range: Vec<usize> = (a.k_min.unwrap_or(2).max(2)..=k_hi).collect();
    if !k_range.is_empty() {
        let rows = k_selection_report(&actuator_profiles(act), &k_range, &cfg)?;
        write_k_selection_csv(&rows, &run.output("k_selection.csv"))?;
    }
    let labels = label_frames(act, &asg)?;
    let mut w = csv::Writer::from_path(run.output("labels.csv"))?;
    w.write_record(["timestamp", "label"])?;
    for (t, l) in act.timestamps().iter().zip(&labels) {
        w.write_record([t.to_string(), l.to_string()])?;
    }
    w.flush()?;
    write_json(&run.output("command_map.json"), &command_map(act, &labels, cfg.k)?)?;
    for c in 0..cfg.k {
        let members: Vec<&str> = asg.classes.iter().filter(|(_, &v)| v == c).map(|(k, _)| k.as_str()).collect();
        println!("class {c}: {}", members.join(", "));
    }
    println!("objective {:.6}", asg.objective);
    run.finish()
}

pub fn train(cli: TrainArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "train")?;
    let seed = a.common.seed.unwrap_or(0);
    let tc = train_config(&a.fit, seed)?;
    let mut run = Run::start("train", out_dir(&a.common, "train"), &a, Some(seed))?;
    let loaded = load_data(&mut run, &a.data)?;
    let labels = labels_of(&loaded)?;
    let k = match a.model.classes {
        Some(k) => k,
        None => (labels.iter().max().copied().unwrap_or(0) + 1).max(2),
    };
    let w = a.model.window.unwrap_or(serra_core::dataio::DEFAULT_WINDOW);
    let (tr, te) = raw_split(&loaded, w, a.data.ratio.unwrap_or(0.8))?;
    let (tr, others, scaling) = serra_core::dataio::scale_data(&tr, &[&te])?;
    let te = &others[0];
    let d = ModelConfig::new(w, tr.n_features(), k);
    let mc = ModelConfig {
        d_model: a.model.d_model.unwrap_or(d.d_model),
        n_heads: a.model.heads.unwrap_or(d.n_heads),
        dropout: a.model.dropout.unwrap_or(d.dropout),
        ..d
    };
    let mut model = TftModel::new(mc, seed)?;
    let history = train::train(&mut model, &tr, Some(te), &tc)?;
    history.write(run.out())?;
    for f in ["history.json", "history.csv", "loss.svg", "accuracy.svg"] {
        run.output(f);
    }
    model.save(run.output("model.json"), tr.feature_names(), Some(&scaling))?;
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "epoch {}: train loss {:.4}, train accuracy {:.4}, test accuracy {:.4}",
        last.epoch,
        last.train_loss,
        last.train_accuracy,
        last.val_accuracy.unwrap_or(f64::NAN)
    );
    run.finish()
}

pub fn evaluate(cli: EvaluateArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "evaluate")?;
    let mut run = Run::start("evaluate", out_dir(&a.common, "evaluate"), &a, None)?;
    let (model, ckpt, scaling) = load_model(&mut run, a.model.as_deref())?;
    let loaded = load_data(&mut run, &a.data)?;
    let (_, te) = scaled_split(&loaded, ckpt.config.window, a.data.ratio.unwrap_or(0.8), &scaling)?;
    let pred = train::predict(&model, &te)?;
    let report = eval_report(&pred.labels, te.labels(), ckpt.config.n_classes)?;
    report.write(run.out(), "eval")?;
    run.output("eval.json");
    run.output("eval_confusion.csv");
    println!("accuracy {:.4}, macro-F1 {:.4} on {} windows", report.accuracy, report.macro_f1, te.len());
    for c in 0..report.n_classes {
        println!(
            "class {c}: precision {:.4} recall {:.4} f1 {:.4} support {}",
            report.precision[c], report.recall[c], report.f1[c], report.support[c]
        );
    }
    run.finish()
}

pub fn explain(cli: ExplainArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "explain")?;
    let seed = a.common.seed.unwrap_or(0);
    let mut run = Run::start("explain", out_dir(&a.common, "explain"), &a, Some(seed))?;
    let (model, ckpt, scaling) = load_model(&mut run, a.model.as_deref())?;
    let k = ckpt.config.n_classes;
    if let Some(c) = a.class_id.filter(|&c| c >= k) {
        bail!("--class-id {c} outside 0..{k}");
    }
    let granularity = match a.granularity.as_deref() {
        None | Some("feature") => Granularity::Feature,
        Some("feature-timestep") => Granularity::FeatureTimestep,
        Some(g) => bail!("unknown granularity `{g}` (feature, feature-timestep)"),
    };
    let loaded = load_data(&mut run, &a.data)?;
    let (tr, te) = scaled_split(&loaded, ckpt.config.window, a.data.ratio.unwrap_or(0.8), &scaling)?;
    let names = te.feature_names().to_vec();
    let method = a.method.as_deref().unwrap_or("vsn");
    let mut written: Vec<Attribution> = Vec::new();
    let mut save = |run: &mut Run, attr: Attribution, stem: String| -> Result<()> {
        attr.write(run.out(), &stem)?;
        run.output(&format!("{stem}.json"));
        run.output(&format!("{stem}.svg"));
        let top: Vec<String> = attr.top(3).into_iter().map(|(n, s)| format!("{n} ({s:.4})")).collect();
        println!("{stem}: {}", top.join(", "));
        written.push(attr);
        Ok(())
    };
    match method {
        "vsn" => match a.class_id {
            None => save(&mut run, vsn_global_importance(&model, &te)?, "vsn_global".into())?,
            Some(c) => {
                let idx: Vec<usize> = (0..te.len()).filter(|&i| te.labels()[i] == c).collect();
                if idx.is_empty() {
                    bail!("no test windows of class {c}");
                }
                let mut attr = vsn_global_importance(&model, &te.subset(&idx))?;
                attr.scope = Scope::PerClass(c);
                save(&mut run, attr, format!("vsn_class{c}"))?;
            }
        },
        "shap" | "lime" => {
            let probe = stratified_probe(te.labels(), k, a.probe.unwrap_or(5));
            let background = select_background(&tr, a.background.unwrap_or(16), seed)?;
            let stats = TrainStats::from_dataset(&tr)?;
            let classes: Vec<usize> = a.class_id.map_or_else(|| (0..k).collect(), |c| vec![c]);
            let mut all = Vec::new();
            for c in classes {
                let mut per = Vec::new();
                for &i in &probe[c] {
                    let x = te.sample(i);
                    let mut attr = if method == "shap" {
                        let cfg = ShapConfig { n_coalitions: a.coalitions.unwrap_or(256), seed, granularity };
                        kernel_shap(&model, &names, &background, x, c, &cfg)?
                    } else {
                        let cfg = LimeConfig {
                            n_perturbations: a.perturbations.unwrap_or(500),
                            seed,
                            granularity,
                            ..LimeConfig::default()
                        };
                        lime_explain(&model, &names, &stats, x, c, &cfg)?
                    };
                    attr.scope = Scope::PerInstance(i);
                    per.push(attr);
                }
                if per.is_empty() {
                    log::warn!("no test windows of class {c}; skipped");
                    continue;
                }
                save(&mut run, mean_abs(&per, Scope::PerClass(c))?, format!("{method}_class{c}"))?;
                all.extend(per);
            }
            if a.class_id.is_none() {
                if all.is_empty() {
                    bail!("no test windows to explain");
                }
                save(&mut run, mean_abs(&all, Scope::Global)?, format!("{method}_global"))?;
            }
        }
        m => bail!("unknown method `{m}` (vsn, shap, lime)"),
    }
    run.finish()
}

pub fn retune(cli: RetuneArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "retune")?;
    let seed = a.common.seed.unwrap_or(0);
    if a.attributions.is_empty() {
        bail!("--attributions needs at least one explanation file");
    }
    let tc = train_config(&a.fit, seed)?;
    let mut run = Run::start("retune", out_dir(&a.common, "retune"), &a, Some(seed))?;
    let mut attrs = Vec::new();
    for p in &a.attributions {
        run.input(p);
        let at = Attribution::load(p).with_context(|| format!("loading {}", p.display()))?;
        if at.scope != Scope::Global {
            log::warn!("{} is not a global explanation", p.display());
        }
        attrs.push(at);
    }
    let refs: Vec<&Attribution> = attrs.iter().collect();
    let fused = retune_feature_importance(&refs)?;
    write_json(&run.output("fused.json"), &fused)?;
    let order = fused.ranking();
    let labels: Vec<String> = order.iter().map(|&i| fused.feature_names[i].clone()).collect();
    let values: Vec<f64> = order.iter().map(|&i| fused.scores[i]).collect();
    fs::write(run.output("fused.svg"), bar_chart("Fused importance", &labels, &values))?;
    println!("fused ranking: {}", labels.iter().take(10).cloned().collect::<Vec<_>>().join(", "));
    if let Some(tau) = a.tau {
        let (model, ckpt, scaling) = load_model(&mut run, a.model.as_deref())?;
        let loaded = load_data(&mut run, &a.data)?;
        let (tr, te) = scaled_split(&loaded, ckpt.config.window, a.data.ratio.unwrap_or(0.8), &scaling)?;
        let res = fine_tune_feature_selection(&model, &fused, tau, &tr, &te, &tc)?;
        let keep = |v: &[f64]| res.retained.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let sub = ScalingParams {
            feature_names: res.retained_names.clone(),
            mean: keep(&scaling.mean),
            std: keep(&scaling.std),
            dropped: scaling.dropped.clone(),
        };
        res.model.save(run.output("model_retuned.json"), &res.retained_names, Some(&sub))?;
        res.history.write(run.out())?;
        for f in ["history.json", "history.csv", "loss.svg", "accuracy.svg"] {
            run.output(f);
        }
        write_json(
            &run.output("retune_report.json"),
            &json!({
                "tau": tau,
                "retained": res.retained_names,
                "accuracy_before": res.accuracy_before,
                "accuracy_after": res.accuracy_after,
            }),
        )?;
        println!(
            "kept {} of {} features; test accuracy {:.4} -> {:.4}",
            res.retained.len(),
            fused.feature_names.len(),
            res.accuracy_before,
            res.accuracy_after
        );
    }
    run.finish()
}

pub fn simulate(cli: SimulateArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "simulate")?;
    let seed = a.common.seed.unwrap_or(0);
    let mut run = Run::start("simulate", out_dir(&a.common, "simulate"), &a, Some(seed))?;
    let (model, ckpt, scaling) = load_model(&mut run, a.model.as_deref())?;
    let loaded = load_data(&mut run, &a.data)?;
    let w = ckpt.config.window;
    let commands: Vec<Vec<f64>> = match &a.commands {
        Some(p) => {
            run.input(p);
            serde_json::from_str(&fs::read_to_string(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => command_map(&loaded.actuators, labels_of(&loaded)?, ckpt.config.n_classes)?,
    };
    if commands.len() < ckpt.config.n_classes {
        bail!("{} command vectors for {} classes", commands.len(), ckpt.config.n_classes);
    }
    // Replay the held-out stretch: its first w rows are the pre-loaded history.
    let n_rows = loaded.sensors.n_rows();
    let m = n_rows - w + 1;
    let ratio = a.data.ratio.unwrap_or(0.8);
    let n_train = ((ratio * m as f64) - 1e-9).ceil() as usize;
    if n_train >= m {
        bail!("ratio {ratio} leaves no held-out rows to simulate");
    }
    let source = loaded.sensors.slice_rows(n_train, n_rows);
    let available = source.n_rows().saturating_sub(w);
    let d = SimConfig::default();
    let cfg = SimConfig {
        horizon: a.horizon.unwrap_or(d.horizon.min(available)),
        d_s: a.ds.unwrap_or(d.d_s),
        d_a: a.da.unwrap_or(d.d_a),
        cost: a.cost.clone(),
        drop_prob: a.drop.unwrap_or(d.drop_prob),
        noise_std: a.noise.unwrap_or(d.noise_std),
        seed,
        command_map: commands,
    };
    let costs = cfg.costs();
    let cheapest = (0..cfg.command_map.len())
        .min_by(|&x, &y| {
            let e = |c: usize| cfg.command_map[c].iter().zip(&costs).map(|(u, k)| k * u * u).sum::<f64>();
            e(x).total_cmp(&e(y))
        })
        .unwrap_or(0);
    let recorded: Option<Vec<usize>> = loaded.labels.as_ref().map(|l| l[n_train..].to_vec());
    let tft = TftController { model: &model, scaling: Some(&scaling), feature_names: source.feature_names().to_vec() };
    let mut controllers: Vec<(String, Box<dyn Controller + '_>)> = vec![("tft".into(), Box::new(tft))];
    if let Some(l) = &recorded {
        controllers.push(("replay".into(), Box::new(ReplayController { labels: l.clone() })));
    }
    controllers.push((format!("constant-{cheapest}"), Box::new(ConstantController(cheapest))));
    let (report, traces) = compare_policies(&cfg, &mut controllers, &source, w, recorded.as_deref())?;
    report.write(run.out())?;
    run.output("policies.json");
    run.output("policies.csv");
    traces[0].write_csv(run.output("trace_tft.csv"))?;
    write_json(&run.output("summary.json"), &traces[0].summary())?;
    write_json(&run.output("sim_config.json"), &cfg)?;
    for r in &report.rows {
        let agree = r.agreement.map(|x| format!(", label agreement {x:.4}")).unwrap_or_default();
        println!("{}: energy {:.4}{agree}", r.name, r.total_energy);
    }
    run.finish()
}

pub fn gradcheck(cli: GradcheckArgs) -> Result<()> {
    let a = resolve(&cli, cli.common.config.as_deref(), "gradcheck")?;
    let seed = a.common.seed.unwrap_or(0);
    let mut run = Run::start("gradcheck", out_dir(&a.common, "gradcheck"), &a, Some(seed))?;
    let cfg = if a.tiny {
        ModelConfig::tiny()
    } else {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            dropout: 0.0,
            ..ModelConfig::new(a.window.unwrap_or(4), a.features.unwrap_or(3), a.classes.unwrap_or(3))
        }
    };
    let model = TftModel::new(cfg.clone(), seed)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let b = 2;
    let x: Vec<f64> = (0..b * cfg.window * cfg.n_features).map(|_| rng.random_range(-1.5..1.5)).collect();
    let y: Vec<usize> = (0..b).map(|_| rng.random_range(0..cfg.n_classes)).collect();
    let eps = a.eps.unwrap_or(1e-5);
    let rep = model.grad_check(&x, &y, eps)?;
    write_json(
        &run.output("gradcheck.json"),
        &json!({ "max_rel_error": rep.max_rel_error, "n_checked": rep.n_checked, "eps": eps, "config": cfg }),
    )?;
    println!("max relative error {:.3e} over {} parameters", rep.max_rel_error, rep.n_checked);
    run.finish()?;
    if rep.max_rel_error.is_nan() || rep.max_rel_error >= 1e-4 {
        bail!("gradient check failed: {:.3e} ≥ 1e-4", rep.max_rel_error);
    }
    println!("PASS");
    Ok(())
}
