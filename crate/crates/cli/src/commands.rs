use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};

use acdc_core::encode::{encode_flows, field_registry, FeatureSubset, FieldId, ENCODED_PACKETS};
use acdc_core::explore::{build_pool, rank_features, read_manifest, ClassifierPool, PoolConfig};
use acdc_core::models::{
    majority_f1, permutation_importance, predict_flowstats, train_ensemble, train_flowstats, weighted_f1,
    EnsembleParams,
};
use acdc_core::profile::{
    calibrate_cost_model, cost_samples, profile_pool, read_profile_table, write_profile_table, CostModel,
    MeasureOptions, ProfileEntry, ProfilerOptions, ProfilerRegistry,
};
use acdc_core::schedule::write_decision_log;
use acdc_core::simulate::{
    read_trace_csv, run as simulate, throughput_report, trend_check, write_trace_csv, Scenario, Trend,
};
use acdc_core::traffic::{generate_synthetic, parse_pcap, split_train_test, ClassId, FlowSet, GeneratorConfig};
use acdc_core::AcdcError;

use crate::{
    CalibrateArgs, Command, Expect, GenerateArgs, IngestArgs, Mode, ProfileArgs, RegistryArgs, ReportArgs,
    SimulateArgs, TrainPoolArgs,
};

/// Input files named on the command line, with the flag that names them.
fn inputs(command: &Command) -> Vec<(&'static str, &Path)> {
    let mut out: Vec<(&'static str, &Path)> = Vec::new();
    match command {
        Command::Generate(a) => out.extend(a.generator.as_deref().map(|p| ("generator", p))),
        Command::Ingest(a) => out.extend(a.pcaps.iter().map(|p| ("pcap", p.as_path()))),
        Command::TrainPool(a) => {
            out.push(("data", &a.data));
            out.extend(a.importances.as_deref().map(|p| ("importances", p)));
        }
        Command::Profile(a) => {
            out.push(("pool", &a.pool));
            out.push(("test", &a.test));
            out.extend(a.cost_model.as_deref().map(|p| ("cost-model", p)));
        }
        Command::Calibrate(a) => out.push(("profile", &a.profile)),
        Command::Simulate(a) => {
            out.push(("pool", &a.pool));
            out.push(("profile", &a.profile));
            out.extend(a.scenario.as_deref().map(|p| ("scenario", p)));
        }
        Command::Report(a) => {
            out.extend(a.profile.as_deref().map(|p| ("profile", p)));
            out.extend(a.traces.iter().map(|p| ("trace", p.as_path())));
        }
        Command::Registry(_) => {}
    }
    out
}

pub fn run(command: Command) -> Result<()> {
    for (flag, path) in inputs(&command) {
        if !path.is_file() {
            return Err(config_err(format!("--{flag}: {} does not exist", path.display())));
        }
    }
    match command {
        Command::Generate(a) => generate(a),
        Command::Ingest(a) => ingest(a),
        Command::TrainPool(a) => train_pool(a),
        Command::Profile(a) => profile(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Simulate(a) => run_simulation(a),
        Command::Report(a) => report(a),
        Command::Registry(a) => registry(a),
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    AcdcError::Config(msg.into()).into()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = match &a.generator {
        Some(path) => {
            let text = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_slice::<GeneratorConfig>(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
        None => GeneratorConfig::preset(a.classes, a.flows),
    };
    let set = generate_synthetic(&config, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("flows.json");
    set.save(&path)?;
    println!("wrote {} flows in {} classes to {}", set.len(), set.label_names.len(), path.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Result<()> {
    let sets = a
        .pcaps
        .iter()
        .enumerate()
        .map(|(i, p)| parse_pcap(p, i as ClassId, a.max_packets).with_context(|| format!("ingesting {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    let set = FlowSet::merge(sets)?;
    ensure_parent(&a.out)?;
    set.save(&a.out)?;
    println!("wrote {} flows from {} captures to {}", set.len(), a.pcaps.len(), a.out.display());
    Ok(())
}

fn read_importances(path: &Path) -> Result<BTreeMap<FieldId, f64>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = BTreeMap::new();
    for row in r.records() {
        let row = row?;
        let field = row.get(1).ok_or_else(|| config_err(format!("{}: missing field column", path.display())))?;
        let value: f64 = row
            .get(3)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| config_err(format!("{}: bad importance for {field}", path.display())))?;
        out.insert(field_registry().by_name(field)?.id, value);
    }
    Ok(out)
}

fn write_importances(path: &Path, importances: &BTreeMap<FieldId, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["field_id", "field", "bits", "importance", "ratio"])?;
    for r in rank_features(importances, field_registry())? {
        let spec = field_registry().spec(r.field)?;
        w.write_record([
            r.field.to_string(),
            spec.qualified_name(),
            r.bits.to_string(),
            r.importance.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn train_pool(a: TrainPoolArgs) -> Result<()> {
    let data = FlowSet::load(&a.data).with_context(|| format!("loading {}", a.data.display()))?;
    let (train, test) = split_train_test(&data, a.train_fraction, a.seed)?;
    fs::create_dir_all(&a.out)?;
    train.save(a.out.join("train.json"))?;
    test.save(a.out.join("test.json"))?;

    let params = EnsembleParams {
        n_rounds: a.rounds,
        max_depth: a.depth,
        learning_rate: a.learning_rate,
        ..EnsembleParams::default()
    };
    let all = FeatureSubset::all_eligible();
    let x_train = encode_flows(&train.flows, &all, ENCODED_PACKETS)?;
    let full = train_ensemble(&x_train, &train.labels(), &all, &params, a.seed)?;
    full.save(a.out.join("all_features.json"))?;
    let truth = test.labels();
    let full_f1 = weighted_f1(&truth, &full.predict_flows(&test.flows)?)?;

    let importances = match &a.importances {
        Some(path) => read_importances(path)?,
        None => {
            let x_test = encode_flows(&test.flows, &all, ENCODED_PACKETS)?;
            permutation_importance(&full, &x_test, &truth, None, a.importance_repeats, a.seed)?.importances
        }
    };
    write_importances(&a.out.join("importances.csv"), &importances)?;

    let config = PoolConfig { sizes: a.sizes.clone(), num_combos: a.combos };
    let pool = build_pool(&train, field_registry(), &importances, &config, &params, a.seed)?;
    let manifest = pool.save(&a.out)?;

    let stats = train_flowstats(&train, a.components, a.seed)?;
    let stats_f1 = weighted_f1(&truth, &predict_flowstats(&stats, &test.flows))?;
    let mut w = csv::Writer::from_path(a.out.join("baselines.csv"))?;
    w.write_record(["model", "f1"])?;
    w.write_record(["majority", &majority_f1(&truth)?.to_string()])?;
    w.write_record(["flowstats", &stats_f1.to_string()])?;
    w.write_record(["all_features", &full_f1.to_string()])?;
    w.flush()?;

    println!(
        "trained {} members ({} train / {} test flows); all-feature F1 {full_f1:.3}, flow-stats F1 {stats_f1:.3}; manifest {}",
        pool.members.len(),
        train.len(),
        test.len(),
        manifest.display()
    );
    Ok(())
}

fn profile(a: ProfileArgs) -> Result<()> {
    let pool = ClassifierPool::load(&a.pool).with_context(|| format!("loading pool {}", a.pool.display()))?;
    let test = FlowSet::load(&a.test).with_context(|| format!("loading {}", a.test.display()))?;
    let cost_model = a.cost_model.as_ref().map(CostModel::load).transpose()?;
    let opts = ProfilerOptions { measure: MeasureOptions { runs: a.runs, safety_factor: a.safety_factor }, cost_model };
    let name = match a.mode {
        Mode::Measured => "measured",
        Mode::Modeled => "modeled",
    };
    let profiler = ProfilerRegistry::default().create(name, &opts)?;
    let entries = profile_pool(profiler.as_ref(), &pool, &test, &a.batch_sizes)?;
    ensure_parent(&a.out)?;
    write_profile_table(&a.out, &entries)?;
    println!("wrote {} {name} profile entries to {}", entries.len(), a.out.display());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let entries = read_profile_table(&a.profile)?;
    let model = calibrate_cost_model(&cost_samples(&entries)?)?;
    ensure_parent(&a.out)?;
    model.save(&a.out)?;
    println!(
        "ttd = {:.6} + {:.3e} * bits*B (pearson {:.4}); mem = {:.0} + {:.3} * bits*B (pearson {:.4})",
        model.ttd_intercept,
        model.ttd_per_bitflow,
        model.pearson_ttd,
        model.mem_intercept,
        model.mem_per_bitflow,
        model.pearson_mem
    );
    Ok(())
}

/// Bytes from `123`, `300MB`, `0.3GB` (decimal units).
pub fn parse_bytes(text: &str) -> Result<u64> {
    let t = text.trim().to_ascii_uppercase();
    let (num, scale) = [("GB", 1e9), ("MB", 1e6), ("KB", 1e3), ("B", 1.0)]
        .iter()
        .find_map(|(suffix, scale)| t.strip_suffix(suffix).map(|n| (n.trim().to_string(), *scale)))
        .unwrap_or((t.clone(), 1.0));
    let value: f64 = num.parse().map_err(|_| config_err(format!("mem: cannot parse {text:?}")))?;
    if !(value >= 0.0) || !value.is_finite() {
        return Err(config_err(format!("mem: {text:?} must be non-negative")));
    }
    Ok((value * scale).round() as u64)
}

fn run_simulation(a: SimulateArgs) -> Result<()> {
    let members: Vec<String> = read_manifest(&a.pool)?.into_iter().map(|r| r.classifier_id).collect();
    let profiles = read_profile_table(&a.profile)?;
    let mut scenario = match &a.scenario {
        Some(path) => Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))?,
        None => Scenario::constant(a.duration, a.rate, parse_bytes(&a.mem)?),
    };
    if a.mpr.is_some() {
        scenario.mpr = a.mpr;
    }
    let trace = simulate(&members, &profiles, &scenario, a.seed)?;
    fs::create_dir_all(&a.out)?;
    write_trace_csv(fs::File::create(a.out.join("trace.csv"))?, &trace)?;
    write_decision_log(fs::File::create(a.out.join("decisions.csv"))?, &trace.decision_log())?;
    let last = trace.ticks.last().expect("duration >= 1");
    let overcommit = trace.ticks.iter().filter(|t| t.overcommit).count();
    println!(
        "{} ticks: {} arrived, {} completed, backlog {}, {} overcommit ticks; wrote {}",
        trace.ticks.len(),
        last.cumulative_arrivals,
        last.cumulative_completed,
        last.backlog,
        overcommit,
        a.out.display()
    );
    Ok(())
}

fn profile_summary(entries: &[ProfileEntry], path: &Path) -> Result<()> {
    let mut by_id: BTreeMap<&str, Vec<&ProfileEntry>> = BTreeMap::new();
    for e in entries {
        by_id.entry(&e.classifier_id).or_default().push(e);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "classifier_id",
        "subset",
        "bits",
        "f1",
        "min_ttd_s",
        "max_ttd_s",
        "min_unit_mem_bytes",
        "max_unit_mem_bytes",
        "best_ratio",
        "best_ratio_batch",
    ])?;
    for (id, rows) in by_id {
        let best = rows.iter().max_by(|a, b| a.ratio().total_cmp(&b.ratio())).expect("non-empty group");
        let ttd = rows.iter().map(|e| e.ttd_s);
        let mem = rows.iter().map(|e| e.unit_mem_bytes);
        w.write_record([
            id.to_string(),
            best.subset.clone(),
            best.bits()?.to_string(),
            best.f1.to_string(),
            ttd.clone().fold(f64::INFINITY, f64::min).to_string(),
            ttd.fold(0.0, f64::max).to_string(),
            mem.clone().min().unwrap_or(0).to_string(),
            mem.max().unwrap_or(0).to_string(),
            best.ratio().to_string(),
            best.batch_size.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if a.profile.is_none() && a.traces.is_empty() {
        return Err(config_err("report needs --profile and/or at least one --trace"));
    }
    fs::create_dir_all(&a.out)?;
    if let Some(path) = &a.profile {
        let entries = read_profile_table(path)?;
        profile_summary(&entries, &a.out.join("profile_summary.csv"))?;
        println!("profile summary: {}", a.out.join("profile_summary.csv").display());
    }
    if a.traces.is_empty() {
        return Ok(());
    }
    let traces = a
        .traces
        .iter()
        .map(|p| {
            let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Ok(read_trace_csv(f)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let slices: Vec<&[_]> = traces.iter().map(Vec::as_slice).collect();
    let expected = match a.expect {
        Some(Expect::Increasing) => Trend::Increasing,
        Some(Expect::Decreasing) | None => Trend::Decreasing,
    };
    let verdict = trend_check(&slices, expected)?;
    let mut w = csv::Writer::from_path(a.out.join("sweep_summary.csv"))?;
    w.write_record([
        "trace",
        "ticks",
        "median_batch",
        "mean_throughput",
        "final_backlog",
        "overcommit_ticks",
        "conserves_flows",
    ])?;
    for ((path, ticks), median) in a.traces.iter().zip(&traces).zip(&verdict.median_batch) {
        let per_window = throughput_report(ticks, a.window.min(ticks.len()).max(1))?;
        let mean = per_window.iter().sum::<f64>() / per_window.len() as f64;
        w.write_record([
            path.display().to_string(),
            ticks.len().to_string(),
            median.to_string(),
            format!("{mean:.3}"),
            ticks.last().map_or(0, |t| t.backlog).to_string(),
            ticks.iter().filter(|t| t.overcommit).count().to_string(),
            ticks.iter().all(|t| t.conserves_flows()).to_string(),
        ])?;
    }
    w.flush()?;
    if a.expect.is_some() {
        let mut out = fs::File::create(a.out.join("trend.txt"))?;
        let line = format!(
            "expected {:?}: medians {:?}, {} violations ({})",
            verdict.expected,
            verdict.median_batch,
            verdict.violations,
            if verdict.monotone() { "monotone" } else { "not monotone" }
        );
        writeln!(out, "{line}")?;
        println!("{line}");
    }
    println!("sweep summary: {}", a.out.join("sweep_summary.csv").display());
    Ok(())
}

fn registry(a: RegistryArgs) -> Result<()> {
    let csv = field_registry().to_csv();
    match a.out {
        Some(path) => {
            ensure_parent(&path)?;
            fs::write(&path, csv)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}
