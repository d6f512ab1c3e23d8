use anyhow::Result;
use hotsearch_core::bottleneck::{analyze_network, NetworkAnalysis};
use hotsearch_core::evalbridge::build_evaluator;
use hotsearch_core::perfmodel::{network_latency, optimize_design, Workload};
use hotsearch_core::search::{monte_carlo_select, run_search, Backbone, SearchConfig, SelectionParams};
use hotsearch_core::{AcceleratorDesign, Error, FpgaSpec, ModelZoo};
use serde::Serialize;
use serde_json::{json, Value};

use crate::inputs::{load_fpga, load_zoo, parse_design, pick_model, search_config};
use crate::report::{output_dir, write_csv, write_json, Header};
use crate::{Common, DesignArgs, SearchArgs};

fn zoo_identity(zoo: &ModelZoo) -> Value {
    zoo.models()
        .iter()
        .map(|m| json!({ "name": m.name(), "accuracy": m.baseline_accuracy(), "weights": m.weight_checksum() }))
        .collect()
}

fn load(common: &Common) -> Result<(ModelZoo, FpgaSpec)> {
    Ok((load_zoo(&common.zoo)?, load_fpga(common.fpga.as_deref())?))
}

#[derive(Serialize)]
struct AnalyzeRow {
    model: String,
    latency_ms: Option<f64>,
    cycles: Option<u64>,
    tm: Option<u64>,
    tn: Option<u64>,
    tr: Option<u64>,
    tc: Option<u64>,
    tm_d: Option<u64>,
    lanes_i: Option<u64>,
    lanes_o: Option<u64>,
    lanes_w: Option<u64>,
    dsp: Option<u64>,
    bram_blocks: Option<u64>,
    bottlenecks: String,
    meets_t: Option<bool>,
}

const ANALYZE_COLUMNS: [&str; 15] = [
    "model",
    "latency_ms",
    "cycles",
    "tm",
    "tn",
    "tr",
    "tc",
    "tm_d",
    "lanes_i",
    "lanes_o",
    "lanes_w",
    "dsp",
    "bram_blocks",
    "bottlenecks",
    "meets_t",
];

pub fn analyze(common: &Common, t_ms: Option<f64>) -> Result<u8> {
    let (zoo, fpga) = load(common)?;
    let mut rows = Vec::new();
    for net in zoo.models() {
        let workload = Workload::baseline(net);
        let mut row = AnalyzeRow {
            model: net.name().to_string(),
            latency_ms: None,
            cycles: None,
            tm: None,
            tn: None,
            tr: None,
            tc: None,
            tm_d: None,
            lanes_i: None,
            lanes_o: None,
            lanes_w: None,
            dsp: None,
            bram_blocks: None,
            bottlenecks: String::new(),
            meets_t: None,
        };
        match optimize_design(&fpga, &workload) {
            Ok((d, cycles)) => {
                let lat = network_latency(&fpga, &d, &workload)?;
                let hist = analyze_network(&fpga, &d, &workload)?.histogram;
                let (i, o, w) = d.lanes(fpga.compute_word_bits);
                row.latency_ms = Some(lat.total_ms);
                row.cycles = Some(cycles);
                (row.tm, row.tn, row.tr, row.tc, row.tm_d) =
                    (Some(d.tm), Some(d.tn), Some(d.tr), Some(d.tc), Some(d.tm_d));
                (row.lanes_i, row.lanes_o, row.lanes_w) = (Some(i), Some(o), Some(w));
                row.dsp = Some(d.dsp_used());
                row.bram_blocks = Some(lat.buffer_blocks);
                row.bottlenecks = format!("C{} I{} W{} O{}", hist.c, hist.i, hist.w, hist.o);
                row.meets_t = t_ms.map(|t| lat.total_ms <= t);
            }
            Err(Error::NoFeasibleDesign(msg)) => {
                log::warn!("{}: {msg}", net.name());
                row.meets_t = t_ms.map(|_| false);
            }
            Err(e) => return Err(e.into()),
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| {
        a.latency_ms
            .unwrap_or(f64::INFINITY)
            .total_cmp(&b.latency_ms.unwrap_or(f64::INFINITY))
            .then_with(|| a.model.cmp(&b.model))
    });
    let header = Header::new(
        "analyze",
        &json!({ "zoo": zoo_identity(&zoo), "fpga": fpga, "t_ms": t_ms }),
        None,
    );
    let dir = output_dir(&common.out)?;
    write_csv(&dir.join("analyze.csv"), &header, &rows, &ANALYZE_COLUMNS)?;
    for r in &rows {
        match r.latency_ms {
            Some(l) => println!(
                "{:<16} {:>10.4} ms  Tm={} Tn={} Tr={} Tc={}  lanes=({},{},{})  {}",
                r.model,
                l,
                r.tm.unwrap_or(0),
                r.tn.unwrap_or(0),
                r.tr.unwrap_or(0),
                r.tc.unwrap_or(0),
                r.lanes_i.unwrap_or(0),
                r.lanes_o.unwrap_or(0),
                r.lanes_w.unwrap_or(0),
                r.bottlenecks
            ),
            None => println!("{:<16} no feasible design", r.model),
        }
    }
    Ok(0)
}

#[derive(Serialize)]
struct DetectReport<'a> {
    model: &'a str,
    design: AcceleratorDesign,
    optimized: bool,
    analysis: &'a NetworkAnalysis,
}

pub fn detect(common: &Common, design_args: &DesignArgs, model: Option<&str>) -> Result<u8> {
    let (zoo, fpga) = load(common)?;
    let net = pick_model(&zoo, model)?;
    let workload = Workload::baseline(net);
    let (design, optimized) = match parse_design(design_args, &fpga)? {
        Some(d) => (d, false),
        None => (optimize_design(&fpga, &workload)?.0, true),
    };
    let analysis = analyze_network(&fpga, &design, &workload)?;
    let header = Header::new(
        "detect",
        &json!({ "zoo": zoo_identity(&zoo), "fpga": fpga, "model": net.name(), "design": design }),
        None,
    );
    let dir = output_dir(&common.out)?;
    write_json(
        &dir.join("detect.json"),
        &header,
        DetectReport {
            model: net.name(),
            design,
            optimized,
            analysis: &analysis,
        },
    )?;
    println!(
        "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>12}",
        "layer", "label", "t_comp", "t_i", "t_w", "t_o", "cycles"
    );
    for l in &analysis.layers {
        let b = &l.breakdown;
        println!(
            "{:<10} {:>5} {:>10} {:>10} {:>10} {:>10} {:>12}",
            l.name, l.bottleneck.label, b.t_comp, b.t_i, b.t_w, b.t_o, b.lat_total
        );
    }
    let h = &analysis.histogram;
    println!(
        "histogram C={} I={} W={} O={}  total {:.4} ms",
        h.c, h.i, h.w, h.o, analysis.total_ms
    );
    Ok(0)
}

pub fn space(common: &Common, search: &SearchArgs, model: Option<&str>) -> Result<u8> {
    let (zoo, fpga) = load(common)?;
    let cfg = search_config(search)?;
    let net = pick_model(&zoo, model)?;
    let bb = Backbone::prepare(net, &fpga, &cfg.caps)?;
    let header = Header::new(
        "space",
        &json!({ "zoo": zoo_identity(&zoo), "fpga": fpga, "model": net.name(), "caps": cfg.caps }),
        None,
    );
    let dir = output_dir(&common.out)?;
    write_json(
        &dir.join("space.json"),
        &header,
        json!({ "model": net.name(), "design": bb.design, "baseline_ms": bb.baseline_ms, "space": bb.space }),
    )?;
    println!(
        "{}: {} dimensions, {} configurations",
        net.name(),
        bb.space.dims.len(),
        bb.space.cardinality
    );
    for d in &bb.space.dims {
        println!("  {:?}[{}] x{}", d.kind, d.target, d.size);
    }
    Ok(0)
}

#[derive(Serialize)]
struct TraceRow<'a> {
    backbone: &'a str,
    episode: usize,
    reward: f64,
    latency_ms: f64,
    accuracy: Option<f64>,
    feasible: bool,
    failed: bool,
}

fn search_inputs(zoo: &ModelZoo, fpga: &FpgaSpec, cfg: &SearchConfig) -> Value {
    json!({ "zoo": zoo_identity(zoo), "fpga": fpga, "search": cfg })
}

pub fn search(common: &Common, args: &SearchArgs) -> Result<u8> {
    let (zoo, fpga) = load(common)?;
    let cfg = search_config(args)?;
    cfg.validate()?;
    let t = cfg.t_constraint()?;
    let evaluator = build_evaluator(&cfg.evaluator, zoo.models())?;
    let header = Header::new("search", &search_inputs(&zoo, &fpga, &cfg), Some(cfg.seed));
    let dir = output_dir(&common.out)?;

    let selection = monte_carlo_select(
        zoo.models(),
        &fpga,
        &SelectionParams {
            t_constraint_ms: t,
            n_samples: cfg.mc_samples,
            top_k: cfg.top_k,
            alpha: cfg.alpha,
            a_min_frac: cfg.a_min_frac,
            t_min_frac: cfg.t_min_frac,
            seed: cfg.seed,
            caps: cfg.caps.clone(),
        },
    )?;
    for s in selection
        .ranked
        .iter()
        .chain(&selection.runners_up)
        .chain(&selection.excluded)
    {
        println!(
            "screen {:<12} min {:>9} max {:>9} avg {:>9}  {}",
            s.model,
            fmt_ms(s.min_ms),
            fmt_ms(s.max_ms),
            fmt_ms(s.avg_ms),
            if s.satisfies { "ok" } else { "pruned" }
        );
    }
    if selection.is_empty() {
        write_json(
            &dir.join("summary.json"),
            &header,
            json!({ "selection": selection, "best": null, "diagnostic": format!("no feasible backbone under {t} ms") }),
        )?;
        eprintln!("no backbone can meet {t} ms");
        return Ok(1);
    }

    let outcome = run_search(&selection.backbones, &fpga, &cfg, evaluator.as_ref())?;
    let trace: Vec<TraceRow> = outcome
        .trace
        .iter()
        .map(|e| TraceRow {
            backbone: &e.backbone,
            episode: e.episode,
            reward: e.reward,
            latency_ms: e.latency_ms,
            accuracy: e.accuracy,
            feasible: e.feasible,
            failed: e.failed,
        })
        .collect();
    write_csv(
        &dir.join("trace.csv"),
        &header,
        &trace,
        &[
            "backbone",
            "episode",
            "reward",
            "latency_ms",
            "accuracy",
            "feasible",
            "failed",
        ],
    )?;
    write_json(
        &dir.join("pareto.json"),
        &header,
        json!({ "points": outcome.pareto.points() }),
    )?;

    let per_backbone: Vec<Value> = outcome
        .backbones
        .iter()
        .map(|r| {
            let best = r.best.as_ref();
            json!({
                "model": r.model,
                "a_ori": r.a_ori,
                "baseline_ms": r.baseline_ms,
                "cardinality": r.cardinality.to_string(),
                "episodes": r.episodes,
                "distinct_evaluated": r.distinct_evaluated,
                "best_reward": r.best_reward,
                "best_latency_ms": best.map(|b| b.latency_ms),
                "best_accuracy": best.map(|b| b.accuracy),
                "latency_reduction_pct": best.map(|b| (r.baseline_ms - b.latency_ms) / r.baseline_ms * 100.0),
                "accuracy_delta": best.map(|b| b.accuracy - r.a_ori),
                "pareto_size": r.pareto.len(),
                "diagnostic": r.diagnostic,
            })
        })
        .collect();
    write_json(
        &dir.join("summary.json"),
        &header,
        json!({ "t_constraint_ms": t, "selection": selection, "backbones": per_backbone, "best": outcome.best }),
    )?;

    for r in &outcome.backbones {
        match &r.best {
            Some(b) => println!(
                "best {:<12} {:.4} ms ({:+.1}% vs {:.4} ms)  accuracy {:.4} ({:+.4})  reward {:.4}",
                r.model,
                b.latency_ms,
                (b.latency_ms - r.baseline_ms) / r.baseline_ms * 100.0,
                r.baseline_ms,
                b.accuracy,
                b.accuracy - r.a_ori,
                b.reward
            ),
            None => println!("best {:<12} none: {}", r.model, r.diagnostic.as_deref().unwrap_or("")),
        }
    }
    Ok(if outcome.best.is_some() { 0 } else { 1 })
}

fn fmt_ms(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}
