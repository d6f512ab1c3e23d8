use std::path::Path;

use anyhow::{Context, Result};
use hotsearch_core::evalbridge::EvaluatorSpec;
use hotsearch_core::netzoo::{builtin_network, parse_manifest, BuiltinNet};
use hotsearch_core::search::SearchConfig;
use hotsearch_core::{AcceleratorDesign, Error, FpgaSpec, ModelZoo, NetworkArch};

use crate::{DesignArgs, SearchArgs};

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

/// A manifest path, or builtin names separated by commas.
pub fn load_zoo(spec: &str) -> Result<ModelZoo> {
    let path = Path::new(spec);
    if path.exists() || spec.ends_with(".json") {
        return parse_manifest(path).with_context(|| format!("loading zoo manifest {spec}"));
    }
    let models = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| name.parse::<BuiltinNet>().and_then(builtin_network))
        .collect::<hotsearch_core::Result<Vec<NetworkArch>>>()?;
    Ok(ModelZoo::new(models)?)
}

pub fn load_fpga(path: Option<&Path>) -> Result<FpgaSpec> {
    let fpga = match path {
        Some(p) => FpgaSpec::load(p).with_context(|| format!("loading FPGA spec {}", p.display()))?,
        None => FpgaSpec::default(),
    };
    fpga.validate()?;
    Ok(fpga)
}

pub fn pick_model<'a>(zoo: &'a ModelZoo, name: Option<&str>) -> Result<&'a NetworkArch> {
    match name {
        Some(n) => zoo.get(n).ok_or_else(|| Error::UnknownNetwork(n.to_string()).into()),
        None => zoo.models().first().ok_or_else(|| input_error("the zoo is empty")),
    }
}

fn numbers(text: &str, what: &str) -> Result<Vec<u64>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| input_error(format!("{what}: `{t}` is not a non-negative integer")))
        })
        .collect()
}

pub fn parse_design(args: &DesignArgs, fpga: &FpgaSpec) -> Result<Option<AcceleratorDesign>> {
    let Some(text) = &args.design else {
        if args.lanes.is_some() {
            return Err(input_error("--lanes needs --design"));
        }
        return Ok(None);
    };
    let d = numbers(text, "--design")?;
    let (tm, tn, tr, tc, tm_d) = match d.as_slice() {
        [tm, tn, tr, tc] => (*tm, *tn, *tr, *tc, 0),
        [tm, tn, tr, tc, tm_d] => (*tm, *tn, *tr, *tc, *tm_d),
        _ => return Err(input_error("--design takes tm,tn,tr,tc[,tm_d]")),
    };
    let lanes = match &args.lanes {
        Some(l) => match numbers(l, "--lanes")?.as_slice() {
            [i, o, w] => (*i, *o, *w),
            _ => return Err(input_error("--lanes takes ifm,ofm,weight")),
        },
        None => {
            let total = fpga.lanes();
            let third = total / 3;
            (third, third, total - 2 * third)
        }
    };
    let design = AcceleratorDesign::with_lanes(tm, tn, tr, tc, tm_d, lanes, fpga.compute_word_bits);
    design.check_resources(fpga)?;
    Ok(Some(design))
}

/// Defaults, then the config file, then flags.
pub fn search_config(args: &SearchArgs) -> Result<SearchConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                path: p.clone(),
                source: e,
            })?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                field: p.display().to_string(),
                message: e.to_string(),
            })?
        }
        None => SearchConfig::default(),
    };
    if let Some(v) = args.t_ms {
        cfg.t_constraint_ms = Some(v);
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.episodes {
        cfg.episodes_max = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.top_k {
        cfg.top_k = v;
    }
    if let Some(v) = &args.evaluator {
        cfg.evaluator = v.parse::<EvaluatorSpec>()?;
    }
    Ok(cfg)
}
