use std::path::{Path, PathBuf};

use serde_json::json;
use wfcodec_core::causal::{cache_len, simulate_cache_len};
use wfcodec_core::losses::{
    adaptive_adv_weight, kl_divergence, l1_recon, total_loss, wl_loss, LossComponents, LossWeights,
};
use wfcodec_core::net::{self, decode_plan, video_time, GaussianLatent, ModelConfig, NormKind, WeightStore, WfVae};
use wfcodec_core::subband::analyze_pyramid;
use wfcodec_core::tensor::{read_tensor, save_tensor};
use wfcodec_core::wavelet::{
    build_pyramid, dwt3d, idwt3d, load_pyramid, reconstruct_pyramid, save_pyramid,
};
use wfcodec_core::{ChunkPlan, Error, Result, Rng, VideoTensor};

use crate::report::{sha256_hex, InputDigest, Report};
use crate::{ModelArgs, WeightSource};

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn load(path: &Path) -> Result<(VideoTensor, Vec<u8>)> {
    let bytes = read_file(path)?;
    Ok((read_tensor(&bytes)?, bytes))
}

fn model_config(m: &ModelArgs) -> Result<ModelConfig> {
    let preset = ModelConfig::preset(&m.preset, m.latent_channels)?;
    let mut c = ModelConfig::new(
        m.base_channels.unwrap_or(preset.base_channels),
        m.c_flow.unwrap_or(preset.c_flow),
        m.latent_channels,
    )?
    .with_blocks(m.blocks);
    if let Some(groups) = m.groupnorm {
        c = c.with_norm(NormKind::Groupnorm { groups });
    }
    c.validate()?;
    Ok(c)
}

fn describe(m: &ModelArgs, d: InputDigest) -> InputDigest {
    d.arg("preset", &m.preset)
        .arg("latent", m.latent_channels)
        .arg("base", format!("{:?}", m.base_channels))
        .arg("c_flow", format!("{:?}", m.c_flow))
        .arg("blocks", m.blocks)
        .arg("groupnorm", format!("{:?}", m.groupnorm))
}

fn build_model(m: &ModelArgs, source: &WeightSource, digest: InputDigest) -> Result<(WfVae, InputDigest)> {
    let config = model_config(m)?;
    let digest = describe(m, digest);
    let (weights, digest) = match (&source.weights, source.seed) {
        (Some(path), _) => {
            let bytes = read_file(path)?;
            (WeightStore::from_bytes(&bytes)?, digest.bytes("weights", &bytes))
        }
        (None, Some(seed)) => (net::init_weights(&config, &mut Rng::new(seed))?, digest.arg("seed", seed)),
        (None, None) => return Err(Error::Parameter("either --weights or --seed is required".into())),
    };
    Ok((WfVae::new(config, weights)?, digest))
}

pub fn roundtrip(input: &Path, levels: u8, tol: f64, pyramid_dir: Option<&Path>) -> Result<Report> {
    let (v, bytes) = load(input)?;
    let t = v.time();
    let recon = match levels {
        1 => idwt3d(&dwt3d(&v)?, t)?,
        2 => {
            let l1 = dwt3d(&v)?;
            let l2 = dwt3d(l1.low())?;
            let low = idwt3d(&l2, l1.shape().time)?;
            idwt3d(&l1.with_low(low)?, t)?
        }
        _ => {
            let mut p = build_pyramid(&v)?;
            if let Some(dir) = pyramid_dir {
                save_pyramid(&p, dir)?;
                p = load_pyramid(dir)?;
            }
            reconstruct_pyramid(&p, t)?
        }
    };
    let err = recon.max_abs_diff(&v)? as f64;
    let digest = InputDigest::new().bytes("input", &bytes).arg("levels", levels);
    let mut r = Report::new("roundtrip", digest);
    r.metric("shape", v.shape().as_array())
        .metric("levels", levels)
        .metric("max_abs_error", err)
        .tolerance("max_abs_error", tol)
        .require(err <= tol);
    Ok(r)
}

pub fn analyze(input: &Path, bins: usize) -> Result<Report> {
    let (v, bytes) = load(input)?;
    let stats = analyze_pyramid(&build_pyramid(&v)?, bins)?;
    let rows: Vec<_> = stats.iter().flat_map(|l| l.bands.iter()).collect();
    let mut r = Report::new("analyze", InputDigest::new().bytes("input", &bytes).arg("bins", bins));
    r.metric("shape", v.shape().as_array())
        .metric("bins", bins)
        .metric("degenerate", stats.iter().any(|l| l.degenerate))
        .metric(
            "levels",
            stats
                .iter()
                .map(|l| json!({"level": l.level, "degenerate": l.degenerate, "total_energy": l.total_energy()}))
                .collect::<Vec<_>>(),
        )
        .metric("subbands", rows);
    Ok(r)
}

pub fn verify_stream(
    input: &Path,
    model: &ModelArgs,
    source: &WeightSource,
    plans: &[ChunkPlan],
    tol: f64,
) -> Result<Report> {
    let (v, bytes) = load(input)?;
    let digest = InputDigest::new().bytes("input", &bytes);
    let (vae, digest) = build_model(model, source, digest)?;
    let plans_text: Vec<String> = plans.iter().map(|p| p.to_string()).collect();
    let digest = digest.arg("plans", plans_text.join(" "));
    for plan in plans {
        plan.chunk_sizes(v.time())?;
    }

    let direct = vae.encode(&v, &ChunkPlan::Direct)?;
    let direct_video = vae.decode(&direct.latent.mean, v.time(), &ChunkPlan::Direct)?.video;
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    for plan in plans {
        let s = vae.encode(&v, plan)?;
        let enc_dev = s
            .latent
            .mean
            .max_abs_diff(&direct.latent.mean)?
            .max(s.latent.logvar.max_abs_diff(&direct.latent.logvar)?) as f64;
        let latent_plan = decode_plan(plan, &s);
        let video = vae.decode(&direct.latent.mean, v.time(), &latent_plan)?.video;
        let dec_dev = video.max_abs_diff(&direct_video)? as f64;
        worst = worst.max(enc_dev).max(dec_dev);
        rows.push(json!({
            "plan": plan,
            "latent_plan": latent_plan,
            "encode_max_abs": enc_dev,
            "decode_max_abs": dec_dev,
        }));
    }
    let mut r = Report::new("verify-stream", digest);
    r.metric("shape", v.shape().as_array())
        .metric("config", vae.config())
        .metric("plans", rows)
        .metric("max_abs_deviation", worst)
        .tolerance("max_abs_deviation", tol)
        .require(worst <= tol);
    Ok(r)
}

pub fn cache_table(k_t: usize, s_t: usize, t_chunk: usize, m_max: usize) -> Result<Report> {
    let mut rows = Vec::new();
    let mut agree = true;
    for m in 0..=m_max {
        let formula = cache_len(k_t, s_t, t_chunk, m)?;
        let oracle = simulate_cache_len(k_t, s_t, t_chunk, m)?;
        agree &= formula == oracle;
        rows.push(json!({"m": m, "cache_len": formula, "cached_frames": formula.max(0), "oracle": oracle}));
    }
    let digest = InputDigest::new()
        .arg("k_t", k_t)
        .arg("s_t", s_t)
        .arg("t_chunk", t_chunk)
        .arg("m_max", m_max);
    let mut r = Report::new("cache-table", digest);
    r.metric("k_t", k_t)
        .metric("s_t", s_t)
        .metric("t_chunk", t_chunk)
        .metric("rows", rows)
        .metric("all_agree", agree)
        .tolerance("mismatches", 0.0)
        .require(agree);
    Ok(r)
}

pub fn encode(input: &Path, model: &ModelArgs, source: &WeightSource, plan: &ChunkPlan, output: &Path) -> Result<Report> {
    let (v, bytes) = load(input)?;
    let (vae, digest) = build_model(model, source, InputDigest::new().bytes("input", &bytes))?;
    let enc = vae.encode(&v, plan)?;
    std::fs::create_dir_all(output).map_err(|source| Error::Io { path: output.to_path_buf(), source })?;
    let (mean_path, logvar_path) = (output.join("mean.wfvt"), output.join("logvar.wfvt"));
    save_tensor(&enc.latent.mean, &mean_path)?;
    save_tensor(&enc.latent.logvar, &logvar_path)?;
    let mut r = Report::new("encode", digest.arg("plan", plan));
    r.metric("input_shape", v.shape().as_array())
        .metric("latent_shape", enc.latent.shape().as_array())
        .metric("mode", plan)
        .metric("latent_chunks", &enc.latent_chunks)
        .metric("outputs", [&mean_path, &logvar_path]);
    Ok(r)
}

pub fn decode(
    input: &Path,
    model: &ModelArgs,
    source: &WeightSource,
    plan: &ChunkPlan,
    frames: Option<usize>,
    output: &Path,
) -> Result<Report> {
    let (z, bytes) = load(input)?;
    let (vae, digest) = build_model(model, source, InputDigest::new().bytes("input", &bytes))?;
    let frames = frames.unwrap_or_else(|| video_time(z.time()));
    let dec = vae.decode(&z, frames, plan)?;
    save_tensor(&dec.video, output)?;
    let mut r = Report::new("decode", digest.arg("plan", plan).arg("frames", frames));
    r.metric("latent_shape", z.shape().as_array())
        .metric("video_shape", dec.video.shape().as_array())
        .metric("mode", plan)
        .metric("outputs", [output]);
    Ok(r)
}

pub fn init_weights(model: &ModelArgs, seed: u64, output: Option<&Path>) -> Result<Report> {
    let config = model_config(model)?;
    let store = net::init_weights(&config, &mut Rng::new(seed))?;
    let bytes = store.to_bytes();
    if let Some(output) = output {
        std::fs::write(output, &bytes).map_err(|source| Error::Io { path: output.to_path_buf(), source })?;
    }
    let mut r = Report::new("init-weights", describe(model, InputDigest::new()).arg("seed", seed));
    r.metric("config", &config)
        .metric("seed", seed)
        .metric("tensors", store.len())
        .metric("parameters", store.param_count())
        .metric("weights_sha256", sha256_hex(&bytes))
        .metric("outputs", output.into_iter().collect::<Vec<_>>());
    Ok(r)
}

pub struct LossArgs {
    pub input: PathBuf,
    pub recon: PathBuf,
    pub latent: Option<(PathBuf, PathBuf)>,
    pub adv: f64,
    pub perceptual: Option<f64>,
    pub grad_norms: Option<(f64, f64)>,
    pub kl_weight: f64,
    pub wl_weight: f64,
}

/// WL is evaluated between the pyramids of the two clips.
pub fn loss_report(a: LossArgs) -> Result<Report> {
    let (x, xb) = load(&a.input)?;
    let (y, yb) = load(&a.recon)?;
    let mut digest = InputDigest::new().bytes("input", &xb).bytes("recon", &yb);
    let recon = l1_recon(&x, &y)?;
    let (px, py) = (build_pyramid(&x)?, build_pyramid(&y)?);
    let wl = wl_loss(&py.level2, &px.level2, &py.level3, &px.level3)?;
    let kl = match &a.latent {
        Some((mean, logvar)) => {
            let (m, mb) = load(mean)?;
            let (lv, lb) = load(logvar)?;
            digest = digest.bytes("mean", &mb).bytes("logvar", &lb);
            Some(kl_divergence(&GaussianLatent::new(m, lv)?)?)
        }
        None => None,
    };
    let defaults = LossWeights::default();
    let adv_weight = match a.grad_norms {
        Some((r, g)) => adaptive_adv_weight(r, g, defaults.delta)?,
        None => defaults.adv,
    };
    let weights = LossWeights { adv: adv_weight, kl: a.kl_weight, wl: a.wl_weight, ..defaults };
    let components = LossComponents { recon, adv: a.adv, kl: kl.unwrap_or(0.0), wl, perceptual: a.perceptual };
    let total = total_loss(&components, &weights)?;
    let digest = digest
        .arg("adv", a.adv)
        .arg("perceptual", format!("{:?}", a.perceptual))
        .arg("grad_norms", format!("{:?}", a.grad_norms))
        .arg("kl_weight", a.kl_weight)
        .arg("wl_weight", a.wl_weight);
    let mut r = Report::new("loss-report", digest);
    r.metric("l1_recon", recon)
        .metric("wl", wl)
        .metric("kl", kl)
        .metric("adv", a.adv)
        .metric("perceptual", a.perceptual)
        .metric("weights", weights)
        .metric("total", total);
    Ok(r)
}
