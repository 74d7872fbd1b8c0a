//! WebAssembly bindings for the browser demo.
//!
//! Every exported function takes plain numbers or a JSON string and returns
//! JSON, so the page needs no generated type bindings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use hybrid_rdme::experiments::DEFAULT_VOXELS;
use hybrid_rdme::mesh::CartesianMesh;
use hybrid_rdme::micro::kernel::contact_survival;
use hybrid_rdme::model::{validate_model, Model, ModelFile};
use hybrid_rdme::partition::{build_split, PartitionOptions};
use hybrid_rdme::rates::{h_star, meso_rate, resolution_error_w, Dim};

#[derive(Debug, Serialize)]
pub struct RatePoint {
    pub h: f64,
    pub w: f64,
    /// `None` below the smallest mesh size with a positive rate.
    pub k_meso: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct RateCurve {
    pub h_star: f64,
    pub points: Vec<RatePoint>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, String> {
    if !(lo > 0.0 && hi > lo && n >= 2) {
        return Err("need 0 < lo < hi and at least two points".into());
    }
    let step = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|i| lo * (step * i as f64).exp()).collect())
}

/// Resolution indicator and lattice rate over a log-spaced range of mesh sizes.
pub fn rate_curve(k_a: f64, d: f64, sigma: f64, h_min: f64, h_max: f64, n: usize) -> Result<RateCurve, String> {
    if !(k_a > 0.0 && d > 0.0 && sigma > 0.0) {
        return Err("k_a, D and sigma must be positive".into());
    }
    let points = log_grid(h_min, h_max, n)?
        .into_iter()
        .map(|h| RatePoint {
            h,
            w: resolution_error_w(k_a, d, sigma, h).w,
            k_meso: meso_rate(k_a, d, sigma, h).ok().map(|r| r.k_meso),
        })
        .collect();
    Ok(RateCurve {
        h_star: h_star(sigma, Dim::Three),
        points,
    })
}

/// `(t, S(t))` for a pair released at contact.
pub fn survival_curve(
    k_a: f64,
    d: f64,
    sigma: f64,
    t_min: f64,
    t_max: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>, String> {
    if !(k_a >= 0.0 && d > 0.0 && sigma > 0.0) {
        return Err("need k_a >= 0, D > 0 and sigma > 0".into());
    }
    Ok(log_grid(t_min, t_max, n)?
        .into_iter()
        .map(|t| (t, contact_survival(k_a, d, sigma, t)))
        .collect())
}

#[derive(Debug, Serialize)]
pub struct SpeciesScale {
    pub name: String,
    pub policy: String,
}

#[derive(Debug, Serialize)]
pub struct ReactionReport {
    pub reaction: String,
    pub w: f64,
    pub h_star: f64,
    pub resolved: bool,
}

#[derive(Debug, Serialize)]
pub struct PartitionReport {
    pub h: f64,
    pub reactions: Vec<ReactionReport>,
    pub species: Vec<SpeciesScale>,
}

/// Scale plan of a model given as JSON text; `voxels` of zero keeps the
/// model's own mesh.
pub fn partition(model_json: &str, voxels: usize, epsilon: f64) -> Result<PartitionReport, String> {
    let file = ModelFile::parse(model_json).map_err(|e| e.to_string())?;
    let network = file.network();
    validate_model(&network, &file.domain, &file.config)
        .into_result()
        .map_err(|e| e.to_string())?;
    let model = Model::compile(&network).map_err(|e| e.to_string())?;
    let dims = if voxels > 0 {
        [voxels; 3]
    } else {
        file.config.voxels.unwrap_or([DEFAULT_VOXELS; 3])
    };
    let mesh = CartesianMesh::new(&file.domain, dims).map_err(|e| e.to_string())?;
    let opts = PartitionOptions {
        epsilon,
        k_factor: file.config.k_factor,
        t_m: file.config.t_m,
        ..PartitionOptions::default()
    };
    let plan = build_split(&model, &mesh, &opts).map_err(|e| e.to_string())?;
    Ok(PartitionReport {
        h: mesh.h,
        reactions: plan
            .reactions
            .iter()
            .map(|r| ReactionReport {
                reaction: model.reactions[r.reaction].to_string(),
                w: r.w,
                h_star: r.h_star,
                resolved: r.resolved,
            })
            .collect(),
        species: model
            .species
            .iter()
            .enumerate()
            .map(|(s, spec)| SpeciesScale {
                name: spec.name.clone(),
                policy: plan.policy(s).to_string(),
            })
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = rateCurve)]
pub fn rate_curve_js(k_a: f64, d: f64, sigma: f64, h_min: f64, h_max: f64, n: usize) -> Result<String, JsValue> {
    to_js(rate_curve(k_a, d, sigma, h_min, h_max, n))
}

#[wasm_bindgen(js_name = survivalCurve)]
pub fn survival_curve_js(k_a: f64, d: f64, sigma: f64, t_min: f64, t_max: f64, n: usize) -> Result<String, JsValue> {
    to_js(survival_curve(k_a, d, sigma, t_min, t_max, n))
}

#[wasm_bindgen(js_name = partitionModel)]
pub fn partition_js(model_json: &str, voxels: usize, epsilon: f64) -> Result<String, JsValue> {
    to_js(partition(model_json, voxels, epsilon))
}
