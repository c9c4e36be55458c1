//! Browser bindings: glued profile with curvature, neck spectrum, and the
//! round-sphere Morse index. Every function returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;
use warpcert::pipeline::{run_pipeline, PipelineConfig, Scope, SpectralModel};
use warpcert::spectral::{self, Mode};

#[derive(Serialize)]
struct ProfileView {
    verdict: String,
    error: Option<String>,
    failing_checks: Vec<String>,
    t: Vec<f64>,
    f: Vec<f64>,
    h: Vec<f64>,
    ric_tt: Vec<f64>,
    ric_circle: Vec<f64>,
    ric_sphere: Vec<f64>,
    t1: Option<f64>,
    r1_realized: Option<f64>,
    cap_start: Option<f64>,
}

#[derive(Serialize)]
struct SpectrumView {
    verdict: String,
    error: Option<String>,
    modes: Vec<Mode>,
    lambda1: Option<f64>,
    window: Option<(f64, f64)>,
    morse_index: Option<usize>,
}

#[derive(Serialize)]
struct SphereView {
    eigenvalues: Vec<(f64, usize)>,
    morse_index: Option<usize>,
    error: Option<String>,
}

fn config(alpha: f64, lambda0: f64, slack: f64) -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.construction.alpha = alpha;
    c.construction.lambda0 = lambda0;
    c.glue.delta = slack;
    c
}

fn verdict_name(v: warpcert::pipeline::Verdict) -> String {
    format!("{v:?}").to_lowercase()
}

/// Glued profile and its Ricci components.
pub fn profile_json(alpha: f64, lambda0: f64, slack: f64) -> String {
    let run = run_pipeline(&config(alpha, lambda0, slack), Scope::Certify);
    let r = &run.report;
    let mut view = ProfileView {
        verdict: verdict_name(r.verdict),
        error: r.error.as_ref().map(|e| format!("{}: {}", e.stage, e.message)),
        failing_checks: r.failing_checks.clone(),
        t: vec![],
        f: vec![],
        h: vec![],
        ric_tt: vec![],
        ric_circle: vec![],
        ric_sphere: vec![],
        t1: r.glue.as_ref().map(|g| g.t1),
        r1_realized: r.glue.as_ref().map(|g| g.r1_realized),
        cap_start: r.glue.as_ref().map(|g| g.cap_start),
    };
    if let Some(p) = &run.glued {
        view.t = p.grid.clone();
        view.f = p.f.clone();
        view.h = p.h.clone();
    }
    if let Some(c) = &run.curvature {
        view.ric_tt = c.records.iter().map(|x| x.ric_tt).collect();
        view.ric_circle = c.records.iter().map(|x| x.ric_circle).collect();
        view.ric_sphere = c.records.iter().map(|x| x.ric_sphere).collect();
    }
    serde_json::to_string(&view).expect("view serializes")
}

/// Spectrum of the doubled neck and the Morse index at `eps`.
pub fn spectrum_json(alpha: f64, lambda0: f64, slack: f64, eps: f64, grid: usize) -> String {
    let mut c = config(alpha, lambda0, slack);
    c.construction.eps = eps;
    c.spectral.model = SpectralModel::Neck;
    c.spectral.grid = grid.max(200);
    c.spectral.k_max = 4;
    c.spectral.modes_per_k = 6;
    let run = run_pipeline(&c, Scope::Spectrum);
    let r = &run.report;
    let s = r.spectrum.as_ref();
    let view = SpectrumView {
        verdict: verdict_name(r.verdict),
        error: r.error.as_ref().map(|e| format!("{}: {}", e.stage, e.message)),
        modes: run.spectrum.as_ref().map_or(vec![], |sp| sp.modes.iter().take(24).copied().collect()),
        lambda1: s.map(|x| x.lambda1),
        window: s.and_then(|x| x.window).map(|w| (w.lower, w.upper)),
        morse_index: s.and_then(|x| x.morse_index),
    };
    serde_json::to_string(&view).expect("view serializes")
}

/// Morse index of `Δ + eps` on the unit round `S^m`.
pub fn sphere_index_json(m: usize, eps: f64) -> String {
    let s = spectral::sphere_spectrum(m.max(1), 12);
    let (morse_index, error) = match spectral::morse_index(&s, eps) {
        Ok(i) => (Some(i), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let view = SphereView {
        eigenvalues: s.modes.iter().map(|md| (md.value, md.multiplicity)).collect(),
        morse_index,
        error,
    };
    serde_json::to_string(&view).expect("view serializes")
}

#[wasm_bindgen]
pub fn glued_profile(alpha: f64, lambda0: f64, slack: f64) -> String {
    profile_json(alpha, lambda0, slack)
}

#[wasm_bindgen]
pub fn neck_spectrum(alpha: f64, lambda0: f64, slack: f64, eps: f64, grid: usize) -> String {
    spectrum_json(alpha, lambda0, slack, eps, grid)
}

#[wasm_bindgen]
pub fn sphere_index(m: usize, eps: f64) -> String {
    sphere_index_json(m, eps)
}
