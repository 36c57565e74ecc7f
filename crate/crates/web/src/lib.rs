//! WebAssembly bindings for the browser demo in `www/`.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rggcount::{
    count_decomposed, covariance_l, covariance_m, sample_limit_paths, sample_poisson_cloud, CountRequest,
    DensitySpec, GraphShape, McSettings, OracleParams, RadialDensity,
};
use wasm_bindgen::prelude::*;

fn density(family: &str, d: usize, param: f64) -> Result<RadialDensity, String> {
    let spec = match family {
        "power" => DensitySpec::Power { d, alpha: param },
        "von_mises" => DensitySpec::VonMises { d, tau: param },
        other => return Err(format!("unknown family {other}")),
    };
    RadialDensity::new(spec).map_err(|e| e.to_string())
}

fn shape(kind: &str, k: usize) -> Result<GraphShape, String> {
    match kind {
        "complete" => GraphShape::complete(k),
        "path" => GraphShape::path(k),
        "star" => GraphShape::star(k),
        "cycle" => GraphShape::cycle(k),
        other => return Err(format!("unknown shape {other}")),
    }
    .map_err(|e| e.to_string())
}

fn list(text: &str) -> Result<Vec<f64>, String> {
    text.split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("not a number: {s}")))
        .collect()
}

fn cell(r: rggcount::Result<f64>) -> String {
    r.map_or_else(|_| "NA".into(), |v| format!("{v:.4}"))
}

/// `n,R_w,R_c,R_p(2)..R_p(max_order)` for each sample size.
pub fn radii_csv(family: &str, d: usize, param: f64, ns: &str, max_order: usize) -> Result<String, String> {
    let density = density(family, d, param)?;
    let mut out = String::from("n,R_w,R_c");
    for k in 2..=max_order {
        out.push_str(&format!(",R_p({k})"));
    }
    out.push('\n');
    for n in list(ns)? {
        out.push_str(&format!("{n},{},{}", cell(density.weak_core_radius(n)), cell(density.core_radius(n, None, None))));
        for k in 2..=max_order {
            out.push_str(&format!(",{}", cell(density.poisson_layer_radius(n, k))));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Samples a cloud outside `B(0, r)` and returns `t,count_h,count_plus,count_minus`
/// preceded by a `# points=` line.
#[allow(clippy::too_many_arguments)]
pub fn curves_csv(
    family: &str,
    d: usize,
    param: f64,
    n: f64,
    r: f64,
    kind: &str,
    k: usize,
    grid: &str,
    seed: u32,
) -> Result<String, String> {
    let density = density(family, d, param)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.into());
    let cloud = sample_poisson_cloud(n, &density, &mut rng, Some(r)).map_err(|e| e.to_string())?;
    let grid = list(grid)?;
    let req = CountRequest::new(shape(kind, k)?, grid.clone(), r);
    let curves = count_decomposed(&cloud, &req).map_err(|e| e.to_string())?;
    let mut out = format!("# points={}\nt,count_h,count_plus,count_minus\n", cloud.len());
    for (i, t) in grid.iter().enumerate() {
        out.push_str(&format!(
            "{t},{},{},{}\n",
            curves.plain.counts[i], curves.plus.counts[i], curves.minus.counts[i]
        ));
    }
    Ok(out)
}

/// Limit covariance of order `ell` on the grid followed by `paths` Gaussian
/// sample paths as `path,t,value`.
#[allow(clippy::too_many_arguments)]
pub fn limit_csv(
    family: &str,
    d: usize,
    param: f64,
    kind: &str,
    k: usize,
    ell: usize,
    grid: &str,
    samples: usize,
    paths: usize,
    seed: u32,
) -> Result<String, String> {
    let density = density(family, d, param)?;
    let params = OracleParams::new(d, shape(kind, k)?, ell, list(grid)?, McSettings::new(samples, seed.into()));
    let cov = match family {
        "power" => covariance_l(&params, param),
        _ => covariance_m(&params, density.a_limit().map_err(|e| e.to_string())?, None),
    }
    .map_err(|e| e.to_string())?;
    let mut out = cov.to_csv();
    out.push_str("path,t,value\n");
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed) + 1);
    for (i, p) in sample_limit_paths(&cov, paths, &mut rng).map_err(|e| e.to_string())?.iter().enumerate() {
        for (t, v) in cov.t_grid.iter().zip(p) {
            out.push_str(&format!("{i},{t},{v}\n"));
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub fn radii(family: &str, d: usize, param: f64, ns: &str, max_order: usize) -> Result<String, JsValue> {
    radii_csv(family, d, param, ns, max_order).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn curves(
    family: &str,
    d: usize,
    param: f64,
    n: f64,
    r: f64,
    kind: &str,
    k: usize,
    grid: &str,
    seed: u32,
) -> Result<String, JsValue> {
    curves_csv(family, d, param, n, r, kind, k, grid, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn limit(
    family: &str,
    d: usize,
    param: f64,
    kind: &str,
    k: usize,
    ell: usize,
    grid: &str,
    samples: usize,
    paths: usize,
    seed: u32,
) -> Result<String, JsValue> {
    limit_csv(family, d, param, kind, k, ell, grid, samples, paths, seed).map_err(|e| JsValue::from_str(&e))
}
