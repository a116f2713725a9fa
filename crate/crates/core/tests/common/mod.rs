//! Seeded instances shared by the property tests and the acceptance run.
#![allow(dead_code)]

use std::sync::Arc;

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kedmd::dynamics::{FlowMap, VectorField};
use kedmd::interpolation::{
    assemble_matrix, interpolate, project, CenterSet, Interpolant, KernelFactorization,
};
use kedmd::koopman::{FlowSamples, KoopmanModel};
use kedmd::wendland::WendlandKernel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points in `[lo, hi]^d` with pairwise distance at least `min_sep`
/// (fewer if the box fills up).
pub fn random_points(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    lo: f64,
    hi: f64,
    min_sep: f64,
) -> Vec<f64> {
    let mut pts: Vec<f64> = Vec::with_capacity(n * d);
    let mut attempts = 0;
    while pts.len() < n * d && attempts < 100 * n {
        attempts += 1;
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(lo..hi)).collect();
        let far = pts.chunks_exact(d).all(|q| {
            q.iter()
                .zip(&p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= min_sep
        });
        if far {
            pts.extend(p);
        }
    }
    pts
}

pub fn centers(d: usize, coords: Vec<f64>) -> Arc<CenterSet> {
    Arc::new(CenterSet::new(d, coords).unwrap())
}

/// A smooth test function with seed-dependent frequencies.
pub fn smooth_fn(rng: &mut ChaCha8Rng, d: usize) -> impl Fn(&[f64]) -> f64 {
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let c: f64 = rng.gen_range(-1.0..1.0);
    move |x: &[f64]| {
        let t: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        t.sin() + c * x[0] * x[x.len() - 1] + 0.5
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn quad_form(k: &Mat<f64>, a: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[i] * k[(i, j)] * a[j];
        }
    }
    s
}

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Exactness, symmetry, SPD, reconstruction, idempotence, norm identity and
/// best approximation on one random instance.
pub fn interpolation_instance(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let d = rng.gen_range(1..=3);
    let k = rng.gen_range(1..=3);
    let scale = rng.gen_range(0.5..2.0);
    let n = rng.gen_range(2..=30);
    let coords = random_points(&mut rng, n, d, 0.0, 1.0, 0.05 * scale);
    let x = centers(d, coords);
    let kernel = WendlandKernel::with_scale(d, k, scale).map_err(|e| e.to_string())?;
    let tag = format!("seed {seed} (d = {d}, k = {k}, N = {})", x.len());

    let kxx = assemble_matrix(&kernel, &x, &x).map_err(|e| e.to_string())?;
    for i in 0..x.len() {
        for j in 0..x.len() {
            check!(kxx[(i, j)] == kxx[(j, i)], "{tag}: matrix not symmetric");
        }
    }

    let fact = Arc::new(
        KernelFactorization::new(kernel.clone(), Arc::clone(&x)).map_err(|e| e.to_string())?,
    );
    check!(
        fact.jitter_used() == 0.0,
        "{tag}: jitter {} needed",
        fact.jitter_used()
    );
    let l = fact
        .lower_factor()
        .ok_or("expected a single envelope factor")?;
    let order = fact.ordering().unwrap();
    let mut err = 0.0;
    let mut norm = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            let llt: f64 = (0..x.len()).map(|t| l[(i, t)] * l[(j, t)]).sum();
            let kij = kxx[(order[i], order[j])];
            err += (llt - kij).powi(2);
            norm += kij * kij;
        }
    }
    check!(
        err.sqrt() <= 1e-10 * norm.sqrt(),
        "{tag}: reconstruction error {}",
        err.sqrt()
    );

    // exactness and residual
    let values: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let interp = interpolate(&fact, values.clone()).map_err(|e| e.to_string())?;
    let at_x = interp.evaluate(&x).map_err(|e| e.to_string())?;
    let vmax = max_abs(&values);
    for (a, b) in at_x.iter().zip(&values) {
        check!(
            (a - b).abs() < 1e-8 * (1.0 + vmax),
            "{tag}: not interpolating ({a} vs {b})"
        );
    }
    let alpha = interp.alpha();
    for i in 0..x.len() {
        let r: f64 = (0..x.len()).map(|j| kxx[(i, j)] * alpha[j]).sum::<f64>() - values[i];
        check!(r.abs() < 1e-8 * vmax, "{tag}: residual {r}");
    }

    // norm identity
    let nn = interp.native_norm_sq();
    let q = quad_form(&kxx, alpha);
    check!(
        (nn - q).abs() <= 1e-8 * q.abs().max(1e-300),
        "{tag}: norm {nn} vs {q}"
    );

    // idempotence
    let f = smooth_fn(&mut rng, d);
    let p1 = project(&fact, |p| Ok(f(p))).map_err(|e| e.to_string())?;
    let p2 = project(&fact, |p| p1.evaluate_at(p)).map_err(|e| e.to_string())?;
    let amax = max_abs(p1.alpha());
    for (a, b) in p1.alpha().iter().zip(p2.alpha()) {
        check!(
            (a - b).abs() <= 1e-8 * amax.max(1.0),
            "{tag}: projection not idempotent"
        );
    }

    best_approximation(&mut rng, &kernel, &x, &fact, &tag)
}

fn best_approximation(
    rng: &mut ChaCha8Rng,
    kernel: &WendlandKernel,
    x: &Arc<CenterSet>,
    fact: &Arc<KernelFactorization>,
    tag: &str,
) -> Result<(), String> {
    let d = x.dim();
    let n = x.len();
    // extra centers W, kept apart from X
    let mut all = x.coords().to_vec();
    let mut added = 0;
    let mut attempts = 0;
    while added < 5 && attempts < 1000 {
        attempts += 1;
        let p: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let far = all.chunks_exact(d).all(|q| {
            q.iter()
                .zip(&p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= 0.05 * kernel.scale()
        });
        if far {
            all.extend(p);
            added += 1;
        }
    }
    let xw = centers(d, all);
    let m = xw.len();
    let kk = assemble_matrix(kernel, &xw, &xw).map_err(|e| e.to_string())?;
    let beta: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    // values of f at X
    let f_x: Vec<f64> = (0..n)
        .map(|i| (0..m).map(|j| kk[(i, j)] * beta[j]).sum())
        .collect();
    let sx = interpolate(fact, f_x).map_err(|e| e.to_string())?;
    let diff_norm = |gamma: &[f64]| {
        let mut c = beta.clone();
        for (ci, g) in c.iter_mut().zip(gamma) {
            *ci -= g;
        }
        quad_form(&kk, &c)
    };
    let best = diff_norm(sx.alpha());
    let f_norm = quad_form(&kk, &beta);
    for _ in 0..20 {
        let gamma: Vec<f64> = sx
            .alpha()
            .iter()
            .map(|a| a + rng.gen_range(-1.0..1.0))
            .collect();
        let other = diff_norm(&gamma);
        check!(
            best <= other + 1e-8 * (1.0 + f_norm),
            "{tag}: S_X f not the best approximation ({best} > {other})"
        );
    }
    Ok(())
}

/// Coefficient equality of the two approximants when `A(X)` is contained in
/// `Y`, and interpolation of `f o A` at the centers.
pub fn inclusion_instance(seed: u64) -> Result<(), String> {
    let mut rng = rng(seed);
    let d = 2;
    let kernel = WendlandKernel::new(d, 1).unwrap();
    let n = rng.gen_range(5..=50);
    let x = centers(d, random_points(&mut rng, n, d, -1.0, 1.0, 0.05));
    let map = FlowMap::new(VectorField::Duffing, 0.02, 4).unwrap();
    let samples = FlowSamples::from_flow(Arc::clone(&x), &map).map_err(|e| e.to_string())?;
    let tag = format!("seed {seed} (N = {})", x.len());

    // Y = A(X) plus extra points, shuffled
    let mut y_pts: Vec<Vec<f64>> = samples
        .images()
        .chunks_exact(d)
        .map(<[f64]>::to_vec)
        .collect();
    let extra = random_points(&mut rng, 10, d, -1.2, 1.2, 0.05);
    for p in extra.chunks_exact(d) {
        let far = y_pts.iter().all(|q| {
            q.iter()
                .zip(p)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                >= 0.02
        });
        if far {
            y_pts.push(p.to_vec());
        }
    }
    for i in (1..y_pts.len()).rev() {
        let j = rng.gen_range(0..=i);
        y_pts.swap(i, j);
    }
    let y = Arc::new(CenterSet::from_rows(&y_pts).map_err(|e| e.to_string())?);
    let fact_y = Arc::new(
        KernelFactorization::new(kernel.clone(), Arc::clone(&y)).map_err(|e| e.to_string())?,
    );
    let model = KoopmanModel::build(kernel, samples)
        .and_then(|m| m.with_y(fact_y))
        .map_err(|e| e.to_string())?;

    let f = smooth_fn(&mut rng, d);
    let f_a: Vec<f64> = model.samples().images().chunks_exact(d).map(&f).collect();
    let f_y: Vec<f64> = y.points().map(&f).collect();
    let a = model
        .apply_from_flow_values(&f_a)
        .map_err(|e| e.to_string())?;
    let b = model.apply_from_y_values(&f_y).map_err(|e| e.to_string())?;
    let scale = max_abs(&a.alpha);
    for (u, v) in a.alpha.iter().zip(&b.alpha) {
        check!(
            (u - v).abs() <= 1e-7 * scale,
            "{tag}: coefficients differ ({u} vs {v})"
        );
    }
    let at_x = model.predict(&a, &x).map_err(|e| e.to_string())?;
    for (p, t) in at_x.iter().zip(&f_a) {
        check!(
            (p - t).abs() <= 1e-8,
            "{tag}: prediction {p} does not interpolate {t}"
        );
    }
    Ok(())
}

pub fn interpolant_values(i: &Interpolant) -> Vec<f64> {
    i.values().to_vec()
}
