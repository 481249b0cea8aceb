use mvsde::model::preset_linear;
use mvsde::scheme::{simulate_paths, SchemeConfig, SchemeKind};

// The linear preset's mean solves m' = -2.5 m with m(0) = 2.
#[test]
fn linear_mean_follows_its_ode() {
    let cfg = SchemeConfig { scheme: SchemeKind::Em, dt: 1e-3, steps: 1000, n: 1000, paths: 100, seed: 7, ..SchemeConfig::default() };
    let ens = simulate_paths(&preset_linear(), &cfg).unwrap();
    assert!(!ens.any_diverged());
    let last = ens.common_len() - 1;
    let means: Vec<f64> = ens.paths.iter().map(|p| p.mean[last]).collect();
    let k = means.len() as f64;
    let avg = means.iter().sum::<f64>() / k;
    let se = (means.iter().map(|m| (m - avg).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
    let exact = 2.0 * (-2.5f64).exp();
    assert!((avg - exact).abs() <= 3.0 * se, "{avg} vs {exact} (se {se})");
}
