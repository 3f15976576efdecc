use genotok::benchstats::shapiro_wilk;
use serde::Deserialize;

#[derive(Deserialize)]
struct Case {
    kind: String,
    x: Vec<f64>,
    w: f64,
    p: f64,
}

#[derive(Deserialize)]
struct Fixture {
    cases: Vec<Case>,
}

fn load() -> Vec<(String, Vec<f64>, f64, f64)> {
    let raw = include_str!("fixtures/swilk_reference.json");
    let f: Fixture = serde_json::from_str(raw).unwrap();
    f.cases.into_iter().map(|c| (c.kind, c.x, c.w, c.p)).collect()
}

#[test]
fn matches_scipy_reference() {
    let cases = load();
    assert_eq!(cases.len(), 100);
    let mut worst = (0.0f64, 0.0f64);
    for (i, (kind, x, w, p)) in cases.iter().enumerate() {
        let r = shapiro_wilk(x).unwrap();
        let (dw, dp) = ((r.w - w).abs(), (r.p - p).abs());
        worst = (worst.0.max(dw), worst.1.max(dp));
        assert!(dw < 1e-4 && dp < 1e-4, "case {i} ({kind}, n={}): {r:?} vs w={w} p={p}", x.len());
    }
    eprintln!("max |dW| = {:.2e}, max |dp| = {:.2e}", worst.0, worst.1);
}
