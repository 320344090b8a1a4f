use std::collections::BTreeMap;
use std::path::Path;

use qbreak_core::scan::{run_scan, ScanConfig};
use qbreak_core::Error;
use sha2::{Digest, Sha256};

const SMALL: &str = r#"
model = "npm"
[params]
N = 10
Q = 2
C = 4
Cm = 0.02
[sweep]
variable = "lambda"
values = [1.2, 1.4, 1.6, 1.8]
[propagation]
t_max = 6.0
t_step = 0.02
[fit]
forms = ["power", "log"]
"#;

fn config(text: &str, dir: &Path, extra: &[&str]) -> ScanConfig {
    let mut o = vec![format!("output.dir={:?}", dir.display().to_string())];
    o.extend(extra.iter().map(|s| s.to_string()));
    ScanConfig::from_toml_with_overrides(text, &o).unwrap()
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn scans_are_reproducible_and_hashed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ra = run_scan(&config(SMALL, &a, &[])).unwrap();
    run_scan(&config(SMALL, &b, &["run.workers=2"])).unwrap();

    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (name, bytes) in &ta {
        if name == "timings.json" || name == "manifest.json" {
            continue;
        }
        assert!(bytes == &tb[name], "{name} differs between runs");
    }

    for f in &ra.manifest.files {
        let digest = hex::encode(Sha256::digest(&ta[&f.path]));
        assert_eq!(digest, f.sha256, "{}", f.path);
    }
    assert!(ra.manifest.files.iter().all(|f| f.path != "timings.json"));
    assert!(ta.contains_key("plotdata_power.csv") && ta.contains_key("fits.json"));
    assert!(ra.fits.fits.iter().all(|f| f.report.is_some()));
}

#[test]
fn lambda_sweep_sets_alpha() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(SMALL, tmp.path(), &["params.N=37"]);
    for (p, l) in cfg.points().unwrap().iter().zip([1.2, 1.4, 1.6, 1.8]) {
        assert!((p.alpha * 37.0 - l).abs() <= 1e-15);
    }
}

#[test]
fn single_value_sweep_skips_fits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(SMALL, tmp.path(), &["sweep.values=[1.5]"]);
    let r = run_scan(&cfg).unwrap();
    assert!(r.fits.fits.is_empty());
    assert!(r.fits.notice.is_some());
    assert_eq!(r.points.len(), 1);
    assert!(r.breaktimes[0].as_ref().unwrap().t_q.is_some());
}

#[test]
fn free_sweep_reports_undefined_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        SMALL,
        tmp.path(),
        &[
            "params.alpha=0.0",
            "sweep.variable=\"Cm\"",
            "sweep.values=[0.0]",
        ],
    );
    let err = run_scan(&cfg).unwrap_err();
    assert!(matches!(err, Error::ThresholdUndefined { .. }), "{err}");
    let text = std::fs::read_to_string(tmp.path().join("point_0/trace.csv")).unwrap();
    for line in text.lines().skip(1) {
        assert!(line.split(',').nth(1) == Some("10"), "{line}");
    }
    assert!(tmp.path().join("manifest.json").exists());
}
