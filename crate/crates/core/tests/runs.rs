use orscale_core::harness::{
    csv_bytes, load_csv, preset, run_bundle, summary_from_rows, write_summary, ModelSpec,
    PRESET_NAMES,
};
use orscale_core::{run, HarnessError, HyperParams, Method, NoiseModel, RunConfig, Variant};

fn small(variant: Variant) -> RunConfig {
    RunConfig::new(
        "small",
        variant,
        ModelSpec::HeteroQuadratic {
            shapes: vec![(5, 3), (2, 6)],
            smoothness: vec![1.0, 4.0],
            target_std: 1.0,
            init_std: vec![1.0, 0.5],
        },
    )
    .with_steps(40)
    .with_seed(21)
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    let cfg = small(Variant::OrScaleLm).with_noise(NoiseModel::uniform(2, 0.2, 4));
    cfg.save(&path).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(
        csv_bytes(&run(&back).unwrap()).unwrap(),
        csv_bytes(&run(&cfg).unwrap()).unwrap()
    );
}

#[test]
fn unknown_keys_are_rejected() {
    let mut text = small(Variant::OrScale).to_toml().unwrap();
    text.insert_str(0, "bogus = 3\n");
    assert!(RunConfig::from_toml(&text).is_err());
}

#[test]
fn every_preset_validates() {
    for name in PRESET_NAMES {
        let bundle = preset(name).unwrap();
        assert!(!bundle.description.is_empty(), "{name}");
        assert!(!bundle.runs.is_empty() || name == "descent", "{name}");
        for cfg in &bundle.runs {
            cfg.validate().unwrap();
        }
    }
    assert!(matches!(
        preset("nope"),
        Err(HarnessError::UnknownPreset(_))
    ));
}

#[test]
fn bundle_summary_matches_csv_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let configs: Vec<RunConfig> = [Variant::OrScale, Variant::OrScaleLm, Variant::MuTrust]
        .into_iter()
        .map(|v| {
            let mut c = small(v);
            c.id = format!("run_{}", v.name());
            c
        })
        .collect();
    let traces = run_bundle(&configs, dir.path()).unwrap();
    assert_eq!(traces.len(), 3);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let rebuilt: Vec<_> = configs
        .iter()
        .map(|cfg| {
            let rows = load_csv(&dir.path().join(format!("{}.csv", cfg.id))).unwrap();
            summary_from_rows(&cfg.id, cfg.method.name(), &rows)
        })
        .collect();
    let mut text = Vec::new();
    write_summary(&rebuilt, &mut text).unwrap();
    assert_eq!(String::from_utf8(text).unwrap(), summary);
}

#[test]
fn bundle_output_is_schedule_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let configs = preset("width").unwrap().runs;
    run_bundle(&configs, a.path()).unwrap();
    let reversed: Vec<RunConfig> = configs.iter().rev().cloned().collect();
    run_bundle(&reversed, b.path()).unwrap();
    for cfg in &configs {
        let f = format!("{}.csv", cfg.id);
        assert_eq!(
            std::fs::read(a.path().join(&f)).unwrap(),
            std::fs::read(b.path().join(&f)).unwrap()
        );
    }
}

#[test]
fn every_method_reduces_the_loss() {
    for method in [
        Method::Variant(Variant::Muon),
        Method::Variant(Variant::MuonMoonlight),
        Method::Variant(Variant::OrScale),
        Method::Variant(Variant::OrScaleLm),
        Method::AdamW,
        Method::Lamb,
    ] {
        let mut cfg = small(Variant::OrScale).with_hyper(HyperParams {
            eta: 0.01,
            ..HyperParams::orscale()
        });
        cfg.method = method;
        let t = run(&cfg).unwrap();
        assert!(t.final_loss < t.logs[0].loss, "{method:?}");
    }
}
