use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::process::{Command, Output};

use gravimetric::datamodel::{Money, TariffLine};
use gravimetric::ingest::{read_attributes, write_attributes, write_trade_flows};
use gravimetric::synth::{files, generate_bundle, write_bundle, SynthConfig};

fn gm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gravimetric"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_into(dir: &Path) {
    write_bundle(&generate_bundle(&SynthConfig::default()).unwrap(), dir).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// `metric -> value` for one sector of an impact CSV.
fn impact_rows(path: &Path, sector: &str) -> Vec<(String, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap())
        .filter(|rec| &rec[0] == sector)
        .map(|rec| (rec[1].to_owned(), rec[2].parse().unwrap()))
        .collect()
}

#[test]
fn validate_synthetic_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let o = gm(&["validate", "--data", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!o.stdout.is_empty());
}

#[test]
fn synth_command_is_seeded() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let o = gm(&["synth", "--seed", seed, "--reproducible", "--out", p(dir)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &Path| fs::read(d.join(files::FLOWS)).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn malformed_flows_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let flows = tmp.path().join(files::FLOWS);
    let mut text = fs::read_to_string(&flows).unwrap();
    text.push_str("2016,DE,12AB5678,100.00,\n");
    fs::write(&flows, text).unwrap();
    let o = gm(&["validate", "--data", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("12AB5678"), "{}", stderr(&o));
}

#[test]
fn missing_file_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gm(&["validate", "--data", p(tmp.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(files::FLOWS), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exit_2() {
    let o = gm(&["estimate", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn estimate_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let out = tmp.path().join("out");
    synth_into(&data);
    let o = gm(&["estimate", "--data", p(&data), "--sector", "Agriculture", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("coefficients_Agriculture.csv")).unwrap();
    assert!(table.starts_with("name,estimate,robust_se,cv,significant_at_1pct"));
    assert!(table.contains("\ngb,"));
    assert!(out.join("fit_Agriculture.json").exists());
    assert!(out.join("manifest.json").exists());
}

#[test]
fn all_zero_flows_under_ols_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = generate_bundle(&SynthConfig::default()).unwrap();
    for f in &mut bundle.flows {
        f.value = Money::ZERO;
    }
    write_bundle(&bundle, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let o = gm(&["estimate", "--estimator", "ols", "--sector", "AllSectors", "--data", p(tmp.path()), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("AllZeroResponse"), "{}", stderr(&o));
}

#[test]
fn near_singular_nbpml_exit_4_with_coefficients() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let attrs_path = tmp.path().join(files::ATTRS);
    let mut attrs = read_attributes(&attrs_path).unwrap();
    for (i, a) in attrs.iter_mut().enumerate() {
        let u = ((i * 7919) % 1000) as f64 / 1000.0 - 0.5;
        a.population = a.gdp * (1.0 + 1e-7 * u);
    }
    write_attributes(BufWriter::new(fs::File::create(&attrs_path).unwrap()), &attrs).unwrap();
    let spec = tmp.path().join("collinear.toml");
    fs::write(&spec, "continuous_terms = [\"gdp\", \"population\", \"distance\"]\n").unwrap();
    let out = tmp.path().join("out");
    let o = gm(&[
        "estimate", "--estimator", "nbpml", "--sector", "AllSectors", "--spec", p(&spec), "--data",
        p(tmp.path()), "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("HessianNotPositiveDefinite"), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("coefficients_AllSectors.csv")).unwrap();
    assert!(table.contains("\nlog_population,"));
}

#[test]
fn zero_tariff_hard_scenario_has_no_effect() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = generate_bundle(&SynthConfig::default()).unwrap();
    bundle.tariffs = bundle
        .tariffs
        .iter()
        .map(|t| TariffLine {
            rate: 0.0,
            ..t.clone()
        })
        .collect();
    write_bundle(&bundle, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let o = gm(&[
        "scenario", "--kind", "hard", "--gni", "181", "--sector", "AllSectors", "--data", p(tmp.path()),
        "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = impact_rows(&out.join("impact.csv"), "AllSectors");
    let get = |m: &str| rows.iter().find(|(k, _)| k == m).map(|(_, v)| *v).unwrap();
    for m in ["gb_relative_impact_pct", "ni_relative_impact_pct", "eu28_value_impact_pct", "gni_star_change_pct"] {
        assert!(get(m).abs() < 1e-9, "{m} = {}", get(m));
    }
    assert_eq!(get("gni_star_adjusted_bn"), 181.0);
    assert!(out.join("summary.md").exists());
    assert!(out.join("hard").join("fit_AllSectors.json").exists());
}

#[test]
fn hard_scenario_gni_block_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = generate_bundle(&SynthConfig::default()).unwrap();
    bundle.tariffs = bundle
        .tariffs
        .iter()
        .map(|t| TariffLine {
            rate: 0.1,
            ..t.clone()
        })
        .collect();
    write_bundle(&bundle, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let o = gm(&[
        "scenario", "--kind", "hard", "--gni", "181", "--sector", "AllSectors", "--data", p(tmp.path()),
        "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = impact_rows(&out.join("impact.csv"), "AllSectors");
    let get = |m: &str| rows.iter().find(|(k, _)| k == m).map(|(_, v)| *v).unwrap();
    let (soft, hard) = (get("exports_soft_bn"), get("exports_scenario_bn"));
    assert!(hard < soft);
    let adjusted = 181.0 - (soft - hard);
    assert!((get("gni_star_adjusted_bn") - adjusted).abs() < 1e-12);
    assert!((get("gni_star_change_pct") - (adjusted - 181.0) / 181.0 * 100.0).abs() < 1e-12);
    assert!(get("eu28_value_impact_pct") < 0.0);
}

#[test]
fn ill_formed_tariff_rate_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = generate_bundle(&SynthConfig::default()).unwrap();
    bundle.tariffs[0].rate = 1.5;
    write_bundle(&bundle, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let o = gm(&["scenario", "--kind", "hard", "--data", p(tmp.path()), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn remoteness_command_writes_series() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let out = tmp.path().join("r.csv");
    let o = gm(&["remoteness", "--data", p(tmp.path()), "--exporter", "IE", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert!(tmp.path().join("r.manifest.json").exists());
}

#[test]
fn flows_written_by_library_round_trip_through_cli() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let flows = gravimetric::ingest::read_trade_flows(&tmp.path().join(files::FLOWS)).unwrap();
    let mut buf = Vec::new();
    write_trade_flows(&mut buf, &flows).unwrap();
    assert_eq!(buf, fs::read(tmp.path().join(files::FLOWS)).unwrap());
}

#[test]
fn soft_scenario_is_a_reparametrization() {
    let tmp = tempfile::tempdir().unwrap();
    synth_into(tmp.path());
    let out = tmp.path().join("out");
    let o = gm(&["scenario", "--kind", "soft", "--sector", "AllSectors", "--data", p(tmp.path()), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = impact_rows(&out.join("impact.csv"), "AllSectors");
    let get = |m: &str| rows.iter().find(|(k, _)| k == m).map(|(_, v)| *v).unwrap();
    assert_eq!(get("eu28_value_impact_pct"), 0.0);
    let eu = get("eu_coef_baseline");
    assert!((get("gb_coef_shift_vs_baseline") - eu).abs() < 1e-6);
    assert!((get("ni_coef_shift_vs_baseline") - eu).abs() < 1e-6);
}

/// Rescales the synthetic flows to EUR 115.5 bn and sets one tariff rate so
/// that the hard scenario removes EUR 0.8 bn.
#[test]
fn gni_block_prints_adjusted_value() {
    let tmp = tempfile::tempdir().unwrap();
    let mut bundle = generate_bundle(&SynthConfig::default()).unwrap();
    let is_uk = |d: &str| d == "GB" || d == "XI";
    let part = |b: &gravimetric::ingest::Bundle, uk: bool| -> f64 {
        b.flows.iter().filter(|f| is_uk(&f.destination) == uk).map(|f| f.value.cents() as f64).sum()
    };
    // lift the UK share to about a tenth
    let k = part(&bundle, false) / (9.0 * part(&bundle, true));
    for f in bundle.flows.iter_mut().filter(|f| is_uk(&f.destination)) {
        f.value = Money((f.value.cents() as f64 * k).round() as i64);
    }
    let total: i64 = bundle.flows.iter().map(|f| f.value.cents()).sum();
    let target: i64 = 11_550_000_000_000;
    let factor = target as f64 / total as f64;
    for f in &mut bundle.flows {
        f.value = Money((f.value.cents() as f64 * factor).round() as i64);
    }
    let drift = target - bundle.flows.iter().map(|f| f.value.cents()).sum::<i64>();
    let other = bundle.flows.iter_mut().find(|f| !is_uk(&f.destination)).unwrap();
    other.value = Money(other.value.cents() + drift);
    let rate = 80_000_000_000.0 / part(&bundle, true);
    assert!(rate < 1.0, "UK share too small for the construction");
    bundle.tariffs = bundle
        .tariffs
        .iter()
        .map(|t| TariffLine {
            rate,
            ..t.clone()
        })
        .collect();
    write_bundle(&bundle, tmp.path()).unwrap();
    let out = tmp.path().join("out");
    let o = gm(&[
        "scenario", "--kind", "hard", "--gni", "181.0", "--sector", "AllSectors", "--data", p(tmp.path()),
        "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let md = fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(md.contains("| 181.0 | 115.5 | 114.7 | 180.2 | -0.4 |"), "{md}");
}
