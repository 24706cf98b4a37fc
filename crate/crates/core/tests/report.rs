mod common;

use common::planted;
use ovsens::report::{Cell, Format, Metadata, Report, Section, SensitivityRow, BENCHMARK_COLUMNS};
use ovsens::{benchmark_candidates, benchmark_included, fit_wls, sensitivity_interval, SensitivityZone};

fn analysis_report() -> Report {
    let pl = planted(77, 150, 4, 2, true);
    let fit = fit_wls(&pl.data, &pl.spec).unwrap();
    let mut table = benchmark_included(&pl.data, &pl.spec).unwrap();
    table
        .entries
        .extend(benchmark_candidates(&pl.data, &pl.spec, &["w".into()]).unwrap().entries);
    let (b, se) = (fit.treatment_coef().unwrap(), fit.treatment_se().unwrap());
    let rows: Vec<SensitivityRow<f64>> = [(1.3, 0.01), (2.7, 0.1), (2.7, 1.0), (0.4, 0.5)]
        .iter()
        .map(|&(t, r)| {
            let zone = SensitivityZone::new(t, r);
            SensitivityRow {
                label: format!("T={t}"),
                t_bound: t,
                r_bound: r,
                k: 1,
                estimate: b,
                se,
                interval: sensitivity_interval(b, se, fit.df, 1.98, &zone).unwrap(),
            }
        })
        .collect();
    let mut rep = Report::new(Metadata::new("test"));
    rep.push(Section::fit("fit", "Fit", &fit));
    rep.push(Section::benchmark("benchmark", "Benchmarks", &table));
    rep.push(Section::sensitivity("sensitivity", "Intervals", &rows));
    rep
}

#[test]
fn json_round_trip_preserves_every_number_bit_for_bit() {
    let rep = analysis_report();
    let back = Report::from_json(&rep.to_json().unwrap()).unwrap();
    assert_eq!(back.sections.len(), rep.sections.len());
    for (a, b) in rep.sections.iter().zip(&back.sections) {
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (ca, cb) in ra.iter().zip(rb) {
                match (ca, cb) {
                    (Cell::Num(x), Cell::Num(y)) => assert_eq!(x.to_bits(), y.to_bits()),
                    _ => assert_eq!(ca, cb),
                }
            }
        }
    }
    assert_eq!(back, rep);
}

#[test]
fn json_carries_schema_version_and_metadata() {
    let v: serde_json::Value = serde_json::from_str(&analysis_report().to_json().unwrap()).unwrap();
    assert_eq!(v["schema_version"], "1.0");
    assert_eq!(v["metadata"]["tool"], "ovsens");
    assert!(v["metadata"]["timestamp"].is_null());
    assert_eq!(v["sections"].as_array().unwrap().len(), 3);
}

#[test]
fn csv_has_one_file_per_section_and_documented_benchmark_header() {
    let files = analysis_report().render(Format::Csv).unwrap();
    let names: Vec<&str> = files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["fit.csv", "benchmark.csv", "sensitivity.csv"]);
    let text = String::from_utf8(files[1].bytes.clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), BENCHMARK_COLUMNS.join(","));
    assert_eq!(text.lines().next().unwrap(), "name,k,t_w,f_w,rho_sq,role");
}

#[test]
fn csv_numbers_parse_back_exactly() {
    let rep = analysis_report();
    let files = rep.render(Format::Csv).unwrap();
    let sens = rep.section("sensitivity").unwrap();
    let mut rdr = csv::Reader::from_reader(&files[2].bytes[..]);
    for (row, rec) in sens.rows.iter().zip(rdr.records()) {
        let rec = rec.unwrap();
        for (cell, field) in row.iter().zip(rec.iter()) {
            if let Cell::Num(x) = cell {
                assert_eq!(field.parse::<f64>().unwrap().to_bits(), x.to_bits());
            }
        }
    }
}

#[test]
fn text_output_is_aligned_tables() {
    let out = String::from_utf8(analysis_report().render(Format::Text).unwrap().remove(0).bytes).unwrap();
    assert!(out.contains("Benchmarks\nname"));
    assert!(!out.contains("-0.00 "));
    let sens: Vec<&str> = out.split("Intervals\n").nth(1).unwrap().lines().take(5).collect();
    let at = sens[0].find("regime").unwrap();
    for l in &sens[1..] {
        assert_eq!(l.rfind("  ").unwrap() + 2, at, "{l}");
    }
}

#[test]
fn unknown_format_and_empty_report() {
    assert!("xml".parse::<Format>().is_err());
    let empty = Report::new(Metadata::new("none"));
    let v: serde_json::Value = serde_json::from_str(&empty.to_json().unwrap()).unwrap();
    assert_eq!(v["sections"], serde_json::json!([]));
}
