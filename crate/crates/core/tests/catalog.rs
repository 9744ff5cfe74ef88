use std::collections::BTreeSet;
use std::fs;

use geocard_core::card::Role;
use geocard_core::catalog::{Catalog, CatalogError, Severity};
use geocard_core::engine::{EvaluationRequest, EvaluationTrace};
use proptest::prelude::*;

const CATEGORY: &str = "Shallow Foundations - Bearing Capacity";

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        ((a - b) / b).abs()
    }
}

fn eval(catalog: &Catalog, req: EvaluationRequest) -> EvaluationTrace {
    catalog.evaluate(&req).unwrap_or_else(|e| panic!("{e}"))
}

#[test]
fn bundled_cards_load_cleanly() {
    let catalog = Catalog::bundled();
    assert!(catalog.diagnostics().is_empty(), "{:?}", catalog.diagnostics());
    let ids: Vec<_> = catalog.list_methods(None).into_iter().map(|m| m.id).collect();
    assert_eq!(
        ids,
        [
            "BEARING_CAPACITY_EUROCODE7",
            "BEARING_CAPACITY_MEYERHOF",
            "BEARING_CAPACITY_TERZAGHI",
            "BEARING_CAPACITY_VESIC"
        ]
    );
    assert_eq!(catalog.list_methods(Some(CATEGORY)).len(), 4);
    assert!(catalog.list_methods(Some("Nonexistent")).is_empty());
    for id in &ids {
        let card = catalog.get_method(id).unwrap();
        assert!(!card.sources.is_empty(), "{id}");
        let reloaded = geocard_core::card::load_card(&card.to_json_pretty()).unwrap();
        assert_eq!(&reloaded, card);
    }
}

#[test]
fn get_method() {
    let catalog = Catalog::bundled();
    let terzaghi = catalog.get_method("BEARING_CAPACITY_TERZAGHI").unwrap();
    assert!(terzaghi
        .sources
        .iter()
        .any(|s| s.title.starts_with("Terzaghi, K. (1943). Theoretical Soil Mechanics")));
    let ec7 = catalog.get_method("BEARING_CAPACITY_EUROCODE7").unwrap();
    assert!(ec7.variant("drained").is_some() && ec7.variant("undrained").is_some());
    assert!(matches!(catalog.get_method("NOPE"), Err(CatalogError::UnknownMethod(id)) if id == "NOPE"));
}

#[test]
fn every_variant_traces_every_intermediate_and_output() {
    let catalog = Catalog::bundled();
    for summary in catalog.list_methods(None) {
        let card = catalog.get_method(&summary.id).unwrap();
        for (vi, variant) in card.variants.iter().enumerate() {
            let mut req = EvaluationRequest::new(&card.id, &variant.id);
            for input in card.variant_inputs(vi) {
                let value = match input.unit.as_str() {
                    "radians" => 0.5,
                    "m" if input.key == "L" => 6.0,
                    _ => 1.5,
                };
                req = req.input(&input.key, value);
            }
            let trace = eval(&catalog, req);
            let traced: BTreeSet<&str> = trace.steps.iter().map(|s| s.target.as_str()).collect();
            let used = card.variant_symbols(vi);
            let expected: BTreeSet<&str> = card
                .variables
                .iter()
                .filter(|v| v.role != Role::Input && v.role != Role::Param && used.contains(&v.key))
                .map(|v| v.key.as_str())
                .collect();
            assert_eq!(traced, expected, "{}/{}", card.id, variant.id);
            assert_eq!(trace.steps.len(), traced.len(), "each target once");
        }
    }
}

fn terzaghi(variant: &str, phi_deg: f64) -> EvaluationRequest {
    EvaluationRequest::new("BEARING_CAPACITY_TERZAGHI", variant)
        .input("phi_prime", format!("{phi_deg} deg").as_str())
        .input("c_prime", "10 kPa")
        .input("gamma", "18 kN/m^3")
        .input("B", "2 m")
        .input("q", "18 kPa")
}

#[test]
fn terzaghi_square_and_circular_oracles() {
    // c' = 10, q = 18, gamma = 18, B = 2, phi' = 30 deg, hand-computed:
    // square   1.3 c Nc + q Nq + 0.4 gamma B Ng
    // circular 1.3 c Nc + q Nq + 0.3 gamma B Ng
    let catalog = Catalog::bundled();
    let sq = eval(&catalog, terzaghi("general_shear_failure_square", 30.0));
    assert!(rel(sq.output("q_ult").unwrap(), 1045.6311635304098) < 1e-12);
    let circ = eval(&catalog, terzaghi("general_shear_failure_circular", 30.0));
    assert!(rel(circ.output("q_ult").unwrap(), 964.9822129544334) < 1e-12);
}

#[test]
fn terzaghi_and_ec7_n_gamma_are_distinct_at_32_degrees() {
    // scalar oracle at exactly 32 deg: 2(Nq+1)tan32 and 2(Nq-1)tan32
    const TERZAGHI_NG_32: f64 = 30.214652959465663;
    const EC7_NG_32: f64 = 27.715175551828356;
    let catalog = Catalog::bundled();
    let t = eval(&catalog, terzaghi("general_shear_failure_strip", 32.0));
    let e = eval(
        &catalog,
        EvaluationRequest::new("BEARING_CAPACITY_EUROCODE7", "drained")
            .input("phi_prime", "32 deg")
            .input("c_prime", "0 kPa")
            .input("gamma", "18 kN/m^3")
            .input("q", "0 kPa")
            .input("B", "1.497 m")
            .input("L", "21.4 m"),
    );
    assert!(rel(t.value("N_gamma").unwrap(), TERZAGHI_NG_32) < 1e-12);
    assert!(rel(e.value("N_gamma").unwrap(), EC7_NG_32) < 1e-12);
    assert!(t.value("N_gamma").unwrap() - e.value("N_gamma").unwrap() > 2.0);
}

#[test]
fn ec7_drained_reproduces_design_factor_table() {
    // phi'_d = atan(tan 38 / 1.25) = 32.0066 deg, B = 1.497, L = 21.4
    let catalog = Catalog::bundled();
    let phi_d = (38f64.to_radians().tan() / 1.25).atan();
    let trace = eval(
        &catalog,
        EvaluationRequest::new("BEARING_CAPACITY_EUROCODE7", "drained")
            .input("phi_prime", phi_d)
            .input("c_prime", 0.0)
            .input("gamma", 8.68)
            .input("q", 0.0)
            .input("B", 1.497)
            .input("L", 21.4),
    );
    for (key, table, oracle) in [
        ("N_q", 23.19, 23.194626996533565),
        ("N_c", 35.51, 35.50978387982467),
        ("N_gamma", 27.74, 27.74454889291141),
        ("s_q", 1.037, 1.0370763752546441),
        ("s_gamma", 0.979, 0.9790140186915888),
        ("s_c", 1.039, 1.0387468865572416),
    ] {
        let v = trace.value(key).unwrap();
        assert!((v - table).abs() <= 0.005, "{key}: {v} vs {table}");
        assert!(rel(v, oracle) < 1e-12, "{key}");
    }
}

#[test]
fn ec7_undrained_oracle() {
    // (pi + 2) * 50 * (1 + 0.2 * 2/4) + 18
    let catalog = Catalog::bundled();
    let trace = eval(
        &catalog,
        EvaluationRequest::new("BEARING_CAPACITY_EUROCODE7", "undrained")
            .input("c_u", "50 kPa")
            .input("q", "18 kPa")
            .input("B", "2 m")
            .input("L", "4 m"),
    );
    assert!(rel(trace.output("q_ult").unwrap(), 300.7875959474386) < 1e-12);
}

fn embedded(id: &str, variant: &str, phi_deg: f64) -> EvaluationRequest {
    let mut req = EvaluationRequest::new(id, variant)
        .input("phi_prime", format!("{phi_deg} deg").as_str())
        .input("c_prime", "10 kPa")
        .input("gamma", "18 kN/m^3")
        .input("B", "2 m")
        .input("D_f", "1 m")
        .input("q", "18 kPa");
    if variant != "strip" {
        req = req.input("L", "4 m");
    }
    req
}

#[test]
fn meyerhof_factor_table_oracle() {
    // phi', N_q, N_c, N_gamma, q_ult strip, q_ult rectangular
    // for c' = 10, q = 18, gamma = 18, B = 2, L = 4, D_f = 1 (hand computation)
    let table = [
        (20.0, 6.399393521085211, 14.834711777931204, 2.870908460412888, 348.3141444696206, 401.12439923817027),
        (30.0, 18.401122218708668, 30.139627791519086, 15.668040821046283, 1019.953148507489, 1225.9860674693095),
        (40.0, 64.19520638896577, 75.31311424878254, 93.69074638938758, 4061.316553755809, 5205.5155011185725),
    ];
    let catalog = Catalog::bundled();
    for (phi, nq, nc, ng, strip, rect) in table {
        let s = eval(&catalog, embedded("BEARING_CAPACITY_MEYERHOF", "strip", phi));
        let r = eval(&catalog, embedded("BEARING_CAPACITY_MEYERHOF", "rectangular", phi));
        assert!(rel(s.value("N_q").unwrap(), nq) < 1e-12);
        assert!(rel(s.value("N_c").unwrap(), nc) < 1e-12);
        assert!(rel(s.value("N_gamma").unwrap(), ng) < 1e-12);
        assert!(rel(s.output("q_ult").unwrap(), strip) < 1e-12, "{phi}");
        assert!(rel(r.output("q_ult").unwrap(), rect) < 1e-12, "{phi}");
    }
    // below 10 degrees the q and gamma shape and depth factors drop to 1
    let low = eval(&catalog, embedded("BEARING_CAPACITY_MEYERHOF", "rectangular", 8.0));
    assert_eq!(low.value("s_q"), Some(1.0));
    assert_eq!(low.value("d_gamma"), Some(1.0));
}

#[test]
fn vesic_factor_table_oracle() {
    // phi', beta, N_gamma, q_ult strip, q_ult general
    // for c' = 10, q = 18, gamma = 18, B = 2, L = 4, D_f = 1 (hand computation)
    let table = [
        (20.0, 0.0, 5.386317986594408, 406.3463752237419, 449.1942906163133),
        (20.0, 10.0, 5.386317986594408, 406.3463752237419, 313.02536133197003),
        (30.0, 0.0, 22.402486271104557, 1129.6715541772326, 1264.4871197131213),
        (30.0, 10.0, 22.402486271104557, 1129.6715541772326, 887.586335767042),
        (40.0, 0.0, 109.41054727101564, 4083.6687350279954, 4582.379900613546),
        (40.0, 10.0, 109.41054727101564, 4083.6687350279954, 3262.022386898917),
    ];
    let catalog = Catalog::bundled();
    for (phi, beta, ng, strip, general) in table {
        let s = eval(&catalog, embedded("BEARING_CAPACITY_VESIC", "strip", phi));
        let g = eval(
            &catalog,
            embedded("BEARING_CAPACITY_VESIC", "general", phi).input("beta", format!("{beta} deg").as_str()),
        );
        assert!(rel(s.value("N_gamma").unwrap(), ng) < 1e-12);
        assert!(rel(s.output("q_ult").unwrap(), strip) < 1e-12, "{phi}");
        assert!(rel(g.output("q_ult").unwrap(), general) < 1e-12, "{phi} {beta}");
    }
    // deep footing switches the depth term to atan(D_f/B)
    let deep = eval(
        &catalog,
        embedded("BEARING_CAPACITY_VESIC", "strip", 30.0).input("D_f", "3 m"),
    );
    assert!(rel(deep.value("d_q").unwrap(), 1.28370811033736) < 1e-12);
}

#[test]
fn terzaghi_n_c_is_continuous_at_the_seam() {
    let catalog = Catalog::bundled();
    let trace = eval(
        &catalog,
        EvaluationRequest::new("BEARING_CAPACITY_TERZAGHI", "general_shear_failure_strip")
            .input("phi_prime", 1e-3)
            .input("c_prime", 0.0)
            .input("gamma", 18.0)
            .input("B", 1.0)
            .input("q", 0.0),
    );
    let nc = trace.value("N_c").unwrap();
    assert!((nc - 5.14).abs() < 0.02);
    assert!(rel(nc, 5.154832993451708) < 1e-9);
}

fn scalar_oracle(phi: f64) -> (f64, f64, f64) {
    let nq = (std::f64::consts::PI * phi.tan()).exp() * (std::f64::consts::FRAC_PI_4 + phi / 2.0).tan().powi(2);
    let nc = (nq - 1.0) / phi.tan();
    let ng = 2.0 * (nq + 1.0) * phi.tan();
    (nq, nc, ng)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn terzaghi_factors_match_scalar_oracle(phi_deg in 1.0f64..=45.0) {
        let catalog = Catalog::bundled();
        let phi = phi_deg.to_radians();
        let trace = catalog.evaluate(
            &EvaluationRequest::new("BEARING_CAPACITY_TERZAGHI", "general_shear_failure_strip")
                .input("phi_prime", phi)
                .input("c_prime", 5.0)
                .input("gamma", 18.0)
                .input("B", 1.5)
                .input("q", 10.0),
        ).unwrap();
        let (nq, nc, ng) = scalar_oracle(phi);
        prop_assert!(rel(trace.value("N_q").unwrap(), nq) < 1e-10);
        prop_assert!(rel(trace.value("N_c").unwrap(), nc) < 1e-10);
        prop_assert!(rel(trace.value("N_gamma").unwrap(), ng) < 1e-10);
    }
}

#[test]
fn user_directory_shadows_bundled_card() {
    let dir = tempfile::tempdir().unwrap();
    let card = Catalog::bundled().get_method("BEARING_CAPACITY_TERZAGHI").unwrap().clone();
    let mut json: serde_json::Value = serde_json::from_str(&card.to_json_pretty()).unwrap();
    json["title"] = "Locally patched Terzaghi".into();
    fs::write(dir.path().join("bearing_capacity_terzaghi.json"), json.to_string()).unwrap();
    fs::write(dir.path().join("broken.json"), "{\"id\": 3}").unwrap();

    let catalog = Catalog::load(&[dir.path().to_path_buf()], true);
    assert_eq!(catalog.len(), 4);
    assert_eq!(
        catalog.get_method("BEARING_CAPACITY_TERZAGHI").unwrap().title,
        "Locally patched Terzaghi"
    );
    let warnings: Vec<_> = catalog
        .diagnostics()
        .iter()
        .filter(|d| d.severity == Severity::Warning)
        .collect();
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].message.contains("shadowed"));
    assert!(catalog
        .diagnostics()
        .iter()
        .any(|d| d.severity == Severity::Error && d.source.ends_with("broken.json")));
}

#[test]
fn empty_user_directory_is_an_error_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let catalog = Catalog::load(&[dir.path().to_path_buf()], true);
    assert!(catalog.has_errors());
    assert_eq!(catalog.len(), 4);
    let only_user = Catalog::load(&[dir.path().to_path_buf()], false);
    assert!(only_user.is_empty());
}
