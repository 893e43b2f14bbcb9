// SPDX-License-Identifier: Apache-2.0

use serde_json::Value;

fn parse(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("export succeeds")).unwrap()
}

#[test]
fn energies_of_the_reference_device() {
    let v = parse(vshape_web::energies(8.19, 39.7, 0.192));
    assert!((v["gzz_over_pi_mhz"].as_f64().unwrap() - 144.4).abs() < 0.1);
    assert!((v["f_qb_ghz"].as_f64().unwrap() - 3.985).abs() < 1e-3);
}

#[test]
fn invalid_inputs_return_messages() {
    assert!(vshape_web::energies(-1.0, 39.7, 0.192).is_err());
    assert!(vshape_web::sweep(8.19, 39.7, 0.192, 0.0, 1, 32, 128).is_err());
    assert!(vshape_web::spectroscopy(3.6, 13.3, 0.07, 25.0, 2).is_err());
}

#[test]
fn coarse_sweep_falls_towards_half_flux() {
    let v = parse(vshape_web::sweep(8.19, 39.7, 0.192, 0.0, 6, 32, 128));
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 6);
    let q: Vec<f64> = pts.iter().map(|p| p["qubit_ghz"].as_f64().unwrap()).collect();
    assert!(q.windows(2).all(|w| w[1] < w[0]), "{q:?}");
}

#[test]
fn spectroscopy_shows_both_conditional_lines() {
    let v = parse(vshape_web::spectroscopy(3.5758, 13.2958, 0.0739, 25.0, 61));
    let peaks = v["peaks_ghz"].as_array().unwrap();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    let sep = peaks[1].as_f64().unwrap() - peaks[0].as_f64().unwrap();
    assert!((sep - 0.1478).abs() < 0.005, "{sep}");
}
