use std::time::Duration;

use neurodeploy::dataset::{generate, Backend, Curation, Dataset, Selection};
use neurodeploy::oracle::OracleCaps;
use neurodeploy::smt::SolverConfig;
use neurodeploy::*;

fn caps() -> OracleCaps {
    OracleCaps {
        max_components: 5,
        max_vms: 6,
        max_offers: 7,
    }
}

fn sample_set(backend: &Backend) -> Dataset {
    generate(
        &case_study("secure-web").unwrap(),
        &catalog_cloud20(),
        7,
        Selection::Random { count: 6, seed: 3 },
        backend,
    )
    .unwrap()
}

#[test]
fn oracle_and_smt_labels_agree() {
    let oracle = sample_set(&Backend::Oracle(caps()));
    let smt = sample_set(&Backend::Smt {
        config: SolverConfig::from_env(),
        deadline: Duration::from_secs(120),
    });
    assert_eq!(oracle.manifest.n_subsets, 6);
    assert_eq!(oracle.samples.len(), smt.samples.len());
    for (o, s) in oracle.samples.iter().zip(&smt.samples) {
        assert_eq!(o.subset, s.subset);
        assert_eq!(o.min_price, s.min_price);
    }
    oracle.verify().unwrap();
    smt.verify().unwrap();
}

#[test]
fn write_read_round_trip_checks_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    let data = sample_set(&Backend::Oracle(caps()));
    data.write(&path).unwrap();
    assert_eq!(Dataset::read(&path).unwrap(), data);

    let (curated, report) = data.curated(&Curation::Auto).unwrap();
    assert!(curated.samples.len() <= data.samples.len());
    assert!(report.gini_after <= report.gini_before);

    let manifest = Dataset::manifest_path(&path);
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    json["catalog"][0]["cpu"] = serde_json::json!(64);
    std::fs::write(&manifest, json.to_string()).unwrap();
    assert!(Dataset::read(&path).is_err());
}
