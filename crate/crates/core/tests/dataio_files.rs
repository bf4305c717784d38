use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rumnet::dataio::{load_long_csv, one_hot, save_long_csv};
use rumnet::error::{DataIssue, Error};
use rumnet::models::ChoiceEvent;
use rumnet::Dataset;

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

#[test]
fn golden_files_load_to_the_expected_dataset() {
    let data = load_long_csv(&golden("golden_events.csv"), Some(&golden("golden_customers.csv"))).unwrap();
    assert_eq!((data.d_x(), data.d_z(), data.len()), (2, 1, 2));
    let e = &data.events()[0];
    assert_eq!(e.products, vec![vec![0.5, 1.0], vec![0.25, -2.0], vec![1.5, 0.0]]);
    assert_eq!(e.available, vec![true, true, false]);
    assert_eq!((e.chosen, e.customer.clone()), (1, vec![1.0]));
    // The empty cell follows the missing-value convention.
    assert_eq!(data.events()[1].products[0], vec![3.0, -1.0]);
    let schema = data.schema();
    assert_eq!((schema.kappa_max, schema.n_events), (3, 2));
}

#[test]
fn golden_files_are_reproduced_byte_for_byte() {
    let data = load_long_csv(&golden("golden_events.csv"), Some(&golden("golden_customers.csv"))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (ev, cu) = (dir.path().join("e.csv"), dir.path().join("c.csv"));
    save_long_csv(&data, &ev, Some(&cu)).unwrap();
    // The missing cell comes back as its explicit marker.
    let expected = fs::read_to_string(golden("golden_events.csv")).unwrap().replace("3.0,\n", "3.0,-1.0\n");
    assert_eq!(fs::read_to_string(&ev).unwrap(), expected);
    assert_eq!(
        fs::read_to_string(&cu).unwrap(),
        fs::read_to_string(golden("golden_customers.csv")).unwrap()
    );
}

fn load_str(events: &str, customers: Option<&str>) -> rumnet::Result<Dataset> {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    fs::write(&ev, events).unwrap();
    let cu = customers.map(|c| {
        let p = dir.path().join("c.csv");
        fs::write(&p, c).unwrap();
        p
    });
    load_long_csv(&ev, cu.as_deref())
}

fn issue(r: rumnet::Result<Dataset>) -> (u64, DataIssue) {
    match r {
        Err(Error::Data { line, issue, .. }) => (line, issue),
        other => panic!("expected a data error, got {other:?}"),
    }
}

const HEADER: &str = "event_id,alt_index,available,chosen,x_1\n";

#[test]
fn each_validation_failure_has_its_own_diagnostic() {
    let (line, i) = issue(load_str(&format!("{HEADER}7,0,1,1,0\n7,1,1,1,0\n"), None));
    assert_eq!(line, 3);
    assert!(matches!(i, DataIssue::DuplicateChosen { ref event_id } if event_id == "7"));

    let (_, i) = issue(load_str(&format!("{HEADER}7,0,0,1,0\n7,1,1,0,0\n"), None));
    assert!(matches!(i, DataIssue::ChosenUnavailable { .. }));

    let (line, i) = issue(load_str(&format!("{HEADER}7,0,1,1,0\n7,1,1,0\n"), None));
    assert_eq!(line, 3);
    assert!(matches!(i, DataIssue::RaggedRow { expected: 5, actual: 4 }));

    let (_, i) = issue(load_str(
        &format!("{HEADER}7,0,1,1,0\n"),
        Some("event_id,z_1\n7,0.5\n8,0.1\n"),
    ));
    assert!(matches!(i, DataIssue::UnknownCustomer { ref event_id } if event_id == "8"));

    let (_, i) = issue(load_str(&format!("{HEADER}7,0,1,0,0\n7,1,1,0,0\n"), None));
    assert!(matches!(i, DataIssue::NoChosen { .. }));

    let (_, i) = issue(load_str(&format!("{HEADER}7,0,1,1,0\n7,2,1,0,0\n"), None));
    assert!(matches!(i, DataIssue::NonContiguousAlternative { expected: 1, found: 2, .. }));

    let (_, i) = issue(load_str("event,alt,available,chosen,x_1\n", None));
    assert!(matches!(i, DataIssue::BadHeader(_)));

    let (_, i) = issue(load_str(&format!("{HEADER}7,0,1,1,abc\n"), None));
    assert!(matches!(i, DataIssue::BadValue { .. }));
}

#[test]
fn missing_file_is_an_io_error() {
    let r = load_long_csv(&golden("does_not_exist.csv"), None);
    assert!(matches!(r, Err(Error::Io { .. })));
}

#[test]
fn one_hot_examples() {
    let h = one_hot(&["a", "a", "b"], 2);
    assert_eq!(h.columns, vec!["a", "RARE"]);
    assert_eq!(h.rows, vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]);
    let plain = one_hot(&["c", "a", "b", "a"], 1);
    assert_eq!(plain.columns, vec!["a", "b", "c"]);
    assert!(plain.rows.iter().all(|r| r.iter().sum::<f64>() == 1.0));
}

fn random_dataset(seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let d_x = r.gen_range(1..4);
    let d_z = r.gen_range(0..3);
    let events = (0..r.gen_range(1..15))
        .map(|_| {
            let n = r.gen_range(1..6);
            let products = (0..n)
                .map(|_| (0..d_x).map(|_| r.gen::<f64>() * 1e3 - 500.0).collect())
                .collect();
            let customer = (0..d_z).map(|_| r.gen_range(-1e-8..1e8)).collect();
            let mut available: Vec<bool> = (0..n).map(|_| r.gen_bool(0.8)).collect();
            let chosen = r.gen_range(0..n);
            available[chosen] = true;
            ChoiceEvent::new(customer, products, available, chosen).unwrap()
        })
        .collect();
    Dataset::new(d_x, d_z, events).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn save_then_load_is_exact(seed in any::<u64>()) {
        let data = random_dataset(seed);
        let dir = tempfile::tempdir().unwrap();
        let (ev, cu) = (dir.path().join("e.csv"), dir.path().join("c.csv"));
        let written = save_long_csv(&data, &ev, Some(&cu)).unwrap();
        prop_assert_eq!(written.len(), if data.d_z() == 0 { 1 } else { 2 });
        let back = load_long_csv(&ev, (data.d_z() > 0).then_some(cu.as_path())).unwrap();
        prop_assert_eq!(back, data);
    }
}
