use crysflow::cif::{parse_cif, write_cif};
use crysflow::dataset::{parse_dataset, read_dataset, write_dataset, DatasetRecord};
use crysflow_core::synth;
use crysflow_core::SpaceGroup;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POOL: [u8; 8] = [1, 3, 8, 11, 17, 26, 29, 56];

proptest! {
    #[test]
    fn cif_round_trip(seed in any::<u64>(), n in 1usize..10, sg in proptest::option::of(1u16..=230)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = synth::random_structure(&mut rng, n, &POOL);
        let sg = sg.and_then(SpaceGroup::new);
        let text = write_cif(&s, sg);
        let doc = parse_cif(text.as_bytes()).unwrap();
        prop_assert_eq!(&doc.structure.composition, &s.composition);
        prop_assert_eq!(doc.space_group, sg);
        for (a, b) in doc.structure.lattice.to_array().iter().zip(s.lattice.to_array()) {
            prop_assert!((a - b).abs() <= 1e-4);
        }
        for (fa, fb) in doc.structure.frac.iter().zip(&s.frac) {
            for k in 0..3 {
                let d = (fa[k] - fb[k]).abs();
                prop_assert!(d.min(1.0 - d) <= 1e-6, "{} vs {}", fa[k], fb[k]);
            }
        }
        prop_assert_eq!(write_cif(&doc.structure, sg), text);
    }
}

#[test]
fn mutated_cifs_never_panic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = write_cif(&synth::rock_salt(11, 17, 5.64), SpaceGroup::new(225)).into_bytes();
    for _ in 0..5000 {
        let mut b = base.clone();
        for _ in 0..rng.random_range(1..6) {
            let i = rng.random_range(0..b.len());
            match rng.random_range(0..3) {
                0 => b[i] = rng.random(),
                1 => {
                    b.truncate(i);
                    if b.is_empty() {
                        b.push(b'_');
                    }
                }
                _ => b.insert(i, b"'\";_ \n#(0.9-"[rng.random_range(0..12)]),
            }
        }
        let _ = parse_cif(&b);
    }
}

#[test]
fn dataset_round_trip_of_random_records() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let records: Vec<DatasetRecord> = (0..100)
        .map(|i| {
            let n = rng.random_range(1..8);
            let s = synth::random_structure(&mut rng, n, &POOL);
            let sg = SpaceGroup::new(rng.random_range(1..=230)).unwrap();
            let d = (i % 3 != 0).then(|| format!("record {i} with \"quotes\" and ünïcode"));
            DatasetRecord::from_structure(&s, sg, d)
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    write_dataset(&records, &path).unwrap();
    let (back, skipped) = read_dataset(&path, true).unwrap();
    assert!(skipped.is_empty());
    assert_eq!(back, records);
}

#[test]
fn lenient_read_skips_and_strict_read_stops() {
    let good = DatasetRecord::from_structure(&synth::rock_salt(11, 17, 5.64), SpaceGroup::new(225).unwrap(), None);
    let text = format!("{}\nnot json\n{}\n", serde_json::to_string(&good).unwrap(), serde_json::to_string(&good).unwrap());
    let (recs, skipped) = parse_dataset(&text, false).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(skipped.len(), 1);
    assert!(skipped[0].to_string().starts_with("line 2"));
    assert!(parse_dataset(&text, true).is_err());
}
