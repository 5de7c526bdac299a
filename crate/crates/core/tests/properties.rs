use std::collections::HashSet;

use proptest::prelude::*;
use vitderm_core::attention::{attention_rollout, rollout_matrices};
use vitderm_core::data::{cleanse, split, Diagnosis, LesionRecord, Sex, SplitRatios};
use vitderm_core::eval::{accuracy_counts, confusion_matrix, recall_counts};
use vitderm_core::model::weights::{read_container, write_container, WeightRecord};
use vitderm_core::model::AttentionRecord;

fn records(groups: &[(usize, u8, u8)]) -> Vec<LesionRecord> {
    let mut out = Vec::new();
    for (g, &(copies, dx, flags)) in groups.iter().enumerate() {
        for c in 0..copies {
            out.push(LesionRecord {
                lesion_id: format!("L{g}"),
                image_id: format!("I{g}_{c}"),
                dx: Diagnosis::from_index(dx as usize % 7).unwrap(),
                dx_type: "histo".into(),
                age: (flags & 1 == 0).then_some(40.0),
                sex: if flags & 2 == 0 {
                    Sex::Female
                } else {
                    Sex::Unknown
                },
                localization: (flags & 4 == 0).then(|| "back".to_string()),
            });
        }
    }
    out
}

fn row_stochastic(t: usize, raw: &[f64]) -> Vec<f64> {
    let mut m = raw.to_vec();
    for row in m.chunks_mut(t) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn splits_are_lesion_disjoint_and_complete(
        groups in prop::collection::vec((1usize..4, 0u8..7, 0u8..1), 3..60),
        seed in any::<u64>(),
    ) {
        let recs = records(&groups);
        let ds = split(&recs, SplitRatios::default(), seed).unwrap();
        let lesions = |r: &[LesionRecord]| r.iter().map(|x| x.lesion_id.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (lesions(&ds.train), lesions(&ds.val), lesions(&ds.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        prop_assert_eq!(ds.train.len() + ds.val.len() + ds.test.len(), recs.len());
    }

    #[test]
    fn cleanse_is_idempotent(groups in prop::collection::vec((1usize..3, 0u8..7, 0u8..8), 0..40)) {
        let once = cleanse(&records(&groups));
        prop_assert_eq!(cleanse(&once), once.clone());
        prop_assert!(once.iter().all(|r| r.age.is_some() && r.sex != Sex::Unknown && r.localization.is_some()));
    }

    #[test]
    fn confusion_metrics_match_brute_force(pairs in prop::collection::vec((0usize..7, 0usize..7), 1..200)) {
        let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let cm = confusion_matrix(&preds, &labels).unwrap();
        let correct = pairs.iter().filter(|(p, l)| p == l).count() as u64;
        prop_assert_eq!(accuracy_counts(&cm).unwrap(), (correct, pairs.len() as u64));

        let mut rev_p = preds.clone();
        let mut rev_l = labels.clone();
        rev_p.reverse();
        rev_l.reverse();
        prop_assert_eq!(confusion_matrix(&rev_p, &rev_l).unwrap(), cm.clone());

        // support-weighted recall equals accuracy
        let n = pairs.len() as f64;
        let mut weighted = 0.0;
        for c in 0..7 {
            let (tp, tn, fp, fneg) = cm.binary(c);
            prop_assert_eq!(tp + tn + fp + fneg, cm.total());
            if let Ok((hit, support)) = recall_counts(&cm, c) {
                prop_assert_eq!(support, labels.iter().filter(|&&l| l == c).count() as u64);
                weighted += (support as f64 / n) * (hit as f64 / support as f64);
            }
        }
        prop_assert!((weighted - correct as f64 / n).abs() < 1e-12);
    }

    #[test]
    fn rollout_stays_row_stochastic(
        raw in prop::collection::vec(0.01f64..1.0, 3 * 2 * 25),
    ) {
        let layers: Vec<Vec<f64>> = raw.chunks(2 * 25).map(|l| row_stochastic(5, l)).collect();
        let rec = AttentionRecord { seq_len: 5, num_heads: 2, layers };
        for m in rollout_matrices(&rec).unwrap() {
            for row in m.chunks(5) {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-5);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
            }
        }
        let map = attention_rollout(&rec).unwrap();
        prop_assert!(map.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn weight_container_round_trips_bits(
        tensors in prop::collection::vec(prop::collection::vec(any::<f32>(), 1..20), 1..6),
    ) {
        let recs: Vec<WeightRecord> = tensors
            .into_iter()
            .enumerate()
            .map(|(i, data)| WeightRecord { name: format!("t{i}"), shape: vec![data.len()], data })
            .collect();
        let mut buf = Vec::new();
        write_container(&mut buf, &recs).unwrap();
        let back = read_container(&buf[..]).unwrap();
        for (a, b) in recs.iter().zip(&back) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.data), bits(&b.data));
            prop_assert_eq!(&a.shape, &b.shape);
        }
    }
}
