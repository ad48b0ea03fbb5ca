use std::collections::BTreeMap;

use proptest::prelude::*;

use sedfusion::metrics::{
    clip_micro_f1, event_macro_f1, segment_micro_f1, tags_of, Collars, Event, EventMap, TagMap,
};

fn events(n_classes: usize, duration: f64) -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0.0..duration, 0.05..duration, 0..n_classes), 0..5).prop_map(move |v| {
        v.into_iter()
            .map(|(onset, len, class)| Event {
                onset,
                offset: (onset + len).min(duration),
                class,
            })
            .filter(|e| e.offset > e.onset)
            .collect()
    })
}

fn instance() -> impl Strategy<Value = (EventMap, EventMap, BTreeMap<String, f64>)> {
    prop::collection::vec(
        (1.0f64..15.0).prop_flat_map(|d| (Just(d), events(3, d), events(3, d))),
        1..4,
    )
    .prop_map(|clips| {
        let mut a = EventMap::new();
        let mut b = EventMap::new();
        let mut durations = BTreeMap::new();
        for (i, (d, x, y)) in clips.into_iter().enumerate() {
            let id = format!("c{i}");
            durations.insert(id.clone(), d);
            a.insert(id.clone(), x);
            b.insert(id, y);
        }
        (a, b, durations)
    })
}

fn tags(map: &EventMap) -> TagMap {
    map.iter().map(|(k, v)| (k.clone(), tags_of(v))).collect()
}

proptest! {
    #[test]
    fn swapping_prediction_and_reference_swaps_errors((a, b, durations) in instance()) {
        let ab = segment_micro_f1(&a, &b, &durations, 3, 1.0).unwrap();
        let ba = segment_micro_f1(&b, &a, &durations, 3, 1.0).unwrap();
        prop_assert_eq!((ab.tp, ab.fp, ab.fn_), (ba.tp, ba.fn_, ba.fp));
        prop_assert_eq!(ab.f1, ba.f1);
        let ab = clip_micro_f1(&tags(&a), &tags(&b), 3).unwrap();
        let ba = clip_micro_f1(&tags(&b), &tags(&a), 3).unwrap();
        prop_assert_eq!((ab.tp, ab.fp, ab.fn_), (ba.tp, ba.fn_, ba.fp));
    }

    #[test]
    fn self_comparison_is_perfect((a, _b, durations) in instance()) {
        let seg = segment_micro_f1(&a, &a, &durations, 3, 1.0).unwrap();
        prop_assert_eq!(seg.fp + seg.fn_, 0);
        let ev = event_macro_f1(&a, &a, 3, &Collars::default()).unwrap();
        prop_assert_eq!(ev.fp + ev.fn_, 0);
        let n: usize = a.values().map(Vec::len).sum();
        prop_assert_eq!(ev.tp, n);
        prop_assert!(ev.f1 == 1.0 || n == 0);
    }

    #[test]
    fn scores_are_bounded((a, b, durations) in instance()) {
        let seg = segment_micro_f1(&a, &b, &durations, 3, 1.0).unwrap();
        let ev = event_macro_f1(&a, &b, 3, &Collars::default()).unwrap();
        for f in [seg.f1, seg.precision, seg.recall, ev.f1, ev.precision, ev.recall] {
            prop_assert!((0.0..=1.0).contains(&f));
        }
        let n_pred: usize = a.values().map(Vec::len).sum();
        let n_ref: usize = b.values().map(Vec::len).sum();
        prop_assert_eq!(ev.tp + ev.fp, n_pred);
        prop_assert_eq!(ev.tp + ev.fn_, n_ref);
    }
}
