use proptest::prelude::*;

use termite::{EmbeddingStore, HubnessMetadata};

fn rows_strategy() -> impl Strategy<Value = (usize, Vec<(String, Vec<f32>)>)> {
    (1usize..6).prop_flat_map(|dim| {
        let row = ("[a-z]{1,6}", prop::collection::vec(-4.0f32..4.0, dim));
        (Just(dim), prop::collection::vec(row, 2..40))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_load_preserves_knn((dim, rows) in rows_strategy(), k in 0usize..50) {
        let store = EmbeddingStore::from_rows(dim, rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.temb");
        store.save(&path).unwrap();
        let loaded = EmbeddingStore::load(&path).unwrap();
        prop_assert_eq!(loaded.entities(), store.entities());
        for i in 0..store.len() {
            let q = store.vector_at(i);
            let before = store.knn(q, k).unwrap();
            let after = loaded.knn(q, k).unwrap();
            prop_assert_eq!(&before, &after);
            // Sorted, and a stored vector finds itself (or an exact duplicate) first.
            prop_assert!(before.windows(2).all(|w| w[0].distance <= w[1].distance));
            if k > 0 {
                prop_assert!(before[0].distance <= 1e-12);
            }
        }
    }

    #[test]
    fn hubness_counts_sum_to_k_times_n((dim, rows) in rows_strategy(), k in 1usize..10) {
        let store = EmbeddingStore::from_rows(dim, rows).unwrap();
        prop_assume!(k < store.len());
        let meta = HubnessMetadata::compute(&store, k).unwrap();
        prop_assert_eq!(meta.counts.values().sum::<u64>(), (k * store.len()) as u64);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.json");
        meta.save(&path).unwrap();
        prop_assert_eq!(HubnessMetadata::load(&path).unwrap(), meta);
    }
}
