mod common;

use bayesteach::featstore::{FeatureItem, FeatureStore, Split};
use proptest::prelude::*;

fn store_strategy() -> impl Strategy<Value = FeatureStore> {
    (1usize..6, 1usize..5).prop_flat_map(|(dim, n_cats)| {
        prop::collection::vec(
            (
                0..n_cats,
                prop::collection::vec(-1e6f32..1e6, dim),
                any::<bool>(),
                any::<bool>(),
            ),
            1..30,
        )
        .prop_map(move |rows| {
            let items = rows
                .into_iter()
                .enumerate()
                .map(|(i, (c, v, test, path))| FeatureItem {
                    id: format!("item{i}"),
                    category: format!("cat{c}"),
                    vector: v.into_iter().map(f64::from).collect(),
                    image_path: path.then(|| format!("img/{i}.png").into()),
                    split: if test { Split::Test } else { Split::Train },
                })
                .collect();
            FeatureStore::new(dim, items).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn write_then_load_is_lossless(store in store_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        store.write(dir.path()).unwrap();
        let back = FeatureStore::load(dir.path()).unwrap();
        prop_assert_eq!(back.dim(), store.dim());
        prop_assert_eq!(back.items(), store.items());
        prop_assert_eq!(back.categories(), store.categories());
    }

    #[test]
    fn category_sizes_sum_to_store_size(store in store_strategy()) {
        let total: usize = store.categories().values().map(Vec::len).sum();
        prop_assert_eq!(total, store.len());
        for (cat, idx) in store.categories() {
            prop_assert!(idx.iter().all(|&i| &store.item(i).category == cat));
        }
    }
}

#[test]
fn csv_fixture_loads_and_fits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let mut csv = String::from("id,category,split,f0,f1\n");
    let mut rng = bayesteach::seed::rng(5);
    for c in 0..3 {
        for k in 0..6 {
            let split = if k == 5 { "test" } else { "train" };
            let a = c as f64 * 4.0 + common::normal(&mut rng);
            let b = -(c as f64) + common::normal(&mut rng);
            csv.push_str(&format!("c{c}-{k},c{c},{split},{a},{b}\n"));
        }
    }
    std::fs::write(&path, csv).unwrap();
    let store = FeatureStore::from_csv(&path).unwrap();
    assert_eq!(store.len(), 18);
    assert_eq!(store.dim(), 2);
    assert_eq!(store.train_indices("c1", None).unwrap().len(), 5);
    let model = bayesteach::plda::fit_plda(&store, 2).unwrap();
    assert_eq!(model.q(), 2);
}
