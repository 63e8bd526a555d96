use lexrag_core::dense::{decode_dense, encode_dense, DenseIndex};
use lexrag_core::eval::{
    assemble_groups, exact_match, intent_recovery, normalize_answer, repair_partition, same_intent_overlap, word_f1,
    GroupTurn,
};
use lexrag_core::fusion::{rrf_fuse, FusionConfig};
use lexrag_core::stats::percentile;
use lexrag_testkit::{dense_oracle, fuzzed_grouping, random_vectors};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn s(items: &[&str]) -> Vec<String> {
    items.iter().map(|x| x.to_string()).collect()
}

#[test]
fn rrf_three_list_fixture() {
    let lists = [s(&["d1", "d2", "d3"]), s(&["d1", "d4"]), s(&["d5", "d6", "d7"])];
    let fused = rrf_fuse(&lists, FusionConfig::default()).unwrap();
    let get = |id: &str| fused.iter().find(|(d, _)| d == id).unwrap().1;
    assert_eq!(fused[0].0, "d1");
    assert_eq!(get("d1"), 1.0 / 61.0 + 1.0 / 61.0);
    assert_eq!(get("d1"), 2.0 / 61.0);
    assert_eq!(get("d3"), 1.0 / 63.0);
    assert_eq!(get("d7"), 1.0 / 63.0);
    // equal scores fall back to id order
    let tied: Vec<&str> = fused.iter().filter(|(_, v)| *v == 1.0 / 62.0).map(|(d, _)| d.as_str()).collect();
    assert_eq!(tied, ["d2", "d4", "d6"]);
}

#[test]
fn rrf_depth_cuts_lists() {
    let lists = [s(&["a", "b", "c"])];
    let fused = rrf_fuse(&lists, FusionConfig { rrf_k: 60, per_list_depth: 2 }).unwrap();
    assert_eq!(fused.len(), 2);
}

proptest! {
    #[test]
    fn rrf_order_invariant_and_bounded(seed in any::<u64>(), n_lists in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pool: Vec<u32> = (0..40).collect();
        let lists: Vec<Vec<u32>> = (0..n_lists)
            .map(|_| {
                pool.shuffle(&mut rng);
                pool[..rng.random_range(0..25)].to_vec()
            })
            .collect();
        let cfg = FusionConfig::default();
        let base = rrf_fuse(&lists, cfg).unwrap();
        let mut permuted = lists.clone();
        permuted.shuffle(&mut rng);
        prop_assert_eq!(&rrf_fuse(&permuted, cfg).unwrap(), &base);
        let bound = n_lists as f64 / 61.0;
        prop_assert!(base.iter().all(|(_, v)| *v > 0.0 && *v <= bound + 1e-15));
        prop_assert!(base.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn dense_matches_argsort(seed in any::<u64>(), n in 1usize..300, dim in 1usize..24, k in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors = random_vectors(&mut rng, n, dim);
        let ids: Vec<String> = (0..n).map(|i| format!("v{i:05}")).collect();
        let mut index = DenseIndex::new(dim).unwrap();
        for (id, v) in ids.iter().zip(&vectors) {
            if index.insert(id.clone(), v).is_err() {
                return Ok(());
            }
        }
        let q = random_vectors(&mut rng, 1, dim).remove(0);
        let (Ok(got), want) = (index.search(&q, k), dense_oracle(&ids, &vectors, &q, k)) else { return Ok(()) };
        let got_ids: Vec<&String> = got.iter().map(|h| &h.0).collect();
        let want_ids: Vec<&String> = want.iter().map(|h| &h.0).collect();
        prop_assert_eq!(got_ids, want_ids);
        let back = decode_dense(&encode_dense(&index)).unwrap();
        prop_assert_eq!(back.search(&q, k).unwrap(), got);
    }

    #[test]
    fn repaired_partition_is_total(seed in any::<u64>(), n in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proposed = fuzzed_grouping(&mut rng, n);
        let parts = repair_partition(n, &proposed);
        let mut seen: Vec<usize> = parts.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        prop_assert!(parts.iter().all(|g| !g.is_empty()));
    }

    #[test]
    fn answer_metric_laws(a in "[a-zA-Z ,.!'-]{0,30}", b in "[a-zA-Z ,.!'-]{0,30}") {
        let na = normalize_answer(&a).join(" ");
        prop_assert_eq!(normalize_answer(&na).join(" "), na);
        prop_assert!((word_f1(&a, &[&b]) - word_f1(&b, &[&a])).abs() < 1e-12);
        if exact_match(&a, &[&b]) == 1 {
            prop_assert_eq!(word_f1(&a, &[&b]), 1.0);
        }
        let f = word_f1(&a, &[&b]);
        prop_assert!((0.0..=1.0).contains(&f));
    }
}

fn turn(i: u32, retrieved: &[&str], success: bool) -> GroupTurn {
    GroupTurn { turn_index: i, query: format!("q{i}"), retrieved: s(retrieved), success: Some(success) }
}

#[test]
fn trajectory_metric_fixtures() {
    let turns = vec![turn(0, &["d1", "d2", "d3", "d4", "d5"], false), turn(1, &["d4", "d5", "d6", "d7", "d8"], false)];
    let groups = assemble_groups(&turns, &[vec![0, 1]]);
    assert!((same_intent_overlap(&groups).unwrap() - 0.4).abs() < 1e-12);

    let turns = vec![turn(0, &[], false), turn(1, &[], false), turn(2, &[], false), turn(3, &[], true)];
    let groups = assemble_groups(&turns, &[vec![0, 1], vec![2, 3]]);
    assert_eq!(intent_recovery(&groups).unwrap(), 0.5);
}

#[test]
fn nearest_rank_percentiles() {
    let ms: Vec<f64> = (1..=100).map(f64::from).collect();
    assert_eq!(percentile(&ms, 95.0).unwrap(), 95.0);
    assert_eq!(percentile(&ms, 50.0).unwrap(), 50.0);
    assert_eq!(percentile(&ms, 100.0).unwrap(), 100.0);
    assert_eq!(percentile(&[7.0], 95.0).unwrap(), 7.0);
}

#[test]
fn exact_dense_large_set() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let vectors = random_vectors(&mut rng, 1000, 64);
    let ids: Vec<String> = (0..1000).map(|i| format!("p{i}")).collect();
    let mut index = DenseIndex::new(64).unwrap();
    for (id, v) in ids.iter().zip(&vectors) {
        index.insert(id.clone(), v).unwrap();
    }
    let q = random_vectors(&mut rng, 1, 64).remove(0);
    let got: Vec<String> = index.search(&q, 10).unwrap().into_iter().map(|h| h.0).collect();
    let want: Vec<String> = dense_oracle(&ids, &vectors, &q, 10).into_iter().map(|h| h.0).collect();
    assert_eq!(got, want);
}
