use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sitegrounder_core::embedding::EmbeddingVector;
use sitegrounder_core::vector_index::{ChunkMetadata, IndexError, SearchHit, VectorIndex};

const DIM: usize = 64;

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let out = EmbeddingVector::normalized(v);
        if !out.is_zero() {
            return out;
        }
    }
}

fn meta(i: usize) -> ChunkMetadata {
    ChunkMetadata {
        source_url: format!("https://fixture.sitegrounder.test/p{}", i / 10),
        text: format!("chunk {i}"),
    }
}

/// Exhaustive scan: every score, full sort, first k.
fn brute_force(entries: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Vec<(String, f32)> {
    let mut scored: Vec<(usize, f32)> = entries
        .iter()
        .enumerate()
        .map(|(i, (_, v))| {
            let mut s = 0.0f32;
            for d in 0..v.len() {
                s += v[d] * query[d];
            }
            (i, s)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(k)
        .map(|(i, s)| (entries[i].0.clone(), s))
        .collect()
}

fn build(n: usize, seed: u64) -> (VectorIndex, Vec<(String, Vec<f32>)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut index = VectorIndex::new(DIM);
    let mut entries: Vec<(String, Vec<f32>)> = Vec::new();
    for i in 0..n {
        // every 97th entry duplicates an earlier vector to exercise tie order
        let v = if i > 0 && i % 97 == 0 {
            EmbeddingVector::from_raw(entries[i / 2].1.clone())
        } else {
            random_unit(&mut rng, DIM)
        };
        let id = format!("doc{}#{}", i / 10, i % 10);
        index.add(id.clone(), &v, meta(i)).unwrap();
        entries.push((id, v.into_values()));
    }
    (index, entries)
}

fn hit_pairs(hits: &[SearchHit]) -> Vec<(String, f32)> {
    hits.iter().map(|h| (h.chunk_id.clone(), h.score)).collect()
}

#[test]
fn thousand_vectors_match_brute_force() {
    let (index, entries) = build(1000, 42);
    assert_eq!(index.len(), 1000);
    for (id, v) in &entries {
        let (got, _) = index.get(id).expect("every id retrievable");
        assert_eq!(got.values(), v.as_slice());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for _ in 0..50 {
        let q = random_unit(&mut rng, DIM);
        let hits = index.search(&q, 10).unwrap();
        let want = brute_force(&entries, q.values(), 10);
        assert_eq!(hit_pairs(&hits), want);
    }
}

#[test]
fn duplicated_vectors_tie_in_insertion_order() {
    let (index, entries) = build(200, 1);
    let q = EmbeddingVector::from_raw(entries[97].1.clone());
    let hits = index.search(&q, 2).unwrap();
    // entry 97 copies entry 48
    assert_eq!(hits[0].chunk_id, entries[48].0);
    assert_eq!(hits[1].chunk_id, entries[97].0);
    assert_eq!(hits[0].score, hits[1].score);
}

#[test]
fn persistence_preserves_search_results_bit_for_bit() {
    let (index, _) = build(1000, 42);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fixture.vidx");
    index.save(&path).unwrap();
    let loaded = VectorIndex::load(&path).unwrap();
    assert_eq!(loaded, index);

    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for _ in 0..50 {
        let q = random_unit(&mut rng, DIM);
        let before = index.search(&q, 10).unwrap();
        let after = loaded.search(&q, 10).unwrap();
        assert_eq!(before.len(), after.len());
        for (b, a) in before.iter().zip(&after) {
            assert_eq!(b.chunk_id, a.chunk_id);
            assert_eq!(b.score.to_bits(), a.score.to_bits());
            assert_eq!(b.metadata, a.metadata);
        }
    }

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        VectorIndex::load(&path),
        Err(IndexError::CorruptIndex(_))
    ));
}

#[test]
fn k_larger_than_count_returns_everything() {
    let (index, entries) = build(7, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_unit(&mut rng, DIM);
    let hits = index.search(&q, 50).unwrap();
    assert_eq!(hits.len(), 7);
    assert_eq!(hit_pairs(&hits), brute_force(&entries, q.values(), 50));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_equals_brute_force_at_any_size(n in 0usize..120, k in 1usize..20, seed in any::<u64>()) {
        let (index, entries) = build(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead_beef);
        let q = random_unit(&mut rng, DIM);
        prop_assert_eq!(hit_pairs(&index.search(&q, k).unwrap()), brute_force(&entries, q.values(), k));
    }

    #[test]
    fn adding_never_reorders_existing_hits(n in 2usize..80, seed in any::<u64>()) {
        let (mut index, _) = build(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let q = random_unit(&mut rng, DIM);
        let before: Vec<String> = index.search(&q, n).unwrap().into_iter().map(|h| h.chunk_id).collect();
        index.add("extra", &random_unit(&mut rng, DIM), meta(0)).unwrap();
        let after: Vec<String> = index
            .search(&q, n + 1)
            .unwrap()
            .into_iter()
            .map(|h| h.chunk_id)
            .filter(|id| id != "extra")
            .collect();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn score_is_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_unit(&mut rng, DIM);
        let b = random_unit(&mut rng, DIM);
        prop_assert_eq!(a.dot(&b), b.dot(&a));
    }
}
