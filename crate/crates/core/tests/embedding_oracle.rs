use std::sync::{Arc, Mutex};

use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use sitegrounder_core::embedding::{
    stub_embed, EmbedError, Embedder, EmbeddingVector, RemoteEmbedder, StubEmbedder,
};
use url::Url;

/// Independent reimplementation of the stub embedding rule.
fn oracle_embed(text: &str, dim: usize) -> Vec<f32> {
    let mut counts = vec![0i32; dim];
    let lower = text.to_lowercase();
    let mut token = String::new();
    let flush = |token: &mut String, counts: &mut Vec<i32>| {
        if token.is_empty() {
            return;
        }
        let mut h: u64 = 14695981039346656037;
        for byte in token.bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(1099511628211);
        }
        let idx = (h % dim as u64) as usize;
        counts[idx] += if h & (1 << 63) == 0 { 1 } else { -1 };
        token.clear();
    };
    for ch in lower.chars() {
        if ch.is_alphanumeric() {
            token.push(ch);
        } else {
            flush(&mut token, &mut counts);
        }
    }
    flush(&mut token, &mut counts);
    let sq: i64 = counts.iter().map(|&c| (c as i64) * (c as i64)).sum();
    if sq == 0 {
        return vec![0.0; dim];
    }
    let norm = (sq as f64).sqrt();
    counts.iter().map(|&c| (c as f64 / norm) as f32).collect()
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
}

#[test]
fn bvm_engineering_college_matches_oracle_bit_for_bit() {
    let got = stub_embed("bvm engineering college", 64);
    let want = oracle_embed("bvm engineering college", 64);
    let got_bits: Vec<u32> = got.values().iter().map(|v| v.to_bits()).collect();
    let want_bits: Vec<u32> = want.iter().map(|v| v.to_bits()).collect();
    assert_eq!(got_bits, want_bits);

    // Frozen from an offline FNV-1a script: buckets 16 (-), 34 (+), 44 (+).
    let third = (1.0f64 / 3.0f64.sqrt()) as f32;
    let nonzero: Vec<(usize, f32)> = got
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    assert_eq!(nonzero, vec![(16, -third), (34, third), (44, third)]);
}

#[test]
fn cosine_values_match_oracle() {
    let ab = stub_embed("alpha beta", 64);
    assert!((ab.dot(&stub_embed("alpha beta", 64)) - 1.0).abs() < 1e-6);

    // "gamma delta" shares no bucket with "alpha beta" (39, 43 vs 1, 42).
    let gd = stub_embed("gamma delta", 64);
    let expected = cosine(
        &oracle_embed("alpha beta", 64),
        &oracle_embed("gamma delta", 64),
    );
    assert_eq!(expected, 0.0);
    assert!((ab.dot(&gd) as f64 - expected).abs() < 1e-6);

    for (a, b) in [
        ("alpha beta gamma", "beta gamma delta"),
        ("What is BVM?", "BVM is the first engineering college"),
        ("Vallabh Vidyanagar", "vallabh VIDYANAGAR gujarat"),
    ] {
        let expected = cosine(&oracle_embed(a, 64), &oracle_embed(b, 64));
        let got = stub_embed(a, 64).dot(&stub_embed(b, 64)) as f64;
        assert!(
            (got - expected).abs() < 1e-6,
            "{a:?} vs {b:?}: {got} vs {expected}"
        );
    }
}

#[test]
fn opposite_signs_in_one_bucket_cancel() {
    // "omega" and "kappa" hash to bucket 8 with opposite signs at dim 64.
    let v = stub_embed("omega kappa", 64);
    assert!(v.is_zero());
    assert_eq!(v.values(), oracle_embed("omega kappa", 64).as_slice());
}

#[tokio::test]
async fn stub_batch_matches_singles() {
    let e = StubEmbedder::new(64).unwrap();
    let texts: Vec<String> = vec![
        "".into(),
        "Hello hello".into(),
        "bvm engineering college".into(),
    ];
    let batch = e.embed_batch(&texts).await.unwrap();
    assert_eq!(batch.len(), 3);
    for (t, v) in texts.iter().zip(batch) {
        assert_eq!(v, stub_embed(t, 64));
    }
}

async fn spawn(router: Router) -> Url {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router).await.unwrap() });
    Url::parse(&format!("http://{addr}/embed")).unwrap()
}

#[tokio::test]
async fn remote_embedder_speaks_the_wire_protocol() {
    let seen: Arc<Mutex<Vec<Value>>> = Arc::default();
    let log = seen.clone();
    let router = Router::new().route(
        "/embed",
        post(move |Json(body): Json<Value>| {
            let log = log.clone();
            async move {
                let n = body["inputs"].as_array().unwrap().len();
                log.lock().unwrap().push(body);
                // unnormalized on purpose
                Json(json!({ "vectors": vec![vec![3.0, 4.0, 0.0, 0.0]; n] }))
            }
        }),
    );
    let url = spawn(router).await;
    let e = RemoteEmbedder::new(url, "hkunlp/instructor-large", 4)
        .unwrap()
        .with_batch_size(2);
    let texts: Vec<String> = (0..5).map(|i| format!("t{i}")).collect();
    let out = e.embed_batch(&texts).await.unwrap();
    assert_eq!(out.len(), 5);
    assert_eq!(
        out[0],
        EmbeddingVector::normalized(vec![3.0, 4.0, 0.0, 0.0])
    );
    assert!((out[4].l2_norm() - 1.0).abs() < 1e-6);

    let mut bodies = seen.lock().unwrap().clone();
    assert_eq!(bodies.len(), 3);
    bodies.sort_by_key(|b| b["inputs"][0].as_str().unwrap().to_string());
    assert_eq!(
        bodies[0],
        json!({"model": "hkunlp/instructor-large", "inputs": ["t0", "t1"]})
    );
    assert_eq!(bodies[2]["inputs"], json!(["t4"]));
}

#[tokio::test]
async fn remote_embedder_rejects_wrong_dimension() {
    let router = Router::new().route(
        "/embed",
        post(|| async { Json(json!({ "vectors": [[1.0, 0.0]] })) }),
    );
    let url = spawn(router).await;
    let e = RemoteEmbedder::new(url, "m", 4).unwrap();
    let err = e.embed_batch(&["x".to_string()]).await.unwrap_err();
    assert_eq!(
        err,
        EmbedError::DimensionMismatch {
            expected: 4,
            got: 2
        }
    );
}

#[tokio::test]
async fn unreachable_remote_is_reported() {
    let e = RemoteEmbedder::new(Url::parse("http://127.0.0.1:9/embed").unwrap(), "m", 4).unwrap();
    let err = e.embed("x").await.unwrap_err();
    assert!(matches!(err, EmbedError::RemoteUnavailable(_)));
}
