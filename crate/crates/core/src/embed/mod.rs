//! Document embeddings: skip-gram word vectors with mean pooling, hashed
//! bag-of-words, and a client for a remote transformer service.

pub mod bow;
mod matrix;
pub mod remote;
pub mod sgns;
pub mod tokenize;

use ndarray::{Array1, Array2, ArrayView1};

pub use bow::HashedBow;
pub use matrix::{matrix_paths, read_matrix, write_matrix, EmbeddingMatrix, MatrixHeader};
pub use remote::{embed_remote, RemoteConfig};
pub use sgns::{train_sgns, train_sgns_with, SgnsConfig, SgnsModel, Vocabulary, WordVectors};
pub use tokenize::tokenize;

use crate::cohort::StayId;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    /// Set when either input had zero norm; `value` is then 0.
    pub zero_norm: bool,
}

/// u·v / (‖u‖‖v‖), accumulated in f64.
pub fn cosine<T: Scalar>(u: ArrayView1<'_, T>, v: ArrayView1<'_, T>) -> Cosine {
    let (mut dot, mut uu, mut vv) = (0.0f64, 0.0f64, 0.0f64);
    for (a, b) in u.iter().zip(v.iter()) {
        let (a, b) = (a.to_f64_lossy(), b.to_f64_lossy());
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Cosine {
            value: 0.0,
            zero_norm: true,
        };
    }
    Cosine {
        value: (dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0),
        zero_norm: false,
    }
}

pub fn cosine_value<T: Scalar>(u: ArrayView1<'_, T>, v: ArrayView1<'_, T>) -> f64 {
    cosine(u, v).value
}

/// Unweighted mean of the in-vocabulary token vectors; zero when none are
/// in the vocabulary.
pub fn embed_note_mean<T: Scalar, S: AsRef<str>>(
    tokens: &[S],
    words: &WordVectors<T>,
) -> Array1<T> {
    let mut acc = vec![0.0f64; words.dim()];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = words.get(t.as_ref()) {
            for (a, x) in acc.iter_mut().zip(v.iter()) {
                *a += x.to_f64_lossy();
            }
            n += 1;
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc.into_iter().map(T::from_f64_lossy).collect()
}

/// Mean-pooled word2vec document matrix over `texts`.
pub fn word2vec_matrix<S: AsRef<str>>(
    stay_ids: Vec<StayId>,
    texts: &[S],
    words: &WordVectors<f32>,
) -> Result<EmbeddingMatrix<f32>> {
    let mut data = Array2::zeros((texts.len(), words.dim()));
    for (i, text) in texts.iter().enumerate() {
        let tokens = tokenize(text.as_ref());
        data.row_mut(i).assign(&embed_note_mean(&tokens, words));
    }
    EmbeddingMatrix::new("word2vec", stay_ids, data)
}

pub fn bow_matrix<S: AsRef<str>>(
    stay_ids: Vec<StayId>,
    texts: &[S],
    bow: &HashedBow,
) -> Result<EmbeddingMatrix<f32>> {
    let mut data = Array2::zeros((texts.len(), bow.buckets()));
    for (i, text) in texts.iter().enumerate() {
        for (b, v) in bow.embed_sparse(&tokenize(text.as_ref())) {
            data[[i, b]] = v as f32;
        }
    }
    EmbeddingMatrix::new("bow", stay_ids, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_vectors() -> WordVectors<f64> {
        let corpus = vec![vec!["a".to_owned(), "b".to_owned()]];
        WordVectors {
            vocab: Vocabulary::build(&corpus, 1),
            vectors: array![[1.0, 2.0, 3.0], [-1.0, 0.5, 4.0]],
        }
    }

    #[test]
    fn cosine_basics() {
        let x = array![0.3, -1.2, 2.0];
        assert!((cosine_value(x.view(), x.view()) - 1.0).abs() < 1e-15);
        let e1 = array![1.0f32, 0.0];
        let e2 = array![0.0f32, 1.0];
        assert_eq!(cosine_value(e1.view(), e2.view()), 0.0);
        let z = array![0.0, 0.0, 0.0];
        let c = cosine(x.view(), z.view());
        assert_eq!(c.value, 0.0);
        assert!(c.zero_norm);
    }

    #[test]
    fn cosine_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(1..20);
            let u: Array1<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let v: Array1<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut dot = 0.0;
            let mut nu = 0.0;
            let mut nv = 0.0;
            for i in 0..n {
                dot += u[i] * v[i];
            }
            for i in 0..n {
                nu += u[i] * u[i];
            }
            for i in 0..n {
                nv += v[i] * v[i];
            }
            let naive = dot / (nu.sqrt() * nv.sqrt());
            assert!((cosine_value(u.view(), v.view()) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pooling() {
        let wv = toy_vectors();
        let a = wv.vocab.get("a").unwrap();
        let b = wv.vocab.get("b").unwrap();
        assert_eq!(embed_note_mean(&["a"], &wv), wv.vectors.row(a));
        assert_eq!(embed_note_mean(&["zzz", "qq"], &wv), array![0.0, 0.0, 0.0]);
        let mid = embed_note_mean(&["a", "b", "oov"], &wv);
        for j in 0..3 {
            let expected = (wv.vectors[[a, j]] + wv.vectors[[b, j]]) / 2.0;
            assert!((mid[j] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn bow_matrix_rows_are_unit_or_zero() {
        let m = bow_matrix(
            vec!["1".into(), "2".into()],
            &["Chest pain, chest", ""],
            &HashedBow::new(32),
        )
        .unwrap();
        let r0 = m.data.row(0);
        assert!((r0.dot(&r0) - 1.0).abs() < 1e-6);
        assert!(m.data.row(1).iter().all(|v| *v == 0.0));
    }
}
