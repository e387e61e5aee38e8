use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
}

/// Drops purely numeric tokens and tokens found in more than `max_df` of
/// the documents.
pub fn prune_terms<S: AsRef<str>>(docs: &[Vec<S>], max_df: f64) -> Vec<Vec<String>> {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let uniq: std::collections::HashSet<&str> = doc.iter().map(|t| t.as_ref()).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1;
        }
    }
    let limit = max_df * docs.len() as f64;
    docs.iter()
        .map(|doc| {
            doc.iter()
                .map(|t| t.as_ref())
                .filter(|t| !t.chars().all(|c| c.is_ascii_digit()) && df[t] as f64 <= limit)
                .map(str::to_owned)
                .collect()
        })
        .collect()
}

/// Class-based TF-IDF weights W(t,c) = (tf(t,c)/w_c) · log(1 + A/f_t)
/// for every term present in each cluster. `None` marks an empty cluster.
pub fn ctfidf_weights<S: AsRef<str>>(
    docs: &[Vec<S>],
    assignments: &[usize],
    k: usize,
) -> Result<Vec<Option<BTreeMap<String, f64>>>> {
    if docs.len() != assignments.len() {
        return Err(Error::Dimension {
            expected: docs.len(),
            actual: assignments.len(),
        });
    }
    if k < 2 {
        return Err(Error::Config(
            "class-based TF-IDF needs at least two clusters".into(),
        ));
    }
    if let Some(bad) = assignments.iter().find(|a| **a >= k) {
        return Err(Error::Config(format!("cluster id {bad} outside [0, {k})")));
    }
    let mut tf: Vec<HashMap<&str, u64>> = vec![HashMap::new(); k];
    for (doc, &c) in docs.iter().zip(assignments) {
        for t in doc {
            *tf[c].entry(t.as_ref()).or_default() += 1;
        }
    }
    let sizes: Vec<u64> = tf.iter().map(|m| m.values().sum()).collect();
    let non_empty: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    if non_empty.is_empty() {
        return Ok(vec![None; k]);
    }
    let avg = non_empty.iter().map(|&c| sizes[c] as f64).sum::<f64>() / non_empty.len() as f64;
    let mut f: HashMap<&str, u64> = HashMap::new();
    for m in &tf {
        for (t, n) in m {
            *f.entry(t).or_default() += n;
        }
    }
    Ok((0..k)
        .map(|c| {
            if sizes[c] == 0 {
                tracing::warn!(cluster = c, "empty cluster skipped in term ranking");
                return None;
            }
            let w_c = sizes[c] as f64;
            Some(
                tf[c]
                    .iter()
                    .map(|(t, n)| {
                        (
                            t.to_string(),
                            (*n as f64 / w_c) * (1.0 + avg / f[t] as f64).ln(),
                        )
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Top `top_n` terms per cluster by class-based TF-IDF, ties broken by term.
pub fn ctfidf_terms<S: AsRef<str>>(
    docs: &[Vec<S>],
    assignments: &[usize],
    k: usize,
    top_n: usize,
) -> Result<Vec<Vec<TermWeight>>> {
    Ok(ctfidf_weights(docs, assignments, k)?
        .into_iter()
        .map(|w| {
            let mut ranked: Vec<TermWeight> = w
                .unwrap_or_default()
                .into_iter()
                .map(|(term, weight)| TermWeight { term, weight })
                .collect();
            ranked.sort_by(|a, b| {
                b.weight
                    .total_cmp(&a.weight)
                    .then_with(|| a.term.cmp(&b.term))
            });
            ranked.truncate(top_n);
            ranked
        })
        .collect())
}
