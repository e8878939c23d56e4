//! Answer aggregation across decoded paths.
//!
//! The default strategy is greedy semantic clustering: answers are visited
//! in path order, each joins the lowest-index cluster whose representative
//! has cosine similarity at least `tau`, otherwise it founds a new cluster
//! and becomes its representative. The winning cluster is the one with the
//! largest summed confidence.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::ResponseCache;
use crate::error::{Error, Result};
use crate::remote::JsonClient;

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Bag-of-words embedder using feature hashing and L2 normalization.
///
/// Words are lowercase alphanumeric runs; text with no such run but some
/// non-whitespace content is treated as a single word, so only blank text
/// maps to the zero vector.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 1024 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let lower = text.to_lowercase();
        let mut words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .collect();
        let trimmed = lower.trim();
        if words.is_empty() && !trimmed.is_empty() {
            words.push(trimmed);
        }
        let mut v = vec![0.0; self.dim];
        for w in words {
            v[(fnv1a64(w) % self.dim as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Embeddings endpoint client (`{"input": text}` in, `data[0].embedding` out).
pub struct HttpEmbedder {
    client: JsonClient,
    model: Option<String>,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        api_key: Option<String>,
        model: Option<String>,
        cache: Option<Arc<ResponseCache>>,
    ) -> Self {
        Self {
            client: JsonClient::new(url).api_key(api_key).cache(cache),
            model,
        }
    }

    pub fn with_client(mut self, client: JsonClient) -> Self {
        self.client = client;
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut body = json!({ "input": text });
        if let Some(m) = &self.model {
            body["model"] = json!(m);
        }
        let resp = self.client.post(&body)?;
        let arr = resp
            .pointer("/data/0/embedding")
            .or_else(|| resp.get("embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| Error::BadResponse("missing embedding".into()))?;
        arr.iter()
            .map(|x| {
                x.as_f64()
                    .ok_or_else(|| Error::BadResponse("non-numeric embedding".into()))
            })
            .collect()
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    // identical vectors must reach a threshold of exactly 1
    if u == v {
        return Ok(1.0);
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    #[default]
    Cluster,
    Maxpath,
    Majority,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representative {
    #[default]
    First,
    Centroid,
    MaxConf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregationConfig {
    /// Cosine similarity threshold for joining a cluster.
    pub tau: f64,
    pub strategy: Strategy,
    pub representative: Representative,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            tau: 0.8,
            strategy: Strategy::Cluster,
            representative: Representative::First,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau {} not in (0, 1]", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMember {
    pub text: String,
    pub confidence: f64,
    /// Index of the path (answer) in input order.
    pub index: usize,
    /// Similarity to the representative when the member joined.
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCluster {
    pub members: Vec<ClusterMember>,
    pub representative: String,
    pub cumulative: f64,
}

impl AnswerCluster {
    fn found(text: &str, confidence: f64, index: usize) -> Self {
        Self {
            members: vec![ClusterMember {
                text: text.to_string(),
                confidence,
                index,
                similarity: 1.0,
            }],
            representative: text.to_string(),
            cumulative: confidence,
        }
    }
}

fn check_lengths(answers: &[String], confidences: &[f64]) -> Result<()> {
    if answers.is_empty() {
        return Err(Error::Config("no answers to aggregate".into()));
    }
    if answers.len() != confidences.len() {
        return Err(Error::Config(format!(
            "{} answers but {} confidences",
            answers.len(),
            confidences.len()
        )));
    }
    Ok(())
}

/// Greedy clustering over precomputed embeddings (one per answer).
pub fn cluster_embedded(
    answers: &[String],
    confidences: &[f64],
    embeddings: &[Vec<f64>],
    tau: f64,
) -> Result<Vec<AnswerCluster>> {
    check_lengths(answers, confidences)?;
    let mut clusters: Vec<AnswerCluster> = Vec::new();
    let mut rep_embeddings: Vec<&[f64]> = Vec::new();
    for (i, (text, &conf)) in answers.iter().zip(confidences).enumerate() {
        let mut joined = false;
        for (j, rep) in rep_embeddings.iter().enumerate() {
            let sim = cosine(&embeddings[i], rep)?;
            if sim >= tau {
                let c = &mut clusters[j];
                c.members.push(ClusterMember {
                    text: text.clone(),
                    confidence: conf,
                    index: i,
                    similarity: sim,
                });
                c.cumulative += conf;
                joined = true;
                break;
            }
        }
        if !joined {
            clusters.push(AnswerCluster::found(text, conf, i));
            rep_embeddings.push(&embeddings[i]);
        }
    }
    Ok(clusters)
}

/// Embeds every answer in parallel, then clusters sequentially.
pub fn greedy_cluster(
    answers: &[String],
    confidences: &[f64],
    tau: f64,
    embedder: &dyn Embedder,
) -> Result<Vec<AnswerCluster>> {
    check_lengths(answers, confidences)?;
    let embeddings = embed_all(answers, embedder)?;
    cluster_embedded(answers, confidences, &embeddings, tau)
}

fn embed_all(answers: &[String], embedder: &dyn Embedder) -> Result<Vec<Vec<f64>>> {
    // identical strings share one request
    let mut unique: HashMap<&str, usize> = HashMap::new();
    let mut order: Vec<&str> = Vec::new();
    for a in answers {
        unique.entry(a.as_str()).or_insert_with(|| {
            order.push(a.as_str());
            order.len() - 1
        });
    }
    let vecs: Vec<Vec<f64>> = order
        .par_iter()
        .map(|t| embedder.embed(t))
        .collect::<Result<_>>()?;
    Ok(answers
        .iter()
        .map(|a| vecs[unique[a.as_str()]].clone())
        .collect())
}

/// Index of the cluster with the largest cumulative confidence; ties go to
/// the earliest-created cluster.
pub fn select_cluster(clusters: &[AnswerCluster]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, c) in clusters.iter().enumerate() {
        if best.is_none_or(|b| c.cumulative > clusters[b].cumulative) {
            best = Some(j);
        }
    }
    best
}

pub fn select_answer(clusters: &[AnswerCluster]) -> Option<&str> {
    select_cluster(clusters).map(|j| clusters[j].representative.as_str())
}

/// Index of the highest-confidence answer; ties go to the lowest index.
pub fn maxpath(confidences: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in confidences.iter().enumerate() {
        if best.is_none_or(|b| c > confidences[b]) {
            best = Some(i);
        }
    }
    best
}

/// Trim, collapse internal whitespace, casefold.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Index of the first answer in the plurality group after normalization.
pub fn majority_vote<S: AsRef<str>>(answers: &[S]) -> Option<usize> {
    let mut counts: HashMap<String, (usize, usize)> = HashMap::new();
    for (i, a) in answers.iter().enumerate() {
        counts
            .entry(normalize_answer(a.as_ref()))
            .or_insert((0, i))
            .0 += 1;
    }
    counts
        .into_values()
        .max_by(|(ca, ia), (cb, ib)| ca.cmp(cb).then(ib.cmp(ia)))
        .map(|(_, first)| first)
}

/// Member chosen as representative under an alternative strategy.
///
/// Returns the member's position inside `cluster.members`.
pub fn representative_variant(
    cluster: &AnswerCluster,
    mode: Representative,
    embedder: &dyn Embedder,
) -> Result<usize> {
    match mode {
        Representative::First => Ok(0),
        Representative::MaxConf => {
            let confs: Vec<f64> = cluster.members.iter().map(|m| m.confidence).collect();
            Ok(maxpath(&confs).unwrap_or(0))
        }
        Representative::Centroid => {
            let embs: Vec<Vec<f64>> = cluster
                .members
                .iter()
                .map(|m| embedder.embed(&m.text))
                .collect::<Result<_>>()?;
            let dim = embs[0].len();
            let mut mean = vec![0.0; dim];
            for e in &embs {
                if e.len() != dim {
                    return Err(Error::DimensionMismatch {
                        left: dim,
                        right: e.len(),
                    });
                }
                mean.iter_mut().zip(e).for_each(|(m, x)| *m += x);
            }
            let n = embs.len() as f64;
            mean.iter_mut().for_each(|m| *m /= n);
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (i, e) in embs.iter().enumerate() {
                let s = cosine(e, &mean)?;
                if s > best_sim {
                    best = i;
                    best_sim = s;
                }
            }
            Ok(best)
        }
    }
}

/// Outcome of aggregating one question's answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregation {
    pub answer: String,
    /// Index (in input order) of the path whose answer was selected.
    pub path_index: usize,
    /// Clusters, when the clustering strategy ran.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clusters: Vec<AnswerCluster>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_index: Option<usize>,
}

pub fn aggregate(
    answers: &[String],
    confidences: &[f64],
    cfg: &AggregationConfig,
    embedder: &dyn Embedder,
) -> Result<Aggregation> {
    cfg.validate()?;
    check_lengths(answers, confidences)?;
    match cfg.strategy {
        Strategy::Maxpath => {
            let i = maxpath(confidences).unwrap_or(0);
            Ok(Aggregation {
                answer: answers[i].clone(),
                path_index: i,
                clusters: Vec::new(),
                cluster_index: None,
            })
        }
        Strategy::Majority => {
            let i = majority_vote(answers).unwrap_or(0);
            Ok(Aggregation {
                answer: answers[i].clone(),
                path_index: i,
                clusters: Vec::new(),
                cluster_index: None,
            })
        }
        Strategy::Cluster => {
            let clusters = greedy_cluster(answers, confidences, cfg.tau, embedder)?;
            let j = select_cluster(&clusters).unwrap_or(0);
            let m = representative_variant(&clusters[j], cfg.representative, embedder)?;
            let member = &clusters[j].members[m];
            Ok(Aggregation {
                answer: member.text.clone(),
                path_index: member.index,
                cluster_index: Some(j),
                clusters,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Looks embeddings up in a fixed table.
    struct TableEmbedder(HashMap<String, Vec<f64>>);

    impl Embedder for TableEmbedder {
        fn embed(&self, text: &str) -> Result<Vec<f64>> {
            Ok(self.0[text].clone())
        }
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    fn abb_embedder() -> TableEmbedder {
        // sim(A, A') = 0.95, sim(A, B) = 0.3
        let a = vec![1.0, 0.0];
        let a2 = vec![0.95, (1.0f64 - 0.95 * 0.95).sqrt()];
        let b = vec![0.3, (1.0f64 - 0.09).sqrt()];
        TableEmbedder(HashMap::from([
            ("A".to_string(), a),
            ("A'".to_string(), a2),
            ("B".to_string(), b),
        ]))
    }

    #[test]
    fn clusters_and_selection() {
        let e = abb_embedder();
        let cl = greedy_cluster(&s(&["A", "A'", "B"]), &[0.2, 0.3, 0.4], 0.8, &e).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(cl[0].members.len(), 2);
        assert!((cl[0].cumulative - 0.5).abs() < 1e-12);
        assert_eq!(cl[1].representative, "B");
        assert!((cl[1].cumulative - 0.4).abs() < 1e-12);
        assert_eq!(select_answer(&cl), Some("A"));
        assert!((cl[0].members[1].similarity - 0.95).abs() < 1e-12);
    }

    #[test]
    fn single_answer_cluster() {
        let cl = greedy_cluster(&s(&["x"]), &[0.1], 0.8, &HashEmbedder::default()).unwrap();
        assert_eq!(cl.len(), 1);
        assert_eq!(cl[0].representative, "x");
    }

    #[test]
    fn tau_one_separates_distinct_texts() {
        let answers = s(&["paris", "lyon", "the city of paris", "nice", "marseille"]);
        let cl = greedy_cluster(&answers, &[0.1; 5], 1.0, &HashEmbedder::default()).unwrap();
        assert_eq!(cl.len(), 5);
        // identical text still merges at tau = 1
        let cl = greedy_cluster(
            &s(&["paris", "Paris"]),
            &[0.1; 2],
            1.0,
            &HashEmbedder::default(),
        )
        .unwrap();
        assert_eq!(cl.len(), 1);
    }

    #[test]
    fn empty_answers_never_merge() {
        let cl = greedy_cluster(&s(&["", ""]), &[0.1; 2], 0.5, &HashEmbedder::default()).unwrap();
        assert_eq!(cl.len(), 2);
    }

    #[test]
    fn tie_rules() {
        let a = AnswerCluster::found("a", 0.5, 0);
        let b = AnswerCluster::found("b", 0.5, 1);
        assert_eq!(select_answer(&[a.clone(), b]), Some("a"));
        assert_eq!(select_answer(&[a]), Some("a"));
        assert_eq!(maxpath(&[0.2, 0.9, 0.1]), Some(1));
        assert_eq!(maxpath(&[0.3, 0.3]), Some(0));
        assert_eq!(maxpath(&[0.3]), Some(0));
        assert_eq!(maxpath(&[]), None);
    }

    #[test]
    fn majority_examples() {
        assert_eq!(majority_vote(&["24", "24", "25"]), Some(0));
        assert_eq!(majority_vote(&["x", "y", "z"]), Some(0));
        assert_eq!(majority_vote(&["a", "A"]), Some(0));
        assert_eq!(majority_vote(&["b", " a ", "A", "b c", "a"]), Some(1));
    }

    #[test]
    fn representative_variants() {
        let e = HashEmbedder::default();
        let single = AnswerCluster::found("solo", 0.4, 3);
        for mode in [
            Representative::First,
            Representative::Centroid,
            Representative::MaxConf,
        ] {
            assert_eq!(representative_variant(&single, mode, &e).unwrap(), 0);
        }
        let mut two = AnswerCluster::found("p", 0.1, 0);
        two.members.push(ClusterMember {
            text: "q".into(),
            confidence: 0.9,
            index: 1,
            similarity: 0.9,
        });
        assert_eq!(
            representative_variant(&two, Representative::MaxConf, &e).unwrap(),
            1
        );
    }

    #[test]
    fn centroid_picks_nearest_member() {
        // mean of (1,0), (0.8,0.6), (0,1) is (0.6, 0.5333..); cosines:
        // 0.747, 0.9915, 0.664 -> member 1
        let t = TableEmbedder(HashMap::from([
            ("u".to_string(), vec![1.0, 0.0]),
            ("v".to_string(), vec![0.8, 0.6]),
            ("w".to_string(), vec![0.0, 1.0]),
        ]));
        let mut c = AnswerCluster::found("u", 0.1, 0);
        for (i, x) in ["v", "w"].iter().enumerate() {
            c.members.push(ClusterMember {
                text: x.to_string(),
                confidence: 0.1,
                index: i + 1,
                similarity: 0.9,
            });
        }
        assert_eq!(
            representative_variant(&c, Representative::Centroid, &t).unwrap(),
            1
        );
    }

    #[test]
    fn aggregate_strategies() {
        let e = abb_embedder();
        let answers = s(&["A", "A'", "B"]);
        let confs = [0.2, 0.3, 0.4];
        let cfg = AggregationConfig::default();
        let agg = aggregate(&answers, &confs, &cfg, &e).unwrap();
        assert_eq!((agg.answer.as_str(), agg.path_index), ("A", 0));
        let mp = AggregationConfig {
            strategy: Strategy::Maxpath,
            ..cfg.clone()
        };
        assert_eq!(aggregate(&answers, &confs, &mp, &e).unwrap().answer, "B");
        let mc = AggregationConfig {
            representative: Representative::MaxConf,
            ..cfg
        };
        assert_eq!(aggregate(&answers, &confs, &mc, &e).unwrap().answer, "A'");
        assert!(aggregate(&answers, &confs[..2], &mp, &e).is_err());
    }
}
