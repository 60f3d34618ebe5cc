use serde::{Deserialize, Serialize};

use crate::data::Pool;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::model::EncoderParams;

/// Retrieval quality over a query/gallery split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    /// `cmc[r]` is the Rank-(r+1) hit rate.
    pub cmc: Vec<f64>,
    pub num_queries: usize,
    pub num_gallery: usize,
}

impl RetrievalMetrics {
    pub fn rank(&self, k: usize) -> f64 {
        self.cmc.get(k - 1).copied().unwrap_or_else(|| self.cmc.last().copied().unwrap_or(0.0))
    }
}

/// Ranks the gallery for each query by ascending cosine distance (ties by
/// gallery order) and reports mAP and the CMC curve up to `max_rank`.
pub fn compute_map_cmc(
    query: &Matrix,
    gallery: &Matrix,
    query_ids: &[u32],
    gallery_ids: &[u32],
    max_rank: usize,
) -> Result<RetrievalMetrics> {
    if query.rows() != query_ids.len() {
        return Err(Error::DimensionMismatch { expected: query.rows(), found: query_ids.len() });
    }
    if gallery.rows() != gallery_ids.len() {
        return Err(Error::DimensionMismatch { expected: gallery.rows(), found: gallery_ids.len() });
    }
    if let Some(&missing) = query_ids.iter().find(|q| !gallery_ids.contains(q)) {
        return Err(Error::QueryIdentityAbsent(missing));
    }
    let max_rank = max_rank.max(1);
    let mut hits = vec![0usize; max_rank];
    let mut ap_sum = 0.0;
    let mut order: Vec<usize> = Vec::with_capacity(gallery.rows());
    let mut dist = vec![0.0; gallery.rows()];
    for (q, &qid) in query.iter_rows().zip(query_ids) {
        for (d, g) in dist.iter_mut().zip(gallery.iter_rows()) {
            *d = 1.0 - dot(q, g);
        }
        order.clear();
        order.extend(0..gallery.rows());
        order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
        let relevant: Vec<bool> = order.iter().map(|&g| gallery_ids[g] == qid).collect();
        ap_sum += average_precision(&relevant);
        if let Some(first) = relevant.iter().position(|&r| r) {
            for h in hits.iter_mut().skip(first) {
                *h += 1;
            }
        }
    }
    let nq = query.rows().max(1) as f64;
    Ok(RetrievalMetrics {
        map: ap_sum / nq,
        cmc: hits.into_iter().map(|h| h as f64 / nq).collect(),
        num_queries: query.rows(),
        num_gallery: gallery.rows(),
    })
}

/// Mean of precision@rank over the ranks of relevant items.
pub fn average_precision(relevant_in_rank_order: &[bool]) -> f64 {
    let mut found = 0usize;
    let mut sum = 0.0;
    for (rank, &rel) in relevant_in_rank_order.iter().enumerate() {
        if rel {
            found += 1;
            sum += found as f64 / (rank + 1) as f64;
        }
    }
    if found == 0 {
        0.0
    } else {
        sum / found as f64
    }
}

/// Query/gallery split of a held-out pool: the first sample of each identity is
/// its query, the rest form the gallery. Identities with a single sample are
/// skipped.
pub fn query_gallery_split(pool: &Pool) -> (Vec<usize>, Vec<usize>) {
    let mut counts = std::collections::HashMap::new();
    for s in pool.samples() {
        *counts.entry(s.identity).or_insert(0usize) += 1;
    }
    let mut seen = std::collections::HashSet::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    for (i, s) in pool.samples().iter().enumerate() {
        if counts[&s.identity] < 2 {
            continue;
        }
        if seen.insert(s.identity) {
            query.push(i);
        } else {
            gallery.push(i);
        }
    }
    (query, gallery)
}

/// Encodes a held-out pool and scores retrieval with [`query_gallery_split`].
pub fn evaluate_encoder(params: &EncoderParams, pool: &Pool, max_rank: usize) -> Result<RetrievalMetrics> {
    let raw = pool_matrix(pool);
    let emb = params.encode_all(&raw)?;
    let (qi, gi) = query_gallery_split(pool);
    let take = |idx: &[usize]| {
        let mut m = Matrix::zeros(idx.len(), emb.cols());
        for (r, &i) in idx.iter().enumerate() {
            m.row_mut(r).copy_from_slice(emb.row(i));
        }
        m
    };
    let ids = pool.identities();
    let qids: Vec<u32> = qi.iter().map(|&i| ids[i]).collect();
    let gids: Vec<u32> = gi.iter().map(|&i| ids[i]).collect();
    compute_map_cmc(&take(&qi), &take(&gi), &qids, &gids, max_rank)
}

/// Raw features of a pool as an `f64` matrix.
pub fn pool_matrix(pool: &Pool) -> Matrix {
    let d = pool.d_raw();
    let mut m = Matrix::zeros(pool.len(), d);
    for (i, s) in pool.samples().iter().enumerate() {
        for (dst, &v) in m.row_mut(i).iter_mut().zip(&s.features) {
            *dst = v as f64;
        }
    }
    m
}
