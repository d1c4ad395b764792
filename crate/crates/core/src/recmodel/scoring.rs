use ndarray::{Array2, Axis};

use super::EmbeddingParams;
use crate::data::InteractionMatrix;

/// Relevance scores `user_emb[u] · item_emb[v]` for the given users (rows) and
/// every item (columns).
pub fn predict_scores(p: &EmbeddingParams, users: &[usize]) -> Array2<f64> {
    p.user.select(Axis(0), users).dot(&p.item.t())
}

/// Indices of the `k` largest scores outside `exclude` (sorted), ties broken by
/// ascending item index. Fewer than `k` items are returned when the catalogue
/// outside `exclude` is smaller.
pub fn topk_from_scores(scores: &[f64], exclude: &[usize], k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|v| exclude.binary_search(v).is_err()).collect();
    let by_rank = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < candidates.len() {
        if k == 0 {
            return Vec::new();
        }
        candidates.select_nth_unstable_by(k - 1, by_rank);
        candidates.truncate(k);
    }
    candidates.sort_by(by_rank);
    candidates
}

/// Top-`k` items for `user`, excluding the user's training interactions.
pub fn topk_recommend(p: &EmbeddingParams, train: &InteractionMatrix, user: usize, k: usize) -> Vec<usize> {
    let scores = p.item.dot(&p.user.row(user));
    let scores = scores.as_slice().expect("contiguous");
    topk_from_scores(scores, train.row(user), k)
}
