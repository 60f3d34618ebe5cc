//! Shared fixtures for the criterion benchmarks.

use mcl_core::metrics::pool_matrix;
use mcl_core::{generate_pool, EncoderDims, EncoderInit, EncoderParams, GenSpec, Matrix};

/// Unit-norm embeddings of a synthetic pool under a randomly initialized encoder,
/// which is what the first clustering pass of a run sees.
pub fn embeddings(ids: usize, per_id: usize, seed: u64) -> Matrix {
    let pool = generate_pool(&GenSpec {
        num_identities: ids,
        samples_per_identity: per_id,
        d_raw: 64,
        intra_class_sigma: 0.35,
        seed,
    })
    .expect("valid spec");
    let params = EncoderParams::init(EncoderDims { d_raw: 64, d_h: 128, d_emb: 64 }, EncoderInit::Random, seed);
    params.encode_all(&pool_matrix(&pool)).expect("finite embeddings")
}
