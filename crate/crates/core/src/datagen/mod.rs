//! Synthetic training triples from procedurally rendered glyphs, image
//! warping and IDX ingestion.

mod dataset;
mod export;
mod glyph;
mod image;
mod triple;

pub use dataset::{
    idx_image_bytes, idx_label_bytes, load_idx, make_glyph_set, make_rotated_set, parse_idx_images,
    parse_idx_labels, rotate_dataset, shuffled_order, Dataset,
};
pub use export::{
    export_triples, load_triples, read_array, ArrayFile, DatagenSpec, Manifest, MANIFEST_FILE,
    MANIFEST_SCHEMA_VERSION,
};
pub use glyph::{glyph_pool, Glyph, GlyphShape};
pub use image::{warp, warp_in_frame, Image, WarpParams};
pub use triple::{
    images_tensor, item_rng, sample_image_triple, sample_triple, sample_triples, triple_batch,
    TrainingTriple,
};
