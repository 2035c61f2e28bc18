//! Text formats: FROSTT sparse tensors and Kruskal models.

mod frostt;
mod model_format;

pub use frostt::{parse_frostt, read_frostt_file, write_frostt, write_frostt_file};
pub use model_format::{read_model, read_model_file, write_model, write_model_file, MODEL_FORMAT_HEADER};
