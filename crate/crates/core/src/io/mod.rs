//! On-disk formats: DOGMa frames (`DGF1`), target/prediction tensors
//! (`DGT1`), max-IoU maps (`DGA1`), label and detection JSON-lines, and PGM
//! static masks. All binary formats are little-endian.

mod bytes;
pub mod frame;
pub mod labels;
pub mod mask;
pub mod tensor;

pub use frame::{list_frame_files, load_frame, load_frames_dir, store_frame, store_frames_dir};
pub use labels::{
    read_detections, read_labels, write_detections, write_labels, DetectionRecord, FrameDetections, FrameLabels,
    LabelObject,
};
pub use mask::{read_pgm_mask, write_pgm_mask};
pub use tensor::{load_a_map, load_tensors, store_a_map, store_tensors, RawTensors};
