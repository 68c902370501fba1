//! Clip containers, frame selection and caption filtering.

mod captions;
mod container;
mod sampling;

pub use captions::{filter_caption, parse_corpus, CaptionRecord, CaptionRules, Verdict, DEFAULT_RULES};
pub use container::{
    decode_video, encode_video, read_video, write_video, VIDEO_HEADER_LEN, VIDEO_MAGIC,
    VIDEO_VERSION,
};
pub use sampling::{fps_sample, uniform_sample, SampleSpec, VideoMeta, DEFAULT_MAX_FRAMES};
