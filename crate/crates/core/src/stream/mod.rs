//! Post data model and windowed access over a time-ordered stream.

mod post;
mod window;

pub use post::{extract_hashtags, parse_post_record, Post};
pub use window::{PostStream, WindowKind, WindowSpec};
