//! Gesture-gated demonstration recording.

mod episode;
mod gesture;
mod prompt;

pub use episode::{
    image_name, load_episode, read_frames, Episode, EpisodeMeta, EpisodeWriter, RecorderError, FRAMES_FILE, META_FILE,
    TOP_DIR, WRIST_DIR,
};
pub use gesture::{detect_fist, step_gesture, GestureConfig, GestureEvent, GestureState};
pub use prompt::{read_prompts, write_prompts, PlacementPrompt, PromptGenerator, Workspace};
