//! Project files, undo/redo history and editor session restore.

pub mod history;
pub mod project;
pub mod sidecar;
pub mod state;

pub use history::{CanvasHistory, Checkpoint};
pub use project::{open_project, save_project, ProjectDoc, ProjectError};
pub use state::{default_state_dir, SessionState, StateManager, Tab, Viewport};
