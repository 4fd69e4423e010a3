//! 2D vascular phantom, catheter kinematics, scripted expert, and renderer.

pub mod episode;
pub mod expert;
pub mod kinematics;
pub mod phantom;
pub mod render;

pub use episode::{generate_episode, Episode};
pub use expert::expert_policy;
pub use kinematics::{step, CatheterState, TipPose, KNOB_GAIN};
pub use phantom::{build_phantom, Segment, TargetPoint, VesselMap, PHANTOM_FORMAT_VERSION};
pub use render::Renderer;
