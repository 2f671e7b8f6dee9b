//! Simulated teleoperation loop: synthetic operator streams, a spring-model
//! hand, the wire protocol and the stream server.

pub mod http;
pub mod pipeline;
pub mod protocol;
pub mod queue;
pub mod render;
pub mod server;
pub mod session;
pub mod state;
pub mod synth;
pub mod websocket;

pub use pipeline::{ControlStep, StreamPipeline};
pub use protocol::{decode_message, GestureKind, Hand, ProtocolError, StreamMessage};
pub use server::{serve_stream, ServeError, ServerConfig, ServerHandle, TickStats, DEFAULT_PORT};
pub use session::{simulate, SimulateConfig, SimulateError, SimulateSummary};
pub use state::{step_sim, SimState, DEFAULT_K_SPRING, DEFAULT_TICK_HZ};
pub use synth::{frame_count, gesture_stream, synth_stream, synth_trajectory, Profile, SynthParams, SynthStream};
