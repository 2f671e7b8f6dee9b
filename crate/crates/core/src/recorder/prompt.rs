use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where the object should be placed for the next demonstration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementPrompt {
    /// Rectangle center in the palm workspace, meters.
    pub center: [f64; 2],
    pub rot: f64,
}

/// Axis-aligned bounds for prompts: `[min, max]` per coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub x: [f64; 2],
    pub y: [f64; 2],
    pub rot: [f64; 2],
}

impl Default for Workspace {
    fn default() -> Self {
        Self { x: [-0.1, 0.1], y: [-0.08, 0.08], rot: [-std::f64::consts::PI, std::f64::consts::PI] }
    }
}

impl Workspace {
    pub fn contains(&self, prompt: &PlacementPrompt) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| v >= lo && v <= hi;
        inside(prompt.center[0], self.x) && inside(prompt.center[1], self.y) && inside(prompt.rot, self.rot)
    }
}

/// Seeded prompt stream; a seed fixes the whole sequence.
#[derive(Clone, Debug)]
pub struct PromptGenerator {
    rng: ChaCha8Rng,
    workspace: Workspace,
}

impl PromptGenerator {
    pub fn new(seed: u64, workspace: Workspace) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), workspace }
    }

    pub fn next_prompt(&mut self) -> PlacementPrompt {
        let mut draw = |[lo, hi]: [f64; 2]| if hi > lo { self.rng.random_range(lo..=hi) } else { lo };
        let x = draw(self.workspace.x);
        let y = draw(self.workspace.y);
        let rot = draw(self.workspace.rot);
        PlacementPrompt { center: [x, y], rot }
    }
}

impl Iterator for PromptGenerator {
    type Item = PlacementPrompt;

    fn next(&mut self) -> Option<PlacementPrompt> {
        Some(self.next_prompt())
    }
}

pub fn write_prompts(path: &Path, prompts: &[PlacementPrompt]) -> std::io::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(prompts)?)
}

pub fn read_prompts(path: &Path) -> std::io::Result<Vec<PlacementPrompt>> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
