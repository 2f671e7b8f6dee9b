//! Placeholder camera images: a colored rectangle at the prompt pose over a
//! fixed background.

use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::model::{JointVector, JOINT_COUNT};
use crate::recorder::{PlacementPrompt, Workspace};

pub const IMAGE_WIDTH: u32 = 64;
pub const IMAGE_HEIGHT: u32 = 48;

/// Object footprint, meters.
const OBJECT_HALF_EXTENT: [f64; 2] = [0.02, 0.0125];
const OBJECT_COLOR: [f64; 3] = [200.0, 40.0, 30.0];
const HAND_COLOR: [f64; 3] = [40.0, 60.0, 160.0];

fn background(x: u32, y: u32) -> [f64; 3] {
    let shade = 150.0 + 60.0 * y as f64 / IMAGE_HEIGHT as f64;
    let check = if (x / 8 + y / 8).is_multiple_of(2) { 6.0 } else { 0.0 };
    [shade + check, shade + check, shade - 20.0 + check]
}

fn mean_flexion(q: &JointVector) -> f64 {
    q.iter().map(|v| v.abs()).sum::<f64>() / JOINT_COUNT as f64
}

/// Paints `color` inside the rectangle centered at `center` (pixels) with
/// half extents `half` (pixels), rotated by `rot`.
fn fill_rect(img: &mut RgbImage, center: [f64; 2], half: [f64; 2], rot: f64, color: [f64; 3]) {
    let (s, c) = rot.sin_cos();
    for (x, y, px) in img.enumerate_pixels_mut() {
        let dx = x as f64 + 0.5 - center[0];
        let dy = y as f64 + 0.5 - center[1];
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        if u.abs() <= half[0] && v.abs() <= half[1] {
            *px = to_rgb(color);
        }
    }
}

fn to_rgb(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| v.round().clamp(0.0, 255.0) as u8))
}

fn canvas() -> RgbImage {
    RgbImage::from_fn(IMAGE_WIDTH, IMAGE_HEIGHT, |x, y| to_rgb(background(x, y)))
}

/// Overhead view of the workspace with the object and a hand marker whose
/// size follows the mean joint flexion.
pub fn render_top(prompt: &PlacementPrompt, workspace: &Workspace, q: &JointVector) -> RgbImage {
    let mut img = canvas();
    let span_x = (workspace.x[1] - workspace.x[0]).max(1e-6);
    let span_y = (workspace.y[1] - workspace.y[0]).max(1e-6);
    let px_per_m = (IMAGE_WIDTH as f64 / span_x).min(IMAGE_HEIGHT as f64 / span_y);
    let center = [
        (prompt.center[0] - workspace.x[0]) / span_x * IMAGE_WIDTH as f64,
        (prompt.center[1] - workspace.y[0]) / span_y * IMAGE_HEIGHT as f64,
    ];
    let half = OBJECT_HALF_EXTENT.map(|h| h * px_per_m);
    fill_rect(&mut img, center, half, prompt.rot, OBJECT_COLOR);
    let grip = 3.0 + 4.0 * mean_flexion(q).min(1.5);
    fill_rect(&mut img, [IMAGE_WIDTH as f64 / 2.0, IMAGE_HEIGHT as f64 - 6.0], [grip, 3.0], 0.0, HAND_COLOR);
    img
}

/// Close-up from the palm: the object appears larger, offset by the prompt
/// position and tinted by the thumb pose.
pub fn render_wrist(prompt: &PlacementPrompt, q: &JointVector) -> RgbImage {
    let mut img = canvas();
    let zoom = 600.0;
    let center = [
        IMAGE_WIDTH as f64 / 2.0 + prompt.center[0] * zoom * 0.5,
        IMAGE_HEIGHT as f64 / 2.0 + prompt.center[1] * zoom * 0.5,
    ];
    let half = OBJECT_HALF_EXTENT.map(|h| h * zoom);
    let thumb = q[12..16].iter().sum::<f64>();
    let tint = [OBJECT_COLOR[0], OBJECT_COLOR[1] + 30.0 * thumb.tanh(), OBJECT_COLOR[2]];
    fill_rect(&mut img, center, half, prompt.rot + 0.2 * q[13], tint);
    img
}

pub fn write_png(img: &RgbImage, path: &Path) -> image::ImageResult<()> {
    img.save_with_format(path, ImageFormat::Png)
}
