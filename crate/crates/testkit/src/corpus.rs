//! Deterministic synthetic scenes: layered colored rectangles over a
//! graded backdrop, with depth maps that follow the layout. Stands in
//! for real indoor corpora at desk scale.

use priornet_core::physics::{
    synthesize_haze, transmission_from_depth, DepthMap, HazeParams, Image,
};
use priornet_core::rng::SplitMix64;

#[derive(Debug, Clone)]
pub struct SceneSample {
    pub clean: Image,
    pub depth: DepthMap,
}

/// One procedural scene: background at far depth, a handful of colored
/// rectangles at nearer depths, light texture noise.
pub fn scene(height: usize, width: usize, rng: &mut SplitMix64) -> SceneSample {
    let base = [
        rng.uniform(0.15, 0.6),
        rng.uniform(0.15, 0.6),
        rng.uniform(0.15, 0.6),
    ];
    let grad_x = rng.uniform(-0.25, 0.25);
    let grad_y = rng.uniform(-0.25, 0.25);
    let bg_depth = rng.uniform(0.7, 1.0);

    let mut color = vec![0.0f32; 3 * height * width];
    let mut depth = vec![bg_depth; height * width];
    for c in 0..3 {
        for y in 0..height {
            for x in 0..width {
                color[(c * height + y) * width + x] = base[c]
                    + grad_x * x as f32 / width as f32
                    + grad_y * y as f32 / height as f32;
            }
        }
    }

    let rects = 4 + rng.next_usize(4);
    for _ in 0..rects {
        let rw = 2 + rng.next_usize(width / 2);
        let rh = 2 + rng.next_usize(height / 2);
        let x0 = rng.next_usize(width - rw + 1);
        let y0 = rng.next_usize(height - rh + 1);
        let rect_color = [
            rng.uniform(0.0, 1.0),
            rng.uniform(0.0, 1.0),
            rng.uniform(0.0, 1.0),
        ];
        let rect_depth = rng.uniform(0.05, 0.7);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                for c in 0..3 {
                    color[(c * height + y) * width + x] = rect_color[c];
                }
                depth[y * width + x] = rect_depth;
            }
        }
    }

    for v in &mut color {
        *v += rng.uniform(-0.02, 0.02);
    }
    SceneSample {
        clean: Image::new(height, width, color),
        depth: DepthMap::new(height, width, depth),
    }
}

pub fn scenes(count: usize, height: usize, width: usize, seed: u64) -> Vec<SceneSample> {
    let mut rng = SplitMix64::new(seed);
    (0..count).map(|_| scene(height, width, &mut rng)).collect()
}

/// Synthesize a hazy observation of `sample` with airlight `a` and
/// scattering coefficient `beta`.
pub fn hazy_of(sample: &SceneSample, a: f32, beta: f32) -> Image {
    let t = transmission_from_depth(&sample.depth, beta);
    let params = HazeParams::uniform(a, beta, t);
    synthesize_haze(&sample.clean, &params).expect("matching extents")
}

/// (hazy, clean) training pairs with per-image haze parameters sampled
/// from the given ranges.
pub fn hazy_pairs(
    samples: &[SceneSample],
    seed: u64,
    a_range: (f32, f32),
    beta_range: (f32, f32),
) -> Vec<(Image, Image)> {
    let mut rng = SplitMix64::new(seed);
    samples
        .iter()
        .map(|s| {
            let a = rng.uniform(a_range.0, a_range.1);
            let beta = rng.uniform(beta_range.0, beta_range.1);
            (hazy_of(s, a, beta), s.clean.clone())
        })
        .collect()
}
