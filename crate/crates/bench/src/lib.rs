//! Shared input builders for the stage benchmarks.

use lightmotion::{
    build_motion_field, preset, synth_mask, BoolGrid, CameraParams, CounterRng, LatentVideo,
    MotionField,
};

/// Default benchmark clip shape, matching the pipeline defaults.
pub const FRAMES: usize = 16;
pub const CHANNELS: usize = 4;
pub const SIDE: usize = 64;

/// A seeded standard-normal clip at the default shape.
pub fn bench_latent(seed: u64) -> LatentVideo {
    let mut data = vec![0.0f32; FRAMES * CHANNELS * SIDE * SIDE];
    CounterRng::new(seed, &[0xBE]).fill_normal_f32(&mut data);
    LatentVideo::new(FRAMES, CHANNELS, SIDE, SIDE, data).unwrap()
}

/// The half-width leftward pan, the heaviest preset for the fill stage.
pub fn pan_params() -> CameraParams {
    preset("pan-left-large").unwrap()
}

pub fn pan_field() -> MotionField {
    build_motion_field(&pan_params(), FRAMES, SIDE, SIDE).unwrap()
}

/// A centered elliptical foreground covering roughly an eighth of the frame.
pub fn foreground() -> BoolGrid {
    synth_mask(
        lightmotion::MaskShape::Ellipse {
            center: (31.5, 31.5),
            extents: (12.0, 12.0),
        },
        FRAMES,
        SIDE,
        SIDE,
    )
    .unwrap()
}
