use crate::model::{AudioRef, FrameRef, MediaBundle, Subset};

pub fn bundle(clip: &str, frames: usize, dims: (usize, usize)) -> MediaBundle {
    let frames = (0..frames)
        .map(|i| FrameRef {
            index: i,
            time: i as f64,
            uri: format!("dataset://frames/{clip}/{i:05}.png"),
        })
        .collect();
    let audio = AudioRef {
        uri: format!("dataset://audio/{clip}.wav"),
        sample_rate: 22050,
        samples: 22050,
    };
    MediaBundle::new(clip, "the thing making noise", frames, dims, audio, Subset::Seen).unwrap()
}
