//! Containerized video input through the `ffmpeg` and `ffprobe` binaries.

use std::path::Path;
use std::process::Command;

fn run(cmd: &mut Command) -> Result<Vec<u8>, String> {
    let program = cmd.get_program().to_string_lossy().into_owned();
    let out = cmd.output().map_err(|e| format!("cannot run {program}: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "{program} failed: {}",
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out.stdout)
}

/// Container duration in seconds.
pub fn probe_duration(video: &Path) -> Result<f64, String> {
    let out = run(Command::new("ffprobe")
        .args([
            "-v",
            "error",
            "-show_entries",
            "format=duration",
            "-of",
            "default=noprint_wrappers=1:nokey=1",
        ])
        .arg(video))?;
    let text = String::from_utf8_lossy(&out);
    text.trim()
        .parse::<f64>()
        .map_err(|_| format!("ffprobe reported no duration for {}", video.display()))
}

/// Writes the frame shown at `time` seconds as a PNG.
pub fn extract_frame(video: &Path, time: f64, out: &Path) -> Result<(), String> {
    run(Command::new("ffmpeg")
        .args(["-v", "error", "-y", "-ss", &format!("{time:.6}"), "-i"])
        .arg(video)
        .args(["-frames:v", "1"])
        .arg(out))
    .map(|_| ())
}

/// Writes the audio track as mono 16-bit WAV at `rate`.
pub fn extract_audio(video: &Path, rate: u32, out: &Path) -> Result<(), String> {
    run(Command::new("ffmpeg")
        .args(["-v", "error", "-y", "-i"])
        .arg(video)
        .args(["-vn", "-ac", "1", "-ar", &rate.to_string(), "-sample_fmt", "s16"])
        .arg(out))
    .map(|_| ())
}
