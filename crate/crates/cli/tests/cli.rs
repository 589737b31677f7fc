use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use stn::Error;
use stn_cli::wav::{read_wav, write_wav, AudioBuffer, BitDepth};
use tempfile::TempDir;

fn stn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn test_signal(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / 44100.0;
            let click = if i % 11025 == 5000 { 0.5 } else { 0.0 };
            0.3 * (2.0 * std::f64::consts::PI * 330.0 * t).sin() + click + 0.01 * ((i * 7919 % 1000) as f64 / 500.0 - 1.0)
        })
        .collect()
}

fn mono(x: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(vec![x], 44100.0, BitDepth::Float32).unwrap()
}

fn wav_header(format: u16, channels: u16, bits: u16, data_len: u32) -> Vec<u8> {
    let align = channels * bits / 8;
    let mut v = Vec::new();
    v.extend_from_slice(b"RIFF");
    v.extend_from_slice(&(36 + data_len).to_le_bytes());
    v.extend_from_slice(b"WAVEfmt ");
    v.extend_from_slice(&16u32.to_le_bytes());
    v.extend_from_slice(&format.to_le_bytes());
    v.extend_from_slice(&channels.to_le_bytes());
    v.extend_from_slice(&44100u32.to_le_bytes());
    v.extend_from_slice(&(44100 * align as u32).to_le_bytes());
    v.extend_from_slice(&align.to_le_bytes());
    v.extend_from_slice(&bits.to_le_bytes());
    v.extend_from_slice(b"data");
    v.extend_from_slice(&data_len.to_le_bytes());
    v
}

#[test]
fn pcm16_silence_reads_as_zeros() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("silence.wav");
    let mut bytes = wav_header(1, 1, 16, 88200);
    bytes.extend(std::iter::repeat(0u8).take(88200));
    std::fs::write(&path, bytes).unwrap();
    let buf = read_wav(&path).unwrap();
    assert_eq!(buf.channels, vec![vec![0.0; 44100]]);
    assert_eq!(buf.sample_rate, 44100.0);
    assert_eq!(buf.source_bit_depth, BitDepth::Pcm16);
}

#[test]
fn pcm16_full_scale_value() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("fs.wav");
    let mut bytes = wav_header(1, 1, 16, 4);
    bytes.extend_from_slice(&32767i16.to_le_bytes());
    bytes.extend_from_slice(&(-32768i16).to_le_bytes());
    std::fs::write(&path, bytes).unwrap();
    assert_eq!(read_wav(&path).unwrap().channels[0], vec![32767.0 / 32768.0, -1.0]);
}

#[test]
fn float32_round_trip_is_sample_identical() {
    let dir = TempDir::new().unwrap();
    let (a, b) = (dir.path().join("a.wav"), dir.path().join("b.wav"));
    let x: Vec<f64> = test_signal(5000).iter().map(|&v| v as f32 as f64).collect();
    let stereo = AudioBuffer::new(vec![x.clone(), x.iter().map(|v| -v).collect()], 48000.0, BitDepth::Float32).unwrap();
    write_wav(&a, &stereo, BitDepth::Float32).unwrap();
    let first = read_wav(&a).unwrap();
    write_wav(&b, &first, BitDepth::Float32).unwrap();
    assert_eq!(read_wav(&b).unwrap(), stereo);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn pcm_writes_clip() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("clip.wav");
    write_wav(&path, &mono(vec![1.5, -1.5, 0.0]), BitDepth::Pcm16).unwrap();
    assert_eq!(read_wav(&path).unwrap().channels[0], vec![32767.0 / 32768.0, -1.0, 0.0]);
    write_wav(&path, &mono(vec![1.5, -1.5]), BitDepth::Pcm24).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.source_bit_depth, BitDepth::Pcm24);
    assert_eq!(back.channels[0], vec![8_388_607.0 / 8_388_608.0, -1.0]);
}

#[test]
fn extensible_float_is_read() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("ext.wav");
    let mut v = Vec::new();
    v.extend_from_slice(b"RIFF");
    v.extend_from_slice(&(4 + 48 + 8 + 8u32).to_le_bytes());
    v.extend_from_slice(b"WAVEfmt ");
    v.extend_from_slice(&40u32.to_le_bytes());
    v.extend_from_slice(&0xFFFEu16.to_le_bytes());
    v.extend_from_slice(&1u16.to_le_bytes());
    v.extend_from_slice(&44100u32.to_le_bytes());
    v.extend_from_slice(&(44100 * 4u32).to_le_bytes());
    v.extend_from_slice(&4u16.to_le_bytes());
    v.extend_from_slice(&32u16.to_le_bytes());
    v.extend_from_slice(&22u16.to_le_bytes());
    v.extend_from_slice(&32u16.to_le_bytes());
    v.extend_from_slice(&4u32.to_le_bytes());
    v.extend_from_slice(&3u16.to_le_bytes());
    v.extend_from_slice(&[0u8; 14]);
    v.extend_from_slice(b"data");
    v.extend_from_slice(&8u32.to_le_bytes());
    v.extend_from_slice(&0.25f32.to_le_bytes());
    v.extend_from_slice(&(-0.5f32).to_le_bytes());
    std::fs::write(&path, v).unwrap();
    assert_eq!(read_wav(&path).unwrap().channels[0], vec![0.25, -0.5]);
}

fn format_offset(bytes: Vec<u8>) -> u64 {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.wav");
    std::fs::write(&path, bytes).unwrap();
    match read_wav(&path) {
        Err(Error::Format { offset, .. }) => offset,
        other => panic!("expected a format error, got {other:?}"),
    }
}

#[test]
fn malformed_files_report_offsets() {
    let mut bad_sig = wav_header(1, 1, 16, 0);
    bad_sig[..4].copy_from_slice(b"RIFX");
    assert_eq!(format_offset(bad_sig), 0);
    let mut bad_wave = wav_header(1, 1, 16, 0);
    bad_wave[8..12].copy_from_slice(b"AVI ");
    assert_eq!(format_offset(bad_wave), 8);
    assert_eq!(format_offset(wav_header(1, 1, 8, 0)), 20);
    let mut short = wav_header(1, 1, 16, 100);
    short.extend_from_slice(&[0u8; 10]);
    assert_eq!(format_offset(short), 44);
    assert_eq!(format_offset(b"RIF".to_vec()), 0);
}

#[test]
fn missing_input_is_io_exit() {
    let out = stn(&["decompose", "/nonexistent/x.wav"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_exit_with_help() {
    let out = stn(&["decompose", "x.wav", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_parameter_is_usage_exit() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(8000)), BitDepth::Float32).unwrap();
    let out = stn(&["decompose", p(&input), "--method", "nmf"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn non_finite_input_is_numeric_exit() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("nan.wav");
    let mut x = test_signal(8000);
    x[100] = f64::NAN;
    write_wav(&input, &mono(x), BitDepth::Float32).unwrap();
    assert_eq!(stn(&["decompose", p(&input)]).status.code(), Some(3));
}

#[test]
fn silence_decomposes_to_silence() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("silence.wav");
    write_wav(&input, &mono(vec![0.0; 44100]), BitDepth::Pcm16).unwrap();
    let out = stn(&["decompose", p(&input), "--method", "enhanced"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for part in ["sines", "transients", "noise"] {
        let buf = read_wav(dir.path().join(format!("silence_{part}.wav"))).unwrap();
        assert_eq!(buf.channels, vec![vec![0.0; 44100]]);
        assert_eq!(buf.source_bit_depth, BitDepth::Float32);
    }
}

#[test]
fn outputs_sum_back_to_input() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(30000)), BitDepth::Pcm24).unwrap();
    let x = read_wav(&input).unwrap().channels.remove(0);
    let prefix = dir.path().join("out");
    for method in ["hpr", "st", "fz", "prototype", "enhanced"] {
        let out = stn(&["decompose", p(&input), "--method", method, "-o", p(&prefix)]);
        assert_eq!(out.status.code(), Some(0));
        let parts: Vec<Vec<f64>> = ["sines", "transients", "noise"]
            .iter()
            .map(|s| read_wav(dir.path().join(format!("out_{s}.wav"))).unwrap().channels.remove(0))
            .collect();
        let max_err = (0..x.len())
            .map(|i| (parts[0][i] + parts[1][i] + parts[2][i] - x[i]).abs())
            .fold(0.0, f64::max);
        assert!(max_err <= 1.0 / 8_388_608.0, "{method}: {max_err}");
    }
}

#[test]
fn stereo_channels_are_processed_independently() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("st.wav");
    let left = test_signal(20000);
    let right: Vec<f64> = left.iter().rev().map(|v| 0.5 * v).collect();
    let stereo = AudioBuffer::new(vec![left.clone(), right], 44100.0, BitDepth::Float32).unwrap();
    write_wav(&input, &stereo, BitDepth::Float32).unwrap();
    let mono_in = dir.path().join("left.wav");
    write_wav(&mono_in, &mono(left), BitDepth::Float32).unwrap();
    assert_eq!(stn(&["decompose", p(&input), "--method", "fz"]).status.code(), Some(0));
    assert_eq!(stn(&["decompose", p(&mono_in), "--method", "fz"]).status.code(), Some(0));
    let both = read_wav(dir.path().join("st_sines.wav")).unwrap();
    let single = read_wav(dir.path().join("left_sines.wav")).unwrap();
    assert_eq!(both.channels.len(), 2);
    assert_eq!(both.channels[0], single.channels[0]);
}

#[test]
fn tsm_writes_stretched_file() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(22050)), BitDepth::Float32).unwrap();
    let out = stn(&["tsm", p(&input), "--factor", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let y = read_wav(dir.path().join("x_tsm.wav")).unwrap();
    assert_eq!(y.frames(), 44100);
    assert_eq!(stn(&["tsm", p(&input), "--factor", "0"]).status.code(), Some(1));
}

fn csv_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn config_precedence_per_key() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(20000)), BitDepth::Float32).unwrap();
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "# test config\nmethod = fz\nstage1.window = 1024\n").unwrap();
    let prefix = dir.path().join("m");
    let s_csv = |stage: usize| PathBuf::from(format!("{}_stage{stage}_S.csv", p(&prefix)));

    // default: fz runs one 4096-sample stage
    assert_eq!(stn(&["masks-dump", p(&input), "--method", "fz", "-o", p(&prefix)]).status.code(), Some(0));
    assert_eq!(csv_rows(&s_csv(1)), 2049);
    // file beats default
    assert_eq!(stn(&["masks-dump", p(&input), "--config", p(&cfg), "-o", p(&prefix)]).status.code(), Some(0));
    assert_eq!(csv_rows(&s_csv(1)), 513);
    // flag beats file
    let out = stn(&["masks-dump", p(&input), "--config", p(&cfg), "--set", "stage1.window=2048", "-o", p(&prefix)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(csv_rows(&s_csv(1)), 1025);
    // a dedicated flag beats the file too
    let out = stn(&["masks-dump", p(&input), "--config", p(&cfg), "--method", "enhanced", "--stage", "2", "-o", p(&prefix)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(csv_rows(&s_csv(2)), 257);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.conf");
    std::fs::write(&cfg, "stage1.windw = 1024\n").unwrap();
    let out = stn(&["noise-hist", "--instances", "1", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn masks_dump_features_for_st() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(20000)), BitDepth::Float32).unwrap();
    let prefix = dir.path().join("st");
    let out = stn(&["masks-dump", p(&input), "--method", "st", "--features", "-o", p(&prefix)]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["S", "T", "N", "orientation", "anisotropy", "rate"] {
        let f = PathBuf::from(format!("{}_stage1_{name}.csv", p(&prefix)));
        assert_eq!(csv_rows(&f), 2049, "{name}");
    }
    let text = std::fs::read_to_string(format!("{}_stage1_S.csv", p(&prefix))).unwrap();
    assert!(text.starts_with("bin,frame0,frame1"));
}

#[test]
fn noise_hist_csv() {
    let out = stn(&["noise-hist", "--window", "512", "--instances", "2", "--length", "0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("window_length,bin_center,normalized_count"));
    let mass: f64 = lines
        .map(|l| {
            let cols: Vec<&str> = l.split(',').collect();
            assert_eq!(cols[0], "512");
            cols[2].parse::<f64>().unwrap()
        })
        .sum();
    assert!((mass - 1.0).abs() < 1e-9);
    assert_eq!(text.lines().count(), 101);
}

#[test]
fn optimize_bounds_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, stage: &str| {
        let csv = dir.path().join(format!("{name}.csv"));
        let frag = dir.path().join(format!("{name}.conf"));
        let out = stn(&[
            "optimize-bounds", "--stage", stage, "--seed", "7", "--population", "6", "--generations", "3",
            "-o", p(&csv), "--fragment", p(&frag),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read_to_string(csv).unwrap(), std::fs::read_to_string(frag).unwrap())
    };
    let (a, fa) = run("a", "1");
    let (b, fb) = run("b", "1");
    assert_eq!(a, b);
    assert_eq!(fa, fb);
    assert!(a.starts_with("generation,best_fitness,beta_u,beta_l\n"));
    // header plus the initial population and three generations
    assert_eq!(a.lines().count(), 5);
    let (c, fc) = run("c", "2");
    assert_eq!(c.lines().count(), 5);
    assert!(fc.contains("stage1.beta_upper = 0.8") && fc.contains("stage2.beta_upper"));

    // the fragment loads back as a config file
    let input = dir.path().join("x.wav");
    write_wav(&input, &mono(test_signal(20000)), BitDepth::Float32).unwrap();
    let out = stn(&["decompose", p(&input), "--config", p(&dir.path().join("c.conf"))]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stn(&["optimize-bounds", "--stage", "3"]).status.code(), Some(1));
}
