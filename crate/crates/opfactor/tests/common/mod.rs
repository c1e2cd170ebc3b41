#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::Duration;

use base64::Engine as _;

use opfactor::store::EnrollmentStore;
use opfactor::{pnm, wav};
use opfactor_core::eval::{synth_engine_sound, synth_vehicle_image, EngineProfile};
use opfactor_core::{audio_signature, color_histogram, FrameParams, Rgb};

pub const RED: Rgb = Rgb::new(176, 48, 48);
pub const BLUE: Rgb = Rgb::new(48, 80, 176);

pub fn profile(f0: f64) -> EngineProfile {
    EngineProfile {
        fundamental: f0,
        harmonic_amplitudes: vec![0.6, 1.0, 0.8, 0.5, 0.3],
        noise_level: 0.003,
        jitter: 0.01,
    }
}

pub fn wav_bytes(f0: f64, seed: u64) -> Vec<u8> {
    let clip = synth_engine_sound(&profile(f0), 1.0, 44_100, seed).unwrap();
    wav::encode_wav(&clip, wav::SampleFormat::F32)
}

/// PPM bytes and matching PGM mask bytes.
pub fn photo(color: Rgb, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let img = synth_vehicle_image(color, 8.0, 64, 48, seed).unwrap();
    let mask: Vec<u8> = img.mask().iter().map(|&m| if m { 255 } else { 0 }).collect();
    (pnm::write_ppm(64, 48, img.pixels()), pnm::write_pgm(64, 48, &mask))
}

pub fn b64(bytes: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(bytes)
}

/// Store with `car-1` / `TAG-0001` enrolled from a 150 Hz engine and a red body.
pub fn enrolled_store(dir: &Path) -> EnrollmentStore {
    let store = EnrollmentStore::create(dir, 10).unwrap();
    let clip = wav::decode_wav(&wav_bytes(150.0, 1)).unwrap();
    let sig = audio_signature(&clip, &FrameParams::default()).unwrap();
    let (ppm, pgm) = photo(RED, 1);
    let hist = color_histogram(&pnm::load_image_bytes(&ppm, Some(&pgm)).unwrap(), 8).unwrap();
    store.enroll("car-1", "TAG-0001", vec![sig], vec![hist]).unwrap();
    store
}

pub fn request_json(id: &str, tag: &str, f0: f64, color: Rgb, seed: u64) -> String {
    let (ppm, pgm) = photo(color, seed);
    serde_json::json!({
        "request_id": id,
        "rfid_tag": tag,
        "audio_payload": b64(&wav_bytes(f0, seed)),
        "image_payload": b64(&ppm),
        "mask_payload": b64(&pgm),
    })
    .to_string()
}

pub struct Client {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Client {
    pub fn connect(addr: std::net::SocketAddr) -> Self {
        let stream = TcpStream::connect(addr).unwrap();
        stream.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        Client {
            writer: stream.try_clone().unwrap(),
            reader: BufReader::new(stream),
        }
    }

    pub fn send_raw(&mut self, bytes: &[u8]) {
        self.writer.write_all(bytes).unwrap();
    }

    pub fn send(&mut self, line: &str) {
        self.send_raw(format!("{line}\n").as_bytes());
    }

    /// Next response line, or None on EOF.
    pub fn recv(&mut self) -> Option<String> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => None,
            Ok(_) => {
                assert!(line.ends_with('\n'), "response not newline-terminated: {line:?}");
                line.pop();
                Some(line)
            }
            Err(e) => panic!("read failed: {e}"),
        }
    }

    pub fn set_timeout(&self, t: Duration) {
        self.writer.set_read_timeout(Some(t)).unwrap();
    }

    pub fn try_recv(&mut self) -> std::io::Result<String> {
        let mut line = String::new();
        self.reader.read_line(&mut line)?;
        Ok(line)
    }
}

pub fn json(line: &str) -> serde_json::Value {
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}
