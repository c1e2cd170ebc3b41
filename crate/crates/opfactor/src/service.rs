//! Request evaluation shared by the `verify` subcommand and the daemon.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use base64::Engine as _;

use opfactor_core::enrollment::Reference;
use opfactor_core::{
    audio_signature, authenticate, color_histogram, AudioSignature, AuthDecision, ColorHistogram, Factor,
    FactorStatus, MaskedImage, Probe, Verdict,
};

use crate::config::Config;
use crate::protocol::{AuthRequest, AuthResponse};
use crate::store::EnrollmentStore;
use crate::{pnm, wav};

/// Evaluates authentication requests against a store and, on accept,
/// refreshes the references of the factors that passed.
#[derive(Debug, Clone)]
pub struct Gate {
    store: Arc<EnrollmentStore>,
    config: Config,
}

fn read_source(path: Option<&str>, payload: Option<&str>) -> Option<Result<Vec<u8>, String>> {
    match (path, payload) {
        (Some(p), _) => Some(std::fs::read(p).map_err(|e| format!("{p}: {e}"))),
        (None, Some(b64)) => Some(
            base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| format!("bad base64: {e}")),
        ),
        (None, None) => None,
    }
}

/// Outcome of a gate evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct GateResult {
    pub response: AuthResponse,
    pub decision: AuthDecision,
    /// Whether validated probes were appended to the record.
    pub refreshed: bool,
}

impl Gate {
    pub fn new(store: Arc<EnrollmentStore>, config: Config) -> Self {
        Gate { store, config }
    }

    pub fn store(&self) -> &EnrollmentStore {
        &self.store
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn audio_probe(&self, req: &AuthRequest) -> Probe<AudioSignature> {
        match read_source(req.audio_path.as_deref(), req.audio_payload.as_deref()) {
            None => Probe::Absent,
            Some(Err(e)) => Probe::Failed(e),
            Some(Ok(bytes)) => wav::decode_wav(&bytes)
                .map_err(|e| e.to_string())
                .and_then(|clip| audio_signature(&clip, &self.config.audio).map_err(|e| e.to_string()))
                .map_or_else(Probe::Failed, Probe::Present),
        }
    }

    fn image(&self, req: &AuthRequest) -> Option<Result<MaskedImage, String>> {
        let image = read_source(req.image_path.as_deref(), req.image_payload.as_deref())?;
        let result = image.and_then(|img| {
            let explicit_mask = read_source(req.mask_path.as_deref(), req.mask_payload.as_deref()).transpose()?;
            match (explicit_mask, &req.image_path) {
                (Some(mask), _) => pnm::load_image_bytes(&img, Some(&mask)).map_err(|e| e.to_string()),
                (None, Some(path)) => pnm::load_image(Path::new(path), None).map_err(|e| e.to_string()),
                (None, None) => pnm::load_image_bytes(&img, None).map_err(|e| e.to_string()),
            }
        });
        Some(result)
    }

    pub fn visual_probe(&self, req: &AuthRequest) -> Probe<ColorHistogram> {
        match self.image(req) {
            None => Probe::Absent,
            Some(Err(e)) => Probe::Failed(e),
            Some(Ok(img)) => color_histogram(&img, self.config.histogram_bins)
                .map_or_else(|e| Probe::Failed(e.to_string()), Probe::Present),
        }
    }

    pub fn evaluate(&self, req: &AuthRequest) -> GateResult {
        let start = Instant::now();
        let audio = self.audio_probe(req);
        let visual = self.visual_probe(req);
        let (decision, record) = authenticate(
            self.store.as_ref(),
            &req.rfid_tag,
            audio.as_ref(),
            visual.as_ref(),
            &self.config.decision(),
        );

        let mut refreshed = false;
        if decision.verdict == Verdict::Accept {
            let passed = |f: Factor| decision.outcome(f).is_some_and(|o| o.status == FactorStatus::Validated);
            let mut refs = Vec::new();
            if let (true, Probe::Present(sig)) = (passed(Factor::Audio), &audio) {
                refs.push(Reference::Audio(sig.clone()));
            }
            if let (true, Probe::Present(hist)) = (passed(Factor::Visual), &visual) {
                refs.push(Reference::Visual(hist.clone()));
            }
            if let (Some(rec), false) = (&record, refs.is_empty()) {
                match self.store.add_references(&rec.identity_id, refs) {
                    Ok(_) => refreshed = true,
                    Err(e) => log::error!(
                        "request {}: reference refresh for {} skipped: {e}",
                        req.request_id,
                        rec.identity_id
                    ),
                }
            }
        }

        let elapsed_ms = start.elapsed().as_secs_f64() * 1000.0;
        let response = AuthResponse::from_decision(&req.request_id, &decision, &self.config.thresholds, elapsed_ms);
        GateResult {
            response,
            decision,
            refreshed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use opfactor_core::eval::{synth_engine_sound, synth_vehicle_image, EngineProfile};
    use opfactor_core::Rgb;

    fn b64(bytes: &[u8]) -> String {
        base64::engine::general_purpose::STANDARD.encode(bytes)
    }

    fn engine(f0: f64, seed: u64) -> Vec<u8> {
        let p = EngineProfile {
            fundamental: f0,
            harmonic_amplitudes: vec![1.0, 0.8, 0.5],
            noise_level: 0.003,
            jitter: 0.01,
        };
        wav::encode_wav(&synth_engine_sound(&p, 0.5, 44_100, seed).unwrap(), wav::SampleFormat::F32)
    }

    fn photo(color: Rgb, seed: u64) -> (Vec<u8>, Vec<u8>) {
        let img = synth_vehicle_image(color, 8.0, 32, 24, seed).unwrap();
        let mask: Vec<u8> = img.mask().iter().map(|&m| u8::from(m) * 255).collect();
        (pnm::write_ppm(32, 24, img.pixels()), pnm::write_pgm(32, 24, &mask))
    }

    fn gate(dir: &Path) -> Gate {
        let store = EnrollmentStore::create(dir, 10).unwrap();
        let cfg = Config::default();
        let clip = wav::decode_wav(&engine(200.0, 1)).unwrap();
        let sig = audio_signature(&clip, &cfg.audio).unwrap();
        let (ppm, pgm) = photo(Rgb::new(176, 48, 48), 1);
        let hist = color_histogram(&pnm::load_image_bytes(&ppm, Some(&pgm)).unwrap(), 8).unwrap();
        store.enroll("car-1", "TAG-0001", vec![sig], vec![hist]).unwrap();
        Gate::new(Arc::new(store), cfg)
    }

    fn request(audio: &[u8], (ppm, pgm): (Vec<u8>, Vec<u8>)) -> AuthRequest {
        AuthRequest {
            request_id: "r1".into(),
            rfid_tag: "TAG-0001".into(),
            audio_payload: Some(b64(audio)),
            image_payload: Some(b64(&ppm)),
            mask_payload: Some(b64(&pgm)),
            ..Default::default()
        }
    }

    #[test]
    fn accept_refreshes_passing_factors() {
        let dir = tempfile::tempdir().unwrap();
        let g = gate(dir.path());
        let r = g.evaluate(&request(&engine(200.0, 2), photo(Rgb::new(176, 48, 48), 2)));
        assert_eq!(r.response.verdict, Verdict::Accept, "{}", r.response.reason);
        assert_eq!(r.response.identity_id.as_deref(), Some("car-1"));
        assert!(r.refreshed);
        let rec = g.store().get("car-1").unwrap();
        assert_eq!((rec.audio_refs.len(), rec.visual_refs.len()), (2, 2));
    }

    #[test]
    fn only_validated_factors_are_refreshed() {
        let dir = tempfile::tempdir().unwrap();
        let g = gate(dir.path());
        // audio passes, visual is a different color
        let r = g.evaluate(&request(&engine(200.0, 3), photo(Rgb::new(48, 80, 176), 3)));
        assert_eq!(r.response.verdict, Verdict::Accept);
        let rec = g.store().get("car-1").unwrap();
        assert_eq!((rec.audio_refs.len(), rec.visual_refs.len()), (2, 1));
    }

    #[test]
    fn deny_leaves_store_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let g = gate(dir.path());
        let before = g.store().list();
        let r = g.evaluate(&request(&engine(520.0, 4), photo(Rgb::new(48, 80, 176), 4)));
        assert_eq!(r.response.verdict, Verdict::Deny);
        assert!(!r.refreshed);
        assert_eq!(g.store().list(), before);

        let mut unknown = request(&engine(200.0, 5), photo(Rgb::new(176, 48, 48), 5));
        unknown.rfid_tag = "TAG-9999".into();
        let r = g.evaluate(&unknown);
        assert_eq!(r.response.verdict, Verdict::Deny);
        assert!(r.response.reason.contains("rfid rejected"), "{}", r.response.reason);
        assert_eq!(r.response.identity_id, None);
    }

    #[test]
    fn corrupt_payload_denies() {
        let dir = tempfile::tempdir().unwrap();
        let g = gate(dir.path());
        let mut req = request(&engine(200.0, 6), photo(Rgb::new(176, 48, 48), 6));
        req.audio_payload = Some(b64(b"RIFF nonsense"));
        let r = g.evaluate(&req);
        assert_eq!(r.response.verdict, Verdict::Deny);
        assert!(r.response.reason.contains("audio error"), "{}", r.response.reason);
        req.audio_payload = Some("***".into());
        assert_eq!(g.evaluate(&req).response.verdict, Verdict::Deny);
    }

    #[test]
    fn thresholds_reported() {
        let dir = tempfile::tempdir().unwrap();
        let g = gate(dir.path());
        let r = g.evaluate(&request(&engine(200.0, 7), photo(Rgb::new(176, 48, 48), 7)));
        let t: Vec<_> = r.response.outcomes.iter().map(|o| o.threshold).collect();
        assert_eq!(t, vec![None, Some(100.0), Some(0.2)]);
    }
}
