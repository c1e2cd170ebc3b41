//! Wire types of the gate daemon. See `PROTOCOL.md` for the framing rules.

use serde::{Deserialize, Serialize};

use opfactor_core::{AuthDecision, Factor, FactorStatus, Thresholds, Verdict};

/// One authentication attempt. Each opportunistic factor is given as a local
/// path or as a base64 payload, never both; leaving both out makes the
/// factor unavailable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuthRequest {
    pub request_id: String,
    pub rfid_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    /// Base64 WAV file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    /// Base64 binary PPM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_payload: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    /// Base64 binary PGM; nonzero pixels are foreground.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_payload: Option<String>,
}

impl AuthRequest {
    /// Checks the field combinations serde cannot express.
    pub fn validate(&self) -> Result<(), String> {
        if self.rfid_tag.is_empty() {
            return Err("rfid_tag must not be empty".into());
        }
        if self.audio_path.is_some() && self.audio_payload.is_some() {
            return Err("give audio_path or audio_payload, not both".into());
        }
        if self.image_path.is_some() && self.image_payload.is_some() {
            return Err("give image_path or image_payload, not both".into());
        }
        if self.mask_path.is_some() && self.mask_payload.is_some() {
            return Err("give mask_path or mask_payload, not both".into());
        }
        let has_mask = self.mask_path.is_some() || self.mask_payload.is_some();
        let has_image = self.image_path.is_some() || self.image_payload.is_some();
        if has_mask && !has_image {
            return Err("a mask needs an image".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub factor: Factor,
    pub status: FactorStatus,
    pub score: Option<f64>,
    /// Threshold the score was compared against; absent for rfid.
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthResponse {
    pub request_id: String,
    pub verdict: Verdict,
    pub identity_id: Option<String>,
    pub reason: String,
    pub outcomes: Vec<OutcomeReport>,
    pub elapsed_ms: f64,
}

impl AuthResponse {
    pub fn from_decision(request_id: &str, d: &AuthDecision, thresholds: &Thresholds, elapsed_ms: f64) -> Self {
        let outcomes = d
            .outcomes
            .iter()
            .map(|o| OutcomeReport {
                factor: o.factor,
                status: o.status,
                score: o.score,
                threshold: match o.factor {
                    Factor::Rfid => None,
                    Factor::Audio => Some(thresholds.audio_max_distance),
                    Factor::Visual => Some(thresholds.visual_max_distance),
                },
            })
            .collect();
        AuthResponse {
            request_id: request_id.to_string(),
            verdict: d.verdict,
            identity_id: d.identity_id.clone(),
            reason: d.reason.clone(),
            outcomes,
            elapsed_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
    /// Echoed when the request got far enough to carry one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

impl ErrorResponse {
    pub fn new(error: impl Into<String>) -> Self {
        ErrorResponse {
            error: error.into(),
            request_id: None,
        }
    }
}

/// Serializes a response as one line without the terminator.
pub fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("response serializes")
}

/// Parses one request line (terminator already stripped).
pub fn parse_request(line: &str) -> Result<AuthRequest, ErrorResponse> {
    if line.trim().is_empty() {
        return Err(ErrorResponse::new("empty request"));
    }
    let req: AuthRequest = serde_json::from_str(line).map_err(|e| {
        // salvage the id so the caller can correlate the failure
        let request_id = serde_json::from_str::<serde_json::Value>(line)
            .ok()
            .and_then(|v| v.get("request_id")?.as_str().map(str::to_string));
        ErrorResponse {
            error: format!("malformed request: {e}"),
            request_id,
        }
    })?;
    req.validate().map_err(|e| ErrorResponse {
        error: format!("invalid request: {e}"),
        request_id: Some(req.request_id.clone()),
    })?;
    Ok(req)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_request() {
        let r = parse_request(r#"{"request_id":"r1","rfid_tag":"TAG-0001"}"#).unwrap();
        assert_eq!(r.request_id, "r1");
        assert!(r.audio_payload.is_none() && r.image_path.is_none());
    }

    #[test]
    fn errors_echo_id_when_possible() {
        assert_eq!(parse_request("").unwrap_err(), ErrorResponse::new("empty request"));
        assert_eq!(parse_request("  ").unwrap_err().error, "empty request");
        let e = parse_request("{nope").unwrap_err();
        assert!(e.error.starts_with("malformed request"));
        assert_eq!(e.request_id, None);
        let e = parse_request(r#"{"request_id":"r9"}"#).unwrap_err();
        assert_eq!(e.request_id.as_deref(), Some("r9"));
        let e = parse_request(r#"{"request_id":"r2","rfid_tag":"T","audio_path":"a","audio_payload":"b"}"#)
            .unwrap_err();
        assert_eq!(e.request_id.as_deref(), Some("r2"));
        assert!(parse_request(r#"{"request_id":"r","rfid_tag":"T","extra":1}"#).is_err());
        assert!(parse_request(r#"{"request_id":"r","rfid_tag":"T","mask_path":"m"}"#).is_err());
    }

    #[test]
    fn error_line_shape() {
        assert_eq!(to_line(&ErrorResponse::new("empty request")), r#"{"error":"empty request"}"#);
    }
}
