//! Speech-to-text for spoken answers.
//!
//! Transcription is a wire-protocol client only; the resulting text enters the
//! interview exactly like typed text, tagged as audio-derived.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_AUDIO_CAP_BYTES: usize = 25 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioInput {
    pub bytes: Vec<u8>,
    pub media_type: String,
    pub language_hint: Option<String>,
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioFormat {
    Webm,
    Wav,
    Mp3,
    M4a,
}

impl AudioFormat {
    /// Accepts the common labels for webm/opus, wav, mp3 and m4a; parameters such
    /// as `;codecs=opus` are ignored.
    pub fn from_media_type(media_type: &str) -> Option<Self> {
        let essence = media_type.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
        match essence.as_str() {
            "audio/webm" | "video/webm" | "audio/ogg" | "audio/opus" => Some(Self::Webm),
            "audio/wav" | "audio/x-wav" | "audio/wave" | "audio/vnd.wave" => Some(Self::Wav),
            "audio/mpeg" | "audio/mp3" | "audio/mpeg3" => Some(Self::Mp3),
            "audio/mp4" | "audio/m4a" | "audio/x-m4a" | "audio/aac" => Some(Self::M4a),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Webm => "webm",
            Self::Wav => "wav",
            Self::Mp3 => "mp3",
            Self::M4a => "m4a",
        }
    }

    pub fn mime(self) -> &'static str {
        match self {
            Self::Webm => "audio/webm",
            Self::Wav => "audio/wav",
            Self::Mp3 => "audio/mpeg",
            Self::M4a => "audio/mp4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    pub detected_language: Option<String>,
    pub provider_id: String,
    /// Provider heard nothing; `text` is empty.
    pub silent: bool,
}

/// Raw provider answer.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct SttOutput {
    pub text: String,
    #[serde(default)]
    pub language: Option<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SttError {
    #[error("transcription provider failure (status {status:?}): {message}")]
    Transport {
        status: Option<u16>,
        message: String,
        retriable: bool,
    },
    #[error("unreadable transcription response: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TranscriptionError {
    #[error("audio payload is empty")]
    EmptyPayload,
    #[error("unsupported media type `{0}`; accepted: webm/opus, wav, mp3, m4a")]
    UnsupportedMediaType(String),
    #[error("audio payload of {size} bytes exceeds the {cap}-byte limit")]
    TooLarge { size: usize, cap: usize },
    #[error(transparent)]
    Provider(#[from] SttError),
}

#[async_trait]
pub trait SttProvider: Send + Sync {
    async fn transcribe_raw(&self, audio: &AudioInput, format: AudioFormat) -> Result<SttOutput, SttError>;

    fn provider_id(&self) -> &str;
}

/// Validates `audio` and transcribes it.
pub async fn transcribe(
    audio: &AudioInput,
    provider: &dyn SttProvider,
    cap_bytes: usize,
) -> Result<Transcript, TranscriptionError> {
    if audio.bytes.is_empty() {
        return Err(TranscriptionError::EmptyPayload);
    }
    let format = AudioFormat::from_media_type(&audio.media_type)
        .ok_or_else(|| TranscriptionError::UnsupportedMediaType(audio.media_type.clone()))?;
    if audio.bytes.len() > cap_bytes {
        return Err(TranscriptionError::TooLarge {
            size: audio.bytes.len(),
            cap: cap_bytes,
        });
    }
    let out = provider.transcribe_raw(audio, format).await?;
    let text = out.text.trim().to_owned();
    let detected_language = out
        .language
        .filter(|l| !l.trim().is_empty())
        .or_else(|| audio.language_hint.clone());
    Ok(Transcript {
        silent: text.is_empty(),
        text,
        detected_language,
        provider_id: provider.provider_id().to_owned(),
    })
}

/// Decodes a `{"text": ...}` transcription response.
pub fn parse_transcription_response(body: &[u8]) -> Result<SttOutput, SttError> {
    serde_json::from_slice(body).map_err(|e| SttError::Protocol(e.to_string()))
}

/// Client for hosted transcription endpoints taking a multipart upload.
#[derive(Clone)]
pub struct HttpTranscriber {
    base_url: String,
    api_key: String,
    model: String,
    http: reqwest::Client,
}

impl std::fmt::Debug for HttpTranscriber {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTranscriber")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl HttpTranscriber {
    pub fn new(
        base_url: impl Into<String>,
        api_key: impl Into<String>,
        model: impl Into<String>,
    ) -> Result<Self, SttError> {
        let http = reqwest::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| SttError::Transport {
                status: None,
                message: e.to_string(),
                retriable: false,
            })?;
        Ok(Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            http,
        })
    }
}

fn stt_transport(e: reqwest::Error) -> SttError {
    SttError::Transport {
        status: e.status().map(|s| s.as_u16()),
        retriable: e.is_timeout() || e.is_connect(),
        message: e.without_url().to_string(),
    }
}

#[async_trait]
impl SttProvider for HttpTranscriber {
    async fn transcribe_raw(&self, audio: &AudioInput, format: AudioFormat) -> Result<SttOutput, SttError> {
        let file = reqwest::multipart::Part::bytes(audio.bytes.clone())
            .file_name(format!("audio.{}", format.extension()))
            .mime_str(format.mime())
            .map_err(|e| SttError::Protocol(e.to_string()))?;
        let mut form = reqwest::multipart::Form::new()
            .part("file", file)
            .text("model", self.model.clone())
            .text("response_format", "json");
        if let Some(lang) = &audio.language_hint {
            form = form.text("language", lang.clone());
        }
        let url = format!("{}/audio/transcriptions", self.base_url.trim_end_matches('/'));
        let response = self
            .http
            .post(url)
            .bearer_auth(&self.api_key)
            .multipart(form)
            .send()
            .await
            .map_err(stt_transport)?;
        let status = response.status();
        let body = response.bytes().await.map_err(stt_transport)?;
        if !status.is_success() {
            return Err(SttError::Transport {
                status: Some(status.as_u16()),
                message: String::from_utf8_lossy(&body).chars().take(300).collect(),
                retriable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        parse_transcription_response(&body)
    }

    fn provider_id(&self) -> &str {
        &self.model
    }
}

/// Test double returning fixed text.
#[derive(Debug, Clone)]
pub struct StaticTranscriber {
    text: String,
    language: Option<String>,
    echo_hint: bool,
}

impl StaticTranscriber {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            language: None,
            echo_hint: false,
        }
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = Some(language.into());
        self
    }

    /// Report the request's language hint as the detected language.
    pub fn echoing_language_hint(mut self) -> Self {
        self.echo_hint = true;
        self
    }
}

#[async_trait]
impl SttProvider for StaticTranscriber {
    async fn transcribe_raw(&self, audio: &AudioInput, _format: AudioFormat) -> Result<SttOutput, SttError> {
        let language = if self.echo_hint {
            audio.language_hint.clone()
        } else {
            self.language.clone()
        };
        Ok(SttOutput {
            text: self.text.clone(),
            language,
        })
    }

    fn provider_id(&self) -> &str {
        "static"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clip(bytes: &[u8], media_type: &str) -> AudioInput {
        AudioInput {
            bytes: bytes.to_vec(),
            media_type: media_type.into(),
            language_hint: None,
            duration_s: None,
        }
    }

    #[tokio::test]
    async fn fake_provider_text() {
        let t = transcribe(
            &clip(b"RIFF", "audio/wav"),
            &StaticTranscriber::new("hello"),
            DEFAULT_AUDIO_CAP_BYTES,
        )
        .await
        .unwrap();
        assert_eq!(t.text, "hello");
        assert!(!t.silent);
        assert_eq!(t.provider_id, "static");
    }

    #[tokio::test]
    async fn rejects_invalid_payloads() {
        let p = StaticTranscriber::new("x");
        assert_eq!(
            transcribe(&clip(b"", "audio/wav"), &p, 10).await,
            Err(TranscriptionError::EmptyPayload)
        );
        assert!(matches!(
            transcribe(&clip(b"x", "image/png"), &p, 10).await,
            Err(TranscriptionError::UnsupportedMediaType(_))
        ));
        assert_eq!(
            transcribe(&clip(&[0; 11], "audio/mpeg"), &p, 10).await,
            Err(TranscriptionError::TooLarge { size: 11, cap: 10 })
        );
    }

    #[tokio::test]
    async fn silence_is_flagged_not_failed() {
        let t = transcribe(&clip(b"x", "audio/webm;codecs=opus"), &StaticTranscriber::new("  "), 10)
            .await
            .unwrap();
        assert!(t.silent);
        assert_eq!(t.text, "");
    }

    #[tokio::test]
    async fn language_hint_echo() {
        let mut audio = clip(b"x", "audio/mp4");
        audio.language_hint = Some("tr".into());
        let t = transcribe(&audio, &StaticTranscriber::new("merhaba").echoing_language_hint(), 10)
            .await
            .unwrap();
        assert_eq!(t.detected_language.as_deref(), Some("tr"));
    }

    #[test]
    fn media_type_allow_list() {
        assert_eq!(
            AudioFormat::from_media_type("Audio/WebM; codecs=opus"),
            Some(AudioFormat::Webm)
        );
        assert_eq!(AudioFormat::from_media_type("audio/x-m4a"), Some(AudioFormat::M4a));
        assert_eq!(AudioFormat::from_media_type("audio/flac"), None);
    }

    #[test]
    fn response_parsing() {
        assert_eq!(parse_transcription_response(br#"{"text":"hi"}"#).unwrap().text, "hi");
        let with_lang = parse_transcription_response(br#"{"text":"selam","language":"tr"}"#).unwrap();
        assert_eq!(with_lang.language.as_deref(), Some("tr"));
        assert!(parse_transcription_response(br#"{"txt":"hi"}"#).is_err());
    }
}
