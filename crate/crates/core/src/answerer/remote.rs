use std::time::Duration;

use serde::Deserialize;

use super::{AnswerBackend, AnswerError, AnswerRequest, AnswerResponse};

/// Client for a VQA service speaking the JSON wire protocol:
/// `POST {base}/answer` with an [`AnswerRequest`] body, replying with an
/// [`AnswerResponse`]. A 404 whose body is `{"error": "unknown_image"}` maps
/// to [`AnswerError::UnknownImage`].
pub struct RemoteBackend {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    message: String,
}

impl RemoteBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, AnswerError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AnswerError::Unavailable(e.to_string()))?;
        Ok(RemoteBackend {
            endpoint: format!("{}/answer", base_url.trim_end_matches('/')),
            client,
        })
    }
}

impl AnswerBackend for RemoteBackend {
    fn answer(&self, req: &AnswerRequest) -> Result<AnswerResponse, AnswerError> {
        req.validate()?;
        let resp = self
            .client
            .post(&self.endpoint)
            .json(req)
            .send()
            .map_err(|e| AnswerError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let body = resp
            .bytes()
            .map_err(|e| AnswerError::Unavailable(e.to_string()))?;
        if !status.is_success() {
            let err: Option<ErrorBody> = serde_json::from_slice(&body).ok();
            return Err(match err {
                Some(e) if e.error == "unknown_image" => {
                    AnswerError::UnknownImage(req.image_id.clone())
                }
                Some(e) if e.error == "empty_question" => AnswerError::EmptyQuestion,
                Some(e) if status.is_server_error() => {
                    AnswerError::Unavailable(format!("{status}: {} {}", e.error, e.message))
                }
                Some(e) => AnswerError::Protocol(format!("{status}: {} {}", e.error, e.message)),
                None if status.is_server_error() => AnswerError::Unavailable(status.to_string()),
                None => AnswerError::Protocol(status.to_string()),
            });
        }
        let parsed: AnswerResponse = serde_json::from_slice(&body)
            .map_err(|e| AnswerError::Protocol(format!("bad response body: {e}")))?;
        parsed.validate()?;
        Ok(parsed)
    }
}
