//! Caption and residual-caption retrieval: prompt templates, an HTTP client
//! and a deterministic offline mock.

use std::collections::HashSet;
use std::time::Duration;

use crate::error::{Error, Result};

pub const CAPTION_PROMPT: &str =
    "Please describe this picture in detail with 40 words. Do not provide any description about feelings.";

/// Residual-retrieval prompt; `{caption_x}` and `{caption_x'}` are replaced
/// by the captions of the original and the decoded image.
pub const RESIDUAL_PROMPT: &str = "Original Image: '{caption_x}'; \n\
Compressed Image: '{caption_x'}'. \n\
Provide information that is in the original image but not included in or mismatch with the compressed image. \
Don't include information that is already in the compressed image. Please use most compact words. \
Do not include the description for the compressed image. For example: if input is\n\
Original Image: A red barn surrounded by trees, reflected in a pond.\n\
Compressed Image: red house surrounded by trees.\n\
Residual caption is : A barn reflected in a pond. Please refer to this to output. \
Do not appear words like 'compressed image', 'original image' and 'The semantic residual is'. \
If you think that the two descriptions mean almost the same thing, please output an empty string. ";

pub const DEFAULT_TOKEN_ENV: &str = "RESCODEC_CAPTIONER_TOKEN";

pub fn fill_residual_prompt(caption_full: &str, caption_decoded: &str) -> String {
    // Substitute the primed placeholder first; it contains the plain one as a prefix.
    RESIDUAL_PROMPT
        .replace("{caption_x'}", caption_decoded)
        .replace("{caption_x}", caption_full)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpCaptioner {
    pub endpoint: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CaptionerClient {
    Mock,
    Http(HttpCaptioner),
}

impl CaptionerClient {
    pub fn http(endpoint: impl Into<String>) -> Self {
        CaptionerClient::Http(HttpCaptioner {
            endpoint: endpoint.into(),
            token_env: DEFAULT_TOKEN_ENV.to_string(),
            timeout: Duration::from_secs(30),
        })
    }

    /// Residual caption `caption_full` minus `caption_decoded`.
    pub fn residual(&self, caption_full: &str, caption_decoded: &str) -> Result<String> {
        match self {
            CaptionerClient::Mock => Ok(mock_residual(caption_full, caption_decoded)),
            CaptionerClient::Http(h) => h.complete(&fill_residual_prompt(caption_full, caption_decoded)),
        }
    }
}

impl HttpCaptioner {
    /// POSTs the prompt as plain text and returns the response body, trimmed.
    /// Failures are reported as-is; there is no retry.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let mut req = agent
            .post(&self.endpoint)
            .set("Content-Type", "text/plain; charset=utf-8");
        if let Ok(token) = std::env::var(&self.token_env) {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        match req.send_string(prompt) {
            Ok(resp) => resp
                .into_string()
                .map(|s| s.trim().to_string())
                .map_err(|e| Error::Captioner(format!("reading response: {e}"))),
            Err(ureq::Error::Status(code, resp)) => Err(Error::Captioner(format!(
                "{} returned status {code} {}",
                self.endpoint,
                resp.status_text()
            ))),
            Err(e) => Err(Error::Captioner(format!("{}: {e}", self.endpoint))),
        }
    }
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Offline stand-in for the LLM difference operator. Each comma-separated
/// clause of `full` keeps the words absent from `decoded`; surviving clauses
/// are joined with spaces, the first letter is capitalized and a final period
/// is kept. Identical word content yields the empty string.
pub fn mock_residual(full: &str, decoded: &str) -> String {
    let known: HashSet<String> = words(decoded).collect();
    let body = full.trim();
    let (body, period) = match body.strip_suffix('.') {
        Some(b) => (b, true),
        None => (body, false),
    };
    let clauses: Vec<String> = body
        .split(',')
        .map(|clause| {
            clause
                .split_whitespace()
                .filter(|tok| {
                    let mut ws = words(tok).peekable();
                    ws.peek().is_none() || !words(tok).all(|w| known.contains(&w))
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .filter(|c| words(c).next().is_some())
        .collect();
    if clauses.is_empty() {
        return String::new();
    }
    let mut out = clauses.join(" ");
    if let Some(first) = out.chars().next() {
        let upper: String = first.to_uppercase().collect();
        out.replace_range(..first.len_utf8(), &upper);
    }
    if period {
        out.push('.');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    #[test]
    fn worked_example() {
        let r = mock_residual("A red barn surrounded by trees, reflected in a pond.", "red house surrounded by trees");
        assert_eq!(r, "A barn reflected in a pond.");
    }

    #[test]
    fn identical_captions_give_empty() {
        let c = "A small boat on a calm lake, mountains behind.";
        assert_eq!(mock_residual(c, c), "");
        assert_eq!(CaptionerClient::Mock.residual(c, c).unwrap(), "");
    }

    #[test]
    fn mock_is_deterministic() {
        let (a, b) = ("Two dogs run across wet sand, waves breaking.", "a dog on a beach");
        assert_eq!(mock_residual(a, b), mock_residual(a, b));
    }

    #[test]
    fn prompt_substitution() {
        let p = fill_residual_prompt("FULL", "DECODED");
        assert!(p.starts_with("Original Image: 'FULL'; \nCompressed Image: 'DECODED'. \n"));
        assert!(!p.contains("{caption_x"));
    }

    /// One-shot HTTP server; returns the port and a handle yielding the raw request.
    fn serve(status: &'static str, body: &'static str) -> (u16, thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let handle = thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut body_in = vec![0; len];
            reader.read_exact(&mut body_in).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            head + &String::from_utf8(body_in).unwrap()
        });
        (port, handle)
    }

    #[test]
    fn http_client_sends_filled_template() {
        let (port, handle) = serve("200 OK", "  A barn reflected in a pond.\n");
        let client = CaptionerClient::Http(HttpCaptioner {
            endpoint: format!("http://127.0.0.1:{port}/complete"),
            token_env: "RESCODEC_TEST_TOKEN_UNSET_1".into(),
            timeout: Duration::from_secs(5),
        });
        let out = client.residual("full caption", "decoded caption").unwrap();
        assert_eq!(out, "A barn reflected in a pond.");
        let request = handle.join().unwrap();
        assert!(request.starts_with("POST /complete"));
        assert!(request.contains("Original Image: 'full caption'"));
        assert!(!request.to_ascii_lowercase().contains("authorization"));
    }

    #[test]
    fn http_client_sends_bearer_token() {
        let (port, handle) = serve("200 OK", "ok");
        std::env::set_var("RESCODEC_TEST_TOKEN_SET_2", "abc123");
        let client = CaptionerClient::Http(HttpCaptioner {
            endpoint: format!("http://127.0.0.1:{port}/"),
            token_env: "RESCODEC_TEST_TOKEN_SET_2".into(),
            timeout: Duration::from_secs(5),
        });
        assert_eq!(client.residual("x", "y").unwrap(), "ok");
        assert!(handle.join().unwrap().to_ascii_lowercase().contains("authorization: bearer abc123"));
    }

    #[test]
    fn http_errors_surface() {
        let (port, handle) = serve("503 Service Unavailable", "busy");
        let client = CaptionerClient::http(format!("http://127.0.0.1:{port}/"));
        let err = client.residual("a", "b").unwrap_err();
        assert!(matches!(err, Error::Captioner(ref m) if m.contains("503")), "{err}");
        handle.join().unwrap();
        let closed = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = closed.local_addr().unwrap().port();
        drop(closed);
        assert!(CaptionerClient::http(format!("http://127.0.0.1:{port}/")).residual("a", "b").is_err());
    }
}
