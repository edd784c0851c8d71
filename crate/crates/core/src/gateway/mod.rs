//! Provider-agnostic chat completion gateway.
//!
//! Every provider speaks the OpenAI-compatible chat completions format. A
//! [`Provider`] turns one [`PromptBundle`] into exactly one [`RawResponse`];
//! failures are embedded in the response rather than raised so that a plan
//! always yields one response per call.

mod client;
mod mock;

use std::io::{self, BufRead, Write};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

pub use client::{
    ChatClient, ChatRequest, GatewayError, HttpReply, ProviderConfig, ReqwestTransport, Transport,
    TransportError,
};
pub use mock::{mock_complete, InjectionProfile, MockProvider, ProfileError, ResponseClass};

use crate::seedgen::PromptBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    /// The provider hit its token limit; the text may be cut mid-object.
    Length,
    /// The call failed terminally; `text` is empty.
    Error,
}

/// One provider reply, persisted one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub call_index: usize,
    pub text: String,
    pub finish_reason: FinishReason,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RawResponse {
    pub fn failed(call_index: usize, latency_ms: u64, error: impl Into<String>) -> Self {
        Self {
            call_index,
            text: String::new(),
            finish_reason: FinishReason::Error,
            latency_ms,
            error: Some(error.into()),
        }
    }

    pub fn is_error(&self) -> bool {
        self.finish_reason == FinishReason::Error
    }
}

pub trait Provider: Sync {
    fn respond(&self, bundle: &PromptBundle) -> RawResponse;

    /// Short identifier recorded as dataset provenance.
    fn name(&self) -> String;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub completed: usize,
    pub failed: usize,
    pub truncated: usize,
}

/// Runs every bundle through `provider` on up to `parallelism` worker
/// threads. `sink` sees each response as it arrives, in completion order.
pub fn run_plan<P, F>(
    bundles: &[PromptBundle],
    provider: &P,
    parallelism: usize,
    mut sink: F,
) -> RunSummary
where
    P: Provider + ?Sized,
    F: FnMut(RawResponse),
{
    let workers = parallelism.max(1).min(bundles.len().max(1));
    let next = AtomicUsize::new(0);
    let mut summary = RunSummary::default();
    let (tx, rx) = mpsc::channel();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(bundle) = bundles.get(i) else { break };
                if tx.send(provider.respond(bundle)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for response in rx {
            match response.finish_reason {
                FinishReason::Error => summary.failed += 1,
                FinishReason::Length => summary.truncated += 1,
                FinishReason::Stop => {}
            }
            summary.completed += 1;
            if summary.completed % 50 == 0 {
                tracing::info!(
                    done = summary.completed,
                    total = bundles.len(),
                    failed = summary.failed,
                    "generation progress"
                );
            }
            sink(response);
        }
    });
    summary
}

pub fn read_responses<R: BufRead>(reader: R) -> io::Result<Vec<RawResponse>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(response);
    }
    Ok(out)
}

pub fn write_response<W: Write>(mut writer: W, response: &RawResponse) -> io::Result<()> {
    serde_json::to_writer(&mut writer, response)?;
    writer.write_all(b"\n")
}
