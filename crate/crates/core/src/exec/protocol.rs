//! Documents exchanged between the supervisor and the sandbox shim.
//!
//! The supervisor writes one [`ExecutionRequest`] as JSON to the shim's
//! stdin and closes it. The shim answers with exactly one
//! [`ExecutionRecord`] as JSON on file descriptor 3, then exits.

use serde::{Deserialize, Serialize};

use crate::task::IoMode;

pub const PROTOCOL_VERSION: u32 = 1;

/// Descriptor number the shim writes its result document to.
pub const RESULT_FD: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct ResourceLimits {
    pub wall_timeout_ms: u64,
    pub memory_cap_bytes: u64,
    pub output_cap_bytes: u64,
}

impl Default for ResourceLimits {
    fn default() -> Self {
        Self {
            wall_timeout_ms: 10_000,
            memory_cap_bytes: 1 << 30,
            output_cap_bytes: 8 << 20,
        }
    }
}

impl ResourceLimits {
    pub fn validate(&self) -> Result<(), String> {
        if self.wall_timeout_ms == 0 || self.memory_cap_bytes == 0 || self.output_cap_bytes == 0 {
            return Err("resource limits must be strictly positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRequest {
    pub version: u32,
    pub program_source: String,
    pub io_mode: IoMode,
    #[serde(default)]
    pub fn_name: Option<String>,
    /// Stdin text, or a JSON array of arguments for call-based tasks.
    pub test_input: String,
    pub limits: ResourceLimits,
}

impl ExecutionRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.version != PROTOCOL_VERSION {
            return Err(format!("unsupported protocol version {}", self.version));
        }
        if self.io_mode == IoMode::CallBased && self.fn_name.as_deref().is_none_or(str::is_empty) {
            return Err("call_based request without fn_name".into());
        }
        self.limits.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawVerdict {
    Completed,
    Exception,
    SelfTimeout,
    OutputOverflow,
    ProtocolError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub version: u32,
    pub verdict_raw: RawVerdict,
    #[serde(default)]
    pub stdout: String,
    /// JSON rendering of the return value (call-based only).
    #[serde(default)]
    pub return_value_repr: Option<String>,
    #[serde(default)]
    pub stderr_excerpt: String,
    pub elapsed_ms: u64,
}

impl ExecutionRecord {
    /// Parses and sanity-checks a result document.
    pub fn parse(bytes: &[u8]) -> Result<Self, String> {
        if bytes.is_empty() {
            return Err("shim produced no result document".into());
        }
        let record: ExecutionRecord =
            serde_json::from_slice(bytes).map_err(|e| format!("malformed result document: {e}"))?;
        if record.version != PROTOCOL_VERSION {
            return Err(format!("result document has version {}", record.version));
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_round_trip() {
        let req = ExecutionRequest {
            version: PROTOCOL_VERSION,
            program_source: "print(input())".into(),
            io_mode: IoMode::Stdio,
            fn_name: None,
            test_input: "hi\n".into(),
            limits: ResourceLimits::default(),
        };
        let text = serde_json::to_string(&req).unwrap();
        assert!(text.contains("\"io_mode\":\"stdio\""));
        assert_eq!(serde_json::from_str::<ExecutionRequest>(&text).unwrap(), req);
        assert!(req.validate().is_ok());
    }

    #[test]
    fn call_based_needs_name() {
        let req = ExecutionRequest {
            version: PROTOCOL_VERSION,
            program_source: "def f(): pass".into(),
            io_mode: IoMode::CallBased,
            fn_name: None,
            test_input: "[]".into(),
            limits: ResourceLimits::default(),
        };
        assert!(req.validate().is_err());
    }

    #[test]
    fn record_parsing() {
        let ok = br#"{"version":1,"verdict_raw":"completed","stdout":"hi\n","elapsed_ms":3}"#;
        let rec = ExecutionRecord::parse(ok).unwrap();
        assert_eq!(rec.verdict_raw, RawVerdict::Completed);
        assert_eq!(rec.return_value_repr, None);
        assert!(ExecutionRecord::parse(b"").is_err());
        assert!(ExecutionRecord::parse(b"{\"version\":1}").is_err());
        assert!(ExecutionRecord::parse(br#"{"version":9,"verdict_raw":"completed","elapsed_ms":0}"#).is_err());
    }
}
