//! Collect option-letter log-probabilities from a chat-completions endpoint
//! and write them out as evaluation records.

mod collect;
mod endpoint;
mod error;
mod templates;

pub use collect::{collect_corpus, failure_log_path, CollectSummary, FailureEntry, Question};
pub use endpoint::{
    backoff_delay, extract_logprobs, fetch_logprobs, EndpointConfig, FetchResult, RetryPolicy,
    DEFAULT_API_KEY_ENV, FLOOR_LOG_GAP,
};
pub use error::{ClientError, Result};
pub use templates::{render_prompt, ChatMessage, ContentPart, MessageContent, PromptTemplate};
