//! Bounded-concurrency corpus collection with a single streaming writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use confbench_core::{EvalRecord, OptionLabel};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::io::AsyncWriteExt;

use crate::endpoint::{fetch_logprobs, EndpointConfig};
use crate::error::{ClientError, Result};
use crate::templates::{render_prompt, PromptTemplate};

/// One multiple-choice question as read from a question file (JSONL).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Question {
    pub question_id: String,
    pub dataset_id: String,
    pub question: String,
    pub options: BTreeMap<OptionLabel, String>,
    pub true_label: OptionLabel,
    /// Image references (URLs or data URIs). Exactly one is expected.
    #[serde(default)]
    pub images: Vec<String>,
}

impl Question {
    pub fn parse_jsonl(text: &str) -> Result<Vec<Question>> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l.trim_end_matches('\r')).map_err(|e| {
                    ClientError::InvalidConfig(format!("question file line {}: {e}", i + 1))
                })
            })
            .collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Vec<Question>> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ClientError::io(path, e))?;
        Self::parse_jsonl(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureEntry {
    pub question_id: String,
    pub dataset_id: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CollectSummary {
    pub questions: usize,
    pub written: usize,
    pub failed: usize,
    pub excluded: usize,
    pub failure_log: PathBuf,
}

pub fn failure_log_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".failures.jsonl");
    out.with_file_name(name)
}

enum Outcome {
    Record(EvalRecord),
    Failed(FailureEntry),
    Excluded(FailureEntry),
}

fn entry(q: &Question, kind: &str, message: impl Into<String>) -> FailureEntry {
    FailureEntry {
        question_id: q.question_id.clone(),
        dataset_id: q.dataset_id.clone(),
        kind: kind.into(),
        message: message.into(),
    }
}

async fn process(
    client: &reqwest::Client,
    cfg: &EndpointConfig,
    templates: &[PromptTemplate],
    q: Question,
) -> Outcome {
    // Multi-image items are left out of the evaluation, but still accounted for.
    if q.images.len() > 1 {
        return Outcome::Excluded(entry(&q, "multi_image_excluded", format!("{} images", q.images.len())));
    }
    let Some(template) = templates.iter().find(|t| t.dataset_id.eq_ignore_ascii_case(&q.dataset_id)) else {
        return Outcome::Failed(entry(&q, "no_template", format!("no template for dataset {:?}", q.dataset_id)));
    };
    let Some(image) = q.images.first() else {
        return Outcome::Failed(entry(&q, "missing_image", "question has no image"));
    };
    if !q.options.contains_key(&q.true_label) {
        return Outcome::Failed(entry(&q, "invalid_options", format!("true label {} is not an option", q.true_label)));
    }
    let options: Vec<(OptionLabel, String)> = q.options.iter().map(|(l, t)| (*l, t.clone())).collect();
    let letters: Vec<OptionLabel> = q.options.keys().copied().collect();

    let result = async {
        let messages = render_prompt(template, &q.question, &options, image)?;
        let fetched = fetch_logprobs(client, cfg, &messages, &letters).await?;
        let record = EvalRecord {
            record_id: q.question_id.clone(),
            dataset_id: q.dataset_id.clone(),
            model_id: cfg.model_id.clone(),
            logprobs: fetched.logprobs,
            true_label: q.true_label,
            predicted_label: fetched.predicted_label,
            multi_image: false,
        };
        record.validate()?;
        Ok::<_, ClientError>(record)
    }
    .await;
    match result {
        Ok(r) => Outcome::Record(r),
        Err(e) => {
            tracing::warn!(question = %q.question_id, error = %e, "question failed");
            Outcome::Failed(entry(&q, e.kind(), e.to_string()))
        }
    }
}

async fn write_line(file: &mut tokio::fs::File, path: &Path, value: &impl Serialize) -> Result<()> {
    let mut line = serde_json::to_vec(value).expect("records serialize");
    line.push(b'\n');
    file.write_all(&line).await.map_err(|e| ClientError::io(path, e))?;
    file.flush().await.map_err(|e| ClientError::io(path, e))
}

/// Query the endpoint for every question with at most `cfg.max_concurrency`
/// requests in flight. Records are appended to `out` as they complete (in
/// completion order); failures and exclusions go to `<out>.failures.jsonl`.
pub async fn collect_corpus(
    cfg: &EndpointConfig,
    templates: &[PromptTemplate],
    questions: impl IntoIterator<Item = Question>,
    out: &Path,
) -> Result<CollectSummary> {
    let client = cfg.client()?;
    let failure_log = failure_log_path(out);
    let mut records = tokio::fs::File::create(out).await.map_err(|e| ClientError::io(out, e))?;
    let mut failures = tokio::fs::File::create(&failure_log)
        .await
        .map_err(|e| ClientError::io(&failure_log, e))?;

    let mut summary = CollectSummary {
        questions: 0,
        written: 0,
        failed: 0,
        excluded: 0,
        failure_log: failure_log.clone(),
    };
    let mut outcomes = stream::iter(questions)
        .map(|q| process(&client, cfg, templates, q))
        .buffer_unordered(cfg.max_concurrency);
    while let Some(outcome) = outcomes.next().await {
        summary.questions += 1;
        match outcome {
            Outcome::Record(r) => {
                write_line(&mut records, out, &r).await?;
                summary.written += 1;
            }
            Outcome::Failed(f) => {
                write_line(&mut failures, &failure_log, &f).await?;
                summary.failed += 1;
            }
            Outcome::Excluded(f) => {
                write_line(&mut failures, &failure_log, &f).await?;
                summary.excluded += 1;
            }
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failure_log_sits_next_to_output() {
        assert_eq!(
            failure_log_path(Path::new("/tmp/out/m.jsonl")),
            PathBuf::from("/tmp/out/m.jsonl.failures.jsonl")
        );
    }

    #[test]
    fn question_lines_parse() {
        let text = r#"{"question_id":"q1","dataset_id":"AI2D","question":"?","options":{"A":"x","B":"y"},"true_label":"B","images":["u"]}

{"question_id":"q2","dataset_id":"AI2D","question":"?","options":{"A":"x","B":"y"},"true_label":"A"}"#;
        let qs = Question::parse_jsonl(text).unwrap();
        assert_eq!(qs.len(), 2);
        assert!(qs[1].images.is_empty());
        assert!(Question::parse_jsonl(r#"{"question_id":"q"}"#).is_err());
    }
}
