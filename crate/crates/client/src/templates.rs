//! Per-dataset prompt templates and chat-message rendering.

use confbench_core::OptionLabel;
use serde::{Deserialize, Serialize};

use crate::error::{ClientError, Result};

pub const QUESTION_SLOT: &str = "{QUESTION}";
pub const OPTIONS_SLOT: &str = "{OPTIONS}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub dataset_id: String,
    pub system_message: String,
    /// User text with `{QUESTION}` and `{OPTIONS}` slots.
    pub instruction: String,
}

const SYSTEM_AI2D: &str = "You are a scientific diagram analyzer.
- Analyze the diagram carefully
- Answer ONLY with the correct option letter (A, B, C, D, E, or F)
- Never explain your reasoning
- If uncertain, guess from the provided options";

const SYSTEM_SCIENCEQA: &str = "You are a science question answerer.
- Use the image and question to select ONE correct option
- Respond STRICTLY with just A, B, C, D, or E
- No explanations or additional text
- Must choose from given options";

const SYSTEM_MATHVISION: &str = "You are a math problem solver.
- Analyze the image and question precisely
- Output MUST be exactly one letter: A, B, C, D, E, or F
- Never show working
- Select even if uncertain";

const SYSTEM_WORLDMEDQAV: &str = "You are a medical image diagnostician.
- Examine the image and question thoroughly
- Respond ONLY with the letter (A-F) of the most likely answer
- No disclaimers or explanations
- Choose from options even if unsure";

const SYSTEM_MMMU: &str = "You are a multi-disciplinary expert.
- Combine image understanding with question requirements
- Output EXACTLY one letter: A, B, C, D, or E
- No additional text under any circumstances
- Must select from provided options";

const SYSTEM_MMMU_PRO: &str = "You are a multi-disciplinary expert.
- Combine image understanding with question requirements
- Output EXACTLY one letter: A, B, C, D, E, F, G, H, I, J
- No additional text under any circumstances
- Must select from provided options";

// (dataset, system message, question domain, last option letter)
const BUILTINS: [(&str, &str, &str, char); 6] = [
    ("AI2D", SYSTEM_AI2D, "scientific diagram", 'F'),
    ("ScienceQA", SYSTEM_SCIENCEQA, "science", 'E'),
    ("MathVision", SYSTEM_MATHVISION, "math", 'F'),
    ("WorldMedQAV", SYSTEM_WORLDMEDQAV, "medical image", 'F'),
    ("MMMU", SYSTEM_MMMU, "multi-disciplinary", 'E'),
    ("MMMU-Pro", SYSTEM_MMMU_PRO, "multi-disciplinary", 'J'),
];

fn instruction(domain: &str, last: char) -> String {
    let letters: Vec<String> = ('A'..=last).map(String::from).collect();
    format!(
        "I will show you an image along with a multiple-choice {domain} question.\n\
         Please select the correct answer from the given options.\n\
         Only respond with the option letter ({}).\n\
         {QUESTION_SLOT}\n\
         {OPTIONS_SLOT}",
        letters.join(", ")
    )
}

impl PromptTemplate {
    pub fn builtin_all() -> Vec<PromptTemplate> {
        BUILTINS
            .iter()
            .map(|(id, system, domain, last)| PromptTemplate {
                dataset_id: id.to_string(),
                system_message: system.to_string(),
                instruction: instruction(domain, *last),
            })
            .collect()
    }

    /// Case-insensitive lookup of a built-in template.
    pub fn builtin(dataset_id: &str) -> Option<PromptTemplate> {
        Self::builtin_all()
            .into_iter()
            .find(|t| t.dataset_id.eq_ignore_ascii_case(dataset_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: MessageContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MessageContent {
    Text(String),
    Parts(Vec<ContentPart>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageUrl {
    pub url: String,
}

impl ChatMessage {
    /// Concatenated text parts, ignoring attachments.
    pub fn text(&self) -> String {
        match &self.content {
            MessageContent::Text(t) => t.clone(),
            MessageContent::Parts(parts) => parts
                .iter()
                .filter_map(|p| match p {
                    ContentPart::Text { text } => Some(text.as_str()),
                    ContentPart::ImageUrl { .. } => None,
                })
                .collect(),
        }
    }
}

fn check_options(options: &[(OptionLabel, String)]) -> Result<()> {
    if options.is_empty() {
        return Err(ClientError::InvalidOptions("no options given".into()));
    }
    for (i, (label, _)) in options.iter().enumerate() {
        if OptionLabel::from_index(i) != Some(*label) {
            let expected = OptionLabel::from_index(i)
                .map(|l| l.to_string())
                .unwrap_or_else(|| "nothing (too many options)".into());
            return Err(ClientError::InvalidOptions(format!(
                "option {} is {label}, expected {expected}; letters must run contiguously from A",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Fill both slots in a single left-to-right pass, so slot-like text inside
/// the question is never substituted a second time.
fn fill(instruction: &str, question: &str, options: &str) -> String {
    let mut out = String::with_capacity(instruction.len() + question.len() + options.len());
    let mut rest = instruction;
    loop {
        let q = rest.find(QUESTION_SLOT);
        let o = rest.find(OPTIONS_SLOT);
        let (at, slot, value) = match (q, o) {
            (Some(q), Some(o)) if o < q => (o, OPTIONS_SLOT, options),
            (Some(q), _) => (q, QUESTION_SLOT, question),
            (None, Some(o)) => (o, OPTIONS_SLOT, options),
            (None, None) => break,
        };
        out.push_str(&rest[..at]);
        out.push_str(value);
        rest = &rest[at + slot.len()..];
    }
    out.push_str(rest);
    out
}

/// Render a system message and a user message carrying the filled instruction
/// and the image attachment. Options are rendered one per line as `A. text`.
pub fn render_prompt(
    template: &PromptTemplate,
    question: &str,
    options: &[(OptionLabel, String)],
    image_ref: &str,
) -> Result<Vec<ChatMessage>> {
    check_options(options)?;
    let lines: Vec<String> = options.iter().map(|(l, t)| format!("{l}. {t}")).collect();
    let text = fill(&template.instruction, question, &lines.join("\n"));
    Ok(vec![
        ChatMessage {
            role: "system".into(),
            content: MessageContent::Text(template.system_message.clone()),
        },
        ChatMessage {
            role: "user".into(),
            content: MessageContent::Parts(vec![
                ContentPart::Text { text },
                ContentPart::ImageUrl {
                    image_url: ImageUrl {
                        url: image_ref.to_string(),
                    },
                },
            ]),
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(letters: &str) -> Vec<(OptionLabel, String)> {
        letters
            .chars()
            .map(|c| (OptionLabel::new(c).unwrap(), format!("choice {c}")))
            .collect()
    }

    #[test]
    fn scienceqa_directive_lists_five_letters() {
        let t = PromptTemplate::builtin("scienceqa").unwrap();
        let msgs = render_prompt(&t, "Which is a mammal?", &opts("ABCD"), "img://1").unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, "system");
        let user = msgs[1].text();
        assert!(user.contains("Only respond with the option letter (A, B, C, D, E)."));
        assert!(user.ends_with("Which is a mammal?\nA. choice A\nB. choice B\nC. choice C\nD. choice D"));
    }

    #[test]
    fn rejects_empty_and_gapped_options() {
        let t = PromptTemplate::builtin("AI2D").unwrap();
        assert!(matches!(
            render_prompt(&t, "q", &[], "x"),
            Err(ClientError::InvalidOptions(_))
        ));
        assert!(matches!(
            render_prompt(&t, "q", &opts("ABD"), "x"),
            Err(ClientError::InvalidOptions(_))
        ));
        assert!(matches!(
            render_prompt(&t, "q", &opts("BC"), "x"),
            Err(ClientError::InvalidOptions(_))
        ));
    }

    #[test]
    fn rendering_is_deterministic() {
        let t = PromptTemplate::builtin("MMMU-Pro").unwrap();
        let a = render_prompt(&t, "q", &opts("ABCDEFGHIJ"), "x").unwrap();
        let b = render_prompt(&t, "q", &opts("ABCDEFGHIJ"), "x").unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    }

    #[test]
    fn slot_text_in_question_is_left_alone() {
        let t = PromptTemplate::builtin("MMMU").unwrap();
        let msgs = render_prompt(&t, "what is {OPTIONS}?", &opts("AB"), "x").unwrap();
        assert!(msgs[1].text().ends_with("what is {OPTIONS}?\nA. choice A\nB. choice B"));
    }

    #[test]
    fn user_message_serializes_in_chat_completions_shape() {
        let t = PromptTemplate::builtin("MathVision").unwrap();
        let msgs = render_prompt(&t, "q", &opts("AB"), "data:image/png;base64,AAAA").unwrap();
        let v = serde_json::to_value(&msgs).unwrap();
        assert_eq!(v[0]["content"], serde_json::json!(t.system_message));
        assert_eq!(v[1]["content"][0]["type"], "text");
        assert_eq!(v[1]["content"][1]["type"], "image_url");
        assert_eq!(v[1]["content"][1]["image_url"]["url"], "data:image/png;base64,AAAA");
    }
}
