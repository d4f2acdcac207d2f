//! Versioned prompt templates.

use sha2::{Digest, Sha256};

pub const GENERATE_TEMPLATE: &str = include_str!("../../resources/prompts/generate_v1.txt");
pub const GENERATE_TEMPLATE_VERSION: &str = "generate-v1";
pub const VERIFY_TEMPLATE: &str = include_str!("../../resources/prompts/verify_v1.txt");
pub const VERIFY_TEMPLATE_VERSION: &str = "verify-v1";

pub const SECTION_HEADERS: [&str; 4] = [
    "=== EEG Findings ===",
    "=== Conclusion ===",
    "=== Clinical Correlation ===",
    "=== Advanced Strategies ===",
];

pub const REPAIR_INSTRUCTION: &str = "\n\n[REPAIR]\nYour previous answer did not follow the required structure. \
Rewrite the full report using exactly these four headers, each once and in this order: \
=== EEG Findings ===, === Conclusion ===, === Clinical Correlation ===, === Advanced Strategies ===.\n";

pub const VERIFY_REASK: &str = "\n\nReply with only the array, for example [1, 0].\n";

/// Generation prompt with the features JSON embedded verbatim.
pub fn build_prompt(features_json: &str) -> String {
    GENERATE_TEMPLATE.replace("{{FEATURES_JSON}}", features_json)
}

pub fn build_verify_prompt(report_text: &str) -> String {
    VERIFY_TEMPLATE.replace("{{REPORT}}", report_text.trim_end())
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_embeds_json_and_sections() {
        let json = r#"{"EEG_quality":"Good"}"#;
        let p = build_prompt(json);
        assert!(p.contains(json));
        for h in SECTION_HEADERS {
            assert!(p.contains(h), "{h}");
        }
        let order = ["[ROLE]", "[DATA]", "[TASK]", "[STRUCTURE]", "[GUIDANCE]"];
        let pos: Vec<usize> = order.iter().map(|m| p.find(m).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(sha256_hex(&p), sha256_hex(&build_prompt(json)));
    }

    #[test]
    fn verify_template_has_two_examples_per_class() {
        for v in ["[0, 0]", "[1, 0]", "[0, 1]", "[1, 1]"] {
            assert!(VERIFY_TEMPLATE.contains(&format!("Answer: {v}")));
        }
        assert!(build_verify_prompt("text").contains("Report to classify:\ntext"));
    }
}
