//! Classification prompt construction.

use crate::error::{Error, Result};
use crate::ontology::Ontology;

/// Default maximum batch size per request.
pub const DEFAULT_BATCH_SIZE: usize = 40;

const INSTRUCTIONS: &str = "You are a text classifier for network traffic payload data. \
I am going to give you some categories and examples for each category. \
Then I will give you text sequences that I want you to categorize using the provided categories. \
The input texts were collected from network traffic payloads. \
Try to determine the meaning of the input texts and use the similarity of the categories and input texts to do the classification. \
For text with acronyms and abbreviations, use the meaning of the acronyms and abbreviations to do the classification. \
Provide an explanation for each classification in 15 words or less. \
Report a score of confidence on a scale of 0 to 1 for each categorization. \
Format your response exactly like this for each input text: <input text> // <category> // <score> // <explanation>.";

/// Instructions plus the label set with examples; everything but the batch.
/// Hashing this (with the model name) keys the classification cache, so a
/// changed ontology or prompt invalidates cached results while batch
/// composition does not.
pub fn prompt_preamble(ont: &Ontology) -> String {
    let mut out = String::from(INSTRUCTIONS);
    out.push_str("\n\nCategories and examples:\n");
    for label in ont.labels() {
        out.push_str(&label.name);
        out.push_str(": ");
        out.push_str(&label.examples.join(", "));
        out.push('\n');
    }
    out
}

/// Full prompt for one batch of raw keys, in the given order.
pub fn build_prompt(ont: &Ontology, batch: &[String], max_batch: usize) -> Result<String> {
    if batch.is_empty() {
        return Err(Error::Classifier("empty classification batch".into()));
    }
    if batch.len() > max_batch {
        return Err(Error::Classifier(format!(
            "batch of {} keys exceeds the configured maximum of {max_batch}",
            batch.len()
        )));
    }
    let mut out = prompt_preamble(ont);
    out.push_str("\nInput texts:\n");
    for key in batch {
        out.push_str(key);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::load_ontology;

    fn ont() -> Ontology {
        load_ontology(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ontology.json")).unwrap()
    }

    #[test]
    fn prompt_contains_the_scoring_sentence() {
        let prompt = build_prompt(&ont(), &["email".to_string()], 40).unwrap();
        assert!(prompt.contains("Report a score of confidence on a scale of 0 to 1"));
        assert!(prompt.contains("<input text> // <category> // <score> // <explanation>."));
    }

    #[test]
    fn prompt_lists_every_label_with_examples() {
        let ont = ont();
        let prompt = build_prompt(&ont, &["email".to_string()], 40).unwrap();
        for label in ont.labels() {
            assert!(prompt.contains(&format!("{}: ", label.name)), "{}", label.name);
        }
        assert!(prompt.contains("Contact Information: email address, telephone number, phone number"));
    }

    #[test]
    fn batch_keys_appear_in_order() {
        let prompt =
            build_prompt(&ont(), &["alpha".to_string(), "beta".to_string()], 40).unwrap();
        let section = prompt.split("Input texts:\n").nth(1).unwrap();
        assert_eq!(section, "alpha\nbeta\n");
    }

    #[test]
    fn empty_and_oversized_batches_are_errors() {
        assert!(build_prompt(&ont(), &[], 40).is_err());
        let batch: Vec<String> = (0..3).map(|i| format!("k{i}")).collect();
        assert!(build_prompt(&ont(), &batch, 2).is_err());
    }
}
