//! Total parser for classifier responses.
//!
//! Response lines follow `<input text> // <category> // <score> //
//! <explanation>`. Parsing never fails: malformed lines, unknown labels, and
//! out-of-range scores become `parse_ok = false` records, lines echoing
//! unknown input texts are ignored, and batch keys with no line at all get a
//! synthetic placeholder, so the output length always equals the batch
//! length and output order follows batch order.

use std::collections::BTreeMap;

use crate::ontology::Ontology;

use super::SingleRunResult;

pub fn parse_llm_response(
    text: &str,
    ont: &Ontology,
    batch: &[String],
    temperature: f64,
) -> Vec<SingleRunResult> {
    // batch key (exact) -> index; lowercase form for echo-case drift.
    let mut by_key: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_lower: BTreeMap<String, usize> = BTreeMap::new();
    for (i, key) in batch.iter().enumerate() {
        by_key.entry(key.as_str()).or_insert(i);
        by_lower.entry(key.to_lowercase()).or_insert(i);
    }

    let mut slots: Vec<Option<SingleRunResult>> = vec![None; batch.len()];
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.splitn(4, "//").map(str::trim).collect();
        let echoed = parts[0];
        let Some(&index) = by_key
            .get(echoed)
            .or_else(|| by_lower.get(&echoed.to_lowercase()))
        else {
            // No batch key matches the echoed text; nothing to attach to.
            continue;
        };
        let key = &batch[index];

        let result = if parts.len() < 3 {
            SingleRunResult::failed(key, temperature, "malformed line")
        } else {
            let label = ont.lookup(parts[1]);
            let score = parts[2].parse::<f64>().ok();
            match (label, score) {
                (Some(label), Some(score)) if (0.0..=1.0).contains(&score) => SingleRunResult {
                    key: key.clone(),
                    label: Some(label.name.clone()),
                    confidence: score,
                    explanation: parts.get(3).unwrap_or(&"").to_string(),
                    temperature,
                    parse_ok: true,
                    error: None,
                },
                (None, _) => SingleRunResult::failed(
                    key,
                    temperature,
                    &format!("label {:?} not in ontology", parts[1]),
                ),
                _ => SingleRunResult::failed(
                    key,
                    temperature,
                    &format!("score {:?} not in [0, 1]", parts[2]),
                ),
            }
        };

        // A parseable line wins over an earlier failure; the first line of
        // equal standing wins otherwise.
        match &slots[index] {
            None => slots[index] = Some(result),
            Some(existing) if !existing.parse_ok && result.parse_ok => {
                slots[index] = Some(result)
            }
            Some(_) => {}
        }
    }

    slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| {
            slot.unwrap_or_else(|| {
                SingleRunResult::failed(&batch[i], temperature, "no line for this input")
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::load_ontology;

    fn ont() -> Ontology {
        load_ontology(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ontology.json")).unwrap()
    }

    fn batch(keys: &[&str]) -> Vec<String> {
        keys.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn well_formed_line() {
        let out = parse_llm_response(
            "email // Contact Information // 0.95 // email address is contact info",
            &ont(),
            &batch(&["email"]),
            0.0,
        );
        assert_eq!(out.len(), 1);
        assert!(out[0].parse_ok);
        assert_eq!(out[0].label.as_deref(), Some("Contact Information"));
        assert_eq!(out[0].confidence, 0.95);
        assert_eq!(out[0].explanation, "email address is contact info");
    }

    #[test]
    fn unknown_label_fails_that_key() {
        let out = parse_llm_response(
            "email // Banana // 0.9 // x",
            &ont(),
            &batch(&["email"]),
            0.5,
        );
        assert!(!out[0].parse_ok);
        assert!(out[0].error.as_deref().unwrap().contains("Banana"));
    }

    #[test]
    fn missing_keys_get_placeholders() {
        let out = parse_llm_response(
            "email // Contact Information // 0.9 // ok",
            &ont(),
            &batch(&["email", "uid"]),
            0.0,
        );
        assert_eq!(out.len(), 2);
        assert!(out[0].parse_ok);
        assert!(!out[1].parse_ok);
        assert_eq!(out[1].key, "uid");
    }

    #[test]
    fn out_of_range_scores_fail() {
        for score in ["1.2", "-0.1", "NaN", "huge"] {
            let out = parse_llm_response(
                &format!("email // Contact Information // {score} // x"),
                &ont(),
                &batch(&["email"]),
                0.0,
            );
            assert!(!out[0].parse_ok, "score {score}");
        }
    }

    #[test]
    fn label_case_is_canonicalized() {
        let out = parse_llm_response(
            "email // contact information // 0.8 // ok",
            &ont(),
            &batch(&["email"]),
            0.0,
        );
        assert_eq!(out[0].label.as_deref(), Some("Contact Information"));
    }

    #[test]
    fn reordered_lines_and_case_drifted_echo_match_by_text() {
        let out = parse_llm_response(
            "uid // Aliases // 0.7 // id-like\nEMAIL // Contact Information // 0.9 // ok",
            &ont(),
            &batch(&["email", "uid"]),
            0.0,
        );
        assert_eq!(out[0].key, "email");
        assert_eq!(out[0].label.as_deref(), Some("Contact Information"));
        assert_eq!(out[1].key, "uid");
        assert_eq!(out[1].label.as_deref(), Some("Aliases"));
    }

    #[test]
    fn spurious_and_garbage_lines_never_crash() {
        let out = parse_llm_response(
            "garbage without separators\nnot_in_batch // Aliases // 0.9 // x\n\nemail // Contact Information // 0.9 // ok",
            &ont(),
            &batch(&["email"]),
            0.0,
        );
        assert_eq!(out.len(), 1);
        assert!(out[0].parse_ok);
    }

    #[test]
    fn parseable_line_beats_earlier_failure_for_same_key() {
        let out = parse_llm_response(
            "email // Banana // 0.9 // bad\nemail // Contact Information // 0.8 // good\nemail // Name // 0.7 // later duplicate",
            &ont(),
            &batch(&["email"]),
            0.0,
        );
        assert!(out[0].parse_ok);
        assert_eq!(out[0].label.as_deref(), Some("Contact Information"));
    }

    #[test]
    fn output_length_always_equals_batch_length() {
        let keys = batch(&["a", "b", "c", "d", "e"]);
        for text in ["", "junk", "a // Aliases // 0.5 // x\nq // r // s // t"] {
            assert_eq!(parse_llm_response(text, &ont(), &keys, 0.25).len(), keys.len());
        }
    }
}
