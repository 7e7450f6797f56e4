//! Word tokenizer shared by grounding, tagging and the language model.
//!
//! A token is either a run of alphanumeric characters, where `- _ ' . /`
//! are kept inside the run when both neighbours are alphanumeric
//! (`eos-5d`, `1.5`, `don't`), or a single other non-space character.
//! Concatenating the tokens gives back the text with its whitespace removed.

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '_' | '\'' | '.' | '/')
}

/// Byte ranges of the tokens of `text`.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_alphanumeric() {
            let mut j = i + 1;
            while j < chars.len() {
                let cj = chars[j].1;
                if cj.is_alphanumeric() {
                    j += 1;
                } else if is_joiner(cj) && j + 1 < chars.len() && chars[j + 1].1.is_alphanumeric() {
                    j += 2;
                } else {
                    break;
                }
            }
            let end = chars.get(j).map_or(text.len(), |&(b, _)| b);
            spans.push((start, end));
            i = j;
        } else {
            spans.push((start, start + c.len_utf8()));
            i += 1;
        }
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_string())
        .collect()
}

/// Lowercased tokens, the form grounding and positions are computed on.
pub fn normalized_tokens(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|(s, e)| text[s..e].to_lowercase())
        .collect()
}

/// Whether `tokens` detokenize to `text`, ignoring whitespace.
pub fn detokenizes_to(tokens: &[String], text: &str) -> bool {
    let joined: String = tokens.concat();
    let squeezed: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    joined == squeezed
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_punctuation_but_keeps_inner_joiners() {
        assert_eq!(
            tokenize("The EOS-5D's zoom (1.5x) beats the D80, vs. D70!"),
            vec![
                "The", "EOS-5D's", "zoom", "(", "1.5x", ")", "beats", "the", "D80", ",", "vs", ".",
                "D70", "!"
            ]
        );
    }

    #[test]
    fn trailing_joiner_is_its_own_token() {
        assert_eq!(tokenize("a- b."), vec!["a", "-", "b", "."]);
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("   "), Vec::<String>::new());
    }

    #[test]
    fn spans_are_byte_offsets() {
        let text = "café über-cool";
        let spans = token_spans(text);
        assert_eq!(spans, vec![(0, 5), (6, 16)]);
        assert_eq!(&text[spans[1].0..spans[1].1], "über-cool");
    }

    proptest! {
        #[test]
        fn tokens_reproduce_text_without_whitespace(text in "[a-zA-Z0-9 .,;'/()\\-é]{0,40}") {
            let tokens = tokenize(&text);
            prop_assert!(detokenizes_to(&tokens, &text));
            prop_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        }
    }
}
