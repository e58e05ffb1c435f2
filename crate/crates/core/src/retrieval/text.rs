//! Tokenisation, sentence segmentation and passage windows.

/// Lowercased alphanumeric runs. Apostrophes inside words are dropped so
/// that "can't" and "cant" agree.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if (ch == '\'' || ch == '’') && !current.is_empty() {
            continue;
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Byte spans of sentences. A sentence ends at `.`, `!` or `?` followed by
/// whitespace (or end of text), and at every line break. Spans are trimmed
/// and never empty.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0usize;
    let mut iter = text.char_indices().peekable();
    while let Some((i, ch)) = iter.next() {
        let end = i + ch.len_utf8();
        let boundary = match ch {
            '\n' => true,
            '.' | '!' | '?' => iter.peek().is_none_or(|(_, next)| next.is_whitespace()),
            _ => false,
        };
        if boundary {
            push_trimmed(text, start, end, &mut spans);
            start = end;
        }
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let lead = slice.len() - slice.trim_start().len();
    let trimmed = slice.trim();
    if !trimmed.is_empty() {
        let s = start + lead;
        spans.push((s, s + trimmed.len()));
    }
}

/// Group sentences into windows of `size` sentences advancing by
/// `size - overlap`. Returns byte spans covering each window.
pub fn passage_windows(text: &str, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    assert!(size >= 1 && overlap < size, "invalid window geometry");
    let sentences = sentence_spans(text);
    let n = sentences.len();
    let step = size - overlap;
    let mut windows = Vec::new();
    let mut i = 0;
    while i < n {
        let last = (i + size).min(n) - 1;
        windows.push((sentences[i].0, sentences[last].1));
        if i + size >= n {
            break;
        }
        i += step;
    }
    windows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(tokenize("Ethics-approval, can't WAIT 2x!"), ["ethics", "approval", "cant", "wait", "2x"]);
    }

    #[test]
    fn sentences_split_on_terminators_and_lines() {
        let text = "One. Two? Three!\nfour: five\n\n3.5 stays whole.";
        let got: Vec<&str> = sentence_spans(text).iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(got, ["One.", "Two?", "Three!", "four: five", "3.5 stays whole."]);
    }

    #[test]
    fn windows_of_three_with_overlap_one() {
        let text = "S1. S2. S3. S4. S5. S6.";
        let got: Vec<&str> = passage_windows(text, 3, 1).iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(got, ["S1. S2. S3.", "S3. S4. S5.", "S5. S6."]);
        let short = "Only one.";
        assert_eq!(passage_windows(short, 3, 1), vec![(0, 9)]);
        assert!(passage_windows("   ", 3, 1).is_empty());
    }

    #[test]
    fn exact_window_multiple_has_no_trailing_fragment() {
        let text = "A. B. C. D. E.";
        let got: Vec<&str> = passage_windows(text, 3, 1).iter().map(|&(s, e)| &text[s..e]).collect();
        assert_eq!(got, ["A. B. C.", "C. D. E."]);
    }
}
