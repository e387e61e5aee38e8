/// Byte ranges of the maximal alphanumeric runs in `text`.
pub fn token_spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut chars = text.char_indices().peekable();
    std::iter::from_fn(move || {
        while let Some(&(_, c)) = chars.peek() {
            if c.is_alphanumeric() {
                break;
            }
            chars.next();
        }
        let (start, first) = chars.next()?;
        let mut end = start + first.len_utf8();
        while let Some(&(i, c)) = chars.peek() {
            if !c.is_alphanumeric() {
                break;
            }
            end = i + c.len_utf8();
            chars.next();
        }
        Some((start, end))
    })
}

/// Lowercased alphanumeric runs; numbers stay as tokens.
///
/// Lowercasing can emit combining marks (e.g. for `İ`); those are dropped so
/// that re-tokenizing joined tokens reproduces them.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .map(|(s, e)| {
            text[s..e]
                .chars()
                .flat_map(char::to_lowercase)
                .filter(|c| c.is_alphanumeric())
                .collect()
        })
        .collect()
}

pub fn count_tokens(text: &str) -> usize {
    token_spans(text).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Chest pain, HR 101"),
            ["chest", "pain", "hr", "101"]
        );
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,;- ").is_empty());
        assert_eq!(tokenize("98.6"), ["98", "6"]);
        assert_eq!(tokenize("Éclair—Über"), ["éclair", "über"]);
    }

    #[test]
    fn spans_point_at_the_tokens() {
        let text = "  a1 -- Bb,c ";
        let spans: Vec<_> = token_spans(text).collect();
        assert_eq!(spans, [(2, 4), (8, 10), (11, 12)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rejoining_tokens_is_stable(s in "\\PC{0,60}") {
            let once = tokenize(&s);
            prop_assert_eq!(tokenize(&once.join(" ")), once.clone());
            prop_assert_eq!(count_tokens(&s), once.len());
        }
    }
}
