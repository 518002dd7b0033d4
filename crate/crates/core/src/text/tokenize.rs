//! Rule-based tokenization with apostrophe-clitic splitting, plus the
//! inverse detokenizer.

/// English clitics split off their host (`I'll` → `I 'll`).
const CLITICS: [&str; 6] = ["ll", "s", "re", "ve", "d", "m"];

/// Punctuation that attaches to the preceding token when detokenizing.
const CLOSING: [&str; 11] = [",", ".", "!", "?", ";", ":", ")", "]", "}", "%", "…"];
/// Punctuation that attaches to the following token when detokenizing.
const OPENING: [&str; 3] = ["(", "[", "{"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedSentence {
    pub tokens: Vec<String>,
    pub original: String,
}

impl TokenizedSentence {
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let original = detokenize(&tokens);
        TokenizedSentence { tokens, original }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '’'
}

fn is_clitic_body(s: &str) -> bool {
    CLITICS.contains(&s.to_lowercase().as_str())
}

/// True for tokens that are apostrophe clitics (`'ll`, `'s`, ..., `n't`).
pub fn is_clitic(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if is_apostrophe(c) => is_clitic_body(chars.as_str()),
        _ => token.to_lowercase() == "n't",
    }
}

/// Splits raw text into tokens. Punctuation becomes separate tokens; an
/// apostrophe, hyphen or (between digits) a period or comma stays inside a
/// word. Words ending in an English clitic are split so the clitic keeps its
/// apostrophe: `I'll` → `I 'll`, `don't` → `do n't`.
pub fn tokenize(raw: &str) -> TokenizedSentence {
    let mut tokens = Vec::new();
    for chunk in raw.split_whitespace() {
        tokenize_chunk(chunk, &mut tokens);
    }
    TokenizedSentence { tokens, original: raw.to_string() }
}

fn tokenize_chunk(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_alphanumeric() {
            let start = i;
            i += 1;
            while i < chars.len() {
                let c = chars[i];
                let next_alnum = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
                let joins = c.is_alphanumeric()
                    || ((is_apostrophe(c) || c == '-') && next_alnum)
                    || ((c == '.' || c == ',')
                        && chars[i - 1].is_ascii_digit()
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()));
                if !joins {
                    break;
                }
                i += 1;
            }
            split_clitic(&chars[start..i].iter().collect::<String>(), out);
        } else if is_apostrophe(c) {
            // A detached clitic such as the `'ll` in "I 'll".
            let mut j = i + 1;
            while j < chars.len() && chars[j].is_alphanumeric() {
                j += 1;
            }
            let body: String = chars[i + 1..j].iter().collect();
            if j > i + 1 && is_clitic_body(&body) {
                out.push(chars[i..j].iter().collect());
                i = j;
            } else {
                out.push(c.to_string());
                i += 1;
            }
        } else {
            out.push(c.to_string());
            i += 1;
        }
    }
}

fn split_clitic(word: &str, out: &mut Vec<String>) {
    let lower = word.to_lowercase();
    let n = word.chars().count();
    if n > 3 && lower.ends_with("n't") {
        let cut = word.char_indices().nth(n - 3).map(|(b, _)| b).expect("length checked");
        out.push(word[..cut].to_string());
        out.push(word[cut..].to_string());
        return;
    }
    if let Some((pos, c)) = word.char_indices().filter(|(_, c)| is_apostrophe(*c)).last() {
        let body = &word[pos + c.len_utf8()..];
        if pos > 0 && is_clitic_body(body) {
            out.push(word[..pos].to_string());
            out.push(word[pos..].to_string());
            return;
        }
    }
    out.push(word.to_string());
}

/// Joins tokens into text: closing punctuation and clitics attach to the
/// left, opening brackets to the right, everything else is space-separated.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = true;
    for tok in tokens {
        let tok = tok.as_ref();
        let attach_left = CLOSING.contains(&tok) || is_clitic(tok);
        if !glue_next && !attach_left {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = OPENING.contains(&tok);
    }
    out
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
