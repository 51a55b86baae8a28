//! Operator-level shell tokenization.
//!
//! Nothing here understands shell grammar beyond quoting, `$( )` nesting and
//! the list/pipeline operators; that is enough to reason about which simple
//! commands a CI line runs.

/// Splits `text` into simple commands at newlines, `;`, `&`, `&&`, `|` and
/// `||`. Separators inside quotes or parentheses are ignored. Returned slices
/// are trimmed and never empty.
pub fn split_commands(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut depth = 0usize;
    let mut quote: Option<u8> = None;
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match quote {
            Some(q) => {
                if b == b'\\' && q == b'"' {
                    i += 1;
                } else if b == q {
                    quote = None;
                }
            }
            None => match b {
                b'\\' => i += 1,
                b'\'' | b'"' => quote = Some(b),
                b'(' => depth += 1,
                b')' => depth = depth.saturating_sub(1),
                b'\n' | b';' | b'&' | b'|' if depth == 0 => {
                    push_trimmed(&mut out, &text[start..i]);
                    start = i + 1;
                }
                _ => {}
            },
        }
        i += 1;
    }
    if start < text.len() {
        push_trimmed(&mut out, &text[start..]);
    }
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s);
    }
}

/// Whitespace-separated words with quotes removed.
pub fn words(segment: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut in_word = false;
    let mut quote: Option<char> = None;
    let mut chars = segment.chars();
    while let Some(c) = chars.next() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => cur.push(c),
            None => match c {
                '\'' | '"' => {
                    quote = Some(c);
                    in_word = true;
                }
                '\\' => {
                    if let Some(next) = chars.next() {
                        cur.push(next);
                    }
                    in_word = true;
                }
                c if c.is_whitespace() => {
                    if in_word {
                        out.push(std::mem::take(&mut cur));
                        in_word = false;
                    }
                }
                c => {
                    cur.push(c);
                    in_word = true;
                }
            },
        }
    }
    if in_word {
        out.push(cur);
    }
    out
}

const WRAPPERS: &[&str] = &["sudo", "time", "exec", "env", "nohup", "command", "travis_retry", "travis_wait"];

/// Drops leading `VAR=value` assignments and wrapper commands such as `sudo`.
pub fn strip_prefixes(words: &[String]) -> &[String] {
    let mut rest = words;
    while let Some((first, tail)) = rest.split_first() {
        let is_assignment = first
            .split_once('=')
            .is_some_and(|(name, _)| !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
        let is_wrapper = WRAPPERS.contains(&first.as_str())
            || (first.starts_with('-') && rest.len() < words.len());
        // `travis_wait 30 cmd`
        let is_number = first.chars().all(|c| c.is_ascii_digit()) && rest.len() < words.len();
        if is_assignment || is_wrapper || is_number {
            rest = tail;
        } else {
            break;
        }
    }
    rest
}

/// True when the segment installs packages instead of running anything.
pub fn is_installer(segment: &str) -> bool {
    let all = words(segment);
    let w = strip_prefixes(&all);
    let get = |i: usize| w.get(i).map(String::as_str);
    match get(0) {
        Some("pip" | "pip2" | "pip3" | "pipx") => get(1) == Some("install"),
        Some(py) if py.starts_with("python") => {
            get(1) == Some("-m") && matches!(get(2), Some("pip")) && get(3) == Some("install")
        }
        Some("npm" | "pnpm") => matches!(get(1), Some("install" | "i" | "add")),
        Some("yarn") => get(1) == Some("add") || (get(1) == Some("global") && get(2) == Some("add")),
        Some("gem" | "brew" | "apt-get" | "apt" | "cargo" | "conda") => get(1) == Some("install"),
        Some("composer") => {
            get(1) == Some("require") || (get(1) == Some("global") && get(2) == Some("require"))
        }
        Some("go") => matches!(get(1), Some("install" | "get")),
        _ => false,
    }
}

/// Keywords that only introduce or close shell control structures.
const CONTROL_PREFIXES: &[&str] = &["if", "then", "else", "elif", "do", "while", "until", "!", "{"];

/// Commands with no effect on what the job accomplishes.
const CEREMONY: &[&str] = &[
    "echo", "printf", "cd", "pushd", "popd", "export", "set", "unset", "true", "skip", ":",
    "fi", "done", "esac", "}", "for", "case", "[", "[[", "test", "exit", "return",
];

/// Removes leading control keywords, e.g. `then flake8` becomes `flake8`.
pub fn strip_control_keywords(segment: &str) -> &str {
    let mut rest = segment.trim_start();
    loop {
        let word_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if CONTROL_PREFIXES.contains(&&rest[..word_end]) {
            rest = rest[word_end..].trim_start();
        } else {
            return rest;
        }
    }
}

pub fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

/// True for segments that are shell housekeeping (`cd`, `echo`, `set -e`,
/// loop headers, closing keywords) or comments.
pub fn is_ceremony(segment: &str) -> bool {
    let stripped = strip_control_keywords(segment);
    if stripped.is_empty() || is_comment(stripped) {
        return true;
    }
    let all = words(stripped);
    match strip_prefixes(&all).first() {
        None => true,
        Some(first) => CEREMONY.contains(&first.as_str()) || first.ends_with("()"),
    }
}
