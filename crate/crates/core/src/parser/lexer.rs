#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Word,
    LBrace,
    RBrace,
    Semi,
    Colon,
    Comma,
    Minus,
    Star,
    Tilde,
    Other,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Token<'a> {
    pub kind: TokKind,
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub column: usize,
}

fn word_start(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '/')
}

fn word_continue(c: char) -> bool {
    word_start(c) || c == '-'
}

/// Splits policy text into tokens, dropping whitespace and `#` comments.
/// Lines and columns are 1-based; columns count characters.
pub(crate) fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let mut chars = text.char_indices().peekable();
    let mut line = 1;
    let mut line_start = 0;

    while let Some((start, c)) = chars.next() {
        let column = text[line_start..start].chars().count() + 1;
        if c == '\n' {
            line += 1;
            line_start = start + 1;
            continue;
        }
        if c.is_whitespace() {
            continue;
        }
        if c == '#' {
            while let Some(&(_, next)) = chars.peek() {
                if next == '\n' {
                    break;
                }
                chars.next();
            }
            continue;
        }
        let kind = match c {
            '{' => TokKind::LBrace,
            '}' => TokKind::RBrace,
            ';' => TokKind::Semi,
            ':' => TokKind::Colon,
            ',' => TokKind::Comma,
            '-' => TokKind::Minus,
            '*' => TokKind::Star,
            '~' => TokKind::Tilde,
            c if word_start(c) => TokKind::Word,
            _ => TokKind::Other,
        };
        let mut end = start + c.len_utf8();
        if kind == TokKind::Word {
            while let Some(&(i, next)) = chars.peek() {
                if !word_continue(next) {
                    break;
                }
                end = i + next.len_utf8();
                chars.next();
            }
        }
        tokens.push(Token {
            kind,
            text: &text[start..end],
            start,
            end,
            line,
            column,
        });
    }
    tokens
}
