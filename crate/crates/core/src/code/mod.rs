//! Structural analysis of Java sources: header cleanup, method enumeration
//! and method-level snippet extraction.

mod methods;

pub use methods::{enumerate_methods, extract_method, CodeSnippet, MethodInfo, MethodKind, ParseError};

/// Removes a leading license/header block comment.
///
/// The comment is dropped together with surrounding blank lines only when it
/// is the first token of the file, it is terminated, and the next token after
/// it is a `package` or `import` declaration. Anything else is returned as is.
pub fn strip_header(source: &str) -> &str {
    let body = source.trim_start();
    let Some(after_open) = body.strip_prefix("/*") else {
        return source;
    };
    let Some(close) = after_open.find("*/") else {
        return source;
    };
    let rest = after_open[close + 2..].trim_start();
    if starts_with_keyword(rest, "package") || starts_with_keyword(rest, "import") {
        rest
    } else {
        source
    }
}

fn starts_with_keyword(text: &str, keyword: &str) -> bool {
    text.strip_prefix(keyword)
        .is_some_and(|tail| !tail.starts_with(|c: char| c.is_alphanumeric() || c == '_' || c == '$'))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn license_block_before_package_is_removed() {
        let src = "/* (c) team\n * all rights reserved */\n\n\npackage pp;\nclass A {}\n";
        assert_eq!(strip_header(src), "package pp;\nclass A {}\n");
    }

    #[test]
    fn header_before_import_is_removed() {
        let src = "  \n/** header */\nimport java.util.List;\n";
        assert_eq!(strip_header(src), "import java.util.List;\n");
    }

    #[test]
    fn file_without_header_is_unchanged() {
        let src = "package pp;\n/* not a header */\nclass A {}\n";
        assert_eq!(strip_header(src), src);
        assert_eq!(strip_header(""), "");
    }

    #[test]
    fn class_javadoc_is_kept() {
        let src = "/** The menu. */\nclass Menu {}\n";
        assert_eq!(strip_header(src), src);
    }

    #[test]
    fn unterminated_comment_is_kept() {
        let src = "/* open\npackage pp;\n";
        assert_eq!(strip_header(src), src);
    }

    #[test]
    fn keyword_must_be_whole_word() {
        let src = "/* h */\npackages x;\n";
        assert_eq!(strip_header(src), src);
        let src = "/* h */\nimportant();\n";
        assert_eq!(strip_header(src), src);
    }

    #[test]
    fn second_header_comment_blocks_stripping() {
        let src = "/* a */\n/* b */\npackage pp;\n";
        assert_eq!(strip_header(src), src);
    }
}
