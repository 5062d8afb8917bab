use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Method,
    Constructor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodInfo {
    pub name: String,
    /// Modifiers, type parameters, return type, name, parameters and throws
    /// clause, whitespace collapsed. Annotations are not part of it.
    pub signature: String,
    /// 1-based, inclusive.
    pub start_line: usize,
    /// 1-based, inclusive.
    pub end_line: usize,
    pub kind: MethodKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub source_path: String,
    pub method: MethodInfo,
    /// Source lines `start_line..=end_line`, verbatim, joined by `\n`.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
}

fn parse(source: &str) -> Result<Tree, ParseError> {
    let mut parser = Parser::new();
    parser
        .set_language(&tree_sitter_java::LANGUAGE.into())
        .expect("bundled Java grammar is compatible");
    let tree = parser.parse(source, None).ok_or(ParseError { line: 1, column: 1 })?;
    if tree.root_node().has_error() {
        let bad = first_error(tree.root_node()).unwrap_or(tree.root_node());
        let pos = bad.start_position();
        return Err(ParseError {
            line: pos.row + 1,
            column: pos.column + 1,
        });
    }
    Ok(tree)
}

fn first_error(node: Node<'_>) -> Option<Node<'_>> {
    if node.is_error() || node.is_missing() {
        return Some(node);
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if child.has_error() || child.is_missing() {
            if let Some(found) = first_error(child) {
                return Some(found);
            }
        }
    }
    None
}

/// All method and constructor declarations in source order, including those
/// of nested, local and anonymous classes.
pub fn enumerate_methods(source: &str) -> Result<Vec<MethodInfo>, ParseError> {
    let tree = parse(source)?;
    let mut out = Vec::new();
    collect(tree.root_node(), source.as_bytes(), &mut out);
    Ok(out)
}

fn collect(node: Node<'_>, src: &[u8], out: &mut Vec<MethodInfo>) {
    let kind = match node.kind() {
        "method_declaration" => Some(MethodKind::Method),
        "constructor_declaration" | "compact_constructor_declaration" => Some(MethodKind::Constructor),
        _ => None,
    };
    if let Some(kind) = kind {
        if let Some(info) = describe(node, src, kind) {
            out.push(info);
        }
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        collect(child, src, out);
    }
}

fn describe(node: Node<'_>, src: &[u8], kind: MethodKind) -> Option<MethodInfo> {
    let name = node.child_by_field_name("name")?.utf8_text(src).ok()?.to_string();
    let start = signature_start(node);
    let end = match node.child_by_field_name("body") {
        Some(body) => body.start_byte(),
        None => node.end_byte(),
    };
    let raw = String::from_utf8_lossy(&src[start..end.max(start)]);
    let signature = raw
        .trim_end()
        .trim_end_matches(';')
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    Some(MethodInfo {
        name,
        signature,
        start_line: node.start_position().row + 1,
        end_line: node.end_position().row + 1,
        kind,
    })
}

// Skips leading annotations so the signature starts at the first modifier
// keyword or, without modifiers, at the type or name.
fn signature_start(node: Node<'_>) -> usize {
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if child.kind() == "modifiers" {
            let mut inner = child.walk();
            let keyword = child
                .children(&mut inner)
                .find(|m| !matches!(m.kind(), "annotation" | "marker_annotation"));
            if let Some(keyword) = keyword {
                return keyword.start_byte();
            }
            continue;
        }
        if child.kind().ends_with("comment") {
            continue;
        }
        return child.start_byte();
    }
    node.start_byte()
}

/// Snippets for every declaration named `method_name`; empty when absent.
pub fn extract_method(source_path: &str, source: &str, method_name: &str) -> Result<Vec<CodeSnippet>, ParseError> {
    let methods = enumerate_methods(source)?;
    let lines: Vec<&str> = source.split('\n').collect();
    Ok(methods
        .into_iter()
        .filter(|m| m.name == method_name)
        .map(|method| {
            let text = lines[method.start_line - 1..method.end_line].join("\n");
            CodeSnippet {
                source_path: source_path.to_string(),
                method,
                text,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(src: &str) -> Vec<String> {
        enumerate_methods(src).unwrap().into_iter().map(|m| m.name).collect()
    }

    #[test]
    fn overloads_are_separate_entries() {
        let src = "class U {\n  void update(int a) {}\n  void update(int a, int b) {}\n}\n";
        let methods = enumerate_methods(src).unwrap();
        assert_eq!(methods.len(), 2);
        assert_eq!(methods[0].signature, "void update(int a)");
        assert_eq!(methods[1].signature, "void update(int a, int b)");
    }

    #[test]
    fn constant_only_interface_has_no_methods() {
        assert!(names("interface C { int A = 1; String B = \"x\"; }").is_empty());
    }

    #[test]
    fn constructors_are_flagged() {
        let methods = enumerate_methods("class A { A() {} void a() {} }").unwrap();
        assert_eq!(methods[0].kind, MethodKind::Constructor);
        assert_eq!(methods[1].kind, MethodKind::Method);
    }

    #[test]
    fn annotations_are_not_in_signature() {
        let src = "class A {\n  @Override\n  @SuppressWarnings(\"x\")\n  public final String toString() throws E { return \"\"; }\n}";
        let m = &enumerate_methods(src).unwrap()[0];
        assert_eq!(m.signature, "public final String toString() throws E");
        assert_eq!((m.start_line, m.end_line), (2, 4));
    }

    #[test]
    fn abstract_method_signature_drops_semicolon() {
        let m = &enumerate_methods("abstract class A { abstract int f(int x); }").unwrap()[0];
        assert_eq!(m.signature, "abstract int f(int x)");
    }

    #[test]
    fn braces_in_comments_and_strings_do_not_confuse() {
        let src = "class A {\n  // }\n  /* { */\n  String s = \"}{\";\n  void a() { /* } */ }\n  void b() {}\n}\n";
        assert_eq!(names(src), vec!["a", "b"]);
    }

    #[test]
    fn anonymous_and_nested_classes_are_included() {
        let src = "class A {\n  Runnable r() {\n    return new Runnable() { public void run() {} };\n  }\n  static class B { B() {} }\n}\n";
        assert_eq!(names(src), vec!["r", "run", "B"]);
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = enumerate_methods("class A {\n  void a( {\n}\n").unwrap_err();
        assert_eq!(err.line, 2);
        assert!(err.column >= 1);
    }

    #[test]
    fn extract_returns_verbatim_lines() {
        let src = "class A {\n    void a() {\n        int x = 1;\n    }\n}\n";
        let snippets = extract_method("A.java", src, "a").unwrap();
        assert_eq!(snippets.len(), 1);
        assert_eq!(snippets[0].text, "    void a() {\n        int x = 1;\n    }");
        assert!(extract_method("A.java", src, "ghost").unwrap().is_empty());
    }
}
